//! Inter-link interference (ILI) estimation and decision-directed
//! cancellation for the 2×2 link.

use serde::{Deserialize, Serialize};

use super::detect::{detect_preamble, slot_peak_rise, slot_start, DetectionConfig};
use super::modem::{modulate, preamble_pattern, TimingConfig};
use super::sensor::{sense, SensorParams, VoltageTrace};
use crate::channel::{synthesize_traces, ImpulseMatrix};
use crate::error::{Error, Result};

/// Cross-link voltage gains: `alpha_01` is how strongly emitter 1 shows up at
/// sensor 0 relative to sensor 1, and `alpha_10` the converse.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IliGains {
    pub alpha_01: f64,
    pub alpha_10: f64,
}

/// Measures the cross gains from the preamble, where each link fires alone in
/// its own slot: `α_ij` = peak rise at sensor `i` during link `j`'s solo slot
/// over the peak rise at sensor `j` during that slot.
pub fn estimate_cross_gain(
    v: [&VoltageTrace; 2],
    frame_start: f64,
    timing: &TimingConfig,
    cfg: &DetectionConfig,
) -> Result<IliGains> {
    timing.validate(2)?;
    let mut alpha = [0.0; 2];
    for (j, a) in alpha.iter_mut().enumerate() {
        let i = 1 - j;
        let start = slot_start(frame_start, j, timing);
        let own = slot_peak_rise(v[j], start, timing)?;
        if own < cfg.noise_floor || own <= 0.0 {
            return Err(Error::PreambleNotDetected(format!(
                "link {j} pilot rise {own} V at rx{j} is below the noise floor {} V",
                cfg.noise_floor
            )));
        }
        *a = slot_peak_rise(v[i], start, timing)? / own;
    }
    Ok(IliGains {
        alpha_01: alpha[1],
        alpha_10: alpha[0],
    })
}

/// `cleaned_i = max(v_i − α_ij · estimate_j, 0)` where `estimate_j` is the
/// reconstructed own-link signal at sensor `j`.
pub fn cancel_ili(
    v: [&VoltageTrace; 2],
    gains: &IliGains,
    estimates: [&VoltageTrace; 2],
) -> Result<[VoltageTrace; 2]> {
    let grid = v[0].grid;
    if v[1].grid != grid || estimates.iter().any(|e| e.grid != grid) {
        return Err(Error::GridMismatch(
            "cancellation needs all traces on one grid".into(),
        ));
    }
    let clean = |x: &VoltageTrace, alpha: f64, e: &VoltageTrace| VoltageTrace {
        grid,
        values: x
            .values
            .iter()
            .zip(&e.values)
            .map(|(a, b)| (a - alpha * b).max(0.0))
            .collect(),
    };
    Ok([
        clean(v[0], gains.alpha_01, estimates[1]),
        clean(v[1], gains.alpha_10, estimates[0]),
    ])
}

/// Rebuilds the noiseless own-link signal at each sensor from tentatively
/// detected payload bits, using `model` as the receiver's channel knowledge.
///
/// The reconstruction is emitted from `t = 0` and then shifted so that its
/// joint start indicator lines up with the measured `frame_start`.
pub fn reconstruct_own_signals(
    model: &ImpulseMatrix,
    sensor: &SensorParams,
    timing: &TimingConfig,
    cfg: &DetectionConfig,
    molecules: f64,
    tentative: [&[bool]; 2],
    frame_start: f64,
) -> Result<[VoltageTrace; 2]> {
    let noiseless = sensor.noiseless();
    let slots: Vec<Vec<bool>> = (0..2)
        .map(|j| {
            let mut s = preamble_pattern(j, 2, timing);
            s.extend_from_slice(tentative[j]);
            s
        })
        .collect();
    let schedule = modulate(&slots, 0.0, timing, molecules);
    let joint = synthesize_traces(&schedule, model)?;
    let mut model_start = f64::INFINITY;
    for c in &joint {
        let v = sense(c, &noiseless, 0)?;
        model_start = model_start.min(detect_preamble(&v, timing, cfg)?);
    }

    let mut out = Vec::with_capacity(2);
    for j in 0..2 {
        let own: Vec<_> = schedule.iter().copied().filter(|r| r.link == j).collect();
        let c = synthesize_traces(&own, model)?;
        let v = sense(&c[j], &noiseless, 0)?;
        let shift = ((frame_start - model_start) / v.grid.dt).round() as i64;
        out.push(v.shifted(shift));
    }
    let b = out.pop().expect("two traces");
    let a = out.pop().expect("two traces");
    Ok([a, b])
}
