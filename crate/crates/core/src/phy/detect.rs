use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::modem::TimingConfig;
use super::sensor::VoltageTrace;
use crate::error::{Error, Result};

/// Non-coherent detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Fraction `β` of the reference rise a statistic must exceed.
    pub threshold_fraction: f64,
    /// Smallest preamble rise, in volts, accepted as a real pilot.
    pub noise_floor: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            threshold_fraction: 0.5,
            noise_floor: 1e-6,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let b = self.threshold_fraction;
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold fraction must lie in (0, 1], got {b}"
            )));
        }
        if !self.noise_floor.is_finite() || self.noise_floor < 0.0 {
            return Err(Error::InvalidParameter("noise floor must be >= 0".into()));
        }
        Ok(())
    }
}

fn window_samples(v: &VoltageTrace, timing: &TimingConfig) -> usize {
    ((timing.symbol_period / v.grid.dt).round() as usize).max(1)
}

/// Frame start: the first sample whose rise above the running minimum of the
/// preceding symbol period reaches `β` times the largest such rise in the
/// trace. Ties resolve to the earlier sample.
pub fn detect_preamble(
    v: &VoltageTrace,
    timing: &TimingConfig,
    cfg: &DetectionConfig,
) -> Result<f64> {
    cfg.validate()?;
    if v.values.is_empty() {
        return Err(Error::NoStartIndicator);
    }
    let w = window_samples(v, timing);
    // Sliding-window minimum over v[n-w ..= n].
    let mut rises = Vec::with_capacity(v.values.len());
    let mut q: VecDeque<usize> = VecDeque::new();
    for (n, &x) in v.values.iter().enumerate() {
        while q.back().is_some_and(|&j| v.values[j] >= x) {
            q.pop_back();
        }
        q.push_back(n);
        while q.front().is_some_and(|&j| j + w < n) {
            q.pop_front();
        }
        rises.push(x - v.values[q[0]]);
    }
    let max_rise = rises.iter().copied().fold(0.0, f64::max);
    if max_rise <= 0.0 {
        return Err(Error::NoStartIndicator);
    }
    let level = cfg.threshold_fraction * max_rise;
    let n = rises
        .iter()
        .position(|&r| r >= level)
        .expect("max rise is attained somewhere");
    Ok(v.grid.time(n))
}

fn slot_bounds(v: &VoltageTrace, start: f64, timing: &TimingConfig) -> Result<(usize, usize)> {
    let lo = v.grid.nearest_index(start).max(0) as usize;
    let hi = v.grid.nearest_index(start + timing.symbol_period);
    if hi > v.values.len() as i64 {
        return Err(Error::TraceTooShort {
            needed: hi as usize,
            available: v.values.len(),
        });
    }
    let hi = (hi.max(0) as usize).max(lo + 1).min(v.values.len());
    if lo >= hi {
        return Err(Error::TraceTooShort {
            needed: lo + 1,
            available: v.values.len(),
        });
    }
    Ok((lo, hi))
}

/// In-slot rise: peak voltage inside the slot opening at `start` minus the
/// voltage at its first sample. Slot starts before the trace are clipped to
/// its first sample.
pub fn slot_rise(v: &VoltageTrace, start: f64, timing: &TimingConfig) -> Result<f64> {
    let (lo, hi) = slot_bounds(v, start, timing)?;
    let peak = v.values[lo..hi]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(peak - v.values[lo])
}

/// Largest rise above the running minimum inside the slot. Unlike
/// [`slot_rise`] this ignores a decaying tail carried in from the previous
/// slot.
pub fn slot_peak_rise(v: &VoltageTrace, start: f64, timing: &TimingConfig) -> Result<f64> {
    let (lo, hi) = slot_bounds(v, start, timing)?;
    let mut floor = f64::INFINITY;
    let mut best = 0.0f64;
    for &x in &v.values[lo..hi] {
        floor = floor.min(x);
        best = best.max(x - floor);
    }
    Ok(best)
}

/// Start time of frame slot `k` (preamble slots first) for a frame whose
/// start indicator arrived at `frame_start`.
pub(crate) fn slot_start(frame_start: f64, k: usize, timing: &TimingConfig) -> f64 {
    frame_start - timing.guard + k as f64 * timing.symbol_period
}

/// Decision for one payload slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    /// Payload slot index, counted after the preamble.
    pub slot: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub bit: bool,
    /// Slot window in simulated seconds.
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bits: Vec<bool>,
    pub slots: Vec<SlotDecision>,
    /// Largest in-slot rise across the preamble slots.
    pub reference_rise: f64,
    pub threshold: f64,
}

/// Decides `n` payload bits following the preamble. The threshold is `β`
/// times the largest preamble slot rise, and bit `k` is set when its
/// in-slot rise exceeds it.
pub fn detect_bits(
    v: &VoltageTrace,
    frame_start: f64,
    n: usize,
    timing: &TimingConfig,
    cfg: &DetectionConfig,
) -> Result<Detection> {
    cfg.validate()?;
    let p = timing.preamble_slots;
    // Fail fast if the whole frame does not fit.
    slot_bounds(v, slot_start(frame_start, p + n.max(1) - 1, timing), timing)?;

    let reference_rise = (0..p)
        .map(|k| slot_rise(v, slot_start(frame_start, k, timing), timing))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let threshold = cfg.threshold_fraction * reference_rise;

    let mut bits = Vec::with_capacity(n);
    let mut slots = Vec::with_capacity(n);
    for k in 0..n {
        let start = slot_start(frame_start, p + k, timing);
        let statistic = slot_rise(v, start, timing)?;
        let bit = statistic > threshold;
        bits.push(bit);
        slots.push(SlotDecision {
            slot: k,
            statistic,
            threshold,
            bit,
            start,
            end: start + timing.symbol_period,
        });
    }
    Ok(Detection {
        bits,
        slots,
        reference_rise,
        threshold,
    })
}

/// Per-slot diagnostics as CSV with header `rx,slot,statistic,threshold,bit`.
pub fn write_slots_csv<W: Write>(mut w: W, per_rx: &[Vec<SlotDecision>]) -> io::Result<()> {
    writeln!(w, "rx,slot,statistic,threshold,bit")?;
    for (rx, slots) in per_rx.iter().enumerate() {
        for s in slots {
            writeln!(
                w,
                "{},{},{},{},{}",
                rx,
                s.slot,
                s.statistic,
                s.threshold,
                u8::from(s.bit)
            )?;
        }
    }
    Ok(())
}
