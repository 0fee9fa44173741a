use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{ConcentrationTrace, TimeGrid};
use crate::error::{Error, Result};

/// First-order gas sensor with additive Gaussian read noise and a saturating
/// output stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    /// Volts per molecule/m³.
    pub gain: f64,
    /// Time constant `τ_r` of the lag, seconds.
    pub response_time: f64,
    /// Standard deviation of the per-sample read noise, volts.
    pub noise_sigma: f64,
    /// Output rail, volts.
    pub saturation: f64,
    /// Samples per second.
    pub sample_rate: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            gain: 5e-19,
            response_time: 0.5,
            noise_sigma: 0.0,
            saturation: 5.0,
            sample_rate: 10.0,
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gain.is_finite()
            && self.gain > 0.0
            && self.response_time.is_finite()
            && self.response_time > 0.0
            && self.noise_sigma.is_finite()
            && self.noise_sigma >= 0.0
            && self.saturation.is_finite()
            && self.saturation > 0.0
            && self.sample_rate.is_finite()
            && self.sample_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid sensor parameters {self:?}"
            )))
        }
    }

    pub fn noiseless(self) -> Self {
        SensorParams {
            noise_sigma: 0.0,
            ..self
        }
    }
}

/// Sensor output in volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrace {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl VoltageTrace {
    pub fn zeros(grid: TimeGrid) -> Self {
        VoltageTrace {
            grid,
            values: vec![0.0; grid.count],
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        VoltageTrace {
            grid: self.grid,
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// Shifts the samples `by` positions later (earlier if negative),
    /// filling with zeros.
    pub fn shifted(&self, by: i64) -> Self {
        let n = self.values.len() as i64;
        let values = (0..n)
            .map(|i| {
                let j = i - by;
                if (0..n).contains(&j) {
                    self.values[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
        VoltageTrace {
            grid: self.grid,
            values,
        }
    }
}

/// Runs a concentration trace through the sensor.
///
/// The concentration is resampled to the sensor rate by nearest sample and
/// held between samples, so the lag `dV/dt = (k·C − V)/τ_r` is integrated
/// exactly: `V[n+1] = a·V[n] + (1 − a)·k·C[n]` with `a = exp(−dt/τ_r)`.
/// Noise is then added per sample and the result clamped to
/// `[0, saturation]`.
pub fn sense(c: &ConcentrationTrace, s: &SensorParams, seed: u64) -> Result<VoltageTrace> {
    s.validate()?;
    c.grid.validate()?;
    let period = 1.0 / s.sample_rate;
    let span = c.grid.dt * (c.grid.count - 1) as f64;
    if c.grid.count > 1 && period > span {
        return Err(Error::GridMismatch(format!(
            "sensor period {period} s exceeds trace span {span} s"
        )));
    }
    let count = if c.grid.count > 1 {
        (span / period + 1e-9).floor() as usize + 1
    } else {
        1
    };
    let grid = TimeGrid::new(c.grid.start, period, count)?;

    let a = (-period / s.response_time).exp();
    let mut state = 0.0;
    let mut clean = Vec::with_capacity(count);
    for i in 0..count {
        clean.push(state);
        let src = c
            .grid
            .nearest_index(grid.time(i))
            .clamp(0, c.grid.count as i64 - 1) as usize;
        state = a * state + (1.0 - a) * s.gain * c.values[src];
    }

    let values = if s.noise_sigma > 0.0 {
        let noise =
            Normal::new(0.0, s.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        clean
            .into_iter()
            .map(|v| (v + noise.sample(&mut rng)).clamp(0.0, s.saturation))
            .collect()
    } else {
        clean
            .into_iter()
            .map(|v| v.clamp(0.0, s.saturation))
            .collect()
    };
    Ok(VoltageTrace { grid, values })
}
