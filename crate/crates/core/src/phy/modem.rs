use serde::{Deserialize, Serialize};

use crate::channel::SprayRecord;
use crate::error::{Error, Result};

/// Slot timing shared by transmitter and receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    /// Symbol period `T_s` in seconds.
    pub symbol_period: f64,
    /// Preamble slots preceding the payload. Active links fire in turn, one
    /// per slot, so every link gets at least one solo slot.
    pub preamble_slots: usize,
    /// Receiver slot `k` opens `guard` seconds before
    /// `frame_start + k·T_s`.
    pub guard: f64,
    /// Non-payload air time `O` charged per frame (start and end
    /// indicators).
    pub overhead: f64,
}

impl TimingConfig {
    /// Single-link timing.
    pub fn siso() -> Self {
        TimingConfig {
            symbol_period: 3.4,
            preamble_slots: 2,
            guard: 1.8,
            overhead: 6.0,
        }
    }

    /// Two-link timing; the longer period leaves room for interference
    /// compensation.
    pub fn mimo() -> Self {
        TimingConfig {
            symbol_period: 3.8,
            ..Self::siso()
        }
    }

    pub fn validate(&self, active_links: usize) -> Result<()> {
        if !self.symbol_period.is_finite() || self.symbol_period <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "symbol period must be > 0, got {}",
                self.symbol_period
            )));
        }
        if !self.overhead.is_finite() || self.overhead < 0.0 {
            return Err(Error::InvalidParameter("overhead must be >= 0".into()));
        }
        if !self.guard.is_finite() || self.guard < 0.0 || self.guard >= self.symbol_period {
            return Err(Error::InvalidParameter(
                "guard must lie in [0, symbol period)".into(),
            ));
        }
        if self.preamble_slots < active_links.max(1) {
            return Err(Error::InvalidParameter(format!(
                "{} preamble slots cannot give {} links a solo slot each",
                self.preamble_slots, active_links
            )));
        }
        Ok(())
    }
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self::siso()
    }
}

/// Preamble bits of `link` when `active_links` links share the preamble:
/// link `j` fires in slots `j, j + L, j + 2L, …`.
pub fn preamble_pattern(link: usize, active_links: usize, timing: &TimingConfig) -> Vec<bool> {
    let l = active_links.max(1);
    (0..timing.preamble_slots).map(|k| k % l == link).collect()
}

/// On-off keying: bit `k` of link `j` set emits one burst from emitter `j`
/// at `t0 + k·T_s`. Records come out ordered by time, then link.
pub fn modulate(
    bits: &[Vec<bool>],
    t0: f64,
    timing: &TimingConfig,
    molecules: f64,
) -> Vec<SprayRecord> {
    let longest = bits.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for k in 0..longest {
        for (link, stream) in bits.iter().enumerate() {
            if stream.get(k).copied().unwrap_or(false) {
                out.push(SprayRecord {
                    link,
                    time: t0 + k as f64 * timing.symbol_period,
                    molecules,
                });
            }
        }
    }
    out
}
