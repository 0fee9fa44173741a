#![allow(dead_code)]

use molmimo::channel::*;
use molmimo::phy::*;

pub const T0: f64 = 1.0;

pub fn grid_for(slots: usize, timing: &TimingConfig) -> TimeGrid {
    let span = T0 + slots as f64 * timing.symbol_period + 15.0;
    TimeGrid::new(0.0, 0.1, (span / 0.1) as usize).unwrap()
}

/// Single-link transmitter + channel + sensor, returning rx0 volts.
pub fn single_link_volts(
    bits: &[bool],
    timing: &TimingConfig,
    sensor: &SensorParams,
    scale: impl Fn(usize) -> f64,
) -> VoltageTrace {
    let p = ChannelParams::default();
    let mut slots = preamble_pattern(0, 1, timing);
    slots.extend_from_slice(bits);
    let mut schedule = modulate(&[slots.clone()], T0, timing, p.molecules_per_burst);
    for rec in &mut schedule {
        let k = ((rec.time - T0) / timing.symbol_period).round() as usize;
        rec.molecules *= scale(k);
    }
    let grid = grid_for(slots.len(), timing);
    let m = channel_impulse_matrix(&Geometry2x2::default(), &p, grid).unwrap();
    let c = synthesize_traces(&schedule, &m).unwrap();
    sense(&c[0], sensor, 0).unwrap()
}

pub fn loop_back(bits: &[bool]) -> Vec<bool> {
    let timing = TimingConfig::siso();
    let cfg = DetectionConfig::default();
    let v = single_link_volts(bits, &timing, &SensorParams::default(), |_| 1.0);
    let start = detect_preamble(&v, &timing, &cfg).unwrap();
    detect_bits(&v, start, bits.len(), &timing, &cfg)
        .unwrap()
        .bits
}
