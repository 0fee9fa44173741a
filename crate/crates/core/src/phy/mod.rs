//! Physical layer: on-off keying, sensor dynamics, non-coherent detection and
//! inter-link interference cancellation.

mod detect;
mod ili;
mod modem;
mod sensor;

pub use detect::{
    detect_bits, detect_preamble, slot_peak_rise, slot_rise, write_slots_csv, Detection,
    DetectionConfig, SlotDecision,
};
pub use ili::{cancel_ili, estimate_cross_gain, reconstruct_own_signals, IliGains};
pub use modem::{modulate, preamble_pattern, TimingConfig};
pub use sensor::{sense, SensorParams, VoltageTrace};
