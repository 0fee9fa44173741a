//! Software replica of a tabletop molecular MIMO link.
//!
//! Two spray emitters send on-off keyed bursts of a chemical across a few
//! metres of air to two gas sensors. The crate models each stage:
//!
//! - [`channel`]: closed-form advection–diffusion impulse responses and
//!   their superposition, plus a Monte-Carlo particle oracle in
//!   [`particles`].
//! - [`phy`]: modulation, first-order sensor dynamics, non-coherent
//!   rise detection and inter-link interference cancellation.
//! - [`protocol`]: 5-bit text codec, EOT framing and character
//!   interleaving across the two spatial streams.
//! - [`harness`]: end-to-end runs, SISO/MIMO comparison and noise sweeps.
//!
//! ```
//! use molmimo::harness::compare_modes;
//! use molmimo::harness::ConfigOverrides;
//!
//! let cmp = compare_modes("abcdef", &ConfigOverrides::default(), 1).unwrap();
//! assert_eq!(cmp.mimo.message_decoded, "abcdef");
//! assert_eq!(cmp.siso.air_time_s, 108.0);
//! assert_eq!(cmp.mimo.air_time_s, 63.0);
//! ```

pub mod channel;
pub mod error;
pub mod harness;
pub mod particles;
pub mod phy;
pub mod protocol;
pub mod quadrature;

pub use error::{Error, Result};

// The guide's chapters, compiled as doctests so their snippets stay honest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/sensor.md")]
    mod sensor {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/framing.md")]
    mod framing {}
    #[doc = include_str!("../../../book/src/ili.md")]
    mod ili {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

/// Derives an independent sub-seed for stream `tag` (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
