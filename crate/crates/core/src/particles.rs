//! Monte-Carlo particle simulation of the same channel.
//!
//! Every released particle random-walks with Gaussian steps of mean `v·dt` and
//! per-axis variance `2·D·dt`. A sensor reads the number of particles inside
//! its capture ball divided by the ball volume, scaled by molecules per
//! particle.
//!
//! Particle `i` of burst `b` draws from its own ChaCha stream
//! `(seed, b·n + i)`, and per-chunk occupancy counts are integers, so the
//! result does not depend on how rayon splits the work.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{
    check_schedule, norm_sq, sub, ChannelParams, ConcentrationTrace, Geometry2x2, SprayRecord,
    TimeGrid,
};
use crate::error::{Error, Result};

const CHUNK: usize = 2048;

/// Occupancy counts per sensor and sample for `n` particles released at
/// sample `release` from `origin`.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
fn walk_counts(
    origin: [f64; 3],
    release: usize,
    g: &Geometry2x2,
    p: &ChannelParams,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    stream_base: u64,
) -> [Vec<u64>; 2] {
    let steps = grid.count;
    let mean = [
        p.drift[0] * grid.dt,
        p.drift[1] * grid.dt,
        p.drift[2] * grid.dt,
    ];
    let sd = (2.0 * p.diffusivity * grid.dt).sqrt();
    let r2 = g.capture_radius * g.capture_radius;
    let rx = g.rx;

    let n_chunks = n.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = [vec![0u64; steps], vec![0u64; steps]];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            for i in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_base + i as u64);
                let mut pos = origin;
                for k in release + 1..steps {
                    for (axis, x) in pos.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *x += mean[axis] + sd * z;
                    }
                    for (s, centre) in rx.iter().enumerate() {
                        if norm_sq(sub(pos, *centre)) <= r2 {
                            counts[s][k] += 1;
                        }
                    }
                }
            }
            counts
        })
        .reduce(
            || [vec![0u64; steps], vec![0u64; steps]],
            |mut a, b| {
                for s in 0..2 {
                    for (x, y) in a[s].iter_mut().zip(&b[s]) {
                        *x += y;
                    }
                }
                a
            },
        )
}

/// Simulates `n` particles per burst of `schedule` and returns the
/// concentration seen by each sensor on `grid`.
pub fn simulate_particles(
    schedule: &[SprayRecord],
    g: &Geometry2x2,
    p: &ChannelParams,
    grid: TimeGrid,
    n: usize,
    seed: u64,
) -> Result<[ConcentrationTrace; 2]> {
    if n == 0 {
        return Err(Error::InvalidParticleCount);
    }
    g.validate()?;
    p.validate()?;
    grid.validate()?;
    check_schedule(schedule, &grid)?;

    let volume = 4.0 / 3.0 * PI * g.capture_radius.powi(3);
    let mut out = [
        ConcentrationTrace::zeros(grid),
        ConcentrationTrace::zeros(grid),
    ];
    for (b, rec) in schedule.iter().enumerate() {
        let release = grid.nearest_index(rec.time) as usize;
        let counts = walk_counts(
            g.tx[rec.link],
            release,
            g,
            p,
            &grid,
            n,
            seed,
            (b as u64) * (n as u64),
        );
        let weight = rec.molecules / n as f64 / volume;
        for s in 0..2 {
            for (v, c) in out[s].values.iter_mut().zip(&counts[s]) {
                *v += *c as f64 * weight;
            }
        }
    }
    Ok(out)
}
