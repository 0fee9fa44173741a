use std::f64::consts::PI;

use molmimo::channel::*;
use molmimo::particles::simulate_particles;
use molmimo::quadrature::mass_integral;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Places particles straight from the free-space law at time `t` (no random
/// walk, no closed form) and counts how many land in a ball around `r`.
fn ball_occupancy_oracle(r: Vec3, t: f64, d: f64, n: usize, radius: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (2.0 * d * t).sqrt();
    let mut inside = 0usize;
    for _ in 0..n {
        let mut d2 = 0.0;
        for centre in r {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = sd * z - centre;
            d2 += x * x;
        }
        if d2 <= radius * radius {
            inside += 1;
        }
    }
    inside as f64 / n as f64 / (4.0 / 3.0 * PI * radius.powi(3))
}

#[test]
fn closed_form_matches_particle_oracle() {
    let p = ChannelParams {
        diffusivity: 0.01,
        drift: [0.0; 3],
        molecules_per_burst: 1.0,
        burst_duration: 0.0,
    };
    let closed = impulse_concentration([1.0, 0.0, 0.0], 25.0, &p).unwrap();
    let oracle = ball_occupancy_oracle([1.0, 0.0, 0.0], 25.0, 0.01, 10_000_000, 0.2, 42);
    // frozen from the oracle: 0.0661 m^-3 = e^-1 / pi^1.5
    assert!((closed - 0.0661).abs() < 5e-5);
    let rel = (oracle - closed).abs() / closed;
    assert!(
        rel < 0.02,
        "oracle {oracle} vs closed form {closed} ({rel})"
    );
}

#[test]
fn closed_form_conserves_mass() {
    let p = ChannelParams::default();
    for t in [0.5, 3.0, 12.0] {
        let m = mass_integral(&p, t, 8.0).unwrap();
        let rel = (m - p.molecules_per_burst).abs() / p.molecules_per_burst;
        assert!(rel < 0.01, "t={t}: {m}");
    }
}

#[test]
fn mc_error_shrinks_with_particles() {
    let g = Geometry2x2::default();
    let p = ChannelParams::default().with_molecules(1.0);
    let grid = TimeGrid::new(0.0, 0.1, 60).unwrap();
    let analytical = channel_impulse_matrix(&g, &p, grid)
        .unwrap()
        .trace(0, 0)
        .peak();
    let burst = [SprayRecord {
        link: 0,
        time: 0.0,
        molecules: 1.0,
    }];
    let median_err = |n: usize| {
        let mut e: Vec<f64> = (0..5)
            .map(|s| {
                let mc = simulate_particles(&burst, &g, &p, grid, n, 100 + s).unwrap()[0].peak();
                (mc - analytical).abs() / analytical
            })
            .collect();
        e.sort_by(f64::total_cmp);
        e[2]
    };
    let coarse = median_err(10_000);
    let fine = median_err(1_000_000);
    assert!(fine < coarse, "n=1e6 error {fine} vs n=1e4 error {coarse}");
    assert!(fine < 0.05);
}

#[test]
fn mc_is_independent_of_worker_count() {
    let g = Geometry2x2::default();
    let p = ChannelParams::default();
    let grid = TimeGrid::new(0.0, 0.1, 70).unwrap();
    let schedule = [
        SprayRecord {
            link: 0,
            time: 0.0,
            molecules: 1e18,
        },
        SprayRecord {
            link: 1,
            time: 1.5,
            molecules: 5e17,
        },
    ];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_particles(&schedule, &g, &p, grid, 50_000, 9).unwrap())
    };
    let one = run(1);
    let four = run(4);
    for s in 0..2 {
        let a: Vec<u64> = one[s].values.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = four[s].values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn particle_traces_are_nonnegative() {
    let grid = TimeGrid::new(0.0, 0.1, 60).unwrap();
    let rec = [SprayRecord {
        link: 0,
        time: 0.3,
        molecules: 1e18,
    }];
    let out = simulate_particles(
        &rec,
        &Geometry2x2::default(),
        &ChannelParams::default(),
        grid,
        20_000,
        1,
    )
    .unwrap();
    assert!(out.iter().all(|t| t.values.iter().all(|v| *v >= 0.0)));
}

fn record() -> impl Strategy<Value = SprayRecord> {
    (0usize..2, 0.0f64..15.0, 0.0f64..2e18).prop_map(|(link, time, molecules)| SprayRecord {
        link,
        time,
        molecules,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn superposition_is_exact(records in prop::collection::vec(record(), 1..6)) {
        let grid = TimeGrid::new(0.0, 0.1, 200).unwrap();
        let m = channel_impulse_matrix(&Geometry2x2::default(), &ChannelParams::default(), grid).unwrap();
        let joint = synthesize_traces(&records, &m).unwrap();
        let mut sum = [ConcentrationTrace::zeros(grid), ConcentrationTrace::zeros(grid)];
        for r in &records {
            let single = synthesize_traces(std::slice::from_ref(r), &m).unwrap();
            for rx in 0..2 {
                for (acc, v) in sum[rx].values.iter_mut().zip(&single[rx].values) {
                    *acc += v;
                }
            }
        }
        prop_assert_eq!(&joint, &sum);
        prop_assert!(joint.iter().all(|t| t.values.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn closed_form_is_nonnegative(
        x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0, t in 1e-3f64..100.0,
    ) {
        let c = impulse_concentration([x, y, z], t, &ChannelParams::default()).unwrap();
        prop_assert!(c >= 0.0);
    }
}
