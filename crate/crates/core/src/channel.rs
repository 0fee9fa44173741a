//! Free-space advection–diffusion channel between two spray emitters and two
//! sensors.
//!
//! Concentration from an instantaneous point release of `Q` molecules at the
//! origin, drifting with velocity `v` and diffusing with coefficient `D`, is
//!
//! ```text
//! C(r, t) = Q (4πDt)^(-3/2) exp(-‖r - vt‖² / (4Dt))
//! ```
//!
//! The channel is linear in the emitted molecules, so any spray schedule is a
//! superposition of time-shifted copies of the four tx→rx impulse responses
//! held in an [`ImpulseMatrix`].

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian position or velocity in metres (per second).
pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm_sq(a: Vec3) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

fn all_finite(a: Vec3) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Physical constants of the advection–diffusion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Effective diffusivity `D` in m²/s.
    pub diffusivity: f64,
    /// Bulk drift velocity `v` in m/s.
    pub drift: Vec3,
    /// Molecules released by one burst.
    pub molecules_per_burst: f64,
    /// Physical spray duration in seconds. Bursts are modelled as
    /// instantaneous releases at their start time.
    pub burst_duration: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            diffusivity: 0.0125,
            drift: [1.0, 0.0, 0.0],
            molecules_per_burst: 1e18,
            burst_duration: 0.1,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !self.diffusivity.is_finite()
            || !all_finite(self.drift)
            || !self.molecules_per_burst.is_finite()
            || !self.burst_duration.is_finite()
        {
            return Err(Error::InvalidParameter(
                "channel parameters must be finite".into(),
            ));
        }
        if self.diffusivity <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "diffusivity must be > 0, got {}",
                self.diffusivity
            )));
        }
        if self.molecules_per_burst < 0.0 {
            return Err(Error::InvalidParameter(
                "molecules per burst must be >= 0".into(),
            ));
        }
        if self.burst_duration < 0.0 {
            return Err(Error::InvalidParameter(
                "burst duration must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Same parameters with a different burst size.
    pub fn with_molecules(self, molecules_per_burst: f64) -> Self {
        ChannelParams {
            molecules_per_burst,
            ..self
        }
    }
}

/// Placement of the two emitters and the two sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry2x2 {
    pub tx: [Vec3; 2],
    pub rx: [Vec3; 2],
    /// Radius of the sensing ball around each receiver, used by the
    /// particle simulator.
    pub capture_radius: f64,
}

impl Default for Geometry2x2 {
    fn default() -> Self {
        Geometry2x2 {
            tx: [[0.0, 0.2, 0.0], [0.0, -0.2, 0.0]],
            rx: [[3.0, 0.2, 0.0], [3.0, -0.2, 0.0]],
            capture_radius: 0.05,
        }
    }
}

impl Geometry2x2 {
    /// Distance from emitter `tx` to sensor `rx`.
    pub fn distance(&self, rx: usize, tx: usize) -> f64 {
        norm_sq(sub(self.rx[rx], self.tx[tx])).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tx.iter().chain(self.rx.iter()).all(|p| all_finite(*p))
            || !self.capture_radius.is_finite()
        {
            return Err(Error::InvalidParameter("geometry must be finite".into()));
        }
        let mut min_dist = f64::INFINITY;
        for rx in 0..2 {
            for tx in 0..2 {
                let d = self.distance(rx, tx);
                if d <= 0.0 {
                    return Err(Error::DegenerateGeometry(format!(
                        "tx{tx} and rx{rx} coincide"
                    )));
                }
                min_dist = min_dist.min(d);
            }
        }
        if self.capture_radius <= 0.0 || self.capture_radius >= min_dist {
            return Err(Error::InvalidParameter(format!(
                "capture radius must lie in (0, {min_dist}), got {}",
                self.capture_radius
            )));
        }
        Ok(())
    }
}

/// Uniform sampling instants `start + i·dt` for `i in 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub dt: f64,
    pub count: usize,
}

impl TimeGrid {
    pub fn new(start: f64, dt: f64, count: usize) -> Result<Self> {
        let grid = TimeGrid { start, dt, count };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs finite start and dt > 0, got start={} dt={}",
                self.start, self.dt
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidParameter(
                "time grid needs at least one sample".into(),
            ));
        }
        Ok(())
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.dt
    }

    /// Time of the last sample.
    pub fn end(&self) -> f64 {
        self.time(self.count - 1)
    }

    /// Index of the sample nearest to `t`; may fall outside `0..count`.
    pub fn nearest_index(&self, t: f64) -> i64 {
        ((t - self.start) / self.dt).round() as i64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.time(i))
    }
}

/// One burst from emitter `link`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprayRecord {
    pub link: usize,
    pub time: f64,
    pub molecules: f64,
}

/// Concentration (molecules/m³) sampled at one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTrace {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl ConcentrationTrace {
    pub fn zeros(grid: TimeGrid) -> Self {
        ConcentrationTrace {
            grid,
            values: vec![0.0; grid.count],
        }
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// The four unit-burst responses of the 2×2 channel on a shared grid.
/// Entry `(rx, tx)` is the concentration at sensor `rx` after emitter `tx`
/// releases one molecule at time zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseMatrix {
    grid: TimeGrid,
    responses: [[Vec<f64>; 2]; 2],
}

impl ImpulseMatrix {
    /// Builds a matrix from raw responses; every entry must match `grid`.
    pub fn from_responses(grid: TimeGrid, responses: [[Vec<f64>; 2]; 2]) -> Result<Self> {
        grid.validate()?;
        for row in &responses {
            for h in row {
                if h.len() != grid.count {
                    return Err(Error::GridMismatch(format!(
                        "impulse response has {} samples, grid has {}",
                        h.len(),
                        grid.count
                    )));
                }
            }
        }
        Ok(ImpulseMatrix { grid, responses })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn response(&self, rx: usize, tx: usize) -> &[f64] {
        &self.responses[rx][tx]
    }

    pub fn trace(&self, rx: usize, tx: usize) -> ConcentrationTrace {
        ConcentrationTrace {
            grid: self.grid,
            values: self.responses[rx][tx].clone(),
        }
    }
}

/// Closed-form concentration at displacement `r` from the release point,
/// `t` seconds after an instantaneous burst.
pub fn impulse_concentration(r: Vec3, t: f64, p: &ChannelParams) -> Result<f64> {
    if !all_finite(r) || t.is_nan() {
        return Err(Error::InvalidParameter("non-finite input".into()));
    }
    p.validate()?;
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::InvalidTime(t));
    }
    Ok(green(r, t, p))
}

// Unchecked kernel; t > 0 and p valid.
fn green(r: Vec3, t: f64, p: &ChannelParams) -> f64 {
    if p.molecules_per_burst == 0.0 {
        return 0.0;
    }
    let four_dt = 4.0 * p.diffusivity * t;
    let centre = [p.drift[0] * t, p.drift[1] * t, p.drift[2] * t];
    let d2 = norm_sq(sub(r, centre));
    p.molecules_per_burst * (PI * four_dt).powf(-1.5) * (-d2 / four_dt).exp()
}

/// Samples the unit-burst response of every tx→rx pair on `grid`. Samples at
/// `t <= 0` precede the release and are zero.
pub fn channel_impulse_matrix(
    g: &Geometry2x2,
    p: &ChannelParams,
    grid: TimeGrid,
) -> Result<ImpulseMatrix> {
    g.validate()?;
    p.validate()?;
    grid.validate()?;
    let unit = p.with_molecules(1.0);
    let sample = |rx: usize, tx: usize| -> Vec<f64> {
        let r = sub(g.rx[rx], g.tx[tx]);
        grid.times()
            .map(|t| if t > 0.0 { green(r, t, &unit) } else { 0.0 })
            .collect()
    };
    ImpulseMatrix::from_responses(
        grid,
        [[sample(0, 0), sample(0, 1)], [sample(1, 0), sample(1, 1)]],
    )
}

pub(crate) fn check_schedule(schedule: &[SprayRecord], grid: &TimeGrid) -> Result<()> {
    for rec in schedule {
        if rec.link > 1 {
            return Err(Error::InvalidParameter(format!(
                "spray link index must be 0 or 1, got {}",
                rec.link
            )));
        }
        if !rec.molecules.is_finite() || rec.molecules < 0.0 {
            return Err(Error::InvalidParameter(
                "spray molecules must be finite and >= 0".into(),
            ));
        }
        let idx = grid.nearest_index(rec.time);
        if !rec.time.is_finite() || rec.time < 0.0 || idx < 0 || idx >= grid.count as i64 {
            return Err(Error::ScheduleOutOfRange {
                time: rec.time,
                start: grid.start,
                end: grid.end(),
            });
        }
    }
    Ok(())
}

/// Superposes time-shifted, scaled impulse responses for every burst in the
/// schedule. Emission times are snapped to the nearest grid sample.
pub fn synthesize_traces(
    schedule: &[SprayRecord],
    m: &ImpulseMatrix,
) -> Result<[ConcentrationTrace; 2]> {
    let grid = m.grid;
    check_schedule(schedule, &grid)?;
    let mut out = [
        ConcentrationTrace::zeros(grid),
        ConcentrationTrace::zeros(grid),
    ];
    for rec in schedule {
        let shift = (rec.time / grid.dt).round() as usize;
        if shift >= grid.count {
            continue;
        }
        for (rx, trace) in out.iter_mut().enumerate() {
            let h = &m.responses[rx][rec.link];
            for (v, hv) in trace.values[shift..].iter_mut().zip(h) {
                *v += rec.molecules * hv;
            }
        }
    }
    Ok(out)
}

/// Writes a sensor trace pair as CSV with header `t,rx0,rx1`.
pub fn write_traces_csv<W: Write>(mut w: W, traces: &[ConcentrationTrace; 2]) -> io::Result<()> {
    if traces[0].grid != traces[1].grid {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "trace grids differ",
        ));
    }
    writeln!(w, "t,rx0,rx1")?;
    for (i, t) in traces[0].grid.times().enumerate() {
        writeln!(w, "{},{},{}", t, traces[0].values[i], traces[1].values[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 0.1, 200).unwrap()
    }

    #[test]
    fn zero_emission_is_zero() {
        let p = ChannelParams::default().with_molecules(0.0);
        assert_eq!(
            impulse_concentration([0.3, 0.1, 0.0], 2.0, &p).unwrap(),
            0.0
        );
    }

    #[test]
    fn isotropic_without_drift() {
        let p = ChannelParams {
            drift: [0.0; 3],
            ..ChannelParams::default()
        };
        for t in [0.5, 3.0, 40.0] {
            let a = impulse_concentration([1.0, 0.0, 0.0], t, &p).unwrap();
            let b = impulse_concentration([0.0, 0.0, 1.0], t, &p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn closed_form_reference_point() {
        let p = ChannelParams {
            diffusivity: 0.01,
            drift: [0.0; 3],
            molecules_per_burst: 1.0,
            burst_duration: 0.0,
        };
        let c = impulse_concentration([1.0, 0.0, 0.0], 25.0, &p).unwrap();
        let expected = (-1.0f64).exp() / PI.powf(1.5);
        assert!((c - expected).abs() < 1e-15);
    }

    #[test]
    fn time_and_parameter_errors() {
        let p = ChannelParams::default();
        assert_eq!(
            impulse_concentration([1.0, 0.0, 0.0], 0.0, &p),
            Err(Error::InvalidTime(0.0))
        );
        assert!(matches!(
            impulse_concentration([f64::NAN, 0.0, 0.0], 1.0, &p),
            Err(Error::InvalidParameter(_))
        ));
        let bad = ChannelParams {
            diffusivity: -1.0,
            ..p
        };
        assert!(matches!(
            impulse_concentration([1.0, 0.0, 0.0], 1.0, &bad),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn default_geometry_is_mirror_symmetric() {
        let m = channel_impulse_matrix(&Geometry2x2::default(), &ChannelParams::default(), grid())
            .unwrap();
        assert_eq!(m.response(0, 0), m.response(1, 1));
        assert_eq!(m.response(0, 1), m.response(1, 0));
        let peak = |h: &[f64]| h.iter().copied().fold(0.0, f64::max);
        assert!(peak(m.response(0, 1)) < peak(m.response(0, 0)));
    }

    #[test]
    fn single_sample_grid() {
        let g = TimeGrid::new(3.0, 0.1, 1).unwrap();
        let m =
            channel_impulse_matrix(&Geometry2x2::default(), &ChannelParams::default(), g).unwrap();
        for rx in 0..2 {
            for tx in 0..2 {
                assert_eq!(m.response(rx, tx).len(), 1);
                assert!(m.response(rx, tx)[0] > 0.0);
            }
        }
    }

    #[test]
    fn coincident_tx_rx_is_degenerate() {
        let mut g = Geometry2x2::default();
        g.rx[1] = g.tx[0];
        assert!(matches!(
            channel_impulse_matrix(&g, &ChannelParams::default(), grid()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn synthesis_matches_definition() {
        let p = ChannelParams::default();
        let m = channel_impulse_matrix(&Geometry2x2::default(), &p, grid()).unwrap();
        let q = p.molecules_per_burst;
        let one = synthesize_traces(
            &[SprayRecord {
                link: 0,
                time: 0.0,
                molecules: q,
            }],
            &m,
        )
        .unwrap();
        for rx in 0..2 {
            for (a, h) in one[rx].values.iter().zip(m.response(rx, 0)) {
                assert_eq!(*a, q * h);
            }
        }
        let rec = SprayRecord {
            link: 0,
            time: 0.0,
            molecules: q,
        };
        let two = synthesize_traces(&[rec, rec], &m).unwrap();
        for rx in 0..2 {
            for (a, b) in two[rx].values.iter().zip(&one[rx].values) {
                assert_eq!(*a, 2.0 * b);
            }
        }
        let col1 = synthesize_traces(
            &[SprayRecord {
                link: 1,
                time: 0.0,
                molecules: 3.0,
            }],
            &m,
        )
        .unwrap();
        for rx in 0..2 {
            for (a, h) in col1[rx].values.iter().zip(m.response(rx, 1)) {
                assert_eq!(*a, 3.0 * h);
            }
        }
    }

    #[test]
    fn synthesis_shifts_to_nearest_sample() {
        let m = channel_impulse_matrix(&Geometry2x2::default(), &ChannelParams::default(), grid())
            .unwrap();
        let out = synthesize_traces(
            &[SprayRecord {
                link: 0,
                time: 1.04,
                molecules: 1.0,
            }],
            &m,
        )
        .unwrap();
        assert!(out[0].values[..10].iter().all(|v| *v == 0.0));
        assert_eq!(&out[0].values[10..], &m.response(0, 0)[..190]);
    }

    #[test]
    fn emission_past_grid_end_is_rejected() {
        let m = channel_impulse_matrix(&Geometry2x2::default(), &ChannelParams::default(), grid())
            .unwrap();
        let err = synthesize_traces(
            &[SprayRecord {
                link: 0,
                time: 25.0,
                molecules: 1.0,
            }],
            &m,
        );
        assert!(matches!(err, Err(Error::ScheduleOutOfRange { .. })));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let g = TimeGrid::new(0.0, 0.5, 3).unwrap();
        let a = ConcentrationTrace {
            grid: g,
            values: vec![0.0, 1.5, 2.0],
        };
        let b = ConcentrationTrace {
            grid: g,
            values: vec![0.0, 0.25, 3.0],
        };
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &[a, b]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,rx0,rx1\n0,0,0\n0.5,1.5,0.25\n1,2,3\n"
        );
    }
}
