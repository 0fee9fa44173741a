//! End-to-end link runs: text → frame → sprays → channel → sensors →
//! detection → text, timed on the simulated clock.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::channel::{
    channel_impulse_matrix, impulse_concentration, sub, synthesize_traces, ChannelParams,
    ConcentrationTrace, Geometry2x2, ImpulseMatrix, SprayRecord, TimeGrid,
};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::particles::simulate_particles;
use crate::phy::{
    cancel_ili, detect_bits, detect_preamble, estimate_cross_gain, modulate, preamble_pattern,
    reconstruct_own_signals, sense, DetectionConfig, IliGains, SensorParams, SlotDecision,
    TimingConfig, VoltageTrace,
};
use crate::protocol::{
    decode_stream_lossy, decode_text, encode_text, frame_air_time, interleave, Mode,
};
use crate::quadrature::mass_integral;

/// Every supported character once; its payload bits are exactly half ones.
pub const BALANCED_MESSAGE: &str = "abcdefghijklmnopqrstuvwxyz .,?";

const SETTLE_MARGIN: f64 = 5.0;
const PEAK_SEARCH_HORIZON: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "analytical")]
    Analytical,
    #[serde(rename = "mc", alias = "monte-carlo")]
    MonteCarlo,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytical" => Ok(Backend::Analytical),
            "mc" | "monte-carlo" => Ok(Backend::MonteCarlo),
            other => Err(Error::InvalidConfig(format!("unknown backend {other:?}"))),
        }
    }
}

/// Everything needed to reproduce one link run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub message: String,
    pub channel: ChannelParams,
    pub geometry: Geometry2x2,
    pub timing: TimingConfig,
    pub sensor: SensorParams,
    pub detection: DetectionConfig,
    pub seed: u64,
    pub backend: Backend,
    /// Particles per burst, Monte-Carlo backend only.
    pub particles: usize,
    /// Decision-directed ILI cancellation in MIMO mode.
    pub ili_cancellation: bool,
    /// Emission time of the first preamble slot.
    pub tx_start: f64,
}

impl RunConfig {
    /// Calibrated defaults for `mode`.
    pub fn defaults(mode: Mode) -> Self {
        RunConfig {
            mode,
            message: "abcdef".into(),
            channel: ChannelParams::default(),
            geometry: Geometry2x2::default(),
            timing: match mode {
                Mode::Siso => TimingConfig::siso(),
                Mode::Mimo => TimingConfig::mimo(),
            },
            sensor: SensorParams::default(),
            detection: DetectionConfig::default(),
            seed: 1,
            backend: Backend::Analytical,
            particles: 1_000_000,
            ili_cancellation: true,
            tx_start: 1.0,
        }
    }

    pub fn from_overrides(mode: Mode, o: &ConfigOverrides) -> Result<Self> {
        let mut cfg = RunConfig::defaults(mode);
        o.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.geometry.validate()?;
        self.timing.validate(self.mode.streams())?;
        self.sensor.validate()?;
        self.detection.validate()?;
        if self.backend == Backend::MonteCarlo && self.particles == 0 {
            return Err(Error::InvalidParticleCount);
        }
        if !self.tx_start.is_finite() || self.tx_start < 0.0 {
            return Err(Error::InvalidParameter("tx_start must be >= 0".into()));
        }
        Ok(())
    }
}

/// Symbol timing with every field optional, so a partial override keeps the
/// mode's own defaults for the rest.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingOverrides {
    pub symbol_period: Option<f64>,
    pub preamble_slots: Option<usize>,
    pub guard: Option<f64>,
    pub overhead: Option<f64>,
}

/// Partial configuration as read from JSON config files and session
/// requests. Nested physics blocks fall back to defaults field by field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub mode: Option<Mode>,
    pub message: Option<String>,
    pub channel: Option<ChannelParams>,
    pub geometry: Option<Geometry2x2>,
    pub timing: Option<TimingOverrides>,
    pub sensor: Option<SensorParams>,
    pub detection: Option<DetectionConfig>,
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    pub particles: Option<usize>,
    pub ili_cancellation: Option<bool>,
    pub tx_start: Option<f64>,
}

impl ConfigOverrides {
    /// Resolves against the defaults of the overridden mode (MIMO if unset).
    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::from_overrides(self.mode.unwrap_or(Mode::Mimo), self)
    }

    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = &self.message {
            cfg.message = m.clone();
        }
        if let Some(c) = self.channel {
            cfg.channel = c;
        }
        if let Some(g) = self.geometry {
            cfg.geometry = g;
        }
        if let Some(t) = self.timing {
            let tc = &mut cfg.timing;
            tc.symbol_period = t.symbol_period.unwrap_or(tc.symbol_period);
            tc.preamble_slots = t.preamble_slots.unwrap_or(tc.preamble_slots);
            tc.guard = t.guard.unwrap_or(tc.guard);
            tc.overhead = t.overhead.unwrap_or(tc.overhead);
        }
        if let Some(s) = self.sensor {
            cfg.sensor = s;
        }
        if let Some(d) = self.detection {
            cfg.detection = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = self.backend {
            cfg.backend = b;
        }
        if let Some(n) = self.particles {
            cfg.particles = n;
        }
        if let Some(on) = self.ili_cancellation {
            cfg.ili_cancellation = on;
        }
        if let Some(t) = self.tx_start {
            cfg.tx_start = t;
        }
    }
}

/// Outcome of one link run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub mode: Mode,
    pub seed: u64,
    pub backend: Backend,
    pub message_sent: String,
    pub message_decoded: String,
    /// Characters decoded at each active receiver.
    pub per_receiver: Vec<String>,
    /// Frame air time `B·T_s + O` in simulated seconds.
    pub air_time_s: f64,
    pub payload_bits: usize,
    pub data_rate_bps: f64,
    /// `data_rate_bps` rounded half-up to two decimals.
    pub data_rate_bps_rounded: f64,
    pub bit_errors: usize,
    pub char_errors: usize,
    pub ber: f64,
    pub cer: f64,
    pub frame_start_s: f64,
    pub ili_gains: Option<IliGains>,
    /// Why cancellation was skipped in a MIMO run that asked for it.
    pub ili_error: Option<String>,
    /// Set when a stream lacked its end indicator and was decoded leniently.
    pub decode_error: Option<String>,
    pub schedule: Vec<SprayRecord>,
    /// Payload slot decisions per active receiver.
    pub slots: Vec<Vec<SlotDecision>>,
    pub trace_grid: TimeGrid,
    /// Raw sensor voltages per active receiver on `trace_grid`.
    pub voltages: Vec<Vec<f64>>,
    /// Length of the simulated observation window.
    pub sim_duration_s: f64,
}

impl LinkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub siso: LinkReport,
    pub mimo: LinkReport,
    /// MIMO rate over SISO rate, unrounded.
    pub rate_ratio: f64,
}

/// Half-up rounding to two decimals.
pub fn round_rate(x: f64) -> f64 {
    // The nudge keeps values like 0.125 (stored as 0.12499…) rounding up.
    ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0
}

/// Time of the analytical peak of the tx0→rx0 response.
fn peak_arrival(g: &Geometry2x2, p: &ChannelParams, dt: f64) -> f64 {
    let r = sub(g.rx[0], g.tx[0]);
    let unit = p.with_molecules(1.0);
    let steps = (PEAK_SEARCH_HORIZON / dt) as usize;
    let mut best = (0.0, dt);
    for i in 1..=steps {
        let t = i as f64 * dt;
        let c = impulse_concentration(r, t, &unit).unwrap_or(0.0);
        if c > best.0 {
            best = (c, t);
        }
    }
    best.1
}

fn simulation_grid(cfg: &RunConfig, slots: usize) -> Result<TimeGrid> {
    let dt = 1.0 / cfg.sensor.sample_rate;
    let settle = peak_arrival(&cfg.geometry, &cfg.channel, dt)
        + 2.0 * cfg.timing.symbol_period
        + SETTLE_MARGIN;
    let duration = cfg.tx_start + slots as f64 * cfg.timing.symbol_period + settle;
    TimeGrid::new(0.0, dt, (duration / dt).ceil() as usize + 1)
}

/// Monte-Carlo estimate of the impulse matrix. Particles are only tracked
/// until every analytical response has decayed below 1e-9 of its peak; the
/// rest of the grid is zero.
fn mc_impulse_matrix(cfg: &RunConfig, analytical: &ImpulseMatrix) -> Result<ImpulseMatrix> {
    let grid = analytical.grid();
    let mut horizon = 1;
    for rx in 0..2 {
        for tx in 0..2 {
            let h = analytical.response(rx, tx);
            let peak = h.iter().copied().fold(0.0, f64::max);
            let (argmax, _) =
                h.iter().enumerate().fold(
                    (0, 0.0),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
            let tail = h[argmax..]
                .iter()
                .position(|&v| v < 1e-9 * peak)
                .map_or(grid.count, |k| argmax + k + 1);
            horizon = horizon.max(tail);
        }
    }
    let short = TimeGrid::new(grid.start, grid.dt, horizon.min(grid.count))?;
    let unit = cfg.channel.with_molecules(1.0);
    let mut cols = Vec::with_capacity(2);
    for tx in 0..2 {
        let burst = [SprayRecord {
            link: tx,
            time: 0.0,
            molecules: 1.0,
        }];
        let traces = simulate_particles(
            &burst,
            &cfg.geometry,
            &unit,
            short,
            cfg.particles,
            derive_seed(cfg.seed, 200 + tx as u64),
        )?;
        cols.push(traces.map(|t| {
            let mut v = t.values;
            v.resize(grid.count, 0.0);
            v
        }));
    }
    let [c0r0, c0r1] = cols.remove(0);
    let [c1r0, c1r1] = cols.remove(0);
    ImpulseMatrix::from_responses(grid, [[c0r0, c1r0], [c0r1, c1r1]])
}

/// Noiseless in-slot rise of one isolated burst at rx0 under `cfg`, the
/// reference for expressing noise levels.
pub fn nominal_signal_rise(cfg: &RunConfig) -> Result<f64> {
    let mut solo = cfg.clone();
    solo.mode = Mode::Siso;
    let grid = simulation_grid(&solo, 1)?;
    let m = channel_impulse_matrix(&cfg.geometry, &cfg.channel, grid)?;
    let burst = [SprayRecord {
        link: 0,
        time: cfg.tx_start,
        molecules: cfg.channel.molecules_per_burst,
    }];
    let c = synthesize_traces(&burst, &m)?;
    let v = sense(&c[0], &cfg.sensor.noiseless(), 0)?;
    Ok(v.values.iter().copied().fold(0.0, f64::max))
}

fn count_char_errors(sent: &str, decoded: &str) -> usize {
    let a: Vec<char> = sent.chars().collect();
    let b: Vec<char> = decoded.chars().collect();
    (0..a.len().max(b.len()))
        .filter(|&i| a.get(i) != b.get(i))
        .count()
}

/// Runs one frame through the whole link.
pub fn run_link(cfg: &RunConfig) -> Result<LinkReport> {
    cfg.validate()?;
    let frame = encode_text(&cfg.message, cfg.mode)?;
    let links = cfg.mode.streams();
    let timing = &cfg.timing;

    let slot_bits: Vec<Vec<bool>> = (0..links)
        .map(|j| {
            let mut s = preamble_pattern(j, links, timing);
            s.extend_from_slice(&frame.streams[j]);
            s
        })
        .collect();
    let total_slots = slot_bits.iter().map(Vec::len).max().unwrap_or(0);
    let schedule = modulate(
        &slot_bits,
        cfg.tx_start,
        timing,
        cfg.channel.molecules_per_burst,
    );

    let grid = simulation_grid(cfg, total_slots)?;
    let model = channel_impulse_matrix(&cfg.geometry, &cfg.channel, grid)?;
    let channel = match cfg.backend {
        Backend::Analytical => model.clone(),
        Backend::MonteCarlo => mc_impulse_matrix(cfg, &model)?,
    };
    let conc: [ConcentrationTrace; 2] = synthesize_traces(&schedule, &channel)?;
    let volts: Vec<VoltageTrace> = (0..links)
        .map(|rx| {
            sense(
                &conc[rx],
                &cfg.sensor,
                derive_seed(cfg.seed, 100 + rx as u64),
            )
        })
        .collect::<Result<_>>()?;

    // Both sensors feed one receiver, so the earliest start indicator
    // anchors the slot grid for both.
    let frame_start = volts
        .iter()
        .map(|v| detect_preamble(v, timing, &cfg.detection))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    let detect = |v: &VoltageTrace, rx: usize| {
        detect_bits(
            v,
            frame_start,
            frame.streams[rx].len(),
            timing,
            &cfg.detection,
        )
    };
    let mut detections = volts
        .iter()
        .enumerate()
        .map(|(rx, v)| detect(v, rx))
        .collect::<Result<Vec<_>>>()?;

    let mut ili_gains = None;
    let mut ili_error = None;
    let gains = if links == 2 && cfg.ili_cancellation {
        // Without a usable pilot the receiver keeps its uncancelled decisions.
        estimate_cross_gain([&volts[0], &volts[1]], frame_start, timing, &cfg.detection)
            .map_err(|e| ili_error = Some(e.to_string()))
            .ok()
    } else {
        None
    };
    if let Some(gains) = gains {
        let estimates = reconstruct_own_signals(
            &model,
            &cfg.sensor,
            timing,
            &cfg.detection,
            cfg.channel.molecules_per_burst,
            [&detections[0].bits, &detections[1].bits],
            frame_start,
        )?;
        let cleaned = cancel_ili(
            [&volts[0], &volts[1]],
            &gains,
            [&estimates[0], &estimates[1]],
        )?;
        detections = cleaned
            .iter()
            .enumerate()
            .map(|(rx, v)| detect(v, rx))
            .collect::<Result<Vec<_>>>()?;
        ili_gains = Some(gains);
    }

    let detected: Vec<Vec<bool>> = detections.iter().map(|d| d.bits.clone()).collect();
    let (message_decoded, per_receiver, decode_error) = match decode_text(&detected, cfg.mode) {
        Ok(text) => {
            let per = detected.iter().map(|b| decode_stream_lossy(b).0).collect();
            (text, per, None)
        }
        Err(e) => {
            let per: Vec<String> = detected.iter().map(|b| decode_stream_lossy(b).0).collect();
            (interleave(&per), per, Some(e.to_string()))
        }
    };

    let bit_errors = (0..links)
        .map(|s| {
            let n = frame.stream_payload_bits(s);
            frame.streams[s][..n]
                .iter()
                .zip(&detected[s][..n])
                .filter(|(a, b)| a != b)
                .count()
        })
        .sum();
    let message_sent = frame.stream_chars.to_vec();
    let message_sent = interleave(&message_sent);
    let char_errors = count_char_errors(&message_sent, &message_decoded);

    let air_time_s = frame_air_time(&frame, timing);
    let data_rate_bps = frame.payload_bits as f64 / air_time_s;

    Ok(LinkReport {
        mode: cfg.mode,
        seed: cfg.seed,
        backend: cfg.backend,
        message_sent,
        message_decoded,
        per_receiver,
        air_time_s,
        payload_bits: frame.payload_bits,
        data_rate_bps,
        data_rate_bps_rounded: round_rate(data_rate_bps),
        bit_errors,
        char_errors,
        ber: bit_errors as f64 / frame.payload_bits as f64,
        cer: char_errors as f64 / frame.char_count as f64,
        frame_start_s: frame_start,
        ili_gains,
        ili_error,
        decode_error,
        schedule,
        slots: detections.into_iter().map(|d| d.slots).collect(),
        trace_grid: volts[0].grid,
        voltages: volts.into_iter().map(|v| v.values).collect(),
        sim_duration_s: grid.end(),
    })
}

/// Runs two arbitrary configurations and reports the rate ratio `b / a`.
pub fn compare_configs(a: &RunConfig, b: &RunConfig) -> Result<ComparisonReport> {
    let siso = run_link(a)?;
    let mimo = run_link(b)?;
    let rate_ratio = mimo.data_rate_bps / siso.data_rate_bps;
    Ok(ComparisonReport {
        siso,
        mimo,
        rate_ratio,
    })
}

/// Sends `message` once in each mode over the same channel seed.
pub fn compare_modes(
    message: &str,
    overrides: &ConfigOverrides,
    seed: u64,
) -> Result<ComparisonReport> {
    let o = ConfigOverrides {
        message: Some(message.to_string()),
        seed: Some(seed),
        ..overrides.clone()
    };
    let siso = RunConfig::from_overrides(Mode::Siso, &o)?;
    let mimo = RunConfig::from_overrides(Mode::Mimo, &o)?;
    compare_configs(&siso, &mimo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub mode: Mode,
    pub ber: f64,
    pub cer: f64,
    pub median_ber: f64,
    pub median_cer: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Error rates per noise level and mode, averaged over `reps` seeds
/// `base.seed, base.seed + 1, …`. Levels are sensor noise σ in volts.
pub fn sweep_noise(levels: &[f64], reps: usize, base: &ConfigOverrides) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;

    if levels.is_empty() || reps == 0 {
        return Err(Error::InvalidSweep);
    }
    let mut rows = Vec::with_capacity(levels.len() * 2);
    for &sigma in levels {
        for mode in [Mode::Siso, Mode::Mimo] {
            let mut cfg = RunConfig::from_overrides(mode, base)?;
            cfg.sensor.noise_sigma = sigma;
            cfg.validate()?;
            let seed0 = cfg.seed;
            let results = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut c = cfg.clone();
                    c.seed = seed0.wrapping_add(r);
                    run_link(&c).map(|rep| (rep.ber, rep.cer))
                })
                .collect::<Result<Vec<_>>>()?;
            let bers: Vec<f64> = results.iter().map(|r| r.0).collect();
            let cers: Vec<f64> = results.iter().map(|r| r.1).collect();
            rows.push(SweepRow {
                sigma,
                mode,
                ber: bers.iter().sum::<f64>() / reps as f64,
                cer: cers.iter().sum::<f64>() / reps as f64,
                median_ber: median(&bers),
                median_cer: median(&cers),
            });
        }
    }
    Ok(rows)
}

/// Sweep table as CSV with header `sigma,mode,ber,cer`.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "sigma,mode,ber,cer")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.sigma, r.mode, r.ber, r.cer)?;
    }
    Ok(())
}

/// Agreement between the particle simulator and the closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelValidation {
    pub particles: usize,
    pub seeds: Vec<u64>,
    pub analytical_peak: f64,
    pub mc_peaks: Vec<f64>,
    pub median_peak_error: f64,
    pub mass_time_s: f64,
    pub mass_integral: f64,
    pub mass_error: f64,
}

/// Compares the Monte-Carlo and analytical peak concentration of a unit burst
/// from tx0 at rx0, and integrates the closed form over space at the peak
/// time.
pub fn validate_channel(
    g: &Geometry2x2,
    p: &ChannelParams,
    particles: usize,
    seeds: &[u64],
) -> Result<ChannelValidation> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed".into()));
    }
    let dt = 0.1;
    let t_peak = peak_arrival(g, p, dt);
    let grid = TimeGrid::new(0.0, dt, ((2.0 * t_peak + 5.0) / dt).ceil() as usize)?;
    let unit = p.with_molecules(1.0);
    let m = channel_impulse_matrix(g, &unit, grid)?;
    let analytical_peak = m.trace(0, 0).peak();
    let burst = [SprayRecord {
        link: 0,
        time: 0.0,
        molecules: 1.0,
    }];
    let mc_peaks = seeds
        .iter()
        .map(|&s| simulate_particles(&burst, g, &unit, grid, particles, s).map(|t| t[0].peak()))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = mc_peaks
        .iter()
        .map(|x| (x - analytical_peak).abs() / analytical_peak)
        .collect();
    let mass = mass_integral(&unit, t_peak, 8.0)?;
    Ok(ChannelValidation {
        particles,
        seeds: seeds.to_vec(),
        analytical_peak,
        mc_peaks,
        median_peak_error: median(&errors),
        mass_time_s: t_peak,
        mass_integral: mass,
        mass_error: (mass - 1.0).abs(),
    })
}
