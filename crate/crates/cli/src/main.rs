use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use molmimo::channel::{ChannelParams, Geometry2x2};
use molmimo::harness::{
    compare_modes, nominal_signal_rise, run_link, sweep_noise, validate_channel, write_sweep_csv,
    Backend, ConfigOverrides, LinkReport, RunConfig, BALANCED_MESSAGE,
};
use molmimo::phy::write_slots_csv;
use molmimo::protocol::Mode;
use molmimo_service::ServiceConfig;

/// Simulated macroscale molecular MIMO link.
#[derive(Debug, Parser)]
#[command(name = "molmimo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Send one message over a SISO or MIMO link and print the JSON report.
    Run(RunArgs),
    /// Send a message in both modes and report the data-rate ratio.
    Compare(CompareArgs),
    /// Check the particle simulator against the closed-form channel.
    ValidateChannel(ValidateArgs),
    /// Error rates versus sensor noise, as CSV `sigma,mode,ber,cer`.
    Sweep(SweepArgs),
    /// Serve the live session API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON file with configuration overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    #[arg(long)]
    message: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Particles per burst for the Monte-Carlo backend.
    #[arg(long)]
    particles: Option<usize>,
    /// Sensor noise standard deviation in volts.
    #[arg(long)]
    noise: Option<f64>,
    /// Disable inter-link interference cancellation.
    #[arg(long)]
    no_ili: bool,
    /// Sensor voltage traces as CSV `t,rx0,rx1`.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Per-slot decisions as CSV `rx,slot,statistic,threshold,bit`.
    #[arg(long)]
    slots: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    message: String,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1_000_000)]
    particles: usize,
    /// Comma-separated particle seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated noise levels (volts, or fractions of the signal rise
    /// with --relative).
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<f64>,
    #[arg(long)]
    reps: usize,
    /// Interpret --sigmas as multiples of the nominal single-pulse rise.
    #[arg(long)]
    relative: bool,
    /// Defaults to the 30-character supported alphabet.
    #[arg(long)]
    message: Option<String>,
    /// First seed; repetitions use consecutive seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 60.0)]
    time_scale: f64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: molmimo::Error| e.to_string())
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: molmimo::Error| e.to_string())
}

fn load_overrides(path: Option<&Path>) -> Result<ConfigOverrides> {
    let Some(path) = path else {
        return Ok(ConfigOverrides::default());
    };
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_voltages_csv<W: Write>(mut w: W, r: &LinkReport) -> io::Result<()> {
    writeln!(w, "t,rx0,rx1")?;
    for i in 0..r.trace_grid.count {
        let col = |rx: usize| {
            r.voltages
                .get(rx)
                .map(|v| v[i].to_string())
                .unwrap_or_default()
        };
        writeln!(w, "{},{},{}", r.trace_grid.time(i), col(0), col(1))?;
    }
    Ok(())
}

fn summary(r: &LinkReport) {
    eprintln!(
        "{}: sent {:?} decoded {:?} {:?} | air time {:.1} s, {:.2} bps | {} bit / {} char errors",
        r.mode,
        r.message_sent,
        r.message_decoded,
        r.per_receiver,
        r.air_time_s,
        r.data_rate_bps_rounded,
        r.bit_errors,
        r.char_errors
    );
}

fn run(a: RunArgs) -> Result<()> {
    let mut o = load_overrides(a.common.config.as_deref())?;
    o.mode = Some(a.mode);
    o.message = Some(a.message);
    o.seed = Some(a.seed);
    o.backend = a.backend.or(o.backend);
    o.particles = a.particles.or(o.particles);
    if a.no_ili {
        o.ili_cancellation = Some(false);
    }
    let mut cfg = RunConfig::from_overrides(a.mode, &o)?;
    if let Some(sigma) = a.noise {
        cfg.sensor.noise_sigma = sigma;
        cfg.validate()?;
    }
    let report = run_link(&cfg)?;
    summary(&report);
    if let Some(p) = &a.traces {
        write_voltages_csv(output(Some(p))?, &report)?;
    }
    if let Some(p) = &a.slots {
        write_slots_csv(output(Some(p))?, &report.slots)?;
    }
    let mut w = output(a.common.out.as_deref())?;
    writeln!(w, "{}", report.to_json())?;
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let o = load_overrides(a.common.config.as_deref())?;
    let c = compare_modes(&a.message, &o, a.seed)?;
    summary(&c.siso);
    summary(&c.mimo);
    eprintln!("rate ratio MIMO/SISO: {:.4}", c.rate_ratio);
    let mut w = output(a.common.out.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&c)?)?;
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let o = load_overrides(a.common.config.as_deref())?;
    let g: Geometry2x2 = o.geometry.unwrap_or_default();
    let p: ChannelParams = o.channel.unwrap_or_default();
    let v = validate_channel(&g, &p, a.particles, &a.seeds)?;
    eprintln!(
        "peak error (median of {}): {:.3}% | mass integral at t={:.1} s: {:.6} Q",
        v.seeds.len(),
        100.0 * v.median_peak_error,
        v.mass_time_s,
        v.mass_integral
    );
    let mut w = output(a.common.out.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&v)?)?;
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut o = load_overrides(a.common.config.as_deref())?;
    o.message = a
        .message
        .or(o.message)
        .or_else(|| Some(BALANCED_MESSAGE.to_string()));
    o.seed = a.seed.or(o.seed);
    let levels = if a.relative {
        let rise = nominal_signal_rise(&RunConfig::from_overrides(Mode::Siso, &o)?)?;
        a.sigmas.iter().map(|f| f * rise).collect()
    } else {
        a.sigmas.clone()
    };
    if levels.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        bail!("noise levels must be finite and non-negative");
    }
    let rows = sweep_noise(&levels, a.reps, &o)?;
    write_sweep_csv(output(a.common.out.as_deref())?, &rows)?;
    Ok(())
}

async fn serve(a: ServeArgs) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(&a.addr)
        .await
        .with_context(|| format!("binding {}", a.addr))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let config = ServiceConfig {
        time_scale: a.time_scale,
        ..ServiceConfig::default()
    };
    molmimo_service::serve(listener, config).await?;
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::ValidateChannel(a) => validate(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()
            .map_err(Into::into)
            .and_then(|rt| rt.block_on(serve(a))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
