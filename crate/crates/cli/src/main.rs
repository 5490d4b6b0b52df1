//! `satrace`: plaintext generation, leaky-target simulation, VCD trace
//! extraction and CPA.

mod files;
mod report;

use std::fs::File;
use std::io::BufReader;
use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use satrace::activity::{extract_traces, segment, ClockEdge, ExtractionConfig, Metric};
use satrace::aes::AesKey128;
use satrace::cpa::{attack, LeakageModel};
use satrace::store::TraceSet;
use satrace::synth::{
    gen_plaintexts, simulate, write_vcd, LeakConfig, LeakModel, PlaintextMode, PlaintextSpec,
};
use satrace::vcd::XzPolicy;

/// Exit status of `attack` when a known key byte is not ranked first.
const EXIT_NOT_RECOVERED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "satrace",
    version,
    about = "Switching-activity power analysis of AES"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write 16-byte plaintext records.
    GenPlaintexts(GenArgs),
    /// Simulate the leaky AES target and store its traces.
    Simulate(SimArgs),
    /// Turn a VCD into a trace set.
    Extract(ExtractArgs),
    /// Run CPA on a trace set and write a report directory.
    Attack(AttackArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Structured,
    Random,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "structured")]
    mode: Mode,
    #[arg(long, default_value_t = 3000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First counter value in structured mode.
    #[arg(long, default_value_t = 0)]
    counter_start: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimModel {
    Hw,
    Hd,
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long)]
    plaintexts: PathBuf,
    #[arg(long, value_parser = parse_key)]
    key: AesKey128,
    /// Standard deviation of the Gaussian noise, in bit flips.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Mean unrelated bit flips per cycle.
    #[arg(long, default_value_t = 1.0)]
    ambient: f64,
    #[arg(long, default_value_t = 150)]
    cycles_per_op: usize,
    /// Cycle of byte 0's leak within each operation.
    #[arg(long, default_value_t = 20)]
    leak_offset: usize,
    #[arg(long, value_enum, default_value = "hw")]
    leak_model: SimModel,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the execution as a VCD.
    #[arg(long)]
    emit_vcd: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EdgeArg {
    Rising,
    Falling,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Hd,
    Hw,
}

#[derive(Clone, Copy, ValueEnum)]
enum XzArg {
    /// Transitions involving x or z are not counted.
    Zero,
    /// Any change of a bit's state is counted.
    Flip,
}

#[derive(clap::Args)]
struct ExtractArgs {
    #[arg(long)]
    vcd: PathBuf,
    /// Hierarchical name, identifier code, or trailing name of the clock.
    #[arg(long, default_value = "clk")]
    clock: String,
    #[arg(long, value_enum, default_value = "rising")]
    edge: EdgeArg,
    #[arg(long, value_enum, default_value = "hd")]
    metric: MetricArg,
    /// Cycle range A:B (half-open); whole file when omitted.
    #[arg(long, value_parser = parse_window)]
    window: Option<Range<usize>>,
    #[arg(long)]
    plaintexts: PathBuf,
    /// Known key to store with the traces.
    #[arg(long, value_parser = parse_key)]
    key: Option<AesKey128>,
    /// Only measure signals whose hierarchical name matches (repeatable).
    #[arg(long)]
    include: Vec<String>,
    /// Never measure signals whose hierarchical name matches (repeatable).
    #[arg(long)]
    exclude: Vec<String>,
    #[arg(long, value_enum, default_value = "zero")]
    xz: XzArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct AttackArgs {
    #[arg(long)]
    traceset: PathBuf,
    /// `A..B` (inclusive), a comma-separated list, or `all`.
    #[arg(long, default_value = "0..15", value_parser = parse_bytes)]
    bytes: ByteList,
    /// hw, hd or bit:K
    #[arg(long, default_value = "hw", value_parser = LeakageModel::from_str)]
    model: LeakageModel,
    /// Sample range A:B (half-open), clamped to the trace length.
    #[arg(long, default_value = "0:10000", value_parser = parse_window)]
    window: Range<usize>,
    #[arg(long)]
    report: PathBuf,
    /// Also write SVG line plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Clone)]
struct ByteList(Vec<usize>);

fn parse_key(s: &str) -> Result<AesKey128, String> {
    s.parse().map_err(|e| format!("invalid key: {e}"))
}

fn parse_window(s: &str) -> Result<Range<usize>, String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: usize = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if a >= b {
        return Err(format!("empty window {a}:{b}"));
    }
    Ok(a..b)
}

fn parse_bytes(s: &str) -> Result<ByteList, String> {
    let check = |b: usize| {
        if b < 16 {
            Ok(b)
        } else {
            Err(format!("byte index {b} out of range 0..15"))
        }
    };
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t}: {e}"));
    if s == "all" {
        return Ok(ByteList((0..16).collect()));
    }
    let mut out = Vec::new();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (check(num(a)?)?, check(num(b.trim_start_matches('='))?)?);
        if a > b {
            return Err(format!("empty byte range {s}"));
        }
        out.extend(a..=b);
    } else {
        for t in s.split(',') {
            let b = check(num(t)?)?;
            if !out.contains(&b) {
                out.push(b);
            }
        }
    }
    Ok(ByteList(out))
}

fn gen_cmd(a: GenArgs) -> Result<()> {
    let mode = match a.mode {
        Mode::Structured => PlaintextMode::Structured,
        Mode::Random => PlaintextMode::UniformRandom,
    };
    let spec = PlaintextSpec {
        mode,
        count: a.count,
        seed: a.seed,
        counter_range: a.counter_start..a.counter_start.saturating_add(3000),
    };
    let pts = gen_plaintexts(&spec)?;
    files::write_plaintexts(&a.out, &pts)?;
    info!("wrote {} plaintexts to {}", pts.len(), a.out.display());
    Ok(())
}

fn sim_cmd(a: SimArgs) -> Result<()> {
    let pts = files::read_plaintexts(&a.plaintexts)?;
    let cfg = LeakConfig {
        leak_model: match a.leak_model {
            SimModel::Hw => LeakModel::HwOfSboxOut,
            SimModel::Hd => LeakModel::HdSboxInToSboxOut,
        },
        cycles_per_op: a.cycles_per_op,
        leak_cycle_offset: a.leak_offset,
        noise_sigma: a.noise,
        ambient_activity: a.ambient,
        seed: a.seed,
    };
    let sim = simulate(&pts, &a.key, &cfg)?;
    info!(
        "simulated {} operations of {} cycles",
        sim.traces.n_traces(),
        sim.traces.n_samples()
    );
    TraceSet::new(sim.traces, pts.clone(), Some(a.key))?
        .write_file(&a.out)
        .with_context(|| format!("cannot write {}", a.out.display()))?;
    if let Some(path) = &a.emit_vcd {
        files::write_atomic(path, |w| Ok(write_vcd(&pts, &a.key, &cfg, w)?))?;
        info!("wrote VCD to {}", path.display());
    }
    Ok(())
}

fn extract_cmd(a: ExtractArgs) -> Result<()> {
    let pts = files::read_plaintexts(&a.plaintexts)?;
    if pts.is_empty() {
        bail!("{} holds no plaintexts", a.plaintexts.display());
    }
    let window = a
        .window
        .map_or(0..u64::MAX, |w| w.start as u64..w.end as u64);
    let mut cfg = ExtractionConfig::new(a.clock)
        .with_window(window)
        .with_edge(match a.edge {
            EdgeArg::Rising => ClockEdge::Rising,
            EdgeArg::Falling => ClockEdge::Falling,
        })
        .with_metric(match a.metric {
            MetricArg::Hd => Metric::Hd,
            MetricArg::Hw => Metric::Hw,
        })
        .with_xz_policy(match a.xz {
            XzArg::Zero => XzPolicy::CountAsZeroFlip,
            XzArg::Flip => XzPolicy::CountAsFlip,
        });
    for p in &a.include {
        cfg = cfg.include(p)?;
    }
    for p in &a.exclude {
        cfg = cfg.exclude(p)?;
    }
    let file = File::open(&a.vcd).with_context(|| format!("cannot open {}", a.vcd.display()))?;
    let trace = extract_traces(BufReader::with_capacity(1 << 16, file), &cfg)
        .with_context(|| format!("extracting {}", a.vcd.display()))?;
    info!("extracted {} cycles", trace.len());
    let traces = segment(&trace, pts.len())?;
    TraceSet::new(traces, pts, a.key)?
        .write_file(&a.out)
        .with_context(|| format!("cannot write {}", a.out.display()))?;
    Ok(())
}

/// Returns whether every known key byte came out on top.
fn attack_cmd(a: AttackArgs) -> Result<bool> {
    let set = TraceSet::read_file(&a.traceset)
        .with_context(|| format!("cannot read {}", a.traceset.display()))?;
    let n_samples = set.traces().n_samples();
    if a.window.start >= n_samples {
        bail!(
            "window {}:{} starts beyond the {n_samples} samples per trace",
            a.window.start,
            a.window.end
        );
    }
    let window = a.window.start..a.window.end.min(n_samples);
    if window != a.window {
        warn!("window clamped to {}:{}", window.start, window.end);
    }
    let key = set.key().map(|k| k.0);
    let result = attack(
        set.traces(),
        set.plaintexts(),
        &a.bytes.0,
        a.model,
        window.clone(),
        key.as_ref(),
    )?;
    for r in &result.bytes {
        match r.true_rank {
            Some(rank) => info!(
                "byte {:2}: best {:02x}, true key rank {rank}",
                r.byte_index, r.best_guess
            ),
            None => info!("byte {:2}: best {:02x}", r.byte_index, r.best_guess),
        }
    }
    report::write_report(
        &a.report,
        &report::ReportInput {
            result: &result,
            window,
            trace_summary: &set.traces().column_summary(),
            key_known: key.is_some(),
            svg: a.svg,
        },
    )?;
    Ok(result.all_recovered().unwrap_or(true))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenPlaintexts(a) => gen_cmd(a).map(|_| true),
        Command::Simulate(a) => sim_cmd(a).map(|_| true),
        Command::Extract(a) => extract_cmd(a).map(|_| true),
        Command::Attack(a) => attack_cmd(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("satrace: key not fully recovered");
            ExitCode::from(EXIT_NOT_RECOVERED)
        }
        Err(e) => {
            eprintln!("satrace: {e:#}");
            ExitCode::FAILURE
        }
    }
}
