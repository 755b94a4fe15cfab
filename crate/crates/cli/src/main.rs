//! tdcs — scenario runner for the two-rate transmission/distribution
//! co-simulation engine.
//!
//! `run` simulates one scenario, writes the fine/coarse/verdict CSV traces,
//! and scores the run against its matched-timestep reference. `compare`
//! sweeps every method x detector combination, optionally across exchange
//! ratios (t_t kept, t_d refined), each scored against a matched-timestep
//! reference; `--bench` instead times per-call prediction cost.
//! `serve-tx` / `serve-dx` run the two halves as separate processes over
//! the binary lockstep protocol.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::fmt::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tdcs_core::anomaly::Scheme;
use tdcs_core::config::ScenarioConfig;
use tdcs_core::cosim::{ground_truth_config, run};
use tdcs_core::extrap::{ExtrapolatorState, Method};
use tdcs_core::metrics::{mape, nmae, MetricError};
use tdcs_core::trace::{
    fmt_g12, write_coarse_csv, write_fine_csv, write_verdicts_csv, RunTrace,
};
use tdcs_core::wire::{run_dx_node, run_tx_node_on};

// ---------------------------------------------------------------------------
// Arguments
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "tdcs",
    version,
    about = "Two-rate transmission/distribution co-simulation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario; write CSV traces and a summary scored against the
    /// matched-timestep reference.
    Run(RunArgs),
    /// Sweep method x detector combinations (and optionally exchange
    /// ratios) against one shared reference run.
    Compare(CompareArgs),
    /// Run the transmission half of a two-process session.
    ServeTx(ServeTxArgs),
    /// Run the distribution half of a two-process session.
    ServeDx(ServeDxArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's extrapolation method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Override the scenario's detector scheme.
    #[arg(long, value_enum)]
    detector: Option<DetectorArg>,
    /// Force the matched-timestep reference run (t_t = t_d).
    #[arg(long)]
    ground_truth: bool,
    /// Output directory (defaults to the scenario's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Exchange ratios to sweep; t_t is kept and t_d = t_t / ratio.
    #[arg(long, value_delimiter = ',')]
    ratios: Vec<u32>,
    /// Benchmark per-call prediction cost of each method instead of
    /// running simulations.
    #[arg(long)]
    bench: bool,
    /// Output directory (defaults to the scenario's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeTxArgs {
    /// Scenario JSON file; must match the peer's.
    #[arg(long)]
    scenario: PathBuf,
    /// Address to listen on, e.g. 127.0.0.1:9000.
    #[arg(long)]
    listen: String,
    /// Output directory (defaults to the scenario's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeDxArgs {
    /// Scenario JSON file; must match the peer's.
    #[arg(long)]
    scenario: PathBuf,
    /// Transmission-node address to connect to.
    #[arg(long)]
    connect: String,
    /// Output directory (defaults to the scenario's output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Hold,
    Lpf,
    Linear,
    Quadratic,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Hold => Method::Hold,
            MethodArg::Lpf => Method::Lpf,
            MethodArg::Linear => Method::Linear,
            MethodArg::Quadratic => Method::Quadratic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    #[value(name = "static_normal", alias = "static")]
    StaticNormal,
    #[value(name = "moving_window", alias = "window")]
    MovingWindow,
    #[value(name = "ewma_rtta", alias = "ewma")]
    EwmaRtta,
}

impl From<DetectorArg> for Scheme {
    fn from(d: DetectorArg) -> Scheme {
        match d {
            DetectorArg::StaticNormal => Scheme::StaticNormal,
            DetectorArg::MovingWindow => Scheme::MovingWindow,
            DetectorArg::EwmaRtta => Scheme::EwmaRtta,
        }
    }
}

// ---------------------------------------------------------------------------
// Failure plumbing
// ---------------------------------------------------------------------------

struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn usage(err: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        err: err.into(),
    }
}

fn runtime(err: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        err: err.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::ServeTx(args) => cmd_serve_tx(args),
        Cmd::ServeDx(args) => cmd_serve_dx(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))
        .map_err(usage)?;
    let config: ScenarioConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing scenario {}", path.display()))
        .map_err(usage)?;
    config
        .validate()
        .with_context(|| format!("validating scenario {}", path.display()))
        .map_err(usage)?;
    Ok(config)
}

fn ensure_out_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(runtime)
}

fn simulate(config: &ScenarioConfig) -> Result<RunTrace, Failure> {
    run(config).map_err(|f| runtime(anyhow!("{f}")))
}

/// Per-sample reference series a run is scored against.
struct RefSeries {
    v: Vec<f64>,
    theta: Vec<f64>,
    f: Vec<f64>,
    p_dpv: Vec<f64>,
}

impl RefSeries {
    fn from_trace(trace: &RunTrace) -> Self {
        RefSeries {
            v: trace.fine_v_hat(),
            theta: trace.fine_theta_hat(),
            f: trace.fine_f_pcc(),
            p_dpv: trace.fine_p_dpv(),
        }
    }
}

/// MAPE and nMAE are undefined on series that touch zero; such metrics
/// are reported as absent rather than failing the run. Structural errors
/// (length mismatch, empty series) do abort.
fn opt_metric(result: Result<f64, MetricError>) -> Result<Option<f64>, Failure> {
    match result {
        Ok(x) => Ok(Some(x)),
        Err(MetricError::ZeroActual { .. }) | Err(MetricError::ZeroNormalization) => Ok(None),
        Err(e) => Err(runtime(anyhow!("{e}"))),
    }
}

#[derive(Serialize)]
struct Summary {
    scenario: String,
    method: Method,
    detector: Scheme,
    ground_truth: bool,
    ratio: u32,
    exchanges: usize,
    fine_steps: usize,
    /// Percent; absent when the series touches zero.
    mape_v_pct: Option<f64>,
    mape_theta_pct: Option<f64>,
    mape_f_pct: Option<f64>,
    /// Percent; absent when the reference series is identically zero.
    nmae_p_dpv_pct: Option<f64>,
    /// Delivered secondary response vs the request it tracked, within this
    /// run; 0 whenever every request stayed inside plant headroom.
    nmae_p_sfr_pct: Option<f64>,
    /// Proportion of non-outlier detector verdicts.
    stability: f64,
    outliers: usize,
    resets: usize,
}

fn build_summary(
    scenario: String,
    config: &ScenarioConfig,
    is_gt: bool,
    trace: &RunTrace,
    reference: &RefSeries,
) -> Result<Summary, Failure> {
    let outliers = trace.verdicts.iter().filter(|v| v.outlier).count();
    let stability = if trace.verdicts.is_empty() {
        1.0
    } else {
        1.0 - outliers as f64 / trace.verdicts.len() as f64
    };
    let requested: Vec<f64> = trace.fine.iter().map(|r| r.p_sfr_request).collect();
    let delivered: Vec<f64> = trace.fine.iter().map(|r| r.p_sfr).collect();
    Ok(Summary {
        scenario,
        method: config.method,
        detector: config.detector,
        ground_truth: is_gt,
        ratio: config.ratio(),
        exchanges: trace.coarse.len(),
        fine_steps: trace.fine.len(),
        mape_v_pct: opt_metric(mape(&reference.v, &trace.fine_v_hat()))?,
        mape_theta_pct: opt_metric(mape(&reference.theta, &trace.fine_theta_hat()))?,
        mape_f_pct: opt_metric(mape(&reference.f, &trace.fine_f_pcc()))?,
        nmae_p_dpv_pct: opt_metric(nmae(&reference.p_dpv, &trace.fine_p_dpv()).map(|x| x * 100.0))?,
        nmae_p_sfr_pct: opt_metric(nmae(&requested, &delivered).map(|x| x * 100.0))?,
        stability,
        outliers,
        resets: trace.reset_count(),
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(x) => fmt_g12(x),
        None => "n/a".into(),
    }
}

fn print_summary(s: &Summary) {
    println!("scenario            {}", s.scenario);
    println!("method              {}", s.method);
    println!("detector            {}", s.detector);
    println!("ground truth        {}", s.ground_truth);
    println!("ratio               {}", s.ratio);
    println!("exchanges           {}", s.exchanges);
    println!("fine steps          {}", s.fine_steps);
    println!("MAPE v (%)          {}", fmt_opt(s.mape_v_pct));
    println!("MAPE theta (%)      {}", fmt_opt(s.mape_theta_pct));
    println!("MAPE f (%)          {}", fmt_opt(s.mape_f_pct));
    println!("nMAE DPV output (%) {}", fmt_opt(s.nmae_p_dpv_pct));
    println!("nMAE SFR (%)        {}", fmt_opt(s.nmae_p_sfr_pct));
    println!("stability           {}", fmt_g12(s.stability));
    println!("outliers            {}", s.outliers);
    println!("resets              {}", s.resets);
}

fn write_trace_csvs(dir: &Path, trace: &RunTrace) -> Result<(), Failure> {
    ensure_out_dir(dir)?;
    write_fine_csv(&dir.join("fine.csv"), &trace.fine)
        .context("writing fine.csv")
        .map_err(runtime)?;
    write_coarse_csv(&dir.join("coarse.csv"), &trace.coarse)
        .context("writing coarse.csv")
        .map_err(runtime)?;
    write_verdicts_csv(&dir.join("verdicts.csv"), &trace.verdicts)
        .context("writing verdicts.csv")
        .map_err(runtime)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .context("serializing report")
        .map_err(runtime)?;
    text.push('\n');
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_scenario(&args.scenario)?;
    if let Some(m) = args.method {
        config.method = m.into();
    }
    if let Some(d) = args.detector {
        config.detector = d.into();
    }
    if let Some(dir) = args.out {
        config.output.dir = dir;
    }
    if args.ground_truth {
        config = ground_truth_config(&config);
    }
    config.validate().map_err(usage)?;

    let trace = simulate(&config)?;
    let is_gt = config.timesteps.t_t == config.timesteps.t_d;
    let reference = if is_gt {
        RefSeries::from_trace(&trace)
    } else {
        let gt_trace = simulate(&ground_truth_config(&config))?;
        RefSeries::from_trace(&gt_trace)
    };

    let summary = build_summary(
        args.scenario.display().to_string(),
        &config,
        is_gt,
        &trace,
        &reference,
    )?;
    let dir = config.output.dir.clone();
    write_trace_csvs(&dir, &trace)?;
    write_json(&dir.join("summary.json"), &summary)?;
    print_summary(&summary);
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CompareRow {
    ratio: u32,
    method: Method,
    detector: Scheme,
    mape_v_pct: Option<f64>,
    mape_theta_pct: Option<f64>,
    mape_f_pct: Option<f64>,
    nmae_p_dpv_pct: Option<f64>,
    nmae_p_sfr_pct: Option<f64>,
    stability: f64,
    outliers: usize,
    resets: usize,
    /// Percent reduction of frequency MAPE vs the Hold row with the same
    /// ratio and detector; 0 for the Hold rows themselves.
    improvement_f_pct: Option<f64>,
}

const ALL_METHODS: [Method; 4] = [Method::Hold, Method::Lpf, Method::Linear, Method::Quadratic];
const ALL_SCHEMES: [Scheme; 3] = [Scheme::StaticNormal, Scheme::MovingWindow, Scheme::EwmaRtta];

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let mut base = load_scenario(&args.scenario)?;
    if let Some(dir) = args.out {
        base.output.dir = dir;
    }
    if args.bench {
        return bench_methods(&base);
    }

    let ratios = if args.ratios.is_empty() {
        vec![base.ratio()]
    } else {
        args.ratios.clone()
    };

    let mut rows = Vec::new();
    for &ratio in &ratios {
        if ratio == 0 {
            return Err(usage(anyhow!("ratio must be positive")));
        }
        // The sweep keeps the coarse exchange interval and refines t_d, so
        // every ratio is scored against its own matched-timestep reference.
        let mut swept = base.clone();
        swept.timesteps.t_d = swept.timesteps.t_t / f64::from(ratio);
        swept
            .validate()
            .with_context(|| format!("ratio {ratio}"))
            .map_err(usage)?;
        let gt_trace = simulate(&ground_truth_config(&swept))?;
        let reference = RefSeries::from_trace(&gt_trace);
        drop(gt_trace);
        for method in ALL_METHODS {
            for detector in ALL_SCHEMES {
                let mut config = swept.clone();
                config.method = method;
                config.detector = detector;
                let trace = simulate(&config)?;
                let summary = build_summary(String::new(), &config, false, &trace, &reference)?;
                rows.push(CompareRow {
                    ratio,
                    method,
                    detector,
                    mape_v_pct: summary.mape_v_pct,
                    mape_theta_pct: summary.mape_theta_pct,
                    mape_f_pct: summary.mape_f_pct,
                    nmae_p_dpv_pct: summary.nmae_p_dpv_pct,
                    nmae_p_sfr_pct: summary.nmae_p_sfr_pct,
                    stability: summary.stability,
                    outliers: summary.outliers,
                    resets: summary.resets,
                    improvement_f_pct: None,
                });
            }
        }
    }

    // Improvement relative to the Hold baseline sharing ratio + detector.
    for i in 0..rows.len() {
        let (ratio, detector) = (rows[i].ratio, rows[i].detector);
        let hold_f = rows
            .iter()
            .find(|r| r.ratio == ratio && r.detector == detector && r.method == Method::Hold)
            .and_then(|r| r.mape_f_pct);
        rows[i].improvement_f_pct = match (hold_f, rows[i].mape_f_pct) {
            (Some(h), Some(m)) if h > 0.0 => Some((1.0 - m / h) * 100.0),
            _ => None,
        };
    }

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:>6} {:<10} {:<14} {:>14} {:>14} {:>14} {:>14} {:>11} {:>9} {:>8}",
        "ratio",
        "method",
        "detector",
        "MAPE_v_%",
        "MAPE_theta_%",
        "MAPE_f_%",
        "nMAE_DPV_%",
        "stability",
        "resets",
        "impr_f_%"
    );
    for r in &rows {
        let _ = writeln!(
            table,
            "{:>6} {:<10} {:<14} {:>14} {:>14} {:>14} {:>14} {:>11} {:>9} {:>8}",
            r.ratio,
            r.method.to_string(),
            r.detector.to_string(),
            fmt_opt(r.mape_v_pct),
            fmt_opt(r.mape_theta_pct),
            fmt_opt(r.mape_f_pct),
            fmt_opt(r.nmae_p_dpv_pct),
            fmt_g12(r.stability),
            r.resets,
            match r.improvement_f_pct {
                Some(x) => format!("{x:.2}"),
                None => "n/a".into(),
            }
        );
    }
    print!("{table}");

    let dir = base.output.dir.clone();
    ensure_out_dir(&dir)?;
    write_json(&dir.join("compare.json"), &rows)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BenchRow {
    method: Method,
    calls: u64,
    ns_per_call: f64,
}

/// Per-call prediction cost on a warm three-node buffer, amortized over a
/// fine-grid sweep like the one the engine performs between exchanges.
fn bench_methods(base: &ScenarioConfig) -> Result<(), Failure> {
    let t_t = base.timesteps.t_t;
    let t_d = base.timesteps.t_d;
    let r = base.ratio() as u64;
    let reps: u64 = 2000;
    let calls = reps * r;

    let mut rows = Vec::new();
    for method in ALL_METHODS {
        let mut ex = ExtrapolatorState::new(method, base.distribution.lpf_alpha, true);
        for k in 0..3 {
            let t = k as f64 * t_t;
            ex.push_sample(t, 1.0 + 0.01 * k as f64)
                .map_err(|e| runtime(anyhow!("{e}")))?;
        }
        let held = 1.02;
        let start = Instant::now();
        let mut acc = 0.0;
        for rep in 0..reps {
            let t0 = (3 + rep % 7) as f64 * t_t;
            for j in 0..r {
                let tau = t0 + j as f64 * t_d;
                acc += ex
                    .predict(std::hint::black_box(tau), std::hint::black_box(held))
                    .map_err(|e| runtime(anyhow!("{e}")))?;
            }
        }
        let elapsed = start.elapsed();
        std::hint::black_box(acc);
        rows.push(BenchRow {
            method,
            calls,
            ns_per_call: elapsed.as_nanos() as f64 / calls as f64,
        });
    }

    println!("{:<10} {:>12} {:>12}", "method", "calls", "ns/call");
    for row in &rows {
        println!(
            "{:<10} {:>12} {:>12.1}",
            row.method.to_string(),
            row.calls,
            row.ns_per_call
        );
    }
    let dir = base.output.dir.clone();
    ensure_out_dir(&dir)?;
    write_json(&dir.join("bench.json"), &rows)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

fn cmd_serve_tx(args: ServeTxArgs) -> Result<(), Failure> {
    let mut config = load_scenario(&args.scenario)?;
    if let Some(dir) = args.out {
        config.output.dir = dir;
    }
    let listener = TcpListener::bind(&args.listen)
        .with_context(|| format!("binding {}", args.listen))
        .map_err(runtime)?;
    println!(
        "listening on {}",
        listener.local_addr().map_err(runtime)?
    );
    // The peer needs the line before we block in accept().
    use std::io::Write as _;
    let _ = std::io::stdout().flush();

    let dir = config.output.dir.clone();
    match run_tx_node_on(listener, &config) {
        Ok(trace) => {
            ensure_out_dir(&dir)?;
            write_coarse_csv(&dir.join("coarse.csv"), &trace.coarse)
                .context("writing coarse.csv")
                .map_err(runtime)?;
            println!("session complete: {} coarse rows", trace.coarse.len());
            Ok(())
        }
        Err(failure) => {
            ensure_out_dir(&dir)?;
            write_coarse_csv(&dir.join("coarse.csv"), &failure.partial.coarse)
                .context("writing partial coarse.csv")
                .map_err(runtime)?;
            eprintln!(
                "partial trace: {} coarse rows written",
                failure.partial.coarse.len()
            );
            Err(runtime(anyhow!("{}", failure.error)))
        }
    }
}

fn cmd_serve_dx(args: ServeDxArgs) -> Result<(), Failure> {
    let mut config = load_scenario(&args.scenario)?;
    if let Some(dir) = args.out {
        config.output.dir = dir;
    }
    let dir = config.output.dir.clone();
    match run_dx_node(&config, &args.connect[..]) {
        Ok(trace) => {
            ensure_out_dir(&dir)?;
            write_fine_csv(&dir.join("fine.csv"), &trace.fine)
                .context("writing fine.csv")
                .map_err(runtime)?;
            write_verdicts_csv(&dir.join("verdicts.csv"), &trace.verdicts)
                .context("writing verdicts.csv")
                .map_err(runtime)?;
            println!("session complete: {} fine rows", trace.fine.len());
            Ok(())
        }
        Err(failure) => {
            ensure_out_dir(&dir)?;
            write_fine_csv(&dir.join("fine.csv"), &failure.partial.fine)
                .context("writing partial fine.csv")
                .map_err(runtime)?;
            write_verdicts_csv(&dir.join("verdicts.csv"), &failure.partial.verdicts)
                .context("writing partial verdicts.csv")
                .map_err(runtime)?;
            eprintln!(
                "partial trace: {} fine rows written",
                failure.partial.fine.len()
            );
            Err(runtime(anyhow!("{}", failure.error)))
        }
    }
}
