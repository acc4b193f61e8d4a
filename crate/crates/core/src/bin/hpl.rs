//! `hpl`: delay checks, horizons, datasets, closed-loop runs, margin reports
//! and benchmarks from a TOML config.
//!
//! Exit codes: 0 success, 1 config or usage, 2 assumption violation,
//! 3 numerical failure, 4 I/O.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hpl_core::bench::{bench_methods, gen_dataset, verify_dataset, write_bench_csv};
use hpl_core::config::{Config, ConfigError, HorizonMethod};
use hpl_core::delay::{check_assumptions, AssumptionReport, DelayParams, Sampler};
use hpl_core::margins::compute_margins;
use hpl_core::neural::OperatorWeights;
use hpl_core::scenario::{compute_horizon, require_assumptions, HorizonRequest, RunError, Scenario};

#[derive(Parser)]
#[command(name = "hpl", version, about = "Predictor feedback under time-varying delays")]
struct Cli {
    /// Worker threads for dataset generation and the oracle (default: logical
    /// cores). HPL_THREADS overrides this flag.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the configured delays for the invertibility assumptions.
    CheckDelay {
        config: PathBuf,
        #[arg(long = "T", default_value_t = 12.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        grid_step: f64,
        /// Also write the reports as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compute the prediction horizon of one delay; CSV `t,psi,residual`.
    Horizon {
        config: PathBuf,
        #[command(flatten)]
        h: HorizonArgs,
        #[arg(long = "T")]
        t_end: Option<f64>,
        /// Which configured delay to use.
        #[arg(long, default_value = "d1", value_parser = ["d1", "d2"])]
        delay: String,
        /// Output CSV (default: outputs.horizon_csv, else stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an oracle dataset container.
    GenDataset {
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resolution: Option<usize>,
        /// Output container (default: outputs.dataset).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop simulation; writes the trace CSV and prints the decay fit.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        h: HorizonArgs,
        /// Constant error added to the horizon.
        #[arg(long, allow_hyphen_values = true)]
        eps: Option<f64>,
        /// Trace CSV (default: outputs.trace_csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stability margin report for the configured plant and delays.
    Margins {
        config: PathBuf,
        /// Text report (default: outputs.margins_report, else stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV `eps,c1,c2,c3,c4` (default: outputs.margins_csv).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time the horizon methods on random admissible delays.
    Bench {
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<HorizonMethod>>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// CSV (default: outputs.bench_csv); always printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct HorizonArgs {
    #[arg(long, value_enum)]
    method: Option<HorizonMethod>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long = "window-H")]
    window_h: Option<f64>,
}

fn usage(message: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Invalid {
        field: "usage".into(),
        message: message.into(),
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn load_config(path: Option<&Path>) -> Result<Config, RunError> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn load_weights(path: &Path) -> Result<OperatorWeights, RunError> {
    Ok(OperatorWeights::load(path)?)
}

/// Resolves method, step and weights from flags over config.
fn horizon_settings(cfg: &Config, args: &HorizonArgs) -> Result<(HorizonMethod, f64, f64, Option<OperatorWeights>), RunError> {
    let method = args.method.unwrap_or(cfg.horizon.method);
    let weights_path = args.weights.as_ref().or(cfg.horizon.weights_path.as_ref());
    let weights = match (method, weights_path) {
        (HorizonMethod::Fno, None) => return Err(usage("--method fno requires --weights")),
        (HorizonMethod::Fno, Some(p)) => Some(load_weights(p)?),
        _ => None,
    };
    Ok((method, args.h.unwrap_or(cfg.horizon.h), args.window_h.unwrap_or(cfg.horizon.window_h), weights))
}

fn report_line(name: &str, r: &AssumptionReport) -> String {
    match r.first_violation_time {
        None => format!(
            "{name}: valid  pi0* = {:.6}  pi1* = {:.6}  pi2* = {:.6}  pi3* = {:.6}  max D = {:.6}",
            r.pi0_star,
            r.pi1_star,
            r.pi2_star,
            r.pi3_star,
            r.max_delay()
        ),
        Some(t) => format!("{name}: VIOLATION at t = {t}  (min D = {:.6}, min phi' = {:.6})", r.pi0_star, r.pi2_star),
    }
}

fn check_delay(config: &Path, t_end: f64, grid_step: f64, csv_path: Option<&Path>) -> Result<(), RunError> {
    if !(t_end > 0.0 && grid_step > 0.0) {
        return Err(usage("--T and --grid-step must be positive"));
    }
    let cfg = Config::load(config)?;
    let d = cfg.delays()?;
    let mut rows = vec![("d1", check_assumptions(&d.d1, t_end, grid_step))];
    if let Some(d2) = d.d2 {
        rows.push(("d2", check_assumptions(&d2, t_end, grid_step)));
    }
    for (name, r) in &rows {
        println!("{}", report_line(name, r));
    }
    if let Some(p) = csv_path {
        let mut w = csv::Writer::from_writer(create(p)?);
        let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
            w.write_record(["delay", "pi0_star", "pi1_star", "pi2_star", "pi3_star", "valid", "first_violation_time"])?;
            for (name, r) in &rows {
                w.write_record([
                    name.to_string(),
                    r.pi0_star.to_string(),
                    r.pi1_star.to_string(),
                    r.pi2_star.to_string(),
                    r.pi3_star.to_string(),
                    r.valid.to_string(),
                    r.first_violation_time.map(|t| t.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
            Ok(())
        };
        write(&mut w).map_err(|e| io_err(p, e))?;
    }
    match rows.iter().find(|(_, r)| !r.valid) {
        Some((name, r)) => Err(RunError::Assumption(format!(
            "delays.{name} violates the assumptions at t = {}",
            r.first_violation_time.unwrap_or(f64::NAN)
        ))),
        None => Ok(()),
    }
}

fn horizon(config: &Path, args: &HorizonArgs, t_end: Option<f64>, which: &str, out: Option<&Path>) -> Result<(), RunError> {
    let cfg = Config::load(config)?;
    let (d1, d2) = cfg.delay_pair()?;
    let delay = if which == "d2" { d2 } else { d1 };
    let t_end = t_end.unwrap_or(cfg.sim.t_end);
    let (method, h, window_h, weights) = horizon_settings(&cfg, args)?;
    require_assumptions(&format!("delays.{which}"), &delay, t_end)?;
    let series = compute_horizon(
        &delay,
        &HorizonRequest {
            method,
            h,
            t_end,
            window_h,
            window_scheme: cfg.horizon.window_scheme,
            weights: weights.as_ref(),
        },
    )?;
    let max_res = series.residuals(&delay).into_iter().fold(0.0, f64::max);
    let out = out.map(Path::to_path_buf).or(cfg.outputs.horizon_csv.clone());
    match &out {
        Some(p) => series.write_csv(&delay, create(p)?).map_err(|e| io_err(p, e))?,
        None => series.write_csv(&delay, io::stdout().lock()).map_err(|e| RunError::Io(e.to_string()))?,
    }
    eprintln!("{method:?} horizon: {} points, max residual {max_res:.3e}", series.len());
    Ok(())
}

fn gen_dataset_cmd(config: Option<&Path>, n: Option<usize>, seed: Option<u64>, resolution: Option<usize>, out: Option<&Path>) -> Result<(), RunError> {
    let cfg = load_config(config)?;
    let mut ds = cfg.dataset;
    ds.n_samples = n.unwrap_or(ds.n_samples);
    ds.seed = seed.unwrap_or(ds.seed);
    ds.resolution = resolution.unwrap_or(ds.resolution);
    let out = out
        .map(Path::to_path_buf)
        .or(cfg.outputs.dataset.clone())
        .ok_or_else(|| usage("gen-dataset needs --out or outputs.dataset"))?;
    let container = gen_dataset(&ds).map_err(|e| RunError::Numeric(e.to_string()))?;
    let check = verify_dataset(&container).map_err(|e| RunError::Numeric(e.to_string()))?;
    container.save(&out).map_err(|e| io_err(&out, e))?;
    println!(
        "wrote {} samples at resolution {} to {} (max residual {:.3e})",
        ds.n_samples,
        ds.resolution,
        out.display(),
        check.max_residual
    );
    Ok(())
}

fn simulate_cmd(config: &Path, args: &HorizonArgs, eps: Option<f64>, out: Option<&Path>) -> Result<(), RunError> {
    let cfg = Config::load(config)?;
    let scenario = Scenario::from_config(&cfg)?;
    let (method, h, window_h, weights) = horizon_settings(&cfg, args)?;
    let eps = eps.unwrap_or(cfg.horizon.eps);
    let outcome = scenario.run(
        &HorizonRequest {
            method,
            h,
            t_end: scenario.sim.t_end,
            window_h,
            window_scheme: cfg.horizon.window_scheme,
            weights: weights.as_ref(),
        },
        eps,
    )?;
    if let Some(p) = out.map(Path::to_path_buf).or(cfg.outputs.trace_csv.clone()) {
        outcome.trace.write_csv(create(&p)?).map_err(|e| io_err(&p, e))?;
        eprintln!("trace written to {}", p.display());
    }
    let g = outcome.trace.gamma();
    println!("method = {method:?}  eps = {eps}");
    println!("Gamma(0) = {:.6e}  Gamma(T) = {:.6e}", g[0], g[g.len() - 1]);
    println!("gamma_ratio = {:.6e}", outcome.gamma_ratio);
    match &outcome.fit {
        Ok(f) => println!("M_fit = {:.6e}  C_fit = {:.6}", f.m_fit, f.c_fit),
        Err(e) => println!("decay fit unavailable: {e}"),
    }
    if outcome.trace.noncausal_lookups > 0 {
        println!("noncausal_lookups = {}", outcome.trace.noncausal_lookups);
    }
    Ok(())
}

fn margins_cmd(config: &Path, out: Option<&Path>, csv_path: Option<&Path>) -> Result<(), RunError> {
    let cfg = Config::load(config)?;
    let scenario = Scenario::from_config(&cfg)?;
    // constants must hold for both delays unless the measurement is undelayed
    let report = if scenario.d2 == DelayParams::constant(0.0) {
        scenario.report1
    } else {
        scenario.report1.combine(&scenario.report2)
    };
    let (q, r) = cfg.margins.weights(scenario.spec.n())?;
    let m = compute_margins(&scenario.spec, &report, &q, &r).map_err(|e| match e {
        hpl_core::margins::MarginError::NotSpd { .. } => usage(e.to_string()),
        hpl_core::margins::MarginError::Linalg(hpl_core::linalg::LinalgError::NotHurwitz { .. }) => RunError::Assumption(e.to_string()),
        _ => RunError::Numeric(e.to_string()),
    })?;
    let text = m.to_text();
    print!("{text}");
    if let Some(p) = out.map(Path::to_path_buf).or(cfg.outputs.margins_report.clone()) {
        create(&p)?.write_all(text.as_bytes()).map_err(|e| io_err(&p, e))?;
        eprintln!("report written to {}", p.display());
    }
    if let Some(p) = csv_path.map(Path::to_path_buf).or(cfg.outputs.margins_csv.clone()) {
        let grid = cfg.margins.eps_grid.clone().unwrap_or_else(|| {
            let top = m.eps_star.unwrap_or(1e-3);
            (0..=20).map(|i| top * i as f64 / 20.0).collect()
        });
        m.write_csv(&grid, create(&p)?).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench_cmd(
    config: Option<&Path>,
    n: Option<usize>,
    seed: Option<u64>,
    h: Option<f64>,
    methods: Option<Vec<HorizonMethod>>,
    weights: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), RunError> {
    let cfg = load_config(config)?;
    let mut b = cfg.bench.clone();
    b.n_delays = n.unwrap_or(b.n_delays);
    b.seed = seed.unwrap_or(b.seed);
    b.h = h.unwrap_or(b.h);
    if let Some(m) = methods {
        b.methods = m;
    }
    let weights_path = weights.map(Path::to_path_buf).or(cfg.horizon.weights_path.clone());
    let weights = match (b.methods.contains(&HorizonMethod::Fno), weights_path) {
        (true, None) => return Err(usage("benchmarking fno requires --weights")),
        (true, Some(p)) => Some(load_weights(&p)?),
        _ => None,
    };
    let sampler = Sampler {
        horizon: b.t_end,
        ..Sampler::default()
    };
    let delays = (0..b.n_delays)
        .map(|i| sampler.sample(b.seed + i as u64).map(|s| s.params))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunError::Numeric(e.to_string()))?;
    let methods: Vec<_> = b.methods.iter().map(|&m| m.into()).collect();
    let results = bench_methods(&delays, &methods, &b.options(), weights.as_ref()).map_err(|e| RunError::Numeric(e.to_string()))?;
    write_bench_csv(&results, io::stdout().lock()).map_err(|e| RunError::Io(e.to_string()))?;
    if let Some(p) = out.map(Path::to_path_buf).or(cfg.outputs.bench_csv.clone()) {
        write_bench_csv(&results, create(&p)?).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, RunError> {
    match std::env::var("HPL_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| usage(format!("HPL_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match cli.command {
        Command::CheckDelay {
            config,
            t_end,
            grid_step,
            csv,
        } => check_delay(&config, t_end, grid_step, csv.as_deref()),
        Command::Horizon {
            config,
            h,
            t_end,
            delay,
            out,
        } => horizon(&config, &h, t_end, &delay, out.as_deref()),
        Command::GenDataset {
            config,
            n,
            seed,
            resolution,
            out,
        } => gen_dataset_cmd(config.as_deref(), n, seed, resolution, out.as_deref()),
        Command::Simulate { config, h, eps, out } => simulate_cmd(&config, &h, eps, out.as_deref()),
        Command::Margins { config, out, csv } => margins_cmd(&config, out.as_deref(), csv.as_deref()),
        Command::Bench {
            config,
            n,
            seed,
            h,
            methods,
            weights,
            out,
        } => bench_cmd(config.as_deref(), n, seed, h, methods, weights.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
