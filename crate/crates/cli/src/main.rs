//! `atl`: batch access to every pipeline stage plus the iterative loop and
//! the synthetic benchmark.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atl_core::batch::{self, FilterKind};
use atl_core::ga::{fit_tree, FitResult};
use atl_core::mask::{to_partial_skeleton, Mask};
use atl_core::orchestrator::manifest::write_json_atomic;
use atl_core::orchestrator::{loop_status, run_loop, Mode, Predictor, SubprocessPredictor};
use atl_core::repair::repair;
use atl_core::synthetic::benchmark::{compare, init_benchmark, BenchmarkConfig};
use atl_core::{Error, ErrorKind, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "atl", version, about = "Automated pseudo-labelling of Y-shaped tree masks")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace root, overriding the config file.
    #[arg(long, global = true, env = "ATL_WORKSPACE")]
    workspace: Option<PathBuf>,
    /// Worker threads for per-image parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct GaOverrides {
    /// GA population size.
    #[arg(long)]
    population: Option<usize>,
    /// GA generation cap, e.g. for smoke runs.
    #[arg(long)]
    generations: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter every mask in a directory.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Apply the Y-shaped tree filter instead of the pre-filter chain.
        #[arg(long)]
        y_filter: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit the Y-tree template to the run centers of one (filtered) mask.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        ga: GaOverrides,
    },
    /// Repair a filtered mask along a fitted template.
    Repair {
        #[arg(long)]
        filtered: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Pre-filter, fit and repair every prediction in a directory.
    AtlProcess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        accepted: PathBuf,
        #[arg(long)]
        rejected: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        ga: GaOverrides,
    },
    /// Score predictions against ground truth (mIOU, BF1, CGS).
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Per-image table.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Aggregate report; printed to stdout when omitted.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        bf1_tolerance: Option<f64>,
    },
    /// The iterative self-training loop.
    Loop {
        #[command(subcommand)]
        action: LoopAction,
    },
    /// Synthetic benchmark comparing CST, FBST and ATL.
    Benchmark {
        #[command(subcommand)]
        action: BenchmarkAction,
    },
    /// Predictor protocol backed by the benchmark ground truth.
    #[command(hide = true)]
    MockPredictor {
        /// Benchmark directory holding benchmark.json.
        #[arg(long, default_value = ".")]
        benchmark_dir: PathBuf,
        #[command(subcommand)]
        action: MockAction,
    },
}

#[derive(Subcommand, Debug)]
enum LoopAction {
    /// Run (or resume) the loop in the workspace.
    Run {
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[command(flatten)]
        ga: GaOverrides,
    },
    /// Print the manifest counts and finished iterations.
    Status,
}

#[derive(Subcommand, Debug)]
enum BenchmarkAction {
    /// Generate a synthetic pool, seed labels and validation set.
    Init {
        #[arg(long)]
        dir: PathBuf,
        /// Full BenchmarkConfig as JSON; flags below override it.
        #[arg(long)]
        benchmark_config: Option<PathBuf>,
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        validation: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Run the modes on the same pool and write the comparison reports.
    Compare {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "CST,FBST,ATL")]
        modes: Vec<Mode>,
        /// Drive the mock through the subprocess protocol instead of in-process.
        #[arg(long)]
        subprocess: bool,
    },
}

#[derive(Subcommand, Debug)]
enum MockAction {
    Train {
        #[arg(long)]
        train_manifest: String,
        #[arg(long)]
        model_dir: String,
    },
    Predict {
        #[arg(long)]
        model_dir: String,
        #[arg(long)]
        input_list: String,
        #[arg(long)]
        output_dir: String,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode {s:?} (CST, FBST, ATL, External)"))
}

/// A command that finished but skipped some images.
struct Partial(usize);

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Predictor => 3,
        ErrorKind::Io => 4,
        ErrorKind::Data => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Partial(n))) => {
            eprintln!("error: {n} image(s) failed, see the report");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = &cli.workspace {
        cfg.workspace = w.clone();
    }
    if let Some(s) = cli.seed {
        cfg.ga.rng_seed = s;
        cfg.loop_.rng_seed = s;
    }
    if let Some(l) = &cli.log_level {
        cfg.log_level = l.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_ga(cfg: &mut PipelineConfig, o: &GaOverrides) -> Result<()> {
    if let Some(n) = o.population {
        cfg.ga.population_size = n;
    }
    if let Some(t) = o.generations {
        cfg.ga.generations = t;
    }
    cfg.ga.validate()
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_json_atomic(p, value),
        None => {
            println!("{}", output::to_json(value));
            Ok(())
        }
    }
}

fn partial(failures: usize) -> Option<Partial> {
    (failures > 0).then_some(Partial(failures))
}

fn run(cli: Cli) -> Result<Option<Partial>> {
    let mut cfg = load_config(&cli)?;
    env_logger::Builder::new()
        .filter_level(cfg.log_filter()?)
        .parse_default_env()
        .init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }

    match cli.command {
        Command::Filter {
            input,
            output,
            y_filter,
            report,
        } => {
            let kind = if y_filter { FilterKind::Y } else { FilterKind::Pre };
            let summary = batch::filter_dir(&input, &output, kind, &cfg.filter)?;
            emit(&summary, report.as_deref())?;
            Ok(partial(summary.failures.len()))
        }
        Command::Fit { input, output, ga } => {
            apply_ga(&mut cfg, &ga)?;
            let mask = Mask::load_png(&input)?;
            let fit = fit_tree(&to_partial_skeleton(&mask), &cfg.ga, mask.width(), mask.height())?;
            info!("fitness {:.4} after {} generations", fit.fitness, fit.generations_run);
            write_json_atomic(&output, &fit)?;
            Ok(None)
        }
        Command::Repair {
            filtered,
            fit,
            output,
            report,
        } => {
            let mask = Mask::load_png(&filtered)?;
            let text = std::fs::read_to_string(&fit).map_err(|e| Error::Io {
                path: fit.clone(),
                source: e,
            })?;
            let fit_result: FitResult =
                serde_json::from_str(&text).map_err(|e| Error::Json { path: fit, source: e })?;
            let outcome = repair(&mask, &fit_result, &cfg.repair, &cfg.filter);
            if outcome.accepted {
                outcome.mask.save_png(&output)?;
            }
            emit(&outcome.report(&fit_result), report.as_deref())?;
            Ok(None)
        }
        Command::AtlProcess {
            input,
            accepted,
            rejected,
            report,
            ga,
        } => {
            apply_ga(&mut cfg, &ga)?;
            let summary =
                batch::atl_process_dir(&input, &accepted, &rejected, &cfg.process_config(), cfg.ga.rng_seed)?;
            info!(
                "accepted {} of {} ({:.1}%)",
                summary.accepted,
                summary.accepted + summary.rejected,
                100.0 * summary.accepted_fraction
            );
            emit(&summary, report.as_deref())?;
            Ok(partial(summary.failures.len()))
        }
        Command::Score {
            pred,
            truth,
            csv,
            json,
            bf1_tolerance,
        } => {
            let tol = bf1_tolerance.unwrap_or(cfg.metrics.bf1_tolerance);
            let (rows, summary) = batch::score_dirs(&pred, &truth, tol)?;
            if let Some(p) = &csv {
                output::write_score_csv(p, &rows)?;
            }
            emit(&summary, json.as_deref())?;
            Ok(partial(summary.failures.len()))
        }
        Command::Loop { action } => run_loop_cmd(cfg, action),
        Command::Benchmark { action } => run_benchmark(cli.seed, action),
        Command::MockPredictor {
            benchmark_dir,
            action,
        } => {
            let bench = BenchmarkConfig::load(&benchmark_dir)?;
            let mock = bench.mock_predictor();
            let root = Path::new(".");
            match action {
                MockAction::Train {
                    train_manifest,
                    model_dir,
                } => mock.train(root, &train_manifest, &model_dir)?,
                MockAction::Predict {
                    model_dir,
                    input_list,
                    output_dir,
                } => mock.predict(root, &model_dir, &input_list, &output_dir)?,
            }
            Ok(None)
        }
    }
}

fn run_loop_cmd(mut cfg: PipelineConfig, action: LoopAction) -> Result<Option<Partial>> {
    let root = cfg.workspace.clone();
    match action {
        LoopAction::Run {
            mode,
            max_iterations,
            batch_size,
            ga,
        } => {
            apply_ga(&mut cfg, &ga)?;
            if let Some(m) = mode {
                cfg.loop_.mode = m;
            }
            if let Some(n) = max_iterations {
                cfg.loop_.max_iterations = n;
            }
            if let Some(n) = batch_size {
                cfg.loop_.batch_size = n;
            }
            let predictor = SubprocessPredictor::new(cfg.loop_.predictor_command.clone())?;
            let report = run_loop(&root, &cfg.loop_, &cfg.process_config(), &predictor)?;
            info!(
                "stopped ({:?}) after {} iterations, {} images still unlabeled",
                report.stop_reason,
                report.iterations.len(),
                report.counts.remaining()
            );
            emit(&report, None)?;
            Ok(None)
        }
        LoopAction::Status => {
            let (manifest, reports) = loop_status(&root, &cfg.loop_)?;
            let status = output::LoopStatus {
                mode: manifest.mode,
                iteration: manifest.iteration,
                counts: manifest.counts(),
                iterations: reports,
            };
            emit(&status, None)?;
            Ok(None)
        }
    }
}

fn run_benchmark(seed: Option<u64>, action: BenchmarkAction) -> Result<Option<Partial>> {
    match action {
        BenchmarkAction::Init {
            dir,
            benchmark_config,
            pool,
            seeds,
            validation,
            batch_size,
        } => {
            let mut bench = match benchmark_config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => BenchmarkConfig::default(),
            };
            if let Some(s) = seed {
                bench.rng_seed = s;
            }
            for (field, v) in [
                (&mut bench.pool, pool),
                (&mut bench.seeds, seeds),
                (&mut bench.validation, validation),
                (&mut bench.batch_size, batch_size),
            ] {
                if let Some(v) = v {
                    *field = v;
                }
            }
            init_benchmark(&dir, &bench)?;
            info!("benchmark written to {}", dir.display());
            Ok(None)
        }
        BenchmarkAction::Compare { dir, modes, subprocess } => {
            let bench = BenchmarkConfig::load(&dir)?;
            let in_process = bench.mock_predictor();
            let external;
            let predictor: &dyn Predictor = if subprocess {
                let exe = std::env::current_exe().map_err(|e| Error::Io {
                    path: PathBuf::from("atl"),
                    source: e,
                })?;
                external = SubprocessPredictor::new(vec![
                    exe.to_string_lossy().into_owned(),
                    "mock-predictor".into(),
                ])?;
                &external
            } else {
                &in_process
            };
            let report = compare(&dir, &modes, predictor)?;
            output::write_comparison_csv(&dir.join("reports"), &report)?;
            emit(&report.summaries, None)?;
            Ok(None)
        }
    }
}
