//! `rigidfd` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rigidfd::calibration::TrainingConfig;

use commands::{CmdResult, Context, DetectArgs, ThresholdChoice, TrainArgs};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "rigidfd", version, about = "Range-only satellite fault detection")]
struct Cli {
    /// Constellation (`elfo`, `mars_walker` or a JSON file); for `montecarlo`, an experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `out`, or the experiment file's `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TimeRange {
    /// First epoch (s).
    #[arg(long, default_value_t = 0.0)]
    start: f64,
    /// Last epoch (s); defaults to `start`.
    #[arg(long)]
    end: Option<f64>,
    /// Epoch spacing (s).
    #[arg(long, default_value_t = 60.0)]
    step: f64,
}

impl TimeRange {
    fn end(&self) -> f64 {
        self.end.unwrap_or(self.start)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Satellite positions to `positions.csv` and the constellation to `constellation.json`.
    Propagate(TimeRange),
    /// Link edges to `edges.csv`.
    Graph(TimeRange),
    /// k-cliques to `cliques.csv` and per-satellite counts to `clique_counts.csv`.
    Cliques {
        #[command(flatten)]
        range: TimeRange,
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// Fault-free statistic percentiles to `thresholds.json`.
    Calibrate {
        #[arg(long, default_value_t = 1.0)]
        sigma_w: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![95.0, 99.0, 99.9])]
        percentiles: Vec<f64>,
        #[arg(long, default_value_t = 60.0)]
        step: f64,
        /// Sampling window (s); defaults to one orbital period.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Trains the threshold predictor to `model.json`.
    TrainPredictor {
        #[arg(long, default_value_t = 1.0)]
        sigma_w: f64,
        #[arg(long, default_value_t = 5000)]
        geometries: usize,
        #[arg(long, default_value_t = 2000)]
        noise_draws: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
    },
    /// One detection run to `detection.json`.
    Detect {
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 1)]
        dl: usize,
        /// Faulty satellite ids.
        #[arg(long, value_delimiter = ',')]
        faults: Vec<usize>,
        #[arg(long, default_value_t = 20.0)]
        magnitude: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_w: f64,
        #[arg(long, default_value_t = 60.0)]
        step: f64,
        /// Fixed threshold value.
        #[arg(long, conflicts_with_all = ["percentile", "model"])]
        threshold: Option<f64>,
        /// Threshold as a calibrated percentile.
        #[arg(long, conflicts_with = "model")]
        percentile: Option<f64>,
        /// Predictor model file.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Monte-Carlo campaign to `results.csv`.
    Montecarlo {
        /// Override the configured number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Print the effective experiment file and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summary and per-(threshold, DL) series from a results file.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

fn run(cli: Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut ctx = Context {
        config: cli.config.clone(),
        seed: cli.seed.unwrap_or(0),
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from("out")),
    };
    match cli.command {
        Command::Propagate(r) => commands::propagate_cmd(&ctx, r.start, r.end(), r.step),
        Command::Graph(r) => commands::graph_cmd(&ctx, r.start, r.end(), r.step),
        Command::Cliques { range, k } => commands::cliques_cmd(&ctx, range.start, range.end(), range.step, k),
        Command::Calibrate {
            sigma_w,
            percentiles,
            step,
            duration,
        } => commands::calibrate_cmd(&ctx, sigma_w, &percentiles, step, duration),
        Command::TrainPredictor {
            sigma_w,
            geometries,
            noise_draws,
            epochs,
            batch,
            lr,
        } => commands::train_predictor_cmd(
            &ctx,
            &TrainArgs {
                sigma_w,
                geometries,
                noise_draws,
                training: TrainingConfig {
                    epochs,
                    batch_size: batch,
                    learning_rate: lr,
                    ..TrainingConfig::default()
                },
            },
        ),
        Command::Detect {
            t0,
            dl,
            faults,
            magnitude,
            sigma_w,
            step,
            threshold,
            percentile,
            model,
        } => {
            let threshold = match (threshold, percentile, model) {
                (Some(v), _, _) => ThresholdChoice::Value(v),
                (_, Some(p), _) => ThresholdChoice::Percentile(p),
                (_, _, Some(m)) => ThresholdChoice::Model(m),
                _ => ThresholdChoice::Percentile(99.0),
            };
            commands::detect_cmd(
                &ctx,
                &DetectArgs {
                    t0,
                    dl,
                    faults,
                    magnitude,
                    sigma_w,
                    threshold,
                    step,
                },
            )
        }
        Command::Montecarlo { trials, print_config } => {
            let mut exp = match &cli.config {
                Some(p) => ExperimentConfig::read(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = cli.seed {
                exp.seed = seed;
            }
            if let Some(t) = trials {
                exp.n_trials = t;
            }
            exp.validate()?;
            if let Some(out) = &cli.out {
                exp.output_dir = out.clone();
            }
            if print_config {
                println!("{}", exp.to_json());
                return Ok(());
            }
            ctx.out = exp.output_dir.clone();
            commands::montecarlo_cmd(&ctx, &exp)
        }
        Command::Report { results } => commands::report_cmd(&ctx, &results),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
