use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use meltpoolnet::featurize::{Target, DEFAULT_AMBIENT_TEMP};
use meltpoolnet::materials::Registry;
use mpnet::api::RecordInput;
use mpnet::commands::{self, out_path, to_json, write_file, BenchmarkReport};
use mpnet::config::RunConfig;
use mpnet::server::{AppState, ModelStore};

/// Meltpool geometry and defect modelling.
///
/// Material tables come from `MPNET_DATA_DIR` when set, the bundled
/// tables otherwise.
#[derive(Parser)]
#[command(name = "mpnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset CSV and summarize its contents.
    Ingest {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate every featurization × model pair in the config.
    /// Writes benchmark.json and benchmark.csv.
    Benchmark {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Format a benchmark.json as a mean ± std table.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random hyperparameter search for the config's first model.
    /// Writes tune_trials.csv and tune.json.
    Tune {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of trials (default: tune_budget from the config, else 50).
        #[arg(long)]
        budget: Option<usize>,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the config's first featurization and model on all rows.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model file (default: <output_dir>/model.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one record (JSON, lengths in µm) with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Record file, or `-` for stdin.
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a dimensionally consistent power law to a geometry target.
    Identify {
        /// Takes dataset, target and T0 from a run configuration.
        #[arg(long, conflicts_with_all = ["dataset", "target"])]
        config: Option<PathBuf>,
        #[arg(long, requires = "target")]
        dataset: Option<PathBuf>,
        #[arg(long, value_parser = parse_target)]
        target: Option<Target>,
        #[arg(long, default_value_t = DEFAULT_AMBIENT_TEMP)]
        ambient: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rosenthal meltpool depth, width and length.
    Rosenthal {
        #[arg(long)]
        material: String,
        /// Absorbed power Q, W.
        #[arg(long, conflicts_with_all = ["power", "absorptivity"])]
        absorbed_power: Option<f64>,
        /// Beam power P, W (with --absorptivity).
        #[arg(long, requires = "absorptivity")]
        power: Option<f64>,
        #[arg(long, requires = "power")]
        absorptivity: Option<f64>,
        /// Scan speed, m/s.
        #[arg(long)]
        velocity: f64,
        #[arg(long, default_value_t = DEFAULT_AMBIENT_TEMP)]
        ambient: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve saved models over HTTP.
    Serve {
        /// Directory of model JSON files; each file stem names a model.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn parse_target(s: &str) -> Result<Target, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown target `{s}` (depth, width, length, defect_class)"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let registry = Registry::from_env().context("loading material tables")?;
    match cli.command {
        Command::Ingest { dataset, out } => {
            let summary = commands::ingest(&dataset, &registry)?;
            emit(out.as_deref(), &to_json(&summary)?)
        }
        Command::Benchmark { config, out } => {
            let cfg = config.load()?;
            let report = commands::benchmark(&cfg, &registry)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            write_file(&dir.join("benchmark.json"), to_json(&report)?.as_bytes())?;
            write_file(&dir.join("benchmark.csv"), commands::benchmark_csv(&report)?.as_bytes())?;
            eprintln!("wrote {} rows to {}", report.rows.len(), dir.join("benchmark.csv").display());
            Ok(())
        }
        Command::Report { input, out } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let report: BenchmarkReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            emit(out.as_deref(), &commands::report_csv(&report)?)
        }
        Command::Tune { config, budget, out } => {
            let cfg = config.load()?;
            let result = commands::tune(&cfg, &registry, budget)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            write_file(&dir.join("tune_trials.csv"), commands::trials_csv(&result)?.as_bytes())?;
            write_file(&dir.join("tune.json"), to_json(&result)?.as_bytes())?;
            let best = result.best_trial();
            eprintln!(
                "best trial {} ({} = {}): {}",
                best.index,
                result.metric,
                best.objective.unwrap_or(f64::NAN),
                serde_json::to_string(&best.params)?
            );
            Ok(())
        }
        Command::Train { config, out } => {
            let cfg = config.load()?;
            let (pipeline, search) = commands::train(&cfg, &registry)?;
            let path = out_path(&cfg, out.as_deref(), "model.json");
            write_file(&path, pipeline.to_json()?.as_bytes())?;
            if let Some(s) = search {
                let dir = path.parent().unwrap_or(Path::new("."));
                write_file(&dir.join("tune_trials.csv"), commands::trials_csv(&s)?.as_bytes())?;
            }
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Predict { model, record, out } => {
            let text = if record.as_os_str() == "-" {
                std::io::read_to_string(std::io::stdin())?
            } else {
                std::fs::read_to_string(&record).with_context(|| format!("reading {}", record.display()))?
            };
            let input: RecordInput = serde_json::from_str(&text).context("parsing record")?;
            let response = commands::predict(&model, &input, &registry)?;
            emit(out.as_deref(), &to_json(&response)?)
        }
        Command::Identify {
            config,
            dataset,
            target,
            ambient,
            out,
        } => {
            let (dataset, target, ambient) = match (config, dataset, target) {
                (Some(c), _, _) => {
                    let cfg = RunConfig::load(&c)?;
                    (cfg.dataset, cfg.target, cfg.ambient_temp)
                }
                (None, Some(d), Some(t)) => (d, t, ambient),
                _ => bail!("identify needs --config or both --dataset and --target"),
            };
            let result = commands::identify(&dataset, target, ambient, &registry)?;
            emit(out.as_deref(), &to_json(&result)?)
        }
        Command::Rosenthal {
            material,
            absorbed_power,
            power,
            absorptivity,
            velocity,
            ambient,
            out,
        } => {
            let q = match (absorbed_power, power, absorptivity) {
                (Some(q), _, _) => q,
                (None, Some(p), Some(eta)) => p * eta,
                _ => bail!("give --absorbed-power, or --power with --absorptivity"),
            };
            let result = commands::rosenthal(&material, q, velocity, ambient, &registry)?;
            emit(out.as_deref(), &to_json(&result)?)
        }
        Command::Serve { models, host, port } => {
            let (store, report) = ModelStore::from_dir(&models)?;
            eprintln!("serving {} model(s): {}", report.models.len(), report.models.join(", "));
            let addr: SocketAddr = format!("{host}:{port}").parse().context("parsing listen address")?;
            let state = AppState {
                registry: Arc::new(registry),
                store: Arc::new(store),
            };
            tokio::runtime::Runtime::new()?.block_on(mpnet::server::serve(state, addr))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
