use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use deco_core::datagen::{ModelKind, ModelSpec};
use deco_core::deco::DecorrelationMode;
use deco_core::eval::PairSampling;
use deco_cli::data::{observed_data, replication_data, write_generated};
use deco_cli::{exit, run_experiment, summary_table, write_results, ExperimentConfig};

#[derive(Parser)]
#[command(name = "deco", about = "Decorrelated feature-partitioned sparse regression experiments")]
struct Cli {
    /// Worker threads. Changes speed only, never results.
    #[arg(long, global = true, env = "DECO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic dataset as CSV plus a JSON sidecar with the truth.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Model when no config is given: independent, compound_symmetry,
        /// group, factor, l1_ball (or i..v).
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
    },
    /// Run the configured methods over all replications.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Print a commented example config and exit.
        #[arg(long)]
        example_config: bool,
        /// Skip the summary table.
        #[arg(long)]
        quiet: bool,
    },
    /// Compare design diagnostics before and after decorrelation.
    Diag {
        #[command(flatten)]
        common: Common,
        /// Replace the transform by the identity.
        #[arg(long)]
        identity: bool,
        /// Estimate cross-correlations from this many random column pairs
        /// instead of all of them.
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Print the version.
    Version,
}

/// Errors that map to a specific exit code.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Exit(i32),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common.config.as_ref().context("--config is required")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_gen(common: &Common, model: Option<ModelKind>, n: Option<usize>, p: Option<usize>) -> Result<(), Failure> {
    let spec = match &common.config {
        Some(_) => {
            let cfg = load_config(common)?;
            let mut spec = cfg.model.clone().context("config has no [model] section")?;
            spec.seed = cfg.seed;
            spec
        }
        None => {
            let (Some(kind), Some(n), Some(p)) = (model, n, p) else {
                return Err(Failure::Config(anyhow::anyhow!(
                    "give --config, or all of --model, --n and --p"
                )));
            };
            ModelSpec::new(kind, n, p, common.seed.unwrap_or(0))
        }
    };
    spec.validate().map_err(|e| Failure::Config(e.into()))?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("data.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let side = write_generated(&spec, &out).map_err(Failure::Runtime)?;
    eprintln!("wrote {} and {}", out.display(), side.display());
    Ok(())
}

fn cmd_fit(common: &Common, quiet: bool) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let out = run_experiment(&cfg)?;
    let path = common.out.clone().or_else(|| cfg.output.clone());
    match &path {
        Some(path) => {
            let mut w = create(path)?;
            write_results(&out, &mut w)?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
        }
        None => write_results(&out, io::stdout().lock())?,
    }
    if !quiet {
        eprint!("{}", summary_table(&out));
    }
    let failed = out.failed();
    if failed == 0 {
        return Ok(());
    }
    for r in out.records.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "{} m={} rep={}: {}",
            r.method,
            r.m,
            r.rep,
            r.error.as_deref().unwrap_or_default()
        );
    }
    Err(Failure::Exit(if failed == out.records.len() {
        exit::ALL_FAILED
    } else {
        exit::PARTIAL
    }))
}

fn cmd_diag(common: &Common, identity: bool, pairs: Option<usize>) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let observed = observed_data(&cfg)?;
    let data = replication_data(&cfg, 0, observed.as_ref())?;
    let mut deco = cfg.deco.clone();
    deco.m = cfg.m_values.first().copied().unwrap_or(1);
    deco.seed = cfg.rep_seed(0);
    if identity {
        deco.mode = DecorrelationMode::Identity;
    }
    deco.validate(data.p()).map_err(|e| Failure::Config(e.into()))?;
    let sampling = match pairs {
        Some(pairs) => PairSampling::Sampled { pairs, seed: cfg.seed },
        None => PairSampling::Exact,
    };
    let report = deco_cli::diag::diagnose(&data, &deco, sampling).map_err(Failure::Runtime)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.into()))? + "\n";
    match &common.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())
                .and_then(|_| w.flush())
                .with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Config(anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("starting thread pool")?;
    }
    match &cli.command {
        Command::Gen { common, model, n, p } => cmd_gen(common, *model, *n, *p),
        Command::Fit {
            example_config: true, ..
        } => {
            print!("{}", deco_cli::config::EXAMPLE);
            Ok(())
        }
        Command::Fit { common, quiet, .. } => cmd_fit(common, *quiet),
        Command::Diag {
            common,
            identity,
            pairs,
        } => cmd_diag(common, *identity, *pairs),
        Command::Version => {
            println!("deco {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => exit::OK,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            exit::CONFIG
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            exit::ALL_FAILED
        }
        Err(Failure::Exit(code)) => code,
    };
    ExitCode::from(code as u8)
}
