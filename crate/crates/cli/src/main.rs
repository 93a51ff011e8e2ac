mod artifacts;
mod commands;
mod config;
mod data;
mod exit;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use leapfactual::transport::CeMode;

use commands::Suite;
use config::{Dataset, RunConfig};

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  2  validation error (bad flag, config key or value)
  3  missing artifact (data file or checkpoint; run the producing command first)
  4  runtime or numerical failure

Typical toy session:
  leapfactual gen-data --toy --n 4000
  leapfactual train-classifier
  leapfactual train-flow
  leapfactual explain --input 0.2,-0.3 --target 3 --mode reliable
  leapfactual demo-toy";

#[derive(Parser)]
#[command(name = "leapfactual", version, about = "Counterfactual explanations with class-conditioned flow matching", after_help = AFTER_HELP)]
struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config dataset.
    #[arg(long, global = true, value_enum)]
    dataset: Option<Dataset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Blending only.
    Ce,
    /// Blending followed by information injection.
    Reliable,
}

impl From<Mode> for CeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Ce => CeMode::Ce,
            Mode::Reliable => CeMode::Reliable,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    PrintConfig,
    /// Generate the toy world or synthetic glyph IDX files.
    #[command(group(ArgGroup::new("kind").required(true).args(["toy", "idx_synth"])))]
    GenData {
        #[arg(long)]
        toy: bool,
        #[arg(long)]
        idx_synth: bool,
        /// Samples per class.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train the conditional flow over the latent space.
    TrainFlow,
    /// Train the glyph VAE.
    TrainVae,
    /// Train the classifier that acts as local oracle.
    TrainClassifier,
    /// Explain one input: move it toward a target class.
    Explain {
        /// Comma-separated input values, or an index into the held-out set.
        #[arg(long, allow_hyphen_values = true)]
        input: String,
        #[arg(long)]
        target: usize,
        #[arg(long, value_enum, default_value = "reliable")]
        mode: Mode,
        /// Output directory (default: <outputs>/explain).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lifting and landing panels on the toy world, as JSON Lines and SVG.
    DemoToy {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain a weak classifier on counterfactuals and compare held-out scores.
    ExperimentAugment {
        #[arg(long, value_enum, default_value = "reliable")]
        ce_mode: Mode,
        /// Share of the counterfactual set mixed in, in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        /// Comma-separated seeds (default: eval.seeds).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Multi-seed evaluation; writes `metric,mean,stderr,n_runs` CSV.
    Eval {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Serve the session API and static client.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of client files served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value_t = 24.0)]
        session_ttl_hours: f64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dataset) = cli.dataset {
        cfg.dataset = dataset;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::PrintConfig => print!("{}", cfg.to_toml()?),
        Command::GenData { toy, n, .. } => {
            let mut cfg = cfg;
            cfg.dataset = if toy { Dataset::Toy } else { Dataset::Idx };
            commands::gen_data(&cfg, toy, n)?
        }
        Command::TrainFlow => commands::train_flow_cmd(&cfg)?,
        Command::TrainVae => commands::train_vae_cmd(&cfg)?,
        Command::TrainClassifier => commands::train_classifier_cmd(&cfg)?,
        Command::Explain { input, target, mode, out } => commands::explain(&cfg, &input, target, mode.into(), out)?,
        Command::DemoToy { out } => commands::demo_toy(&cfg, out)?,
        Command::ExperimentAugment { ce_mode, fraction, seeds } => {
            let seeds = seeds.unwrap_or_else(|| cfg.eval.seeds.clone());
            commands::experiment_augment(&cfg, ce_mode.into(), fraction, &seeds)?
        }
        Command::Eval { suite, seeds } => {
            let seeds = seeds.unwrap_or_else(|| cfg.eval.seeds.clone());
            commands::eval(&cfg, suite, &seeds)?
        }
        Command::Serve {
            port,
            host,
            assets,
            session_ttl_hours,
        } => commands::serve(&cfg, &host, port, assets, session_ttl_hours)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code(&err))
        }
    }
}
