use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lesionseg_cli::{cmd_crossval, cmd_evaluate, cmd_info, cmd_predict, cmd_train, format_mean, init_runtime, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "lesionseg", version, about = "Skin lesion segmentation with a convolutional-deconvolutional network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides a configuration key, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Single-threaded execution.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Image folder with `<id>_segmentation.png` masks.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold cross-validation.
    Crossval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment images with one model or an ensemble.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long = "models", required = true)]
        models: Vec<PathBuf>,
        /// Folder of images to segment.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write 8-bit probability maps.
        #[arg(long)]
        probmaps: bool,
    },
    /// Score predicted masks against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// CSV report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the architecture and its parameter count.
    Info {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, data: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.runtime.threads = t;
    }
    cfg.runtime.deterministic |= common.deterministic;
    if let Some(d) = data {
        cfg.data.train_dir = Some(d.clone());
    }
    cfg.validate()?;
    init_runtime(&cfg);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common, data, out } => {
            let cfg = resolve(&common, data.as_ref())?;
            let o = cmd_train(&cfg, &out)?;
            if let Some(last) = o.curve.last() {
                println!("final train loss {:.5}", last.train_loss);
            }
            println!("weights written to {}", o.weights.display());
        }
        Command::Crossval { common, data, out } => {
            let cfg = resolve(&common, data.as_ref())?;
            let o = cmd_crossval(&cfg, &out)?;
            print!("{}", std::fs::read_to_string(&o.summary_csv).unwrap_or_default());
        }
        Command::Predict { common, models, images, out, probmaps } => {
            let cfg = resolve(&common, None)?;
            let o = cmd_predict(&cfg, &models, &images, &out, probmaps)?;
            println!("wrote {} masks to {}", o.masks.len(), out.display());
        }
        Command::Evaluate { pred, truth, out } => {
            let report = cmd_evaluate(&pred, &truth, out.as_deref())?;
            println!("{}", format_mean(&report));
        }
        Command::Info { common } => {
            let cfg = resolve(&common, None)?;
            print!("{}", cmd_info(&cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
