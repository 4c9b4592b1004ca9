//! Experiment CLI: prepare splits, fine-tune the entailment scorer,
//! evaluate regimes, and run the sweep families.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nli_fsl::commands;
use nli_fsl::config::{resolve_workspace, Overrides, RunConfig};
use nli_fsl::error::Error;

#[derive(Parser)]
#[command(
    name = "nli-fsl",
    version,
    about = "Few-shot and zero-shot intent detection by entailment scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long, short = 'c')]
    config: PathBuf,

    /// Root for relative output directories (overrides NLI_FSL_OUTPUT_ROOT).
    #[arg(long)]
    output_root: Option<PathBuf>,

    /// Model cache directory (overrides NLI_FSL_MODEL_CACHE).
    #[arg(long)]
    model_cache: Option<PathBuf>,

    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Dataset path (overrides [dataset] path).
    #[arg(long)]
    dataset_path: Option<PathBuf>,

    /// Support shots K (overrides [split] shots).
    #[arg(long)]
    shots: Option<usize>,

    /// Split sampling seed (overrides [split] seed).
    #[arg(long)]
    split_seed: Option<u64>,

    /// Partition seed (overrides [partition] seed).
    #[arg(long)]
    partition_seed: Option<u64>,

    /// Minimum records per class (overrides [partition] min_class_size).
    #[arg(long)]
    min_class_size: Option<usize>,

    /// Method: nli-fsl | protobert | zs-ddn (overrides [run] method).
    #[arg(long)]
    method: Option<String>,

    /// Regime: fsid | gfsid | zsid | gzsid (overrides [run] regime).
    #[arg(long)]
    regime: Option<String>,

    /// Run seed (overrides [run] seed).
    #[arg(long)]
    seed: Option<u64>,

    /// Encoder backend: toy | transformer (overrides [encoder] backend).
    #[arg(long)]
    backend: Option<String>,

    /// Pretrained model identifier (overrides [encoder] model_id).
    #[arg(long)]
    model_id: Option<String>,

    /// Training epochs (overrides [train] epochs).
    #[arg(long)]
    epochs: Option<usize>,

    /// Training batch size (overrides [train] batch_size).
    #[arg(long)]
    batch_size: Option<usize>,

    /// Learning rate (overrides [train] learning_rate).
    #[arg(long)]
    learning_rate: Option<f64>,

    /// Warmup steps (overrides [train] warmup_steps).
    #[arg(long)]
    warmup_steps: Option<usize>,

    /// Negative downsampling ratio (overrides [pairs] downsample_ratio).
    #[arg(long)]
    downsample_ratio: Option<f64>,

    /// Experiment seeds, comma separated (overrides [experiment] seeds).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Build label partition and splits; write the split manifest.
    Prepare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fine-tune the entailment scorer against a manifest.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Split manifest produced by `prepare`.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate a saved artifact on the configured regime.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Model artifact directory produced by `train`.
        #[arg(long)]
        artifact: PathBuf,
    },
    /// Run an experiment family's whole grid.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
        /// main | zeroshot | incremental_labels | incremental_data | shots_sweep.
        #[arg(long)]
        family: Option<String>,
    },
    /// Re-render figures from a results CSV.
    Plot {
        /// results.csv produced by `experiment`.
        #[arg(long)]
        csv: PathBuf,
        /// Where the figures go.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<(RunConfig, PathBuf, PathBuf), Error> {
    let mut config = RunConfig::load(&common.config)?;
    let overrides = Overrides {
        dataset_path: common.dataset_path.clone(),
        shots: common.shots,
        split_seed: common.split_seed,
        partition_seed: common.partition_seed,
        min_class_size: common.min_class_size,
        method: common.method.clone(),
        regime: common.regime.clone(),
        run_seed: common.seed,
        backend: common.backend.clone(),
        model_id: common.model_id.clone(),
        epochs: common.epochs,
        batch_size: common.batch_size,
        learning_rate: common.learning_rate,
        warmup_steps: common.warmup_steps,
        downsample_ratio: common.downsample_ratio,
        out_dir: common.out_dir.clone(),
        seeds: common.seeds.clone(),
    };
    config.apply_overrides(&overrides)?;
    let (output_dir, model_cache) = resolve_workspace(
        &config,
        common.output_root.as_deref(),
        common.model_cache.as_deref(),
    );
    std::fs::create_dir_all(&output_dir)?;
    Ok((config, output_dir, model_cache))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Prepare { common } => {
            let (config, output_dir, _) = load_config(&common)?;
            commands::cmd_prepare(&config, &output_dir)?;
        }
        Command::Train { common, manifest } => {
            let (config, output_dir, model_cache) = load_config(&common)?;
            commands::cmd_train(&config, &output_dir, &model_cache, &manifest)?;
        }
        Command::Eval { common, manifest, artifact } => {
            let (config, output_dir, model_cache) = load_config(&common)?;
            commands::cmd_eval(&config, &output_dir, &model_cache, &manifest, &artifact)?;
        }
        Command::Experiment { common, family } => {
            let (config, output_dir, model_cache) = load_config(&common)?;
            commands::cmd_experiment(&config, &output_dir, &model_cache, family.as_deref())?;
        }
        Command::Plot { csv, out_dir } => {
            commands::cmd_plot(&csv, &out_dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    // usage errors exit 1, matching the config-error class
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
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
