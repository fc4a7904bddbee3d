use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ps3d::dataset::Split;
use ps3d::features::Descriptor;
use ps3d::inference::PruneMode;
use ps3d::learning::TrainConfig;
use ps3d::model::Variant;
use ps3d::synthgen::DatasetConfig;
use ps3d::{par, Error, Result};
use ps3d_cli::{cmd_bench, cmd_eval, cmd_gen_data, cmd_infer, cmd_train, exit_code, InferOptions};

#[derive(Parser)]
#[command(name = "ps3d", version, about = "3D pictorial structures on RGB-D frames")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "PS3D_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic RGB-D dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset's train split.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        seed: Option<u64>,
        /// Model file to write; the training log goes to `<out>.log`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect poses on a split and write a detections file.
    Infer {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = parse_split, default_value = "test")]
        split: Split,
        #[arg(long, value_parser = parse_prune, default_value = "paper")]
        prune: PruneMode,
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write skeleton overlays as PNG.
        #[arg(long)]
        overlays: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detection files against ground truth.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_split, default_value = "test")]
        split: Split,
        /// Detection file, as PATH or NAME=PATH; repeatable.
        #[arg(long = "detections", required = true, value_parser = parse_run)]
        runs: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time pruned against unpruned inference.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = parse_split, default_value = "test")]
        split: Split,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, value_parser = parse_prune, default_value = "paper")]
        prune: PruneMode,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, value_parser = parse_descriptor, num_args = 1.., value_delimiter = ',')]
    features: Option<Vec<Descriptor>>,
    #[arg(long, value_parser = parse_prune)]
    prune: Option<PruneMode>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant {s:?}; expected psi2d or psi3d1..psi3d4"))
}

fn parse_descriptor(s: &str) -> std::result::Result<Descriptor, String> {
    Descriptor::parse(s).ok_or_else(|| format!("unknown feature {s:?}; expected ihog, dhog, honv or hdd"))
}

fn parse_prune(s: &str) -> std::result::Result<PruneMode, String> {
    PruneMode::parse(s).ok_or_else(|| format!("unknown prune mode {s:?}; expected paper, conservative or off"))
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        "negative" => Ok(Split::Negative),
        _ => Err(format!("unknown split {s:?}; expected train, test or negative")),
    }
}

fn parse_run(s: &str) -> std::result::Result<(String, PathBuf), String> {
    Ok(match s.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(s);
            let name = path.parent().and_then(Path::file_name).or(path.file_stem()).map_or(s.to_string(), |n| n.to_string_lossy().into_owned());
            (name, path)
        }
    })
}

fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { config, seed, out } => {
            let mut cfg = match config {
                Some(p) => DatasetConfig::from_toml(&read_config(&p)?)?,
                None => DatasetConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            cmd_gen_data(&cfg, &out)?;
        }
        Command::Train { config, dataset, model, seed, out } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::from_toml(&read_config(&p)?)?,
                None => TrainConfig::default(),
            };
            if let Some(v) = model.variant {
                cfg.variant = v;
            }
            if let Some(f) = model.features {
                cfg.descriptors = f;
            }
            if let Some(p) = model.prune {
                cfg.prune = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let output = cmd_train(&dataset, &cfg, &out)?;
            if let Some(last) = output.log.last() {
                println!("trained {} epochs, final objective {:.6}", last.epoch, last.objective);
            }
        }
        Command::Infer { dataset, model, split, prune, threshold, overlays, out } => {
            let opts = InferOptions { split, prune, threshold, overlays };
            let records = cmd_infer(&dataset, &model, &opts, &out)?;
            println!("{} detections written to {}", records.len(), out.display());
        }
        Command::Eval { dataset, split, runs, out } => {
            cmd_eval(&dataset, split, &runs, &out)?;
            print!("{}", std::fs::read_to_string(out.join("pck.txt"))?);
            print!("{}", std::fs::read_to_string(out.join("ap.txt"))?);
        }
        Command::Bench { dataset, model, split, frames, prune, out } => {
            let report = cmd_bench(&dataset, &model, split, frames, prune, &out)?;
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match par::with_threads(cli.threads, || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
