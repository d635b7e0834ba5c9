//! `tda` — bias statistics, synthetic data, training sweeps and
//! counterfactual bias-insertion reports.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 I/O failure,
//! 4 computation failure (e.g. diverged training).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use tda_core::augment::{ArtifactKind, AssetPool};
use tda_core::experiment::{self, synthetic_experiment, ExperimentConfig};
use tda_core::metrics::{bias_report, Manifest};
use tda_core::model::ToyModel;
use tda_core::synth::{generate, SynthConfig};
use tda_core::{ErrorCategory, Execution, RasterImage, Result, TdaError};

#[derive(Parser)]
#[command(name = "tda", version, about = "Targeted data augmentation toolkit")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Artifact statistics for an annotation manifest.
    Stats {
        manifest: PathBuf,
        /// Directory for bias_report.json / bias_report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with a planted artifact bias.
    Synth {
        /// SynthConfig JSON; defaults are used for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        bias_kind: Option<ArtifactKind>,
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model at a single augmentation probability.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Augmentation probability (defaults to the policy's value).
        #[arg(long)]
        p: Option<f64>,
    },
    /// Counterfactual bias insertion report for a trained model.
    Cbi {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        model: PathBuf,
        /// Also dump every prediction pair to this CSV.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Train and evaluate across the p grid.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Replace the grid; repeat or comma-separate.
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
    },
    /// Insert one asset into one image.
    Preview {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        asset_index: PathBuf,
        #[arg(long)]
        asset_id: String,
        /// Policy JSON for sampled transforms; identity placement otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sample a transform from the policy with this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides both the training and the augmentation seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bias_kind: Option<ArtifactKind>,
    #[arg(long)]
    asset_index: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.policy.seed = seed;
        }
        if let Some(kind) = self.bias_kind {
            cfg.policy.bias_kind = kind;
        }
        if let Some(index) = &self.asset_index {
            cfg.asset_index = index.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> TdaError {
    TdaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Stats { manifest, out } => {
            let m = Manifest::load_csv(&manifest)?;
            let report = bias_report(&m)?;
            for w in &report.warnings {
                warn!("{w}");
            }
            let text = report.render_text();
            print!("{text}");
            if let Some(dir) = out {
                write(&dir.join("bias_report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
                write(&dir.join("bias_report.txt"), &text)?;
            }
        }
        Command::Synth {
            config,
            seed,
            bias_kind,
            n_per_class,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                    serde_json::from_str::<SynthConfig>(&text)
                        .map_err(|e| TdaError::Config(format!("{}: {e}", path.display())))?
                }
                None => SynthConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.artifact_kind = bias_kind.unwrap_or(cfg.artifact_kind);
            cfg.n_per_class = n_per_class.unwrap_or(cfg.n_per_class);
            let ds = generate(&cfg, exec)?;
            ds.write(&out, exec)?;
            write(&out.join("synth_config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
            synthetic_experiment(cfg.artifact_kind, cfg.seed).save(out.join("experiment.json"))?;
            for w in &ds.summary.warnings {
                warn!("{w}");
            }
            print!("{}", ds.summary.render_text());
            info!("wrote {}", out.display());
        }
        Command::Train { exp, p } => {
            let mut cfg = exp.load()?;
            let p = p.unwrap_or(cfg.policy.probability_p);
            cfg.p_grid = vec![p];
            cfg.validate()?;
            let data = experiment::prepare(&cfg, exec)?;
            let (model, log) = experiment::train_one(&cfg, &data, p, exec)?;
            fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
            model.save(cfg.output_dir.join("model.json"))?;
            log.write_json_lines(cfg.output_dir.join("train_log.jsonl"))?;
            for e in &log.epochs {
                println!(
                    "epoch {:>3}  lr {:.5}  loss {:.5}  augmented {}/{}",
                    e.epoch, e.learning_rate, e.mean_loss, e.augmented, e.samples
                );
            }
        }
        Command::Cbi { exp, model, pairs } => {
            let mut cfg = exp.load()?;
            cfg.validate()?;
            let data = experiment::prepare(&cfg, exec)?;
            let model = ToyModel::load(&model)?;
            let run = experiment::evaluate(&cfg, &data, &model, exec)?;
            write(&cfg.output_dir.join("cbi.json"), &(serde_json::to_string_pretty(&run)? + "\n"))?;
            let text = run.render_text();
            write(&cfg.output_dir.join("cbi.txt"), &text)?;
            if let Some(path) = pairs {
                run.write_pairs_csv(path)?;
            }
            print!("{text}");
        }
        Command::Sweep { exp, p } => {
            let mut cfg = exp.load()?;
            if !p.is_empty() {
                cfg.p_grid = p;
            }
            let summary = experiment::sweep(&cfg, exec)?;
            print!("{}", summary.render_text());
            let failed = summary.rows.iter().filter(|r| r.result.is_none()).count();
            if failed > 0 {
                warn!("{failed} sweep row(s) failed; see summary.json");
            }
        }
        Command::Preview {
            image,
            asset_index,
            asset_id,
            config,
            seed,
            out,
        } => {
            let img = RasterImage::load_png(&image)?;
            let pool = AssetPool::load_index(&asset_index)?;
            let policy = match &config {
                Some(path) => Some(ExperimentConfig::load(path)?.policy),
                None => None,
            };
            let result = match (&policy, seed) {
                (Some(p), Some(s)) => experiment::preview(&img, &pool, &asset_id, Some((p, s)))?,
                (None, Some(_)) => {
                    return Err(TdaError::Config("--seed needs --config to know the transform ranges".into()))
                }
                _ => experiment::preview(&img, &pool, &asset_id, None)?,
            };
            result.save_png(&out)?;
        }
    }
    Ok(())
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Validation => 2,
        ErrorCategory::Io => 3,
        ErrorCategory::Computation => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
