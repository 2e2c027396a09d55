use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sgt_cli::{
    cmd_ablate, cmd_eval, cmd_gen, cmd_train, worker_count, AblateOptions, EvalOptions, ExperimentConfig, GenOptions,
    TrainOptions,
};
use sgt_core::datagen::Split;

#[derive(Parser)]
#[command(name = "sgt", version, about = "Saliency-guided transformer experiments on SpurShapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a SpurShapes dataset.
    Gen {
        /// Generator spec (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Train one model.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Experiment config the checkpoint must match.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// train, iid_test or ood_test.
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-sample attribution PGMs.
        #[arg(long)]
        dump_maps: Option<PathBuf>,
        #[arg(long)]
        allow_mismatch: bool,
    },
    /// Train and evaluate every cell of the config's ablation grid.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Concurrent cells (default: available cores, capped by SGT_THREADS).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        kappa: Option<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Plain ViT: no mask, no reinjection.
    #[arg(long)]
    baseline: bool,
    /// Overrides the config's dataset root.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

fn resolve(path: &Path, seed: Option<u64>, baseline: bool, dataset: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(d) = dataset {
        cfg.dataset = d;
    }
    Ok(cfg.resolve(seed, baseline)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(None))
        .build_global()
        .context("thread pool")?;
    match cli.command {
        Command::Gen {
            config,
            out,
            seed,
            force,
        } => {
            let counts = cmd_gen(&GenOptions {
                spec: config,
                out: out.clone(),
                seed,
                force,
            })?;
            for (split, n) in counts {
                println!("{split}: {n}");
            }
            println!("wrote {}", out.display());
        }
        Command::Train { run, out, force } => {
            let config = resolve(&run.config, run.seed, run.baseline, run.dataset)?;
            println!("config {}", config.hash());
            let outcome = cmd_train(&TrainOptions { config, out: out.clone(), force }, |r| {
                eprintln!(
                    "epoch {:>3}  lr {:.2e}  loss {:.4}  acc {:.3}  masked {:.2}",
                    r.epoch, r.lr, r.train_loss, r.train_acc, r.masked_batch_fraction
                )
            })?;
            println!(
                "masked {}/{} batches; wrote {}",
                outcome.masked_batches,
                outcome.total_batches,
                out.display()
            );
        }
        Command::Eval {
            checkpoint,
            config,
            seed,
            baseline,
            dataset,
            split,
            kappa,
            out,
            dump_maps,
            allow_mismatch,
        } => {
            let config = config.map(|c| resolve(&c, seed, baseline, None)).transpose()?;
            let r = cmd_eval(&EvalOptions {
                checkpoint,
                dataset,
                split,
                kappa,
                config,
                allow_mismatch,
                out,
                dump_maps,
            })?;
            println!(
                "{} n={} acc {:.4} f1 {:.4} auc {} psl(gradcam) {:.4} psl(rollout) {:.4} kappa {}",
                r.split,
                r.n,
                r.accuracy,
                r.macro_f1,
                r.auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
                r.psl_gradcam,
                r.psl_rollout,
                r.kappa
            );
        }
        Command::Ablate {
            run,
            out,
            force,
            jobs,
            kappa,
        } => {
            let config = resolve(&run.config, run.seed, run.baseline, run.dataset)?;
            let rows = cmd_ablate(
                &AblateOptions {
                    config,
                    out: out.clone(),
                    force,
                    jobs,
                    kappa,
                },
                |cell, r| eprintln!("cell {cell:>3} epoch {:>3} loss {:.4} acc {:.3}", r.epoch, r.train_loss, r.train_acc),
            )?;
            println!("{} cells; wrote {}", rows.len(), out.join(sgt_cli::SUMMARY_FILE).display());
        }
    }
    Ok(())
}
