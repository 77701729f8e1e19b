use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kfid_core::config::Config;
use kfid_core::pipeline;

/// Keyframe identification and jersey number recognition on player tracklets.
#[derive(Parser, Debug)]
#[command(name = "kfid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset with train/val/test splits.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Identify keyframes and write per-tracklet outputs and statistics.
    Kfid {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Train the classifier and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Evaluate a checkpoint and report tracklet accuracy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Directory for report.csv and report.txt.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train and evaluate with keyframes on and off.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Directory for the paired reports.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = Config::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        bail!("{}: not a directory", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = load_config(&common)?;
            let meta = pipeline::cmd_synth(&cfg, &out)?;
            println!(
                "wrote {} tracklets to {} (seed {})",
                meta.tracklets.len(),
                out.display(),
                cfg.synth.seed
            );
        }
        Command::Kfid { common, data, out } => {
            let cfg = load_config(&common)?;
            require_dir(&data)?;
            let report = pipeline::cmd_kfid(&data, &cfg, &out)?;
            print!("{}", report.summary());
        }
        Command::Train {
            common,
            data,
            checkpoint,
        } => {
            let cfg = load_config(&common)?;
            require_dir(&data)?;
            let log = pipeline::cmd_train(&data, &cfg, &checkpoint)?;
            let last = log.last().context("no training iterations were run")?;
            println!(
                "trained {} iterations, final loss {:.6}; checkpoint {}",
                log.len(),
                last.loss,
                checkpoint.display()
            );
        }
        Command::Eval {
            common,
            data,
            checkpoint,
            out,
        } => {
            let cfg = load_config(&common)?;
            require_dir(&data)?;
            let report = pipeline::cmd_eval(&data, &checkpoint, &cfg)?;
            if let Some(dir) = out {
                report.write(&dir)?;
            }
            print!("{}", report.to_table());
        }
        Command::Ablate { common, data, out } => {
            let cfg = load_config(&common)?;
            require_dir(&data)?;
            let report = pipeline::cmd_ablate(&data, &cfg)?;
            if let Some(dir) = out {
                report.on.write(&dir.join("kfid_on"))?;
                report.off.write(&dir.join("kfid_off"))?;
                std::fs::write(dir.join("ablation.txt"), report.summary())
                    .with_context(|| format!("writing {}", dir.display()))?;
            }
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}
