//! `equikit`: data generation, equivariance certification, training,
//! evaluation and rotation sweeps. `EQUIKIT_THREADS` caps worker threads.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use equikit::detector::{load_checkpoint, load_config};
use equikit::harness::{
    evaluate, load_dataset, rotation_sweep, save_dataset, save_run, sweep_angles, sweep_csv, train, verify_equivariance, DatasetSpec,
    SceneConfig, TrainConfig, VerifyOptions, LAYERS,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "equikit", version, about = "Rotation-equivariant detection toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic dataset (EQTN images plus OBB text files).
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        count: usize,
        /// Scene config (TOML or JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every layer's commutation relation and write an EquivReport.
    Verify {
        #[arg(long, default_value_t = 4)]
        group: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated subset of layers (default: all).
        #[arg(long, value_delimiter = ',')]
        layers: Vec<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Train a detector; writes checkpoint, loss.csv and train.json.
    Train {
        /// Training config (TOML or JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// AP50/AP75 of a checkpoint on a dataset, optionally rotated.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory written by `gen`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        rotate: f64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// mAP over rotation angles `0, step, ... < 360`.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        baseline_ckpt: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        step: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Gen { seed, count, config, out } => {
            let scene = match config {
                Some(p) => load_config::<SceneConfig>(&p)?,
                None => SceneConfig::default(),
            };
            let spec = DatasetSpec { seed, count, scene };
            let scenes = spec.generate()?;
            save_dataset(&spec, &scenes, &out)?;
            eprintln!("wrote {count} scenes to {}", out.display());
        }
        Cmd::Verify {
            group,
            trials,
            seed,
            layers,
            json: path,
        } => {
            let opts = VerifyOptions {
                group,
                trials,
                seed,
                ..VerifyOptions::default()
            };
            let names: Vec<&str> = if layers.is_empty() {
                LAYERS.to_vec()
            } else {
                layers.iter().map(String::as_str).collect()
            };
            let report = verify_equivariance(&opts, &names)?;
            for c in &report.checks {
                let verdict = match (c.pass, c.gated) {
                    (true, _) => "ok",
                    (false, true) => "FAIL",
                    (false, false) => "over (not gated)",
                };
                let cmp = if c.expected_fail { ">" } else { "<" };
                eprintln!(
                    "{:<18} g={} {:>6.1}°  {:.3e} {cmp} {:.1e}  {verdict}",
                    c.layer, c.g, c.angle_deg, c.error, c.tolerance
                );
            }
            eprintln!("{} in {:.1} s", if report.pass { "PASS" } else { "FAIL" }, report.runtime_seconds);
            emit(&json(&report)?, path.as_deref())?;
            return Ok(report.pass);
        }
        Cmd::Train { config, out } => {
            let cfg = match config {
                Some(p) => load_config::<TrainConfig>(&p)?,
                None => TrainConfig::default(),
            };
            std::fs::create_dir_all(&out)?;
            let outcome = train(&cfg, |s| {
                eprintln!(
                    "epoch {:>3}  lr {:.2e}  loss {:.4}  focal {:.4}  giou {:.4}  edge {:.4}",
                    s.epoch, s.lr, s.loss, s.focal, s.giou, s.edge
                )
            })?;
            save_run(&outcome, &cfg, &out)?;
            eprintln!("saved run to {}", out.display());
        }
        Cmd::Eval {
            ckpt,
            data,
            rotate,
            json: path,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let scenes = load_dataset(&data)?;
            emit(&json(&evaluate(&model, &scenes, rotate)?)?, path.as_deref())?;
        }
        Cmd::Sweep {
            ckpt,
            baseline_ckpt,
            data,
            step,
            csv,
        } => {
            anyhow::ensure!(step > 0.0, "--step must be positive");
            let model = load_checkpoint(&ckpt)?;
            let baseline = baseline_ckpt.as_deref().map(load_checkpoint).transpose()?;
            let scenes = load_dataset(&data)?;
            let rows = rotation_sweep(&model, baseline.as_ref(), &scenes, &sweep_angles(step))?;
            emit(&sweep_csv(&rows), csv.as_deref())?;
        }
    }
    Ok(true)
}

fn main() {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
