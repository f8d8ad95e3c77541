use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use reassembly::data::{generate_tasks, read_dataset, write_dataset, Task, TaskKind};
use reassembly::pipeline::bench::{bench, write_outputs};
use reassembly::pipeline::{self, ablate, evaluate, headline, solve, Checkpoint, RunConfig, Trainer};
use reassembly::{Error, Result};

#[derive(Parser)]
#[command(name = "reassemble", version, about = "Graph diffusion reassembly of puzzles and fragments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["puzzle2d", "frag3d"])]
        task: Option<String>,
        /// Puzzle grid sides, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Fragment counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        pieces: Vec<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        rotate: Option<bool>,
        #[arg(long)]
        missing: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from the checkpoint instead of starting fresh.
        #[arg(long)]
        resume: bool,
    },
    /// Solve dataset instances with a trained model.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Solve only this instance.
        #[arg(long)]
        instance: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over the configured seeds.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time dense and sparse solves across puzzle sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate each configured variant.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let base = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    base.with_overrides(&common.overrides)
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.paths.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn checkpoint_path(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.paths.checkpoint.clone()).unwrap_or_else(|| output_dir(cfg, None).join("model.ckpt"))
}

/// Reads the dataset named on the command line or in the config, or
/// generates one from `cfg.data`.
fn tasks(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<Vec<Task>> {
    match flag.or_else(|| cfg.paths.dataset.clone()) {
        Some(p) => {
            eprintln!("reading {}", p.display());
            read_dataset(&p)
        }
        None => {
            eprintln!("generating {} {:?} instances", cfg.data.count, cfg.task);
            let mut gen = cfg.data.clone();
            gen.task = cfg.task;
            generate_tasks(&gen)
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Checkpoint plus the run configuration to sample with: the explicit
/// `--config` when given, otherwise the one stored in the checkpoint.
fn restore(common: &Common, flag: Option<PathBuf>) -> Result<(Checkpoint, RunConfig)> {
    let probe = load_config(common)?;
    let ck = Checkpoint::load(&checkpoint_path(&probe, flag))?;
    let cfg = match &common.config {
        Some(_) => probe,
        None => ck.config.with_overrides(&common.overrides)?,
    };
    Ok((ck, cfg))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, task, n, pieces, count, rotate, missing, seed, out } => {
            let mut cfg = load_config(&common)?;
            let gen = &mut cfg.data;
            gen.task = match task.as_deref() {
                Some("frag3d") => TaskKind::Frag3d,
                Some(_) => TaskKind::Puzzle2d,
                None => cfg.task,
            };
            if !n.is_empty() {
                gen.grid_sizes = n;
            }
            if !pieces.is_empty() {
                gen.piece_counts = pieces;
            }
            gen.count = count.unwrap_or(gen.count);
            gen.rotate = rotate.unwrap_or(gen.rotate);
            gen.missing = missing.unwrap_or(gen.missing);
            gen.seed = seed.unwrap_or(gen.seed);
            let path = out.or_else(|| cfg.paths.dataset.clone()).unwrap_or_else(|| PathBuf::from("dataset.bin"));
            let tasks = generate_tasks(&cfg.data)?;
            write_dataset(&path, &tasks)?;
            eprintln!("wrote {} instances to {}", tasks.len(), path.display());
        }
        Command::Train { common, data, checkpoint, resume } => {
            let cfg = load_config(&common)?;
            let path = checkpoint_path(&cfg, checkpoint);
            let tasks = tasks(&cfg, data)?;
            let mut trainer = if resume { Checkpoint::load(&path)?.trainer()? } else { Trainer::new(cfg.clone())? };
            let summary = pipeline::fit(&mut trainer, &tasks, |line| eprintln!("{line}"))?;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Checkpoint::of(&trainer).save(&path)?;
            eprintln!("stopped ({:?}) after {} epochs; wrote {}", summary.stop, trainer.epoch, path.display());
            write_json(&output_dir(&cfg, None).join("train.json"), &summary)?;
        }
        Command::Solve { common, data, checkpoint, instance, seed, out } => {
            let (ck, cfg) = restore(&common, checkpoint)?;
            let model = ck.model()?;
            let tasks = tasks(&cfg, data)?;
            let picked: Vec<usize> = match instance {
                Some(i) if i >= tasks.len() => {
                    return Err(Error::Config(format!("instance {i} out of range ({} in dataset)", tasks.len())))
                }
                Some(i) => vec![i],
                None => (0..tasks.len()).collect(),
            };
            let mut solved = Vec::with_capacity(picked.len());
            for i in picked {
                let poses = solve(&model, &tasks[i], &cfg, seed)?;
                let rows: Vec<Vec<f64>> = poses.iter().map(|p| p.state()).collect();
                solved.push(json!({ "instance": i, "seed": seed, "poses": rows }));
            }
            write_json(&out.unwrap_or_else(|| output_dir(&cfg, None).join("solutions.json")), &solved)?;
        }
        Command::Eval { common, data, checkpoint, out } => {
            let (ck, cfg) = restore(&common, checkpoint)?;
            let model = ck.model()?;
            let tasks = tasks(&cfg, data)?;
            let report = evaluate(&model, &tasks, &cfg)?;
            println!(
                "instances {}  rmse_rot {:.2}±{:.2} deg  rmse_tr {:.4}±{:.4}  headline {:.4}",
                report.instances,
                report.rmse_rotation_deg.mean,
                report.rmse_rotation_deg.std,
                report.rmse_translation.mean,
                report.rmse_translation.std,
                headline(&report, cfg.task)
            );
            write_json(&output_dir(&cfg, out).join("report.json"), &report)?;
        }
        Command::Bench { common, out } => {
            let cfg = load_config(&common)?;
            let rows = bench(&cfg)?;
            print!("{}", reassembly::pipeline::bench::to_csv(&rows));
            let dir = output_dir(&cfg, out);
            write_outputs(&rows, &dir)?;
            eprintln!("wrote bench outputs to {}", dir.display());
        }
        Command::Ablate { common, data, out } => {
            let cfg = load_config(&common)?;
            let tasks = tasks(&cfg, data)?;
            let rows = ablate(&cfg, &tasks, |line| eprintln!("{line}"))?;
            let dir = output_dir(&cfg, out);
            let mut csv = String::from("variant,epochs,final_loss,accuracy,rmse_rotation_deg,rmse_translation\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{:.6},{:.4},{:.3},{:.5}\n",
                    r.name, r.epochs, r.final_loss, r.accuracy, r.report.rmse_rotation_deg.mean, r.report.rmse_translation.mean
                ));
            }
            print!("{csv}");
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("ablation.csv"), csv)?;
            write_json(&dir.join("ablation.json"), &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
