use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pvo_core::expert::{generate_demonstrations, load_demos_on_canvas, save_demos};
use pvo_core::gridworld::{generate_maze_on, MazeStyle};
use pvo_core::harness::artifacts::{save_values, ValueSidecar};
use pvo_core::harness::pipeline::{comparison_level, eval_maze};
use pvo_core::harness::verify::run_checks;
use pvo_core::harness::{
    export_heatmap, load_values, run_rl_comparison, run_value_pipeline, ExperimentConfig,
};
use pvo_core::pvo::{evaluate_values, train_values, BackendKind};
use pvo_core::rl::{train_agent, write_metrics_csv, AgentMode};
use pvo_core::{Error, Result};

/// Values from action-free maze demonstrations, and Q-learning agents that use them.
#[derive(Parser, Debug)]
#[command(name = "pvo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate expert demonstrations as JSONL.
    GenDemos {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Destination file; defaults to `<output_dir>/demos.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a value function on a demonstration file.
    TrainValues {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render held-out heatmaps. Without `--values` the full value pipeline runs.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        values: Option<PathBuf>,
    },
    /// Train one agent on one level and write its metrics CSV.
    TrainAgent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "sparse_baseline")]
        mode: AgentMode,
        /// Required for the value-based modes.
        #[arg(long)]
        values: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every mode on every configured level, with a summary.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
    },
    /// Run the invariant checks; exits 3 on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args, Debug)]
struct Common {
    /// TOML or JSON experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    canvas: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    style: Option<MazeStyle>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    train_sizes: Option<Vec<usize>>,
    #[arg(long)]
    eval_size: Option<usize>,
    #[arg(long)]
    demo_count: Option<usize>,
    /// `tabular` or `mlp`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    heatmap_count: Option<usize>,
    #[arg(long)]
    rl_size: Option<usize>,
    #[arg(long)]
    rl_style: Option<MazeStyle>,
    #[arg(long, value_delimiter = ',')]
    rl_seeds: Option<Vec<u64>>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, seed: u64) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        c.seed = seed;
        if let Some(g) = self.gamma {
            c = c.with_gamma(g);
        }
        if let Some(v) = self.canvas {
            c.canvas = v;
        }
        if let Some(v) = self.style {
            c.style = v;
        }
        if let Some(v) = &self.train_sizes {
            c.train_sizes = [v[0], v[1]];
        }
        if let Some(v) = self.eval_size {
            c.eval_size = v;
        }
        if let Some(v) = self.demo_count {
            c.demo_count = v;
        }
        if let Some(v) = &self.backend {
            c.value_backend = match v.as_str() {
                "tabular" => BackendKind::Tabular,
                "mlp" => BackendKind::default(),
                other => return Err(Error::Config(format!("unknown backend {other:?}"))),
            };
        }
        if let Some(v) = self.epochs {
            c.pvo.epochs = v;
        }
        if let Some(v) = self.heatmap_count {
            c.heatmap_count = v;
        }
        if let Some(v) = self.rl_size {
            c.rl.size = v;
        }
        if let Some(v) = self.rl_style {
            c.rl.style = v;
        }
        if let Some(v) = &self.rl_seeds {
            c.rl.seeds = v.clone();
        }
        if let Some(v) = self.max_steps {
            c.rl.agent.max_steps = v;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn mkdir_for(path: &std::path::Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            std::fs::create_dir_all(p).map_err(|e| Error::Io { path: p.into(), source: e })
        }
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDemos { common, seed, out } => {
            let c = common.resolve(seed)?;
            let out = out.unwrap_or_else(|| c.output_dir.join("demos.jsonl"));
            let set = generate_demonstrations(&c.demo_config(c.style), c.demo_count, seed)?;
            mkdir_for(&out)?;
            save_demos(&set, &out)?;
            println!("wrote {} trajectories to {}", set.len(), out.display());
        }
        Command::TrainValues { common, seed, demos, out } => {
            let c = common.resolve(seed)?;
            let set = load_demos_on_canvas(&demos, c.canvas)?;
            if set.config.gamma != c.gamma {
                return Err(Error::Config(format!(
                    "demonstrations were generated with gamma {}, config says {}",
                    set.config.gamma, c.gamma
                )));
            }
            let (vf, report) = train_values::<f64>(&set, &c.pvo, &c.value_backend, seed)?;
            let sidecar = ValueSidecar {
                backend: match c.value_backend {
                    BackendKind::Tabular => "tabular".into(),
                    BackendKind::Mlp { .. } => "mlp".into(),
                },
                gamma: c.gamma,
                demo_file_hash: pvo_core::harness::artifacts::hash_file(&demos)?,
                seed,
                epochs: c.pvo.epochs,
            };
            mkdir_for(&out)?;
            save_values(&vf, &out, &sidecar)?;
            println!(
                "trained on {} trajectories; final holdout mse {:.3e}; wrote {}",
                report.train_trajectories,
                report.holdout_loss.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Heatmap { common, seed, values } => {
            let c = common.resolve(seed)?;
            match values {
                None => {
                    let o = run_value_pipeline(&c)?;
                    println!(
                        "{} heatmaps in {}; median spearman {:.3}; argmax near goal {}/{}",
                        o.scores.len(),
                        o.output_dir.display(),
                        o.median_spearman,
                        o.argmax_near_goal,
                        o.scores.len()
                    );
                }
                Some(path) => {
                    let (vf, _) = load_values::<f64>(&path)?;
                    let dir = c.output_dir.join("heatmaps");
                    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                    for i in 0..c.heatmap_count {
                        let maze = eval_maze(&c, i)?;
                        let grid = evaluate_values(&vf, &maze)?;
                        export_heatmap(&grid, dir.join(format!("maze_{i:02}")))?;
                    }
                    println!("{} heatmaps in {}", c.heatmap_count, dir.display());
                }
            }
        }
        Command::TrainAgent { common, seed, mode, values, out } => {
            let c = common.resolve(seed)?;
            let vf = match (&values, mode.needs_values()) {
                (Some(p), true) => Some(load_values::<f64>(p)?.0),
                (None, true) => {
                    return Err(Error::Config(format!("mode {} needs --values", mode.name())))
                }
                _ => None,
            };
            let level = if c.rl.seeds.contains(&seed) {
                comparison_level(&c, seed)?
            } else {
                generate_maze_on(c.canvas, seed, c.rl.size, c.rl.size, c.rl.style)?
            };
            let agent = pvo_core::rl::AgentConfig { mode, ..c.rl.agent.clone() };
            let (_, trace) = train_agent(&level, &agent, vf.as_ref(), seed)?;
            let out = out.unwrap_or_else(|| {
                c.output_dir.join(format!("metrics_{}_seed{seed}.csv", mode.name()))
            });
            mkdir_for(&out)?;
            let file = std::fs::File::create(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            write_metrics_csv(&trace, std::io::BufWriter::new(file))?;
            println!(
                "final success {:.2}; steps to {:.0}% {}; wrote {}",
                trace.final_success_rate(),
                c.rl.success_threshold * 100.0,
                trace
                    .steps_to_success(c.rl.success_threshold)
                    .map_or("never".to_string(), |s| s.to_string()),
                out.display()
            );
        }
        Command::Compare { common, seed } => {
            let c = common.resolve(seed)?;
            let o = run_rl_comparison(&c)?;
            println!("mode,median_steps,q25,q75,median_final_success");
            for s in &o.summary {
                println!(
                    "{},{},{},{},{}",
                    s.mode.name(),
                    s.median_steps_to_threshold,
                    s.q25_steps,
                    s.q75_steps,
                    s.median_final_success
                );
            }
            println!("outputs in {}", o.output_dir.display());
        }
        Command::Verify { common, seed } => {
            let c = common.resolve(seed)?;
            let outcomes = run_checks(seed, c.gamma);
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(Error::Verification(format!("{failed} check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Size(_) | Error::Usage(_) => 2,
                Error::Verification(_) => 3,
                _ => 1,
            })
        }
    }
}
