use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifacts::{hash_file, load_values, save_values, seal, sealed_digest, ValueSidecar};
use super::config::ExperimentConfig;
use super::heatmap::export_heatmap;
use super::stats::{median, quantile, spearman};
use super::{derive_seed, sha256_hex};
use crate::error::{Error, Result};
use crate::expert::{generate_demonstrations, load_demos_on_canvas, save_demos};
use crate::gridworld::{generate_maze_on, Maze, MazeStyle, Pos};
use crate::pvo::{evaluate_values, pvo_target, train_values, BackendKind, ValueFunction};
use crate::rl::{train_agent, write_metrics_csv, AgentConfig, AgentMode};

const EVAL_MAZE_TAG: u64 = 0x6576_616c;
const LEVEL_TAG: u64 = 0x6c65_7665_6c;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// What a run produced and the digests needed to check it later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub demo_file_hash: Option<String>,
    pub value_snapshot_hash: Option<String>,
    pub files: Vec<FileRecord>,
    /// Pipeline stages satisfied from earlier runs.
    pub cache_hits: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    /// Re-hashes every listed file.
    pub fn verify(&self, root: impl AsRef<Path>) -> Result<()> {
        for f in &self.files {
            let actual = hash_file(root.as_ref().join(&f.path))?;
            if actual != f.sha256 {
                return Err(Error::Verification(format!("{} changed since the run", f.path)));
            }
        }
        Ok(())
    }

    fn record(&mut self, root: &Path, path: &Path) -> Result<()> {
        let rel = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.files.push(FileRecord {
            path: rel,
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn short(hash: &str) -> &str {
    &hash[..16]
}

/// Demonstrations and a trained value function, reused across runs when the
/// inputs hash the same.
pub struct ValueArtifacts {
    pub demo_path: PathBuf,
    pub demo_hash: String,
    pub value_path: PathBuf,
    pub value_hash: String,
    pub values: ValueFunction<f64>,
    pub cache_hits: Vec<String>,
}

pub fn ensure_values(config: &ExperimentConfig, style: MazeStyle) -> Result<ValueArtifacts> {
    let out = &config.output_dir;
    let mut cache_hits = Vec::new();
    let demo_cfg = config.demo_config(style);

    let demo_key = sha256_hex(
        json!({ "demos": demo_cfg, "count": config.demo_count, "seed": config.seed })
            .to_string()
            .as_bytes(),
    );
    let demo_dir = out.join("demos");
    mkdir(&demo_dir)?;
    let demo_path = demo_dir.join(format!("demos-{style}-{}.jsonl", short(&demo_key)));
    let demo_hash = match sealed_digest(&demo_path) {
        Some(h) => {
            cache_hits.push("demos".to_string());
            h
        }
        None => {
            let set = generate_demonstrations(&demo_cfg, config.demo_count, config.seed)?;
            save_demos(&set, &demo_path)?;
            seal(&demo_path)?
        }
    };

    let value_key = sha256_hex(
        json!({
            "demo_hash": demo_hash,
            "pvo": config.pvo,
            "backend": config.value_backend,
            "seed": config.seed,
        })
        .to_string()
        .as_bytes(),
    );
    let value_dir = out.join("values");
    mkdir(&value_dir)?;
    let ext = match config.value_backend {
        BackendKind::Mlp { .. } => "bin",
        BackendKind::Tabular => "json",
    };
    let value_path = value_dir.join(format!("values-{}.{ext}", short(&value_key)));
    let (values, value_hash) = match sealed_digest(&value_path) {
        Some(h) => {
            cache_hits.push("values".to_string());
            (load_values::<f64>(&value_path)?.0, h)
        }
        None => {
            let demos = load_demos_on_canvas(&demo_path, config.canvas)?;
            let (vf, report) =
                train_values::<f64>(&demos, &config.pvo, &config.value_backend, config.seed)?;
            let sidecar = ValueSidecar {
                backend: ext_backend(&config.value_backend).to_string(),
                gamma: config.gamma,
                demo_file_hash: demo_hash.clone(),
                seed: config.seed,
                epochs: config.pvo.epochs,
            };
            save_values(&vf, &value_path, &sidecar)?;
            let loss_path = value_path.with_extension("loss.csv");
            let mut text = String::from("epoch,mean_train_loss,holdout_mse\n");
            let per_epoch = report.loss_trace.len() / config.pvo.epochs;
            for e in 0..config.pvo.epochs {
                let chunk = &report.loss_trace[e * per_epoch..(e + 1) * per_epoch];
                let mean = chunk.iter().sum::<f64>() / chunk.len().max(1) as f64;
                let held = report.holdout_loss.get(e).map_or(String::new(), |h| h.to_string());
                text.push_str(&format!("{},{mean},{held}\n", e + 1));
            }
            fs::write(&loss_path, text).map_err(|e| Error::io(&loss_path, e))?;
            (vf, seal(&value_path)?)
        }
    };
    Ok(ValueArtifacts {
        demo_path,
        demo_hash,
        value_path,
        value_hash,
        values,
        cache_hits,
    })
}

fn ext_backend(kind: &BackendKind) -> &'static str {
    match kind {
        BackendKind::Mlp { .. } => "mlp",
        BackendKind::Tabular => "tabular",
    }
}

/// Agreement between a learned value map and the ideal `γ^d` map of one maze.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeScore {
    pub index: usize,
    pub seed: u64,
    /// Spearman correlation over cells that can reach the goal.
    pub spearman: f64,
    pub argmax: Pos,
    /// The highest-valued cell is the goal or next to it.
    pub argmax_near_goal: bool,
}

pub fn score_maze(vf: &ValueFunction<f64>, maze: &Maze, gamma: f64) -> Result<MazeScore> {
    let grid = evaluate_values(vf, maze)?;
    Ok(score_grid(&grid, maze, gamma, 0, maze.seed()))
}

fn score_grid(grid: &crate::pvo::ValueGrid, maze: &Maze, gamma: f64, index: usize, seed: u64) -> MazeScore {
    let dist = maze.distances_to_goal();
    let (mut learned, mut ideal) = (Vec::new(), Vec::new());
    for (p, v) in grid.present() {
        if let Some(d) = dist[maze.index(p)] {
            learned.push(v);
            ideal.push(pvo_target(d + 1, 0, &gamma).expect("t < T"));
        }
    }
    let argmax = grid.argmax().expect("maze has empty cells");
    MazeScore {
        index,
        seed,
        spearman: spearman(&learned, &ideal),
        argmax,
        argmax_near_goal: argmax.manhattan(maze.goal()) <= 1,
    }
}

pub struct ValuePipelineOutput {
    pub manifest: RunManifest,
    pub scores: Vec<MazeScore>,
    pub median_spearman: f64,
    pub argmax_near_goal: usize,
    pub output_dir: PathBuf,
}

/// Held-out evaluation maze `i` for an experiment.
pub fn eval_maze(config: &ExperimentConfig, i: usize) -> Result<Maze> {
    let seed = derive_seed(config.seed, EVAL_MAZE_TAG, i as u64);
    generate_maze_on(config.canvas, seed, config.eval_size, config.eval_size, config.style)
}

/// Demonstrations → values → heatmaps and rank correlations on held-out
/// mazes of `eval_size`.
pub fn run_value_pipeline(config: &ExperimentConfig) -> Result<ValuePipelineOutput> {
    config.validate()?;
    let started = Instant::now();
    let root = config.output_dir.clone();
    mkdir(&root)?;
    let art = ensure_values(config, config.style)?;
    let mut manifest = RunManifest {
        kind: "values".into(),
        config_hash: config.hash(),
        demo_file_hash: Some(art.demo_hash.clone()),
        value_snapshot_hash: Some(art.value_hash.clone()),
        files: Vec::new(),
        cache_hits: art.cache_hits.clone(),
        wall_clock_secs: 0.0,
    };
    manifest.record(&root, &art.demo_path)?;
    manifest.record(&root, &art.value_path)?;

    let stem = art
        .value_path
        .file_stem()
        .unwrap()
        .to_string_lossy()
        .into_owned();
    let dir = root.join(format!("heatmaps-{stem}-{}", config.eval_size));
    mkdir(&dir)?;
    let mut scores = Vec::with_capacity(config.heatmap_count);
    for i in 0..config.heatmap_count {
        let maze = eval_maze(config, i)?;
        let grid = evaluate_values(&art.values, &maze)?;
        let (csv, pgm) = export_heatmap(&grid, dir.join(format!("maze_{i:02}")))?;
        manifest.record(&root, &csv)?;
        manifest.record(&root, &pgm)?;
        scores.push(score_grid(&grid, &maze, config.gamma, i, maze.seed()));
    }

    let corr_path = dir.join("correlations.csv");
    let mut text = String::from("maze,seed,spearman,argmax_row,argmax_col,argmax_near_goal\n");
    for s in &scores {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.index, s.seed, s.spearman, s.argmax.row, s.argmax.col, s.argmax_near_goal
        ));
    }
    fs::write(&corr_path, text).map_err(|e| Error::io(&corr_path, e))?;
    manifest.record(&root, &corr_path)?;

    let rhos: Vec<f64> = scores.iter().map(|s| s.spearman).collect();
    let median_spearman = median(&rhos);
    let argmax_near_goal = scores.iter().filter(|s| s.argmax_near_goal).count();
    let summary_path = dir.join("summary.json");
    let summary = json!({
        "mazes": scores.len(),
        "eval_size": config.eval_size,
        "style": config.style,
        "median_spearman": median_spearman,
        "argmax_near_goal": argmax_near_goal,
    });
    fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())
        .map_err(|e| Error::io(&summary_path, e))?;
    manifest.record(&root, &summary_path)?;

    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(&root.join("manifest_values.json"))?;
    Ok(ValuePipelineOutput {
        manifest,
        scores,
        median_spearman,
        argmax_near_goal,
        output_dir: dir,
    })
}

/// The unseen level a comparison seed trains on; shared by every mode.
pub fn comparison_level(config: &ExperimentConfig, seed: u64) -> Result<Maze> {
    let size = config.rl.size;
    generate_maze_on(
        config.canvas,
        derive_seed(seed, LEVEL_TAG, 0),
        size,
        size,
        config.rl.style,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: AgentMode,
    pub seed: u64,
    pub steps_to_threshold: Option<usize>,
    pub final_success_rate: f64,
    pub metrics_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: AgentMode,
    /// Runs that never reached the threshold count as infinite.
    pub median_steps_to_threshold: f64,
    pub q25_steps: f64,
    pub q75_steps: f64,
    pub median_final_success: f64,
    pub runs_reaching_threshold: usize,
}

pub struct RlComparisonOutput {
    pub manifest: RunManifest,
    pub runs: Vec<RunResult>,
    pub summary: Vec<ModeSummary>,
    pub output_dir: PathBuf,
}

/// Every mode × seed on the seed's level, run concurrently; per-run metric
/// CSVs plus a cross-mode summary.
pub fn run_rl_comparison(config: &ExperimentConfig) -> Result<RlComparisonOutput> {
    config.validate()?;
    let started = Instant::now();
    let root = config.output_dir.clone();
    mkdir(&root)?;
    let rl = &config.rl;

    let mut manifest = RunManifest {
        kind: "rl".into(),
        config_hash: config.hash(),
        demo_file_hash: None,
        value_snapshot_hash: None,
        files: Vec::new(),
        cache_hits: Vec::new(),
        wall_clock_secs: 0.0,
    };
    let needs_values = rl.modes.iter().any(|m| m.needs_values());
    let (values, value_tag) = if !needs_values {
        (None, "none".to_string())
    } else if let Some(path) = &rl.value_snapshot {
        let (vf, side) = load_values::<f64>(path)?;
        let h = hash_file(path)?;
        manifest.demo_file_hash = Some(side.demo_file_hash);
        manifest.value_snapshot_hash = Some(h.clone());
        (Some(vf), short(&h).to_string())
    } else {
        let art = ensure_values(config, rl.style)?;
        manifest.cache_hits = art.cache_hits;
        manifest.demo_file_hash = Some(art.demo_hash.clone());
        manifest.value_snapshot_hash = Some(art.value_hash.clone());
        manifest.record(&root, &art.demo_path)?;
        manifest.record(&root, &art.value_path)?;
        (Some(art.values), short(&art.value_hash).to_string())
    };
    if let Some(v) = &values {
        if v.gamma != rl.agent.gamma {
            return Err(Error::Config(format!(
                "value snapshot gamma {} differs from agent gamma {}",
                v.gamma, rl.agent.gamma
            )));
        }
    }

    let agent_key = sha256_hex(
        json!({ "rl_size": rl.size, "rl_style": rl.style, "agent": rl.agent, "canvas": config.canvas })
            .to_string()
            .as_bytes(),
    );
    let dir = root.join(format!("rl-{value_tag}-{}", short(&agent_key)));
    mkdir(&dir)?;

    let jobs: Vec<(AgentMode, u64)> = rl
        .modes
        .iter()
        .flat_map(|&m| rl.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(mode, seed)| -> Result<RunResult> {
            let level = comparison_level(config, seed)?;
            let agent = AgentConfig {
                mode,
                ..rl.agent.clone()
            };
            let vf = if mode.needs_values() { values.as_ref() } else { None };
            let (_, trace) = train_agent(&level, &agent, vf, seed)?;
            let path = dir.join(format!("metrics_{}_seed{seed}.csv", mode.name()));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_metrics_csv(&trace, std::io::BufWriter::new(file))?;
            Ok(RunResult {
                mode,
                seed,
                steps_to_threshold: trace.steps_to_success(rl.success_threshold),
                final_success_rate: trace.final_success_rate(),
                metrics_path: path,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &runs {
        manifest.record(&root, &r.metrics_path)?;
    }

    let summary: Vec<ModeSummary> = rl
        .modes
        .iter()
        .map(|&mode| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.mode == mode).collect();
            let steps: Vec<f64> = mine
                .iter()
                .map(|r| r.steps_to_threshold.map_or(f64::INFINITY, |s| s as f64))
                .collect();
            let finals: Vec<f64> = mine.iter().map(|r| r.final_success_rate).collect();
            ModeSummary {
                mode,
                median_steps_to_threshold: median(&steps),
                q25_steps: quantile(&steps, 0.25),
                q75_steps: quantile(&steps, 0.75),
                median_final_success: median(&finals),
                runs_reaching_threshold: steps.iter().filter(|s| s.is_finite()).count(),
            }
        })
        .collect();
    let summary_path = dir.join("summary.csv");
    let mut text = String::from(
        "mode,median_steps_to_threshold,q25_steps,q75_steps,median_final_success,runs_reaching_threshold\n",
    );
    for s in &summary {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.mode.name(),
            s.median_steps_to_threshold,
            s.q25_steps,
            s.q75_steps,
            s.median_final_success,
            s.runs_reaching_threshold
        ));
    }
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;
    manifest.record(&root, &summary_path)?;

    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(&root.join("manifest_rl.json"))?;
    Ok(RlComparisonOutput {
        manifest,
        runs,
        summary,
        output_dir: dir,
    })
}
