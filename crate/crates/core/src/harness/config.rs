use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::DemoConfig;
use crate::gridworld::{MazeStyle, DEFAULT_CANVAS, MIN_SIZE};
use crate::pvo::{BackendKind, PvoConfig};
use crate::rl::{AgentConfig, AgentMode};

/// Every knob of an experiment. Loadable from TOML or JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub canvas: usize,
    /// Inclusive range of square maze sides used for demonstrations.
    pub train_sizes: [usize; 2],
    /// Side of the held-out evaluation mazes.
    pub eval_size: usize,
    pub style: MazeStyle,
    pub demo_count: usize,
    pub gamma: f64,
    pub pvo: PvoConfig,
    pub value_backend: BackendKind,
    /// Held-out mazes rendered as heatmaps.
    pub heatmap_count: usize,
    pub rl: RlConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub size: usize,
    pub style: MazeStyle,
    /// One unseen level per seed, shared by every mode.
    pub seeds: Vec<u64>,
    pub modes: Vec<AgentMode>,
    pub agent: AgentConfig,
    pub success_threshold: f64,
    /// Pre-trained values; when absent they are trained on demonstrations
    /// of `style` with the top-level settings.
    pub value_snapshot: Option<PathBuf>,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            size: 8,
            style: MazeStyle::Obstacles,
            seeds: vec![0, 1, 2, 3, 4],
            modes: AgentMode::ALL.to_vec(),
            agent: AgentConfig::default(),
            success_threshold: 0.9,
            value_snapshot: None,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            canvas: DEFAULT_CANVAS,
            train_sizes: [4, 10],
            eval_size: 12,
            style: MazeStyle::Empty,
            demo_count: 1000,
            gamma: 0.99,
            pvo: PvoConfig::default(),
            value_backend: BackendKind::default(),
            heatmap_count: 20,
            rl: RlConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => {
                return Err(Error::Config(format!(
                    "{}: config must be .toml or .json",
                    path.display()
                )))
            }
        };
        Ok(config)
    }

    /// Copies the top-level γ into the nested configs.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self.pvo.gamma = gamma;
        self.rl.agent.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.train_sizes;
        if lo < MIN_SIZE || lo > hi || hi > self.canvas {
            return Err(Error::Config(format!(
                "training sizes [{lo}, {hi}] must lie in [{MIN_SIZE}, {}]",
                self.canvas
            )));
        }
        for (name, size) in [("eval_size", self.eval_size), ("rl.size", self.rl.size)] {
            if size < MIN_SIZE || size > self.canvas {
                return Err(Error::Config(format!(
                    "{name} {size} must lie in [{MIN_SIZE}, {}]",
                    self.canvas
                )));
            }
        }
        if self.pvo.gamma != self.gamma || self.rl.agent.gamma != self.gamma {
            return Err(Error::Config(format!(
                "gamma mismatch: top-level {}, pvo {}, agent {}",
                self.gamma, self.pvo.gamma, self.rl.agent.gamma
            )));
        }
        if self.demo_count == 0 {
            return Err(Error::Config("demo_count must be positive".into()));
        }
        if self.rl.seeds.is_empty() || self.rl.modes.is_empty() {
            return Err(Error::Config("rl.seeds and rl.modes must be nonempty".into()));
        }
        let mut seeds = self.rl.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.rl.seeds.len() {
            return Err(Error::Config("rl.seeds contains duplicates".into()));
        }
        self.pvo.validate()?;
        self.rl.agent.validate()
    }

    pub fn demo_config(&self, style: MazeStyle) -> DemoConfig {
        DemoConfig {
            canvas: self.canvas,
            gamma: self.gamma,
            style,
            size_range: self.train_sizes,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        super::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn gamma_mismatch_rejected() {
        let mut c = ExperimentConfig::default();
        c.pvo.gamma = 0.9;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c = c.with_gamma(0.9);
        c.validate().unwrap();
    }

    #[test]
    fn sizes_must_fit_canvas() {
        let c = ExperimentConfig {
            eval_size: 13,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            train_sizes: [3, 10],
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn loads_toml_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "demo_count = 50\nstyle = \"obstacles\"\n[pvo]\nepochs = 3\n[rl]\nseeds = [7, 8]\nmodes = [\"pvo_value\"]\n[rl.agent]\nmax_steps = 500\n",
        )
        .unwrap();
        let c = ExperimentConfig::from_file(&toml_path).unwrap();
        assert_eq!(c.demo_count, 50);
        assert_eq!(c.style, MazeStyle::Obstacles);
        assert_eq!(c.pvo.epochs, 3);
        assert_eq!(c.rl.seeds, vec![7, 8]);
        assert_eq!(c.rl.modes, vec![AgentMode::PvoValue]);
        assert_eq!(c.rl.agent.max_steps, 500);

        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::from_file(&json_path).unwrap(), c);

        std::fs::write(&toml_path, "no_such_field = 1\n").unwrap();
        assert!(matches!(ExperimentConfig::from_file(&toml_path), Err(Error::Config(_))));
    }
}
