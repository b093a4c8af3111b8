//! Experiment orchestration: configuration, the value and RL pipelines,
//! artifact export and the invariant suite behind `pvo verify`.

pub mod artifacts;
pub mod config;
pub mod heatmap;
pub mod pipeline;
pub mod stats;
pub mod verify;

use sha2::{Digest, Sha256};

pub use artifacts::{load_values, save_values, ValueSidecar};
pub use config::{ExperimentConfig, RlConfig};
pub use heatmap::{export_heatmap, read_heatmap_csv};
pub use pipeline::{
    comparison_level, ensure_values, eval_maze, run_rl_comparison, run_value_pipeline, score_maze,
    MazeScore, ModeSummary, RlComparisonOutput, RunManifest, RunResult, ValuePipelineOutput,
};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for the `index`-th item of a tagged stream.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ tag) ^ index)
}
