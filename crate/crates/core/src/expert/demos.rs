use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::astar_solve;
use crate::error::{Error, Result};
use crate::gridworld::{generate_maze_on, Maze, MazeStyle, Observation};

pub const DEMO_SCHEMA_VERSION: u32 = 1;

/// Generation parameters for a demonstration set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub canvas: usize,
    pub gamma: f64,
    pub style: MazeStyle,
    /// Inclusive range of square maze sides.
    pub size_range: [usize; 2],
}

impl DemoConfig {
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.size_range;
        if lo > hi || lo < crate::gridworld::MIN_SIZE || hi > self.canvas {
            return Err(Error::Config(format!(
                "size range [{lo}, {hi}] does not fit canvas {}",
                self.canvas
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeMeta {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub style: MazeStyle,
}

/// State-only expert trajectory; `states[t]` is the observation at step t.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub maze_meta: MazeMeta,
    pub states: Vec<Observation>,
}

impl Trajectory {
    /// Number of observations, `T`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn to_record(&self) -> Result<TrajectoryRecord> {
        let states = self
            .states
            .iter()
            .map(|o| o.to_rows(self.maze_meta.width, self.maze_meta.height))
            .collect::<Result<_>>()?;
        Ok(TrajectoryRecord {
            maze_meta: self.maze_meta,
            states,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub schema_version: u32,
    pub canvas: usize,
    pub gamma: f64,
    pub style: MazeStyle,
    pub size_range: [usize; 2],
    /// Trajectory lines that follow; lets truncation at a line boundary be
    /// detected.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoSet {
    pub config: DemoConfig,
    pub trajectories: Vec<Trajectory>,
}

impl DemoSet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn header(&self) -> DemoHeader {
        DemoHeader {
            schema_version: DEMO_SCHEMA_VERSION,
            canvas: self.config.canvas,
            gamma: self.config.gamma,
            style: self.config.style,
            size_range: self.config.size_range,
            count: self.trajectories.len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    maze_meta: MazeMeta,
    states: Vec<Vec<String>>,
}

/// Generates `count` trajectories, each on a fresh maze. Trajectory `i` draws
/// from its own stream seeded with `rng_seed + i`, so the set is independent
/// of scheduling.
pub fn generate_demonstrations(config: &DemoConfig, count: usize, rng_seed: u64) -> Result<DemoSet> {
    config.validate()?;
    if count == 0 {
        return Err(Error::Config("demonstration count must be positive".into()));
    }
    let trajectories = (0..count as u64)
        .into_par_iter()
        .map(|i| expert_rollout(config, rng_seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DemoSet {
        config: config.clone(),
        trajectories,
    })
}

fn expert_rollout(config: &DemoConfig, stream: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let [lo, hi] = config.size_range;
    let side = rng.gen_range(lo..=hi);
    let seed: u64 = rng.gen();
    let mut maze = generate_maze_on(config.canvas, seed, side, side, config.style)?;
    let actions = astar_solve(&maze)?;
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(maze.observation());
    for a in actions {
        let (next, result) = maze.step(a)?;
        states.push(result.observation);
        maze = next;
    }
    debug_assert!(maze.at_goal());
    Ok(Trajectory {
        maze_meta: MazeMeta {
            seed,
            width: side,
            height: side,
            style: config.style,
        },
        states,
    })
}

/// Writes the JSON Lines demonstration file.
pub fn save_demos(set: &DemoSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write_line = |value: String| -> Result<()> {
        out.write_all(value.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    write_line(serde_json::to_string(&set.header()).expect("header serializes"))?;
    for t in &set.trajectories {
        write_line(serde_json::to_string(&t.to_record()?).expect("record serializes"))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Loads a demonstration file, re-encoding every grid on the header canvas.
pub fn load_demos(path: impl AsRef<Path>) -> Result<DemoSet> {
    load(path.as_ref(), None)
}

/// Like [`load_demos`] but rejects files written for another canvas.
pub fn load_demos_on_canvas(path: impl AsRef<Path>, canvas: usize) -> Result<DemoSet> {
    load(path.as_ref(), Some(canvas))
}

fn load(path: &Path, expect_canvas: Option<usize>) -> Result<DemoSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let header_line = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header"))?
        .map_err(|e| Error::io(path, e))?;
    let header: DemoHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::parse(1, e.to_string()))?;
    if header.schema_version != DEMO_SCHEMA_VERSION {
        return Err(Error::parse(
            1,
            format!("unsupported schema version {}", header.schema_version),
        ));
    }
    if let Some(canvas) = expect_canvas {
        if canvas != header.canvas {
            return Err(Error::Config(format!(
                "demonstrations use canvas {}, expected {canvas}",
                header.canvas
            )));
        }
    }
    let config = DemoConfig {
        canvas: header.canvas,
        gamma: header.gamma,
        style: header.style,
        size_range: header.size_range,
    };

    let mut trajectories = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        trajectories.push(decode_trajectory(record, header.canvas, lineno)?);
    }
    if trajectories.len() != header.count {
        return Err(Error::parse(
            trajectories.len() + 2,
            format!(
                "expected {} trajectories, found {}",
                header.count,
                trajectories.len()
            ),
        ));
    }
    if trajectories.is_empty() {
        return Err(Error::parse(2, "demonstration set is empty"));
    }
    Ok(DemoSet {
        config,
        trajectories,
    })
}

fn decode_trajectory(record: TrajectoryRecord, canvas: usize, lineno: usize) -> Result<Trajectory> {
    let meta = record.maze_meta;
    if meta.width > canvas || meta.height > canvas {
        return Err(Error::Config(format!(
            "line {lineno}: {}x{} maze does not fit canvas {canvas}",
            meta.width, meta.height
        )));
    }
    if record.states.len() < 2 {
        return Err(Error::parse(lineno, "trajectory needs at least two states"));
    }
    let mut mazes = Vec::with_capacity(record.states.len());
    for rows in &record.states {
        let maze = Maze::from_rows(rows, canvas, meta.seed, meta.style).map_err(|e| match e {
            Error::Size(m) => Error::Config(format!("line {lineno}: {m}")),
            other => Error::parse(lineno, other.to_string()),
        })?;
        if maze.width() != meta.width || maze.height() != meta.height {
            return Err(Error::parse(lineno, "grid size disagrees with maze_meta"));
        }
        mazes.push(maze);
    }
    for pair in mazes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let layout_same = a.goal() == b.goal() && a.empty_cells().eq(b.empty_cells());
        if !layout_same || a.agent().manhattan(b.agent()) > 1 || a.at_goal() {
            return Err(Error::parse(lineno, "states are not consecutive transitions"));
        }
    }
    if !mazes.last().is_some_and(Maze::at_goal) {
        return Err(Error::parse(lineno, "trajectory does not end on the goal"));
    }
    Ok(Trajectory {
        maze_meta: meta,
        states: mazes.iter().map(Maze::observation).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::DEFAULT_CANVAS;

    fn config(style: MazeStyle) -> DemoConfig {
        DemoConfig {
            canvas: DEFAULT_CANVAS,
            gamma: 0.99,
            style,
            size_range: [4, 10],
        }
    }

    #[test]
    fn length_is_path_plus_one() {
        let set = generate_demonstrations(&config(MazeStyle::Obstacles), 1, 9).unwrap();
        let t = &set.trajectories[0];
        let m = generate_maze_on(12, t.maze_meta.seed, t.maze_meta.width, t.maze_meta.height, MazeStyle::Obstacles)
            .unwrap();
        assert_eq!(t.len(), astar_solve(&m).unwrap().len() + 1);
        assert_eq!(t.states[0], m.observation());
    }

    #[test]
    fn every_trajectory_ends_on_goal() {
        let set = generate_demonstrations(&config(MazeStyle::Obstacles), 1000, 1).unwrap();
        assert_eq!(set.len(), 1000);
        for t in &set.trajectories {
            let last = t.states.last().unwrap();
            assert_eq!(last.goal_position(), None);
            assert!(t.states[..t.len() - 1].iter().all(|o| o.goal_position().is_some()));
            let [lo, hi] = set.config.size_range;
            assert!((lo..=hi).contains(&t.maze_meta.width));
        }
    }

    #[test]
    fn empty_maze_experts_close_in_monotonically() {
        let set = generate_demonstrations(&config(MazeStyle::Empty), 200, 3).unwrap();
        for t in &set.trajectories {
            let goal = t.states[0].goal_position().unwrap();
            let d: Vec<usize> = t
                .states
                .iter()
                .map(|o| o.agent_position().unwrap().manhattan(goal))
                .collect();
            assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        }
    }

    #[test]
    fn round_trip_and_no_actions_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let set = generate_demonstrations(&config(MazeStyle::Obstacles), 10, 4).unwrap();
        save_demos(&set, &path).unwrap();
        assert_eq!(load_demos(&path).unwrap(), set);
        let text = std::fs::read_to_string(&path).unwrap();
        for word in ["action", "reward", "Up", "Down", "Left", "Right"] {
            assert!(!text.contains(word), "{word} leaked into the file");
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let set = generate_demonstrations(&config(MazeStyle::Empty), 5, 4).unwrap();
        save_demos(&set, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let cut_mid = &text[..text.len() - 40];
        std::fs::write(&path, cut_mid).unwrap();
        match load_demos(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }

        let keep: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, keep).unwrap();
        assert!(matches!(load_demos(&path), Err(Error::Parse { .. })));

        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_demos(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn canvas_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let set = generate_demonstrations(&config(MazeStyle::Empty), 2, 4).unwrap();
        save_demos(&set, &path).unwrap();
        assert!(matches!(load_demos_on_canvas(&path, 10), Err(Error::Config(_))));

        // a header that claims a smaller canvas than the grids need
        let text = std::fs::read_to_string(&path).unwrap();
        let shrunk = text.replacen("\"canvas\":12", "\"canvas\":4", 1);
        std::fs::write(&path, shrunk).unwrap();
        let big = set.trajectories.iter().any(|t| t.maze_meta.width > 4);
        if big {
            assert!(matches!(load_demos(&path), Err(Error::Config(_))));
        }
    }

    #[test]
    fn tampered_trajectory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let set = generate_demonstrations(&config(MazeStyle::Empty), 3, 8).unwrap();
        save_demos(&set, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut rec: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
        let states = rec["states"].as_array_mut().unwrap();
        let first = states[0].clone();
        states.push(first);
        lines[2] = rec.to_string();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load_demos(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
