//! Procedurally generated maze environments.
//!
//! A [`Maze`] of `width × height` interior cells is stored together with a
//! one-cell wall border, so positions are `(row, col)` in the bordered grid:
//! `(1, 1)` is the top-left interior cell and row `0` is border. Transitions
//! are pure; [`Maze::step`] returns a new maze rather than mutating.

mod generate;
mod observation;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_maze, generate_maze_on};
pub use observation::{encode_observation, Observation, PLANES};

/// Canvas side used when none is configured.
pub const DEFAULT_CANVAS: usize = 12;

/// Smallest allowed interior side.
pub const MIN_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall,
    Empty,
}

/// Navigation actions. The declaration order is canonical: it fixes the
/// Q-vector layout, greedy tie-breaking and A* expansion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MazeStyle {
    Empty,
    Obstacles,
}

impl fmt::Display for MazeStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MazeStyle::Empty => "empty",
            MazeStyle::Obstacles => "obstacles",
        })
    }
}

impl FromStr for MazeStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empty" => Ok(MazeStyle::Empty),
            "obstacles" => Ok(MazeStyle::Obstacles),
            other => Err(Error::Config(format!("unknown maze style {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Outcome of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    /// 1 when the step entered the goal, otherwise 0.
    pub reward: f64,
    pub done: bool,
    /// Set when the episode ended on the step cap rather than at the goal.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Maze {
    width: usize,
    height: usize,
    canvas: usize,
    cells: Arc<[Cell]>,
    agent: Pos,
    goal: Pos,
    seed: u64,
    style: MazeStyle,
    steps: usize,
    done: bool,
}

impl Maze {
    /// Builds a maze from a bordered grid and validates every invariant.
    pub fn from_cells(
        width: usize,
        height: usize,
        canvas: usize,
        cells: Vec<Cell>,
        agent: Pos,
        goal: Pos,
        seed: u64,
        style: MazeStyle,
    ) -> Result<Maze> {
        check_size(width, height, canvas)?;
        if cells.len() != (width + 2) * (height + 2) {
            return Err(Error::Shape {
                expected: (width + 2) * (height + 2),
                actual: cells.len(),
            });
        }
        let maze = Maze {
            width,
            height,
            canvas,
            cells: cells.into(),
            agent,
            goal,
            seed,
            style,
            steps: 0,
            done: false,
        };
        for r in 0..maze.rows() {
            for c in 0..maze.cols() {
                let border = r == 0 || c == 0 || r == maze.rows() - 1 || c == maze.cols() - 1;
                if border && maze.cell(Pos::new(r, c)) != Cell::Wall {
                    return Err(Error::Config(format!("border cell ({r}, {c}) is not a wall")));
                }
            }
        }
        for (name, p) in [("agent", agent), ("goal", goal)] {
            if !maze.is_open(p) {
                return Err(Error::Config(format!("{name} at {p} is not on an empty cell")));
            }
        }
        if maze.distances_from(goal)[maze.index(agent)].is_none() {
            return Err(Error::Config(format!("goal {goal} is unreachable from {agent}")));
        }
        Ok(maze)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn canvas(&self) -> usize {
        self.canvas
    }

    /// Rows of the bordered grid.
    pub fn rows(&self) -> usize {
        self.height + 2
    }

    /// Columns of the bordered grid.
    pub fn cols(&self) -> usize {
        self.width + 2
    }

    pub fn agent(&self) -> Pos {
        self.agent
    }

    pub fn goal(&self) -> Pos {
        self.goal
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn style(&self) -> MazeStyle {
        self.style
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Agent stands on the goal.
    pub fn at_goal(&self) -> bool {
        self.agent == self.goal
    }

    /// Episode horizon: `4 · width · height` steps.
    pub fn step_cap(&self) -> usize {
        4 * self.width * self.height
    }

    pub fn index(&self, p: Pos) -> usize {
        p.row * self.cols() + p.col
    }

    pub fn cell(&self, p: Pos) -> Cell {
        self.cells[self.index(p)]
    }

    pub fn is_open(&self, p: Pos) -> bool {
        p.row < self.rows() && p.col < self.cols() && self.cell(p) == Cell::Empty
    }

    /// Empty cells in row-major order.
    pub fn empty_cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.rows())
            .flat_map(move |r| (0..self.cols()).map(move |c| Pos::new(r, c)))
            .filter(move |&p| self.cell(p) == Cell::Empty)
    }

    /// Cell reached from `p` by `action`; blocked moves stay in place.
    pub fn neighbor(&self, p: Pos, action: Action) -> Pos {
        let (dr, dc) = action.delta();
        let next = Pos::new(
            p.row.wrapping_add_signed(dr),
            p.col.wrapping_add_signed(dc),
        );
        if self.is_open(next) {
            next
        } else {
            p
        }
    }

    /// Copy of this maze with the agent moved to `p` and a fresh episode.
    pub fn with_agent(&self, p: Pos) -> Result<Maze> {
        if !self.is_open(p) {
            return Err(Error::Usage(format!("cannot place agent on non-empty cell {p}")));
        }
        Ok(Maze {
            agent: p,
            steps: 0,
            done: false,
            ..self.clone()
        })
    }

    /// Fresh episode with the same layout and the given start.
    pub fn reset_to(&self, start: Pos) -> Result<Maze> {
        self.with_agent(start)
    }

    pub fn observation(&self) -> Observation {
        encode_observation(self)
    }

    /// Pure transition. Stepping a finished episode is an error.
    pub fn step(&self, action: Action) -> Result<(Maze, StepResult)> {
        if self.done {
            return Err(Error::Usage("step called after the episode ended".into()));
        }
        let mut next = self.clone();
        next.agent = self.neighbor(self.agent, action);
        next.steps += 1;
        let reached = next.agent == next.goal;
        let truncated = !reached && next.steps >= next.step_cap();
        next.done = reached || truncated;
        let result = StepResult {
            observation: next.observation(),
            reward: if reached { 1.0 } else { 0.0 },
            done: next.done,
            truncated,
        };
        Ok((next, result))
    }

    /// Breadth-first step counts from `source` to every cell of the bordered
    /// grid; `None` for walls and unreachable cells. Moves are symmetric, so
    /// this is also the distance *to* `source`.
    pub fn distances_from(&self, source: Pos) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.cells.len()];
        if !self.is_open(source) {
            return dist;
        }
        let mut queue = VecDeque::new();
        dist[self.index(source)] = Some(0);
        queue.push_back(source);
        while let Some(p) = queue.pop_front() {
            let d = dist[self.index(p)].unwrap();
            for a in Action::ALL {
                let q = self.neighbor(p, a);
                let i = self.index(q);
                if dist[i].is_none() {
                    dist[i] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
        dist
    }

    /// Shortest-path steps from every cell to the goal.
    pub fn distances_to_goal(&self) -> Vec<Option<usize>> {
        self.distances_from(self.goal)
    }

    /// Text form: one string per bordered row, `#` wall, `.` empty,
    /// `A` agent, `G` goal. An agent standing on the goal is written `A`.
    pub fn to_rows(&self) -> Vec<String> {
        (0..self.rows())
            .map(|r| {
                (0..self.cols())
                    .map(|c| {
                        let p = Pos::new(r, c);
                        if p == self.agent {
                            'A'
                        } else if p == self.goal {
                            'G'
                        } else if self.cell(p) == Cell::Wall {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Parses the text form. A grid without `G` is read as the agent
    /// standing on the goal.
    pub fn from_rows<S: AsRef<str>>(
        rows: &[S],
        canvas: usize,
        seed: u64,
        style: MazeStyle,
    ) -> Result<Maze> {
        let grid_rows = rows.len();
        let grid_cols = rows.first().map_or(0, |r| r.as_ref().chars().count());
        if grid_rows < 2 + MIN_SIZE || grid_cols < 2 + MIN_SIZE {
            return Err(Error::Size(format!(
                "grid {grid_rows}x{grid_cols} is smaller than the minimum maze"
            )));
        }
        let mut cells = Vec::with_capacity(grid_rows * grid_cols);
        let mut agent = None;
        let mut goal = None;
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != grid_cols {
                return Err(Error::Config(format!("row {r} has ragged length")));
            }
            for (c, ch) in row.chars().enumerate() {
                let here = Pos::new(r, c);
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Empty,
                    'A' if agent.is_none() => {
                        agent = Some(here);
                        Cell::Empty
                    }
                    'G' if goal.is_none() => {
                        goal = Some(here);
                        Cell::Empty
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "unexpected character {other:?} at ({r}, {c})"
                        )))
                    }
                };
                cells.push(cell);
            }
        }
        let agent = agent.ok_or_else(|| Error::Config("grid has no agent".into()))?;
        let goal = goal.unwrap_or(agent);
        let mut maze = Maze::from_cells(
            grid_cols - 2,
            grid_rows - 2,
            canvas,
            cells,
            agent,
            goal,
            seed,
            style,
        )?;
        maze.done = maze.at_goal();
        Ok(maze)
    }
}

pub(crate) fn check_size(width: usize, height: usize, canvas: usize) -> Result<()> {
    for (name, v) in [("width", width), ("height", height)] {
        if v < MIN_SIZE || v > canvas {
            return Err(Error::Size(format!(
                "{name} {v} outside [{MIN_SIZE}, {canvas}]"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_maze(size: usize) -> Maze {
        generate_maze(7, size, size, MazeStyle::Empty).unwrap()
    }

    #[test]
    fn blocked_move_stays() {
        let m = open_maze(4).with_agent(Pos::new(1, 1)).unwrap();
        let (next, res) = m.step(Action::Up).unwrap();
        assert_eq!(next.agent(), Pos::new(1, 1));
        assert_eq!(res.reward, 0.0);
        assert!(!res.done);
        assert_eq!(next.steps(), 1);
        // input untouched
        assert_eq!(m.steps(), 0);
    }

    #[test]
    fn entering_goal_pays_one() {
        let m = open_maze(4);
        let goal = m.goal();
        let a = Action::ALL
            .into_iter()
            .find(|&a| {
                let back = match a {
                    Action::Up => Action::Down,
                    Action::Down => Action::Up,
                    Action::Left => Action::Right,
                    Action::Right => Action::Left,
                };
                let from = m.neighbor(goal, back);
                from != goal && m.neighbor(from, a) == goal
            })
            .unwrap();
        let start = match a {
            Action::Up => Pos::new(goal.row + 1, goal.col),
            Action::Down => Pos::new(goal.row - 1, goal.col),
            Action::Left => Pos::new(goal.row, goal.col + 1),
            Action::Right => Pos::new(goal.row, goal.col - 1),
        };
        let (next, res) = m.with_agent(start).unwrap().step(a).unwrap();
        assert_eq!(res.reward, 1.0);
        assert!(res.done && !res.truncated);
        assert!(next.at_goal());
        assert!(matches!(next.step(a), Err(Error::Usage(_))));
    }

    #[test]
    fn step_cap_truncates() {
        let m = open_maze(5).with_agent(Pos::new(1, 1)).unwrap();
        let m = if m.goal() == Pos::new(1, 1) {
            m.with_agent(Pos::new(5, 5)).unwrap()
        } else {
            m
        };
        // bump into the nearest wall forever
        let wall_dir = if m.agent().row == 1 { Action::Up } else { Action::Down };
        let cap = 4 * 5 * 5;
        let mut cur = m;
        for i in 1..=cap {
            let (next, res) = cur.step(wall_dir).unwrap();
            assert_eq!(res.reward, 0.0);
            assert_eq!(res.done, i == cap);
            assert_eq!(res.truncated, i == cap);
            cur = next;
        }
        assert!(cur.step(wall_dir).is_err());
    }

    #[test]
    fn rows_roundtrip() {
        let m = generate_maze(3, 7, 5, MazeStyle::Obstacles).unwrap();
        let rows = m.to_rows();
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.len() == 9));
        let back = Maze::from_rows(&rows, DEFAULT_CANVAS, m.seed(), m.style()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rows_without_goal_mean_terminal() {
        let rows = ["######", "#A...#", "#....#", "#....#", "#....#", "######"];
        let m = Maze::from_rows(&rows, DEFAULT_CANVAS, 0, MazeStyle::Empty).unwrap();
        assert!(m.at_goal());
        assert!(m.is_done());
    }

    #[test]
    fn rejects_bad_grids() {
        let open_border = ["######", "#A...#", "#...G.", "#....#", "#....#", "######"];
        assert!(Maze::from_rows(&open_border, DEFAULT_CANVAS, 0, MazeStyle::Empty).is_err());
        let cut = ["######", "#A#..#", "###..#", "#...G#", "#....#", "######"];
        assert!(Maze::from_rows(&cut, DEFAULT_CANVAS, 0, MazeStyle::Empty).is_err());
        let tiny = ["#####", "#A.G#", "#####"];
        assert!(matches!(
            Maze::from_rows(&tiny, DEFAULT_CANVAS, 0, MazeStyle::Empty),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn distances_on_open_grid_are_manhattan() {
        let m = open_maze(6);
        let d = m.distances_to_goal();
        for p in m.empty_cells() {
            assert_eq!(d[m.index(p)], Some(p.manhattan(m.goal())));
        }
    }
}
