use super::{Cell, Maze, Pos};
use crate::error::{Error, Result};

/// Number of binary planes: wall, empty, agent, goal.
pub const PLANES: usize = 4;

const WALL: usize = 0;
const EMPTY: usize = 1;
const AGENT: usize = 2;
const GOAL: usize = 3;

/// Binary planes over a fixed `canvas × canvas` footprint, flattened
/// channel-major then row-major. Interior cell `(r, c)` of a maze lands on
/// canvas cell `(r - 1, c - 1)`; everything outside the interior is padded
/// as wall, which also stands in for the maze border.
///
/// When the agent stands on the goal the goal plane is left empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Observation {
    canvas: usize,
    planes: Vec<u8>,
    key: u64,
}

pub fn encode_observation(maze: &Maze) -> Observation {
    let c2 = maze.canvas() * maze.canvas();
    let canvas = maze.canvas();
    let mut planes = vec![0u8; PLANES * c2];
    for r in 0..canvas {
        for c in 0..canvas {
            let inside = r < maze.height() && c < maze.width();
            let open = inside && maze.cell(Pos::new(r + 1, c + 1)) == Cell::Empty;
            let plane = if open { EMPTY } else { WALL };
            planes[plane * c2 + r * canvas + c] = 1;
        }
    }
    let at = |p: Pos| (p.row - 1) * canvas + (p.col - 1);
    planes[AGENT * c2 + at(maze.agent())] = 1;
    if !maze.at_goal() {
        planes[GOAL * c2 + at(maze.goal())] = 1;
    }
    Observation::from_planes(canvas, planes)
}

impl Observation {
    fn from_planes(canvas: usize, planes: Vec<u8>) -> Observation {
        let key = fnv1a(canvas, &planes);
        Observation { canvas, planes, key }
    }

    pub fn canvas(&self) -> usize {
        self.canvas
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn planes(&self) -> &[u8] {
        &self.planes
    }

    /// Stable 64-bit key used by tabular approximators.
    pub fn key(&self) -> u64 {
        self.key
    }

    fn plane_positions(&self, plane: usize) -> impl Iterator<Item = Pos> + '_ {
        let c2 = self.canvas * self.canvas;
        self.planes[plane * c2..(plane + 1) * c2]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| Pos::new(i / self.canvas + 1, i % self.canvas + 1))
    }

    /// Agent position in bordered maze coordinates.
    pub fn agent_position(&self) -> Option<Pos> {
        self.plane_positions(AGENT).next()
    }

    /// Goal position; `None` once the agent stands on it.
    pub fn goal_position(&self) -> Option<Pos> {
        self.plane_positions(GOAL).next()
    }

    /// Reconstructs the text grid of a `width × height` maze.
    pub fn to_rows(&self, width: usize, height: usize) -> Result<Vec<String>> {
        if width > self.canvas || height > self.canvas {
            return Err(Error::Config(format!(
                "{width}x{height} maze does not fit canvas {}",
                self.canvas
            )));
        }
        let agent = self
            .agent_position()
            .ok_or_else(|| Error::Config("observation has no agent".into()))?;
        let goal = self.goal_position();
        let c2 = self.canvas * self.canvas;
        let rows = (0..height + 2)
            .map(|r| {
                (0..width + 2)
                    .map(|c| {
                        let p = Pos::new(r, c);
                        let interior = r >= 1 && c >= 1 && r <= height && c <= width;
                        if !interior {
                            '#'
                        } else if p == agent {
                            'A'
                        } else if Some(p) == goal {
                            'G'
                        } else if self.planes[WALL * c2 + (r - 1) * self.canvas + (c - 1)] != 0 {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(rows)
    }
}

fn fnv1a(canvas: usize, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    (canvas as u64)
        .to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
