use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_size, Cell, Maze, MazeStyle, Pos, DEFAULT_CANVAS};
use crate::error::{Error, Result};

/// Fraction of passage-separating walls knocked out after carving.
const OPEN_FRACTION: f64 = 0.10;
const MAX_ATTEMPTS: usize = 64;

/// Generates a maze on the default canvas.
pub fn generate_maze(seed: u64, width: usize, height: usize, style: MazeStyle) -> Result<Maze> {
    generate_maze_on(DEFAULT_CANVAS, seed, width, height, style)
}

/// Deterministic in `(canvas, seed, width, height, style)`.
pub fn generate_maze_on(
    canvas: usize,
    seed: u64,
    width: usize,
    height: usize,
    style: MazeStyle,
) -> Result<Maze> {
    check_size(width, height, canvas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let cells = match style {
            MazeStyle::Empty => open_layout(width, height),
            MazeStyle::Obstacles => carved_layout(width, height, &mut rng),
        };
        let empties: Vec<Pos> = (0..height + 2)
            .flat_map(|r| (0..width + 2).map(move |c| Pos::new(r, c)))
            .filter(|p| cells[p.row * (width + 2) + p.col] == Cell::Empty)
            .collect();
        if empties.len() < 2 {
            continue;
        }
        for _ in 0..MAX_ATTEMPTS {
            let agent = empties[rng.gen_range(0..empties.len())];
            let mut goal_idx = rng.gen_range(0..empties.len() - 1);
            if empties[goal_idx] == agent {
                goal_idx = empties.len() - 1;
            }
            let goal = empties[goal_idx];
            // from_cells runs the flood-fill reachability check
            if let Ok(maze) =
                Maze::from_cells(width, height, canvas, cells.clone(), agent, goal, seed, style)
            {
                return Ok(maze);
            }
        }
    }
    Err(Error::Config(format!(
        "could not generate a solvable {width}x{height} {style} maze from seed {seed}"
    )))
}

fn bordered(width: usize, height: usize, interior: Cell) -> Vec<Cell> {
    let cols = width + 2;
    let mut cells = vec![Cell::Wall; cols * (height + 2)];
    for r in 1..=height {
        for c in 1..=width {
            cells[r * cols + c] = interior;
        }
    }
    cells
}

fn open_layout(width: usize, height: usize) -> Vec<Cell> {
    bordered(width, height, Cell::Empty)
}

/// Randomized depth-first backtracker on the odd lattice, then a braid pass
/// that opens a fraction of the walls separating two passages.
fn carved_layout(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<Cell> {
    let cols = width + 2;
    let mut cells = bordered(width, height, Cell::Wall);
    let lattice_rows: Vec<usize> = (1..=height).step_by(2).collect();
    let lattice_cols: Vec<usize> = (1..=width).step_by(2).collect();
    let (nr, nc) = (lattice_rows.len(), lattice_cols.len());
    let mut visited = vec![false; nr * nc];

    let start = (rng.gen_range(0..nr), rng.gen_range(0..nc));
    visited[start.0 * nc + start.1] = true;
    cells[lattice_rows[start.0] * cols + lattice_cols[start.1]] = Cell::Empty;
    let mut stack = vec![start];
    while let Some(&(i, j)) = stack.last() {
        let mut options = Vec::with_capacity(4);
        if i > 0 && !visited[(i - 1) * nc + j] {
            options.push((i - 1, j));
        }
        if i + 1 < nr && !visited[(i + 1) * nc + j] {
            options.push((i + 1, j));
        }
        if j > 0 && !visited[i * nc + j - 1] {
            options.push((i, j - 1));
        }
        if j + 1 < nc && !visited[i * nc + j + 1] {
            options.push((i, j + 1));
        }
        let Some(&(ni, nj)) = options.choose(rng) else {
            stack.pop();
            continue;
        };
        visited[ni * nc + nj] = true;
        let (r0, c0) = (lattice_rows[i], lattice_cols[j]);
        let (r1, c1) = (lattice_rows[ni], lattice_cols[nj]);
        cells[r1 * cols + c1] = Cell::Empty;
        cells[((r0 + r1) / 2) * cols + (c0 + c1) / 2] = Cell::Empty;
        stack.push((ni, nj));
    }

    let empty = |cells: &[Cell], r: usize, c: usize| cells[r * cols + c] == Cell::Empty;
    let mut separators: Vec<usize> = Vec::new();
    for r in 1..=height {
        for c in 1..=width {
            if cells[r * cols + c] != Cell::Wall {
                continue;
            }
            let horizontal = empty(&cells, r, c - 1) && empty(&cells, r, c + 1);
            let vertical = empty(&cells, r - 1, c) && empty(&cells, r + 1, c);
            if horizontal || vertical {
                separators.push(r * cols + c);
            }
        }
    }
    let to_open = ((separators.len() as f64) * OPEN_FRACTION).round() as usize;
    for &i in separators.choose_multiple(rng, to_open) {
        cells[i] = Cell::Empty;
    }
    cells
}
