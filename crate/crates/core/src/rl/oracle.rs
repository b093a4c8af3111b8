use crate::approx::TabularFn;
use crate::gridworld::{Action, Maze, Pos};
use crate::pvo::{pvo_target, ValueFunction};
use crate::scalar::Scalar;

/// Exact optimal values of a maze under reward 1 on entering the goal.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution<S> {
    pub rows: usize,
    pub cols: usize,
    /// `V*` per bordered-grid cell; walls, the goal and unreachable cells
    /// hold zero.
    pub values: Vec<S>,
    /// `Q*` per bordered-grid cell in canonical action order.
    pub q: Vec<[S; 4]>,
    pub iterations: usize,
    /// Sup-norm change of the final sweep.
    pub residual: S,
}

impl<S: Scalar> OracleSolution<S> {
    pub fn value(&self, p: Pos) -> S {
        self.values[p.row * self.cols + p.col]
    }

    pub fn q_values(&self, p: Pos) -> [S; 4] {
        self.q[p.row * self.cols + p.col]
    }

    /// Actions whose `Q*` is within `tol · |V*|` of the best.
    pub fn optimal_actions(&self, p: Pos, tol: S) -> Vec<Action> {
        let q = self.q_values(p);
        let best = q.iter().copied().fold(S::neg_infinity(), S::max);
        let slack = tol * best.abs();
        Action::ALL
            .into_iter()
            .filter(|a| q[a.index()] >= best - slack)
            .collect()
    }
}

const RESIDUAL_TOL: f64 = 1e-12;

/// Synchronous value iteration to a sup-norm residual below `1e-12`. The
/// goal is terminal with value zero; entering it pays 1.
pub fn value_iteration_oracle<S: Scalar>(maze: &Maze, gamma: S) -> OracleSolution<S> {
    let n = maze.rows() * maze.cols();
    let goal = maze.goal();
    let states: Vec<Pos> = maze.empty_cells().filter(|&p| p != goal).collect();
    let mut values = vec![S::zero(); n];
    let mut q = vec![[S::zero(); 4]; n];
    let tol = S::of(RESIDUAL_TOL);
    let max_sweeps = 10 * n + 100;
    let mut iterations = 0;
    let mut residual = S::infinity();
    while residual >= tol && iterations < max_sweeps {
        let mut next = values.clone();
        residual = S::zero();
        for &p in &states {
            let i = maze.index(p);
            let mut best = S::neg_infinity();
            for a in Action::ALL {
                let s2 = maze.neighbor(p, a);
                let backup = if s2 == goal {
                    S::one()
                } else {
                    gamma * values[maze.index(s2)]
                };
                q[i][a.index()] = backup;
                best = best.max(backup);
            }
            residual = residual.max((best - values[i]).abs());
            next[i] = best;
        }
        values = next;
        iterations += 1;
    }
    OracleSolution {
        rows: maze.rows(),
        cols: maze.cols(),
        values,
        q,
        iterations,
        residual,
    }
}

/// Tabular value function holding the ideal demonstration values of a maze:
/// `γ^d` for a cell `d` shortest-path steps from the goal, 1 on the goal.
pub fn exact_pvo_values<S: Scalar>(maze: &Maze, gamma: f64) -> ValueFunction<S> {
    let dist = maze.distances_to_goal();
    let g = S::of(gamma);
    let mut table = TabularFn::zeros(1);
    for p in maze.empty_cells() {
        if let Some(d) = dist[maze.index(p)] {
            let obs = maze.with_agent(p).expect("empty cell").observation();
            let v = pvo_target(d + 1, 0, &g).expect("t < T");
            table.set(&obs, vec![v]).expect("finite value");
        }
    }
    ValueFunction::tabular(table, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_maze, MazeStyle};

    #[test]
    fn goal_adjacent_is_worth_one() {
        let m = generate_maze(2, 6, 6, MazeStyle::Obstacles).unwrap();
        let sol = value_iteration_oracle(&m, 0.9f64);
        for p in m.empty_cells() {
            if p != m.goal() && p.manhattan(m.goal()) == 1 {
                assert_eq!(sol.value(p), 1.0);
                let q = sol.q_values(p);
                assert_eq!(q.iter().copied().fold(f64::MIN, f64::max), 1.0);
            }
        }
    }

    #[test]
    fn closed_form_on_bfs_distance() {
        for seed in 0..10 {
            let m = generate_maze(seed, 8, 8, MazeStyle::Obstacles).unwrap();
            let g = 0.95f64;
            let sol = value_iteration_oracle(&m, g);
            assert!(sol.residual < 1e-12);
            let dist = m.distances_to_goal();
            for p in m.empty_cells().filter(|&p| p != m.goal()) {
                let d = dist[m.index(p)].unwrap();
                assert!((sol.value(p) - g.powi(d as i32 - 1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = generate_maze(3, 6, 6, MazeStyle::Empty).unwrap();
        let sol = value_iteration_oracle(&m, 0.9f32);
        let d = m.distances_to_goal();
        for p in m.empty_cells().filter(|&p| p != m.goal()) {
            let want = 0.9f64.powi(d[m.index(p)].unwrap() as i32 - 1);
            assert!((f64::from(sol.value(p)) - want).abs() < 1e-5);
        }
    }

    #[test]
    fn optimal_action_sets_follow_distance() {
        let m = generate_maze(9, 6, 6, MazeStyle::Empty).unwrap();
        let sol = value_iteration_oracle(&m, 0.99f64);
        let dist = m.distances_to_goal();
        for p in m.empty_cells().filter(|&p| p != m.goal()) {
            let d = dist[m.index(p)].unwrap();
            let want: Vec<Action> = Action::ALL
                .into_iter()
                .filter(|&a| dist[m.index(m.neighbor(p, a))] == Some(d - 1))
                .collect();
            assert_eq!(sol.optimal_actions(p, 1e-9), want);
        }
    }

    #[test]
    fn exact_values_anchor_at_goal() {
        let m = generate_maze(4, 6, 6, MazeStyle::Obstacles).unwrap();
        let v = exact_pvo_values::<f64>(&m, 0.9);
        let goal_obs = m.with_agent(m.goal()).unwrap().observation();
        assert_eq!(v.value(&goal_obs).unwrap(), 1.0);
        let dist = m.distances_to_goal();
        for p in m.empty_cells() {
            let o = m.with_agent(p).unwrap().observation();
            let d = dist[m.index(p)].unwrap();
            assert!((v.value(&o).unwrap() - 0.9f64.powi(d as i32)).abs() < 1e-12);
        }
    }
}
