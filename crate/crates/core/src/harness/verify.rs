//! Fast invariant checks run by `pvo verify`. Each check is small enough to
//! finish in seconds and reports rather than panics.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::derive_seed;
use crate::approx::{finite_diff_check, MlpFn};
use crate::error::Result;
use crate::expert::astar_solve;
use crate::gridworld::{generate_maze, MazeStyle};
use crate::pvo::pvo_target;
use crate::rl::value_iteration_oracle;
use crate::scalar::Rational;

const VERIFY_TAG: u64 = 0x7665_7269_6679;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<std::result::Result<String, String>>) -> CheckOutcome {
    match r {
        Ok(Ok(detail)) => CheckOutcome { name, passed: true, detail },
        Ok(Err(detail)) => CheckOutcome { name, passed: false, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
    }
}

/// Runs every invariant check with the given seed and discount.
pub fn run_checks(seed: u64, gamma: f64) -> Vec<CheckOutcome> {
    vec![
        outcome("target_law", target_law(seed)),
        outcome("reachability", reachability(seed)),
        outcome("astar_optimal", astar_optimal(seed)),
        outcome("bellman_identity", bellman_identity(seed, gamma)),
        outcome("gradient_check", gradient_check(seed)),
    ]
}

type Check = Result<std::result::Result<String, String>>;

fn target_law(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, VERIFY_TAG, 0));
    for _ in 0..200 {
        let len = rng.gen_range(2..=60);
        let t = rng.gen_range(0..len - 1);
        let gamma = Rational::new(rng.gen_range(1..100).into(), 100.into());
        let a = pvo_target(len, t, &gamma)?;
        let b = pvo_target(len, t + 1, &gamma)?;
        if a != &b * &gamma {
            return Ok(Err(format!("ratio broken at T={len}, t={t}")));
        }
        if pvo_target(len, len - 1, &gamma)? != Rational::one() {
            return Ok(Err(format!("final target not 1 at T={len}")));
        }
        if a <= Rational::zero() {
            return Ok(Err("non-positive target".into()));
        }
    }
    Ok(Ok("200 exact cases".into()))
}

fn reachability(seed: u64) -> Check {
    for i in 0..200 {
        let style = if i % 2 == 0 { MazeStyle::Empty } else { MazeStyle::Obstacles };
        let maze = generate_maze(derive_seed(seed, VERIFY_TAG, 1000 + i), 4 + (i as usize % 9), 4 + (i as usize % 5), style)?;
        if maze.distances_to_goal()[maze.index(maze.agent())].is_none() {
            return Ok(Err(format!("maze {i} has an unreachable goal")));
        }
    }
    Ok(Ok("200 mazes".into()))
}

fn astar_optimal(seed: u64) -> Check {
    for i in 0..100 {
        let maze = generate_maze(derive_seed(seed, VERIFY_TAG, 2000 + i), 8, 8, MazeStyle::Obstacles)?;
        let path = astar_solve(&maze)?;
        let bfs = maze.distances_to_goal()[maze.index(maze.agent())].unwrap_or(usize::MAX);
        if path.len() != bfs {
            return Ok(Err(format!("maze {i}: A* {} vs BFS {bfs}", path.len())));
        }
    }
    Ok(Ok("100 mazes".into()))
}

fn bellman_identity(seed: u64, gamma: f64) -> Check {
    let mut worst = 0.0f64;
    for i in 0..5 {
        let maze = generate_maze(derive_seed(seed, VERIFY_TAG, 3000 + i), 8, 8, MazeStyle::Obstacles)?;
        let sol = value_iteration_oracle(&maze, gamma);
        let dist = maze.distances_to_goal();
        for p in maze.empty_cells().filter(|&p| p != maze.goal()) {
            let Some(d) = dist[maze.index(p)] else { continue };
            let best = sol.q_values(p).into_iter().fold(f64::NEG_INFINITY, f64::max);
            let ideal = gamma.powi(d as i32 - 1);
            worst = worst.max((best - sol.value(p)).abs()).max((sol.value(p) - ideal).abs());
        }
    }
    if worst < 1e-10 {
        Ok(Ok(format!("max deviation {worst:.2e}")))
    } else {
        Ok(Err(format!("max deviation {worst:.2e}")))
    }
}

fn gradient_check(seed: u64) -> Check {
    let mut worst = 0.0f64;
    for i in 0..3 {
        let s = derive_seed(seed, VERIFY_TAG, 4000 + i);
        let maze = generate_maze(s, 6, 6, MazeStyle::Obstacles)?;
        let net = MlpFn::<f64>::for_canvas(maze.canvas(), &[32, 32], 1, s)?;
        let report = finite_diff_check(&net, &maze.observation(), &[0.5], 1e-5, s)?;
        worst = worst.max(report.max_rel_error);
    }
    if worst < 1e-4 {
        Ok(Ok(format!("max relative error {worst:.2e}")))
    } else {
        Ok(Err(format!("max relative error {worst:.2e}")))
    }
}
