use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::gridworld::{Action, Maze};

/// Minimum-length action sequence from the agent to the goal.
///
/// Manhattan heuristic; ties on f-score go to the node pushed first and
/// neighbours are expanded in canonical [`Action`] order, so the returned
/// path is reproducible.
pub fn astar_solve(maze: &Maze) -> Result<Vec<Action>> {
    let goal = maze.goal();
    let start = maze.agent();
    let n = maze.rows() * maze.cols();
    let mut best = vec![usize::MAX; n];
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut frontier = BinaryHeap::new();
    let mut pushed: u64 = 0;

    best[maze.index(start)] = 0;
    frontier.push(Reverse((start.manhattan(goal), pushed, start)));

    while let Some(Reverse((_, _, p))) = frontier.pop() {
        let i = maze.index(p);
        if closed[i] {
            continue;
        }
        closed[i] = true;
        if p == goal {
            let mut actions = Vec::with_capacity(best[i]);
            let mut cur = i;
            while let Some((prev, a)) = parent[cur] {
                actions.push(a);
                cur = prev;
            }
            actions.reverse();
            return Ok(actions);
        }
        let g = best[i] + 1;
        for a in Action::ALL {
            let q = maze.neighbor(p, a);
            let j = maze.index(q);
            if q == p || closed[j] || g >= best[j] {
                continue;
            }
            best[j] = g;
            parent[j] = Some((i, a));
            pushed += 1;
            frontier.push(Reverse((g + q.manhattan(goal), pushed, q)));
        }
    }
    Err(Error::Search(format!(
        "goal {goal} unreachable from {start}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_maze, MazeStyle, Pos};

    fn replay(maze: &Maze, actions: &[Action]) -> Maze {
        actions
            .iter()
            .fold(maze.clone(), |m, &a| m.step(a).unwrap().0)
    }

    #[test]
    fn adjacent_goal() {
        let rows = ["######", "#AG..#", "#....#", "#....#", "#....#", "######"];
        let m = Maze::from_rows(&rows, 12, 0, MazeStyle::Empty).unwrap();
        assert_eq!(m.agent(), Pos::new(1, 1));
        assert_eq!(astar_solve(&m).unwrap(), vec![Action::Right]);
    }

    #[test]
    fn opposite_corners_of_open_maze() {
        for n in 4..=12 {
            let m = generate_maze(n as u64, n, n, MazeStyle::Empty).unwrap();
            let m = m.with_agent(Pos::new(1, 1)).unwrap();
            let far = Pos::new(n, n);
            let rows: Vec<String> = m
                .to_rows()
                .into_iter()
                .map(|r| r.replace('G', "."))
                .enumerate()
                .map(|(r, row)| {
                    if r == n {
                        let mut chars: Vec<char> = row.chars().collect();
                        chars[n] = 'G';
                        chars.into_iter().collect()
                    } else {
                        row
                    }
                })
                .collect();
            let m = Maze::from_rows(&rows, 12, 0, MazeStyle::Empty).unwrap();
            assert_eq!(m.goal(), far);
            let path = astar_solve(&m).unwrap();
            assert_eq!(path.len(), 2 * (n - 1));
            assert!(replay(&m, &path).at_goal());
        }
    }

    #[test]
    fn matches_bfs_on_random_mazes() {
        for style in [MazeStyle::Empty, MazeStyle::Obstacles] {
            for seed in 0..100u64 {
                let size = 4 + (seed as usize) % 9;
                let m = generate_maze(seed * 31 + 5, size, size, style).unwrap();
                let path = astar_solve(&m).unwrap();
                let bfs = m.distances_to_goal()[m.index(m.agent())].unwrap();
                assert_eq!(path.len(), bfs, "seed {seed} {style}");
                assert!(replay(&m, &path).at_goal());
            }
        }
    }

    #[test]
    fn deterministic_tie_breaking() {
        let m = generate_maze(42, 10, 10, MazeStyle::Empty).unwrap();
        assert_eq!(astar_solve(&m).unwrap(), astar_solve(&m).unwrap());
    }

    #[test]
    fn already_at_goal_is_empty_path() {
        let m = generate_maze(3, 5, 5, MazeStyle::Empty).unwrap();
        let m = m.with_agent(m.goal()).unwrap();
        assert!(astar_solve(&m).unwrap().is_empty());
    }
}
