//! Value learning from state-only demonstrations.
//!
//! Every observation `s_t` of a length-`T` expert trajectory is regressed
//! onto `γ^(T−t−1)`: the final state is worth 1 and each step further from
//! the end costs one factor of γ. No actions or rewards are consulted.

use std::ops::Mul;

use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{MlpFn, TabularFn, Target, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::expert::{DemoSet, Trajectory};
use crate::gridworld::{Maze, Observation, Pos};
use crate::scalar::Scalar;

/// `γ^(len − t − 1)` by repeated multiplication, so that over an exact type
/// such as [`crate::Rational`] consecutive targets differ by exactly γ.
pub fn pvo_target<S>(len: usize, t: usize, gamma: &S) -> Result<S>
where
    S: Clone + One + Mul<Output = S>,
{
    if t >= len {
        return Err(Error::Index { t, len });
    }
    let mut value = S::one();
    for _ in 0..len - t - 1 {
        value = value * gamma.clone();
    }
    Ok(value)
}

/// Every target of a length-`len` trajectory, built from the end with the
/// same multiplication chain as [`pvo_target`], so entries agree bit for bit.
pub fn pvo_targets<S>(len: usize, gamma: &S) -> Vec<S>
where
    S: Clone + One + Mul<Output = S>,
{
    let mut out = Vec::with_capacity(len);
    let mut value = S::one();
    for i in 0..len {
        if i > 0 {
            value = value * gamma.clone();
        }
        out.push(value.clone());
    }
    out.reverse();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvoConfig {
    pub gamma: f64,
    pub epochs: usize,
    /// Gradient steps per epoch for the network backend.
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Share of trajectories held out for loss reporting.
    pub holdout_fraction: f64,
}

impl Default for PvoConfig {
    fn default() -> Self {
        PvoConfig {
            gamma: 0.99,
            epochs: 120,
            batches_per_epoch: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            holdout_fraction: 0.02,
        }
    }
}

impl PvoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.batches_per_epoch == 0 {
            return Err(Error::Config(
                "epochs, batch size and batches per epoch must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BackendKind {
    Tabular,
    Mlp { hidden: Vec<usize> },
}

impl Default for BackendKind {
    fn default() -> Self {
        BackendKind::Mlp {
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValueBackend<S> {
    Tabular(TabularFn<S>),
    Mlp(MlpFn<S>),
}

/// A state-value estimate and the discount it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction<S> {
    pub backend: ValueBackend<S>,
    pub gamma: f64,
}

impl<S: Scalar> ValueFunction<S> {
    pub fn tabular(table: TabularFn<S>, gamma: f64) -> Self {
        ValueFunction {
            backend: ValueBackend::Tabular(table),
            gamma,
        }
    }

    pub fn mlp(net: MlpFn<S>, gamma: f64) -> Self {
        ValueFunction {
            backend: ValueBackend::Mlp(net),
            gamma,
        }
    }

    pub fn value(&self, obs: &Observation) -> Result<S> {
        let v = match &self.backend {
            ValueBackend::Tabular(t) => t.get(obs)[0],
            ValueBackend::Mlp(net) => net.forward(obs)?[0],
        };
        if !v.is_finite() {
            return Err(Error::Numeric(format!("value estimate is {v}")));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Loss of every regression batch, in order.
    pub loss_trace: Vec<f64>,
    /// Mean squared error on the held-out trajectories after each epoch;
    /// empty when nothing was held out.
    pub holdout_loss: Vec<f64>,
    pub train_trajectories: usize,
    pub holdout_trajectories: usize,
}

/// Fits a value function to the demonstration targets.
///
/// The network backend follows the stochastic loop: draw a trajectory
/// uniformly, draw `t` uniformly from `0..T`, regress on `γ^(T−t−1)`,
/// `batch_size` draws per Adam step. The tabular backend instead sweeps every
/// `(trajectory, t)` pair once per epoch in shuffled order with running-mean
/// updates, which lands on the exact least-squares value per state.
pub fn train_values<S: Scalar>(
    demos: &DemoSet,
    config: &PvoConfig,
    backend: &BackendKind,
    seed: u64,
) -> Result<(ValueFunction<S>, TrainReport)> {
    config.validate()?;
    if demos.is_empty() {
        return Err(Error::Config("demonstration set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..demos.len()).collect();
    order.shuffle(&mut rng);
    let holdout_n = ((demos.len() as f64) * config.holdout_fraction).floor() as usize;
    let holdout_n = holdout_n.min(demos.len() - 1);
    let (held, train) = order.split_at(holdout_n);
    let train: Vec<&Trajectory> = train.iter().map(|&i| &demos.trajectories[i]).collect();
    let held: Vec<&Trajectory> = held.iter().map(|&i| &demos.trajectories[i]).collect();
    let gamma = S::of(config.gamma);

    let mut report = TrainReport {
        train_trajectories: train.len(),
        holdout_trajectories: held.len(),
        ..TrainReport::default()
    };

    let vf = match backend {
        BackendKind::Tabular => {
            let mut table = TabularFn::<S>::zeros(1);
            let mut pairs: Vec<(usize, usize)> = train
                .iter()
                .enumerate()
                .flat_map(|(k, tr)| (0..tr.len()).map(move |t| (k, t)))
                .collect();
            for _ in 0..config.epochs {
                pairs.shuffle(&mut rng);
                for chunk in pairs.chunks(config.batch_size) {
                    let mut loss = S::zero();
                    for &(k, t) in chunk {
                        let tr = train[k];
                        let y = pvo_target(tr.len(), t, &gamma)?;
                        loss += table.average_toward(&tr.states[t], &[y])?;
                    }
                    report
                        .loss_trace
                        .push(loss.as_f64() / chunk.len() as f64);
                }
                if !held.is_empty() {
                    let vf = ValueFunction::tabular(table.clone(), config.gamma);
                    report.holdout_loss.push(holdout_mse(&vf, &held, gamma)?);
                }
            }
            ValueFunction::tabular(table, config.gamma)
        }
        BackendKind::Mlp { hidden } => {
            let canvas = demos.config.canvas;
            let mut net = MlpFn::<S>::for_canvas(canvas, hidden, 1, rng.gen())?;
            let lr = S::of(config.learning_rate);
            let mut targets = vec![S::zero(); config.batch_size];
            let mut picks = Vec::with_capacity(config.batch_size);
            for _ in 0..config.epochs {
                for _ in 0..config.batches_per_epoch {
                    picks.clear();
                    for y in targets.iter_mut() {
                        let tr = train[rng.gen_range(0..train.len())];
                        let t = rng.gen_range(0..tr.len());
                        *y = pvo_target(tr.len(), t, &gamma)?;
                        picks.push(&tr.states[t]);
                    }
                    let batch: Vec<(&Observation, Target<'_, S>)> = picks
                        .iter()
                        .zip(&targets)
                        .map(|(&o, y)| (o, Target::All(std::slice::from_ref(y))))
                        .collect();
                    let loss = net.grad_step_targets(&batch, lr)?;
                    report.loss_trace.push(loss.as_f64());
                }
                if !held.is_empty() {
                    let vf = ValueFunction::mlp(net.clone(), config.gamma);
                    report.holdout_loss.push(holdout_mse(&vf, &held, gamma)?);
                }
            }
            ValueFunction::mlp(net, config.gamma)
        }
    };
    Ok((vf, report))
}

fn holdout_mse<S: Scalar>(vf: &ValueFunction<S>, held: &[&Trajectory], gamma: S) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for tr in held {
        for (t, obs) in tr.states.iter().enumerate() {
            let e = (vf.value(obs)? - pvo_target(tr.len(), t, &gamma)?).as_f64();
            total += e * e;
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

/// Per-cell values over the bordered grid of a maze; walls are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Option<f64>>,
}

impl ValueGrid {
    pub fn get(&self, p: Pos) -> Option<f64> {
        self.values[p.row * self.cols + p.col]
    }

    /// Present cells in row-major order.
    pub fn present(&self) -> impl Iterator<Item = (Pos, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (Pos::new(i / self.cols, i % self.cols), v)))
    }

    /// Highest-valued cell; the first in row-major order on ties.
    pub fn argmax(&self) -> Option<Pos> {
        self.present()
            .fold(None, |best: Option<(Pos, f64)>, (p, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((p, v)),
            })
            .map(|(p, _)| p)
    }
}

/// Evaluates `vf` with the agent placed on every empty cell of `maze`.
pub fn evaluate_values<S: Scalar>(vf: &ValueFunction<S>, maze: &Maze) -> Result<ValueGrid> {
    let mut values = vec![None; maze.rows() * maze.cols()];
    for p in maze.empty_cells() {
        let obs = maze.with_agent(p)?.observation();
        values[maze.index(p)] = Some(vf.value(&obs)?.as_f64());
    }
    Ok(ValueGrid {
        rows: maze.rows(),
        cols: maze.cols(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{generate_demonstrations, DemoConfig, MazeMeta};
    use crate::gridworld::{generate_maze, MazeStyle, DEFAULT_CANVAS};
    use crate::Rational;
    use num_bigint::BigInt;

    #[test]
    fn target_examples() {
        for len in 1..20 {
            assert_eq!(pvo_target(len, len - 1, &0.9).unwrap(), 1.0);
        }
        for len in 2..20 {
            assert_eq!(pvo_target(len, len - 2, &0.95).unwrap(), 0.95);
        }
        let mut expected = 1.0f64;
        for _ in 0..9 {
            expected *= 0.99;
        }
        let got = pvo_target(10, 0, &0.99f64).unwrap();
        assert_eq!(got, expected);
        assert!((got - 0.913_517).abs() < 1e-6);
    }

    #[test]
    fn batch_targets_match_single_targets_bitwise() {
        for len in 1..60 {
            let all = pvo_targets(len, &0.99f64);
            for (t, y) in all.iter().enumerate() {
                assert_eq!(y.to_bits(), pvo_target(len, t, &0.99f64).unwrap().to_bits());
            }
        }
        assert!(pvo_targets(0, &0.9f64).is_empty());
    }

    #[test]
    fn target_index_error() {
        assert!(matches!(pvo_target(5, 5, &0.9), Err(Error::Index { t: 5, len: 5 })));
        assert!(matches!(pvo_target(0, 0, &0.9), Err(Error::Index { .. })));
    }

    #[test]
    fn exact_rational_targets() {
        let gamma = Rational::new(BigInt::from(99), BigInt::from(100));
        let v = pvo_target(4, 0, &gamma).unwrap();
        assert_eq!(v, Rational::new(BigInt::from(970_299), BigInt::from(1_000_000)));
    }

    fn single_demo() -> DemoSet {
        let config = DemoConfig {
            canvas: DEFAULT_CANVAS,
            gamma: 0.9,
            style: MazeStyle::Obstacles,
            size_range: [8, 8],
        };
        generate_demonstrations(&config, 1, 17).unwrap()
    }

    #[test]
    fn tabular_fits_distinct_states_exactly() {
        let demos = single_demo();
        let cfg = PvoConfig {
            gamma: 0.9,
            epochs: 3,
            ..PvoConfig::default()
        };
        let (vf, report) = train_values::<f64>(&demos, &cfg, &BackendKind::Tabular, 1).unwrap();
        let tr = &demos.trajectories[0];
        for (t, s) in tr.states.iter().enumerate() {
            let want = 0.9f64.powi((tr.len() - t - 1) as i32);
            assert!((vf.value(s).unwrap() - want).abs() < 1e-6);
        }
        assert_eq!(report.holdout_trajectories, 0);
        assert_eq!(*report.loss_trace.last().unwrap(), 0.0);
    }

    #[test]
    fn tabular_repeated_state_converges_to_mean() {
        // `shared` opens a 3-state and a 5-state trajectory, so its targets
        // are γ² and γ⁴; the least-squares value is their mean
        let maze = generate_maze(5, 6, 6, MazeStyle::Empty).unwrap();
        let cells: Vec<Observation> = maze
            .empty_cells()
            .map(|p| maze.with_agent(p).unwrap().observation())
            .collect();
        let shared = cells[0].clone();
        let meta = MazeMeta {
            seed: 5,
            width: 6,
            height: 6,
            style: MazeStyle::Empty,
        };
        let three = Trajectory {
            maze_meta: meta,
            states: vec![shared.clone(), cells[1].clone(), cells[2].clone()],
        };
        let five = Trajectory {
            maze_meta: meta,
            states: vec![shared.clone(), cells[3].clone(), cells[4].clone(), cells[5].clone(), cells[6].clone()],
        };
        let demos = DemoSet {
            config: single_demo().config,
            trajectories: vec![three, five],
        };
        let g = 0.9f64;
        let cfg = PvoConfig {
            gamma: g,
            epochs: 4,
            holdout_fraction: 0.0,
            ..PvoConfig::default()
        };
        let (vf, _) = train_values::<f64>(&demos, &cfg, &BackendKind::Tabular, 2).unwrap();
        let want = (g.powi(2) + g.powi(4)) / 2.0;
        assert!((vf.value(&shared).unwrap() - want).abs() < 1e-6);
        assert!((vf.value(&cells[6]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_training() {
        let config = DemoConfig {
            canvas: 6,
            gamma: 0.99,
            style: MazeStyle::Empty,
            size_range: [4, 6],
        };
        let demos = generate_demonstrations(&config, 20, 0).unwrap();
        let cfg = PvoConfig {
            epochs: 2,
            batches_per_epoch: 10,
            ..PvoConfig::default()
        };
        let backend = BackendKind::Mlp { hidden: vec![16] };
        let a = train_values::<f64>(&demos, &cfg, &backend, 5).unwrap();
        let b = train_values::<f64>(&demos, &cfg, &backend, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.loss_trace.len(), 20);
        let c = train_values::<f64>(&demos, &cfg, &backend, 6).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn empty_demo_set_is_config_error() {
        let mut demos = single_demo();
        demos.trajectories.clear();
        let r = train_values::<f64>(&demos, &PvoConfig::default(), &BackendKind::Tabular, 0);
        assert!(matches!(r, Err(Error::Config(_))));
        let bad = PvoConfig {
            gamma: 1.0,
            ..PvoConfig::default()
        };
        let r = train_values::<f64>(&single_demo(), &bad, &BackendKind::Tabular, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn zero_network_grid_is_zero_and_pure() {
        let maze = generate_maze(4, 7, 7, MazeStyle::Obstacles).unwrap();
        let net = MlpFn::<f64>::zeros(&[576, 128, 128, 1]).unwrap();
        let vf = ValueFunction::mlp(net, 0.99);
        let grid = evaluate_values(&vf, &maze).unwrap();
        assert_eq!(grid.present().count(), maze.empty_cells().count());
        assert!(grid.present().all(|(_, v)| v == 0.0));
        for p in maze.empty_cells() {
            assert!(grid.get(p).is_some());
        }
        assert_eq!(grid, evaluate_values(&vf, &maze).unwrap());
    }
}
