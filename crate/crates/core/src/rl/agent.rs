use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    q_target_pvo_value, q_target_shaped, q_target_sparse, AgentMode, CachedValue, QBackendKind,
    QFunction, ShapingForm, Transition,
};
use crate::error::{Error, Result};
use crate::gridworld::{Action, Maze, Observation, Pos};
use crate::pvo::ValueFunction;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub mode: AgentMode,
    pub gamma: f64,
    /// Step size; `None` picks 0.5 for tables and 1e-3 (Adam) for networks.
    pub alpha: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Linear decay length; `None` means the first 20% of `max_steps`.
    pub epsilon_decay_steps: Option<usize>,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Frozen-copy refresh period, sparse baseline only.
    pub target_sync: usize,
    pub max_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Start training episodes from a uniformly drawn non-goal cell instead
    /// of the level's start. Evaluation always uses the level's start.
    pub exploring_starts: bool,
    pub backend: QBackendKind,
    pub shaping_form: ShapingForm,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            mode: AgentMode::SparseBaseline,
            gamma: 0.99,
            alpha: None,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            replay_capacity: 50_000,
            batch_size: 32,
            target_sync: 500,
            max_steps: 20_000,
            eval_interval: 1_000,
            eval_episodes: 10,
            exploring_starts: false,
            backend: QBackendKind::Tabular,
            shaping_form: ShapingForm::WithEnvReward,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config("replay must hold at least one batch".into()));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 || self.target_sync == 0 {
            return Err(Error::Config("intervals and episode counts must be positive".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(Error::Config("alpha must be positive".into()));
            }
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("epsilon {e} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        self.alpha.unwrap_or(match self.backend {
            QBackendKind::Tabular => 0.5,
            QBackendKind::Mlp { .. } => 1e-3,
        })
    }

    pub fn epsilon_at(&self, step: usize) -> f64 {
        let decay = self
            .epsilon_decay_steps
            .unwrap_or(self.max_steps / 5)
            .max(1);
        if step >= decay {
            return self.epsilon_end;
        }
        let frac = step as f64 / decay as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// One evaluation period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_steps: usize,
    pub eval_success_rate: f64,
    /// Mean discounted return of the greedy episodes.
    pub eval_mean_return: f64,
    pub eval_mean_episode_len: f64,
    pub epsilon: f64,
    /// Mean regression loss since the previous row; NaN before learning starts.
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTrace {
    pub rows: Vec<MetricsRow>,
    /// Episodes that ended on the step cap during training.
    pub truncated_episodes: usize,
    pub completed_episodes: usize,
}

impl MetricsTrace {
    /// First evaluated step count at which the success rate reached
    /// `threshold`.
    pub fn steps_to_success(&self, threshold: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.eval_success_rate >= threshold)
            .map(|r| r.env_steps)
    }

    pub fn final_success_rate(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.eval_success_rate)
    }
}

pub fn write_metrics_csv<W: Write>(trace: &MetricsTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Config(format!("metrics csv: {e}"));
    for row in &trace.rows {
        w.serialize(row).map_err(to_err)?;
    }
    if trace.rows.is_empty() {
        w.write_record([
            "env_steps",
            "eval_success_rate",
            "eval_mean_return",
            "eval_mean_episode_len",
            "epsilon",
            "loss",
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("metrics csv: {e}")))
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(i + 2, e.to_string())))
        .collect()
}

struct Replay {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl Replay {
    fn new(capacity: usize) -> Self {
        Replay {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
        }
    }

    fn push(&mut self, tr: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(tr);
        } else {
            self.items[self.next] = tr;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

/// ε-greedy Q-learning with uniform replay on a single level.
///
/// Every episode restarts from the level's agent position, or from a random
/// non-goal cell with `exploring_starts`; cells reachable only through the
/// goal are otherwise never visited. After each
/// environment step one batch is drawn from replay and regressed toward the
/// mode's target; a greedy evaluation is recorded every `eval_interval`
/// steps. Transitions are only ever recorded from non-terminal states, so
/// no update touches the goal observation.
pub fn train_agent<S: Scalar>(
    level: &Maze,
    config: &AgentConfig,
    values: Option<&ValueFunction<S>>,
    seed: u64,
) -> Result<(QFunction<S>, MetricsTrace)> {
    config.validate()?;
    let values = match (config.mode.needs_values(), values) {
        (true, None) => {
            return Err(Error::Config(format!(
                "{} needs a value function",
                config.mode.name()
            )))
        }
        (true, Some(v)) if v.gamma != config.gamma => {
            return Err(Error::Config(format!(
                "value function trained with gamma {} but agent uses {}",
                v.gamma, config.gamma
            )))
        }
        (true, Some(v)) => Some(CachedValue::new(v)),
        (false, _) => None,
    };
    if level.at_goal() {
        return Err(Error::Usage("level starts on the goal".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QFunction::<S>::new(&config.backend, level.canvas(), rng.gen())?;
    let mut frozen = (config.mode == AgentMode::SparseBaseline).then(|| q.clone());
    let gamma = S::of(config.gamma);
    let lr = S::of(config.learning_rate());
    let starts: Vec<Pos> = if config.exploring_starts {
        level.empty_cells().filter(|&p| p != level.goal()).collect()
    } else {
        vec![level.agent()]
    };
    let draw_start = |rng: &mut ChaCha8Rng| starts[rng.gen_range(0..starts.len())];

    let mut replay = Replay::new(config.replay_capacity);
    let mut trace = MetricsTrace::default();
    let mut env = level.reset_to(draw_start(&mut rng))?;
    let mut obs = env.observation();
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    let mut picks = Vec::with_capacity(config.batch_size);
    let mut targets = Vec::with_capacity(config.batch_size);

    for step in 1..=config.max_steps {
        let epsilon = config.epsilon_at(step - 1);
        let action = if rng.gen::<f64>() < epsilon {
            Action::ALL[rng.gen_range(0..Action::COUNT)]
        } else {
            q.greedy(&obs)?
        };
        let (next, res) = env.step(action)?;
        debug_assert!(!env.at_goal());
        replay.push(Transition {
            s: obs,
            a: action,
            r: res.reward,
            s_next: res.observation.clone(),
            done: res.done,
            truncated: res.truncated,
        });
        if res.done {
            if res.truncated {
                trace.truncated_episodes += 1;
            } else {
                trace.completed_episodes += 1;
            }
            env = level.reset_to(draw_start(&mut rng))?;
            obs = env.observation();
        } else {
            env = next;
            obs = res.observation;
        }

        if replay.len() >= config.batch_size {
            picks.clear();
            targets.clear();
            for _ in 0..config.batch_size {
                picks.push(rng.gen_range(0..replay.len()));
            }
            for &i in &picks {
                let tr = &replay.items[i];
                let y = match (config.mode, &values) {
                    (AgentMode::SparseBaseline, _) => {
                        q_target_sparse(tr, frozen.as_ref().unwrap(), gamma)?
                    }
                    (AgentMode::PvoValue, Some(v)) => q_target_pvo_value(tr, v, gamma)?,
                    (AgentMode::PvoShaping, Some(v)) => {
                        q_target_shaped(tr, &q, v, gamma, config.shaping_form)?
                    }
                    _ => unreachable!("value function checked above"),
                };
                targets.push(y);
            }
            let batch: Vec<(&Observation, Action, S)> = picks
                .iter()
                .zip(&targets)
                .map(|(&i, &y)| (&replay.items[i].s, replay.items[i].a, y))
                .collect();
            loss_sum += q.update(&batch, lr)?.as_f64();
            loss_n += 1;
        }

        if let Some(f) = frozen.as_mut() {
            if step % config.target_sync == 0 {
                *f = q.clone();
            }
        }

        if step % config.eval_interval == 0 {
            let (success, ret, len) = evaluate_greedy(&q, level, config)?;
            trace.rows.push(MetricsRow {
                env_steps: step,
                eval_success_rate: success,
                eval_mean_return: ret,
                eval_mean_episode_len: len,
                epsilon,
                loss: if loss_n == 0 {
                    f64::NAN
                } else {
                    loss_sum / loss_n as f64
                },
            });
            loss_sum = 0.0;
            loss_n = 0;
        }
    }
    Ok((q, trace))
}

fn evaluate_greedy<S: Scalar>(
    q: &QFunction<S>,
    level: &Maze,
    config: &AgentConfig,
) -> Result<(f64, f64, f64)> {
    let mut successes = 0usize;
    let mut total_return = 0.0;
    let mut total_len = 0usize;
    for _ in 0..config.eval_episodes {
        let mut env = level.reset_to(level.agent())?;
        let mut obs = env.observation();
        loop {
            let (next, res) = env.step(q.greedy(&obs)?)?;
            if res.done {
                total_len += next.steps();
                if !res.truncated {
                    successes += 1;
                    total_return += config.gamma.powi(next.steps() as i32 - 1);
                }
                break;
            }
            env = next;
            obs = res.observation;
        }
    }
    let n = config.eval_episodes as f64;
    Ok((successes as f64 / n, total_return / n, total_len as f64 / n))
}
