//! Q-learning with three target constructions and an exact oracle.
//!
//! * sparse baseline: `r + γ max_a Q_frozen(s′, a)`, cut at terminals;
//! * value replacement: `γ V(s′)`, no bootstrapping from Q at all;
//! * potential shaping: the baseline target with `r` replaced by
//!   `r + γ V(s′) − V(s)`.

mod agent;
mod oracle;

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::approx::{MlpFn, TabularFn, Target, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::gridworld::{Action, Observation};
use crate::pvo::ValueFunction;
use crate::scalar::Scalar;

pub use agent::{
    read_metrics_csv, train_agent, write_metrics_csv, AgentConfig, MetricsRow, MetricsTrace,
};
pub use oracle::{exact_pvo_values, value_iteration_oracle, OracleSolution};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: Action,
    pub r: f64,
    pub s_next: Observation,
    pub done: bool,
    /// Episode ended on the step cap; `s_next` is not terminal.
    pub truncated: bool,
}

impl Transition {
    /// `s_next` is the goal.
    pub fn is_terminal(&self) -> bool {
        self.done && !self.truncated
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    #[default]
    SparseBaseline,
    PvoValue,
    PvoShaping,
}

impl AgentMode {
    pub const ALL: [AgentMode; 3] = [
        AgentMode::SparseBaseline,
        AgentMode::PvoValue,
        AgentMode::PvoShaping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentMode::SparseBaseline => "sparse_baseline",
            AgentMode::PvoValue => "pvo_value",
            AgentMode::PvoShaping => "pvo_shaping",
        }
    }

    pub fn needs_values(self) -> bool {
        self != AgentMode::SparseBaseline
    }
}

impl std::str::FromStr for AgentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent mode {s:?}")))
    }
}

/// Which shaped reward to use in shaping mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingForm {
    /// `r + γ V(s′) − V(s)`; keeps the optimal policy unchanged.
    #[default]
    WithEnvReward,
    /// `γ V(s′) − V(s)` alone.
    PotentialOnly,
}

/// Anything that assigns a scalar value to an observation.
pub trait StateValue<S> {
    fn state_value(&self, obs: &Observation) -> Result<S>;
}

impl<S: Scalar> StateValue<S> for ValueFunction<S> {
    fn state_value(&self, obs: &Observation) -> Result<S> {
        self.value(obs)
    }
}

/// Memoizes a frozen value function by observation key.
pub struct CachedValue<'a, S> {
    inner: &'a ValueFunction<S>,
    cache: RefCell<HashMap<u64, S>>,
}

impl<'a, S: Scalar> CachedValue<'a, S> {
    pub fn new(inner: &'a ValueFunction<S>) -> Self {
        CachedValue {
            inner,
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl<S: Scalar> StateValue<S> for CachedValue<'_, S> {
    fn state_value(&self, obs: &Observation) -> Result<S> {
        if let Some(&v) = self.cache.borrow().get(&obs.key()) {
            return Ok(v);
        }
        let v = self.inner.value(obs)?;
        self.cache.borrow_mut().insert(obs.key(), v);
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum QBackendKind {
    Tabular,
    Mlp { hidden: Vec<usize> },
}

impl Default for QBackendKind {
    fn default() -> Self {
        QBackendKind::Tabular
    }
}

impl QBackendKind {
    pub fn default_mlp() -> Self {
        QBackendKind::Mlp {
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QFunction<S> {
    Tabular(TabularFn<S>),
    Mlp(MlpFn<S>),
}

impl<S: Scalar> QFunction<S> {
    pub fn new(kind: &QBackendKind, canvas: usize, seed: u64) -> Result<Self> {
        Ok(match kind {
            QBackendKind::Tabular => QFunction::Tabular(TabularFn::zeros(Action::COUNT)),
            QBackendKind::Mlp { hidden } => {
                QFunction::Mlp(MlpFn::for_canvas(canvas, hidden, Action::COUNT, seed)?)
            }
        })
    }

    /// One value per action in canonical order.
    pub fn values(&self, obs: &Observation) -> Result<Vec<S>> {
        let q = match self {
            QFunction::Tabular(t) => t.forward(obs),
            QFunction::Mlp(net) => net.forward(obs)?,
        };
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite action value".into()));
        }
        Ok(q)
    }

    pub fn max_value(&self, obs: &Observation) -> Result<S> {
        Ok(self
            .values(obs)?
            .into_iter()
            .fold(S::neg_infinity(), S::max))
    }

    /// Highest-valued action; the earliest in canonical order on ties.
    pub fn greedy(&self, obs: &Observation) -> Result<Action> {
        let q = self.values(obs)?;
        let mut best = 0;
        for (i, &v) in q.iter().enumerate().skip(1) {
            if v > q[best] {
                best = i;
            }
        }
        Ok(Action::ALL[best])
    }

    /// Regresses `Q(s, a)` toward each target. Returns the mean squared
    /// error before the update.
    pub fn update(&mut self, batch: &[(&Observation, Action, S)], lr: S) -> Result<S> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        match self {
            QFunction::Tabular(t) => {
                let mut loss = S::zero();
                for &(s, a, y) in batch {
                    loss += t.update_toward(s, a.index(), y, lr)?;
                }
                Ok(loss / S::from_usize(batch.len()).unwrap())
            }
            QFunction::Mlp(net) => {
                let items: Vec<_> = batch
                    .iter()
                    .map(|&(s, a, y)| (s, Target::One(a.index(), y)))
                    .collect();
                net.grad_step_targets(&items, lr)
            }
        }
    }
}

/// Sparse Q-learning target: `r` at terminals, else `r + γ max_a Q(s′, a)`.
pub fn q_target_sparse<S: Scalar>(tr: &Transition, q_frozen: &QFunction<S>, gamma: S) -> Result<S> {
    sparse_target(tr, S::of(tr.r), q_frozen, gamma)
}

fn sparse_target<S: Scalar>(tr: &Transition, r: S, q: &QFunction<S>, gamma: S) -> Result<S> {
    if tr.is_terminal() {
        Ok(r)
    } else {
        Ok(r + gamma * q.max_value(&tr.s_next)?)
    }
}

/// Value-replacement target `γ V(s′)`, applied to every transition.
pub fn q_target_pvo_value<S: Scalar, V: StateValue<S> + ?Sized>(
    tr: &Transition,
    v: &V,
    gamma: S,
) -> Result<S> {
    Ok(gamma * v.state_value(&tr.s_next)?)
}

/// Potential-based shaped reward `r + γ V(s′) − V(s)`, or the potential
/// difference alone for [`ShapingForm::PotentialOnly`].
pub fn shaped_reward<S: Scalar, V: StateValue<S> + ?Sized>(
    tr: &Transition,
    v: &V,
    gamma: S,
    form: ShapingForm,
) -> Result<S> {
    let shaping = gamma * v.state_value(&tr.s_next)? - v.state_value(&tr.s)?;
    Ok(match form {
        ShapingForm::WithEnvReward => S::of(tr.r) + shaping,
        ShapingForm::PotentialOnly => shaping,
    })
}

/// Shaping-mode target: the sparse target computed on the shaped reward.
pub fn q_target_shaped<S: Scalar, V: StateValue<S> + ?Sized>(
    tr: &Transition,
    q: &QFunction<S>,
    v: &V,
    gamma: S,
    form: ShapingForm,
) -> Result<S> {
    let r = shaped_reward(tr, v, gamma, form)?;
    sparse_target(tr, r, q, gamma)
}
