use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::scalar::Scalar;

/// Lookup table from observation key to an output vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularFn<S> {
    default: Vec<S>,
    table: HashMap<u64, Vec<S>>,
    counts: HashMap<u64, u64>,
}

impl<S: Scalar> TabularFn<S> {
    /// Table whose unseen entries evaluate to `default`.
    pub fn new(default: Vec<S>) -> Self {
        TabularFn {
            default,
            table: HashMap::new(),
            counts: HashMap::new(),
        }
    }

    pub fn zeros(out_dim: usize) -> Self {
        Self::new(vec![S::zero(); out_dim])
    }

    pub fn out_dim(&self) -> usize {
        self.default.len()
    }

    pub fn default_value(&self) -> &[S] {
        &self.default
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, obs: &Observation) -> bool {
        self.table.contains_key(&obs.key())
    }

    pub fn get(&self, obs: &Observation) -> &[S] {
        self.get_key(obs.key())
    }

    pub fn get_key(&self, key: u64) -> &[S] {
        self.table.get(&key).map_or(&self.default, Vec::as_slice)
    }

    pub fn forward(&self, obs: &Observation) -> Vec<S> {
        self.get(obs).to_vec()
    }

    fn check(&self, values: &[S]) -> Result<()> {
        if values.len() != self.out_dim() {
            return Err(Error::Shape {
                expected: self.out_dim(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite tabular value".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, obs: &Observation, values: Vec<S>) -> Result<()> {
        self.set_key(obs.key(), values)
    }

    pub fn set_key(&mut self, key: u64, values: Vec<S>) -> Result<()> {
        self.check(&values)?;
        self.table.insert(key, values);
        Ok(())
    }

    fn entry(&mut self, key: u64) -> &mut Vec<S> {
        let default = &self.default;
        self.table.entry(key).or_insert_with(|| default.clone())
    }

    /// Moves one output toward `target` by step size `lr`:
    /// `q += lr · (target − q)`. Returns the squared error before the move.
    pub fn update_toward(&mut self, obs: &Observation, index: usize, target: S, lr: S) -> Result<S> {
        if index >= self.out_dim() {
            return Err(Error::Shape {
                expected: self.out_dim(),
                actual: index + 1,
            });
        }
        if !target.is_finite() {
            return Err(Error::Numeric(format!("non-finite target {target}")));
        }
        let q = &mut self.entry(obs.key())[index];
        let err = target - *q;
        *q += lr * err;
        Ok(err * err)
    }

    /// Running-average update: after `n` calls for one key the stored value
    /// is the arithmetic mean of the `n` targets, the least-squares fit.
    /// Returns the pre-update squared error averaged over outputs.
    pub fn average_toward(&mut self, obs: &Observation, target: &[S]) -> Result<S> {
        self.check(target)?;
        let key = obs.key();
        let n = {
            let c = self.counts.entry(key).or_insert(0);
            *c += 1;
            *c
        };
        let inv = S::one() / S::from_u64(n).expect("count fits");
        let row = self.entry(key);
        let mut loss = S::zero();
        for (v, &y) in row.iter_mut().zip(target) {
            let err = y - *v;
            loss += err * err;
            *v += err * inv;
        }
        Ok(loss / S::from_usize(target.len()).unwrap())
    }

    pub fn count(&self, obs: &Observation) -> u64 {
        self.counts.get(&obs.key()).copied().unwrap_or(0)
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<(u64, &[S], u64)> {
        let mut out: Vec<_> = self
            .table
            .iter()
            .map(|(&k, v)| (k, v.as_slice(), self.counts.get(&k).copied().unwrap_or(0)))
            .collect();
        out.sort_unstable_by_key(|e| e.0);
        out
    }

    pub(crate) fn set_count(&mut self, key: u64, n: u64) {
        if n > 0 {
            self.counts.insert(key, n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_maze, MazeStyle};

    fn obs(seed: u64) -> Observation {
        generate_maze(seed, 5, 5, MazeStyle::Empty).unwrap().observation()
    }

    #[test]
    fn default_for_unseen() {
        let t = TabularFn::<f64>::zeros(1);
        assert_eq!(t.forward(&obs(0)), vec![0.0]);
        let t = TabularFn::new(vec![0.5f32; 4]);
        assert_eq!(t.get(&obs(0)), &[0.5; 4]);
    }

    #[test]
    fn stored_value_is_exact() {
        let mut t = TabularFn::<f64>::zeros(1);
        t.average_toward(&obs(1), &[0.913_517_247_483_640_1]).unwrap();
        assert_eq!(t.forward(&obs(1)), vec![0.913_517_247_483_640_1]);
        assert_eq!(t.forward(&obs(2)), vec![0.0]);
    }

    #[test]
    fn running_average_is_mean() {
        let mut t = TabularFn::<f64>::zeros(1);
        let targets = [0.3, 0.9, 0.1, 0.7, 0.25];
        for y in targets {
            t.average_toward(&obs(3), &[y]).unwrap();
        }
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        assert!((t.forward(&obs(3))[0] - mean).abs() < 1e-15);
        assert_eq!(t.count(&obs(3)), 5);
    }

    #[test]
    fn update_toward_moves_one_output() {
        let mut t = TabularFn::<f64>::zeros(4);
        let loss = t.update_toward(&obs(4), 2, 1.0, 0.5).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(t.get(&obs(4)), &[0.0, 0.0, 0.5, 0.0]);
        assert!(matches!(t.update_toward(&obs(4), 4, 1.0, 0.5), Err(Error::Shape { .. })));
        assert!(matches!(t.update_toward(&obs(4), 0, f64::NAN, 0.5), Err(Error::Numeric(_))));
    }
}
