use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::scalar::Scalar;

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

/// Adaptive-moment optimizer state, one slot per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<S> {
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    m: Vec<S>,
    v: Vec<S>,
    t: i32,
}

impl<S: Scalar> Adam<S> {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            eps: S::of(1e-8),
            m: vec![S::zero(); n],
            v: vec![S::zero(); n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    fn apply(&mut self, params: &mut [S], grad: &[S], lr: S) {
        self.t += 1;
        let one = S::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

const FIRST_LAYER_BIAS: f64 = 0.1;

/// Regression target for one sample.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a, S> {
    /// Every output has a target; squared error is averaged over outputs.
    All(&'a [S]),
    /// Only output `index` is supervised (Q-learning on the taken action).
    One(usize, S),
}

/// Fully connected network, rectified-linear hidden layers and a linear
/// head. Parameters are stored flat, layer by layer, each layer as its
/// row-major `out × in` weight matrix followed by its biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpFn<S> {
    sizes: Vec<usize>,
    params: Vec<S>,
    adam: Adam<S>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<S: Scalar> MlpFn<S> {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n = param_count(sizes);
        Ok(MlpFn {
            sizes: sizes.to_vec(),
            params: vec![S::zero(); n],
            adam: Adam::new(n),
        })
    }

    /// The first layer starts with zero weights and biases of 0.1, so an
    /// input that is never active in training keeps contributing nothing;
    /// one-hot planes make that the common case. Deeper layers are
    /// He-uniform, weights in `±sqrt(6 / fan_in)` and zero biases, which
    /// also breaks the symmetry between hidden units.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fan_in, fan_out) = (sizes[0], sizes[1]);
        for b in &mut net.params[fan_in * fan_out..fan_in * fan_out + fan_out] {
            *b = S::of(FIRST_LAYER_BIAS);
        }
        let mut off = fan_in * fan_out + fan_out;
        for w in sizes[1..].windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = S::of(rng.gen_range(-limit..limit));
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// Default value network for observations on `canvas`.
    pub fn value_net(canvas: usize, seed: u64) -> Result<Self> {
        Self::for_canvas(canvas, &DEFAULT_HIDDEN, 1, seed)
    }

    /// Default action-value network (one output per action).
    pub fn q_net(canvas: usize, seed: u64) -> Result<Self> {
        Self::for_canvas(canvas, &DEFAULT_HIDDEN, 4, seed)
    }

    pub fn for_canvas(canvas: usize, hidden: &[usize], outputs: usize, seed: u64) -> Result<Self> {
        let mut sizes = vec![crate::gridworld::PLANES * canvas * canvas];
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        Self::new(&sizes, seed)
    }

    /// Rebuilds a network from a flat parameter vector.
    pub fn from_params(sizes: &[usize], params: Vec<S>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn optimizer(&self) -> &Adam<S> {
        &self.adam
    }

    fn input(&self, obs: &Observation) -> Result<Vec<S>> {
        if obs.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: obs.len(),
            });
        }
        Ok(obs
            .planes()
            .iter()
            .map(|&b| if b == 0 { S::zero() } else { S::one() })
            .collect())
    }

    pub fn forward(&self, obs: &Observation) -> Result<Vec<S>> {
        let x = self.input(obs)?;
        Ok(self.activations(&x).pop().unwrap())
    }

    pub fn forward_input(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(self.activations(x).pop().unwrap())
    }

    /// Outputs of every layer, input included.
    fn activations(&self, x: &[S]) -> Vec<Vec<S>> {
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let prev = &acts[l];
            let nz: Vec<(usize, S)> = prev
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != S::zero())
                .map(|(j, &v)| (j, v))
                .collect();
            let relu = l + 1 < layers;
            let out: Vec<S> = (0..n_out)
                .map(|i| {
                    let row = &w[i * n_in..(i + 1) * n_in];
                    let z = nz.iter().fold(b[i], |acc, &(j, v)| acc + row[j] * v);
                    if relu && z < S::zero() {
                        S::zero()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        acts
    }

    /// Which hidden units are active for `obs`; used to detect kinks.
    pub(crate) fn relu_pattern(&self, obs: &Observation) -> Result<Vec<bool>> {
        let x = self.input(obs)?;
        let acts = self.activations(&x);
        Ok(acts[1..acts.len() - 1]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > S::zero()))
            .collect())
    }

    /// Backpropagates `d_out` (dL/d output) for one sample into `grad`.
    fn backward(&self, acts: &[Vec<S>], d_out: Vec<S>, grad: &mut [S]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            let nz: Vec<usize> = (0..n_in).filter(|&j| prev[j] != S::zero()).collect();
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for i in 0..n_out {
                    let d = delta[i];
                    if d == S::zero() {
                        continue;
                    }
                    gb[i] += d;
                    let row = &mut gw[i * n_in..(i + 1) * n_in];
                    for &j in &nz {
                        row[j] += d * prev[j];
                    }
                }
            }
            if l == 0 {
                break;
            }
            // hidden inputs are post-ReLU, so nonzero exactly where active
            let w = &self.params[off..off + n_in * n_out];
            let mut next = vec![S::zero(); n_in];
            for i in 0..n_out {
                let d = delta[i];
                if d == S::zero() {
                    continue;
                }
                let row = &w[i * n_in..(i + 1) * n_in];
                for &j in &nz {
                    next[j] += row[j] * d;
                }
            }
            delta = next;
        }
    }

    fn sample_loss(&self, out: &[S], target: Target<'_, S>) -> Result<(S, Vec<S>)> {
        match target {
            Target::All(y) => {
                if y.len() != out.len() {
                    return Err(Error::Shape {
                        expected: out.len(),
                        actual: y.len(),
                    });
                }
                let k = S::from_usize(y.len()).unwrap();
                let mut loss = S::zero();
                let mut d = Vec::with_capacity(y.len());
                for (&f, &t) in out.iter().zip(y) {
                    if !t.is_finite() {
                        return Err(Error::Numeric(format!("non-finite target {t}")));
                    }
                    loss += (f - t) * (f - t);
                    d.push(S::of(2.0) * (f - t) / k);
                }
                Ok((loss / k, d))
            }
            Target::One(index, t) => {
                if index >= out.len() {
                    return Err(Error::Shape {
                        expected: out.len(),
                        actual: index + 1,
                    });
                }
                if !t.is_finite() {
                    return Err(Error::Numeric(format!("non-finite target {t}")));
                }
                let mut d = vec![S::zero(); out.len()];
                let e = out[index] - t;
                d[index] = S::of(2.0) * e;
                Ok((e * e, d))
            }
        }
    }

    /// Mean squared error over the batch and its gradient with respect to
    /// every parameter.
    pub fn gradient(&self, batch: &[(&Observation, Target<'_, S>)]) -> Result<(S, Vec<S>)> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let scale = S::one() / S::from_usize(batch.len()).unwrap();
        let mut grad = vec![S::zero(); self.params.len()];
        let mut total = S::zero();
        for &(obs, target) in batch {
            let x = self.input(obs)?;
            let acts = self.activations(&x);
            let (loss, d) = self.sample_loss(acts.last().unwrap(), target)?;
            total += loss;
            self.backward(&acts, d.into_iter().map(|v| v * scale).collect(), &mut grad);
        }
        Ok((total * scale, grad))
    }

    pub fn loss(&self, batch: &[(&Observation, Target<'_, S>)]) -> Result<S> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let mut total = S::zero();
        for &(obs, target) in batch {
            let out = self.forward(obs)?;
            total += self.sample_loss(&out, target)?.0;
        }
        Ok(total / S::from_usize(batch.len()).unwrap())
    }

    /// One Adam step on the batch mean squared error. Returns the loss before
    /// the update.
    pub fn grad_step(&mut self, batch: &[(&Observation, &[S])], lr: S) -> Result<S> {
        let batch: Vec<_> = batch.iter().map(|&(o, y)| (o, Target::All(y))).collect();
        self.grad_step_targets(&batch, lr)
    }

    pub fn grad_step_targets(&mut self, batch: &[(&Observation, Target<'_, S>)], lr: S) -> Result<S> {
        let (loss, grad) = self.gradient(batch)?;
        self.adam.apply(&mut self.params, &grad, lr);
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_maze_on, MazeStyle};

    fn obs(canvas: usize, seed: u64) -> Observation {
        generate_maze_on(canvas, seed, 4, 4, MazeStyle::Empty).unwrap().observation()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpFn::<f64>::zeros(&[4 * 36, 8, 8, 1]).unwrap();
        assert_eq!(net.forward(&obs(6, 1)).unwrap(), vec![0.0]);
        assert_eq!(net.param_count(), 144 * 8 + 8 + 8 * 8 + 8 + 8 + 1);
    }

    #[test]
    fn hand_computed_single_hidden_unit() {
        // 3 inputs -> 1 hidden -> 1 output
        // h = relu(0.5*1 - 0.25*2 + 1.0*3 + 0.1) = relu(3.1) = 3.1
        // y = -2 * 3.1 + 0.3 = -5.9
        let net = MlpFn::<f64>::from_params(&[3, 1, 1], vec![0.5, -0.25, 1.0, 0.1, -2.0, 0.3]).unwrap();
        let y = net.forward_input(&[1.0, 2.0, 3.0]).unwrap();
        assert!((y[0] - (-5.9)).abs() < 1e-12);
        // negative pre-activation is clipped: h = relu(-1 + 0.1) = 0, y = 0.3
        let y = net.forward_input(&[-2.0, 0.0, 0.0]).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let net = MlpFn::<f64>::value_net(12, 0).unwrap();
        assert!(matches!(net.forward(&obs(6, 0)), Err(Error::Shape { expected: 576, actual: 144 })));
        assert!(MlpFn::<f64>::zeros(&[3]).is_err());
    }

    #[test]
    fn deterministic_init_and_forward() {
        let a = MlpFn::<f64>::value_net(6, 5).unwrap();
        let b = MlpFn::<f64>::value_net(6, 5).unwrap();
        assert_eq!(a, b);
        let o = obs(6, 2);
        assert_eq!(a.forward(&o).unwrap(), a.forward(&o).unwrap());
        assert_ne!(a, MlpFn::<f64>::value_net(6, 6).unwrap());
    }

    #[test]
    fn matched_targets_leave_weights_alone() {
        let mut net = MlpFn::<f64>::value_net(6, 3).unwrap();
        let o = obs(6, 3);
        let y = net.forward(&o).unwrap();
        let before = net.params().to_vec();
        let loss = net.grad_step(&[(&o, &y)], 1e-3).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn fits_a_single_point() {
        let mut net = MlpFn::<f64>::value_net(6, 11).unwrap();
        let o = obs(6, 4);
        let y = [0.7];
        let mut last = f64::INFINITY;
        for _ in 0..5000 {
            last = net.grad_step(&[(&o, &y)], 1e-3).unwrap();
            if last < 1e-6 {
                break;
            }
        }
        assert!(last < 1e-6, "loss {last}");
    }

    #[test]
    fn f32_network_trains_too() {
        let mut net = MlpFn::<f32>::for_canvas(6, &[16, 16], 1, 2).unwrap();
        let o = obs(6, 5);
        let first = net.grad_step(&[(&o, &[0.5])], 1e-2).unwrap();
        let mut last = first;
        for _ in 0..300 {
            last = net.grad_step(&[(&o, &[0.5])], 1e-2).unwrap();
        }
        assert!(last < first * 1e-2, "{first} -> {last}");
    }

    #[test]
    fn single_action_target_only_touches_its_head() {
        let net = MlpFn::<f64>::for_canvas(6, &[8], 4, 1).unwrap();
        let o = obs(6, 6);
        let (_, grad) = net.gradient(&[(&o, Target::One(2, 1.0))]).unwrap();
        // output layer biases are the last 4 parameters
        let n = grad.len();
        assert_eq!(grad[n - 4], 0.0);
        assert_eq!(grad[n - 3], 0.0);
        assert_ne!(grad[n - 2], 0.0);
        assert_eq!(grad[n - 1], 0.0);
    }

    #[test]
    fn non_finite_target_rejected() {
        let mut net = MlpFn::<f64>::value_net(6, 3).unwrap();
        let o = obs(6, 3);
        assert!(matches!(net.grad_step(&[(&o, &[f64::NAN])], 1e-3), Err(Error::Numeric(_))));
        assert!(matches!(net.grad_step(&[], 1e-3), Err(Error::Usage(_))));
    }
}
