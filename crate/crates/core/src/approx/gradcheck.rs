use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{MlpFn, Target};
use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::scalar::Scalar;

/// Fraction of parameters probed per check.
const SAMPLE_FRACTION: f64 = 0.05;

/// Magnitude below which gradients are compared absolutely rather than
/// relatively; keeps exact-zero and round-off sized entries from dividing
/// by nothing.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Probes whose perturbation flipped a rectifier; central differences
    /// are meaningless across a kink.
    pub skipped: usize,
}

/// Compares the analytic gradient of the single-sample squared error with
/// central differences on a random 5% of the parameters.
pub fn finite_diff_check<S: Scalar>(
    net: &MlpFn<S>,
    obs: &Observation,
    target: &[S],
    eps: f64,
    seed: u64,
) -> Result<GradCheck> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Usage(format!("perturbation {eps} outside [1e-6, 1e-3]")));
    }
    let (_, analytic) = net.gradient(&[(obs, Target::All(target))])?;
    let n = net.param_count();
    let probes = ((n as f64 * SAMPLE_FRACTION).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, probes).into_vec();
    indices.sort_unstable();

    let base_pattern = net.relu_pattern(obs)?;
    let mut probe = net.clone();
    let eps_s = S::of(eps);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in indices {
        let original = probe.params()[i];
        let mut eval = |value: S| -> Result<(f64, Vec<bool>)> {
            probe.params_mut()[i] = value;
            let loss = probe.loss(&[(obs, Target::All(target))])?.as_f64();
            Ok((loss, probe.relu_pattern(obs)?))
        };
        let (plus, plus_pattern) = eval(original + eps_s)?;
        let (minus, minus_pattern) = eval(original - eps_s)?;
        probe.params_mut()[i] = original;
        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i].as_f64();
        let denom = a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        let rel = (a - numeric).abs() / denom;
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_maze_on, MazeStyle};

    fn obs(seed: u64) -> Observation {
        generate_maze_on(6, seed, 5, 5, MazeStyle::Obstacles).unwrap().observation()
    }

    #[test]
    fn small_random_network() {
        let net = MlpFn::<f64>::for_canvas(6, &[16, 16], 1, 7).unwrap();
        let r = finite_diff_check(&net, &obs(1), &[0.4], 1e-5, 0).unwrap();
        assert!(r.checked > 0);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_network_zero_target() {
        let net = MlpFn::<f64>::zeros(&[144, 8, 8, 1]).unwrap();
        let (_, g) = net.gradient(&[(&obs(2), Target::All(&[0.0]))]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let r = finite_diff_check(&net, &obs(2), &[0.0], 1e-5, 0).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn rejects_bad_perturbation() {
        let net = MlpFn::<f64>::zeros(&[144, 4, 1]).unwrap();
        assert!(finite_diff_check(&net, &obs(2), &[0.0], 1e-2, 0).is_err());
        assert!(finite_diff_check(&net, &obs(2), &[0.0], 1e-7, 0).is_err());
    }
}
