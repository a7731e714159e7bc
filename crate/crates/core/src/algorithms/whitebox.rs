//! Methods that read the function directly instead of through germs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::error::{Error, Result};
use crate::linalg;
use crate::pa_core::MaxMinFunction;
use crate::subdiff::{certify_gas, min_norm_hull, sampled_gradients};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be positive, got {v}")))
    }
}

/// Goldstein's scheme with the exact δ-subdifferential:
/// `x <- x - δ g / |g|`, `g` the min-norm element of `∂_δ f(x)`.
///
/// Stops at the first certified point. Running out of steps is reported
/// through `converged = false`. Panics if a step fails to decrease `f` by
/// `δ ε`, which the min-norm choice guarantees.
pub fn goldstein_conceptual(
    f: &MaxMinFunction,
    x0: &[f64],
    epsilon: f64,
    delta: f64,
    max_steps: usize,
) -> Result<RunResult> {
    positive("epsilon", epsilon)?;
    positive("delta", delta)?;
    f.check_dim(x0)?;
    let mut trajectory = vec![x0.to_vec()];
    let mut values = vec![f.value(x0)];
    let mut distances = Vec::new();
    let mut certified = Vec::new();
    loop {
        let x = trajectory.last().expect("nonempty");
        let cert = certify_gas(f, x, epsilon, delta)?;
        distances.push(cert.distance);
        certified.push(cert.is_satisfied());
        if cert.is_satisfied() || trajectory.len() > max_steps {
            break;
        }
        let g = cert.min_norm_element();
        let next = linalg::axpy(x, -delta / linalg::norm(&g), &g);
        let (before, after) = (*values.last().expect("nonempty"), f.value(&next));
        assert!(
            after <= before - delta * epsilon + 1e-9,
            "descent step failed: {before} -> {after}"
        );
        values.push(after);
        trajectory.push(next);
    }
    let converged = *certified.last().expect("nonempty");
    Ok(RunResult {
        algorithm: "goldstein".into(),
        step_count: trajectory.len() - 1,
        best_distance: distances.iter().copied().fold(f64::INFINITY, f64::min),
        trajectory,
        values,
        distances,
        certified,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub epsilon: f64,
    pub delta: f64,
    pub samples: usize,
    pub max_steps: usize,
    pub seed: u64,
}

/// Gradient sampling with a fixed normalized step of length δ.
///
/// Each step draws `samples` points of `B_δ(x)`, takes the min-norm point
/// `ĝ` of their gradients' hull, and stops once `|ĝ| <= ε`. The returned
/// distances are exact, computed afterwards at every iterate.
pub fn gradient_sampling(f: &MaxMinFunction, x0: &[f64], params: &SamplingParams) -> Result<RunResult> {
    positive("epsilon", params.epsilon)?;
    positive("delta", params.delta)?;
    if params.samples == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    f.check_dim(x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trajectory = vec![x0.to_vec()];
    for _ in 0..params.max_steps {
        let x = trajectory.last().expect("nonempty");
        let grads = sampled_gradients(f, x, params.delta, params.samples, &mut rng);
        if grads.is_empty() {
            continue;
        }
        let g = min_norm_hull(&grads);
        if g.distance <= params.epsilon {
            break;
        }
        let next = linalg::axpy(x, -params.delta / g.distance, &g.point);
        trajectory.push(next);
    }
    let mut run = RunResult::evaluate("gradient-sampling", f, trajectory, params.epsilon, params.delta)?;
    run.step_count -= 1;
    Ok(run)
}

/// Queries `0` and `δ e1`. On a fixed resisting function one of the two
/// usually sits near a kink; against the adaptive adversary neither does.
pub fn two_query_gas_finder(f: &MaxMinFunction, delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    positive("delta", delta)?;
    let d = f.dimension();
    Ok((vec![0.0; d], linalg::scale(&linalg::unit(d, 0), delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{build_f, build_h, ResistingParams};
    use crate::pa_core::{infimum, AffineAtom};
    use rand::{RngExt, SeedableRng};

    fn abs_fn() -> MaxMinFunction {
        MaxMinFunction::max_of(
            1,
            vec![AffineAtom::new(vec![1.0], 0.0), AffineAtom::new(vec![-1.0], 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn conceptual_on_abs() {
        let r = goldstein_conceptual(&abs_fn(), &[1.0], 0.05, 0.1, 100).unwrap();
        assert_eq!(r.step_count, 9);
        assert!(r.converged);
        let last = r.trajectory.last().unwrap()[0];
        assert!((last - 0.1).abs() < 1e-12);
        assert_eq!(*r.distances.last().unwrap(), 0.0);
    }

    #[test]
    fn conceptual_zero_steps_when_already_stationary() {
        let r = goldstein_conceptual(&abs_fn(), &[0.05], 0.05, 0.1, 100).unwrap();
        assert_eq!(r.step_count, 0);
        assert!(r.converged);
    }

    #[test]
    fn conceptual_reports_exhaustion() {
        let r = goldstein_conceptual(&abs_fn(), &[1.0], 0.05, 0.1, 3).unwrap();
        assert_eq!(r.step_count, 3);
        assert!(!r.converged);
    }

    #[test]
    fn conceptual_reaches_the_plateau_of_h() {
        let p = ResistingParams::from_first_coordinates(&[0.0, -1.0, -2.0], 2).unwrap();
        let h = build_h(&p).unwrap();
        let r = goldstein_conceptual(&h, &[0.0, 0.0], 0.1, 0.1, 1000).unwrap();
        assert!(r.converged);
        assert_eq!(*r.distances.last().unwrap(), 0.0);
        let inf = infimum(&h).unwrap().unwrap();
        let bound = (r.values[0] - inf) / (0.1 * 0.1) + 1.0;
        assert!((r.step_count as f64) <= bound);
    }

    #[test]
    fn conceptual_step_bound_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut terms = vec![vec![AffineAtom::constant(2, -1.0)]];
            for _ in 0..3 {
                let atom = || AffineAtom::new(vec![0.0, 0.0], 0.0);
                let mut t = vec![atom(), atom()];
                for a in &mut t {
                    a.gradient = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                    a.offset = rng.random_range(-1.0..1.0);
                }
                terms.push(t);
            }
            let f = MaxMinFunction::new(2, terms).unwrap();
            let inf = infimum(&f).unwrap().unwrap();
            let x0 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let r = goldstein_conceptual(&f, &x0, 0.2, 0.2, 10_000).unwrap();
            assert!(r.converged);
            assert!(r.step_count as f64 <= (f.value(&x0) - inf) / 0.04 + 1.0);
        }
    }

    #[test]
    fn sampling_on_abs() {
        let params = SamplingParams {
            epsilon: 0.1,
            delta: 0.5,
            samples: 20,
            max_steps: 100,
            seed: 3,
        };
        let r = gradient_sampling(&abs_fn(), &[5.0], &params).unwrap();
        let last = r.trajectory.last().unwrap()[0];
        assert!(last.abs() <= 0.5 + 1e-12);
        assert!(r.converged);
        let again = gradient_sampling(&abs_fn(), &[5.0], &params).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn two_queries_on_fixed_f() {
        let p = ResistingParams::from_first_coordinates(&[0.0], 1).unwrap();
        let f = build_f(&p).unwrap();
        let (a, b) = two_query_gas_finder(&f, 0.3).unwrap();
        assert_eq!(b, vec![0.3]);
        let ok = [a, b]
            .iter()
            .any(|x| certify_gas(&f, x, 1e-12, 0.3).unwrap().is_satisfied());
        assert!(ok);
    }
}
