//! Algorithms that interact with a function through local oracles, plus two
//! white-box and randomized methods used as positive controls.
//!
//! Germ-facing algorithms implement [`Algorithm`]: the next query is a pure
//! function of the `(query, germ)` history, so identical answer histories
//! give identical trajectories.

mod whitebox;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use whitebox::{goldstein_conceptual, gradient_sampling, two_query_gas_finder, SamplingParams};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::GermView;
use crate::pa_core::{essentially_active_gradients, MaxMinFunction};
use crate::subdiff::certify_gas;

/// `(query, answer)` pairs seen so far.
pub type History = [(Vec<f64>, GermView)];

/// A germ-facing optimizer.
pub trait Algorithm: Send + Sync {
    fn name(&self) -> String;

    /// Whether the queries depend only on the answers (no randomness).
    fn is_deterministic(&self) -> bool {
        true
    }

    /// Whether every query stays in the coordinates already touched.
    fn is_zero_respecting(&self) -> bool;

    /// The next query. An empty history asks for the starting point.
    fn next_query(&self, history: &History, dimension: usize) -> Result<Vec<f64>>;
}

fn start(x0: &Option<Vec<f64>>, dimension: usize) -> Result<Vec<f64>> {
    match x0 {
        None => Ok(vec![0.0; dimension]),
        Some(x) if x.len() == dimension => Ok(x.clone()),
        Some(x) => Err(Error::DimensionMismatch {
            expected: dimension,
            got: x.len(),
        }),
    }
}

fn last_step(history: &History) -> Result<(&[f64], Vec<f64>)> {
    let (x, germ) = history.last().expect("nonempty history");
    Ok((x, germ.first_gradient(x)?))
}

/// `x <- x - step * g` with `g` the lexicographically smallest active gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgradientDescent {
    pub step: f64,
    pub x0: Option<Vec<f64>>,
}

impl SubgradientDescent {
    pub fn new(step: f64) -> Self {
        Self { step, x0: None }
    }

    pub fn starting_at(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }
}

impl Algorithm for SubgradientDescent {
    fn name(&self) -> String {
        "subgradient".into()
    }

    fn is_zero_respecting(&self) -> bool {
        self.x0.as_ref().is_none_or(|x| x.iter().all(|v| *v == 0.0))
    }

    fn next_query(&self, history: &History, dimension: usize) -> Result<Vec<f64>> {
        if history.is_empty() {
            return start(&self.x0, dimension);
        }
        let (x, g) = last_step(history)?;
        Ok(linalg::axpy(x, -self.step, &g))
    }
}

/// Subgradient steps of length `step / sqrt(k + 1)` at iteration `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiminishingSubgradient {
    pub step: f64,
}

impl Algorithm for DiminishingSubgradient {
    fn name(&self) -> String {
        "diminishing".into()
    }

    fn is_zero_respecting(&self) -> bool {
        true
    }

    fn next_query(&self, history: &History, dimension: usize) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Ok(vec![0.0; dimension]);
        }
        let (x, g) = last_step(history)?;
        let k = history.len() as f64;
        Ok(linalg::axpy(x, -self.step / k.sqrt(), &g))
    }
}

/// Polyak momentum: `x+ = x - step * g + momentum * (x - x_prev)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeavyBall {
    pub step: f64,
    pub momentum: f64,
}

impl Algorithm for HeavyBall {
    fn name(&self) -> String {
        "heavy-ball".into()
    }

    fn is_zero_respecting(&self) -> bool {
        true
    }

    fn next_query(&self, history: &History, dimension: usize) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Ok(vec![0.0; dimension]);
        }
        let (x, g) = last_step(history)?;
        let mut next = linalg::axpy(x, -self.step, &g);
        if history.len() >= 2 {
            let prev = &history[history.len() - 2].0;
            let v = linalg::sub(x, prev);
            next = linalg::axpy(&next, self.momentum, &v);
        }
        Ok(next)
    }
}

/// Subgradient descent plus a deterministic pseudo-random probe in the
/// coordinates other than the first. Not zero-respecting: it explores
/// directions no answer has revealed.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbingDescent {
    pub step: f64,
    pub probe: f64,
}

const PROBE_SEED: u64 = 0x5eed_0f9e_0be5;

impl Algorithm for ProbingDescent {
    fn name(&self) -> String {
        "probing".into()
    }

    fn is_zero_respecting(&self) -> bool {
        false
    }

    fn next_query(&self, history: &History, dimension: usize) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Ok(vec![0.0; dimension]);
        }
        let (x, g) = last_step(history)?;
        let mut next = linalg::axpy(x, -self.step, &g);
        if dimension > 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
            rng.set_stream(history.len() as u64);
            let mut w: Vec<f64> = (0..dimension).map(|_| StandardNormal.sample(&mut rng)).collect();
            w[0] = 0.0;
            let n = linalg::norm(&w);
            if n > 0.0 {
                next = linalg::axpy(&next, self.probe / n, &w);
            }
        }
        Ok(next)
    }
}

/// Drives `alg` for `steps` queries against `oracle`.
pub fn run_with_oracle<O>(
    alg: &dyn Algorithm,
    oracle: &mut O,
    steps: usize,
    dimension: usize,
) -> Result<Vec<(Vec<f64>, GermView)>>
where
    O: FnMut(&[f64]) -> Result<GermView>,
{
    let mut history: Vec<(Vec<f64>, GermView)> = Vec::with_capacity(steps);
    for _ in 0..steps {
        let x = alg.next_query(&history, dimension)?;
        if x.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                got: x.len(),
            });
        }
        let germ = oracle(&x)?;
        history.push((x, germ));
    }
    Ok(history)
}

/// Plain subgradient descent against an oracle; returns the `steps` queries.
pub fn subgradient_descent<O>(oracle: &mut O, x0: &[f64], step: f64, steps: usize) -> Result<Vec<Vec<f64>>>
where
    O: FnMut(&[f64]) -> Result<GermView>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidParams("step must be positive".into()));
    }
    let alg = SubgradientDescent::new(step).starting_at(x0.to_vec());
    let h = run_with_oracle(&alg, oracle, steps, x0.len())?;
    Ok(h.into_iter().map(|(x, _)| x).collect())
}

/// Trajectory with per-iterate values and exact Goldstein distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: String,
    pub trajectory: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub distances: Vec<f64>,
    pub certified: Vec<bool>,
    pub best_distance: f64,
    pub step_count: usize,
    pub converged: bool,
}

impl RunResult {
    /// Certifies every iterate of `trajectory` on `f` at `(epsilon, delta)`.
    pub fn evaluate(
        algorithm: &str,
        f: &MaxMinFunction,
        trajectory: Vec<Vec<f64>>,
        epsilon: f64,
        delta: f64,
    ) -> Result<Self> {
        let certs: Vec<_> = trajectory
            .par_iter()
            .map(|x| certify_gas(f, x, epsilon, delta))
            .collect::<Result<_>>()?;
        let distances: Vec<f64> = certs.iter().map(|c| c.distance).collect();
        let certified: Vec<bool> = certs.iter().map(|c| c.is_satisfied()).collect();
        Ok(Self {
            algorithm: algorithm.to_string(),
            values: trajectory.iter().map(|x| f.value(x)).collect(),
            best_distance: distances.iter().copied().fold(f64::INFINITY, f64::min),
            step_count: trajectory.len(),
            converged: certified.iter().any(|c| *c),
            trajectory,
            distances,
            certified,
        })
    }
}

/// Outcome of [`gzr_check`]; the violation index is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GzrCheck {
    pub compliant: bool,
    pub first_violation: Option<usize>,
}

/// Checks that every iterate's support lies in the coordinates touched at
/// earlier iterates, where a coordinate is touched at `x` when some
/// essentially active gradient at `x` has a nonzero entry there.
pub fn gzr_check(f: &MaxMinFunction, trajectory: &[Vec<f64>]) -> Result<GzrCheck> {
    let mut touched = vec![false; f.dimension()];
    for (t, x) in trajectory.iter().enumerate() {
        f.check_dim(x)?;
        let outside = x.iter().zip(&touched).any(|(v, seen)| *v != 0.0 && !seen);
        if outside {
            return Ok(GzrCheck {
                compliant: false,
                first_violation: Some(t + 1),
            });
        }
        for g in essentially_active_gradients(f, x)?.generators {
            for (seen, gj) in touched.iter_mut().zip(&g) {
                *seen |= *gj != 0.0;
            }
        }
    }
    Ok(GzrCheck {
        compliant: true,
        first_violation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{build_f, ResistingParams};
    use crate::oracle::local_oracle;
    use crate::pa_core::AffineAtom;

    fn abs_fn() -> MaxMinFunction {
        MaxMinFunction::max_of(
            1,
            vec![AffineAtom::new(vec![1.0], 0.0), AffineAtom::new(vec![-1.0], 0.0)],
        )
        .unwrap()
    }

    fn oracle_for(f: &MaxMinFunction) -> impl FnMut(&[f64]) -> Result<GermView> + '_ {
        move |x| local_oracle(f, x).map(|g| g.view)
    }

    #[test]
    fn subgradient_on_abs() {
        let f = abs_fn();
        let traj = subgradient_descent(&mut oracle_for(&f), &[1.0], 0.3, 4).unwrap();
        let expect = [1.0, 0.7, 0.4, 0.1];
        for (x, e) in traj.iter().zip(expect) {
            assert!((x[0] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let f = MaxMinFunction::affine(AffineAtom::constant(2, 3.0));
        let traj = subgradient_descent(&mut oracle_for(&f), &[0.5, -1.0], 0.1, 5).unwrap();
        assert!(traj.iter().all(|x| x == &vec![0.5, -1.0]));
    }

    #[test]
    fn gzr_examples() {
        let p = ResistingParams::from_first_coordinates(&[0.0], 2).unwrap();
        let f = build_f(&p).unwrap();
        let ok = gzr_check(&f, &[vec![0.0, 0.0], vec![0.3, 0.0]]).unwrap();
        assert!(ok.compliant);
        let bad = gzr_check(&f, &[vec![0.0, 0.0], vec![0.0, 0.3]]).unwrap();
        assert_eq!(bad.first_violation, Some(2));
        assert!(gzr_check(&f, &[vec![0.0, 0.0]]).unwrap().compliant);
    }

    #[test]
    fn algorithms_are_deterministic() {
        let f = abs_fn();
        let algs: Vec<Box<dyn Algorithm>> = vec![
            Box::new(SubgradientDescent::new(0.3)),
            Box::new(DiminishingSubgradient { step: 0.3 }),
            Box::new(HeavyBall { step: 0.3, momentum: 0.5 }),
            Box::new(ProbingDescent { step: 0.3, probe: 0.1 }),
        ];
        for alg in &algs {
            let a = run_with_oracle(alg.as_ref(), &mut oracle_for(&f), 6, 1).unwrap();
            let b = run_with_oracle(alg.as_ref(), &mut oracle_for(&f), 6, 1).unwrap();
            assert_eq!(a, b, "{}", alg.name());
            assert_eq!(a[0].0, vec![0.0]);
        }
    }

    #[test]
    fn probe_leaves_the_first_axis() {
        let p = ResistingParams::from_first_coordinates(&[0.0], 4).unwrap();
        let f = build_f(&p).unwrap();
        let alg = ProbingDescent { step: 0.1, probe: 0.05 };
        let h = run_with_oracle(&alg, &mut oracle_for(&f), 3, 4).unwrap();
        assert!(h[1].0[1..].iter().any(|v| *v != 0.0));
        let traj: Vec<Vec<f64>> = h.into_iter().map(|(x, _)| x).collect();
        assert!(!gzr_check(&f, &traj).unwrap().compliant);
    }

    #[test]
    fn run_result_tracks_best_distance() {
        let f = abs_fn();
        let r = RunResult::evaluate("x", &f, vec![vec![1.0], vec![0.05]], 0.1, 0.1).unwrap();
        assert_eq!(r.distances, vec![1.0, 0.0]);
        assert_eq!(r.best_distance, 0.0);
        assert!(r.converged);
        assert_eq!(r.certified, vec![false, true]);
    }
}
