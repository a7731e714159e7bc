//! Monte Carlo estimators used to cross-check the exact calculus.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::min_norm_hull;
use crate::error::{Error, Result};
use crate::linalg;
use crate::pa_core::MaxMinFunction;

/// Uniform point in the closed ball `B_radius(centre)`.
pub(crate) fn sample_ball(rng: &mut ChaCha8Rng, centre: &[f64], radius: f64) -> Vec<f64> {
    let d = centre.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = linalg::norm(&dir);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    centre
        .iter()
        .zip(&dir)
        .map(|(c, v)| c + r * v / n)
        .collect()
}

/// Gradients at `n` uniform samples of `B_δ(x)` where `f` is differentiable,
/// deduplicated and sorted.
pub(crate) fn sampled_gradients(
    f: &MaxMinFunction,
    x: &[f64],
    delta: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut grads: Vec<Vec<f64>> = Vec::new();
    for _ in 0..n {
        let y = sample_ball(rng, x, delta);
        if let Some(g) = f.gradient_if_smooth(&y, 0.0) {
            if !grads.iter().any(|h| h.as_slice() == g) {
                grads.push(g.to_vec());
            }
        }
    }
    grads.sort_by(|a, b| linalg::lex_cmp(a, b));
    grads
}

/// Min-norm distance of the hull of gradients sampled uniformly in `B_δ(x)`.
///
/// The sampled hull sits inside the exact one, so this over-estimates the
/// exact distance and converges to it as `n` grows.
pub fn sampled_goldstein_distance(
    f: &MaxMinFunction,
    x: &[f64],
    delta: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    f.check_dim(x)?;
    if n == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grads = sampled_gradients(f, x, delta, n, &mut rng);
    if grads.is_empty() {
        return Err(Error::InvalidParams(
            "no differentiable sample; increase n".into(),
        ));
    }
    Ok(min_norm_hull(&grads).distance)
}

/// Sample mean and standard error of `f'(z; x - y)` for `z` uniform on the
/// segment `[y, x]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Estimates `f(x) - f(y)` as the average directional derivative along the
/// segment.
pub fn segment_gap_estimate(
    f: &MaxMinFunction,
    x: &[f64],
    y: &[f64],
    n: usize,
    seed: u64,
) -> Result<GapEstimate> {
    f.check_dim(x)?;
    f.check_dim(y)?;
    if n == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    if x == y {
        return Err(Error::InvalidParams("segment endpoints coincide".into()));
    }
    let dir = linalg::sub(x, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let u: f64 = rng.random();
        let z = linalg::axpy(y, u, &dir);
        let v = f.directional_derivative(&z, &dir, 0.0);
        sum += v;
        sum_sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(GapEstimate {
        mean,
        std_error: (var / nf).sqrt(),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pa_core::AffineAtom;

    fn abs_fn() -> MaxMinFunction {
        MaxMinFunction::max_of(
            1,
            vec![AffineAtom::new(vec![1.0], 0.0), AffineAtom::new(vec![-1.0], 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn sampled_distance_on_abs() {
        let f = abs_fn();
        for seed in 0..5 {
            let v = sampled_goldstein_distance(&f, &[0.0], 1.0, 1000, seed).unwrap();
            assert!(v <= 0.2);
            assert_eq!(sampled_goldstein_distance(&f, &[5.0], 1.0, 7, seed).unwrap(), 1.0);
        }
    }

    #[test]
    fn constant_slope_segment_is_exact() {
        let e = segment_gap_estimate(&abs_fn(), &[2.0], &[1.0], 50, 3).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn symmetric_segment_is_centred() {
        let e = segment_gap_estimate(&abs_fn(), &[1.0], &[-1.0], 10_000, 11).unwrap();
        assert!(e.mean.abs() <= 3.0 * e.std_error + 1e-12);
        assert!(e.mean.abs() < 0.05);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let y = sample_ball(&mut rng, &[1.0, -2.0, 0.5], 0.3);
            assert!(linalg::dist(&y, &[1.0, -2.0, 0.5]) <= 0.3 + 1e-15);
        }
    }
}
