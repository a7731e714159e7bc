//! Minimum-norm point of a convex hull of finitely many points.
//!
//! Wolfe's active-set method with exact affine minimizations, falling back to
//! accelerated projected gradient on the simplex if the active-set loop stalls.

use crate::linalg::{self, dot};

const TOL: f64 = 1e-10;
const MAX_MAJOR: usize = 1000;
const FALLBACK_ITERS: usize = 200_000;

/// Result of a min-norm computation: the distance from the origin to the hull,
/// the convex weights, and the attaining point.
#[derive(Clone, Debug, PartialEq)]
pub struct MinNormPoint {
    pub distance: f64,
    pub weights: Vec<f64>,
    pub point: Vec<f64>,
}

fn combine(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; points[0].len()];
    for (p, w) in points.iter().zip(weights) {
        if *w != 0.0 {
            for (xi, pi) in x.iter_mut().zip(p) {
                *xi += w * pi;
            }
        }
    }
    x
}

fn finish(points: &[Vec<f64>], mut weights: Vec<f64>) -> MinNormPoint {
    for w in weights.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let s: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= s;
    }
    let point = combine(points, &weights);
    MinNormPoint {
        distance: linalg::norm(&point),
        weights,
        point,
    }
}

/// Distance from the origin to `conv(points)` with attaining weights.
///
/// Deterministic for a given point order. Panics on an empty input.
pub fn min_norm_hull(points: &[Vec<f64>]) -> MinNormPoint {
    assert!(!points.is_empty(), "min-norm point of an empty set");
    let n = points.len();
    if n == 1 {
        return finish(points, vec![1.0]);
    }
    match wolfe(points) {
        Some(w) => finish(points, w),
        None => finish(points, projected_gradient(points)),
    }
}

fn wolfe(points: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = points.len();
    let scale = points
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let start = (0..n)
        .min_by(|&i, &j| dot(&points[i], &points[i]).total_cmp(&dot(&points[j], &points[j])))
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();
    for _ in 0..MAX_MAJOR {
        let xx = dot(&x, &x);
        if xx <= TOL * TOL * scale {
            return Some(expand(n, &active, &lambda));
        }
        let (j, xp) = (0..n)
            .map(|j| (j, dot(&x, &points[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xp <= TOL * scale || active.contains(&j) {
            return Some(expand(n, &active, &lambda));
        }
        active.push(j);
        lambda.push(0.0);
        // Minor cycles.
        loop {
            let mu = affine_min_norm(points, &active)?;
            if mu.iter().all(|&m| m > TOL * 1e-2) {
                lambda = mu;
                break;
            }
            let mut theta = 1.0_f64;
            for (l, m) in lambda.iter().zip(&mu) {
                if *m <= TOL * 1e-2 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, m) in lambda.iter_mut().zip(&mu) {
                *l += theta * (m - *l);
            }
            let mut k = 0;
            while k < active.len() {
                if lambda[k] <= TOL * 1e-2 {
                    active.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if active.is_empty() {
                return None;
            }
            let s: f64 = lambda.iter().sum();
            for l in lambda.iter_mut() {
                *l /= s;
            }
        }
        let sub: Vec<Vec<f64>> = active.iter().map(|&i| points[i].clone()).collect();
        x = combine(&sub, &lambda);
    }
    None
}

fn expand(n: usize, active: &[usize], lambda: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for (&i, &l) in active.iter().zip(lambda) {
        w[i] += l;
    }
    w
}

/// Weights of the min-norm point of the affine hull of the active points:
/// solves `[G 1; 1^T 0] [mu; nu] = [0; 1]` with `G` the Gram matrix.
fn affine_min_norm(points: &[Vec<f64>], active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut m = vec![vec![0.0; k + 1]; k + 1];
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            m[a][b] = dot(&points[i], &points[j]);
        }
        m[a][k] = 1.0;
        m[k][a] = 1.0;
    }
    let mut rhs = vec![0.0; k + 1];
    rhs[k] = 1.0;
    let sol = linalg::solve(&m, &rhs)?;
    Some(sol[..k].to_vec())
}

/// FISTA on `min 1/2 |P w|^2` over the simplex.
fn projected_gradient(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let lip: f64 = points.iter().map(|p| dot(p, p)).sum::<f64>().max(1e-300);
    let mut w = vec![1.0 / n as f64; n];
    let mut y = w.clone();
    let mut t = 1.0_f64;
    for _ in 0..FALLBACK_ITERS {
        let x = combine(points, &y);
        let grad: Vec<f64> = points.iter().map(|p| dot(p, &x)).collect();
        let step: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - gi / lip).collect();
        let next = project_simplex(&step);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = linalg::dist(&next, &w);
        y = next
            .iter()
            .zip(&w)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        w = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    w
}

/// Euclidean projection onto the probability simplex (sort-based).
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let cand = (cum - 1.0) / (i + 1) as f64;
        if ui - cand > 0.0 {
            tau = cand;
        }
    }
    v.iter().map(|vi| (vi - tau).max(0.0)).collect()
}
