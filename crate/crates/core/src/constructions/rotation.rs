//! Orthogonal change of coordinates that hides the second wedge direction
//! from the queries an algorithm has already made.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pa_core::MaxMinFunction;

/// Residual norm below which a standard basis vector is treated as lying in
/// the current span.
const SPAN_TOL: f64 = 1e-6;

/// `v` holds `[e1, q_2, ..., q_T]`; `u` holds the columns `[e1, u2, ...]` of
/// an orthogonal matrix with `u2` orthogonal to every column of `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationPlan {
    pub v: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl RotationPlan {
    pub fn dimension(&self) -> usize {
        self.u.len()
    }

    /// `U y`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.u.len()];
        for (col, yj) in self.u.iter().zip(y) {
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * yj;
            }
        }
        out
    }

    /// `U^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.u.iter().map(|col| linalg::dot(col, x)).collect()
    }

    /// Largest entry of `|U^T U - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, a) in self.u.iter().enumerate() {
            for (j, b) in self.u.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((linalg::dot(a, b) - target).abs());
            }
        }
        worst
    }
}

/// Builds the rotation for the recorded queries (the first query is replaced
/// by `e1`, as it is the origin for every algorithm in the class).
///
/// `u2` is the first standard basis vector, in index order, with a nonzero
/// residual against `span(v)`; the remaining columns complete `{e1, u2}` the
/// same way.
pub fn build_rotation(queries: &[Vec<f64>], d: usize) -> Result<RotationPlan> {
    let t = queries.len();
    if d <= t || t == 0 {
        return Err(Error::RotationDimension { d, queries: t });
    }
    if let Some(q) = queries.iter().find(|q| q.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q.len(),
        });
    }
    let e1 = linalg::unit(d, 0);
    let mut v = vec![e1.clone()];
    v.extend(queries.iter().skip(1).cloned());
    let span = linalg::orthonormal_span(&v, 1e-12);
    let u2 = first_residual(d, &span)
        .ok_or(Error::RotationDimension { d, queries: t })?;
    let mut u = vec![e1, u2];
    while u.len() < d {
        let next = first_residual(d, &u).expect("basis completion");
        u.push(next);
    }
    Ok(RotationPlan { v, u })
}

fn first_residual(d: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    (0..d).find_map(|i| {
        let mut r = linalg::unit(d, i);
        linalg::orthogonalize(&mut r, basis);
        let n = linalg::norm(&r);
        (n > SPAN_TOL).then(|| linalg::scale(&r, 1.0 / n))
    })
}

/// `G(x) = H(U^T x)`: every atom gradient `g` becomes `U g`.
pub fn build_g(h: &MaxMinFunction, plan: &RotationPlan) -> Result<MaxMinFunction> {
    if h.dimension() != plan.dimension() {
        return Err(Error::DimensionMismatch {
            expected: plan.dimension(),
            got: h.dimension(),
        });
    }
    h.map_gradients(plan.dimension(), |g| plan.apply(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{build_h, ResistingParams};
    use crate::pa_core::AffineAtom;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_queries_give_identity() {
        let plan = build_rotation(&[vec![0.0; 3], vec![0.5, 0.0, 0.0]], 3).unwrap();
        assert_eq!(plan.u, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let plan = build_rotation(&[vec![0.0; 2]], 2).unwrap();
        assert_eq!(plan.u[1], vec![0.0, 1.0]);
    }

    #[test]
    fn too_many_queries() {
        assert!(matches!(
            build_rotation(&[vec![0.0; 2], vec![1.0, 0.0]], 2),
            Err(Error::RotationDimension { d: 2, queries: 2 })
        ));
    }

    #[test]
    fn u2_avoids_general_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 9;
        let mut qs = vec![vec![0.0; d]];
        for _ in 0..7 {
            qs.push((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        let plan = build_rotation(&qs, d).unwrap();
        assert!(plan.orthogonality_error() < 1e-10);
        assert_eq!(plan.u[0], linalg::unit(d, 0));
        for q in &qs {
            assert!(linalg::dot(&plan.u[1], q).abs() < 1e-12);
        }
    }

    #[test]
    fn g_is_h_after_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 4;
        let qs: Vec<Vec<f64>> = (0..3)
            .map(|k| if k == 0 { vec![0.0; d] } else { (0..d).map(|_| rng.random_range(-1.0..1.0)).collect() })
            .collect();
        let plan = build_rotation(&qs, d).unwrap();
        let p = ResistingParams::from_first_coordinates(&[0.0, 0.3], d).unwrap();
        let h = build_h(&p).unwrap();
        let g = build_g(&h, &plan).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = g.value(&x);
            let b = h.value(&plan.apply_transpose(&x));
            assert!((a - b).abs() < 1e-12);
        }
        // The rising atom keeps gradient e1 bit for bit.
        assert_eq!(g.terms()[2][1], AffineAtom::new(linalg::unit(d, 0), 0.0));
    }
}
