//! Goldstein δ-subdifferentials of max-min functions, min-norm points, and
//! (ε, δ) stationarity certificates.
//!
//! For a max-min function the δ-subdifferential at `x` is the convex hull of
//! the gradients of the full-dimensional cells whose closure meets the closed
//! ball `B_δ(x)`, so it can be computed exactly. [`sampled_goldstein_distance`]
//! and [`segment_gap_estimate`] are Monte Carlo cross-checks.

mod min_norm;
mod sampling;

use serde::{Deserialize, Serialize};

pub use min_norm::{min_norm_hull, MinNormPoint};
pub(crate) use sampling::{sample_ball, sampled_gradients};
pub use sampling::{sampled_goldstein_distance, segment_gap_estimate, GapEstimate};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pa_core::cells::{self, ACTIVITY_TOL};
use crate::pa_core::{MaxMinFunction, PieceId, Polyhedron};

/// Default cap on the number of pieces enumerated by [`certify_nas`].
pub const NAS_PIECE_CAP: usize = 32;

/// A finite set of gradients whose convex hull is a (Clarke or Goldstein)
/// subdifferential. Generators are distinct and sorted lexicographically;
/// `provenance[i]` lists the pieces contributing generator `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientPolytope {
    pub generators: Vec<Vec<f64>>,
    pub provenance: Vec<Vec<PieceId>>,
}

impl GradientPolytope {
    /// Collects the gradients of the given pieces. `pieces` must be nonempty.
    pub fn from_pieces(f: &MaxMinFunction, pieces: &[PieceId]) -> Self {
        let mut pairs: Vec<(Vec<f64>, PieceId)> = pieces
            .iter()
            .map(|&id| (f.atom(id).gradient.clone(), id))
            .collect();
        pairs.sort_by(|a, b| linalg::lex_cmp(&a.0, &b.0).then(a.1.cmp(&b.1)));
        let mut generators: Vec<Vec<f64>> = Vec::new();
        let mut provenance: Vec<Vec<PieceId>> = Vec::new();
        for (g, id) in pairs {
            if generators.last() == Some(&g) {
                provenance.last_mut().unwrap().push(id);
            } else {
                generators.push(g);
                provenance.push(vec![id]);
            }
        }
        Self {
            generators,
            provenance,
        }
    }

    pub fn dim(&self) -> usize {
        self.generators.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// The lexicographically smallest generator.
    pub fn first(&self) -> &[f64] {
        &self.generators[0]
    }
}

/// Distance from the origin to `conv(S)` and the attaining weights.
pub fn min_norm_point(s: &GradientPolytope) -> MinNormPoint {
    min_norm_hull(&s.generators)
}

/// Generators of the Goldstein δ-subdifferential `∂_δ f(x)`.
pub fn goldstein_generators(f: &MaxMinFunction, x: &[f64], delta: f64) -> Result<GradientPolytope> {
    check_radius("delta", delta)?;
    let local = cells::analyze(f, x, delta)?;
    Ok(GradientPolytope::from_pieces(f, &local.pieces_within(delta)))
}

fn check_radius(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidParams(format!("{name} must be finite and nonnegative")));
    }
    Ok(())
}

/// Which stationarity notion a certificate speaks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "GAS-satisfied")]
    GasSatisfied,
    #[serde(rename = "GAS-refuted")]
    GasRefuted,
    #[serde(rename = "NAS-satisfied")]
    NasSatisfied,
    #[serde(rename = "NAS-refuted")]
    NasRefuted,
}

impl Verdict {
    pub fn is_satisfied(self) -> bool {
        matches!(self, Verdict::GasSatisfied | Verdict::NasSatisfied)
    }
}

/// Exact (ε, δ) verdict at a point, with the convex combination attaining the
/// reported distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityCertificate {
    pub epsilon: f64,
    pub delta: f64,
    pub distance: f64,
    pub weights: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
    pub verdict: Verdict,
}

impl StationarityCertificate {
    pub fn is_satisfied(&self) -> bool {
        self.verdict.is_satisfied()
    }

    /// The attaining point `sum_i w_i g_i`.
    pub fn min_norm_element(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.generators.first().map_or(0, Vec::len)];
        for (g, w) in self.generators.iter().zip(&self.weights) {
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi += w * gi;
            }
        }
        x
    }
}

/// Decides whether `x` is an (ε, δ)-Goldstein approximately stationary point.
pub fn certify_gas(
    f: &MaxMinFunction,
    x: &[f64],
    epsilon: f64,
    delta: f64,
) -> Result<StationarityCertificate> {
    check_radius("epsilon", epsilon)?;
    let s = goldstein_generators(f, x, delta)?;
    let m = min_norm_point(&s);
    let verdict = if m.distance <= epsilon {
        Verdict::GasSatisfied
    } else {
        Verdict::GasRefuted
    };
    Ok(StationarityCertificate {
        epsilon,
        delta,
        distance: m.distance,
        weights: m.weights,
        generators: s.generators,
        verdict,
    })
}

/// Decides whether some `y` in `B_δ(x)` has `dist(0, ∂f(y)) <= ε`.
///
/// Enumerates sets of cells whose closures share a point within the ball,
/// extending only feasible sets. Errors with [`Error::Intractable`] when more
/// than [`NAS_PIECE_CAP`] pieces meet the ball.
pub fn certify_nas(
    f: &MaxMinFunction,
    x: &[f64],
    epsilon: f64,
    delta: f64,
) -> Result<StationarityCertificate> {
    certify_nas_with_cap(f, x, epsilon, delta, NAS_PIECE_CAP)
}

pub fn certify_nas_with_cap(
    f: &MaxMinFunction,
    x: &[f64],
    epsilon: f64,
    delta: f64,
    cap: usize,
) -> Result<StationarityCertificate> {
    check_radius("epsilon", epsilon)?;
    check_radius("delta", delta)?;
    let view = cells::ReducedView::new(f);
    f.check_dim(x)?;
    let c = view.reduce(x);
    let local = cells::analyze_reduced(&view, &c, delta)?;
    let near: Vec<&cells::LocalCell> = local
        .cells
        .iter()
        .filter(|cell| cell.distance <= delta + ACTIVITY_TOL)
        .collect();
    let pieces = local.pieces_within(delta);
    if pieces.len() > cap {
        return Err(Error::Intractable {
            pieces: pieces.len(),
            cap,
        });
    }
    let mut best: Option<(f64, Vec<f64>, Vec<Vec<f64>>)> = None;
    let mut stack: Vec<(Vec<usize>, Polyhedron)> = near
        .iter()
        .enumerate()
        .map(|(i, cell)| (vec![i], cell.poly.clone()))
        .collect();
    while let Some((set, poly)) = stack.pop() {
        let ids: Vec<PieceId> = set.iter().map(|&i| near[i].piece).collect();
        let s = GradientPolytope::from_pieces(f, &ids);
        let m = min_norm_point(&s);
        if best.as_ref().is_none_or(|b| m.distance < b.0) {
            best = Some((m.distance, m.weights, s.generators));
        }
        let last = *set.last().unwrap();
        for j in last + 1..near.len() {
            let joint = poly.intersect(&near[j].poly);
            if within_ball(&joint, &c, delta)? {
                let mut next = set.clone();
                next.push(j);
                stack.push((next, joint));
            }
        }
    }
    let (distance, weights, generators) =
        best.ok_or_else(|| Error::InvalidFunction("no cell meets the ball".into()))?;
    let verdict = if distance <= epsilon {
        Verdict::NasSatisfied
    } else {
        Verdict::NasRefuted
    };
    Ok(StationarityCertificate {
        epsilon,
        delta,
        distance,
        weights,
        generators,
        verdict,
    })
}

/// Whether a (possibly lower-dimensional) polyhedron has a point within
/// `radius` of `c`.
fn within_ball(p: &Polyhedron, c: &[f64], radius: f64) -> Result<bool> {
    match p.chebyshev_center(None)? {
        Some((_, r)) if r >= -1e-10 => {}
        _ => return Ok(false),
    }
    let y = p.project_nonempty(c);
    Ok(p.violation(&y) <= ACTIVITY_TOL && linalg::dist(&y, c) <= radius + ACTIVITY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pa_core::{essentially_active_gradients, AffineAtom};
    use proptest::prelude::*;

    fn abs_fn() -> MaxMinFunction {
        MaxMinFunction::max_of(
            1,
            vec![AffineAtom::new(vec![1.0], 0.0), AffineAtom::new(vec![-1.0], 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn abs_generators() {
        let f = abs_fn();
        let g = goldstein_generators(&f, &[0.3], 0.5).unwrap();
        assert_eq!(g.generators, vec![vec![-1.0], vec![1.0]]);
        let g = goldstein_generators(&f, &[0.3], 0.1).unwrap();
        assert_eq!(g.generators, vec![vec![1.0]]);
        // The kink exactly on the sphere counts.
        let g = goldstein_generators(&f, &[0.3], 0.3).unwrap();
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn abs_certificates() {
        let f = abs_fn();
        let c = certify_gas(&f, &[0.3], 0.0, 0.5).unwrap();
        assert_eq!(c.verdict, Verdict::GasSatisfied);
        assert!(c.distance < 1e-12);
        let c = certify_gas(&f, &[0.3], 0.1, 0.1).unwrap();
        assert_eq!(c.verdict, Verdict::GasRefuted);
        assert_eq!(c.distance, 1.0);

        let n = certify_nas(&f, &[0.3], 0.0, 0.5).unwrap();
        assert_eq!(n.verdict, Verdict::NasSatisfied);
        let n = certify_nas(&f, &[0.3], 0.5, 0.1).unwrap();
        assert_eq!(n.verdict, Verdict::NasRefuted);
        assert_eq!(n.distance, 1.0);
        let n = certify_nas(&f, &[0.05], 0.0, 0.1).unwrap();
        assert!(n.is_satisfied());
        assert!(certify_gas(&f, &[0.05], 0.0, 0.1).unwrap().is_satisfied());
    }

    #[test]
    fn nas_cap_is_enforced() {
        let atoms: Vec<AffineAtom> = (0..6)
            .map(|k| AffineAtom::new(vec![k as f64 - 2.5], 0.0))
            .collect();
        let f = MaxMinFunction::max_of(1, atoms).unwrap();
        assert!(matches!(
            certify_nas_with_cap(&f, &[0.0], 0.0, 10.0, 1),
            Err(Error::Intractable { cap: 1, .. })
        ));
    }

    #[test]
    fn certificate_serializes_with_verdict_names() {
        let c = certify_gas(&abs_fn(), &[0.3], 0.1, 0.1).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"GAS-refuted\""));
        let back: StationarityCertificate = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    fn arb_function() -> impl Strategy<Value = MaxMinFunction> {
        let atom = (prop::collection::vec(-2.0f64..2.0, 2), -1.0f64..1.0)
            .prop_map(|(g, b)| AffineAtom::new(g, b));
        prop::collection::vec(prop::collection::vec(atom, 1..=2), 1..=4)
            .prop_map(|terms| MaxMinFunction::new(2, terms).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn distance_shrinks_as_delta_grows(
            f in arb_function(),
            x in prop::collection::vec(-1.0f64..1.0, 2),
            d1 in 0.0f64..0.5,
            extra in 0.0f64..0.5,
        ) {
            let a = certify_gas(&f, &x, 0.0, d1).unwrap().distance;
            let b = certify_gas(&f, &x, 0.0, d1 + extra).unwrap().distance;
            prop_assert!(a >= b - 1e-8, "{a} < {b}");
        }

        #[test]
        fn zero_radius_is_clarke(f in arb_function(), x in prop::collection::vec(-1.0f64..1.0, 2)) {
            let g0 = goldstein_generators(&f, &x, 0.0).unwrap();
            let ea = essentially_active_gradients(&f, &x).unwrap();
            prop_assert_eq!(g0, ea);
        }

        #[test]
        fn nas_implies_gas(
            f in arb_function(),
            x in prop::collection::vec(-1.0f64..1.0, 2),
            eps in 0.0f64..1.0,
            delta in 0.0f64..0.6,
        ) {
            let nas = certify_nas(&f, &x, eps, delta).unwrap();
            let gas = certify_gas(&f, &x, eps, delta).unwrap();
            prop_assert!(gas.distance <= nas.distance + 1e-9);
            if nas.is_satisfied() {
                prop_assert!(gas.is_satisfied());
            }
        }

        #[test]
        fn certificate_weights_reproduce_distance(
            f in arb_function(),
            x in prop::collection::vec(-1.0f64..1.0, 2),
            delta in 0.0f64..0.6,
        ) {
            let c = certify_gas(&f, &x, 0.1, delta).unwrap();
            let s: f64 = c.weights.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(c.weights.iter().all(|w| *w >= 0.0));
            prop_assert!((linalg::norm(&c.min_norm_element()) - c.distance).abs() < 1e-8);
            prop_assert_eq!(c.is_satisfied(), c.distance <= 0.1);
        }
    }
}
