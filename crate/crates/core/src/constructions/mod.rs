//! Builders for the resisting functions: the single-coordinate function `F`,
//! the planar wedge `h`, its lifted versions `H~` and `H`, the rotated `G`,
//! and the one-dimensional tester function.
//!
//! Every builder returns a [`MaxMinFunction`]. The wedge's inner
//! `min{a, b, c} + min{d, e}` is expanded into a single six-atom min.

mod lemmas;
mod rotation;

use serde::{Deserialize, Serialize};

pub use lemmas::{numeric_floor, verify_lemmas, LemmaOutcome, LemmaReport};
pub use rotation::{build_g, build_rotation, RotationPlan};

use crate::error::{Error, Result};
use crate::pa_core::{AffineAtom, MaxMinFunction};

/// Value of the plateau below which `H` is flat.
pub const PLATEAU: f64 = -5.0;

/// Breakpoints and scales of the resisting construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResistingParams {
    pub breakpoints: Vec<f64>,
    pub sigma: f64,
    pub eta: f64,
    pub dimension: usize,
}

/// `min(smallest gap between consecutive breakpoints, 1)`; 1 for a single breakpoint.
pub fn gap_scale(sorted: &[f64]) -> f64 {
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(1.0_f64, f64::min)
}

impl ResistingParams {
    /// Validates explicit parameters.
    pub fn new(breakpoints: Vec<f64>, sigma: f64, eta: f64, dimension: usize) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidParams("no breakpoints".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParams("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if dimension == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        let expected = gap_scale(&breakpoints);
        if !(sigma > 0.0) || (sigma - expected).abs() > 1e-12 * expected.max(1e-300) {
            return Err(Error::InvalidParams(format!(
                "sigma {sigma} does not match the breakpoint gap {expected}"
            )));
        }
        if !(eta > 0.0 && eta <= sigma / 32.0) {
            return Err(Error::InvalidParams(format!(
                "eta {eta} must lie in (0, sigma/32]"
            )));
        }
        Ok(Self {
            breakpoints,
            sigma,
            eta,
            dimension,
        })
    }

    /// Sorts the first coordinates, drops exact duplicates, and takes
    /// `eta = sigma / 32`.
    pub fn from_first_coordinates(first: &[f64], dimension: usize) -> Result<Self> {
        let mut b = first.to_vec();
        b.sort_by(f64::total_cmp);
        b.dedup();
        let sigma = gap_scale(&b);
        Self::new(b, sigma, sigma / 32.0, dimension)
    }

    /// Replaces `eta`, revalidating.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        self.eta = eta;
        Self::new(self.breakpoints, self.sigma, self.eta, self.dimension)
    }

    /// Germ validity radius around each breakpoint.
    pub fn nu(&self) -> f64 {
        self.eta / 8.0
    }
}

fn coord_atom(d: usize, slope: f64, offset: f64) -> AffineAtom {
    let mut g = vec![0.0; d];
    g[0] = slope;
    AffineAtom::new(g, offset)
}

/// Rising line through breakpoint `b`: `x1 - b`.
fn rising(d: usize, b: f64) -> AffineAtom {
    coord_atom(d, 1.0, -b)
}

/// Falling line `-x1 + b - sigma/2`.
fn falling(d: usize, b: f64, sigma: f64) -> AffineAtom {
    coord_atom(d, -1.0, b - sigma / 2.0)
}

/// The resisting function of the first coordinate:
/// `min_t max{x1 - b_t, -x1 + b_t - sigma/2}`, stored as
/// `max{falling_1, rising_T, min{rising_t, falling_{t+1}}}`.
pub fn build_f(params: &ResistingParams) -> Result<MaxMinFunction> {
    let d = params.dimension;
    let b = &params.breakpoints;
    let s = params.sigma;
    let mut terms = vec![vec![falling(d, b[0], s)], vec![rising(d, b[b.len() - 1])]];
    for w in b.windows(2) {
        terms.push(vec![rising(d, w[0]), falling(d, w[1], s)]);
    }
    MaxMinFunction::new(d, terms)
}

/// The six planar atoms of the wedge before expansion, as
/// `(gradient, offset)` for the first summand group and the second.
fn wedge_parts(eta: f64) -> ([AffineAtom; 3], [AffineAtom; 2]) {
    (
        [
            AffineAtom::new(vec![1.0, 0.0], eta / 2.0),
            AffineAtom::new(vec![0.0, 2.0], eta),
            AffineAtom::new(vec![0.0, 0.5], eta),
        ],
        [
            AffineAtom::new(vec![-1.0, 0.0], 5.0 * eta / 2.0),
            AffineAtom::new(vec![0.0, 0.0], -eta / 2.0),
        ],
    )
}

/// The expanded inner min of the wedge, in the order
/// (1st+4th, 1st+5th, 2nd+4th, 2nd+5th, 3rd+4th, 3rd+5th).
pub fn wedge_inner_atoms(eta: f64) -> Vec<AffineAtom> {
    let (left, right) = wedge_parts(eta);
    left.iter()
        .flat_map(|l| right.iter().map(move |r| l.plus(r)))
        .collect()
}

/// The ceiling atom `y - eta/2`.
pub fn wedge_ceiling(eta: f64) -> AffineAtom {
    AffineAtom::new(vec![0.0, 1.0], -eta / 2.0)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParams("eta must be positive".into()));
    }
    Ok(())
}

/// The planar wedge `h(x, y) = max{y - eta/2, h~(x, y)}`.
pub fn build_wedge(eta: f64) -> Result<MaxMinFunction> {
    check_eta(eta)?;
    MaxMinFunction::new(2, vec![vec![wedge_ceiling(eta)], wedge_inner_atoms(eta)])
}

/// The inner wedge `h~` alone.
pub fn build_inner_wedge(eta: f64) -> Result<MaxMinFunction> {
    check_eta(eta)?;
    MaxMinFunction::new(2, vec![wedge_inner_atoms(eta)])
}

/// `h~(x1 - b, x2)` lifted to `R^d`.
fn shifted_inner(d: usize, eta: f64, b: f64) -> Vec<AffineAtom> {
    wedge_inner_atoms(eta)
        .into_iter()
        .map(|a| {
            let mut g = vec![0.0; d];
            g[0] = a.gradient[0];
            g[1] = a.gradient[1];
            AffineAtom::new(g, a.offset - a.gradient[0] * b)
        })
        .collect()
}

fn lift(d: usize, a: &AffineAtom) -> AffineAtom {
    let mut g = vec![0.0; d];
    g[..2].copy_from_slice(&a.gradient);
    AffineAtom::new(g, a.offset)
}

fn check_lift_dim(params: &ResistingParams) -> Result<()> {
    if params.dimension < 2 {
        return Err(Error::InvalidParams("the wedge needs dimension >= 2".into()));
    }
    Ok(())
}

/// `H~(x) = max{x2 - eta/2, max_t h~(x1 - b_t, x2)}` on `R^d`.
pub fn build_h_tilde(params: &ResistingParams) -> Result<MaxMinFunction> {
    check_lift_dim(params)?;
    let d = params.dimension;
    let mut terms = vec![vec![lift(d, &wedge_ceiling(params.eta))]];
    for &b in &params.breakpoints {
        terms.push(shifted_inner(d, params.eta, b));
    }
    MaxMinFunction::new(d, terms)
}

/// `H(x) = max{-5, H~(x)}`.
pub fn build_h(params: &ResistingParams) -> Result<MaxMinFunction> {
    let tilde = build_h_tilde(params)?;
    let d = params.dimension;
    let mut terms = vec![vec![AffineAtom::constant(d, PLATEAU)]];
    terms.extend(tilde.terms().iter().cloned());
    MaxMinFunction::new(d, terms)
}

/// `f2(x) = min{x, a + 4|x - m|}` with `m = (a + b) / 2`, as
/// `max{min{x, a + 4(x - m)}, min{x, a - 4(x - m)}}`.
pub fn build_tester_f2(a: f64, b: f64) -> Result<MaxMinFunction> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParams("need finite a < b".into()));
    }
    let m = (a + b) / 2.0;
    let id = AffineAtom::new(vec![1.0], 0.0);
    MaxMinFunction::new(
        1,
        vec![
            vec![id.clone(), AffineAtom::new(vec![4.0], a - 4.0 * m)],
            vec![id, AffineAtom::new(vec![-4.0], a + 4.0 * m)],
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subdiff::certify_gas;
    use proptest::prelude::*;

    const ETA: f64 = 1.0 / 32.0;

    fn single(d: usize) -> ResistingParams {
        ResistingParams::from_first_coordinates(&[0.0], d).unwrap()
    }

    #[test]
    fn params_validation() {
        let p = ResistingParams::from_first_coordinates(&[0.0, 0.5, 0.2, 0.5], 2).unwrap();
        assert_eq!(p.breakpoints, vec![0.0, 0.2, 0.5]);
        assert!((p.sigma - 0.2).abs() < 1e-15);
        assert!((p.eta - 0.00625).abs() < 1e-15);
        assert_eq!(single(1).sigma, 1.0);
        assert!(ResistingParams::new(vec![0.0, 0.0], 1.0, 0.01, 2).is_err());
        assert!(ResistingParams::new(vec![0.0], 1.0, 0.5, 2).is_err());
        assert!(ResistingParams::new(vec![0.0, 2.0], 2.0, 0.01, 2).is_err());
    }

    #[test]
    fn f_single_breakpoint() {
        let f = build_f(&single(2)).unwrap();
        assert_eq!(f.evaluate(&[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(f.evaluate(&[0.1, -7.0]).unwrap(), 0.1);
        assert_eq!(f.evaluate(&[-1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(f.evaluate(&[-0.25, 0.0]).unwrap(), -0.25);
        assert_eq!(f.lipschitz_certificate(), 1.0);
    }

    #[test]
    fn f_three_breakpoints() {
        let p = ResistingParams::from_first_coordinates(&[0.0, 0.5, 0.2], 2).unwrap();
        let f = build_f(&p).unwrap();
        for b in [0.0, 0.2, 0.5] {
            assert_eq!(f.evaluate(&[b, 0.0]).unwrap(), 0.0);
        }
    }

    /// Direct transcription of the four-branch display.
    fn f_display(b: &[f64], s: f64, x: f64) -> f64 {
        let n = b.len();
        if x < b[0] - s / 4.0 {
            return -x + b[0] - s / 2.0;
        }
        if x >= b[n - 1] - s / 4.0 {
            return x - b[n - 1];
        }
        for t in 0..n - 1 {
            let mid = 0.5 * (b[t] + b[t + 1]) - s / 4.0;
            if x >= b[t] - s / 4.0 && x < mid {
                return x - b[t];
            }
            if x >= mid && x < b[t + 1] - s / 4.0 {
                return -x + b[t + 1] - s / 2.0;
            }
        }
        unreachable!()
    }

    fn f_min_max(b: &[f64], s: f64, x: f64) -> f64 {
        b.iter()
            .map(|bt| (x - bt).max(-x + bt - s / 2.0))
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn f_matches_both_closed_forms(
            raw in prop::collection::vec(-3.0f64..3.0, 1..6),
            x in -5.0f64..5.0,
        ) {
            let p = ResistingParams::from_first_coordinates(&raw, 1).unwrap();
            let f = build_f(&p).unwrap();
            let v = f.evaluate(&[x]).unwrap();
            prop_assert!((v - f_display(&p.breakpoints, p.sigma, x)).abs() < 1e-12);
            prop_assert!((v - f_min_max(&p.breakpoints, p.sigma, x)).abs() < 1e-12);
            for &b in &p.breakpoints {
                prop_assert_eq!(f.evaluate(&[b]).unwrap(), 0.0);
                let q = b - p.sigma / 4.0;
                prop_assert!((f.evaluate(&[q]).unwrap() - f_display(&p.breakpoints, p.sigma, q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wedge_examples() {
        let h = build_wedge(ETA).unwrap();
        assert_eq!(h.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(h.evaluate(&[10.0, 0.0]).unwrap(), -ETA / 2.0);
        assert_eq!(h.evaluate(&[0.0, 2.0 * ETA]).unwrap(), 1.5 * ETA);
        assert!((h.lipschitz_certificate() - 5f64.sqrt()).abs() < 1e-15);
        // The inner atom for the S3 branch is exactly x.
        assert_eq!(wedge_inner_atoms(ETA)[1], AffineAtom::new(vec![1.0, 0.0], 0.0));
    }

    /// The seven-branch table, selected by which closed-form piece attains h.
    fn wedge_table(eta: f64, x: f64, y: f64) -> f64 {
        let (c1, c2, c3, c4, c5, c6) = (
            y - eta / 2.0,
            x + eta / 2.0,
            2.0 * y + eta,
            y / 2.0 + eta,
            -x + 5.0 * eta / 2.0,
            -eta / 2.0,
        );
        let left = c2.min(c3).min(c4);
        let right = c5.min(c6);
        if c1 >= left + right {
            return c1;
        }
        let first = if c2 <= c3 && c2 <= c4 { c2 } else if c3 <= c4 { c3 } else { c4 };
        let second = if c5 <= c6 { c5 } else { c6 };
        first + second
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn wedge_matches_table(x in -10.0f64..10.0, y in -10.0f64..10.0, scale in prop::sample::select(vec![ETA, 1.0])) {
            let h = build_wedge(ETA).unwrap();
            let (x, y) = (x * scale, y * scale);
            let v = h.evaluate(&[x, y]).unwrap();
            // Summed atoms round differently from the unsummed table, by a few ulps.
            prop_assert!((v - wedge_table(ETA, x, y)).abs() <= 1e-14 * (1.0 + x.abs() + y.abs()));
        }
    }

    #[test]
    fn h_examples() {
        let p = single(3);
        let h = build_h(&p).unwrap();
        let f = build_f(&p).unwrap();
        assert_eq!(h.evaluate(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(h.evaluate(&[0.0, -10.0, 0.0]).unwrap(), -5.0);
        assert!(h.lipschitz_certificate() <= 3.0);
        let nu = p.nu();
        for k in 0..50 {
            let a = k as f64 * 0.7;
            let y = [nu * 0.9 * a.cos(), nu * 0.9 * a.sin(), 100.0 * a.sin()];
            assert_eq!(h.evaluate(&y).unwrap(), f.evaluate(&y).unwrap());
        }
    }

    #[test]
    fn shifted_s3_atom_is_exact() {
        let p = ResistingParams::from_first_coordinates(&[0.1, 0.7], 2).unwrap();
        let h = build_h(&p).unwrap();
        for (t, &b) in p.breakpoints.iter().enumerate() {
            assert_eq!(h.terms()[2 + t][1], AffineAtom::new(vec![1.0, 0.0], -b));
        }
    }

    #[test]
    fn tester_examples() {
        let f2 = build_tester_f2(-0.5, -0.3).unwrap();
        assert_eq!(f2.evaluate(&[-0.4]).unwrap(), -0.5);
        assert_eq!(f2.evaluate(&[1.0]).unwrap(), 1.0);
        assert_eq!(f2.lipschitz_certificate(), 4.0);
        assert!(certify_gas(&f2, &[0.0], 0.0, 1.0).unwrap().is_satisfied());
        assert!(build_tester_f2(0.2, 0.2).is_err());
    }
}
