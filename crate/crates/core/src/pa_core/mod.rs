//! Exact calculus for piecewise-affine functions written as a max of mins of
//! affine atoms.
//!
//! A [`MaxMinFunction`] is `f(x) = max_t min_{a in term t} (<g_a, x> + b_a)`.
//! Every function built in this crate (the resisting function, the wedge and
//! its rotations, the one-dimensional tester function) uses this two-level
//! normal form.
//!
//! Region geometry lives in [`polyhedron`] and the cell decomposition that
//! drives all subdifferential computations in [`cells`].

pub mod cells;
pub mod polyhedron;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use cells::{enumerate_pieces, essentially_active_gradients, infimum, PieceSelection};
pub use polyhedron::{region_distance, Polyhedron};

/// An affine map `x -> <gradient, x> + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineAtom {
    pub gradient: Vec<f64>,
    pub offset: f64,
}

impl AffineAtom {
    pub fn new(gradient: Vec<f64>, offset: f64) -> Self {
        Self { gradient, offset }
    }

    /// The constant atom `x -> c` in dimension `d`.
    pub fn constant(d: usize, c: f64) -> Self {
        Self::new(vec![0.0; d], c)
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.gradient, x) + self.offset
    }

    /// Sum of two atoms, used when expanding `min{..} + min{..}` into a single min.
    pub fn plus(&self, other: &AffineAtom) -> AffineAtom {
        AffineAtom::new(
            linalg::add(&self.gradient, &other.gradient),
            self.offset + other.offset,
        )
    }
}

/// Identifies one affine atom inside a [`MaxMinFunction`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PieceId {
    pub term: usize,
    pub atom: usize,
}

/// Piecewise-affine function in max-of-min normal form.
///
/// Immutable after construction. Duplicate atoms inside a term are removed
/// when the function is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFunction", into = "RawFunction")]
pub struct MaxMinFunction {
    dimension: usize,
    terms: Vec<Vec<AffineAtom>>,
}

#[derive(Serialize, Deserialize)]
struct RawFunction {
    dimension: usize,
    terms: Vec<Vec<AffineAtom>>,
}

impl TryFrom<RawFunction> for MaxMinFunction {
    type Error = Error;

    fn try_from(raw: RawFunction) -> Result<Self> {
        MaxMinFunction::new(raw.dimension, raw.terms)
    }
}

impl From<MaxMinFunction> for RawFunction {
    fn from(f: MaxMinFunction) -> Self {
        RawFunction {
            dimension: f.dimension,
            terms: f.terms,
        }
    }
}

impl MaxMinFunction {
    /// Builds a function from its terms, validating dimensions and finiteness.
    pub fn new(dimension: usize, terms: Vec<Vec<AffineAtom>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidFunction("dimension must be positive".into()));
        }
        if terms.is_empty() {
            return Err(Error::InvalidFunction("no terms".into()));
        }
        let mut clean = Vec::with_capacity(terms.len());
        for (t, term) in terms.into_iter().enumerate() {
            if term.is_empty() {
                return Err(Error::InvalidFunction(format!("term {t} is empty")));
            }
            let mut kept: Vec<AffineAtom> = Vec::with_capacity(term.len());
            for atom in term {
                if atom.dim() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        got: atom.dim(),
                    });
                }
                if !atom.offset.is_finite() || atom.gradient.iter().any(|g| !g.is_finite()) {
                    return Err(Error::InvalidFunction(format!(
                        "term {t} has a non-finite atom"
                    )));
                }
                if !kept.contains(&atom) {
                    kept.push(atom);
                }
            }
            clean.push(kept);
        }
        Ok(Self {
            dimension,
            terms: clean,
        })
    }

    /// A single affine function.
    pub fn affine(atom: AffineAtom) -> Self {
        let d = atom.dim();
        Self::new(d, vec![vec![atom]]).expect("valid affine atom")
    }

    /// `max` of the given atoms (each atom is its own term).
    pub fn max_of(dimension: usize, atoms: Vec<AffineAtom>) -> Result<Self> {
        Self::new(dimension, atoms.into_iter().map(|a| vec![a]).collect())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terms(&self) -> &[Vec<AffineAtom>] {
        &self.terms
    }

    pub fn atom(&self, id: PieceId) -> &AffineAtom {
        &self.terms[id.term][id.atom]
    }

    pub fn piece_ids(&self) -> impl Iterator<Item = PieceId> + '_ {
        self.terms.iter().enumerate().flat_map(|(t, term)| {
            (0..term.len()).map(move |a| PieceId { term: t, atom: a })
        })
    }

    pub fn atom_count(&self) -> usize {
        self.terms.iter().map(Vec::len).sum()
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Value of a term (the min over its atoms) at `x`.
    pub fn term_value(&self, term: usize, x: &[f64]) -> f64 {
        self.terms[term]
            .iter()
            .map(|a| a.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Evaluates `max_t min_a (<g, x> + b)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    /// Unchecked evaluation for hot loops; the caller guarantees `x.len() == dimension`.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.terms.len())
            .map(|t| self.term_value(t, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The atom selected by `argmax_t argmin_a` at `x`, with the first index
    /// winning ties.
    pub fn selection(&self, x: &[f64]) -> PieceId {
        let mut best = PieceId { term: 0, atom: 0 };
        let mut best_val = f64::NEG_INFINITY;
        for (t, term) in self.terms.iter().enumerate() {
            let (a, v) = term
                .iter()
                .enumerate()
                .map(|(a, atom)| (a, atom.eval(x)))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            if v > best_val {
                best_val = v;
                best = PieceId { term: t, atom: a };
            }
        }
        best
    }

    /// Gradient at `x` when `f` is certainly differentiable there: every atom
    /// tied (within `tol`) with the selected one, either as a term minimum or
    /// as the overall maximum, must carry the same gradient.
    pub fn gradient_if_smooth(&self, x: &[f64], tol: f64) -> Option<&[f64]> {
        let fx = self.value(x);
        let mut grad: Option<&[f64]> = None;
        for term in &self.terms {
            let vals: Vec<f64> = term.iter().map(|a| a.eval(x)).collect();
            let tv = vals.iter().copied().fold(f64::INFINITY, f64::min);
            if tv < fx - tol {
                continue;
            }
            for (atom, v) in term.iter().zip(&vals) {
                if *v <= tv + tol {
                    match grad {
                        None => grad = Some(&atom.gradient),
                        Some(g) if g == atom.gradient.as_slice() => {}
                        Some(_) => return None,
                    }
                }
            }
        }
        grad
    }

    /// One-sided directional derivative `f'(x; v)`: the max over (nearly)
    /// active terms of the min over (nearly) active atoms of `<g, v>`.
    pub fn directional_derivative(&self, x: &[f64], v: &[f64], tol: f64) -> f64 {
        let fx = self.value(x);
        let mut best = f64::NEG_INFINITY;
        for term in &self.terms {
            let vals: Vec<f64> = term.iter().map(|a| a.eval(x)).collect();
            let tv = vals.iter().copied().fold(f64::INFINITY, f64::min);
            if tv < fx - tol {
                continue;
            }
            let slope = term
                .iter()
                .zip(&vals)
                .filter(|(_, val)| **val <= tv + tol)
                .map(|(a, _)| linalg::dot(&a.gradient, v))
                .fold(f64::INFINITY, f64::min);
            best = best.max(slope);
        }
        best
    }

    /// Global Lipschitz constant: the largest Euclidean atom gradient norm.
    pub fn lipschitz_certificate(&self) -> f64 {
        self.terms
            .iter()
            .flatten()
            .map(|a| linalg::norm(&a.gradient))
            .fold(0.0, f64::max)
    }

    /// Composes with a linear map on the gradients: atom gradients `g` become
    /// `m(g)`; offsets are unchanged. The new dimension is `m(g).len()`.
    pub fn map_gradients(&self, dimension: usize, m: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|term| {
                term.iter()
                    .map(|a| AffineAtom::new(m(&a.gradient), a.offset))
                    .collect()
            })
            .collect();
        Self::new(dimension, terms)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("function serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidFunction(e.to_string()))
    }
}

/// Class parameters of a function: Lipschitz bound `L`, value gap
/// `f(0) - inf f <= value_gap`, and dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionMeta {
    pub lipschitz_bound: f64,
    pub value_gap: f64,
    pub dimension: usize,
}

impl FunctionMeta {
    pub fn new(lipschitz_bound: f64, value_gap: f64, dimension: usize) -> Result<Self> {
        if !(lipschitz_bound > 0.0) {
            return Err(Error::InvalidParams("lipschitz_bound must be positive".into()));
        }
        if !(value_gap >= 0.0) {
            return Err(Error::InvalidParams("value_gap must be nonnegative".into()));
        }
        Ok(Self {
            lipschitz_bound,
            value_gap,
            dimension,
        })
    }
}

/// Free-function form of [`MaxMinFunction::evaluate`].
pub fn evaluate(f: &MaxMinFunction, x: &[f64]) -> Result<f64> {
    f.evaluate(x)
}

/// Free-function form of [`MaxMinFunction::lipschitz_certificate`].
pub fn lipschitz_certificate(f: &MaxMinFunction) -> f64 {
    f.lipschitz_certificate()
}
