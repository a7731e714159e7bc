//! Cell decomposition of a max-min function.
//!
//! The region where piece `(t, a)` is selected is
//! `{l_a <= l_c for c in t} ∩ ⋂_{s != t} {min_{b in s} l_b <= l_a}`. The first
//! part is a polyhedron; each factor of the second part is a union of
//! halfspaces, so the region is a union of polyhedral cells. Cells are found by
//! depth-first search over one witness atom `b` per competing term, with the
//! witnesses ordered so sibling cells only share boundaries.
//!
//! All geometry runs in the span of the atom gradients. A `d`-ball projects
//! onto a ball of the same radius there, so activity and distances are
//! unchanged, and a rotated function in high dimension costs the same as the
//! planar one it came from.
//!
//! Local queries restrict the search to a box around the query point and drop
//! terms and atoms that cannot be selected inside that box.

use serde::{Deserialize, Serialize};

use super::polyhedron::{LpMax, Polyhedron, FULL_DIM_RADIUS};
use super::{AffineAtom, MaxMinFunction, PieceId};
use crate::error::Result;
use crate::linalg;
use crate::subdiff::GradientPolytope;

/// Tolerance for "the closure of a cell meets the ball".
pub const ACTIVITY_TOL: f64 = 1e-9;

/// Maximum of `term_s - l_a` over a cell at or below this counts as implied.
const IMPLIED_TOL: f64 = 1e-12;

/// A selected atom together with the polyhedral cells (in the original
/// coordinates) whose union is the closed region where it attains the max-min.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceSelection {
    pub term_index: usize,
    pub atom_index: usize,
    pub cells: Vec<Polyhedron>,
}

impl PieceSelection {
    pub fn id(&self) -> PieceId {
        PieceId {
            term: self.term_index,
            atom: self.atom_index,
        }
    }

    /// Whether `x` lies in the region, up to `tol` constraint violation.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.cells.iter().any(|c| c.contains(x, tol))
    }
}

/// The function rewritten in coordinates of an orthonormal basis of the
/// gradient span.
#[derive(Clone, Debug)]
pub(crate) struct ReducedView {
    basis: Vec<Vec<f64>>,
    terms: Vec<Vec<AffineAtom>>,
}

impl ReducedView {
    pub(crate) fn new(f: &MaxMinFunction) -> Self {
        let grads: Vec<Vec<f64>> = f
            .terms()
            .iter()
            .flatten()
            .map(|a| a.gradient.clone())
            .collect();
        let mut basis = linalg::orthonormal_span(&grads, 1e-10);
        if basis.is_empty() {
            basis.push(linalg::unit(f.dimension(), 0));
        }
        let terms = f
            .terms()
            .iter()
            .map(|term| {
                term.iter()
                    .map(|a| AffineAtom::new(project_on(&basis, &a.gradient), a.offset))
                    .collect()
            })
            .collect();
        Self { basis, terms }
    }

    pub(crate) fn dim(&self) -> usize {
        self.basis.len()
    }

    pub(crate) fn reduce(&self, x: &[f64]) -> Vec<f64> {
        project_on(&self.basis, x)
    }

    /// Lifts a reduced constraint system back to the original coordinates.
    fn lift(&self, p: &Polyhedron, full_dim: usize) -> Polyhedron {
        let mut out = Polyhedron::universe(full_dim);
        for (row, b) in p.rows().iter().zip(p.bounds()) {
            let mut full = vec![0.0; full_dim];
            for (r, q) in row.iter().zip(&self.basis) {
                for (fi, qi) in full.iter_mut().zip(q) {
                    *fi += r * qi;
                }
            }
            out.push(full, *b);
        }
        out
    }
}

fn project_on(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    basis.iter().map(|q| linalg::dot(q, v)).collect()
}

/// One full-dimensional cell, in reduced coordinates.
#[derive(Clone, Debug)]
pub(crate) struct LocalCell {
    pub piece: PieceId,
    pub poly: Polyhedron,
    /// Distance from the query point to the cell.
    pub distance: f64,
}

/// Cells near a point together with the terms and atoms that can matter there.
#[derive(Clone, Debug)]
pub(crate) struct LocalAnalysis {
    pub cells: Vec<LocalCell>,
    /// Surviving atom indices per term; empty for pruned terms.
    pub live: Vec<Vec<usize>>,
}

impl LocalAnalysis {
    /// Pieces whose cells come within `radius` of the query point, sorted.
    pub(crate) fn pieces_within(&self, radius: f64) -> Vec<PieceId> {
        let mut ids: Vec<PieceId> = self
            .cells
            .iter()
            .filter(|c| c.distance <= radius + ACTIVITY_TOL)
            .map(|c| c.piece)
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

struct Search<'a> {
    view: &'a ReducedView,
    window: Option<(Vec<f64>, f64)>,
    live: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn window(&self) -> Option<(&[f64], f64)> {
        self.window.as_ref().map(|(c, w)| (c.as_slice(), *w))
    }

    fn full_dimensional(&self, p: &Polyhedron) -> Result<bool> {
        Ok(matches!(p.chebyshev_center(self.window())?, Some((_, r)) if r > FULL_DIM_RADIUS))
    }

    fn atom(&self, t: usize, a: usize) -> &AffineAtom {
        &self.view.terms[t][a]
    }

    /// Row `l_i - l_j <= 0` as `(g_i - g_j) . y <= b_j - b_i`.
    fn below(&self, i: (usize, usize), j: (usize, usize)) -> (Vec<f64>, f64) {
        let (ai, aj) = (self.atom(i.0, i.1), self.atom(j.0, j.1));
        (linalg::sub(&ai.gradient, &aj.gradient), aj.offset - ai.offset)
    }

    fn cells_of(&self, t: usize, a: usize) -> Result<Vec<Polyhedron>> {
        let mut base = Polyhedron::universe(self.view.dim());
        for &c in &self.live[t] {
            if c != a {
                let (row, rhs) = self.below((t, a), (t, c));
                base.push(row, rhs);
            }
        }
        let mut out = Vec::new();
        if !self.full_dimensional(&base)? {
            return Ok(out);
        }
        let others: Vec<usize> = (0..self.live.len())
            .filter(|&s| s != t && !self.live[s].is_empty())
            .collect();
        self.descend((t, a), base, &others, &mut out)?;
        Ok(out)
    }

    fn descend(
        &self,
        sel: (usize, usize),
        poly: Polyhedron,
        others: &[usize],
        out: &mut Vec<Polyhedron>,
    ) -> Result<()> {
        let Some((&s, rest)) = others.split_first() else {
            out.push(poly);
            return Ok(());
        };
        let atoms = &self.live[s];
        let objective: Vec<(Vec<f64>, f64)> = atoms
            .iter()
            .map(|&b| {
                let (row, rhs) = self.below((s, b), sel);
                (row, -rhs)
            })
            .collect();
        match poly.max_min_affine(&objective, self.window())? {
            LpMax::Infeasible => return Ok(()),
            LpMax::Value(v) if v <= IMPLIED_TOL => return self.descend(sel, poly, rest, out),
            _ => {}
        }
        // Witness b: l_b <= l_a, and every earlier atom of s stays above l_a.
        for (k, &b) in atoms.iter().enumerate() {
            let mut p = poly.clone();
            for &prev in &atoms[..k] {
                let (row, rhs) = self.below(sel, (s, prev));
                p.push(row, rhs);
            }
            let (row, rhs) = self.below((s, b), sel);
            p.push(row, rhs);
            if self.full_dimensional(&p)? {
                self.descend(sel, p, rest, out)?;
            }
        }
        Ok(())
    }
}

/// Terms and atoms that can be selected somewhere in the ball of radius `rho`
/// around `c` (reduced coordinates).
fn live_sets(view: &ReducedView, c: &[f64], rho: f64) -> Vec<Vec<usize>> {
    let bounds: Vec<Vec<(f64, f64)>> = view
        .terms
        .iter()
        .map(|term| {
            term.iter()
                .map(|a| {
                    let v = a.eval(c);
                    let s = rho * linalg::norm(&a.gradient);
                    (v - s, v + s)
                })
                .collect()
        })
        .collect();
    let term_hi: Vec<f64> = bounds
        .iter()
        .map(|t| t.iter().map(|b| b.1).fold(f64::INFINITY, f64::min))
        .collect();
    let term_lo: Vec<f64> = bounds
        .iter()
        .map(|t| t.iter().map(|b| b.0).fold(f64::INFINITY, f64::min))
        .collect();
    let floor = term_lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    bounds
        .iter()
        .enumerate()
        .map(|(t, atoms)| {
            if term_hi[t] < floor {
                return Vec::new();
            }
            (0..atoms.len())
                .filter(|&a| atoms[a].0 <= term_hi[t])
                .collect()
        })
        .collect()
}

fn all_live(view: &ReducedView) -> Vec<Vec<usize>> {
    view.terms.iter().map(|t| (0..t.len()).collect()).collect()
}

/// Full-dimensional cells meeting a neighbourhood of `x` that contains the
/// closed ball of radius `radius`, with their distances to `x`.
pub(crate) fn analyze(f: &MaxMinFunction, x: &[f64], radius: f64) -> Result<LocalAnalysis> {
    f.check_dim(x)?;
    let view = ReducedView::new(f);
    analyze_reduced(&view, &view.reduce(x), radius)
}

pub(crate) fn analyze_reduced(view: &ReducedView, c: &[f64], radius: f64) -> Result<LocalAnalysis> {
    let half_width = radius * (1.0 + 1e-6) + 1e-6;
    let rho = half_width * (view.dim() as f64).sqrt();
    let live = live_sets(view, c, rho);
    let search = Search {
        view,
        window: Some((c.to_vec(), half_width)),
        live,
    };
    let mut cells = Vec::new();
    for t in 0..search.live.len() {
        for &a in &search.live[t] {
            for poly in search.cells_of(t, a)? {
                let y = poly.project_nonempty(c);
                cells.push(LocalCell {
                    piece: PieceId { term: t, atom: a },
                    distance: linalg::dist(&y, c),
                    poly,
                });
            }
        }
    }
    Ok(LocalAnalysis {
        cells,
        live: search.live,
    })
}

/// Every piece whose region is full-dimensional, with its cells.
pub fn enumerate_pieces(f: &MaxMinFunction) -> Result<Vec<PieceSelection>> {
    let view = ReducedView::new(f);
    let search = Search {
        view: &view,
        window: None,
        live: all_live(&view),
    };
    let mut out = Vec::new();
    for id in f.piece_ids() {
        let cells = search.cells_of(id.term, id.atom)?;
        if !cells.is_empty() {
            out.push(PieceSelection {
                term_index: id.term,
                atom_index: id.atom,
                cells: cells.iter().map(|c| view.lift(c, f.dimension())).collect(),
            });
        }
    }
    Ok(out)
}

/// Gradients of the pieces whose full-dimensional region has `x` in its closure.
pub fn essentially_active_gradients(f: &MaxMinFunction, x: &[f64]) -> Result<GradientPolytope> {
    let local = analyze(f, x, 0.0)?;
    Ok(GradientPolytope::from_pieces(f, &local.pieces_within(0.0)))
}

/// Exact infimum of `f` over `R^d`, or `None` when `f` is unbounded below.
pub fn infimum(f: &MaxMinFunction) -> Result<Option<f64>> {
    let mut best = f64::INFINITY;
    for sel in enumerate_pieces(f)? {
        let atom = f.atom(sel.id());
        let objective = [(linalg::scale(&atom.gradient, -1.0), -atom.offset)];
        for cell in &sel.cells {
            match cell.max_min_affine(&objective, None)? {
                LpMax::Unbounded => return Ok(None),
                LpMax::Infeasible => {}
                LpMax::Value(v) => best = best.min(-v),
            }
        }
    }
    Ok(Some(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{build_f, build_wedge, ResistingParams};

    fn abs_fn() -> MaxMinFunction {
        MaxMinFunction::max_of(
            1,
            vec![AffineAtom::new(vec![1.0], 0.0), AffineAtom::new(vec![-1.0], 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn abs_has_two_half_lines() {
        let pieces = enumerate_pieces(&abs_fn()).unwrap();
        assert_eq!(pieces.len(), 2);
        assert!(pieces[0].contains(&[1.0], 0.0) && !pieces[0].contains(&[-1.0], 0.0));
        assert!(pieces[1].contains(&[-1.0], 0.0) && !pieces[1].contains(&[1.0], 0.0));
    }

    #[test]
    fn wedge_has_six_regions_without_s2() {
        let h = build_wedge(1.0 / 32.0).unwrap();
        let pieces = enumerate_pieces(&h).unwrap();
        assert_eq!(pieces.len(), 6);
        // Atom order inside the six-way min: (2+5), (2+6), (3+5), (3+6), (4+5), (4+6).
        assert!(pieces.iter().all(|p| !(p.term_index == 1 && p.atom_index == 0)));
    }

    #[test]
    fn f_on_three_breakpoints_has_six_slabs() {
        let params = ResistingParams::from_first_coordinates(&[0.0, 0.5, 0.2], 1).unwrap();
        let f = build_f(&params).unwrap();
        let pieces = enumerate_pieces(&f).unwrap();
        let cells: usize = pieces.iter().map(|p| p.cells.len()).sum();
        assert_eq!(cells, 6);
        let rising = pieces
            .iter()
            .filter(|p| f.atom(p.id()).gradient[0] > 0.0)
            .count();
        assert_eq!(rising, 3);
    }

    #[test]
    fn active_gradients_examples() {
        let g = essentially_active_gradients(&abs_fn(), &[0.0]).unwrap();
        assert_eq!(g.generators, vec![vec![-1.0], vec![1.0]]);
        let eta = 1.0 / 32.0;
        let h = build_wedge(eta).unwrap();
        let g = essentially_active_gradients(&h, &[0.0, 0.0]).unwrap();
        assert_eq!(g.generators, vec![vec![1.0, 0.0]]);
        let g = essentially_active_gradients(&h, &[0.0, eta / 2.0]).unwrap();
        assert_eq!(g.generators, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn reduced_view_of_embedded_function() {
        // |x_2| in R^3 reduces to one dimension.
        let f = MaxMinFunction::max_of(
            3,
            vec![
                AffineAtom::new(vec![0.0, 1.0, 0.0], 0.0),
                AffineAtom::new(vec![0.0, -1.0, 0.0], 0.0),
            ],
        )
        .unwrap();
        let view = ReducedView::new(&f);
        assert_eq!(view.dim(), 1);
        let g = essentially_active_gradients(&f, &[5.0, 0.0, -2.0]).unwrap();
        assert_eq!(g.generators.len(), 2);
        let pieces = enumerate_pieces(&f).unwrap();
        assert!(pieces[0].contains(&[7.0, 1.0, 3.0], 0.0));
    }
}
