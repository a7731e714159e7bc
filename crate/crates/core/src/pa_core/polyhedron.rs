//! Polyhedra `{y : A y <= b}`: emptiness, full-dimensionality and Euclidean
//! projection.
//!
//! Feasibility questions are answered with a Chebyshev-centre LP. Projection
//! runs Dykstra's alternating projections and then polishes the result by
//! solving the KKT system on the constraints Dykstra left active, which pins
//! the distance down to rounding error.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot};

/// Radius above which a polyhedron counts as full-dimensional.
pub const FULL_DIM_RADIUS: f64 = 1e-9;

const DYKSTRA_TOL: f64 = 1e-10;
const DYKSTRA_MAX_SWEEPS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    dim: usize,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

/// Outcome of maximizing a concave piecewise-linear objective over a polyhedron.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum LpMax {
    Infeasible,
    Unbounded,
    Value(f64),
}

/// Half-width of the box standing in for `R^d` in windowless LPs. The LP
/// solver can stall on free columns over unbounded regions.
const LP_BOX: f64 = 1e6;

/// Box bounds for variable `i`. Without a window a variable no row mentions
/// is pinned at 0, the others live in `[-scale, scale]`.
fn var_bounds(window: Option<(&[f64], f64)>, i: usize, used: bool, scale: f64) -> (f64, f64) {
    match window {
        Some((c, w)) => (c[i] - w, c[i] + w),
        None if used => (-scale, scale),
        None => (0.0, 0.0),
    }
}

impl Polyhedron {
    /// The whole space `R^dim`.
    pub fn universe(dim: usize) -> Self {
        Self {
            dim,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn new(dim: usize, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidParams(format!(
                "{} constraint rows but {} bounds",
                a.len(),
                b.len()
            )));
        }
        let mut p = Self::universe(dim);
        for (row, rhs) in a.into_iter().zip(b) {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            p.push(row, rhs);
        }
        Ok(p)
    }

    /// Adds `row . y <= rhs`. Rows are stored scaled to unit norm so slacks are
    /// Euclidean distances; a zero row is kept only when it is infeasible.
    pub fn push(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.dim);
        let n = linalg::norm(&row);
        if n == 0.0 {
            if rhs < 0.0 {
                self.a.push(row);
                self.b.push(rhs);
            }
            return;
        }
        self.a.push(linalg::scale(&row, 1.0 / n));
        self.b.push(rhs / n);
    }

    pub fn with(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.push(row, rhs);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn bounds(&self) -> &[f64] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty_system(&self) -> bool {
        self.b.is_empty()
    }

    pub fn intersect(&self, other: &Polyhedron) -> Polyhedron {
        debug_assert_eq!(self.dim, other.dim);
        let mut p = self.clone();
        p.a.extend(other.a.iter().cloned());
        p.b.extend(other.b.iter().copied());
        p
    }

    /// Largest constraint violation at `y` (nonpositive inside).
    pub fn violation(&self, y: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(r, b)| dot(r, y) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.a.iter().zip(&self.b).all(|(r, b)| dot(r, y) <= b + tol)
    }

    /// Chebyshev centre and radius (radius capped at 1), optionally restricted
    /// to the box `|y_i - c_i| <= half_width`. `None` when infeasible.
    pub fn chebyshev_center(&self, window: Option<(&[f64], f64)>) -> Result<Option<(Vec<f64>, f64)>> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..self.dim)
            .map(|i| lp.add_var(0.0, var_bounds(window, i, self.a.iter().any(|r| r[i] != 0.0), LP_BOX)))
            .collect();
        let r = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
        for (row, b) in self.a.iter().zip(&self.b) {
            let mut expr: Vec<_> = vars.iter().copied().zip(row.iter().copied()).collect();
            // Rows are unit norm; zero rows carry a negative bound and make the LP infeasible.
            let n = linalg::norm(row);
            expr.push((r, n));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, *b);
        }
        if let Some((c, w)) = window {
            // Box faces also bound the inscribed ball.
            for (i, v) in vars.iter().enumerate() {
                lp.add_constraint([(*v, 1.0), (r, 1.0)], ComparisonOp::Le, c[i] + w);
                lp.add_constraint([(*v, -1.0), (r, 1.0)], ComparisonOp::Le, -(c[i] - w));
            }
        }
        match solve_lp(&lp)? {
            None => Ok(None),
            Some(sol) => {
                let radius = sol.var_value(r);
                let centre = vars.iter().map(|v| sol.var_value(*v)).collect();
                Ok(Some((centre, radius)))
            }
        }
    }

    /// The radius variable is free below, so the Chebyshev LP is always
    /// feasible for a consistent system; a negative optimum means empty.
    pub fn is_empty(&self) -> Result<bool> {
        match self.chebyshev_center(None)? {
            None => Ok(true),
            Some((_, r)) => Ok(r < -1e-12),
        }
    }

    pub fn is_full_dimensional(&self) -> Result<bool> {
        Ok(matches!(self.chebyshev_center(None)?, Some((_, r)) if r > FULL_DIM_RADIUS))
    }

    /// Maximizes `min_j (c_j . y + e_j)` over the polyhedron intersected with an
    /// optional box window.
    pub(crate) fn max_min_affine(
        &self,
        objective: &[(Vec<f64>, f64)],
        window: Option<(&[f64], f64)>,
    ) -> Result<LpMax> {
        let first = self.max_min_affine_boxed(objective, window, LP_BOX)?;
        if window.is_some() {
            return Ok(first.map_or(LpMax::Infeasible, |(v, _)| LpMax::Value(v)));
        }
        match first {
            None => Ok(LpMax::Infeasible),
            Some((v, y)) if y.iter().all(|t| t.abs() < LP_BOX * (1.0 - 1e-9)) => Ok(LpMax::Value(v)),
            // The optimum touches the box: unbounded iff a bigger box does better.
            Some((v, _)) => match self.max_min_affine_boxed(objective, None, 2.0 * LP_BOX)? {
                Some((w, _)) if w > v + 1e-6 * (1.0 + v.abs()) => Ok(LpMax::Unbounded),
                _ => Ok(LpMax::Value(v)),
            },
        }
    }

    fn max_min_affine_boxed(
        &self,
        objective: &[(Vec<f64>, f64)],
        window: Option<(&[f64], f64)>,
        scale: f64,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..self.dim)
            .map(|i| {
                let used = self.a.iter().any(|r| r[i] != 0.0) || objective.iter().any(|(c, _)| c[i] != 0.0);
                lp.add_var(0.0, var_bounds(window, i, used, scale))
            })
            .collect();
        let z = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        for (row, b) in self.a.iter().zip(&self.b) {
            let expr: Vec<_> = vars.iter().copied().zip(row.iter().copied()).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, *b);
        }
        for (c, e) in objective {
            // z - c.y <= e
            let mut expr: Vec<_> = vars.iter().copied().zip(c.iter().map(|v| -v)).collect();
            expr.push((z, 1.0));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, *e);
        }
        Ok(solve_lp(&lp)?.map(|sol| (sol.objective(), vars.iter().map(|v| sol.var_value(*v)).collect())))
    }

    /// Euclidean projection of `x` onto the polyhedron. Errors when empty.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.contains(x, 0.0) {
            return Ok(x.to_vec());
        }
        if self.is_empty()? {
            return Err(Error::EmptyPolyhedron);
        }
        Ok(self.project_nonempty(x))
    }

    /// Projection without the emptiness check; the caller knows the
    /// polyhedron is nonempty.
    pub(crate) fn project_nonempty(&self, x: &[f64]) -> Vec<f64> {
        if self.contains(x, 0.0) {
            return x.to_vec();
        }
        let y = self.dykstra(x);
        match self.polish(x, &y) {
            Some(z) if linalg::dist(&z, x) <= linalg::dist(&y, x) + 1e-9 => z,
            _ => y,
        }
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        Ok(linalg::dist(&self.project(x)?, x))
    }

    fn dykstra(&self, x: &[f64]) -> Vec<f64> {
        let m = self.a.len();
        let mut y = x.to_vec();
        let mut incr = vec![vec![0.0; self.dim]; m];
        for _ in 0..DYKSTRA_MAX_SWEEPS {
            let mut moved = 0.0_f64;
            for i in 0..m {
                let z: Vec<f64> = linalg::add(&y, &incr[i]);
                let s = dot(&self.a[i], &z) - self.b[i];
                let next = if s > 0.0 {
                    linalg::axpy(&z, -s, &self.a[i])
                } else {
                    z.clone()
                };
                incr[i] = linalg::sub(&z, &next);
                moved = moved.max(linalg::dist(&next, &y));
                y = next;
            }
            if moved < DYKSTRA_TOL {
                break;
            }
        }
        y
    }

    /// Active-set refinement: project `x` onto the affine hull of the
    /// constraints active at `y`, dropping constraints with negative
    /// multipliers and adding violated ones until the KKT conditions hold.
    fn polish(&self, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        let mut active: Vec<usize> = (0..self.a.len())
            .filter(|&i| dot(&self.a[i], y) >= self.b[i] - 1e-7)
            .collect();
        for _ in 0..(4 * self.a.len() + 4) {
            active = self.independent_rows(&active);
            let z;
            let lambda;
            if active.is_empty() {
                z = x.to_vec();
                lambda = Vec::new();
            } else {
                let gram: Vec<Vec<f64>> = active
                    .iter()
                    .map(|&i| active.iter().map(|&j| dot(&self.a[i], &self.a[j])).collect())
                    .collect();
                let rhs: Vec<f64> = active.iter().map(|&i| dot(&self.a[i], x) - self.b[i]).collect();
                lambda = linalg::solve(&gram, &rhs)?;
                let mut zz = x.to_vec();
                for (l, &i) in lambda.iter().zip(&active) {
                    for (zk, ak) in zz.iter_mut().zip(&self.a[i]) {
                        *zk -= l * ak;
                    }
                }
                z = zz;
            }
            let (neg_pos, neg_val) = lambda
                .iter()
                .enumerate()
                .fold((usize::MAX, 0.0), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
            if neg_val < -1e-13 {
                active.remove(neg_pos);
                continue;
            }
            let (worst, viol) = (0..self.a.len())
                .map(|i| (i, dot(&self.a[i], &z) - self.b[i]))
                .fold((usize::MAX, 1e-12), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if worst == usize::MAX || viol <= 1e-12 {
                return Some(z);
            }
            if active.contains(&worst) {
                return None;
            }
            active.push(worst);
        }
        None
    }

    fn independent_rows(&self, idx: &[usize]) -> Vec<usize> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut kept = Vec::new();
        for &i in idx {
            let mut r = self.a[i].clone();
            linalg::orthogonalize(&mut r, &basis);
            let n = linalg::norm(&r);
            if n > 1e-10 {
                basis.push(linalg::scale(&r, 1.0 / n));
                kept.push(i);
            }
        }
        kept
    }
}

fn solve_lp(lp: &Problem) -> Result<Option<microlp::Solution>> {
    match lp.solve() {
        Ok(outcome) => outcome
            .into_solution()
            .map(Some)
            .map_err(|_| Error::Lp("solve interrupted".into())),
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(Error::Lp(e.to_string())),
    }
}

/// Distance from `x` to a nonempty polyhedron together with the nearest point.
pub fn region_distance(p: &Polyhedron, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let y = p.project(x)?;
    Ok((linalg::dist(&y, x), y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfline_projection() {
        let p = Polyhedron::universe(1).with(vec![1.0], 0.0);
        let (d, y) = region_distance(&p, &[2.0]).unwrap();
        assert_eq!(d, 2.0);
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn orthant_corner_projection() {
        let p = Polyhedron::universe(2)
            .with(vec![-1.0, 0.0], -1.0)
            .with(vec![0.0, -1.0], -1.0);
        let (d, y) = region_distance(&p, &[0.0, 0.0]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn halfplane_projection_matches_closed_form() {
        let p = Polyhedron::universe(2).with(vec![1.0, 1.0], -1.0);
        let (d, y) = region_distance(&p, &[0.0, 0.0]).unwrap();
        // dist = |a.x - b| / |a| = 1 / sqrt 2, foot x - (a.x - b) a / |a|^2
        assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((y[0] + 0.5).abs() < 1e-12 && (y[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_polyhedron_errors() {
        let p = Polyhedron::universe(1)
            .with(vec![1.0], 0.0)
            .with(vec![-1.0], -1.0);
        assert!(p.is_empty().unwrap());
        assert!(matches!(region_distance(&p, &[3.0]), Err(Error::EmptyPolyhedron)));
    }

    #[test]
    fn full_dimensionality() {
        let line = Polyhedron::universe(2)
            .with(vec![1.0, 0.0], 0.0)
            .with(vec![-1.0, 0.0], 0.0);
        assert!(!line.is_empty().unwrap());
        assert!(!line.is_full_dimensional().unwrap());
        let slab = Polyhedron::universe(2)
            .with(vec![1.0, 0.0], 1.0)
            .with(vec![-1.0, 0.0], 0.0);
        assert!(slab.is_full_dimensional().unwrap());
        assert!(Polyhedron::universe(3).is_full_dimensional().unwrap());
    }

    #[test]
    fn acute_cone_vertex_projection() {
        // Narrow wedge {y2 >= 0.1 y1, y2 <= 0.2 y1}; the point (-1, 1) projects to the apex.
        let p = Polyhedron::universe(2)
            .with(vec![0.1, -1.0], 0.0)
            .with(vec![-0.2, 1.0], 0.0);
        let (d, y) = region_distance(&p, &[-1.0, 1.0]).unwrap();
        assert!(y[0].abs() < 1e-12 && y[1].abs() < 1e-12, "{y:?}");
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
    }
}
