//! Local oracles and the resisting adversary.
//!
//! A local oracle answers a query with a germ: a max-min function that agrees
//! with the true function on some ball around the query. The radius of that
//! ball is kept out of the algorithm-facing [`GermView`].
//!
//! The adversary answers every query `x` with the germ `y -> y1 - x1` and
//! value 0, and only afterwards builds a function consistent with all of its
//! answers.

use serde::{Deserialize, Serialize};

use crate::constructions::{build_g, build_h, build_rotation, ResistingParams, RotationPlan};
use crate::error::{Error, Result};
use crate::linalg;
use crate::pa_core::cells::{analyze_reduced, ReducedView};
use crate::pa_core::{AffineAtom, MaxMinFunction, PieceId};

/// Cap on the hidden germ radius.
pub const MAX_GERM_RADIUS: f64 = 1.0;

/// Starting radius of the search for the nearest inactive cell.
const FIRST_PROBE: f64 = 1e-3;

/// What an algorithm sees from one oracle call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GermView {
    pub local_function: MaxMinFunction,
    pub value_at_query: f64,
}

impl GermView {
    /// Lexicographically smallest essentially active gradient of the germ at `x`.
    pub fn first_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = &self.local_function;
        if let [term] = f.terms() {
            if let [atom] = term.as_slice() {
                return Ok(atom.gradient.clone());
            }
        }
        if let Some(g) = f.gradient_if_smooth(x, 0.0) {
            return Ok(g.to_vec());
        }
        let s = crate::pa_core::essentially_active_gradients(f, x)?;
        Ok(s.first().to_vec())
    }
}

/// A germ together with the radius on which it is valid.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalGerm {
    pub view: GermView,
    pub hidden_radius: f64,
}

/// Exact local description of `f` at `x`.
///
/// The radius is half the distance from `x` to the nearest full-dimensional
/// cell whose piece is not active at `x`, capped at 1. When every active piece
/// carries the same atom, the germ is that atom; otherwise it is `f` with the
/// terms and atoms that cannot be selected inside the ball removed.
pub fn local_oracle(f: &MaxMinFunction, x: &[f64]) -> Result<LocalGerm> {
    f.check_dim(x)?;
    let view = ReducedView::new(f);
    let c = view.reduce(x);
    let active: Vec<PieceId> = analyze_reduced(&view, &c, 0.0)?.pieces_within(0.0);
    let mut probe = FIRST_PROBE;
    let nearest = loop {
        let local = analyze_reduced(&view, &c, probe)?;
        let m = local
            .cells
            .iter()
            .filter(|cell| active.binary_search(&cell.piece).is_err())
            .map(|cell| cell.distance)
            .fold(f64::INFINITY, f64::min);
        if m <= probe {
            break Some(m);
        }
        if probe >= 2.0 * MAX_GERM_RADIUS {
            break None;
        }
        probe = (2.0 * probe).min(2.0 * MAX_GERM_RADIUS);
    };
    let hidden_radius = nearest.map_or(MAX_GERM_RADIUS, |m| (m / 2.0).min(MAX_GERM_RADIUS));
    let first = f.atom(active[0]);
    let local_function = if active.iter().all(|&id| f.atom(id) == first) {
        MaxMinFunction::affine(first.clone())
    } else {
        let live = analyze_reduced(&view, &c, hidden_radius)?.live;
        let terms: Vec<Vec<AffineAtom>> = live
            .iter()
            .enumerate()
            .filter(|(_, atoms)| !atoms.is_empty())
            .map(|(t, atoms)| atoms.iter().map(|&a| f.terms()[t][a].clone()).collect())
            .collect();
        MaxMinFunction::new(f.dimension(), terms)?
    };
    Ok(LocalGerm {
        view: GermView {
            local_function,
            value_at_query: f.value(x),
        },
        hidden_radius,
    })
}

/// Which algorithm class the adversary plays against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryMode {
    /// Zero-respecting algorithms, any `d >= 2`; the answer function is `H`.
    Gzr,
    /// Arbitrary deterministic algorithms, `d >= T + 1`; the answer is `H`
    /// composed with a rotation.
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub max_queries: usize,
    pub dimension: usize,
    pub mode: AdversaryMode,
}

impl AdversaryConfig {
    pub fn new(max_queries: usize, dimension: usize, mode: AdversaryMode) -> Result<Self> {
        if max_queries == 0 {
            return Err(Error::InvalidParams("need at least one query".into()));
        }
        match mode {
            AdversaryMode::Gzr if dimension < 2 => Err(Error::InvalidParams(
                "zero-respecting mode needs d >= 2".into(),
            )),
            AdversaryMode::General if dimension < max_queries + 1 => {
                Err(Error::RotationDimension {
                    d: dimension,
                    queries: max_queries,
                })
            }
            _ => Ok(Self {
                max_queries,
                dimension,
                mode,
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Collecting,
    Materialized,
}

/// One logged oracle call; `t` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub t: usize,
    pub query: Vec<f64>,
    pub germ: MaxMinFunction,
    pub value: f64,
}

impl TranscriptEntry {
    pub fn view(&self) -> GermView {
        GermView {
            local_function: self.germ.clone(),
            value_at_query: self.value,
        }
    }
}

/// Append-only log of queries and answers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub phase: Phase,
    pub entries: Vec<TranscriptEntry>,
}

impl Default for Transcript {
    fn default() -> Self {
        Self::new()
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self {
            phase: Phase::Collecting,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn queries(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.query.clone()).collect()
    }

    pub fn push(&mut self, query: Vec<f64>, germ: &GermView) -> Result<()> {
        if self.phase != Phase::Collecting {
            return Err(Error::Phase("transcript is already materialized".into()));
        }
        self.entries.push(TranscriptEntry {
            t: self.entries.len() + 1,
            query,
            germ: germ.local_function.clone(),
            value: germ.value_at_query,
        });
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidFunction(e.to_string()))
    }
}

/// The resisting answer at `x`: the germ `y -> y1 - x1` with value 0.
pub fn resisting_germ(x: &[f64]) -> GermView {
    GermView {
        local_function: MaxMinFunction::affine(AffineAtom::new(linalg::unit(x.len(), 0), -x[0])),
        value_at_query: 0.0,
    }
}

/// Records `x` and answers with the resisting germ.
pub fn adversary_answer(
    state: &mut Transcript,
    config: &AdversaryConfig,
    x: &[f64],
) -> Result<GermView> {
    if state.phase != Phase::Collecting {
        return Err(Error::Phase("adversary already materialized".into()));
    }
    if state.len() >= config.max_queries {
        return Err(Error::QueryBudget(config.max_queries));
    }
    if x.len() != config.dimension {
        return Err(Error::DimensionMismatch {
            expected: config.dimension,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("query has non-finite coordinates".into()));
    }
    let germ = resisting_germ(x);
    state.push(x.to_vec(), &germ)?;
    Ok(germ)
}

/// The function the adversary commits to after the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Materialized {
    pub mode: AdversaryMode,
    pub params: ResistingParams,
    pub function: MaxMinFunction,
    pub rotation: Option<RotationPlan>,
}

/// Builds `H` (or `G = H o U^T`) from the recorded queries and checks that
/// the local oracle of the result reproduces every recorded answer.
pub fn materialize(state: &mut Transcript, config: &AdversaryConfig) -> Result<Materialized> {
    if state.phase != Phase::Collecting {
        return Err(Error::Phase("already materialized".into()));
    }
    if state.is_empty() {
        return Err(Error::Phase("no queries recorded".into()));
    }
    let queries = state.queries();
    let first: Vec<f64> = queries.iter().map(|q| q[0]).collect();
    let params = ResistingParams::from_first_coordinates(&first, config.dimension)?;
    let h = build_h(&params)?;
    let (function, rotation) = match config.mode {
        AdversaryMode::Gzr => (h, None),
        AdversaryMode::General => {
            let plan = build_rotation(&queries, config.dimension)?;
            (build_g(&h, &plan)?, Some(plan))
        }
    };
    state.phase = Phase::Materialized;
    for (i, entry) in state.entries.iter().enumerate() {
        let germ = local_oracle(&function, &entry.query)?;
        if germ.view != entry.view() {
            return Err(Error::InconsistentGerm { index: i + 1 });
        }
    }
    Ok(Materialized {
        mode: config.mode,
        params,
        function,
        rotation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::build_f;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn abs_fn() -> MaxMinFunction {
        MaxMinFunction::max_of(
            1,
            vec![AffineAtom::new(vec![1.0], 0.0), AffineAtom::new(vec![-1.0], 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn f_germ_at_breakpoint_is_the_rising_line() {
        let p = ResistingParams::from_first_coordinates(&[0.0], 2).unwrap();
        let f = build_f(&p).unwrap();
        let g = local_oracle(&f, &[0.0, 0.0]).unwrap();
        assert_eq!(g.view, resisting_germ(&[0.0, 0.0]));
        // Nearest other cell starts at x1 = -1/4.
        assert!((g.hidden_radius - 0.125).abs() < 1e-9);
    }

    #[test]
    fn abs_germ_at_kink_keeps_both_pieces() {
        let g = local_oracle(&abs_fn(), &[0.0]).unwrap();
        assert_eq!(g.view.local_function, abs_fn());
        assert_eq!(g.hidden_radius, 1.0);
        let g = local_oracle(&abs_fn(), &[0.5]).unwrap();
        assert_eq!(g.view.local_function, MaxMinFunction::affine(AffineAtom::new(vec![1.0], 0.0)));
        assert!((g.hidden_radius - 0.25).abs() < 1e-9);
    }

    #[test]
    fn h_and_f_germs_coincide_at_breakpoints() {
        let p = ResistingParams::from_first_coordinates(&[0.0, 0.3, 0.9], 3).unwrap();
        let h = build_h(&p).unwrap();
        let f = build_f(&p).unwrap();
        for &b in &p.breakpoints {
            let x = [b, 0.0, 0.0];
            assert_eq!(local_oracle(&h, &x).unwrap().view, local_oracle(&f, &x).unwrap().view);
        }
    }

    #[test]
    fn germs_are_exact_on_their_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ResistingParams::from_first_coordinates(&[0.0, 0.25], 2).unwrap();
        let h = build_h(&p).unwrap();
        for _ in 0..40 {
            let x = vec![rng.random_range(-0.1..0.4), rng.random_range(-0.05..0.08)];
            let g = local_oracle(&h, &x).unwrap();
            for _ in 0..50 {
                let y = crate::subdiff::sample_ball(&mut rng, &x, g.hidden_radius);
                assert_eq!(g.view.local_function.value(&y), h.value(&y));
            }
        }
    }

    #[test]
    fn adversary_phase_contract() {
        let cfg = AdversaryConfig::new(3, 2, AdversaryMode::Gzr).unwrap();
        let mut tr = Transcript::new();
        let g = adversary_answer(&mut tr, &cfg, &[0.7, 0.0]).unwrap();
        assert_eq!(g.local_function.value(&[1.0, 5.0]), 1.0 - 0.7);
        assert_eq!(g.value_at_query, 0.0);
        adversary_answer(&mut tr, &cfg, &[0.0, 0.0]).unwrap();
        let m = materialize(&mut tr, &cfg).unwrap();
        assert_eq!(m.params.breakpoints, vec![0.0, 0.7]);
        assert!(matches!(adversary_answer(&mut tr, &cfg, &[0.0, 0.0]), Err(Error::Phase(_))));
        assert!(matches!(materialize(&mut tr, &cfg), Err(Error::Phase(_))));
    }

    #[test]
    fn materialize_three_breakpoints() {
        let cfg = AdversaryConfig::new(3, 2, AdversaryMode::Gzr).unwrap();
        let mut tr = Transcript::new();
        for b in [0.0, 0.5, 0.2] {
            adversary_answer(&mut tr, &cfg, &[b, 0.0]).unwrap();
        }
        let m = materialize(&mut tr, &cfg).unwrap();
        assert_eq!(m.params.breakpoints, vec![0.0, 0.2, 0.5]);
        assert!((m.params.sigma - 0.2).abs() < 1e-15);
        assert!((m.params.eta - 0.00625).abs() < 1e-15);
    }

    #[test]
    fn materialize_general_mode_axis_queries() {
        let cfg = AdversaryConfig::new(2, 3, AdversaryMode::General).unwrap();
        let mut tr = Transcript::new();
        adversary_answer(&mut tr, &cfg, &[0.0, 0.0, 0.0]).unwrap();
        adversary_answer(&mut tr, &cfg, &[0.5, 0.0, 0.0]).unwrap();
        let m = materialize(&mut tr, &cfg).unwrap();
        let plan = m.rotation.unwrap();
        assert_eq!(plan.u, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!(AdversaryConfig::new(3, 3, AdversaryMode::General).is_err());
    }

    #[test]
    fn non_axis_query_breaks_zero_respecting_consistency() {
        let cfg = AdversaryConfig::new(2, 2, AdversaryMode::Gzr).unwrap();
        let mut tr = Transcript::new();
        adversary_answer(&mut tr, &cfg, &[0.0, 0.0]).unwrap();
        adversary_answer(&mut tr, &cfg, &[0.5, 0.3]).unwrap();
        assert!(matches!(materialize(&mut tr, &cfg), Err(Error::InconsistentGerm { index: 2 })));
    }

    #[test]
    fn budget_and_empty() {
        let cfg = AdversaryConfig::new(1, 2, AdversaryMode::Gzr).unwrap();
        let mut tr = Transcript::new();
        assert!(materialize(&mut tr.clone(), &cfg).is_err());
        adversary_answer(&mut tr, &cfg, &[0.0, 0.0]).unwrap();
        assert!(matches!(adversary_answer(&mut tr, &cfg, &[1.0, 0.0]), Err(Error::QueryBudget(1))));
    }
}
