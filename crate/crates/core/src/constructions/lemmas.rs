//! Randomized and grid checks of the structural facts the wedge construction
//! relies on.
//!
//! Trials are split into fixed-size chunks; chunk `k` of check `j` draws from
//! its own ChaCha stream, so reports do not depend on the thread count.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_f, build_h, build_h_tilde, build_inner_wedge, build_wedge, ResistingParams};
use crate::error::{Error, Result};
use crate::pa_core::MaxMinFunction;
use crate::subdiff::{certify_gas, sample_ball};

const CHUNK: usize = 1024;

/// Trials of the (expensive) Goldstein hardness check are capped here.
pub const HARDNESS_TRIAL_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaStatus {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaOutcome {
    pub lemma: String,
    pub trials: usize,
    pub status: LemmaStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl LemmaOutcome {
    fn from_trials(lemma: &str, trials: usize, cex: Option<Vec<f64>>) -> Self {
        Self {
            lemma: lemma.to_string(),
            trials,
            status: if cex.is_none() {
                LemmaStatus::Pass
            } else {
                LemmaStatus::Fail
            },
            counterexample: cex,
            detail: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == LemmaStatus::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub params: ResistingParams,
    pub outcomes: Vec<LemmaOutcome>,
}

impl LemmaReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(LemmaOutcome::passed)
    }

    pub fn get(&self, lemma: &str) -> Option<&LemmaOutcome> {
        self.outcomes.iter().find(|o| o.lemma == lemma)
    }
}

/// Runs `check` on `trials` draws split into chunks; returns the first
/// counterexample in chunk order.
fn run_trials<F>(trials: usize, seed: u64, check_id: u64, check: F) -> Option<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Option<Vec<f64>> + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((check_id << 32) | k as u64);
            let n = CHUNK.min(trials - k * CHUNK);
            (0..n).find_map(|_| check(&mut rng))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .next()
}

/// The six unexpanded wedge atoms at `(x, y)`.
fn raw_atoms(eta: f64, x: f64, y: f64) -> [f64; 6] {
    [
        y - eta / 2.0,
        x + eta / 2.0,
        2.0 * y + eta,
        y / 2.0 + eta,
        -x + 5.0 * eta / 2.0,
        -eta / 2.0,
    ]
}

fn in_s2(c: &[f64; 6]) -> bool {
    c[1] <= c[2].min(c[3]) && c[4] <= c[5] && c[0] <= c[1].min(c[2]).min(c[3]) + c[4].min(c[5])
}

fn in_s3(c: &[f64; 6]) -> bool {
    c[0] <= c[1] + c[5] && c[1] <= c[2].min(c[3]) && c[4] >= c[5]
}

/// Draws a planar point around the wedge: half the draws at the wedge scale,
/// half on a wider box.
fn wedge_point(rng: &mut ChaCha8Rng, eta: f64) -> (f64, f64) {
    let s = if rng.random::<bool>() { 4.0 * eta } else { 40.0 * eta };
    (rng.random_range(-s..s), rng.random_range(-s..s))
}

/// Point with `H(x) >= -1`, concentrated near the breakpoint wedges.
fn high_point(rng: &mut ChaCha8Rng, params: &ResistingParams, h: &MaxMinFunction) -> Vec<f64> {
    let d = params.dimension;
    let b = &params.breakpoints;
    loop {
        let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if rng.random::<bool>() {
            let t = rng.random_range(0..b.len());
            x[0] = b[t] + rng.random_range(-4.0..4.0) * params.eta;
            x[1] = rng.random_range(-2.0..3.0) * params.eta;
        } else {
            x[0] = rng.random_range(b[0] - 1.5..b[b.len() - 1] + 1.5);
            x[1] = rng.random_range(-1.5..1.5);
        }
        if h.value(&x) >= -1.0 {
            return x;
        }
    }
}

/// Grid-plus-refinement minimum of `(t + (1-t) v1)^2 + (1-t)^2 v2^2` over
/// `[0,1] x [-1,0] x [1/2,2]`, with the minimizer.
pub fn numeric_floor() -> (f64, [f64; 3]) {
    let q = |p: [f64; 3]| {
        let (t, v1, v2) = (p[0], p[1], p[2]);
        (t + (1.0 - t) * v1).powi(2) + (1.0 - t).powi(2) * v2 * v2
    };
    let lo = [0.0, -1.0, 0.5];
    let hi = [1.0, 0.0, 2.0];
    let n = 60;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let p = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                    lo[2] + (hi[2] - lo[2]) * k as f64 / n as f64,
                ];
                let v = q(p);
                if v < best.0 {
                    best = (v, p);
                }
            }
        }
    }
    // Shrinking local grids around the incumbent, clamped to the box.
    let mut width: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]) / n as f64).collect();
    for _ in 0..60 {
        let centre = best.1;
        for i in -4..=4 {
            for j in -4..=4 {
                for k in -4..=4 {
                    let step = [i as f64, j as f64, k as f64];
                    let mut p = [0.0; 3];
                    for a in 0..3 {
                        p[a] = (centre[a] + step[a] * width[a] / 4.0).clamp(lo[a], hi[a]);
                    }
                    let v = q(p);
                    if v < best.0 {
                        best = (v, p);
                    }
                }
            }
        }
        for w in width.iter_mut() {
            *w *= 0.5;
        }
    }
    best
}

/// Runs every check on the construction built from `params`.
///
/// `trials` applies to each sampled check; the Goldstein hardness check uses
/// at most [`HARDNESS_TRIAL_CAP`] of them.
pub fn verify_lemmas(params: &ResistingParams, trials: usize, seed: u64) -> Result<LemmaReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    let eta = params.eta;
    let wedge = build_wedge(eta)?;
    let inner = build_inner_wedge(eta)?;
    let h = build_h(params)?;
    let h_tilde = build_h_tilde(params)?;
    let f = build_f(params)?;
    let b = &params.breakpoints;
    let d = params.dimension;
    let mut outcomes = Vec::new();

    let cex = run_trials(trials, seed, 1, |rng| {
        let (x, y) = wedge_point(rng, eta);
        in_s2(&raw_atoms(eta, x, y)).then(|| vec![x, y])
    });
    outcomes.push(LemmaOutcome::from_trials("s2", trials, cex));

    let cex = run_trials(trials, seed, 2, |rng| {
        let (x, y) = wedge_point(rng, eta);
        let c = raw_atoms(eta, x, y);
        let member = in_s3(&c);
        let closed = y - eta / 2.0 <= x && x <= eta / 2.0 + (2.0 * y).min(y / 2.0);
        let boxed = (-1.5 * eta..=1.5 * eta).contains(&x) && (-eta..=2.0 * eta).contains(&y);
        (member != closed || (member && !boxed)).then(|| vec![x, y])
    });
    outcomes.push(LemmaOutcome::from_trials("s3", trials, cex));

    let cex = run_trials(trials, seed, 3, |rng| {
        let (x, y) = wedge_point(rng, eta);
        if in_s3(&raw_atoms(eta, x, y)) {
            return None;
        }
        let g = wedge.gradient_if_smooth(&[x, y], 0.0)?;
        let ok = (-1.0..=0.0).contains(&g[0]) && (0.5..=2.0).contains(&g[1]);
        (!ok).then(|| vec![x, y])
    });
    outcomes.push(LemmaOutcome::from_trials("wedge1dprop", trials, cex));

    let nu = params.nu();
    let cex = run_trials(trials, seed, 4, |rng| {
        let t = rng.random_range(0..b.len());
        let y = sample_ball(rng, &[b[t], 0.0], nu);
        let own = inner.value(&[y[0] - b[t], y[1]]);
        let ceiling = y[1] - eta / 2.0;
        let others = b
            .iter()
            .enumerate()
            .filter(|(s, _)| *s != t)
            .map(|(_, bs)| inner.value(&[y[0] - bs, y[1]]))
            .fold(f64::NEG_INFINITY, f64::max);
        (!(own > ceiling && ceiling > others)).then_some(y)
    });
    outcomes.push(LemmaOutcome::from_trials("strictIneq", trials, cex));

    let radius = 2.0 / 17f64.sqrt();
    let cex = run_trials(trials, seed, 5, |rng| {
        let x = high_point(rng, params, &h);
        let y = sample_ball(rng, &x, radius);
        (h.value(&y) != h_tilde.value(&y)).then_some(y)
    });
    outcomes.push(LemmaOutcome::from_trials("HisHtilt", trials, cex));

    let cex = run_trials(trials, seed, 6, |rng| {
        let t = rng.random_range(0..b.len());
        let planar = sample_ball(rng, &[b[t], 0.0], nu);
        let mut y: Vec<f64> = (0..d).map(|_| rng.random_range(-100.0..100.0)).collect();
        y[0] = planar[0];
        y[1] = planar[1];
        ((h.value(&y) - f.value(&y)).abs() > 1e-12).then_some(y)
    });
    let mut his_f = LemmaOutcome::from_trials("HisF", trials, cex);
    let lip = h.lipschitz_certificate();
    let origin = vec![0.0; d];
    let drop = h.value(&origin) - super::PLATEAU;
    if lip > 3.0 || drop > 6.0 {
        his_f.status = LemmaStatus::Fail;
    }
    his_f.detail = Some(format!("lipschitz {lip}, H(0) - inf H = {drop}"));
    outcomes.push(his_f);

    let hard_trials = trials.min(HARDNESS_TRIAL_CAP);
    let floor = 1.0 / 17f64.sqrt();
    let failure = std::sync::Mutex::new(None::<Error>);
    let cex = run_trials(hard_trials, seed, 7, |rng| {
        let x = high_point(rng, params, &h);
        let delta = rng.random_range(1e-6..floor);
        match certify_gas(&h, &x, 0.0, delta) {
            Ok(c) => (c.distance < floor - 1e-8).then(|| {
                let mut v = x.clone();
                v.push(delta);
                v
            }),
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                Some(x)
            }
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    outcomes.push(LemmaOutcome::from_trials("noGAS-4", hard_trials, cex));

    let (value, at) = numeric_floor();
    let mut numeric = LemmaOutcome::from_trials(
        "numineq1",
        1,
        ((value - 1.0 / 17.0).abs() > 1e-6).then(|| at.to_vec()),
    );
    numeric.detail = Some(format!("minimum {value} at {at:?}"));
    outcomes.push(numeric);

    Ok(LemmaReport {
        seed,
        params: params.clone(),
        outcomes,
    })
}
