//! Experiment driver: runs an algorithm against the adversary or a frozen
//! function, replays it, certifies every iterate and writes the results.

mod emit;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use emit::{emit_results, write_csv};

use crate::algorithms::{
    gradient_sampling, gzr_check, run_with_oracle, Algorithm, DiminishingSubgradient, GzrCheck,
    HeavyBall, ProbingDescent, RunResult, SamplingParams, SubgradientDescent,
};
use crate::constructions::ResistingParams;
use crate::error::{Error, Result};
use crate::oracle::{
    adversary_answer, local_oracle, materialize, AdversaryConfig, AdversaryMode, GermView,
    Transcript,
};
use crate::pa_core::MaxMinFunction;

/// Distances at or above this count as "no progress" for the hardness verdict.
pub fn hardness_floor() -> f64 {
    1.0 / 17f64.sqrt() - 1e-8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    Gzr,
    General,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmId {
    Subgradient,
    Diminishing,
    HeavyBall,
    Probing,
    GradientSampling,
}

impl AlgorithmId {
    /// Germ-facing algorithms deterministic enough to be replayed query by query.
    pub const DETERMINISTIC: [AlgorithmId; 4] = [
        AlgorithmId::Subgradient,
        AlgorithmId::Diminishing,
        AlgorithmId::HeavyBall,
        AlgorithmId::Probing,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentVerdict {
    HardnessReproduced,
    AlgorithmEscaped,
    Converged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub algorithm: AlgorithmId,
    pub step: f64,
    pub momentum: f64,
    pub probe: f64,
    pub samples: usize,
    pub max_steps: usize,
    /// Step of the subgradient run that fixes the frozen function when the
    /// algorithm itself cannot play against the adversary.
    pub reference_step: f64,
    pub t: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<ExperimentVerdict>,
    /// Frozen mode only: load the function from this JSON file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: ExperimentMode::Gzr,
            algorithm: AlgorithmId::Subgradient,
            step: 0.25,
            momentum: 0.5,
            probe: 0.1,
            samples: 20,
            max_steps: 1000,
            reference_step: 1.0,
            t: 16,
            d: 2,
            epsilon: 0.2,
            delta: 0.2,
            seed: 0,
            out: None,
            expect: None,
            function: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.t == 0 {
            return bad("T must be positive".into());
        }
        if self.d < 2 {
            return bad("d must be at least 2".into());
        }
        if !(self.epsilon > 0.0 && self.delta > 0.0) {
            return bad("epsilon and delta must be positive".into());
        }
        let floor = 1.0 / 17f64.sqrt();
        match self.mode {
            ExperimentMode::Gzr | ExperimentMode::General => {
                if self.epsilon >= floor || self.delta >= floor {
                    return bad(format!("hardness runs need epsilon, delta < {floor}"));
                }
                if self.algorithm == AlgorithmId::GradientSampling {
                    return bad("gradient-sampling only runs in frozen mode".into());
                }
                if self.function.is_some() {
                    return bad("a function file is only used in frozen mode".into());
                }
            }
            ExperimentMode::Frozen => {}
        }
        if self.mode == ExperimentMode::General && self.d < self.t + 1 {
            return bad(format!("general mode needs d >= T + 1, got d = {}, T = {}", self.d, self.t));
        }
        if self.mode == ExperimentMode::Gzr && self.algorithm == AlgorithmId::Probing {
            return bad("probing is not zero-respecting; use general mode".into());
        }
        if self.algorithm == AlgorithmId::GradientSampling && self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if !(self.step > 0.0 && self.reference_step > 0.0) {
            return bad("steps must be positive".into());
        }
        Ok(())
    }

    /// The germ-facing algorithm, or `None` for gradient sampling.
    pub fn build_algorithm(&self) -> Option<Box<dyn Algorithm>> {
        Some(match self.algorithm {
            AlgorithmId::Subgradient => Box::new(SubgradientDescent::new(self.step)),
            AlgorithmId::Diminishing => Box::new(DiminishingSubgradient { step: self.step }),
            AlgorithmId::HeavyBall => Box::new(HeavyBall {
                step: self.step,
                momentum: self.momentum,
            }),
            AlgorithmId::Probing => Box::new(ProbingDescent {
                step: self.step,
                probe: self.probe,
            }),
            AlgorithmId::GradientSampling => return None,
        })
    }

    /// Applies the keys of a TOML document on top of `self`.
    pub fn merge_toml(&self, text: &str) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        base.extend(overrides);
        base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }
}

/// Where the evaluated function came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionDigest {
    pub mode: ExperimentMode,
    pub breakpoints: Vec<f64>,
    pub sigma: f64,
    pub eta: f64,
    pub dimension: usize,
    pub rotated: bool,
}

impl FunctionDigest {
    fn new(mode: ExperimentMode, p: &ResistingParams, rotated: bool) -> Self {
        Self {
            mode,
            breakpoints: p.breakpoints.clone(),
            sigma: p.sigma,
            eta: p.eta,
            dimension: p.dimension,
            rotated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub run: RunResult,
    /// `None` when the function was loaded from a file.
    pub digest: Option<FunctionDigest>,
    pub replay_verified: bool,
    pub gzr: Option<GzrCheck>,
    pub verdict: ExperimentVerdict,
    #[serde(skip)]
    pub function: Option<MaxMinFunction>,
    #[serde(skip)]
    pub transcript: Option<Transcript>,
}

impl ExperimentReport {
    /// Whether the verdict matches `config.expect` (true when unset).
    pub fn meets_expectation(&self) -> bool {
        self.config.expect.is_none_or(|e| e == self.verdict)
    }
}

fn verdict_for(run: &RunResult, replay_verified: bool) -> ExperimentVerdict {
    if run.converged {
        ExperimentVerdict::Converged
    } else if replay_verified && run.distances.iter().all(|d| *d >= hardness_floor()) {
        ExperimentVerdict::HardnessReproduced
    } else {
        ExperimentVerdict::AlgorithmEscaped
    }
}

/// First query (1-based) at which replaying `alg` against the local oracle
/// of `f` produces a different query or a different germ than recorded.
pub fn replay_divergence(transcript: &Transcript, f: &MaxMinFunction, alg: &dyn Algorithm) -> Result<Option<usize>> {
    let d = f.dimension();
    let mut history: Vec<(Vec<f64>, GermView)> = Vec::with_capacity(transcript.len());
    for (i, entry) in transcript.entries.iter().enumerate() {
        let x = alg.next_query(&history, d)?;
        if x != entry.query {
            return Ok(Some(i + 1));
        }
        let germ = local_oracle(f, &x)?.view;
        if germ != entry.view() {
            return Ok(Some(i + 1));
        }
        history.push((x, germ));
    }
    Ok(None)
}

/// Whether `alg` reproduces `transcript` query for query (and germ for
/// germ) against `f`.
pub fn replay_verify(transcript: &Transcript, f: &MaxMinFunction, alg: &dyn Algorithm) -> Result<bool> {
    Ok(replay_divergence(transcript, f, alg)?.is_none())
}

/// Plays `alg` against the adversary and returns the transcript and the
/// materialized function.
fn adversary_run(
    alg: &dyn Algorithm,
    t: usize,
    d: usize,
    mode: AdversaryMode,
) -> Result<(Transcript, crate::oracle::Materialized)> {
    let adv = AdversaryConfig::new(t, d, mode)?;
    let mut transcript = Transcript::new();
    run_with_oracle(alg, &mut |x: &[f64]| adversary_answer(&mut transcript, &adv, x), t, d)?;
    let mat = materialize(&mut transcript, &adv)?;
    Ok((transcript, mat))
}

/// Runs one experiment. Replay divergence of a deterministic algorithm is a
/// hard error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.mode {
        ExperimentMode::Gzr | ExperimentMode::General => adversarial(config),
        ExperimentMode::Frozen => frozen(config),
    }
}

fn adversarial(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let alg = config.build_algorithm().expect("validated");
    let mode = match config.mode {
        ExperimentMode::General => AdversaryMode::General,
        _ => AdversaryMode::Gzr,
    };
    let (transcript, mat) = adversary_run(alg.as_ref(), config.t, config.d, mode)?;
    if let Some(index) = replay_divergence(&transcript, &mat.function, alg.as_ref())? {
        return Err(Error::ReplayDivergence { index });
    }
    let trajectory = transcript.queries();
    let gzr = gzr_check(&mat.function, &trajectory)?;
    let run = RunResult::evaluate(&alg.name(), &mat.function, trajectory, config.epsilon, config.delta)?;
    Ok(ExperimentReport {
        config: config.clone(),
        verdict: verdict_for(&run, true),
        digest: Some(FunctionDigest::new(config.mode, &mat.params, mat.rotation.is_some())),
        replay_verified: true,
        gzr: Some(gzr),
        run,
        function: Some(mat.function),
        transcript: Some(transcript),
    })
}

/// The function frozen for a run: loaded from file, or materialized from a
/// zero-respecting adversary run of the configured algorithm (subgradient
/// descent with `reference_step` when that algorithm cannot play).
fn frozen_function(config: &ExperimentConfig) -> Result<(MaxMinFunction, Option<FunctionDigest>)> {
    if let Some(path) = &config.function {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f = MaxMinFunction::from_json(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if f.dimension() != config.d {
            return Err(Error::DimensionMismatch {
                expected: config.d,
                got: f.dimension(),
            });
        }
        return Ok((f, None));
    }
    let reference: Box<dyn Algorithm> = match config.build_algorithm() {
        Some(alg) if alg.is_zero_respecting() => alg,
        _ => Box::new(SubgradientDescent::new(config.reference_step)),
    };
    let (_, mat) = adversary_run(reference.as_ref(), config.t, config.d, AdversaryMode::Gzr)?;
    let digest = FunctionDigest::new(ExperimentMode::Frozen, &mat.params, false);
    Ok((mat.function, Some(digest)))
}

fn frozen(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let (f, digest) = frozen_function(config)?;
    let x0 = vec![0.0; config.d];
    let (run, replay_verified, transcript) = match config.build_algorithm() {
        None => {
            let params = SamplingParams {
                epsilon: config.epsilon,
                delta: config.delta,
                samples: config.samples,
                max_steps: config.max_steps,
                seed: config.seed,
            };
            let run = gradient_sampling(&f, &x0, &params)?;
            // Randomized: replay means the same seed gives the same run.
            let again = gradient_sampling(&f, &x0, &params)?;
            let same = again.trajectory == run.trajectory;
            (run, same, None)
        }
        Some(alg) => {
            let history = run_with_oracle(
                alg.as_ref(),
                &mut |x: &[f64]| local_oracle(&f, x).map(|g| g.view),
                config.t,
                config.d,
            )?;
            let mut transcript = Transcript::new();
            for (x, germ) in &history {
                transcript.push(x.clone(), germ)?;
            }
            if let Some(index) = replay_divergence(&transcript, &f, alg.as_ref())? {
                return Err(Error::ReplayDivergence { index });
            }
            let trajectory = transcript.queries();
            let run = RunResult::evaluate(&alg.name(), &f, trajectory, config.epsilon, config.delta)?;
            (run, true, Some(transcript))
        }
    };
    let gzr = match config.algorithm {
        AlgorithmId::GradientSampling => None,
        _ => Some(gzr_check(&f, &run.trajectory)?),
    };
    Ok(ExperimentReport {
        config: config.clone(),
        verdict: verdict_for(&run, replay_verified),
        digest,
        replay_verified,
        gzr,
        run,
        function: Some(f),
        transcript,
    })
}

/// Runs independent experiments in parallel, preserving order.
pub fn run_experiments(configs: &[ExperimentConfig]) -> Vec<Result<ExperimentReport>> {
    configs.par_iter().map(run_experiment).collect()
}
