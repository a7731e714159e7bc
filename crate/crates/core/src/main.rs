use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gaslab::constructions::{verify_lemmas, ResistingParams};
use gaslab::harness::{
    emit_results, replay_divergence, run_experiment, AlgorithmId, ExperimentConfig, ExperimentMode,
    ExperimentVerdict,
};
use gaslab::oracle::Transcript;
use gaslab::pa_core::MaxMinFunction;
use gaslab::Error;

/// Oracle lower-bound experiments for Goldstein stationarity.
#[derive(Parser)]
#[command(name = "gaslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a germ-facing algorithm against the adaptive adversary.
    Adversary(RunArgs),
    /// Run an algorithm on a fixed resisting function.
    Frozen(RunArgs),
    /// Monte Carlo checks of the construction's geometric facts.
    VerifyLemmas(LemmaArgs),
    /// Replay an algorithm against a function and compare with a transcript.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct AlgoArgs {
    #[arg(long = "algo", value_enum)]
    algo: Option<AlgorithmId>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    probe: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    mode: Option<ExperimentMode>,
    #[command(flatten)]
    algo: AlgoArgs,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    reference_step: Option<f64>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "eps")]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for trajectory.csv, report.json and friends.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    expect: Option<ExperimentVerdict>,
    /// Frozen mode: JSON function to run on instead of a fresh construction.
    #[arg(long)]
    function: Option<PathBuf>,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LemmaArgs {
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,-1,-2")]
    breakpoints: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    function: PathBuf,
    #[command(flatten)]
    algo: AlgoArgs,
}

/// Usage and configuration problems exit with 2, everything else with 1.
fn failure(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config(_)
        | Error::InvalidParams(_)
        | Error::Parse { .. }
        | Error::DimensionMismatch { .. }
        | Error::RotationDimension { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn apply_algo(c: &mut ExperimentConfig, a: &AlgoArgs) {
    if let Some(v) = a.algo {
        c.algorithm = v;
    }
    if let Some(v) = a.step {
        c.step = v;
    }
    if let Some(v) = a.momentum {
        c.momentum = v;
    }
    if let Some(v) = a.probe {
        c.probe = v;
    }
}

fn build_config(args: &RunArgs, frozen: bool) -> Result<ExperimentConfig, Error> {
    let mut c = ExperimentConfig::default();
    if let Some(m) = args.mode {
        c.mode = m;
    }
    if frozen {
        c.mode = ExperimentMode::Frozen;
        c.algorithm = AlgorithmId::GradientSampling;
        c.epsilon = 0.1;
    }
    apply_algo(&mut c, &args.algo);
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = args.$field.clone() { c.$field = v; } )* };
    }
    set!(samples, max_steps, reference_step, t, d, epsilon, delta, seed);
    if args.out.is_some() {
        c.out = args.out.clone();
    }
    if args.expect.is_some() {
        c.expect = args.expect;
    }
    if args.function.is_some() {
        c.function = args.function.clone();
    }
    if let Some(path) = &args.config {
        c = c.merge_toml(&read(path)?)?;
    }
    match (frozen, c.mode) {
        (true, ExperimentMode::Frozen) | (false, ExperimentMode::Gzr | ExperimentMode::General) => Ok(c),
        _ => Err(Error::Config(format!("mode {:?} does not fit this subcommand", c.mode))),
    }
}

fn run(args: &RunArgs, frozen: bool) -> ExitCode {
    let config = match build_config(args, frozen) {
        Ok(c) => c,
        Err(e) => return failure(&e),
    };
    let report = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => return failure(&e),
    };
    if let Some(dir) = &config.out {
        if let Err(e) = emit_results(&report, dir) {
            return failure(&e);
        }
    }
    println!(
        "verdict {} best_distance {:.16e} steps {} replay_verified {}",
        serde_json::to_string(&report.verdict).expect("enum").trim_matches('"'),
        report.run.best_distance,
        report.run.step_count,
        report.replay_verified
    );
    if report.meets_expectation() {
        ExitCode::SUCCESS
    } else {
        eprintln!("verdict does not match the expected one");
        ExitCode::from(1)
    }
}

fn lemmas(args: &LemmaArgs) -> ExitCode {
    let report = ResistingParams::from_first_coordinates(&args.breakpoints, args.d)
        .and_then(|p| verify_lemmas(&p, args.trials, args.seed));
    let report = match report {
        Ok(r) => r,
        Err(e) => return failure(&e),
    };
    for o in &report.outcomes {
        println!("{:<12} {:>8} {:?}", o.lemma, o.trials, o.status);
    }
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&report).expect("serializable");
        if let Err(source) = std::fs::write(path, text) {
            return failure(&Error::Io {
                path: path.clone(),
                source,
            });
        }
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn replay(args: &ReplayArgs) -> ExitCode {
    let loaded = read(&args.transcript)
        .and_then(|t| Transcript::from_json(&t))
        .and_then(|t| Ok((t, MaxMinFunction::from_json(&read(&args.function)?)?)));
    let (transcript, f) = match loaded {
        Ok(x) => x,
        Err(e) => return failure(&e),
    };
    let mut c = ExperimentConfig::default();
    apply_algo(&mut c, &args.algo);
    let Some(alg) = c.build_algorithm() else {
        return failure(&Error::Config("replay needs a deterministic algorithm".into()));
    };
    match replay_divergence(&transcript, &f, alg.as_ref()) {
        Ok(None) => {
            println!("replay verified ({} queries)", transcript.len());
            ExitCode::SUCCESS
        }
        Ok(Some(i)) => {
            println!("replay diverged at query {i}");
            ExitCode::from(1)
        }
        Err(e) => failure(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Adversary(a) => run(a, false),
        Command::Frozen(a) => run(a, true),
        Command::VerifyLemmas(a) => lemmas(a),
        Command::Replay(a) => replay(a),
    }
}
