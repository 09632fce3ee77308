//! `dp-submax`: run, audit and inspect differentially private submodular maximization.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dp_submax::contgreedy::{GreedyConfig, LayerConfig, LayerSource};
use dp_submax::covering::{build_grid_covering, read_covering, verify_covering, write_covering, Covering};
use dp_submax::harness::{
    audit_ksub_run, audit_run, run_experiment, Algorithm, AuditReport, ExperimentConfig, InstanceData, KAuditAlgorithm,
    RunReport, SetAuditAlgorithm,
};
use dp_submax::ksub::{check_kmonotone, meet_join_check, KGreedyConfig};
use dp_submax::matroid::read_matroid;
use dp_submax::mech::PrivacyParams;
use dp_submax::multilinear::{default_mc_samples, GradientMode};
use dp_submax::setfn::{check_monotone, check_submodular};
use dp_submax::{Error, Matroid, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const CHECK_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "dp-submax", version, about = "Differentially private submodular maximization under matroid constraints")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base seed; repeat i uses seed + i.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Per-run cap on oracle calls.
    #[arg(long, global = true)]
    eval_budget: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Source {
    Sampled,
    Full,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AuditTarget {
    ContGreedy,
    Layered,
    Ksub,
    KsubSampled,
}

#[derive(Subcommand)]
enum Command {
    /// DP continuous greedy with swap rounding.
    ContGreedy(ContArgs),
    /// Layered continuous greedy (same flags as cont-greedy).
    Layered(ContArgs),
    /// DP k-submodular greedy.
    Ksub(KsubArgs),
    /// Non-private greedy baseline.
    Greedy(Common),
    /// Exact optimum by enumeration.
    BruteForce(Common),
    /// Coupled per-round privacy audit against neighbouring datasets.
    Audit(AuditArgs),
    /// Build, verify or export grid coverings.
    #[command(subcommand)]
    Covering(CoveringCommand),
    /// Exhaustive function-property checks.
    Check(CheckArgs),
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    matroid: PathBuf,
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Overrides the declared sensitivity.
    #[arg(long)]
    sensitivity: Option<f64>,
}

#[derive(Args, Clone)]
struct Privacy {
    /// Privacy parameter ε.
    #[arg(long, required_unless_present = "argmax", conflicts_with = "argmax")]
    eps: Option<f64>,
    /// Noiseless limit: always take the best candidate.
    #[arg(long)]
    argmax: bool,
    /// δ' for advanced composition.
    #[arg(long, default_value_t = 1e-6)]
    delta_prime: f64,
    /// Brute-force OPT and report ratio and gap.
    #[arg(long)]
    with_opt: bool,
    /// Keep per-round quality vectors in the transcripts.
    #[arg(long)]
    record_scores: bool,
    /// Also write the per-run CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ContArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    privacy: Privacy,
    /// Covering radius (default 0.5·√r(M)).
    #[arg(long)]
    rho: Option<f64>,
    /// Covering CSV to use instead of building a grid.
    #[arg(long)]
    covering: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Monte-Carlo draws per gradient (default ⌈10 n ln n⌉).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Use the layered variant.
    #[arg(long)]
    layered: bool,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    /// Constant in the layer sample size.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, value_enum, default_value_t = Source::Sampled)]
    layer_source: Source,
    #[arg(long)]
    without_replacement: bool,
}

#[derive(Args, Clone)]
struct KsubArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    privacy: Privacy,
    /// Expected topic count; must match the instance.
    #[arg(long)]
    k: Option<usize>,
    /// Sample candidates each round.
    #[arg(long)]
    sampled: bool,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Resample up to this many times when a sample misses every feasible element.
    #[arg(long, default_value_t = 0)]
    retry: usize,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    matroid: PathBuf,
    #[arg(long, value_enum)]
    algorithm: AuditTarget,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    sensitivity: Option<f64>,
    /// Record replaced in each neighbour (0-based).
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Neighbouring datasets to draw.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
}

#[derive(Subcommand)]
enum CoveringCommand {
    /// Build a grid covering and write it as CSV (with a JSON sidecar) to --out.
    Build {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        matroid: PathBuf,
        #[arg(long)]
        rho: f64,
    },
    /// Check the covering radius on uniform polytope samples.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        matroid: PathBuf,
        /// Covering CSV; a grid at --rho is built when omitted.
        #[arg(long, required_unless_present = "rho")]
        covering: Option<PathBuf>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Print a stored covering as JSON.
    Export {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        covering: PathBuf,
    },
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    instance: PathBuf,
}

fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v).map_err(|e| Error::Serde(e.to_string()))? + "\n")
}

fn emit_report(g: &Global, r: &RunReport) -> Result<()> {
    match g.format {
        Format::Json => emit(g, &to_json(r)?),
        Format::Csv => {
            let mut buf = Vec::new();
            r.write_csv_to(&mut buf).map_err(|e| Error::Serde(e.to_string()))?;
            emit(g, &String::from_utf8(buf).map_err(|e| Error::Serde(e.to_string()))?)
        }
    }
}

fn emit_audit(g: &Global, r: &AuditReport) -> Result<()> {
    match g.format {
        Format::Json => emit(g, &to_json(r)?)?,
        Format::Csv => {
            let mut s = String::from("step,measured,bound\n");
            for (i, (m, b)) in r.per_step.iter().zip(&r.bounds).enumerate() {
                s += &format!("{},{m},{b}\n", i + 1);
            }
            emit(g, &s)?;
        }
    }
    if r.passed {
        Ok(())
    } else {
        Err(Error::invariant(format!("audit failed: max ratio {} exceeds a per-round bound", r.max_ratio)))
    }
}

fn base_config(g: &Global, c: &Common, alg: Algorithm) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(&c.instance, &c.matroid, alg);
    cfg.repeat = c.repeat;
    cfg.sensitivity = c.sensitivity;
    cfg.seed = g.seed;
    cfg.eval_budget = g.eval_budget;
    cfg
}

fn apply_privacy(cfg: &mut ExperimentConfig, p: &Privacy) {
    cfg.epsilon = if p.argmax { None } else { p.eps };
    cfg.delta_prime = p.delta_prime;
    cfg.with_opt = p.with_opt;
    cfg.record_scores = p.record_scores;
    cfg.csv = p.csv.clone();
}

fn gradient_mode(mode: Mode, samples: Option<usize>, n: usize) -> GradientMode {
    match mode {
        Mode::Exact => GradientMode::Exact,
        Mode::Mc => GradientMode::MonteCarlo { samples: samples.unwrap_or_else(|| default_mc_samples(n)) },
    }
}

fn layer_config(mu: f64, lambda: f64, theta: f64) -> Result<LayerConfig> {
    LayerConfig::new(mu, lambda, theta)
}

fn cont_greedy(g: &Global, a: &ContArgs, layered: bool) -> Result<()> {
    let alg = if layered || a.layered { Algorithm::Layered } else { Algorithm::ContGreedy };
    let mut cfg = base_config(g, &a.common, alg);
    apply_privacy(&mut cfg, &a.privacy);
    let n = InstanceData::read(&a.common.instance, None)?.ground().len();
    cfg.mode = gradient_mode(a.mode, a.samples, n);
    cfg.rho = a.rho;
    cfg.covering = a.covering.clone();
    cfg.rounds = a.rounds;
    if alg == Algorithm::Layered {
        let mut l = layer_config(a.mu, a.lambda, a.theta)?;
        if !(a.c > 0.0) {
            return Err(Error::input(format!("c must be positive, got {}", a.c)));
        }
        l.c = a.c;
        l.source = match a.layer_source {
            Source::Sampled => LayerSource::Sampled,
            Source::Full => LayerSource::Full,
        };
        l.with_replacement = !a.without_replacement;
        cfg.layers = Some(l);
    }
    emit_report(g, &run_experiment(&cfg)?)
}

fn ksub(g: &Global, a: &KsubArgs) -> Result<()> {
    let alg = if a.sampled { Algorithm::KsubSampled } else { Algorithm::Ksub };
    let mut cfg = base_config(g, &a.common, alg);
    apply_privacy(&mut cfg, &a.privacy);
    cfg.gamma = a.gamma;
    cfg.retries = a.retry;
    if let Some(k) = a.k {
        match InstanceData::read(&a.common.instance, None)? {
            InstanceData::K(f) if f.dataset().k() != k => {
                return Err(Error::input(format!("--k {k} does not match the instance's {} topics", f.dataset().k())))
            }
            InstanceData::Set(_) => return Err(Error::input("ksub needs a ktopics instance")),
            _ => {}
        }
    }
    emit_report(g, &run_experiment(&cfg)?)
}

fn load(instance: &Path, matroid: &Path, sensitivity: Option<f64>) -> Result<(InstanceData, Matroid)> {
    let inst = InstanceData::read(instance, sensitivity)?;
    let m = read_matroid(matroid, inst.ground())?;
    Ok((inst, m))
}

fn default_rho(m: &Matroid) -> f64 {
    0.5 * (m.rank() as f64).sqrt()
}

fn audit(g: &Global, a: &AuditArgs) -> Result<()> {
    let (inst, m) = load(&a.instance, &a.matroid, a.sensitivity)?;
    let pp = PrivacyParams::new(a.eps, 0.0, inst.sensitivity())?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let report = match (a.algorithm, &inst) {
        (AuditTarget::ContGreedy | AuditTarget::Layered, InstanceData::Set(f)) => {
            let covering = build_grid_covering(&m, a.rho.unwrap_or_else(|| default_rho(&m)))?;
            let config = GreedyConfig::new(pp, GradientMode::Exact, g.seed);
            let alg = if a.algorithm == AuditTarget::Layered {
                SetAuditAlgorithm::Layered { covering, config, layers: layer_config(a.mu, a.lambda, a.theta)? }
            } else {
                SetAuditAlgorithm::ContGreedy { covering, config }
            };
            audit_run(&alg, f, &m, a.index, a.trials, &mut rng)?
        }
        (AuditTarget::Ksub | AuditTarget::KsubSampled, InstanceData::K(f)) => {
            let config = KGreedyConfig::new(pp, g.seed);
            let alg = if a.algorithm == AuditTarget::KsubSampled {
                KAuditAlgorithm::KSubSampled { config, gamma: a.gamma }
            } else {
                KAuditAlgorithm::KSub { config }
            };
            audit_ksub_run(&alg, f, &m, a.index, a.trials, &mut rng)?
        }
        _ => return Err(Error::input("audit algorithm does not match the instance type")),
    };
    emit_audit(g, &report)
}

fn covering(g: &Global, c: &CoveringCommand) -> Result<()> {
    match c {
        CoveringCommand::Build { instance, matroid, rho } => {
            let (inst, m) = load(instance, matroid, None)?;
            let cov = build_grid_covering(&m, *rho)?;
            let out = g.out.as_ref().ok_or_else(|| Error::input("covering build needs --out <csv>"))?;
            write_covering(&cov, inst.ground(), out)?;
            eprintln!("{} points, rho {}", cov.len(), cov.rho());
            Ok(())
        }
        CoveringCommand::Verify { instance, matroid, covering, rho, samples } => {
            let (inst, m) = load(instance, matroid, None)?;
            let cov: Covering = match covering {
                Some(p) => read_covering(p, inst.ground())?,
                None => build_grid_covering(&m, rho.unwrap_or_else(|| default_rho(&m)))?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            let check = verify_covering(&cov, &m, *samples, &mut rng)?;
            emit(g, &to_json(&json!({ "points": cov.len(), "check": check }))?)?;
            if check.passed {
                Ok(())
            } else {
                Err(Error::invariant(format!("covering radius {} exceeds rho {}", check.max_distance, check.rho)))
            }
        }
        CoveringCommand::Export { instance, covering } => {
            let inst = InstanceData::read(instance, None)?;
            let cov = read_covering(covering, inst.ground())?;
            let points: Vec<&[f64]> = cov.points().iter().map(|p| p.coords()).collect();
            emit(g, &to_json(&json!({ "ids": inst.ground().ids(), "rho": cov.rho(), "points": points }))?)
        }
    }
}

fn check(g: &Global, a: &CheckArgs) -> Result<()> {
    let inst = InstanceData::read(&a.instance, None)?;
    let (rows, ok) = match &inst {
        InstanceData::Set(f) => {
            let mono = check_monotone(f, CHECK_TOL)?;
            let sub = check_submodular(f, CHECK_TOL)?;
            let ok = mono.is_none() && sub.is_none();
            (json!({ "family": f.family().to_string(), "n": f.ground().len(), "monotone": mono.is_none(),
                     "submodular": sub.is_none(), "violations": [mono, sub] }), ok)
        }
        InstanceData::K(f) => {
            let mono = check_kmonotone(f, CHECK_TOL)?;
            let kj = meet_join_check(f, CHECK_TOL)?;
            let ok = mono.is_none() && kj.is_none();
            (json!({ "family": f.family().to_string(), "n": f.ground().len(), "k": f.dataset().k(),
                     "monotone": mono.is_none(), "k_submodular": kj.is_none(), "violations": [mono, kj] }), ok)
        }
    };
    match g.format {
        Format::Json => emit(g, &to_json(&rows)?)?,
        Format::Csv => {
            let props: Vec<String> = rows
                .as_object()
                .unwrap()
                .iter()
                .filter_map(|(k, v)| v.as_bool().map(|b| format!("{k},{b}\n")))
                .collect();
            emit(g, &(String::from("property,holds\n") + &props.concat()))?
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Error::invariant("function property check failed"))
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::ContGreedy(a) => cont_greedy(g, a, false),
        Command::Layered(a) => cont_greedy(g, a, true),
        Command::Ksub(a) => ksub(g, a),
        Command::Greedy(c) => emit_report(g, &run_experiment(&base_config(g, c, Algorithm::GreedyNonprivate))?),
        Command::BruteForce(c) => emit_report(g, &run_experiment(&base_config(g, c, Algorithm::BruteForce))?),
        Command::Audit(a) => audit(g, a),
        Command::Covering(c) => covering(g, c),
        Command::Check(a) => check(g, a),
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::read(config)?;
            if let Some(b) = g.eval_budget {
                cfg.eval_budget = Some(b);
            }
            emit_report(g, &run_experiment(&cfg)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dp-submax: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
