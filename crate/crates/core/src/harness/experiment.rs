use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{brute_force_submodular, greedy_nonprivate};
use crate::contgreedy::{dp_continuous_greedy, dp_layered_greedy, GreedyConfig, GreedyResult, LayerConfig};
use crate::covering::{build_grid_covering, read_covering, Covering};
use crate::error::{Error, Result};
use crate::ksub::{brute_force_ksub, dp_ksub_greedy, dp_ksub_greedy_sampled, read_kinstance, KGreedyConfig, KRunResult, KSetFunction};
use crate::matroid::{read_matroid, Matroid};
use crate::mech::PrivacyParams;
use crate::multilinear::{exact_extension, GradientMode};
use crate::rounding::{decompose, swap_round};
use crate::setfn::{read_instance, SetFunction, ENUMERATION_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    ContGreedy,
    Layered,
    Ksub,
    KsubSampled,
    GreedyNonprivate,
    BruteForce,
}

fn default_delta_prime() -> f64 {
    1e-6
}

fn default_gamma() -> f64 {
    0.1
}

fn default_repeat() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: PathBuf,
    pub matroid: PathBuf,
    pub algorithm: Algorithm,
    /// `None` runs the noiseless argmax limit.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// `δ'` for the advanced-composition report.
    #[serde(default = "default_delta_prime")]
    pub delta_prime: f64,
    /// Overrides the family's declared sensitivity.
    #[serde(default)]
    pub sensitivity: Option<f64>,
    #[serde(default = "exact_mode")]
    pub mode: GradientMode,
    /// Grid covering radius; defaults to `0.5 √r(M)`.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Covering CSV to use instead of building a grid.
    #[serde(default)]
    pub covering: Option<PathBuf>,
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub layers: Option<LayerConfig>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub retries: usize,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
    #[serde(default)]
    pub seed: u64,
    /// Brute-force the optimum for ratio and gap reporting.
    #[serde(default)]
    pub with_opt: bool,
    /// Per-run cap on oracle calls.
    #[serde(default)]
    pub eval_budget: Option<u64>,
    #[serde(default)]
    pub record_scores: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

fn exact_mode() -> GradientMode {
    GradientMode::Exact
}

impl ExperimentConfig {
    pub fn new(instance: impl Into<PathBuf>, matroid: impl Into<PathBuf>, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            instance: instance.into(),
            matroid: matroid.into(),
            algorithm,
            epsilon: None,
            delta_prime: default_delta_prime(),
            sensitivity: None,
            mode: GradientMode::Exact,
            rho: None,
            covering: None,
            rounds: None,
            layers: None,
            gamma: default_gamma(),
            retries: 0,
            repeat: 1,
            seed: 0,
            with_opt: false,
            eval_budget: None,
            record_scores: false,
            out: None,
            csv: None,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), msg: e.to_string() })
    }

    fn validate(&self) -> Result<()> {
        if self.repeat == 0 {
            return Err(Error::input("repeat must be at least 1"));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::input(format!("epsilon must be positive and finite, got {e}")));
            }
        }
        if !(self.delta_prime > 0.0 && self.delta_prime < 1.0) {
            return Err(Error::input(format!("delta' must lie in (0,1), got {}", self.delta_prime)));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0) {
                return Err(Error::input(format!("rho must be positive, got {r}")));
            }
        }
        Ok(())
    }

    fn privacy(&self, sensitivity: f64) -> Result<PrivacyParams> {
        match self.epsilon {
            Some(e) => PrivacyParams::new(e, 0.0, sensitivity),
            None => PrivacyParams::argmax(sensitivity),
        }
    }
}

/// A loaded instance: plain submodular or k-submodular.
#[derive(Debug)]
pub enum InstanceData {
    Set(SetFunction),
    K(KSetFunction),
}

impl InstanceData {
    /// Dispatches on the header keyword; `ktopics` files are k-submodular.
    pub fn read(path: impl AsRef<Path>, sensitivity: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let first = text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).find(|l| !l.is_empty());
        if first.is_some_and(|l| l.starts_with("ktopics")) {
            let (ground, d) = read_kinstance(path)?;
            let f = match sensitivity {
                Some(s) => KSetFunction::with_sensitivity(ground, d, s)?,
                None => KSetFunction::new(ground, d)?,
            };
            Ok(InstanceData::K(f))
        } else {
            let f = read_instance(path)?;
            Ok(InstanceData::Set(match sensitivity {
                Some(s) => SetFunction::with_sensitivity(f.ground().clone(), f.dataset().clone(), s)?,
                None => f,
            }))
        }
    }

    pub fn ground(&self) -> &crate::setfn::GroundSet {
        match self {
            InstanceData::Set(f) => f.ground(),
            InstanceData::K(f) => f.ground(),
        }
    }

    pub fn sensitivity(&self) -> f64 {
        match self {
            InstanceData::Set(f) => f.sensitivity(),
            InstanceData::K(f) => f.sensitivity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub value: f64,
    /// `f(x)` of the fractional output, when small enough to compute exactly.
    pub fractional: Option<f64>,
    pub evaluations: u64,
    pub failed: bool,
    pub retries_used: usize,
    /// Element ids, suffixed with `:t<i>` for k-submodular outputs.
    pub solution: Vec<String>,
    pub privacy_basic: Option<(f64, f64)>,
    pub privacy_advanced: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub repeat: usize,
    pub sensitivity: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// Mean over runs that did not fail.
    pub success_mean: Option<f64>,
    pub opt: Option<f64>,
    /// `mean / OPT`.
    pub ratio: Option<f64>,
    /// `OPT − mean`.
    pub gap: Option<f64>,
    pub failures: usize,
    pub total_evaluations: u64,
    pub covering_size: Option<usize>,
    pub privacy_basic: Option<(f64, f64)>,
    pub privacy_advanced: Option<(f64, f64)>,
    pub runs: Vec<RunRecord>,
    /// Not part of the reproducible content.
    pub wall_time_ms: f64,
}

impl RunReport {
    pub fn values(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.value).collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    /// One row per run.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path).map_err(|e| Error::io(path, e))?)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "seed", "value", "fractional", "evaluations", "failed", "retries_used", "solution"])?;
        for r in &self.runs {
            out.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                r.value.to_string(),
                r.fractional.map(|v| v.to_string()).unwrap_or_default(),
                r.evaluations.to_string(),
                r.failed.to_string(),
                r.retries_used.to_string(),
                r.solution.join(" "),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Seed of repeat `i` is `seed + i` (wrapping).
pub fn derive_seeds(seed: u64, repeat: usize) -> Vec<u64> {
    (0..repeat as u64).map(|i| seed.wrapping_add(i)).collect()
}

struct Shared {
    matroid: Matroid,
    covering: Option<Covering>,
}

fn budgets(t: &crate::mech::MechanismTranscript, pp: &PrivacyParams, dp: f64) -> Result<(Option<(f64, f64)>, Option<(f64, f64)>)> {
    if pp.is_argmax() {
        return Ok((None, None));
    }
    Ok((Some(t.basic_budget()), Some(t.advanced_budget(dp)?)))
}

fn continuous_record(
    f: &SetFunction,
    sh: &Shared,
    res: GreedyResult,
    pp: &PrivacyParams,
    cfg: &ExperimentConfig,
    index: usize,
    seed: u64,
) -> Result<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let set = swap_round(&sh.matroid, &decompose(&sh.matroid, &res.x_final)?, &mut rng)?;
    let d = f.dataset();
    let fractional = if f.ground().len() <= ENUMERATION_CAP {
        let oracle = crate::setfn::FnOracle::new(f.ground().len(), |s| d.value(s));
        Some(exact_extension(&oracle, &res.x_final)?)
    } else {
        None
    };
    let (privacy_basic, privacy_advanced) = budgets(&res.transcript, pp, cfg.delta_prime)?;
    Ok(RunRecord {
        index,
        seed,
        value: d.value(set),
        fractional,
        evaluations: res.evaluations,
        failed: false,
        retries_used: 0,
        solution: f.ground().names(set),
        privacy_basic,
        privacy_advanced,
    })
}

fn k_record(f: &KSetFunction, res: KRunResult, pp: &PrivacyParams, cfg: &ExperimentConfig, index: usize, seed: u64) -> Result<RunRecord> {
    let (privacy_basic, privacy_advanced) = budgets(&res.transcript, pp, cfg.delta_prime)?;
    Ok(RunRecord {
        index,
        seed,
        value: f.dataset().value(&res.assignment),
        fractional: None,
        evaluations: res.evaluations,
        failed: res.failed,
        retries_used: res.retries_used,
        solution: res.assignment.named(f.ground()).into_iter().map(|(id, t)| format!("{id}:t{t}")).collect(),
        privacy_basic,
        privacy_advanced,
    })
}

fn run_once(inst: &InstanceData, sh: &Shared, cfg: &ExperimentConfig, index: usize, seed: u64) -> Result<RunRecord> {
    let pp = cfg.privacy(inst.sensitivity())?;
    let m = &sh.matroid;
    let wrong = || Error::input(format!("{:?} does not apply to this instance type", cfg.algorithm));
    match (cfg.algorithm, inst) {
        (Algorithm::ContGreedy | Algorithm::Layered, InstanceData::Set(f)) => {
            let c = sh.covering.as_ref().ok_or_else(|| Error::invariant("covering missing"))?;
            let gcfg = GreedyConfig { privacy: pp, mode: cfg.mode, rounds: cfg.rounds, seed, record_scores: cfg.record_scores };
            let res = if cfg.algorithm == Algorithm::Layered {
                let lcfg = match &cfg.layers {
                    Some(l) => l.clone(),
                    None => LayerConfig::new(1.0, 0.5, 0.1)?,
                };
                dp_layered_greedy(f, m, c, &gcfg, &lcfg)?
            } else {
                dp_continuous_greedy(f, m, c, &gcfg)?
            };
            continuous_record(f, sh, res, &pp, cfg, index, seed)
        }
        (Algorithm::Ksub | Algorithm::KsubSampled | Algorithm::GreedyNonprivate, InstanceData::K(f)) => {
            let privacy = if cfg.algorithm == Algorithm::GreedyNonprivate { PrivacyParams::argmax(f.sensitivity())? } else { pp };
            let kcfg = KGreedyConfig { privacy, seed, record_scores: cfg.record_scores, retries: cfg.retries };
            let res = if cfg.algorithm == Algorithm::KsubSampled {
                dp_ksub_greedy_sampled(f, m, cfg.gamma, &kcfg)?
            } else {
                dp_ksub_greedy(f, m, &kcfg)?
            };
            k_record(f, res, &privacy, cfg, index, seed)
        }
        (Algorithm::GreedyNonprivate, InstanceData::Set(f)) => {
            let d = f.dataset();
            let oracle = crate::setfn::FnOracle::new(f.ground().len(), |s| d.value(s));
            let (set, value, calls) = greedy_nonprivate(&oracle, m)?;
            Ok(RunRecord {
                index,
                seed,
                value,
                fractional: None,
                evaluations: calls,
                failed: false,
                retries_used: 0,
                solution: f.ground().names(set),
                privacy_basic: None,
                privacy_advanced: None,
            })
        }
        (Algorithm::BruteForce, InstanceData::Set(f)) => {
            let b = brute_force_submodular(f, m)?;
            Ok(RunRecord {
                index,
                seed,
                value: b.opt,
                fractional: None,
                evaluations: b.evaluated as u64,
                failed: false,
                retries_used: 0,
                solution: f.ground().names(b.best),
                privacy_basic: None,
                privacy_advanced: None,
            })
        }
        (Algorithm::BruteForce, InstanceData::K(f)) => {
            let b = brute_force_ksub(f, m)?;
            Ok(RunRecord {
                index,
                seed,
                value: b.opt,
                fractional: None,
                evaluations: b.evaluated as u64,
                failed: false,
                retries_used: 0,
                solution: b.best.named(f.ground()).into_iter().map(|(id, t)| format!("{id}:t{t}")).collect(),
                privacy_basic: None,
                privacy_advanced: None,
            })
        }
        _ => Err(wrong()),
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Loads the instance and matroid, runs `repeat` seeded repetitions in parallel and writes the
/// JSON report and CSV series when paths are configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let inst = InstanceData::read(&cfg.instance, cfg.sensitivity)?;
    let matroid = read_matroid(&cfg.matroid, inst.ground())?;
    let covering = match (cfg.algorithm, &inst) {
        (Algorithm::ContGreedy | Algorithm::Layered, InstanceData::Set(_)) => Some(match &cfg.covering {
            Some(p) => read_covering(p, inst.ground())?,
            None => build_grid_covering(&matroid, cfg.rho.unwrap_or(0.5 * (matroid.rank() as f64).sqrt()))?,
        }),
        _ => None,
    };
    let sh = Shared { matroid, covering };
    let runs = derive_seeds(cfg.seed, cfg.repeat)
        .into_par_iter()
        .enumerate()
        .map(|(i, seed)| run_once(&inst, &sh, cfg, i, seed))
        .collect::<Result<Vec<_>>>()?;
    if let Some(budget) = cfg.eval_budget {
        if let Some(r) = runs.iter().find(|r| r.evaluations > budget) {
            return Err(Error::capability(format!(
                "run {} used {} oracle calls, over the budget of {budget}",
                r.index, r.evaluations
            )));
        }
    }
    let opt = if cfg.with_opt || cfg.algorithm == Algorithm::BruteForce {
        Some(match &inst {
            InstanceData::Set(f) => brute_force_submodular(f, &sh.matroid)?.opt,
            InstanceData::K(f) => brute_force_ksub(f, &sh.matroid)?.opt,
        })
    } else {
        None
    };
    let values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let (mean, std_dev) = mean_sd(&values);
    let ok: Vec<f64> = runs.iter().filter(|r| !r.failed).map(|r| r.value).collect();
    let pick = |get: fn(&RunRecord) -> Option<(f64, f64)>| {
        runs.iter().filter_map(get).fold(None, |acc: Option<(f64, f64)>, (e, d)| match acc {
            Some((a, b)) => Some((a.max(e), b.max(d))),
            None => Some((e, d)),
        })
    };
    let report = RunReport {
        algorithm: cfg.algorithm,
        config: cfg.clone(),
        seed: cfg.seed,
        repeat: cfg.repeat,
        sensitivity: inst.sensitivity(),
        mean,
        std_dev,
        success_mean: (!ok.is_empty()).then(|| mean_sd(&ok).0),
        opt,
        ratio: opt.filter(|&o| o > 0.0).map(|o| mean / o),
        gap: opt.map(|o| o - mean),
        failures: runs.iter().filter(|r| r.failed).count(),
        total_evaluations: runs.iter().map(|r| r.evaluations).sum(),
        covering_size: sh.covering.as_ref().map(|c| c.len()),
        privacy_basic: pick(|r| r.privacy_basic),
        privacy_advanced: pick(|r| r.privacy_advanced),
        runs,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    if let Some(p) = &cfg.out {
        report.write_json(p)?;
    }
    if let Some(p) = &cfg.csv {
        report.write_csv(p)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn setup() -> (tempfile::TempDir, PathBuf, PathBuf, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let inst = write(dir.path(), "cov.txt", "coverage 4 4\nv1: u1 u2\nv2: u2\nv3: u3\nv4: u4 u1\n");
        let mat = write(dir.path(), "m.txt", "uniform 2\n");
        let kinst = write(dir.path(), "k.txt", "ktopics 2 4 3\nv1 t1: u1\nv1 t2: u2 u3\nv2 t1: u4\nv3 t2: u1 u4\n");
        (dir, inst, mat, kinst)
    }

    #[test]
    fn brute_force_has_ratio_one() {
        let (_d, inst, mat, kinst) = setup();
        for i in [inst, kinst] {
            let r = run_experiment(&ExperimentConfig::new(i, &mat, Algorithm::BruteForce)).unwrap();
            assert_eq!(r.ratio, Some(1.0));
            assert_eq!(r.gap, Some(0.0));
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let (d, inst, mat, kinst) = setup();
        let mut cfg = ExperimentConfig::new(&inst, &mat, Algorithm::ContGreedy);
        cfg.epsilon = Some(1.0);
        cfg.repeat = 4;
        cfg.seed = 9;
        cfg.with_opt = true;
        cfg.out = Some(d.path().join("r.json"));
        cfg.csv = Some(d.path().join("r.csv"));
        let mut a = run_experiment(&cfg).unwrap();
        let mut b = run_experiment(&cfg).unwrap();
        a.wall_time_ms = 0.0;
        b.wall_time_ms = 0.0;
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 4);
        assert_eq!(a.runs[2].seed, 11);
        assert_eq!(a.ratio.unwrap(), a.mean / a.opt.unwrap());
        let csv = std::fs::read_to_string(d.path().join("r.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        let json: RunReport = serde_json::from_str(&std::fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(json.runs, a.runs);

        let mut k = ExperimentConfig::new(&kinst, &mat, Algorithm::KsubSampled);
        k.epsilon = Some(2.0);
        k.repeat = 8;
        let (a, b) = (run_experiment(&k).unwrap(), run_experiment(&k).unwrap());
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.privacy_basic.map(|p| p.0), Some(4.0));
    }

    #[test]
    fn evaluation_counts_match_the_algorithms() {
        let (_d, inst, mat, _) = setup();
        let mut cfg = ExperimentConfig::new(&inst, &mat, Algorithm::ContGreedy);
        cfg.epsilon = Some(1.0);
        let r = run_experiment(&cfg).unwrap();
        let f = read_instance(&inst).unwrap();
        let m = read_matroid(&mat, f.ground()).unwrap();
        let c = build_grid_covering(&m, 0.5 * 2f64.sqrt()).unwrap();
        let direct = dp_continuous_greedy(&f, &m, &c, &GreedyConfig::new(PrivacyParams::new(1.0, 0.0, 0.25).unwrap(), GradientMode::Exact, 0)).unwrap();
        assert_eq!(r.runs[0].evaluations, direct.evaluations);
        assert_eq!(r.runs[0].fractional, Some(exact_extension(&f, &direct.x_final).unwrap()));
        cfg.eval_budget = Some(direct.evaluations - 1);
        assert!(matches!(run_experiment(&cfg), Err(Error::Capability(_))));
    }

    #[test]
    fn mismatched_algorithm_is_an_input_error() {
        let (_d, inst, mat, kinst) = setup();
        assert!(matches!(run_experiment(&ExperimentConfig::new(&inst, &mat, Algorithm::Ksub)), Err(Error::Input(_))));
        assert!(matches!(run_experiment(&ExperimentConfig::new(&kinst, &mat, Algorithm::Layered)), Err(Error::Input(_))));
        let mut cfg = ExperimentConfig::new(&inst, &mat, Algorithm::BruteForce);
        cfg.repeat = 0;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn missing_files_surface_paths() {
        let (d, inst, _, _) = setup();
        let err = run_experiment(&ExperimentConfig::new(&inst, d.path().join("nope.txt"), Algorithm::BruteForce)).unwrap_err();
        assert!(err.to_string().contains("nope.txt"), "{err}");
    }
}
