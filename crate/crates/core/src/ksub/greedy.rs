use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{KAssignment, KOracle};
use crate::error::{Error, Result};
use crate::matroid::Matroid;
use crate::mech::{exp_mechanism, MechanismTranscript, PrivacyParams};
use crate::setfn::ElementSet;

/// Most candidate resamplings allowed per round in retry mode.
pub const MAX_RETRIES: usize = 3;

/// Largest number of (support, labelling) pairs [`brute_force_ksub`] will evaluate.
pub const KBRUTE_CAP: usize = 1 << 22;

/// Relative slack when deciding whether an assignment attains the optimum.
const OPT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KGreedyConfig {
    pub privacy: PrivacyParams,
    pub seed: u64,
    pub record_scores: bool,
    /// Resamplings of `R` per round before the sampled variant gives up. Zero means stop-and-flag.
    pub retries: usize,
}

impl KGreedyConfig {
    pub fn new(privacy: PrivacyParams, seed: u64) -> Self {
        KGreedyConfig { privacy, seed, record_scores: false, retries: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KRunResult {
    pub assignment: KAssignment,
    /// `F(x)` at termination, taken from the last chosen candidate's quality.
    pub value: f64,
    /// `(element, topic)` picked in each round.
    pub chosen: Vec<(usize, usize)>,
    pub transcript: MechanismTranscript,
    pub failed: bool,
    /// The sampled sets `R_t`, one per attempt; empty for the full-candidate algorithm.
    pub samples: Vec<ElementSet>,
    pub retries_used: usize,
    /// Oracle calls made by the run.
    pub evaluations: u64,
}

/// `Λ(x) = {e ∉ supp(x) : supp(x) ∪ {e} ∈ I}` in ground-set order.
pub fn ksub_candidates(m: &Matroid, x: &KAssignment) -> Vec<usize> {
    let supp = x.support();
    (0..m.ground_size()).filter(|&e| !supp.contains(e) && m.is_independent(supp.with(e))).collect()
}

/// `F(x + (e, i))` for every `e` in `elements` and `i ∈ 1..=k`, element-major.
pub fn candidate_values<F: KOracle + ?Sized>(f: &F, x: &KAssignment, elements: &[usize]) -> Vec<f64> {
    let k = f.k();
    (0..elements.len() * k).into_par_iter().map(|j| f.value(&x.with(elements[j / k], j % k + 1))).collect()
}

/// `min{⌈(n − t + 1)/(r − t + 1) · ln(r/γ)⌉, n}` for round `t ∈ 1..=r`.
pub fn ksub_sample_size(n: usize, rank: usize, t: usize, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::input(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if t == 0 || t > rank || rank > n {
        return Err(Error::input(format!("round {t} outside 1..={rank} (ground size {n})")));
    }
    let raw = (n - t + 1) as f64 / (rank - t + 1) as f64 * (rank as f64 / gamma).ln();
    Ok((raw.ceil() as usize).min(n))
}

fn check_inputs<F: KOracle + ?Sized>(f: &F, m: &Matroid) -> Result<()> {
    if f.ground_size() != m.ground_size() {
        return Err(Error::input(format!(
            "function has {} elements, matroid has {}",
            f.ground_size(),
            m.ground_size()
        )));
    }
    if m.rank() == 0 {
        return Err(Error::input("matroid rank must be at least 1"));
    }
    Ok(())
}

struct Run {
    x: KAssignment,
    value: f64,
    chosen: Vec<(usize, usize)>,
    transcript: MechanismTranscript,
    evaluations: u64,
}

impl Run {
    fn new(n: usize, k: usize, record: bool) -> Self {
        Run { x: KAssignment::empty(n, k), value: 0.0, chosen: Vec::new(), transcript: MechanismTranscript::new(record), evaluations: 0 }
    }

    /// One exponential-mechanism round over `elements × [k]`.
    fn step<F: KOracle + ?Sized, R: Rng + ?Sized>(
        &mut self,
        f: &F,
        elements: &[usize],
        pp: &PrivacyParams,
        rng: &mut R,
    ) -> Result<()> {
        let k = f.k();
        let q = candidate_values(f, &self.x, elements);
        self.evaluations += q.len() as u64;
        let pick = exp_mechanism(&q, pp, rng)?;
        let (e, i) = (elements[pick / k], pick % k + 1);
        self.transcript.push(q.len(), pick, pp.epsilon, 0.0, &q);
        self.x.assign(e, i);
        self.value = q[pick];
        self.chosen.push((e, i));
        Ok(())
    }

    fn finish(self, failed: bool, samples: Vec<ElementSet>, retries_used: usize) -> KRunResult {
        KRunResult {
            assignment: self.x,
            value: self.value,
            chosen: self.chosen,
            transcript: self.transcript,
            failed,
            samples,
            retries_used,
            evaluations: self.evaluations,
        }
    }
}

/// Algorithm 3: `r(M)` rounds, each assigning one `(e, i)` with probability
/// `∝ exp(ε' F(x + (e, i)))` over `Λ(x) × [k]`.
pub fn dp_ksub_greedy<F: KOracle + ?Sized>(f: &F, m: &Matroid, cfg: &KGreedyConfig) -> Result<KRunResult> {
    check_inputs(f, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut run = Run::new(m.ground_size(), f.k(), cfg.record_scores);
    for t in 0..m.rank() {
        let lambda = ksub_candidates(m, &run.x);
        if lambda.is_empty() {
            return Err(Error::invariant(format!("no augmenting element after {t} of {} rounds", m.rank())));
        }
        run.step(f, &lambda, &cfg.privacy, &mut rng)?;
    }
    Ok(run.finish(false, Vec::new(), 0))
}

/// Algorithm 4: as [`dp_ksub_greedy`] but candidates are restricted to a uniform sample
/// `R ⊆ E \ supp(x)`. A round whose sample misses `Λ(x)` ends the run with `failed` set,
/// unless retries are enabled.
pub fn dp_ksub_greedy_sampled<F: KOracle + ?Sized>(
    f: &F,
    m: &Matroid,
    gamma: f64,
    cfg: &KGreedyConfig,
) -> Result<KRunResult> {
    check_inputs(f, m)?;
    if cfg.retries > MAX_RETRIES {
        return Err(Error::input(format!("at most {MAX_RETRIES} retries are allowed, got {}", cfg.retries)));
    }
    let (n, rank) = (m.ground_size(), m.rank());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut run = Run::new(n, f.k(), cfg.record_scores);
    let (mut samples, mut retries_used) = (Vec::new(), 0);
    for t in 1..=rank {
        let supp = run.x.support();
        let rest: Vec<usize> = (0..n).filter(|&e| !supp.contains(e)).collect();
        let size = ksub_sample_size(n, rank, t, gamma)?.min(rest.len());
        let mut attempt = 0;
        let elements = loop {
            let r: ElementSet = rest.choose_multiple(&mut rng, size).copied().collect();
            samples.push(r);
            let hit: Vec<usize> = r.iter().filter(|&e| m.is_independent(supp.with(e))).collect();
            if !hit.is_empty() {
                break hit;
            }
            if attempt == cfg.retries {
                return Ok(run.finish(true, samples, retries_used));
            }
            attempt += 1;
            retries_used += 1;
        };
        run.step(f, &elements, &cfg.privacy, &mut rng)?;
    }
    Ok(run.finish(false, samples, retries_used))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KBruteForce {
    pub best: KAssignment,
    pub opt: f64,
    /// Largest support among assignments attaining `opt`.
    pub max_optimal_support: usize,
    pub evaluated: usize,
}

/// Exact maximum of `F` over assignments with independent support.
pub fn brute_force_ksub<F: KOracle + ?Sized>(f: &F, m: &Matroid) -> Result<KBruteForce> {
    if f.ground_size() != m.ground_size() {
        return Err(Error::input(format!(
            "function has {} elements, matroid has {}",
            f.ground_size(),
            m.ground_size()
        )));
    }
    let (n, k) = (m.ground_size(), f.k());
    let sets = m.independent_sets()?;
    let total = sets.iter().try_fold(0usize, |acc, s| k.checked_pow(s.len() as u32).and_then(|c| acc.checked_add(c)));
    let total = total.filter(|&t| t <= KBRUTE_CAP).ok_or_else(|| {
        Error::capability(format!("brute force over independent supports exceeds {KBRUTE_CAP} assignments"))
    })?;
    let per_set: Vec<Vec<(KAssignment, f64)>> = sets
        .par_iter()
        .map(|&s| {
            let elems: Vec<usize> = s.iter().collect();
            (0..k.pow(elems.len() as u32))
                .map(|mut code| {
                    let mut x = KAssignment::empty(n, k);
                    for &e in &elems {
                        x.assign(e, code % k + 1);
                        code /= k;
                    }
                    let v = f.value(&x);
                    (x, v)
                })
                .collect()
        })
        .collect();
    let mut best: Option<(KAssignment, f64)> = None;
    for (x, v) in per_set.iter().flatten() {
        if best.as_ref().map_or(true, |(_, b)| *v > *b) {
            best = Some((x.clone(), *v));
        }
    }
    let (best, opt) = best.ok_or_else(|| Error::invariant("matroid has no independent sets"))?;
    let tol = OPT_TOL * opt.abs().max(1.0);
    let max_optimal_support =
        per_set.iter().flatten().filter(|(_, v)| *v >= opt - tol).map(|(x, _)| x.support().len()).max().unwrap_or(0);
    Ok(KBruteForce { best, opt, max_optimal_support, evaluated: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ksub::{KDataset, KFnOracle, KSetFunction};
    use crate::setfn::{Dataset, GroundSet, SetFunction, SetOracle};

    fn argmax_cfg(sens: f64) -> KGreedyConfig {
        KGreedyConfig::new(PrivacyParams::argmax(sens).unwrap(), 0)
    }

    fn ktopics(seed: u64, n: usize, k: usize) -> KSetFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = KDataset::random_ktopics(n, 3 * n, k, 2, &mut rng).unwrap();
        KSetFunction::new(GroundSet::numbered("u", n).unwrap(), d).unwrap()
    }

    fn matroids(n: usize) -> Vec<Matroid> {
        let half: Vec<usize> = (0..n / 2).collect();
        let rest: Vec<usize> = (n / 2..n).collect();
        vec![
            Matroid::uniform(n, 2).unwrap(),
            Matroid::uniform(n, 3).unwrap(),
            Matroid::partition(n, vec![(half, 1), (rest, 2)]).unwrap(),
            Matroid::graphic(4, vec![(0, 1), (1, 2), (2, 3), (0, 3), (0, 2), (1, 3)][..n.min(6)].to_vec()).unwrap(),
        ]
    }

    #[test]
    fn sample_size_examples() {
        assert_eq!(ksub_sample_size(100, 10, 1, 0.5).unwrap(), 30);
        // last round: (n - r + 1) · ln(r/γ)
        assert_eq!(ksub_sample_size(100, 10, 10, 0.5).unwrap(), 100);
        assert_eq!(ksub_sample_size(5, 1, 1, 0.9).unwrap(), 1);
        assert!(ksub_sample_size(5, 2, 0, 0.5).is_err());
        assert!(ksub_sample_size(5, 2, 1, 1.0).is_err());
        assert!(ksub_sample_size(5, 6, 1, 0.5).is_err());
    }

    #[test]
    fn support_size_family_reaches_any_base() {
        for m in matroids(6) {
            let f = KSetFunction::new(GroundSet::numbered("u", 6).unwrap(), KDataset::support_size(6, 2).unwrap()).unwrap();
            let r = dp_ksub_greedy(&f, &m, &argmax_cfg(f.sensitivity())).unwrap();
            assert!(m.is_base(r.assignment.support()));
            assert_eq!(r.value, m.rank() as f64 / 6.0);
            // all marginals tie, so the lexicographic rule picks topic 1 throughout
            assert!(r.chosen.iter().all(|&(_, i)| i == 1));
            assert_eq!(brute_force_ksub(&f, &m).unwrap().opt, m.rank() as f64 / 6.0);
        }
    }

    fn greedy_oracle<F: KOracle + ?Sized>(f: &F, m: &Matroid) -> f64 {
        // plain greedy with an explicit lexicographic argmax, written independently of the mechanism
        let mut x = KAssignment::empty(f.ground_size(), f.k());
        for _ in 0..m.rank() {
            let mut best: Option<(f64, usize, usize)> = None;
            for e in 0..f.ground_size() {
                if x.label(e) != 0 || !m.is_independent(x.support().with(e)) {
                    continue;
                }
                for i in 1..=f.k() {
                    let v = f.value(&x.with(e, i));
                    if best.map_or(true, |(b, _, _)| v > b) {
                        best = Some((v, e, i));
                    }
                }
            }
            let (_, e, i) = best.unwrap();
            x.assign(e, i);
        }
        f.value(&x)
    }

    #[test]
    fn argmax_mode_matches_greedy_and_half_opt() {
        for seed in 0..6 {
            let f = ktopics(seed, 5, 2);
            let m = Matroid::uniform(5, 2).unwrap();
            let r = dp_ksub_greedy(&f, &m, &argmax_cfg(f.sensitivity())).unwrap();
            assert_eq!(r.value, greedy_oracle(&f, &m));
            assert_eq!(r.value, f.dataset().value(&r.assignment));
            let b = brute_force_ksub(&f, &m).unwrap();
            assert!(r.value >= 0.5 * b.opt);
            assert_eq!(b.max_optimal_support, 2);
        }
    }

    #[test]
    fn single_topic_reduces_to_set_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let d = Dataset::random_coverage(6, 12, 3, &mut rng).unwrap();
            let sf = SetFunction::new(GroundSet::numbered("u", 6).unwrap(), d).unwrap();
            let kf = KFnOracle::new(6, 1, |x: &KAssignment| sf.value(x.support()));
            let m = Matroid::uniform(6, 3).unwrap();
            let r = dp_ksub_greedy(&kf, &m, &argmax_cfg(0.1)).unwrap();
            let mut s = ElementSet::EMPTY;
            for _ in 0..3 {
                let e = (0..6).filter(|&e| !s.contains(e)).fold(None, |b: Option<usize>, e| match b {
                    Some(b) if sf.value(s.with(b)) >= sf.value(s.with(e)) => Some(b),
                    _ => Some(e),
                });
                s = s.with(e.unwrap());
            }
            assert_eq!(r.assignment.support(), s);
            // brute force with k = 1 equals the best independent set
            let best = m.independent_sets().unwrap().into_iter().map(|s| sf.value(s)).fold(0.0, f64::max);
            assert_eq!(brute_force_ksub(&kf, &m).unwrap().opt, best);
        }
    }

    #[test]
    fn outputs_are_bases_and_counts_match() {
        for (j, m) in matroids(6).iter().enumerate() {
            for k in 1..=3 {
                let f = ktopics(j as u64 * 7 + k as u64, 6, k);
                for eps in [0.3, 3.0, f64::INFINITY] {
                    let cfg = KGreedyConfig::new(PrivacyParams::new(eps, 0.0, f.sensitivity()).unwrap(), 11);
                    f.reset_evaluations();
                    let r = dp_ksub_greedy(&f, m, &cfg).unwrap();
                    assert!(m.is_base(r.assignment.support()));
                    assert_eq!(r.transcript.len(), m.rank());
                    assert_eq!(f.evaluations(), r.evaluations);
                    assert!(r.evaluations <= (k * 6 * m.rank()) as u64);
                    let cands: usize = r.transcript.steps.iter().map(|s| s.n_candidates).sum();
                    assert_eq!(cands as u64, r.evaluations);
                    assert!(r.transcript.steps.iter().all(|s| s.eps_step == eps));
                }
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let f = ktopics(1, 6, 2);
        let m = Matroid::uniform(6, 3).unwrap();
        let cfg = KGreedyConfig::new(PrivacyParams::new(1.0, 0.0, f.sensitivity()).unwrap(), 42);
        assert_eq!(dp_ksub_greedy(&f, &m, &cfg).unwrap(), dp_ksub_greedy(&f, &m, &cfg).unwrap());
        assert_eq!(dp_ksub_greedy_sampled(&f, &m, 0.3, &cfg).unwrap(), dp_ksub_greedy_sampled(&f, &m, 0.3, &cfg).unwrap());
    }

    #[test]
    fn full_samples_behave_like_the_full_algorithm() {
        // γ tiny makes every sample the whole remaining ground set
        for seed in 0..4 {
            let f = ktopics(seed, 6, 2);
            let m = Matroid::uniform(6, 3).unwrap();
            let cfg = argmax_cfg(f.sensitivity());
            let a = dp_ksub_greedy(&f, &m, &cfg).unwrap();
            let b = dp_ksub_greedy_sampled(&f, &m, 1e-9, &cfg).unwrap();
            assert!(!b.failed);
            assert_eq!(a.assignment, b.assignment);
            assert_eq!(a.evaluations, b.evaluations);
        }
    }

    #[test]
    fn sampled_failure_rate_and_counts() {
        let n = 12;
        let m = Matroid::partition(n, vec![((0..4).collect(), 1), ((4..12).collect(), 3)]).unwrap();
        let f = ktopics(3, n, 2);
        let gamma = 0.3;
        let mut failures = 0;
        let runs = 2000;
        for seed in 0..runs {
            let cfg = KGreedyConfig::new(PrivacyParams::new(1.0, 0.0, f.sensitivity()).unwrap(), seed);
            let r = dp_ksub_greedy_sampled(&f, &m, gamma, &cfg).unwrap();
            let bound: usize = (1..=r.samples.len()).map(|t| 2 * ksub_sample_size(n, 4, t, gamma).unwrap()).sum();
            assert!(r.evaluations as usize <= bound);
            assert!(m.is_independent(r.assignment.support()));
            if r.failed {
                failures += 1;
            } else {
                assert!(m.is_base(r.assignment.support()));
                assert_eq!(r.samples.len(), 4);
            }
        }
        let rate = failures as f64 / runs as f64;
        assert!(rate <= gamma + 3.0 * (gamma / runs as f64).sqrt(), "failure rate {rate}");
    }

    #[test]
    fn retries_reduce_failures() {
        let n = 12;
        let m = Matroid::partition(n, vec![((0..1).collect(), 1), ((1..12).collect(), 1)]).unwrap();
        let f = ktopics(9, n, 1);
        let count = |retries| {
            (0..500)
                .filter(|&seed| {
                    let mut cfg = KGreedyConfig::new(PrivacyParams::new(1.0, 0.0, f.sensitivity()).unwrap(), seed);
                    cfg.retries = retries;
                    dp_ksub_greedy_sampled(&f, &m, 0.9, &cfg).unwrap().failed
                })
                .count()
        };
        let (plain, retried) = (count(0), count(3));
        assert!(retried < plain, "{retried} vs {plain}");
        let mut cfg = KGreedyConfig::new(PrivacyParams::new(1.0, 0.0, 0.1).unwrap(), 0);
        cfg.retries = 4;
        assert!(dp_ksub_greedy_sampled(&f, &m, 0.5, &cfg).is_err());
    }

    #[test]
    fn brute_force_micro_instance() {
        // two right vertices, three left elements, k = 2
        let recs = vec![
            crate::ksub::KRecord::Topics(vec![ElementSet::from_indices([0]), ElementSet::from_indices([1, 2])]),
            crate::ksub::KRecord::Topics(vec![ElementSet::from_indices([1]), ElementSet::from_indices([0])]),
        ];
        let d = KDataset::new(crate::ksub::KFamily::KTopicCoverage, 3, 2, recs).unwrap();
        let f = KSetFunction::new(GroundSet::numbered("u", 3).unwrap(), d).unwrap();
        let m = Matroid::uniform(3, 2).unwrap();
        let b = brute_force_ksub(&f, &m).unwrap();
        // independent enumeration over all 3^3 assignments
        let mut opt = 0.0f64;
        for code in 0..27usize {
            let labels: Vec<u8> = (0..3).map(|j| (code / 3usize.pow(j) % 3) as u8).collect();
            let x = KAssignment::from_labels(labels, 2).unwrap();
            if x.support().len() <= 2 {
                opt = opt.max(f.dataset().value(&x));
            }
        }
        assert_eq!(b.opt, opt);
        // every (element, topic) covers at most one (vertex, topic) pair, so two picks reach 2 of 4
        assert_eq!(b.opt, 0.5);
        assert_eq!(b.evaluated, 1 + 3 * 2 + 3 * 4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = ktopics(0, 4, 2);
        assert!(dp_ksub_greedy(&f, &Matroid::uniform(5, 2).unwrap(), &argmax_cfg(0.1)).is_err());
        assert!(dp_ksub_greedy(&f, &Matroid::uniform(4, 0).unwrap(), &argmax_cfg(0.1)).is_err());
        assert!(dp_ksub_greedy_sampled(&f, &Matroid::uniform(4, 2).unwrap(), 0.0, &argmax_cfg(0.1)).is_err());
    }
}
