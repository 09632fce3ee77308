use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contgreedy::{
    continuous_step_epsilon, covering_qualities, round_count, scaled_sum, draw_sample, dp_continuous_greedy, layer_indices, layered_step_epsilon,
    choose_layer, GreedyConfig, LayerConfig, LayerSource,
};
use crate::covering::Covering;
use crate::error::{Error, Result};
use crate::ksub::{
    candidate_values, dp_ksub_greedy, dp_ksub_greedy_sampled, ksub_candidates, make_kneighbor, KAssignment,
    KGreedyConfig, KRunResult, KSetFunction,
};
use crate::matroid::Matroid;
use crate::mech::{audit_single_step, compose_basic, PrivacyParams, AUDIT_TOL};
use crate::multilinear::{exact_gradient, FractionalPoint, GradientEstimate, GradientMode};
use crate::setfn::{make_neighbor, SetFunction};

#[derive(Clone, Debug, PartialEq)]
pub enum SetAuditAlgorithm {
    ContGreedy { covering: Covering, config: GreedyConfig },
    Layered { covering: Covering, config: GreedyConfig, layers: LayerConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KAuditAlgorithm {
    KSub { config: KGreedyConfig },
    KSubSampled { config: KGreedyConfig, gamma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Largest measured `|ln p − ln p'|` of each round, over all audited neighbours.
    pub per_step: Vec<f64>,
    /// Claimed per-round budget.
    pub bounds: Vec<f64>,
    pub max_ratio: f64,
    /// Basic composition of `per_step`.
    pub composed: f64,
    pub composed_bound: f64,
    pub neighbors: usize,
    pub passed: bool,
}

impl AuditReport {
    fn new(per_step: Vec<f64>, bounds: Vec<f64>, neighbors: usize) -> Self {
        let max_ratio = per_step.iter().copied().fold(0.0, f64::max);
        let composed = compose_basic(&per_step.iter().map(|&e| (e, 0.0)).collect::<Vec<_>>()).0;
        let composed_bound = bounds.iter().sum();
        let passed = per_step.iter().zip(&bounds).all(|(m, b)| *m <= b + AUDIT_TOL);
        AuditReport { per_step, bounds, max_ratio, composed, composed_bound, neighbors, passed }
    }

    fn merge(reports: Vec<AuditReport>) -> Result<AuditReport> {
        let first = reports.first().ok_or_else(|| Error::input("audit needs at least one neighbour"))?;
        let mut per_step = vec![0.0f64; first.per_step.len()];
        for r in &reports {
            if r.per_step.len() != per_step.len() {
                return Err(Error::invariant("coupled runs differ in length"));
            }
            per_step.iter_mut().zip(&r.per_step).for_each(|(a, b)| *a = a.max(*b));
        }
        Ok(AuditReport::new(per_step, first.bounds.clone(), reports.len()))
    }
}

fn require_finite(pp: &PrivacyParams) -> Result<()> {
    if pp.is_argmax() {
        return Err(Error::input("auditing needs a finite epsilon"));
    }
    Ok(())
}

fn exact(f: &SetFunction, x: &FractionalPoint) -> Result<GradientEstimate> {
    Ok(GradientEstimate { components: exact_gradient(f, x)?, mode: GradientMode::Exact })
}

fn require_exact(cfg: &GreedyConfig) -> Result<()> {
    if cfg.mode != GradientMode::Exact {
        return Err(Error::capability("auditing continuous greedy needs exact gradients"));
    }
    Ok(())
}

/// Replays the run on `f` and, at every visited state, compares the per-round output
/// distributions under `f` and `g` exactly.
pub fn audit_pair(alg: &SetAuditAlgorithm, f: &SetFunction, g: &SetFunction, m: &Matroid) -> Result<AuditReport> {
    match alg {
        SetAuditAlgorithm::ContGreedy { covering, config } => {
            require_finite(&config.privacy)?;
            require_exact(config)?;
            let run = dp_continuous_greedy(f, m, covering, config)?;
            let bound = continuous_step_epsilon(&config.privacy, m.rank());
            let mut per_step = Vec::with_capacity(run.rounds);
            for x in &run.trajectory[..run.rounds] {
                let q = covering_qualities(covering, &exact(f, x)?);
                let q2 = covering_qualities(covering, &exact(g, x)?);
                per_step.push(audit_single_step(&q, &q2, &config.privacy)?);
            }
            Ok(AuditReport::new(per_step, vec![bound; run.rounds], 1))
        }
        SetAuditAlgorithm::Layered { covering, config, layers } => {
            require_finite(&config.privacy)?;
            require_exact(config)?;
            if layers.source != LayerSource::Sampled {
                return Err(Error::capability("only the sampled layer source has a closed-form round distribution"));
            }
            let (per_step, _) = replay_layered(covering, config, layers, f, g, m)?;
            let bound = layered_step_epsilon(&config.privacy, m.rank(), layers.mu);
            Ok(AuditReport::new(per_step.clone(), vec![bound; per_step.len()], 1))
        }
    }
}

/// Given the round's sample, the sampled layer source picks sample position `j` with
/// probability `∝ exp(ε' w ⌊q_j/w⌋)`; the replay follows the draws of the run on `f`.
/// Returns the per-round log-ratios and the covering indices picked.
fn replay_layered(
    c: &Covering,
    cfg: &GreedyConfig,
    lcfg: &LayerConfig,
    f: &SetFunction,
    g: &SetFunction,
    m: &Matroid,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = m.ground_size();
    let rounds = round_count(cfg.rounds, m)?;
    let alpha = 1.0 / rounds as f64;
    let sample_size = lcfg.sample_size(m.rank());
    let scale = cfg.privacy.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sum = vec![0.0; n];
    let mut x = FractionalPoint::zeros(n);
    let (mut per_step, mut picks) = (Vec::with_capacity(rounds), Vec::with_capacity(rounds));
    let rounded = |q: &[f64]| -> Result<Vec<f64>> {
        let l = layer_indices(q, lcfg.mu)?;
        Ok(l.floors.iter().map(|&fl| fl as f64 * l.width).collect())
    };
    for _ in 0..rounds {
        let gf = exact_gradient(f, &x)?;
        let gg = exact_gradient(g, &x)?;
        let sample = draw_sample(c.len(), sample_size, lcfg.with_replacement, &mut rng);
        let dot = |grad: &[f64], i: usize| -> f64 { c.points()[i].coords().iter().zip(grad).map(|(a, b)| a * b).sum() };
        let q: Vec<f64> = sample.iter().map(|&i| dot(&gf, i)).collect();
        let q2: Vec<f64> = sample.iter().map(|&i| dot(&gg, i)).collect();
        per_step.push(if lcfg.width().is_infinite() { 0.0 } else { audit_single_step(&rounded(&q)?, &rounded(&q2)?, &cfg.privacy)? });
        let layers = layer_indices(&q, lcfg.mu)?;
        let layer = choose_layer(&layers.sizes(), scale, layers.width, &mut rng)? + 1;
        let members: Vec<usize> = (0..q.len()).filter(|&j| layers.index[j] == layer).collect();
        let pick = sample[members[rng.gen_range(0..members.len())]];
        picks.push(pick);
        sum.iter_mut().zip(c.points()[pick].coords()).for_each(|(s, v)| *s += v);
        x = scaled_sum(&sum, alpha)?;
    }
    Ok((per_step, picks))
}

/// Audits against `trials` neighbours of `f`'s dataset, each replacing record `index` with a
/// fresh draw.
pub fn audit_run<R: Rng + ?Sized>(
    alg: &SetAuditAlgorithm,
    f: &SetFunction,
    m: &Matroid,
    index: usize,
    trials: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    let reports = (0..trials)
        .map(|_| {
            let g = f.with_dataset(make_neighbor(f.dataset(), index, rng)?)?;
            audit_pair(alg, f, &g, m)
        })
        .collect::<Result<Vec<_>>>()?;
    AuditReport::merge(reports)
}

/// Rounds of a k-submodular run as `(state, candidate elements)` pairs.
fn ksub_rounds(m: &Matroid, run: &KRunResult, sampled: bool) -> Vec<(KAssignment, Vec<usize>)> {
    let mut x = KAssignment::empty(m.ground_size(), run.assignment.k());
    let mut samples = run.samples.iter();
    let mut out = Vec::with_capacity(run.chosen.len());
    for &(e, i) in &run.chosen {
        let lambda = ksub_candidates(m, &x);
        let elements = if sampled {
            // skip retried samples that missed Λ(x)
            samples
                .by_ref()
                .map(|r| lambda.iter().copied().filter(|&e| r.contains(e)).collect::<Vec<_>>())
                .find(|c| !c.is_empty())
                .unwrap_or_default()
        } else {
            lambda
        };
        out.push((x.clone(), elements));
        x.assign(e, i);
    }
    out
}

pub fn audit_ksub_pair(alg: &KAuditAlgorithm, f: &KSetFunction, g: &KSetFunction, m: &Matroid) -> Result<AuditReport> {
    let (config, run, sampled) = match alg {
        KAuditAlgorithm::KSub { config } => (config, dp_ksub_greedy(f, m, config)?, false),
        KAuditAlgorithm::KSubSampled { config, gamma } => (config, dp_ksub_greedy_sampled(f, m, *gamma, config)?, true),
    };
    require_finite(&config.privacy)?;
    let mut per_step = Vec::with_capacity(run.chosen.len());
    for (x, elements) in ksub_rounds(m, &run, sampled) {
        let q = candidate_values(f, &x, &elements);
        let q2 = candidate_values(g, &x, &elements);
        per_step.push(audit_single_step(&q, &q2, &config.privacy)?);
    }
    let bounds = vec![config.privacy.epsilon; per_step.len()];
    Ok(AuditReport::new(per_step, bounds, 1))
}

pub fn audit_ksub_run<R: Rng + ?Sized>(
    alg: &KAuditAlgorithm,
    f: &KSetFunction,
    m: &Matroid,
    index: usize,
    trials: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    let reports = (0..trials)
        .map(|_| {
            let g = f.with_dataset(make_kneighbor(f.dataset(), index, rng)?)?;
            audit_ksub_pair(alg, f, &g, m)
        })
        .collect::<Result<Vec<_>>>()?;
    AuditReport::merge(reports)
}
