//! Layered sampling: bucket covering points by `⌊<y, ∇f>/ln(1+μ)⌋`, estimate bucket sizes from
//! a uniform sample, pick a bucket with weight `L̃_i (1+μ)^{ε'(i−1)}`, then a point inside it.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_inputs, covering_qualities, round_count, scaled_sum, Counted, GreedyConfig, GreedyResult};
use crate::covering::Covering;
use crate::error::{Error, Result};
use crate::matroid::Matroid;
use crate::mech::{sample_from_log_weights, MechanismTranscript, PrivacyParams};
use crate::multilinear::{gradient, FractionalPoint, GradientEstimate};
use crate::setfn::SetOracle;

/// Where the final point of a round is drawn from once a layer is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerSource {
    /// Uniform over the sampled points in the layer.
    #[default]
    Sampled,
    /// Uniform over the whole layer; scores every covering point each round.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub mu: f64,
    pub lambda: f64,
    pub theta: f64,
    /// Constant in `m = ⌈c ln(k/θ)/λ²⌉`.
    pub c: f64,
    pub source: LayerSource,
    pub with_replacement: bool,
}

impl LayerConfig {
    pub fn new(mu: f64, lambda: f64, theta: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::input(format!("mu must be positive, got {mu}")));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::input(format!("lambda must lie in (0,1], got {lambda}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::input(format!("theta must lie in (0,1), got {theta}")));
        }
        Ok(LayerConfig { mu, lambda, theta, c: 1.0, source: LayerSource::Sampled, with_replacement: true })
    }

    /// Layer width `ln(1+μ)` in quality units.
    pub fn width(&self) -> f64 {
        self.mu.ln_1p()
    }

    /// Layer-count bound used for the sample size: qualities of a monotone `F` with values in
    /// `[0,1]` lie in `[0, r(M)]`.
    pub fn layer_bound(&self, rank: usize) -> usize {
        let w = self.width();
        if w.is_infinite() {
            1
        } else {
            (rank as f64 / w).ceil() as usize + 1
        }
    }

    pub fn sample_size(&self, rank: usize) -> usize {
        layer_sample_size(self.layer_bound(rank), self.theta, self.lambda, self.c)
    }
}

/// `⌈c ln(k/θ)/λ²⌉`, at least 1.
pub fn layer_sample_size(k_layers: usize, theta: f64, lambda: f64, c: f64) -> usize {
    let m = (c * (k_layers.max(1) as f64 / theta).ln() / (lambda * lambda)).ceil();
    if m.is_finite() && m >= 1.0 {
        m as usize
    } else {
        1
    }
}

/// Privacy loss of one layered round with sampled-point selection. Given the sample, a point is
/// chosen with probability `∝ exp(ε' w ⌊q/w⌋)`; the rounded quality moves by less than
/// `2Δ r(M) + w` between neighbouring datasets.
pub fn layered_step_epsilon(pp: &PrivacyParams, rank: usize, mu: f64) -> f64 {
    let w = mu.ln_1p();
    if w.is_infinite() {
        return 0.0;
    }
    2.0 * pp.epsilon * rank as f64 + pp.epsilon * w / pp.sensitivity
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layers {
    /// 1-based layer of each point.
    pub index: Vec<usize>,
    /// `⌊q/ln(1+μ)⌋` of each point (0 when `μ = ∞`).
    pub floors: Vec<i64>,
    pub k_layers: usize,
    /// `(q_max − q_min)/ln(1+μ)` before rounding.
    pub span: f64,
    pub width: f64,
}

impl Layers {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k_layers];
        self.index.iter().for_each(|&i| s[i - 1] += 1);
        s
    }

    /// Exact layer-choice probabilities `Z̃_i/Z̃` from these sizes at score scale `scale`.
    pub fn choice_probabilities(&self, scale: f64) -> Vec<f64> {
        let lw = layer_log_weights(&self.sizes(), scale, self.width);
        if scale.is_infinite() {
            let top = lw.iter().rposition(|w| w.is_finite()).unwrap_or(0);
            return (0..lw.len()).map(|i| if i == top { 1.0 } else { 0.0 }).collect();
        }
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|v| (v - top).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }
}

/// Layers of a quality vector.
pub fn layer_indices(q: &[f64], mu: f64) -> Result<Layers> {
    if !(mu > 0.0) {
        return Err(Error::input(format!("mu must be positive, got {mu}")));
    }
    if q.is_empty() {
        return Err(Error::input("cannot layer an empty point set"));
    }
    if let Some(v) = q.iter().find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite quality {v}")));
    }
    let width = mu.ln_1p();
    if width.is_infinite() {
        return Ok(Layers { index: vec![1; q.len()], floors: vec![0; q.len()], k_layers: 1, span: 0.0, width });
    }
    let floors: Vec<i64> = q.iter().map(|v| (v / width).floor() as i64).collect();
    let lo = *floors.iter().min().unwrap();
    let index: Vec<usize> = floors.iter().map(|f| (f - lo) as usize + 1).collect();
    let k_layers = *index.iter().max().unwrap();
    let (qmin, qmax) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(Layers { index, floors, k_layers, span: (qmax - qmin) / width, width })
}

/// Layers of a covering under a gradient.
pub fn build_layers(c: &Covering, grad: &GradientEstimate, mu: f64) -> Result<Layers> {
    layer_indices(&covering_qualities(c, grad), mu)
}

/// `ln(size_i) + ε' w (i−1)`; empty layers get `-∞`.
fn layer_log_weights(sizes: &[usize], scale: f64, width: f64) -> Vec<f64> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if s == 0 {
                f64::NEG_INFINITY
            } else if i == 0 {
                (s as f64).ln()
            } else {
                (s as f64).ln() + scale * width * i as f64
            }
        })
        .collect()
}

/// Draws a 0-based layer position from sizes; `scale = ∞` takes the highest nonempty layer.
pub fn choose_layer<R: Rng + ?Sized>(sizes: &[usize], scale: f64, width: f64, rng: &mut R) -> Result<usize> {
    if scale.is_infinite() {
        return sizes.iter().rposition(|&s| s > 0).ok_or_else(|| Error::input("all layers are empty"));
    }
    sample_from_log_weights(&layer_log_weights(sizes, scale, width), rng)
}

pub(crate) fn draw_sample<R: Rng + ?Sized>(len: usize, m: usize, with_replacement: bool, rng: &mut R) -> Vec<usize> {
    if with_replacement {
        (0..m).map(|_| rng.gen_range(0..len)).collect()
    } else if m >= len {
        (0..len).collect()
    } else {
        index::sample(rng, len, m).into_vec()
    }
}

/// Algorithm 2. Each round scores only the sampled points (unless the layer source is
/// [`LayerSource::Full`]); the transcript records `|C'|` candidates per round.
pub fn dp_layered_greedy<F: SetOracle + ?Sized>(
    f: &F,
    m: &Matroid,
    c: &Covering,
    cfg: &GreedyConfig,
    lcfg: &LayerConfig,
) -> Result<GreedyResult> {
    check_inputs(f, m, c)?;
    let counted = Counted::new(f);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = m.ground_size();
    let rounds = round_count(cfg.rounds, m)?;
    let alpha = if rounds == 0 { 0.0 } else { 1.0 / rounds as f64 };
    let sample_size = lcfg.sample_size(m.rank());
    let scale = cfg.privacy.scale();
    let eps_step = layered_step_epsilon(&cfg.privacy, m.rank(), lcfg.mu);
    let mut transcript = MechanismTranscript::new(cfg.record_scores);
    let mut sum = vec![0.0; n];
    let mut x = FractionalPoint::zeros(n);
    let mut trajectory = vec![x.clone()];
    let (mut chosen, mut directions, mut quality_evaluations) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..rounds {
        let g = gradient(&counted, &x, cfg.mode, &mut rng)?;
        let sample = draw_sample(c.len(), sample_size, lcfg.with_replacement, &mut rng);
        let dot = |i: usize| -> f64 { c.points()[i].coords().iter().zip(&g.components).map(|(a, b)| a * b).sum() };
        let (pick, scores, evaluated) = match lcfg.source {
            LayerSource::Sampled => {
                let q: Vec<f64> = sample.iter().map(|&i| dot(i)).collect();
                let layers = layer_indices(&q, lcfg.mu)?;
                let layer = choose_layer(&layers.sizes(), scale, layers.width, &mut rng)? + 1;
                let members: Vec<usize> = (0..q.len()).filter(|&j| layers.index[j] == layer).collect();
                let j = members[rng.gen_range(0..members.len())];
                (sample[j], q, sample.len())
            }
            LayerSource::Full => {
                let q_all = covering_qualities(c, &g);
                let all = layer_indices(&q_all, lcfg.mu)?;
                // estimated sizes keyed by absolute floor, from the sample
                let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
                sample.iter().for_each(|&i| *counts.entry(all.floors[i]).or_default() += 1);
                let lo = *counts.keys().next().unwrap();
                let hi = *counts.keys().next_back().unwrap();
                let sizes: Vec<usize> = (lo..=hi).map(|fl| counts.get(&fl).copied().unwrap_or(0)).collect();
                let floor = lo + choose_layer(&sizes, scale, all.width, &mut rng)? as i64;
                let members: Vec<usize> = (0..c.len()).filter(|&i| all.floors[i] == floor).collect();
                let i = members[rng.gen_range(0..members.len())];
                (i, sample.iter().map(|&i| q_all[i]).collect(), c.len())
            }
        };
        transcript.push(sample.len(), pick, eps_step, 0.0, &scores);
        quality_evaluations.push(evaluated);
        let y = c.points()[pick].clone();
        sum.iter_mut().zip(y.coords()).for_each(|(s, v)| *s += v);
        x = scaled_sum(&sum, alpha)?;
        trajectory.push(x.clone());
        chosen.push(pick);
        directions.push(y);
    }
    Ok(GreedyResult {
        x_final: x,
        trajectory,
        chosen,
        directions,
        alpha,
        rounds,
        mode: cfg.mode,
        transcript,
        evaluations: counted.calls(),
        quality_evaluations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub sample_size: usize,
    pub k_layers: usize,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
}

/// Repeats the layer-size estimator (sampling with replacement, `m` from the exact layer count)
/// and counts trials where some layer's estimated fraction is off by more than `λ`.
pub fn estimation_error_check<R: Rng + ?Sized>(
    q: &[f64],
    mu: f64,
    lambda: f64,
    theta: f64,
    c: f64,
    trials: usize,
    rng: &mut R,
) -> Result<EstimationReport> {
    let layers = layer_indices(q, mu)?;
    let m = layer_sample_size(layers.k_layers, theta, lambda, c);
    let truth: Vec<f64> = layers.sizes().iter().map(|&s| s as f64 / q.len() as f64).collect();
    let mut failures = 0;
    let mut counts = vec![0usize; layers.k_layers];
    for _ in 0..trials {
        counts.iter_mut().for_each(|v| *v = 0);
        for _ in 0..m {
            counts[layers.index[rng.gen_range(0..q.len())] - 1] += 1;
        }
        if counts.iter().zip(&truth).any(|(&k, &t)| (k as f64 / m as f64 - t).abs() > lambda) {
            failures += 1;
        }
    }
    let failure_rate = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
    Ok(EstimationReport { sample_size: m, k_layers: layers.k_layers, trials, failures, failure_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::build_grid_covering;
    use crate::matroid::POLYTOPE_TOL;
    use crate::mech::total_variation;
    use crate::multilinear::{exact_gradient, GradientMode};
    use crate::setfn::{make_neighbor, Dataset, GroundSet, SetFunction};

    fn random_coverage(seed: u64, n: usize) -> SetFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Dataset::random_coverage(n, 3 * n, 3, &mut rng).unwrap();
        SetFunction::new(GroundSet::numbered("u", n).unwrap(), d).unwrap()
    }

    #[test]
    fn layer_examples() {
        let l = layer_indices(&[0.4; 5], 0.5).unwrap();
        assert_eq!((l.k_layers, l.sizes()), (1, vec![5]));
        let l = layer_indices(&[0.0, 2f64.ln(), 4f64.ln()], 1.0).unwrap();
        assert_eq!(l.index, vec![1, 2, 3]);
        assert_eq!(l.k_layers, 3);
        // just below a boundary stays in the lower layer
        let l = layer_indices(&[0.0, 2f64.ln() * (1.0 - 1e-9)], 1.0).unwrap();
        assert_eq!(l.index, vec![1, 1]);
        let l = layer_indices(&[0.0, 3.0, 70.0], f64::INFINITY).unwrap();
        assert_eq!(l.k_layers, 1);
        assert!(layer_indices(&[0.0], 0.0).is_err());
    }

    #[test]
    fn layers_partition_by_exponentiated_quality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mu = rng.gen_range(0.05..3.0);
            let q: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..2.0)).collect();
            let l = layer_indices(&q, mu).unwrap();
            assert_eq!(l.sizes().iter().sum::<usize>(), q.len());
            // independent oracle: (1+μ)^{j} <= exp(q) < (1+μ)^{j+1}
            for (i, &v) in q.iter().enumerate() {
                let j = l.floors[i] as f64;
                assert!((1.0 + mu).powf(j) <= v.exp() * (1.0 + 1e-12));
                assert!(v.exp() < (1.0 + mu).powf(j + 1.0) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn sample_size_formula() {
        assert_eq!(layer_sample_size(3, 0.05, 0.1, 1.0), (100.0 * 60f64.ln()).ceil() as usize);
        assert_eq!(layer_sample_size(1, 0.5, 1.0, 1.0), 1);
        let lc = LayerConfig::new(1.0, 0.1, 0.05).unwrap();
        assert_eq!(lc.layer_bound(2), (2.0 / 2f64.ln()).ceil() as usize + 1);
        assert!(LayerConfig::new(1.0, 0.0, 0.05).is_err());
    }

    #[test]
    fn choice_matches_closed_form() {
        let sizes = [3usize, 0, 5, 1];
        let (scale, width) = (0.7, 0.4);
        let z: Vec<f64> = sizes.iter().enumerate().map(|(i, &s)| s as f64 * (width * scale * i as f64).exp()).collect();
        let total: f64 = z.iter().sum();
        let want: Vec<f64> = z.iter().map(|v| v / total).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[choose_layer(&sizes, scale, width, &mut rng).unwrap()] += 1;
        }
        let emp: Vec<f64> = counts.iter().map(|&k| k as f64 / 100_000.0).collect();
        assert_eq!(counts[1], 0);
        assert!(total_variation(&emp, &want) <= 0.01);
        assert_eq!(choose_layer(&sizes, f64::INFINITY, width, &mut rng).unwrap(), 3);
    }

    #[test]
    fn argmax_limit_lands_in_top_band() {
        let f = random_coverage(3, 5);
        let m = Matroid::uniform(5, 2).unwrap();
        let c = build_grid_covering(&m, 1.2).unwrap();
        let lcfg = LayerConfig { with_replacement: false, c: 1e4, ..LayerConfig::new(0.2, 0.1, 0.05).unwrap() };
        let cfg = GreedyConfig { rounds: Some(1), ..GreedyConfig::new(PrivacyParams::argmax(f.sensitivity()).unwrap(), GradientMode::Exact, 3) };
        let r = dp_layered_greedy(&f, &m, &c, &cfg, &lcfg).unwrap();
        let g = GradientEstimate { components: exact_gradient(&f, &FractionalPoint::zeros(5)).unwrap(), mode: GradientMode::Exact };
        let q = covering_qualities(&c, &g);
        let best = q.iter().copied().fold(0.0, f64::max);
        assert!(q[r.chosen[0]] >= best - lcfg.width());
    }

    #[test]
    fn single_layer_is_uniform_over_sample() {
        let f = random_coverage(4, 3);
        let m = Matroid::uniform(3, 1).unwrap();
        let c = build_grid_covering(&m, 1.0).unwrap();
        let lcfg = LayerConfig { with_replacement: false, c: 1e4, ..LayerConfig::new(f64::INFINITY, 0.1, 0.05).unwrap() };
        let mut cfg = GreedyConfig::new(PrivacyParams::new(1.0, 0.0, f.sensitivity()).unwrap(), GradientMode::Exact, 0);
        let mut counts = vec![0usize; c.len()];
        for seed in 0..4000 {
            cfg.seed = seed;
            counts[dp_layered_greedy(&f, &m, &c, &cfg, &lcfg).unwrap().chosen[0]] += 1;
        }
        let emp: Vec<f64> = counts.iter().map(|&k| k as f64 / 4000.0).collect();
        assert!(total_variation(&emp, &vec![1.0 / c.len() as f64; c.len()]) < 0.05);
    }

    #[test]
    fn runs_stay_in_polytope_and_score_only_the_sample() {
        let f = random_coverage(5, 5);
        let m = Matroid::partition(5, vec![(vec![0, 1, 2], 1), (vec![3, 4], 1)]).unwrap();
        let c = build_grid_covering(&m, 0.5).unwrap();
        let lcfg = LayerConfig::new(0.5, 0.3, 0.2).unwrap();
        let cfg = GreedyConfig::new(PrivacyParams::new(1.0, 0.0, f.sensitivity()).unwrap(), GradientMode::Exact, 8);
        let r = dp_layered_greedy(&f, &m, &c, &cfg, &lcfg).unwrap();
        let ms = lcfg.sample_size(m.rank());
        assert!(ms < c.len());
        assert_eq!(r.quality_evaluations, vec![ms; m.rank()]);
        assert!(m.polytope_contains(r.x_final.coords(), POLYTOPE_TOL).unwrap());
        let full = LayerConfig { source: LayerSource::Full, ..lcfg };
        let r = dp_layered_greedy(&f, &m, &c, &cfg, &full).unwrap();
        assert_eq!(r.quality_evaluations, vec![c.len(); m.rank()]);
        assert!(m.polytope_contains(r.x_final.coords(), POLYTOPE_TOL).unwrap());
    }

    #[test]
    fn estimation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q: Vec<f64> = (0..200).map(|i| i as f64 / 100.0).collect();
        let rep = estimation_error_check(&q, 0.3, 0.1, 0.05, 1.0, 2000, &mut rng).unwrap();
        assert!(rep.failure_rate <= 0.05 + 0.02, "{rep:?}");
        let one = estimation_error_check(&[0.5; 10], 0.3, 0.1, 0.05, 1.0, 100, &mut rng).unwrap();
        assert_eq!((one.k_layers, one.failures), (1, 0));
        let loose = estimation_error_check(&q, 0.3, 1.0, 0.05, 1.0, 200, &mut rng).unwrap();
        assert_eq!(loose.failures, 0);
    }

    #[test]
    fn layer_count_ratio_on_neighbouring_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..20 {
            let f = random_coverage(seed, 4);
            let m = Matroid::uniform(4, 2).unwrap();
            let c = build_grid_covering(&m, 0.6).unwrap();
            let idx = rng.gen_range(0..f.dataset().len());
            let f2 = f.with_dataset(make_neighbor(f.dataset(), idx, &mut rng).unwrap()).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 0.5).collect();
            let x = FractionalPoint::new(x).unwrap();
            for mu in [0.05, 0.3, 1.0] {
                let span = |g: &SetFunction| {
                    let grad = GradientEstimate { components: exact_gradient(g, &x).unwrap(), mode: GradientMode::Exact };
                    build_layers(&c, &grad, mu).unwrap().span
                };
                let (k, k2) = (span(&f), span(&f2));
                let bound = 2.0 * f.sensitivity() * m.rank() as f64 / mu.ln_1p();
                assert!(k2 <= k + bound + 1e-12, "k={k} k'={k2} bound={bound}");
            }
        }
    }
}
