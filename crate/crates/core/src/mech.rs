//! Exponential mechanism, composition rules and per-run mechanism transcripts.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when comparing an audited log-ratio against its budget.
pub const AUDIT_TOL: f64 = 1e-9;

/// Privacy parameters. `epsilon = ∞` selects the noiseless argmax limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::input(format!("delta must be a finite nonnegative number, got {delta}")));
        }
        if !(sensitivity > 0.0) || !sensitivity.is_finite() {
            return Err(Error::input(format!("sensitivity must be positive and finite, got {sensitivity}")));
        }
        Ok(PrivacyParams { epsilon, delta, sensitivity })
    }

    /// Noiseless limit: the mechanism always returns the lowest-index argmax.
    pub fn argmax(sensitivity: f64) -> Result<Self> {
        PrivacyParams::new(f64::INFINITY, 0.0, sensitivity)
    }

    /// `ε' = ε / (2Δ)`.
    pub fn scale(&self) -> f64 {
        self.epsilon / (2.0 * self.sensitivity)
    }

    pub fn is_argmax(&self) -> bool {
        self.epsilon.is_infinite()
    }
}

fn check_qualities(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::input("exponential mechanism needs at least one candidate"));
    }
    if let Some(v) = q.iter().find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite quality {v}")));
    }
    Ok(())
}

/// Lowest index attaining the maximum.
pub fn argmax(values: &[f64]) -> usize {
    values.iter().enumerate().fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Max-shifted log weights `ε' (q_i − max q)`.
fn shifted_log_weights(q: &[f64], scale: f64) -> Vec<f64> {
    let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    q.iter()
        .map(|&v| {
            let w = scale * (v - top);
            // 0 · ∞ at the maximum
            if w.is_nan() {
                0.0
            } else {
                w
            }
        })
        .collect()
}

/// Samples index `i` with probability proportional to `exp(log_w[i])` using one uniform draw.
/// Entries equal to `-∞` have zero mass. Errors if every entry is `-∞` or any is NaN or `+∞`.
pub fn sample_from_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Result<usize> {
    if log_w.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::input("log weights must be finite or -inf"));
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::input("all candidates have zero weight"));
    }
    let weights: Vec<f64> = log_w.iter().map(|&w| (w - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Samples from `P(i) ∝ exp(scale · q_i)`; `scale = ∞` returns the lowest-index argmax.
pub fn sample_scaled<R: Rng + ?Sized>(q: &[f64], scale: f64, rng: &mut R) -> Result<usize> {
    check_qualities(q)?;
    if scale.is_infinite() {
        return Ok(argmax(q));
    }
    sample_from_log_weights(&shifted_log_weights(q, scale), rng)
}

/// The exponential mechanism with score scale `ε/(2Δ)`.
pub fn exp_mechanism<R: Rng + ?Sized>(q: &[f64], pp: &PrivacyParams, rng: &mut R) -> Result<usize> {
    sample_scaled(q, pp.scale(), rng)
}

/// Exact log-probabilities of the exponential mechanism.
pub fn em_log_probabilities(q: &[f64], scale: f64) -> Result<Vec<f64>> {
    check_qualities(q)?;
    if scale.is_infinite() {
        let best = argmax(q);
        return Ok((0..q.len()).map(|i| if i == best { 0.0 } else { f64::NEG_INFINITY }).collect());
    }
    let lw = shifted_log_weights(q, scale);
    let log_z = lw.iter().map(|w| w.exp()).sum::<f64>().ln();
    Ok(lw.into_iter().map(|w| w - log_z).collect())
}

pub fn em_probabilities(q: &[f64], scale: f64) -> Result<Vec<f64>> {
    Ok(em_log_probabilities(q, scale)?.into_iter().map(f64::exp).collect())
}

/// `(2Δ/ε) ln(n/β)`: with probability at least `1 − β` the chosen quality is within this of the best.
pub fn em_utility_bound(n_candidates: usize, pp: &PrivacyParams, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::input(format!("beta must lie in (0,1], got {beta}")));
    }
    if n_candidates == 0 {
        return Err(Error::input("candidate count must be positive"));
    }
    if pp.is_argmax() {
        return Ok(0.0);
    }
    Ok(2.0 * pp.sensitivity / pp.epsilon * (n_candidates as f64 / beta).ln())
}

/// Basic composition: componentwise sums, each correctly rounded, so `k` equal steps compose
/// to exactly `k · ε₀` as a double.
pub fn compose_basic(steps: &[(f64, f64)]) -> (f64, f64) {
    (exact_sum(steps.iter().map(|s| s.0)), exact_sum(steps.iter().map(|s| s.1)))
}

/// Correctly rounded sum (Shewchuk's partials, as in Python's `math.fsum`). Falls back to
/// plain summation when a value is not finite.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return values.iter().sum();
    }
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // round-half-even correction across the top two partials
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Advanced composition of `k` steps of `(ε₀, δ₀)`:
/// `ε = k ε₀² / 2 + sqrt(2 ln(1/δ')) ε₀`, `δ = δ' + k δ₀`.
pub fn compose_advanced(k: usize, eps0: f64, delta0: f64, delta_prime: f64) -> Result<(f64, f64)> {
    if !(delta_prime > 0.0) {
        return Err(Error::input(format!("delta' must be positive, got {delta_prime}")));
    }
    if !(eps0 >= 0.0) || !(delta0 >= 0.0) {
        return Err(Error::input("per-step budgets must be nonnegative"));
    }
    if k == 0 {
        return Ok((0.0, delta_prime));
    }
    let k = k as f64;
    let eps = 0.5 * k * eps0 * eps0 + (2.0 * (1.0 / delta_prime).ln()).sqrt() * eps0;
    Ok((eps, delta_prime + k * delta0))
}

/// Exact `max_i |ln p_i − ln p'_i|` between the mechanism's output distributions on two
/// quality vectors over the same candidates.
pub fn audit_single_step(q: &[f64], q_prime: &[f64], pp: &PrivacyParams) -> Result<f64> {
    if q.len() != q_prime.len() {
        return Err(Error::input(format!("quality vectors differ in length: {} vs {}", q.len(), q_prime.len())));
    }
    let a = em_log_probabilities(q, pp.scale())?;
    let b = em_log_probabilities(q_prime, pp.scale())?;
    Ok(a.iter().zip(&b).map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() }).fold(0.0, f64::max))
}

/// `½ Σ |p_i − q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub step: usize,
    pub n_candidates: usize,
    pub chosen: usize,
    pub eps_step: f64,
    pub delta_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MechanismTranscript {
    pub steps: Vec<TranscriptStep>,
    #[serde(default)]
    pub record_scores: bool,
}

impl MechanismTranscript {
    pub fn new(record_scores: bool) -> Self {
        MechanismTranscript { steps: Vec::new(), record_scores }
    }

    /// Appends a step; `scores` is kept only when score recording is on.
    pub fn push(&mut self, n_candidates: usize, chosen: usize, eps_step: f64, delta_step: f64, scores: &[f64]) {
        let scores = self.record_scores.then(|| scores.to_vec());
        self.steps.push(TranscriptStep { step: self.steps.len() + 1, n_candidates, chosen, eps_step, delta_step, scores });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn budgets(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|s| (s.eps_step, s.delta_step)).collect()
    }

    pub fn basic_budget(&self) -> (f64, f64) {
        compose_basic(&self.budgets())
    }

    /// Advanced composition using the largest per-step budget.
    pub fn advanced_budget(&self, delta_prime: f64) -> Result<(f64, f64)> {
        let eps0 = self.steps.iter().map(|s| s.eps_step).fold(0.0, f64::max);
        let delta0 = self.steps.iter().map(|s| s.delta_step).fold(0.0, f64::max);
        compose_advanced(self.steps.len(), eps0, delta0, delta_prime)
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.steps {
            writeln!(out, "{}", serde_json::to_string(s)?).unwrap();
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_sum_matches_fsum() {
        // reference values from Python's math.fsum
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100, 1e-100, 1e50, -1.0, -1e50]), 1e-100);
        assert_eq!(exact_sum([1.0, 1e-16, 1e-16]), 1.0000000000000002);
        assert_eq!(exact_sum([2f64.powi(53), 1.0, 2f64.powi(-50)]), 9007199254740994.0);
        assert_eq!(exact_sum([]), 0.0);
        assert_eq!(exact_sum([1.0, f64::INFINITY]), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn repeated_steps_compose_to_the_product(eps in 1e-6f64..100.0, k in 1usize..2000) {
            prop_assert_eq!(compose_basic(&vec![(eps, 0.0); k]).0, k as f64 * eps);
        }
    }

    fn pp(eps: f64, sens: f64) -> PrivacyParams {
        PrivacyParams::new(eps, 0.0, sens).unwrap()
    }

    fn empirical(q: &[f64], scale: f64, draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; q.len()];
        for _ in 0..draws {
            counts[sample_scaled(q, scale, &mut rng).unwrap()] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn scale_is_eps_over_twice_sensitivity() {
        assert_eq!(pp(1.0, 0.25).scale(), 2.0);
        assert!(PrivacyParams::new(0.0, 0.0, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, -1.0, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let p = em_probabilities(&[0.0, 3f64.ln()], 1.0).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert_eq!(em_probabilities(&[2.0; 4], 5.0).unwrap(), vec![0.25; 4]);
        assert_eq!(em_probabilities(&[1.0, 3.0, 3.0], f64::INFINITY).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn argmax_limit_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inf = PrivacyParams::argmax(1.0).unwrap();
        for _ in 0..10 {
            assert_eq!(exp_mechanism(&[0.2, 0.9, 0.9, 0.1], &inf, &mut rng).unwrap(), 1);
        }
        assert!(exp_mechanism(&[], &pp(1.0, 1.0), &mut rng).is_err());
        assert!(exp_mechanism(&[0.0, f64::NAN], &pp(1.0, 1.0), &mut rng).is_err());
        assert!(exp_mechanism(&[0.0, f64::INFINITY], &pp(1.0, 1.0), &mut rng).is_err());
    }

    #[test]
    fn huge_scales_do_not_overflow() {
        let p = em_probabilities(&[0.0, 999.0, 1000.0], 1.0).unwrap();
        assert!((p[2] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = [0usize; 3];
        for _ in 0..2000 {
            seen[sample_scaled(&[0.0, 999.0, 1000.0], 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1] > 0 && seen[2] > seen[1]);
    }

    #[test]
    fn empirical_distribution_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let n = rng.gen_range(2..=20);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scale = rng.gen_range(0.1..4.0);
            let exact = em_probabilities(&q, scale).unwrap();
            let emp = empirical(&q, scale, 100_000, trial);
            assert!(total_variation(&exact, &emp) <= 0.01);
        }
    }

    #[test]
    fn shift_invariance_is_bit_exact() {
        // dyadic qualities make every shifted difference exact
        let q = [0.25, 1.5, -0.75, 1.0, 0.0];
        let shifted: Vec<f64> = q.iter().map(|v| v + 8.0).collect();
        assert_eq!(em_probabilities(&q, 1.25).unwrap(), em_probabilities(&shifted, 1.25).unwrap());
        for seed in 0..50 {
            let a = sample_scaled(&q, 1.25, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = sample_scaled(&shifted, 1.25, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn log_weight_sampler_skips_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let i = sample_from_log_weights(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 1.0], &mut rng).unwrap();
            assert!(i == 1 || i == 3);
        }
        assert!(sample_from_log_weights(&[f64::NEG_INFINITY], &mut rng).is_err());
    }

    #[test]
    fn utility_bound_examples() {
        let p = pp(2.0, 1.0);
        assert!((em_utility_bound(1, &p, 0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((em_utility_bound(1, &p, 1.0).unwrap()).abs() < 1e-15);
        // n = e, β = 1/e gives ln(e²) = 2 with Δ/ε scaling of 1
        let b = 2.0 * 1.0 / 2.0 * (std::f64::consts::E / (1.0 / std::f64::consts::E)).ln();
        assert!((b - 2.0).abs() < 1e-15);
        assert!(em_utility_bound(3, &p, 0.0).is_err());
    }

    #[test]
    fn composition_examples() {
        let (e, d) = compose_basic(&[(0.1, 0.0); 5]);
        assert!((e - 0.5).abs() < 1e-15);
        assert_eq!(d, 0.0);
        assert_eq!(compose_basic(&[]), (0.0, 0.0));
        assert_eq!(compose_basic(&[(0.3, 1e-7)]), (0.3, 1e-7));
        let (e, d) = compose_advanced(5, 0.1, 0.0, 1e-6).unwrap();
        let want = 0.025 + 0.1 * (2.0 * 1e6f64.ln()).sqrt();
        assert!((e - want).abs() <= 1e-12);
        assert!((e - 0.5507).abs() < 5e-5);
        assert_eq!(d, 1e-6);
        assert_eq!(compose_advanced(0, 0.1, 0.0, 1e-6).unwrap(), (0.0, 1e-6));
        assert!(compose_advanced(3, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn audit_examples() {
        let p = pp(1.0, 1.0);
        assert_eq!(audit_single_step(&[0.3, 0.1], &[0.3, 0.1], &p).unwrap(), 0.0);
        assert_eq!(audit_single_step(&[0.3], &[-0.7], &p).unwrap(), 0.0);
        let r = audit_single_step(&[0.0, 0.0], &[1.0, -1.0], &p).unwrap();
        // two-point distribution: p' = (e^{1/2}, e^{-1/2}) / Z
        let z = 0.5f64.exp() + (-0.5f64).exp();
        let want = ((0.5f64.exp() / z) / 0.5).ln().abs().max(((-0.5f64).exp() / z / 0.5).ln().abs());
        assert!((r - want).abs() < 1e-12);
        assert!(r <= 1.0 + AUDIT_TOL);
        assert!(audit_single_step(&[0.0], &[0.0, 1.0], &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn audit_within_budget_for_bounded_pairs(
            q in prop::collection::vec(-5.0f64..5.0, 1..20),
            noise in prop::collection::vec(-1.0f64..=1.0, 20),
            eps in 0.01f64..5.0,
            sens in 0.01f64..2.0,
        ) {
            let p = pp(eps, sens);
            let q2: Vec<f64> = q.iter().zip(&noise).map(|(a, b)| a + b * sens).collect();
            prop_assert!(audit_single_step(&q, &q2, &p).unwrap() <= eps + AUDIT_TOL);
        }
    }

    #[test]
    fn transcript_budget_and_export() {
        let mut t = MechanismTranscript::new(false);
        for i in 0..4 {
            t.push(5, i, 0.2, 0.0, &[1.0, 2.0]);
        }
        assert_eq!(t.basic_budget(), compose_basic(&t.budgets()));
        assert!((t.basic_budget().0 - 0.8).abs() < 1e-15);
        let text = t.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 4);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first, serde_json::json!({"step": 1, "n_candidates": 5, "chosen": 0, "eps_step": 0.2, "delta_step": 0.0}));
        let mut audited = MechanismTranscript::new(true);
        audited.push(2, 1, 0.2, 0.0, &[1.0, 2.0]);
        assert_eq!(audited.steps[0].scores.as_deref(), Some(&[1.0, 2.0][..]));
    }
}
