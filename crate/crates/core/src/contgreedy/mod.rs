//! Differentially private continuous greedy over a covering of the matroid polytope, and the
//! layered variant that only scores a random sample of the covering each round.

mod layered;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::Covering;
use crate::error::{Error, Result};
use crate::matroid::Matroid;
use crate::mech::{exp_mechanism, MechanismTranscript, PrivacyParams};
use crate::multilinear::{gradient, FractionalPoint, GradientEstimate, GradientMode};
use crate::setfn::{ElementSet, SetOracle};

pub(crate) use layered::draw_sample;
pub use layered::{
    build_layers, choose_layer, dp_layered_greedy, estimation_error_check, layer_indices, layer_sample_size, layered_step_epsilon,
    EstimationReport, LayerConfig, LayerSource, Layers,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub privacy: PrivacyParams,
    pub mode: GradientMode,
    /// Round count; `None` means `r(M)`.
    pub rounds: Option<usize>,
    pub seed: u64,
    /// Keep per-round quality vectors in the transcript.
    pub record_scores: bool,
}

impl GreedyConfig {
    pub fn new(privacy: PrivacyParams, mode: GradientMode, seed: u64) -> Self {
        GreedyConfig { privacy, mode, rounds: None, seed, record_scores: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    pub x_final: FractionalPoint,
    /// `x_0, …, x_T`.
    pub trajectory: Vec<FractionalPoint>,
    /// Covering index of each chosen direction.
    pub chosen: Vec<usize>,
    pub directions: Vec<FractionalPoint>,
    pub alpha: f64,
    pub rounds: usize,
    pub mode: GradientMode,
    pub transcript: MechanismTranscript,
    /// Oracle calls to `F`.
    pub evaluations: u64,
    /// Inner products `<y, ∇f>` computed in each round.
    pub quality_evaluations: Vec<usize>,
}

/// Oracle wrapper with its own call counter.
pub(crate) struct Counted<'a, F: ?Sized> {
    inner: &'a F,
    calls: AtomicU64,
}

impl<'a, F: SetOracle + ?Sized> Counted<'a, F> {
    pub(crate) fn new(inner: &'a F) -> Self {
        Counted { inner, calls: AtomicU64::new(0) }
    }

    pub(crate) fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<F: SetOracle + ?Sized> SetOracle for Counted<'_, F> {
    fn ground_size(&self) -> usize {
        self.inner.ground_size()
    }

    fn value(&self, set: ElementSet) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.value(set)
    }
}

pub(crate) fn check_inputs<F: SetOracle + ?Sized>(f: &F, m: &Matroid, c: &Covering) -> Result<()> {
    if f.ground_size() != m.ground_size() {
        return Err(Error::input(format!(
            "function has {} elements, matroid has {}",
            f.ground_size(),
            m.ground_size()
        )));
    }
    if c.is_empty() {
        return Err(Error::input("covering has no points"));
    }
    c.check_matroid(m)
}

/// `α · Σ y`, computed from the running sum so the result equals it exactly.
pub(crate) fn scaled_sum(sum: &[f64], alpha: f64) -> Result<FractionalPoint> {
    FractionalPoint::new(sum.iter().map(|v| alpha * v).collect())
}

/// Privacy loss of one round: qualities `<y, ∇f>` move by at most `2Δ r(M)` between
/// neighbouring datasets, and the mechanism runs at scale `ε/(2Δ)`.
pub fn continuous_step_epsilon(pp: &PrivacyParams, rank: usize) -> f64 {
    2.0 * pp.epsilon * rank as f64
}

/// Qualities `<y, g>` for every covering point.
pub fn covering_qualities(c: &Covering, g: &GradientEstimate) -> Vec<f64> {
    c.points().par_iter().map(|y| y.coords().iter().zip(&g.components).map(|(a, b)| a * b).sum()).collect()
}

pub(crate) fn round_count(cfg_rounds: Option<usize>, m: &Matroid) -> Result<usize> {
    match cfg_rounds {
        Some(0) => Err(Error::input("round count must be positive")),
        Some(t) => Ok(t),
        None => Ok(m.rank()),
    }
}

/// Algorithm 1: `T` rounds, each sampling `y ∈ C` with probability `∝ exp(ε' <y, ∇f(x)>)`
/// and stepping `x ← x + y/T`.
pub fn dp_continuous_greedy<F: SetOracle + ?Sized>(
    f: &F,
    m: &Matroid,
    c: &Covering,
    cfg: &GreedyConfig,
) -> Result<GreedyResult> {
    check_inputs(f, m, c)?;
    let counted = Counted::new(f);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = m.ground_size();
    let rounds = round_count(cfg.rounds, m)?;
    let alpha = if rounds == 0 { 0.0 } else { 1.0 / rounds as f64 };
    let eps_step = continuous_step_epsilon(&cfg.privacy, m.rank());
    let mut transcript = MechanismTranscript::new(cfg.record_scores);
    let mut sum = vec![0.0; n];
    let mut x = FractionalPoint::zeros(n);
    let mut trajectory = vec![x.clone()];
    let (mut chosen, mut directions, mut quality_evaluations) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..rounds {
        let g = gradient(&counted, &x, cfg.mode, &mut rng)?;
        let q = covering_qualities(c, &g);
        let pick = exp_mechanism(&q, &cfg.privacy, &mut rng)?;
        transcript.push(q.len(), pick, eps_step, 0.0, &q);
        quality_evaluations.push(q.len());
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
