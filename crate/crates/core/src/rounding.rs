//! Decomposition of a point of `P(M)` into a convex combination of independent sets, and swap
//! rounding of such a combination to a single base.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matroid::{Matroid, POLYTOPE_TOL};
use crate::multilinear::{exact_extension, FractionalPoint};
use crate::setfn::{ElementSet, SetOracle};

/// Residual coordinates below this are treated as zero.
const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexCombination {
    pub parts: Vec<(f64, ElementSet)>,
    pub target: FractionalPoint,
}

impl ConvexCombination {
    pub fn total_weight(&self) -> f64 {
        self.parts.iter().map(|p| p.0).sum()
    }

    /// `1 − Σ λ_i`, clamped at zero.
    pub fn deficit(&self) -> f64 {
        (1.0 - self.total_weight()).max(0.0)
    }

    /// `Σ λ_i 1_{I_i}`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.target.len()];
        for &(w, set) in &self.parts {
            set.iter().for_each(|e| out[e] += w);
        }
        out
    }

    /// Largest coordinate gap between the reconstruction and the target.
    pub fn residual(&self) -> f64 {
        self.reconstruct().iter().zip(self.target.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Peels independent sets off `x`. Each round takes the greedy independent set `I` over the
/// positive residual coordinates in decreasing order and the largest `λ` with
/// `x_res − λ 1_I ∈ (W − λ) P(M)`, where `W` is the weight not yet used.
pub fn decompose(m: &Matroid, x: &FractionalPoint) -> Result<ConvexCombination> {
    let n = m.ground_size();
    if x.len() != n {
        return Err(Error::input(format!("point has dimension {}, matroid has {n} elements", x.len())));
    }
    if !m.polytope_contains(x.coords(), POLYTOPE_TOL)? {
        return Err(Error::input("point lies outside the matroid polytope"));
    }
    let constraints = m.rank_constraints()?;
    let mut res: Vec<f64> = x.coords().iter().map(|&v| if v < RESIDUAL_TOL { 0.0 } else { v }).collect();
    let mut budget = 1.0f64;
    let mut parts = Vec::new();
    let guard = n * n + n + 1;
    while res.iter().any(|&v| v > 0.0) {
        if parts.len() >= guard {
            return Err(Error::invariant(format!("decomposition exceeded {guard} parts")));
        }
        let mut order: Vec<usize> = (0..n).filter(|&e| res[e] > 0.0).collect();
        order.sort_by(|&a, &b| res[b].total_cmp(&res[a]).then(a.cmp(&b)));
        let set = order.iter().fold(ElementSet::EMPTY, |acc, &e| {
            let next = acc.with(e);
            if m.is_independent(next) {
                next
            } else {
                acc
            }
        });
        let mut lambda = set.iter().map(|e| res[e]).fold(budget, f64::min);
        for &(s, bound) in constraints {
            let slack_rate = bound as f64 - s.intersection(set).len() as f64;
            if slack_rate > 0.0 {
                let load: f64 = s.iter().map(|e| res[e]).sum();
                lambda = lambda.min((bound as f64 * budget - load) / slack_rate);
            }
        }
        if !(lambda > 1e-15) {
            return Err(Error::invariant(format!("decomposition stalled with step {lambda:e}")));
        }
        for e in set.iter() {
            res[e] -= lambda;
            if res[e] < RESIDUAL_TOL {
                res[e] = 0.0;
            }
        }
        budget = (budget - lambda).max(0.0);
        parts.push((lambda, set));
    }
    Ok(ConvexCombination { parts, target: x.clone() })
}

/// Rounds a convex combination to one base. Parts are padded greedily to bases, any missing
/// weight goes to the heaviest part, and bases are merged left to right by random exchanges.
pub fn swap_round<R: Rng + ?Sized>(m: &Matroid, comb: &ConvexCombination, rng: &mut R) -> Result<ElementSet> {
    let mut bases = comb
        .parts
        .iter()
        .map(|&(w, set)| {
            if !(w > 0.0) {
                return Err(Error::input(format!("part weight must be positive, got {w}")));
            }
            Ok((w, m.extend_to_base(set)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if bases.is_empty() {
        return m.extend_to_base(ElementSet::EMPTY);
    }
    let deficit = comb.deficit();
    if deficit > 0.0 {
        let heaviest = (0..bases.len()).fold(0, |b, i| if bases[i].0 > bases[b].0 { i } else { b });
        bases[heaviest].0 += deficit;
    }
    let (mut w1, mut b1) = bases[0];
    for &(w2, b2_start) in &bases[1..] {
        let mut b2 = b2_start;
        while b1 != b2 {
            let e = b1.difference(b2).iter().next().expect("distinct bases of equal size");
            let partner = b2.difference(b1).iter().find(|&f| {
                m.is_independent(b1.without(e).with(f)) && m.is_independent(b2.without(f).with(e))
            });
            let f = partner
                .ok_or_else(|| Error::invariant(format!("no symmetric exchange partner for element {e}")))?;
            if rng.gen::<f64>() < w1 / (w1 + w2) {
                b2 = b2.without(f).with(e);
            } else {
                b1 = b1.without(e).with(f);
            }
        }
        w1 += w2;
    }
    if !m.is_base(b1) {
        return Err(Error::invariant("swap rounding produced a non-base"));
    }
    Ok(b1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingReport {
    pub rounds: usize,
    pub mean: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    pub exact: f64,
    pub parts: usize,
}

/// Mean of `F` over repeated swap roundings of `x`, next to the exact `f(x)`.
pub fn rounding_quality<F: SetOracle + ?Sized, R: Rng + ?Sized>(
    f: &F,
    m: &Matroid,
    x: &FractionalPoint,
    rounds: usize,
    rng: &mut R,
) -> Result<RoundingReport> {
    if rounds == 0 {
        return Err(Error::input("rounding trial count must be positive"));
    }
    let exact = exact_extension(f, x)?;
    let comb = decompose(m, x)?;
    let values = (0..rounds).map(|_| swap_round(m, &comb, rng).map(|s| f.value(s))).collect::<Result<Vec<_>>>()?;
    let k = rounds as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if rounds > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    Ok(RoundingReport { rounds, mean, std_error: (var / k).sqrt(), exact, parts: comb.parts.len() })
}
