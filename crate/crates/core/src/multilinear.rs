//! Multilinear extension `f(x) = E_{X~x}[F(X)]`, its gradient and `<y, ∇f(x)>`.
//!
//! Exact mode tabulates `F` on all `2^n` subsets and contracts the table one coordinate
//! at a time. Monte-Carlo mode averages over independent draws `X ~ x`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setfn::{tabulate, ElementSet, SetOracle, ENUMERATION_CAP};

/// Coordinates may overshoot `[0,1]` by this much from rounding and are clamped back.
const COORD_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FractionalPoint(Vec<f64>);

impl FractionalPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(v) = coords.iter().find(|v| !v.is_finite() || **v < -COORD_SLACK || **v > 1.0 + COORD_SLACK) {
            return Err(Error::input(format!("coordinate {v} outside [0,1]")));
        }
        Ok(FractionalPoint(coords.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()))
    }

    pub fn zeros(n: usize) -> Self {
        FractionalPoint(vec![0.0; n])
    }

    pub fn indicator(set: ElementSet, n: usize) -> Self {
        FractionalPoint(set.indicator(n))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with coordinate `e` replaced.
    pub fn with_coord(&self, e: usize, value: f64) -> Result<Self> {
        let mut c = self.0.clone();
        c[e] = value;
        FractionalPoint::new(c)
    }

    /// Draws `X ~ x`: each element independently with probability `x(e)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ElementSet {
        self.0.iter().enumerate().filter(|(_, &p)| rng.gen::<f64>() < p).map(|(e, _)| e).collect()
    }
}

impl std::ops::Index<usize> for FractionalPoint {
    type Output = f64;
    fn index(&self, e: usize) -> &f64 {
        &self.0[e]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum GradientMode {
    Exact,
    MonteCarlo { samples: usize },
}

impl GradientMode {
    /// Monte-Carlo mode with `⌈10 n ln n⌉` samples (at least 1).
    pub fn default_mc(n: usize) -> Self {
        GradientMode::MonteCarlo { samples: default_mc_samples(n) }
    }
}

pub fn default_mc_samples(n: usize) -> usize {
    let n = n as f64;
    ((10.0 * n * n.ln()).ceil() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub components: Vec<f64>,
    pub mode: GradientMode,
}

impl GradientEstimate {
    /// `<y, g>`.
    pub fn dot(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.components.len() {
            return Err(Error::input(format!("direction has dimension {}, gradient has {}", y.len(), self.components.len())));
        }
        Ok(y.iter().zip(&self.components).map(|(a, b)| a * b).sum())
    }
}

fn check_dim<F: SetOracle + ?Sized>(f: &F, x: &FractionalPoint) -> Result<()> {
    if x.len() != f.ground_size() {
        return Err(Error::input(format!("point has dimension {}, ground set has {}", x.len(), f.ground_size())));
    }
    Ok(())
}

fn exact_table<F: SetOracle + ?Sized>(f: &F, x: &FractionalPoint) -> Result<Vec<f64>> {
    check_dim(f, x)?;
    if f.ground_size() > ENUMERATION_CAP {
        return Err(Error::capability(format!(
            "exact multilinear extension enumerates 2^{} subsets (cap {ENUMERATION_CAP}); use monte-carlo mode",
            f.ground_size()
        )));
    }
    tabulate(f)
}

/// Contracts the coordinates `0..bits` of `table` (indexed by bitmask) against `x`.
/// The highest coordinate is folded first.
fn contract(mut table: Vec<f64>, x: &[f64], bits: usize) -> f64 {
    for c in (0..bits).rev() {
        let half = 1usize << c;
        let (lo, hi) = table.split_at_mut(half);
        let p = x[c];
        for (a, b) in lo.iter_mut().zip(hi.iter()) {
            *a = (1.0 - p) * *a + p * *b;
        }
        table.truncate(half);
    }
    table[0]
}

/// `∂f/∂x(e)` from a full table: fold coordinates above `e`, then split on `e`.
fn table_partial(table: &[f64], x: &[f64], e: usize) -> f64 {
    let n = x.len();
    let mut t = table.to_vec();
    for c in (e + 1..n).rev() {
        let half = 1usize << c;
        let p = x[c];
        for s in 0..half {
            t[s] = (1.0 - p) * t[s] + p * t[s + half];
        }
        t.truncate(half);
    }
    let half = 1usize << e;
    let with = t.split_off(half);
    contract(with, x, e) - contract(t, x, e)
}

/// Exact `f(x)` by enumeration; makes exactly `2^n` oracle calls.
pub fn exact_extension<F: SetOracle + ?Sized>(f: &F, x: &FractionalPoint) -> Result<f64> {
    let table = exact_table(f, x)?;
    Ok(contract(table, x.coords(), f.ground_size()))
}

/// Mean of `F(X)` over `samples` independent draws `X ~ x`.
pub fn mc_extension<F: SetOracle + ?Sized, R: Rng + ?Sized>(
    f: &F,
    x: &FractionalPoint,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dim(f, x)?;
    if samples == 0 {
        return Err(Error::input("monte-carlo sample count must be at least 1"));
    }
    let draws: Vec<ElementSet> = (0..samples).map(|_| x.sample(rng)).collect();
    let total: f64 = draws.iter().map(|&s| f.value(s)).sum();
    Ok(total / samples as f64)
}

/// Exact gradient from one table of `2^n` values.
pub fn exact_gradient<F: SetOracle + ?Sized>(f: &F, x: &FractionalPoint) -> Result<Vec<f64>> {
    let table = exact_table(f, x)?;
    Ok((0..x.len()).into_par_iter().map(|e| table_partial(&table, x.coords(), e)).collect())
}

/// Monte-Carlo gradient `E[F(R ∪ e) − F(R \ e)]` with one set of draws shared by all
/// coordinates; `n + 1` oracle calls per draw.
pub fn mc_gradient<F: SetOracle + ?Sized, R: Rng + ?Sized>(
    f: &F,
    x: &FractionalPoint,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim(f, x)?;
    if samples == 0 {
        return Err(Error::input("monte-carlo sample count must be at least 1"));
    }
    let n = x.len();
    let draws: Vec<ElementSet> = (0..samples).map(|_| x.sample(rng)).collect();
    let rows: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|&r| {
            let base = f.value(r);
            (0..n)
                .map(|e| if r.contains(e) { base - f.value(r.without(e)) } else { f.value(r.with(e)) - base })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; n];
    for row in &rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= samples as f64);
    Ok(out)
}

pub fn gradient<F: SetOracle + ?Sized, R: Rng + ?Sized>(
    f: &F,
    x: &FractionalPoint,
    mode: GradientMode,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let components = match mode {
        GradientMode::Exact => exact_gradient(f, x)?,
        GradientMode::MonteCarlo { samples } => mc_gradient(f, x, samples, rng)?,
    };
    Ok(GradientEstimate { components, mode })
}

/// Single partial derivative `∂f/∂x(e)`.
pub fn gradient_component<F: SetOracle + ?Sized, R: Rng + ?Sized>(
    f: &F,
    x: &FractionalPoint,
    e: usize,
    mode: GradientMode,
    rng: &mut R,
) -> Result<f64> {
    check_dim(f, x)?;
    if e >= x.len() {
        return Err(Error::input(format!("element {e} outside ground set of size {}", x.len())));
    }
    match mode {
        GradientMode::Exact => {
            let table = exact_table(f, x)?;
            Ok(table_partial(&table, x.coords(), e))
        }
        GradientMode::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(Error::input("monte-carlo sample count must be at least 1"));
            }
            let total: f64 = (0..samples)
                .map(|_| {
                    let r = x.sample(rng);
                    f.value(r.with(e)) - f.value(r.without(e))
                })
                .sum();
            Ok(total / samples as f64)
        }
    }
}

/// `<y, ∇f(x)>`.
pub fn grad_inner_product<F: SetOracle + ?Sized, R: Rng + ?Sized>(
    f: &F,
    x: &FractionalPoint,
    y: &FractionalPoint,
    mode: GradientMode,
    rng: &mut R,
) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::input(format!("y has dimension {}, x has {}", y.len(), x.len())));
    }
    gradient(f, x, mode, rng)?.dot(y.coords())
}

/// Right-hand side of `|f(x) − f(x+v)| <= 4 |E|^{1/4} sqrt(rho)` for `||v||_2 <= rho`.
pub fn lipschitz_bound(n: usize, rho: f64) -> f64 {
    4.0 * (n as f64).powf(0.25) * rho.sqrt()
}
