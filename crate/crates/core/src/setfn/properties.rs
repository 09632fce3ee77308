//! Exhaustive monotonicity and submodularity checks for small ground sets.

use serde::Serialize;

use super::{tabulate, ElementSet, SetOracle};
use crate::error::{Error, Result};

/// Largest ground set accepted by the exhaustive checks (`3^n · n` triples).
pub const PROPERTY_CAP: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PropertyKind {
    Monotonicity,
    Submodularity,
}

/// A counterexample: `smaller ⊆ larger`, and for submodularity the added element.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyViolation {
    pub kind: PropertyKind,
    pub smaller: ElementSet,
    pub larger: ElementSet,
    pub element: Option<usize>,
    /// Amount by which the inequality fails.
    pub gap: f64,
}

fn table<F: SetOracle + ?Sized>(f: &F) -> Result<Vec<f64>> {
    let n = f.ground_size();
    if n > PROPERTY_CAP {
        return Err(Error::capability(format!(
            "exhaustive property check supports n <= {PROPERTY_CAP}, got {n}"
        )));
    }
    tabulate(f)
}

/// Checks `F(S) <= F(S ∪ {e})` for every `S` and `e ∉ S`, which covers every pair `S ⊆ T`.
pub fn check_monotone<F: SetOracle + ?Sized>(f: &F, tol: f64) -> Result<Option<PropertyViolation>> {
    let n = f.ground_size();
    let values = table(f)?;
    for m in 0..values.len() as u64 {
        for e in 0..n {
            if m & (1 << e) != 0 {
                continue;
            }
            let gap = values[m as usize] - values[(m | 1 << e) as usize];
            if gap > tol {
                return Ok(Some(PropertyViolation {
                    kind: PropertyKind::Monotonicity,
                    smaller: ElementSet::from_bits(m),
                    larger: ElementSet::from_bits(m | 1 << e),
                    element: Some(e),
                    gap,
                }));
            }
        }
    }
    Ok(None)
}

/// Checks `F(S∪{e}) − F(S) >= F(T∪{e}) − F(T)` for every `S ⊆ T` and `e ∉ T`.
pub fn check_submodular<F: SetOracle + ?Sized>(f: &F, tol: f64) -> Result<Option<PropertyViolation>> {
    let n = f.ground_size();
    let values = table(f)?;
    for t in 0..values.len() as u64 {
        for e in 0..n {
            let bit = 1u64 << e;
            if t & bit != 0 {
                continue;
            }
            let gain_t = values[(t | bit) as usize] - values[t as usize];
            // walk all submasks of t, including t and 0
            let mut s = t;
            loop {
                let gain_s = values[(s | bit) as usize] - values[s as usize];
                if gain_t - gain_s > tol {
                    return Ok(Some(PropertyViolation {
                        kind: PropertyKind::Submodularity,
                        smaller: ElementSet::from_bits(s),
                        larger: ElementSet::from_bits(t),
                        element: Some(e),
                        gap: gain_t - gain_s,
                    }));
                }
                if s == 0 {
                    break;
                }
                s = (s - 1) & t;
            }
        }
    }
    Ok(None)
}
