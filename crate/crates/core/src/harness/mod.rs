//! Brute-force oracles, the non-private greedy baseline, coupled privacy audits and
//! experiment orchestration.

mod audit;
mod experiment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matroid::Matroid;
use crate::setfn::{ElementSet, SetOracle, ENUMERATION_CAP};

pub use audit::{audit_ksub_pair, audit_ksub_run, audit_pair, audit_run, AuditReport, KAuditAlgorithm, SetAuditAlgorithm};
pub use experiment::{
    derive_seeds, run_experiment, Algorithm, ExperimentConfig, InstanceData, RunRecord, RunReport,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    pub best: ElementSet,
    pub opt: f64,
    /// Independent sets evaluated.
    pub evaluated: usize,
}

/// Exact `max_{S ∈ I} F(S)`. Ties go to the larger set, then to the earlier one in
/// enumeration order.
pub fn brute_force_submodular<F: SetOracle + ?Sized>(f: &F, m: &Matroid) -> Result<BruteForce> {
    check_sizes(f, m)?;
    if m.ground_size() > ENUMERATION_CAP {
        return Err(Error::capability(format!(
            "brute force supports at most {ENUMERATION_CAP} elements, got {}",
            m.ground_size()
        )));
    }
    let sets = m.independent_sets()?;
    let mut best = (ElementSet::EMPTY, f64::NEG_INFINITY);
    for &s in &sets {
        let v = f.value(s);
        if v > best.1 || (v == best.1 && s.len() > best.0.len()) {
            best = (s, v);
        }
    }
    Ok(BruteForce { best: best.0, opt: best.1, evaluated: sets.len() })
}

/// Greedy by largest marginal gain over feasible elements until a base is reached; ties go to
/// the lowest index.
pub fn greedy_nonprivate<F: SetOracle + ?Sized>(f: &F, m: &Matroid) -> Result<(ElementSet, f64, u64)> {
    check_sizes(f, m)?;
    let mut s = ElementSet::EMPTY;
    let mut value = f.value(s);
    let mut calls = 1u64;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for e in (0..m.ground_size()).filter(|&e| !s.contains(e) && m.is_independent(s.with(e))) {
            let v = f.value(s.with(e));
            calls += 1;
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((e, v));
            }
        }
        match best {
            Some((e, v)) => {
                s = s.with(e);
                value = v;
            }
            None => return Ok((s, value, calls)),
        }
    }
}

fn check_sizes<F: SetOracle + ?Sized>(f: &F, m: &Matroid) -> Result<()> {
    if f.ground_size() != m.ground_size() {
        return Err(Error::input(format!(
            "function has {} elements, matroid has {}",
            f.ground_size(),
            m.ground_size()
        )));
    }
    Ok(())
}
