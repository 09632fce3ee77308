//! k-submodular objectives over assignments `E → {0, 1, …, k}` and the private greedy
//! algorithms that maximise them under a matroid constraint on the support.

mod greedy;
mod instance;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setfn::{ElementSet, GroundSet, MAX_ELEMENTS};

pub use greedy::{
    brute_force_ksub, candidate_values, dp_ksub_greedy, dp_ksub_greedy_sampled, ksub_candidates, ksub_sample_size,
    KBruteForce, KGreedyConfig, KRunResult,
};
pub use instance::{parse_kinstance, read_kinstance};

/// Largest state space `(k+1)^n` accepted by [`meet_join_check`].
pub const MEET_JOIN_CAP: usize = 4096;

/// Labels in `{0, …, k}` per element; 0 means unassigned.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KAssignment {
    labels: Vec<u8>,
    k: usize,
}

impl KAssignment {
    pub fn empty(n: usize, k: usize) -> Self {
        KAssignment { labels: vec![0; n], k }
    }

    pub fn from_labels(labels: Vec<u8>, k: usize) -> Result<Self> {
        if k == 0 || k > u8::MAX as usize {
            return Err(Error::input(format!("topic count must lie in 1..=255, got {k}")));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize > k) {
            return Err(Error::input(format!("label {l} exceeds k = {k}")));
        }
        Ok(KAssignment { labels, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, e: usize) -> usize {
        self.labels[e] as usize
    }

    /// `supp(s)`.
    pub fn support(&self) -> ElementSet {
        self.labels.iter().enumerate().filter(|(_, &l)| l != 0).map(|(e, _)| e).collect()
    }

    /// `S_i` for topic `i ∈ 1..=k`.
    pub fn topic(&self, i: usize) -> ElementSet {
        self.labels.iter().enumerate().filter(|(_, &l)| l as usize == i).map(|(e, _)| e).collect()
    }

    /// Copy with `e` moved to topic `i`.
    pub fn with(&self, e: usize, i: usize) -> Self {
        let mut next = self.clone();
        next.labels[e] = i as u8;
        next
    }

    pub fn assign(&mut self, e: usize, i: usize) {
        self.labels[e] = i as u8;
    }

    /// `(S_1 ∩ T_1, …, S_k ∩ T_k)`.
    pub fn meet(&self, other: &Self) -> Self {
        let labels = self.labels.iter().zip(&other.labels).map(|(&a, &b)| if a == b { a } else { 0 }).collect();
        KAssignment { labels, k: self.k }
    }

    /// Union per topic with elements claimed by two different topics removed.
    pub fn join(&self, other: &Self) -> Self {
        let labels = self
            .labels
            .iter()
            .zip(&other.labels)
            .map(|(&a, &b)| match (a, b) {
                (0, b) => b,
                (a, 0) => a,
                (a, b) if a == b => a,
                _ => 0,
            })
            .collect();
        KAssignment { labels, k: self.k }
    }

    /// `s ⪯ t`: every `S_i ⊆ T_i`.
    pub fn precedes(&self, other: &Self) -> bool {
        self.labels.iter().zip(&other.labels).all(|(&a, &b)| a == 0 || a == b)
    }

    /// Element id to topic map for reports.
    pub fn named(&self, ground: &GroundSet) -> Vec<(String, usize)> {
        self.labels.iter().enumerate().filter(|(_, &l)| l != 0).map(|(e, &l)| (ground.id(e).to_owned(), l as usize)).collect()
    }
}

impl fmt::Debug for KAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "K{}{:?}", self.k, self.labels)
    }
}

/// Oracle access to a k-submodular function.
pub trait KOracle: Sync {
    fn ground_size(&self) -> usize;
    fn k(&self) -> usize;
    fn value(&self, s: &KAssignment) -> f64;
}

/// Closure-backed oracle, mainly for tests.
pub struct KFnOracle<F> {
    n: usize,
    k: usize,
    f: F,
}

impl<F: Fn(&KAssignment) -> f64 + Sync> KFnOracle<F> {
    pub fn new(n: usize, k: usize, f: F) -> Self {
        KFnOracle { n, k, f }
    }
}

impl<F: Fn(&KAssignment) -> f64 + Sync> KOracle for KFnOracle<F> {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn k(&self) -> usize {
        self.k
    }

    fn value(&self, s: &KAssignment) -> f64 {
        (self.f)(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KFamily {
    /// Right vertices with one neighbourhood per topic; value `Σ_i |covered_i| / (k|V|)`.
    KTopicCoverage,
    /// Clients with one similarity row per topic; value `Σ_c Σ_i max_{e∈S_i} sim_i[c][e] / (k n_c)`.
    KFacilityLocation,
    /// `|supp(s)| / n`; holds no private records.
    SupportSize,
}

impl fmt::Display for KFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KFamily::KTopicCoverage => "k-topic-coverage",
            KFamily::KFacilityLocation => "k-facility-location",
            KFamily::SupportSize => "support-size",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KRecord {
    /// `topics[i]` is the neighbourhood of this right vertex under topic `i + 1`.
    Topics(Vec<ElementSet>),
    /// `rows[i][e]`: similarity to site `e` under topic `i + 1`, in `[0, 1]`.
    Similarities(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KDataset {
    family: KFamily,
    n_elements: usize,
    k: usize,
    records: Vec<KRecord>,
}

impl KDataset {
    pub fn new(family: KFamily, n_elements: usize, k: usize, records: Vec<KRecord>) -> Result<Self> {
        if n_elements > MAX_ELEMENTS {
            return Err(Error::capability(format!("{n_elements} elements exceeds the limit of {MAX_ELEMENTS}")));
        }
        if k == 0 || k > u8::MAX as usize {
            return Err(Error::input(format!("topic count must lie in 1..=255, got {k}")));
        }
        let full = ElementSet::full(n_elements);
        for (i, r) in records.iter().enumerate() {
            let ok = match (family, r) {
                (KFamily::KTopicCoverage, KRecord::Topics(t)) => t.len() == k && t.iter().all(|s| s.is_subset(full)),
                (KFamily::KFacilityLocation, KRecord::Similarities(rows)) => {
                    rows.len() == k
                        && rows.iter().all(|row| row.len() == n_elements && row.iter().all(|v| (0.0..=1.0).contains(v)))
                }
                _ => false,
            };
            if !ok {
                return Err(Error::input(format!("record {i} does not match the {family} schema")));
            }
        }
        Ok(KDataset { family, n_elements, k, records })
    }

    pub fn support_size(n_elements: usize, k: usize) -> Result<Self> {
        KDataset::new(KFamily::SupportSize, n_elements, k, Vec::new())
    }

    /// Each right vertex gets, per topic, between 0 and `max_degree` random neighbours.
    pub fn random_ktopics<R: Rng + ?Sized>(
        n_left: usize,
        n_right: usize,
        k: usize,
        max_degree: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let records = (0..n_right).map(|_| random_topics(n_left, k, max_degree, rng)).collect();
        KDataset::new(KFamily::KTopicCoverage, n_left, k, records)
    }

    pub fn random_kfacility<R: Rng + ?Sized>(n_clients: usize, n_sites: usize, k: usize, rng: &mut R) -> Result<Self> {
        let records = (0..n_clients).map(|_| random_ksims(n_sites, k, rng)).collect();
        KDataset::new(KFamily::KFacilityLocation, n_sites, k, records)
    }

    pub fn family(&self) -> KFamily {
        self.family
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn records(&self) -> &[KRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, s: &KAssignment) -> f64 {
        let n = self.n_elements as f64;
        match self.family {
            KFamily::SupportSize => {
                if n == 0.0 {
                    0.0
                } else {
                    s.support().len() as f64 / n
                }
            }
            _ if self.records.is_empty() => 0.0,
            _ => {
                let topics: Vec<ElementSet> = (1..=self.k).map(|i| s.topic(i)).collect();
                let total: f64 = self
                    .records
                    .iter()
                    .map(|r| match r {
                        KRecord::Topics(nb) => nb.iter().zip(&topics).filter(|(a, b)| a.intersects(**b)).count() as f64,
                        KRecord::Similarities(rows) => rows
                            .iter()
                            .zip(&topics)
                            .map(|(row, t)| t.iter().map(|e| row[e]).fold(0.0, f64::max))
                            .sum(),
                    })
                    .sum();
                total / (self.k as f64 * self.records.len() as f64)
            }
        }
    }

    /// Declared sensitivity: one record moves one `[0,1]` term of a mean. The support-size
    /// family holds no data and reports the nominal `1/n`.
    pub fn default_sensitivity(&self) -> f64 {
        match self.family {
            KFamily::SupportSize => 1.0 / self.n_elements.max(1) as f64,
            _ => 1.0 / self.records.len().max(1) as f64,
        }
    }

    pub fn replace_record(&self, index: usize, record: KRecord) -> Result<KDataset> {
        if index >= self.records.len() {
            return Err(Error::input(format!("record index {index} out of range for {} records", self.records.len())));
        }
        let mut records = self.records.clone();
        records[index] = record;
        KDataset::new(self.family, self.n_elements, self.k, records)
    }

    /// A fresh record of this schema: per-topic degree uniform in `0..=d_max` for coverage,
    /// uniform rows for facility location.
    pub fn fresh_record<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<KRecord> {
        match self.family {
            KFamily::KTopicCoverage => {
                let d_max = self
                    .records
                    .iter()
                    .flat_map(|r| match r {
                        KRecord::Topics(t) => t.iter().map(|s| s.len()).collect::<Vec<_>>(),
                        _ => Vec::new(),
                    })
                    .max()
                    .unwrap_or(1);
                Ok(random_topics(self.n_elements, self.k, d_max, rng))
            }
            KFamily::KFacilityLocation => Ok(random_ksims(self.n_elements, self.k, rng)),
            KFamily::SupportSize => Err(Error::input("the support-size family has no records")),
        }
    }
}

fn random_topics<R: Rng + ?Sized>(n_left: usize, k: usize, max_degree: usize, rng: &mut R) -> KRecord {
    let mut left: Vec<usize> = (0..n_left).collect();
    KRecord::Topics(
        (0..k)
            .map(|_| {
                let deg = rng.gen_range(0..=max_degree).min(n_left);
                left.shuffle(rng);
                ElementSet::from_indices(left.iter().copied().take(deg))
            })
            .collect(),
    )
}

fn random_ksims<R: Rng + ?Sized>(n_sites: usize, k: usize, rng: &mut R) -> KRecord {
    KRecord::Similarities((0..k).map(|_| (0..n_sites).map(|_| rng.gen::<f64>()).collect()).collect())
}

/// `D'` with record `index` replaced by a fresh draw.
pub fn make_kneighbor<R: Rng + ?Sized>(dataset: &KDataset, index: usize, rng: &mut R) -> Result<KDataset> {
    let record = dataset.fresh_record(rng)?;
    dataset.replace_record(index, record)
}

/// Dataset-backed k-submodular objective with a declared sensitivity and a call counter.
#[derive(Debug)]
pub struct KSetFunction {
    ground: GroundSet,
    dataset: Arc<KDataset>,
    sensitivity: f64,
    evaluations: AtomicU64,
}

impl KSetFunction {
    pub fn new(ground: GroundSet, dataset: KDataset) -> Result<Self> {
        let s = dataset.default_sensitivity();
        KSetFunction::with_sensitivity(ground, dataset, s)
    }

    pub fn with_sensitivity(ground: GroundSet, dataset: KDataset, sensitivity: f64) -> Result<Self> {
        if ground.len() != dataset.n_elements() {
            return Err(Error::input(format!(
                "ground set has {} elements, dataset expects {}",
                ground.len(),
                dataset.n_elements()
            )));
        }
        if !(sensitivity > 0.0) || !sensitivity.is_finite() {
            return Err(Error::input(format!("sensitivity must be positive, got {sensitivity}")));
        }
        Ok(KSetFunction { ground, dataset: Arc::new(dataset), sensitivity, evaluations: AtomicU64::new(0) })
    }

    pub fn ground(&self) -> &GroundSet {
        &self.ground
    }

    pub fn dataset(&self) -> &KDataset {
        &self.dataset
    }

    pub fn family(&self) -> KFamily {
        self.dataset.family()
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn evaluate(&self, s: &KAssignment) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.dataset.value(s)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    /// Same objective on another dataset, with a fresh counter.
    pub fn with_dataset(&self, dataset: KDataset) -> Result<KSetFunction> {
        KSetFunction::with_sensitivity(self.ground.clone(), dataset, self.sensitivity)
    }
}

impl KOracle for KSetFunction {
    fn ground_size(&self) -> usize {
        self.ground.len()
    }

    fn k(&self) -> usize {
        self.dataset.k()
    }

    fn value(&self, s: &KAssignment) -> f64 {
        self.evaluate(s)
    }
}

/// `Δ_{e,i} F(s)`.
pub fn marginal_ksub<F: KOracle + ?Sized>(f: &F, s: &KAssignment, e: usize, i: usize) -> Result<f64> {
    if e >= s.len() {
        return Err(Error::input(format!("element {e} outside ground set")));
    }
    if s.label(e) != 0 {
        return Err(Error::input(format!("element {e} is already assigned to topic {}", s.label(e))));
    }
    if i == 0 || i > f.k() {
        return Err(Error::input(format!("topic {i} outside 1..={}", f.k())));
    }
    Ok(f.value(&s.with(e, i)) - f.value(s))
}

/// Every assignment of `n` elements to `0..=k`, indexed in base `k+1` with element 0 lowest.
pub fn all_assignments(n: usize, k: usize) -> Result<Vec<KAssignment>> {
    let states = (k as u128 + 1).checked_pow(n as u32).filter(|&s| s <= 1 << 24);
    let states = states.ok_or_else(|| Error::capability(format!("(k+1)^n = {}^{} is too large to enumerate", k + 1, n)))?;
    Ok((0..states as usize)
        .map(|mut idx| {
            let labels = (0..n)
                .map(|_| {
                    let l = (idx % (k + 1)) as u8;
                    idx /= k + 1;
                    l
                })
                .collect();
            KAssignment { labels, k }
        })
        .collect())
}

/// A failing pair for `F(S) + F(T) >= F(S ⊓ T) + F(S ⊔ T)` or for monotonicity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KViolation {
    pub s: KAssignment,
    pub t: KAssignment,
    pub gap: f64,
}

/// Exhaustive k-submodularity check over all pairs of assignments.
pub fn meet_join_check<F: KOracle + ?Sized>(f: &F, tol: f64) -> Result<Option<KViolation>> {
    let (n, k) = (f.ground_size(), f.k());
    let states = (k + 1).checked_pow(n as u32).filter(|&s| s <= MEET_JOIN_CAP);
    if states.is_none() {
        return Err(Error::capability(format!("meet/join check enumerates (k+1)^n states; cap is {MEET_JOIN_CAP}")));
    }
    let all = all_assignments(n, k)?;
    let values: Vec<f64> = all.iter().map(|s| f.value(s)).collect();
    let index = |s: &KAssignment| s.labels.iter().rev().fold(0usize, |acc, &l| acc * (k + 1) + l as usize);
    for (a, s) in all.iter().enumerate() {
        for (b, t) in all.iter().enumerate().skip(a) {
            let lhs = values[a] + values[b];
            let rhs = values[index(&s.meet(t))] + values[index(&s.join(t))];
            if rhs - lhs > tol {
                return Ok(Some(KViolation { s: s.clone(), t: t.clone(), gap: rhs - lhs }));
            }
        }
    }
    Ok(None)
}

/// Exhaustive check of `Δ_{e,i} F(s) >= 0`.
pub fn check_kmonotone<F: KOracle + ?Sized>(f: &F, tol: f64) -> Result<Option<KViolation>> {
    let (n, k) = (f.ground_size(), f.k());
    for s in all_assignments(n, k)? {
        let base = f.value(&s);
        for e in (0..n).filter(|&e| s.label(e) == 0) {
            for i in 1..=k {
                let t = s.with(e, i);
                let gap = base - f.value(&t);
                if gap > tol {
                    return Ok(Some(KViolation { s, t, gap }));
                }
            }
        }
    }
    Ok(None)
}
