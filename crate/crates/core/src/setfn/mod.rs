//! Sensitive datasets and the monotone submodular objectives built on them.
//!
//! A [`Dataset`] is a list of private records. A [`SetFunction`] interprets the records through
//! one objective family and normalizes the value into `[0, 1]` with a public constant (the
//! number of records). Changing one record therefore moves the value by at most
//! `1 / |records|`, which is the declared sensitivity.

pub(crate) mod instance;
mod properties;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use instance::{parse_instance, read_instance, write_instance};
pub use properties::{check_monotone, check_submodular, PropertyKind, PropertyViolation};

/// Hard limit on the ground-set size; subsets are stored as 64-bit masks.
pub const MAX_ELEMENTS: usize = 64;

/// Largest ground set for which routines enumerate all `2^n` subsets.
pub const ENUMERATION_CAP: usize = 20;

/// A subset of the ground set, stored as a bitmask over element indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementSet(u64);

impl ElementSet {
    pub const EMPTY: ElementSet = ElementSet(0);

    pub fn from_bits(bits: u64) -> Self {
        ElementSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// All elements `0..n`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_ELEMENTS);
        if n == 64 {
            ElementSet(u64::MAX)
        } else {
            ElementSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(e: usize) -> Self {
        ElementSet(1u64 << e)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(ElementSet::EMPTY, |s, e| s.with(e))
    }

    pub fn contains(self, e: usize) -> bool {
        e < 64 && self.0 & (1u64 << e) != 0
    }

    pub fn with(self, e: usize) -> Self {
        ElementSet(self.0 | (1u64 << e))
    }

    pub fn without(self, e: usize) -> Self {
        ElementSet(self.0 & !(1u64 << e))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        ElementSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        ElementSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        ElementSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersects(self, other: Self) -> bool {
        self.0 & other.0 != 0
    }

    /// Element indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let e = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(e)
            }
        })
    }

    /// Characteristic vector of length `n`.
    pub fn indicator(self, n: usize) -> Vec<f64> {
        (0..n).map(|e| if self.contains(e) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for ElementSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for ElementSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        ElementSet::from_indices(iter)
    }
}

/// The ordered, uniquely named elements `E`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundSet {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl GroundSet {
    pub fn new<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if ids.len() > MAX_ELEMENTS {
            return Err(Error::capability(format!(
                "ground set has {} elements, at most {MAX_ELEMENTS} supported",
                ids.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::input(format!("duplicate element identifier `{id}`")));
            }
        }
        Ok(GroundSet { ids, index })
    }

    /// Elements named `{prefix}1 .. {prefix}n`.
    pub fn numbered(prefix: &str, n: usize) -> Result<Self> {
        GroundSet::new((1..=n).map(|i| format!("{prefix}{i}")))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, e: usize) -> &str {
        &self.ids[e]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::input(format!("unknown element identifier `{id}`")))
    }

    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<ElementSet> {
        ids.iter().try_fold(ElementSet::EMPTY, |s, id| Ok(s.with(self.index_of(id.as_ref())?)))
    }

    pub fn names(&self, set: ElementSet) -> Vec<String> {
        set.iter().map(|e| self.ids[e].clone()).collect()
    }
}

/// Value oracle for a set function over elements `0..ground_size()`.
pub trait SetOracle: Sync {
    fn ground_size(&self) -> usize;

    fn value(&self, set: ElementSet) -> f64;
}

/// Wraps a closure as a [`SetOracle`]; handy for modular, constant or deliberately broken functions.
pub struct FnOracle<F> {
    n: usize,
    f: F,
}

impl<F: Fn(ElementSet) -> f64 + Sync> FnOracle<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnOracle { n, f }
    }
}

impl<F: Fn(ElementSet) -> f64 + Sync> SetOracle for FnOracle<F> {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn value(&self, set: ElementSet) -> f64 {
        (self.f)(set)
    }
}

/// `F(S ∪ {e}) − F(S)`.
pub fn marginal_gain<F: SetOracle + ?Sized>(f: &F, set: ElementSet, e: usize) -> Result<f64> {
    if e >= f.ground_size() {
        return Err(Error::input(format!("element {e} outside ground set")));
    }
    if set.contains(e) {
        return Err(Error::input(format!("element {e} already in the set")));
    }
    Ok(f.value(set.with(e)) - f.value(set))
}

/// Values of `f` on every subset, indexed by bitmask.
pub fn tabulate<F: SetOracle + ?Sized>(f: &F) -> Result<Vec<f64>> {
    let n = f.ground_size();
    if n > ENUMERATION_CAP {
        return Err(Error::capability(format!(
            "cannot enumerate 2^{n} subsets (cap is n = {ENUMERATION_CAP})"
        )));
    }
    Ok((0..1u64 << n).map(|m| f.value(ElementSet(m))).collect())
}

/// Objective families shipped with the library.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Bipartite coverage: records are right-vertex neighborhoods, `F(S) = |N(S)| / |V|`.
    Coverage,
    /// Facility location: records are client similarity rows, `F(S) = mean_c max_{e∈S} sim(c, e)`.
    FacilityLocation,
    /// Averaging: records are private coverage valuations `F_i`, `F(S) = mean_i F_i(S)`.
    CppAverage,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Coverage => "coverage",
            Family::FacilityLocation => "facility-location",
            Family::CppAverage => "cpp-average",
        })
    }
}

/// One private record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Record {
    /// Ground elements adjacent to one right vertex.
    Neighbors(ElementSet),
    /// Similarity of one client to every site, each in `[0, 1]`.
    Similarities(Vec<f64>),
    /// A private coverage valuation: item `j` is covered by any element of `items[j]`.
    Valuation(Vec<ElementSet>),
}

impl Record {
    fn family(&self) -> Family {
        match self {
            Record::Neighbors(_) => Family::Coverage,
            Record::Similarities(_) => Family::FacilityLocation,
            Record::Valuation(_) => Family::CppAverage,
        }
    }

    /// Unnormalized contribution of this record to the objective, in `[0, 1]`.
    fn contribution(&self, set: ElementSet) -> f64 {
        match self {
            Record::Neighbors(nb) => {
                if nb.intersects(set) {
                    1.0
                } else {
                    0.0
                }
            }
            Record::Similarities(row) => set.iter().map(|e| row[e]).fold(0.0, f64::max),
            Record::Valuation(items) => {
                if items.is_empty() {
                    0.0
                } else {
                    let hit = items.iter().filter(|c| c.intersects(set)).count();
                    hit as f64 / items.len() as f64
                }
            }
        }
    }
}

/// Private records interpreted by one objective family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    family: Family,
    n_elements: usize,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(family: Family, n_elements: usize, records: Vec<Record>) -> Result<Self> {
        if n_elements > MAX_ELEMENTS {
            return Err(Error::capability(format!(
                "{n_elements} elements exceeds the limit of {MAX_ELEMENTS}"
            )));
        }
        let full = ElementSet::full(n_elements);
        for (i, r) in records.iter().enumerate() {
            if r.family() != family {
                return Err(Error::input(format!("record {i} does not belong to family {family}")));
            }
            match r {
                Record::Neighbors(nb) if !nb.is_subset(full) => {
                    return Err(Error::input(format!("record {i} references unknown elements")));
                }
                Record::Similarities(row) => {
                    if row.len() != n_elements {
                        return Err(Error::input(format!(
                            "record {i} has {} similarities, expected {n_elements}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::input(format!("record {i} has a similarity outside [0,1]")));
                    }
                }
                Record::Valuation(items) if items.iter().any(|c| !c.is_subset(full)) => {
                    return Err(Error::input(format!("record {i} references unknown elements")));
                }
                _ => {}
            }
        }
        Ok(Dataset { family, n_elements, records })
    }

    /// Bipartite coverage from per-right-vertex neighbor lists.
    pub fn coverage(n_left: usize, neighborhoods: Vec<Vec<usize>>) -> Result<Self> {
        let records = neighborhoods
            .into_iter()
            .map(|nb| {
                if let Some(&u) = nb.iter().find(|&&u| u >= n_left) {
                    return Err(Error::input(format!("left vertex {u} out of range")));
                }
                Ok(Record::Neighbors(ElementSet::from_indices(nb)))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(Family::Coverage, n_left, records)
    }

    pub fn facility_location(n_sites: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        Dataset::new(Family::FacilityLocation, n_sites, rows.into_iter().map(Record::Similarities).collect())
    }

    pub fn cpp_average(n_elements: usize, valuations: Vec<Vec<ElementSet>>) -> Result<Self> {
        Dataset::new(Family::CppAverage, n_elements, valuations.into_iter().map(Record::Valuation).collect())
    }

    /// Random bipartite coverage: each right vertex draws a degree in `1..=max_degree`
    /// and that many distinct left neighbors.
    pub fn random_coverage<R: Rng + ?Sized>(n_left: usize, n_right: usize, max_degree: usize, rng: &mut R) -> Result<Self> {
        let max_degree = max_degree.min(n_left).max(1);
        let records = (0..n_right).map(|_| random_neighbors(n_left, 1, max_degree, rng)).collect();
        Dataset::new(Family::Coverage, n_left, records)
    }

    pub fn random_facility_location<R: Rng + ?Sized>(n_clients: usize, n_sites: usize, rng: &mut R) -> Result<Self> {
        let records = (0..n_clients).map(|_| random_similarities(n_sites, rng)).collect();
        Dataset::new(Family::FacilityLocation, n_sites, records)
    }

    pub fn random_cpp_average<R: Rng + ?Sized>(
        n_individuals: usize,
        n_elements: usize,
        items: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let records = (0..n_individuals).map(|_| random_valuation(n_elements, items, rng)).collect();
        Dataset::new(Family::CppAverage, n_elements, records)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Normalized objective value; uncounted.
    pub fn value(&self, set: ElementSet) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let total: f64 = self.records.iter().map(|r| r.contribution(set)).sum();
        total / self.records.len() as f64
    }

    /// Declared sensitivity: replacing one record changes one `[0,1]` term of a mean.
    pub fn default_sensitivity(&self) -> f64 {
        1.0 / self.records.len().max(1) as f64
    }

    /// Copy of the dataset with record `index` replaced.
    pub fn replace_record(&self, index: usize, record: Record) -> Result<Dataset> {
        if index >= self.records.len() {
            return Err(Error::input(format!(
                "record index {index} out of range for {} records",
                self.records.len()
            )));
        }
        let mut records = self.records.clone();
        records[index] = record;
        Dataset::new(self.family, self.n_elements, records)
    }

    /// A freshly drawn record of this dataset's schema.
    ///
    /// Coverage draws a neighborhood of degree in `0..=d_max` (the current maximum degree);
    /// facility location draws a uniform similarity row; averaging draws a valuation with the
    /// same item count as record 0, each item covered with density 1/3.
    pub fn fresh_record<R: Rng + ?Sized>(&self, rng: &mut R) -> Record {
        match self.family {
            Family::Coverage => {
                let d_max = self
                    .records
                    .iter()
                    .map(|r| match r {
                        Record::Neighbors(nb) => nb.len(),
                        _ => 0,
                    })
                    .max()
                    .unwrap_or(1);
                random_neighbors(self.n_elements, 0, d_max, rng)
            }
            Family::FacilityLocation => random_similarities(self.n_elements, rng),
            Family::CppAverage => {
                let items = match self.records.first() {
                    Some(Record::Valuation(items)) => items.len(),
                    _ => 4,
                };
                random_valuation(self.n_elements, items, rng)
            }
        }
    }

    /// Human-readable description of the neighbor distribution, reported with audits.
    pub fn neighbor_generator(&self) -> &'static str {
        match self.family {
            Family::Coverage => "replace one neighborhood by a uniform random set of size uniform in 0..=max degree",
            Family::FacilityLocation => "replace one similarity row by i.i.d. uniform [0,1] values",
            Family::CppAverage => "replace one valuation by random item covers of density 1/3",
        }
    }
}

fn random_neighbors<R: Rng + ?Sized>(n_left: usize, min_deg: usize, max_deg: usize, rng: &mut R) -> Record {
    let deg = rng.gen_range(min_deg..=max_deg.max(min_deg)).min(n_left);
    let mut left: Vec<usize> = (0..n_left).collect();
    left.shuffle(rng);
    Record::Neighbors(ElementSet::from_indices(left.into_iter().take(deg)))
}

fn random_similarities<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Record {
    Record::Similarities((0..n_sites).map(|_| rng.gen::<f64>()).collect())
}

fn random_valuation<R: Rng + ?Sized>(n_elements: usize, items: usize, rng: &mut R) -> Record {
    Record::Valuation(
        (0..items)
            .map(|_| ElementSet::from_indices((0..n_elements).filter(|_| rng.gen_bool(1.0 / 3.0))))
            .collect(),
    )
}

/// `D'`: `D` with the record at `index` replaced by a fresh draw of the same schema.
pub fn make_neighbor<R: Rng + ?Sized>(dataset: &Dataset, index: usize, rng: &mut R) -> Result<Dataset> {
    if index >= dataset.len() {
        return Err(Error::input(format!(
            "record index {index} out of range for {} records",
            dataset.len()
        )));
    }
    let record = dataset.fresh_record(rng);
    dataset.replace_record(index, record)
}

/// A dataset-backed objective with a declared sensitivity and an evaluation counter.
#[derive(Debug)]
pub struct SetFunction {
    ground: GroundSet,
    dataset: Arc<Dataset>,
    sensitivity: f64,
    evaluations: AtomicU64,
}

impl SetFunction {
    pub fn new(ground: GroundSet, dataset: Dataset) -> Result<Self> {
        let sensitivity = dataset.default_sensitivity();
        SetFunction::with_sensitivity(ground, dataset, sensitivity)
    }

    pub fn with_sensitivity(ground: GroundSet, dataset: Dataset, sensitivity: f64) -> Result<Self> {
        if ground.len() != dataset.n_elements() {
            return Err(Error::input(format!(
                "ground set has {} elements but dataset expects {}",
                ground.len(),
                dataset.n_elements()
            )));
        }
        if !(sensitivity.is_finite() && sensitivity >= 0.0) {
            return Err(Error::input("sensitivity must be finite and non-negative"));
        }
        Ok(SetFunction { ground, dataset: Arc::new(dataset), sensitivity, evaluations: AtomicU64::new(0) })
    }

    /// Coverage objective over left vertices named `u1..un`.
    pub fn coverage(n_left: usize, neighborhoods: Vec<Vec<usize>>) -> Result<Self> {
        SetFunction::new(GroundSet::numbered("u", n_left)?, Dataset::coverage(n_left, neighborhoods)?)
    }

    pub fn ground(&self) -> &GroundSet {
        &self.ground
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn family(&self) -> Family {
        self.dataset.family()
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Counted evaluation `F_D(S)`.
    pub fn evaluate(&self, set: ElementSet) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.dataset.value(set)
    }

    /// Counted evaluation on named elements.
    pub fn evaluate_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<f64> {
        let set = self.ground.subset(ids)?;
        Ok(self.evaluate(set))
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    /// Same function with a zeroed evaluation counter.
    pub fn fresh(&self) -> SetFunction {
        SetFunction {
            ground: self.ground.clone(),
            dataset: Arc::clone(&self.dataset),
            sensitivity: self.sensitivity,
            evaluations: AtomicU64::new(0),
        }
    }

    /// `F_{D'}` for another dataset over the same ground set, keeping the declared sensitivity.
    pub fn with_dataset(&self, dataset: Dataset) -> Result<SetFunction> {
        SetFunction::with_sensitivity(self.ground.clone(), dataset, self.sensitivity)
    }
}

impl SetOracle for SetFunction {
    fn ground_size(&self) -> usize {
        self.ground.len()
    }

    fn value(&self, set: ElementSet) -> f64 {
        self.evaluate(set)
    }
}

/// `max_S |F_D(S) − F_{D'}(S)|` by exhaustive enumeration.
pub fn sensitivity_between(a: &Dataset, b: &Dataset) -> Result<f64> {
    if a.n_elements() != b.n_elements() {
        return Err(Error::input("datasets have different ground sets"));
    }
    let n = a.n_elements();
    if n > ENUMERATION_CAP {
        return Err(Error::capability(format!("cannot enumerate 2^{n} subsets")));
    }
    Ok((0..1u64 << n)
        .map(|m| (a.value(ElementSet(m)) - b.value(ElementSet(m))).abs())
        .fold(0.0, f64::max))
}

/// Largest deviation over `trials` random neighbors of `dataset` and all subsets.
pub fn measure_sensitivity<R: Rng + ?Sized>(dataset: &Dataset, trials: usize, rng: &mut R) -> Result<f64> {
    if trials == 0 {
        return Err(Error::input("at least one trial is required"));
    }
    if dataset.n_elements() > ENUMERATION_CAP {
        return Err(Error::capability(format!(
            "cannot enumerate 2^{} subsets (cap is n = {ENUMERATION_CAP})",
            dataset.n_elements()
        )));
    }
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let index = rng.gen_range(0..dataset.len());
        let neighbor = make_neighbor(dataset, index, rng)?;
        worst = worst.max(sensitivity_between(dataset, &neighbor)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// U = {u1,u2,u3}, V = {v1..v4}, edges u1v1 u1v2 u2v2 u2v3 u3v4.
    pub(crate) fn micro_coverage() -> SetFunction {
        SetFunction::coverage(3, vec![vec![0], vec![0, 1], vec![1], vec![2]]).unwrap()
    }

    #[test]
    fn coverage_values() {
        let f = micro_coverage();
        assert_eq!(f.evaluate_ids(&["u1", "u2"]).unwrap(), 0.75);
        assert_eq!(f.evaluate(ElementSet::EMPTY), 0.0);
        assert_eq!(f.evaluations(), 2);
        assert!(matches!(f.evaluate_ids(&["u9"]), Err(Error::Input(_))));
    }

    #[test]
    fn marginal_gains() {
        let f = micro_coverage();
        let u1 = ElementSet::singleton(0);
        assert_eq!(marginal_gain(&f, u1, 1).unwrap(), 0.25);
        // u1's neighbors {v1,v2} are already covered by {u1,u2}
        let s = ElementSet::from_indices([0, 1]);
        let g = SetFunction::coverage(3, vec![vec![0, 1], vec![0, 1], vec![1], vec![2]]).unwrap();
        assert_eq!(marginal_gain(&g, ElementSet::singleton(1), 0).unwrap(), 0.0);
        assert!(marginal_gain(&f, s, 0).is_err());

        let card = FnOracle::new(4, |s: ElementSet| s.len() as f64 / 4.0);
        assert_eq!(marginal_gain(&card, ElementSet::EMPTY, 2).unwrap(), 0.25);
    }

    #[test]
    fn cpp_average_of_identical_records_is_the_record() {
        let g = vec![ElementSet::from_indices([0, 1]), ElementSet::from_indices([2])];
        let d = Dataset::cpp_average(3, vec![g.clone(); 5]).unwrap();
        let single = Dataset::cpp_average(3, vec![g]).unwrap();
        for m in 0..8 {
            assert_eq!(d.value(ElementSet(m)), single.value(ElementSet(m)));
        }
    }

    #[test]
    fn neighbors_differ_in_one_record() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dataset::random_coverage(5, 3, 3, &mut rng).unwrap();
        let d2 = make_neighbor(&d, 1, &mut rng).unwrap();
        assert_eq!(d2.len(), 3);
        assert_eq!(d.records()[0], d2.records()[0]);
        assert_eq!(d.records()[2], d2.records()[2]);
        assert!(make_neighbor(&d, 3, &mut rng).is_err());

        let same = d.replace_record(1, d.records()[1].clone()).unwrap();
        assert_eq!(sensitivity_between(&d, &same).unwrap(), 0.0);
    }

    #[test]
    fn deleting_one_neighborhood_moves_coverage_by_one_quarter() {
        let f = micro_coverage();
        let emptied = f.dataset().replace_record(1, Record::Neighbors(ElementSet::EMPTY)).unwrap();
        assert_eq!(sensitivity_between(f.dataset(), &emptied).unwrap(), 0.25);
    }

    #[test]
    fn measured_sensitivity_within_declared_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let datasets = [
            Dataset::random_coverage(8, 6, 4, &mut rng).unwrap(),
            Dataset::random_facility_location(5, 8, &mut rng).unwrap(),
            Dataset::random_cpp_average(6, 8, 5, &mut rng).unwrap(),
        ];
        for d in &datasets {
            let measured = measure_sensitivity(d, 100, &mut rng).unwrap();
            assert!(measured <= d.default_sensitivity() + 1e-12, "{:?}: {measured}", d.family());
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_counted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = SetFunction::new(
            GroundSet::numbered("s", 6).unwrap(),
            Dataset::random_facility_location(4, 6, &mut rng).unwrap(),
        )
        .unwrap();
        let s = ElementSet::from_indices([1, 4]);
        let a = f.evaluate(s);
        let b = f.evaluate(s);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(f.evaluations(), 2);
        assert_eq!(f.fresh().evaluations(), 0);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(GroundSet::new(["a", "a"]).is_err());
        assert!(Dataset::coverage(2, vec![vec![3]]).is_err());
        assert!(Dataset::facility_location(2, vec![vec![0.5]]).is_err());
        assert!(Dataset::facility_location(1, vec![vec![1.5]]).is_err());
        let d = Dataset::coverage(2, vec![vec![0]]).unwrap();
        assert!(SetFunction::new(GroundSet::numbered("u", 3).unwrap(), d).is_err());
    }
}
