//! Uniform, partition and graphic matroids: independence and rank oracles, base exchange,
//! and membership in the matroid polytope `P(M) = {x >= 0 : x(S) <= r(S) for all S}`.

mod parse;

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setfn::{ElementSet, MAX_ELEMENTS};

pub use parse::{parse_matroid, read_matroid};

/// Default absolute tolerance for polytope membership.
pub const POLYTOPE_TOL: f64 = 1e-9;

/// Largest number of non-isolated vertices for graphic polytope checks.
const GRAPHIC_VERTEX_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatroidKind {
    Uniform { rank: usize },
    Partition { blocks: Vec<ElementSet>, capacities: Vec<usize> },
    Graphic { n_vertices: usize, edges: Vec<(usize, usize)> },
}

#[derive(Clone, Debug)]
pub struct Matroid {
    n: usize,
    kind: MatroidKind,
    rank: usize,
    constraints: OnceLock<Vec<(ElementSet, usize)>>,
}

impl PartialEq for Matroid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.kind == other.kind
    }
}

impl Matroid {
    pub fn uniform(n: usize, rank: usize) -> Result<Self> {
        check_size(n)?;
        Ok(Matroid::build(n, MatroidKind::Uniform { rank }))
    }

    /// Every element must belong to exactly one block.
    pub fn partition(n: usize, blocks: Vec<(Vec<usize>, usize)>) -> Result<Self> {
        check_size(n)?;
        let mut seen = ElementSet::EMPTY;
        let mut masks = Vec::with_capacity(blocks.len());
        let mut capacities = Vec::with_capacity(blocks.len());
        for (elements, cap) in blocks {
            let mask = ElementSet::from_indices(elements.iter().copied());
            if let Some(&e) = elements.iter().find(|&&e| e >= n) {
                return Err(Error::input(format!("partition block references element {e} outside 0..{n}")));
            }
            if mask.intersects(seen) || mask.len() != elements.len() {
                return Err(Error::input("partition blocks must be disjoint"));
            }
            seen = seen.union(mask);
            masks.push(mask);
            capacities.push(cap);
        }
        if seen != ElementSet::full(n) {
            return Err(Error::input("every element must belong to a partition block"));
        }
        Ok(Matroid::build(n, MatroidKind::Partition { blocks: masks, capacities }))
    }

    /// Cycle matroid of a multigraph; element `i` is `edges[i]`.
    pub fn graphic(n_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        check_size(edges.len())?;
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n_vertices || v >= n_vertices) {
            return Err(Error::input(format!("edge ({u},{v}) references a vertex outside 0..{n_vertices}")));
        }
        Ok(Matroid::build(edges.len(), MatroidKind::Graphic { n_vertices, edges }))
    }

    fn build(n: usize, kind: MatroidKind) -> Self {
        let mut m = Matroid { n, kind, rank: 0, constraints: OnceLock::new() };
        m.rank = m.rank_of(ElementSet::full(n));
        m
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &MatroidKind {
        &self.kind
    }

    /// `r(M)`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_independent(&self, set: ElementSet) -> bool {
        match &self.kind {
            MatroidKind::Uniform { rank } => set.len() <= *rank,
            MatroidKind::Partition { blocks, capacities } => {
                blocks.iter().zip(capacities).all(|(b, &cap)| b.intersection(set).len() <= cap)
            }
            MatroidKind::Graphic { n_vertices, edges } => {
                let mut uf = UnionFind::new(*n_vertices);
                set.iter().all(|e| uf.union(edges[e].0, edges[e].1))
            }
        }
    }

    /// `r_M(S)`; closed forms for uniform and partition, greedy otherwise.
    pub fn rank_of(&self, set: ElementSet) -> usize {
        match &self.kind {
            MatroidKind::Uniform { rank } => set.len().min(*rank),
            MatroidKind::Partition { blocks, capacities } => {
                blocks.iter().zip(capacities).map(|(b, &cap)| b.intersection(set).len().min(cap)).sum()
            }
            MatroidKind::Graphic { .. } => self.greedy_rank(set),
        }
    }

    /// Rank by greedy augmentation through the independence oracle.
    pub fn greedy_rank(&self, set: ElementSet) -> usize {
        self.greedy_extend(ElementSet::EMPTY, set.iter()).len()
    }

    fn greedy_extend(&self, start: ElementSet, order: impl Iterator<Item = usize>) -> ElementSet {
        order.fold(start, |acc, e| {
            if acc.contains(e) {
                acc
            } else {
                let next = acc.with(e);
                if self.is_independent(next) {
                    next
                } else {
                    acc
                }
            }
        })
    }

    pub fn is_base(&self, set: ElementSet) -> bool {
        set.len() == self.rank && self.is_independent(set)
    }

    /// Greedily extends an independent set to a base, scanning the ground set in order.
    pub fn extend_to_base(&self, set: ElementSet) -> Result<ElementSet> {
        if !self.is_independent(set) {
            return Err(Error::input("cannot extend a dependent set to a base"));
        }
        Ok(self.greedy_extend(set, 0..self.n))
    }

    /// Base by random greedy: shuffle `E`, add each element that keeps the set independent.
    pub fn random_base<R: Rng + ?Sized>(&self, rng: &mut R) -> ElementSet {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(rng);
        self.greedy_extend(ElementSet::EMPTY, order.into_iter())
    }

    /// Given `A ⊆ B` with `B` a base and `A ∪ {e}` independent, returns the first
    /// `e' ∈ B \ A` (in ground order) such that `B − e' + e` is a base.
    pub fn base_exchange(&self, a: ElementSet, base: ElementSet, e: usize) -> Result<usize> {
        if e >= self.n {
            return Err(Error::input(format!("element {e} outside ground set")));
        }
        if !a.is_subset(base) {
            return Err(Error::input("A must be a subset of the base"));
        }
        if !self.is_base(base) {
            return Err(Error::input("B is not a base"));
        }
        if a.contains(e) {
            return Err(Error::input(format!("element {e} is already in A")));
        }
        if !self.is_independent(a.with(e)) {
            return Err(Error::input("A + e is dependent"));
        }
        if base.contains(e) {
            return Ok(e);
        }
        base.difference(a)
            .iter()
            .find(|&f| self.is_independent(base.without(f).with(e)))
            .ok_or_else(|| Error::invariant(format!("no exchange partner for element {e}; matroid axioms violated")))
    }

    /// Linear constraints `x(S) <= b` that, with `x >= 0`, define `P(M)`.
    ///
    /// Uniform: singletons and `E`. Partition: singletons and blocks. Graphic: the forest
    /// constraints `x(E[U]) <= |U| − 1` over vertex subsets `U`.
    pub fn rank_constraints(&self) -> Result<&[(ElementSet, usize)]> {
        if let Some(c) = self.constraints.get() {
            return Ok(c);
        }
        if let MatroidKind::Graphic { edges, .. } = &self.kind {
            let active = active_vertices(edges);
            if active.len() > GRAPHIC_VERTEX_CAP {
                return Err(Error::capability(format!(
                    "graphic polytope check enumerates 2^{} vertex subsets (cap {GRAPHIC_VERTEX_CAP})",
                    active.len()
                )));
            }
        }
        Ok(self.constraints.get_or_init(|| self.build_constraints()))
    }

    fn build_constraints(&self) -> Vec<(ElementSet, usize)> {
        let singleton_bound = |e: usize| self.rank_of(ElementSet::singleton(e));
        let mut out: Vec<(ElementSet, usize)> = (0..self.n).map(|e| (ElementSet::singleton(e), singleton_bound(e))).collect();
        match &self.kind {
            MatroidKind::Uniform { rank } => {
                if self.n > 1 {
                    out.push((ElementSet::full(self.n), (*rank).min(self.n)));
                }
            }
            MatroidKind::Partition { blocks, capacities } => {
                for (b, &cap) in blocks.iter().zip(capacities) {
                    if b.len() > 1 {
                        out.push((*b, cap.min(b.len())));
                    }
                }
            }
            MatroidKind::Graphic { edges, .. } => {
                let active = active_vertices(edges);
                let pos: HashMap<usize, usize> = active.iter().enumerate().map(|(i, &v)| (v, i)).collect();
                let mut best: HashMap<ElementSet, usize> = HashMap::new();
                for u_mask in 1u64..(1u64 << active.len()) {
                    let inside = |v: usize| u_mask & (1 << pos[&v]) != 0;
                    let induced: ElementSet = edges
                        .iter()
                        .enumerate()
                        .filter(|(_, &(a, b))| inside(a) && inside(b))
                        .map(|(i, _)| i)
                        .collect();
                    if induced.len() < 2 {
                        continue;
                    }
                    let bound = u_mask.count_ones() as usize - 1;
                    best.entry(induced).and_modify(|b| *b = (*b).min(bound)).or_insert(bound);
                }
                let mut extra: Vec<_> = best.into_iter().collect();
                extra.sort_unstable();
                out.extend(extra);
            }
        }
        out
    }

    /// Membership of `x` in `P(M)` up to an absolute tolerance.
    pub fn polytope_contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        if x.len() != self.n {
            return Err(Error::input(format!("point has dimension {}, matroid has {} elements", x.len(), self.n)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("point has non-finite coordinates"));
        }
        if x.iter().any(|&v| v < -tol) {
            return Ok(false);
        }
        let constraints = self.rank_constraints()?;
        Ok(constraints.iter().all(|&(s, bound)| s.iter().map(|e| x[e]).sum::<f64>() <= bound as f64 + tol))
    }

    /// Every independent set, by pruned depth-first enumeration.
    pub fn independent_sets(&self) -> Result<Vec<ElementSet>> {
        const CAP: usize = 24;
        if self.n > CAP {
            return Err(Error::capability(format!("independent-set enumeration supports n <= {CAP}, got {}", self.n)));
        }
        let mut out = Vec::new();
        let mut stack = vec![(ElementSet::EMPTY, 0usize)];
        while let Some((set, next)) = stack.pop() {
            out.push(set);
            for e in next..self.n {
                let bigger = set.with(e);
                if self.is_independent(bigger) {
                    stack.push((bigger, e + 1));
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn bases(&self) -> Result<Vec<ElementSet>> {
        Ok(self.independent_sets()?.into_iter().filter(|s| s.len() == self.rank).collect())
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_ELEMENTS {
        return Err(Error::capability(format!("{n} elements exceeds the limit of {MAX_ELEMENTS}")));
    }
    Ok(())
}

fn active_vertices(edges: &[(usize, usize)]) -> Vec<usize> {
    let mut v: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}
