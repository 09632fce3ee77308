//! Grid ρ-coverings of the matroid polytope and sampled verification of the covering radius.
//!
//! The lattice has step `h = ρ/√n` with levels `min(j h, 1)` for `j = 0..=⌈1/h⌉`. Flooring any
//! `x ∈ P(M)` onto the lattice stays in `P(M)` and moves it by at most `h √n = ρ`.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matroid::{Matroid, MatroidKind, POLYTOPE_TOL};
use crate::multilinear::FractionalPoint;
use crate::setfn::GroundSet;

/// Default cap on the number of lattice points `(⌈1/h⌉+1)^n`.
pub const DEFAULT_BUDGET: f64 = 2e6;

/// Slack for the reported covering radius.
pub const RADIUS_TOL: f64 = 1e-9;

const REJECTION_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Construction {
    Grid { step: f64 },
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Covering {
    points: Vec<FractionalPoint>,
    rho: f64,
    construction: Construction,
}

impl Covering {
    /// A covering from an explicit point list; the radius is a claim checked by [`verify_covering`].
    pub fn explicit(points: Vec<FractionalPoint>, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::input(format!("covering radius must be positive, got {rho}")));
        }
        if let Some(first) = points.first() {
            if points.iter().any(|p| p.len() != first.len()) {
                return Err(Error::input("covering points have inconsistent dimensions"));
            }
        }
        Ok(Covering { points, rho, construction: Construction::Explicit })
    }

    pub fn points(&self) -> &[FractionalPoint] {
        &self.points
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.points.first().map(FractionalPoint::len)
    }

    /// Largest Euclidean norm among the points.
    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| norm(p.coords())).fold(0.0, f64::max)
    }

    /// Rejects coverings whose dimension does not match the matroid.
    pub fn check_matroid(&self, m: &Matroid) -> Result<()> {
        match self.dimension() {
            Some(d) if d != m.ground_size() => Err(Error::input(format!(
                "covering has dimension {d}, matroid has {} elements",
                m.ground_size()
            ))),
            _ => Ok(()),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Lattice levels `min(j h, 1)`, `j = 0..=⌈1/h⌉`.
pub fn grid_levels(step: f64) -> Vec<f64> {
    let k = (1.0 / step - 1e-12).ceil().max(1.0) as usize;
    (0..=k).map(|j| if j == k { 1.0 } else { (j as f64 * step).min(1.0) }).collect()
}

pub fn build_grid_covering(m: &Matroid, rho: f64) -> Result<Covering> {
    build_grid_covering_with_budget(m, rho, DEFAULT_BUDGET)
}

/// All lattice points of step `ρ/√n` that lie in `P(M)`.
pub fn build_grid_covering_with_budget(m: &Matroid, rho: f64, budget: f64) -> Result<Covering> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::input(format!("covering radius must be positive, got {rho}")));
    }
    let n = m.ground_size();
    if n == 0 {
        return Ok(Covering { points: vec![FractionalPoint::zeros(0)], rho, construction: Construction::Grid { step: 1.0 } });
    }
    let step = rho / (n as f64).sqrt();
    let levels = grid_levels(step);
    let required = (levels.len() as f64).powi(n as i32);
    if required > budget {
        return Err(Error::capability(format!(
            "grid covering needs {required:.3e} lattice points ({} levels over {n} coordinates), budget is {budget:.3e}",
            levels.len()
        )));
    }
    let constraints = m.rank_constraints()?;
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ci, (s, _)) in constraints.iter().enumerate() {
        for e in s.iter() {
            touching[e].push(ci);
        }
    }
    let bounds: Vec<f64> = constraints.iter().map(|&(_, b)| b as f64 + POLYTOPE_TOL).collect();
    let mut sums = vec![0.0; constraints.len()];
    let mut coords = vec![0.0; n];
    let mut points = Vec::new();
    enumerate(0, &levels, &touching, &bounds, &mut sums, &mut coords, &mut points);
    Ok(Covering { points, rho, construction: Construction::Grid { step } })
}

/// Depth-first over coordinates; levels increase, so the first violation ends the loop.
fn enumerate(
    e: usize,
    levels: &[f64],
    touching: &[Vec<usize>],
    bounds: &[f64],
    sums: &mut [f64],
    coords: &mut [f64],
    out: &mut Vec<FractionalPoint>,
) {
    if e == coords.len() {
        out.push(FractionalPoint::new(coords.to_vec()).expect("lattice levels lie in [0,1]"));
        return;
    }
    for &v in levels {
        if touching[e].iter().any(|&c| sums[c] + v > bounds[c]) {
            break;
        }
        touching[e].iter().for_each(|&c| sums[c] += v);
        coords[e] = v;
        enumerate(e + 1, levels, touching, bounds, sums, coords, out);
        touching[e].iter().for_each(|&c| sums[c] -= v);
    }
    coords[e] = 0.0;
}

/// Random point of `P(M)`: rejection from the unit cube for uniform and partition matroids,
/// otherwise (or after repeated rejection) a random convex combination of bases, shrunk.
pub fn sample_polytope_point<R: Rng + ?Sized>(m: &Matroid, rng: &mut R) -> Result<FractionalPoint> {
    let n = m.ground_size();
    if matches!(m.kind(), MatroidKind::Uniform { .. } | MatroidKind::Partition { .. }) {
        for _ in 0..REJECTION_ATTEMPTS {
            let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            if m.polytope_contains(&x, 0.0)? {
                return FractionalPoint::new(x);
            }
        }
    }
    let parts = rng.gen_range(1..=n + 1);
    let weights: Vec<f64> = (0..parts).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = weights.iter().sum();
    let mut x = vec![0.0; n];
    for w in weights {
        for e in m.random_base(rng).iter() {
            x[e] += w / total;
        }
    }
    if rng.gen_bool(0.5) {
        let s: f64 = rng.gen();
        x.iter_mut().for_each(|v| *v *= s);
    } else {
        x.iter_mut().for_each(|v| *v *= rng.gen::<f64>());
    }
    FractionalPoint::new(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringCheck {
    pub samples: usize,
    pub max_distance: f64,
    pub rho: f64,
    pub passed: bool,
}

/// Distance from `x` to the nearest covering point.
pub fn nearest_distance(c: &Covering, x: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for p in &c.points {
        let mut acc = 0.0;
        for (a, b) in p.coords().iter().zip(x) {
            acc += (a - b) * (a - b);
            if acc >= best {
                break;
            }
        }
        best = best.min(acc);
    }
    best.sqrt()
}

/// Max over sampled `x ∈ P(M)` of the distance to the nearest point of `c`.
pub fn verify_covering<R: Rng + ?Sized>(c: &Covering, m: &Matroid, samples: usize, rng: &mut R) -> Result<CoveringCheck> {
    if c.is_empty() {
        return Err(Error::input("covering has no points"));
    }
    c.check_matroid(m)?;
    let xs = (0..samples).map(|_| sample_polytope_point(m, rng)).collect::<Result<Vec<_>>>()?;
    let max_distance = xs.par_iter().map(|x| nearest_distance(c, x.coords())).reduce(|| 0.0, f64::max);
    Ok(CoveringCheck { samples, max_distance, rho: c.rho, passed: max_distance <= c.rho + RADIUS_TOL })
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    rho: f64,
    construction: Construction,
    n_points: usize,
    ids: Vec<String>,
}

/// JSON metadata file written next to a covering CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes one point per row under a header of element ids, plus a JSON sidecar.
pub fn write_covering(c: &Covering, ground: &GroundSet, csv_path: &Path) -> Result<()> {
    if c.dimension().is_some_and(|d| d != ground.len()) {
        return Err(Error::input("covering dimension does not match the ground set"));
    }
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| csv_io(csv_path, e))?;
    w.write_record(ground.ids())?;
    for p in &c.points {
        w.write_record(p.coords().iter().map(|v| format!("{v}")))?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    let meta = Sidecar { rho: c.rho, construction: c.construction, n_points: c.len(), ids: ground.ids().to_vec() };
    let side = sidecar_path(csv_path);
    std::fs::write(&side, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&side, e))
}

pub fn read_covering(csv_path: &Path, ground: &GroundSet) -> Result<Covering> {
    let side = sidecar_path(csv_path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Sidecar = serde_json::from_str(&text)?;
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| csv_io(csv_path, e))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != ground.ids() {
        return Err(Error::input(format!("covering header {header:?} does not match the ground set")));
    }
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let coords = rec
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    path: csv_path.to_path_buf(),
                    line: i + 2,
                    msg: format!("invalid coordinate `{t}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(FractionalPoint::new(coords)?);
    }
    if points.len() != meta.n_points {
        return Err(Error::input(format!("sidecar lists {} points, csv has {}", meta.n_points, points.len())));
    }
    let mut c = Covering::explicit(points, meta.rho)?;
    c.construction = meta.construction;
    Ok(c)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serde(format!("{other:?}")),
    }
}
