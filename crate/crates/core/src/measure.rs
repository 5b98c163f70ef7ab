//! Discrete probability measures on S² and the admissibility condition
//! `μ(ω) < σ(ω_{π/2})` for proper convex `ω`.
//!
//! For an atomic μ it is enough to test ω = sconv(I) for atom subsets I:
//! shrinking any convex ω to the hull of the atoms it contains keeps μ(ω) and
//! can only shrink ω_{π/2}, whose measure is `1 - σ(polar(I))`.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{derive_seed, uniform_point, SphereSampler};
use crate::sphere::{polar_region, ConvexRegion, FiniteSphericalSet, UnitVector, MERGE_TOL};

/// Tolerance on the total mass of a validated measure.
pub const MASS_TOL: f64 = 1e-12;
/// Input files whose masses sum to 1 within this are renormalized.
pub const LOAD_MASS_TOL: f64 = 1e-6;
/// Slack must exceed this for a measure to be accepted.
pub const SLACK_TOL: f64 = 1e-12;
pub const DEFAULT_SUBSET_CAP: usize = 15;
pub const DEFAULT_ALPHA_TOL: f64 = 1e-3;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

const MAX_EXACT_ATOMS: usize = 30;
const HEURISTIC_DIRECTIONS: usize = 64;
const HEURISTIC_RANDOM_SUBSETS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(rename = "dir")]
    pub point: UnitVector,
    pub mass: f64,
}

/// `Σ mᵢ δ_{xᵢ}` with distinct points and unit total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    /// Merges coincident atoms and checks the invariants.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "mass {} is not positive",
                    a.mass
                )));
            }
            match merged
                .iter_mut()
                .find(|m| crate::sphere::geodesic_distance(&m.point, &a.point) <= MERGE_TOL)
            {
                Some(m) => m.mass += a.mass,
                None => merged.push(a),
            }
        }
        let mu = Self { atoms: merged };
        mu.validate()?;
        Ok(mu)
    }

    pub fn from_points(points: &[UnitVector], masses: &[f64]) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        Self::new(
            points
                .iter()
                .zip(masses)
                .map(|(&point, &mass)| Atom { point, mass })
                .collect(),
        )
    }

    /// Equal masses on the given points.
    pub fn uniform(points: &[UnitVector]) -> Result<Self> {
        let m = 1.0 / points.len() as f64;
        Self::from_points(points, &vec![m; points.len()])
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if let Some(a) = self
            .atoms
            .iter()
            .find(|a| !(a.mass.is_finite() && a.mass > 0.0))
        {
            return Err(Error::InvalidMeasure(format!(
                "mass {} is not positive",
                a.mass
            )));
        }
        let total: f64 = self.atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "total mass {total} differs from 1"
            )));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            for (j, b) in self.atoms.iter().enumerate().skip(i + 1) {
                if crate::sphere::geodesic_distance(&a.point, &b.point) <= MERGE_TOL {
                    return Err(Error::InvalidMeasure(format!("atoms {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeasureFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
        let total: f64 = file.atoms.iter().map(|a| a.mass).sum();
        if !((total - 1.0).abs() <= LOAD_MASS_TOL) {
            return Err(Error::InvalidMeasure(format!(
                "total mass {total} differs from 1"
            )));
        }
        Self::new(
            file.atoms
                .into_iter()
                .map(|a| Atom {
                    mass: a.mass / total,
                    ..a
                })
                .collect(),
        )
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(MeasureFile {
            atoms: self.atoms.clone(),
        })
        .expect("measure serializes")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn points(&self) -> Vec<UnitVector> {
        self.atoms.iter().map(|a| a.point).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min_mass(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.mass)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn subset_mass(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&i| self.atoms[i].mass).sum()
    }

    /// Applies `f` to every atom direction.
    pub fn map_points<F: Fn(&UnitVector) -> UnitVector>(&self, f: F) -> Result<Self> {
        Self::new(
            self.atoms
                .iter()
                .map(|a| Atom {
                    point: f(&a.point),
                    mass: a.mass,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub accepted: bool,
    pub worst_subset: Vec<usize>,
    pub worst_slack: f64,
    pub epsilon_margin: Option<f64>,
    pub alpha_margin: Option<f64>,
    pub alpha_binding_subset: Option<Vec<usize>>,
    pub mode: CheckMode,
}

fn subset_indices(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

/// `1 - σ(polar(I)) - μ(I)`, or `None` when sconv(I) is the whole sphere.
pub fn subset_slack(mu: &DiscreteMeasure, subset: &[usize]) -> Option<f64> {
    let set = FiniteSphericalSet::new(subset.iter().map(|&i| mu.atoms[i].point)).ok()?;
    match polar_region(&set) {
        ConvexRegion::Empty => None,
        polar => Some(1.0 - polar.measure() - mu.subset_mass(subset)),
    }
}

/// Smallest slack, ties broken towards the lexicographically smallest subset.
fn worst(slacks: impl Iterator<Item = (Vec<usize>, f64)>) -> Option<(Vec<usize>, f64)> {
    slacks.fold(None, |best, (s, v)| match best {
        Some((bs, bv)) if bv < v || (bv == v && bs <= s) => Some((bs, bv)),
        _ => Some((s, v)),
    })
}

fn exact_worst(mu: &DiscreteMeasure) -> (Vec<usize>, f64) {
    let n = mu.len();
    let slacks: Vec<Option<f64>> = (1u64..1 << n)
        .into_par_iter()
        .map(|mask| subset_slack(mu, &subset_indices(mask)))
        .collect();
    let found = worst(
        slacks
            .into_iter()
            .enumerate()
            .filter_map(|(k, s)| s.map(|v| (subset_indices(k as u64 + 1), v))),
    );
    // Only reachable if every subset hull is the full sphere, which the
    // singletons rule out.
    found.expect("singleton subsets always have a proper hull")
}

/// Candidate subsets when exhaustive enumeration is too large: prefixes of
/// the atoms sorted by closeness to random directions (caps), plus
/// singletons, small random subsets and the full set.
struct HeuristicFamily {
    orders: Vec<Vec<usize>>,
    extra: Vec<Vec<usize>>,
}

impl HeuristicFamily {
    fn new(mu: &DiscreteMeasure, seed: u64) -> Self {
        let n = mu.len();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA1E7));
        let orders = (0..HEURISTIC_DIRECTIONS)
            .map(|_| {
                let d = uniform_point(&mut rng);
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    d.dot(&mu.atoms[b].point)
                        .total_cmp(&d.dot(&mu.atoms[a].point))
                });
                order
            })
            .collect();
        let mut extra: BTreeSet<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for _ in 0..if n >= 2 { HEURISTIC_RANDOM_SUBSETS } else { 0 } {
            let size = rng.random_range(2..=4.min(n));
            let mut s: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
            s.sort_unstable();
            s.dedup();
            extra.insert(s);
        }
        extra.insert((0..n).collect());
        Self {
            orders,
            extra: extra.into_iter().collect(),
        }
    }

    /// Prefix of `order` with `len` atoms, sorted.
    fn prefix(order: &[usize], len: usize) -> Vec<usize> {
        let mut s = order[..len].to_vec();
        s.sort_unstable();
        s
    }

    fn subsets(&self) -> Vec<Vec<usize>> {
        let n = self.orders.first().map_or(0, Vec::len);
        let mut found: BTreeSet<Vec<usize>> = self.extra.iter().cloned().collect();
        for order in &self.orders {
            for len in 2..n {
                found.insert(Self::prefix(order, len));
            }
        }
        found.into_iter().collect()
    }
}

/// Exhaustive check over all atom subsets; fails above `subset_cap` atoms.
pub fn exact_alexandrov_check(
    mu: &DiscreteMeasure,
    subset_cap: usize,
) -> Result<AdmissibilityReport> {
    let n = mu.len();
    if n > subset_cap.min(MAX_EXACT_ATOMS) {
        return Err(Error::CapExceeded {
            atoms: n,
            cap: subset_cap.min(MAX_EXACT_ATOMS),
        });
    }
    let (worst_subset, worst_slack) = exact_worst(mu);
    Ok(report(worst_subset, worst_slack, CheckMode::Exact))
}

/// Exact check up to `subset_cap` atoms, seeded heuristic above it.
pub fn alexandrov_check(mu: &DiscreteMeasure, subset_cap: usize, seed: u64) -> AdmissibilityReport {
    exact_alexandrov_check(mu, subset_cap).unwrap_or_else(|_| {
        let subsets = HeuristicFamily::new(mu, seed).subsets();
        let slacks: Vec<Option<f64>> = subsets.par_iter().map(|s| subset_slack(mu, s)).collect();
        let (s, v) = worst(
            subsets
                .into_iter()
                .zip(slacks)
                .filter_map(|(s, v)| v.map(|v| (s, v))),
        )
        .expect("singleton subsets always have a proper hull");
        report(s, v, CheckMode::MonteCarlo)
    })
}

fn report(worst_subset: Vec<usize>, worst_slack: f64, mode: CheckMode) -> AdmissibilityReport {
    AdmissibilityReport {
        accepted: worst_slack > SLACK_TOL,
        worst_subset,
        worst_slack,
        epsilon_margin: None,
        alpha_margin: None,
        alpha_binding_subset: None,
        mode,
    }
}

/// `min_I [1 - μ(I) - σ(polar(I))]` over atom subsets with proper hull.
pub fn epsilon_margin(mu: &DiscreteMeasure, subset_cap: usize) -> Result<f64> {
    let r = exact_alexandrov_check(mu, subset_cap)?;
    if !r.accepted {
        return Err(Error::NotAdmissible {
            worst_slack: r.worst_slack,
        });
    }
    Ok(r.worst_slack)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaMargin {
    pub alpha: f64,
    /// Subset that fails first just above `alpha`.
    pub binding_subset: Vec<usize>,
}

/// Per-sample atom incidence for one neighborhood radius.
struct Incidence {
    words: usize,
    bits: Vec<u64>,
}

impl Incidence {
    fn new(samples: &[UnitVector], atoms: &[UnitVector], radius: f64) -> Self {
        let c = radius.cos();
        let words = atoms.len().div_ceil(64);
        let bits = samples
            .par_iter()
            .flat_map_iter(|y| {
                let mut row = vec![0u64; words];
                for (i, x) in atoms.iter().enumerate() {
                    if x.dot(y) > c {
                        row[i / 64] |= 1 << (i % 64);
                    }
                }
                row
            })
            .collect();
        Self { words, bits }
    }

    /// Hits for every subset of at most 20 atoms via a subset-sum transform.
    fn all_hits(&self, n: usize) -> Vec<usize> {
        let full = (1usize << n) - 1;
        let mut g = vec![0usize; 1 << n];
        for row in self.bits.chunks(self.words) {
            g[row[0] as usize] += 1;
        }
        for b in 0..n {
            for s in 0..=full {
                if s >> b & 1 == 1 {
                    g[s] += g[s ^ (1 << b)];
                }
            }
        }
        let total = self.bits.len() / self.words;
        (0..=full).map(|f| total - g[full ^ f]).collect()
    }
}

/// Smallest hit count `c` out of `k` samples with `c/k - 3·SE ≥ mass`.
fn required_hits(mass: f64, k: usize) -> usize {
    let kf = k as f64;
    let mut c = ((mass * kf).ceil() as usize).min(k);
    while c < k {
        let p = c as f64 / kf;
        if p - 3.0 * (p * (1.0 - p) / kf).sqrt() >= mass {
            break;
        }
        c += 1;
    }
    c
}

/// Largest α (to `tol`) such that `μ(F) ≤ σ(F_{π/2-α})` holds for every atom
/// subset F, with the Monte Carlo estimate lowered by three standard errors.
///
/// Up to 20 atoms every subset is tested by bisection on α. Above that the
/// heuristic family is used, and each subset's α is read off directly as an
/// order statistic of `maxᵢ∈F ⟨y, xᵢ⟩ = sin α` over the samples.
pub fn alpha_margin(
    mu: &DiscreteMeasure,
    subset_cap: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<AlphaMargin> {
    let check = alexandrov_check(mu, subset_cap, seed);
    if !check.accepted {
        return Err(Error::NotAdmissible {
            worst_slack: check.worst_slack,
        });
    }
    if samples == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "alpha margin needs samples > 0 and tol > 0".into(),
        ));
    }
    let ys = SphereSampler::new(seed).points(samples);
    if check.mode == CheckMode::Exact && mu.len() <= 20 {
        Ok(exact_alpha(mu, &ys, tol))
    } else {
        Ok(heuristic_alpha(mu, &ys, seed, tol))
    }
}

fn exact_alpha(mu: &DiscreteMeasure, ys: &[UnitVector], tol: f64) -> AlphaMargin {
    let n = mu.len();
    let atoms = mu.points();
    let subsets: Vec<Vec<usize>> = (1u64..1 << n).map(subset_indices).collect();
    // Rounding can push the full set's mass above 1.
    let masses: Vec<f64> = subsets.iter().map(|s| mu.subset_mass(s).min(1.0)).collect();
    let k = ys.len() as f64;

    // Smallest margin p̂ - 3SE - μ(F) and its subset at a given α.
    let evaluate = |alpha: f64| -> (f64, usize) {
        let all = Incidence::new(ys, &atoms, std::f64::consts::FRAC_PI_2 - alpha).all_hits(n);
        all[1..]
            .iter()
            .zip(&masses)
            .enumerate()
            .map(|(j, (&h, &m))| {
                let p = h as f64 / k;
                (p - 3.0 * (p * (1.0 - p) / k).sqrt() - m, j)
            })
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
    };

    let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2);
    let (at_zero, j0) = evaluate(lo);
    if at_zero < 0.0 {
        return AlphaMargin {
            alpha: 0.0,
            binding_subset: subsets[j0].clone(),
        };
    }
    let mut binding = evaluate(hi).1;
    while hi - lo > tol {
        let mid = (lo + hi) / 2.0;
        let (margin, j) = evaluate(mid);
        if margin >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
            binding = j;
        }
    }
    AlphaMargin {
        alpha: lo,
        binding_subset: subsets[binding].clone(),
    }
}

const SAMPLE_CHUNK: usize = 4096;

fn heuristic_alpha(mu: &DiscreteMeasure, ys: &[UnitVector], seed: u64, tol: f64) -> AlphaMargin {
    let n = mu.len();
    let atoms = mu.points();
    let family = HeuristicFamily::new(mu, seed);
    // Histograms of sin α = max dot, in bins of width 1/bins; α read from
    // the lower bin edge is within tol/2 / cos α below the sample value.
    let bins = ((2.0 / tol).ceil() as usize).clamp(16, 1 << 16);
    // Bin 0 also holds every v ≤ 0; it never contributes a positive α.
    let bin = |v: f64| {
        if v > 0.0 {
            ((v * bins as f64) as u32).min(bins as u32 - 1)
        } else {
            0
        }
    };

    // Per direction: difference table over bin (row) and prefix length, so a
    // sample whose running max sits in one bin for lengths [a, b) costs two
    // updates. Bins are monotone in v, so maxima can be taken on bins.
    let rows = n + 2;
    let mut prefix: Vec<Vec<i32>> = vec![vec![0; bins * rows]; family.orders.len()];
    let mut extra: Vec<Vec<u32>> = vec![vec![0; bins]; family.extra.len()];
    let mut binned = vec![0u32; SAMPLE_CHUNK * n];
    let mut tops = vec![0u32; SAMPLE_CHUNK];
    for chunk in ys.chunks(SAMPLE_CHUNK) {
        binned
            .par_chunks_mut(n)
            .zip(tops.par_iter_mut())
            .zip(chunk.par_iter())
            .for_each(|((row, top), y)| {
                for (b, x) in row.iter_mut().zip(&atoms) {
                    *b = bin(y.dot(x));
                }
                *top = row.iter().copied().max().unwrap_or(0);
            });
        let binned = &binned[..chunk.len() * n];
        let tops = &tops[..chunk.len()];
        prefix
            .par_iter_mut()
            .zip(&family.orders)
            .for_each(|(diff, order)| {
                for (row, &top) in binned.chunks(n).zip(tops) {
                    if top == 0 {
                        continue;
                    }
                    let (mut cur, mut start) = (0u32, 0usize);
                    for (pos, &i) in order.iter().enumerate() {
                        let b = row[i];
                        if b > cur {
                            if cur > 0 {
                                diff[cur as usize * rows + start] += 1;
                                diff[cur as usize * rows + pos + 1] -= 1;
                            }
                            cur = b;
                            start = pos + 1;
                            if cur == top {
                                break;
                            }
                        }
                    }
                    diff[cur as usize * rows + start] += 1;
                    diff[cur as usize * rows + n + 1] -= 1;
                }
            });
        extra
            .par_iter_mut()
            .zip(&family.extra)
            .for_each(|(hist, subset)| {
                for row in binned.chunks(n) {
                    let mut b = 0;
                    for &i in subset {
                        b = b.max(row[i]);
                    }
                    hist[b as usize] += 1;
                }
            });
    }

    let k = ys.len();
    // Largest α whose hit count still meets the requirement for this mass.
    let alpha_of = |hist: &[u32], mass: f64| -> f64 {
        let need = required_hits(mass, k);
        let mut tail = 0usize;
        for b in (1..bins).rev() {
            tail += hist[b] as usize;
            if tail >= need {
                return (b as f64 / bins as f64).asin();
            }
        }
        0.0
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut offer = |alpha: f64, subset: Vec<usize>| match &best {
        Some((a, s)) if *a < alpha || (*a == alpha && *s <= subset) => {}
        _ => best = Some((alpha, subset)),
    };
    for (hist, subset) in extra.iter().zip(&family.extra) {
        offer(
            alpha_of(hist, mu.subset_mass(subset).min(1.0)),
            subset.clone(),
        );
    }
    let masses = mu.masses();
    for (diff, order) in prefix.iter().zip(&family.orders) {
        let mut hist = vec![0u32; bins];
        let mut mass = 0.0;
        for len in 1..n {
            mass = (mass + masses[order[len - 1]]).min(1.0);
            for (b, h) in hist.iter_mut().enumerate() {
                *h = (*h as i64 + diff[b * rows + len] as i64) as u32;
            }
            if len >= 2 {
                offer(alpha_of(&hist, mass), HeuristicFamily::prefix(order, len));
            }
        }
    }
    let (alpha, binding_subset) = best.expect("the family always contains singletons");
    AlphaMargin {
        alpha,
        binding_subset,
    }
}

/// Admissibility check plus both margins when the measure is accepted.
pub fn admissibility_report(
    mu: &DiscreteMeasure,
    subset_cap: usize,
    samples: usize,
    seed: u64,
    alpha_tol: f64,
) -> Result<AdmissibilityReport> {
    let mut r = alexandrov_check(mu, subset_cap, seed);
    if r.accepted {
        r.epsilon_margin = Some(r.worst_slack);
        let a = alpha_margin(mu, subset_cap, samples, seed, alpha_tol)?;
        r.alpha_margin = Some(a.alpha);
        r.alpha_binding_subset = Some(a.binding_subset);
    }
    Ok(r)
}
