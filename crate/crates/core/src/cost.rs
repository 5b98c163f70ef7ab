//! The logarithmic cost c(n, x) = −log⟨n, x⟩ and the machinery built on it:
//! c-transforms, c-cyclical monotonicity, chain potentials and the transport
//! map n ↦ T(n).

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::sphere::{geodesic_distance, UnitVector, Vec3};

/// Nonnegative extended real: a finite cost or +∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostValue {
    Finite(f64),
    Infinite,
}

impl CostValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, CostValue::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            CostValue::Finite(v) => Some(v),
            CostValue::Infinite => None,
        }
    }
}

impl PartialOrd for CostValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (CostValue::Finite(a), CostValue::Finite(b)) => a.partial_cmp(b),
            (CostValue::Finite(_), CostValue::Infinite) => Some(Ordering::Less),
            (CostValue::Infinite, CostValue::Finite(_)) => Some(Ordering::Greater),
            (CostValue::Infinite, CostValue::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for CostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostValue::Finite(v) => write!(f, "{v}"),
            CostValue::Infinite => write!(f, "+inf"),
        }
    }
}

/// c(n, x) = −log⟨n, x⟩ when ⟨n, x⟩ > 0, +∞ otherwise.
pub fn cost(n: &UnitVector, x: &UnitVector) -> CostValue {
    let d = n.dot(x);
    if d > 0.0 {
        // Rounding can push ⟨n, n⟩ a hair above 1.
        CostValue::Finite((-d.min(1.0).ln()).max(0.0))
    } else {
        CostValue::Infinite
    }
}

/// Margin below π/2 inside which the cost gradient is defined.
pub const GRADIENT_MARGIN: f64 = 1e-9;

/// Riemannian gradient of n ↦ c(n, x): magnitude tan d(n, x), pointing away
/// from x.
pub fn cost_gradient_n(n: &UnitVector, x: &UnitVector) -> Result<Vec3> {
    let d = geodesic_distance(n, x);
    if d >= std::f64::consts::FRAC_PI_2 - GRADIENT_MARGIN {
        return Err(Error::Domain { distance: d });
    }
    let c = n.dot(x);
    Ok(-(x.vec() - n.vec() * c) / c)
}

/// A potential sampled at finitely many sites (log scale).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePotential {
    sites: Vec<UnitVector>,
    values: Vec<f64>,
}

impl DiscretePotential {
    pub fn new(sites: Vec<UnitVector>, values: Vec<f64>) -> Result<Self> {
        if sites.is_empty() || sites.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} sites vs {} values",
                sites.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("value {i} is not finite")));
        }
        Ok(Self { sites, values })
    }

    pub fn sites(&self) -> &[UnitVector] {
        &self.sites
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same sites, all values shifted by `s`.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            sites: self.sites.clone(),
            values: self.values.iter().map(|v| v + s).collect(),
        }
    }

    /// Adjusted costs c(q, xᵢ) − vᵢ for every site (None where infinite).
    pub fn adjusted_costs(&self, q: &UnitVector) -> impl Iterator<Item = Option<f64>> + '_ {
        let q = *q;
        self.sites
            .iter()
            .zip(&self.values)
            .map(move |(x, v)| cost(&q, x).finite().map(|c| c - v))
    }

    /// min over sites of c(q, xᵢ) − vᵢ, with the minimizing index (lowest
    /// index on exact ties).
    pub fn c_transform_argmin(&self, q: &UnitVector) -> Result<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, a) in self.adjusted_costs(q).enumerate() {
            if let Some(a) = a {
                if best.is_none_or(|(b, _)| a < b) {
                    best = Some((a, i));
                }
            }
        }
        best.ok_or(Error::Unreachable)
    }

    /// The two smallest adjusted costs, for tie detection.
    pub(crate) fn two_smallest(
        &self,
        q: &UnitVector,
    ) -> Result<((f64, usize), Option<(f64, usize)>)> {
        let mut first: Option<(f64, usize)> = None;
        let mut second: Option<(f64, usize)> = None;
        for (i, a) in self.adjusted_costs(q).enumerate() {
            let Some(a) = a else { continue };
            if first.is_none_or(|(b, _)| a < b) {
                second = first;
                first = Some((a, i));
            } else if second.is_none_or(|(b, _)| a < b) {
                second = Some((a, i));
            }
        }
        first.map(|f| (f, second)).ok_or(Error::Unreachable)
    }
}

/// (min over sites of c(xᵢ, q) − vᵢ): the c-transform of a site potential.
pub fn c_transform(p: &DiscretePotential, q: &UnitVector) -> Result<f64> {
    p.c_transform_argmin(q).map(|(v, _)| v)
}

/// Outcome of the triple-transform consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleTransformReport {
    /// max over probes of |φ^{cc c} − φ|, φ the transform of the potential.
    pub deviation: f64,
    /// min over sites of ψ^{cc} − ψ (must be ≥ −1e−9).
    pub min_site_gain: f64,
    pub sites_ok: bool,
}

/// Evaluates φ = ψ^c on `probes`, transforms back to the sites (ψ^{cc}) and
/// forward again (ψ^{ccc}), reporting how far the triple transform moved φ.
pub fn double_transform_check(
    p: &DiscretePotential,
    probes: &[UnitVector],
) -> Result<DoubleTransformReport> {
    let phi: Vec<f64> = probes
        .iter()
        .map(|q| c_transform(p, q))
        .collect::<Result<_>>()?;
    let psi_cc: Vec<f64> = p
        .sites()
        .iter()
        .map(|x| {
            probes
                .iter()
                .zip(&phi)
                .filter_map(|(n, f)| cost(n, x).finite().map(|c| c - f))
                .min_by(f64::total_cmp)
                .ok_or(Error::Unreachable)
        })
        .collect::<Result<_>>()?;
    let back = DiscretePotential::new(p.sites().to_vec(), psi_cc.clone())?;
    let mut deviation: f64 = 0.0;
    for (q, f) in probes.iter().zip(&phi) {
        deviation = deviation.max((c_transform(&back, q)? - f).abs());
    }
    let min_site_gain = psi_cc
        .iter()
        .zip(p.values())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    Ok(DoubleTransformReport {
        deviation,
        min_site_gain,
        sites_ok: min_site_gain >= -1e-9,
    })
}

/// Pairs (n, x) with finite cost.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pairs: Vec<(UnitVector, UnitVector)>,
    /// c(nᵢ, xᵢ), cached.
    own: Vec<f64>,
}

impl PairSet {
    pub fn new(pairs: Vec<(UnitVector, UnitVector)>) -> Result<Self> {
        let own = pairs
            .iter()
            .enumerate()
            .map(|(i, (n, x))| {
                cost(n, x)
                    .finite()
                    .ok_or_else(|| Error::InvalidArgument(format!("pair {i} has infinite cost")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { pairs, own })
    }

    pub fn pairs(&self) -> &[(UnitVector, UnitVector)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Weight of moving xᵢ from nᵢ to `target`: c(target, xᵢ) − c(nᵢ, xᵢ).
    fn arc(&self, i: usize, target: &UnitVector) -> Option<f64> {
        cost(target, &self.pairs[i].1)
            .finite()
            .map(|c| c - self.own[i])
    }

    /// Total weight of the cyclic reassignment along `cycle`, +∞ as None.
    pub fn cycle_gap(&self, cycle: &[usize]) -> Option<f64> {
        let s = cycle.len();
        let mut total = 0.0;
        for k in 0..s {
            total += self.arc(cycle[k], &self.pairs[cycle[(k + 1) % s]].0)?;
        }
        Some(total)
    }
}

/// Result of a c-cyclical monotonicity check.
#[derive(Debug, Clone, PartialEq)]
pub enum Monotonicity {
    Pass,
    /// Reassigning xᵢₖ to nᵢₖ₊₁ along `cycle` lowers the total cost by `-gap`.
    Violation {
        cycle: Vec<usize>,
        gap: f64,
    },
}

/// Largest set checked by exhaustive tuple enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 12;

fn violation_tol(s: &PairSet, cycle: &[usize]) -> f64 {
    1e-12 * (1.0 + cycle.iter().map(|&i| s.own[i]).sum::<f64>())
}

/// Checks every cyclic reassignment of at most `max_cycle_len` pairs.
///
/// Sets of up to [`EXHAUSTIVE_LIMIT`] pairs are enumerated tuple by tuple and
/// the first violation in (length, lexicographic) order is returned. Larger
/// sets use min-plus walk relaxation, which finds a negative closed walk of
/// bounded length whenever a violating cycle exists.
pub fn check_c_cyclical_monotonicity(s: &PairSet, max_cycle_len: usize) -> Result<Monotonicity> {
    if max_cycle_len < 2 {
        return Err(Error::InvalidArgument("max_cycle_len must be >= 2".into()));
    }
    let len = max_cycle_len.min(s.len());
    if s.len() <= EXHAUSTIVE_LIMIT {
        Ok(exhaustive_cycles(s, len))
    } else {
        Ok(walk_relaxation(s, len))
    }
}

fn exhaustive_cycles(s: &PairSet, max_len: usize) -> Monotonicity {
    fn extend(
        s: &PairSet,
        cycle: &mut Vec<usize>,
        target: usize,
        used: &mut [bool],
    ) -> Option<(Vec<usize>, f64)> {
        if cycle.len() == target {
            let gap = s.cycle_gap(cycle)?;
            return (gap < -violation_tol(s, cycle)).then(|| (cycle.clone(), gap));
        }
        // The first index is the cycle's minimum (canonical rotation).
        for j in (cycle[0] + 1)..s.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            cycle.push(j);
            let hit = extend(s, cycle, target, used);
            cycle.pop();
            used[j] = false;
            if hit.is_some() {
                return hit;
            }
        }
        None
    }
    let mut used = vec![false; s.len()];
    for target in 2..=max_len {
        for start in 0..s.len() {
            used[start] = true;
            let hit = extend(s, &mut vec![start], target, &mut used);
            used[start] = false;
            if let Some((cycle, gap)) = hit {
                return Monotonicity::Violation { cycle, gap };
            }
        }
    }
    Monotonicity::Pass
}

fn walk_relaxation(s: &PairSet, max_len: usize) -> Monotonicity {
    let m = s.len();
    let w: Vec<Vec<Option<f64>>> = (0..m)
        .map(|i| (0..m).map(|j| s.arc(i, &s.pairs[j].0)).collect())
        .collect();
    for start in 0..m {
        // best[k][v]: cheapest walk of k arcs from `start` to v.
        let mut best = vec![vec![f64::INFINITY; m]; max_len + 1];
        let mut pred = vec![vec![usize::MAX; m]; max_len + 1];
        best[0][start] = 0.0;
        for k in 1..=max_len {
            for u in 0..m {
                let bu = best[k - 1][u];
                if !bu.is_finite() {
                    continue;
                }
                for v in 0..m {
                    if let Some(a) = w[u][v] {
                        if u != v && bu + a < best[k][v] {
                            best[k][v] = bu + a;
                            pred[k][v] = u;
                        }
                    }
                }
            }
            if best[k][start] < -1e-12 {
                let mut walk = vec![start];
                let mut v = start;
                for kk in (1..=k).rev() {
                    v = pred[kk][v];
                    walk.push(v);
                }
                walk.pop();
                walk.reverse();
                if let Some((cycle, gap)) = negative_simple_cycle(s, &walk) {
                    return Monotonicity::Violation { cycle, gap };
                }
            }
        }
    }
    Monotonicity::Pass
}

/// Splits a closed walk into simple cycles and returns a violating one.
fn negative_simple_cycle(s: &PairSet, walk: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut stack: Vec<usize> = Vec::new();
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    for &v in walk.iter().chain(std::iter::once(&walk[0])) {
        if let Some(pos) = stack.iter().position(|&u| u == v) {
            cycles.push(stack.split_off(pos));
        }
        stack.push(v);
    }
    cycles
        .into_iter()
        .filter(|c| c.len() >= 2)
        .filter_map(|c| s.cycle_gap(&c).map(|g| (c, g)))
        .find(|(c, g)| *g < -violation_tol(s, c))
}

/// A potential built by shortest chains over a pair set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPotential {
    /// φ(nᵢ) for each pair.
    pub pair_values: Vec<f64>,
    /// φ at each probe.
    pub probe_values: Vec<f64>,
    nodes: Vec<UnitVector>,
}

impl ChainPotential {
    /// inf over evaluated nodes n of c(n, x) − φ(n).
    pub fn c_transform_at(&self, x: &UnitVector) -> Option<f64> {
        self.nodes
            .iter()
            .zip(self.pair_values.iter().chain(&self.probe_values))
            .filter_map(|(n, f)| cost(n, x).finite().map(|c| c - f))
            .min_by(f64::total_cmp)
    }
}

/// φ(n) = inf over chains n₀ → … → nₛ → n of Σ c(nₖ₊₁, xₖ) − c(nₖ, xₖ),
/// computed by Bellman–Ford from the base pair.
pub fn chain_potential(
    s: &PairSet,
    base_index: usize,
    probes: &[UnitVector],
) -> Result<ChainPotential> {
    let m = s.len();
    if base_index >= m {
        return Err(Error::InvalidArgument(format!(
            "base index {base_index} out of range"
        )));
    }
    let mut dist = vec![f64::INFINITY; m];
    dist[base_index] = 0.0;
    let relax = |dist: &mut Vec<f64>| -> Option<usize> {
        let mut changed = None;
        for i in 0..m {
            if !dist[i].is_finite() {
                continue;
            }
            for j in 0..m {
                if let Some(a) = s.arc(i, &s.pairs[j].0) {
                    let cand = dist[i] + a;
                    if cand < dist[j] - 1e-12 {
                        dist[j] = cand;
                        changed = Some(j);
                    }
                }
            }
        }
        changed
    };
    for _ in 0..m {
        if relax(&mut dist).is_none() {
            break;
        }
    }
    if let Some(j) = relax(&mut dist) {
        return Err(Error::NegativeCycle(j));
    }
    if let Some(j) = dist.iter().position(|d| !d.is_finite()) {
        return Err(Error::UnreachableNode(j));
    }
    let probe_values = probes
        .iter()
        .enumerate()
        .map(|(k, q)| {
            (0..m)
                .filter_map(|i| s.arc(i, q).map(|a| dist[i] + a))
                .min_by(f64::total_cmp)
                .ok_or(Error::UnreachableNode(m + k))
        })
        .collect::<Result<Vec<_>>>()?;
    let nodes = s
        .pairs
        .iter()
        .map(|p| p.0)
        .chain(probes.iter().copied())
        .collect();
    Ok(ChainPotential {
        pair_values: dist,
        probe_values,
        nodes,
    })
}

/// Tie tolerance for the transport map.
pub const MAP_TIE_TOL: f64 = 1e-9;

/// Gradient at n of φ(n) = minᵢ c(n, xᵢ) − ψᵢ, with the active site.
pub fn potential_gradient(p: &DiscretePotential, n: &UnitVector) -> Result<(Vec3, usize)> {
    let ((best, i), second) = p.two_smallest(n)?;
    if let Some((b2, j)) = second {
        if b2 - best <= MAP_TIE_TOL {
            return Err(Error::Tie {
                first: i.min(j),
                second: i.max(j),
            });
        }
    }
    Ok((cost_gradient_n(n, &p.sites()[i])?, i))
}

/// T(n) = exp_n(−(arctan|g| / |g|) g), g = ∇φ(n).
pub fn transport_map(p: &DiscretePotential, n: &UnitVector) -> Result<UnitVector> {
    let (g, _) = potential_gradient(p, n)?;
    let len = g.norm();
    if len == 0.0 {
        return Ok(*n);
    }
    Ok(n.exp(&(-g * (len.atan() / len))))
}
