//! Transport plans with bounded cost: rationalize μ, split σ into equal
//! small cells, and match atom copies to cells lying well inside the open
//! hemisphere around each atom.

mod matching;
mod partition;

pub use matching::{match_atoms, Matching};
pub use partition::{
    equal_area_partition, smallest_power_of_two, PartitionCell, Region, SpherePartition,
};

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::sphere::geodesic_distance;

/// Upper limit for the automatically chosen number of cells.
pub const MAX_DEFAULT_CELLS: usize = 1 << 14;

/// Largest-remainder rounding of `M μᵢ` with every `kᵢ ≥ 1` and `Σ kᵢ = M`.
pub fn rationalize_masses(mu: &DiscreteMeasure, m: usize) -> Result<Vec<usize>> {
    let n = mu.len();
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "M = {m} is below the atom count {n}"
        )));
    }
    let scaled: Vec<f64> = mu.masses().iter().map(|w| w * m as f64).collect();
    let mut k: Vec<usize> = scaled.iter().map(|s| (s.floor() as usize).max(1)).collect();
    let mut total: usize = k.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    // Ties go to the lower index (stable sort).
    order.sort_by(|&a, &b| (scaled[b] - k[b] as f64).total_cmp(&(scaled[a] - k[a] as f64)));
    for &i in order.iter().cycle().take(m.saturating_sub(total)) {
        k[i] += 1;
    }
    total = total.max(m);
    // Forcing kᵢ ≥ 1 can overshoot; take back from the most over-served atoms.
    while total > m {
        let i = (0..n)
            .filter(|&i| k[i] > 1)
            .max_by(|&a, &b| {
                (k[a] as f64 - scaled[a])
                    .total_cmp(&(k[b] as f64 - scaled[b]))
                    .then(b.cmp(&a))
            })
            .expect("M >= atom count leaves a reducible atom");
        k[i] -= 1;
        total -= 1;
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomMatch {
    pub atom: usize,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasiblePlan {
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub matches: Vec<AtomMatch>,
    pub sup_cost: f64,
    /// Largest certified distance between an atom and a point of its cells.
    #[serde(skip)]
    pub sup_distance: f64,
    #[serde(skip)]
    pub multiplicities: Vec<usize>,
    #[serde(skip)]
    pub partition: SpherePartition,
}

/// Distance bound an edge must meet: `π/2 - α/4`.
pub fn edge_radius(alpha: f64) -> f64 {
    FRAC_PI_2 - alpha / 4.0
}

/// Pairs atom copies with equal-area cells of diameter below `α/4`, allowing
/// atom `i` only cells certified inside `B(xᵢ, π/2 - α/4)`. With `m = None`
/// the smallest feasible power of two is used.
pub fn build_feasible_plan(
    mu: &DiscreteMeasure,
    alpha: f64,
    m: Option<usize>,
) -> Result<FeasiblePlan> {
    if !(alpha > 0.0 && alpha < 2.0 * std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} out of range"
        )));
    }
    let bound = alpha / 4.0;
    let m = match m {
        Some(m) => m,
        None => smallest_power_of_two(mu.len(), bound, MAX_DEFAULT_CELLS).ok_or_else(|| {
            let min_m = match equal_area_partition(MAX_DEFAULT_CELLS, bound) {
                Err(Error::InfeasibleDiameter { min_m, .. }) => min_m,
                _ => 0,
            };
            Error::InfeasibleDiameter { bound, min_m }
        })?,
    };
    let partition = equal_area_partition(m, bound)?;
    let k = rationalize_masses(mu, m)?;
    let radius = edge_radius(alpha);
    let adjacency: Vec<Vec<usize>> = mu
        .atoms()
        .iter()
        .map(|a| {
            partition
                .cells()
                .iter()
                .enumerate()
                .filter(|(_, c)| geodesic_distance(&c.center, &a.point) + c.diameter <= radius)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    match match_atoms(&k, &adjacency, m) {
        Matching::Deficient(w) => Err(Error::HallFailure(w)),
        Matching::Perfect(cells) => {
            let mut plan = FeasiblePlan {
                alpha,
                m,
                matches: cells
                    .into_iter()
                    .enumerate()
                    .map(|(atom, cells)| AtomMatch { atom, cells })
                    .collect(),
                sup_cost: f64::NAN,
                sup_distance: f64::NAN,
                multiplicities: k,
                partition,
            };
            let (d, c) = plan_cost_certificate(&plan, mu)?;
            plan.sup_distance = d;
            plan.sup_cost = c;
            Ok(plan)
        }
    }
}

/// Audits a plan: every matched cell, including its sample points, lies
/// within `π/2 - α/4` of its atom, and the supremum of the cost over all
/// matched pairs is at most `-ln sin(α/4)`. Returns `(sup distance, sup cost)`.
pub fn plan_cost_certificate(plan: &FeasiblePlan, mu: &DiscreteMeasure) -> Result<(f64, f64)> {
    let radius = edge_radius(plan.alpha);
    let mut sup_d: f64 = 0.0;
    let mut counts = vec![0usize; plan.m];
    for am in &plan.matches {
        let x = mu.atoms()[am.atom].point;
        if am.cells.len() != plan.multiplicities[am.atom] {
            return Err(Error::CertificateViolation(format!(
                "atom {} has {} cells, expected {}",
                am.atom,
                am.cells.len(),
                plan.multiplicities[am.atom]
            )));
        }
        for &j in &am.cells {
            counts[j] += 1;
            let cell = &plan.partition.cells()[j];
            // The cell lies within its radius of the center.
            let bound = geodesic_distance(&cell.center, &x) + cell.diameter;
            for p in cell.sample_points() {
                if geodesic_distance(&p, &x) > bound + 1e-12 {
                    return Err(Error::CertificateViolation(format!(
                        "cell {j} sample escapes its bound"
                    )));
                }
            }
            if bound > radius {
                return Err(Error::CertificateViolation(format!(
                    "atom {} to cell {j}: {bound} > {radius}",
                    am.atom
                )));
            }
            sup_d = sup_d.max(bound);
        }
    }
    if counts.iter().any(|&c| c != 1) {
        return Err(Error::CertificateViolation(
            "cells are not matched exactly once".into(),
        ));
    }
    let sup_cost = -sup_d.cos().ln();
    let limit = -(plan.alpha / 4.0).sin().ln();
    if sup_cost > limit * (1.0 + 1e-12) {
        return Err(Error::CertificateViolation(format!(
            "sup cost {sup_cost} > {limit}"
        )));
    }
    Ok((sup_d, sup_cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::alpha_margin;
    use crate::sphere::{cube_directions, tetrahedron_directions, UnitVector};

    fn two(masses: &[f64]) -> DiscreteMeasure {
        let pts = [UnitVector::e3(), -UnitVector::e3(), UnitVector::e1()];
        DiscreteMeasure::from_points(&pts[..masses.len()], masses).unwrap()
    }

    #[test]
    fn rationalization_examples() {
        assert_eq!(
            rationalize_masses(&two(&[0.5, 0.5]), 4).unwrap(),
            vec![2, 2]
        );
        assert_eq!(
            rationalize_masses(&two(&[1.0 / 3.0, 2.0 / 3.0]), 4).unwrap(),
            vec![1, 3]
        );
        let cube = DiscreteMeasure::uniform(&cube_directions()).unwrap();
        assert_eq!(rationalize_masses(&cube, 8).unwrap(), vec![1; 8]);
        // Forced minimum of one cell per atom.
        let k = rationalize_masses(&two(&[0.98, 0.01, 0.01]), 3).unwrap();
        assert_eq!(k, vec![1, 1, 1]);
        let k = rationalize_masses(&two(&[0.9, 0.05, 0.05]), 20).unwrap();
        assert_eq!(k.iter().sum::<usize>(), 20);
        assert!(k
            .iter()
            .zip([0.9, 0.05, 0.05])
            .all(|(&k, m)| (k as f64 / 20.0 - m).abs() <= 1.0 / 20.0));
    }

    #[test]
    fn cube_plan_with_margin() {
        let cube = DiscreteMeasure::uniform(&cube_directions()).unwrap();
        let alpha = alpha_margin(&cube, 15, 100_000, 42, 1e-3).unwrap().alpha;
        let plan = build_feasible_plan(&cube, alpha, None).unwrap();
        assert!(plan.sup_distance <= edge_radius(alpha));
        assert!(plan.sup_cost <= -(alpha / 4.0).sin().ln());
        for am in &plan.matches {
            assert_eq!(am.cells.len(), plan.m / 8);
        }
    }

    #[test]
    fn fixed_alpha_cube_plan() {
        let cube = DiscreteMeasure::uniform(&cube_directions()).unwrap();
        let plan = build_feasible_plan(&cube, 0.4, None).unwrap();
        assert!(plan.sup_cost <= -(0.1f64).sin().ln());
        // sin(0.1) = 0.0998334..., so the bound is 2.30425 (not -ln 0.1 = 2.30259).
        assert!((-(0.1f64).sin().ln() - 2.30425).abs() < 1e-5);
        let json = serde_json::to_value(&plan).unwrap();
        assert_eq!(json["M"], plan.m);
        assert_eq!(json["matches"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn single_atom_fails_hall() {
        let mu = DiscreteMeasure::uniform(&[UnitVector::e3()]).unwrap();
        match build_feasible_plan(&mu, 1.0, None) {
            Err(Error::HallFailure(w)) => {
                assert_eq!(w.atoms, vec![0]);
                assert!(w.demand > w.reachable_cells);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tetrahedron_plan() {
        let tet = DiscreteMeasure::uniform(&tetrahedron_directions()).unwrap();
        let alpha = alpha_margin(&tet, 15, 100_000, 42, 1e-3).unwrap().alpha;
        let plan = build_feasible_plan(&tet, alpha, None).unwrap();
        assert!(plan.sup_cost <= -(alpha / 4.0).sin().ln());
    }

    #[test]
    fn small_m_is_infeasible_for_small_cells() {
        let cube = DiscreteMeasure::uniform(&cube_directions()).unwrap();
        assert!(matches!(
            build_feasible_plan(&cube, 0.4, Some(8)),
            Err(Error::InfeasibleDiameter { .. })
        ));
    }
}
