//! Laguerre cells of the log-cosine cost on the sphere.
//!
//! The cell of site `i` is the set of directions `n` minimizing
//! `-ln⟨n, x_i⟩ - ψ_i`. Lifting site `i` to `e^{ψ_i} x_i`, this is the normal
//! cone of the lifted point in the convex hull of all lifted points, so the
//! whole diagram comes out of one 3D hull.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hull::ConvexHull3;
use crate::integrate::{log_cost_kernel, radial_integral};
use crate::sphere::{SphericalPolygon, UnitVector, Vec3};

/// Adjusted costs closer than this are reported as a tie by [`LaguerreDiagram::cell_of`].
pub const TIE_TOL: f64 = 1e-12;

const INTEGRAL_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct LaguerreDiagram {
    sites: Vec<UnitVector>,
    weights: Vec<f64>,
    hull: ConvexHull3,
    cells: Vec<Option<SphericalPolygon>>,
    areas: Vec<f64>,
}

impl LaguerreDiagram {
    pub fn build(sites: &[UnitVector], weights: &[f64]) -> Result<Self> {
        if sites.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} sites but {} weights",
                sites.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite weight {w}")));
        }
        let lifted: Vec<Vec3> = sites
            .iter()
            .zip(weights)
            .map(|(x, w)| x.vec() * w.exp())
            .collect();
        let hull = ConvexHull3::new(lifted)?;
        let min_offset = hull.min_offset();
        if min_offset <= 0.0 {
            return Err(Error::DegenerateHull(format!(
                "origin is not interior to the lifted hull (min facet offset {min_offset:e})"
            )));
        }
        let cells: Vec<Option<SphericalPolygon>> = (0..sites.len())
            .map(|i| {
                hull.normal_cone(i).map(|normals| {
                    SphericalPolygon::new(normals.clone())
                        .unwrap_or_else(|_| SphericalPolygon::degenerate(normals))
                })
            })
            .collect();
        let areas = cells
            .iter()
            .map(|c| c.as_ref().map_or(0.0, SphericalPolygon::area))
            .collect();
        Ok(Self {
            sites: sites.to_vec(),
            weights: weights.to_vec(),
            hull,
            cells,
            areas,
        })
    }

    pub fn sites(&self) -> &[UnitVector] {
        &self.sites
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn hull(&self) -> &ConvexHull3 {
        &self.hull
    }

    /// Cell of site `i`, `None` when the site is absorbed.
    pub fn cell(&self, i: usize) -> Option<&SphericalPolygon> {
        self.cells[i].as_ref()
    }

    pub fn cells(&self) -> &[Option<SphericalPolygon>] {
        &self.cells
    }

    pub fn cell_area(&self, i: usize) -> f64 {
        self.areas[i]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Cell areas normalized to probabilities.
    pub fn masses(&self) -> Vec<f64> {
        self.areas.iter().map(|a| a / (4.0 * PI)).collect()
    }

    pub fn empty_cells(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.cells[i].is_none())
            .collect()
    }

    fn adjusted_cost(&self, i: usize, n: &UnitVector) -> f64 {
        let c = n.dot(&self.sites[i]);
        if c > 0.0 {
            -c.ln() - self.weights[i]
        } else {
            f64::INFINITY
        }
    }

    /// Minimal adjusted cost at `n` and the lowest index attaining it.
    pub fn assign(&self, n: &UnitVector) -> Result<(f64, usize)> {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.len() {
            let v = self.adjusted_cost(i, n);
            if v < best.0 {
                best = (v, i);
            }
        }
        if best.0.is_finite() {
            Ok(best)
        } else {
            Err(Error::Unreachable)
        }
    }

    /// Index of the cell containing `n`; fails on cell boundaries.
    pub fn cell_of(&self, n: &UnitVector) -> Result<usize> {
        let (best, i) = self.assign(n)?;
        let scale = 1.0 + best.abs();
        if let Some(j) =
            (0..self.len()).find(|&j| j != i && self.adjusted_cost(j, n) - best <= TIE_TOL * scale)
        {
            let (first, second) = (i.min(j), i.max(j));
            return Err(Error::Tie { first, second });
        }
        Ok(i)
    }

    /// `∫_{G_i} -ln⟨n, x_i⟩ dn` over the cell of site `i`.
    pub fn cell_cost_integral(&self, i: usize) -> f64 {
        self.cells[i]
            .as_ref()
            .filter(|c| !c.is_degenerate())
            .map_or(0.0, |c| {
                radial_integral(&self.sites[i], c.vertices(), log_cost_kernel, INTEGRAL_TOL)
            })
    }

    /// `∫ min_i (c(n, x_i) - ψ_i) dσ(n)` with σ the uniform probability.
    pub fn transform_integral(&self) -> f64 {
        (0..self.len())
            .map(|i| self.cell_cost_integral(i) - self.weights[i] * self.areas[i])
            .sum::<f64>()
            / (4.0 * PI)
    }

    /// Largest spread of adjusted costs among the sites on a common hull
    /// face, evaluated at the face normal. Zero up to rounding.
    pub fn vertex_cost_spread(&self) -> f64 {
        self.hull
            .faces()
            .iter()
            .map(|f| {
                let costs: Vec<f64> = f
                    .vertices
                    .iter()
                    .map(|&j| self.adjusted_cost(j, &f.normal))
                    .collect();
                let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Largest distance from a site to a vertex of its own cell.
    pub fn max_site_reach(&self) -> f64 {
        self.cells
            .iter()
            .zip(&self.sites)
            .filter_map(|(c, x)| c.as_ref().map(|c| (c, x)))
            .flat_map(|(c, x)| {
                c.vertices()
                    .iter()
                    .map(move |v| crate::sphere::geodesic_distance(v, x))
            })
            .fold(0.0, f64::max)
    }

    pub fn dump(&self) -> DiagramDump {
        DiagramDump {
            sites: self.sites.iter().map(|s| s.to_array()).collect(),
            weights: self.weights.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| {
                    c.as_ref()
                        .map(|c| c.vertices().iter().map(|v| v.to_array()).collect())
                })
                .collect(),
            areas: self.areas.clone(),
        }
    }
}

/// Serializable snapshot of a diagram for debugging.
#[derive(Debug, Clone, Serialize)]
pub struct DiagramDump {
    pub sites: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub cells: Vec<Option<Vec<[f64; 3]>>>,
    pub areas: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{uniform_point, SphereSampler};
    use crate::sphere::{cube_directions, tetrahedron_directions};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(seed: u64, n: usize, spread: f64) -> (Vec<UnitVector>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites = (0..n).map(|_| uniform_point(&mut rng)).collect();
        let weights = (0..n).map(|_| rng.random_range(-spread..spread)).collect();
        (sites, weights)
    }

    #[test]
    fn symmetric_diagrams() {
        let d = LaguerreDiagram::build(&cube_directions(), &[0.0; 8]).unwrap();
        for i in 0..8 {
            assert!((d.cell_area(i) - PI / 2.0).abs() < 1e-12);
        }
        let d = LaguerreDiagram::build(&tetrahedron_directions(), &[0.0; 4]).unwrap();
        for i in 0..4 {
            assert!((d.cell_area(i) - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn absorbed_site_has_empty_cell() {
        let mut sites = cube_directions();
        sites.push(UnitVector::e3());
        let mut w = vec![0.0; 9];
        w[8] = -10.0;
        let d = LaguerreDiagram::build(&sites, &w).unwrap();
        assert!(d.cell(8).is_none());
        assert_eq!(d.cell_area(8), 0.0);
        assert_eq!(d.empty_cells(), vec![8]);
    }

    #[test]
    fn degenerate_inputs() {
        let few = &cube_directions()[..3];
        assert!(matches!(
            LaguerreDiagram::build(few, &[0.0; 3]),
            Err(Error::DegenerateHull(_))
        ));
        // All sites in one hemisphere: origin outside.
        let cap: Vec<UnitVector> = cube_directions()
            .into_iter()
            .filter(|p| p.z() > 0.0)
            .collect();
        let mut sites = cap.clone();
        sites.push(UnitVector::e3());
        assert!(matches!(
            LaguerreDiagram::build(&sites, &[0.0; 5]),
            Err(Error::DegenerateHull(_))
        ));
    }

    #[test]
    fn random_diagram_invariants() {
        for seed in 0..20 {
            let (sites, w) = random_config(seed, 12, 0.2);
            let Ok(d) = LaguerreDiagram::build(&sites, &w) else {
                continue;
            };
            let total: f64 = d.areas().iter().sum();
            assert!((total - 4.0 * PI).abs() < 1e-9);
            assert!(d.vertex_cost_spread() < 1e-9);
            assert!(d.max_site_reach() < PI / 2.0);

            let shifted: Vec<f64> = w.iter().map(|v| v + 0.7).collect();
            let g = LaguerreDiagram::build(&sites, &shifted).unwrap();
            for i in 0..12 {
                assert!((g.cell_area(i) - d.cell_area(i)).abs() < 1e-12);
            }
            for i in 0..12 {
                let mut bumped = w.clone();
                bumped[i] += 1e-3;
                let b = LaguerreDiagram::build(&sites, &bumped).unwrap();
                assert!(b.cell_area(i) >= d.cell_area(i) - 1e-12);
            }
        }
    }

    #[test]
    fn cell_of_matches_polygon_membership() {
        let (sites, w) = random_config(5, 12, 0.2);
        let d = LaguerreDiagram::build(&sites, &w).unwrap();
        let probes = SphereSampler::new(9).points(1000);
        for p in &probes {
            let i = d.cell_of(p).unwrap();
            assert!(d.cell(i).unwrap().contains(p, 1e-12));
        }
        for (i, s) in cube_directions().iter().enumerate() {
            let c = LaguerreDiagram::build(&cube_directions(), &[0.0; 8]).unwrap();
            assert_eq!(c.cell_of(s).unwrap(), i);
        }
    }

    #[test]
    fn cube_cell_of_near_corner_and_ties() {
        let d = LaguerreDiagram::build(&cube_directions(), &[0.0; 8]).unwrap();
        // e3 is equidistant from the four upper cube vertices.
        assert!(matches!(
            d.cell_of(&UnitVector::e3()),
            Err(Error::Tie { .. })
        ));
        let target = cube_directions()
            .iter()
            .position(|p| p.x() > 0.0 && p.y() > 0.0 && p.z() > 0.0)
            .unwrap();
        let n = UnitVector::normalized(1.0 + 1e-3, 1.0, 1.0);
        assert_eq!(d.cell_of(&n).unwrap(), target);
    }

    #[test]
    fn areas_match_monte_carlo() {
        let (sites, w) = random_config(3, 12, 0.2);
        let d = LaguerreDiagram::build(&sites, &w).unwrap();
        let n = 200_000;
        let pts = SphereSampler::new(11).points(n);
        let mut counts = [0usize; 12];
        for p in &pts {
            counts[d.assign(p).unwrap().1] += 1;
        }
        for i in 0..12 {
            let est = crate::sampling::McEstimate::from_count(counts[i], n);
            assert!(
                est.agrees_with(d.cell_area(i) / (4.0 * PI), 4.0),
                "cell {i}: {est:?}"
            );
        }
    }

    #[test]
    fn transform_integral_matches_lattice_quadrature() {
        let (sites, w) = random_config(3, 12, 0.2);
        let d = LaguerreDiagram::build(&sites, &w).unwrap();
        let nodes = crate::sampling::fibonacci_lattice(1 << 18);
        let q: f64 = nodes.iter().map(|p| d.assign(p).unwrap().0).sum::<f64>() / nodes.len() as f64;
        assert!(
            (q - d.transform_integral()).abs() < 1e-4,
            "{q} vs {}",
            d.transform_integral()
        );
    }

    #[test]
    fn dump_serializes() {
        let d = LaguerreDiagram::build(&tetrahedron_directions(), &[0.0; 4]).unwrap();
        let json = serde_json::to_value(d.dump()).unwrap();
        assert_eq!(json["cells"].as_array().unwrap().len(), 4);
        assert_eq!(json["cells"][0].as_array().unwrap().len(), 3);
    }
}
