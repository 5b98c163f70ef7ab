//! Convex polytopes containing the origin, stored by their generating
//! vertices `ρᵢ xᵢ`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::{ConvexHull3, Face};
use crate::measure::{Atom, DiscreteMeasure};
use crate::sampling::{uniform_point, SphereSampler};
use crate::solver::DualPotentials;
use crate::sphere::{SphericalPolygon, UnitVector, Vec3};

/// Facet offsets must exceed this for the origin to count as interior.
pub const ORIGIN_MARGIN: f64 = 1e-10;
pub const DEFAULT_GAP_PROBES: usize = 1000;

#[derive(Debug, Clone)]
pub struct ConvexBody {
    directions: Vec<UnitVector>,
    radii: Vec<f64>,
    hull: ConvexHull3,
}

#[derive(Serialize, Deserialize)]
struct BodyVertex {
    dir: UnitVector,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct BodyFile {
    vertices: Vec<BodyVertex>,
}

impl ConvexBody {
    pub fn new(directions: Vec<UnitVector>, radii: Vec<f64>) -> Result<Self> {
        if directions.len() != radii.len() {
            return Err(Error::InvalidArgument(format!(
                "{} directions but {} radii",
                directions.len(),
                radii.len()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "radius {r} is not positive"
            )));
        }
        let points: Vec<Vec3> = directions
            .iter()
            .zip(&radii)
            .map(|(x, r)| x.vec() * *r)
            .collect();
        let hull = ConvexHull3::new(points)?;
        let absorbed: Vec<usize> = (0..directions.len())
            .filter(|&i| !hull.is_vertex(i))
            .collect();
        if !absorbed.is_empty() {
            return Err(Error::AbsorbedVertex(absorbed));
        }
        let min_offset = hull.min_offset();
        if !(min_offset > ORIGIN_MARGIN) {
            return Err(Error::OriginNotInterior { min_offset });
        }
        Ok(Self {
            directions,
            radii,
            hull,
        })
    }

    /// The body with vertices `e^{ψᵢ} xᵢ`.
    pub fn from_potentials(p: &DualPotentials) -> Result<Self> {
        Self::new(p.sites.clone(), p.psi.iter().map(|v| v.exp()).collect())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BodyFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("body file: {e}")))?;
        let (dirs, radii) = file.vertices.into_iter().map(|v| (v.dir, v.radius)).unzip();
        Self::new(dirs, radii)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let file = BodyFile {
            vertices: self
                .directions
                .iter()
                .zip(&self.radii)
                .map(|(&dir, &radius)| BodyVertex { dir, radius })
                .collect(),
        };
        serde_json::to_value(file).expect("body serializes")
    }

    /// Triangulated boundary in OBJ format, faces counterclockwise from outside.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for p in self.hull.points() {
            writeln!(out, "v {:.17e} {:.17e} {:.17e}", p.x, p.y, p.z).unwrap();
        }
        for t in self.hull.triangles() {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        out
    }

    pub fn directions(&self) -> &[UnitVector] {
        &self.directions
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn vertices(&self) -> &[Vec3] {
        self.hull.points()
    }

    pub fn facets(&self) -> &[Face] {
        self.hull.faces()
    }

    pub fn hull(&self) -> &ConvexHull3 {
        &self.hull
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(
            self.directions.clone(),
            self.radii.iter().map(|r| r * s).collect(),
        )
    }

    /// `h(n) = maxᵢ ρᵢ⟨xᵢ, n⟩`.
    pub fn support_function(&self, n: &UnitVector) -> f64 {
        self.hull
            .points()
            .iter()
            .map(|p| p.dot(n.vec()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Distance from the origin to the boundary along `x`.
    pub fn radial_function(&self, x: &UnitVector) -> f64 {
        self.facets()
            .iter()
            .filter_map(|f| {
                let c = f.normal.dot(x);
                (c > 0.0).then(|| f.offset / c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Normal cone of vertex `i` as a spherical polygon.
    pub fn normal_cone(&self, i: usize) -> SphericalPolygon {
        let normals = self
            .hull
            .normal_cone(i)
            .expect("every generator is a vertex");
        SphericalPolygon::new(normals.clone())
            .unwrap_or_else(|_| SphericalPolygon::degenerate(normals))
    }

    /// Atoms at the vertex directions weighted by normal-cone solid angle / 4π.
    pub fn curvature_measure(&self) -> Result<DiscreteMeasure> {
        let areas: Vec<f64> = (0..self.len())
            .map(|i| self.normal_cone(i).area())
            .collect();
        let total: f64 = areas.iter().sum();
        if (total - 4.0 * PI).abs() > 1e-9 {
            return Err(Error::DegenerateHull(format!(
                "normal cones cover {total} sr"
            )));
        }
        DiscreteMeasure::new(
            self.directions
                .iter()
                .zip(&areas)
                .map(|(&point, a)| Atom {
                    point,
                    mass: a / total,
                })
                .collect(),
        )
    }

    /// `{n : ⟨x, n⟩ ≤ 1 ∀x ∈ B}`: vertices at facet normals with radii 1/offset.
    pub fn polar_body(&self) -> Result<Self> {
        let (dirs, radii) = self
            .facets()
            .iter()
            .map(|f| (f.normal, 1.0 / f.offset))
            .unzip();
        Self::new(dirs, radii)
    }
}

/// `max r / min r - 1` for `r(u) = ρ_a(u)/ρ_b(u)` over `probes`.
pub fn homothety_gap(a: &ConvexBody, b: &ConvexBody, probes: &[UnitVector]) -> f64 {
    let (lo, hi) = probes.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), u| {
        let r = a.radial_function(u) / b.radial_function(u);
        (lo.min(r), hi.max(r))
    });
    hi / lo - 1.0
}

/// Seeded probe set plus every vertex direction of both bodies.
pub fn gap_probes(a: &ConvexBody, b: &ConvexBody, count: usize, seed: u64) -> Vec<UnitVector> {
    let mut probes = SphereSampler::new(seed).points(count);
    probes.extend_from_slice(a.directions());
    probes.extend_from_slice(b.directions());
    probes
}

/// Random polytope with exactly `vertices` vertices, radii in `[r_min, r_max]`
/// and the origin inside.
pub fn random_polytope(seed: u64, vertices: usize, r_min: f64, r_max: f64) -> ConvexBody {
    assert!(vertices >= 4, "a polytope needs at least 4 vertices");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut dirs: Vec<UnitVector> = Vec::new();
        let mut radii: Vec<f64> = Vec::new();
        for _ in 0..50 {
            while dirs.len() < vertices {
                dirs.push(uniform_point(&mut rng));
                radii.push(rng.random_range(r_min..=r_max));
            }
            match ConvexBody::new(dirs.clone(), radii.clone()) {
                Ok(b) => return b,
                Err(Error::AbsorbedVertex(bad)) => {
                    for &i in bad.iter().rev() {
                        dirs.remove(i);
                        radii.remove(i);
                    }
                }
                Err(_) => break,
            }
        }
    }
}
