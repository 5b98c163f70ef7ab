//! Geometry on the unit sphere S² ⊂ R³.
//!
//! Everything here works with geodesically convex regions: polygons whose
//! edges are minor great-circle arcs, plus the handful of convex regions that
//! have no finite vertex description (hemispheres, lunes, the full sphere).

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{McEstimate, SphereSampler};

pub type Vec3 = Vector3<f64>;

/// Points closer than this (Euclidean) are the same point.
pub const MERGE_TOL: f64 = 1e-12;
/// Tolerance on signed plane distances in convexity and side tests.
pub const CONVEX_TOL: f64 = 1e-10;

/// A point of S².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector(Vec3);

impl UnitVector {
    /// Normalizes `(x, y, z)`; fails on zero or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::try_from_vec(Vec3::new(x, y, z))
    }

    pub fn try_from_vec(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidVector(format!("{:?}", [v.x, v.y, v.z])));
        }
        Ok(Self(v / n))
    }

    /// Normalizing constructor for internal callers that know `v != 0`.
    pub(crate) fn normalized(x: f64, y: f64, z: f64) -> Self {
        Self::from_vec(Vec3::new(x, y, z))
    }

    pub(crate) fn from_vec(v: Vec3) -> Self {
        let n = v.norm();
        debug_assert!(n > 0.0 && n.is_finite());
        Self(v / n)
    }

    pub fn e1() -> Self {
        Self(Vec3::x())
    }
    pub fn e2() -> Self {
        Self(Vec3::y())
    }
    pub fn e3() -> Self {
        Self(Vec3::z())
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn cross(&self, other: &UnitVector) -> Vec3 {
        self.0.cross(&other.0)
    }

    /// Clamped inner product, safe to feed to `acos`.
    pub fn cos_angle(&self, other: &UnitVector) -> f64 {
        self.dot(other).clamp(-1.0, 1.0)
    }

    /// Exponential map: follow the great circle from `self` along tangent `v`.
    pub fn exp(&self, v: &Vec3) -> UnitVector {
        let t = v - self.0 * self.0.dot(v);
        let len = t.norm();
        if len == 0.0 {
            return *self;
        }
        Self::from_vec(self.0 * len.cos() + t * (len.sin() / len))
    }

    /// Unit tangent at `self` pointing along the geodesic towards `target`.
    /// `None` when the two points coincide or are antipodal.
    pub fn direction_to(&self, target: &UnitVector) -> Option<Vec3> {
        let t = target.0 - self.0 * self.dot(target);
        let len = t.norm();
        (len > 1e-300).then(|| t / len)
    }
}

impl std::ops::Neg for UnitVector {
    type Output = UnitVector;
    fn neg(self) -> UnitVector {
        UnitVector(-self.0)
    }
}

impl TryFrom<[f64; 3]> for UnitVector {
    type Error = Error;
    fn try_from(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<UnitVector> for [f64; 3] {
    fn from(u: UnitVector) -> [f64; 3] {
        u.to_array()
    }
}

/// Great-circle distance in `[0, π]`.
pub fn geodesic_distance(u: &UnitVector, v: &UnitVector) -> f64 {
    // acos loses half the digits near 0 and π; atan2 of |u×v| and u·v does not.
    u.cross(v).norm().atan2(u.dot(v)).clamp(0.0, PI)
}

/// Signed area of the geodesic triangle (a, b, c), positive when
/// counterclockwise seen from outside the sphere.
pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let det = a.dot(&b.cross(c));
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * det.atan2(den)
}

fn unit_normal(a: &UnitVector, b: &UnitVector) -> Option<Vec3> {
    let m = a.cross(b);
    let n = m.norm();
    (n > MERGE_TOL).then(|| m / n)
}

fn dedup_points(points: impl IntoIterator<Item = UnitVector>) -> Vec<UnitVector> {
    let mut out: Vec<UnitVector> = Vec::new();
    for p in points {
        if !out.iter().any(|q| (q.0 - p.0).norm() < MERGE_TOL) {
            out.push(p);
        }
    }
    out
}

/// A nonempty finite set of sphere points, duplicates merged.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSphericalSet {
    points: Vec<UnitVector>,
}

impl FiniteSphericalSet {
    pub fn new(points: impl IntoIterator<Item = UnitVector>) -> Result<Self> {
        let points = dedup_points(points);
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty point set".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[UnitVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A geodesically convex polygon, stored counterclockwise as seen from
/// outside the sphere. Polygons with fewer than three vertices, or whose
/// vertices lie on one great circle, are DEGENERATE and have zero area.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalPolygon {
    vertices: Vec<UnitVector>,
    degenerate: bool,
}

impl SphericalPolygon {
    /// Builds a polygon from a cyclic vertex list in either orientation.
    pub fn new(vertices: Vec<UnitVector>) -> Result<Self> {
        let mut vertices = dedup_cyclic(vertices);
        let k = vertices.len();
        if k < 3 {
            return Ok(Self::degenerate(vertices));
        }
        for i in 0..k {
            let (a, b) = (&vertices[i], &vertices[(i + 1) % k]);
            if a.dot(b) < -1.0 + 1e-15 {
                return Err(Error::NonConvex(format!("antipodal edge {i}")));
            }
        }
        // Orientation from the largest signed plane distance.
        let mut dists = Vec::with_capacity(k * (k - 2));
        for i in 0..k {
            let (a, b) = (&vertices[i], &vertices[(i + 1) % k]);
            let Some(m) = unit_normal(a, b) else { continue };
            for (j, w) in vertices.iter().enumerate() {
                if j != i && j != (i + 1) % k {
                    dists.push((i, m.dot(&w.0)));
                }
            }
        }
        let extreme = dists
            .iter()
            .map(|&(_, d)| d)
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if extreme.abs() <= CONVEX_TOL {
            return Ok(Self::degenerate(vertices));
        }
        let sign = extreme.signum();
        if let Some(&(edge, d)) = dists.iter().find(|&&(_, d)| sign * d < -CONVEX_TOL) {
            return Err(Error::NonConvex(format!(
                "vertex on the wrong side of edge {edge} by {:e}",
                -sign * d
            )));
        }
        if sign < 0.0 {
            vertices.reverse();
        }
        Ok(Self {
            vertices,
            degenerate: false,
        })
    }

    /// A zero-area polygon (a point, an arc, or points on a great circle).
    pub fn degenerate(vertices: Vec<UnitVector>) -> Self {
        Self {
            vertices,
            degenerate: true,
        }
    }

    pub fn vertices(&self) -> &[UnitVector] {
        &self.vertices
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Area in steradians. Uses a fan of triangle excesses, which equals the
    /// interior-angle excess but stays accurate for very short edges.
    pub fn area(&self) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let v0 = &self.vertices[0].0;
        self.vertices[1..]
            .windows(2)
            .map(|w| triangle_area(v0, &w[0].0, &w[1].0))
            .sum()
    }

    /// Interior angles at each vertex.
    pub fn interior_angles(&self) -> Vec<f64> {
        let k = self.vertices.len();
        if self.degenerate {
            return vec![];
        }
        (0..k)
            .map(|i| {
                let v = &self.vertices[i];
                let prev = &self.vertices[(i + k - 1) % k];
                let next = &self.vertices[(i + 1) % k];
                match (v.direction_to(next), v.direction_to(prev)) {
                    (Some(a), Some(b)) => {
                        a.cross(&b).dot(&v.0).atan2(a.dot(&b)).rem_euclid(2.0 * PI)
                    }
                    _ => PI,
                }
            })
            .collect()
    }

    /// Σθₖ − (k − 2)π.
    pub fn angle_excess(&self) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let k = self.vertices.len() as f64;
        self.interior_angles().iter().sum::<f64>() - (k - 2.0) * PI
    }

    /// Outward-oriented (interior side positive) unit edge normals.
    pub fn edge_normals(&self) -> Vec<Vec3> {
        let k = self.vertices.len();
        (0..k)
            .filter_map(|i| unit_normal(&self.vertices[i], &self.vertices[(i + 1) % k]))
            .collect()
    }

    /// Closed membership with tolerance `tol` on plane distances.
    pub fn contains(&self, p: &UnitVector, tol: f64) -> bool {
        if self.degenerate {
            return false;
        }
        self.edge_normals().iter().all(|m| m.dot(&p.0) >= -tol)
    }

    /// Normalized vertex sum; interior for nondegenerate polygons.
    pub fn centroid_direction(&self) -> UnitVector {
        let s: Vec3 = self.vertices.iter().map(|v| v.0).sum();
        UnitVector::try_from_vec(s).unwrap_or(self.vertices[0])
    }
}

fn dedup_cyclic(vertices: Vec<UnitVector>) -> Vec<UnitVector> {
    let mut out: Vec<UnitVector> = Vec::with_capacity(vertices.len());
    for v in vertices {
        if out.last().is_none_or(|l| (l.0 - v.0).norm() >= MERGE_TOL) {
            out.push(v);
        }
    }
    while out.len() > 1 && (out[0].0 - out[out.len() - 1].0).norm() < MERGE_TOL {
        out.pop();
    }
    out
}

/// Geodesically convex subsets of S² produced by hulls and polars.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexRegion {
    Empty,
    FullSphere,
    /// Closed hemisphere {y : ⟨y, pole⟩ ≥ 0}.
    Hemisphere {
        pole: UnitVector,
    },
    /// {y : ⟨y, p₀⟩ ≥ 0 and ⟨y, p₁⟩ ≥ 0} for non-parallel poles.
    Lune {
        poles: [UnitVector; 2],
    },
    Polygon(SphericalPolygon),
}

impl ConvexRegion {
    pub fn area(&self) -> f64 {
        match self {
            ConvexRegion::Empty => 0.0,
            ConvexRegion::FullSphere => 4.0 * PI,
            ConvexRegion::Hemisphere { .. } => 2.0 * PI,
            ConvexRegion::Lune { poles } => 2.0 * (PI - geodesic_distance(&poles[0], &poles[1])),
            ConvexRegion::Polygon(p) => p.area(),
        }
    }

    /// Normalized measure σ = area / 4π.
    pub fn measure(&self) -> f64 {
        self.area() / (4.0 * PI)
    }

    pub fn as_polygon(&self) -> Option<&SphericalPolygon> {
        match self {
            ConvexRegion::Polygon(p) => Some(p),
            _ => None,
        }
    }
}

/// Structure of the polyhedral cone spanned by a finite point set.
struct ConeAnalysis<'a> {
    points: &'a [UnitVector],
    /// Extreme rays of the polar cone {y : ⟨y, x⟩ ≤ 0 ∀x}.
    polar_rays: Vec<UnitVector>,
}

impl<'a> ConeAnalysis<'a> {
    fn new(points: &'a [UnitVector]) -> Self {
        let mut rays: Vec<UnitVector> = Vec::new();
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let Some(u) = unit_normal(&points[i], &points[j]) else {
                    continue;
                };
                for cand in [u, -u] {
                    if points.iter().all(|x| cand.dot(&x.0) <= CONVEX_TOL)
                        && !rays.iter().any(|r| (r.0 - cand).norm() < 1e-9)
                    {
                        rays.push(UnitVector::from_vec(cand));
                    }
                }
            }
        }
        Self {
            points,
            polar_rays: rays,
        }
    }

    fn antipodal_ray(&self) -> Option<UnitVector> {
        let r = &self.polar_rays;
        for i in 0..r.len() {
            for j in (i + 1)..r.len() {
                if r[i].dot(&r[j]) < -1.0 + 1e-9 {
                    return Some(r[i]);
                }
            }
        }
        None
    }

    /// Points sorted by angle in the plane orthogonal to `axis`, plus the
    /// largest angular gap between neighbors and the index after it.
    fn planar_layout(&self, axis: &UnitVector) -> (Vec<(f64, UnitVector)>, f64, usize) {
        let (t1, t2) = tangent_basis(axis);
        let mut ang: Vec<(f64, UnitVector)> = self
            .points
            .iter()
            .map(|p| (p.0.dot(&t2).atan2(p.0.dot(&t1)), *p))
            .collect();
        ang.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = ang.len();
        let mut best = (0.0, 0);
        for i in 0..n {
            let next = (i + 1) % n;
            let mut gap = ang[next].0 - ang[i].0;
            if next == 0 {
                gap += 2.0 * PI;
            }
            if gap > best.0 {
                best = (gap, next);
            }
        }
        (ang, best.0, best.1)
    }

    /// Whether all points are ±a for a single axis a.
    fn collinear(&self) -> bool {
        let a = &self.points[0];
        self.points.iter().all(|p| a.cross(p).norm() < MERGE_TOL)
    }
}

fn tangent_basis(axis: &UnitVector) -> (Vec3, Vec3) {
    let a = axis.0;
    let helper = if a.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let t1 = (helper - a * a.dot(&helper)).normalize();
    let t2 = a.cross(&t1);
    (t1, t2)
}

/// Points sorted by azimuth around `axis`, which must be interior to the
/// pointed cone they span.
fn azimuth_order(points: &[UnitVector], axis: &UnitVector) -> Vec<UnitVector> {
    let (t1, t2) = tangent_basis(axis);
    let mut ang: Vec<(f64, UnitVector)> = points
        .iter()
        .map(|p| (p.0.dot(&t2).atan2(p.0.dot(&t1)), *p))
        .collect();
    ang.sort_by(|a, b| a.0.total_cmp(&b.0));
    ang.into_iter().map(|a| a.1).collect()
}

fn polygon_or_degenerate(vertices: Vec<UnitVector>) -> SphericalPolygon {
    SphericalPolygon::new(vertices.clone())
        .unwrap_or_else(|_| SphericalPolygon::degenerate(vertices))
}

/// Endpoints of the arc spanned by points of a great circle, or all points
/// (in angular order) when they are not contained in an open half-circle.
fn planar_extent(
    cone: &ConeAnalysis,
    axis: &UnitVector,
) -> (Vec<UnitVector>, Option<[UnitVector; 2]>) {
    let (ang, gap, after_gap) = cone.planar_layout(axis);
    let n = ang.len();
    if gap > PI + 1e-12 {
        let first = ang[after_gap].1;
        let last = ang[(after_gap + n - 1) % n].1;
        (vec![first, last], Some([first, last]))
    } else {
        (ang.into_iter().map(|a| a.1).collect(), None)
    }
}

/// Polar rays lying on one great circle: their extreme pair.
fn cocircular_extremes(rays: &[UnitVector]) -> Option<[UnitVector; 2]> {
    if rays.len() <= 2 {
        return Some(if rays.len() == 1 {
            [rays[0], rays[0]]
        } else {
            [rays[0], rays[1]]
        });
    }
    let mut best = (0.0, 0, 1);
    for i in 0..rays.len() {
        for j in (i + 1)..rays.len() {
            let d = geodesic_distance(&rays[i], &rays[j]);
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let m = unit_normal(&rays[best.1], &rays[best.2])?;
    rays.iter()
        .all(|r| m.dot(&r.0).abs() <= CONVEX_TOL)
        .then_some([rays[best.1], rays[best.2]])
}

/// Intersection of S² with the smallest convex cone containing `set`.
pub fn spherical_convex_hull(set: &FiniteSphericalSet) -> ConvexRegion {
    let pts = set.points();
    if pts.len() == 1 {
        return ConvexRegion::Polygon(SphericalPolygon::degenerate(pts.to_vec()));
    }
    let cone = ConeAnalysis::new(pts);
    if cone.polar_rays.is_empty() {
        if cone.collinear() {
            return ConvexRegion::Polygon(SphericalPolygon::degenerate(pts.to_vec()));
        }
        return ConvexRegion::FullSphere;
    }
    if let Some(axis) = cone.antipodal_ray() {
        // Every point lies on the great circle orthogonal to `axis`.
        let (verts, _) = planar_extent(&cone, &axis);
        return ConvexRegion::Polygon(SphericalPolygon::degenerate(verts));
    }
    match cocircular_extremes(&cone.polar_rays) {
        Some([w0, w1]) if w0 == w1 => ConvexRegion::Hemisphere { pole: -w0 },
        Some([w0, w1]) => ConvexRegion::Lune { poles: [-w0, -w1] },
        None => {
            // Consecutive facet normals of the cone meet at its extreme rays.
            let axis = UnitVector::from_vec(cone.polar_rays.iter().map(|r| r.0).sum());
            let facets = azimuth_order(&cone.polar_rays, &axis);
            let k = facets.len();
            let verts = (0..k)
                .filter_map(|i| {
                    let m = unit_normal(&facets[i], &facets[(i + 1) % k])?;
                    let v = if m.dot(&axis.0) < 0.0 { m } else { -m };
                    pts.iter()
                        .copied()
                        .max_by(|a, b| a.0.dot(&v).total_cmp(&b.0.dot(&v)))
                })
                .collect();
            ConvexRegion::Polygon(polygon_or_degenerate(dedup_cyclic(verts)))
        }
    }
}

/// {y ∈ S² : ⟨y, x⟩ ≤ 0 for all x ∈ set}.
pub fn polar_region(set: &FiniteSphericalSet) -> ConvexRegion {
    let pts = set.points();
    if pts.len() == 1 {
        return ConvexRegion::Hemisphere { pole: -pts[0] };
    }
    let cone = ConeAnalysis::new(pts);
    if cone.polar_rays.is_empty() {
        if cone.collinear() {
            // The polar of a line is the orthogonal great circle.
            let (t1, t2) = tangent_basis(&pts[0]);
            let circle = [t1, t2, -t1, -t2].map(UnitVector::from_vec).to_vec();
            return ConvexRegion::Polygon(SphericalPolygon::degenerate(circle));
        }
        return ConvexRegion::Empty;
    }
    if let Some(axis) = cone.antipodal_ray() {
        return match planar_extent(&cone, &axis) {
            (_, Some([a, b])) => ConvexRegion::Lune { poles: [-a, -b] },
            _ => ConvexRegion::Polygon(SphericalPolygon::degenerate(cone.polar_rays.clone())),
        };
    }
    match cocircular_extremes(&cone.polar_rays) {
        Some([w0, w1]) if w0 == w1 => ConvexRegion::Polygon(SphericalPolygon::degenerate(vec![w0])),
        Some([w0, w1]) => ConvexRegion::Polygon(SphericalPolygon::degenerate(vec![w0, w1])),
        None => {
            let axis = UnitVector::from_vec(cone.polar_rays.iter().map(|r| r.0).sum());
            ConvexRegion::Polygon(polygon_or_degenerate(azimuth_order(
                &cone.polar_rays,
                &axis,
            )))
        }
    }
}

/// Monte Carlo estimate of σ({y : d(y, set) < r}).
pub fn neighborhood_measure(
    set: &FiniteSphericalSet,
    radius: f64,
    samples: usize,
    sampler: &SphereSampler,
) -> Result<McEstimate> {
    if !(radius > 0.0 && radius < PI) {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} not in (0, pi)"
        )));
    }
    let c = radius.cos();
    let pts = set.points();
    Ok(sampler.probability(samples, |y| pts.iter().any(|x| x.dot(y) > c)))
}

/// Distance from `p` to the nearest point of `set`.
pub fn distance_to_set(p: &UnitVector, set: &[UnitVector]) -> f64 {
    set.iter()
        .map(|q| geodesic_distance(p, q))
        .min_by(f64::total_cmp)
        .unwrap_or(f64::INFINITY)
}

/// Hausdorff distance for the geodesic metric.
pub fn hausdorff_distance(a: &FiniteSphericalSet, b: &FiniteSphericalSet) -> f64 {
    let one_sided = |from: &[UnitVector], to: &[UnitVector]| {
        from.iter()
            .map(|p| distance_to_set(p, to))
            .max_by(f64::total_cmp)
            .unwrap_or(0.0)
    };
    one_sided(a.points(), b.points()).max(one_sided(b.points(), a.points()))
}

/// The eight directions (±1, ±1, ±1)/√3.
pub fn cube_directions() -> Vec<UnitVector> {
    let mut v = Vec::with_capacity(8);
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                v.push(UnitVector::normalized(sx, sy, sz));
            }
        }
    }
    v
}

/// Vertex directions of a regular tetrahedron.
pub fn tetrahedron_directions() -> Vec<UnitVector> {
    [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]
    .iter()
    .map(|a| UnitVector::normalized(a[0], a[1], a[2]))
    .collect()
}

/// ±e₁, ±e₂, ±e₃.
pub fn octahedron_directions() -> Vec<UnitVector> {
    vec![
        UnitVector::e1(),
        -UnitVector::e1(),
        UnitVector::e2(),
        -UnitVector::e2(),
        UnitVector::e3(),
        -UnitVector::e3(),
    ]
}
