//! Incremental 3D convex hull with exact orientation predicates.
//!
//! Points are inserted in index order, so the combinatorics are a pure
//! function of the input. Coplanar triangles are merged into polygonal faces
//! afterwards; every vertex then carries the cyclic list of faces around it,
//! which is exactly its normal cone.

use std::collections::{HashMap, HashSet};

use robust::{orient3d, Coord3D};

use crate::error::{Error, Result};
use crate::sphere::{UnitVector, Vec3};

/// Adjacent triangles whose unit normals differ by less than this are merged.
pub const FACE_MERGE_TOL: f64 = 1e-10;

fn coord(p: &Vec3) -> Coord3D<f64> {
    Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// Positive when `d` lies strictly outside the face (a, b, c), which is
/// counterclockwise seen from outside.
fn height(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    -orient3d(coord(a), coord(b), coord(c), coord(d))
}

/// A planar face of the hull.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Outward unit normal.
    pub normal: UnitVector,
    /// Signed distance of the face plane from the origin.
    pub offset: f64,
    /// Indices of input points on this face.
    pub vertices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ConvexHull3 {
    points: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    triangle_face: Vec<usize>,
    faces: Vec<Face>,
    /// Faces around each input point, counterclockwise seen from outside;
    /// `None` for points that are not vertices.
    vertex_faces: Vec<Option<Vec<usize>>>,
}

impl ConvexHull3 {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::DegenerateHull(format!("point {i} is not finite")));
        }
        let triangles = incremental_triangles(&points)?;
        let (triangle_face, faces) = merge_faces(&points, &triangles);
        let vertex_faces = vertex_cycles(points.len(), &triangles, &triangle_face);
        Ok(Self {
            points,
            triangles,
            triangle_face,
            faces,
            vertex_faces,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Outward, counterclockwise triangulation of the boundary.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_face(&self) -> &[usize] {
        &self.triangle_face
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// True when point `i` is a vertex (at least three distinct faces meet).
    pub fn is_vertex(&self, i: usize) -> bool {
        self.vertex_faces[i].is_some()
    }

    pub fn vertex_faces(&self, i: usize) -> Option<&[usize]> {
        self.vertex_faces[i].as_deref()
    }

    /// Outward normals of the faces around vertex `i`, in cyclic order.
    pub fn normal_cone(&self, i: usize) -> Option<Vec<UnitVector>> {
        self.vertex_faces(i)
            .map(|fs| fs.iter().map(|&f| self.faces[f].normal).collect())
    }

    pub fn min_offset(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| f.offset)
            .fold(f64::INFINITY, f64::min)
    }
}

fn incremental_triangles(points: &[Vec3]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 4 {
        return Err(Error::DegenerateHull(format!(
            "{n} points cannot span a solid"
        )));
    }
    let i0 = 0;
    let i1 = (1..n)
        .find(|&j| points[j] != points[i0])
        .ok_or_else(|| Error::DegenerateHull("all points coincide".into()))?;
    let i2 = (1..n)
        .find(|&j| {
            let c = (points[i1] - points[i0]).cross(&(points[j] - points[i0]));
            c.norm()
                > 1e-14
                    * (points[i1] - points[i0]).norm()
                    * (points[j] - points[i0]).norm().max(1e-300)
        })
        .ok_or_else(|| Error::DegenerateHull("all points are collinear".into()))?;
    let i3 = (1..n)
        .find(|&j| height(&points[i0], &points[i1], &points[i2], &points[j]) != 0.0)
        .ok_or_else(|| Error::DegenerateHull("all points are coplanar".into()))?;

    let p = |i: usize| &points[i];
    let oriented = |a: usize, b: usize, c: usize, inside: usize| -> [usize; 3] {
        if height(p(a), p(b), p(c), p(inside)) < 0.0 {
            [a, b, c]
        } else {
            [a, c, b]
        }
    };
    let mut tris: Vec<Option<[usize; 3]>> = vec![
        Some(oriented(i0, i1, i2, i3)),
        Some(oriented(i0, i1, i3, i2)),
        Some(oriented(i0, i2, i3, i1)),
        Some(oriented(i1, i2, i3, i0)),
    ];
    let seeds = [i0, i1, i2, i3];

    for q in 0..n {
        if seeds.contains(&q) {
            continue;
        }
        let visible: Vec<usize> = tris
            .iter()
            .enumerate()
            .filter_map(|(t, tri)| {
                let [a, b, c] = (*tri)?;
                (height(p(a), p(b), p(c), p(q)) > 0.0).then_some(t)
            })
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for &t in &visible {
            let [a, b, c] = tris[t].unwrap();
            edges.extend([(a, b), (b, c), (c, a)]);
        }
        // Deterministic horizon order: visible faces in index order.
        let mut horizon = Vec::new();
        for &t in &visible {
            let [a, b, c] = tris[t].unwrap();
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if !edges.contains(&(v, u)) {
                    horizon.push((u, v));
                }
            }
            tris[t] = None;
        }
        tris.extend(horizon.into_iter().map(|(u, v)| Some([u, v, q])));
    }
    Ok(tris.into_iter().flatten().collect())
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn merge_faces(points: &[Vec3], tris: &[[usize; 3]]) -> (Vec<usize>, Vec<Face>) {
    let raw: Vec<Vec3> = tris
        .iter()
        .map(|&[a, b, c]| (points[b] - points[a]).cross(&(points[c] - points[a])))
        .collect();
    let unit: Vec<Vec3> = raw.iter().map(|v| v / v.norm()).collect();
    let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(tris.len() * 3);
    for (t, &[a, b, c]) in tris.iter().enumerate() {
        for e in [(a, b), (b, c), (c, a)] {
            edge_owner.insert(e, t);
        }
    }
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    for (t, &[a, b, c]) in tris.iter().enumerate() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let Some(&s) = edge_owner.get(&(v, u)) else {
                continue;
            };
            if s <= t {
                continue;
            }
            let apex = tris[s].iter().copied().find(|&w| w != u && w != v).unwrap();
            let coplanar = height(&points[a], &points[b], &points[c], &points[apex]) == 0.0;
            if coplanar || (unit[t] - unit[s]).norm() < FACE_MERGE_TOL {
                let (rt, rs) = (find(&mut parent, t), find(&mut parent, s));
                if rt != rs {
                    parent[rt.max(rs)] = rt.min(rs);
                }
            }
        }
    }
    let mut face_of_root: HashMap<usize, usize> = HashMap::new();
    let mut triangle_face = vec![0; tris.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (t, slot) in triangle_face.iter_mut().enumerate() {
        let r = find(&mut parent, t);
        let f = *face_of_root.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[f].push(t);
        *slot = f;
    }
    let faces = groups
        .iter()
        .map(|g| {
            let normal = UnitVector::from_vec(g.iter().map(|&t| raw[t]).sum());
            let mut vertices: Vec<usize> = g.iter().flat_map(|&t| tris[t]).collect();
            vertices.sort_unstable();
            vertices.dedup();
            let offset = vertices
                .iter()
                .map(|&v| normal.vec().dot(&points[v]))
                .sum::<f64>()
                / vertices.len() as f64;
            Face {
                normal,
                offset,
                vertices,
            }
        })
        .collect();
    (triangle_face, faces)
}

fn vertex_cycles(n: usize, tris: &[[usize; 3]], tri_face: &[usize]) -> Vec<Option<Vec<usize>>> {
    // For each vertex v, map "first neighbor" a -> (b, triangle) for (v, a, b).
    let mut fans: Vec<HashMap<usize, (usize, usize)>> = vec![HashMap::new(); n];
    for (t, &[a, b, c]) in tris.iter().enumerate() {
        fans[a].insert(b, (c, t));
        fans[b].insert(c, (a, t));
        fans[c].insert(a, (b, t));
    }
    fans.into_iter()
        .map(|fan| {
            let start = *fan.keys().min()?;
            let mut order = Vec::with_capacity(fan.len());
            let mut a = start;
            loop {
                let (b, t) = fan[&a];
                order.push(tri_face[t]);
                a = b;
                if a == start || order.len() > fan.len() {
                    break;
                }
            }
            order.dedup();
            while order.len() > 1 && order.first() == order.last() {
                order.pop();
            }
            (order.len() >= 3).then_some(order)
        })
        .collect()
}
