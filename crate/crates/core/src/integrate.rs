//! Integrals of radial functions over spherical polygons.
//!
//! For a function of the distance to a pole `x`, the integral over a polygon
//! reduces to a line integral along its edges: every edge sweeps a signed
//! azimuthal wedge around `x`, and the radial part integrates in closed form.
//! Only the azimuthal rate is integrated numerically (adaptive Gauss-Legendre).

use std::sync::OnceLock;

use crate::sphere::{UnitVector, Vec3};

const ORDER: usize = 10;
const MAX_DEPTH: u32 = 24;

fn legendre_rule() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        let n = ORDER as f64;
        for i in 0..ORDER {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=ORDER {
                    let k = k as f64;
                    (p0, p1) = (p1, ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k);
                }
                let dp = n * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    let (mut p0, mut p1) = (1.0, z);
                    for k in 2..=ORDER {
                        let k = k as f64;
                        (p0, p1) = (p1, ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k);
                    }
                    let dp = n * (z * p1 - p0) / (z * z - 1.0);
                    nodes[i] = z;
                    weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                    break;
                }
            }
        }
        (nodes, weights)
    })
}

fn gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = legendre_rule();
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    half * nodes
        .iter()
        .zip(weights)
        .map(|(z, w)| w * f(mid + half * z))
        .sum::<f64>()
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let (left, right) = (gauss(f, a, m), gauss(f, m, b));
    if depth >= MAX_DEPTH || (left + right - whole).abs() <= tol {
        return left + right;
    }
    adaptive(f, a, m, left, tol / 2.0, depth + 1) + adaptive(f, m, b, right, tol / 2.0, depth + 1)
}

/// Adaptive Gauss-Legendre quadrature of `f` on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let whole = gauss(&f, a, b);
    adaptive(&f, a, b, whole, tol, 0)
}

/// `∫_u^1 -ln(s) ds / (1 - u²)`, the radial part of the log-cosine cost.
pub fn log_cost_kernel(u: f64) -> f64 {
    let eps = 1.0 - u;
    if eps < 1e-2 {
        // Σ_{k≥2} ε^k / (k(k-1)), divided by ε(2-ε).
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 2..14 {
            term *= eps;
            sum += term / (k * (k - 1)) as f64;
        }
        sum / (2.0 - eps)
    } else {
        (eps + u * u.ln()) / (eps * (1.0 + u))
    }
}

/// Radial part of the area element: `(1 - u) / (1 - u²)`.
pub fn area_kernel(u: f64) -> f64 {
    1.0 / (1.0 + u)
}

/// `∫_P f(d(n, x)) dn` for a counterclockwise convex polygon `P` that stays
/// in the open hemisphere around `x`, where `kernel(u)` is
/// `∫_u^1 f(acos s) ds / (1 - u²)`.
pub fn radial_integral<K>(x: &UnitVector, vertices: &[UnitVector], kernel: K, tol: f64) -> f64
where
    K: Fn(f64) -> f64,
{
    let k = vertices.len();
    if k < 3 {
        return 0.0;
    }
    let xv = x.vec();
    let edge_tol = tol / k as f64;
    (0..k)
        .map(|i| {
            let a = vertices[i].vec();
            let b = vertices[(i + 1) % k].vec();
            edge_integral(xv, a, b, &kernel, edge_tol)
        })
        .sum()
}

fn edge_integral<K: Fn(f64) -> f64>(x: &Vec3, a: &Vec3, b: &Vec3, kernel: &K, tol: f64) -> f64 {
    let cross = a.cross(b);
    let len = cross.norm().atan2(a.dot(b));
    if len < 1e-15 {
        return 0.0;
    }
    let w = (b - a * a.dot(b)).normalize();
    let rate = x.dot(&a.cross(&w));
    if rate == 0.0 {
        return 0.0;
    }
    let f = |t: f64| {
        let u = x.dot(&(a * t.cos() + w * t.sin())).min(1.0);
        kernel(u)
    };
    rate * integrate(f, 0.0, len, tol / rate.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::SphericalPolygon;
    use std::f64::consts::PI;

    #[test]
    fn rule_integrates_polynomials() {
        let v = integrate(|t| t.powi(19), 0.0, 1.0, 1e-15);
        assert!((v - 0.05).abs() < 1e-15);
        let s = integrate(f64::sin, 0.0, PI, 1e-15);
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_series_matches_direct_form() {
        for &u in &[0.989, 0.99, 0.9901] {
            let eps: f64 = 1.0 - u;
            let direct = (eps + u * u.ln()) / (eps * (1.0 + u));
            assert!((log_cost_kernel(u) - direct).abs() < 1e-12);
        }
        assert!(log_cost_kernel(1.0).abs() < 1e-300);
    }

    fn octant() -> SphericalPolygon {
        SphericalPolygon::new(vec![UnitVector::e1(), UnitVector::e2(), UnitVector::e3()]).unwrap()
    }

    #[test]
    fn area_kernel_reproduces_polygon_area() {
        let p = octant();
        for x in [
            UnitVector::e3(),
            UnitVector::normalized(1.0, 1.0, 1.0),
            UnitVector::normalized(1.0, 0.2, 0.3),
        ] {
            let a = radial_integral(&x, p.vertices(), area_kernel, 1e-14);
            assert!((a - p.area()).abs() < 1e-12, "{a} vs {}", p.area());
        }
        // Pole outside the polygon: signed wedges cancel correctly.
        let x = UnitVector::normalized(-0.2, 1.0, 0.4);
        let a = radial_integral(&x, p.vertices(), area_kernel, 1e-14);
        assert!((a - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_cost_over_a_cap_polygon() {
        // Fine regular polygon around the pole approximates the cap of radius R;
        // compare with the exact polygon via a direct 2D quadrature.
        let r: f64 = 0.9;
        let n = 6;
        let verts: Vec<UnitVector> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                UnitVector::normalized(r.sin() * t.cos(), r.sin() * t.sin(), r.cos())
            })
            .collect();
        let got = radial_integral(&UnitVector::e3(), &verts, log_cost_kernel, 1e-14);
        // Oracle: integrate over azimuth, radial extent to the edge, -ln cos θ sin θ.
        let half = PI / n as f64;
        let apothem = (r.tan() * half.cos()).atan();
        let wedge = integrate(
            |phi| {
                let rad = (apothem.tan() / phi.cos()).atan();
                integrate(|th| -th.cos().ln() * th.sin(), 0.0, rad, 1e-15)
            },
            -half,
            half,
            1e-15,
        );
        assert!((got - n as f64 * wedge).abs() < 1e-12, "{got}");
    }
}
