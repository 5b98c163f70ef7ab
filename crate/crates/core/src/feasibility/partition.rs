//! Equal-area partitions of S² into two polar caps and latitude collars cut
//! by meridians (the recursive zonal construction).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sphere::{geodesic_distance, UnitVector};

/// Largest M searched when estimating the smallest feasible M.
const SEARCH_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// Cap around a pole out to colatitude `theta` (measured from that pole).
    Cap { north: bool, theta: f64 },
    /// Colatitudes `[theta0, theta1]`, longitudes `[phi0, phi1]`.
    Zone {
        theta0: f64,
        theta1: f64,
        phi0: f64,
        phi1: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionCell {
    pub region: Region,
    pub center: UnitVector,
    /// Every point of the cell is within `radius` of `center`.
    pub radius: f64,
    /// Certified upper bound on the cell diameter.
    pub diameter: f64,
    pub area: f64,
}

fn point(theta: f64, phi: f64) -> UnitVector {
    UnitVector::normalized(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    )
}

impl PartitionCell {
    fn cap(north: bool, theta: f64, area: f64) -> Self {
        let center = if north {
            UnitVector::e3()
        } else {
            -UnitVector::e3()
        };
        let diameter = if theta <= PI / 2.0 { 2.0 * theta } else { PI };
        Self {
            region: Region::Cap { north, theta },
            center,
            radius: theta,
            diameter,
            area,
        }
    }

    fn zone(theta0: f64, theta1: f64, phi0: f64, phi1: f64) -> Self {
        let center = point((theta0 + theta1) / 2.0, (phi0 + phi1) / 2.0);
        // For half-widths up to π/2 the farthest point of the cell from its
        // center is a corner; wider cells fall back to the trivial bound.
        let (radius, diameter) = if phi1 - phi0 <= PI {
            let r = [
                (theta0, phi0),
                (theta0, phi1),
                (theta1, phi0),
                (theta1, phi1),
            ]
            .iter()
            .map(|&(t, p)| geodesic_distance(&center, &point(t, p)))
            .fold(0.0, f64::max);
            (r, (2.0 * r).min(PI))
        } else {
            (PI, PI)
        };
        Self {
            region: Region::Zone {
                theta0,
                theta1,
                phi0,
                phi1,
            },
            center,
            radius,
            diameter,
            area: (theta0.cos() - theta1.cos()) * (phi1 - phi0),
        }
    }

    pub fn contains(&self, p: &UnitVector) -> bool {
        let theta = p.z().clamp(-1.0, 1.0).acos();
        match self.region {
            Region::Cap {
                north: true,
                theta: t,
            } => theta <= t,
            Region::Cap {
                north: false,
                theta: t,
            } => PI - theta <= t,
            Region::Zone {
                theta0,
                theta1,
                phi0,
                phi1,
            } => {
                let phi = p.y().atan2(p.x()).rem_euclid(2.0 * PI);
                theta >= theta0 && theta <= theta1 && phi >= phi0 && phi <= phi1
            }
        }
    }

    /// Center, corners and edge midpoints.
    pub fn sample_points(&self) -> Vec<UnitVector> {
        match self.region {
            Region::Cap { north, theta } => {
                let t = if north { theta } else { PI - theta };
                let mut pts: Vec<UnitVector> =
                    (0..8).map(|k| point(t, k as f64 * PI / 4.0)).collect();
                pts.push(self.center);
                pts
            }
            Region::Zone {
                theta0,
                theta1,
                phi0,
                phi1,
            } => {
                let (tm, pm) = ((theta0 + theta1) / 2.0, (phi0 + phi1) / 2.0);
                [theta0, tm, theta1]
                    .iter()
                    .flat_map(|&t| [phi0, pm, phi1].map(|p| point(t, p)))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePartition {
    cells: Vec<PartitionCell>,
    /// Colatitude boundaries of the caps and collars, north to south.
    boundaries: Vec<f64>,
    counts: Vec<usize>,
}

impl SpherePartition {
    pub fn cells(&self) -> &[PartitionCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn max_diameter(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    /// Index of a cell containing `p` (boundaries go to the first match).
    pub fn cell_index(&self, p: &UnitVector) -> usize {
        let theta = p.z().clamp(-1.0, 1.0).acos();
        let band = self
            .boundaries
            .iter()
            .position(|&b| theta <= b)
            .unwrap_or(self.boundaries.len() - 1);
        let first: usize = self.counts[..band].iter().sum();
        let m = self.counts[band];
        if m == 1 {
            return first;
        }
        let phi = p.y().atan2(p.x()).rem_euclid(2.0 * PI);
        first + ((phi / (2.0 * PI / m as f64)) as usize).min(m - 1)
    }
}

/// Collar structure `(colatitude boundaries, cells per band)` for `m` cells.
fn zonal_layout(m: usize) -> (Vec<f64>, Vec<usize>) {
    if m == 1 {
        return (vec![PI], vec![1]);
    }
    let area = 4.0 * PI / m as f64;
    let cap = (1.0 - 2.0 / m as f64).acos();
    if m == 2 {
        return (vec![cap, PI], vec![1, 1]);
    }
    let ideal = area.sqrt();
    let collars = (((PI - 2.0 * cap) / ideal).round() as usize).max(1);
    let fit = (PI - 2.0 * cap) / collars as f64;
    let mut counts = vec![1];
    let mut carry = 0.0;
    for i in 0..collars {
        let (a, b) = (cap + i as f64 * fit, cap + (i + 1) as f64 * fit);
        let ideal_count = 2.0 * PI * (a.cos() - b.cos()) / area;
        let k = (ideal_count + carry).round();
        carry += ideal_count - k;
        counts.push(k as usize);
    }
    counts.push(1);
    // Rounding keeps the running total, so only the last collar can drift.
    let total: usize = counts.iter().sum();
    let last = counts.len() - 2;
    counts[last] = (counts[last] + m).saturating_sub(total);
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let mut cumulative = 0;
    let boundaries = counts
        .iter()
        .map(|&c| {
            cumulative += c;
            if cumulative == m {
                PI
            } else {
                (1.0 - 2.0 * cumulative as f64 / m as f64)
                    .clamp(-1.0, 1.0)
                    .acos()
            }
        })
        .collect();
    (boundaries, counts)
}

/// Cell `j` of band `b`.
fn band_cell(boundaries: &[f64], counts: &[usize], b: usize, j: usize, area: f64) -> PartitionCell {
    let top = if b == 0 { 0.0 } else { boundaries[b - 1] };
    let bottom = boundaries[b];
    let k = counts[b];
    if b == 0 && k == 1 {
        PartitionCell::cap(true, bottom, area)
    } else if b == counts.len() - 1 && k == 1 {
        PartitionCell::cap(false, PI - top, area)
    } else {
        let width = 2.0 * PI / k as f64;
        PartitionCell::zone(top, bottom, j as f64 * width, (j + 1) as f64 * width)
    }
}

fn build(m: usize) -> SpherePartition {
    let (boundaries, counts) = zonal_layout(m);
    let area = 4.0 * PI / m as f64;
    let cells = (0..counts.len())
        .flat_map(|b| (0..counts[b]).map(move |j| (b, j)))
        .map(|(b, j)| band_cell(&boundaries, &counts, b, j, area))
        .collect();
    SpherePartition {
        cells,
        boundaries,
        counts,
    }
}

/// Largest certified diameter for `m` cells; cells of a band are congruent,
/// so one per band suffices.
fn max_diameter(m: usize) -> f64 {
    let (boundaries, counts) = zonal_layout(m);
    let area = 4.0 * PI / m as f64;
    (0..counts.len())
        .map(|b| band_cell(&boundaries, &counts, b, 0, area).diameter)
        .fold(0.0, f64::max)
}

/// Partition into `m` cells of area 4π/m, each of certified diameter at most
/// `diam_bound`.
pub fn equal_area_partition(m: usize, diam_bound: f64) -> Result<SpherePartition> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "partition needs M >= 2, got {m}"
        )));
    }
    if !(diam_bound > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "diameter bound {diam_bound} must be positive"
        )));
    }
    let p = build(m);
    if p.max_diameter() <= diam_bound {
        return Ok(p);
    }
    let mut probe = m.max(2);
    let min_m = loop {
        probe = probe.saturating_mul(2);
        if probe > SEARCH_LIMIT {
            break 0;
        }
        if max_diameter(probe) <= diam_bound {
            // Refine between the last failure and this success; diameters
            // are not monotone in M, so this is an estimate.
            let (mut lo, mut hi) = (probe / 2, probe);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if max_diameter(mid) <= diam_bound {
                    hi = mid
                } else {
                    lo = mid
                }
            }
            break hi;
        }
    };
    Err(Error::InfeasibleDiameter {
        bound: diam_bound,
        min_m,
    })
}

/// Smallest power of two, at least `lower`, whose partition meets
/// `diam_bound`; `None` above `cap`.
pub fn smallest_power_of_two(lower: usize, diam_bound: f64, cap: usize) -> Option<usize> {
    let mut m = lower.max(2).next_power_of_two();
    while m <= cap {
        if max_diameter(m) <= diam_bound {
            return Some(m);
        }
        m *= 2;
    }
    None
}
