//! Maximization of the dual functional
//! `F(ψ) = Σ ψᵢ μᵢ + ∫ minᵢ (c(n, xᵢ) - ψᵢ) dσ(n)` over site weights.
//!
//! F is concave with gradient `μᵢ - σ(Gᵢ)`, so a zero of the cell-mass
//! residual is the maximizer. Restricting the dual to weights at the atoms
//! loses nothing for a discrete μ: replacing ψ by its double c-transform
//! only increases F and leaves it determined by its values at the atoms.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::PairSet;
use crate::error::{Error, Result};
use crate::laguerre::LaguerreDiagram;
use crate::measure::{alexandrov_check, DiscreteMeasure, DEFAULT_SUBSET_CAP};
use crate::sampling::{fibonacci_lattice, SphereSampler, DEFAULT_SEED};
use crate::sphere::UnitVector;

/// Site weights `ψ` with the gauge `ψ₀ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPotentials {
    pub sites: Vec<UnitVector>,
    pub psi: Vec<f64>,
}

impl DualPotentials {
    pub fn new(sites: Vec<UnitVector>, psi: Vec<f64>) -> Result<Self> {
        if sites.len() != psi.len() || sites.is_empty() {
            return Err(Error::InvalidArgument(
                "sites and weights must match and be nonempty".into(),
            ));
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite".into()));
        }
        let mut p = Self { sites, psi };
        p.fix_gauge();
        Ok(p)
    }

    fn fix_gauge(&mut self) {
        let s = self.psi[0];
        self.psi.iter_mut().for_each(|v| *v -= s);
    }

    pub fn diagram(&self) -> Result<LaguerreDiagram> {
        LaguerreDiagram::build(&self.sites, &self.psi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initialization {
    Zero,
    /// Weights drawn uniformly from `[-spread, spread]`.
    Random {
        seed: u64,
        spread: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping_floor: f64,
    pub quadrature: usize,
    pub fd_step: f64,
    pub init: Initialization,
    pub subset_cap: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100,
            damping_floor: 0.5,
            quadrature: 1 << 16,
            fd_step: 1e-6,
            init: Initialization::Zero,
            subset_cap: DEFAULT_SUBSET_CAP,
            seed: DEFAULT_SEED,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol {} must be positive",
                self.tol
            )));
        }
        if !(self.damping_floor > 0.0 && self.damping_floor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping floor {} not in (0, 1)",
                self.damping_floor
            )));
        }
        if self.quadrature < 2 {
            return Err(Error::InvalidArgument(
                "quadrature needs at least 2 nodes".into(),
            ));
        }
        Ok(())
    }
}

/// A quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Init,
    Newton,
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub residual: f64,
    pub objective: f64,
    pub step: StepKind,
    pub damped: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub potentials: DualPotentials,
    pub diagram: LaguerreDiagram,
    pub residual: f64,
    pub dual_value: Estimate,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// Exact `F(ψ)` from cell integrals.
pub fn dual_objective(diagram: &LaguerreDiagram, masses: &[f64]) -> f64 {
    let linear: f64 = diagram
        .weights()
        .iter()
        .zip(masses)
        .map(|(p, m)| p * m)
        .sum();
    linear + diagram.transform_integral()
}

fn residual(diagram: &LaguerreDiagram, masses: &[f64]) -> (f64, f64) {
    let m = diagram.masses();
    let diff = m.iter().zip(masses).map(|(a, b)| (a - b).abs());
    let max = diff.clone().fold(0.0, f64::max);
    let l2 = diff.map(|d| d * d).sum::<f64>().sqrt();
    (max, l2)
}

struct State {
    psi: Vec<f64>,
    diagram: LaguerreDiagram,
    max_res: f64,
    l2_res: f64,
    min_mass: f64,
}

impl State {
    fn new(sites: &[UnitVector], mut psi: Vec<f64>, masses: &[f64]) -> Result<Self> {
        let s = psi[0];
        psi.iter_mut().for_each(|v| *v -= s);
        let diagram = LaguerreDiagram::build(sites, &psi)?;
        let (max_res, l2_res) = residual(&diagram, masses);
        let min_mass = diagram.masses().into_iter().fold(f64::INFINITY, f64::min);
        Ok(Self {
            psi,
            diagram,
            max_res,
            l2_res,
            min_mass,
        })
    }
}

/// Central differences of exact cell masses in weights 1..n.
fn mass_jacobian(sites: &[UnitVector], psi: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = psi.len();
    let columns: Vec<Result<Vec<f64>>> = (1..n)
        .into_par_iter()
        .map(|j| {
            let mut plus = psi.to_vec();
            let mut minus = psi.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let mp = LaguerreDiagram::build(sites, &plus)?.masses();
            let mm = LaguerreDiagram::build(sites, &minus)?.masses();
            Ok((1..n).map(|i| (mp[i] - mm[i]) / (2.0 * h)).collect())
        })
        .collect();
    let mut jac = DMatrix::zeros(n - 1, n - 1);
    for (c, col) in columns.into_iter().enumerate() {
        for (r, v) in col?.into_iter().enumerate() {
            jac[(r, c)] = v;
        }
    }
    Ok(jac)
}

fn newton_direction(
    sites: &[UnitVector],
    state: &State,
    masses: &[f64],
    h: f64,
) -> Result<Option<Vec<f64>>> {
    let n = masses.len();
    let jac = mass_jacobian(sites, &state.psi, h)?;
    let cur = state.diagram.masses();
    let rhs = DVector::from_iterator(n - 1, (1..n).map(|i| masses[i] - cur[i]));
    let Some(delta) = jac.lu().solve(&rhs) else {
        return Ok(None);
    };
    if delta.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    Ok(Some(
        std::iter::once(0.0).chain(delta.iter().copied()).collect(),
    ))
}

fn stepped(psi: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    psi.iter().zip(dir).map(|(p, d)| p + t * d).collect()
}

/// Tries `ψ + δ` and `ψ + δ/2`; a step must keep every cell above the mass
/// floor (or above the current smallest cell) and reduce the residual.
fn damped_newton(
    sites: &[UnitVector],
    state: &State,
    dir: &[f64],
    masses: &[f64],
    floor: f64,
) -> Option<(State, bool)> {
    let threshold = floor.min(state.min_mass);
    for (k, t) in [1.0, 0.5].into_iter().enumerate() {
        let Ok(next) = State::new(sites, stepped(&state.psi, dir, t), masses) else {
            continue;
        };
        if next.min_mass >= threshold && next.l2_res < state.l2_res {
            return Some((next, k > 0));
        }
    }
    None
}

/// Gradient ascent with Armijo backtracking on the exact objective.
fn gradient_step(sites: &[UnitVector], state: &State, masses: &[f64]) -> Result<Option<State>> {
    let cur = state.diagram.masses();
    let grad: Vec<f64> = masses.iter().zip(&cur).map(|(m, c)| m - c).collect();
    let norm2: f64 = grad.iter().map(|g| g * g).sum();
    let f0 = dual_objective(&state.diagram, masses);
    let mut t = 16.0;
    for _ in 0..60 {
        if let Ok(next) = State::new(sites, stepped(&state.psi, &grad, t), masses) {
            // F is invariant under the gauge shift, so compare directly.
            if dual_objective(&next.diagram, masses) >= f0 + 1e-4 * t * norm2 {
                return Ok(Some(next));
            }
        }
        t /= 2.0;
    }
    Ok(None)
}

/// Raises the weight of each empty cell until it carries between half and all
/// of its target mass. Newton needs every cell nonempty, and gradient steps
/// regrow a cell of tiny target mass far too slowly.
fn revive_empty_cells(sites: &[UnitVector], mut state: State, masses: &[f64]) -> Result<State> {
    for _ in 0..masses.len() {
        let cur = state.diagram.masses();
        let Some(i) = (0..masses.len()).find(|&i| cur[i] <= 0.0) else {
            break;
        };
        let mass_at = |v: f64| -> Result<(State, f64)> {
            let mut psi = state.psi.clone();
            psi[i] = v;
            let s = State::new(sites, psi, masses)?;
            let m = s.diagram.masses()[i];
            Ok((s, m))
        };
        let mut lo = state.psi[i];
        let mut step = 1e-3;
        let (mut best, mut hi) = loop {
            let (s, m) = mass_at(lo + step)?;
            if m >= 0.5 * masses[i] {
                break (s, lo + step);
            }
            if m <= 0.0 {
                lo += step;
            }
            step *= 2.0;
            if step > 1e3 {
                return Ok(state);
            }
        };
        for _ in 0..60 {
            if best.diagram.masses()[i] <= masses[i] {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (s, m) = mass_at(mid)?;
            if m >= 0.5 * masses[i] {
                hi = mid;
                best = s;
            } else {
                lo = mid;
            }
        }
        state = best;
    }
    Ok(state)
}

/// Solves for the weights whose cells carry the masses of `mu`.
pub fn solve_dual(mu: &DiscreteMeasure, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let check = alexandrov_check(mu, cfg.subset_cap, cfg.seed);
    if !check.accepted {
        return Err(Error::NotAdmissible {
            worst_slack: check.worst_slack,
        });
    }
    // Admissible measures are never inside a closed hemisphere, so this only
    // guards the heuristic mode.
    if mu.len() < 4 {
        return Err(Error::InvalidMeasure(format!(
            "{} atoms; at least 4 are needed",
            mu.len()
        )));
    }
    let sites = mu.points();
    let masses = mu.masses();
    let n = masses.len();
    let psi0 = match cfg.init {
        Initialization::Zero => vec![0.0; n],
        Initialization::Random { seed, spread } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(-spread..=spread)).collect()
        }
    };
    let floor = cfg.damping_floor * mu.min_mass();
    let mut state = revive_empty_cells(&sites, State::new(&sites, psi0, &masses)?, &masses)?;
    let mut trace = vec![TraceRow {
        iter: 0,
        residual: state.max_res,
        objective: dual_objective(&state.diagram, &masses),
        step: StepKind::Init,
        damped: false,
    }];
    let mut iterations = 0;
    while state.max_res > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let newton = match newton_direction(&sites, &state, &masses, cfg.fd_step)? {
            Some(dir) => damped_newton(&sites, &state, &dir, &masses, floor),
            None => None,
        };
        let (next, kind, damped) = match newton {
            Some((next, damped)) => (next, StepKind::Newton, damped),
            None => match gradient_step(&sites, &state, &masses)? {
                Some(next) => (next, StepKind::Gradient, true),
                None => break,
            },
        };
        state = if next.min_mass <= 0.0 {
            revive_empty_cells(&sites, next, &masses)?
        } else {
            next
        };
        trace.push(TraceRow {
            iter: iterations,
            residual: state.max_res,
            objective: dual_objective(&state.diagram, &masses),
            step: kind,
            damped,
        });
    }
    let converged = state.max_res <= cfg.tol;
    if converged {
        // A few undamped Newton steps past the tolerance pin ψ down to
        // roundoff, so separate runs agree far below tol.
        for _ in 0..3 {
            let Some(dir) = newton_direction(&sites, &state, &masses, cfg.fd_step)? else {
                break;
            };
            match State::new(&sites, stepped(&state.psi, &dir, 1.0), &masses) {
                Ok(next) if next.l2_res < state.l2_res => state = next,
                _ => break,
            }
        }
    }
    let potentials = DualPotentials::new(sites, state.psi.clone())?;
    let dual_value = dual_value(&potentials, mu, cfg.quadrature)?;
    Ok(SolveResult {
        potentials,
        diagram: state.diagram,
        residual: state.max_res,
        dual_value,
        iterations,
        converged,
        trace,
    })
}

fn lattice_mean<F: Fn(&UnitVector) -> Result<f64> + Sync + Send>(n: usize, f: F) -> Result<f64> {
    let nodes = fibonacci_lattice(n);
    let values: Result<Vec<f64>> = nodes.par_iter().map(f).collect();
    Ok(values?.iter().sum::<f64>() / n as f64)
}

fn with_half_lattice<F: Fn(&UnitVector) -> Result<f64> + Sync + Send>(
    n: usize,
    f: F,
) -> Result<Estimate> {
    let full = lattice_mean(n, &f)?;
    let half = lattice_mean(n / 2, &f)?;
    Ok(Estimate {
        value: full,
        error: (full - half).abs(),
    })
}

/// Lattice quadrature of `F(ψ)` with `quadrature` nodes.
pub fn dual_value(p: &DualPotentials, mu: &DiscreteMeasure, quadrature: usize) -> Result<Estimate> {
    let sites = &p.sites;
    let psi = &p.psi;
    let transform = with_half_lattice(quadrature, |q| {
        sites
            .iter()
            .zip(psi)
            .filter_map(|(x, w)| {
                let c = q.dot(x);
                (c > 0.0).then(|| -c.ln() - w)
            })
            .reduce(f64::min)
            .ok_or(Error::Unreachable)
    })?;
    let linear: f64 = psi.iter().zip(mu.masses()).map(|(p, m)| p * m).sum();
    Ok(Estimate {
        value: linear + transform.value,
        error: transform.error,
    })
}

/// Lattice quadrature of the cost of sending each node to its cell's site.
///
/// The integrand `c(q, x_{i(q)}) = φ(q) + ψ_{i(q)}` jumps across cell
/// boundaries, where the N versus N/2 comparison says little. The error is
/// therefore split: the continuous part `φ = ψ^c` uses that comparison, and
/// the jump part `Σ ψᵢ (fraction of nodes in Gᵢ - σ̄(Gᵢ))` is measured
/// against the exact cell areas.
pub fn primal_value(result: &SolveResult, quadrature: usize) -> Result<Estimate> {
    let d = &result.diagram;
    let psi = d.weights();
    let nodes = fibonacci_lattice(quadrature);
    let assigned: Vec<(f64, usize)> = nodes
        .par_iter()
        .map(|q| d.assign(q))
        .collect::<Result<_>>()?;
    let n = quadrature as f64;
    let value = nodes
        .iter()
        .zip(&assigned)
        .map(|(q, &(_, i))| -q.dot(&d.sites()[i]).ln())
        .sum::<f64>()
        / n;
    let smooth = with_half_lattice(quadrature, |q| d.assign(q).map(|(phi, _)| phi))?.error;
    let mut counts = vec![0usize; psi.len()];
    for &(_, i) in &assigned {
        counts[i] += 1;
    }
    let jump: f64 = counts
        .iter()
        .zip(d.masses())
        .zip(psi)
        .map(|((&c, m), w)| w * (c as f64 / n - m))
        .sum();
    Ok(Estimate {
        value,
        error: smooth + jump.abs(),
    })
}

/// `n` seeded uniform directions paired with the site of their cell.
pub fn optimal_plan_sample(result: &SolveResult, n: usize, seed: u64) -> Result<PairSet> {
    let d = &result.diagram;
    let pairs: Result<Vec<(UnitVector, UnitVector)>> = SphereSampler::new(seed)
        .points(n)
        .into_iter()
        .map(|p| Ok((p, d.sites()[d.assign(&p)?.1])))
        .collect();
    PairSet::new(pairs?)
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iter,residual,F,step,damped\n");
    for r in trace {
        let step = match r.step {
            StepKind::Init => "init",
            StepKind::Newton => "newton",
            StepKind::Gradient => "gradient",
        };
        writeln!(
            out,
            "{},{:e},{:.17e},{},{}",
            r.iter, r.residual, r.objective, step, r.damped
        )
        .unwrap();
    }
    out
}

/// `∇F(ψ) = μ - σ(G)`, from exact cell areas.
pub fn dual_gradient(sites: &[UnitVector], psi: &[f64], masses: &[f64]) -> Result<Vec<f64>> {
    let d = LaguerreDiagram::build(sites, psi)?;
    Ok(masses
        .iter()
        .zip(d.areas())
        .map(|(m, a)| m - a / (4.0 * PI))
        .collect())
}
