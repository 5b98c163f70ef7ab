//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use gauss_ot::body::{gap_probes, homothety_gap, random_polytope};
use gauss_ot::cost::{
    chain_potential, check_c_cyclical_monotonicity, cost, double_transform_check,
    DiscretePotential, Monotonicity,
};
use gauss_ot::feasibility::{build_feasible_plan, plan_cost_certificate, smallest_power_of_two};
use gauss_ot::laguerre::LaguerreDiagram;
use gauss_ot::measure::{alexandrov_check, alpha_margin, DEFAULT_SUBSET_CAP};
use gauss_ot::sampling::{fibonacci_lattice, uniform_point, SphereSampler};
use gauss_ot::solver::{dual_gradient, dual_objective, primal_value, Initialization};
use gauss_ot::sphere::{cube_directions, geodesic_distance, tetrahedron_directions};
use gauss_ot::{
    solve_dual, ConvexBody, DiscreteMeasure, Error, PairSet, SolveResult, SolverConfig, UnitVector,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-7;
const QUADRATURE: usize = 1 << 16;
const MC_SAMPLES: usize = 1_000_000;

struct Instance {
    name: String,
    generator: Option<ConvexBody>,
    mu: DiscreteMeasure,
    result: SolveResult,
    body: Option<ConvexBody>,
    seconds: f64,
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config() -> SolverConfig {
    SolverConfig {
        tol: TOL,
        ..SolverConfig::default()
    }
}

/// Vertex counts spread over 8..=50.
fn suite_vertices(k: usize) -> usize {
    8 + k * 42 / 24
}

fn suite() -> Vec<Instance> {
    let mut out = Vec::new();
    for (name, pts) in [
        ("cube", cube_directions()),
        ("tetrahedron", tetrahedron_directions()),
    ] {
        let mu = DiscreteMeasure::uniform(&pts).unwrap();
        let t = Instant::now();
        let result = solve_dual(&mu, &config()).unwrap();
        let body = ConvexBody::from_potentials(&result.potentials).ok();
        out.push(Instance {
            name: name.into(),
            generator: None,
            mu,
            result,
            body,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    for k in 0..25 {
        let generator = random_polytope(1000 + k as u64, suite_vertices(k), 0.5, 1.5);
        let t = Instant::now();
        let mu = generator.curvature_measure().unwrap();
        let result = solve_dual(&mu, &config()).unwrap();
        let body = ConvexBody::from_potentials(&result.potentials).ok();
        out.push(Instance {
            name: format!("random-{k}({}v)", generator.len()),
            generator: Some(generator),
            mu,
            result,
            body,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    out
}

fn criterion_1(suite: &[Instance]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for inst in &suite[..2] {
        let radii = inst
            .body
            .as_ref()
            .map(|b| b.radii().to_vec())
            .unwrap_or_default();
        let mean = radii.iter().sum::<f64>() / radii.len().max(1) as f64;
        let dev = radii.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
        let ok = inst.result.converged
            && !radii.is_empty()
            && dev <= 1e-7
            && inst.result.iterations <= 20
            && inst.seconds < 5.0;
        pass &= ok;
        notes.push(format!(
            "{}: {} iters, radius deviation {:.1e}, {:.3}s",
            inst.name, inst.result.iterations, dev, inst.seconds
        ));
    }
    outcome(pass, notes.join("; "))
}

fn criterion_2(suite: &[Instance]) -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    let mut failures = Vec::new();
    for inst in &suite[2..] {
        let gen = inst.generator.as_ref().unwrap();
        let gap = match &inst.body {
            Some(b) if inst.result.converged => {
                homothety_gap(gen, b, &gap_probes(gen, b, 1000, 42))
            }
            _ => f64::INFINITY,
        };
        worst_gap = worst_gap.max(gap);
        worst_time = worst_time.max(inst.seconds);
        if !(gap <= 1e-4 && inst.seconds < 60.0) {
            failures.push(inst.name.clone());
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "25 polytopes, worst homothety gap {worst_gap:.2e}, slowest {worst_time:.2}s, failing {failures:?}"
        ),
    )
}

fn criterion_3(suite: &[Instance]) -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut failures = Vec::new();
    let mut checked = 0;
    for inst in suite.iter().filter(|i| i.result.converged) {
        checked += 1;
        let p = primal_value(&inst.result, QUADRATURE).unwrap();
        let d = inst.result.dual_value;
        let gap = (p.value - d.value).abs();
        let bound = p.error + d.error;
        worst_ratio = worst_ratio.max(gap / bound);
        worst_abs = worst_abs.max(gap);
        if !(gap <= bound && gap <= 1e-3) {
            failures.push(format!("{} gap {gap:.2e} > {bound:.2e}", inst.name));
        }
    }
    outcome(
        failures.is_empty() && checked == suite.len(),
        format!(
            "{checked}/{} converged, max |primal-dual| {worst_abs:.2e}, max gap/error {worst_ratio:.2}, failing {failures:?}",
            suite.len()
        ),
    )
}

fn criterion_4(suite: &[Instance]) -> Outcome {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for inst in suite {
        let sites = inst.mu.points();
        let masses = inst.mu.masses();
        let f =
            |psi: &[f64]| dual_objective(&LaguerreDiagram::build(&sites, psi).unwrap(), &masses);
        let mut done = 0;
        while done < 5 {
            let psi: Vec<f64> = (0..sites.len())
                .map(|_| rng.random_range(-0.3..0.3))
                .collect();
            let Ok(grad) = dual_gradient(&sites, &psi, &masses) else {
                continue;
            };
            for (i, g) in grad.iter().enumerate() {
                let mut plus = psi.clone();
                let mut minus = psi.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                worst = worst.max((fd - g).abs());
            }
            done += 1;
        }
    }
    outcome(
        worst <= 1e-5,
        format!(
            "{} instances x 5 weight vectors, max |FD - gradient| {worst:.2e}",
            suite.len()
        ),
    )
}

/// Smallest `q` with `P(Binomial(n, p) > q) < 1e-4`.
fn binomial_upper(n: usize, p: f64) -> usize {
    let mut cdf = 0.0;
    let mut log_pmf = n as f64 * (1.0 - p).ln();
    for k in 0..=n {
        cdf += log_pmf.exp();
        if 1.0 - cdf < 1e-4 {
            return k;
        }
        log_pmf += ((n - k) as f64 / (k + 1) as f64).ln() + (p / (1.0 - p)).ln();
    }
    n
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = 100_000;
    let mut worst_sum: f64 = 0.0;
    let (mut cells, mut beyond_3se) = (0usize, 0usize);
    let mut worst_z: f64 = 0.0;
    let mut configs = 0;
    while configs < 100 {
        let n = rng.random_range(5..=40);
        let sites: Vec<UnitVector> = (0..n).map(|_| uniform_point(&mut rng)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let Ok(d) = LaguerreDiagram::build(&sites, &weights) else {
            continue;
        };
        worst_sum = worst_sum.max((d.areas().iter().sum::<f64>() - 4.0 * PI).abs());
        let mut counts = vec![0usize; n];
        for y in SphereSampler::new(configs as u64).points(samples) {
            counts[d.assign(&y).unwrap().1] += 1;
        }
        for (c, m) in counts.iter().zip(d.masses()) {
            let se = (m * (1.0 - m) / samples as f64).sqrt();
            let dev = (*c as f64 / samples as f64 - m).abs();
            if se > 0.0 {
                cells += 1;
                worst_z = worst_z.max(dev / se);
                if dev > 3.0 * se {
                    beyond_3se += 1;
                }
            } else if *c != 0 {
                worst_z = f64::INFINITY;
            }
        }
        configs += 1;
    }
    // Each cell lies within 3 SE with probability 0.9973, so across many
    // cells the count outside 3 SE must stay within its binomial range.
    let allowed = binomial_upper(cells, 0.0027);
    outcome(
        worst_sum <= 1e-9 && beyond_3se <= allowed && worst_z < 5.0,
        format!(
            "100 configs, max |sum of areas - 4pi| {worst_sum:.1e}; {beyond_3se}/{cells} cells beyond 3 SE (allowed {allowed}), max z {worst_z:.2}"
        ),
    )
}

fn rejected_measures() -> Vec<(&'static str, DiscreteMeasure)> {
    let e = |x: f64, y: f64, z: f64| UnitVector::new(x, y, z).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let upper: Vec<UnitVector> = (0..10)
        .map(|_| loop {
            let p = uniform_point(&mut rng);
            if p.z() > 0.1 {
                break p;
            }
        })
        .collect();
    let mut heavy = vec![0.5 / 7.0; 8];
    heavy[0] = 0.5;
    vec![
        (
            "single atom",
            DiscreteMeasure::uniform(&[e(0.0, 0.0, 1.0)]).unwrap(),
        ),
        (
            "antipodal pair",
            DiscreteMeasure::uniform(&[e(0.0, 0.0, 1.0), e(0.0, 0.0, -1.0)]).unwrap(),
        ),
        (
            "closed hemisphere",
            DiscreteMeasure::uniform(&[
                e(0.0, 0.0, 1.0),
                e(1.0, 0.0, 0.0),
                e(0.0, 1.0, 0.0),
                e(-1.0, -1.0, 0.0),
            ])
            .unwrap(),
        ),
        (
            "cube with a half-mass atom",
            DiscreteMeasure::from_points(&cube_directions(), &heavy).unwrap(),
        ),
        ("open hemisphere", DiscreteMeasure::uniform(&upper).unwrap()),
    ]
}

fn criterion_6(suite: &[Instance]) -> Outcome {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let mut min_alpha = f64::INFINITY;
    let mut max_m = 0;
    for (k, inst) in suite.iter().enumerate() {
        if !alexandrov_check(&inst.mu, DEFAULT_SUBSET_CAP, 42).accepted {
            failures.push(format!("{} not accepted", inst.name));
            continue;
        }
        let alpha = match alpha_margin(&inst.mu, DEFAULT_SUBSET_CAP, MC_SAMPLES, 42, 1e-3) {
            Ok(a) if a.alpha > 0.0 => a.alpha,
            other => {
                failures.push(format!("{} alpha {other:?}", inst.name));
                continue;
            }
        };
        min_alpha = min_alpha.min(alpha);
        let m = smallest_power_of_two(inst.mu.len(), alpha / 4.0, 1 << 22);
        let plan = match build_feasible_plan(&inst.mu, alpha, m) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("{} alpha {alpha:.4}: {e}", inst.name));
                continue;
            }
        };
        max_m = max_m.max(plan.m);
        let radius = FRAC_PI_2 - alpha / 4.0;
        let cost_bound = -(alpha / 4.0).sin().ln();
        let mut ok = plan_cost_certificate(&plan, &inst.mu).is_ok() && plan.sup_cost <= cost_bound;
        // Independent audit: random points of each matched cell against its atom.
        let mut owner = vec![usize::MAX; plan.m];
        for am in &plan.matches {
            ok &= am.cells.len() == plan.multiplicities[am.atom];
            for &c in &am.cells {
                ok &= owner[c] == usize::MAX;
                owner[c] = am.atom;
            }
        }
        ok &= owner.iter().all(|&o| o != usize::MAX);
        if ok {
            for y in SphereSampler::new(600 + k as u64).points(20_000) {
                let x = inst.mu.atoms()[owner[plan.partition.cell_index(&y)]].point;
                let c = cost(&y, &x).finite().unwrap_or(f64::INFINITY);
                ok &= geodesic_distance(&y, &x) <= radius + 1e-12 && c <= cost_bound + 1e-12;
            }
        }
        if !ok {
            failures.push(format!("{} certificate audit", inst.name));
        }
    }
    notes.push(format!(
        "{} accepted instances, min alpha {min_alpha:.4}, max M {max_m}",
        suite.len()
    ));
    let mut sweep_plans = 0;
    let rejected = rejected_measures();
    for (name, mu) in &rejected {
        if alexandrov_check(mu, DEFAULT_SUBSET_CAP, 42).accepted {
            failures.push(format!("{name} was accepted"));
        }
        for step in 1..=100 {
            if build_feasible_plan(mu, step as f64 * 0.01, None).is_ok() {
                sweep_plans += 1;
                failures.push(format!(
                    "{name} produced a plan at alpha {:.2}",
                    step as f64 * 0.01
                ));
            }
        }
    }
    notes.push(format!(
        "{} rejected measures x 100 alphas, {sweep_plans} plans",
        rejected.len()
    ));
    notes.push(format!("failing {failures:?}"));
    outcome(failures.is_empty(), notes.join("; "))
}

fn criterion_7(suite: &[Instance]) -> Outcome {
    let mut worst_dev: f64 = 0.0;
    let mut worst_gain = f64::INFINITY;
    for (k, inst) in suite.iter().enumerate() {
        let p = DiscretePotential::new(
            inst.result.potentials.sites.clone(),
            inst.result.potentials.psi.clone(),
        )
        .unwrap();
        let probes = SphereSampler::new(700 + k as u64).points(1000);
        let r = double_transform_check(&p, &probes).unwrap();
        worst_dev = worst_dev.max(r.deviation);
        worst_gain = worst_gain.min(r.min_site_gain);
    }
    outcome(
        worst_dev <= 1e-9 && worst_gain >= -1e-9,
        format!("{} instances x 1000 probes, max triple-transform deviation {worst_dev:.1e}, min site gain {worst_gain:.2e}", suite.len()),
    )
}

/// All permutations of `0..n` (Heap's algorithm).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            go(k - 1, a, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            a.swap(j, k - 1);
        }
    }
    let mut out = Vec::new();
    go(n, &mut (0..n).collect(), &mut out);
    out
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut base_ok = true;
    let mut perturbed = 0;
    let mut caught = 0;
    for inst in 0..20 {
        let n = 4 + inst % 5;
        let center = uniform_point(&mut rng);
        // Every point within 0.6 rad of the center keeps all costs finite.
        let mut near = || loop {
            let p = uniform_point(&mut rng);
            if geodesic_distance(&p, &center) < 0.6 {
                break p;
            }
        };
        let sources: Vec<UnitVector> = (0..n).map(|_| near()).collect();
        let targets: Vec<UnitVector> = (0..n).map(|_| near()).collect();
        let total = |perm: &[usize]| -> f64 {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| cost(&sources[i], &targets[j]).finite().unwrap())
                .sum()
        };
        let best = permutations(n)
            .into_iter()
            .min_by(|a, b| total(a).total_cmp(&total(b)))
            .unwrap();
        let pairs = |perm: &[usize]| {
            PairSet::new(
                perm.iter()
                    .enumerate()
                    .map(|(i, &j)| (sources[i], targets[j]))
                    .collect(),
            )
            .unwrap()
        };
        let s = pairs(&best);
        let chain = chain_potential(&s, 0, &[]).unwrap();
        base_ok &= chain.pair_values[0] == 0.0;
        for (i, &(a, x)) in s.pairs().iter().enumerate() {
            let phi_c = chain.c_transform_at(&x).unwrap();
            worst =
                worst.max((chain.pair_values[i] + phi_c - cost(&a, &x).finite().unwrap()).abs());
        }
        // Perturbations: a transposition and a 3-cycle of the optimal targets.
        let mut swapped = best.clone();
        swapped.swap(0, 1);
        let mut rotated = best.clone();
        rotated[..3].rotate_left(1);
        for perm in [swapped, rotated] {
            if total(&perm) <= total(&best) + 1e-9 {
                continue;
            }
            perturbed += 1;
            let bad = pairs(&perm);
            let violation = matches!(
                check_c_cyclical_monotonicity(&bad, 3).unwrap(),
                Monotonicity::Violation { .. }
            );
            let cycle = matches!(chain_potential(&bad, 0, &[]), Err(Error::NegativeCycle(_)));
            if violation || cycle {
                caught += 1;
            }
        }
    }
    outcome(
        base_ok && worst <= 1e-9 && caught == perturbed && perturbed > 0,
        format!("20 instances, max |phi(n)+phi^c(x)-c| {worst:.1e}; {caught}/{perturbed} perturbed pairings flagged"),
    )
}

fn criterion_9(suite: &[Instance]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (k, inst) in suite.iter().enumerate() {
        let run = |seed: u64| {
            let cfg = SolverConfig {
                init: Initialization::Random { seed, spread: 0.3 },
                ..config()
            };
            solve_dual(&inst.mu, &cfg)
        };
        match (run(900 + k as u64), run(950 + k as u64)) {
            (Ok(a), Ok(b)) if a.converged && b.converged => {
                let d = a
                    .potentials
                    .psi
                    .iter()
                    .zip(&b.potentials.psi)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(d);
                if d > 10.0 * TOL {
                    failures.push(inst.name.clone());
                }
            }
            _ => failures.push(format!("{} did not converge", inst.name)),
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} instances, max gauge-fixed |psi_a - psi_b| {worst:.1e}, failing {failures:?}",
            suite.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let lattice = fibonacci_lattice(1 << 18);
    let mut failures = Vec::new();
    for (name, mu) in rejected_measures() {
        let r = alexandrov_check(&mu, DEFAULT_SUBSET_CAP, 42);
        // Independent slack of the witness: polar area from the lattice.
        let pts: Vec<UnitVector> = r
            .worst_subset
            .iter()
            .map(|&i| mu.atoms()[i].point)
            .collect();
        let polar = lattice
            .iter()
            .filter(|y| pts.iter().all(|x| y.dot(x) <= 0.0))
            .count() as f64
            / lattice.len() as f64;
        let slack = 1.0 - polar - mu.subset_mass(&r.worst_subset);
        if r.accepted || r.worst_subset.is_empty() || r.worst_slack > 1e-12 || slack > 1e-3 {
            failures.push(format!(
                "{name}: accepted {} witness {:?} slack {:.2e}",
                r.accepted, r.worst_subset, slack
            ));
        }
    }
    let mut accepted = 0;
    for seed in 0..50u64 {
        let vertices = 4 + (seed as usize * 56) / 49;
        let mu = random_polytope(5000 + seed, vertices, 0.5, 1.5)
            .curvature_measure()
            .unwrap();
        if alexandrov_check(&mu, DEFAULT_SUBSET_CAP, 42).accepted {
            accepted += 1;
        } else {
            failures.push(format!("random body {seed} rejected"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} inadmissible measures rejected with witnesses; {accepted}/50 random-body curvature measures accepted; failing {failures:?}",
            rejected_measures().len()
        ),
    )
}

fn main() {
    let start = Instant::now();
    let suite = suite();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(usize, Check)> = vec![
        (1, Box::new(|| criterion_1(&suite))),
        (2, Box::new(|| criterion_2(&suite))),
        (3, Box::new(|| criterion_3(&suite))),
        (4, Box::new(|| criterion_4(&suite))),
        (5, Box::new(criterion_5)),
        (6, Box::new(|| criterion_6(&suite))),
        (7, Box::new(|| criterion_7(&suite))),
        (8, Box::new(criterion_8)),
        (9, Box::new(|| criterion_9(&suite))),
        (10, Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (id, check) in criteria {
        let t = Instant::now();
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "acceptance {id:>2}: {status} ({:.1}s) {}",
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of 10 criteria passed in {:.1}s",
        10 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
