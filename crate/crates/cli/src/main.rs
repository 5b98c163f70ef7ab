//! Command-line front end: admissibility checks, solving, curvature
//! measures, feasibility plans, transport-map samples and Hausdorff distances.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use gauss_ot::cost::cost;
use gauss_ot::feasibility::build_feasible_plan;
use gauss_ot::measure::{
    admissibility_report, alpha_margin, DEFAULT_ALPHA_TOL, DEFAULT_MC_SAMPLES, DEFAULT_SUBSET_CAP,
};
use gauss_ot::sampling::{SphereSampler, DEFAULT_SEED};
use gauss_ot::solver::{primal_value, trace_csv, DualPotentials};
use gauss_ot::sphere::hausdorff_distance;
use gauss_ot::{ConvexBody, DiscreteMeasure, Error, FiniteSphericalSet, SolverConfig, UnitVector};

use output::{emit, emit_json, read};

const EXIT_ERROR: u8 = 1;
const EXIT_REJECTED: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gauss-ot",
    version,
    about = "Convex bodies with prescribed Gauss curvature via optimal transport on the sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for every Monte Carlo estimate.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Largest atom count checked by exhaustive subset enumeration.
    #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
    subset_cap: usize,
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MarginArgs {
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc_samples: usize,
    /// Bisection tolerance for the alpha margin, in radians.
    #[arg(long, default_value_t = DEFAULT_ALPHA_TOL)]
    alpha_tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Admissibility report for a measure (exit 2 when rejected).
    Check {
        measure: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        margins: MarginArgs,
    },
    /// Solve the dual problem and write the reconstructed body.
    Solve {
        measure: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// Fibonacci nodes used to report the dual and primal values.
        #[arg(long, default_value_t = 1 << 16)]
        quadrature: usize,
        #[arg(long)]
        obj: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Curvature measure of a body.
    Curvature {
        body: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Bounded-cost transport plan built from an equal-area partition.
    Plan {
        measure: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        margins: MarginArgs,
        /// A positive angle, or `auto` to use the estimated alpha margin.
        #[arg(long, default_value = "auto")]
        alpha: AlphaArg,
        /// Number of partition cells (default: smallest feasible power of two).
        #[arg(long = "M")]
        m: Option<usize>,
    },
    /// Sample pairs (n, T(n)) of the optimal map of a body.
    Map {
        body: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Hausdorff distance between two point sets on the sphere.
    Hausdorff {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy)]
enum AlphaArg {
    Auto,
    Value(f64),
}

impl std::str::FromStr for AlphaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Self::Value(v)),
            _ => Err(format!("expected `auto` or a positive angle, got `{s}`")),
        }
    }
}

/// How a subcommand ended when it did not fail outright.
enum Outcome {
    Done,
    Rejected,
    NotConverged,
}

fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    DiscreteMeasure::from_json(&read(path)?)
        .with_context(|| format!("loading measure {}", path.display()))
}

fn load_body(path: &Path) -> Result<ConvexBody> {
    ConvexBody::from_json(&read(path)?).with_context(|| format!("loading body {}", path.display()))
}

/// Accepts `{"points": [[x,y,z], ...]}`, a measure file or a body file.
fn load_points(path: &Path) -> Result<FiniteSphericalSet> {
    #[derive(Deserialize)]
    struct Dir {
        dir: UnitVector,
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum PointFile {
        Points { points: Vec<UnitVector> },
        Atoms { atoms: Vec<Dir> },
        Vertices { vertices: Vec<Dir> },
    }
    let file: PointFile = serde_json::from_str(&read(path)?).with_context(|| {
        format!(
            "{}: expected `points`, `atoms` or `vertices`",
            path.display()
        )
    })?;
    let points = match file {
        PointFile::Points { points } => points,
        PointFile::Atoms { atoms: d } | PointFile::Vertices { vertices: d } => {
            d.into_iter().map(|d| d.dir).collect()
        }
    };
    if points.is_empty() {
        bail!("{}: no points", path.display());
    }
    Ok(FiniteSphericalSet::new(points)?)
}

fn check(measure: &Path, common: &Common, margins: &MarginArgs) -> Result<Outcome> {
    let mu = load_measure(measure)?;
    let report = admissibility_report(
        &mu,
        common.subset_cap,
        margins.mc_samples,
        common.seed,
        margins.alpha_tol,
    )?;
    emit_json(common.output.as_deref(), &report)?;
    Ok(if report.accepted {
        Outcome::Done
    } else {
        Outcome::Rejected
    })
}

#[derive(Serialize)]
struct SolveMetadata {
    converged: bool,
    iterations: usize,
    residual: f64,
    dual_value: f64,
    dual_error: f64,
    primal_value: f64,
    primal_error: f64,
    duality_gap: f64,
}

#[allow(clippy::too_many_arguments)]
fn solve(
    measure: &Path,
    common: &Common,
    tol: f64,
    max_iter: usize,
    quadrature: usize,
    obj: Option<&Path>,
    trace: Option<&Path>,
) -> Result<Outcome> {
    let mu = load_measure(measure)?;
    let cfg = SolverConfig {
        tol,
        max_iter,
        quadrature,
        subset_cap: common.subset_cap,
        seed: common.seed,
        ..SolverConfig::default()
    };
    let result = gauss_ot::solve_dual(&mu, &cfg)?;
    if let Some(path) = trace {
        emit(Some(path), &trace_csv(&result.trace))?;
    }
    let primal = primal_value(&result, quadrature)?;
    let dual = result.dual_value;
    let meta = SolveMetadata {
        converged: result.converged,
        iterations: result.iterations,
        residual: result.residual,
        dual_value: dual.value,
        dual_error: dual.error,
        primal_value: primal.value,
        primal_error: primal.error,
        duality_gap: (primal.value - dual.value).abs(),
    };
    match ConvexBody::from_potentials(&result.potentials) {
        Ok(body) => {
            let mut doc = body.to_json_value();
            doc["metadata"] = serde_json::to_value(&meta)?;
            emit_json(common.output.as_deref(), &doc)?;
            if let Some(path) = obj {
                emit(Some(path), &body.to_obj())?;
            }
        }
        // A stalled iterate may not span a body; keep the weights instead.
        Err(e) if !result.converged => {
            eprintln!("best iterate does not define a body ({e}); writing its weights");
            emit_json(
                common.output.as_deref(),
                &json!({"potentials": result.potentials, "metadata": meta}),
            )?;
        }
        Err(e) => return Err(e.into()),
    }
    if result.converged {
        Ok(Outcome::Done)
    } else {
        eprintln!(
            "no convergence after {} iterations (residual {:e})",
            result.iterations, result.residual
        );
        Ok(Outcome::NotConverged)
    }
}

fn curvature(body: &Path, output: Option<&Path>) -> Result<Outcome> {
    let mu = load_body(body)?.curvature_measure()?;
    emit_json(output, &mu.to_json_value())?;
    Ok(Outcome::Done)
}

fn plan(
    measure: &Path,
    common: &Common,
    margins: &MarginArgs,
    alpha: AlphaArg,
    m: Option<usize>,
) -> Result<Outcome> {
    let mu = load_measure(measure)?;
    let alpha = match alpha {
        AlphaArg::Value(a) => a,
        AlphaArg::Auto => {
            let a = alpha_margin(
                &mu,
                common.subset_cap,
                margins.mc_samples,
                common.seed,
                margins.alpha_tol,
            )?
            .alpha;
            if !(a > 0.0) {
                eprintln!("estimated alpha margin is zero");
                return Ok(Outcome::Rejected);
            }
            a
        }
    };
    match build_feasible_plan(&mu, alpha, m) {
        Ok(plan) => {
            emit_json(common.output.as_deref(), &plan)?;
            Ok(Outcome::Done)
        }
        Err(Error::HallFailure(w)) => {
            eprintln!("{}", Error::HallFailure(w.clone()));
            emit_json(
                common.output.as_deref(),
                &json!({"error": "HALL_FAILURE", "witness": w}),
            )?;
            Ok(Outcome::Rejected)
        }
        Err(e) => Err(e.into()),
    }
}

fn map(body: &Path, samples: usize, seed: u64, output: Option<&Path>) -> Result<Outcome> {
    let body = load_body(body)?;
    let psi = body.radii().iter().map(|r| r.ln()).collect();
    let diagram = DualPotentials::new(body.directions().to_vec(), psi)?.diagram()?;
    let pairs = SphereSampler::new(seed)
        .points(samples)
        .into_iter()
        .map(|n| {
            let x = diagram.sites()[diagram.assign(&n)?.1];
            let c = cost(&n, &x).finite().ok_or(Error::Unreachable)?;
            Ok(json!({"n": n, "x": x, "cost": c}))
        })
        .collect::<gauss_ot::Result<Vec<_>>>()?;
    emit_json(output, &json!({ "pairs": pairs }))?;
    Ok(Outcome::Done)
}

fn hausdorff(a: &Path, b: &Path, output: Option<&Path>) -> Result<Outcome> {
    let d = hausdorff_distance(&load_points(a)?, &load_points(b)?);
    emit_json(output, &json!({ "distance": d }))?;
    Ok(Outcome::Done)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Check {
            measure,
            common,
            margins,
        } => check(&measure, &common, &margins),
        Command::Solve {
            measure,
            common,
            tol,
            max_iter,
            quadrature,
            obj,
            trace,
        } => solve(
            &measure,
            &common,
            tol,
            max_iter,
            quadrature,
            obj.as_deref(),
            trace.as_deref(),
        ),
        Command::Curvature { body, output } => curvature(&body, output.as_deref()),
        Command::Plan {
            measure,
            common,
            margins,
            alpha,
            m,
        } => plan(&measure, &common, &margins, alpha, m),
        Command::Map {
            body,
            samples,
            seed,
            output,
        } => map(&body, samples, seed, output.as_deref()),
        Command::Hausdorff { a, b, output } => hausdorff(&a, &b, output.as_deref()),
    }
}

/// Domain rejections get exit code 2, everything else 1.
fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::NotAdmissible { .. } | Error::HallFailure(_) | Error::InfeasibleDiameter { .. },
        ) => EXIT_REJECTED,
        _ => EXIT_ERROR,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected) => ExitCode::from(EXIT_REJECTED),
        Ok(Outcome::NotConverged) => ExitCode::from(EXIT_NO_CONVERGENCE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}
