use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants map one-to-one to the failure modes each operation documents, so
/// callers (notably the CLI) can translate them into stable exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid unit vector: {0}")]
    InvalidVector(String),

    #[error("polygon is not geodesically convex: {0}")]
    NonConvex(String),

    #[error("point outside the domain of the cost gradient (distance {distance} rad)")]
    Domain { distance: f64 },

    #[error("every site is at distance >= pi/2 from the query point")]
    Unreachable,

    #[error("query point is a tie between sites {first} and {second}")]
    Tie { first: usize, second: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("measure violates the admissibility condition (worst slack {worst_slack:e})")]
    NotAdmissible { worst_slack: f64 },

    #[error("{atoms} atoms exceed the exact-mode subset cap {cap}")]
    CapExceeded { atoms: usize, cap: usize },

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("origin is not interior to the body (min facet offset {min_offset:e})")]
    OriginNotInterior { min_offset: f64 },

    #[error("generators {0:?} are not vertices of the hull")]
    AbsorbedVertex(Vec<usize>),

    #[error("no partition reaches diameter < {bound} (minimal M estimate {min_m})")]
    InfeasibleDiameter { bound: f64, min_m: usize },

    #[error("Hall condition fails: atoms {:?} need {} cells but reach {}", .0.atoms, .0.demand, .0.reachable_cells)]
    HallFailure(HallWitness),

    #[error("plan certificate violated: {0}")]
    CertificateViolation(String),

    #[error("negative cycle through pair {0}")]
    NegativeCycle(usize),

    #[error("node {0} is not reachable by any finite-cost chain")]
    UnreachableNode(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A set of atoms whose copies outnumber the cells they can reach.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct HallWitness {
    pub atoms: Vec<usize>,
    pub demand: usize,
    pub reachable_cells: usize,
}

pub type Result<T> = std::result::Result<T, Error>;
