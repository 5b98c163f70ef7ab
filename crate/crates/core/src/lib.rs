pub mod body;
pub mod cost;
pub mod error;
pub mod feasibility;
pub mod hull;
pub mod integrate;
pub mod laguerre;
pub mod measure;
pub mod sampling;
pub mod solver;
pub mod sphere;

pub use body::ConvexBody;
pub use cost::PairSet;
pub use error::{Error, Result};
pub use feasibility::{build_feasible_plan, FeasiblePlan};
pub use measure::{AdmissibilityReport, DiscreteMeasure};
pub use solver::{solve_dual, SolveResult, SolverConfig};
pub use sphere::{FiniteSphericalSet, SphericalPolygon, UnitVector};
