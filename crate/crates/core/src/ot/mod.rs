//! Optimal transport between task distributions.
//!
//! Two representations are supported: [`Categorical`] weights over a fixed,
//! indexed context set, and [`Particles`] (weighted point clouds) over a
//! continuous context space. Transport problems are solved either exactly
//! ([`exact_ot_lp`], a transportation simplex meant for oracle-sized inputs)
//! or with entropic regularization ([`sinkhorn_plan`]).
//!
//! Geodesic interpolation comes in two flavours:
//!
//! - [`barycenter_fixed_support`]: debiased Sinkhorn barycenter of two
//!   categorical distributions on one shared support.
//! - [`barycenter_free_support`]: McCann displacement interpolation of two
//!   particle clouds along the optimal plan.
//!
//! The weight convention throughout is `(1 - alpha)` on the source and
//! `alpha` on the target, so `alpha = 0` reproduces the source.

mod barycenter;
mod cost;
mod dist;
mod distance;
mod error;
mod lp;
mod sinkhorn;

pub use barycenter::{
    barycenter_fixed_support, barycenter_free_support, BarycenterOutput, MASS_FLOOR,
};
pub(crate) use cost::build_index_cost;
pub use cost::{build_cost_matrix, ContextDistance, CostMatrix, FnDistance, Squared, SquaredL2};
pub use dist::{Categorical, Particles, TaskDistribution, WEIGHT_SUM_TOL};
pub use distance::{wasserstein_distance, Ground, Solver};
pub use error::OtError;
pub use lp::{exact_ot_lp, LP_MAX_ENTRIES};
pub(crate) use lp::lp_cost;
pub(crate) use sinkhorn::solve as sinkhorn_solve;
pub use sinkhorn::{sinkhorn_plan, Coupling, Epsilon, SinkhornConfig, SinkhornOutput};
