//! Monte Carlo estimators of survival probabilities, backward-tree constants,
//! conditioned limit configurations and limit fields.

pub mod backward;
pub mod conditioned;
pub mod intensity;
pub mod lower_bound;
mod result;
pub mod sandwich;
pub mod survival;

pub use backward::{default_depth, estimate_g, estimate_i, jensen_lower_bound, truncation_bias_bound, BackwardTreeParams, Grid, IEstimate};
pub use conditioned::{build_lambda_infinity_on_ball, sample_n_a, sample_n_a_batch, NaSample, NaSampler, N_MIN};
pub use intensity::lattice_intensity_sum;
pub use lower_bound::quadrature_lower_bound_i;
pub use result::{Estimate, EstimatorResult, DEFAULT_CI_LEVEL};
pub use sandwich::{fit_c_d, sandwich_check, SandwichOutcome};
pub use survival::{estimate_survival, survival_counts, survival_result, SimOptions, SurvivalCounts};
