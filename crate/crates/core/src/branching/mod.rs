//! Branching random walks: forward engine, survival-conditioned sampler and
//! the size-biased spine.

pub mod engine;
pub mod reduced;
pub mod spine;
pub mod testfn;

pub use engine::{count_in_ball, run_to_horizon, step_generation, step_generation_capped, Generation, Run, POPULATION_CAP};
pub use reduced::{
    binomial, conditioned_tree, conditioned_tree_into, free_tree, surviving_children, PruneStats, Pruner,
    SurvivalTable, PRUNE_EPSILON,
};
pub use spine::{
    eval_backward_functionals, gw_count, sample_spine, size_biased_population, BackwardSampler, SpineRealization,
};
pub use testfn::{Mode, TestFunction, TestFunctionKind};
