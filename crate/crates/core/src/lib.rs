//! Constrained MDP solving, demonstration generation and recovery of both
//! reward and constraint functions from demonstrations by maximum-entropy
//! feature matching with exponentiated-gradient updates.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod demo;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod gridworld;
pub mod irl;
pub mod model;
pub mod oracle;
pub mod visitation;

pub use demo::{
    empirical_feature_expectation, generate_dataset, sample_trajectory, trajectory_features,
    Dataset, Trajectory,
};
pub use error::{Error, Result};
pub use forward::{solve_cmdp, solve_unconstrained, ForwardSolution, SolveStatus};
pub use gridworld::{build_gridworld, render_grids, sample_experiment, GridworldParams, SlipMode};
pub use irl::{
    egd_step, gradients, kl_project_simplex, kl_project_simplex_halfspace, recover_functions,
    run_irl, IrlConfig, IrlResult,
};
pub use model::{CmdpModel, FeatureKind, Policy, WeightPair, BUDGET};
pub use visitation::{policy_feature_expectation, state_visitation, VisitationTable};
