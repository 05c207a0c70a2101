//! Optimal dividend payout and reinsurance for regime-switching surplus
//! diffusions.
//!
//! The surplus of an insurer follows a diffusion whose drift and volatility
//! are set by a retention level (proportional or excess-of-loss reinsurance)
//! and modulated by a finite-state Markov regime; dividends may be paid out
//! at any time.  The library discretizes this controlled process onto a
//! locally consistent Markov chain ([`chain`]), solves the resulting
//! dynamic program for the value function, the retention policy, and the
//! payout barriers ([`solver`]), and verifies solutions independently by
//! path simulation ([`mc`]) and against a closed-form single-regime
//! benchmark ([`oracle`]).
//!
//! [`presets`] ships the reference configurations exercised by the test
//! suite and the command-line frontend.

pub mod chain;
pub mod mc;
pub mod model;
pub mod oracle;
pub mod presets;
pub mod solver;

pub use chain::{
    check_local_consistency, regular_kernel, ChainError, Grid, GridError, KernelCache,
    TransitionKernel,
};
pub use mc::{simulate_payoff, McError, McEstimate, SimConfig};
pub use model::{
    ClaimDistribution, ControlMesh, DividendWeight, ModelError, ModelSpec, PayoffSpec, RegimeSet,
    Reinsurance, RewardTable, RunningReward,
};
pub use oracle::{barrier_value, characteristic_roots, optimal_barrier, OracleError};
pub use solver::{
    bellman_value, extract_barrier, qvi_residual, solve_policy_iteration, solve_value_iteration,
    Action, Solution, SolveError, SolverOptions,
};
