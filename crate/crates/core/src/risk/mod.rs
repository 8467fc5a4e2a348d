//! Stein unbiased risk estimates, divergence oracles and Monte-Carlo sweeps.

mod oracle;
mod sure;
mod sweep;

pub use oracle::{
    blasso_estimator, default_fd_step, fd_divergence, finite_difference_divergence, mc_divergence,
    monte_carlo_divergence, oracle_solver_options,
};
pub use sure::{sure_param_value, sure_value};
pub use sweep::{
    aggregate, replicate_noise, run_replicate, run_sweep, Aggregate, OracleToggles, Summary, SweepConfig, SweepOutput,
    SweepRecord, Truth,
};
