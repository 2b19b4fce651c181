//! Two-scale online energy management for grid-powered coordinated base stations.
//!
//! A cluster of base stations jointly beamforms to its users while trading
//! energy on two markets: an ahead-of-time market cleared once per
//! coarse-grained interval of `T` slots, and a real-time market cleared every
//! slot. Each station owns a leaky battery and may harvest renewable energy.
//! The controller in [`controller`] plans ahead-of-time purchases by projected
//! stochastic subgradient over past realizations, then balances energy and
//! beamforms per slot by solving a small second-order cone program, steering
//! batteries through price-shaped virtual queues.
//!
//! The crate also ships the comparison policies ([`baselines`]), the
//! theoretical optimality-gap machinery ([`gap`]), and slow reference solvers
//! ([`oracle`]) used to cross-check the fast paths.

pub mod baselines;
pub mod config;
pub mod controller;
pub mod cost;
pub mod gap;
pub mod oracle;
pub mod planner;
pub mod sampling;
pub mod socp;
pub mod state;

pub use config::{validate_config, ConfigError, SystemConfig, ValidatedConfig};
pub use state::{
    BatteryState, Beamformers, ChannelMatrix, FastState, PlanDecision, RealtimeDecision, SlowState,
};
