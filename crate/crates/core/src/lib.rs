//! Simulation and exact analysis of losses per busy period in single-server
//! queues with finite real capacity, real-valued batch arrivals and
//! real-valued batch services.
//!
//! - [`dists`]: positive distributions, mean residual life, aging classes.
//! - [`engine`]: discrete-event simulation, one busy cycle at a time.
//! - [`stats`]: regenerative estimates, Wald residuals, bound checks, tests.
//! - [`oracle`]: exact `E M_L` for Poisson arrivals and lattice masses.
//! - [`cli`]: JSON experiment configs and the runner behind the binary.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod cli;
pub mod dists;
pub mod engine;
pub mod num;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod stats;

pub use num::Real;

pub type DistributionSpec64 = dists::DistributionSpec<f64>;
pub type DistributionSpec32 = dists::DistributionSpec<f32>;
pub type QueueModel64 = engine::QueueModel<f64>;
pub type QueueModel32 = engine::QueueModel<f32>;
pub type CycleRecord64 = engine::CycleRecord<f64>;
pub type CycleRecord32 = engine::CycleRecord<f32>;
pub type Simulator64 = engine::Simulator<f64>;
pub type Estimate64 = stats::Estimate<f64>;
pub type EstimateReport64 = report::EstimateReport<f64>;
pub type LatticeModel64 = oracle::LatticeModel<f64>;
