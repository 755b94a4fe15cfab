//! Deterministic two-rate transmission/distribution co-simulation engine.
//!
//! A coarse-timestep transmission surrogate (swing dynamics, governor droop,
//! AGC) exchanges boundary voltage phasors with a fine-timestep distribution
//! feeder (SRF-PLL frequency estimation, droop-responsive PV plants) in
//! lockstep. The rate gap between the two sides is bridged by polynomial
//! extrapolation of the boundary samples, guarded by an adaptive anomaly
//! detector that resets the extrapolation buffer across discontinuities.
//!
//! Modules:
//! - [`angle`]: phase wrapping and unwrapping helpers
//! - [`extrap`]: boundary sample buffer and rate-transition methods
//! - [`anomaly`]: threshold schemes, outlier verdicts, rate limiting
//! - [`pll`]: three-phase synthesis and SRF-PLL frequency estimation
//! - [`transmission`]: reduced multi-machine grid with AGC and events
//! - [`distribution`]: feeder load aggregation and PV frequency response
//! - [`bridge`]: per-variable extrapolation + detection at the boundary
//! - [`config`]: scenario description, validation, JSON loading
//! - [`cosim`]: the lockstep engine and run driver
//! - [`metrics`]: trace comparison metrics (MAPE, nMAE)
//! - [`trace`]: run traces and CSV emission
//! - [`wire`]: binary lockstep protocol for two-process operation

pub mod angle;
pub mod anomaly;
pub mod bridge;
pub mod config;
pub mod cosim;
pub mod distribution;
pub mod extrap;
pub mod metrics;
pub mod pll;
pub mod trace;
pub mod transmission;
pub mod wire;
