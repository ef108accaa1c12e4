//! Mean-field spin-flip dynamics in a binary random environment.
//!
//! Each of `N` sites carries a spin `sigma`, a field spin `omega` and a frozen
//! label `eta`, all in `{-1, +1}`. The `sigma` spins align with their own
//! `omega` at rate `exp(-beta sigma omega)`; the `omega` spins follow the
//! magnetization shifted by the label through `exp(-gamma omega (m + eta h))`.
//!
//! * [`sim`] – exact finite-N simulation on cell counts;
//! * [`limit`] – the infinite-N moment ODE;
//! * [`equilibria`] – fixed points, stability and the phase diagram;
//! * [`fluctuations`] – the Gaussian `sqrt(N)` corrections;
//! * [`critical`] – the `N^{1/4}` regime on the critical curve;
//! * [`oracle`] – exact two-site law for cross-checking the simulator.

pub mod critical;
pub mod equilibria;
mod error;
pub mod fluctuations;
pub mod io;
pub mod limit;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Cell, CellCounts, ModelParams, MomentVector, SpinConfig};
pub use ode::Tolerances;
pub use sim::{EtaMode, InitialLaw, SimOptions, SimState, TrajectoryRecord};
