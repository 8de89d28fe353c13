//! Simulation laboratory for quenched central-limit statistics of random
//! compositions of interval maps.
//!
//! The crate simulates cocycles `T_{omega_n} o ... o T_{omega_1}` of
//! piecewise-expanding interval maps driven by mixing letter processes, and
//! measures the statistics that control the quenched central limit theorem:
//! fiberwise correlations and variances, their concentration around the
//! annealed mean, the limit variance through several equivalent series, the
//! analytic convergence-rate predictions, and empirical distances of the
//! normalized Birkhoff sums from their Gaussian limit.

pub mod clt;
pub mod error;
pub mod limit;
pub mod maps;
pub mod numeric;
pub mod quenched;
pub mod rates;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
