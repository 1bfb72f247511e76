//! Rational time discretizations of linear parabolic stochastic evolution
//! equations `dU + AU dt = g dW` on diagonal (spectral) model operators.
//!
//! The crate is organised bottom-up:
//!
//! * [`rational_calc`]: scheme functions `r(z)`, Padé families, order and
//!   stability audits, partial fractions, decay estimates.
//! * [`spectral_operator`]: positive diagonal operators and their functional
//!   calculus, fractional power and trace-space norms.
//! * [`noise`]: exact joint sampling of Brownian increments and
//!   exponentially weighted integrals, step processes, data norms.
//! * [`evolve`]: the scheme recursion, discrete stochastic convolutions and
//!   the exact mild solution on the same paths.
//! * [`norms`]: solution functionals, Monte Carlo estimation and the `p = 2`
//!   closed form.
//! * [`kernels`]: the kernel class `K_tau`, kernel families and probes.
//! * [`experiments`]: config-driven studies producing `report.json` and
//!   `rows.csv`.

pub mod error;
pub mod evolve;
pub mod experiments;
pub mod kernels;
pub mod noise;
pub mod norms;
pub mod numerics;
pub mod rational_calc;
pub mod rng;
pub mod spectral_operator;

pub use error::{Error, Result};
