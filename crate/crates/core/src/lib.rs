//! Simulation and verification toolkit for stochastic differential equations
//! whose coefficients are only log-Lipschitz continuous.
//!
//! The crate is organised bottom-up:
//!
//! * [`coeffs`]: coefficient fields `(b, σ)`, the sine-series example field,
//!   truncation to bounded fields and empirical modulus estimation.
//! * [`lyapunov`]: growth profiles, the Osgood integrals `ψ_ρ` and their
//!   exponentials `Φ_{ρ,λ}`, the exit profile used for tail estimates and
//!   Stroock's exponential bound for Itô processes.
//! * [`paths`]: time grids, counter-keyed Brownian drivers with dyadic bridge
//!   refinement, piecewise-linear controls and trajectories.
//! * [`skeleton`]: the controlled ODE `F(g)`, the Euler polygon map `F_n` and
//!   the uniform-convergence harness.
//! * [`sde`]: Euler–Maruyama runs, coupled pairs, stability experiments and
//!   lifetime detection.
//! * [`ldp`]: rate-functional minimisation, crude Monte Carlo estimates of
//!   `ε log P` and exponential-closeness experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod error;
pub mod ldp;
pub mod lyapunov;
pub mod paths;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod skeleton;

pub use error::{Error, Result};

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
