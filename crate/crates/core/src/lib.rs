//! Finite-time blow-up of semilinear SDEs `dX = b(t, X) dt + σ(t) X dW`.
//!
//! Integral criteria (Osgood, Feller, pathwise) decide explosion from the
//! coefficients alone; pathwise simulation and Monte Carlo ensembles
//! cross-check the verdicts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod criteria;
pub mod expr;
pub mod mc;
pub mod odeblow;
pub mod problem;
pub mod quadrature;
pub mod sdesim;

pub use problem::Problem;
