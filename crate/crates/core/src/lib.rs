//! Seasoned volatility swap pricing and hedging from an implied-volatility
//! smile, with Monte Carlo verification under stochastic-volatility models.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjusted;
pub mod backtest;
pub mod cli;
pub mod analytics;
pub mod hedge;
pub mod io;
pub mod models;
pub mod normal;
pub mod quadrature;
pub mod smile;
pub mod volswap;
