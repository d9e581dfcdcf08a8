//! Rate maximization for a two-hop decode-and-forward MIMO relay that powers
//! itself from the source signal by per-antenna power splitting.
//!
//! The optimizer works on eigenmode gains ([`channel::EigenChannel`]) and
//! solves the dual problem with an ellipsoid method ([`ellipsoid::solve`]),
//! recovering the split ratios and power allocations in closed form.
//! [`baselines`] holds the uniform-split, split-grid and brute-force
//! reference solvers and [`harness`] runs seeded Monte Carlo comparisons.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod duals;
pub mod ellipsoid;
pub mod error;
pub mod harness;
pub mod rates;
mod recovery;

pub use channel::{dbm_to_linear, eigen_reduce, generate_channels, ChannelMatrices, EigenChannel, SystemParams};
pub use duals::{DualEval, DualPoint};
pub use ellipsoid::{solve, solve_fixed_rho, SolveResult, SolverConfig};
pub use rates::PrimalPoint;
