//! Stochastic optimal control by branched forward sampling and local-entropy-weighted
//! least-squares Monte Carlo over drifted forward-backward SDEs.
//!
//! A run alternates four stages: [`forward::forward_pass`] grows a tree of
//! Euler-Maruyama samples, [`backward::backward_pass`] fits a Chebyshev value model at
//! every time step, [`solver::policy_cost`] scores the resulting feedback policy, and
//! [`erode::erode`] prunes the tree before the next iteration. [`solver::solve`] drives
//! the loop.

pub mod backward;
pub mod basis;
pub mod cli;
pub mod config;
pub mod erode;
pub mod error;
pub mod forward;
pub mod problem;
pub mod rng;
pub mod solver;
pub mod tree;

pub use basis::{ChebyshevBasis, ValueModel};
pub use error::{Error, Result};
pub use forward::{ForwardConfig, Roi, SamplingMode};
pub use problem::{make_problem, SocProblem};
pub use solver::{solve, IterationReport, Solution, SolverConfig};
pub use tree::BranchTree;
