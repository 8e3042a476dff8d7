//! Optimal harvesting of a fishery whose biomass and growth rate jump at
//! random times.
//!
//! [`model`] holds parameters and gain functions, [`kernels`] the jump laws,
//! [`flow`] the deterministic dynamics between jumps and [`simulator`] whole
//! sample paths. [`solver`] computes the value function and the critical
//! biomass `x*`, and [`analysis`] measures how `x*` responds to the jump
//! rates and the growth rate.
//!
//! ```
//! use pdmp_harvest::kernels::{Kernel, KernelSpec};
//! use pdmp_harvest::model::Model;
//! use pdmp_harvest::solver::{solve_value_1d, GridSpec};
//!
//! let kernel = Kernel::new(KernelSpec::uniform(0.8, 1.2)).unwrap();
//! let grid = GridSpec { nodes: 401, ..GridSpec::default() };
//! let v = solve_value_1d(&Model::baseline(), &kernel, 0.1, &grid).unwrap();
//! assert!(v.x_star > 0.5 && v.x_star < 1.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod flow;
pub mod kernels;
pub mod model;
pub mod numerics;
pub mod simulator;
pub mod solver;
