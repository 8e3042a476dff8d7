//! Value function, critical value and threshold policy.
//!
//! The solver iterates the dynamic-programming operator
//!
//! ```text
//! T[V](x0) = max_e ∫ (l0(X) e + λ Q[V](X)) e^{-(δ+λ) t} dt
//! ```
//!
//! which is a contraction with factor `λ / (δ + λ)`. Each application freezes
//! the jump term `w = λ Q[V]` and solves the remaining deterministic problem
//! exactly: the optimal path reaches the switching level as fast as possible
//! and stays there, so `T[V]` is built by integrating the characteristics of
//! the value equation outward from the switching level.
//!
//! In two dimensions the growth rate is constant between jumps, so each
//! growth-rate slice is solved the same way and the slices couple only
//! through the growth-rate jump term.

mod one_d;
mod policy;
pub(crate) mod slice;
mod two_d;

pub use one_d::{
    critical_value_1d, dp_operator, solve_value_1d, CriticalValue, DpOptions, ValueGrid,
};
pub use policy::{policy_from_curve, policy_from_value, Threshold, ThresholdPolicy};
pub use two_d::{critical_value_2d, solve_value_2d, CriticalCurve, RGridSpec, ValueGrid2D};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{GridError, Kernel, KernelError};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("no interior critical value at growth rate {r}")]
    NoCriticalValue { r: f64 },
    #[error("several critical values {roots:?}")]
    AmbiguousCriticalValue { roots: Vec<f64> },
    #[error("singular effort {effort} at x* = {x_star} is outside [0, {e_max}]")]
    SingularEffortInadmissible {
        x_star: f64,
        effort: f64,
        e_max: f64,
    },
    #[error("critical value {0} is not inside (0, K)")]
    CriticalValueOutOfRange(f64),
    #[error("no convergence after {iterations} iterations; last gaps {tail:?}")]
    NotConverged { iterations: usize, tail: Vec<f64> },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{0} is too close to the grid edge")]
    StencilOutOfRange(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Biomass grid and iteration controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Defaults to `1e-4 K`.
    pub x_min: Option<f64>,
    /// Defaults to `1.05 K` times the largest biomass multiplier (at least 1).
    pub x_max: Option<f64>,
    pub nodes: usize,
    /// When set, overrides `nodes`; `x_max` is moved up to a whole number of
    /// steps.
    pub spacing: Option<f64>,
    /// Integrator step in `ln x`.
    pub ode_step: f64,
    /// Spacing in `ln x` of the mesh carrying the jump term.
    pub jump_mesh_step: f64,
    /// Scan points for the switching level.
    pub scan_points: usize,
    /// Stop once successive iterates differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: None,
            x_max: None,
            nodes: 2001,
            spacing: None,
            ode_step: 1e-3,
            jump_mesh_step: 1e-2,
            scan_points: 2000,
            tol: 1e-12,
            max_iter: 5000,
        }
    }
}

impl GridSpec {
    pub fn with_spacing(spacing: f64) -> Self {
        Self {
            spacing: Some(spacing),
            ..Self::default()
        }
    }

    /// Grid nodes for `model` with biomass kernel `kernel`.
    pub fn resolve(&self, model: &Model, kernel: &Kernel) -> Result<Vec<f64>, SolverError> {
        let k = model.bio.k;
        let x_min = self.x_min.unwrap_or(1e-4 * k);
        let x_max = self
            .x_max
            .unwrap_or(1.05 * kernel.multiplier_range().1.max(1.0) * k);
        if !(x_min > 0.0 && x_max > k && x_max > x_min) {
            return Err(SolverError::InvalidGrid(format!(
                "need 0 < x_min < K < x_max, got [{x_min}, {x_max}] with K = {k}"
            )));
        }
        if !(self.ode_step > 0.0 && self.jump_mesh_step > 0.0 && self.tol > 0.0) {
            return Err(SolverError::InvalidGrid(
                "steps and tolerance must be positive".into(),
            ));
        }
        match self.spacing {
            Some(h) => {
                if !(h > 0.0 && h < x_max - x_min) {
                    return Err(SolverError::InvalidGrid(format!("bad spacing {h}")));
                }
                let n = ((x_max - x_min) / h - 1e-9).ceil() as usize + 1;
                Ok((0..n).map(|i| x_min + h * i as f64).collect())
            }
            None => {
                if self.nodes < 5 {
                    return Err(SolverError::InvalidGrid(format!(
                        "need at least 5 nodes, got {}",
                        self.nodes
                    )));
                }
                Ok(crate::kernels::GriddedFunction::uniform_nodes(
                    x_min, x_max, self.nodes,
                ))
            }
        }
    }
}

/// Rejects grids on which a node in `[x_min / z_lo, K]` would lose more than
/// the kernel's tolerated mass to clamping.
pub(crate) fn check_support(
    nodes: &[f64],
    model: &Model,
    kernel: &Kernel,
) -> Result<(), SolverError> {
    let (lo, hi) = (nodes[0], *nodes.last().unwrap());
    let start = lo / kernel.multiplier_range().0.min(1.0);
    for &x in nodes.iter().filter(|&&x| x >= start && x <= model.bio.k) {
        let mass = kernel.mass_outside(x, lo, hi);
        if mass > kernel.spec().max_clamp_fraction {
            return Err(KernelError::SupportOffGrid {
                state: x,
                clamped_mass: mass,
                lo,
                hi,
            }
            .into());
        }
    }
    Ok(())
}
