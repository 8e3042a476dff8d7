//! One growth-rate slice of the value function for a frozen jump term.
//!
//! With `w(x)` held fixed the value equation is the deterministic problem
//! `max ∫ (l0 e + w) e^{-ρ t} dt`, whose solution approaches the switching
//! level as fast as possible. The level is the lowest upward zero of
//!
//! ```text
//! Φ(x) = (ρ - G'(x)) m(x) - m'(x) G(x) - w'(x)
//! ```
//!
//! and `V(x*) = (l0 E + w)(x*) / ρ`. Away from `x*` the value follows the
//! characteristics `V' = (ρ V - w) / G` below and
//! `V' = (ρ V - w - l0 ē) / (G - h0 ē)` above, integrated outward in `ln x`.

use rayon::prelude::*;

use crate::kernels::GriddedFunction;
use crate::model::Model;
use crate::numerics::roots;

use super::SolverError;

/// Root tolerance in biomass.
pub(crate) const ROOT_TOL: f64 = 1e-12;

/// A frozen jump term `w` with its derivative, usable from several threads.
pub(crate) trait JumpTerm: Sync {
    fn both(&self, x: f64) -> (f64, f64);
    /// Extra points where `w` is not smooth.
    fn breaks(&self) -> Vec<f64>;
}

pub(crate) struct NoJumps;

impl JumpTerm for NoJumps {
    fn both(&self, _x: f64) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub(crate) struct Slice<'a> {
    pub model: &'a Model,
    pub r: f64,
    pub rho: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// Integrator step in `ln x`.
    pub ds: f64,
    /// Step of the mesh carrying `w`, in `ln x`.
    pub ds_w: f64,
    pub scan_points: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SliceSolution {
    pub x_star: f64,
    /// Upward zeros of Φ, ascending; the first is `x_star`.
    pub up_roots: Vec<f64>,
    pub interp: GriddedFunction,
}

impl Slice<'_> {
    fn phi(&self, x: f64, w_prime: f64) -> f64 {
        let (g, g1, _) = self.model.g(x, self.r);
        let mg = self.model.margin(x);
        (self.rho - g1) * mg.m - mg.m_prime * g - w_prime
    }

    /// Scan interval for the switching level.
    pub fn scan_range(&self) -> (f64, f64) {
        let e = &self.model.econ;
        let lo = (e.c / (e.p * e.q)).max(self.x_min);
        let k = self.model.bio.k;
        (lo + 1e-9 * k, k * (1.0 - 1e-9))
    }

    /// Upward zeros of Φ, with `w'` from `approx` for the scan and `exact`
    /// for the refinement.
    pub fn critical<A, E>(&self, approx: A, exact: E) -> Vec<f64>
    where
        A: Fn(f64) -> f64 + Sync,
        E: Fn(f64) -> f64,
    {
        let (lo, hi) = self.scan_range();
        let xs = GriddedFunction::uniform_nodes(lo, hi, self.scan_points.max(3));
        let vals: Vec<f64> = xs.par_iter().map(|&x| self.phi(x, approx(x))).collect();
        let f = |x: f64| self.phi(x, exact(x));
        let mut out = Vec::new();
        for i in 0..xs.len() - 1 {
            if vals[i] < 0.0 && vals[i + 1] >= 0.0 {
                let (a, b) = (xs[i], xs[i + 1]);
                let (fa, fb) = (f(a), f(b));
                let root = if fa < 0.0 && fb >= 0.0 {
                    roots::refine(f, a, b, ROOT_TOL)
                } else {
                    roots::refine(|x| self.phi(x, approx(x)), a, b, ROOT_TOL)
                };
                out.push(root);
            }
        }
        out
    }

    /// Log-uniform mesh on `[x_min, x_max]` with `extra` points inserted.
    fn w_mesh(&self, extra: &[f64]) -> Vec<f64> {
        let (s0, s1) = (self.x_min.ln(), self.x_max.ln());
        let n = ((s1 - s0) / self.ds_w).ceil().max(2.0) as usize;
        let mut xs: Vec<f64> = (0..=n)
            .map(|i| (s0 + (s1 - s0) * i as f64 / n as f64).exp())
            .collect();
        xs[0] = self.x_min;
        xs[n] = self.x_max;
        xs.extend(
            extra
                .iter()
                .copied()
                .filter(|&b| b > self.x_min && b < self.x_max),
        );
        xs.sort_by(f64::total_cmp);
        let tol = 1e-9 * self.ds_w;
        xs.dedup_by(|a, b| (*a / *b - 1.0).abs() < tol);
        xs
    }

    /// Hermite interpolant of the jump term on the `w` mesh.
    pub fn tabulate(&self, jump: &dyn JumpTerm) -> Result<GriddedFunction, SolverError> {
        let xs = self.w_mesh(&jump.breaks());
        let (w, wp): (Vec<f64>, Vec<f64>) = xs.par_iter().map(|&x| jump.both(x)).unzip();
        Ok(GriddedFunction::with_derivatives(xs, w, wp)?)
    }

    /// Solves the slice for the frozen jump term `jump`; `table` is its
    /// interpolant from [`tabulate`](Self::tabulate), or `None` without jumps.
    pub fn solve(
        &self,
        jump: &dyn JumpTerm,
        table: Option<&GriddedFunction>,
    ) -> Result<SliceSolution, SolverError> {
        let w_both = |x: f64| table.map_or((0.0, 0.0), |t| t.eval_both(x));
        let up_roots = self.critical(|x| w_both(x).1, |x| jump.both(x).1);
        let x_star = *up_roots
            .first()
            .ok_or(SolverError::NoCriticalValue { r: self.r })?;
        let e_max = self.model.econ.e_max;
        let e_star = self.model.singular_effort(x_star, self.r);
        if !(e_star >= 0.0 && e_star <= e_max) {
            return Err(SolverError::SingularEffortInadmissible {
                x_star,
                effort: e_star,
                e_max,
            });
        }
        let w_star = jump.both(x_star).0;
        let v_star = (self.model.gain_rate(x_star, e_star) + w_star) / self.rho;

        let w = |x: f64| w_both(x).0;
        let left = |x: f64, v: f64| {
            let gx = self.model.g(x, self.r).0 / x;
            (self.rho * v - w(x)) / gx
        };
        let right = |x: f64, v: f64| {
            let gx = self.model.g(x, self.r).0 / x - self.model.econ.q * e_max;
            (self.rho * v - w(x) - self.model.gain_rate(x, e_max)) / gx
        };
        let below = integrate_log(&left, x_star, v_star, self.x_min, self.ds);
        let above = integrate_log(&right, x_star, v_star, self.x_max, self.ds);

        let n = below.len() + above.len() - 1;
        let (mut xs, mut vs, mut ds) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for &(x, v, dvds) in below.iter().rev().chain(above.iter().skip(1)) {
            xs.push(x);
            vs.push(v);
            ds.push(dvds / x);
        }
        let interp = GriddedFunction::with_derivatives(xs, vs, ds)?.with_kinks(vec![x_star]);
        Ok(SliceSolution {
            x_star,
            up_roots,
            interp,
        })
    }
}

/// RK4 for `dV/ds = f(x, V)` with `x = e^s`, from `x0` to `x1` in equal steps
/// no longer than `ds`. Returns `(x, V, dV/ds)` along the way, end points
/// exact.
fn integrate_log<F: Fn(f64, f64) -> f64>(
    f: &F,
    x0: f64,
    v0: f64,
    x1: f64,
    ds: f64,
) -> Vec<(f64, f64, f64)> {
    let (s0, s1) = (x0.ln(), x1.ln());
    let n = ((s1 - s0).abs() / ds).ceil().max(1.0) as usize;
    let h = (s1 - s0) / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let (mut s, mut v) = (s0, v0);
    let mut k1 = f(x0, v0);
    out.push((x0, v0, k1));
    for i in 1..=n {
        let xm = (s + 0.5 * h).exp();
        let xe = if i == n {
            x1
        } else {
            (s0 + h * i as f64).exp()
        };
        let k2 = f(xm, v + 0.5 * h * k1);
        let k3 = f(xm, v + 0.5 * h * k2);
        let k4 = f(xe, v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s = s0 + h * i as f64;
        k1 = f(xe, v);
        out.push((xe, v, k1));
    }
    out
}
