use rayon::prelude::*;

use crate::flow::CROSSING_TOL;
use crate::kernels::{GriddedFunction, Kernel};
use crate::model::Model;
use crate::numerics::roots;

use super::slice::{JumpTerm, NoJumps, Slice, SliceSolution, ROOT_TOL};
use super::{check_support, GridSpec, SolverError};

/// Solved value function on a uniform biomass grid.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    pub nodes: Vec<f64>,
    pub v: Vec<f64>,
    pub v_prime: Vec<f64>,
    pub x_star: f64,
    /// Every upward zero of the switching function found in the last solve.
    pub switch_roots: Vec<f64>,
    /// Sup-norm defect of the value equation over the checked nodes.
    pub residual: f64,
    pub lambda: f64,
    pub iterations: usize,
    /// `max |V_{k+1} - V_k|` over the nodes, per iteration.
    pub gap_history: Vec<f64>,
    interp: GriddedFunction,
}

impl ValueGrid {
    /// The value function between nodes, including the switching level as a
    /// node and a quadrature break.
    pub fn interpolant(&self) -> &GriddedFunction {
        &self.interp
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.interp.eval(x)
    }

    pub fn slope_at(&self, x: f64) -> f64 {
        self.interp.eval_deriv(x)
    }

    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    /// Successive gap ratios, using only gaps above `floor`.
    pub fn contraction_ratios(&self, floor: f64) -> Vec<f64> {
        self.gap_history
            .windows(2)
            .take_while(|w| w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// `λ Q[V]` for a frozen `V`.
struct BiomassJump<'a> {
    lambda: f64,
    kernel: &'a Kernel,
    v: &'a GriddedFunction,
}

impl JumpTerm for BiomassJump<'_> {
    fn both(&self, x: f64) -> (f64, f64) {
        let (q, dq) = self.kernel.apply_both(self.v, x);
        (self.lambda * q, self.lambda * dq)
    }

    fn breaks(&self) -> Vec<f64> {
        let pts: Vec<f64> = self
            .v
            .kinks()
            .iter()
            .copied()
            .chain([self.v.lo(), self.v.hi()])
            .collect();
        let mults = self.kernel.break_multipliers();
        pts.iter()
            .flat_map(|p| mults.iter().map(move |m| p / m))
            .collect()
    }
}

fn slice<'a>(model: &'a Model, lambda: f64, nodes: &[f64], grid: &GridSpec) -> Slice<'a> {
    Slice {
        model,
        r: model.bio.r,
        rho: model.econ.delta + lambda,
        x_min: nodes[0],
        x_max: *nodes.last().unwrap(),
        ds: grid.ode_step,
        ds_w: grid.jump_mesh_step,
        scan_points: grid.scan_points,
    }
}

fn apply_t(
    s: &Slice<'_>,
    lambda: f64,
    kernel: &Kernel,
    prev: Option<&GriddedFunction>,
) -> Result<SliceSolution, SolverError> {
    match prev {
        Some(v) if lambda > 0.0 => {
            let jump = BiomassJump { lambda, kernel, v };
            let table = s.tabulate(&jump)?;
            s.solve(&jump, Some(&table))
        }
        _ => s.solve(&NoJumps, None),
    }
}

/// Solves the value equation with biomass jumps at rate `lambda`.
pub fn solve_value_1d(
    model: &Model,
    kernel: &Kernel,
    lambda: f64,
    grid: &GridSpec,
) -> Result<ValueGrid, SolverError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SolverError::InvalidGrid(format!(
            "jump rate must be non-negative, got {lambda}"
        )));
    }
    let nodes = grid.resolve(model, kernel)?;
    if lambda > 0.0 {
        check_support(&nodes, model, kernel)?;
    }
    let s = slice(model, lambda, &nodes, grid);
    let mut prev: Option<GriddedFunction> = None;
    let mut prev_vals = vec![0.0; nodes.len()];
    let mut history = Vec::new();
    for it in 1..=grid.max_iter {
        let sol = apply_t(&s, lambda, kernel, prev.as_ref())?;
        let vals: Vec<f64> = nodes.iter().map(|&x| sol.interp.eval(x)).collect();
        let gap = vals
            .iter()
            .zip(&prev_vals)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(gap);
        if lambda == 0.0 || gap <= grid.tol {
            return Ok(finish(model, kernel, lambda, nodes, vals, sol, it, history));
        }
        prev = Some(sol.interp);
        prev_vals = vals;
    }
    let tail = history[history.len().saturating_sub(5)..].to_vec();
    Err(SolverError::NotConverged {
        iterations: grid.max_iter,
        tail,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &Model,
    kernel: &Kernel,
    lambda: f64,
    nodes: Vec<f64>,
    v: Vec<f64>,
    sol: SliceSolution,
    iterations: usize,
    gap_history: Vec<f64>,
) -> ValueGrid {
    let v_prime = nodes.iter().map(|&x| sol.interp.eval_deriv(x)).collect();
    let residual = residual_1d(model, kernel, lambda, &sol.interp, &nodes);
    ValueGrid {
        nodes,
        v,
        v_prime,
        x_star: sol.x_star,
        switch_roots: sol.up_roots,
        residual,
        lambda,
        iterations,
        gap_history,
        interp: sol.interp,
    }
}

/// `max |[l0 - h0 V']_+ ē + V' G - (δ+λ) V + λ Q[V]|` over interior nodes
/// whose jump law stays on the grid.
pub(crate) fn residual_1d(
    model: &Model,
    kernel: &Kernel,
    lambda: f64,
    v: &GriddedFunction,
    nodes: &[f64],
) -> f64 {
    let rho = model.econ.delta + lambda;
    let (lo, hi) = (v.lo(), v.hi());
    let e_max = model.econ.e_max;
    nodes[1..nodes.len() - 1]
        .par_iter()
        .filter(|&&x| lambda == 0.0 || kernel.mass_outside(x, lo, hi) == 0.0)
        .map(|&x| {
            let (val, d) = v.eval_both(x);
            let mg = model.margin(x);
            let g = model.g(x, model.bio.r).0;
            let q = if lambda > 0.0 {
                lambda * kernel.apply_clamped(v, x).value
            } else {
                0.0
            };
            ((mg.l0 - mg.h0 * d).max(0.0) * e_max + d * g - rho * val + q).abs()
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpOptions {
    /// Time step of the flow integration.
    pub dt: f64,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self { dt: 1e-3 }
    }
}

/// One application of the dynamic-programming operator, evaluated node by
/// node by integrating the controlled flow in time. The slow reference for
/// [`solve_value_1d`].
pub fn dp_operator(
    v: &ValueGrid,
    model: &Model,
    kernel: &Kernel,
    lambda: f64,
    grid: &GridSpec,
    opts: DpOptions,
) -> Result<ValueGrid, SolverError> {
    let nodes = v.nodes.clone();
    let s = slice(model, lambda, &nodes, grid);
    let rho = s.rho;
    let jump = BiomassJump {
        lambda,
        kernel,
        v: &v.interp,
    };
    let table = if lambda > 0.0 {
        Some(s.tabulate(&jump)?)
    } else {
        None
    };
    let w = |x: f64| table.as_ref().map_or(0.0, |t| t.eval(x));
    let up_roots = s.critical(
        |x| table.as_ref().map_or(0.0, |t| t.eval_deriv(x)),
        |x| if lambda > 0.0 { jump.both(x).1 } else { 0.0 },
    );
    let x_star = *up_roots
        .first()
        .ok_or(SolverError::NoCriticalValue { r: s.r })?;
    let e_max = model.econ.e_max;
    let e_star = model.singular_effort(x_star, s.r);
    if !(0.0..=e_max).contains(&e_star) {
        return Err(SolverError::SingularEffortInadmissible {
            x_star,
            effort: e_star,
            e_max,
        });
    }
    let v_star = (model.gain_rate(x_star, e_star) + w(x_star)) / rho;

    let value = |x0: f64| -> f64 {
        if x0 == x_star {
            return v_star;
        }
        let e = if x0 < x_star { 0.0 } else { e_max };
        let rhs = |t: f64, x: f64| {
            let drift = model.g(x, s.r).0 - model.econ.q * x * e;
            (drift, (model.gain_rate(x, e) + w(x)) * (-rho * t).exp())
        };
        let step = |t: f64, x: f64, h: f64| {
            let (k1, j1) = rhs(t, x);
            let (k2, j2) = rhs(t + 0.5 * h, x + 0.5 * h * k1);
            let (k3, j3) = rhs(t + 0.5 * h, x + 0.5 * h * k2);
            let (k4, j4) = rhs(t + h, x + h * k3);
            (
                x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
                h / 6.0 * (j1 + 2.0 * j2 + 2.0 * j3 + j4),
            )
        };
        let side = (x0 - x_star).signum();
        let (mut t, mut x, mut acc) = (0.0, x0, 0.0);
        loop {
            let (xn, dj) = step(t, x, opts.dt);
            if (xn - x_star).signum() == side && (xn - x_star).abs() > CROSSING_TOL {
                t += opts.dt;
                x = xn;
                acc += dj;
                continue;
            }
            let (mut lo, mut hi) = (0.0, opts.dt);
            let mut best = (xn, dj);
            while hi - lo > 1e-15 && (best.0 - x_star).abs() > CROSSING_TOL {
                let mid = 0.5 * (lo + hi);
                let trial = step(t, x, mid);
                if (trial.0 - x_star).signum() == side && (trial.0 - x_star).abs() > CROSSING_TOL {
                    lo = mid;
                } else {
                    hi = mid;
                    best = trial;
                }
            }
            return acc + best.1 + (-rho * (t + hi)).exp() * v_star;
        }
    };
    let vals: Vec<f64> = nodes.par_iter().map(|&x| value(x)).collect();
    let slope = |x: f64, val: f64| {
        let g = model.g(x, s.r).0;
        if x < x_star {
            (rho * val - w(x)) / g
        } else if x > x_star {
            (rho * val - w(x) - model.gain_rate(x, e_max)) / (g - model.econ.q * x * e_max)
        } else {
            model.margin(x).m
        }
    };
    let mut pts: Vec<(f64, f64)> = nodes.iter().copied().zip(vals.iter().copied()).collect();
    if !nodes.contains(&x_star) {
        pts.push((x_star, v_star));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let interp = GriddedFunction::with_derivatives(
        pts.iter().map(|p| p.0).collect(),
        pts.iter().map(|p| p.1).collect(),
        pts.iter().map(|&(x, val)| slope(x, val)).collect(),
    )?
    .with_kinks(vec![x_star]);
    let gap = vals
        .iter()
        .zip(&v.v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let sol = SliceSolution {
        x_star,
        up_roots,
        interp,
    };
    Ok(finish(
        model,
        kernel,
        lambda,
        nodes,
        vals,
        sol,
        1,
        vec![gap],
    ))
}

/// Critical value read off a solved grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValue {
    /// The lowest root of the Euler–Lagrange equation written with `V'`.
    pub x_star: f64,
    /// All such roots, ascending, merged within two grid cells.
    pub el_roots: Vec<f64>,
    /// Roots of `A(x) = m(x) - V'(x)`, merged within two grid cells.
    pub arc_roots: Vec<f64>,
    /// Whether an `A` root lies within two cells of `x_star`.
    pub agree: bool,
}

impl CriticalValue {
    pub fn is_ambiguous(&self) -> bool {
        self.el_roots.len() > 1
    }
}

/// Roots of `(δ - G' + λ (1 - [Q V]'/V')) m - m' G` and of `m - V'` on the
/// grid of `v`.
pub fn critical_value_1d(
    v: &ValueGrid,
    model: &Model,
    kernel: &Kernel,
    lambda: f64,
) -> Result<CriticalValue, SolverError> {
    let interp = &v.interp;
    let r = model.bio.r;
    let delta = model.econ.delta;
    let el = |x: f64| {
        let (g, g1, _) = model.g(x, r);
        let mg = model.margin(x);
        let jump = if lambda > 0.0 {
            lambda * (1.0 - kernel.apply_derivative(interp, x) / interp.eval_deriv(x))
        } else {
            0.0
        };
        (delta - g1 + jump) * mg.m - mg.m_prime * g
    };
    let arc = |x: f64| model.margin(x).m - interp.eval_deriv(x);
    locate_critical(model, &v.nodes, r, el, arc)
}

/// Roots of the Euler–Lagrange defect `el` and of the arc condition `arc`
/// over the grid nodes between the break-even stock and `K`.
pub(crate) fn locate_critical<E, A>(
    model: &Model,
    nodes: &[f64],
    r: f64,
    el: E,
    arc: A,
) -> Result<CriticalValue, SolverError>
where
    E: FnMut(f64) -> f64,
    A: FnMut(f64) -> f64,
{
    let e = &model.econ;
    let lo = (e.c / (e.p * e.q)).max(nodes[0]);
    let hi = model.bio.k;
    let mut scan: Vec<f64> = nodes
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    scan.insert(0, lo + 1e-9 * hi);
    scan.push(hi * (1.0 - 1e-9));
    let cell = nodes[1] - nodes[0];
    let el_roots = roots::cluster(&roots::scan_roots(el, &scan, ROOT_TOL), 2.0 * cell);
    let arc_roots = roots::cluster(&roots::scan_roots(arc, &scan, ROOT_TOL), 2.0 * cell);
    let x_star = *el_roots.first().ok_or(SolverError::NoCriticalValue { r })?;
    let agree = arc_roots.iter().any(|a| (a - x_star).abs() <= 2.0 * cell);
    Ok(CriticalValue {
        x_star,
        el_roots,
        arc_roots,
        agree,
    })
}
