use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::{GriddedFunction, Kernel};
use crate::model::{JumpRates, Model};

use super::one_d::{locate_critical, CriticalValue};
use super::slice::{JumpTerm, NoJumps, Slice, SliceSolution};
use super::{check_support, GridSpec, SolverError};

/// Growth-rate axis: `nodes` evenly spaced points on
/// `[lo_factor r0, hi_factor r0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RGridSpec {
    pub lo_factor: f64,
    pub hi_factor: f64,
    pub nodes: usize,
}

impl Default for RGridSpec {
    fn default() -> Self {
        Self {
            lo_factor: 0.5,
            hi_factor: 1.5,
            nodes: 101,
        }
    }
}

impl RGridSpec {
    pub fn resolve(&self, r0: f64) -> Result<Vec<f64>, SolverError> {
        if !(self.lo_factor > 0.0 && self.hi_factor > self.lo_factor && self.nodes >= 4) {
            return Err(SolverError::InvalidGrid(format!(
                "bad growth-rate grid {self:?}"
            )));
        }
        Ok(GriddedFunction::uniform_nodes(
            self.lo_factor * r0,
            self.hi_factor * r0,
            self.nodes,
        ))
    }
}

/// Value function on the product grid, one biomass slice per growth rate.
#[derive(Debug, Clone)]
pub struct ValueGrid2D {
    pub nodes_x: Vec<f64>,
    pub nodes_r: Vec<f64>,
    /// `v[j][i]` is `V(nodes_x[i], nodes_r[j])`.
    pub v: Vec<Vec<f64>>,
    pub v_x: Vec<Vec<f64>>,
    /// Switching level of each slice.
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub rates: JumpRates,
    pub iterations: usize,
    pub gap_history: Vec<f64>,
    slices: Vec<GriddedFunction>,
}

impl ValueGrid2D {
    /// Interpolant of slice `j`.
    pub fn slice(&self, j: usize) -> &GriddedFunction {
        &self.slices[j]
    }

    pub fn dr(&self) -> f64 {
        self.nodes_r[1] - self.nodes_r[0]
    }

    /// `(V, V_x)` at `(x, r)`, cubic in `r` between slices.
    pub fn eval(&self, x: f64, r: f64) -> (f64, f64) {
        eval_r(&self.slices, self.nodes_r[0], self.dr(), x, r)
    }
}

/// Cubic Lagrange in `r` over the four slices around `r` (clamped to the
/// axis), each evaluated at `x`.
fn eval_r(slices: &[GriddedFunction], r_lo: f64, dr: f64, x: f64, r: f64) -> (f64, f64) {
    let n = slices.len();
    let r = r.clamp(r_lo, r_lo + dr * (n - 1) as f64);
    let t = (r - r_lo) / dr;
    let i = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let s = t - i as f64;
    let w = [
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    ];
    (0..4).fold((0.0, 0.0), |(v, d), k| {
        if w[k] == 0.0 {
            return (v, d);
        }
        let (a, b) = slices[i + k].eval_both(x);
        (v + w[k] * a, d + w[k] * b)
    })
}

fn stencil_slices(n: usize, r_lo: f64, dr: f64, r: f64) -> std::ops::Range<usize> {
    let r = r.clamp(r_lo, r_lo + dr * (n - 1) as f64);
    let t = (r - r_lo) / dr;
    let i = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    i..i + 4
}

/// `λx Q_x[V](·, r_j) + λr Q_r[V](·, r_j)` for frozen slices.
struct DualJump<'a> {
    rates: JumpRates,
    kernel_x: &'a Kernel,
    kernel_r: Option<&'a Kernel>,
    slices: &'a [GriddedFunction],
    r_lo: f64,
    dr: f64,
    j: usize,
    r: f64,
}

impl JumpTerm for DualJump<'_> {
    fn both(&self, x: f64) -> (f64, f64) {
        let (mut w, mut wp) = (0.0, 0.0);
        if self.rates.lambda_x > 0.0 {
            let (q, dq) = self.kernel_x.apply_both(&self.slices[self.j], x);
            w += self.rates.lambda_x * q;
            wp += self.rates.lambda_x * dq;
        }
        if let (Some(k), true) = (self.kernel_r, self.rates.lambda_r > 0.0) {
            let q = k.expect(self.r, |rr| {
                eval_r(self.slices, self.r_lo, self.dr, x, rr).0
            });
            let dq = k.expect(self.r, |rr| {
                eval_r(self.slices, self.r_lo, self.dr, x, rr).1
            });
            w += self.rates.lambda_r * q;
            wp += self.rates.lambda_r * dq;
        }
        (w, wp)
    }

    fn breaks(&self) -> Vec<f64> {
        let own = &self.slices[self.j];
        let mut pts: Vec<f64> = Vec::new();
        if self.rates.lambda_x > 0.0 {
            let mults = self.kernel_x.break_multipliers();
            for p in own.kinks().iter().copied().chain([own.lo(), own.hi()]) {
                pts.extend(mults.iter().map(|m| p / m));
            }
        }
        if let (Some(k), true) = (self.kernel_r, self.rates.lambda_r > 0.0) {
            for m in k.break_multipliers() {
                for s in stencil_slices(self.slices.len(), self.r_lo, self.dr, self.r * m) {
                    pts.extend_from_slice(self.slices[s].kinks());
                }
            }
        }
        pts
    }
}

/// Solves the value equation with biomass jumps at rate `λx` (law
/// `kernel_x`) and growth-rate jumps at rate `λr` (law `kernel_r`).
pub fn solve_value_2d(
    model: &Model,
    kernel_x: &Kernel,
    kernel_r: Option<&Kernel>,
    rates: JumpRates,
    grid: &GridSpec,
    rgrid: &RGridSpec,
) -> Result<ValueGrid2D, SolverError> {
    if rates.lambda_r > 0.0 && kernel_r.is_none() {
        return Err(SolverError::InvalidGrid(
            "growth-rate jumps need a growth kernel".into(),
        ));
    }
    let nodes_x = grid.resolve(model, kernel_x)?;
    let nodes_r = rgrid.resolve(model.bio.r)?;
    if rates.lambda_x > 0.0 {
        check_support(&nodes_x, model, kernel_x)?;
    }
    let (r_lo, dr) = (nodes_r[0], nodes_r[1] - nodes_r[0]);
    let rho = model.econ.delta + rates.total();
    let frozen = rates.total() == 0.0;
    let slice_for = |r: f64| Slice {
        model,
        r,
        rho,
        x_min: nodes_x[0],
        x_max: *nodes_x.last().unwrap(),
        ds: grid.ode_step,
        ds_w: grid.jump_mesh_step,
        scan_points: grid.scan_points,
    };

    let mut prev: Option<Vec<GriddedFunction>> = None;
    let mut prev_vals = vec![vec![0.0; nodes_x.len()]; nodes_r.len()];
    let mut history = Vec::new();
    for it in 1..=grid.max_iter {
        let sols: Vec<SliceSolution> = nodes_r
            .par_iter()
            .enumerate()
            .map(|(j, &r)| {
                let s = slice_for(r);
                match &prev {
                    Some(slices) if !frozen => {
                        let jump = DualJump {
                            rates,
                            kernel_x,
                            kernel_r,
                            slices,
                            r_lo,
                            dr,
                            j,
                            r,
                        };
                        let table = s.tabulate(&jump)?;
                        s.solve(&jump, Some(&table))
                    }
                    _ => s.solve(&NoJumps, None),
                }
            })
            .collect::<Result<_, _>>()?;
        let vals: Vec<Vec<f64>> = sols
            .iter()
            .map(|s| nodes_x.iter().map(|&x| s.interp.eval(x)).collect())
            .collect();
        let gap = vals
            .iter()
            .zip(&prev_vals)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        history.push(gap);
        let slices: Vec<GriddedFunction> = sols.iter().map(|s| s.interp.clone()).collect();
        if frozen || gap <= grid.tol {
            let x_star = sols.iter().map(|s| s.x_star).collect();
            let v_x = slices
                .iter()
                .map(|s| nodes_x.iter().map(|&x| s.eval_deriv(x)).collect())
                .collect();
            let residual = residual_2d(
                model, kernel_x, kernel_r, rates, &slices, &nodes_x, &nodes_r,
            );
            return Ok(ValueGrid2D {
                nodes_x,
                nodes_r,
                v: vals,
                v_x,
                x_star,
                residual,
                rates,
                iterations: it,
                gap_history: history,
                slices,
            });
        }
        prev = Some(slices);
        prev_vals = vals;
    }
    let tail = history[history.len().saturating_sub(5)..].to_vec();
    Err(SolverError::NotConverged {
        iterations: grid.max_iter,
        tail,
    })
}

fn residual_2d(
    model: &Model,
    kernel_x: &Kernel,
    kernel_r: Option<&Kernel>,
    rates: JumpRates,
    slices: &[GriddedFunction],
    nodes_x: &[f64],
    nodes_r: &[f64],
) -> f64 {
    let rho = model.econ.delta + rates.total();
    let (r_lo, dr) = (nodes_r[0], nodes_r[1] - nodes_r[0]);
    let r_hi = *nodes_r.last().unwrap();
    let (lo, hi) = (nodes_x[0], *nodes_x.last().unwrap());
    let e_max = model.econ.e_max;
    let r_ok = |r: f64| match (kernel_r, rates.lambda_r > 0.0) {
        (Some(k), true) => k.mass_outside(r, r_lo, r_hi) == 0.0,
        _ => true,
    };
    (1..nodes_r.len() - 1)
        .into_par_iter()
        .filter(|&j| r_ok(nodes_r[j]))
        .map(|j| {
            let r = nodes_r[j];
            let jump = DualJump {
                rates,
                kernel_x,
                kernel_r,
                slices,
                r_lo,
                dr,
                j,
                r,
            };
            nodes_x[1..nodes_x.len() - 1]
                .iter()
                .filter(|&&x| rates.lambda_x == 0.0 || kernel_x.mass_outside(x, lo, hi) == 0.0)
                .map(|&x| {
                    let (v, d) = slices[j].eval_both(x);
                    let mg = model.margin(x);
                    let g = model.g(x, r).0;
                    let w = if rates.total() > 0.0 {
                        jump.both(x).0
                    } else {
                        0.0
                    };
                    ((mg.l0 - mg.h0 * d).max(0.0) * e_max + d * g - rho * v + w).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Per-slice critical values.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalCurve {
    pub nodes_r: Vec<f64>,
    pub x_star: Vec<f64>,
    pub slices: Vec<CriticalValue>,
}

impl CriticalCurve {
    pub fn is_ambiguous(&self) -> bool {
        self.slices.iter().any(CriticalValue::is_ambiguous)
    }
}

/// Roots, slice by slice, of
/// `(δ - G'(x, r) + λx + λr - [λ.Q[V]]_x / V_x) m - m' G` and of `m - V_x`.
pub fn critical_value_2d(
    v2: &ValueGrid2D,
    model: &Model,
    kernel_x: &Kernel,
    kernel_r: Option<&Kernel>,
) -> Result<CriticalCurve, SolverError> {
    let rates = v2.rates;
    let (r_lo, dr) = (v2.nodes_r[0], v2.dr());
    let delta = model.econ.delta;
    let slices: Vec<CriticalValue> = v2
        .nodes_r
        .par_iter()
        .enumerate()
        .map(|(j, &r)| {
            let s = &v2.slices[j];
            let jump = DualJump {
                rates,
                kernel_x,
                kernel_r,
                slices: &v2.slices,
                r_lo,
                dr,
                j,
                r,
            };
            let el = |x: f64| {
                let (g, g1, _) = model.g(x, r);
                let mg = model.margin(x);
                let extra = if rates.total() > 0.0 {
                    rates.total() - jump.both(x).1 / s.eval_deriv(x)
                } else {
                    0.0
                };
                (delta - g1 + extra) * mg.m - mg.m_prime * g
            };
            let arc = |x: f64| model.margin(x).m - s.eval_deriv(x);
            locate_critical(model, &v2.nodes_x, r, el, arc)
        })
        .collect::<Result<_, _>>()?;
    Ok(CriticalCurve {
        nodes_r: v2.nodes_r.clone(),
        x_star: slices.iter().map(|c| c.x_star).collect(),
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{DiscreteLaw, KernelSpec};
    use crate::model::EconParams;
    use crate::solver::solve_value_1d;

    fn grid() -> GridSpec {
        GridSpec {
            nodes: 201,
            ..GridSpec::default()
        }
    }

    fn rgrid() -> RGridSpec {
        RGridSpec {
            nodes: 11,
            ..RGridSpec::default()
        }
    }

    #[test]
    fn deterministic_slices_match_closed_form() {
        let m = Model::baseline()
            .with_econ(EconParams::new(2.0, 1.0, 0.0, 0.05, 1.0).unwrap())
            .unwrap();
        let k = Kernel::new(KernelSpec::identity()).unwrap();
        let v = solve_value_2d(
            &m,
            &k,
            None,
            JumpRates::new(0.0, 0.0).unwrap(),
            &grid(),
            &rgrid(),
        )
        .unwrap();
        for (&r, &xs) in v.nodes_r.iter().zip(&v.x_star) {
            assert!((xs - 0.5 * (1.0 - 0.05 / r)).abs() < 1e-10);
        }
        assert!(v.residual < 1e-9, "{}", v.residual);
    }

    #[test]
    fn no_growth_jumps_decouple_slices() {
        let m = Model::baseline();
        let kx = Kernel::new(KernelSpec::centered(0.1, DiscreteLaw::symmetric_pair())).unwrap();
        let rates = JumpRates::new(0.1, 0.0).unwrap();
        let v = solve_value_2d(&m, &kx, None, rates, &grid(), &rgrid()).unwrap();
        for j in [2, 5, 8] {
            let one = solve_value_1d(&m.with_r(v.nodes_r[j]).unwrap(), &kx, 0.1, &grid()).unwrap();
            assert!((one.x_star - v.x_star[j]).abs() < 1e-10);
            let gap = one
                .v
                .iter()
                .zip(&v.v[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap < 1e-10, "{gap}");
        }
    }

    #[test]
    fn coupled_solve_has_small_residual() {
        let m = Model::baseline();
        let kx = Kernel::new(KernelSpec::centered(0.1, DiscreteLaw::symmetric_pair())).unwrap();
        let kr = Kernel::new(KernelSpec::growth(0.1, DiscreteLaw::symmetric_pair())).unwrap();
        let rates = JumpRates::new(0.05, 0.05).unwrap();
        let v = solve_value_2d(&m, &kx, Some(&kr), rates, &grid(), &rgrid()).unwrap();
        assert!(v.residual < 1e-8, "{}", v.residual);
        let c = critical_value_2d(&v, &m, &kx, Some(&kr)).unwrap();
        for (a, b) in c.x_star.iter().zip(&v.x_star) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert!(c.x_star.windows(2).all(|w| w[1] > w[0]));
    }
}
