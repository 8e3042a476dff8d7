//! Numerical checks on solved value functions: regularity at the critical
//! value, one-sided third derivatives, and how the critical value moves with
//! the jump rates and the growth rate.
//!
//! Derivative estimates next to `x*` are one-sided: polynomials fitted to
//! `V'` on nodes at least one cell away from `x*`, evaluated at `x*`.

use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{q_derivative_gap, DiscreteLaw, Kernel, KernelError, KernelSpec};
use crate::model::{JumpRates, Model};
use crate::numerics::stencil::{central4, poly_derivatives};
use crate::solver::{
    solve_value_1d, solve_value_2d, GridSpec, RGridSpec, SolverError, ValueGrid, ValueGrid2D,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{0} is too close to the edge of the grid")]
    StencilOutOfRange(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// `-1`, `0` or `+1`; zero when `|value| <= 3 noise`.
pub fn resolved_sign(value: f64, noise: f64) -> i8 {
    if value.abs() <= 3.0 * noise {
        0
    } else if value > 0.0 {
        1
    } else {
        -1
    }
}

fn sign(v: f64) -> i8 {
    resolved_sign(v, 0.0)
}

/// `Σ(x) = -x² V'' [G/x]' + (δ - G')(V' + V'' x) - G'' V' x` from given
/// derivatives.
pub fn sigma_from(x: f64, v1: f64, v2: f64, model: &Model, r: f64) -> f64 {
    let (g, g1, g2) = model.g(x, r);
    let g_over_x_prime = (g1 * x - g) / (x * x);
    -x * x * v2 * g_over_x_prime + (model.econ.delta - g1) * (v1 + v2 * x) - g2 * v1 * x
}

/// `Σ(x)` with `V''` by finite differences. At the critical value `V''` is
/// the mean of the one-sided estimates.
pub fn sigma(x: f64, v: &ValueGrid, model: &Model) -> Result<f64, AnalysisError> {
    let h = v.spacing();
    if (x - v.x_star).abs() < 2.0 * h {
        let (l, r) = (one_sided(v, x, Side::Left)?, one_sided(v, x, Side::Right)?);
        return Ok(sigma_from(
            x,
            v.slope_at(x),
            0.5 * (l[1] + r[1]),
            model,
            model.bio.r,
        ));
    }
    if x - 2.0 * h < v.nodes[0] || x + 2.0 * h > *v.nodes.last().unwrap() {
        return Err(AnalysisError::StencilOutOfRange(x));
    }
    let v2 = central4(|y| v.slope_at(y), x, h);
    Ok(sigma_from(x, v.slope_at(x), v2, model, model.bio.r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// `[V', V'', V''']` at `at` from a cubic through `V'` on the four nodes
/// nearest `at` on one side, skipping the cell that contains it.
fn one_sided(v: &ValueGrid, at: f64, side: Side) -> Result<Vec<f64>, AnalysisError> {
    let h = v.spacing();
    let idx: Vec<usize> = match side {
        Side::Left => {
            let i = v
                .nodes
                .iter()
                .rposition(|&x| x <= at - h)
                .ok_or(AnalysisError::StencilOutOfRange(at))?;
            if i < 3 {
                return Err(AnalysisError::StencilOutOfRange(at));
            }
            (i - 3..=i).collect()
        }
        Side::Right => {
            let i = v
                .nodes
                .iter()
                .position(|&x| x >= at + h)
                .ok_or(AnalysisError::StencilOutOfRange(at))?;
            if i + 3 >= v.nodes.len() {
                return Err(AnalysisError::StencilOutOfRange(at));
            }
            (i..=i + 3).collect()
        }
    };
    let xs: Vec<f64> = idx.iter().map(|&i| v.nodes[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| v.v_prime[i]).collect();
    Ok(poly_derivatives(&xs, &ys, at, 2))
}

/// Derivatives of `V` at the critical value, with the values the theory
/// predicts for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub x_star: f64,
    pub spacing: f64,
    pub v2_left: f64,
    pub v2_right: f64,
    /// `m'(x*) = c / (q x*²)`.
    pub m_prime_at_star: f64,
    pub v3_left: f64,
    pub v3_right: f64,
    /// One-sided `[x² V'']'` at `x*`.
    pub j_left: f64,
    pub j_right: f64,
    pub sigma_at_star: f64,
    pub effort_at_star: f64,
    pub e_max: f64,
    /// `x* Σ / (h0 E)`.
    pub j_left_expected: f64,
    /// `-x* Σ / (h0 (ē - E))`.
    pub j_right_expected: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

impl RegularityReport {
    /// Largest relative gap between a one-sided `V''` and `m'(x*)`.
    pub fn smooth_fit_error(&self) -> f64 {
        rel(self.v2_left, self.m_prime_at_star).max(rel(self.v2_right, self.m_prime_at_star))
    }

    /// Relative gaps of `j_left`, `j_right` from their formulas.
    pub fn kink_errors(&self) -> (f64, f64) {
        (
            rel(self.j_left, self.j_left_expected),
            rel(self.j_right, self.j_right_expected),
        )
    }

    /// `j_left > 0 > j_right`.
    pub fn kink_ordered(&self) -> bool {
        self.j_left > 0.0 && self.j_right < 0.0
    }
}

/// One-sided second and third derivatives of `V` at `x*`.
pub fn regularity_check(v: &ValueGrid, model: &Model) -> Result<RegularityReport, AnalysisError> {
    let xs = v.x_star;
    let l = one_sided(v, xs, Side::Left)?;
    let r = one_sided(v, xs, Side::Right)?;
    let sig = sigma_from(xs, v.slope_at(xs), 0.5 * (l[1] + r[1]), model, model.bio.r);
    let e = model.singular_effort(xs, model.bio.r);
    let e_max = model.econ.e_max;
    let h0 = model.margin(xs).h0;
    let j = |d: &[f64]| 2.0 * xs * d[1] + xs * xs * d[2];
    Ok(RegularityReport {
        x_star: xs,
        spacing: v.spacing(),
        v2_left: l[1],
        v2_right: r[1],
        m_prime_at_star: model.margin(xs).m_prime,
        v3_left: l[2],
        v3_right: r[2],
        j_left: j(&l),
        j_right: j(&r),
        sigma_at_star: sig,
        effort_at_star: e,
        e_max,
        j_left_expected: xs * sig / (h0 * e),
        j_right_expected: -xs * sig / (h0 * (e_max - e)),
    })
}

/// `K (1 - ē q / (2 r))`: with a centred kernel the critical value rises
/// with the jump rate when it lies above this level.
pub fn flip_threshold(model: &Model) -> f64 {
    let e = &model.econ;
    model.bio.k * (1.0 - e.e_max * e.q / (2.0 * model.bio.r))
}

/// Direction in which a centred biomass kernel moves `x*`: `+1` above
/// [`flip_threshold`], `-1` below.
pub fn centered_prediction(model: &Model, x_star: f64) -> i8 {
    sign(x_star - flip_threshold(model))
}

/// `x*` as the jump rate moves away from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// `0, λ1/2, λ1, 2 λ1`.
    pub lambdas: Vec<f64>,
    pub x_stars: Vec<f64>,
    /// Second-order forward difference over `0, λ1, 2 λ1`.
    pub slope_at_zero: f64,
    /// The same over `0, λ1/2, λ1`.
    pub slope_half_step: f64,
    pub slope_noise: f64,
    /// `[Q[V]]'(x*) - V'(x*)` at zero jump rate.
    pub discriminant: f64,
    /// The same by central differences on the grid.
    pub discriminant_fd: f64,
    /// Sign of the discriminant.
    pub prediction: i8,
    /// Sign of the slope, or 0 when within three times its noise.
    pub measured: i8,
    /// `measured == prediction`, when the slope is resolved.
    pub agree: Option<bool>,
}

impl SensitivityReport {
    /// Halving the probed rate changes the slope by less than 10%.
    pub fn rate_small_enough(&self) -> bool {
        (self.slope_at_zero - self.slope_half_step).abs() < 0.1 * self.slope_at_zero.abs()
    }
}

fn second_order_slope(x0: f64, x1: f64, x2: f64, h: f64) -> f64 {
    (4.0 * x1 - x2 - 3.0 * x0) / (2.0 * h)
}

fn unique_root(v: &ValueGrid) -> Result<f64, AnalysisError> {
    if v.switch_roots.len() > 1 {
        return Err(SolverError::AmbiguousCriticalValue {
            roots: v.switch_roots.clone(),
        }
        .into());
    }
    Ok(v.x_star)
}

/// `[Q[V]]'(x) - V'(x)` from the kernel applied to the interpolant.
pub fn discriminant(v: &ValueGrid, kernel: &Kernel, x: f64) -> f64 {
    kernel.apply_derivative(v.interpolant(), x) - v.slope_at(x)
}

/// Slope of `x*(λ)` at zero for biomass jumps with law `kernel`, probed at
/// `λ1 / 2`, `λ1` and `2 λ1`.
pub fn lambda_sensitivity(
    model: &Model,
    kernel: &Kernel,
    lambda1: f64,
    grid: &GridSpec,
) -> Result<SensitivityReport, AnalysisError> {
    if !(lambda1 > 0.0) {
        return Err(AnalysisError::Invalid(format!(
            "probe rate must be positive, got {lambda1}"
        )));
    }
    let lambdas = vec![0.0, 0.5 * lambda1, lambda1, 2.0 * lambda1];
    let grids: Vec<ValueGrid> = lambdas
        .iter()
        .map(|&l| solve_value_1d(model, kernel, l, grid))
        .collect::<Result<_, _>>()?;
    let x_stars: Vec<f64> = grids.iter().map(unique_root).collect::<Result<_, _>>()?;
    let slope = second_order_slope(x_stars[0], x_stars[2], x_stars[3], lambda1);
    let slope_half = second_order_slope(x_stars[0], x_stars[1], x_stars[2], 0.5 * lambda1);
    let slope_noise = (slope - slope_half).abs() + 4.0 * grid.tol.max(1e-12) / lambda1;
    let base = &grids[0];
    let disc = discriminant(base, kernel, x_stars[0]);
    let disc_fd = q_derivative_gap(base.interpolant(), kernel, x_stars[0], true)?;
    let prediction = sign(disc);
    let measured = resolved_sign(slope, slope_noise);
    Ok(SensitivityReport {
        lambdas,
        x_stars,
        slope_at_zero: slope,
        slope_half_step: slope_half,
        slope_noise,
        discriminant: disc,
        discriminant_fd: disc_fd,
        prediction,
        measured,
        agree: (measured != 0).then_some(measured == prediction),
    })
}

/// Discriminant at zero jump rate for a family of kernels, with the slope of
/// `log |disc|` against `log ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub epsilons: Vec<f64>,
    pub discriminants: Vec<f64>,
    pub log_slope: f64,
}

/// Discriminant of the centred kernel `x (1 + Z ε)`, `Z ~ law`, at the
/// critical value of `v`, for each `ε`.
pub fn epsilon_scaling(
    v: &ValueGrid,
    law: &DiscreteLaw,
    epsilons: &[f64],
) -> Result<ScalingReport, AnalysisError> {
    let discriminants: Vec<f64> = epsilons
        .iter()
        .map(|&e| {
            Ok(discriminant(
                v,
                &Kernel::new(KernelSpec::centered(e, law.clone()))?,
                v.x_star,
            ))
        })
        .collect::<Result<_, AnalysisError>>()?;
    let lx: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = discriminants.iter().map(|d| d.abs().ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(ScalingReport {
        epsilons: epsilons.to_vec(),
        discriminants,
        log_slope: sxy / sxx,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub r: Vec<f64>,
    pub x_star: Vec<f64>,
    pub increasing: bool,
}

/// `x*` at zero jump rate for each growth rate in `r_list`.
pub fn growth_sensitivity(
    model: &Model,
    r_list: &[f64],
    grid: &GridSpec,
) -> Result<GrowthReport, AnalysisError> {
    let identity = Kernel::new(KernelSpec::identity())?;
    let x_star: Vec<f64> = r_list
        .iter()
        .map(|&r| {
            let m = model
                .with_r(r)
                .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
            unique_root(&solve_value_1d(&m, &identity, 0.0, grid)?)
        })
        .collect::<Result<_, AnalysisError>>()?;
    let sorted = r_list.windows(2).all(|w| w[1] > w[0]);
    let increasing = sorted && x_star.windows(2).all(|w| w[1] > w[0]);
    Ok(GrowthReport {
        r: r_list.to_vec(),
        x_star,
        increasing,
    })
}

/// `Σ1(x, r) = (δ / r) l0(x) / h0(x)²`.
pub fn sigma1(x: f64, r: f64, model: &Model) -> f64 {
    assert!(x > 0.0 && r > 0.0, "sigma1 needs positive x and r");
    let mg = model.margin(x);
    model.econ.delta / r * mg.l0 / (mg.h0 * mg.h0)
}

/// Mixed derivatives at `(x*(r), r)` on one side of the critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedSide {
    pub v_xr: f64,
    pub v_xxr: f64,
    pub v_xrr: f64,
    /// `V'''_{x²r} x*' + V'''_{xr²}`.
    pub linkage: f64,
    /// Predicted `V'''_{x²r}`: `-Σ1/E` below, `Σ1/(ē - E)` above.
    pub v_xxr_expected: f64,
    pub noise_v_xr: f64,
    pub noise_linkage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualRegularityRow {
    pub r: f64,
    pub x_star: f64,
    pub x_star_prime: f64,
    pub effort: f64,
    pub sigma1: f64,
    pub left: MixedSide,
    pub right: MixedSide,
}

impl DualRegularityRow {
    /// `|V''_{xr}|` below ten times its noise on both sides.
    pub fn mixed_vanishes(&self) -> bool {
        [self.left, self.right]
            .iter()
            .all(|s| s.v_xr.abs() < 10.0 * s.noise_v_xr)
    }

    pub fn signs_ordered(&self) -> bool {
        self.left.v_xxr < 0.0 && self.right.v_xxr > 0.0
    }

    pub fn linkage_holds(&self) -> bool {
        [self.left, self.right]
            .iter()
            .all(|s| s.linkage.abs() < 10.0 * s.noise_linkage)
    }

    /// Largest relative gap of `V'''_{x²r}` from its formula.
    pub fn ratio_error(&self) -> f64 {
        rel(self.left.v_xxr, self.left.v_xxr_expected)
            .max(rel(self.right.v_xxr, self.right.v_xxr_expected))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualRegularityReport {
    pub rows: Vec<DualRegularityRow>,
}

/// Raw one-side estimates for one row at one resolution.
#[derive(Debug, Clone, Copy)]
struct MixedRaw {
    v_xr: [f64; 2],
    v_xxr: [f64; 2],
    v_xrr: [f64; 2],
    x_star_prime: [f64; 2],
}

fn d1_5(a: &[f64], dr: f64) -> f64 {
    (a[0] - 8.0 * a[1] + 8.0 * a[3] - a[4]) / (12.0 * dr)
}

fn d2_5(a: &[f64], dr: f64) -> f64 {
    (-a[0] + 16.0 * a[1] - 30.0 * a[2] + 16.0 * a[3] - a[4]) / (12.0 * dr * dr)
}

fn d1_3(a: &[f64], dr: f64) -> f64 {
    (a[3] - a[1]) / (2.0 * dr)
}

fn d2_3(a: &[f64], dr: f64) -> f64 {
    (a[3] - 2.0 * a[2] + a[1]) / (dr * dr)
}

/// Index pair `[five-point, three-point]` estimates at slice `j` on `side`,
/// using the smooth continuation of that side's branch across the critical
/// curve.
fn mixed_raw(v2: &ValueGrid2D, j: usize, side: Side) -> Result<MixedRaw, AnalysisError> {
    const POINTS: usize = 6;
    let xs_j = v2.x_star[j];
    let h = v2.nodes_x[1] - v2.nodes_x[0];
    let ks = j - 2..=j + 2;
    let stencil_star: Vec<f64> = ks.clone().map(|k| v2.x_star[k]).collect();
    let nx = v2.nodes_x.len();
    let (start, stride) = match side {
        Side::Left => {
            let bound = stencil_star.iter().copied().fold(f64::INFINITY, f64::min) - h;
            let stride = (((xs_j - bound) / (POINTS as f64 * h)).ceil() as usize).max(1);
            let last = v2
                .nodes_x
                .iter()
                .rposition(|&x| x <= bound)
                .ok_or(AnalysisError::StencilOutOfRange(xs_j))?;
            if last < stride * (POINTS - 1) {
                return Err(AnalysisError::StencilOutOfRange(xs_j));
            }
            (last - stride * (POINTS - 1), stride)
        }
        Side::Right => {
            let bound = stencil_star
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
                + h;
            let stride = (((bound - xs_j) / (POINTS as f64 * h)).ceil() as usize).max(1);
            let first = v2
                .nodes_x
                .iter()
                .position(|&x| x >= bound)
                .ok_or(AnalysisError::StencilOutOfRange(xs_j))?;
            if first + stride * (POINTS - 1) >= nx {
                return Err(AnalysisError::StencilOutOfRange(xs_j));
            }
            (first, stride)
        }
    };
    let idx: Vec<usize> = (0..POINTS).map(|p| start + p * stride).collect();
    let xs: Vec<f64> = idx.iter().map(|&i| v2.nodes_x[i]).collect();
    let (mut a, mut b) = (Vec::with_capacity(5), Vec::with_capacity(5));
    for k in ks {
        let ys: Vec<f64> = idx.iter().map(|&i| v2.v_x[k][i]).collect();
        let d = poly_derivatives(&xs, &ys, xs_j, 1);
        a.push(d[0]);
        b.push(d[1]);
    }
    let dr = v2.dr();
    let stars = &stencil_star;
    Ok(MixedRaw {
        v_xr: [d1_5(&a, dr), d1_3(&a, dr)],
        v_xxr: [d1_5(&b, dr), d1_3(&b, dr)],
        v_xrr: [d2_5(&a, dr), d2_3(&a, dr)],
        x_star_prime: [d1_5(stars, dr), d1_3(stars, dr)],
    })
}

const NOISE_FLOOR: f64 = 1e-12;

/// Mixed-derivative checks at zero jump rates on every growth-rate node at
/// least two nodes from the edge. `coarse` is the same problem on a coarser
/// biomass grid with the same growth-rate axis; the difference between the
/// two sets the noise scale.
pub fn dual_regularity_check(
    v2: &ValueGrid2D,
    coarse: &ValueGrid2D,
    model: &Model,
) -> Result<DualRegularityReport, AnalysisError> {
    if v2.nodes_r != coarse.nodes_r {
        return Err(AnalysisError::Invalid(
            "both grids need the same growth-rate axis".into(),
        ));
    }
    let n = v2.nodes_r.len();
    if n < 5 {
        return Err(AnalysisError::Invalid(
            "need at least five growth-rate nodes".into(),
        ));
    }
    let e_max = model.econ.e_max;
    let rows = (2..n - 2)
        .into_par_iter()
        .map(|j| {
            let r = v2.nodes_r[j];
            let xs = v2.x_star[j];
            let effort = model.singular_effort(xs, r);
            let s1 = sigma1(xs, r, model);
            let side = |s: Side, expected: f64| -> Result<(MixedSide, f64), AnalysisError> {
                let fine = mixed_raw(v2, j, s)?;
                let crude = mixed_raw(coarse, j, s)?;
                let link = |m: &MixedRaw, i: usize| m.v_xxr[i] * m.x_star_prime[i] + m.v_xrr[i];
                let noise_v_xr = (fine.v_xr[0] - crude.v_xr[0]).abs()
                    + (fine.v_xr[0] - fine.v_xr[1]).abs()
                    + NOISE_FLOOR;
                let noise_linkage = (link(&fine, 0) - link(&crude, 0)).abs()
                    + (link(&fine, 0) - link(&fine, 1)).abs()
                    + NOISE_FLOOR;
                Ok((
                    MixedSide {
                        v_xr: fine.v_xr[0],
                        v_xxr: fine.v_xxr[0],
                        v_xrr: fine.v_xrr[0],
                        linkage: link(&fine, 0),
                        v_xxr_expected: expected,
                        noise_v_xr,
                        noise_linkage,
                    },
                    fine.x_star_prime[0],
                ))
            };
            let (left, xp) = side(Side::Left, -s1 / effort)?;
            let (right, _) = side(Side::Right, s1 / (e_max - effort))?;
            Ok(DualRegularityRow {
                r,
                x_star: xs,
                x_star_prime: xp,
                effort,
                sigma1: s1,
                left,
                right,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(DualRegularityReport { rows })
}

/// `x*(r)` slopes in `λx` and `λr` at zero, with the discriminants that
/// predict their signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSensitivityRow {
    pub r: f64,
    pub x_star: f64,
    /// `E(x*(r), r)`.
    pub effort: f64,
    pub slope_x: f64,
    pub noise_x: f64,
    /// `[Q_x[V]]'_x - V'_x` at `x*(r)`.
    pub disc_x: f64,
    pub slope_r: f64,
    pub noise_r: f64,
    /// `[Q_r[V]]'_x - V'_x` at `x*(r)`.
    pub disc_r: f64,
}

impl DualSensitivityRow {
    pub fn measured_x(&self) -> i8 {
        resolved_sign(self.slope_x, self.noise_x)
    }

    pub fn measured_r(&self) -> i8 {
        resolved_sign(self.slope_r, self.noise_r)
    }

    /// Resolved slope signs match the discriminant signs.
    pub fn estimates_agree(&self) -> bool {
        let ok = |m: i8, d: f64| m == 0 || m == sign(d);
        ok(self.measured_x(), self.disc_x) && ok(self.measured_r(), self.disc_r)
    }

    /// `+1` when `E(x*(r), r) > ē / 2`.
    pub fn effort_side(&self, e_max: f64) -> i8 {
        sign(self.effort - 0.5 * e_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSensitivityReport {
    pub lambda1: f64,
    pub e_max: f64,
    pub rows: Vec<DualSensitivityRow>,
}

/// Probes `x*(r)` at `λx ∈ {λ1/2, λ1, 2 λ1}` (no growth jumps) and at
/// `λr` on the same ladder (no biomass jumps). Rows cover growth rates whose
/// growth-jump law stays on the axis.
pub fn dual_sensitivity(
    model: &Model,
    kernel_x: &Kernel,
    kernel_r: &Kernel,
    lambda1: f64,
    grid: &GridSpec,
    rgrid: &RGridSpec,
) -> Result<DualSensitivityReport, AnalysisError> {
    if !(lambda1 > 0.0) {
        return Err(AnalysisError::Invalid(format!(
            "probe rate must be positive, got {lambda1}"
        )));
    }
    let ladder = [0.5 * lambda1, lambda1, 2.0 * lambda1];
    let solve = |lx: f64, lr: f64| -> Result<ValueGrid2D, AnalysisError> {
        let rates = JumpRates::new(lx, lr).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
        Ok(solve_value_2d(
            model,
            kernel_x,
            Some(kernel_r),
            rates,
            grid,
            rgrid,
        )?)
    };
    let base = solve(0.0, 0.0)?;
    let along_x: Vec<ValueGrid2D> = ladder
        .iter()
        .map(|&l| solve(l, 0.0))
        .collect::<Result<_, _>>()?;
    let along_r: Vec<ValueGrid2D> = ladder
        .iter()
        .map(|&l| solve(0.0, l))
        .collect::<Result<_, _>>()?;
    let (r_lo, r_hi) = (base.nodes_r[0], *base.nodes_r.last().unwrap());
    let slope_pair = |grids: &[ValueGrid2D], j: usize| {
        let x0 = base.x_star[j];
        let s = second_order_slope(x0, grids[1].x_star[j], grids[2].x_star[j], lambda1);
        let s_half = second_order_slope(x0, grids[0].x_star[j], grids[1].x_star[j], 0.5 * lambda1);
        (s, (s - s_half).abs() + 4.0 * grid.tol.max(1e-12) / lambda1)
    };
    let rows = (0..base.nodes_r.len())
        .filter(|&j| kernel_r.mass_outside(base.nodes_r[j], r_lo, r_hi) == 0.0)
        .map(|j| {
            let r = base.nodes_r[j];
            let xs = base.x_star[j];
            let slice = base.slice(j);
            let vx = slice.eval_deriv(xs);
            let disc_x = kernel_x.apply_derivative(slice, xs) - vx;
            let disc_r = kernel_r.expect(r, |rr| base.eval(xs, rr).1) - vx;
            let (slope_x, noise_x) = slope_pair(&along_x, j);
            let (slope_r, noise_r) = slope_pair(&along_r, j);
            DualSensitivityRow {
                r,
                x_star: xs,
                effort: model.singular_effort(xs, r),
                slope_x,
                noise_x,
                disc_x,
                slope_r,
                noise_r,
                disc_r,
            }
        })
        .collect();
    Ok(DualSensitivityReport {
        lambda1,
        e_max: model.econ.e_max,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BioParams, EconParams};

    fn zero_cost() -> Model {
        Model::new(
            BioParams::new(1.0, 1.0).unwrap(),
            EconParams::new(2.0, 1.0, 0.0, 0.05, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn flip_threshold_anchors() {
        assert!((flip_threshold(&Model::baseline()) - 0.5).abs() < 1e-15);
        let m = Model::baseline()
            .with_econ(EconParams::new(2.0, 1.0, 1.0, 0.05, 2.0).unwrap())
            .unwrap();
        assert_eq!(flip_threshold(&m), 0.0);
        let m = Model::baseline()
            .with_econ(EconParams::new(2.0, 1.0, 1.0, 0.05, 1e-12).unwrap())
            .unwrap();
        assert!((flip_threshold(&m) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn sigma1_anchors() {
        let m = Model::baseline();
        assert_eq!(sigma1(0.5, 1.0, &m), 0.0);
        assert!((sigma1(1.0, 1.0, &m) - 0.05).abs() < 1e-15);
        assert!((sigma1(0.8, 2.0, &m) - 0.5 * sigma1(0.8, 1.0, &m)).abs() < 1e-15);
    }

    #[test]
    fn sigma_at_zero_cost_reduces() {
        let m = zero_cost();
        let k = Kernel::new(KernelSpec::identity()).unwrap();
        let v = solve_value_1d(&m, &k, 0.0, &GridSpec::with_spacing(1e-3)).unwrap();
        // V'' (x*) = m' = 0 and G'(x*) = δ leave -G'' V' x*
        let expected = 2.0 * v.slope_at(v.x_star) * v.x_star;
        let s = sigma(v.x_star, &v, &m).unwrap();
        assert!((s - expected).abs() < 1e-6 * expected, "{s} vs {expected}");
        assert!((expected - 1.9).abs() < 1e-9);
    }

    #[test]
    fn sigma_with_linear_growth() {
        #[derive(Debug)]
        struct Linear;
        impl crate::model::GrowthLaw for Linear {
            fn eval(&self, x: f64, r: f64, _k: f64) -> (f64, f64, f64) {
                (r * x, r, 0.0)
            }
        }
        let m = Model::with_growth(
            BioParams::new(0.5, 1.0).unwrap(),
            EconParams::new(2.0, 1.0, 1.0, 0.05, 1.0).unwrap(),
            std::sync::Arc::new(Linear),
        )
        .unwrap();
        // [G/x]' = 0 and G'' = 0
        let (x, v1, v2) = (0.7, 1.3, -0.4);
        assert!((sigma_from(x, v1, v2, &m, 0.5) - (0.05 - 0.5) * (v1 + v2 * x)).abs() < 1e-15);
        // against differences of the defining expression
        let g_over_x = |y: f64| m.growth_eval_at(y, 0.5).unwrap().0 / y;
        let d = central4(g_over_x, x, 1e-3);
        let direct = -x * x * v2 * d + (0.05 - 0.5) * (v1 + v2 * x);
        assert!((sigma_from(x, v1, v2, &m, 0.5) - direct).abs() < 1e-12);
    }

    #[test]
    fn one_sided_derivatives_match_characteristics() {
        let m = Model::baseline();
        let k = Kernel::new(KernelSpec::identity()).unwrap();
        let v = solve_value_1d(&m, &k, 0.0, &GridSpec::with_spacing(1e-3)).unwrap();
        let rep = regularity_check(&v, &m).unwrap();
        let x = v.x_star;
        let (g, g1, g2) = m.growth_eval(x).unwrap();
        let mg = m.margin_eval(x).unwrap();
        // differentiate V' G = δ V and V' (G - q x) = δ V - l0 twice
        let v3l = ((0.05 - 2.0 * g1) * mg.m_prime - g2 * mg.m) / g;
        let v3r = ((0.05 - 2.0 * g1 + 2.0) * mg.m_prime - g2 * mg.m) / (g - x);
        assert!(rel(rep.v3_left, v3l) < 1e-3, "{} vs {v3l}", rep.v3_left);
        assert!(rel(rep.v3_right, v3r) < 1e-3, "{} vs {v3r}", rep.v3_right);
        assert!(rep.smooth_fit_error() < 1e-5, "{}", rep.smooth_fit_error());
        assert!(rep.kink_ordered());
        let (el, er) = rep.kink_errors();
        assert!(el < 1e-3 && er < 1e-3, "{el} {er}");
    }

    #[test]
    fn identity_kernel_is_neutral() {
        let m = Model::baseline();
        let k = Kernel::new(KernelSpec::identity()).unwrap();
        let rep = lambda_sensitivity(
            &m,
            &k,
            0.001,
            &GridSpec {
                nodes: 401,
                ..GridSpec::default()
            },
        )
        .unwrap();
        assert_eq!(rep.discriminant, 0.0);
        assert_eq!(rep.measured, 0);
        assert!(rep.slope_at_zero.abs() < 1e-6);
    }
}
