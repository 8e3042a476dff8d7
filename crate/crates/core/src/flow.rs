//! Deterministic biomass evolution between jumps.
//!
//! Fixed-step RK4 on `dX/dt = G(X, r) - h0(X) e(X, r)`. Under a threshold
//! rule the right-hand side is discontinuous at the switching level, so the
//! crossing is located by bisection on the step and the state is then held on
//! the singular arc exactly, with effort `G/h0`. The discounted gain
//! `∫ l0(X) e e^{-δ t} dt` is integrated alongside the state.

use thiserror::Error;

use crate::model::Model;

/// Default integrator step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Smallest step accepted.
pub const MIN_DT: f64 = 1e-9;

/// Crossing tolerance in biomass.
pub const CROSSING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("step {0} is below the minimum {MIN_DT}; the problem is misconfigured or stiff")]
    StepTooSmall(f64),
    #[error("empty time interval [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("biomass left (0, inf) at t = {t}: x = {x}")]
    BiomassOutOfRange { t: f64, x: f64 },
    #[error("initial biomass {0} must be positive")]
    BadInitialState(f64),
}

/// An effort rule in feedback form.
pub trait FeedbackLaw: Send + Sync {
    /// Effort applied at biomass `x` and growth rate `r`.
    fn effort(&self, x: f64, r: f64) -> f64;

    /// Switching biomass for threshold rules: zero effort below, the bound
    /// above, the singular effort exactly on it.
    fn switch_level(&self, _r: f64) -> Option<f64> {
        None
    }
}

/// A fixed effort level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEffort(pub f64);

impl FeedbackLaw for ConstantEffort {
    fn effort(&self, _x: f64, _r: f64) -> f64 {
        self.0
    }
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> FeedbackLaw for F {
    fn effort(&self, x: f64, r: f64) -> f64 {
        self(x, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    pub x: f64,
    pub effort: f64,
}

/// Solution of the deterministic flow over `[t_start, t_end]` at a fixed
/// growth rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub x_start: f64,
    pub x_end: f64,
    pub r: f64,
    /// Integrator steps (or only the end points, when not recording).
    pub samples: Vec<FlowSample>,
    /// `∫ l0(X_t) e(t) e^{-δ t} dt` over the segment, discounted to time 0.
    pub gain: f64,
    /// Time at which the state reached the singular arc, if it did.
    pub arc_entry: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub dt: f64,
    pub record: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            record: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    Free,
    Fixed(f64),
    Arc(f64),
}

struct Stepper<'a> {
    model: &'a Model,
    law: &'a dyn FeedbackLaw,
    r: f64,
}

impl Stepper<'_> {
    fn effort(&self, regime: Regime, x: f64) -> f64 {
        match regime {
            Regime::Free => self.law.effort(x, self.r),
            Regime::Fixed(e) => e,
            Regime::Arc(level) => self.model.singular_effort(level, self.r),
        }
    }

    fn rhs(&self, regime: Regime, t: f64, x: f64) -> (f64, f64) {
        let e = self.effort(regime, x);
        let drift = self.model.g(x.max(0.0), self.r).0 - self.model.econ.q * x * e;
        let gain = self.model.gain_rate(x, e) * (-self.model.econ.delta * t).exp();
        (drift, gain)
    }

    /// One RK4 step of size `h` on `(x, J)`.
    fn step(&self, regime: Regime, t: f64, x: f64, h: f64) -> (f64, f64) {
        let (k1, j1) = self.rhs(regime, t, x);
        let (k2, j2) = self.rhs(regime, t + 0.5 * h, x + 0.5 * h * k1);
        let (k3, j3) = self.rhs(regime, t + 0.5 * h, x + 0.5 * h * k2);
        let (k4, j4) = self.rhs(regime, t + h, x + h * k3);
        (
            x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
            h / 6.0 * (j1 + 2.0 * j2 + 2.0 * j3 + j4),
        )
    }
}

fn regime_for(model: &Model, law: &dyn FeedbackLaw, x: f64, r: f64) -> Regime {
    match law.switch_level(r) {
        None => Regime::Free,
        Some(level) if (x - level).abs() <= CROSSING_TOL => Regime::Arc(level),
        Some(level) if x < level => Regime::Fixed(0.0),
        Some(_) => Regime::Fixed(model.econ.e_max),
    }
}

/// `∫_a^b e^{-δ t} dt`.
pub(crate) fn discount_integral(delta: f64, a: f64, b: f64) -> f64 {
    ((-delta * a).exp() - (-delta * b).exp()) / delta
}

/// Integrates the controlled flow from `x0` at `t0` to `t1` at growth rate `r`.
pub fn integrate(
    model: &Model,
    x0: f64,
    r: f64,
    law: &dyn FeedbackLaw,
    t0: f64,
    t1: f64,
    opts: FlowOptions,
) -> Result<FlowSegment, FlowError> {
    if !(opts.dt >= MIN_DT) {
        return Err(FlowError::StepTooSmall(opts.dt));
    }
    if !(t1 > t0) {
        return Err(FlowError::EmptyInterval(t0, t1));
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(FlowError::BadInitialState(x0));
    }
    let stepper = Stepper { model, law, r };
    let level = law.switch_level(r);
    let mut regime = regime_for(model, law, x0, r);
    let (mut t, mut x, mut gain) = (t0, x0, 0.0);
    let mut arc_entry = None;
    let mut samples = vec![FlowSample {
        t,
        x,
        effort: stepper.effort(regime, x),
    }];

    while t < t1 {
        if let Regime::Arc(lv) = regime {
            let e = stepper.effort(regime, lv);
            gain += model.gain_rate(lv, e) * discount_integral(model.econ.delta, t, t1);
            x = lv;
            t = t1;
            samples.push(FlowSample { t, x, effort: e });
            break;
        }
        let h = opts.dt.min(t1 - t);
        let (xn, dj) = stepper.step(regime, t, x, h);
        if !(xn > 0.0 && xn.is_finite()) {
            return Err(FlowError::BiomassOutOfRange { t: t + h, x: xn });
        }
        if let (Some(lv), Regime::Fixed(_)) = (level, regime) {
            if (x - lv).signum() != (xn - lv).signum() || (xn - lv).abs() <= CROSSING_TOL {
                let (theta, j_theta) = locate_crossing(&stepper, regime, t, x, h, lv);
                t += theta;
                gain += j_theta;
                x = lv;
                samples.push(FlowSample {
                    t,
                    x,
                    effort: stepper.effort(regime, x),
                });
                regime = Regime::Arc(lv);
                arc_entry = Some(t);
                samples.push(FlowSample {
                    t,
                    x,
                    effort: stepper.effort(regime, x),
                });
                continue;
            }
        }
        t = if h == t1 - t { t1 } else { t + h };
        x = xn;
        gain += dj;
        if opts.record || t == t1 {
            samples.push(FlowSample {
                t,
                x,
                effort: stepper.effort(regime, x),
            });
        }
    }
    if !opts.record && samples.len() > 2 {
        let last = *samples.last().unwrap();
        samples.retain(|s| s.t == t0 || Some(s.t) == arc_entry);
        samples.push(last);
    }
    Ok(FlowSegment {
        t_start: t0,
        t_end: t1,
        x_start: x0,
        x_end: x,
        r,
        samples,
        gain,
        arc_entry,
    })
}

/// Bisection on the sub-step length until the RK4 state lands on `level`.
fn locate_crossing(
    s: &Stepper<'_>,
    regime: Regime,
    t: f64,
    x: f64,
    h: f64,
    level: f64,
) -> (f64, f64) {
    let side = (x - level).signum();
    let (mut lo, mut hi) = (0.0, h);
    let mut best = s.step(regime, t, x, h);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (xm, jm) = s.step(regime, t, x, mid);
        if (xm - level).signum() == side && (xm - level).abs() > CROSSING_TOL {
            lo = mid;
        } else {
            hi = mid;
            best = (xm, jm);
        }
        if (best.0 - level).abs() <= CROSSING_TOL || hi - lo < 1e-15 {
            break;
        }
    }
    (hi, best.1)
}

/// `|X(t; X(s; x0, 0), s) - X(t; x0, 0)|` for a feedback law without
/// switching, i.e. within a single inter-jump interval.
pub fn check_semigroup(
    model: &Model,
    x0: f64,
    s: f64,
    t: f64,
    law: &dyn FeedbackLaw,
    dt: f64,
) -> Result<f64, FlowError> {
    let opts = FlowOptions { dt, record: false };
    let direct = integrate(model, x0, model.bio.r, law, 0.0, t, opts)?;
    if s == t {
        return Ok(0.0);
    }
    let first = integrate(model, x0, model.bio.r, law, 0.0, s, opts)?;
    let second = integrate(model, first.x_end, model.bio.r, law, s, t, opts)?;
    Ok((second.x_end - direct.x_end).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::baseline()
    }

    struct Threshold(f64, f64);

    impl FeedbackLaw for Threshold {
        fn effort(&self, x: f64, r: f64) -> f64 {
            if x < self.0 {
                0.0
            } else if x > self.0 {
                self.1
            } else {
                r * (1.0 - x)
            }
        }
        fn switch_level(&self, _r: f64) -> Option<f64> {
            Some(self.0)
        }
    }

    fn logistic_exact(x0: f64, t: f64) -> f64 {
        1.0 / (1.0 + (1.0 / x0 - 1.0) * (-t).exp())
    }

    #[test]
    fn unharvested_logistic() {
        let seg = integrate(
            &model(),
            0.1,
            1.0,
            &ConstantEffort(0.0),
            0.0,
            1.0,
            FlowOptions::default(),
        )
        .unwrap();
        let exact = 1.0 / (1.0 + 9.0 * (-1.0f64).exp());
        assert!((exact - 0.231_97).abs() < 5e-6);
        assert!((seg.x_end - exact).abs() < 1e-12, "{}", seg.x_end);
        assert_eq!(seg.gain, 0.0);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |dt| {
            let seg = integrate(
                &model(),
                0.05,
                1.0,
                &ConstantEffort(0.0),
                0.0,
                5.0,
                FlowOptions { dt, record: false },
            )
            .unwrap();
            (seg.x_end - logistic_exact(0.05, 5.0)).abs()
        };
        let ratio = err(0.2) / err(0.1);
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn singular_arc_is_an_equilibrium() {
        let xs = 0.475;
        let seg = integrate(
            &model(),
            xs,
            1.0,
            &Threshold(xs, 1.0),
            0.0,
            10.0,
            FlowOptions::default(),
        )
        .unwrap();
        assert!(seg.samples.iter().all(|s| s.x == xs));
        assert_eq!(seg.arc_entry, None);
    }

    #[test]
    fn threshold_crossing_is_located_and_held() {
        let xs = 0.6;
        for x0 in [0.2, 0.95] {
            let seg = integrate(
                &model(),
                x0,
                1.0,
                &Threshold(xs, 1.0),
                0.0,
                20.0,
                FlowOptions::default(),
            )
            .unwrap();
            let entry = seg.arc_entry.expect("reaches the level");
            // time to reach the level in closed form
            let exact = if x0 < xs {
                ((xs / (1.0 - xs)) / (x0 / (1.0 - x0))).ln()
            } else {
                // dx/dt = -x^2 with e = 1, r = q = K = 1
                1.0 / xs - 1.0 / x0
            };
            assert!((entry - exact).abs() < 1e-9, "x0={x0}: {entry} vs {exact}");
            assert_eq!(seg.x_end, xs);
            // monotone approach
            let xsamples: Vec<f64> = seg.samples.iter().map(|s| s.x).collect();
            let up = x0 < xs;
            assert!(xsamples
                .windows(2)
                .all(|w| if up { w[1] >= w[0] } else { w[1] <= w[0] }));
        }
    }

    #[test]
    fn full_effort_decreases_stock() {
        // h0 e = x > G = x (1 - x) for x in (0, 1]
        let seg = integrate(
            &model(),
            0.9,
            1.0,
            &ConstantEffort(1.0),
            0.0,
            3.0,
            FlowOptions::default(),
        )
        .unwrap();
        assert!(seg.samples.windows(2).all(|w| w[1].x < w[0].x));
        assert!(seg.samples.iter().all(|s| s.x > 0.0));
    }

    #[test]
    fn semigroup_and_time_shift() {
        let law = |x: f64, _r: f64| 0.3 + 0.2 * x;
        let m = model();
        let res = check_semigroup(&m, 0.4, 1.3, 4.0, &law, 1e-3).unwrap();
        assert!(res < 1e-8, "{res}");
        assert_eq!(check_semigroup(&m, 0.4, 2.0, 2.0, &law, 1e-3).unwrap(), 0.0);
        let a = integrate(&m, 0.4, 1.0, &law, 2.5, 5.0, FlowOptions::default()).unwrap();
        let b = integrate(&m, 0.4, 1.0, &law, 0.0, 2.5, FlowOptions::default()).unwrap();
        assert!((a.x_end - b.x_end).abs() < 1e-10);
    }

    #[test]
    fn gain_on_arc_is_closed_form() {
        let m = model();
        let xs = 0.7;
        let seg = integrate(
            &m,
            xs,
            1.0,
            &Threshold(xs, 1.0),
            0.0,
            50.0,
            FlowOptions::default(),
        )
        .unwrap();
        let e = 1.0 - xs;
        let exact = (2.0 * xs - 1.0) * e * (1.0 - (-0.05f64 * 50.0).exp()) / 0.05;
        assert!((seg.gain - exact).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model();
        let law = ConstantEffort(0.0);
        assert!(matches!(
            integrate(
                &m,
                0.3,
                1.0,
                &law,
                0.0,
                1.0,
                FlowOptions {
                    dt: 1e-12,
                    record: false
                }
            ),
            Err(FlowError::StepTooSmall(_))
        ));
        assert!(integrate(&m, 0.3, 1.0, &law, 1.0, 1.0, FlowOptions::default()).is_err());
        assert!(integrate(&m, 0.0, 1.0, &law, 0.0, 1.0, FlowOptions::default()).is_err());
    }
}
