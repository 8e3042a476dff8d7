//! Sample paths of the jump process and Monte Carlo estimates of the
//! discounted objective.
//!
//! Jump times come from a single Poisson clock with rate `λx + λr`; each
//! event is a biomass jump with probability `λx / (λx + λr)` and a growth-rate
//! jump otherwise. Between events the biomass follows [`flow::integrate`]
//! with the growth rate frozen.
//!
//! Replicate `k` of a Monte Carlo run draws from stream `k` of a ChaCha8
//! generator keyed by the master seed, so estimates do not depend on how the
//! replicates are scheduled across threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{self, FeedbackLaw, FlowError, FlowOptions, FlowSegment};
use crate::kernels::{Kernel, KernelError};
use crate::model::{EconParams, JumpRates, Model};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("growth-rate jumps have positive rate but no growth kernel")]
    MissingGrowthKernel,
    #[error("invalid simulation setting: {0}")]
    Invalid(String),
}

/// Horizon at which the discount factor drops to `1e-6`.
pub fn default_horizon(delta: f64) -> f64 {
    1e6f64.ln() / delta
}

/// Model, clock rates and jump laws of one process.
#[derive(Debug, Clone)]
pub struct JumpSystem {
    pub model: Model,
    pub rates: JumpRates,
    pub biomass_kernel: Kernel,
    pub growth_kernel: Option<Kernel>,
}

impl JumpSystem {
    pub fn new(
        model: Model,
        rates: JumpRates,
        biomass_kernel: Kernel,
        growth_kernel: Option<Kernel>,
    ) -> Result<Self, SimError> {
        if rates.lambda_r > 0.0 && growth_kernel.is_none() {
            return Err(SimError::MissingGrowthKernel);
        }
        Ok(Self {
            model,
            rates,
            biomass_kernel,
            growth_kernel,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub dt: f64,
    /// Keep every integrator step; otherwise only segment end points.
    pub record: bool,
}

impl SimOptions {
    pub fn for_model(model: &Model) -> Self {
        Self {
            horizon: default_horizon(model.econ.delta),
            dt: flow::DEFAULT_DT,
            record: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Biomass,
    Growth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub kind: EventKind,
    pub x_pre: f64,
    pub x_post: f64,
    pub r_pre: f64,
    pub r_post: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<FlowSegment>,
    pub events: Vec<JumpEvent>,
    /// Gain accumulated by the integrator, discounted to time 0.
    pub discounted_gain: f64,
    pub seed: u64,
    pub stream: u64,
    pub horizon: f64,
}

/// Generator for replicate `stream` under master `seed`.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One path from `(x0, r0)` at time 0 to the horizon, on stream 0 of `seed`.
pub fn simulate(
    sys: &JumpSystem,
    x0: f64,
    r0: f64,
    policy: &dyn FeedbackLaw,
    opts: SimOptions,
    seed: u64,
) -> Result<Trajectory, SimError> {
    simulate_stream(sys, x0, r0, policy, opts, seed, 0)
}

pub fn simulate_stream(
    sys: &JumpSystem,
    x0: f64,
    r0: f64,
    policy: &dyn FeedbackLaw,
    opts: SimOptions,
    seed: u64,
    stream: u64,
) -> Result<Trajectory, SimError> {
    let mut rng = replicate_rng(seed, stream);
    let mut traj = simulate_from(sys, x0, r0, 0.0, policy, opts, &mut rng)?;
    traj.seed = seed;
    traj.stream = stream;
    Ok(traj)
}

/// Path started at `(x0, r0)` at time `t0`, with gains discounted to time 0.
pub fn simulate_from<R: Rng + ?Sized>(
    sys: &JumpSystem,
    x0: f64,
    r0: f64,
    t0: f64,
    policy: &dyn FeedbackLaw,
    opts: SimOptions,
    rng: &mut R,
) -> Result<Trajectory, SimError> {
    if !(opts.horizon > t0) {
        return Err(SimError::Invalid(format!(
            "horizon {} must exceed start time {t0}",
            opts.horizon
        )));
    }
    if !(r0 > 0.0) {
        return Err(SimError::Invalid(format!(
            "growth rate must be positive, got {r0}"
        )));
    }
    let total = sys.rates.total();
    let clock = (total > 0.0).then(|| Exp::new(total).expect("positive rate"));
    let p_biomass = if total > 0.0 {
        sys.rates.lambda_x / total
    } else {
        1.0
    };
    let fopts = FlowOptions {
        dt: opts.dt,
        record: opts.record,
    };

    let (mut t, mut x, mut r) = (t0, x0, r0);
    let mut segments = Vec::new();
    let mut events = Vec::new();
    let mut gain = 0.0;
    loop {
        let next = clock.as_ref().map_or(f64::INFINITY, |c| t + c.sample(rng));
        let end = next.min(opts.horizon);
        let seg = flow::integrate(&sys.model, x, r, policy, t, end, fopts)?;
        gain += seg.gain;
        x = seg.x_end;
        segments.push(seg);
        if next >= opts.horizon {
            break;
        }
        t = next;
        let (x_pre, r_pre) = (x, r);
        let kind = if rng.gen::<f64>() < p_biomass {
            EventKind::Biomass
        } else {
            EventKind::Growth
        };
        match kind {
            EventKind::Biomass => x = sys.biomass_kernel.sample(x, rng)?,
            EventKind::Growth => {
                let k = sys
                    .growth_kernel
                    .as_ref()
                    .ok_or(SimError::MissingGrowthKernel)?;
                r = k.sample(r, rng)?;
            }
        }
        events.push(JumpEvent {
            time: t,
            kind,
            x_pre,
            x_post: x,
            r_pre,
            r_post: r,
        });
    }
    Ok(Trajectory {
        segments,
        events,
        discounted_gain: gain,
        seed: 0,
        stream: 0,
        horizon: opts.horizon,
    })
}

/// `∫ l0(X_t) e(t) e^{-δ t} dt` recomputed from the recorded samples, with the
/// integrand linear between samples and the discount factor exact.
///
/// Only as fine as the recorded samples: use a trajectory simulated with
/// `record = true`.
pub fn discounted_gain(traj: &Trajectory, econ: &EconParams) -> f64 {
    let d = econ.delta;
    let l = |x: f64, e: f64| (econ.p * econ.q * x - econ.c) * e;
    traj.segments
        .iter()
        .flat_map(|s| s.samples.windows(2))
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let h = b.t - a.t;
            if h <= 0.0 {
                return 0.0;
            }
            let (fa, fb) = (l(a.x, a.effort), l(b.x, b.effort));
            // ∫_0^h (fa + (fb - fa) s / h) e^{-δ (a.t + s)} ds
            let k = (-d * h).exp();
            let i0 = (1.0 - k) / d;
            let i1 = (1.0 - k * (1.0 + d * h)) / (d * d * h);
            (-d * a.t).exp() * (fa * i0 + (fb - fa) * i1)
        })
        .sum()
}

/// Replicate mean of the discounted gain with a 95% normal interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
    pub std_dev: f64,
    /// Bound on the gain beyond the horizon.
    pub truncation_bound: f64,
}

/// `sup |l0| ē e^{-δ T} / δ`, with the supremum over stocks up to
/// `max(x0, K)` times the largest biomass multiplier.
pub fn truncation_bound(sys: &JumpSystem, x0: f64, horizon: f64) -> f64 {
    let e = &sys.model.econ;
    let x_top = x0.max(sys.model.bio.k) * sys.biomass_kernel.multiplier_range().1.max(1.0);
    let sup_l = e.c.max(e.p * e.q * x_top - e.c);
    sup_l * e.e_max * (-e.delta * horizon).exp() / e.delta
}

pub fn monte_carlo_value(
    sys: &JumpSystem,
    x0: f64,
    r0: f64,
    policy: &dyn FeedbackLaw,
    opts: SimOptions,
    n_reps: usize,
    seed: u64,
) -> Result<ValueEstimate, SimError> {
    if n_reps < 2 {
        return Err(SimError::Invalid("need at least two replicates".into()));
    }
    let opts = SimOptions {
        record: false,
        ..opts
    };
    let gains: Vec<f64> = (0..n_reps as u64)
        .into_par_iter()
        .map(|k| simulate_stream(sys, x0, r0, policy, opts, seed, k).map(|t| t.discounted_gain))
        .collect::<Result<_, _>>()?;
    let n = gains.len() as f64;
    let mean = gains.iter().sum::<f64>() / n;
    let var = gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_dev = var.sqrt();
    Ok(ValueEstimate {
        mean,
        half_width: 1.96 * std_dev / n.sqrt(),
        n: n_reps,
        std_dev,
        truncation_bound: truncation_bound(sys, x0, opts.horizon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ConstantEffort;
    use crate::kernels::{DiscreteLaw, KernelSpec};

    fn system(lx: f64, lr: f64) -> JumpSystem {
        JumpSystem::new(
            Model::baseline(),
            JumpRates::new(lx, lr).unwrap(),
            Kernel::new(KernelSpec::uniform(0.8, 1.2)).unwrap(),
            Some(Kernel::new(KernelSpec::growth(0.1, DiscreteLaw::symmetric_pair())).unwrap()),
        )
        .unwrap()
    }

    struct Hold(f64);

    impl FeedbackLaw for Hold {
        fn effort(&self, x: f64, r: f64) -> f64 {
            if x < self.0 {
                0.0
            } else if x > self.0 {
                1.0
            } else {
                r * (1.0 - x)
            }
        }
        fn switch_level(&self, _r: f64) -> Option<f64> {
            Some(self.0)
        }
    }

    fn opts(horizon: f64) -> SimOptions {
        SimOptions {
            horizon,
            dt: 1e-2,
            record: true,
        }
    }

    #[test]
    fn no_jumps_gives_one_segment() {
        let tr = simulate(
            &system(0.0, 0.0),
            0.3,
            1.0,
            &ConstantEffort(0.2),
            opts(10.0),
            7,
        )
        .unwrap();
        assert_eq!(tr.segments.len(), 1);
        assert!(tr.events.is_empty());
    }

    #[test]
    fn zero_effort_zero_gain() {
        let tr = simulate(
            &system(1.0, 0.0),
            0.3,
            1.0,
            &ConstantEffort(0.0),
            opts(20.0),
            1,
        )
        .unwrap();
        assert_eq!(tr.discounted_gain, 0.0);
        assert_eq!(discounted_gain(&tr, &Model::baseline().econ), 0.0);
    }

    #[test]
    fn arc_gain_closed_form() {
        let xs = 0.7;
        let horizon = 40.0;
        let tr = simulate(&system(0.0, 0.0), xs, 1.0, &Hold(xs), opts(horizon), 3).unwrap();
        let exact = (2.0 * xs - 1.0) * (1.0 - xs) * (1.0 - (-0.05 * horizon).exp()) / 0.05;
        assert!((tr.discounted_gain - exact).abs() < 1e-12);
        assert!((discounted_gain(&tr, &Model::baseline().econ) - exact).abs() < 1e-12);
    }

    #[test]
    fn recorded_gain_matches_integrated_gain() {
        let tr = simulate(&system(0.5, 0.0), 0.9, 1.0, &Hold(0.6), opts(30.0), 11).unwrap();
        let recomputed = discounted_gain(&tr, &Model::baseline().econ);
        assert!((recomputed - tr.discounted_gain).abs() < 1e-5 * tr.discounted_gain.abs().max(1.0));
    }

    #[test]
    fn gain_homogeneous_in_price_when_cost_is_zero() {
        let mk = |p: f64| {
            let m = Model::baseline()
                .with_econ(EconParams::new(p, 1.0, 0.0, 0.05, 1.0).unwrap())
                .unwrap();
            let mut s = system(0.7, 0.0);
            s.model = m;
            simulate(&s, 0.8, 1.0, &Hold(0.475), opts(25.0), 5)
                .unwrap()
                .discounted_gain
        };
        let (a, b) = (mk(1.0), mk(2.0));
        assert!((b - 2.0 * a).abs() < 1e-12 * b.abs());
    }

    #[test]
    fn structure_invariants() {
        let tr = simulate(&system(1.0, 1.0), 0.5, 1.0, &Hold(0.6), opts(50.0), 9).unwrap();
        assert!(tr.events.windows(2).all(|w| w[1].time > w[0].time));
        for (seg, ev) in tr.segments.iter().skip(1).zip(&tr.events) {
            assert_eq!(seg.x_start, ev.x_post);
            assert_eq!(seg.r, ev.r_post);
            assert_eq!(seg.t_start, ev.time);
        }
        let none = simulate(&system(1.0, 0.0), 0.5, 1.0, &Hold(0.6), opts(50.0), 9).unwrap();
        assert!(none
            .events
            .iter()
            .all(|e| e.kind == EventKind::Biomass && e.r_post == 1.0));
    }

    #[test]
    fn estimates_are_reproducible() {
        let s = system(0.3, 0.0);
        let o = SimOptions {
            horizon: 20.0,
            dt: 1e-2,
            record: false,
        };
        let a = monte_carlo_value(&s, 0.5, 1.0, &Hold(0.6), o, 64, 42).unwrap();
        let b = monte_carlo_value(&s, 0.5, 1.0, &Hold(0.6), o, 64, 42).unwrap();
        assert_eq!(a, b);
        let det = monte_carlo_value(&system(0.0, 0.0), 0.5, 1.0, &Hold(0.6), o, 8, 1).unwrap();
        assert_eq!(det.std_dev, 0.0);
        assert!(monte_carlo_value(&s, 0.5, 1.0, &Hold(0.6), o, 1, 1).is_err());
    }

    #[test]
    fn missing_growth_kernel_rejected() {
        let s = system(1.0, 1.0);
        assert!(JumpSystem::new(s.model, s.rates, s.biomass_kernel, None).is_err());
    }
}
