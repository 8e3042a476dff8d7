//! Jump kernels: the post-jump laws, the expectation operators `Q` acting on
//! sampled functions, and jump sampling for the simulator.
//!
//! Every kernel here is multiplicative: a jump sends the state `s` to `s * M`
//! where the multiplier `M` is either uniform on `[z_lo, z_hi]` or takes the
//! values `1 + z * scale` of a finite law `H`. So
//!
//! ```text
//! Q[θ](s)  = E[θ(s M)]
//! Q[θ]'(s) = E[M θ'(s M)]
//! ```
//!
//! States pushed past the end of a grid are clamped to it. The clamped
//! probability mass is measured, and [`apply_q`] refuses to return a value
//! when it exceeds the configured fraction.

mod gridded;

pub use gridded::{GridError, GriddedFunction};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::quadrature::GaussLegendre;
use crate::numerics::stencil;

/// Default number of Gauss–Legendre nodes for the uniform kernel.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Default tolerated clamped mass.
pub const DEFAULT_MAX_CLAMP_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("invalid kernel: {0}")]
    Invalid(String),
    #[error("jump law at state {state} puts mass {clamped_mass} outside the grid [{lo}, {hi}]")]
    SupportOffGrid {
        state: f64,
        clamped_mass: f64,
        lo: f64,
        hi: f64,
    },
    #[error("state {0} is too close to the grid boundary for the difference stencil")]
    StencilOutOfRange(f64),
    #[error("state must be positive, got {0}")]
    NonPositiveState(f64),
}

/// Finite law on `[-1, 1]` with explicit support and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    /// Set to allow a law that is not symmetric about zero.
    #[serde(default)]
    pub asymmetric: bool,
}

impl DiscreteLaw {
    /// Symmetric law on `{-1, +1}`.
    pub fn symmetric_pair() -> Self {
        Self {
            support: vec![-1.0, 1.0],
            weights: vec![0.5, 0.5],
            asymmetric: false,
        }
    }

    /// Law on `{-1, +1}` with mean `mean`.
    pub fn pair_with_mean(mean: f64) -> Self {
        let up = 0.5 * (1.0 + mean);
        Self {
            support: vec![-1.0, 1.0],
            weights: vec![1.0 - up, up],
            asymmetric: mean != 0.0,
        }
    }

    fn validate(&self) -> Result<(), KernelError> {
        let bad = |m: &str| Err(KernelError::Invalid(m.to_string()));
        if self.support.is_empty() || self.support.len() != self.weights.len() {
            return bad("law needs matching, non-empty support and weights");
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return bad("weights must be finite and non-negative");
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("weights must sum to one");
        }
        if self.support.iter().any(|s| !s.is_finite()) {
            return bad("support must be finite");
        }
        if !self.asymmetric && !self.is_symmetric() {
            return bad("law is not symmetric about 0; mark it asymmetric to allow this");
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.support.iter().zip(&self.weights).all(|(&s, &w)| {
            let mirror: f64 = self
                .support
                .iter()
                .zip(&self.weights)
                .filter(|(&t, _)| (t + s).abs() < 1e-12)
                .map(|(_, &v)| v)
                .sum();
            let here: f64 = self
                .support
                .iter()
                .zip(&self.weights)
                .filter(|(&t, _)| (t - s).abs() < 1e-12)
                .map(|(_, &v)| v)
                .sum();
            w == 0.0 || (mirror - here).abs() < 1e-12
        })
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| s * w)
            .sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| s * s * w)
            .sum()
    }
}

/// Shape of a jump law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// `Y = Z x`, `Z ~ U(z_lo, z_hi)`. `z_lo == z_hi` is a point mass.
    UniformMultiplicative { z_lo: f64, z_hi: f64 },
    /// `Y = x (1 + Z epsilon)`, `Z ~ H`.
    CenteredMultiplicative { epsilon: f64, law: DiscreteLaw },
    /// `R = r (1 + S xi)`, `S ~ H_r`.
    GrowthMultiplicative { xi: f64, law: DiscreteLaw },
}

/// A jump law plus how to integrate against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default = "default_clamp")]
    pub max_clamp_fraction: f64,
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

fn default_clamp() -> f64 {
    DEFAULT_MAX_CLAMP_FRACTION
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            max_clamp_fraction: DEFAULT_MAX_CLAMP_FRACTION,
        }
    }

    pub fn uniform(z_lo: f64, z_hi: f64) -> Self {
        Self::new(KernelKind::UniformMultiplicative { z_lo, z_hi })
    }

    /// The identity jump, `Y = x`.
    pub fn identity() -> Self {
        Self::uniform(1.0, 1.0)
    }

    pub fn centered(epsilon: f64, law: DiscreteLaw) -> Self {
        Self::new(KernelKind::CenteredMultiplicative { epsilon, law })
    }

    pub fn growth(xi: f64, law: DiscreteLaw) -> Self {
        Self::new(KernelKind::GrowthMultiplicative { xi, law })
    }
}

#[derive(Debug, Clone)]
enum Multipliers {
    /// Uniform on `[lo, hi]`, integrated by Gauss–Legendre.
    Uniform {
        lo: f64,
        hi: f64,
        rule: GaussLegendre,
    },
    /// Finite list of `(multiplier, probability)`.
    Discrete {
        atoms: Vec<(f64, f64)>,
        picker: WeightedIndex<f64>,
    },
}

/// A validated kernel ready for evaluation and sampling.
///
/// Immutable and cheap to share; sampling borrows the caller's RNG.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    mult: Multipliers,
}

/// `Q[θ](x)` together with the probability mass that had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValue {
    pub value: f64,
    pub clamped_mass: f64,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self, KernelError> {
        let invalid = |m: &str| Err(KernelError::Invalid(m.to_string()));
        if spec.quadrature_nodes == 0 {
            return invalid("quadrature_nodes must be positive");
        }
        if !(spec.max_clamp_fraction >= 0.0) {
            return invalid("max_clamp_fraction must be non-negative");
        }
        let mult = match &spec.kind {
            &KernelKind::UniformMultiplicative { z_lo, z_hi } => {
                if !(z_lo > 0.0 && z_hi >= z_lo && z_hi.is_finite()) {
                    return invalid("uniform kernel needs 0 < z_lo <= z_hi");
                }
                if z_hi == z_lo {
                    Multipliers::Discrete {
                        atoms: vec![(z_lo, 1.0)],
                        picker: WeightedIndex::new([1.0]).unwrap(),
                    }
                } else {
                    Multipliers::Uniform {
                        lo: z_lo,
                        hi: z_hi,
                        rule: GaussLegendre::new(spec.quadrature_nodes),
                    }
                }
            }
            KernelKind::CenteredMultiplicative { epsilon, law } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return invalid("centered kernel needs 0 < epsilon < 1");
                }
                law.validate()?;
                if law.support.iter().any(|s| s.abs() > 1.0) {
                    return invalid("centered kernel law must live on [-1, 1]");
                }
                discrete(law, *epsilon)?
            }
            KernelKind::GrowthMultiplicative { xi, law } => {
                if !(*xi > 0.0 && xi.is_finite()) {
                    return invalid("growth kernel needs xi > 0");
                }
                law.validate()?;
                if law.support.iter().any(|s| 1.0 + s * xi <= 0.0) {
                    return invalid("growth kernel must keep r (1 + s xi) positive");
                }
                discrete(law, *xi)?
            }
        };
        Ok(Self { spec, mult })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// Smallest and largest multiplier in the support.
    pub fn multiplier_range(&self) -> (f64, f64) {
        match &self.mult {
            Multipliers::Uniform { lo, hi, .. } => (*lo, *hi),
            Multipliers::Discrete { atoms, .. } => atoms
                .iter()
                .filter(|a| a.1 > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(m, _)| {
                    (a.min(m), b.max(m))
                }),
        }
    }

    /// Multipliers at which `Q[θ]` can lose smoothness: the ends of a
    /// uniform law, or every atom of a discrete one.
    pub fn break_multipliers(&self) -> Vec<f64> {
        match &self.mult {
            Multipliers::Uniform { lo, hi, .. } => vec![*lo, *hi],
            Multipliers::Discrete { atoms, .. } => {
                atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0).collect()
            }
        }
    }

    pub fn mean_multiplier(&self) -> f64 {
        match &self.mult {
            Multipliers::Uniform { lo, hi, .. } => 0.5 * (lo + hi),
            Multipliers::Discrete { atoms, .. } => atoms.iter().map(|(m, p)| m * p).sum(),
        }
    }

    /// `E[f(M)]` over the multiplier law. `breaks` are multiplier values where
    /// `f` is not smooth; the uniform quadrature splits there.
    pub fn expect_multiplier<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut f: F) -> f64 {
        match &self.mult {
            Multipliers::Uniform { lo, hi, rule } => {
                rule.integrate_split(*lo, *hi, breaks, &mut f) / (hi - lo)
            }
            Multipliers::Discrete { atoms, .. } => atoms.iter().map(|&(m, p)| p * f(m)).sum(),
        }
    }

    /// `E[f(s M)]` for an arbitrary function of the post-jump state.
    pub fn expect<F: FnMut(f64) -> f64>(&self, state: f64, mut f: F) -> f64 {
        self.expect_multiplier(&[], |m| f(state * m))
    }

    /// Probability that the post-jump state leaves `[lo, hi]`.
    pub fn mass_outside(&self, state: f64, lo: f64, hi: f64) -> f64 {
        match &self.mult {
            Multipliers::Uniform { lo: a, hi: b, .. } => {
                let below = ((lo / state).min(*b) - a).max(0.0);
                let above = (b - (hi / state).max(*a)).max(0.0);
                (below + above) / (b - a)
            }
            Multipliers::Discrete { atoms, .. } => atoms
                .iter()
                .filter(|(m, _)| state * m < lo || state * m > hi)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// `Q[θ](x)` with clamping, plus the clamped mass.
    pub fn apply_clamped(&self, theta: &GriddedFunction, x: f64) -> QValue {
        let (lo, hi) = (theta.lo(), theta.hi());
        let breaks = self.breaks_for(theta, x);
        let value = self.expect_multiplier(&breaks, |m| theta.eval((x * m).clamp(lo, hi)));
        QValue {
            value,
            clamped_mass: self.mass_outside(x, lo, hi),
        }
    }

    /// `Q[θ]'(x)` under the same clamping as [`apply_clamped`](Self::apply_clamped).
    pub fn apply_derivative(&self, theta: &GriddedFunction, x: f64) -> f64 {
        let (lo, hi) = (theta.lo(), theta.hi());
        let breaks = self.breaks_for(theta, x);
        self.expect_multiplier(&breaks, |m| {
            let y = x * m;
            if y < lo || y > hi {
                0.0
            } else {
                m * theta.eval_deriv(y)
            }
        })
    }

    /// `(Q[θ](x), Q[θ]'(x))`.
    pub fn apply_both(&self, theta: &GriddedFunction, x: f64) -> (f64, f64) {
        match &self.mult {
            Multipliers::Uniform { .. } => (
                self.apply_clamped(theta, x).value,
                self.apply_derivative(theta, x),
            ),
            Multipliers::Discrete { atoms, .. } => {
                let (lo, hi) = (theta.lo(), theta.hi());
                atoms.iter().fold((0.0, 0.0), |(v, d), &(m, p)| {
                    let y = x * m;
                    if y < lo || y > hi {
                        (v + p * theta.eval(y.clamp(lo, hi)), d)
                    } else {
                        let (fy, dy) = theta.eval_both(y);
                        (v + p * fy, d + p * m * dy)
                    }
                })
            }
        }
    }

    fn breaks_for(&self, theta: &GriddedFunction, x: f64) -> Vec<f64> {
        if !matches!(self.mult, Multipliers::Uniform { .. }) {
            return Vec::new();
        }
        theta
            .kinks()
            .iter()
            .copied()
            .chain([theta.lo(), theta.hi()])
            .map(|k| k / x)
            .collect()
    }

    /// One draw of the post-jump state from `state`.
    pub fn sample<R: Rng + ?Sized>(&self, state: f64, rng: &mut R) -> Result<f64, KernelError> {
        if !(state > 0.0) {
            return Err(KernelError::NonPositiveState(state));
        }
        let m = match &self.mult {
            Multipliers::Uniform { lo, hi, .. } => lo + (hi - lo) * rng.gen::<f64>(),
            Multipliers::Discrete { atoms, picker } => atoms[picker.sample(rng)].0,
        };
        Ok(state * m)
    }
}

fn discrete(law: &DiscreteLaw, scale: f64) -> Result<Multipliers, KernelError> {
    let atoms: Vec<(f64, f64)> = law
        .support
        .iter()
        .zip(&law.weights)
        .map(|(&s, &w)| (1.0 + s * scale, w))
        .collect();
    let picker = WeightedIndex::new(atoms.iter().map(|a| a.1))
        .map_err(|e| KernelError::Invalid(format!("bad weights: {e}")))?;
    Ok(Multipliers::Discrete { atoms, picker })
}

/// `Q[θ](x) = ∫ θ(y) dL(y | x)`.
///
/// Post-jump states above the last node (or below the first) are clamped onto
/// the grid; if that moves more than the kernel's `max_clamp_fraction` of the
/// mass the grid is too small and an error is returned.
pub fn apply_q(theta: &GriddedFunction, kernel: &Kernel, x: f64) -> Result<f64, KernelError> {
    let q = kernel.apply_clamped(theta, x);
    if q.clamped_mass > kernel.spec().max_clamp_fraction {
        return Err(KernelError::SupportOffGrid {
            state: x,
            clamped_mass: q.clamped_mass,
            lo: theta.lo(),
            hi: theta.hi(),
        });
    }
    Ok(q.value)
}

/// `Q_r[θ](x, r) = ∫ θ(x, R) dL_r(R | r)`: the kernel acts on the growth-rate
/// argument with biomass held fixed.
pub fn apply_q_growth<F: Fn(f64, f64) -> f64>(theta: F, kernel: &Kernel, x: f64, r: f64) -> f64 {
    kernel.expect(r, |rr| theta(x, rr))
}

/// One post-jump draw from `L(· | state)`.
pub fn sample_jump<R: Rng + ?Sized>(
    kernel: &Kernel,
    state: f64,
    rng: &mut R,
) -> Result<f64, KernelError> {
    kernel.sample(state, rng)
}

/// `[Q[v]]'(x) - v'(x)`, both by the same central difference with step equal
/// to the local grid spacing. With `richardson` the step-`h` and step-`h/2`
/// estimates are combined to cancel the `h^2` error.
pub fn q_derivative_gap(
    v: &GriddedFunction,
    kernel: &Kernel,
    x: f64,
    richardson: bool,
) -> Result<f64, KernelError> {
    let h = v.spacing_at(x);
    if x - 2.0 * h < v.lo() || x + 2.0 * h > v.hi() {
        return Err(KernelError::StencilOutOfRange(x));
    }
    let q = |y: f64| apply_q(v, kernel, y);
    // surface clamping failures before differencing
    q(x - h)?;
    q(x + h)?;
    let gap = |step: f64| -> f64 {
        let dq = stencil::central2(|y| kernel.apply_clamped(v, y).value, x, step);
        let dv = stencil::central2(|y| v.eval(y), x, step);
        dq - dv
    };
    Ok(if richardson {
        let (g1, g2) = (gap(h), gap(0.5 * h));
        (4.0 * g2 - g1) / 3.0
    } else {
        gap(h)
    })
}
