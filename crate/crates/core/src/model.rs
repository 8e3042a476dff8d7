//! Biological and economic parameters, the growth law and the gain functions.
//!
//! Biomass grows logistically, `G(x) = r x (1 - x/K)`. Harvest and gain are
//! proportional to effort: `h(x, e) = q x e` and `l(x, e) = (p q x - c) e`.
//! Everything else in the crate consumes these through [`Model`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("non-positive margin at carrying capacity: p*q*K - c = {margin}")]
    NoPositiveMargin { margin: f64 },
    #[error("biomass must be non-negative, got {0}")]
    NegativeBiomass(f64),
    #[error("margin l0/h0 is singular at x = {0}")]
    SingularMargin(f64),
    #[error("effort {effort} outside [0, {e_max}]")]
    EffortOutOfRange { effort: f64, e_max: f64 },
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Intrinsic growth rate `r` and carrying capacity `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BioParams {
    pub r: f64,
    pub k: f64,
}

impl BioParams {
    pub fn new(r: f64, k: f64) -> Result<Self, ModelError> {
        check("r", r, r > 0.0, "growth rate must be positive")?;
        check("K", k, k > 0.0, "carrying capacity must be positive")?;
        Ok(Self { r, k })
    }

    /// Same biology with another growth rate.
    pub fn with_r(self, r: f64) -> Result<Self, ModelError> {
        Self::new(r, self.k)
    }
}

/// Price, catchability, effort cost, discount rate and effort bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconParams {
    pub p: f64,
    pub q: f64,
    pub c: f64,
    pub delta: f64,
    pub e_max: f64,
}

impl EconParams {
    pub fn new(p: f64, q: f64, c: f64, delta: f64, e_max: f64) -> Result<Self, ModelError> {
        check("p", p, p > 0.0, "price must be positive")?;
        check("q", q, q > 0.0, "catchability must be positive")?;
        check("c", c, c >= 0.0, "effort cost must be non-negative")?;
        check(
            "delta",
            delta,
            delta > 0.0,
            "discount rate must be positive",
        )?;
        check("e_max", e_max, e_max > 0.0, "effort bound must be positive")?;
        Ok(Self {
            p,
            q,
            c,
            delta,
            e_max,
        })
    }

    /// Biomass below which harvesting loses money, `c / (p q)`.
    pub fn break_even_biomass(&self) -> f64 {
        self.c / (self.p * self.q)
    }
}

/// Poisson rates of biomass and growth-rate updates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpRates {
    pub lambda_x: f64,
    pub lambda_r: f64,
}

impl JumpRates {
    pub fn new(lambda_x: f64, lambda_r: f64) -> Result<Self, ModelError> {
        check(
            "lambda_x",
            lambda_x,
            lambda_x >= 0.0,
            "jump rate must be non-negative",
        )?;
        check(
            "lambda_r",
            lambda_r,
            lambda_r >= 0.0,
            "jump rate must be non-negative",
        )?;
        Ok(Self { lambda_x, lambda_r })
    }

    /// Single-update model: only the biomass jumps.
    pub fn biomass_only(lambda: f64) -> Result<Self, ModelError> {
        Self::new(lambda, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.lambda_x + self.lambda_r
    }
}

/// A concave growth law with `G(0) = 0`, evaluated together with its first two
/// derivatives in biomass.
pub trait GrowthLaw: Send + Sync + std::fmt::Debug {
    /// `(G, G', G'')` at biomass `x` for growth rate `r`.
    fn eval(&self, x: f64, r: f64, k: f64) -> (f64, f64, f64);
}

/// `G(x) = r x (1 - x/K)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Logistic;

impl GrowthLaw for Logistic {
    fn eval(&self, x: f64, r: f64, k: f64) -> (f64, f64, f64) {
        (r * x * (1.0 - x / k), r * (1.0 - 2.0 * x / k), -2.0 * r / k)
    }
}

/// Values of the gain/harvest split at one biomass level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    /// `l0(x) = p q x - c`
    pub l0: f64,
    /// `h0(x) = q x`
    pub h0: f64,
    /// `m(x) = l0/h0 = p - c/(q x)`
    pub m: f64,
    /// `m'(x) = c / (q x^2)`
    pub m_prime: f64,
}

/// Biological and economic parameters bundled with the growth law.
///
/// Immutable once built, so it can be shared freely between threads.
#[derive(Debug, Clone)]
pub struct Model {
    pub bio: BioParams,
    pub econ: EconParams,
    growth: std::sync::Arc<dyn GrowthLaw>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.bio == other.bio && self.econ == other.econ
    }
}

impl Model {
    /// Logistic model. Fails unless harvesting at carrying capacity pays.
    pub fn new(bio: BioParams, econ: EconParams) -> Result<Self, ModelError> {
        Self::with_growth(bio, econ, std::sync::Arc::new(Logistic))
    }

    pub fn with_growth(
        bio: BioParams,
        econ: EconParams,
        growth: std::sync::Arc<dyn GrowthLaw>,
    ) -> Result<Self, ModelError> {
        let margin = econ.p * econ.q * bio.k - econ.c;
        if !(margin > 0.0) {
            return Err(ModelError::NoPositiveMargin { margin });
        }
        Ok(Self { bio, econ, growth })
    }

    /// Reference parameter set used throughout the tests and the book:
    /// `r = K = 1`, `p = 2`, `q = 1`, `c = 1`, `delta = 0.05`, `e_max = 1`.
    pub fn baseline() -> Self {
        Self::new(
            BioParams { r: 1.0, k: 1.0 },
            EconParams {
                p: 2.0,
                q: 1.0,
                c: 1.0,
                delta: 0.05,
                e_max: 1.0,
            },
        )
        .expect("baseline parameters are valid")
    }

    /// Same model with a different growth rate.
    pub fn with_r(&self, r: f64) -> Result<Self, ModelError> {
        Self::with_growth(self.bio.with_r(r)?, self.econ, self.growth.clone())
    }

    pub fn with_econ(&self, econ: EconParams) -> Result<Self, ModelError> {
        Self::with_growth(self.bio, econ, self.growth.clone())
    }

    /// `(G, G', G'')` at the model's own growth rate.
    pub fn growth_eval(&self, x: f64) -> Result<(f64, f64, f64), ModelError> {
        self.growth_eval_at(x, self.bio.r)
    }

    /// `(G, G', G'')` at growth rate `r`.
    pub fn growth_eval_at(&self, x: f64, r: f64) -> Result<(f64, f64, f64), ModelError> {
        if x < 0.0 || x.is_nan() {
            return Err(ModelError::NegativeBiomass(x));
        }
        Ok(self.growth.eval(x, r, self.bio.k))
    }

    /// Unchecked growth, for inner loops that already guarantee `x >= 0`.
    #[inline]
    pub(crate) fn g(&self, x: f64, r: f64) -> (f64, f64, f64) {
        self.growth.eval(x, r, self.bio.k)
    }

    pub fn margin_eval(&self, x: f64) -> Result<Margin, ModelError> {
        if !(x > 0.0) {
            return Err(ModelError::SingularMargin(x));
        }
        Ok(self.margin(x))
    }

    #[inline]
    pub(crate) fn margin(&self, x: f64) -> Margin {
        let EconParams { p, q, c, .. } = self.econ;
        Margin {
            l0: p * q * x - c,
            h0: q * x,
            m: p - c / (q * x),
            m_prime: c / (q * x * x),
        }
    }

    /// Drift `G(x) - h0(x) e` under effort `e`.
    pub fn controlled_drift(&self, x: f64, e: f64) -> Result<f64, ModelError> {
        self.controlled_drift_at(x, self.bio.r, e)
    }

    pub fn controlled_drift_at(&self, x: f64, r: f64, e: f64) -> Result<f64, ModelError> {
        if !(0.0..=self.econ.e_max).contains(&e) {
            return Err(ModelError::EffortOutOfRange {
                effort: e,
                e_max: self.econ.e_max,
            });
        }
        let (g, _, _) = self.growth_eval_at(x, r)?;
        Ok(g - self.econ.q * x * e)
    }

    /// Effort that holds the stock constant, `G(x) / h0(x)`.
    pub fn singular_effort(&self, x: f64, r: f64) -> f64 {
        self.g(x, r).0 / (self.econ.q * x)
    }

    /// Instantaneous gain `l0(x) e`.
    #[inline]
    pub fn gain_rate(&self, x: f64, e: f64) -> f64 {
        (self.econ.p * self.econ.q * x - self.econ.c) * e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(p: f64, q: f64, c: f64) -> Model {
        Model::new(
            BioParams::new(1.0, 1.0).unwrap(),
            EconParams::new(p, q, c, 0.05, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn growth_anchors() {
        let m = unit(2.0, 1.0, 1.0);
        assert_eq!(m.growth_eval(0.0).unwrap(), (0.0, 1.0, -2.0));
        assert_eq!(m.growth_eval(1.0).unwrap(), (0.0, -1.0, -2.0));
        assert_eq!(m.growth_eval(0.5).unwrap(), (0.25, 0.0, -2.0));
        assert!(matches!(
            m.growth_eval(-0.1),
            Err(ModelError::NegativeBiomass(_))
        ));
    }

    #[test]
    fn margin_anchors() {
        let m = unit(2.0, 1.0, 1.0).margin_eval(1.0).unwrap();
        assert_eq!((m.l0, m.h0, m.m, m.m_prime), (1.0, 1.0, 1.0, 1.0));
        let m = unit(2.0, 1.0, 0.0).margin_eval(0.5).unwrap();
        assert_eq!((m.l0, m.h0, m.m, m.m_prime), (1.0, 0.5, 2.0, 0.0));
        let m = unit(2.0, 1.0, 1.0).margin_eval(0.5).unwrap();
        assert_eq!((m.l0, m.h0, m.m, m.m_prime), (0.0, 0.5, 0.0, 4.0));
        assert!(unit(2.0, 1.0, 1.0).margin_eval(0.0).is_err());
    }

    #[test]
    fn drift_anchors() {
        let m = unit(2.0, 1.0, 1.0);
        assert_abs_diff_eq!(m.controlled_drift(0.5, 0.0).unwrap(), 0.25);
        assert_abs_diff_eq!(m.controlled_drift(0.5, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(m.controlled_drift(0.5, 1.0).unwrap(), -0.25);
        assert!(m.controlled_drift(0.5, 1.5).is_err());
        assert!(m.controlled_drift(0.5, -0.1).is_err());
    }

    #[test]
    fn constructor_rejects_bad_parameters() {
        assert!(BioParams::new(0.0, 1.0).is_err());
        assert!(BioParams::new(1.0, -1.0).is_err());
        assert!(EconParams::new(1.0, 1.0, -0.1, 0.05, 1.0).is_err());
        assert!(EconParams::new(1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(JumpRates::new(-1.0, 0.0).is_err());
        assert!(JumpRates::new(f64::INFINITY, 0.0).is_err());
        // p q K - c = 0
        let err = Model::new(
            BioParams::new(1.0, 1.0).unwrap(),
            EconParams::new(1.0, 1.0, 1.0, 0.05, 1.0).unwrap(),
        );
        assert!(matches!(err, Err(ModelError::NoPositiveMargin { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn logistic_shape(x in 0.0f64..3.0, r in 0.1f64..3.0, k in 0.5f64..2.0) {
                let (g, g1, g2) = Logistic.eval(x, r, k);
                prop_assert!(g2 < 0.0);
                // G(x) - x G'(x) = r x^2 / K >= 0
                prop_assert!(g - x * g1 >= -1e-12);
                if x < k / 2.0 { prop_assert!(g1 > 0.0); }
            }

            #[test]
            fn margin_slope_nonnegative(x in 1e-3f64..3.0, c in 0.0f64..1.5) {
                let m = unit(2.0, 1.0, c).margin(x);
                prop_assert!(m.m_prime >= 0.0);
                prop_assert_eq!(m.m_prime == 0.0, c == 0.0);
            }

            #[test]
            fn singular_effort_freezes_stock(x in 1e-3f64..0.999) {
                let m = unit(2.0, 1.0, 1.0);
                let e = m.singular_effort(x, 1.0);
                let d = m.controlled_drift(x, e).unwrap();
                prop_assert!(d.abs() < 1e-14);
            }
        }
    }
}
