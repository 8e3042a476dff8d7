use crate::flow::FeedbackLaw;
use crate::model::Model;
use crate::numerics::stencil::lagrange4_uniform;

use super::SolverError;

/// Switching level, fixed or as a function of the growth rate.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Level(f64),
    /// Levels on the uniform growth-rate axis `r_lo + i dr`, interpolated by
    /// cubics and held constant outside it.
    Curve {
        r_lo: f64,
        dr: f64,
        levels: Vec<f64>,
    },
}

/// Zero effort below the switching level, `ē` above it and the singular
/// effort `G/h0` on it.
#[derive(Debug, Clone)]
pub struct ThresholdPolicy {
    pub threshold: Threshold,
    pub e_max: f64,
    model: Model,
}

impl ThresholdPolicy {
    pub fn x_star(&self, r: f64) -> f64 {
        match &self.threshold {
            Threshold::Level(x) => *x,
            Threshold::Curve { r_lo, dr, levels } => {
                let r_hi = r_lo + dr * (levels.len() - 1) as f64;
                lagrange4_uniform(levels, *r_lo, *dr, r.clamp(*r_lo, r_hi))
            }
        }
    }

    pub fn singular_effort(&self, r: f64) -> f64 {
        self.model.singular_effort(self.x_star(r), r)
    }
}

impl FeedbackLaw for ThresholdPolicy {
    fn effort(&self, x: f64, r: f64) -> f64 {
        let xs = self.x_star(r);
        if x < xs {
            0.0
        } else if x > xs {
            self.e_max
        } else {
            self.model.singular_effort(x, r)
        }
    }

    fn switch_level(&self, r: f64) -> Option<f64> {
        Some(self.x_star(r))
    }
}

fn admissible(model: &Model, x_star: f64, r: f64) -> Result<(), SolverError> {
    if !(x_star > 0.0 && x_star < model.bio.k) {
        return Err(SolverError::CriticalValueOutOfRange(x_star));
    }
    let effort = model.singular_effort(x_star, r);
    let e_max = model.econ.e_max;
    if !(0.0..=e_max).contains(&effort) {
        return Err(SolverError::SingularEffortInadmissible {
            x_star,
            effort,
            e_max,
        });
    }
    Ok(())
}

pub fn policy_from_value(x_star: f64, model: &Model) -> Result<ThresholdPolicy, SolverError> {
    admissible(model, x_star, model.bio.r)?;
    Ok(ThresholdPolicy {
        threshold: Threshold::Level(x_star),
        e_max: model.econ.e_max,
        model: model.clone(),
    })
}

/// Policy from `x*(r)` sampled on a uniform growth-rate grid.
pub fn policy_from_curve(
    r_nodes: &[f64],
    x_stars: &[f64],
    model: &Model,
) -> Result<ThresholdPolicy, SolverError> {
    if r_nodes.len() < 2 || r_nodes.len() != x_stars.len() {
        return Err(SolverError::InvalidGrid(
            "curve needs matching growth rates and levels".into(),
        ));
    }
    for (&r, &x) in r_nodes.iter().zip(x_stars) {
        admissible(model, x, r)?;
    }
    Ok(ThresholdPolicy {
        threshold: Threshold::Curve {
            r_lo: r_nodes[0],
            dr: r_nodes[1] - r_nodes[0],
            levels: x_stars.to_vec(),
        },
        e_max: model.econ.e_max,
        model: model.clone(),
    })
}
