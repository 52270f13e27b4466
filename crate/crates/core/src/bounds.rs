//! Closed-form reference bounds and the coordinate-wise sandwich report.

use serde::{Deserialize, Serialize};

use crate::algos::Method;
use crate::error::{Error, Result};
use crate::pep::{coordinate_sandwich, Sandwich, SandwichTemplate};
use crate::scalar::Scalar;
use crate::solve::{SdpBackend, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundFormula {
    /// `(4/alpha) (1 + p alpha^2 L^2) p/(N+8) R^2` for cyclic coordinate descent.
    BeckCcd,
    /// `L R^2 / 2`, the worst case after zero steps.
    ZeroStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub name: String,
    pub formula: BoundFormula,
    pub alpha: f64,
    pub p: usize,
    pub lipschitz: f64,
    pub steps: usize,
    pub radius: f64,
}

impl BoundSpec {
    pub fn evaluate(&self) -> Result<f64> {
        match self.formula {
            BoundFormula::BeckCcd => beck_ccd_bound(self.alpha, self.p, self.lipschitz, self.steps, self.radius),
            BoundFormula::ZeroStep => smoothness_zero_step_bound(self.lipschitz, self.radius),
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidSize(format!("radius must be finite and nonnegative, got {r}")));
    }
    Ok(())
}

/// Beck's bound for cyclic coordinate descent with constant step `alpha <= 1/L`.
pub fn beck_ccd_bound(alpha: f64, p: usize, lipschitz: f64, steps: usize, radius: f64) -> Result<f64> {
    if !(lipschitz > 0.0) {
        return Err(Error::NonPositiveSmoothness(lipschitz));
    }
    if !(alpha > 0.0) || alpha > 1.0 / lipschitz {
        return Err(Error::StepOutOfRange { alpha, lipschitz });
    }
    if p == 0 {
        return Err(Error::InvalidSize("p must be at least 1".into()));
    }
    check_radius(radius)?;
    let p = p as f64;
    Ok(4.0 / alpha * (1.0 + p * alpha * alpha * lipschitz * lipschitz) * p / (steps as f64 + 8.0) * radius * radius)
}

pub fn smoothness_zero_step_bound(lipschitz: f64, radius: f64) -> Result<f64> {
    if !(lipschitz > 0.0) {
        return Err(Error::NonPositiveSmoothness(lipschitz));
    }
    check_radius(radius)?;
    Ok(0.5 * lipschitz * radius * radius)
}

#[derive(Clone, Debug)]
pub struct SandwichReport {
    pub sandwich: Sandwich,
    /// Beck's bound at `L = sum L_i`, present for CCD templates with `alpha <= 1/sum L_i`.
    pub beck: Option<f64>,
}

impl SandwichReport {
    pub fn lower(&self) -> f64 {
        self.sandwich.lower.value
    }

    pub fn upper(&self) -> f64 {
        self.sandwich.upper.value
    }
}

pub fn sandwich_report<S: Scalar + PartialOrd>(
    lvec: &[S],
    template: &SandwichTemplate<S>,
    backend: &dyn SdpBackend,
    options: &SolveOptions,
) -> Result<SandwichReport> {
    let sandwich = coordinate_sandwich(lvec, template, backend, options)?;
    let beck = match &template.trajectory.method {
        Method::Ccd { alpha } => {
            let alpha = alpha.lower();
            let radius = template.condition.radius().lower();
            beck_ccd_bound(alpha, template.trajectory.p, sandwich.l_sum, template.trajectory.steps(), radius).ok()
        }
        _ => None,
    };
    Ok(SandwichReport { sandwich, beck })
}
