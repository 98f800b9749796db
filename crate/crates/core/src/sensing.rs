//! Agent classes, detection kernels, costs and the cost normalization.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MissionSpace, Point, VisibilityRegion};

fn default_w2() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentClass {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub p0: f64,
    pub lambda: f64,
    pub delta: f64,
    #[serde(default = "default_w2")]
    pub w2: f64,
}

impl AgentClass {
    pub fn new(p0: f64, lambda: f64, delta: f64, w2: f64) -> Result<Self> {
        let cls = AgentClass {
            name: None,
            p0,
            lambda,
            delta,
            w2,
        };
        cls.validate()?;
        Ok(cls)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p0 must lie in (0, 1], got {}",
                self.p0
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.w2 > 0.0) || !self.w2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "w2 must be positive, got {}",
                self.w2
            )));
        }
        if self.w2 > 1.0 {
            warn!("cost weight w2 = {} exceeds 1", self.w2);
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        sensing_capability(self)
    }

    pub fn gamma(&self) -> f64 {
        self.w2 * self.kappa()
    }

    /// Same sensing and cost parameters (names ignored).
    pub fn same_as(&self, other: &AgentClass) -> bool {
        self.p0 == other.p0
            && self.lambda == other.lambda
            && self.delta == other.delta
            && self.w2 == other.w2
    }
}

/// `p0 · exp(-λ‖x - s‖)`, with no range or visibility truncation.
pub fn detection_probability(cls: &AgentClass, x: Point, s: Point) -> f64 {
    cls.p0 * (-cls.lambda * x.dist(s)).exp()
}

/// Discounted, visibility-truncated detection probability.
pub fn constrained_detection(
    cls: &AgentClass,
    space: &MissionSpace,
    vis: &VisibilityRegion,
    x: Point,
    t: f64,
) -> f64 {
    if vis.contains(space, x) {
        t * detection_probability(cls, x, vis.anchor)
    } else {
        0.0
    }
}

/// Integral of the detection kernel over the sensing disk.
pub fn sensing_capability(cls: &AgentClass) -> f64 {
    let ld = cls.lambda * cls.delta;
    // 1 - (1 + x)e^{-x}, written to keep precision for small x
    let tail = -(-ld).exp_m1() - ld * (-ld).exp();
    2.0 * PI * cls.p0 / (cls.lambda * cls.lambda) * tail
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub w1: f64,
    pub beta: f64,
    pub total_density: f64,
    pub gammas: Vec<f64>,
}

impl CostModel {
    pub fn new(w1: f64, total_density: f64, gammas: Vec<f64>) -> Result<Self> {
        let beta = normalization_beta(w1, total_density, gammas.iter().sum())?;
        Ok(CostModel {
            w1,
            beta,
            total_density,
            gammas,
        })
    }

    pub fn for_classes(w1: f64, total_density: f64, classes: &[AgentClass]) -> Result<Self> {
        Self::new(w1, total_density, classes.iter().map(AgentClass::gamma).collect())
    }

    /// `β Σ γ_i t_i`.
    pub fn cost(&self, t: &[f64]) -> f64 {
        self.beta * self.gammas.iter().zip(t).map(|(g, ti)| g * ti).sum::<f64>()
    }

    /// Convex-combination form `w1·H(s)/∫R − (1−w1)·Σγt/Σγ`.
    pub fn normalized(&self, coverage: f64, t: &[f64]) -> f64 {
        let sum_gamma: f64 = self.gammas.iter().sum();
        let spent: f64 = self.gammas.iter().zip(t).map(|(g, ti)| g * ti).sum();
        self.w1 * coverage / self.total_density - (1.0 - self.w1) * spent / sum_gamma
    }
}

/// `((1 - w1)/w1) · ∫R / Σγ`.
pub fn normalization_beta(w1: f64, total_density: f64, sum_gamma: f64) -> Result<f64> {
    if !(w1 > 0.0 && w1 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "w1 must lie in (0, 1], got {w1}"
        )));
    }
    if !(sum_gamma > 0.0) {
        return Err(Error::InvalidParameter(
            "sum of agent costs must be positive".into(),
        ));
    }
    Ok((1.0 - w1) / w1 * total_density / sum_gamma)
}

/// Positions, memberships and classes of a team.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamState {
    pub positions: Vec<Point>,
    pub memberships: Vec<f64>,
    pub classes: Vec<AgentClass>,
}

impl TeamState {
    pub fn new(positions: Vec<Point>, memberships: Vec<f64>, classes: Vec<AgentClass>) -> Result<Self> {
        if positions.len() != memberships.len() || positions.len() != classes.len() {
            return Err(Error::InvalidParameter(format!(
                "team arrays differ in length: {} positions, {} memberships, {} classes",
                positions.len(),
                memberships.len(),
                classes.len()
            )));
        }
        if let Some(t) = memberships.iter().find(|t| !(**t >= 0.0 && **t <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "membership {t} outside [0, 1]"
            )));
        }
        Ok(TeamState {
            positions,
            memberships,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn check_feasible(&self, space: &MissionSpace) -> Result<()> {
        for (index, p) in self.positions.iter().enumerate() {
            if !space.is_feasible(*p) {
                return Err(Error::InfeasibleAgent { index, point: *p });
            }
        }
        Ok(())
    }

    /// Agents whose membership rounds to 1.
    pub fn selected(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.memberships[i] >= 0.5).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let c = AgentClass::new(1.0, 0.012, 200.0, 1.0).unwrap();
        let s = Point::new(0.0, 0.0);
        assert_eq!(detection_probability(&c, s, s), 1.0);
        let p = detection_probability(&c, Point::new(200.0, 0.0), s);
        assert!((p - 0.0907180).abs() < 5e-8);
        let half = AgentClass::new(0.5, 0.012, 200.0, 1.0).unwrap();
        assert_eq!(detection_probability(&half, s, s), 0.5);
    }

    #[test]
    fn beta_cases() {
        assert_eq!(normalization_beta(0.5, 100.0, 10.0).unwrap(), 10.0);
        assert_eq!(normalization_beta(1.0, 100.0, 10.0).unwrap(), 0.0);
        assert!(normalization_beta(0.0, 100.0, 10.0).is_err());
        let b = normalization_beta(0.68, 360_000.0, 301_750.0).unwrap();
        assert!((b - 0.561).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_classes() {
        assert!(AgentClass::new(0.0, 0.01, 10.0, 1.0).is_err());
        assert!(AgentClass::new(1.1, 0.01, 10.0, 1.0).is_err());
        assert!(AgentClass::new(1.0, 0.0, 10.0, 1.0).is_err());
        assert!(AgentClass::new(1.0, 0.01, -1.0, 1.0).is_err());
        assert!(AgentClass::new(1.0, 0.01, 10.0, 1.607).is_ok());
    }

    #[test]
    fn capability_limits() {
        let tiny = AgentClass::new(1.0, 0.012, 1e-9, 1.0).unwrap();
        assert!(tiny.kappa() < 1e-12);
        let c = AgentClass::new(1.0, 0.012, 200.0, 0.5).unwrap();
        assert_eq!(c.gamma(), 0.5 * c.kappa());
    }
}
