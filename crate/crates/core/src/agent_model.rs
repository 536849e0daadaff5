//! Agent utility: goal progress, speed and acceleration discomfort, and the
//! collision terms for speed-controlled pedestrians and acceleration-controlled
//! vehicles.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kinematics::{AgentState, CollisionAssessment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Controls speed directly; collision cost `k_c / tau`.
    Pedestrian,
    /// Controls acceleration; collision cost `k_sc * a_sc²`.
    Vehicle,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Vehicle => "vehicle",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pedestrian" => Ok(AgentKind::Pedestrian),
            "vehicle" => Ok(AgentKind::Vehicle),
            other => Err(SimError::config(format!("unknown agent kind '{other}'"))),
        }
    }
}

/// Utility coefficients of one agent.
///
/// `collision_weight` is `k_c` for pedestrians and `k_sc` for vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub kind: AgentKind,
    pub k_g: f64,
    pub k_dv: f64,
    pub k_da: f64,
    pub collision_weight: f64,
}

impl UtilityParams {
    pub fn pedestrian(k_g: f64, k_dv: f64, k_da: f64, k_c: f64) -> Self {
        UtilityParams {
            kind: AgentKind::Pedestrian,
            k_g,
            k_dv,
            k_da,
            collision_weight: k_c,
        }
    }

    pub fn vehicle(k_g: f64, k_dv: f64, k_da: f64, k_sc: f64) -> Self {
        UtilityParams {
            kind: AgentKind::Vehicle,
            k_g,
            k_dv,
            k_da,
            collision_weight: k_sc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.k_g, self.k_dv, self.k_da, self.collision_weight];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SimError::config(format!(
                "utility weights must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }

    /// Multiply every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        UtilityParams {
            k_g: self.k_g * factor,
            k_dv: self.k_dv * factor,
            k_da: self.k_da * factor,
            collision_weight: self.collision_weight * factor,
            ..*self
        }
    }
}

/// Saturation applied to every collision cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquashConfig {
    /// Ceiling on a single collision cost; `f64::INFINITY` disables squashing.
    pub c_max: f64,
    /// Smallest time to collision used in a cost (s).
    pub tau_floor: f64,
}

impl Default for SquashConfig {
    fn default() -> Self {
        SquashConfig {
            c_max: 1e3,
            tau_floor: 0.01,
        }
    }
}

impl SquashConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_max > 0.0) || !(self.tau_floor > 0.0 && self.tau_floor.is_finite()) {
            return Err(SimError::config(format!("invalid squash config {self:?}")));
        }
        Ok(())
    }

    pub fn squash(&self, raw: f64) -> f64 {
        if self.c_max.is_infinite() {
            raw
        } else {
            self.c_max * raw / (self.c_max + raw)
        }
    }
}

/// Speed that maximizes utility when no collision is predicted.
pub fn free_speed(params: &UtilityParams) -> Result<f64> {
    if params.k_dv <= 0.0 {
        return Err(SimError::UnboundedFreeSpeed);
    }
    Ok(params.k_g / (2.0 * params.k_dv))
}

/// Unsquashed collision cost.
pub fn raw_collision_cost(params: &UtilityParams, tau: f64, predicted_v: f64) -> f64 {
    match params.kind {
        AgentKind::Pedestrian => params.collision_weight / tau,
        AgentKind::Vehicle => {
            // deceleration needed to stop before the conflict point
            let a_sc = predicted_v / (2.0 * tau);
            params.collision_weight * a_sc * a_sc
        }
    }
}

pub fn collision_cost(
    params: &UtilityParams,
    assessment: &CollisionAssessment,
    predicted_v: f64,
    squash: &SquashConfig,
) -> f64 {
    match (assessment.on_collision_course, assessment.tau) {
        (true, Some(tau)) => {
            let tau = tau.max(squash.tau_floor);
            squash.squash(raw_collision_cost(params, tau, predicted_v))
        }
        _ => 0.0,
    }
}

/// Utility of a predicted state.
///
/// The goal term rewards speed only while the agent has not yet passed its goal.
pub fn utility(
    params: &UtilityParams,
    predicted: &AgentState,
    goal_ahead: bool,
    assessments: &[CollisionAssessment],
    squash: &SquashConfig,
) -> f64 {
    let v = predicted.speed;
    let a = predicted.acceleration;
    let progress = if goal_ahead { params.k_g * v } else { 0.0 };
    let collisions: f64 = assessments.iter().map(|c| collision_cost(params, c, v, squash)).sum();
    progress - params.k_dv * v * v - params.k_da * a * a - collisions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Vec2;
    use approx::assert_relative_eq;

    fn far_goal() -> bool {
        true
    }

    fn at_speed(v: f64) -> AgentState {
        AgentState::moving(Vec2::ZERO, v, Vec2::new(1.0, 0.0))
    }

    #[test]
    fn free_speed_examples() {
        let p = UtilityParams::pedestrian(1.0, 0.38, 0.0, 1.0);
        assert_relative_eq!(free_speed(&p).unwrap(), 1.0 / 0.76);
        assert!((free_speed(&p).unwrap() - 1.3158).abs() < 1e-4);
        assert_relative_eq!(free_speed(&UtilityParams::pedestrian(1.0, 0.5, 0.0, 0.0)).unwrap(), 1.0);
        let veh = UtilityParams::vehicle(1.0, 0.036, 0.0, 0.0);
        assert!((free_speed(&veh).unwrap() - 13.9).abs() < 0.02);
    }

    #[test]
    fn free_speed_requires_speed_discomfort() {
        let p = UtilityParams::pedestrian(1.0, 0.0, 0.0, 1.0);
        assert!(matches!(free_speed(&p), Err(SimError::UnboundedFreeSpeed)));
    }

    #[test]
    fn collision_cost_examples() {
        let ped = UtilityParams::pedestrian(1.0, 0.38, 0.0, 1.0);
        let sq = SquashConfig::default();
        assert_eq!(collision_cost(&ped, &CollisionAssessment::CLEAR, 1.0, &sq), 0.0);

        let c = collision_cost(&ped, &CollisionAssessment::course(2.0, 2.0), 1.0, &sq);
        assert_relative_eq!(c, 1e3 * 0.5 / (1e3 + 0.5), epsilon = 1e-12);
        assert!((c - 0.49975).abs() < 1e-5);

        let veh = UtilityParams::vehicle(1.0, 0.036, 0.0, 1.0);
        let raw = raw_collision_cost(&veh, 2.5, 13.9);
        assert_relative_eq!(raw, (13.9f64 / 5.0).powi(2), epsilon = 1e-12);
        // same value through the stopping-distance form v²/2d
        let d = 34.75;
        assert_relative_eq!(raw, (13.9f64 * 13.9 / (2.0 * d)).powi(2), max_relative = 1e-9);
    }

    #[test]
    fn tau_floor_caps_near_collisions() {
        let ped = UtilityParams::pedestrian(1.0, 0.38, 0.0, 1.0);
        let sq = SquashConfig {
            c_max: f64::INFINITY,
            tau_floor: 0.01,
        };
        let c = collision_cost(&ped, &CollisionAssessment::course(1e-9, 0.0), 1.0, &sq);
        assert_relative_eq!(c, 100.0);
    }

    #[test]
    fn utility_examples() {
        let sq = SquashConfig::default();
        let p = UtilityParams::pedestrian(1.0, 0.38, 0.0, 1.0);
        assert_eq!(utility(&p, &at_speed(0.0), far_goal(), &[], &sq), 0.0);

        let v_free = free_speed(&p).unwrap();
        let u = utility(&p, &at_speed(v_free), far_goal(), &[], &sq);
        assert_relative_eq!(u, 1.0 / (4.0 * 0.38), epsilon = 1e-12);
        assert!((u - 0.6579).abs() < 1e-4);

        let no_squash = SquashConfig {
            c_max: f64::INFINITY,
            ..sq
        };
        let conflict = [CollisionAssessment::course(2.0, 2.0)];
        let u = utility(&p, &at_speed(1.0), far_goal(), &conflict, &no_squash);
        assert_relative_eq!(u, 0.12, epsilon = 1e-12);
    }

    #[test]
    fn goal_term_drops_after_passing_goal() {
        let p = UtilityParams::pedestrian(1.0, 0.38, 0.0, 1.0);
        let u = utility(&p, &at_speed(1.0), false, &[], &SquashConfig::default());
        assert_relative_eq!(u, -0.38);
    }

    #[test]
    fn acceleration_discomfort_enters_quadratically() {
        let p = UtilityParams::vehicle(1.0, 0.036, 0.5, 0.0);
        let mut s = at_speed(10.0);
        s.acceleration = 2.0;
        let u = utility(&p, &s, far_goal(), &[], &SquashConfig::default());
        assert_relative_eq!(u, 10.0 - 3.6 - 2.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(UtilityParams::pedestrian(1.0, -0.1, 0.0, 1.0).validate().is_err());
        assert!(UtilityParams::vehicle(1.0, 0.1, 0.0, f64::NAN).validate().is_err());
        assert!(SquashConfig {
            c_max: 0.0,
            tau_floor: 0.01
        }
        .validate()
        .is_err());
    }
}
