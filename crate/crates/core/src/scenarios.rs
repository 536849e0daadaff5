//! Scenario builders: pedestrian–pedestrian crossing (PP), crossing decision
//! (CD, deterministic and stochastic) and conflict resolution (CR, including
//! the assertive-vehicle encounter battery).
//!
//! All paths are straight and cross at right angles at the origin.

use serde::{Deserialize, Serialize};

use crate::agent_model::{AgentKind, UtilityParams};
use crate::engine::{Visibility, WorldConfig};
use crate::error::{Result, SimError};
use crate::kinematics::{remaining_distance, time_to_crossing_point, AgentState, Vec2, PATH_TOLERANCE};

pub const VEHICLE_SPEED: f64 = 13.9;
/// 50 km/h, the free speed of a vehicle with `k_dv = 0.036`; used by the
/// encounter battery.
pub const ENCOUNTER_VEHICLE_SPEED: f64 = 50.0 / 3.6;
pub const VEHICLE_K_DV: f64 = 0.036;
/// Vehicle acceleration-discomfort weight; bounds how hard a vehicle brakes.
pub const VEHICLE_K_DA: f64 = 1.4;
/// Vehicle speed-discomfort weight for the assertiveness battery.
pub const ASSERTIVE_VEHICLE_K_DV: f64 = 0.02;
/// Small acceleration discomfort of the assertive vehicle; with none, its
/// acceleration share jumps between roughly 22% and 94% as k_dv crosses the
/// initial-speed free speed.
pub const ASSERTIVE_VEHICLE_K_DA: f64 = 0.05;
pub const PP_DEFAULT_D0: f64 = 7.0;
pub const PP_GOAL_BEYOND: f64 = 4.0;
pub const CD_PEDESTRIAN_Y: f64 = -2.5;
pub const CR_PEDESTRIAN_Y: f64 = -5.0;
pub const CR_PEDESTRIAN_SPEED: f64 = 1.1;
pub const ASSERT_PEDESTRIAN_SPEED: f64 = 1.4;
pub const PEDESTRIAN_GOAL_BEYOND: f64 = 5.0;
pub const VEHICLE_GOAL_BEYOND: f64 = 10.0;
/// Arrival-time difference below which two agents form an encounter (s).
pub const ENCOUNTER_WINDOW: f64 = 1.0;
/// Pedestrian speed-discomfort weight in the crossing-decision scenario
/// (free speed 1 m/s).
pub const CD_PEDESTRIAN_K_DV: f64 = 0.5;
pub const CR_PEDESTRIAN_K_DV: f64 = 0.5;
/// Collision-course tolerance when a vehicle is involved (m).
pub const VEHICLE_COURSE_TOLERANCE: f64 = 2.25;
pub const STOCH_PEDESTRIAN: (f64, f64, f64) = (1.0, 0.38, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTag {
    Pp,
    Cd,
    CdStoch,
    Cr,
    CrAssert,
}

impl ScenarioTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::Pp => "pp",
            ScenarioTag::Cd => "cd",
            ScenarioTag::CdStoch => "cd_stoch",
            ScenarioTag::Cr => "cr",
            ScenarioTag::CrAssert => "cr_assert",
        }
    }
}

impl std::str::FromStr for ScenarioTag {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "pp" => ScenarioTag::Pp,
            "cd" => ScenarioTag::Cd,
            "cd_stoch" | "cd-stoch" => ScenarioTag::CdStoch,
            "cr" => ScenarioTag::Cr,
            "cr_assert" | "cr-assert" => ScenarioTag::CrAssert,
            other => return Err(SimError::config(format!("unknown scenario '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub position: Vec2,
    pub speed: f64,
    pub heading: Vec2,
    pub goal: Vec2,
    pub params: UtilityParams,
    /// Non-reactive agents never initiate primitives.
    pub reactive: bool,
}

impl AgentSpec {
    pub fn kind(&self) -> AgentKind {
        self.params.kind
    }

    pub fn initial_state(&self) -> AgentState {
        AgentState::moving(self.position, self.speed, self.heading)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub tag: ScenarioTag,
    pub crossing: Vec2,
    pub visibility: Visibility,
    pub agents: Vec<AgentSpec>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(SimError::config("scenario has no agents"));
        }
        for a in &self.agents {
            if !(a.speed >= 0.0) || !a.speed.is_finite() {
                return Err(SimError::config(format!(
                    "agent '{}' has invalid speed {}",
                    a.name, a.speed
                )));
            }
            a.params.validate()?;
            let state = AgentState::new(a.position, a.speed, 0.0, a.heading)?;
            remaining_distance(&state, self.crossing)
                .map_err(|e| SimError::config(format!("agent '{}': {e}", a.name)))?;
            let goal_lateral = (a.goal - a.position).cross(state.heading).abs();
            if goal_lateral > PATH_TOLERANCE {
                return Err(SimError::config(format!("agent '{}' goal is off its path", a.name)));
            }
        }
        Ok(())
    }

    pub fn agent(&self, name: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.name == name)
    }

    pub fn agent_mut(&mut self, name: &str) -> Option<&mut AgentSpec> {
        self.agents.iter_mut().find(|a| a.name == name)
    }

    /// Constant-speed arrival time of every agent at the crossing point.
    pub fn arrival_times(&self) -> Vec<Option<f64>> {
        self.agents
            .iter()
            .map(|a| time_to_crossing_point(&a.initial_state(), self.crossing).ok().flatten())
            .collect()
    }

    /// Absolute difference between the first two agents' arrival times.
    pub fn initial_time_gap(&self) -> Option<f64> {
        let t = self.arrival_times();
        match (t.first().copied().flatten(), t.get(1).copied().flatten()) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        }
    }
}

fn pedestrian(
    name: &str,
    position: Vec2,
    speed: f64,
    heading: Vec2,
    goal_beyond: f64,
    params: UtilityParams,
) -> AgentSpec {
    AgentSpec {
        name: name.to_string(),
        position,
        speed,
        heading,
        goal: heading * goal_beyond,
        params,
        reactive: true,
    }
}

fn vehicle_from_x(x: f64, speed: f64, k_dv: f64, k_da: f64, k_sc: f64) -> AgentSpec {
    AgentSpec {
        name: "vehicle".into(),
        position: Vec2::new(x, 0.0),
        speed,
        heading: Vec2::new(-1.0, 0.0),
        goal: Vec2::new(-VEHICLE_GOAL_BEYOND, 0.0),
        params: UtilityParams::vehicle(1.0, k_dv, k_da, k_sc),
        reactive: true,
    }
}

impl ScenarioTag {
    /// World defaults for this scenario family.
    pub fn default_world(self) -> WorldConfig {
        match self {
            ScenarioTag::Pp => WorldConfig::default(),
            _ => WorldConfig {
                d_c: VEHICLE_COURSE_TOLERANCE,
                ..WorldConfig::default()
            },
        }
    }
}

/// Geometry of the pedestrian–pedestrian scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpGeometry {
    /// Initial distance of each agent to the crossing point (m).
    pub d0: f64,
    /// Goal distance beyond the crossing point (m).
    pub goal_beyond: f64,
}

impl Default for PpGeometry {
    fn default() -> Self {
        PpGeometry {
            d0: PP_DEFAULT_D0,
            goal_beyond: PP_GOAL_BEYOND,
        }
    }
}

/// Initial speeds of the PP grid: 0.0, 0.1, ..., 0.9 m/s.
pub fn pp_speed_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

/// Two identical pedestrians on perpendicular paths; the run starts at t_see.
pub fn build_pp(speed_a: f64, speed_b: f64, k_dv: f64, k_c: f64, geometry: PpGeometry) -> Result<ScenarioSpec> {
    if speed_a < 0.0 || speed_b < 0.0 {
        return Err(SimError::config("initial speeds must be non-negative"));
    }
    if !(geometry.d0 > 0.0) {
        return Err(SimError::config("d0 must be positive"));
    }
    let params = UtilityParams::pedestrian(1.0, k_dv, 0.0, k_c);
    let x = Vec2::new(1.0, 0.0);
    let y = Vec2::new(0.0, 1.0);
    let spec = ScenarioSpec {
        tag: ScenarioTag::Pp,
        crossing: Vec2::ZERO,
        visibility: Visibility::AlwaysVisible,
        agents: vec![
            pedestrian("a", x * -geometry.d0, speed_a, x, geometry.goal_beyond, params),
            pedestrian("b", y * -geometry.d0, speed_b, y, geometry.goal_beyond, params),
        ],
    };
    spec.validate()?;
    Ok(spec)
}

/// Default single-run scenario of each family: the pedestrian pair of the
/// metric examples, the 2.16 s crossing-decision gap, the 4.58 s stochastic
/// gap, a 60 m conflict-resolution start and one encounter.
pub fn preset(tag: ScenarioTag) -> Result<ScenarioSpec> {
    match tag {
        ScenarioTag::Pp => build_pp(0.9, 0.5, 0.45, 2.0, PpGeometry::default()),
        ScenarioTag::Cd => build_cd(30.0, 1.0, 0.0),
        ScenarioTag::CdStoch => build_cd_stochastic(4.58),
        ScenarioTag::Cr => build_cr(60.0, 1.0, 1.0),
        ScenarioTag::CrAssert => build_cr_encounter(-7.0, 70.0, &AssertConfig::default()),
    }
}

/// Vehicle start positions of the crossing-decision scenario: 20..=100 m by 5 m.
pub fn cd_start_positions() -> Vec<f64> {
    (0..17).map(|i| 20.0 + 5.0 * i as f64).collect()
}

/// Vehicle start positions of the conflict-resolution scenario: 10..=100 m by 10 m.
pub fn cr_start_positions() -> Vec<f64> {
    (1..=10).map(|i| 10.0 * i as f64).collect()
}

pub fn cd_pedestrian_params(k_c: f64) -> UtilityParams {
    UtilityParams::pedestrian(1.0, CD_PEDESTRIAN_K_DV, 0.0, k_c)
}

/// Standing pedestrian 2.5 m before the road, vehicle approaching at 13.9 m/s.
pub fn build_cd(vehicle_x: f64, k_c: f64, k_sc: f64) -> Result<ScenarioSpec> {
    build_cd_with(vehicle_x, cd_pedestrian_params(k_c), k_sc)
}

pub fn build_cd_with(vehicle_x: f64, pedestrian_params: UtilityParams, k_sc: f64) -> Result<ScenarioSpec> {
    if !(vehicle_x > 0.0) {
        return Err(SimError::config("vehicle must start on the positive x axis"));
    }
    let y = Vec2::new(0.0, 1.0);
    let spec = ScenarioSpec {
        tag: ScenarioTag::Cd,
        crossing: Vec2::ZERO,
        visibility: Visibility::AlwaysVisible,
        agents: vec![
            pedestrian(
                "pedestrian",
                Vec2::new(0.0, CD_PEDESTRIAN_Y),
                0.0,
                y,
                PEDESTRIAN_GOAL_BEYOND,
                pedestrian_params,
            ),
            vehicle_from_x(vehicle_x, VEHICLE_SPEED, VEHICLE_K_DV, VEHICLE_K_DA, k_sc),
        ],
    };
    spec.validate()?;
    Ok(spec)
}

/// Crossing decision against a constant-speed vehicle `gap` seconds away.
pub fn build_cd_stochastic(gap: f64) -> Result<ScenarioSpec> {
    if !(gap > 0.0) {
        return Err(SimError::config("time gap must be positive"));
    }
    let (k_g, k_dv, k_c) = STOCH_PEDESTRIAN;
    let mut spec = build_cd_with(VEHICLE_SPEED * gap, UtilityParams::pedestrian(k_g, k_dv, 0.0, k_c), 0.0)?;
    spec.tag = ScenarioTag::CdStoch;
    spec.agents[1].reactive = false;
    Ok(spec)
}

pub fn cr_pedestrian_params(k_c: f64) -> UtilityParams {
    UtilityParams::pedestrian(1.0, CR_PEDESTRIAN_K_DV, 0.0, k_c)
}

/// Pedestrian walking at 1.1 m/s from 5 m before the road, free-speed vehicle.
pub fn build_cr(vehicle_x: f64, k_c: f64, k_sc: f64) -> Result<ScenarioSpec> {
    if !(vehicle_x > 0.0) {
        return Err(SimError::config("vehicle must start on the positive x axis"));
    }
    let y = Vec2::new(0.0, 1.0);
    let spec = ScenarioSpec {
        tag: ScenarioTag::Cr,
        crossing: Vec2::ZERO,
        visibility: Visibility::AlwaysVisible,
        agents: vec![
            pedestrian(
                "pedestrian",
                Vec2::new(0.0, CR_PEDESTRIAN_Y),
                CR_PEDESTRIAN_SPEED,
                y,
                PEDESTRIAN_GOAL_BEYOND,
                cr_pedestrian_params(k_c),
            ),
            vehicle_from_x(vehicle_x, VEHICLE_SPEED, VEHICLE_K_DV, VEHICLE_K_DA, k_sc),
        ],
    };
    spec.validate()?;
    Ok(spec)
}

/// Parameters of the assertive-vehicle encounter battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssertConfig {
    pub vehicle_k_dv: f64,
    pub vehicle_k_da: f64,
    pub vehicle_k_sc: f64,
    pub pedestrian_k_c: f64,
    pub pedestrian_k_dv: f64,
}

impl Default for AssertConfig {
    fn default() -> Self {
        AssertConfig {
            vehicle_k_dv: ASSERTIVE_VEHICLE_K_DV,
            vehicle_k_da: ASSERTIVE_VEHICLE_K_DA,
            vehicle_k_sc: 1.0,
            pedestrian_k_c: 1.0,
            pedestrian_k_dv: 0.38,
        }
    }
}

/// Evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn is_encounter(ped_arrival: f64, veh_arrival: f64) -> bool {
    (ped_arrival - veh_arrival).abs() < ENCOUNTER_WINDOW
}

/// The (pedestrian y, vehicle x) grid positions that form encounters.
pub fn encounter_positions() -> Vec<(f64, f64)> {
    let ys = linspace(-10.0, -5.0, 60);
    let xs = linspace(10.0, 79.0, 60);
    let mut out = Vec::new();
    for &y in &ys {
        for &x in &xs {
            if is_encounter(-y / ASSERT_PEDESTRIAN_SPEED, x / ENCOUNTER_VEHICLE_SPEED) {
                out.push((y, x));
            }
        }
    }
    out
}

pub fn build_cr_encounter(ped_y: f64, vehicle_x: f64, cfg: &AssertConfig) -> Result<ScenarioSpec> {
    let y = Vec2::new(0.0, 1.0);
    let spec = ScenarioSpec {
        tag: ScenarioTag::CrAssert,
        crossing: Vec2::ZERO,
        visibility: Visibility::AlwaysVisible,
        agents: vec![
            pedestrian(
                "pedestrian",
                Vec2::new(0.0, ped_y),
                ASSERT_PEDESTRIAN_SPEED,
                y,
                PEDESTRIAN_GOAL_BEYOND,
                UtilityParams::pedestrian(1.0, cfg.pedestrian_k_dv, 0.0, cfg.pedestrian_k_c),
            ),
            vehicle_from_x(
                vehicle_x,
                ENCOUNTER_VEHICLE_SPEED,
                cfg.vehicle_k_dv,
                cfg.vehicle_k_da,
                cfg.vehicle_k_sc,
            ),
        ],
    };
    spec.validate()?;
    Ok(spec)
}

/// Every encounter of the 60 × 60 position grid.
pub fn build_cr_assert(cfg: &AssertConfig) -> Result<Vec<ScenarioSpec>> {
    encounter_positions()
        .into_iter()
        .map(|(y, x)| build_cr_encounter(y, x, cfg))
        .collect()
}
