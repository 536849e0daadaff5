//! Point-agent geometry and constant-state extrapolation.
//!
//! Every agent moves along a straight line given by its heading. Predictions
//! assume the agent keeps its current speed and acceleration, with motion
//! stopping at the instant speed reaches zero.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Default collision-search horizon (s).
pub const DEFAULT_HORIZON: f64 = 20.0;
/// Bisection tolerance for collision times under nonzero acceleration (s).
pub const BISECTION_TOL: f64 = 1e-4;
/// Sampling step used to bracket the first entry when accelerations are nonzero (s).
pub const DEFAULT_SCAN_STEP: f64 = 0.05;
/// Lateral tolerance when checking that a crossing point lies on a path (m).
pub const PATH_TOLERANCE: f64 = 1e-6;

/// Stand-in for a collision time of "right now" when the agents already overlap.
const IMMEDIATE: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate counter-clockwise by `angle` radians.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Kinematic state of one agent at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    /// m/s, never negative.
    pub speed: f64,
    /// m/s², along the heading.
    pub acceleration: f64,
    /// Unit vector.
    pub heading: Vec2,
}

impl AgentState {
    pub fn new(position: Vec2, speed: f64, acceleration: f64, heading: Vec2) -> Result<Self> {
        if !position.is_finite() || !speed.is_finite() || !acceleration.is_finite() {
            return Err(SimError::config("agent state must be finite"));
        }
        if speed < 0.0 {
            return Err(SimError::config(format!("negative speed {speed}")));
        }
        let heading = heading
            .normalized()
            .ok_or_else(|| SimError::config("heading must be a nonzero direction"))?;
        Ok(AgentState {
            position,
            speed,
            acceleration,
            heading,
        })
    }

    /// Shorthand for a constant-speed state; panics on an invalid heading.
    pub fn moving(position: Vec2, speed: f64, heading: Vec2) -> Self {
        AgentState::new(position, speed, 0.0, heading).expect("valid constant-speed state")
    }

    pub fn velocity(&self) -> Vec2 {
        self.heading * self.speed
    }

    /// Same state with the acceleration dropped.
    pub fn at_constant_velocity(mut self) -> Self {
        self.acceleration = 0.0;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.speed.is_finite() && self.acceleration.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub goal_point: Vec2,
}

/// Result of a collision-course check between two extrapolated agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionAssessment {
    pub on_collision_course: bool,
    /// Time to collision (s); only meaningful on a collision course.
    pub tau: Option<f64>,
    /// Distance the first agent covers before the collision (m).
    pub dist_to_conflict: Option<f64>,
}

impl CollisionAssessment {
    pub const CLEAR: CollisionAssessment = CollisionAssessment {
        on_collision_course: false,
        tau: None,
        dist_to_conflict: None,
    };

    pub fn course(tau: f64, dist_to_conflict: f64) -> Self {
        CollisionAssessment {
            on_collision_course: true,
            tau: Some(tau),
            dist_to_conflict: Some(dist_to_conflict),
        }
    }
}

/// Which instant counts as "the collision" once a collision course is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionTime {
    /// First time the separation drops below the tolerance distance.
    #[default]
    FirstEntry,
    /// Time of the smallest separation, provided it is below the tolerance.
    ClosestApproach,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtcOptions {
    pub d_c: f64,
    pub horizon: f64,
    /// Bracketing step for accelerating agents.
    pub scan_step: f64,
    pub rule: CollisionTime,
}

impl TtcOptions {
    pub fn new(d_c: f64, horizon: f64) -> Self {
        TtcOptions {
            d_c,
            horizon,
            scan_step: DEFAULT_SCAN_STEP,
            rule: CollisionTime::FirstEntry,
        }
    }
}

/// Advance a state by `dt` at constant acceleration, stopping at zero speed.
pub fn extrapolate(state: &AgentState, dt: f64) -> AgentState {
    let travelled = travelled_distance(state.speed, state.acceleration, dt);
    let speed = (state.speed + state.acceleration * dt).max(0.0);
    AgentState {
        position: state.position + state.heading * travelled,
        speed,
        ..*state
    }
}

/// Distance covered in `dt` starting at speed `v` under acceleration `a`,
/// with motion ending when speed reaches zero.
pub fn travelled_distance(v: f64, a: f64, dt: f64) -> f64 {
    if dt <= 0.0 {
        return 0.0;
    }
    if a < 0.0 {
        let stop = v / -a;
        if stop <= dt {
            return v * v / (2.0 * -a);
        }
    }
    v * dt + 0.5 * a * dt * dt
}

/// Earliest time within the horizon at which the two agents come closer
/// than `d_c`, with both extrapolated at constant state.
pub fn time_to_collision(
    self_state: &AgentState,
    other_state: &AgentState,
    d_c: f64,
    horizon: f64,
) -> CollisionAssessment {
    time_to_collision_with(self_state, other_state, &TtcOptions::new(d_c, horizon))
}

pub fn time_to_collision_with(
    self_state: &AgentState,
    other_state: &AgentState,
    opts: &TtcOptions,
) -> CollisionAssessment {
    let tau = if self_state.acceleration == 0.0 && other_state.acceleration == 0.0 {
        constant_velocity_collision(self_state, other_state, opts)
    } else {
        scanned_collision(self_state, other_state, opts)
    };
    match tau {
        Some(tau) => {
            let dist = travelled_distance(self_state.speed, self_state.acceleration, tau);
            CollisionAssessment::course(tau, dist)
        }
        None => CollisionAssessment::CLEAR,
    }
}

fn constant_velocity_collision(a: &AgentState, b: &AgentState, opts: &TtcOptions) -> Option<f64> {
    let r = b.position - a.position;
    let u = b.velocity() - a.velocity();
    let d2 = opts.d_c * opts.d_c;
    let c = r.norm_sq() - d2;
    let qa = u.norm_sq();
    let qb = r.dot(u);

    match opts.rule {
        CollisionTime::FirstEntry => {
            if c < 0.0 {
                return Some(IMMEDIATE);
            }
            if qa == 0.0 {
                return None;
            }
            // q(t) = qa t² + 2 qb t + c; distinct roots needed for the separation to dip below d_c
            let disc = qb * qb - qa * c;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            // numerically stable smaller root
            let t1 = if qb < 0.0 { c / (-qb + sq) } else { (-qb - sq) / qa };
            if t1 < 0.0 {
                return None;
            }
            let t1 = t1.max(IMMEDIATE);
            (t1 <= opts.horizon).then_some(t1)
        }
        CollisionTime::ClosestApproach => {
            let t_star = if qa == 0.0 { 0.0 } else { (-qb / qa).max(0.0) };
            if t_star > opts.horizon {
                return None;
            }
            let closest = (r + u * t_star).norm_sq();
            (closest < d2).then_some(t_star.max(IMMEDIATE))
        }
    }
}

fn separation(a: &AgentState, b: &AgentState, t: f64) -> f64 {
    (extrapolate(b, t).position - extrapolate(a, t).position).norm()
}

/// Largest speed reached within `horizon` at constant acceleration.
fn speed_bound(s: &AgentState, horizon: f64) -> f64 {
    s.speed.max(s.speed + s.acceleration * horizon).max(0.0)
}

fn scanned_collision(a: &AgentState, b: &AgentState, opts: &TtcOptions) -> Option<f64> {
    let step = opts.scan_step.min(opts.horizon).max(1e-6);
    let n = (opts.horizon / step).ceil() as usize;
    let mut prev_t = 0.0;
    let inside_now = separation(a, b, 0.0) < opts.d_c;

    match opts.rule {
        CollisionTime::FirstEntry => {
            if inside_now {
                return Some(IMMEDIATE);
            }
            // Skip ahead by the time the agents need to close the current
            // margin at their top speeds. A floor of one scan step would jump
            // over brief grazing dips, so only the bisection tolerance bounds it.
            let closing = speed_bound(a, opts.horizon) + speed_bound(b, opts.horizon);
            let mut margin = separation(a, b, 0.0) - opts.d_c;
            while prev_t < opts.horizon {
                let skip = if closing > 0.0 { margin / closing } else { f64::INFINITY };
                let t = (prev_t + skip.max(BISECTION_TOL)).min(opts.horizon);
                let d = separation(a, b, t);
                if d < opts.d_c {
                    let (mut lo, mut hi) = (prev_t, t);
                    while hi - lo > BISECTION_TOL {
                        let mid = 0.5 * (lo + hi);
                        if separation(a, b, mid) < opts.d_c {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return Some(hi);
                }
                margin = d - opts.d_c;
                prev_t = t;
            }
            None
        }
        CollisionTime::ClosestApproach => {
            let mut best = (0.0, separation(a, b, 0.0));
            for k in 1..=n {
                let t = (k as f64 * step).min(opts.horizon);
                let d = separation(a, b, t);
                if d < best.1 {
                    best = (t, d);
                }
            }
            if best.1 >= opts.d_c {
                return None;
            }
            // golden-section polish inside the bracketing samples
            let (mut lo, mut hi) = ((best.0 - step).max(0.0), (best.0 + step).min(opts.horizon));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            while hi - lo > BISECTION_TOL {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if separation(a, b, m1) < separation(a, b, m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            Some((0.5 * (lo + hi)).max(IMMEDIATE))
        }
    }
}

/// Smallest future separation when both agents keep their current velocity.
pub fn minimal_predicted_distance(a: &AgentState, b: &AgentState) -> f64 {
    let r = b.position - a.position;
    let u = b.velocity() - a.velocity();
    let qa = u.norm_sq();
    if qa == 0.0 {
        return r.norm();
    }
    let t_star = (-r.dot(u) / qa).max(0.0);
    (r + u * t_star).norm()
}

/// Time for the agent to reach `crossing` at its current speed.
///
/// `None` when the agent is at rest or already past the point.
pub fn time_to_crossing_point(state: &AgentState, crossing: Vec2) -> Result<Option<f64>> {
    let along = remaining_distance(state, crossing)?;
    if along < 0.0 || state.speed <= 0.0 {
        return Ok(None);
    }
    Ok(Some(along / state.speed))
}

/// Signed distance still to travel to `crossing` along the heading.
pub fn remaining_distance(state: &AgentState, crossing: Vec2) -> Result<f64> {
    let d = crossing - state.position;
    let lateral = d.cross(state.heading).abs();
    if lateral > PATH_TOLERANCE {
        return Err(SimError::OffPath { lateral });
    }
    Ok(d.dot(state.heading))
}
