//! Motor primitives, control schedules, lookahead evaluation and action
//! selection (deterministic argmax or noisy evidence accumulation).
//!
//! Pedestrians control speed and vehicles control acceleration. A primitive
//! ramps the controlled value linearly by its magnitude over `delta_t` and
//! then holds; primitives initiated while others are still ramping add on top.

use serde::{Deserialize, Serialize};

use crate::agent_model::{utility, AgentKind, SquashConfig, UtilityParams};
use crate::error::{Result, SimError};
use crate::kinematics::{
    time_to_collision_with, AgentState, CollisionTime, GoalSpec, TtcOptions, Vec2, DEFAULT_HORIZON,
};

const TIME_EPS: f64 = 1e-9;
/// Two utility margins closer than this are treated as tied.
pub const TIE_EPS: f64 = 1e-12;

pub const DEFAULT_MAGNITUDES: [f64; 5] = [0.0, -1.0, -0.5, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorPrimitive {
    /// Position in the repertoire; 0 is the null primitive.
    pub index: usize,
    /// Speed change (m/s) for pedestrians, acceleration change (m/s²) for vehicles.
    pub magnitude: f64,
}

impl MotorPrimitive {
    pub fn is_null(&self) -> bool {
        self.index == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repertoire {
    magnitudes: Vec<f64>,
}

impl Default for Repertoire {
    fn default() -> Self {
        Repertoire {
            magnitudes: DEFAULT_MAGNITUDES.to_vec(),
        }
    }
}

impl Repertoire {
    /// `magnitudes[0]` must be the null primitive (0.0).
    pub fn new(magnitudes: Vec<f64>) -> Result<Self> {
        if magnitudes.first() != Some(&0.0) {
            return Err(SimError::config("repertoire must start with the null primitive"));
        }
        if magnitudes.iter().any(|m| !m.is_finite()) {
            return Err(SimError::config("repertoire magnitudes must be finite"));
        }
        Ok(Repertoire { magnitudes })
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn get(&self, index: usize) -> MotorPrimitive {
        MotorPrimitive {
            index,
            magnitude: self.magnitudes[index],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = MotorPrimitive> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub magnitude: f64,
}

impl Ramp {
    fn contribution(&self, t: f64, duration: f64) -> f64 {
        self.magnitude * ((t - self.start) / duration).clamp(0.0, 1.0)
    }
}

/// Superposition of initiated primitives on top of a base control value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub base_value: f64,
    pub ramp_duration: f64,
    pub ramps: Vec<Ramp>,
}

impl ControlSchedule {
    pub fn new(base_value: f64, ramp_duration: f64) -> Self {
        ControlSchedule {
            base_value,
            ramp_duration,
            ramps: Vec::new(),
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.base_value
            + self
                .ramps
                .iter()
                .map(|r| r.contribution(t, self.ramp_duration))
                .sum::<f64>()
    }

    pub fn push(&mut self, start: f64, magnitude: f64) {
        self.ramps.push(Ramp { start, magnitude });
    }

    /// Move finished ramps into the base value.
    pub fn fold_completed(&mut self, t: f64) {
        let duration = self.ramp_duration;
        let mut base = self.base_value;
        self.ramps.retain(|r| {
            let done = t - r.start >= duration - TIME_EPS;
            if done {
                base += r.magnitude;
            }
            !done
        });
        self.base_value = base;
    }

    pub fn is_settled(&self) -> bool {
        self.ramps.is_empty()
    }
}

/// How a predicted state is extrapolated when searching for collisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    ConstantVelocity,
    ConstantAcceleration,
    #[default]
    /// Hold whatever the agent controls: speed for pedestrians, acceleration
    /// for vehicles. Observed agents are treated as constant velocity.
    HeldControl,
}

impl Extrapolation {
    fn holds_acceleration(self, kind: AgentKind) -> bool {
        match self {
            Extrapolation::ConstantVelocity => false,
            Extrapolation::ConstantAcceleration => true,
            Extrapolation::HeldControl => kind == AgentKind::Vehicle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorConfig {
    /// Noise scale σ.
    pub sigma: f64,
    /// Trigger threshold E_a.
    pub threshold: f64,
    /// Low-pass time constant T (s).
    pub time_constant: f64,
}

impl Default for AccumulatorConfig {
    fn default() -> Self {
        AccumulatorConfig {
            sigma: 0.3,
            threshold: 0.5,
            time_constant: 0.4,
        }
    }
}

impl AccumulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.threshold > 0.0) || !(self.time_constant > 0.0) {
            return Err(SimError::config(format!("invalid accumulator config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Primitive duration ΔT (s).
    pub delta_t: f64,
    /// Prediction horizon T_p (s).
    pub t_p: f64,
    /// Collision-search horizon (s).
    pub horizon: f64,
    pub squash: SquashConfig,
    pub collision_time: CollisionTime,
    /// Extrapolation of the agent's own predicted state in the collision search.
    pub self_motion: Extrapolation,
    /// Extrapolation of the other agents.
    pub other_motion: Extrapolation,
    pub repertoire: Repertoire,
    pub accumulator: AccumulatorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            delta_t: 0.3,
            t_p: 0.3,
            horizon: DEFAULT_HORIZON,
            squash: SquashConfig::default(),
            collision_time: CollisionTime::FirstEntry,
            self_motion: Extrapolation::HeldControl,
            other_motion: Extrapolation::ConstantVelocity,
            repertoire: Repertoire::default(),
            accumulator: AccumulatorConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.delta_t > 0.0) || !(self.t_p > 0.0) || !(self.horizon > 0.0) {
            return Err(SimError::config("delta_t, t_p and horizon must be positive"));
        }
        for (name, span) in [("delta_t", self.delta_t), ("t_p", self.t_p)] {
            let ratio = span / dt;
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(SimError::config(format!(
                    "engine step {dt} s does not divide {name} = {span} s"
                )));
            }
        }
        self.squash.validate()?;
        self.accumulator.validate()
    }
}

/// Advance one step under a control value varying linearly from `cmd0` to `cmd1`.
///
/// Returns (distance, end speed, mean acceleration over the step, rebase) where
/// `rebase` lifts a negative command back to zero once the agent is at rest.
fn integrate_step(kind: AgentKind, speed: f64, cmd0: f64, cmd1: f64, dt: f64) -> (f64, f64, f64, f64) {
    match kind {
        AgentKind::Pedestrian => {
            let v0 = cmd0.max(0.0);
            let v1 = cmd1.max(0.0);
            let dist = if cmd0 >= 0.0 && cmd1 >= 0.0 {
                0.5 * (cmd0 + cmd1) * dt
            } else if cmd0 <= 0.0 && cmd1 <= 0.0 {
                0.0
            } else {
                // only the positive part of the linear profile moves the agent
                let hi = cmd0.max(cmd1);
                let frac = hi / (cmd0 - cmd1).abs();
                0.5 * hi * frac * dt
            };
            let rebase = if cmd1 < 0.0 { -cmd1 } else { 0.0 };
            (dist, v1, (v1 - v0) / dt, rebase)
        }
        AgentKind::Vehicle => {
            let dv = 0.5 * (cmd0 + cmd1) * dt;
            let v1 = speed + dv;
            if v1 >= 0.0 {
                let dist = speed * dt + dt * dt * (cmd0 / 3.0 + cmd1 / 6.0);
                (dist.max(0.0), v1, 0.5 * (cmd0 + cmd1), 0.0)
            } else {
                let decel = -0.5 * (cmd0 + cmd1);
                let dist = speed * speed / (2.0 * decel);
                let rebase = if cmd1 < 0.0 { -cmd1 } else { 0.0 };
                (dist, 0.0, 0.5 * (cmd0 + cmd1), rebase)
            }
        }
    }
}

/// One moving agent: path geometry, kinematic state and control schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub params: UtilityParams,
    pub origin: Vec2,
    pub heading: Vec2,
    pub goal: GoalSpec,
    /// Distance travelled from `origin` along `heading` (m).
    pub progress: f64,
    pub speed: f64,
    /// Acceleration over the most recent step (m/s²).
    pub acceleration: f64,
    pub schedule: ControlSchedule,
}

impl Agent {
    /// A fresh agent holding `speed`; vehicles start with zero acceleration.
    pub fn new(
        params: UtilityParams,
        origin: Vec2,
        heading: Vec2,
        speed: f64,
        goal: GoalSpec,
        ramp_duration: f64,
    ) -> Result<Self> {
        params.validate()?;
        let state = AgentState::new(origin, speed, 0.0, heading)?;
        let base = match params.kind {
            AgentKind::Pedestrian => speed,
            AgentKind::Vehicle => 0.0,
        };
        Ok(Agent {
            params,
            origin,
            heading: state.heading,
            goal,
            progress: 0.0,
            speed,
            acceleration: 0.0,
            schedule: ControlSchedule::new(base, ramp_duration),
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.params.kind
    }

    pub fn position(&self) -> Vec2 {
        self.origin + self.heading * self.progress
    }

    pub fn state(&self) -> AgentState {
        AgentState {
            position: self.position(),
            speed: self.speed,
            acceleration: self.acceleration,
            heading: self.heading,
        }
    }

    /// Control value currently commanded (speed or acceleration).
    pub fn command_at(&self, t: f64) -> f64 {
        self.schedule.value_at(t)
    }

    pub fn initiate(&mut self, now: f64, primitive: MotorPrimitive) {
        if !primitive.is_null() {
            self.schedule.push(now, primitive.magnitude);
        }
    }

    /// Integrate from `now` to `now + dt` under the schedule.
    pub fn advance(&mut self, now: f64, dt: f64) {
        let cmd0 = self.schedule.value_at(now);
        let cmd1 = self.schedule.value_at(now + dt);
        let (dist, v1, accel, rebase) = integrate_step(self.kind(), self.speed, cmd0, cmd1, dt);
        self.progress += dist;
        self.speed = v1;
        self.acceleration = accel;
        self.schedule.base_value += rebase;
        self.schedule.fold_completed(now + dt);
    }

    /// State after `span` seconds if `extra` is initiated now on top of the
    /// current schedule.
    pub fn predict(&self, now: f64, extra: Option<MotorPrimitive>, span: f64, dt: f64) -> AgentState {
        let extra = extra.filter(|p| !p.is_null()).map(|p| Ramp {
            start: now,
            magnitude: p.magnitude,
        });
        let duration = self.schedule.ramp_duration;
        let command =
            |t: f64, shift: f64| self.schedule.value_at(t) + shift + extra.map_or(0.0, |r| r.contribution(t, duration));
        let steps = (span / dt).round().max(1.0) as usize;
        let (mut progress, mut speed, mut accel, mut shift) = (self.progress, self.speed, self.acceleration, 0.0);
        for k in 0..steps {
            let t0 = now + k as f64 * dt;
            let (dist, v1, a, rebase) =
                integrate_step(self.kind(), speed, command(t0, shift), command(t0 + dt, shift), dt);
            progress += dist;
            speed = v1;
            accel = a;
            shift += rebase;
        }
        AgentState {
            position: self.origin + self.heading * progress,
            speed,
            acceleration: accel,
            heading: self.heading,
        }
    }

    /// Whether the agent has moved beyond its goal along its path.
    pub fn past_goal(&self, margin: f64) -> bool {
        (self.position() - self.goal.goal_point).dot(self.heading) > margin
    }
}

/// Predicted utilities of every primitive in the repertoire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEvaluation {
    pub primitives: Vec<MotorPrimitive>,
    pub utilities: Vec<f64>,
    pub baseline: f64,
    /// `utilities[m] - baseline`; the null entry is exactly zero.
    pub deltas: Vec<f64>,
}

impl ActionEvaluation {
    pub fn from_utilities(primitives: Vec<MotorPrimitive>, utilities: Vec<f64>) -> Self {
        let null = primitives
            .iter()
            .position(MotorPrimitive::is_null)
            .expect("repertoire contains the null primitive");
        let baseline = utilities[null];
        let deltas = utilities
            .iter()
            .zip(&primitives)
            .map(|(u, p)| if p.is_null() { 0.0 } else { u - baseline })
            .collect();
        ActionEvaluation {
            primitives,
            utilities,
            baseline,
            deltas,
        }
    }

    /// Build from a margin vector directly, with the null primitive at index 0.
    pub fn from_deltas(magnitudes: &[f64], deltas: &[f64]) -> Self {
        let primitives: Vec<_> = magnitudes
            .iter()
            .enumerate()
            .map(|(index, &magnitude)| MotorPrimitive { index, magnitude })
            .collect();
        ActionEvaluation::from_utilities(primitives, deltas.to_vec())
    }
}

/// Everything about the current tick that the lookahead needs.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub now: f64,
    pub dt: f64,
    pub d_c: f64,
    pub model: &'a ModelConfig,
}

fn predict_other(other: &AgentState, span: f64, motion: Extrapolation) -> AgentState {
    match motion {
        Extrapolation::ConstantAcceleration => crate::kinematics::extrapolate(other, span),
        _ => crate::kinematics::extrapolate(&other.at_constant_velocity(), span).at_constant_velocity(),
    }
}

/// Look `t_p` ahead under every primitive and score the predicted states.
pub fn evaluate_primitives(agent: &Agent, others: &[AgentState], ctx: &DecisionContext) -> ActionEvaluation {
    let model = ctx.model;
    let opts = TtcOptions {
        d_c: ctx.d_c,
        horizon: model.horizon,
        scan_step: ctx.dt,
        rule: model.collision_time,
    };
    let predicted_others: Vec<AgentState> = others
        .iter()
        .map(|o| predict_other(o, model.t_p, model.other_motion))
        .collect();

    let primitives: Vec<MotorPrimitive> = model.repertoire.iter().collect();
    let goal_ahead = !agent.past_goal(0.0);
    let mut assessments = Vec::with_capacity(predicted_others.len());
    let utilities = primitives
        .iter()
        .map(|&prim| {
            let predicted = agent.predict(ctx.now, Some(prim), model.t_p, ctx.dt);
            let probe = if model.self_motion.holds_acceleration(agent.params.kind) {
                predicted
            } else {
                predicted.at_constant_velocity()
            };
            assessments.clear();
            assessments.extend(
                predicted_others
                    .iter()
                    .map(|o| time_to_collision_with(&probe, o, &opts)),
            );
            utility(&agent.params, &predicted, goal_ahead, &assessments, &model.squash)
        })
        .collect();
    ActionEvaluation::from_utilities(primitives, utilities)
}

/// `a` beats `b` among equal margins: smaller magnitude first, then negative.
fn tie_preferred(a: &MotorPrimitive, b: &MotorPrimitive) -> bool {
    let (ma, mb) = (a.magnitude.abs(), b.magnitude.abs());
    if ma != mb {
        return ma < mb;
    }
    a.magnitude < b.magnitude
}

fn best_by(primitives: &[MotorPrimitive], scores: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..primitives.len() {
        if primitives[i].is_null() || !eligible(i) {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let (si, sj) = (scores[i], scores[j]);
                if si > sj + TIE_EPS || ((si - sj).abs() <= TIE_EPS && tie_preferred(&primitives[i], &primitives[j])) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

/// Highest positive margin wins; `None` when no primitive improves on doing nothing.
pub fn decide_deterministic(eval: &ActionEvaluation) -> Option<MotorPrimitive> {
    best_by(&eval.primitives, &eval.deltas, |i| eval.deltas[i] > 0.0).map(|i| eval.primitives[i])
}

/// Per-primitive evidence for noisy action triggering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorBank {
    /// Evidence per repertoire entry; the null entry stays at zero.
    pub evidence: Vec<f64>,
    pub config: AccumulatorConfig,
}

impl AccumulatorBank {
    pub fn new(repertoire_len: usize, config: AccumulatorConfig) -> Self {
        AccumulatorBank {
            evidence: vec![0.0; repertoire_len],
            config,
        }
    }

    pub fn reset(&mut self) {
        self.evidence.iter_mut().for_each(|e| *e = 0.0);
    }
}

/// Low-pass the margins with additive noise; fire the strongest accumulator
/// above threshold and reset the bank.
///
/// `noise` holds one standard-normal draw per repertoire entry (the null
/// entry's draw is ignored).
pub fn step_accumulators(
    bank: &mut AccumulatorBank,
    eval: &ActionEvaluation,
    dt: f64,
    noise: &[f64],
) -> Option<MotorPrimitive> {
    let AccumulatorConfig {
        sigma,
        threshold,
        time_constant,
    } = bank.config;
    let noise_scale = sigma * dt.sqrt();
    for (i, prim) in eval.primitives.iter().enumerate() {
        if prim.is_null() {
            continue;
        }
        let e = bank.evidence[i];
        let rate = (eval.deltas[i] - e) / time_constant;
        bank.evidence[i] = e + rate * dt + noise_scale * noise[i];
    }
    let fired = best_by(&eval.primitives, &bank.evidence, |i| bank.evidence[i] > threshold);
    fired.map(|i| {
        bank.reset();
        eval.primitives[i]
    })
}
