//! Discrete-time world loop.
//!
//! Each tick: every visible, reactive agent evaluates its primitives on the
//! same frozen snapshot and decides; the chosen primitives are appended to the
//! agents' schedules; then all agents integrate forward one step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::agent_model::AgentKind;
use crate::control::{
    decide_deterministic, evaluate_primitives, step_accumulators, AccumulatorBank, Agent, DecisionContext, ModelConfig,
    MotorPrimitive,
};
use crate::error::{Result, SimError};
use crate::kinematics::{remaining_distance, AgentState, GoalSpec, Vec2};
use crate::scenarios::ScenarioSpec;

/// Speed an agent must exceed, and keep exceeding, for motion to count as a
/// crossing onset (m/s).
pub const ONSET_SPEED: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "t_see")]
pub enum Visibility {
    AlwaysVisible,
    /// Agents see each other from this time on (s).
    VisibleFrom(f64),
}

impl Visibility {
    pub fn t_see(&self) -> f64 {
        match *self {
            Visibility::AlwaysVisible => 0.0,
            Visibility::VisibleFrom(t) => t,
        }
    }

    fn visible_at(&self, t: f64) -> bool {
        t >= self.t_see() - 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Engine step (s).
    pub dt: f64,
    /// Hard cap on simulated time (s).
    pub t_max: f64,
    /// Tolerance distance defining a collision course in the lookahead (m).
    pub d_c: f64,
    /// Separation below which agents have collided (m).
    pub collision_distance: f64,
    /// Distance past the goal at which an agent is finished (m).
    pub goal_margin: f64,
    /// Record per-step margins and evidence in the log.
    pub debug: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dt: 0.05,
            t_max: 30.0,
            d_c: 1.0,
            collision_distance: 1.0,
            goal_margin: 2.0,
            debug: false,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0)
            || !(self.t_max > 0.0)
            || !(self.d_c > 0.0)
            || !(self.collision_distance > 0.0)
            || !(self.goal_margin >= 0.0)
        {
            return Err(SimError::config(format!("invalid world config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "seed")]
pub enum DecisionMode {
    Deterministic,
    Stochastic(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub time: f64,
    pub agent: usize,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub acceleration: f64,
    /// Magnitude of the primitive initiated at this instant.
    pub primitive: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub evidence: Option<Vec<f64>>,
}

/// Rows ordered by step, then agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub n_agents: usize,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn n_steps(&self) -> usize {
        self.rows.len().checked_div(self.n_agents).unwrap_or(0)
    }

    pub fn row(&self, step: usize, agent: usize) -> &LogRow {
        &self.rows[step * self.n_agents + agent]
    }

    pub fn agent_rows(&self, agent: usize) -> impl Iterator<Item = &LogRow> + '_ {
        self.rows.iter().skip(agent).step_by(self.n_agents.max(1))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.agent_rows(0).map(|r| r.time)
    }

    /// Speed of `agent` at the logged instant nearest to `t`.
    pub fn speed_at(&self, agent: usize, t: f64) -> Option<f64> {
        self.agent_rows(agent)
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .map(|r| r.speed)
    }

    /// Smallest pairwise distance over all logged steps.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for step in 0..self.n_steps() {
            for i in 0..self.n_agents {
                for j in (i + 1)..self.n_agents {
                    let (a, b) = (self.row(step, i), self.row(step, j));
                    best = best.min((a.x - b.x).hypot(a.y - b.y));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AllFinished,
    Collision,
    TimeLimit,
}

/// Per-agent facts extracted from a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub name: String,
    pub kind: AgentKind,
    pub origin: Vec2,
    pub heading: Vec2,
    pub initial_speed: f64,
    /// Distance from the start to the crossing point (m).
    pub crossing_distance: f64,
    /// Instant the agent reached the crossing point (s).
    pub crossing_time: Option<f64>,
    /// Start of sustained forward motion that lasts until the crossing (s).
    pub onset_time: Option<f64>,
    pub peak_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub crossing: Vec2,
    pub t_see: f64,
    pub d_c: f64,
    pub agents: Vec<AgentOutcome>,
    pub collision: bool,
    pub min_distance: f64,
    /// Agent indices in crossing order; agents that never crossed are omitted.
    pub pass_order: Vec<usize>,
    pub termination: Termination,
    pub end_time: f64,
    pub log: TrajectoryLog,
}

impl RunOutcome {
    pub fn agent_index(&self, kind: AgentKind) -> Option<usize> {
        self.agents.iter().position(|a| a.kind == kind)
    }

    /// State of `agent` at logged step `step`, rebuilt from the log.
    pub fn state_at(&self, step: usize, agent: usize) -> AgentState {
        let r = self.log.row(step, agent);
        AgentState {
            position: Vec2::new(r.x, r.y),
            speed: r.speed,
            acceleration: r.acceleration,
            heading: self.agents[agent].heading,
        }
    }

    /// Recompute every derived field from the log alone.
    pub fn from_log(
        crossing: Vec2,
        t_see: f64,
        d_c: f64,
        agents: Vec<AgentOutcome>,
        termination: Termination,
        log: TrajectoryLog,
    ) -> RunOutcome {
        let mut agents = agents;
        for (i, a) in agents.iter_mut().enumerate() {
            a.crossing_time = crossing_time(&log, i, a.origin, a.heading, a.crossing_distance);
            a.onset_time = onset_time(&log, i, a.crossing_time);
            a.peak_speed = log.agent_rows(i).map(|r| r.speed).fold(0.0, f64::max);
        }
        let min_distance = log.min_pairwise_distance();
        let mut pass_order: Vec<usize> = (0..agents.len())
            .filter(|&i| agents[i].crossing_time.is_some())
            .collect();
        pass_order.sort_by(|&i, &j| {
            agents[i]
                .crossing_time
                .unwrap()
                .total_cmp(&agents[j].crossing_time.unwrap())
                .then(i.cmp(&j))
        });
        let end_time = log.times().last().unwrap_or(0.0);
        RunOutcome {
            crossing,
            t_see,
            d_c,
            agents,
            collision: min_distance < d_c,
            min_distance,
            pass_order,
            termination,
            end_time,
            log,
        }
    }
}

fn progress_of(row: &LogRow, origin: Vec2, heading: Vec2) -> f64 {
    (Vec2::new(row.x, row.y) - origin).dot(heading)
}

fn crossing_time(log: &TrajectoryLog, agent: usize, origin: Vec2, heading: Vec2, target: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for row in log.agent_rows(agent) {
        let s = progress_of(row, origin, heading);
        if s >= target {
            return Some(match prev {
                Some((t0, s0)) if s > s0 => t0 + (row.time - t0) * (target - s0) / (s - s0),
                _ => row.time,
            });
        }
        prev = Some((row.time, s));
    }
    None
}

fn onset_time(log: &TrajectoryLog, agent: usize, until: Option<f64>) -> Option<f64> {
    let mut onset = None;
    for row in log.agent_rows(agent) {
        if until.is_some_and(|t| row.time > t) {
            break;
        }
        if row.speed > ONSET_SPEED {
            onset.get_or_insert(row.time);
        } else {
            onset = None;
        }
    }
    onset
}

fn build_agents(scenario: &ScenarioSpec, model: &ModelConfig) -> Result<Vec<Agent>> {
    scenario
        .agents
        .iter()
        .map(|spec| {
            Agent::new(
                spec.params,
                spec.position,
                spec.heading,
                spec.speed,
                GoalSpec { goal_point: spec.goal },
                model.delta_t,
            )
        })
        .collect()
}

fn is_finished(agent: &Agent, margin: f64) -> bool {
    agent.past_goal(margin) || (agent.past_goal(0.0) && agent.speed == 0.0)
}

/// Simulate one scenario to completion.
pub fn run(
    scenario: &ScenarioSpec,
    world: &WorldConfig,
    model: &ModelConfig,
    mode: DecisionMode,
) -> Result<RunOutcome> {
    world.validate()?;
    model.validate(world.dt)?;
    scenario.validate()?;

    let mut agents = build_agents(scenario, model)?;
    let n = agents.len();
    let mut banks: Vec<AccumulatorBank> = (0..n)
        .map(|_| AccumulatorBank::new(model.repertoire.len(), model.accumulator))
        .collect();
    let mut rng = match mode {
        DecisionMode::Stochastic(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        DecisionMode::Deterministic => None,
    };
    let mut noise = vec![0.0; model.repertoire.len()];

    let max_steps = (world.t_max / world.dt).round() as usize;
    let mut log = TrajectoryLog {
        n_agents: n,
        rows: Vec::with_capacity(n * (max_steps.min(1000) + 1)),
    };
    let visibility = scenario.visibility;
    let mut snapshot: Vec<AgentState> = Vec::with_capacity(n);
    let mut others: Vec<AgentState> = Vec::with_capacity(n.saturating_sub(1));
    let mut chosen: Vec<Option<MotorPrimitive>> = vec![None; n];

    let mut step = 0usize;
    let termination = loop {
        let now = step as f64 * world.dt;
        snapshot.clear();
        snapshot.extend(agents.iter().map(Agent::state));

        let ctx = DecisionContext {
            now,
            dt: world.dt,
            d_c: world.d_c,
            model,
        };
        for i in 0..n {
            chosen[i] = None;
            let spec = &scenario.agents[i];
            let mut debug = (None, None);
            if spec.reactive && visibility.visible_at(now) {
                others.clear();
                others.extend(snapshot.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| *s));
                let eval = evaluate_primitives(&agents[i], &others, &ctx);
                chosen[i] = match rng.as_mut() {
                    None => decide_deterministic(&eval),
                    Some(rng) => {
                        for z in noise.iter_mut() {
                            *z = StandardNormal.sample(rng);
                        }
                        step_accumulators(&mut banks[i], &eval, world.dt, &noise)
                    }
                };
                if world.debug {
                    debug = (Some(eval.deltas.clone()), Some(banks[i].evidence.clone()));
                }
            }
            let s = &snapshot[i];
            log.rows.push(LogRow {
                step,
                time: now,
                agent: i,
                x: s.position.x,
                y: s.position.y,
                speed: s.speed,
                acceleration: s.acceleration,
                primitive: chosen[i].map(|p| p.magnitude),
                deltas: debug.0,
                evidence: debug.1,
            });
        }

        if snapshot_min_distance(&snapshot) < world.collision_distance {
            break Termination::Collision;
        }
        if agents.iter().all(|a| is_finished(a, world.goal_margin)) {
            break Termination::AllFinished;
        }
        if step >= max_steps {
            break Termination::TimeLimit;
        }

        for (i, agent) in agents.iter_mut().enumerate() {
            if let Some(p) = chosen[i] {
                agent.initiate(now, p);
            }
            agent.advance(now, world.dt);
            if !agent.state().is_finite() {
                return Err(SimError::NumericFault {
                    step: step + 1,
                    agent: i,
                });
            }
        }
        step += 1;
    };

    let outcomes = agent_outcomes(scenario)?;

    Ok(RunOutcome::from_log(
        scenario.crossing,
        visibility.t_see(),
        world.collision_distance,
        outcomes,
        termination,
        log,
    ))
}

/// Per-agent outcome records with the event fields still empty.
pub fn agent_outcomes(scenario: &ScenarioSpec) -> Result<Vec<AgentOutcome>> {
    scenario
        .agents
        .iter()
        .map(|spec| {
            let crossing_distance = remaining_distance(
                &AgentState::moving(spec.position, spec.speed, spec.heading),
                scenario.crossing,
            )?;
            Ok(AgentOutcome {
                name: spec.name.clone(),
                kind: spec.params.kind,
                origin: spec.position,
                heading: spec.heading.normalized().unwrap_or(spec.heading),
                initial_speed: spec.speed,
                crossing_distance,
                crossing_time: None,
                onset_time: None,
                peak_speed: 0.0,
            })
        })
        .collect()
}

fn snapshot_min_distance(states: &[AgentState]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            best = best.min((states[i].position - states[j].position).norm());
        }
    }
    best
}
