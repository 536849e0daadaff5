//! Behavioral criteria and classifiers computed from finished runs.

use serde::{Deserialize, Serialize};

use crate::agent_model::AgentKind;
use crate::engine::RunOutcome;
use crate::error::{Result, SimError};
use crate::kinematics::minimal_predicted_distance;

/// Delay after t_see at which speed changes are read (s).
pub const T_A: f64 = 0.5;
/// Speed changes smaller than this are ignored by FPA/SPD/FPD/SPA (m/s).
pub const SPEED_DEADBAND: f64 = 1e-6;
/// Speed drop below the initial speed that counts as yielding (m/s).
pub const YIELD_SPEED_DROP: f64 = 0.05;
/// Deceleration that counts as yielding when sustained (m/s²).
pub const YIELD_DECELERATION: f64 = 0.05;
/// Speed gain over the initial speed that counts as accelerating (m/s).
pub const ASSERT_SPEED_GAIN: f64 = 0.1;
/// Default bin width of response histograms (s).
pub const HISTOGRAM_BIN: f64 = 0.25;

/// Booleans of one pedestrian–pedestrian run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPMetrics {
    /// False when both agents were equally far in time from the crossing at
    /// t_see; then only `co` is meaningful.
    pub applicable: bool,
    pub lead_agent: Option<usize>,
    pub lapf: bool,
    pub fpa: bool,
    pub spd: bool,
    pub fpd: bool,
    pub spa: bool,
    pub co: bool,
    pub mpd_at_tsee: f64,
    /// MPD at the last step before the first agent reached the crossing.
    pub mpd_at_tcross: Option<f64>,
    /// Which agents reached the crossing point.
    pub crossed: Vec<bool>,
}

fn step_at(outcome: &RunOutcome, t: f64) -> usize {
    outcome
        .log
        .times()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map_or(0, |(k, _)| k)
}

fn constant_speed_arrival(outcome: &RunOutcome, agent: usize, step: usize) -> f64 {
    let a = &outcome.agents[agent];
    let s = outcome.state_at(step, agent);
    let remaining = a.crossing_distance - (s.position - a.origin).dot(a.heading);
    if remaining <= 0.0 {
        0.0
    } else if s.speed <= 0.0 {
        f64::INFINITY
    } else {
        remaining / s.speed
    }
}

pub fn pp_metrics(outcome: &RunOutcome, t_a: f64) -> PPMetrics {
    let crossed: Vec<bool> = outcome.agents.iter().map(|a| a.crossing_time.is_some()).collect();
    let co = outcome.collision;
    let series = mpd_series(outcome);
    let mpd_at_tsee = series.first().map(|p| p.1).unwrap_or(f64::NAN);
    let mpd_at_tcross = if crossed.iter().any(|c| *c) {
        series.last().map(|p| p.1)
    } else {
        None
    };

    let see = step_at(outcome, outcome.t_see);
    let (ta, tb) = (
        constant_speed_arrival(outcome, 0, see),
        constant_speed_arrival(outcome, 1, see),
    );
    let lead = if ta < tb {
        Some(0)
    } else if tb < ta {
        Some(1)
    } else {
        None
    };
    let mut m = PPMetrics {
        applicable: lead.is_some(),
        lead_agent: lead,
        lapf: false,
        fpa: false,
        spd: false,
        fpd: false,
        spa: false,
        co,
        mpd_at_tsee,
        mpd_at_tcross,
        crossed,
    };
    let Some(lead) = lead else { return m };
    let lag = 1 - lead;

    let (t_lead, t_lag) = (outcome.agents[lead].crossing_time, outcome.agents[lag].crossing_time);
    m.lapf = match (t_lead, t_lag) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    let later = step_at(outcome, outcome.t_see + t_a);
    let change = |agent: usize| outcome.log.row(later, agent).speed - outcome.log.row(see, agent).speed;
    let (dl, dg) = (change(lead), change(lag));
    m.fpa = dl > SPEED_DEADBAND;
    m.fpd = dl < -SPEED_DEADBAND;
    m.spa = dg > SPEED_DEADBAND;
    m.spd = dg < -SPEED_DEADBAND;
    m
}

/// (time, MPD) at every logged step before either agent reaches the crossing.
pub fn mpd_series(outcome: &RunOutcome) -> Vec<(f64, f64)> {
    let first_cross = outcome
        .agents
        .iter()
        .filter_map(|a| a.crossing_time)
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for step in 0..outcome.log.n_steps() {
        let t = outcome.log.row(step, 0).time;
        if t >= first_cross {
            break;
        }
        let (a, b) = (outcome.state_at(step, 0), outcome.state_at(step, 1));
        out.push((t, minimal_predicted_distance(&a, &b)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    LapfLow,
    FpaLow,
    SpdLow,
    FpdHigh,
    SpaHigh,
    CoHigh,
}

/// Percentages of each Boolean over a cell's runs, and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCellVerdict {
    pub runs: usize,
    /// Runs with a defined lead agent; denominator of all but `co`.
    pub applicable: usize,
    pub lapf: f64,
    pub fpa: f64,
    pub spd: f64,
    pub fpd: f64,
    pub spa: f64,
    pub co: f64,
    pub accepted: bool,
    pub rejected_reason: Vec<Rejection>,
}

impl SweepCellVerdict {
    pub fn from_percentages(lapf: f64, fpa: f64, spd: f64, fpd: f64, spa: f64, co: f64) -> Self {
        let mut reasons = Vec::new();
        if !(lapf > 80.0) {
            reasons.push(Rejection::LapfLow);
        }
        if !(fpa > 20.0) {
            reasons.push(Rejection::FpaLow);
        }
        if !(spd > 20.0) {
            reasons.push(Rejection::SpdLow);
        }
        if !(fpd <= 5.0) {
            reasons.push(Rejection::FpdHigh);
        }
        if !(spa <= 5.0) {
            reasons.push(Rejection::SpaHigh);
        }
        if !(co <= 5.0) {
            reasons.push(Rejection::CoHigh);
        }
        SweepCellVerdict {
            runs: 0,
            applicable: 0,
            lapf,
            fpa,
            spd,
            fpd,
            spa,
            co,
            accepted: reasons.is_empty(),
            rejected_reason: reasons,
        }
    }

    pub fn from_metrics(metrics: &[PPMetrics]) -> Self {
        let applicable: Vec<&PPMetrics> = metrics.iter().filter(|m| m.applicable).collect();
        let pct = |count: usize, of: usize| if of == 0 { 0.0 } else { 100.0 * count as f64 / of as f64 };
        let share = |f: fn(&PPMetrics) -> bool| pct(applicable.iter().filter(|m| f(m)).count(), applicable.len());
        let mut v = Self::from_percentages(
            share(|m| m.lapf),
            share(|m| m.fpa),
            share(|m| m.spd),
            share(|m| m.fpd),
            share(|m| m.spa),
            pct(metrics.iter().filter(|m| m.co).count(), metrics.len()),
        );
        v.runs = metrics.len();
        v.applicable = applicable.len();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecileRow {
    pub count: usize,
    pub mean_at_tsee: f64,
    pub mean_at_tcross: f64,
}

/// Group `(mpd_at_tsee, mpd_at_tcross)` pairs into ten groups by ascending
/// MPD at t_see and average each group.
pub fn mpd_decile_table(pairs: &[(f64, f64)]) -> Result<Vec<DecileRow>> {
    if pairs.len() < 10 {
        return Err(SimError::TooFewOutcomes {
            needed: 10,
            got: pairs.len(),
        });
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = sorted.len();
    Ok((0..10)
        .map(|k| {
            let group = &sorted[k * n / 10..(k + 1) * n / 10];
            let len = group.len() as f64;
            DecileRow {
                count: group.len(),
                mean_at_tsee: group.iter().map(|p| p.0).sum::<f64>() / len,
                mean_at_tcross: group.iter().map(|p| p.1).sum::<f64>() / len,
            }
        })
        .collect())
}

/// True when the pedestrian passed the crossing first and nobody collided.
pub fn pedestrian_crossed_first(outcome: &RunOutcome) -> bool {
    let ped = outcome.agent_index(AgentKind::Pedestrian);
    !outcome.collision && ped.is_some() && outcome.pass_order.first().copied() == ped
}

/// Smallest gap at which the pedestrian crossed ahead of the vehicle safely;
/// infinite if it never did.
pub fn min_crossable_gap<'a>(runs: impl IntoIterator<Item = (f64, &'a RunOutcome)>) -> f64 {
    runs.into_iter()
        .filter(|(_, o)| pedestrian_crossed_first(o))
        .map(|(gap, _)| gap)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrClass {
    PedYielded,
    VehYielded,
    Neither,
    Collision,
}

impl CrClass {
    pub const ALL: [CrClass; 4] = [
        CrClass::PedYielded,
        CrClass::VehYielded,
        CrClass::Neither,
        CrClass::Collision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CrClass::PedYielded => "ped_yielded",
            CrClass::VehYielded => "veh_yielded",
            CrClass::Neither => "neither",
            CrClass::Collision => "collision",
        }
    }
}

/// Did `agent` measurably give way before `until`?
fn reduced_speed(outcome: &RunOutcome, agent: usize, until: f64, sustain: f64) -> bool {
    let v0 = outcome.agents[agent].initial_speed;
    let mut braking_since: Option<f64> = None;
    for row in outcome.log.agent_rows(agent) {
        if row.time > until {
            break;
        }
        if row.speed < v0 - YIELD_SPEED_DROP {
            return true;
        }
        if row.acceleration < -YIELD_DECELERATION {
            let start = *braking_since.get_or_insert(row.time);
            if row.time - start >= sustain - 1e-9 {
                return true;
            }
        } else {
            braking_since = None;
        }
    }
    false
}

/// Classify a two-agent pedestrian–vehicle run. `sustain` is how long a
/// deceleration must last to count (one primitive duration).
pub fn classify_cr(outcome: &RunOutcome, sustain: f64) -> CrClass {
    if outcome.collision {
        return CrClass::Collision;
    }
    let (Some(ped), Some(veh)) = (
        outcome.agent_index(AgentKind::Pedestrian),
        outcome.agent_index(AgentKind::Vehicle),
    ) else {
        return CrClass::Neither;
    };
    let second = match outcome.pass_order.as_slice() {
        [first, ..] if *first == ped => veh,
        [first, ..] if *first == veh => ped,
        _ => {
            // nobody crossed: whoever gave way is the yielder
            return if reduced_speed(outcome, ped, f64::INFINITY, sustain) {
                CrClass::PedYielded
            } else if reduced_speed(outcome, veh, f64::INFINITY, sustain) {
                CrClass::VehYielded
            } else {
                CrClass::Neither
            };
        }
    };
    let until = outcome.agents[second].crossing_time.unwrap_or(f64::INFINITY);
    if !reduced_speed(outcome, second, until, sustain) {
        CrClass::Neither
    } else if second == ped {
        CrClass::PedYielded
    } else {
        CrClass::VehYielded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionStats {
    pub runs: usize,
    pub accelerated: usize,
    pub accelerated_in_lag: usize,
    pub pct_accelerated: f64,
    /// Share of accelerating vehicles that started in the lag position;
    /// undefined when none accelerated.
    pub pct_accelerated_in_lag: Option<f64>,
    /// Runs where the vehicle started in the lag position.
    pub lag_runs: usize,
    /// Share of lag-position vehicles that accelerated.
    pub pct_lag_accelerated: Option<f64>,
}

/// Vehicle started in the lag position: later constant-speed arrival.
pub fn vehicle_in_lag(outcome: &RunOutcome) -> Option<bool> {
    let ped = outcome.agent_index(AgentKind::Pedestrian)?;
    let veh = outcome.agent_index(AgentKind::Vehicle)?;
    Some(constant_speed_arrival(outcome, veh, 0) > constant_speed_arrival(outcome, ped, 0))
}

/// Vehicle exceeded its initial speed by more than the gain threshold
/// before reaching the crossing.
pub fn vehicle_accelerated(outcome: &RunOutcome) -> bool {
    let Some(veh) = outcome.agent_index(AgentKind::Vehicle) else {
        return false;
    };
    let a = &outcome.agents[veh];
    let until = a.crossing_time.unwrap_or(f64::INFINITY);
    outcome
        .log
        .agent_rows(veh)
        .take_while(|r| r.time <= until)
        .any(|r| r.speed > a.initial_speed + ASSERT_SPEED_GAIN)
}

pub fn assertion_stats(outcomes: &[RunOutcome]) -> AssertionStats {
    let mut accelerated = 0;
    let mut in_lag = 0;
    let mut lag_runs = 0;
    for o in outcomes {
        let lag = vehicle_in_lag(o) == Some(true);
        lag_runs += lag as usize;
        if vehicle_accelerated(o) {
            accelerated += 1;
            in_lag += lag as usize;
        }
    }
    AssertionStats {
        runs: outcomes.len(),
        accelerated,
        accelerated_in_lag: in_lag,
        pct_accelerated: if outcomes.is_empty() {
            0.0
        } else {
            100.0 * accelerated as f64 / outcomes.len() as f64
        },
        pct_accelerated_in_lag: (accelerated > 0).then(|| 100.0 * in_lag as f64 / accelerated as f64),
        lag_runs,
        pct_lag_accelerated: (lag_runs > 0).then(|| 100.0 * in_lag as f64 / lag_runs as f64),
    }
}

/// Crossing-onset times binned and split by whether they came before or
/// after the vehicle passed the crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHistogram {
    pub bin_width: f64,
    pub pre: Vec<usize>,
    pub post: Vec<usize>,
    pub runs: usize,
    pub onsets: usize,
}

impl ResponseHistogram {
    pub fn pre_count(&self) -> usize {
        self.pre.iter().sum()
    }

    pub fn post_count(&self) -> usize {
        self.post.iter().sum()
    }

    pub fn pre_fraction(&self) -> f64 {
        if self.onsets == 0 {
            0.0
        } else {
            self.pre_count() as f64 / self.onsets as f64
        }
    }

    pub fn post_fraction(&self) -> f64 {
        if self.onsets == 0 {
            0.0
        } else {
            self.post_count() as f64 / self.onsets as f64
        }
    }
}

pub fn response_histogram(outcomes: &[RunOutcome], bin_width: f64) -> ResponseHistogram {
    let mut h = ResponseHistogram {
        bin_width,
        pre: Vec::new(),
        post: Vec::new(),
        runs: outcomes.len(),
        onsets: 0,
    };
    for o in outcomes {
        let (Some(ped), Some(veh)) = (o.agent_index(AgentKind::Pedestrian), o.agent_index(AgentKind::Vehicle)) else {
            continue;
        };
        let Some(onset) = o.agents[ped].onset_time else {
            continue;
        };
        let pass = o.agents[veh].crossing_time.unwrap_or(f64::INFINITY);
        let bin = (onset / bin_width).floor().max(0.0) as usize;
        if h.pre.len() <= bin {
            h.pre.resize(bin + 1, 0);
            h.post.resize(bin + 1, 0);
        }
        if onset > pass {
            h.post[bin] += 1;
        } else {
            h.pre[bin] += 1;
        }
        h.onsets += 1;
    }
    h
}
