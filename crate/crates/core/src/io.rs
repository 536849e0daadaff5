//! Output files: trajectory CSV, per-run metrics JSON, sweep tables, the
//! assertiveness battery and stochastic histograms.
//!
//! Every file carries the code version and the effective configuration. CSV
//! files put them in a leading `#` comment block that is itself TOML.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::agent_model::AgentKind;
use crate::config::{RunConfig, VERSION};
use crate::engine::{agent_outcomes, AgentOutcome, LogRow, RunOutcome, Termination, TrajectoryLog};
use crate::error::{Result, SimError};
use crate::metrics::{
    classify_cr, pedestrian_crossed_first, pp_metrics, vehicle_accelerated, vehicle_in_lag, CrClass, PPMetrics, T_A,
};
use crate::scenarios::ScenarioTag;
use crate::sweep::{AssertReport, CellSummary, StochasticReport, SweepResult};

/// Round to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Shortest text of `x` rounded to 9 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        round_sig(x).to_string()
    }
}

fn parse_num(field: &str, what: &str) -> Result<f64> {
    match field {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => field
            .parse()
            .map_err(|e| SimError::parse(what, format!("'{field}': {e}"))),
    }
}

fn comment_block(header: &Table) -> String {
    let text = toml::to_string(header).expect("header tables serialize");
    text.lines().map(|l| format!("# {l}\n")).collect()
}

/// Comment block of a CSV file parsed back into its TOML table.
pub fn read_comment_block(text: &str) -> Result<Table> {
    let body: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| {
            format!(
                "{}\n",
                l.trim_start_matches('#')
                    .strip_prefix(' ')
                    .unwrap_or(l.trim_start_matches('#'))
            )
        })
        .collect();
    body.parse().map_err(|e| SimError::parse("csv header", e))
}

fn header(config: &Table, extra: Vec<(&str, Value)>) -> Table {
    let mut t = Table::new();
    t.insert("version".into(), VERSION.into());
    for (k, v) in extra {
        t.insert(k.into(), v);
    }
    for (k, v) in config {
        t.insert(k.clone(), v.clone());
    }
    t
}

fn csv_text(comments: &str, head: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(head).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::parse("csv", e))?;
    Ok(comments.to_string() + &String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::parse("csv", e)
}

fn pretty_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

pub const TRAJECTORY_COLUMNS: [&str; 7] = ["time_s", "agent_id", "x_m", "y_m", "v_mps", "a_mps2", "primitive"];

/// The log as it reads back from CSV: every number at 9 significant digits,
/// no debug columns.
pub fn rounded_log(log: &TrajectoryLog) -> TrajectoryLog {
    TrajectoryLog {
        n_agents: log.n_agents,
        rows: log
            .rows
            .iter()
            .map(|r| LogRow {
                step: r.step,
                time: round_sig(r.time),
                agent: r.agent,
                x: round_sig(r.x),
                y: round_sig(r.y),
                speed: round_sig(r.speed),
                acceleration: round_sig(r.acceleration),
                primitive: r.primitive.map(round_sig),
                deltas: None,
                evidence: None,
            })
            .collect(),
    }
}

fn termination_name(t: Termination) -> Value {
    Value::try_from(t).expect("unit variants serialize")
}

pub fn trajectory_csv(cfg: &RunConfig, seed: Option<u64>, outcome: &RunOutcome) -> Result<String> {
    let mut extra = vec![("termination", termination_name(outcome.termination))];
    if let Some(seed) = seed {
        extra.push(("seed", Value::Integer(seed as i64)));
    }
    let comments = comment_block(&header(&cfg.to_table(), extra));
    let rows = outcome.log.rows.iter().map(|r| {
        vec![
            num(r.time),
            r.agent.to_string(),
            num(r.x),
            num(r.y),
            num(r.speed),
            num(r.acceleration),
            r.primitive.map(num).unwrap_or_default(),
        ]
    });
    csv_text(&comments, &TRAJECTORY_COLUMNS, rows)
}

/// A trajectory CSV read back: configuration, seed, termination and log.
#[derive(Debug, Clone)]
pub struct StoredTrajectory {
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub termination: Termination,
    pub log: TrajectoryLog,
}

pub fn read_trajectory_csv(text: &str) -> Result<StoredTrajectory> {
    let mut head = read_comment_block(text)?;
    match head.remove("version") {
        Some(Value::String(_)) => {}
        _ => return Err(SimError::parse("trajectory csv", "missing version tag")),
    }
    let termination: Termination = head
        .remove("termination")
        .ok_or_else(|| SimError::parse("trajectory csv", "missing termination"))?
        .try_into()
        .map_err(|e| SimError::parse("trajectory csv termination", e))?;
    let seed = match head.remove("seed") {
        Some(Value::Integer(s)) => Some(s as u64),
        Some(_) => return Err(SimError::parse("trajectory csv", "seed must be an integer")),
        None => None,
    };
    let config = RunConfig::from_table(&head)?;
    let n_agents = config.scenario.agents.len();

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if columns != TRAJECTORY_COLUMNS {
        return Err(SimError::parse(
            "trajectory csv",
            format!("unexpected columns {columns:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let agent: usize = rec[1].parse().map_err(|e| SimError::parse("agent_id", e))?;
        if agent != k % n_agents {
            return Err(SimError::parse(
                "trajectory csv",
                format!("row {k}: agent {agent} out of order"),
            ));
        }
        rows.push(LogRow {
            step: k / n_agents,
            time: parse_num(&rec[0], "time_s")?,
            agent,
            x: parse_num(&rec[2], "x_m")?,
            y: parse_num(&rec[3], "y_m")?,
            speed: parse_num(&rec[4], "v_mps")?,
            acceleration: parse_num(&rec[5], "a_mps2")?,
            primitive: if rec[6].is_empty() {
                None
            } else {
                Some(parse_num(&rec[6], "primitive")?)
            },
            deltas: None,
            evidence: None,
        });
    }
    if rows.len() % n_agents != 0 {
        return Err(SimError::parse("trajectory csv", "incomplete final step"));
    }
    Ok(StoredTrajectory {
        config,
        seed,
        termination,
        log: TrajectoryLog { n_agents, rows },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub collision: bool,
    pub min_distance: f64,
    pub pass_order: Vec<usize>,
    pub termination: Termination,
    pub end_time: f64,
    pub agents: Vec<AgentOutcome>,
}

/// Scenario-specific metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScenarioMetrics {
    Pp(PPMetrics),
    Cd {
        pedestrian_crossed_first: bool,
        pedestrian_onset: Option<f64>,
        pedestrian_peak_speed: f64,
    },
    Cr {
        class: CrClass,
        vehicle_accelerated: bool,
        vehicle_in_lag: Option<bool>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub seed: Option<u64>,
    pub config: Table,
    pub outcome: OutcomeSummary,
    pub metrics: ScenarioMetrics,
}

/// Outcome and metrics recomputed from a log. `run` and `report` both go
/// through here on the rounded log, so their JSON agrees exactly.
pub fn run_report(
    cfg: &RunConfig,
    seed: Option<u64>,
    termination: Termination,
    log: TrajectoryLog,
) -> Result<RunReport> {
    let sc = &cfg.scenario;
    let outcome = RunOutcome::from_log(
        sc.crossing,
        sc.visibility.t_see(),
        cfg.world.collision_distance,
        agent_outcomes(sc)?,
        termination,
        log,
    );
    let metrics = match sc.tag {
        ScenarioTag::Pp => ScenarioMetrics::Pp(pp_metrics(&outcome, T_A)),
        ScenarioTag::Cd | ScenarioTag::CdStoch => {
            let ped = outcome
                .agent_index(AgentKind::Pedestrian)
                .ok_or_else(|| SimError::config("crossing scenario without a pedestrian"))?;
            ScenarioMetrics::Cd {
                pedestrian_crossed_first: pedestrian_crossed_first(&outcome),
                pedestrian_onset: outcome.agents[ped].onset_time,
                pedestrian_peak_speed: outcome.agents[ped].peak_speed,
            }
        }
        ScenarioTag::Cr | ScenarioTag::CrAssert => ScenarioMetrics::Cr {
            class: classify_cr(&outcome, cfg.model.delta_t),
            vehicle_accelerated: vehicle_accelerated(&outcome),
            vehicle_in_lag: vehicle_in_lag(&outcome),
        },
    };
    Ok(RunReport {
        version: VERSION.into(),
        seed,
        config: cfg.to_table(),
        outcome: OutcomeSummary {
            collision: outcome.collision,
            min_distance: outcome.min_distance,
            pass_order: outcome.pass_order,
            termination: outcome.termination,
            end_time: outcome.end_time,
            agents: outcome.agents,
        },
        metrics,
    })
}

pub fn run_report_json(report: &RunReport) -> String {
    pretty_json(report)
}

fn grid_header(result: &SweepResult) -> Vec<(&'static str, Value)> {
    let axis = |a: &crate::sweep::Axis| {
        table_value(vec![
            ("name", a.name.as_str().into()),
            ("min", a.lo.into()),
            ("max", a.hi.into()),
            ("count", Value::Integer(a.n as i64)),
        ])
    };
    vec![
        ("sweep", result.name.as_str().into()),
        ("grid_rows", axis(&result.grid.rows)),
        ("grid_cols", axis(&result.grid.cols)),
    ]
}

fn table_value(entries: Vec<(&str, Value)>) -> Value {
    Value::Table(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

/// One row per cell, row-major.
pub fn sweep_csv(result: &SweepResult, config: &Table) -> Result<String> {
    let comments = comment_block(&header(config, grid_header(result)));
    let (r, c) = (result.grid.rows.name.as_str(), result.grid.cols.name.as_str());
    let mut head = vec![r, c];
    let extra: &[&str] = match result.name.as_str() {
        "pp" => &[
            "runs",
            "applicable",
            "lapf_pct",
            "fpa_pct",
            "spd_pct",
            "fpd_pct",
            "spa_pct",
            "co_pct",
            "accepted",
            "rejected_reason",
        ],
        "cd" => &["min_crossable_gap_s"],
        _ => &["ped_yielded", "veh_yielded", "neither", "collisions"],
    };
    head.extend_from_slice(extra);
    head.push("faults");
    let rows = result.cells.iter().map(|cell| {
        let mut row = vec![num(cell.row_value), num(cell.col_value)];
        match &cell.summary {
            CellSummary::Pp { verdict: v, .. } => {
                row.extend([v.runs.to_string(), v.applicable.to_string()]);
                row.extend([v.lapf, v.fpa, v.spd, v.fpd, v.spa, v.co].map(num));
                row.push(v.accepted.to_string());
                let reasons: Vec<String> = v
                    .rejected_reason
                    .iter()
                    .map(|r| {
                        serde_json::to_value(r)
                            .expect("unit variants serialize")
                            .as_str()
                            .unwrap_or("")
                            .to_string()
                    })
                    .collect();
                row.push(reasons.join(";"));
            }
            CellSummary::Cd { min_gap } => row.push(num(*min_gap)),
            CellSummary::Cr {
                ped_yielded,
                veh_yielded,
                neither,
                collisions,
                ..
            } => row.extend([ped_yielded, veh_yielded, neither, collisions].map(|n| n.to_string())),
        }
        row.push(cell.faults.len().to_string());
        row
    });
    csv_text(&comments, &head, rows)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    config: &'a Table,
    #[serde(flatten)]
    body: T,
}

pub fn sweep_json(result: &SweepResult, config: &Table) -> String {
    pretty_json(&Envelope {
        version: VERSION,
        config,
        body: serde_json::json!({ "result": result }),
    })
}

pub fn assert_json(report: &AssertReport, config: &Table) -> String {
    pretty_json(&Envelope {
        version: VERSION,
        config,
        body: serde_json::json!({ "stats": report.stats, "faults": report.faults }),
    })
}

pub fn encounters_csv(report: &AssertReport, config: &Table) -> Result<String> {
    let comments = comment_block(&header(config, vec![]));
    let head = [
        "pedestrian_y_m",
        "vehicle_x_m",
        "vehicle_in_lag",
        "accelerated",
        "collision",
        "class",
    ];
    let rows = report.encounters.iter().map(|e| {
        vec![
            num(e.pedestrian_y),
            num(e.vehicle_x),
            e.vehicle_in_lag.to_string(),
            e.accelerated.to_string(),
            e.collision.to_string(),
            e.class.as_str().to_string(),
        ]
    });
    csv_text(&comments, &head, rows)
}

fn stochastic_extra(report: &StochasticReport) -> Vec<(&'static str, Value)> {
    vec![
        ("gap_s", report.gap.into()),
        ("trials", Value::Integer(report.trials as i64)),
        ("seed", Value::Integer(report.seed as i64)),
    ]
}

/// Onset counts per bin relative to the vehicle passing instant.
pub fn histogram_csv(report: &StochasticReport, config: &Table) -> Result<String> {
    let comments = comment_block(&header(config, stochastic_extra(report)));
    let h = &report.histogram;
    let head = ["bin_start_s", "bin_end_s", "pre_pass", "post_pass"];
    let n = h.pre.len().max(h.post.len());
    let rows = (0..n).map(|i| {
        vec![
            num(i as f64 * h.bin_width),
            num((i + 1) as f64 * h.bin_width),
            h.pre.get(i).copied().unwrap_or(0).to_string(),
            h.post.get(i).copied().unwrap_or(0).to_string(),
        ]
    });
    csv_text(&comments, &head, rows)
}

pub fn stochastic_json(report: &StochasticReport, config: &Table) -> String {
    pretty_json(&Envelope {
        version: VERSION,
        config,
        body: serde_json::json!({
            "gap_s": report.gap,
            "trials": report.trials,
            "seed": report.seed,
            "vehicle_pass_s": report.vehicle_pass,
            "onsets": report.histogram.onsets,
            "pre_pass_fraction": report.histogram.pre_fraction(),
            "post_pass_fraction": report.histogram.post_fraction(),
            "histogram": report.histogram,
            "onset_times_s": report.onsets,
            "faults": report.faults,
        }),
    })
}
