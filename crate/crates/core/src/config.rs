//! Sectioned key-value configuration: scenario presets flattened into TOML
//! tables, file and `section.key=value` overrides, and decoding back into
//! simulator types.
//!
//! The preset table of a command lists every accepted key, so an override is
//! valid exactly when its key already exists there.

use std::collections::BTreeSet;
use std::path::Path;

use toml::{Table, Value};

use crate::agent_model::{AgentKind, SquashConfig, UtilityParams};
use crate::control::{AccumulatorConfig, Extrapolation, ModelConfig, Repertoire};
use crate::engine::{Visibility, WorldConfig};
use crate::error::{Result, SimError};
use crate::kinematics::{CollisionTime, Vec2};
use crate::scenarios::{AgentSpec, AssertConfig, PpGeometry, ScenarioSpec, ScenarioTag};

pub const VERSION: &str = concat!("crossing-sim ", env!("CARGO_PKG_VERSION"));

/// One `section.key=value` assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub section: String,
    pub key: String,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let (path, raw) = s
            .split_once('=')
            .ok_or_else(|| SimError::parse("override", format!("'{s}' is not key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| SimError::parse("override", format!("'{path}' is not section.key")))?;
        Ok(Override {
            section: section.to_string(),
            key: key.to_string(),
            value: parse_value(raw.trim()),
        })
    }
}

/// Parse a scalar or array as TOML; anything else is taken as a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Merge `patch` into `base`; every patched key must already exist in `base`.
/// All offending keys are reported together.
pub fn merge(base: &mut Table, patch: &Table) -> Result<()> {
    let mut unknown = BTreeSet::new();
    for (section, body) in patch {
        let Some(target) = base.get_mut(section).and_then(Value::as_table_mut) else {
            unknown.insert(section.clone());
            continue;
        };
        let Some(body) = body.as_table() else {
            unknown.insert(section.clone());
            continue;
        };
        for key in body.keys() {
            if !target.contains_key(key) {
                unknown.insert(format!("{section}.{key}"));
            }
        }
        if unknown.is_empty() {
            for (key, value) in body {
                target.insert(key.clone(), coerce(&target[key], value.clone()));
            }
        }
    }
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(SimError::UnknownKeys(unknown.into_iter().collect()))
    }
}

/// Integers given where the preset holds a float are widened.
fn coerce(existing: &Value, value: Value) -> Value {
    match (existing, value) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    }
}

pub fn overrides_table(overrides: &[Override]) -> Table {
    let mut t = Table::new();
    for o in overrides {
        t.entry(o.section.clone())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("sections are tables")
            .insert(o.key.clone(), o.value.clone());
    }
    t
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    text.parse::<Table>()
        .map_err(|e| SimError::parse(path.display().to_string(), e))
}

/// Apply an optional config file, then command-line overrides, to a preset.
pub fn apply(mut base: Table, file: Option<&Path>, overrides: &[Override]) -> Result<Table> {
    if let Some(path) = file {
        merge(&mut base, &read_table(path)?)?;
    }
    merge(&mut base, &overrides_table(overrides))?;
    Ok(base)
}

fn section<'a>(t: &'a Table, name: &str) -> Result<&'a Table> {
    t.get(name)
        .and_then(Value::as_table)
        .ok_or_else(|| SimError::config(format!("missing section [{name}]")))
}

fn f(t: &Table, sec: &str, key: &str) -> Result<f64> {
    match section(t, sec)?.get(key) {
        Some(Value::Float(x)) => Ok(*x),
        Some(Value::Integer(i)) => Ok(*i as f64),
        other => Err(SimError::config(format!(
            "{sec}.{key}: expected a number, got {other:?}"
        ))),
    }
}

fn s<'a>(t: &'a Table, sec: &str, key: &str) -> Result<&'a str> {
    section(t, sec)?
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| SimError::config(format!("{sec}.{key}: expected a string")))
}

fn b(t: &Table, sec: &str, key: &str) -> Result<bool> {
    section(t, sec)?
        .get(key)
        .and_then(Value::as_bool)
        .ok_or_else(|| SimError::config(format!("{sec}.{key}: expected true or false")))
}

fn enum_value<T: serde::de::DeserializeOwned>(t: &Table, sec: &str, key: &str) -> Result<T> {
    let name = s(t, sec, key)?;
    Value::String(name.to_string())
        .try_into()
        .map_err(|_| SimError::config(format!("{sec}.{key}: unknown value '{name}'")))
}

fn enum_name<T: serde::Serialize>(v: &T) -> Value {
    Value::try_from(v).expect("unit enum variants serialize as strings")
}

fn table(entries: Vec<(&str, Value)>) -> Value {
    Value::Table(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn world_section(w: &WorldConfig) -> Value {
    table(vec![
        ("dt", w.dt.into()),
        ("t_max", w.t_max.into()),
        ("d_c", w.d_c.into()),
        ("collision_distance", w.collision_distance.into()),
        ("goal_margin", w.goal_margin.into()),
    ])
}

fn model_section(m: &ModelConfig) -> Value {
    table(vec![
        ("delta_t", m.delta_t.into()),
        ("t_p", m.t_p.into()),
        ("horizon", m.horizon.into()),
        ("c_max", m.squash.c_max.into()),
        ("tau_floor", m.squash.tau_floor.into()),
        ("collision_time", enum_name(&m.collision_time)),
        ("self_motion", enum_name(&m.self_motion)),
        ("other_motion", enum_name(&m.other_motion)),
        (
            "repertoire",
            Value::Array(m.repertoire.magnitudes().iter().map(|&x| x.into()).collect()),
        ),
        ("sigma", m.accumulator.sigma.into()),
        ("threshold", m.accumulator.threshold.into()),
        ("time_constant", m.accumulator.time_constant.into()),
    ])
}

fn decode_world(t: &Table) -> Result<WorldConfig> {
    let w = WorldConfig {
        dt: f(t, "world", "dt")?,
        t_max: f(t, "world", "t_max")?,
        d_c: f(t, "world", "d_c")?,
        collision_distance: f(t, "world", "collision_distance")?,
        goal_margin: f(t, "world", "goal_margin")?,
        debug: false,
    };
    w.validate()?;
    Ok(w)
}

fn decode_model(t: &Table, dt: f64) -> Result<ModelConfig> {
    let magnitudes = section(t, "model")?
        .get("repertoire")
        .and_then(Value::as_array)
        .ok_or_else(|| SimError::config("model.repertoire: expected an array"))?
        .iter()
        .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| SimError::config("model.repertoire: expected numbers"))?;
    let m = ModelConfig {
        delta_t: f(t, "model", "delta_t")?,
        t_p: f(t, "model", "t_p")?,
        horizon: f(t, "model", "horizon")?,
        collision_time: enum_value::<CollisionTime>(t, "model", "collision_time")?,
        self_motion: enum_value::<Extrapolation>(t, "model", "self_motion")?,
        other_motion: enum_value::<Extrapolation>(t, "model", "other_motion")?,
        repertoire: Repertoire::new(magnitudes)?,
        accumulator: AccumulatorConfig {
            sigma: f(t, "model", "sigma")?,
            threshold: f(t, "model", "threshold")?,
            time_constant: f(t, "model", "time_constant")?,
        },
        squash: SquashConfig {
            c_max: f(t, "model", "c_max")?,
            tau_floor: f(t, "model", "tau_floor")?,
        },
    };
    m.validate(dt)?;
    Ok(m)
}

fn collision_key(kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::Pedestrian => "k_c",
        AgentKind::Vehicle => "k_sc",
    }
}

fn agent_section(a: &AgentSpec) -> Value {
    table(vec![
        ("kind", a.kind().as_str().into()),
        ("x", a.position.x.into()),
        ("y", a.position.y.into()),
        ("speed", a.speed.into()),
        ("heading_x", a.heading.x.into()),
        ("heading_y", a.heading.y.into()),
        ("goal_x", a.goal.x.into()),
        ("goal_y", a.goal.y.into()),
        ("k_g", a.params.k_g.into()),
        ("k_dv", a.params.k_dv.into()),
        ("k_da", a.params.k_da.into()),
        (collision_key(a.kind()), a.params.collision_weight.into()),
        ("reactive", a.reactive.into()),
    ])
}

fn decode_agent(t: &Table, name: &str) -> Result<AgentSpec> {
    let kind: AgentKind = s(t, name, "kind")?.parse()?;
    Ok(AgentSpec {
        name: name.to_string(),
        position: Vec2::new(f(t, name, "x")?, f(t, name, "y")?),
        speed: f(t, name, "speed")?,
        heading: Vec2::new(f(t, name, "heading_x")?, f(t, name, "heading_y")?),
        goal: Vec2::new(f(t, name, "goal_x")?, f(t, name, "goal_y")?),
        params: UtilityParams {
            kind,
            k_g: f(t, name, "k_g")?,
            k_dv: f(t, name, "k_dv")?,
            k_da: f(t, name, "k_da")?,
            collision_weight: f(t, name, collision_key(kind))?,
        },
        reactive: b(t, name, "reactive")?,
    })
}

/// A single simulation: scenario, world and model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub world: WorldConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    /// Preset for a scenario family with its default world and model.
    pub fn preset(tag: ScenarioTag) -> Result<Self> {
        Ok(RunConfig {
            scenario: crate::scenarios::preset(tag)?,
            world: tag.default_world(),
            model: ModelConfig::default(),
        })
    }

    pub fn to_table(&self) -> Table {
        let sc = &self.scenario;
        let mut t = Table::new();
        let names: Vec<Value> = sc.agents.iter().map(|a| a.name.as_str().into()).collect();
        t.insert(
            "scenario".into(),
            table(vec![
                ("tag", sc.tag.as_str().into()),
                ("crossing_x", sc.crossing.x.into()),
                ("crossing_y", sc.crossing.y.into()),
                ("t_see", sc.visibility.t_see().into()),
                ("agents", Value::Array(names)),
            ]),
        );
        for a in &sc.agents {
            t.insert(a.name.clone(), agent_section(a));
        }
        t.insert("world".into(), world_section(&self.world));
        t.insert("model".into(), model_section(&self.model));
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let tag: ScenarioTag = s(t, "scenario", "tag")?.parse()?;
        let names = section(t, "scenario")?
            .get("agents")
            .and_then(Value::as_array)
            .ok_or_else(|| SimError::config("scenario.agents: expected a list of section names"))?;
        let agents = names
            .iter()
            .map(|n| {
                let n = n
                    .as_str()
                    .ok_or_else(|| SimError::config("scenario.agents: expected names"))?;
                decode_agent(t, n)
            })
            .collect::<Result<Vec<_>>>()?;
        let t_see = f(t, "scenario", "t_see")?;
        let scenario = ScenarioSpec {
            tag,
            crossing: Vec2::new(f(t, "scenario", "crossing_x")?, f(t, "scenario", "crossing_y")?),
            visibility: if t_see > 0.0 {
                Visibility::VisibleFrom(t_see)
            } else {
                Visibility::AlwaysVisible
            },
            agents,
        };
        scenario.validate()?;
        let world = decode_world(t)?;
        let model = decode_model(t, world.dt)?;
        Ok(RunConfig { scenario, world, model })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("config tables serialize")
    }
}

/// Settings shared by the batch commands (sweeps, assert battery,
/// stochastic trials).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub pp: PpGeometry,
    pub assert: AssertConfig,
}

impl BatchConfig {
    pub fn preset(tag: ScenarioTag) -> Self {
        BatchConfig {
            world: tag.default_world(),
            model: ModelConfig::default(),
            pp: PpGeometry::default(),
            assert: AssertConfig::default(),
        }
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new();
        t.insert("world".into(), world_section(&self.world));
        t.insert("model".into(), model_section(&self.model));
        t.insert(
            "pp".into(),
            table(vec![
                ("d0", self.pp.d0.into()),
                ("goal_beyond", self.pp.goal_beyond.into()),
            ]),
        );
        let a = &self.assert;
        t.insert(
            "assert".into(),
            table(vec![
                ("vehicle_k_dv", a.vehicle_k_dv.into()),
                ("vehicle_k_da", a.vehicle_k_da.into()),
                ("vehicle_k_sc", a.vehicle_k_sc.into()),
                ("pedestrian_k_c", a.pedestrian_k_c.into()),
                ("pedestrian_k_dv", a.pedestrian_k_dv.into()),
            ]),
        );
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let world = decode_world(t)?;
        let model = decode_model(t, world.dt)?;
        Ok(BatchConfig {
            world,
            model,
            pp: PpGeometry {
                d0: f(t, "pp", "d0")?,
                goal_beyond: f(t, "pp", "goal_beyond")?,
            },
            assert: AssertConfig {
                vehicle_k_dv: f(t, "assert", "vehicle_k_dv")?,
                vehicle_k_da: f(t, "assert", "vehicle_k_da")?,
                vehicle_k_sc: f(t, "assert", "vehicle_k_sc")?,
                pedestrian_k_c: f(t, "assert", "pedestrian_k_c")?,
                pedestrian_k_dv: f(t, "assert", "pedestrian_k_dv")?,
            },
        })
    }
}
