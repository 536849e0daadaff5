//! Parameter grids, batteries of scenario runs and their aggregation.
//!
//! Grid cells are the unit of parallel work; runs inside a cell execute in a
//! fixed order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ModelConfig;
use crate::engine::{run, DecisionMode, RunOutcome, WorldConfig};
use crate::error::{Result, SimError};
use crate::metrics::{
    assertion_stats, classify_cr, min_crossable_gap, pp_metrics, response_histogram, vehicle_accelerated,
    vehicle_in_lag, AssertionStats, CrClass, ResponseHistogram, SweepCellVerdict, T_A,
};
use crate::scenarios::{
    build_cd, build_cd_stochastic, build_cr, build_cr_assert, build_pp, cd_start_positions, cr_start_positions,
    linspace, pp_speed_grid, AssertConfig, PpGeometry, ScenarioSpec, VEHICLE_SPEED,
};

/// One inclusive, evenly spaced parameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(name: &str, lo: f64, hi: f64, n: usize) -> Self {
        Axis {
            name: name.into(),
            lo,
            hi,
            n,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.n)
    }
}

/// Two-axis grid; cells are enumerated row-major (row axis outer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub rows: Axis,
    pub cols: Axis,
}

impl SweepGrid {
    pub fn pp(n_kdv: usize, n_kc: usize) -> Self {
        SweepGrid {
            rows: Axis::new("k_dv", 0.28, 0.71, n_kdv),
            cols: Axis::new("k_c", 0.0, 10.0, n_kc),
        }
    }

    pub fn cd(n_kc: usize, n_ksc: usize) -> Self {
        SweepGrid {
            rows: Axis::new("k_c", 0.0, 5.0, n_kc),
            cols: Axis::new("k_sc", 0.0, 5.0, n_ksc),
        }
    }

    pub fn cr(n_kc: usize, n_ksc: usize) -> Self {
        SweepGrid {
            rows: Axis::new("k_c", 0.0, 2.5, n_kc),
            cols: Axis::new("k_sc", 0.0, 2.5, n_ksc),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.n * self.cols.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        for a in [&self.rows, &self.cols] {
            if a.n == 0 || !a.lo.is_finite() || !a.hi.is_finite() || a.hi < a.lo {
                return Err(SimError::config(format!("invalid sweep axis {a:?}")));
            }
        }
        Ok(())
    }

    /// `(row, col, row value, col value)` in row-major order.
    pub fn cells(&self) -> Vec<(usize, usize, f64, f64)> {
        let (rv, cv) = (self.rows.values(), self.cols.values());
        let mut out = Vec::with_capacity(self.len());
        for (i, &r) in rv.iter().enumerate() {
            for (j, &c) in cv.iter().enumerate() {
                out.push((i, j, r, c));
            }
        }
        out
    }
}

/// A run that failed inside a cell; the rest of the sweep continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub run: usize,
    pub kind: String,
    pub message: String,
}

impl Fault {
    fn new(run: usize, e: &SimError) -> Self {
        Fault {
            run,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CellSummary {
    Pp {
        verdict: SweepCellVerdict,
        /// (MPD at t_see, MPD at t_cross) per run that reached the crossing.
        #[serde(skip)]
        mpd: Vec<(f64, f64)>,
    },
    Cd {
        /// Smallest crossable gap (s); infinite when none.
        min_gap: f64,
    },
    Cr {
        /// Class per tested gap, in start-position order.
        classes: Vec<CrClass>,
        ped_yielded: usize,
        veh_yielded: usize,
        neither: usize,
        collisions: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub row: usize,
    pub col: usize,
    pub row_value: f64,
    pub col_value: f64,
    pub summary: CellSummary,
    pub faults: Vec<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub name: String,
    pub grid: SweepGrid,
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, row: usize, col: usize) -> &CellResult {
        &self.cells[row * self.grid.cols.n + col]
    }

    pub fn fault_count(&self) -> usize {
        self.cells.iter().map(|c| c.faults.len()).sum()
    }
}

/// Map `f` over `items` on `threads` workers (all cores when `None`),
/// keeping input order.
pub fn par_map<T, R, F>(items: Vec<T>, threads: Option<usize>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(SimError::config("thread count must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| SimError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.into_par_iter().map(f).collect()))
}

/// Run every spec, recording faults instead of aborting.
fn run_all(
    specs: Vec<Result<ScenarioSpec>>,
    world: &WorldConfig,
    model: &ModelConfig,
    faults: &mut Vec<Fault>,
) -> Vec<Option<RunOutcome>> {
    specs
        .into_iter()
        .enumerate()
        .map(
            |(k, spec)| match spec.and_then(|s| run(&s, world, model, DecisionMode::Deterministic)) {
                Ok(o) => Some(o),
                Err(e) => {
                    faults.push(Fault::new(k, &e));
                    None
                }
            },
        )
        .collect()
}

/// All PP runs of one (k_dv, k_c) cell over the initial-speed pairs.
pub fn pp_cell(
    k_dv: f64,
    k_c: f64,
    geometry: PpGeometry,
    world: &WorldConfig,
    model: &ModelConfig,
) -> (CellSummary, Vec<Fault>) {
    let speeds = pp_speed_grid();
    let specs = speeds
        .iter()
        .flat_map(|&a| speeds.iter().map(move |&b| build_pp(a, b, k_dv, k_c, geometry)))
        .collect();
    let mut faults = Vec::new();
    let outcomes = run_all(specs, world, model, &mut faults);
    let metrics: Vec<_> = outcomes.iter().flatten().map(|o| pp_metrics(o, T_A)).collect();
    let mpd = metrics
        .iter()
        .filter_map(|m| m.mpd_at_tcross.map(|c| (m.mpd_at_tsee, c)))
        .collect();
    let verdict = SweepCellVerdict::from_metrics(&metrics);
    (CellSummary::Pp { verdict, mpd }, faults)
}

pub fn cd_cell(k_c: f64, k_sc: f64, world: &WorldConfig, model: &ModelConfig) -> (CellSummary, Vec<Fault>) {
    let xs = cd_start_positions();
    let specs = xs.iter().map(|&x| build_cd(x, k_c, k_sc)).collect();
    let mut faults = Vec::new();
    let outcomes = run_all(specs, world, model, &mut faults);
    let min_gap = min_crossable_gap(
        xs.iter()
            .zip(&outcomes)
            .filter_map(|(x, o)| o.as_ref().map(|o| (x / VEHICLE_SPEED, o))),
    );
    (CellSummary::Cd { min_gap }, faults)
}

pub fn cr_cell(k_c: f64, k_sc: f64, world: &WorldConfig, model: &ModelConfig) -> (CellSummary, Vec<Fault>) {
    let specs = cr_start_positions().iter().map(|&x| build_cr(x, k_c, k_sc)).collect();
    let mut faults = Vec::new();
    let outcomes = run_all(specs, world, model, &mut faults);
    let classes: Vec<CrClass> = outcomes
        .iter()
        .flatten()
        .map(|o| classify_cr(o, model.delta_t))
        .collect();
    let count = |c: CrClass| classes.iter().filter(|&&x| x == c).count();
    let summary = CellSummary::Cr {
        ped_yielded: count(CrClass::PedYielded),
        veh_yielded: count(CrClass::VehYielded),
        neither: count(CrClass::Neither),
        collisions: count(CrClass::Collision),
        classes,
    };
    (summary, faults)
}

fn run_grid<F>(
    name: &str,
    grid: &SweepGrid,
    world: &WorldConfig,
    model: &ModelConfig,
    threads: Option<usize>,
    cell: F,
) -> Result<SweepResult>
where
    F: Fn(f64, f64) -> (CellSummary, Vec<Fault>) + Sync + Send,
{
    grid.validate()?;
    world.validate()?;
    model.validate(world.dt)?;
    let cells = par_map(grid.cells(), threads, |(row, col, r, c)| {
        let (summary, faults) = cell(r, c);
        CellResult {
            row,
            col,
            row_value: r,
            col_value: c,
            summary,
            faults,
        }
    })?;
    Ok(SweepResult {
        name: name.into(),
        grid: grid.clone(),
        world: *world,
        model: model.clone(),
        cells,
    })
}

pub fn run_pp_sweep(
    grid: &SweepGrid,
    geometry: PpGeometry,
    world: &WorldConfig,
    model: &ModelConfig,
    threads: Option<usize>,
) -> Result<SweepResult> {
    run_grid("pp", grid, world, model, threads, |k_dv, k_c| {
        pp_cell(k_dv, k_c, geometry, world, model)
    })
}

pub fn run_cd_sweep(
    grid: &SweepGrid,
    world: &WorldConfig,
    model: &ModelConfig,
    threads: Option<usize>,
) -> Result<SweepResult> {
    run_grid("cd", grid, world, model, threads, |k_c, k_sc| {
        cd_cell(k_c, k_sc, world, model)
    })
}

pub fn run_cr_sweep(
    grid: &SweepGrid,
    world: &WorldConfig,
    model: &ModelConfig,
    threads: Option<usize>,
) -> Result<SweepResult> {
    run_grid("cr", grid, world, model, threads, |k_c, k_sc| {
        cr_cell(k_c, k_sc, world, model)
    })
}

/// Per-encounter facts of the assertiveness battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterRow {
    pub pedestrian_y: f64,
    pub vehicle_x: f64,
    pub vehicle_in_lag: bool,
    pub accelerated: bool,
    pub collision: bool,
    pub class: CrClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertReport {
    pub config: AssertConfig,
    pub stats: AssertionStats,
    pub encounters: Vec<EncounterRow>,
    pub faults: Vec<Fault>,
}

pub fn run_assert_battery(
    cfg: &AssertConfig,
    world: &WorldConfig,
    model: &ModelConfig,
    threads: Option<usize>,
) -> Result<AssertReport> {
    world.validate()?;
    model.validate(world.dt)?;
    let specs = build_cr_assert(cfg)?;
    let results = par_map(specs, threads, |s| {
        let outcome = run(&s, world, model, DecisionMode::Deterministic);
        (s, outcome)
    })?;
    let mut outcomes = Vec::with_capacity(results.len());
    let mut encounters = Vec::with_capacity(results.len());
    let mut faults = Vec::new();
    for (k, (spec, outcome)) in results.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                encounters.push(EncounterRow {
                    pedestrian_y: spec.agents[0].position.y,
                    vehicle_x: spec.agents[1].position.x,
                    vehicle_in_lag: vehicle_in_lag(&o).unwrap_or(false),
                    accelerated: vehicle_accelerated(&o),
                    collision: o.collision,
                    class: classify_cr(&o, model.delta_t),
                });
                outcomes.push(o);
            }
            Err(e) => faults.push(Fault::new(k, &e)),
        }
    }
    Ok(AssertReport {
        config: *cfg,
        stats: assertion_stats(&outcomes),
        encounters,
        faults,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticReport {
    pub gap: f64,
    pub trials: usize,
    pub seed: u64,
    pub histogram: ResponseHistogram,
    /// Onset time per trial, `None` when the pedestrian never started.
    pub onsets: Vec<Option<f64>>,
    /// Vehicle passing instant (s).
    pub vehicle_pass: Option<f64>,
    pub faults: Vec<Fault>,
}

/// Seed of trial `k` derived from the base seed.
pub fn trial_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Seeded trials of the stochastic crossing decision at one gap.
pub fn run_stochastic(
    gap: f64,
    trials: usize,
    seed: u64,
    world: &WorldConfig,
    model: &ModelConfig,
    threads: Option<usize>,
) -> Result<StochasticReport> {
    world.validate()?;
    model.validate(world.dt)?;
    let spec = build_cd_stochastic(gap)?;
    let results = par_map((0..trials).collect(), threads, |k| {
        run(&spec, world, model, DecisionMode::Stochastic(trial_seed(seed, k)))
    })?;
    let mut outcomes = Vec::with_capacity(trials);
    let mut faults = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => faults.push(Fault::new(k, &e)),
        }
    }
    let vehicle_pass = outcomes.iter().find_map(|o| o.agents[1].crossing_time);
    Ok(StochasticReport {
        gap,
        trials,
        seed,
        histogram: response_histogram(&outcomes, crate::metrics::HISTOGRAM_BIN),
        onsets: outcomes.iter().map(|o| o.agents[0].onset_time).collect(),
        vehicle_pass,
        faults,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_row_major_and_inclusive() {
        let g = SweepGrid {
            rows: Axis::new("a", 0.0, 1.0, 3),
            cols: Axis::new("b", 10.0, 20.0, 2),
        };
        let cells = g.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], (0, 0, 0.0, 10.0));
        assert_eq!(cells[1], (0, 1, 0.0, 20.0));
        assert_eq!(cells[5], (2, 1, 1.0, 20.0));
    }

    #[test]
    fn default_grids_span_reference_ranges() {
        let pp = SweepGrid::pp(32, 32);
        assert_eq!(pp.rows.values().first(), Some(&0.28));
        assert_eq!(pp.rows.values().last(), Some(&0.71));
        assert_eq!(pp.cols.values().last(), Some(&10.0));
        let cd = SweepGrid::cd(100, 100);
        assert_eq!(cd.len(), 10_000);
        assert!((cd.rows.values()[1] - 0.0505).abs() < 1e-4);
        assert_eq!(SweepGrid::cr(100, 100).cols.hi, 2.5);
    }

    #[test]
    fn invalid_axes_rejected() {
        let mut g = SweepGrid::cd(2, 2);
        g.rows.n = 0;
        assert!(g.validate().is_err());
        assert!(par_map(vec![1], Some(0), |x: i32| x).is_err());
    }

    #[test]
    fn cd_sweep_independent_of_threads() {
        let grid = SweepGrid::cd(2, 2);
        let world = crate::scenarios::ScenarioTag::Cd.default_world();
        let model = ModelConfig::default();
        let a = run_cd_sweep(&grid, &world, &model, Some(1)).unwrap();
        let b = run_cd_sweep(&grid, &world, &model, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 4);
        assert_eq!(a.fault_count(), 0);
    }

    #[test]
    fn trial_seeds_differ() {
        assert_ne!(trial_seed(7, 0), trial_seed(7, 1));
        assert_eq!(trial_seed(7, 0), 7);
    }
}
