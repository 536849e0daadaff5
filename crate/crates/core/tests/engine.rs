use crossing_sim::control::ModelConfig;
use crossing_sim::engine::{run, DecisionMode, RunOutcome, WorldConfig};
use crossing_sim::metrics::{min_crossable_gap, response_histogram};
use crossing_sim::scenarios::{
    build_cd, build_cd_stochastic, build_cr, build_pp, cd_start_positions, PpGeometry, ScenarioSpec, ScenarioTag,
    VEHICLE_SPEED,
};
use crossing_sim::sweep::{run_pp_sweep, run_stochastic, SweepGrid};

/// Scenario runs used as regression cases.
fn regression_cases() -> Vec<ScenarioSpec> {
    let mut specs: Vec<ScenarioSpec> = [30.0, 60.0, 90.0]
        .iter()
        .map(|&x| build_cd(x, 1.0, 0.0).unwrap())
        .collect();
    specs.extend([20.0, 40.0, 60.0, 80.0].iter().map(|&x| build_cr(x, 1.0, 1.0).unwrap()));
    specs.extend(
        [(0.9, 0.5), (1.3, 1.1), (0.7, 1.5)]
            .iter()
            .map(|&(a, b)| build_pp(a, b, 0.45, 2.0, PpGeometry::default()).unwrap()),
    );
    specs
}

fn simulate(spec: &ScenarioSpec, world: &WorldConfig, mode: DecisionMode) -> RunOutcome {
    run(spec, world, &ModelConfig::default(), mode).unwrap()
}

#[test]
fn reruns_are_bit_identical() {
    for spec in regression_cases() {
        let world = spec.tag.default_world();
        assert_eq!(
            simulate(&spec, &world, DecisionMode::Deterministic),
            simulate(&spec, &world, DecisionMode::Deterministic)
        );
    }
    let spec = build_cd_stochastic(4.58).unwrap();
    let world = ScenarioTag::CdStoch.default_world();
    let a = simulate(&spec, &world, DecisionMode::Stochastic(3));
    assert_eq!(a, simulate(&spec, &world, DecisionMode::Stochastic(3)));
    let others: Vec<_> = (4..12)
        .map(|s| simulate(&spec, &world, DecisionMode::Stochastic(s)).log)
        .collect();
    assert!(others.iter().any(|l| *l != a.log), "seed has no effect");
}

#[test]
fn speeds_never_negative_and_collision_flag_matches_log() {
    let mut specs = regression_cases();
    // Reckless agents so that some runs do collide.
    specs.extend([30.0, 40.0].iter().map(|&x| build_cr(x, 0.0, 0.0).unwrap()));
    specs.push(build_pp(1.0, 1.0, 0.45, 0.0, PpGeometry::default()).unwrap());
    let mut collisions = 0;
    for spec in specs {
        let world = spec.tag.default_world();
        let o = simulate(&spec, &world, DecisionMode::Deterministic);
        assert!(o.log.rows.iter().all(|r| r.speed >= 0.0));
        let min = o.log.min_pairwise_distance();
        assert_eq!(o.collision, min < world.collision_distance, "{:?}", spec.tag);
        assert!((o.min_distance - min).abs() < 1e-12);
        collisions += o.collision as usize;
    }
    assert!(collisions > 0);
}

#[test]
fn halving_dt_keeps_crossing_times() {
    for spec in regression_cases() {
        let world = spec.tag.default_world();
        let fine = WorldConfig {
            dt: world.dt / 2.0,
            ..world
        };
        let a = simulate(&spec, &world, DecisionMode::Deterministic);
        let b = simulate(&spec, &fine, DecisionMode::Deterministic);
        for (x, y) in a.agents.iter().zip(&b.agents) {
            match (x.crossing_time, y.crossing_time) {
                (Some(s), Some(t)) => assert!((s - t).abs() < 0.1, "{:?} {}: {s} vs {t}", spec.tag, x.name),
                (None, None) => {}
                other => panic!("{:?} {}: {other:?}", spec.tag, x.name),
            }
        }
    }
}

#[test]
fn pp_sweep_independent_of_thread_count() {
    let grid = SweepGrid::pp(3, 3);
    let world = ScenarioTag::Pp.default_world();
    let model = ModelConfig::default();
    let one = run_pp_sweep(&grid, PpGeometry::default(), &world, &model, Some(1)).unwrap();
    let three = run_pp_sweep(&grid, PpGeometry::default(), &world, &model, Some(3)).unwrap();
    assert_eq!(one, three);
}

#[test]
fn stochastic_trials_independent_of_thread_count() {
    let world = ScenarioTag::CdStoch.default_world();
    let model = ModelConfig::default();
    let one = run_stochastic(4.58, 60, 7, &world, &model, Some(1)).unwrap();
    let four = run_stochastic(4.58, 60, 7, &world, &model, Some(4)).unwrap();
    assert_eq!(one, four);
    let h = &one.histogram;
    assert!(h.onsets > 0);
    assert!((h.pre_fraction() + h.post_fraction() - 1.0).abs() < 1e-12);
}

#[test]
fn histogram_fractions_sum_to_one() {
    let world = ScenarioTag::CdStoch.default_world();
    for gap in [2.29, 6.87] {
        let spec = build_cd_stochastic(gap).unwrap();
        let runs: Vec<_> = (0..20)
            .map(|s| simulate(&spec, &world, DecisionMode::Stochastic(s)))
            .collect();
        let h = response_histogram(&runs, 0.25);
        assert_eq!(h.pre_count() + h.post_count(), h.onsets);
        assert!((h.pre_fraction() + h.post_fraction() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn crossable_gap_non_increasing_in_vehicle_caution() {
    let world = ScenarioTag::Cd.default_world();
    let gap = |k_sc: f64| {
        let runs: Vec<_> = cd_start_positions()
            .iter()
            .map(|&x| {
                (
                    x / VEHICLE_SPEED,
                    simulate(&build_cd(x, 0.0, k_sc).unwrap(), &world, DecisionMode::Deterministic),
                )
            })
            .collect();
        min_crossable_gap(runs.iter().map(|(g, o)| (*g, o)))
    };
    let gaps: Vec<f64> = [0.0, 0.51, 1.01].iter().map(|&k| gap(k)).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
}
