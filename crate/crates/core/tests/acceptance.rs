//! Exit criteria. Each test writes one PASS/FAIL line to stdout (uncaptured)
//! and then asserts.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crossing_sim::agent_model::UtilityParams;
use crossing_sim::control::{
    decide_deterministic, step_accumulators, AccumulatorBank, AccumulatorConfig, ActionEvaluation, ModelConfig,
    DEFAULT_MAGNITUDES,
};
use crossing_sim::engine::{run, DecisionMode, Visibility, WorldConfig};
use crossing_sim::kinematics::{extrapolate, time_to_collision, AgentState, Vec2};
use crossing_sim::metrics::{mpd_decile_table, pedestrian_crossed_first, Rejection};
use crossing_sim::scenarios::{
    build_cd, build_cr_assert, AgentSpec, AssertConfig, PpGeometry, ScenarioSpec, ScenarioTag, PP_GOAL_BEYOND,
    VEHICLE_SPEED,
};
use crossing_sim::sweep::{
    cd_cell, run_assert_battery, run_cd_sweep, run_cr_sweep, run_pp_sweep, run_stochastic, CellSummary, SweepGrid,
    SweepResult,
};

fn report(criterion: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance {criterion}: {verdict} | {detail}").unwrap();
}

fn check(criterion: &str, pass: bool, detail: String) {
    report(criterion, pass, detail.clone());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------- 1

#[test]
fn c1_free_speed_convergence() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        tag: ScenarioTag::Pp,
        crossing: Vec2::new(0.0, 0.0),
        visibility: Visibility::AlwaysVisible,
        agents: vec![AgentSpec {
            name: "walker".into(),
            position: Vec2::new(0.0, -5.0),
            speed: 0.0,
            heading: Vec2::new(0.0, 1.0),
            goal: Vec2::new(0.0, 200.0),
            params: UtilityParams::pedestrian(1.0, 0.38, 0.0, 1.0),
            reactive: true,
        }],
    };
    let o = run(
        &spec,
        &ScenarioTag::Pp.default_world(),
        &ModelConfig::default(),
        DecisionMode::Deterministic,
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let v_free = 1.0 / (2.0 * 0.38);
    let rows: Vec<_> = o.log.agent_rows(0).collect();
    let last_primitive = rows.iter().rposition(|r| r.primitive.is_some()).unwrap_or(0);
    let settled: Vec<f64> = rows[last_primitive..].iter().skip(7).map(|r| r.speed).collect();
    let end = rows.last().unwrap();
    let quiet = end.time - rows[last_primitive].time;
    let within = settled.iter().all(|v| (v - v_free).abs() <= 0.5);
    let pass = within && !settled.is_empty() && quiet > 5.0 && elapsed < 1.0;
    check(
        "1 free-speed convergence",
        pass,
        format!(
            "final speed {:.3} m/s vs v_free {v_free:.3}, last primitive at {:.2} s, quiet for {quiet:.1} s, runtime {elapsed:.3} s",
            end.speed, rows[last_primitive].time
        ),
    );
}

// ---------------------------------------------------------------- 2, 3

fn pp_sweep(d0: f64) -> &'static SweepResult {
    static SWEEPS: [OnceLock<SweepResult>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = &SWEEPS[(d0 as usize) - 6];
    slot.get_or_init(|| {
        let geometry = PpGeometry {
            d0,
            goal_beyond: PP_GOAL_BEYOND,
        };
        run_pp_sweep(
            &SweepGrid::pp(32, 32),
            geometry,
            &ScenarioTag::Pp.default_world(),
            &ModelConfig::default(),
            None,
        )
        .unwrap()
    })
}

fn pp_verdicts(r: &SweepResult) -> impl Iterator<Item = (usize, usize, &crossing_sim::metrics::SweepCellVerdict)> {
    r.cells.iter().map(|c| match &c.summary {
        CellSummary::Pp { verdict, .. } => (c.row, c.col, verdict),
        _ => unreachable!("pp sweep"),
    })
}

#[test]
fn c2_pp_region_shape() {
    let mut lines = Vec::new();
    let mut pass = true;
    for d0 in [6.0, 7.0, 8.0] {
        let start = Instant::now();
        let r = pp_sweep(d0);
        let (n_kdv, n_kc) = (r.grid.rows.n, r.grid.cols.n);
        let cells: Vec<_> = pp_verdicts(r).collect();
        let a = cells.iter().filter(|(_, j, _)| *j == 0).all(|(_, _, v)| !v.accepted);
        let co_rejected = cells
            .iter()
            .filter(|(i, _, v)| *i == 0 && v.rejected_reason.contains(&Rejection::CoHigh))
            .count();
        let b = co_rejected > 0;
        let c = cells.iter().filter(|(i, _, _)| *i == n_kdv - 1).all(|(_, _, v)| {
            !v.accepted
                && (v.rejected_reason.contains(&Rejection::FpaLow) || v.rejected_reason.contains(&Rejection::SpdLow))
        });
        let intermediate = |i: usize, j: usize| i > 0 && i < n_kdv - 1 && j > 0 && j < n_kc;
        let accepted = cells
            .iter()
            .filter(|(i, j, v)| v.accepted && intermediate(*i, *j))
            .count();
        let d = accepted > 0;
        let max_lapf = cells.iter().map(|(_, _, v)| v.lapf).fold(f64::NAN, f64::max);
        let max_spd = cells.iter().map(|(_, _, v)| v.spd).fold(f64::NAN, f64::max);
        pass &= a && b && c && d;
        lines.push(format!(
            "D0={d0}: (a) {} (b) {} [{co_rejected} CO cells] (c) {} (d) {} [{accepted} accepted; max LAPF {max_lapf:.0}%, max SPD {max_spd:.0}%] in {:.0} s",
            ok(a),
            ok(b),
            ok(c),
            ok(d),
            start.elapsed().as_secs_f64()
        ));
    }
    check("2 pp region shape", pass, lines.join("; "));
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "no"
    }
}

#[test]
fn c3_mpd_repulsion() {
    let r = pp_sweep(7.0);
    let pairs: Vec<(f64, f64)> = r
        .cells
        .iter()
        .filter_map(|c| match &c.summary {
            CellSummary::Pp { verdict, mpd } if verdict.accepted => Some(mpd.clone()),
            _ => None,
        })
        .flatten()
        .collect();
    let detail;
    let pass = match mpd_decile_table(&pairs) {
        Ok(table) => {
            let low = &table[0];
            let min_cross = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            detail = format!(
                "{} accepted runs; lowest decile mean MPD {:.3} m at t_see -> {:.3} m at t_cross; smallest MPD at t_cross {min_cross:.3} m",
                pairs.len(),
                low.mean_at_tsee,
                low.mean_at_tcross
            );
            low.mean_at_tcross > low.mean_at_tsee && min_cross >= 1.0
        }
        Err(e) => {
            detail = format!("no decile table over {} accepted runs at D0=7: {e}", pairs.len());
            false
        }
    };
    check("3 mpd repulsion", pass, detail);
}

// ---------------------------------------------------------------- 4, 5

#[test]
fn c4_cd_minimal_gaps() {
    let start = Instant::now();
    let world = ScenarioTag::Cd.default_world();
    let model = ModelConfig::default();
    let probes = [(0.051, 0.0, 3.96), (0.0, 0.51, 2.88), (0.0, 1.01, 2.16)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k_c, k_sc, expected) in probes {
        let (summary, faults) = cd_cell(k_c, k_sc, &world, &model);
        let CellSummary::Cd { min_gap } = summary else {
            unreachable!()
        };
        let hit = faults.is_empty() && (min_gap - expected).abs() <= 0.36 + 1e-9;
        pass &= hit;
        parts.push(format!(
            "(k_c={k_c}, k_sc={k_sc}) {min_gap:.2} s vs {expected} {}",
            ok(hit)
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 5.0;
    check(
        "4 cd minimal gaps",
        pass,
        format!("{}; runtime {elapsed:.2} s", parts.join(", ")),
    );
}

#[test]
fn c5_behavioral_triptych() {
    let world = ScenarioTag::Cd.default_world();
    let model = ModelConfig::default();
    let outcome = |gap: f64| {
        let spec = build_cd(gap * VEHICLE_SPEED, 1.0, 0.0).unwrap();
        run(&spec, &world, &model, DecisionMode::Deterministic).unwrap()
    };
    let short = outcome(2.16);
    let mid = outcome(4.32);
    let long = outcome(6.47);
    let yields = !short.collision && short.pass_order.first() == Some(&1) && short.pass_order.contains(&0);
    let mid_ok = pedestrian_crossed_first(&mid) && mid.agents[0].peak_speed >= 1.4;
    let long_ok = pedestrian_crossed_first(&long) && long.agents[0].peak_speed < 1.5;
    check(
        "5 cd triptych",
        yields && mid_ok && long_ok,
        format!(
            "2.16 s: yields {} ; 4.32 s: first {} peak {:.2} m/s ; 6.47 s: first {} peak {:.2} m/s",
            ok(yields),
            ok(pedestrian_crossed_first(&mid)),
            mid.agents[0].peak_speed,
            ok(pedestrian_crossed_first(&long)),
            long.agents[0].peak_speed
        ),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn c6_cr_partition() {
    let start = Instant::now();
    let r = run_cr_sweep(
        &SweepGrid::cr(100, 100),
        &ScenarioTag::Cr.default_world(),
        &ModelConfig::default(),
        None,
    )
    .unwrap();
    let (mut a_cells, mut a_dom, mut b_cells, mut b_collisions, mut c_cells, mut c_show) = (0, 0, 0, 0, 0, 0);
    let (mut c_veh, mut c_runs) = (0, 0);
    for cell in &r.cells {
        let CellSummary::Cr {
            classes,
            veh_yielded,
            neither,
            collisions,
            ..
        } = &cell.summary
        else {
            unreachable!()
        };
        let (k_c, k_sc) = (cell.row_value, cell.col_value);
        if k_c < 0.28 && k_sc < 0.13 {
            a_cells += 1;
            a_dom += (2 * (neither + collisions) > classes.len()) as usize;
        }
        if k_c > 0.28 && k_sc > 0.38 {
            b_cells += 1;
            b_collisions += collisions;
        }
        if k_c < 0.28 && k_sc > 0.38 {
            c_cells += 1;
            c_show += (*veh_yielded > 0) as usize;
            c_veh += veh_yielded;
            c_runs += classes.len();
        }
    }
    let pass = a_dom == a_cells && b_collisions == 0 && c_show == c_cells && r.fault_count() == 0;
    check(
        "6 cr partition",
        pass,
        format!(
            "(a) {a_dom}/{a_cells} cells dominated by neither/collision; (b) {b_collisions} collisions over {b_cells} cells; (c) {c_show}/{c_cells} cells with vehicle yields ({:.0}% of runs); {:.0} s",
            100.0 * c_veh as f64 / c_runs.max(1) as f64,
            start.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn c7_assertiveness_battery() {
    let start = Instant::now();
    let cfg = AssertConfig::default();
    let n = build_cr_assert(&cfg).unwrap().len();
    let r = run_assert_battery(
        &cfg,
        &ScenarioTag::CrAssert.default_world(),
        &ModelConfig::default(),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let s = &r.stats;
    let in_lag = s.pct_accelerated_in_lag.unwrap_or(f64::NAN);
    let count_ok = n == 859 && s.runs == 859;
    let acc_ok = (s.pct_accelerated - 72.0).abs() <= 8.0;
    let lag_ok = (in_lag - 86.0).abs() <= 8.0;
    check(
        "7 assertiveness battery",
        count_ok && acc_ok && lag_ok && elapsed < 30.0,
        format!(
            "{n} encounters {}; accelerated {:.1}% {}; of those in lag {in_lag:.1}% {} ({} of {} encounters start in lag); runtime {elapsed:.2} s",
            ok(count_ok),
            s.pct_accelerated,
            ok(acc_ok),
            ok(lag_ok),
            s.lag_runs,
            s.runs
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn c8_stochastic_crossing_pattern() {
    let world = ScenarioTag::CdStoch.default_world();
    let model = ModelConfig::default();
    let frac = |gap: f64| {
        let r = run_stochastic(gap, 600, 7, &world, &model, None).unwrap();
        assert!(r.faults.is_empty());
        (
            r.histogram.pre_fraction(),
            r.histogram.post_fraction(),
            r.histogram.onsets,
        )
    };
    let (short, mid, long) = (frac(2.29), frac(4.58), frac(6.87));
    let pass = short.1 > 0.6 && long.0 > 0.6 && mid.0 > 0.1 && mid.1 > 0.1;
    let show = |(pre, post, n): (f64, f64, usize)| format!("pre {:.0}% post {:.0}% of {n}", 100.0 * pre, 100.0 * post);
    check(
        "8 stochastic pattern",
        pass,
        format!(
            "600 trials/gap, seed 7: 2.29 s {}; 4.58 s {}; 6.87 s {}",
            show(short),
            show(mid),
            show(long)
        ),
    );
}

// ---------------------------------------------------------------- 9

fn random_state(rng: &mut ChaCha8Rng, accelerating: bool) -> AgentState {
    let h: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let dir = Vec2::new(h.cos(), h.sin());
    let a = if accelerating { rng.random_range(-2.0..2.0) } else { 0.0 };
    let v = rng.random_range(0.2..12.0);
    let pos = if rng.random_bool(0.5) {
        // headed for the origin
        dir * (-v * rng.random_range(0.5..6.0))
    } else {
        Vec2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0))
    };
    AgentState {
        acceleration: a,
        ..AgentState::moving(pos, v, dir)
    }
}

fn brute_force_tau(a: &AgentState, b: &AgentState, d_c: f64, horizon: f64) -> (Option<f64>, f64) {
    let mut closest = f64::INFINITY;
    for k in 0..=(horizon / 1e-3).round() as usize {
        let t = k as f64 * 1e-3;
        let d = (extrapolate(a, t).position - extrapolate(b, t).position).norm();
        closest = closest.min(d);
        if d < d_c {
            return (Some(t), closest);
        }
    }
    (None, closest)
}

#[test]
fn c9_oracles_and_properties() {
    let mut parts = Vec::new();
    let mut pass = true;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut bad, mut courses) = (0.0f64, 0, 0);
    for k in 0..1000 {
        let (a, b) = (random_state(&mut rng, k % 2 == 0), random_state(&mut rng, k % 3 == 0));
        let d_c = rng.random_range(0.5..3.0);
        let fast = time_to_collision(&a, &b, d_c, 20.0).tau;
        match (fast, brute_force_tau(&a, &b, d_c, 20.0)) {
            (Some(f), (Some(s), _)) => {
                worst = worst.max((f - s).abs());
                courses += 1;
            }
            (None, (None, _)) => {}
            (Some(_), (None, closest)) if closest - d_c < 1e-3 => {}
            _ => bad += 1,
        }
    }
    let ttc_ok = bad == 0 && worst <= 2e-3;
    pass &= ttc_ok;
    parts.push(format!(
        "ttc vs scan: {courses} courses, max diff {worst:.1e} s, {bad} disagreements {}",
        ok(ttc_ok)
    ));

    let cfg = AccumulatorConfig {
        sigma: 0.0,
        threshold: 10.0,
        time_constant: 0.5,
    };
    let mut bank = AccumulatorBank::new(5, cfg);
    let ones = ActionEvaluation::from_deltas(&DEFAULT_MAGNITUDES, &[0.0, 1.0, 1.0, 1.0, 1.0]);
    let seq: Vec<f64> = (0..3)
        .map(|_| {
            step_accumulators(&mut bank, &ones, 0.1, &[0.0; 5]);
            bank.evidence[1]
        })
        .collect();
    let hand_ok = (seq[0] - 0.2).abs() < 1e-15 && (seq[1] - 0.36).abs() < 1e-15 && (seq[2] - 0.488).abs() < 1e-15;
    pass &= hand_ok;
    parts.push(format!("hand iteration {seq:?} {}", ok(hand_ok)));

    let margins = ActionEvaluation::from_deltas(&DEFAULT_MAGNITUDES, &[0.0, -0.4, 0.3, 0.7, 0.1]);
    let mut bank = AccumulatorBank::new(
        5,
        AccumulatorConfig {
            sigma: 0.0,
            threshold: 1e9,
            time_constant: 0.4,
        },
    );
    for _ in 0..2000 {
        step_accumulators(&mut bank, &margins, 0.05, &[0.0; 5]);
    }
    let converged = (1..5).all(|m| (bank.evidence[m] - margins.deltas[m]).abs() < 1e-9);
    pass &= converged;
    parts.push(format!("noise-free convergence to margins {}", ok(converged)));

    let mut bank = AccumulatorBank::new(
        5,
        AccumulatorConfig {
            sigma: 0.0,
            threshold: 0.5,
            time_constant: 0.4,
        },
    );
    let fired = (0..100).find_map(|_| step_accumulators(&mut bank, &margins, 0.05, &[0.0; 5]));
    let reset_ok = fired == decide_deterministic(&margins) && bank.evidence.iter().all(|e| *e == 0.0);
    pass &= reset_ok;
    parts.push(format!("trigger then reset {}", ok(reset_ok)));

    let world = ScenarioTag::CdStoch.default_world();
    let model = ModelConfig::default();
    let one = run_stochastic(4.58, 40, 9, &world, &model, Some(1)).unwrap();
    let four = run_stochastic(4.58, 40, 9, &world, &model, Some(4)).unwrap();
    let grid = SweepGrid::cd(4, 4);
    let cd_world = ScenarioTag::Cd.default_world();
    let s1 = run_cd_sweep(&grid, &cd_world, &model, Some(1)).unwrap();
    let s3 = run_cd_sweep(&grid, &cd_world, &model, Some(3)).unwrap();
    let repro = one == four && s1 == s3;
    pass &= repro;
    parts.push(format!("bit-identical across thread counts {}", ok(repro)));

    let mut shift = 0.0f64;
    for x in [30.0, 60.0, 90.0] {
        let spec = build_cd(x, 1.0, 0.0).unwrap();
        let coarse = run(&spec, &cd_world, &model, DecisionMode::Deterministic).unwrap();
        let fine_world = WorldConfig {
            dt: cd_world.dt / 2.0,
            ..cd_world
        };
        let fine = run(&spec, &fine_world, &model, DecisionMode::Deterministic).unwrap();
        for (p, q) in coarse.agents.iter().zip(&fine.agents) {
            shift = match (p.crossing_time, q.crossing_time) {
                (Some(s), Some(t)) => shift.max((s - t).abs()),
                (None, None) => shift,
                _ => f64::INFINITY,
            };
        }
    }
    let dt_ok = shift < 0.1;
    pass &= dt_ok;
    parts.push(format!("dt halving max crossing shift {shift:.3} s {}", ok(dt_ok)));

    check("9 oracles and properties", pass, parts.join("; "));
}
