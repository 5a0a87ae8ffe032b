//! End-to-end pipeline checks: simulate → clean → derive → train →
//! evaluate, and the drift-compensated closed loop against its
//! uncompensated twin.

mod common;

use driftlab::control::{run_closed_loop, Compensation, LoopConfig};
use driftlab::evalreport::{evaluate, train_test_split, SplitPolicy};
use driftlab::flightsim::{simulate, SimConfig};
use driftlab::svr::{load_model, save_model, train_with_report, TrainOptions};
use driftlab::telemetry::{clean, derive_velocities, RegressionDataset};

fn run_dataset(cfg: &SimConfig) -> RegressionDataset {
    let trace = simulate(cfg).unwrap();
    let cleaned = clean(&trace.log, 0.2, 2).unwrap();
    derive_velocities(&cleaned).unwrap()
}

fn sized(mut cfg: SimConfig, duration: f64) -> SimConfig {
    cfg.duration = duration;
    cfg
}

#[test]
fn model_trained_on_one_seed_beats_null_on_a_fresh_seed() {
    let train_ds = run_dataset(&sized(SimConfig::new(101), 60.0));
    let (pair, _) = train_with_report(&train_ds, &TrainOptions::default()).unwrap();

    let test_ds = run_dataset(&sized(SimConfig::new(202), 60.0));
    let report = evaluate(&pair, &test_ds).unwrap();
    assert!(
        report.rmse_x < report.null_rmse_x,
        "x: rmse {} vs null {}",
        report.rmse_x,
        report.null_rmse_x
    );
    assert!(
        report.rmse_y < report.null_rmse_y,
        "y: rmse {} vs null {}",
        report.rmse_y,
        report.null_rmse_y
    );
    assert!(report.skill_x > 0.0 && report.skill_x <= 1.0);
}

#[test]
fn by_run_protocol_with_windy_and_calm_runs() {
    let runs: Vec<RegressionDataset> = vec![
        run_dataset(&sized(SimConfig::new(301).calm(), 40.0)),
        run_dataset(&sized(SimConfig::new(302).windy(), 40.0)),
        run_dataset(&sized(SimConfig::new(303).calm(), 40.0)),
        run_dataset(&sized(SimConfig::new(304).windy(), 40.0)),
    ];
    // hold out the last windy run; train on calm + windy mix
    let (train_ds, test_ds) =
        train_test_split(&runs, &SplitPolicy::ByRun { holdout: vec![3] }).unwrap();
    assert_eq!(train_ds.len() + test_ds.len(), runs.iter().map(|r| r.len()).sum());
    let (pair, _) = train_with_report(&train_ds, &TrainOptions::default()).unwrap();
    let report = evaluate(&pair, &test_ds).unwrap();
    assert!(report.skill_x > 0.0, "skill_x {}", report.skill_x);
    assert!(report.skill_y > 0.0, "skill_y {}", report.skill_y);
}

#[test]
fn saved_model_drives_the_same_evaluation() {
    let ds = run_dataset(&sized(SimConfig::new(55), 40.0));
    let (pair, _) = train_with_report(&ds, &TrainOptions::default()).unwrap();
    let restored = load_model(&save_model(&pair)).unwrap();
    let a = evaluate(&pair, &ds).unwrap();
    let b = evaluate(&restored, &ds).unwrap();
    assert_eq!(a.rmse_x, b.rmse_x);
    assert_eq!(a.rmse_y, b.rmse_y);
}

#[test]
fn svr_feedforward_beats_uncompensated_loop_under_steady_wind() {
    // train on open-loop data from the same airframe (same coupling),
    // mixing calm and windy conditions for coverage
    let runs = [
        run_dataset(&sized(SimConfig::new(401), 50.0)),
        run_dataset(&sized(SimConfig::new(402).windy(), 50.0)),
        run_dataset(&sized(SimConfig::new(403).calm(), 50.0)),
    ];
    let train_ds = RegressionDataset::concat(&runs);
    let (pair, _) = train_with_report(&train_ds, &TrainOptions::default()).unwrap();

    // steady wind, no gusts, start on the setpoint
    let mut sim = SimConfig::new(77).noise_free();
    sim.duration = 10.0;
    sim.wind.mean = 6.0;
    sim.wind.gust_amplitude = 0.0;
    sim.commands.wander_std = 0.0;
    sim.bias_accel = 0.0;

    let base = LoopConfig {
        initial_position: [0.0, 0.0],
        ..LoopConfig::default()
    };
    let off = run_closed_loop(&sim, &base).unwrap();
    let compensated = run_closed_loop(
        &sim,
        &LoopConfig {
            compensation: Compensation::SvrFeedforward(pair),
            ..base
        },
    )
    .unwrap();

    assert!(!off.escaped() && !compensated.escaped());
    assert!(
        compensated.mean_abs_error() < off.mean_abs_error(),
        "compensated {} vs off {}",
        compensated.mean_abs_error(),
        off.mean_abs_error()
    );
}
