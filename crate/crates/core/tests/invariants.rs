//! Whole-run invariants: determinism, well-prepared data and snapshot
//! continuity.

use std::f64::consts::PI;

use nsfp1_core::diagnostics;
use nsfp1_core::field;
use nsfp1_core::harness::{self, RunSettings, SweepConfig};
use nsfp1_core::solver::{self, SolverConfig};
use nsfp1_core::state::{make_initial_data, InitialRecipe, Preparedness};
use nsfp1_core::{PeriodicGrid, ScaledParameters, Spectral};

fn small_run() -> RunSettings {
    let mut run = RunSettings::default();
    run.grid = PeriodicGrid::cube(2, 2.0 * PI, 16).unwrap();
    run.solver.t_end = 0.1;
    run
}

#[test]
fn sweep_is_bitwise_identical_across_thread_counts() {
    let config = SweepConfig {
        epsilons: vec![0.2, 0.1, 0.05],
        run: small_run(),
        ..Default::default()
    };
    let in_pool = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let report = pool.install(|| harness::run_epsilon_sweep(&config)).unwrap();
        serde_json::to_string(&report).unwrap()
    };
    let one = in_pool(1);
    assert_eq!(one, in_pool(3));
    assert_eq!(one, in_pool(1));
}

#[test]
fn well_prepared_data_has_no_fast_pressure() {
    let grid = PeriodicGrid::cube(2, 2.0 * PI, 32).unwrap();
    let sp = Spectral::new(&grid);
    for eps in [0.2, 0.05, 0.01] {
        let params = ScaledParameters::default().with_epsilon(eps).unwrap();
        let recipe = InitialRecipe {
            preparedness: Preparedness::WellPrepared,
            ..Default::default()
        };
        let s = make_initial_data(&grid, &params, &recipe).unwrap();
        let (pt, _) = diagnostics::equivalent_variables(&sp, &s, &params);
        assert!(sp.l2_norm(&pt) <= 1e-10, "eps {eps}: {:e}", sp.l2_norm(&pt));
    }
}

/// Largest `L²` change of the transformed vorticity between snapshots.
fn vorticity_step(interval: f64) -> f64 {
    let grid = PeriodicGrid::cube(2, 2.0 * PI, 16).unwrap();
    let sp = Spectral::new(&grid);
    let params = ScaledParameters::default().with_epsilon(0.1).unwrap();
    let s0 = make_initial_data(&grid, &params, &InitialRecipe::default()).unwrap();
    let cfg = SolverConfig {
        dt: 2.5e-3,
        t_end: 0.2,
        snapshot_interval: interval,
        ..Default::default()
    };
    let traj = solver::simulate(&grid, &params, &cfg, &s0).unwrap();
    let w: Vec<_> = traj
        .snapshots
        .iter()
        .map(|s| diagnostics::transformed_vorticity(&sp, &s.u, &s.theta).unwrap())
        .collect();
    w.windows(2)
        .map(|pair| sp.l2_norm(&field::sub(&pair[1][0], &pair[0][0])))
        .fold(0.0, f64::max)
}

#[test]
fn vorticity_changes_in_proportion_to_cadence() {
    let coarse = vorticity_step(0.02);
    let fine = vorticity_step(0.01);
    let ratio = fine / coarse;
    assert!(coarse > 0.0);
    assert!((0.35..0.65).contains(&ratio), "ratio {ratio}");
}
