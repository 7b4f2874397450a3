mod common;

use common::{random_energy, random_infidelity, random_system};
use qswitch_core::problems::{build_cnot, build_energy, build_not, all_ones_coupling, FeasibleKind, Objective};
use qswitch_core::random::{random_grid_values, seeded};
use qswitch_core::relaxation::{evaluate, grape_gradient, penalty};
use qswitch_core::rounding::ControllerSequence;
use qswitch_core::sto::{sto_gradient, sto_objective, EigCache, SwitchingSchedule};
use qswitch_core::{ControlGrid, ControlSystem};
use rand::Rng;

const GRAPE_REL_TOL: f64 = 1e-5;
const STO_REL_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;

/// Max coordinate error of `grape_gradient` against central differences,
/// relative to the largest gradient entry.
fn grape_fd_error(sys: &ControlSystem, obj: &Objective, grid: &ControlGrid, rho: f64) -> f64 {
    let eval = grape_gradient(sys, obj, grid, rho).unwrap();
    let f = |v: &[f64]| {
        let g = ControlGrid::new(grid.n_steps(), grid.n_ctrl(), grid.t_f(), v.to_vec()).unwrap();
        evaluate(sys, obj, &g).unwrap() + penalty(&g, rho)
    };
    let mut worst: f64 = 0.0;
    let scale = eval.gradient.iter().fold(1e-12_f64, |m, g| m.max(g.abs()));
    for i in 0..grid.values().len() {
        let mut up = grid.values().to_vec();
        let mut down = up.clone();
        up[i] += FD_STEP;
        down[i] -= FD_STEP;
        let fd = (f(&up) - f(&down)) / (2.0 * FD_STEP);
        worst = worst.max((fd - eval.gradient[i]).abs() / scale);
    }
    worst
}

/// Interior grid so that every central difference stays in the box.
fn interior_grid(rng: &mut qswitch_core::random::SeededRng, t: usize, n: usize, t_f: f64) -> ControlGrid {
    let v = random_grid_values(rng, t, n)
        .into_iter()
        .map(|x| 0.05 + 0.9 * x)
        .collect();
    ControlGrid::new(t, n, t_f, v).unwrap()
}

#[test]
fn grape_matches_finite_differences_on_random_energy_systems() {
    for case in 0..20u64 {
        let mut rng = seeded(100 + case);
        let dim = [2, 4, 8, 16][case as usize % 4];
        let t = 2 + (case as usize % 5);
        let sys = random_system(&mut rng, dim, 2, FeasibleKind::Sos1, 1.5);
        let obj = random_energy(&mut rng, dim);
        let grid = interior_grid(&mut rng, t, 2, 1.5);
        let err = grape_fd_error(&sys, &obj, &grid, 0.0);
        assert!(err <= GRAPE_REL_TOL, "case {case}: relative error {err:e}");
    }
}

#[test]
fn grape_matches_finite_differences_on_random_gate_systems() {
    for case in 0..20u64 {
        let mut rng = seeded(200 + case);
        let dim = [2, 3, 4, 8, 16][case as usize % 5];
        let t = 2 + (case as usize % 4);
        let n = 1 + (case as usize % 3);
        let sys = random_system(&mut rng, dim, n, FeasibleKind::FreeBinary, 2.0);
        let obj = random_infidelity(&mut rng, dim);
        let grid = interior_grid(&mut rng, t, n, 2.0);
        let rho = if case % 2 == 0 { 0.0 } else { 0.7 };
        let err = grape_fd_error(&sys, &obj, &grid, rho);
        assert!(err <= GRAPE_REL_TOL, "case {case}: relative error {err:e}");
    }
}

#[test]
fn grape_matches_finite_differences_on_named_families() {
    let mut rng = seeded(7);
    let families = [
        build_energy(2, &all_ones_coupling(2), 2.0).unwrap(),
        build_cnot(5.0).unwrap(),
        build_not(2.0).unwrap(),
    ];
    for inst in &families {
        let grid = interior_grid(&mut rng, 6, inst.system.n_ctrl(), inst.system.t_f);
        let err = grape_fd_error(&inst.system, &inst.objective, &grid, 0.0);
        assert!(err <= GRAPE_REL_TOL, "relative error {err:e}");
    }
}

#[test]
fn penalty_gradient_vanishes_on_sos1_grids() {
    let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
    let grid = ControlGrid::new(3, 2, 2.0, vec![0.3, 0.7, 1.0, 0.0, 0.5, 0.5]).unwrap();
    let with = grape_gradient(&inst.system, &inst.objective, &grid, 5.0).unwrap();
    let without = grape_gradient(&inst.system, &inst.objective, &grid, 0.0).unwrap();
    assert!(with.penalty.abs() < 1e-15);
    for (a, b) in with.gradient.iter().zip(&without.gradient) {
        assert!((a - b).abs() < 1e-14);
    }
}

fn random_sequence(
    rng: &mut qswitch_core::random::SeededRng,
    sys: &ControlSystem,
    n_intervals: usize,
) -> (ControllerSequence, SwitchingSchedule) {
    let n = sys.n_ctrl();
    let controls: Vec<Vec<f64>> = (0..n_intervals)
        .map(|s| (0..n).map(|j| if (j + s) % n == 0 || rng.random::<bool>() { 1.0 } else { 0.0 }).collect())
        .collect();
    let raw: Vec<f64> = (0..n_intervals).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let durations: Vec<f64> = raw.iter().map(|d| d * sys.t_f / total).collect();
    let t_f = durations.iter().sum();
    let seq = ControllerSequence::from_controls(sys, controls, durations.clone()).unwrap();
    (seq, SwitchingSchedule::new(durations, t_f).unwrap())
}

fn sto_fd_error(seq: &ControllerSequence, sched: &SwitchingSchedule, obj: &Objective) -> f64 {
    let mut cache = EigCache::new();
    let (_, grad) = sto_gradient(seq, sched, obj, &mut cache).unwrap();
    let eps = FD_STEP * sched.t_f;
    let mut f = |d: Vec<f64>| {
        let t_f = d.iter().sum();
        sto_objective(seq, &SwitchingSchedule::new(d, t_f).unwrap(), obj, &mut cache).unwrap()
    };
    let scale = grad.iter().fold(1e-12_f64, |m, g| m.max(g.abs()));
    let mut worst: f64 = 0.0;
    for s in 0..sched.len() {
        let mut up = sched.durations.clone();
        let mut down = up.clone();
        up[s] += eps;
        down[s] -= eps;
        let fd = (f(up) - f(down)) / (2.0 * eps);
        worst = worst.max((fd - grad[s]).abs() / scale);
    }
    worst
}

#[test]
fn sto_gradient_matches_finite_differences_for_energy() {
    for case in 0..20u64 {
        let mut rng = seeded(300 + case);
        let dim = [2, 4, 8, 16][case as usize % 4];
        let sys = random_system(&mut rng, dim, 2, FeasibleKind::Sos1, 2.0);
        let obj = random_energy(&mut rng, dim);
        let (seq, sched) = random_sequence(&mut rng, &sys, 2 + case as usize % 11);
        let err = sto_fd_error(&seq, &sched, &obj);
        assert!(err <= STO_REL_TOL, "case {case}: relative error {err:e}");
    }
}

#[test]
fn sto_gradient_matches_finite_differences_for_infidelity() {
    for case in 0..20u64 {
        let mut rng = seeded(400 + case);
        let dim = [2, 3, 4, 8, 16][case as usize % 5];
        let sys = random_system(&mut rng, dim, 3, FeasibleKind::FreeBinary, 3.0);
        let obj = random_infidelity(&mut rng, dim);
        let (seq, sched) = random_sequence(&mut rng, &sys, 2 + case as usize % 11);
        let err = sto_fd_error(&seq, &sched, &obj);
        assert!(err <= STO_REL_TOL, "case {case}: relative error {err:e}");
    }
}
