mod common;

use common::{random_infidelity, random_system};
use proptest::prelude::*;
use qswitch_core::problems::{all_ones_coupling, build_cnot, build_energy, build_not};
use qswitch_core::random::{random_grid_values, seeded};
use qswitch_core::relaxation::{evaluate, final_state, simulate, solve_relaxation, Init, RelaxConfig};
use qswitch_core::rounding::{extract_sequence, round_cdiff, round_obj, FeasibleSet, ObjRule};
use qswitch_core::sto::{
    compress_schedule, final_operator, solve_sto, EigCache, StoOptions, StoStatus, SwitchingSchedule,
};
use qswitch_core::{ControlGrid, FeasibleKind};

#[test]
fn extracted_sequence_reproduces_the_binary_evolution() {
    let mut rng = seeded(21);
    for inst in [build_cnot(5.0).unwrap(), build_not(6.0).unwrap(), build_energy(2, &all_ones_coupling(2), 2.0).unwrap()] {
        let sys = &inst.system;
        let fs = FeasibleSet::of(sys).unwrap();
        let u_con = ControlGrid::new(40, sys.n_ctrl(), sys.t_f, random_grid_values(&mut rng, 40, sys.n_ctrl())).unwrap();
        let u_bin = round_cdiff(&u_con, 0.0, &fs).unwrap().grid;
        let seq = extract_sequence(sys, &u_bin).unwrap();
        let sched = SwitchingSchedule::from_sequence(&seq).unwrap();
        let via_seq = final_operator(&seq, &sched, &mut EigCache::new()).unwrap();
        let via_grid = final_state(sys, &u_bin).unwrap();
        assert!(via_seq.max_diff(&via_grid) <= 1e-9);
        assert_eq!(seq.tv_norm(), u_bin.tv_norm());
    }
}

#[test]
fn simulation_stays_unitary_over_long_horizons() {
    let inst = build_cnot(20.0).unwrap();
    let mut rng = seeded(22);
    let grid = ControlGrid::new(400, 2, 20.0, random_grid_values(&mut rng, 400, 2)).unwrap();
    for x in simulate(&inst.system, &grid).unwrap() {
        assert!(x.unitarity_defect() <= 1e-9);
    }
}

#[test]
fn energy2_pipeline_reaches_the_ground_state() {
    let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
    let sys = &inst.system;
    let relaxed = solve_relaxation(sys, &inst.objective, &RelaxConfig::new(40)).unwrap();
    assert!(relaxed.objective <= 0.01);
    let fs = FeasibleSet::of(sys).unwrap();
    let rounded = round_obj(sys, &inst.objective, &relaxed.grid, 0.1, &fs, ObjRule::Verbatim).unwrap();
    let seq = extract_sequence(sys, &rounded.grid).unwrap();
    let start = SwitchingSchedule::from_sequence(&seq).unwrap();
    let (_, report) = solve_sto(&seq, &inst.objective, &start, &StoOptions::default()).unwrap();
    assert!(report.objective <= 1e-8, "objective {}", report.objective);
    assert!(rounded.grid.tv_norm() <= 6.0);
}

#[test]
fn not2_relaxation_stays_near_the_best_binary_value() {
    let inst = build_not(2.0).unwrap();
    let relaxed = solve_relaxation(&inst.system, &inst.objective, &RelaxConfig::new(20)).unwrap();
    assert!(relaxed.objective >= 0.14 && relaxed.objective <= 0.1632 + 1e-3, "{}", relaxed.objective);
}

#[test]
fn relaxation_is_deterministic() {
    let inst = build_cnot(5.0).unwrap();
    let mut cfg = RelaxConfig::new(30);
    cfg.init = Init::Random;
    cfg.seed = 9;
    let a = solve_relaxation(&inst.system, &inst.objective, &cfg).unwrap();
    let b = solve_relaxation(&inst.system, &inst.objective, &cfg).unwrap();
    assert_eq!(a.grid, b.grid);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn sto_invariants_on_random_sequences() {
    for case in 0..10u64 {
        let mut rng = seeded(500 + case);
        let sys = random_system(&mut rng, 4, 3, FeasibleKind::FreeBinary, 3.0);
        let obj = random_infidelity(&mut rng, 4);
        let u_con = ControlGrid::new(30, 3, 3.0, random_grid_values(&mut rng, 30, 3)).unwrap();
        let fs = FeasibleSet::of(&sys).unwrap();
        let u_bin = round_cdiff(&u_con, 0.0, &fs).unwrap().grid;
        let seq = extract_sequence(&sys, &u_bin).unwrap();
        let start = SwitchingSchedule::from_sequence(&seq).unwrap();
        let opts = StoOptions { record_trace: true, ..StoOptions::default() };
        let (sched, report) = solve_sto(&seq, &obj, &start, &opts).unwrap();
        let warm = evaluate(&sys, &obj, &u_bin).unwrap();
        assert!(report.objective <= warm + 1e-12);
        assert!((sched.durations.iter().sum::<f64>() - 3.0).abs() <= 1e-9);
        assert!(sched.durations.iter().all(|&d| d >= 0.0));
        let distinct = {
            let mut c = seq.controls.clone();
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            c.dedup();
            c.len()
        };
        assert!(report.decompositions <= distinct);
        for w in report.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
    }
}

#[test]
fn sto_at_a_single_interval_returns_immediately() {
    let inst = build_not(2.0).unwrap();
    let seq = qswitch_core::rounding::ControllerSequence::from_controls(&inst.system, vec![vec![1.0, 0.0]], vec![2.0]).unwrap();
    let start = SwitchingSchedule::from_sequence(&seq).unwrap();
    let (sched, report) = solve_sto(&seq, &inst.objective, &start, &StoOptions::default()).unwrap();
    assert_eq!(report.iterations, 0);
    assert_eq!(report.status, StoStatus::Converged);
    assert_eq!(sched, start);
}

#[test]
fn compression_merges_across_dropped_intervals() {
    let inst = build_cnot(5.0).unwrap();
    let controls = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let seq = qswitch_core::rounding::ControllerSequence::from_controls(&inst.system, controls, vec![2.0, 0.0, 1.0, 2.0]).unwrap();
    let sched = SwitchingSchedule::from_sequence(&seq).unwrap();
    let (short, short_sched) = compress_schedule(&seq, &sched, 1e-7 * 5.0).unwrap();
    assert_eq!(short.len(), 2);
    assert_eq!(short_sched.durations, vec![3.0, 2.0]);
    let before = final_operator(&seq, &sched, &mut EigCache::new()).unwrap();
    let after = final_operator(&short, &short_sched, &mut EigCache::new()).unwrap();
    assert!(before.max_diff(&after) <= 1e-12);
}

#[test]
fn rounding_gap_shrinks_with_the_step() {
    // SOS1-feasible continuous controls; gap averaged over seeded starts
    let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
    let sys = &inst.system;
    let fs = FeasibleSet::of(sys).unwrap();
    let mean_gap = |t: usize| {
        let mut total = 0.0;
        for seed in 0..8 {
            let mut cfg = RelaxConfig::new(t);
            cfg.rho = 100.0;
            cfg.init = Init::Random;
            cfg.seed = seed;
            let relaxed = solve_relaxation(sys, &inst.objective, &cfg).unwrap();
            let rounded = round_obj(sys, &inst.objective, &relaxed.grid, 0.0, &fs, ObjRule::Verbatim).unwrap();
            let gap = rounded.objective - relaxed.objective;
            assert!(gap >= -1e-10);
            total += gap;
        }
        total / 8.0
    };
    let gaps: Vec<f64> = [25, 50, 100].into_iter().map(mean_gap).collect();
    assert!(gaps[1] <= gaps[0] / 1.5 && gaps[2] <= gaps[1] / 1.5, "{gaps:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_binary_grid_extracts_consistently(bits in proptest::collection::vec(any::<bool>(), 2..60)) {
        let inst = build_cnot(5.0).unwrap();
        let t = bits.len() / 2;
        prop_assume!(t >= 1);
        let values: Vec<f64> = bits[..2 * t].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let grid = ControlGrid::new(t, 2, 5.0, values).unwrap();
        let seq = extract_sequence(&inst.system, &grid).unwrap();
        prop_assert!((seq.durations.iter().sum::<f64>() - 5.0).abs() <= 1e-12);
        prop_assert_eq!(seq.tv_norm(), grid.tv_norm());
        for w in seq.controls.windows(2) {
            prop_assert!(w[0] != w[1]);
        }
    }
}
