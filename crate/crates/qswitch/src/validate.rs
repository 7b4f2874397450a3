//! Invariant suite behind the `validate` verb.

use std::path::Path;

use qswitch_core::linalg::expm_skew;
use qswitch_core::problems::{all_ones_coupling, build_circuit, build_cnot, build_energy, build_not, grid_edges};
use qswitch_core::random::{random_grid_values, random_unitary, seeded};
use qswitch_core::relaxation::simulate;
use qswitch_core::rounding::{extract_sequence, round_sur, FeasibleSet};
use qswitch_core::sto::{final_operator, EigCache, SwitchingSchedule};
use qswitch_core::{ControlGrid, Instance};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::AppResult;
use crate::io::{read_csv, read_json, BinaryFile, PlotRow, RelaxTraceRecord, ScheduleFile, SequenceFile, StoTraceRecord};
use crate::pipeline::{run_pipeline, write_outputs, Artifacts, RunReport};

pub const UNITARITY_TOL: f64 = 1e-9;
pub const EXTRACTION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tol,
            pass: value <= tol,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn families(seed: u64) -> AppResult<Vec<(&'static str, Instance)>> {
    let mut rng = seeded(seed);
    Ok(vec![
        ("Energy2", build_energy(2, &all_ones_coupling(2), 2.0)?),
        ("CNOT5", build_cnot(5.0)?),
        ("NOT2", build_not(2.0)?),
        ("CircuitH2", build_circuit(2, &grid_edges(2), random_unitary(&mut rng, 4), 10.0)?),
    ])
}

/// Unitarity of every step propagator and state, and agreement of the
/// extracted sequence with the grid simulation, on a seeded grid per family.
fn dynamics_checks(seed: u64, out: &mut Vec<Check>) -> AppResult<()> {
    let mut rng = seeded(seed ^ 0x5eed);
    for (name, inst) in families(seed)? {
        let sys = &inst.system;
        let t = 60;
        let grid = ControlGrid::new(t, sys.n_ctrl(), sys.t_f, random_grid_values(&mut rng, t, sys.n_ctrl()))?;
        let mut defect: f64 = 0.0;
        for k in 0..t {
            let u = expm_skew(&sys.hamiltonian(grid.step(k)), grid.dt())?;
            defect = defect.max(u.unitarity_defect());
        }
        for x in simulate(sys, &grid)? {
            defect = defect.max(x.unitarity_defect());
        }
        out.push(Check::at_most(format!("{name}: unitarity"), defect, UNITARITY_TOL));

        let u_bin = round_sur(&grid, &FeasibleSet::of(sys)?)?.grid;
        let seq = extract_sequence(sys, &u_bin)?;
        let sched = SwitchingSchedule::from_sequence(&seq)?;
        let via_seq = final_operator(&seq, &sched, &mut EigCache::new())?;
        let via_grid = simulate(sys, &u_bin)?.pop().expect("at least one step");
        out.push(Check::at_most(
            format!("{name}: extraction vs simulation"),
            via_seq.max_diff(&via_grid),
            EXTRACTION_TOL,
        ));
    }
    Ok(())
}

fn mismatch(name: &str, equal: bool) -> Check {
    Check::at_most(format!("round trip: {name}"), if equal { 0.0 } else { 1.0 }, 0.0)
}

/// Writes every output file of a short run and reads it back.
fn round_trip_checks(dir: &Path, out: &mut Vec<Check>) -> AppResult<()> {
    let mut cfg = RunConfig::for_instance("NOT2")?;
    cfg.traces = true;
    let (report, art) = run_pipeline(&cfg)?;
    write_outputs(dir, &report, &art)?;
    compare_outputs(dir, &report, &art, out)
}

fn compare_outputs(dir: &Path, report: &RunReport, art: &Artifacts, out: &mut Vec<Check>) -> AppResult<()> {
    let json: serde_json::Value = read_json(&dir.join("report.json"))?;
    out.push(mismatch("report.json", json == serde_json::to_value(report).expect("serialisable")));

    let labels = &art.instance.system.labels;
    if let Some(u_bin) = &art.binary {
        let file: BinaryFile = read_json(&dir.join("binary.json"))?;
        out.push(mismatch("binary.json", file == BinaryFile::new(u_bin, labels)));
    }
    if let Some(seq) = &art.sequence {
        let file: SequenceFile = read_json(&dir.join("sequence.json"))?;
        out.push(mismatch("sequence.json", file == SequenceFile::new(seq)));
    }
    if let Some((seq, sched, rep)) = &art.optimized {
        let file: ScheduleFile = read_json(&dir.join("schedule.json"))?;
        let same = file.to_schedule().as_ref() == Ok(sched)
            && file.control_vectors == seq.controls
            && file.objective.to_bits() == rep.objective.to_bits()
            && file.iters == rep.iterations;
        out.push(mismatch("schedule.json", same));
        let trace: Vec<StoTraceRecord> = read_csv(&dir.join("sto_trace.csv"))?;
        let same = trace.len() == rep.trace.len()
            && trace.iter().zip(&rep.trace).all(|(a, b)| {
                a.iter == b.iter && a.objective == b.objective && a.kkt == b.kkt && a.step == b.step
            });
        out.push(mismatch("sto_trace.csv", same));
    }
    let relax: Vec<RelaxTraceRecord> = read_csv(&dir.join("relax_trace.csv"))?;
    let same = relax.len() == art.relaxed.trace.len()
        && relax.iter().zip(&art.relaxed.trace).all(|(a, b)| {
            a.iter == b.iter && a.objective == b.objective && a.penalty == b.penalty && a.step == b.step
        });
    out.push(mismatch("relax_trace.csv", same));
    let plot: Vec<PlotRow> = read_csv(&dir.join("controls.csv"))?;
    let continuous: Vec<&PlotRow> = plot.iter().filter(|r| r.stage == "continuous").collect();
    let n = labels.len();
    let same = continuous.len() == 2 * n * art.relaxed.grid.n_steps()
        && continuous
            .chunks(2 * n)
            .zip(art.relaxed.grid.rows())
            .all(|(chunk, u)| chunk.iter().enumerate().all(|(i, r)| r.value == u[i / 2]));
    out.push(mismatch("controls.csv", same));
    Ok(())
}

pub fn validate(seed: u64, scratch: &Path) -> AppResult<ValidationReport> {
    let mut checks = Vec::new();
    dynamics_checks(seed, &mut checks)?;
    round_trip_checks(scratch, &mut checks)?;
    Ok(ValidationReport { checks })
}
