//! Rounding of relaxed controls to binary controls with a switching penalty,
//! and extraction of the resulting controller sequence.
//!
//! Two heuristics walk the grid step by step. `round_obj` picks, at each
//! step, the binary vector minimising the objective of the spliced control
//! (binary prefix, candidate, continuous suffix); `round_cdiff` picks the
//! vector minimising the cumulative deviation from the continuous control.
//! Both keep the previous vector instead when the keep-test against the
//! total variation passes. With no penalty `round_cdiff` reduces to
//! sum-up rounding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::{l1_distance, ControlGrid};
use crate::linalg::{expm_skew, CMatrix};
use crate::problems::{ControlSystem, FeasibleKind, Objective};
use crate::relaxation::check_grid;

/// Default bound on the number of enumerated free-binary candidates.
pub const DEFAULT_CANDIDATE_CAP: usize = 1 << 16;

/// Objective values closer than this are treated as tied.
pub const OBJECTIVE_TIE_TOL: f64 = 1e-12;

/// Binary control vectors admissible at a single step, in enumeration order.
///
/// For `Sos1` candidate `j` activates controller `j` alone. For `FreeBinary`
/// candidate `m` activates the controllers whose bit is set in `m`, so
/// candidate 0 switches everything off.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleSet {
    pub kind: FeasibleKind,
    pub n_ctrl: usize,
    pub cap: usize,
}

impl FeasibleSet {
    pub fn new(kind: FeasibleKind, n_ctrl: usize) -> Result<Self> {
        Self::with_cap(kind, n_ctrl, DEFAULT_CANDIDATE_CAP)
    }

    pub fn with_cap(kind: FeasibleKind, n_ctrl: usize, cap: usize) -> Result<Self> {
        if n_ctrl == 0 {
            return Err(invalid("feasible set needs at least one controller"));
        }
        if kind == FeasibleKind::FreeBinary && (n_ctrl >= usize::BITS as usize || (1usize << n_ctrl) > cap) {
            return Err(Error::UnsupportedFeasibleSet { n_ctrl, cap });
        }
        Ok(Self { kind, n_ctrl, cap })
    }

    pub fn of(sys: &ControlSystem) -> Result<Self> {
        Self::new(sys.feasible, sys.n_ctrl())
    }

    pub fn len(&self) -> usize {
        match self.kind {
            FeasibleKind::Sos1 => self.n_ctrl,
            FeasibleKind::FreeBinary => 1 << self.n_ctrl,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn candidate(&self, index: usize) -> Vec<f64> {
        match self.kind {
            FeasibleKind::Sos1 => (0..self.n_ctrl)
                .map(|j| if j == index { 1.0 } else { 0.0 })
                .collect(),
            FeasibleKind::FreeBinary => (0..self.n_ctrl)
                .map(|j| ((index >> j) & 1) as f64)
                .collect(),
        }
    }

    pub fn candidates(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.candidate(i)).collect()
    }

    /// Enumeration index of a binary vector, if it belongs to the set.
    pub fn index_of(&self, u: &[f64]) -> Option<usize> {
        if u.len() != self.n_ctrl || u.iter().any(|&v| v != 0.0 && v != 1.0) {
            return None;
        }
        match self.kind {
            FeasibleKind::Sos1 => {
                let ones: Vec<usize> = (0..u.len()).filter(|&j| u[j] == 1.0).collect();
                (ones.len() == 1).then(|| ones[0])
            }
            FeasibleKind::FreeBinary => Some(
                u.iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1.0)
                    .map(|(j, _)| 1usize << j)
                    .sum(),
            ),
        }
    }
}

fn check_set(fs: &FeasibleSet, u_con: &ControlGrid) -> Result<()> {
    if fs.n_ctrl != u_con.n_ctrl() {
        return Err(Error::DimensionMismatch {
            expected: (u_con.n_steps(), fs.n_ctrl),
            found: (u_con.n_steps(), u_con.n_ctrl()),
        });
    }
    Ok(())
}

fn check_penalty(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(invalid(format!("{name} must be a finite non-negative number, got {value}")));
    }
    Ok(())
}

/// Total variation of the spliced control `[bin_0..bin_{k-1}, u, con_{k+1}..]`.
///
/// `prefix_tv` is the variation within `bin_0..bin_{k-1}` and `suffix_tv`
/// that within `con_{k+1}..con_{T-1}`.
fn spliced_tv(
    prefix_tv: f64,
    prev: Option<&[f64]>,
    u: &[f64],
    next: Option<&[f64]>,
    suffix_tv: f64,
) -> f64 {
    prefix_tv
        + prev.map_or(0.0, |p| l1_distance(p, u))
        + next.map_or(0.0, |n| l1_distance(u, n))
        + suffix_tv
}

/// `suffix[k]` is the variation of rows `k..T` of the grid.
fn suffix_variation(grid: &ControlGrid) -> Vec<f64> {
    let t = grid.n_steps();
    let mut suffix = vec![0.0; t + 1];
    for k in (0..t.saturating_sub(1)).rev() {
        suffix[k] = suffix[k + 1] + l1_distance(grid.step(k), grid.step(k + 1));
    }
    suffix
}

/// Spliced variations closer than this are treated as tied.
const TV_TIE_TOL: f64 = 1e-12;

/// A candidate's score at one step.
#[derive(Clone, Copy, Debug)]
struct Scored {
    index: usize,
    value: f64,
    tv: f64,
    is_prev: bool,
}

/// True when `a` ranks before `b`: smaller value, then smaller spliced TV,
/// then the previous control, then enumeration order.
fn ranks_before(a: &Scored, b: &Scored, tie_tol: f64) -> bool {
    if a.value < b.value - tie_tol {
        return true;
    }
    if a.value > b.value + tie_tol {
        return false;
    }
    if (a.tv - b.tv).abs() > TV_TIE_TOL {
        return a.tv < b.tv;
    }
    if a.is_prev != b.is_prev {
        return a.is_prev;
    }
    a.index < b.index
}

fn best_of(scored: &[Scored], tie_tol: f64) -> Scored {
    let mut best = scored[0];
    for s in &scored[1..] {
        if ranks_before(s, &best, tie_tol) {
            best = *s;
        }
    }
    best
}

/// Keep-versus-update test of the objective-based rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ObjRule {
    /// Keep when `F(keep) <= alpha * TV(spliced best candidate)`.
    #[default]
    Verbatim,
    /// Keep when `F(keep) <= F(best) + alpha * (TV(best) - TV(keep))`, i.e.
    /// when keeping wins on the penalised objective.
    Delta,
}

impl ObjRule {
    fn keep(self, alpha: f64, keep: &Scored, best: &Scored) -> bool {
        match self {
            ObjRule::Verbatim => keep.value <= alpha * best.tv,
            ObjRule::Delta => keep.value <= best.value + alpha * (best.tv - keep.tv),
        }
    }
}

/// Instrumented counts of dense operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Matrix exponentials formed.
    pub expm: usize,
    /// Dense matrix-matrix products.
    pub matmul: usize,
}

#[derive(Clone, Debug)]
pub struct ObjRounding {
    pub grid: ControlGrid,
    /// Objective of the returned binary control.
    pub objective: f64,
    pub counts: OpCounts,
}

/// Back propagators `mu_k = U_{T-1} ... U_k` of the continuous control for
/// `k = 0..=T` (0-based steps, `mu_T = I`).
pub fn mu_propagators(sys: &ControlSystem, u_con: &ControlGrid) -> Result<Vec<CMatrix>> {
    mu_with_counts(sys, u_con, &mut OpCounts::default())
}

fn mu_with_counts(
    sys: &ControlSystem,
    u_con: &ControlGrid,
    counts: &mut OpCounts,
) -> Result<Vec<CMatrix>> {
    check_grid(sys, u_con)?;
    let t = u_con.n_steps();
    let mut mu = vec![CMatrix::identity(sys.dim()); t + 1];
    for k in (0..t).rev() {
        let u = expm_skew(&sys.hamiltonian(u_con.step(k)), u_con.dt())?;
        counts.expm += 1;
        mu[k] = mu[k + 1].matmul(&u);
        counts.matmul += 1;
    }
    Ok(mu)
}

/// Objective-based rounding.
///
/// Each candidate objective is evaluated as `F(mu_{k+1} E_u X_{k-1})`, where
/// `E_u` is the precomputed one-step propagator of candidate `u` and
/// `X_{k-1}` the binary state so far, so the whole pass needs `T + N'`
/// exponentials for `N'` candidates.
pub fn round_obj(
    sys: &ControlSystem,
    obj: &Objective,
    u_con: &ControlGrid,
    alpha: f64,
    fs: &FeasibleSet,
    rule: ObjRule,
) -> Result<ObjRounding> {
    check_set(fs, u_con)?;
    check_penalty("alpha", alpha)?;
    let mut counts = OpCounts::default();
    let mu = mu_with_counts(sys, u_con, &mut counts)?;
    let candidates = fs.candidates();
    let props: Vec<CMatrix> = candidates
        .iter()
        .map(|u| {
            counts.expm += 1;
            expm_skew(&sys.hamiltonian(u), u_con.dt())
        })
        .collect::<Result<_>>()?;

    let t = u_con.n_steps();
    let suffix = suffix_variation(u_con);
    let mut chosen: Vec<usize> = Vec::with_capacity(t);
    let mut x = sys.x_init.clone();
    let mut prefix_tv = 0.0;
    let mut objective = f64::NAN;
    for k in 0..t {
        let prev = chosen.last().map(|&i| candidates[i].as_slice());
        let next = (k + 1 < t).then(|| u_con.step(k + 1));
        let mut advanced = Vec::with_capacity(candidates.len());
        let mut scored = Vec::with_capacity(candidates.len());
        for (i, u) in candidates.iter().enumerate() {
            let xk = props[i].matmul(&x);
            let full = mu[k + 1].matmul(&xk);
            counts.matmul += 2;
            scored.push(Scored {
                index: i,
                value: obj.value(&full)?,
                tv: spliced_tv(prefix_tv, prev, u, next, suffix[(k + 1).min(t)]),
                is_prev: chosen.last() == Some(&i),
            });
            advanced.push(xk);
        }
        let best = best_of(&scored, OBJECTIVE_TIE_TOL);
        let pick = match chosen.last() {
            Some(&p) if rule.keep(alpha, &scored[p], &best) => p,
            _ => best.index,
        };
        if let Some(p) = prev {
            prefix_tv += l1_distance(p, &candidates[pick]);
        }
        objective = scored[pick].value;
        x = advanced.swap_remove(pick);
        chosen.push(pick);
    }

    let rows: Vec<Vec<f64>> = chosen.iter().map(|&i| candidates[i].clone()).collect();
    Ok(ObjRounding {
        grid: ControlGrid::from_rows(&rows, u_con.t_f())?,
        objective,
        counts,
    })
}

/// Objective-based rounding that re-simulates every spliced candidate from
/// scratch. Same decisions as [`round_obj`]; kept as a reference and for
/// operation-count comparisons.
pub fn round_obj_reference(
    sys: &ControlSystem,
    obj: &Objective,
    u_con: &ControlGrid,
    alpha: f64,
    fs: &FeasibleSet,
    rule: ObjRule,
) -> Result<ObjRounding> {
    check_set(fs, u_con)?;
    check_grid(sys, u_con)?;
    check_penalty("alpha", alpha)?;
    let mut counts = OpCounts::default();
    let candidates = fs.candidates();
    let t = u_con.n_steps();
    let dt = u_con.dt();
    let mut rows: Vec<Vec<f64>> = (0..t).map(|k| u_con.step(k).to_vec()).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(t);
    let mut objective = f64::NAN;

    for k in 0..t {
        let mut scored = Vec::with_capacity(candidates.len());
        for (i, u) in candidates.iter().enumerate() {
            rows[k] = u.clone();
            let mut x = sys.x_init.clone();
            for row in &rows {
                x = expm_skew(&sys.hamiltonian(row), dt)?.matmul(&x);
                counts.expm += 1;
                counts.matmul += 1;
            }
            let spliced = ControlGrid::from_rows(&rows, u_con.t_f())?;
            scored.push(Scored {
                index: i,
                value: obj.value(&x)?,
                tv: spliced.tv_norm(),
                is_prev: chosen.last() == Some(&i),
            });
        }
        let best = best_of(&scored, OBJECTIVE_TIE_TOL);
        let pick = match chosen.last() {
            Some(&p) if rule.keep(alpha, &scored[p], &best) => p,
            _ => best.index,
        };
        objective = scored[pick].value;
        rows[k] = candidates[pick].clone();
        chosen.push(pick);
    }
    Ok(ObjRounding {
        grid: ControlGrid::from_rows(&rows, u_con.t_f())?,
        objective,
        counts,
    })
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Deviation bookkeeping of the cumulative-difference rounding.
///
/// Before the decision at step `k` the deviation of controller `j` is
/// `p_jk = dt * (sum_{l<=k} u_con_jl - #{l<k : u_bin_jl = 1})`.
#[derive(Clone, Debug)]
pub struct DeviationState {
    dt: f64,
    con_sums: Vec<CompensatedSum>,
    active_counts: Vec<u64>,
}

impl DeviationState {
    pub fn new(n_ctrl: usize, dt: f64) -> Self {
        Self {
            dt,
            con_sums: vec![CompensatedSum::default(); n_ctrl],
            active_counts: vec![0; n_ctrl],
        }
    }

    /// Accumulates the continuous control of the next step.
    pub fn absorb_continuous(&mut self, u: &[f64]) {
        for (s, &v) in self.con_sums.iter_mut().zip(u) {
            s.add(v);
        }
    }

    /// Records the binary decision of the current step.
    pub fn commit_binary(&mut self, u: &[f64]) {
        for (c, &v) in self.active_counts.iter_mut().zip(u) {
            if v == 1.0 {
                *c += 1;
            }
        }
    }

    pub fn p_hat(&self) -> Vec<f64> {
        self.con_sums
            .iter()
            .zip(&self.active_counts)
            .map(|(s, &c)| self.dt * (s.value() - c as f64))
            .collect()
    }
}

/// Cumulative difference after applying `u` at a step with deviations `p`.
pub fn cumulative_difference(p: &[f64], u: &[f64], dt: f64) -> f64 {
    p.iter()
        .zip(u)
        .map(|(&pj, &uj)| (pj - uj * dt).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct CdiffRounding {
    pub grid: ControlGrid,
    /// Deviations `p_hat` before each step's decision, row-major `T x N`.
    pub deviations: Vec<f64>,
}

impl CdiffRounding {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().fold(0.0, |m, p| m.max(p.abs()))
    }
}

/// Cumulative-difference rounding. With `beta = 0` this is sum-up rounding.
pub fn round_cdiff(u_con: &ControlGrid, beta: f64, fs: &FeasibleSet) -> Result<CdiffRounding> {
    check_set(fs, u_con)?;
    check_penalty("beta", beta)?;
    let (t, n, dt) = (u_con.n_steps(), u_con.n_ctrl(), u_con.dt());
    let suffix = suffix_variation(u_con);
    let mut state = DeviationState::new(n, dt);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut deviations = Vec::with_capacity(t * n);
    let mut prefix_tv = 0.0;

    for k in 0..t {
        state.absorb_continuous(u_con.step(k));
        let p = state.p_hat();
        deviations.extend_from_slice(&p);
        let prev = rows.last().map(Vec::as_slice);
        let next = (k + 1 < t).then(|| u_con.step(k + 1));
        let tv_of = |u: &[f64]| spliced_tv(prefix_tv, prev, u, next, suffix[(k + 1).min(t)]);

        let best: Vec<f64> = match fs.kind {
            FeasibleKind::Sos1 => {
                let mut j_best = 0;
                let mut tv_best = tv_of(&fs.candidate(0));
                for j in 1..n {
                    let tv = tv_of(&fs.candidate(j));
                    if p[j] > p[j_best] || (p[j] == p[j_best] && tv < tv_best) {
                        j_best = j;
                        tv_best = tv;
                    }
                }
                fs.candidate(j_best)
            }
            FeasibleKind::FreeBinary => p
                .iter()
                .map(|&pj| if pj >= 0.5 * dt { 1.0 } else { 0.0 })
                .collect(),
        };
        let pick = match prev {
            Some(keep) if cumulative_difference(&p, keep, dt) <= beta * tv_of(&best) => {
                keep.to_vec()
            }
            _ => best,
        };
        if let Some(pr) = prev {
            prefix_tv += l1_distance(pr, &pick);
        }
        state.commit_binary(&pick);
        rows.push(pick);
    }
    Ok(CdiffRounding {
        grid: ControlGrid::from_rows(&rows, u_con.t_f())?,
        deviations,
    })
}

/// Sum-up rounding: cumulative-difference rounding without a switching
/// penalty.
pub fn round_sur(u_con: &ControlGrid, fs: &FeasibleSet) -> Result<CdiffRounding> {
    round_cdiff(u_con, 0.0, fs)
}

/// Ordered effective Hamiltonians with their durations.
#[derive(Clone, Debug)]
pub struct ControllerSequence {
    pub hams: Vec<CMatrix>,
    pub durations: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    /// Initial operator the sequence acts on.
    pub x_init: CMatrix,
}

impl ControllerSequence {
    pub fn len(&self) -> usize {
        self.hams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hams.is_empty()
    }

    /// Number of switches, `S - 1`.
    pub fn switches(&self) -> usize {
        self.hams.len().saturating_sub(1)
    }

    /// Builds a sequence from control vectors, forming `H^(0) + sum_j u_j H^(j)`.
    pub fn from_controls(
        sys: &ControlSystem,
        controls: Vec<Vec<f64>>,
        durations: Vec<f64>,
    ) -> Result<Self> {
        if controls.is_empty() || controls.len() != durations.len() {
            return Err(invalid(format!(
                "{} control vectors for {} durations",
                controls.len(),
                durations.len()
            )));
        }
        if let Some(c) = controls.iter().find(|c| c.len() != sys.n_ctrl()) {
            return Err(Error::DimensionMismatch {
                expected: (1, sys.n_ctrl()),
                found: (1, c.len()),
            });
        }
        let hams = controls.iter().map(|u| sys.hamiltonian(u)).collect();
        Ok(Self {
            hams,
            durations,
            controls,
            x_init: sys.x_init.clone(),
        })
    }

    /// Variation of the control vectors across the sequence.
    pub fn tv_norm(&self) -> f64 {
        self.controls
            .windows(2)
            .map(|w| l1_distance(&w[0], &w[1]))
            .fold(0.0, |acc, d| acc + d)
    }
}

/// Merges runs of equal binary control vectors into a controller sequence.
pub fn extract_sequence(sys: &ControlSystem, u_bin: &ControlGrid) -> Result<ControllerSequence> {
    check_grid(sys, u_bin)?;
    if !u_bin.is_binary() {
        return Err(invalid("controller extraction needs a binary grid"));
    }
    let dt = u_bin.dt();
    let mut controls: Vec<Vec<f64>> = Vec::new();
    let mut runs: Vec<usize> = Vec::new();
    for row in u_bin.rows() {
        match controls.last() {
            Some(last) if last.as_slice() == row => *runs.last_mut().expect("parallel") += 1,
            _ => {
                controls.push(row.to_vec());
                runs.push(1);
            }
        }
    }
    let durations = runs.iter().map(|&r| r as f64 * dt).collect();
    ControllerSequence::from_controls(sys, controls, durations)
}
