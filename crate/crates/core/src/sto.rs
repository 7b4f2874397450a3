//! Switching-time optimisation.
//!
//! With the controller sequence `H_1, ..., H_S` fixed, the final operator is
//! `X(t_f) = exp(-i H_S tau_S) ... exp(-i H_1 tau_1) X_init`, and the
//! durations `tau` are optimised over the simplex
//! `{tau >= 0, sum tau = t_f}`. Every distinct `H_s` is diagonalised once and
//! cached, so each propagator costs a diagonal exponential and two products.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{expm_from_eig, expm_skew, hermitian_eig, vdot, CMatrix, HermitianEig, I};
use crate::optim::{dot, max_abs, Lbfgs, ARMIJO_C, BACKTRACK, MAX_BACKTRACKS};
use crate::problems::{Objective, ZERO_OVERLAP_TOL};
use crate::rounding::ControllerSequence;

/// Tolerance on `|sum tau - t_f|`.
pub const SUM_TOL: f64 = 1e-9;

/// Durations of the intervals of a controller sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingSchedule {
    pub durations: Vec<f64>,
    pub t_f: f64,
}

impl SwitchingSchedule {
    /// Validates feasibility; durations down to `-1e-12` are clamped to zero.
    pub fn new(mut durations: Vec<f64>, t_f: f64) -> Result<Self> {
        if durations.is_empty() {
            return Err(invalid("schedule needs at least one interval"));
        }
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {t_f}")));
        }
        for d in durations.iter_mut() {
            if !d.is_finite() || *d < -1e-12 {
                return Err(invalid(format!("invalid interval length {d}")));
            }
            *d = d.max(0.0);
        }
        let sum: f64 = durations.iter().sum();
        if (sum - t_f).abs() > SUM_TOL {
            return Err(invalid(format!("durations sum to {sum}, expected {t_f}")));
        }
        Ok(Self { durations, t_f })
    }

    /// The warm start stored in a freshly extracted sequence.
    pub fn from_sequence(seq: &ControllerSequence) -> Result<Self> {
        let t_f = seq.durations.iter().sum();
        Self::new(seq.durations.clone(), t_f)
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }
}

/// Euclidean projection onto `{x >= 0, sum x = total}` by the sorted
/// threshold rule.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - total) / (i + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // remove the rounding residue from the largest entry
    let residue = total - out.iter().sum::<f64>();
    if let Some(big) = out
        .iter_mut()
        .max_by(|a, b| a.total_cmp(b))
    {
        *big = (*big + residue).max(0.0);
    }
    out
}

/// `||P(tau - grad) - tau||_inf` on the simplex of mass `t_f`.
pub fn kkt_residual(tau: &[f64], grad: &[f64], t_f: f64) -> f64 {
    let shifted: Vec<f64> = tau.iter().zip(grad).map(|(t, g)| t - g).collect();
    project_simplex(&shifted, t_f)
        .iter()
        .zip(tau)
        .map(|(p, t)| (p - t).abs())
        .fold(0.0, f64::max)
}

/// Decompositions of the distinct Hamiltonians of a sequence.
#[derive(Clone, Debug, Default)]
pub struct EigCache {
    index: BTreeMap<Vec<i64>, usize>,
    eigs: Vec<HermitianEig>,
    decompositions: usize,
}

fn fingerprint(h: &CMatrix) -> Vec<i64> {
    let quantum = 1e-10 * h.max_norm().max(1.0);
    let mut key = Vec::with_capacity(2 * h.as_slice().len() + 1);
    key.push(h.rows() as i64);
    for z in h.as_slice() {
        key.push(libm::round(z.re / quantum) as i64);
        key.push(libm::round(z.im / quantum) as i64);
    }
    key
}

impl EigCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of cached decompositions.
    pub fn len(&self) -> usize {
        self.eigs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigs.is_empty()
    }

    /// Total eigendecompositions performed since construction.
    pub fn decompositions(&self) -> usize {
        self.decompositions
    }

    /// Index of the decomposition of `h`, computing it on first sight.
    pub fn entry(&mut self, h: &CMatrix) -> Result<usize> {
        let key = fingerprint(h);
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        let eig = hermitian_eig(h)?;
        self.decompositions += 1;
        self.eigs.push(eig);
        let i = self.eigs.len() - 1;
        self.index.insert(key, i);
        Ok(i)
    }

    pub fn prepare(&mut self, seq: &ControllerSequence) -> Result<Vec<usize>> {
        seq.hams.iter().map(|h| self.entry(h)).collect()
    }

    pub fn get(&self, i: usize) -> &HermitianEig {
        &self.eigs[i]
    }
}

/// Source of interval propagators.
enum Propagators<'a> {
    Cached { cache: &'a EigCache, slots: Vec<usize> },
    /// One fresh `expm_skew` per interval per evaluation.
    Direct,
}

impl Propagators<'_> {
    fn get(&self, seq: &ControllerSequence, s: usize, tau: f64) -> Result<CMatrix> {
        match self {
            Propagators::Cached { cache, slots } => Ok(expm_from_eig(cache.get(slots[s]), tau)),
            Propagators::Direct => expm_skew(&seq.hams[s], tau),
        }
    }
}

fn check_lengths(seq: &ControllerSequence, sched: &SwitchingSchedule) -> Result<()> {
    if seq.len() != sched.len() {
        return Err(invalid(format!(
            "sequence has {} intervals but schedule has {}",
            seq.len(),
            sched.len()
        )));
    }
    Ok(())
}

fn forward(
    seq: &ControllerSequence,
    tau: &[f64],
    props: &Propagators<'_>,
) -> Result<(Vec<CMatrix>, CMatrix)> {
    let mut us = Vec::with_capacity(tau.len());
    let mut x = seq.x_init.clone();
    for (s, &t) in tau.iter().enumerate() {
        let u = props.get(seq, s, t)?;
        x = u.matmul(&x);
        us.push(u);
    }
    Ok((us, x))
}

/// `exp(-i H_S tau_S) ... exp(-i H_1 tau_1) X_init`.
pub fn final_operator(
    seq: &ControllerSequence,
    sched: &SwitchingSchedule,
    cache: &mut EigCache,
) -> Result<CMatrix> {
    check_lengths(seq, sched)?;
    let slots = cache.prepare(seq)?;
    let props = Propagators::Cached { cache, slots };
    Ok(forward(seq, &sched.durations, &props)?.1)
}

fn value_with(
    seq: &ControllerSequence,
    tau: &[f64],
    obj: &Objective,
    props: &Propagators<'_>,
) -> Result<f64> {
    obj.value(&forward(seq, tau, props)?.1)
}

fn gradient_with(
    seq: &ControllerSequence,
    tau: &[f64],
    obj: &Objective,
    props: &Propagators<'_>,
) -> Result<(f64, Vec<f64>)> {
    let s_len = tau.len();
    let mut grad = vec![0.0; s_len];
    match obj {
        Objective::EnergyRatio {
            h_tilde,
            psi0,
            e_min,
        } => {
            // phi_s = X_s psi0, kappa_S = H phi_S, kappa_s = U_{s+1}^dagger kappa_{s+1}
            let mut us = Vec::with_capacity(s_len);
            let mut phis = Vec::with_capacity(s_len);
            let mut phi = seq.x_init.mul_vec(psi0);
            for (s, &t) in tau.iter().enumerate() {
                let u = props.get(seq, s, t)?;
                phi = u.mul_vec(&phi);
                phis.push(phi.clone());
                us.push(u);
            }
            let value = obj.energy_value(&phi);
            let mut kappa = h_tilde.mul_vec(&phi);
            for s in (0..s_len).rev() {
                let h_phi = seq.hams[s].mul_vec(&phis[s]);
                let inner: Complex64 = vdot(&kappa, &h_phi);
                grad[s] = 2.0 / e_min * (I * inner).re;
                if s > 0 {
                    kappa = us[s].adjoint_mul_vec(&kappa);
                }
            }
            Ok((value, grad))
        }
        Objective::Infidelity { x_targ, norm } => {
            let mut us = Vec::with_capacity(s_len);
            let mut xs = Vec::with_capacity(s_len);
            let mut x = seq.x_init.clone();
            for (s, &t) in tau.iter().enumerate() {
                let u = props.get(seq, s, t)?;
                x = u.matmul(&x);
                xs.push(x.clone());
                us.push(u);
            }
            let z = x_targ.inner(&x);
            let r = z.norm();
            if r <= ZERO_OVERLAP_TOL {
                return Err(Error::ZeroTraceOverlap { overlap: r });
            }
            let phase = z.conj() / r;
            let value = 1.0 - r / norm;
            let mut lambda = x_targ.clone();
            for s in (0..s_len).rev() {
                let hx = seq.hams[s].matmul(&xs[s]);
                let tr = lambda.inner(&hx);
                grad[s] = (I * tr * phase).re / norm;
                if s > 0 {
                    lambda = us[s].adjoint_matmul(&lambda);
                }
            }
            Ok((value, grad))
        }
    }
}

/// Objective at a schedule.
pub fn sto_objective(
    seq: &ControllerSequence,
    sched: &SwitchingSchedule,
    obj: &Objective,
    cache: &mut EigCache,
) -> Result<f64> {
    obj.value(&final_operator(seq, sched, cache)?)
}

/// Objective and its gradient with respect to the durations.
pub fn sto_gradient(
    seq: &ControllerSequence,
    sched: &SwitchingSchedule,
    obj: &Objective,
    cache: &mut EigCache,
) -> Result<(f64, Vec<f64>)> {
    check_lengths(seq, sched)?;
    let slots = cache.prepare(seq)?;
    let props = Propagators::Cached { cache, slots };
    gradient_with(seq, &sched.durations, obj, &props)
}

#[derive(Clone, Debug)]
pub struct StoOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
    /// Reuse one eigendecomposition per distinct Hamiltonian. When false,
    /// every evaluation exponentiates every interval from scratch.
    pub use_cache: bool,
    pub record_trace: bool,
}

impl Default for StoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 500,
            lbfgs_memory: 10,
            use_cache: true,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoStatus {
    Converged,
    MaxIterations,
    /// No sufficient decrease along any direction.
    Stalled,
    /// The trace overlap vanished at the start and after one perturbation.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoTraceRow {
    pub iter: usize,
    pub objective: f64,
    pub kkt: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct StoReport {
    pub initial_objective: f64,
    pub objective: f64,
    pub kkt: f64,
    pub iterations: usize,
    pub status: StoStatus,
    /// Eigendecompositions performed during the solve.
    pub decompositions: usize,
    pub trace: Vec<StoTraceRow>,
}

/// Minimises the objective over the durations, warm-started from `start`.
pub fn solve_sto(
    seq: &ControllerSequence,
    obj: &Objective,
    start: &SwitchingSchedule,
    opts: &StoOptions,
) -> Result<(SwitchingSchedule, StoReport)> {
    check_lengths(seq, start)?;
    let t_f = start.t_f;
    let mut cache = EigCache::new();
    let props = if opts.use_cache {
        let slots = cache.prepare(seq)?;
        Propagators::Cached {
            cache: &cache,
            slots,
        }
    } else {
        Propagators::Direct
    };
    let decompositions = |props: &Propagators<'_>| match props {
        Propagators::Cached { cache, .. } => cache.decompositions(),
        Propagators::Direct => 0,
    };

    let mut tau = start.durations.clone();
    let initial_objective = value_with(seq, &tau, obj, &props)?;
    let mut eval = gradient_with(seq, &tau, obj, &props);
    if let Err(Error::ZeroTraceOverlap { .. }) = eval {
        // the overlap phase is undefined here; nudge the durations once
        let delta = 1e-6 * t_f / tau.len() as f64;
        let nudged: Vec<f64> = tau
            .iter()
            .enumerate()
            .map(|(s, &t)| if s % 2 == 0 { t + delta } else { t - delta })
            .collect();
        let candidate = project_simplex(&nudged, t_f);
        eval = gradient_with(seq, &candidate, obj, &props);
        if eval.is_ok() {
            tau = candidate;
        }
    }
    let (mut value, mut grad) = match eval {
        Ok(v) => v,
        Err(Error::ZeroTraceOverlap { .. }) => {
            let report = StoReport {
                initial_objective,
                objective: initial_objective,
                kkt: f64::NAN,
                iterations: 0,
                status: StoStatus::Degenerate,
                decompositions: decompositions(&props),
                trace: Vec::new(),
            };
            return Ok((start.clone(), report));
        }
        Err(e) => return Err(e),
    };

    let mut memory = Lbfgs::new(opts.lbfgs_memory);
    let mut trace = Vec::new();
    let mut kkt = kkt_residual(&tau, &grad, t_f);
    if opts.record_trace {
        trace.push(StoTraceRow {
            iter: 0,
            objective: value,
            kkt,
            step: 0.0,
        });
    }
    let mut iterations = 0;
    let mut status = StoStatus::MaxIterations;
    while iterations < opts.max_iters {
        if kkt <= opts.tol {
            status = StoStatus::Converged;
            break;
        }
        let mut accepted = None;
        for use_memory in [true, false] {
            if use_memory && memory.is_empty() {
                continue;
            }
            let dir = if use_memory {
                quasi_newton_direction(&memory, &tau, &grad)
            } else {
                let mean = grad.iter().sum::<f64>() / grad.len() as f64;
                grad.iter().map(|g| mean - g).collect()
            };
            let scale = max_abs(&dir);
            if scale == 0.0 || dot(&dir, &grad) >= 0.0 {
                continue;
            }
            let mut step = if use_memory {
                1.0
            } else {
                (t_f / tau.len() as f64) / scale
            };
            for _ in 0..MAX_BACKTRACKS {
                let shifted: Vec<f64> = tau.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
                let trial = project_simplex(&shifted, t_f);
                let decrease = dot(&grad, &trial) - dot(&grad, &tau);
                if decrease < 0.0 {
                    let f = value_with(seq, &trial, obj, &props)?;
                    if f <= value + ARMIJO_C * decrease {
                        accepted = Some((trial, step));
                        break;
                    }
                }
                step *= BACKTRACK;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }
        let Some((next, step)) = accepted else {
            status = StoStatus::Stalled;
            break;
        };
        let (next_value, next_grad) = match gradient_with(seq, &next, obj, &props) {
            Ok(v) => v,
            Err(Error::ZeroTraceOverlap { .. }) => {
                status = StoStatus::Degenerate;
                break;
            }
            Err(e) => return Err(e),
        };
        let s: Vec<f64> = next.iter().zip(&tau).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        tau = next;
        value = next_value;
        grad = next_grad;
        iterations += 1;
        kkt = kkt_residual(&tau, &grad, t_f);
        if opts.record_trace {
            trace.push(StoTraceRow {
                iter: iterations,
                objective: value,
                kkt,
                step,
            });
        }
    }
    if status == StoStatus::MaxIterations && kkt <= opts.tol {
        status = StoStatus::Converged;
    }

    let report = StoReport {
        initial_objective,
        objective: value,
        kkt,
        iterations,
        status,
        decompositions: decompositions(&props),
        trace,
    };
    if value > initial_objective {
        // only reachable through the single nudge away from a zero overlap
        let mut report = report;
        report.objective = initial_objective;
        return Ok((start.clone(), report));
    }
    Ok((SwitchingSchedule::new(tau, t_f)?, report))
}

/// L-BFGS direction on the face of the simplex: intervals at zero whose
/// reduced gradient pushes them further down stay fixed, and the direction
/// is centred so that it preserves the total duration.
fn quasi_newton_direction(memory: &Lbfgs, tau: &[f64], grad: &[f64]) -> Vec<f64> {
    let positive: Vec<bool> = tau.iter().map(|&t| t > 0.0).collect();
    let n_pos = positive.iter().filter(|&&p| p).count().max(1);
    let mean_pos = grad
        .iter()
        .zip(&positive)
        .filter(|(_, &p)| p)
        .map(|(g, _)| g)
        .sum::<f64>()
        / n_pos as f64;
    let free: Vec<bool> = tau
        .iter()
        .zip(grad)
        .map(|(&t, &g)| t > 0.0 || g < mean_pos)
        .collect();
    let n_free = free.iter().filter(|&&f| f).count().max(1);
    let mean_free = grad
        .iter()
        .zip(&free)
        .filter(|(_, &f)| f)
        .map(|(g, _)| g)
        .sum::<f64>()
        / n_free as f64;
    let reduced: Vec<f64> = grad
        .iter()
        .zip(&free)
        .map(|(&g, &f)| if f { g - mean_free } else { 0.0 })
        .collect();
    let mut dir: Vec<f64> = memory.apply(&reduced, &free).iter().map(|v| -v).collect();
    let mean_dir = dir
        .iter()
        .zip(&free)
        .filter(|(_, &f)| f)
        .map(|(d, _)| d)
        .sum::<f64>()
        / n_free as f64;
    for (d, &f) in dir.iter_mut().zip(&free) {
        *d = if f { *d - mean_dir } else { 0.0 };
    }
    dir
}

/// Drops intervals of length at most `tol_zero`, hands their time to the
/// preceding surviving interval (the following one for a leading interval)
/// and merges neighbours that end up with equal controls.
pub fn compress_schedule(
    seq: &ControllerSequence,
    sched: &SwitchingSchedule,
    tol_zero: f64,
) -> Result<(ControllerSequence, SwitchingSchedule)> {
    check_lengths(seq, sched)?;
    let keep: Vec<bool> = sched.durations.iter().map(|&d| d > tol_zero).collect();
    if !keep.iter().any(|&k| k) {
        return Ok((seq.clone(), sched.clone()));
    }
    let mut controls: Vec<Vec<f64>> = Vec::new();
    let mut hams: Vec<CMatrix> = Vec::new();
    let mut durations: Vec<f64> = Vec::new();
    let mut leading_mass = 0.0;
    for s in 0..seq.len() {
        let d = sched.durations[s];
        if !keep[s] {
            match durations.last_mut() {
                Some(last) => *last += d,
                None => leading_mass += d,
            }
            continue;
        }
        if controls.last() == Some(&seq.controls[s]) {
            *durations.last_mut().expect("parallel vectors") += d;
        } else {
            controls.push(seq.controls[s].clone());
            hams.push(seq.hams[s].clone());
            durations.push(d);
        }
    }
    durations[0] += leading_mass;
    let compressed = ControllerSequence {
        hams,
        durations: durations.clone(),
        controls,
        x_init: seq.x_init.clone(),
    };
    Ok((compressed, SwitchingSchedule::new(durations, sched.t_f)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection_basics() {
        let p = project_simplex(&[0.2, 0.3, 0.5], 1.0);
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[2] - 0.5).abs() < 1e-15);
        let p = project_simplex(&[2.0, -1.0, 0.0], 1.0);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[1.0, 1.0], 4.0);
        assert_eq!(p, vec![2.0, 2.0]);
    }

    #[test]
    fn projection_is_idempotent_and_feasible() {
        let v = [0.7, -0.2, 1.9, 0.05, 0.3];
        let p = project_simplex(&v, 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!(p.iter().all(|&x| x >= 0.0));
        let q = project_simplex(&p, 2.0);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(SwitchingSchedule::new(vec![1.0, 1.0], 2.0).is_ok());
        assert!(SwitchingSchedule::new(vec![1.0, 1.1], 2.0).is_err());
        assert!(SwitchingSchedule::new(vec![2.0 + 1e-13, -1e-13], 2.0).unwrap().durations[1] == 0.0);
        assert!(SwitchingSchedule::new(vec![], 2.0).is_err());
    }
}
