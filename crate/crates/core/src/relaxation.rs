//! Continuous relaxation of the discretised control problem.
//!
//! Controls are relaxed to the box `[0, 1]` and optimised by projected
//! L-BFGS. Gradients are exact: the derivative of each step propagator
//! `exp(-i H_k dt)` is the Frechet derivative of the exponential, applied in
//! adjoint form so one backward sweep yields every `dF/du_jk`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::ControlGrid;
use crate::linalg::{expm_frechet_adjoint, expm_from_eig, hermitian_eig, CMatrix, HermitianEig};
use crate::optim::{dot, max_abs, Lbfgs, ARMIJO_C, BACKTRACK, MAX_BACKTRACKS};
use crate::problems::{ControlSystem, Objective};
use crate::random::seeded;

pub fn check_grid(sys: &ControlSystem, grid: &ControlGrid) -> Result<()> {
    if grid.n_ctrl() != sys.n_ctrl() {
        return Err(Error::DimensionMismatch {
            expected: (grid.n_steps(), sys.n_ctrl()),
            found: (grid.n_steps(), grid.n_ctrl()),
        });
    }
    Ok(())
}

/// Operators `X_1, ..., X_T` with `X_k = exp(-i H_k dt) X_{k-1}`, `X_0 = x_init`.
pub fn simulate(sys: &ControlSystem, grid: &ControlGrid) -> Result<Vec<CMatrix>> {
    check_grid(sys, grid)?;
    let mut states = Vec::with_capacity(grid.n_steps());
    let mut x = sys.x_init.clone();
    for k in 0..grid.n_steps() {
        let eig = hermitian_eig(&sys.hamiltonian(grid.step(k)))?;
        x = expm_from_eig(&eig, grid.dt()).matmul(&x);
        states.push(x.clone());
    }
    Ok(states)
}

/// Final operator `X_T`.
pub fn final_state(sys: &ControlSystem, grid: &ControlGrid) -> Result<CMatrix> {
    Ok(simulate(sys, grid)?.pop().expect("grid has at least one step"))
}

/// Objective value of a grid, without penalty.
pub fn evaluate(sys: &ControlSystem, obj: &Objective, grid: &ControlGrid) -> Result<f64> {
    obj.value(&final_state(sys, grid)?)
}

/// `rho * sum_k (sum_j u_jk - 1)^2`.
pub fn penalty(grid: &ControlGrid, rho: f64) -> f64 {
    if rho == 0.0 {
        0.0
    } else {
        rho * grid.sos1_violation()
    }
}

/// Penalised objective and its gradient, row-major `T x N`.
#[derive(Clone, Debug)]
pub struct GradientEval {
    pub objective: f64,
    pub penalty: f64,
    pub gradient: Vec<f64>,
}

impl GradientEval {
    pub fn total(&self) -> f64 {
        self.objective + self.penalty
    }
}

/// Gradient of `F(u) + rho * sum_k (sum_j u_jk - 1)^2` with respect to every
/// control value.
pub fn grape_gradient(
    sys: &ControlSystem,
    obj: &Objective,
    grid: &ControlGrid,
    rho: f64,
) -> Result<GradientEval> {
    check_grid(sys, grid)?;
    let (t_steps, n_ctrl, dt) = (grid.n_steps(), grid.n_ctrl(), grid.dt());

    let mut eigs: Vec<HermitianEig> = Vec::with_capacity(t_steps);
    let mut props = Vec::with_capacity(t_steps);
    // states[k] = X_k, states[0] = x_init
    let mut states = Vec::with_capacity(t_steps + 1);
    states.push(sys.x_init.clone());
    for k in 0..t_steps {
        let eig = hermitian_eig(&sys.hamiltonian(grid.step(k)))?;
        let u = expm_from_eig(&eig, dt);
        states.push(u.matmul(&states[k]));
        eigs.push(eig);
        props.push(u);
    }
    let x_final = &states[t_steps];
    let objective = obj.value(x_final)?;
    let mut adj = obj.adjoint(x_final)?;

    let mut gradient = vec![0.0; t_steps * n_ctrl];
    for k in (0..t_steps).rev() {
        let m = adj.matmul_adjoint(&states[k]);
        let pulled = expm_frechet_adjoint(&eigs[k], &m, dt)?;
        for (j, hj) in sys.controllers.iter().enumerate() {
            gradient[k * n_ctrl + j] = 2.0 * pulled.inner(hj).re;
        }
        if k > 0 {
            adj = props[k].adjoint_matmul(&adj);
        }
    }

    if rho != 0.0 {
        for k in 0..t_steps {
            let excess: f64 = grid.step(k).iter().sum::<f64>() - 1.0;
            for g in &mut gradient[k * n_ctrl..(k + 1) * n_ctrl] {
                *g += 2.0 * rho * excess;
            }
        }
    }
    Ok(GradientEval {
        objective,
        penalty: penalty(grid, rho),
        gradient,
    })
}

/// Starting point of the relaxation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Every control `1/N`.
    Uniform,
    /// Every control set to the given value.
    Constant(f64),
    /// Independent uniform draws from `[0, 1)` using the configured seed.
    Random,
}

#[derive(Clone, Debug)]
pub struct RelaxConfig {
    pub n_steps: usize,
    pub rho: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub init: Init,
    pub seed: u64,
    pub lbfgs_memory: usize,
    pub record_trace: bool,
}

impl RelaxConfig {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            rho: 0.0,
            max_iters: 5000,
            grad_tol: 1e-6,
            init: Init::Uniform,
            seed: 0,
            lbfgs_memory: 10,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// Stationarity measure below tolerance.
    Converged,
    /// Iteration cap reached.
    MaxIterations,
    /// No step along either the quasi-Newton or the steepest-descent
    /// direction gave sufficient decrease.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub penalty: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct RelaxResult {
    pub grid: ControlGrid,
    pub objective: f64,
    pub penalty: f64,
    pub iterations: usize,
    /// `||P(u - grad) - u||_inf` at the returned point.
    pub stationarity: f64,
    pub status: SolveStatus,
    pub trace: Vec<TraceRow>,
}

fn project_box(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn box_stationarity(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| ((xi - gi).clamp(0.0, 1.0) - xi).abs())
        .fold(0.0, f64::max)
}

/// Gradient with a bounded number of seeded restarts away from points where
/// the trace overlap vanishes.
fn gradient_with_restarts(
    sys: &ControlSystem,
    obj: &Objective,
    x: &mut [f64],
    shape: (usize, usize, f64),
    rho: f64,
    seed: u64,
) -> Result<GradientEval> {
    let (t_steps, n_ctrl, t_f) = shape;
    let mut rng = seeded(seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..8 {
        let grid = ControlGrid::new(t_steps, n_ctrl, t_f, x.to_vec())?;
        match grape_gradient(sys, obj, &grid, rho) {
            Err(Error::ZeroTraceOverlap { .. }) => {
                for v in x.iter_mut() {
                    *v += 1e-3 * (rng.random::<f64>() - 0.5);
                }
                project_box(x);
            }
            other => return other,
        }
    }
    let grid = ControlGrid::new(t_steps, n_ctrl, t_f, x.to_vec())?;
    grape_gradient(sys, obj, &grid, rho)
}

/// Minimises the penalised objective over the box by projected L-BFGS with
/// Armijo backtracking.
pub fn solve_relaxation(
    sys: &ControlSystem,
    obj: &Objective,
    cfg: &RelaxConfig,
) -> Result<RelaxResult> {
    if cfg.n_steps == 0 {
        return Err(crate::error::invalid("relaxation needs at least one time step"));
    }
    let n_ctrl = sys.n_ctrl();
    let shape = (cfg.n_steps, n_ctrl, sys.t_f);
    let len = cfg.n_steps * n_ctrl;
    let mut x: Vec<f64> = match cfg.init {
        Init::Uniform => vec![1.0 / n_ctrl as f64; len],
        Init::Constant(c) => vec![c.clamp(0.0, 1.0); len],
        Init::Random => {
            let mut rng = seeded(cfg.seed);
            (0..len).map(|_| rng.random::<f64>()).collect()
        }
    };

    let value_at = |x: &[f64]| -> Result<(f64, f64)> {
        let grid = ControlGrid::new(cfg.n_steps, n_ctrl, sys.t_f, x.to_vec())?;
        Ok((evaluate(sys, obj, &grid)?, penalty(&grid, cfg.rho)))
    };

    let mut eval = gradient_with_restarts(sys, obj, &mut x, shape, cfg.rho, cfg.seed)?;
    let mut memory = Lbfgs::new(cfg.lbfgs_memory);
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(TraceRow {
            iter: 0,
            objective: eval.objective,
            penalty: eval.penalty,
            step: 0.0,
        });
    }
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut stationarity = box_stationarity(&x, &eval.gradient);

    while iterations < cfg.max_iters {
        if stationarity <= cfg.grad_tol {
            status = SolveStatus::Converged;
            break;
        }
        let g = &eval.gradient;
        // variables held at a bound by the gradient stay fixed this iteration
        let free: Vec<bool> = x
            .iter()
            .zip(g)
            .map(|(&xi, &gi)| !((xi <= 0.0 && gi > 0.0) || (xi >= 1.0 && gi < 0.0)))
            .collect();

        let mut accepted = None;
        for use_memory in [true, false] {
            if use_memory && memory.is_empty() {
                continue;
            }
            let dir: Vec<f64> = if use_memory {
                memory.apply(g, &free).iter().map(|v| -v).collect()
            } else {
                g.iter()
                    .zip(&free)
                    .map(|(&gi, &f)| if f { -gi } else { 0.0 })
                    .collect()
            };
            if dot(&dir, g) >= 0.0 {
                continue;
            }
            let mut step = if use_memory {
                1.0
            } else {
                // first-order step scaled so the largest move is at most one
                1.0 / max_abs(&dir).max(1.0)
            };
            let base = eval.total();
            for _ in 0..MAX_BACKTRACKS {
                let mut trial: Vec<f64> =
                    x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
                project_box(&mut trial);
                let decrease: f64 = dot(g, &trial) - dot(g, &x);
                if decrease < 0.0 {
                    let (f, p) = value_at(&trial)?;
                    if f + p <= base + ARMIJO_C * decrease {
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

        let Some((mut next, step)) = accepted else {
            status = SolveStatus::Stalled;
            break;
        };
        let next_eval = gradient_with_restarts(sys, obj, &mut next, shape, cfg.rho, cfg.seed)?;
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_eval
            .gradient
            .iter()
            .zip(&eval.gradient)
            .map(|(a, b)| a - b)
            .collect();
        memory.push(s, y);
        x = next;
        eval = next_eval;
        iterations += 1;
        stationarity = box_stationarity(&x, &eval.gradient);
        if cfg.record_trace {
            trace.push(TraceRow {
                iter: iterations,
                objective: eval.objective,
                penalty: eval.penalty,
                step,
            });
        }
    }
    if status == SolveStatus::MaxIterations && stationarity <= cfg.grad_tol {
        status = SolveStatus::Converged;
    }

    Ok(RelaxResult {
        grid: ControlGrid::new(cfg.n_steps, n_ctrl, sys.t_f, x)?,
        objective: eval.objective,
        penalty: eval.penalty,
        iterations,
        stationarity,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm_skew;
    use crate::problems::{all_ones_coupling, build_energy};

    #[test]
    fn zero_controls_without_drift_leave_state_fixed() {
        let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
        let grid = ControlGrid::constant(4, 2, 2.0, 0.0).unwrap();
        for x in simulate(&inst.system, &grid).unwrap() {
            assert!(x.max_diff(&CMatrix::identity(4)) < 1e-15);
        }
    }

    #[test]
    fn single_step_is_one_exponential() {
        let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
        let grid = ControlGrid::new(1, 2, 2.0, vec![1.0, 0.0]).unwrap();
        let expected = expm_skew(&inst.system.controllers[0], 2.0).unwrap();
        assert!(final_state(&inst.system, &grid).unwrap().max_diff(&expected) < 1e-14);
    }

    #[test]
    fn penalty_gradient_alone() {
        let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
        let grid = ControlGrid::new(2, 2, 2.0, vec![0.7, 0.6, 0.2, 0.1]).unwrap();
        let with = grape_gradient(&inst.system, &inst.objective, &grid, 3.0).unwrap();
        let without = grape_gradient(&inst.system, &inst.objective, &grid, 0.0).unwrap();
        let expected = [2.0 * 3.0 * 0.3, 2.0 * 3.0 * 0.3, -2.0 * 3.0 * 0.7, -2.0 * 3.0 * 0.7];
        for i in 0..4 {
            assert!((with.gradient[i] - without.gradient[i] - expected[i]).abs() < 1e-12);
        }
        assert!((with.penalty - 3.0 * (0.09 + 0.49)).abs() < 1e-12);
    }

    #[test]
    fn penalty_vanishes_on_sos1_grid() {
        let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
        let grid = ControlGrid::new(2, 2, 2.0, vec![0.25, 0.75, 0.5, 0.5]).unwrap();
        let with = grape_gradient(&inst.system, &inst.objective, &grid, 5.0).unwrap();
        let without = grape_gradient(&inst.system, &inst.objective, &grid, 0.0).unwrap();
        assert_eq!(with.penalty, 0.0);
        for (a, b) in with.gradient.iter().zip(&without.gradient) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_start_has_zero_penalty() {
        let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
        let mut cfg = RelaxConfig::new(5);
        cfg.rho = 1.0;
        cfg.max_iters = 1;
        let n = inst.system.n_ctrl();
        let grid = ControlGrid::constant(5, n, 2.0, 1.0 / n as f64).unwrap();
        assert_eq!(penalty(&grid, cfg.rho), 0.0);
    }
}
