//! Piecewise-constant controls on a uniform time grid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// `T x N` control values on a uniform grid of width `dt`.
///
/// Row `k` holds the controls applied on `[k dt, (k + 1) dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGrid {
    n_steps: usize,
    n_ctrl: usize,
    dt: f64,
    values: Vec<f64>,
}

impl ControlGrid {
    /// Grid over `[0, t_f]` from row-major values, each in `[0, 1]`.
    pub fn new(n_steps: usize, n_ctrl: usize, t_f: f64, values: Vec<f64>) -> Result<Self> {
        if n_steps == 0 || n_ctrl == 0 {
            return Err(invalid("control grid needs at least one step and one controller"));
        }
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {t_f}")));
        }
        if values.len() != n_steps * n_ctrl {
            return Err(invalid(format!(
                "expected {} control values, got {}",
                n_steps * n_ctrl,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("control value {v} outside [0, 1]")));
        }
        Ok(Self {
            n_steps,
            n_ctrl,
            dt: t_f / n_steps as f64,
            values,
        })
    }

    pub fn constant(n_steps: usize, n_ctrl: usize, t_f: f64, value: f64) -> Result<Self> {
        Self::new(n_steps, n_ctrl, t_f, vec![value; n_steps * n_ctrl])
    }

    /// Grid from one control vector per step.
    pub fn from_rows(rows: &[Vec<f64>], t_f: f64) -> Result<Self> {
        let n_ctrl = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_ctrl) {
            return Err(invalid("ragged control rows"));
        }
        Self::new(rows.len(), n_ctrl, t_f, rows.concat())
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn n_ctrl(&self) -> usize {
        self.n_ctrl
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_f(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Control vector of step `k` (0-based).
    #[inline]
    pub fn step(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_ctrl..(k + 1) * self.n_ctrl]
    }

    pub fn step_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_ctrl..(k + 1) * self.n_ctrl]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_ctrl)
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Total variation `sum_k sum_j |u_{j,k} - u_{j,k+1}|`.
    pub fn tv_norm(&self) -> f64 {
        (1..self.n_steps)
            .map(|k| l1_distance(self.step(k - 1), self.step(k)))
            .fold(0.0, |acc, d| acc + d)
    }

    /// `sum_k (sum_j u_jk - 1)^2`, the SOS1 violation.
    pub fn sos1_violation(&self) -> f64 {
        self.rows()
            .map(|r| {
                let s: f64 = r.iter().sum::<f64>() - 1.0;
                s * s
            })
            .sum()
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
