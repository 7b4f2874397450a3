//! Shared pieces of the projected quasi-Newton solvers.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

/// Sufficient-decrease constant of the Armijo test.
pub const ARMIJO_C: f64 = 1e-4;
/// Step shrink factor during backtracking.
pub const BACKTRACK: f64 = 0.5;
/// Backtracking steps before a direction is abandoned.
pub const MAX_BACKTRACKS: usize = 60;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Limited-memory BFGS curvature pairs with the two-loop recursion.
#[derive(Clone, Debug)]
pub struct Lbfgs {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self {
            memory,
            pairs: VecDeque::with_capacity(memory),
        }
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores `(s, y)` if it carries positive curvature.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if self.memory == 0 {
            return;
        }
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        let ss = dot(&s, &s);
        if !(sy > 1e-12 * libm::sqrt(ss * yy)) || !sy.is_finite() {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Approximate inverse Hessian applied to `g`, with the pairs and `g`
    /// restricted to coordinates where `mask` is true (others are zero).
    pub fn apply(&self, g: &[f64], mask: &[bool]) -> Vec<f64> {
        let restrict = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(mask)
                .map(|(&x, &m)| if m { x } else { 0.0 })
                .collect()
        };
        let mut q = restrict(g);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        let restricted: Vec<(Vec<f64>, Vec<f64>)> = self
            .pairs
            .iter()
            .map(|(s, y, _)| (restrict(s), restrict(y)))
            .collect();
        for (s, y) in restricted.iter().rev() {
            let sy = dot(s, y);
            if sy <= 0.0 {
                alphas.push(0.0);
                continue;
            }
            let a = dot(s, &q) / sy;
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y)) = restricted.last() {
            let yy = dot(y, y);
            let sy = dot(s, y);
            if yy > 0.0 && sy > 0.0 {
                let gamma = sy / yy;
                for qi in q.iter_mut() {
                    *qi *= gamma;
                }
            }
        }
        for ((s, y), a) in restricted.iter().zip(alphas.iter().rev()) {
            let sy = dot(s, y);
            if sy <= 0.0 {
                continue;
            }
            let b = dot(y, &q) / sy;
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q
    }
}
