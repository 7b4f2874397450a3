#![allow(dead_code)]

use qswitch_core::linalg::{hermitian_eig, CMatrix};
use qswitch_core::problems::{ControlSystem, FeasibleKind, Objective};
use qswitch_core::random::{random_hermitian, random_unitary, SeededRng};

/// Random system with Hermitian drift and controllers of unit scale.
pub fn random_system(rng: &mut SeededRng, dim: usize, n_ctrl: usize, kind: FeasibleKind, t_f: f64) -> ControlSystem {
    let drift = random_hermitian(rng, dim).scale_real(0.3);
    let controllers = (0..n_ctrl).map(|_| random_hermitian(rng, dim)).collect();
    let labels = (0..n_ctrl).map(|j| format!("h{j}")).collect();
    ControlSystem::new(drift, controllers, CMatrix::identity(dim), kind, t_f, labels).unwrap()
}

/// Energy objective with a negative-definite `H` and a random unit state.
pub fn random_energy(rng: &mut SeededRng, dim: usize) -> Objective {
    let h = random_hermitian(rng, dim);
    let top = *hermitian_eig(&h).unwrap().eigenvalues.last().unwrap();
    let mut h_tilde = h.clone();
    h_tilde.add_scaled(-(top + 1.0), &CMatrix::identity(dim));
    let e_min = hermitian_eig(&h_tilde).unwrap().eigenvalues[0];
    let psi0 = random_unitary(rng, dim).column(0);
    Objective::EnergyRatio { h_tilde, psi0, e_min }
}

pub fn random_infidelity(rng: &mut SeededRng, dim: usize) -> Objective {
    Objective::Infidelity {
        x_targ: random_unitary(rng, dim),
        norm: dim as f64,
    }
}

/// Sum-up rounding written directly from its definition, without any
/// switching logic.
pub fn sur_oracle(values: &[f64], n_steps: usize, n_ctrl: usize, dt: f64, sos1: bool) -> Vec<f64> {
    let mut out = vec![0.0; n_steps * n_ctrl];
    for k in 0..n_steps {
        let p: Vec<f64> = (0..n_ctrl)
            .map(|j| {
                let con: f64 = (0..=k).map(|l| values[l * n_ctrl + j]).sum();
                let bin: f64 = (0..k).map(|l| out[l * n_ctrl + j]).sum();
                dt * (con - bin)
            })
            .collect();
        if sos1 {
            let mut best = 0;
            for j in 1..n_ctrl {
                if p[j] > p[best] {
                    best = j;
                }
            }
            out[k * n_ctrl + best] = 1.0;
        } else {
            for j in 0..n_ctrl {
                if p[j] >= 0.5 * dt {
                    out[k * n_ctrl + j] = 1.0;
                }
            }
        }
    }
    out
}
