//! Named benchmark instances and their default parameters.

use qswitch_core::problems::{
    all_ones_coupling, build_circuit, build_cnot, build_energy, build_not, grid_edges,
};
use qswitch_core::random::{random_coupling, seeded};
use qswitch_core::{CMatrix, Instance};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Energy,
    Cnot,
    Not,
    Circuit,
}

impl Family {
    pub fn parse(s: &str) -> Option<Family> {
        match s.to_ascii_lowercase().as_str() {
            "energy" => Some(Family::Energy),
            "cnot" => Some(Family::Cnot),
            "not" => Some(Family::Not),
            "circuit" => Some(Family::Circuit),
            _ => None,
        }
    }
}

/// One row of the parameter table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InstanceSpec {
    pub name: &'static str,
    pub family: Family,
    pub q: usize,
    pub n_ctrl: usize,
    pub t_f: f64,
    pub n_steps: usize,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[allow(clippy::too_many_arguments)]
const fn row(
    name: &'static str,
    family: Family,
    q: usize,
    n_ctrl: usize,
    t_f: f64,
    n_steps: usize,
    rho: f64,
    alpha: f64,
    beta: f64,
) -> InstanceSpec {
    InstanceSpec {
        name,
        family,
        q,
        n_ctrl,
        t_f,
        n_steps,
        rho,
        alpha,
        beta,
    }
}

pub const TABLE: [InstanceSpec; 12] = [
    row("Energy2", Family::Energy, 2, 2, 2.0, 40, 0.0, 0.1, 0.075),
    row("Energy4", Family::Energy, 4, 2, 2.0, 40, 0.0, 0.15, 0.015),
    row("Energy6", Family::Energy, 6, 2, 5.0, 100, 0.0, 0.015, 0.01),
    row("CNOT5", Family::Cnot, 2, 2, 5.0, 100, 0.0, 0.02, 0.02),
    row("CNOT10", Family::Cnot, 2, 2, 10.0, 200, 0.0, 0.003, 0.008),
    row("CNOT20", Family::Cnot, 2, 2, 20.0, 400, 0.0, 0.01, 0.015),
    row("NOT2", Family::Not, 1, 2, 2.0, 20, 0.0, 0.01, 0.03),
    row("NOT6", Family::Not, 1, 2, 6.0, 60, 0.0, 0.0015, 0.015),
    row("NOT10", Family::Not, 1, 2, 10.0, 100, 0.0, 0.009, 0.035),
    row("CircuitH2", Family::Circuit, 2, 5, 10.0, 100, 1.0, 0.045, 0.01),
    row("CircuitLiH", Family::Circuit, 4, 12, 20.0, 200, 0.1, 0.03, 0.06),
    row("CircuitBeH2", Family::Circuit, 6, 19, 20.0, 200, 0.01, 0.03, 0.2),
];

/// Case-insensitive lookup by name.
pub fn lookup(name: &str) -> Option<&'static InstanceSpec> {
    TABLE.iter().find(|s| s.name.eq_ignore_ascii_case(name))
}

/// Problem definition after resolving a table row or an inline family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProblemDef {
    pub family: Family,
    pub q: usize,
    pub t_f: f64,
}

impl ProblemDef {
    /// Energy instances other than the two-qubit one draw `J` from `seed`.
    pub fn uses_random_coupling(&self) -> bool {
        self.family == Family::Energy && self.q != 2
    }

    pub fn build(
        &self,
        seed: u64,
        coupling: Option<&[Vec<f64>]>,
        target: Option<CMatrix>,
    ) -> AppResult<Instance> {
        let inst = match self.family {
            Family::Energy => {
                let j = match coupling {
                    Some(j) => j.to_vec(),
                    None if self.q == 2 => all_ones_coupling(2),
                    None => random_coupling(&mut seeded(seed), self.q),
                };
                build_energy(self.q, &j, self.t_f)?
            }
            Family::Cnot => build_cnot(self.t_f)?,
            Family::Not => build_not(self.t_f)?,
            Family::Circuit => {
                let target = target.ok_or_else(|| {
                    AppError::config("circuit instances need a target unitary file (--target)")
                })?;
                build_circuit(self.q, &grid_edges(self.q), target, self.t_f)?
            }
        };
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_controller_counts_match_built_systems() {
        let mut rng = seeded(3);
        for spec in &TABLE {
            let def = ProblemDef {
                family: spec.family,
                q: spec.q,
                t_f: spec.t_f,
            };
            let target = (spec.family == Family::Circuit)
                .then(|| qswitch_core::random::random_unitary(&mut rng, 1 << spec.q));
            let inst = def.build(1, None, target).unwrap();
            assert_eq!(inst.system.n_ctrl(), spec.n_ctrl, "{}", spec.name);
            let dim = if spec.family == Family::Not { 3 } else { 1 << spec.q };
            assert_eq!(inst.system.dim(), dim, "{}", spec.name);
        }
    }

    #[test]
    fn lookup_ignores_case() {
        assert_eq!(lookup("not10").unwrap().n_steps, 100);
        assert!(lookup("Energy3").is_none());
    }

    #[test]
    fn circuit_without_target_is_a_config_error() {
        let def = ProblemDef {
            family: Family::Circuit,
            q: 2,
            t_f: 10.0,
        };
        assert_eq!(def.build(0, None, None).unwrap_err().exit_code(), 2);
    }
}
