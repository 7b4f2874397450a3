//! Control systems, objectives and the four benchmark problem families.
//!
//! Qubit 0 is the leftmost Kronecker factor, so on `q` qubits the operator
//! `sigma_x` on qubit `i` is `I_{2^i} (x) sigma_x (x) I_{2^{q-i-1}}`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eig, vdot, CMatrix, HERMITIAN_TOL, I, ONE, ZERO};

/// Unitarity tolerance for initial operators.
pub const UNITARY_TOL: f64 = 1e-10;

/// Unitarity tolerance for externally supplied target operators.
pub const TARGET_UNITARY_TOL: f64 = 1e-8;

/// Below this trace overlap the infidelity phase is undefined.
pub const ZERO_OVERLAP_TOL: f64 = 1e-14;

/// Gap below which two energies count as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

/// Charge-drive strength of the gmon system.
pub const J_CHARGE: f64 = 0.2 * PI;
/// Flux-drive strength of the gmon system.
pub const J_FLUX: f64 = 3.0 * PI;
/// Qubit-qubit coupling strength of the gmon system.
pub const J_EDGE: f64 = 0.1 * PI;

/// Admissible binary control vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeasibleKind {
    /// Exactly one controller active at a time.
    Sos1,
    /// Any subset of controllers may be active.
    FreeBinary,
}

#[derive(Clone, Debug)]
pub struct ControlSystem {
    pub drift: CMatrix,
    pub controllers: Vec<CMatrix>,
    pub x_init: CMatrix,
    pub feasible: FeasibleKind,
    pub t_f: f64,
    pub labels: Vec<String>,
}

impl ControlSystem {
    pub fn new(
        drift: CMatrix,
        controllers: Vec<CMatrix>,
        x_init: CMatrix,
        feasible: FeasibleKind,
        t_f: f64,
        labels: Vec<String>,
    ) -> Result<Self> {
        let n = drift.rows();
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {t_f}")));
        }
        if controllers.is_empty() {
            return Err(invalid("at least one controller is required"));
        }
        if labels.len() != controllers.len() {
            return Err(invalid(format!(
                "{} labels for {} controllers",
                labels.len(),
                controllers.len()
            )));
        }
        for m in core::iter::once(&drift)
            .chain(&controllers)
            .chain(core::iter::once(&x_init))
        {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    expected: (n, n),
                    found: m.shape(),
                });
            }
            if !m.is_finite() {
                return Err(Error::NonFinite("system operator"));
            }
        }
        for h in core::iter::once(&drift).chain(&controllers) {
            let defect = h.hermitian_defect();
            if defect > HERMITIAN_TOL {
                return Err(Error::NotHermitian { defect });
            }
        }
        let defect = x_init.unitarity_defect();
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary { defect });
        }
        Ok(Self {
            drift,
            controllers,
            x_init,
            feasible,
            t_f,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.rows()
    }

    pub fn n_ctrl(&self) -> usize {
        self.controllers.len()
    }

    /// `H^(0) + sum_j u_j H^(j)`.
    pub fn hamiltonian(&self, u: &[f64]) -> CMatrix {
        assert_eq!(u.len(), self.n_ctrl(), "control vector length");
        let mut h = self.drift.clone();
        for (&uj, hj) in u.iter().zip(&self.controllers) {
            if uj != 0.0 {
                h.add_scaled(uj, hj);
            }
        }
        h
    }
}

/// Objective evaluated on the final operator `X(t_f)`.
#[derive(Clone, Debug)]
pub enum Objective {
    /// `1 - <psi0| X^dagger H X |psi0> / e_min`.
    EnergyRatio {
        h_tilde: CMatrix,
        psi0: Vec<Complex64>,
        e_min: f64,
    },
    /// `1 - |tr(X_targ^dagger X)| / norm`.
    Infidelity { x_targ: CMatrix, norm: f64 },
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::EnergyRatio { h_tilde, .. } => h_tilde.rows(),
            Objective::Infidelity { x_targ, .. } => x_targ.rows(),
        }
    }

    fn check_dim(&self, x: &CMatrix) -> Result<()> {
        let n = self.dim();
        if x.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: (n, n),
                found: x.shape(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &CMatrix) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Objective::EnergyRatio { psi0, .. } => self.energy_value(&x.mul_vec(psi0)),
            Objective::Infidelity { x_targ, norm } => 1.0 - x_targ.inner(x).norm() / norm,
        })
    }

    /// Energy ratio of the evolved state `psi = X psi0`.
    ///
    /// Panics for the infidelity objective.
    pub fn energy_value(&self, psi: &[Complex64]) -> f64 {
        let Objective::EnergyRatio { h_tilde, e_min, .. } = self else {
            panic!("energy_value on an infidelity objective");
        };
        let expectation = vdot(psi, &h_tilde.mul_vec(psi));
        debug_assert!(expectation.im.abs() <= 1e-9 * (1.0 + expectation.re.abs()));
        1.0 - expectation.re / e_min
    }

    /// `tr(X_targ^dagger X)`; panics for the energy objective.
    pub fn overlap(&self, x: &CMatrix) -> Complex64 {
        let Objective::Infidelity { x_targ, .. } = self else {
            panic!("overlap on an energy objective");
        };
        x_targ.inner(x)
    }

    /// Matrix `G` with `dF = 2 Re tr(G^dagger dX)` at `X`.
    pub fn adjoint(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check_dim(x)?;
        match self {
            Objective::EnergyRatio {
                h_tilde,
                psi0,
                e_min,
            } => {
                let hx_psi = h_tilde.mul_vec(&x.mul_vec(psi0));
                let n = x.rows();
                let mut g = CMatrix::zeros(n, n);
                let s = -1.0 / e_min;
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] = hx_psi[i] * psi0[j].conj() * s;
                    }
                }
                Ok(g)
            }
            Objective::Infidelity { x_targ, norm } => {
                let z = x_targ.inner(x);
                let r = z.norm();
                if r <= ZERO_OVERLAP_TOL {
                    return Err(Error::ZeroTraceOverlap { overlap: r });
                }
                Ok(x_targ.scale(z / r * (-0.5 / norm)))
            }
        }
    }
}

/// A control system paired with its objective.
#[derive(Clone, Debug)]
pub struct Instance {
    pub system: ControlSystem,
    pub objective: Objective,
    /// Non-fatal construction notes, e.g. a degenerate ground state.
    pub warnings: Vec<String>,
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_rows(&[&[ZERO, -I], &[I, ZERO]])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real_diag(&[1.0, -1.0])
}

/// `op` acting on qubit `i` of `q`.
pub fn on_qubit(op: &CMatrix, i: usize, q: usize) -> CMatrix {
    assert!(i < q, "qubit {i} out of range for {q} qubits");
    CMatrix::identity(1 << i)
        .kron(op)
        .kron(&CMatrix::identity(1 << (q - i - 1)))
}

/// `a` on qubit `i` times `b` on qubit `j`, `i != j`.
pub fn on_two_qubits(a: &CMatrix, i: usize, b: &CMatrix, j: usize, q: usize) -> CMatrix {
    assert!(i != j, "two-qubit operator needs distinct qubits");
    on_qubit(a, i, q).matmul(&on_qubit(b, j, q))
}

fn check_coupling(q: usize, j: &[Vec<f64>]) -> Result<()> {
    if j.len() != q || j.iter().any(|row| row.len() != q) {
        return Err(invalid(format!("coupling matrix must be {q} x {q}")));
    }
    for a in 0..q {
        if j[a][a] != 0.0 {
            return Err(invalid("coupling matrix must have a zero diagonal"));
        }
        for b in 0..q {
            if !j[a][b].is_finite() {
                return Err(Error::NonFinite("coupling matrix"));
            }
            if j[a][b] != j[b][a] {
                return Err(invalid("coupling matrix must be symmetric"));
            }
        }
    }
    Ok(())
}

/// Coupling matrix with zero diagonal and every other entry one.
pub fn all_ones_coupling(q: usize) -> Vec<Vec<f64>> {
    (0..q)
        .map(|a| (0..q).map(|b| if a == b { 0.0 } else { 1.0 }).collect())
        .collect()
}

/// Ground state `|psi0>` of `h`; the lowest eigenvalue's first eigenvector
/// with its largest-modulus component made real and positive.
fn ground_state(h: &CMatrix, warnings: &mut Vec<String>, what: &str) -> Result<Vec<Complex64>> {
    let eig = hermitian_eig(h)?;
    if eig.dim() > 1 && eig.eigenvalues[1] - eig.eigenvalues[0] <= DEGENERACY_TOL {
        warnings.push(format!(
            "ground state of {what} is degenerate; using the first eigenvector"
        ));
    }
    let mut v = eig.vector(0);
    let mut pivot = 0;
    for (k, z) in v.iter().enumerate() {
        if z.norm() > v[pivot].norm() + 1e-12 {
            pivot = k;
        }
    }
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
    Ok(v)
}

/// All-to-all spin glass: drive `-sum_i sigma_x_i` and problem Hamiltonian
/// `sum_{i != j} J_ij sigma_z_i sigma_z_j`, starting in the ground state of the
/// drive and measured against the problem Hamiltonian.
pub fn build_energy(q: usize, j: &[Vec<f64>], t_f: f64) -> Result<Instance> {
    if q == 0 {
        return Err(invalid("energy instances need at least one qubit"));
    }
    check_coupling(q, j)?;
    let dim = 1 << q;
    let mut h_drive = CMatrix::zeros(dim, dim);
    let sx = pauli_x();
    for i in 0..q {
        h_drive.add_scaled(-1.0, &on_qubit(&sx, i, q));
    }
    // diagonal in the computational basis; qubit i reads bit (q - 1 - i)
    let diag: Vec<f64> = (0..dim)
        .map(|state| {
            let spin = |i: usize| {
                if (state >> (q - 1 - i)) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            };
            let mut e = 0.0;
            for a in 0..q {
                for b in 0..q {
                    if a != b {
                        e += j[a][b] * spin(a) * spin(b);
                    }
                }
            }
            e
        })
        .collect();
    let h_problem = CMatrix::from_real_diag(&diag);

    let mut warnings = Vec::new();
    let psi0 = ground_state(&h_drive, &mut warnings, "the drive Hamiltonian")?;
    let e_min = hermitian_eig(&h_problem)?.eigenvalues[0];
    if e_min >= 0.0 {
        return Err(Error::NonNegativeGroundEnergy { e_min });
    }
    let system = ControlSystem::new(
        CMatrix::zeros(dim, dim),
        vec![h_drive, h_problem.clone()],
        CMatrix::identity(dim),
        FeasibleKind::Sos1,
        t_f,
        vec!["drive".to_string(), "problem".to_string()],
    )?;
    Ok(Instance {
        system,
        objective: Objective::EnergyRatio {
            h_tilde: h_problem,
            psi0,
            e_min,
        },
        warnings,
    })
}

/// Lowest energy above the ground level of `h`, i.e. its second-smallest
/// distinct eigenvalue. `None` when the spectrum is a single level.
pub fn first_excited_energy(h: &CMatrix) -> Result<Option<f64>> {
    let eig = hermitian_eig(h)?;
    let e0 = eig.eigenvalues[0];
    let tol = 1e-9 * h.max_norm().max(1.0);
    Ok(eig.eigenvalues.iter().copied().find(|&e| e > e0 + tol))
}

pub fn cnot_gate() -> CMatrix {
    CMatrix::from_real_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0],
        &[0.0, 0.0, 1.0, 0.0],
    ])
}

/// Two-qubit isotropic Heisenberg chain driven by `sigma_x` and `sigma_y` on
/// the first qubit, targeting CNOT.
pub fn build_cnot(t_f: f64) -> Result<Instance> {
    let (sx, sy, sz) = (pauli_x(), pauli_y(), pauli_z());
    let mut drift = on_two_qubits(&sx, 0, &sx, 1, 2);
    drift += &on_two_qubits(&sy, 0, &sy, 1, 2);
    drift += &on_two_qubits(&sz, 0, &sz, 1, 2);
    let system = ControlSystem::new(
        drift,
        vec![on_qubit(&sx, 0, 2), on_qubit(&sy, 0, 2)],
        CMatrix::identity(4),
        FeasibleKind::FreeBinary,
        t_f,
        vec!["x1".to_string(), "y1".to_string()],
    )?;
    Ok(Instance {
        system,
        objective: Objective::Infidelity {
            x_targ: cnot_gate(),
            norm: 4.0,
        },
        warnings: Vec::new(),
    })
}

/// NOT on the two lowest levels of a three-level system, third level zero.
pub fn not_gate() -> CMatrix {
    CMatrix::from_real_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]])
}

/// Transition strengths of the 0-1 and 1-2 couplings.
pub const NOT_COUPLINGS: (f64, f64) = (1.0, core::f64::consts::SQRT_2);
/// Energies of levels 1 and 2 relative to level 0.
pub const NOT_LEVELS: (f64, f64) = (0.0, 2.0 * PI);

/// Three-level system with ladder couplings, targeting NOT on the lowest two
/// levels.
///
/// The drift carries the level energies `w1 |1><1| + w2 |2><2|`. The two
/// quadrature controls drive the `0-1` and `1-2` transitions with relative
/// strengths `J1 = 1` and `J2 = sqrt(2)` and the usual factor one half of a
/// resonant drive: `H1 = (A + A^dagger) / 2`, `H2 = i (A - A^dagger) / 2` with
/// `A = J1 |0><1| + J2 |1><2|`.
pub fn build_not(t_f: f64) -> Result<Instance> {
    let (j1, j2) = NOT_COUPLINGS;
    let (w1, w2) = NOT_LEVELS;
    let drift = CMatrix::from_real_diag(&[0.0, w1, w2]);
    let mut h1 = CMatrix::zeros(3, 3);
    let mut h2 = CMatrix::zeros(3, 3);
    for (a, b, s) in [(0, 1, 0.5 * j1), (1, 2, 0.5 * j2)] {
        h1[(a, b)] = ONE * s;
        h1[(b, a)] = ONE * s;
        h2[(a, b)] = I * s;
        h2[(b, a)] = -I * s;
    }
    let system = ControlSystem::new(
        drift,
        vec![h1, h2],
        CMatrix::identity(3),
        FeasibleKind::FreeBinary,
        t_f,
        vec!["in_phase".to_string(), "quadrature".to_string()],
    )?;
    Ok(Instance {
        system,
        objective: Objective::Infidelity {
            x_targ: not_gate(),
            norm: 2.0,
        },
        warnings: Vec::new(),
    })
}

/// Shape of the rectangular qubit grid: two rows, qubits laid out row-major.
pub fn grid_shape(q: usize) -> (usize, usize) {
    if q <= 1 {
        (1, q)
    } else {
        (2, q.div_ceil(2))
    }
}

fn grid_position(i: usize, q: usize) -> (usize, usize) {
    let (_, cols) = grid_shape(q);
    (i / cols, i % cols)
}

pub fn is_grid_edge(a: usize, b: usize, q: usize) -> bool {
    if a >= q || b >= q || a == b {
        return false;
    }
    let (ra, ca) = grid_position(a, q);
    let (rb, cb) = grid_position(b, q);
    ra.abs_diff(rb) + ca.abs_diff(cb) == 1
}

/// All nearest-neighbour pairs `(a, b)` with `a < b`, sorted.
pub fn grid_edges(q: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..q {
        for b in a + 1..q {
            if is_grid_edge(a, b, q) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Gmon qubit grid with charge and flux drives per qubit and one `sigma_x
/// sigma_x` coupler per edge, compiled against an external target unitary.
pub fn build_circuit(
    q: usize,
    edges: &[(usize, usize)],
    x_targ: CMatrix,
    t_f: f64,
) -> Result<Instance> {
    if q == 0 {
        return Err(invalid("circuit instances need at least one qubit"));
    }
    let dim = 1 << q;
    if x_targ.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            expected: (dim, dim),
            found: x_targ.shape(),
        });
    }
    if !x_targ.is_finite() {
        return Err(Error::NonFinite("target operator"));
    }
    let defect = x_targ.unitarity_defect();
    if defect > TARGET_UNITARY_TOL {
        return Err(Error::TargetNotUnitary { defect });
    }
    for &(a, b) in edges {
        if !is_grid_edge(a, b, q) {
            return Err(Error::BadEdge(a, b));
        }
    }
    let sx = pauli_x();
    let flux = CMatrix::from_real_diag(&[0.0, 1.0]);
    let mut controllers = Vec::with_capacity(2 * q + edges.len());
    let mut labels = Vec::with_capacity(controllers.capacity());
    for i in 0..q {
        controllers.push(on_qubit(&sx, i, q).scale_real(J_CHARGE));
        labels.push(format!("charge{i}"));
        controllers.push(on_qubit(&flux, i, q).scale_real(J_FLUX));
        labels.push(format!("flux{i}"));
    }
    for &(a, b) in edges {
        controllers.push(on_two_qubits(&sx, a, &sx, b, q).scale_real(J_EDGE));
        labels.push(format!("coupler{a}-{b}"));
    }
    let system = ControlSystem::new(
        CMatrix::zeros(dim, dim),
        controllers,
        CMatrix::identity(dim),
        FeasibleKind::Sos1,
        t_f,
        labels,
    )?;
    Ok(Instance {
        system,
        objective: Objective::Infidelity {
            x_targ,
            norm: dim as f64,
        },
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_unitary, seeded};

    #[test]
    fn first_excited_level_skips_degenerate_ground() {
        let h = CMatrix::from_real_diag(&[-2.0, -2.0, 2.0, 2.0]);
        assert_eq!(first_excited_energy(&h).unwrap(), Some(2.0));
        assert_eq!(first_excited_energy(&CMatrix::identity(3)).unwrap(), None);
    }

    #[test]
    fn energy2_drive_and_ground_state() {
        let inst = build_energy(2, &all_ones_coupling(2), 2.0).unwrap();
        let sx = pauli_x();
        let expected = (&on_qubit(&sx, 0, 2) + &on_qubit(&sx, 1, 2)).scale_real(-1.0);
        assert!(inst.system.controllers[0].max_diff(&expected) < 1e-15);
        let Objective::EnergyRatio { psi0, e_min, .. } = &inst.objective else {
            panic!()
        };
        for z in psi0 {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        }
        assert_eq!(*e_min, -2.0);
        assert!(inst.warnings.is_empty());
    }

    #[test]
    fn zero_coupling_is_rejected() {
        let r = build_energy(1, &[vec![0.0]], 1.0);
        assert!(matches!(r, Err(Error::NonNegativeGroundEnergy { .. })));
    }

    #[test]
    fn cnot_drift_is_traceless() {
        let inst = build_cnot(5.0).unwrap();
        assert!(inst.system.drift.trace().norm() < 1e-15);
        assert_eq!(inst.system.feasible, FeasibleKind::FreeBinary);
        let Objective::Infidelity { x_targ, .. } = &inst.objective else {
            panic!()
        };
        assert_eq!(x_targ, &cnot_gate());
    }

    #[test]
    fn infidelity_values() {
        let inst = build_cnot(5.0).unwrap();
        assert!(inst.objective.value(&cnot_gate()).unwrap().abs() < 1e-15);
        assert!((inst.objective.value(&CMatrix::identity(4)).unwrap() - 0.5).abs() < 1e-15);
        let not = build_not(2.0).unwrap();
        assert_eq!(not.objective.value(&CMatrix::identity(3)).unwrap(), 1.0);
        assert!(matches!(
            not.objective.adjoint(&CMatrix::identity(3)),
            Err(Error::ZeroTraceOverlap { .. })
        ));
    }

    #[test]
    fn circuit_controller_counts() {
        let mut rng = seeded(5);
        for (q, n) in [(2, 5), (4, 12), (6, 19)] {
            let target = random_unitary(&mut rng, 1 << q);
            let inst = build_circuit(q, &grid_edges(q), target, 10.0).unwrap();
            assert_eq!(inst.system.n_ctrl(), n);
            assert_eq!(inst.system.feasible, FeasibleKind::Sos1);
        }
    }

    #[test]
    fn circuit_rejects_bad_inputs() {
        let target = random_unitary(&mut seeded(1), 4);
        assert!(matches!(
            build_circuit(2, &[(0, 0)], target.clone(), 1.0),
            Err(Error::BadEdge(0, 0))
        ));
        let mut broken = target;
        broken[(0, 0)] += ONE;
        assert!(matches!(
            build_circuit(2, &[(0, 1)], broken, 1.0),
            Err(Error::TargetNotUnitary { .. })
        ));
    }

    #[test]
    fn grid_edges_for_benchmark_sizes() {
        assert_eq!(grid_edges(2), vec![(0, 1)]);
        assert_eq!(grid_edges(4), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(grid_edges(6).len(), 7);
    }

    #[test]
    fn system_validation() {
        let h = pauli_x();
        let bad = CMatrix::from_rows(&[&[ZERO, ONE], &[ZERO, ZERO]]);
        let labels = vec!["a".to_string()];
        let id = CMatrix::identity(2);
        assert!(matches!(
            ControlSystem::new(h.clone(), vec![bad], id.clone(), FeasibleKind::Sos1, 1.0, labels.clone()),
            Err(Error::NotHermitian { .. })
        ));
        assert!(ControlSystem::new(h.clone(), vec![h.clone()], id.clone(), FeasibleKind::Sos1, 0.0, labels.clone()).is_err());
        assert!(matches!(
            ControlSystem::new(h.clone(), vec![h.clone()], h.scale_real(2.0), FeasibleKind::Sos1, 1.0, labels),
            Err(Error::NotUnitary { .. })
        ));
    }
}
