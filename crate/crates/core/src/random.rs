//! Seeded generators for test inputs and random problem instances.
//!
//! All streams come from `Xoshiro256PlusPlus`, whose output is specified
//! bit-for-bit, so a seed reproduces the same instance on every platform.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal, Uniform};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::linalg::{CMatrix, ZERO};

pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// Hermitian matrix with Gaussian entries, `(A + A^dagger) / 2`.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        let d: f64 = StandardNormal.sample(rng);
        m[(i, i)] = Complex64::new(d, 0.0);
        for j in i + 1..n {
            let z = gaussian(rng) * core::f64::consts::FRAC_1_SQRT_2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Haar-distributed unitary: modified Gram-Schmidt on a complex Gaussian
/// matrix, with the diagonal of `R` made real positive.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|_| (0..n).map(|_| gaussian(rng)).collect())
        .collect();
    for j in 0..n {
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let qk = &done[k];
            let proj = qk
                .iter()
                .zip(rest[0].iter())
                .fold(ZERO, |acc, (a, b)| acc + a.conj() * b);
            for (x, q) in rest[0].iter_mut().zip(qk) {
                *x -= proj * q;
            }
        }
        let norm = libm::sqrt(cols[j].iter().map(|z| z.norm_sqr()).sum());
        for x in cols[j].iter_mut() {
            *x /= norm;
        }
    }
    let mut u = CMatrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &z) in col.iter().enumerate() {
            u[(i, j)] = z;
        }
    }
    u
}

/// Symmetric zero-diagonal coupling matrix with upper-triangle entries
/// drawn uniformly from `[-1, 1]`, row-major.
pub fn random_coupling<R: Rng + ?Sized>(rng: &mut R, q: usize) -> Vec<Vec<f64>> {
    let dist = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let mut j = alloc::vec![alloc::vec![0.0; q]; q];
    for a in 0..q {
        for b in a + 1..q {
            let v = dist.sample(rng);
            j[a][b] = v;
            j[b][a] = v;
        }
    }
    j
}

/// Grid of `rows` x `cols` values drawn uniformly from `[0, 1)`.
pub fn random_grid_values<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = seeded(1);
        for n in [1, 2, 5, 16] {
            assert!(random_unitary(&mut rng, n).unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn coupling_shape() {
        let j = random_coupling(&mut seeded(4), 5);
        for a in 0..5 {
            assert_eq!(j[a][a], 0.0);
            for b in 0..5 {
                assert_eq!(j[a][b], j[b][a]);
                assert!((-1.0..=1.0).contains(&j[a][b]));
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a = random_hermitian(&mut seeded(7), 6);
        let b = random_hermitian(&mut seeded(7), 6);
        assert_eq!(a, b);
        assert!(a.is_hermitian(0.0));
    }
}
