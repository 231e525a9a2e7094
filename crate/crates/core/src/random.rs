//! Seeded randomness. Every stochastic routine takes an explicit 64-bit seed
//! and derives per-restart streams with [`stream`], so results never depend
//! on scheduling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::{c64, ComplexMatrix, C64};

pub type SeededRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for sub-stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index.wrapping_add(0xA5A5))))
}

/// Deterministic child seed for sub-task `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5A5A_0000)))
}

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard complex Gaussian (independent real and imaginary parts with
/// variance 1/2).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let entries = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    ComplexMatrix::new(rows, cols, entries).expect("gaussian entries are finite")
}

/// Haar-distributed unitary from the QR factorization of a Gaussian matrix,
/// with the usual phase correction on the diagonal of R.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = gaussian_matrix(rng, n, n).into_dmatrix();
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut phases = DMatrix::<C64>::identity(n, n);
    for i in 0..n {
        let d = r[(i, i)];
        let norm = d.norm();
        phases[(i, i)] = if norm > 0.0 { d / norm } else { c64(1.0, 0.0) };
    }
    ComplexMatrix::from_dmatrix(q * phases)
}

/// Random invertible matrix `U diag(s) V` with singular values drawn
/// log-uniformly from `[1, max_condition]`.
pub fn random_invertible<R: Rng + ?Sized>(rng: &mut R, n: usize, max_condition: f64) -> ComplexMatrix {
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    let log_max = max_condition.max(1.0).ln();
    let mut s: Vec<C64> = (0..n).map(|_| c64((rng.random::<f64>() * log_max).exp(), 0.0)).collect();
    if n > 1 {
        s[0] = c64(1.0, 0.0);
        s[n - 1] = c64(max_condition.max(1.0), 0.0);
    }
    &(&u * &ComplexMatrix::from_diagonal(&s)) * &v
}
