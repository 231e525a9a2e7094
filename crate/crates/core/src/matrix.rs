//! Dense complex matrices and the handful of spectral quantities the rest of
//! the crate is built on: operator norm, spectral radius, condition number and
//! block assembly.
//!
//! Everything here is desk scale (a few dozen rows at most), so all routines
//! are dense and delegate the heavy lifting to `nalgebra`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative threshold `sigma_min / sigma_max` below which a matrix is treated
/// as singular.
pub const SINGULAR_RELATIVE_TOL: f64 = 1e-12;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// A dense complex matrix with all entries finite.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols() {
                let z = self.inner[(i, j)];
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:.6}{:+.6}i", z.re, z.im)?;
            }
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if entries.len() != rows * cols {
            return Err(Error::dim(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Self { inner: DMatrix::from_row_slice(rows, cols, &entries) })
    }

    /// Builds a matrix from nested rows. Panics on ragged or non-finite input,
    /// so it is meant for literals.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let entries: Vec<C64> = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self::new(r, c, entries).expect("literal matrix must be rectangular and finite")
    }

    /// Real-valued convenience constructor for literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&x| cr(x)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn from_dmatrix(inner: DMatrix<C64>) -> Self {
        debug_assert!(inner.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self { inner }
    }

    pub fn identity(n: usize) -> Self {
        Self { inner: DMatrix::identity(n, n) }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { inner: DMatrix::zeros(rows, cols) }
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        Self { inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    /// The matrix unit `E_ij` in `M_n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m.inner[(i, j)] = cr(1.0);
        m
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.inner[(i, j)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.inner
    }

    /// Row-major copy of the entries.
    pub fn entries(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self { inner: self.inner.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { inner: &self.inner * s }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(cr(s))
    }

    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute entry, used for cheap closeness checks.
    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self - other).op_norm()
    }

    /// `self + s * I`.
    pub fn shift(&self, s: C64) -> Self {
        let mut out = self.clone();
        let n = self.rows().min(self.cols());
        for i in 0..n {
            out.inner[(i, i)] += s;
        }
        out
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.inner.clone().svd(false, false);
        svd.singular_values.iter().copied().collect()
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        self.singular_values().into_iter().fold(0.0, f64::max)
    }

    /// Largest singular value together with unit left and right singular
    /// vectors: `self * v = sigma * u`.
    pub fn top_singular_triplet(&self) -> (f64, DVector<C64>, DVector<C64>) {
        let svd = checked_svd(&self.inner);
        let (k, sigma) = svd
            .sigma
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best });
        let left = svd.u.column(k).into_owned();
        let right = svd.v_t.row(k).adjoint();
        (sigma, left, right)
    }

    fn require_square(&self, what: &str) -> Result<usize> {
        if !self.is_square() {
            return Err(Error::dim(format!(
                "{what} requires a square matrix, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        Ok(self.rows())
    }

    fn triangular_kind(&self) -> Option<bool> {
        let n = self.rows();
        let upper = (0..n).all(|i| (0..i).all(|j| self.inner[(i, j)] == C64::new(0.0, 0.0)));
        if upper {
            return Some(true);
        }
        let lower = (0..n).all(|i| ((i + 1)..n).all(|j| self.inner[(i, j)] == C64::new(0.0, 0.0)));
        lower.then_some(false)
    }

    /// Eigenvalues with algebraic multiplicity. Exactly triangular input is
    /// read off the diagonal; everything else goes through a complex Schur
    /// decomposition.
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        let n = self.require_square("eigenvalues")?;
        if self.triangular_kind().is_some() {
            return Ok((0..n).map(|i| self.inner[(i, i)]).collect());
        }
        self.eigenvalues_schur()
    }

    /// Eigenvalues through the Schur form only, without the triangular
    /// shortcut.
    pub fn eigenvalues_schur(&self) -> Result<Vec<C64>> {
        let n = self.require_square("eigenvalues")?;
        if n == 1 {
            return Ok(vec![self.inner[(0, 0)]]);
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let schur = Schur::try_new(self.inner.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::invalid("Schur iteration did not converge"))?;
        let (_, t) = schur.unpack();
        let mut out = Vec::with_capacity(n);
        let mut k = 0;
        while k < n {
            let split = k + 1 == n || t[(k + 1, k)].norm() <= 1e-14 * scale;
            if split {
                out.push(t[(k, k)]);
                k += 1;
            } else {
                let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
                let half_tr = (a + d) * 0.5;
                let disc = ((a - d) * 0.5 * ((a - d) * 0.5) + b * c).sqrt();
                out.push(half_tr + disc);
                out.push(half_tr - disc);
                k += 2;
            }
        }
        Ok(out)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.into_iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// `sigma_max / sigma_min`, with a singularity error below the relative
    /// threshold [`SINGULAR_RELATIVE_TOL`].
    pub fn condition(&self) -> Result<f64> {
        self.require_square("condition")?;
        let sv = self.singular_values();
        let sigma_max = sv.iter().copied().fold(0.0, f64::max);
        let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if !(sigma_min > SINGULAR_RELATIVE_TOL * sigma_max) {
            return Err(Error::Singular { sigma_min, sigma_max });
        }
        Ok(sigma_max / sigma_min)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.condition()?;
        let inv = self
            .inner
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { sigma_min: 0.0, sigma_max: self.op_norm() })?;
        Ok(Self { inner: inv })
    }

    /// `X a X^{-1}` for this `X`, given a precomputed inverse.
    pub fn conjugate_with(&self, inverse: &Self, a: &Self) -> Self {
        self * a * inverse
    }

    /// Hermitian part `(m + m*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self { inner: (&self.inner + self.inner.adjoint()) * cr(0.5) }
    }

    /// `m^p` for a Hermitian positive definite `m`, via its eigendecomposition.
    pub fn hermitian_power(&self, p: f64) -> Result<Self> {
        self.require_square("hermitian_power")?;
        let h = self.hermitian_part();
        let eig = h.inner.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::invalid("hermitian_power requires a positive definite matrix"));
        }
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| cr(l.powf(p))));
        let q = &eig.eigenvectors;
        Ok(Self { inner: q * d * q.adjoint() })
    }

    /// Upper-triangular test with an absolute tolerance on the strictly lower
    /// part.
    pub fn is_upper_triangular(&self, tol: f64) -> bool {
        (0..self.rows()).all(|i| (0..i.min(self.cols())).all(|j| self.inner[(i, j)].norm() <= tol))
    }

    /// Sub-block of shape `rows x cols` starting at `(row, col)`.
    pub fn block(&self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self { inner: self.inner.view((row, col), (rows, cols)).into_owned() }
    }
}

/// Assembles a `d x d` grid of `n x n` blocks into one `dn x dn` matrix; block
/// `(i, j)` of the result is `grid[i][j]`.
/// Thin singular value decomposition `m = u diag(sigma) v_t`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<C64>,
    pub sigma: Vec<f64>,
    pub v_t: DMatrix<C64>,
}

impl Svd {
    fn reconstruction_error(&self, m: &DMatrix<C64>) -> f64 {
        let mut rec = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            rec.column_mut(j).scale_mut(*s);
        }
        (rec * &self.v_t - m).norm()
    }

    fn adjoint(self) -> Self {
        Svd { u: self.v_t.adjoint(), sigma: self.sigma, v_t: self.u.adjoint() }
    }

    /// Moore-Penrose pseudo-inverse, dropping singular values at or below `eps`.
    pub fn pseudo_inverse(&self, eps: f64) -> DMatrix<C64> {
        let mut vs = self.v_t.adjoint();
        for (j, s) in self.sigma.iter().enumerate() {
            let w = if *s > eps { 1.0 / s } else { 0.0 };
            vs.column_mut(j).scale_mut(w);
        }
        vs * self.u.adjoint()
    }
}

fn nalgebra_svd(m: &DMatrix<C64>) -> Option<Svd> {
    let svd = m.clone().svd(true, true);
    Some(Svd { u: svd.u?, sigma: svd.singular_values.iter().map(|s| s.abs()).collect(), v_t: svd.v_t? })
}

/// Eigen-decomposition route for a tall or square matrix: `V` and `sigma`
/// from `m^* m`, `U = m V / sigma`, completed to orthonormal columns.
fn gram_svd(m: &DMatrix<C64>) -> Svd {
    let (rows, cols) = m.shape();
    let eig = (m.adjoint() * m).symmetric_eigen();
    let mv_all = m * &eig.eigenvectors;
    let norms: Vec<f64> = (0..cols).map(|j| mv_all.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let v = DMatrix::from_fn(cols, cols, |i, j| eig.eigenvectors[(i, order[j])]);
    let sigma: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let mv = m * &v;
    let mut u = DMatrix::<C64>::zeros(rows, cols);
    let mut filled = 0;
    let mut next_e = 0;
    for j in 0..cols {
        let mut col = if sigma[j] > 1e-12 * smax && sigma[j] > 0.0 {
            mv.column(j) / C64::new(sigma[j], 0.0)
        } else {
            DVector::zeros(rows)
        };
        loop {
            for k in 0..filled {
                let proj = u.column(k).dotc(&col);
                col -= u.column(k) * proj;
            }
            let norm = col.norm();
            if norm > 1e-6 {
                col /= C64::new(norm, 0.0);
                break;
            }
            col = DVector::zeros(rows);
            col[next_e % rows] = C64::new(1.0, 0.0);
            next_e += 1;
        }
        u.set_column(j, &col);
        filled += 1;
    }
    Svd { u, sigma, v_t: v.adjoint() }
}

/// Thin SVD with a reconstruction check. The complex LAPACK-free SVD in
/// nalgebra occasionally returns an inconsistent factorization; on failure
/// the adjoint is tried, then the Gram eigen-decomposition.
pub fn checked_svd(m: &DMatrix<C64>) -> Svd {
    let tol = 1e-11 * m.norm().max(f64::MIN_POSITIVE) * (m.nrows().max(m.ncols()) as f64);
    if let Some(svd) = nalgebra_svd(m) {
        if svd.reconstruction_error(m) <= tol {
            return svd;
        }
    }
    if let Some(svd) = nalgebra_svd(&m.adjoint()).map(Svd::adjoint) {
        if svd.reconstruction_error(m) <= tol {
            return svd;
        }
    }
    if m.nrows() >= m.ncols() {
        gram_svd(m)
    } else {
        gram_svd(&m.adjoint()).adjoint()
    }
}

pub fn assemble_block(grid: &[Vec<ComplexMatrix>]) -> Result<ComplexMatrix> {
    let d = grid.len();
    if d == 0 {
        return Err(Error::dim("block grid is empty"));
    }
    let (n, m) = (grid[0][0].rows(), grid[0][0].cols());
    for row in grid {
        if row.len() != d {
            return Err(Error::dim(format!("ragged grid: expected {d} blocks per row, got {}", row.len())));
        }
        for b in row {
            if b.rows() != n || b.cols() != m {
                return Err(Error::dim(format!(
                    "grid blocks must share shape {n}x{m}, found {}x{}",
                    b.rows(),
                    b.cols()
                )));
            }
        }
    }
    let mut out = DMatrix::zeros(d * n, d * m);
    for (i, row) in grid.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            out.view_mut((i * n, j * m), (n, m)).copy_from(&b.inner);
        }
    }
    Ok(ComplexMatrix { inner: out })
}

/// Block-diagonal `I_d ⊗ x`.
pub fn block_diagonal(x: &ComplexMatrix, copies: usize) -> ComplexMatrix {
    let n = x.rows();
    let mut out = DMatrix::zeros(copies * n, copies * x.cols());
    for k in 0..copies {
        out.view_mut((k * n, k * x.cols()), (n, x.cols())).copy_from(&x.inner);
    }
    ComplexMatrix { inner: out }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl $tr<&ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix { inner: &self.inner $op &rhs.inner }
            }
        }
        impl $tr<ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix { inner: self.inner $op rhs.inner }
            }
        }
        impl $tr<&ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix { inner: self.inner $op &rhs.inner }
            }
        }
        impl $tr<ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: ComplexMatrix) -> ComplexMatrix {
                ComplexMatrix { inner: &self.inner $op rhs.inner }
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix { inner: -&self.inner }
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            rows: self.rows(),
            cols: self.cols(),
            data: self.entries().into_iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let entries = raw.data.into_iter().map(|[re, im]| c64(re, im)).collect();
        ComplexMatrix::new(raw.rows, raw.cols, entries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: f64 = 1.618_033_988_749_895;

    fn unitary_defect(m: &DMatrix<C64>) -> f64 {
        (m.adjoint() * m - DMatrix::<C64>::identity(m.ncols(), m.ncols())).norm()
    }

    #[test]
    fn checked_svd_reconstructs() {
        let mut r = crate::random::rng(5);
        for (rows, cols) in [(3, 3), (4, 2), (2, 5), (6, 6)] {
            let m = crate::random::gaussian_matrix(&mut r, rows, cols).into_dmatrix();
            let svd = checked_svd(&m);
            assert!(svd.reconstruction_error(&m) < 1e-12);
            assert!(unitary_defect(&svd.u) < 1e-12);
            assert!(unitary_defect(&svd.v_t.adjoint()) < 1e-12);
        }
    }

    #[test]
    fn gram_route_handles_rank_deficiency() {
        let mut r = crate::random::rng(6);
        let a = crate::random::gaussian_matrix(&mut r, 5, 2).into_dmatrix();
        let b = crate::random::gaussian_matrix(&mut r, 2, 4).into_dmatrix();
        let m = a * b;
        let svd = gram_svd(&m);
        assert!(svd.reconstruction_error(&m) < 1e-10);
        assert!(unitary_defect(&svd.u) < 1e-10);
        let plain: Vec<f64> = ComplexMatrix::from_dmatrix(m).singular_values();
        let top = plain.iter().copied().fold(0.0, f64::max);
        assert!((svd.sigma[0] - top).abs() < 1e-10);
        assert!(svd.sigma[2] < 1e-7 && svd.sigma[3] < 1e-7);
    }

    #[test]
    fn op_norm_examples() {
        assert!((ComplexMatrix::identity(2).op_norm() - 1.0).abs() < 1e-12);
        let row = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 0.0]]);
        assert!((row.op_norm() - 2f64.sqrt()).abs() < 1e-12);
        let jordan = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        // sigma^2 solves s^2 - 3 s + 1 = 0
        let oracle = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert!((oracle - GOLDEN).abs() < 1e-14);
        assert!((jordan.op_norm() - GOLDEN).abs() < 1e-12);
        assert_eq!(ComplexMatrix::zeros(3, 2).op_norm(), 0.0);
    }

    #[test]
    fn spectral_radius_examples() {
        let nil = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(nil.spectral_radius().unwrap(), 0.0);
        let d = ComplexMatrix::from_diagonal(&[cr(0.3), c64(0.0, -0.7)]);
        assert!((d.spectral_radius().unwrap() - 0.7).abs() < 1e-15);
        let j = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert_eq!(j.spectral_radius().unwrap(), 1.0);
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(rect.spectral_radius(), Err(Error::Dimension(_))));
    }

    #[test]
    fn schur_path_matches_rotation_eigenvalues() {
        // real rotation by 90 degrees has eigenvalues +-i
        let r = ComplexMatrix::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let mut ev = r.eigenvalues().unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - c64(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - c64(0.0, 1.0)).norm() < 1e-12);
        let m = ComplexMatrix::from_rows(&[
            vec![c64(1.0, 1.0), c64(2.0, 0.0), cr(0.5)],
            vec![c64(0.0, 1.0), cr(-1.0), c64(0.3, 0.2)],
            vec![cr(1.0), cr(1.0), c64(0.0, 2.0)],
        ]);
        let ev = m.eigenvalues().unwrap();
        let tr: C64 = ev.iter().sum();
        assert!((tr - m.trace()).norm() < 1e-10);
        for l in ev {
            let det = m.shift(-l).singular_values().into_iter().fold(f64::INFINITY, f64::min);
            assert!(det < 1e-9, "eigenvalue {l} not a root (sigma_min {det})");
        }
    }

    #[test]
    fn assemble_block_examples() {
        let m = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(assemble_block(&[vec![m.clone()]]).unwrap(), m);
        let i = ComplexMatrix::identity(2);
        let big = assemble_block(&[vec![i.clone(), i.clone()], vec![i.clone(), i.clone()]]).unwrap();
        assert!((big.op_norm() - 2.0).abs() < 1e-12);
        let a = ComplexMatrix::from_real_rows(&[&[3.0, 0.0], &[0.0, 0.0]]);
        let z = ComplexMatrix::zeros(2, 2);
        let ds = assemble_block(&[vec![a.clone(), z.clone()], vec![z.clone(), m.clone()]]).unwrap();
        assert!((ds.op_norm() - a.op_norm().max(m.op_norm())).abs() < 1e-12);
        assert_eq!(ds.get(2, 3), m.get(0, 1));
        let ragged = assemble_block(&[vec![i.clone(), i.clone()], vec![i.clone()]]);
        assert!(matches!(ragged, Err(Error::Dimension(_))));
        let mixed = assemble_block(&[vec![i.clone()], vec![ComplexMatrix::identity(3)]]);
        assert!(mixed.is_err());
    }

    #[test]
    fn condition_examples() {
        let theta = 0.37_f64;
        let u = ComplexMatrix::from_rows(&[
            vec![cr(theta.cos()), c64(0.0, theta.sin())],
            vec![c64(0.0, theta.sin()), cr(theta.cos())],
        ]);
        assert!((u.condition().unwrap() - 1.0).abs() < 1e-12);
        let d = ComplexMatrix::from_diagonal(&[cr(1.0), cr(2.0)]);
        assert!((d.condition().unwrap() - 2.0).abs() < 1e-12);
        let s = ComplexMatrix::from_diagonal(&[cr(1.0), cr(1e-13)]);
        match s.condition() {
            Err(Error::Singular { sigma_min, .. }) => assert!((sigma_min - 1e-13).abs() < 1e-20),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = ComplexMatrix::from_rows(&[vec![c64(1.0, -2.0), cr(0.5)]]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"rows":1,"cols":2,"data":[[1.0,-2.0],[0.5,0.0]]}"#);
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"rows":2,"cols":2,"data":[[1.0,0.0]]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(bad).is_err());
    }
}
