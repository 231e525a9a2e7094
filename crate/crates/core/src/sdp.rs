//! Similarity-to-contraction as a semidefinite program.
//!
//! A unital map `f` on a unital subspace of `M_m` becomes completely
//! contractive after conjugation by `X = P^{1/2}` exactly when there is a
//! completely positive `G: M_m -> M_n` with `G(b) = P f(b)` on the subspace.
//! With `G` encoded by its Choi matrix this is linear in `(P, G)`, and
//! `kappa(X)^2` is the spread of `P` once `I <= P <= t I`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::C64;

/// Linear expression `sum coeff * x[var]` with complex coefficients.
type Expr = Vec<(usize, C64)>;

/// Hermitian `k x k` matrix variable stored as real parameters starting at
/// `offset`: diagonal, then real and imaginary parts of the strict upper
/// triangle.
#[derive(Clone, Copy)]
struct Herm {
    offset: usize,
    k: usize,
}

impl Herm {
    fn len(k: usize) -> usize {
        k * k
    }

    fn upper_index(&self, i: usize, j: usize) -> usize {
        // position of (i, j), i < j, in row-major strict upper order
        i * self.k - i * (i + 1) / 2 + (j - i - 1)
    }

    fn entry(&self, i: usize, j: usize) -> Expr {
        let strict = self.k * (self.k - 1) / 2;
        if i == j {
            return vec![(self.offset + i, C64::new(1.0, 0.0))];
        }
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let u = self.upper_index(a, b);
        vec![
            (self.offset + self.k + u, C64::new(1.0, 0.0)),
            (self.offset + self.k + strict + u, C64::new(0.0, sign)),
        ]
    }

    fn value(&self, x: &[f64]) -> DMatrix<C64> {
        DMatrix::from_fn(self.k, self.k, |i, j| {
            self.entry(i, j).iter().map(|(v, c)| c * x[*v]).sum()
        })
    }
}

/// Rows of `A x + s = b` for one cone, accumulated as triplets.
#[derive(Default)]
struct Builder {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Builder {
    /// Appends the row `s = constant - expr` (so `expr + s = constant`).
    fn push_row(&mut self, expr: &[(usize, f64)], constant: f64) {
        let r = self.b.len();
        for &(v, c) in expr {
            if c != 0.0 {
                self.rows.push(r);
                self.cols.push(v);
                self.vals.push(c);
            }
        }
        self.b.push(constant);
    }

    /// `sum expr_ij` equal to zero, real and imaginary parts separately.
    fn zero_complex(&mut self, entries: &[(Expr, C64)]) {
        let mut count = 0;
        for (expr, constant) in entries {
            let re: Vec<(usize, f64)> = expr.iter().map(|(v, c)| (*v, c.re)).collect();
            let im: Vec<(usize, f64)> = expr.iter().map(|(v, c)| (*v, c.im)).collect();
            self.push_row(&re, -constant.re);
            self.push_row(&im, -constant.im);
            count += 2;
        }
        self.cones.push(SupportedConeT::ZeroConeT(count));
    }

    /// Hermitian affine matrix `M = L(x) + M0` constrained PSD through the
    /// real embedding `[[Re M, -Im M], [Im M, Re M]]`.
    fn psd(&mut self, k: usize, entry: impl Fn(usize, usize) -> (Expr, C64)) {
        let dim = 2 * k;
        let s2 = std::f64::consts::SQRT_2;
        for c in 0..dim {
            for r in 0..=c {
                let (bi, i) = (r / k, r % k);
                let (bj, j) = (c / k, c % k);
                let (expr, m0) = entry(i, j);
                let pick = |z: C64| match (bi, bj) {
                    (0, 0) | (1, 1) => z.re,
                    (0, 1) => -z.im,
                    _ => z.im,
                };
                let scale = if r == c { 1.0 } else { s2 };
                // s = M(x) = L x + M0 means  -L x + s = M0
                let lin: Vec<(usize, f64)> = expr.iter().map(|(v, z)| (*v, -scale * pick(*z))).collect();
                self.push_row(&lin, scale * pick(m0));
            }
        }
        self.cones.push(SupportedConeT::PSDTriangleConeT(dim));
    }
}

/// Solution of the similarity program.
#[derive(Clone, Debug)]
pub struct SdpSolution {
    /// `P = X^* X`, normalized so that its smallest eigenvalue is about 1.
    pub p: DMatrix<C64>,
    /// Optimal spread `t`; `sqrt(t)` is the smallest achievable `kappa(X)`.
    pub spread: f64,
    pub iterations: u32,
}

/// Minimizes `t` subject to `I <= P <= t I` and the existence of a
/// completely positive extension of `b -> P f(b)`. `domain_basis` lives in
/// `M_m`, `images` in `M_n`.
pub fn similarity_program(domain_basis: &[DMatrix<C64>], images: &[DMatrix<C64>]) -> Result<SdpSolution> {
    let m = domain_basis.first().map(|b| b.nrows()).ok_or_else(|| Error::invalid("empty basis"))?;
    if images.len() != domain_basis.len() {
        return Err(Error::dim("one image per basis element"));
    }
    let (domain_basis, images) = &orthonormalize(domain_basis, images)?;
    let n = images[0].nrows();
    let p = Herm { offset: 0, k: n };
    let choi = Herm { offset: Herm::len(n), k: m * n };
    let t_var = Herm::len(n) + Herm::len(m * n);
    let nvars = t_var + 1;
    let one = C64::new(1.0, 0.0);

    let mut bld = Builder::default();
    // G(b_k) - P f(b_k) = 0, with G(E_ij) the (i, j) block of the Choi matrix
    let mut eqs = Vec::new();
    for (b, f) in domain_basis.iter().zip(images) {
        for r in 0..n {
            for s in 0..n {
                let mut expr: Expr = Vec::new();
                for i in 0..m {
                    for j in 0..m {
                        let w = b[(i, j)];
                        if w != C64::new(0.0, 0.0) {
                            expr.extend(choi.entry(i * n + r, j * n + s).into_iter().map(|(v, c)| (v, c * w)));
                        }
                    }
                }
                for l in 0..n {
                    let w = f[(l, s)];
                    if w != C64::new(0.0, 0.0) {
                        expr.extend(p.entry(r, l).into_iter().map(|(v, c)| (v, -c * w)));
                    }
                }
                eqs.push((expr, C64::new(0.0, 0.0)));
            }
        }
    }
    bld.zero_complex(&eqs);
    bld.psd(m * n, |i, j| (choi.entry(i, j), C64::new(0.0, 0.0)));
    bld.psd(n, |i, j| (p.entry(i, j), if i == j { -one } else { C64::new(0.0, 0.0) }));
    bld.psd(n, |i, j| {
        let mut e: Expr = p.entry(i, j).into_iter().map(|(v, c)| (v, -c)).collect();
        if i == j {
            e.push((t_var, one));
        }
        (e, C64::new(0.0, 0.0))
    });

    let (x, iterations) = solve_counting(&bld, nvars, t_var, n)?;
    let x = &x;
    Ok(SdpSolution { p: p.value(x), spread: x[t_var], iterations })
}

/// Frobenius-orthonormal basis of the span of `basis`, with the images
/// transformed by the same (triangular) change of basis.
fn orthonormalize(basis: &[DMatrix<C64>], images: &[DMatrix<C64>]) -> Result<(Vec<DMatrix<C64>>, Vec<DMatrix<C64>>)> {
    let mut q: Vec<DMatrix<C64>> = Vec::with_capacity(basis.len());
    let mut g: Vec<DMatrix<C64>> = Vec::with_capacity(basis.len());
    for (b, f) in basis.iter().zip(images) {
        let (mut v, mut w) = (b.clone(), f.clone());
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for (qk, gk) in q.iter().zip(&g) {
                let c = qk.dotc(&v);
                v -= qk * c;
                w -= gk * c;
            }
        }
        let norm = v.norm();
        if !(norm > 1e-12 * b.norm().max(f64::MIN_POSITIVE)) {
            return Err(Error::invalid("domain basis is linearly dependent"));
        }
        q.push(v.unscale(norm));
        g.push(w.unscale(norm));
    }
    Ok((q, g))
}

/// Positive weights `w` minimizing `kappa(diag(sqrt(w)) L)`, through
/// `I <= L^* diag(w) L <= t I`. Returns `(w, t)`.
pub fn diagonal_scaling_program(l: &DMatrix<C64>) -> Result<(Vec<f64>, f64)> {
    let n = l.nrows();
    if n == 0 || l.ncols() != n {
        return Err(Error::dim("diagonal scaling needs a nonempty square matrix"));
    }
    let t_var = n;
    let gram = |i: usize, j: usize| -> Expr { (0..n).map(|p| (p, l[(p, i)].conj() * l[(p, j)])).collect() };
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let mut bld = Builder::default();
    bld.psd(n, |i, j| (gram(i, j), if i == j { -one } else { zero }));
    bld.psd(n, |i, j| {
        let mut e: Expr = gram(i, j).into_iter().map(|(v, c)| (v, -c)).collect();
        if i == j {
            e.push((t_var, one));
        }
        (e, zero)
    });
    let x = solve(&bld, n + 1, t_var, n)?;
    Ok((x[..n].to_vec(), x[t_var]))
}

fn solve(bld: &Builder, nvars: usize, objective: usize, size_hint: usize) -> Result<Vec<f64>> {
    solve_counting(bld, nvars, objective, size_hint).map(|r| r.0)
}

/// Minimizes `x[objective]` and reports the interior-point iteration count.
fn solve_counting(bld: &Builder, nvars: usize, objective: usize, size_hint: usize) -> Result<(Vec<f64>, u32)> {
    let a = CscMatrix::new_from_triplets(bld.b.len(), nvars, bld.rows.clone(), bld.cols.clone(), bld.vals.clone());
    let q_mat = CscMatrix::zeros((nvars, nvars));
    let mut q = vec![0.0; nvars];
    q[objective] = 1.0;
    let mut iterations = 0;
    // tight first; on a breakdown loosen, drop equilibration, regularize harder
    let attempts = [
        (1e-12_f64, 1e-12, true, 1e-8),
        (1e-9, 1e-9, true, 1e-8),
        (1e-9, 1e-9, false, 1e-8),
        (1e-9, 1e-9, true, 1e-6),
        (1e-8, 1e-8, false, 1e-6),
    ];
    for (gap, feas, equilibrate, reg) in attempts {
        let settings = DefaultSettingsBuilder::default()
            .equilibrate_enable(equilibrate)
            .static_regularization_constant(reg)
            .verbose(false)
            .max_threads(1)
            .max_iter(400)
            .tol_gap_abs(gap)
            .tol_gap_rel(gap)
            .tol_feas(feas)
            .tol_ktratio(gap.max(1e-10))
            .build()
            .map_err(|e| Error::invalid(format!("solver settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&q_mat, &q, &a, &bld.b, &bld.cones, settings)
            .map_err(|e| Error::invalid(format!("solver setup: {e:?}")))?;
        solver.solve();
        iterations += solver.solution.iterations;
        let usable = matches!(
            solver.solution.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved | SolverStatus::InsufficientProgress | SolverStatus::MaxIterations
        );
        let x = solver.solution.x.clone();
        if usable && x.iter().all(|v| v.is_finite()) {
            return Ok((x, iterations));
        }
    }
    Err(Error::OptimizerFailure {
        worst_ratio: f64::INFINITY,
        iterations: iterations as usize,
        best: Box::new(crate::matrix::ComplexMatrix::identity(size_hint)),
    })
}
