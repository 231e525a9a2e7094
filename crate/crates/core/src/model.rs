//! Finite Blaschke products and the compressed shift on `K_theta`.
//!
//! `K_theta` is spanned by reproducing kernels `k_l(z) = 1/(1 - conj(l) z)`
//! at the roots, plus their `conj(l)`-derivatives for repeated roots. Inner
//! products of these are closed-form, and the backward shift acts on them by
//! a Jordan-type matrix, so `S` comes out of a Cholesky factor of the Gram
//! matrix without any quadrature. Orthonormalizing in root order keeps `S`
//! lower triangular with the roots on the diagonal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{assemble_block, cr, ComplexMatrix, C64};
use crate::random;
use crate::sdp;

/// Roots must satisfy `|l| <= 1 - ROOT_MARGIN`.
pub const ROOT_MARGIN: f64 = 1e-8;
/// Largest Gram (or eigenvector) condition number accepted.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;
/// Distinct spectral points closer than this are merged.
pub const SPECTRUM_MERGE_TOL: f64 = 1e-8;

/// Polynomial coefficients, constant term first.
pub type Polynomial = Vec<C64>;
/// `d x d` grid of polynomials.
pub type PolyGrid = Vec<Vec<Polynomial>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    #[serde(default = "one")]
    pub mult: usize,
}

fn one() -> usize {
    1
}

fn unit_constant() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlaschkeSpec {
    roots: Vec<Root>,
    #[serde(default = "unit_constant")]
    constant: [f64; 2],
}

/// `c * prod_k b_{l_k}^{m_k}` with `b_l(z) = (z - l) / (1 - conj(l) z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlaschkeSpec", into = "BlaschkeSpec")]
pub struct BlaschkeProduct {
    roots: Vec<(C64, usize)>,
    constant: C64,
}

impl TryFrom<BlaschkeSpec> for BlaschkeProduct {
    type Error = Error;

    fn try_from(s: BlaschkeSpec) -> Result<Self> {
        let roots = s.roots.iter().map(|r| (C64::new(r.re, r.im), r.mult)).collect();
        BlaschkeProduct::new(roots, C64::new(s.constant[0], s.constant[1]))
    }
}

impl From<BlaschkeProduct> for BlaschkeSpec {
    fn from(b: BlaschkeProduct) -> Self {
        BlaschkeSpec {
            roots: b.roots.iter().map(|(l, m)| Root { re: l.re, im: l.im, mult: *m }).collect(),
            constant: [b.constant.re, b.constant.im],
        }
    }
}

/// The single factor `b_l(z)`.
pub fn blaschke_factor(l: C64, z: C64) -> C64 {
    (z - l) / (cr(1.0) - l.conj() * z)
}

impl BlaschkeProduct {
    pub fn new(roots: Vec<(C64, usize)>, constant: C64) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::invalid("a Blaschke product needs at least one root"));
        }
        if !constant.re.is_finite() || !constant.im.is_finite() || (constant.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("the constant must be unimodular"));
        }
        for (i, (l, m)) in roots.iter().enumerate() {
            if *m == 0 {
                return Err(Error::invalid("root multiplicities must be positive"));
            }
            if !l.re.is_finite() || !l.im.is_finite() || l.norm() > 1.0 - ROOT_MARGIN {
                return Err(Error::invalid(format!("root {l} is not inside the disc of radius 1 - {ROOT_MARGIN:e}")));
            }
            if roots[..i].iter().any(|(k, _)| k == l) {
                return Err(Error::invalid(format!("root {l} listed twice; give it a multiplicity instead")));
            }
        }
        Ok(BlaschkeProduct { roots, constant })
    }

    pub fn from_simple_roots(roots: &[C64]) -> Result<Self> {
        Self::new(roots.iter().map(|&l| (l, 1)).collect(), cr(1.0))
    }

    /// `z^n`.
    pub fn monomial(n: usize) -> Result<Self> {
        Self::new(vec![(cr(0.0), n)], cr(1.0))
    }

    pub fn roots(&self) -> &[(C64, usize)] {
        &self.roots
    }

    pub fn constant(&self) -> C64 {
        self.constant
    }

    pub fn degree(&self) -> usize {
        self.roots.iter().map(|r| r.1).sum()
    }

    pub fn has_simple_roots(&self) -> bool {
        self.roots.iter().all(|r| r.1 == 1)
    }

    /// Roots repeated according to multiplicity, in basis order.
    pub fn flat_roots(&self) -> Vec<C64> {
        self.roots.iter().flat_map(|&(l, m)| std::iter::repeat_n(l, m)).collect()
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.roots.iter().fold(self.constant, |acc, &(l, m)| acc * blaschke_factor(l, z).powu(m as u32))
    }

    /// Monic `prod (z - l_k)^{m_k}`.
    pub fn numerator(&self) -> Polynomial {
        self.flat_roots().iter().fold(vec![cr(1.0)], |p, &l| poly_mul(&p, &[-l, cr(1.0)]))
    }

    /// Numerator and denominator of the product as a rational function.
    pub fn as_rational(&self) -> (Polynomial, Polynomial) {
        let num: Polynomial = self.numerator().into_iter().map(|c| c * self.constant).collect();
        let den = self.flat_roots().iter().fold(vec![cr(1.0)], |p, &l| poly_mul(&p, &[cr(1.0), -l.conj()]));
        (num, den)
    }

    fn require_simple(&self) -> Result<()> {
        match self.roots.iter().find(|r| r.1 > 1) {
            Some(&(_, m)) => Err(Error::RepeatedRoot { multiplicity: m }),
            None => Ok(()),
        }
    }
}

pub fn blaschke_eval(theta: &BlaschkeProduct, z: C64) -> C64 {
    theta.eval(z)
}

pub fn poly_eval(u: &[C64], z: C64) -> C64 {
    u.iter().rev().fold(cr(0.0), |acc, &c| acc * z + c)
}

pub fn poly_mul(a: &[C64], b: &[C64]) -> Polynomial {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![cr(0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `p(l + h)` as a polynomial in `h`.
fn taylor_shift(p: &[C64], l: C64) -> Polynomial {
    let mut q = p.to_vec();
    let n = q.len();
    for k in 0..n {
        for j in (k..n.saturating_sub(1)).rev() {
            let next = q[j + 1];
            q[j] += l * next;
        }
    }
    q
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `<d^i k_mu, d^j k_lambda>` for the `conj(.)`-derivatives of the Szego
/// kernel, i.e. `d_w^i d_v^j 1/(1 - w v)` at `w = conj(mu)`, `v = lambda`.
pub fn kernel_inner(mu: C64, i: usize, lambda: C64, j: usize) -> C64 {
    let w = mu.conj();
    let v = lambda;
    let q = cr(1.0) - w * v;
    (0..=i.min(j))
        .map(|k| {
            let c = binomial(i, k) * factorial(j) * factorial(i + j - k) / factorial(j - k);
            w.powu((j - k) as u32) * v.powu((i - k) as u32) * c / q.powu((i + j - k + 1) as u32)
        })
        .sum()
}

/// Compressed shift on `K_theta` in the orthonormal basis obtained from the
/// kernel basis by Cholesky orthonormalization.
#[derive(Clone, Debug, Serialize)]
pub struct ModelOperator {
    pub theta: BlaschkeProduct,
    pub s: ComplexMatrix,
    /// Gram matrix `G[p][q] = <e_q, e_p>` of the kernel basis.
    pub basis_gram: ComplexMatrix,
    pub gram_condition: f64,
    /// Lower Cholesky factor of `basis_gram`.
    #[serde(skip)]
    pub cholesky: ComplexMatrix,
}

impl ModelOperator {
    pub fn dim(&self) -> usize {
        self.s.rows()
    }

    /// `u(S)` for a rational `num / den` whose denominator has no zero on the
    /// spectrum.
    pub fn rational(&self, num: &[C64], den: &[C64]) -> Result<ComplexMatrix> {
        let d = horner(den, &self.s);
        let d_inv = d.inverse()?;
        Ok(&horner(num, &self.s) * &d_inv)
    }

    /// `theta(S)`, which should vanish.
    pub fn theta_at_s(&self) -> Result<ComplexMatrix> {
        let (num, den) = self.theta.as_rational();
        self.rational(&num, &den)
    }
}

fn hermitian_condition(g: &DMatrix<C64>) -> f64 {
    let ev = SymmetricEigen::new(g.clone()).eigenvalues;
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

pub fn model_operator(theta: &BlaschkeProduct) -> Result<ModelOperator> {
    // basis element (root, derivative order)
    let basis: Vec<(C64, usize)> = theta.roots.iter().flat_map(|&(l, m)| (0..m).map(move |j| (l, j))).collect();
    let n = basis.len();
    let g = DMatrix::from_fn(n, n, |p, q| kernel_inner(basis[q].0, basis[q].1, basis[p].0, basis[p].1));
    let g = (&g + g.adjoint()) * cr(0.5);
    let condition = hermitian_condition(&g);
    if !(condition <= GRAM_CONDITION_LIMIT) {
        return Err(Error::IllConditioned { condition, limit: GRAM_CONDITION_LIMIT });
    }
    let l = g
        .clone()
        .cholesky()
        .ok_or(Error::IllConditioned { condition: f64::INFINITY, limit: GRAM_CONDITION_LIMIT })?
        .l();
    // backward shift: e_(l,j) -> conj(l) e_(l,j) + j e_(l,j-1)
    let mut a = DMatrix::from_element(n, n, cr(0.0));
    for (p, &(lam, j)) in basis.iter().enumerate() {
        a[(p, p)] = lam.conj();
        if j > 0 {
            a[(p - 1, p)] = cr(j as f64);
        }
    }
    let m = a.adjoint() * &l;
    let s = l
        .solve_lower_triangular(&m)
        .ok_or(Error::IllConditioned { condition: f64::INFINITY, limit: GRAM_CONDITION_LIMIT })?;
    Ok(ModelOperator {
        theta: theta.clone(),
        s: ComplexMatrix::from_dmatrix(s),
        basis_gram: ComplexMatrix::from_dmatrix(g),
        gram_condition: condition,
        cholesky: ComplexMatrix::from_dmatrix(l),
    })
}

fn horner(u: &[C64], s: &ComplexMatrix) -> ComplexMatrix {
    let n = s.rows();
    let id = ComplexMatrix::identity(n);
    u.iter().rev().fold(ComplexMatrix::zeros(n, n), |acc, &c| &(&acc * s) + &id.scale(c))
}

pub fn functional_calculus(u: &[C64], m: &ModelOperator) -> ComplexMatrix {
    horner(u, &m.s)
}

pub fn quotient_norm_level(grid: &PolyGrid, m: &ModelOperator) -> Result<f64> {
    let blocks: Vec<Vec<ComplexMatrix>> =
        grid.iter().map(|row| row.iter().map(|u| functional_calculus(u, m)).collect()).collect();
    Ok(assemble_block(&blocks)?.op_norm())
}

/// `max_n ||(u_ij(l_n))||`, the norm of the grid evaluated on the diagonal
/// operator of the (simple) roots.
pub fn diagonal_norm_level(grid: &PolyGrid, roots: &[C64]) -> Result<f64> {
    let d = grid.len();
    if grid.iter().any(|r| r.len() != d) {
        return Err(Error::dim("polynomial grid must be square"));
    }
    Ok(roots
        .iter()
        .map(|&l| ComplexMatrix::from_rows(&grid.iter().map(|r| r.iter().map(|u| poly_eval(u, l)).collect()).collect::<Vec<_>>()).op_norm())
        .fold(0.0, f64::max))
}

fn merge_points(points: Vec<C64>) -> Vec<C64> {
    let mut out: Vec<C64> = Vec::new();
    for z in points {
        if !out.iter().any(|w| (w - z).norm() <= SPECTRUM_MERGE_TOL) {
            out.push(z);
        }
    }
    out
}

/// Spectrum of the class `u + theta H^inf`, read off as the eigenvalues of
/// `u(S)`.
pub fn spectrum_quotient(u: &[C64], theta: &BlaschkeProduct) -> Result<Vec<C64>> {
    let m = model_operator(theta)?;
    Ok(merge_points(functional_calculus(u, &m).eigenvalues()?))
}

pub fn is_quasinilpotent(u: &[C64], theta: &BlaschkeProduct, tol: f64) -> Result<bool> {
    Ok(spectrum_quotient(u, theta)?.iter().all(|z| z.norm() <= tol))
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasinilpotentClass {
    pub u: Polynomial,
    pub norm: f64,
    pub spectral_radius: f64,
}

/// Quasi-nilpotent classes with `||u(S)|| > tol` among the monomials
/// `1, .., z^{N-1}` and the multiples `z^j prod_k (z - l_k)` of the product
/// over distinct roots.
pub fn quasinilpotent_sweep(theta: &BlaschkeProduct, tol: f64) -> Result<Vec<QuasinilpotentClass>> {
    let m = model_operator(theta)?;
    let n = theta.degree();
    let radical = theta.roots.iter().fold(vec![cr(1.0)], |p, &(l, _)| poly_mul(&p, &[-l, cr(1.0)]));
    let mut candidates: Vec<Polynomial> = (0..n)
        .map(|j| {
            let mut u = vec![cr(0.0); j + 1];
            u[j] = cr(1.0);
            u
        })
        .collect();
    for j in 0..n.saturating_sub(radical.len() - 1) {
        let mut shift = vec![cr(0.0); j + 1];
        shift[j] = cr(1.0);
        candidates.push(poly_mul(&radical, &shift));
    }
    let mut out = Vec::new();
    for u in candidates {
        let us = functional_calculus(&u, &m);
        let spectral_radius = us.spectral_radius()?;
        let norm = us.op_norm();
        if spectral_radius <= tol && norm > tol {
            out.push(QuasinilpotentClass { u, norm, spectral_radius });
        }
    }
    Ok(out)
}

/// Polynomial of degree `< N` agreeing with `num / den` modulo the numerator
/// of `theta` (Hermite interpolation of the Taylor data at each root).
pub fn reduce_rational(num: &[C64], den: &[C64], theta: &BlaschkeProduct) -> Result<Polynomial> {
    let n = theta.degree();
    let mut rows = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for &(l, mult) in &theta.roots {
        let a = taylor_shift(num, l);
        let b = taylor_shift(den, l);
        let b0 = b.first().copied().unwrap_or(cr(0.0));
        if b0.norm() <= 1e-12 {
            return Err(Error::invalid(format!("denominator vanishes at the root {l}")));
        }
        // power series quotient a / b up to order mult - 1
        let mut t = vec![cr(0.0); mult];
        for j in 0..mult {
            let mut acc = a.get(j).copied().unwrap_or(cr(0.0));
            for k in 1..=j {
                acc -= b.get(k).copied().unwrap_or(cr(0.0)) * t[j - k];
            }
            t[j] = acc / b0;
        }
        for (j, tj) in t.into_iter().enumerate() {
            // j-th Taylor coefficient at l of sum c_k z^k
            rows.push((0..n).map(|k| if k < j { cr(0.0) } else { l.powu((k - j) as u32) * binomial(k, j) }).collect::<Vec<_>>());
            rhs.push(tj);
        }
    }
    let a = DMatrix::from_fn(n, n, |i, k| rows[i][k]);
    let x = a
        .lu()
        .solve(&DVector::from_vec(rhs))
        .ok_or_else(|| Error::invalid("interpolation system is singular"))?;
    Ok(x.iter().copied().collect())
}

/// Polynomial representative of the Blaschke product with roots `factors`
/// modulo `theta`.
pub fn blaschke_representative(factors: &[C64], theta: &BlaschkeProduct) -> Result<Polynomial> {
    if factors.is_empty() {
        return Ok(vec![cr(1.0)]);
    }
    let (num, den) = BlaschkeProduct::from_simple_roots(factors)?.as_rational();
    reduce_rational(&num, &den, theta)
}

/// `min_n prod_{k != n} |b_{l_k}(l_n)|`.
pub fn carleson_delta(theta: &BlaschkeProduct) -> Result<f64> {
    theta.require_simple()?;
    let roots = theta.flat_roots();
    Ok((0..roots.len())
        .map(|n| reduced_product_at(&roots, n))
        .fold(1.0, f64::min))
}

fn reduced_product_at(roots: &[C64], n: usize) -> f64 {
    roots
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != n)
        .map(|(_, &l)| blaschke_factor(l, roots[n]).norm())
        .product()
}

#[derive(Clone, Debug, Serialize)]
pub struct VasyuninSimilarity {
    /// `V S V^{-1} = diag(l_n)`.
    pub v: ComplexMatrix,
    pub kappa: f64,
    pub delta_bound: f64,
    /// `kappa` before rescaling rows.
    pub unscaled_kappa: f64,
}

pub fn vasyunin_similarity(theta: &BlaschkeProduct) -> Result<VasyuninSimilarity> {
    theta.require_simple()?;
    let m = model_operator(theta)?;
    // rows of the Cholesky factor are left eigenvectors of S
    let l = m.cholesky.clone();
    let n = l.rows();
    let unscaled_kappa = l.condition()?;
    if unscaled_kappa > GRAM_CONDITION_LIMIT {
        return Err(Error::IllConditioned { condition: unscaled_kappa, limit: GRAM_CONDITION_LIMIT });
    }
    let scaled = |w: &[f64]| -> ComplexMatrix {
        let d: Vec<C64> = w.iter().map(|x| cr(x.max(0.0).sqrt())).collect();
        &ComplexMatrix::from_diagonal(&d) * &l
    };
    let row_norms: Vec<f64> = (0..n)
        .map(|i| 1.0 / (0..n).map(|j| l.get(i, j).norm_sqr()).sum::<f64>())
        .collect();
    let mut candidates = vec![l.clone(), scaled(&row_norms)];
    if n > 1 {
        if let Ok((w, _)) = sdp::diagonal_scaling_program(l.as_dmatrix()) {
            if w.iter().all(|x| *x > 0.0 && x.is_finite()) {
                candidates.push(scaled(&w));
            }
        }
    }
    let mut best: Option<(f64, ComplexMatrix)> = None;
    for c in candidates {
        let k = c.condition()?;
        if best.as_ref().is_none_or(|b| k < b.0) {
            best = Some((k, c));
        }
    }
    let (kappa, v) = best.expect("at least one candidate");
    // normalize to ||V|| = sqrt(kappa) = ||V^{-1}||
    let v = v.scale_real(1.0 / (v.op_norm() / kappa.sqrt()));
    Ok(VasyuninSimilarity { v, kappa, delta_bound: 1.0 / kappa, unscaled_kappa })
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichCheck {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
    pub holds: bool,
}

/// `delta ||U(S)|| <= ||U(D)|| <= ||U(S)||` within `tol`.
pub fn sandwich(grid: &PolyGrid, m: &ModelOperator, delta: f64, tol: f64) -> Result<SandwichCheck> {
    let upper = quotient_norm_level(grid, m)?;
    let middle = diagonal_norm_level(grid, &m.theta.flat_roots())?;
    let lower = delta * upper;
    Ok(SandwichCheck { lower, middle, upper, holds: lower <= middle + tol && middle <= upper + tol })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReducedProductCheck {
    pub n: usize,
    pub norm: f64,
    pub value_at_root: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalMapBounds {
    pub sup_values: f64,
    pub quotient: f64,
    /// `quotient / sup_values`, with `0 / 0` read as 1.
    pub ratio: f64,
    pub kappa: f64,
    pub delta_bound: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub reduced: Vec<ReducedProductCheck>,
    /// Random grids at levels 2 and 3 checked against the sandwich.
    pub level_samples: usize,
    /// Smallest `||U(D)|| / ||U(S)||` among the samples.
    pub level_min_ratio: f64,
    pub level_ok: bool,
}

pub fn eval_map_bounds(u: &[C64], theta: &BlaschkeProduct, budget: usize, seed: u64) -> Result<EvalMapBounds> {
    theta.require_simple()?;
    let m = model_operator(theta)?;
    let vas = vasyunin_similarity(theta)?;
    let roots = theta.flat_roots();
    let sup_values = roots.iter().map(|&l| poly_eval(u, l).norm()).fold(0.0, f64::max);
    let quotient = functional_calculus(u, &m).op_norm();
    let ratio = if sup_values > 1e-14 {
        quotient / sup_values
    } else if quotient <= 1e-9 {
        1.0
    } else {
        f64::INFINITY
    };
    let lower_ok = sup_values <= quotient + 1e-9;
    let upper_ok = quotient <= sup_values / vas.delta_bound + 1e-6;

    let mut reduced = Vec::with_capacity(roots.len());
    for n in 0..roots.len() {
        let others: Vec<C64> = roots.iter().enumerate().filter(|(k, _)| *k != n).map(|(_, &l)| l).collect();
        let rep = blaschke_representative(&others, theta)?;
        let norm = functional_calculus(&rep, &m).op_norm();
        let value_at_root = reduced_product_at(&roots, n);
        let ok = norm <= 1.0 + 1e-8 && value_at_root >= vas.delta_bound - 1e-6;
        reduced.push(ReducedProductCheck { n, norm, value_at_root, ok });
    }

    let mut rng = random::rng(seed);
    let mut level_min_ratio = f64::INFINITY;
    let mut level_ok = true;
    for k in 0..budget {
        let d = 2 + k % 2;
        let grid: PolyGrid = (0..d)
            .map(|_| (0..d).map(|_| (0..roots.len()).map(|_| random::complex_normal(&mut rng)).collect()).collect())
            .collect();
        let check = sandwich(&grid, &m, vas.delta_bound, 1e-6)?;
        level_ok &= check.holds;
        if check.upper > 0.0 {
            level_min_ratio = level_min_ratio.min(check.middle / check.upper);
        }
    }
    Ok(EvalMapBounds {
        sup_values,
        quotient,
        ratio,
        kappa: vas.kappa,
        delta_bound: vas.delta_bound,
        lower_ok,
        upper_ok,
        reduced,
        level_samples: budget,
        level_min_ratio,
        level_ok,
    })
}
