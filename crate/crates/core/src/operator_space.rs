//! Concrete operator subspaces of `M_n`, linear maps between them, matrix-level
//! norms, and a seeded search for completely bounded norms.
//!
//! A subspace is given by a basis of `n x n` matrices; membership is decided by
//! a least-squares solve against the vectorized basis. A [`CbLinearMap`] is
//! determined by the images of the domain basis. The cb norm of a map whose
//! codomain lives in `M_n` is attained at matrix level `n`, so the search works
//! at that level and only ever reports what it actually found: a lower bound
//! together with the block that witnesses it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{assemble_block, checked_svd, cr, ComplexMatrix, C64};
use crate::random;

/// Relative tolerance for linear independence of a basis.
pub const INDEPENDENCE_TOL: f64 = 1e-10;
/// Tolerance for membership of the identity and closure under products.
pub const SPAN_TOL: f64 = 1e-10;
/// Coordinate residual tolerance relative to `1 + ||m||`.
pub const COORDINATE_TOL: f64 = 1e-9;
/// Tolerance for the multiplicativity residual of a map.
pub const MULTIPLICATIVE_TOL: f64 = 1e-8;
/// Iteration cap for one restart of the cb search.
pub const ASCENT_ITERATION_CAP: usize = 500;

/// A `d x d` grid of matrices, i.e. an element of `M_d(V)`.
pub type Grid = Vec<Vec<ComplexMatrix>>;

fn vectorize(m: &ComplexMatrix) -> DVector<C64> {
    DVector::from_iterator(m.rows() * m.cols(), m.as_dmatrix().iter().copied())
}

/// A linear span of `n x n` matrices, optionally flagged as a unital algebra.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SubspaceJson", into = "SubspaceJson")]
pub struct OperatorSubspace {
    ambient_dim: usize,
    basis: Vec<ComplexMatrix>,
    unital_algebra: bool,
    pinv: DMatrix<C64>,
}

#[derive(Serialize, Deserialize)]
struct SubspaceJson {
    ambient_dim: usize,
    basis: Vec<ComplexMatrix>,
    #[serde(default)]
    unital_algebra: bool,
}

impl TryFrom<SubspaceJson> for OperatorSubspace {
    type Error = Error;
    fn try_from(raw: SubspaceJson) -> Result<Self> {
        let space = OperatorSubspace::new(raw.basis, raw.unital_algebra)?;
        if space.ambient_dim != raw.ambient_dim {
            return Err(Error::dim(format!(
                "ambient_dim {} does not match basis size {}",
                raw.ambient_dim, space.ambient_dim
            )));
        }
        Ok(space)
    }
}

impl From<OperatorSubspace> for SubspaceJson {
    fn from(s: OperatorSubspace) -> Self {
        SubspaceJson { ambient_dim: s.ambient_dim, basis: s.basis, unital_algebra: s.unital_algebra }
    }
}

impl OperatorSubspace {
    /// Validates the basis (square, common size, linearly independent) and,
    /// for algebras, that the identity lies in the span and the span is
    /// closed under products.
    pub fn new(basis: Vec<ComplexMatrix>, unital_algebra: bool) -> Result<Self> {
        let first = basis.first().ok_or_else(|| Error::invalid("basis must be non-empty"))?;
        let n = first.rows();
        if basis.iter().any(|b| b.rows() != n || b.cols() != n) {
            return Err(Error::dim(format!("all basis elements must be {n}x{n}")));
        }
        let k = basis.len();
        if k > n * n {
            return Err(Error::invalid(format!("{k} matrices cannot be independent in M_{n}")));
        }
        let mut vecs = DMatrix::<C64>::zeros(n * n, k);
        for (j, b) in basis.iter().enumerate() {
            vecs.set_column(j, &vectorize(b));
        }
        let svd = checked_svd(&vecs);
        let smax = svd.sigma.iter().copied().fold(0.0, f64::max);
        let smin = svd.sigma.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smin * smin > INDEPENDENCE_TOL * smax * smax) {
            return Err(Error::invalid(format!(
                "basis is not linearly independent (Gram eigenvalue ratio {:e})",
                (smin / smax).powi(2)
            )));
        }
        let pinv = svd.pseudo_inverse(0.0);
        let space = Self { ambient_dim: n, basis, unital_algebra, pinv };
        if unital_algebra {
            let id = ComplexMatrix::identity(n);
            let r = space.residual(&id);
            if r > SPAN_TOL {
                return Err(Error::invalid(format!("identity is not in the span (residual {r:e})")));
            }
            for a in &space.basis {
                for b in &space.basis {
                    let p = a * b;
                    let r = space.residual(&p);
                    if r > SPAN_TOL * (1.0 + p.op_norm()) {
                        return Err(Error::invalid(format!(
                            "span is not closed under products (residual {r:e})"
                        )));
                    }
                }
            }
        }
        Ok(space)
    }

    /// All of `M_n`, spanned by the matrix units in row-major order.
    pub fn full_matrix_algebra(n: usize) -> Self {
        let basis = (0..n).flat_map(|i| (0..n).map(move |j| ComplexMatrix::unit(n, i, j))).collect();
        Self::new(basis, true).expect("matrix units form a unital algebra")
    }

    /// Scalar multiples of the identity.
    pub fn scalars(n: usize) -> Self {
        Self::new(vec![ComplexMatrix::identity(n)], true).expect("scalars form a unital algebra")
    }

    /// Diagonal matrices in `M_n`.
    pub fn diagonal_algebra(n: usize) -> Self {
        Self::new((0..n).map(|i| ComplexMatrix::unit(n, i, i)).collect(), true)
            .expect("diagonal units form a unital algebra")
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    pub fn is_unital_algebra(&self) -> bool {
        self.unital_algebra
    }

    fn raw_coordinates(&self, m: &ComplexMatrix) -> DVector<C64> {
        &self.pinv * vectorize(m)
    }

    pub fn combine(&self, coeffs: &[C64]) -> ComplexMatrix {
        let n = self.ambient_dim;
        let mut out = DMatrix::<C64>::zeros(n, n);
        for (c, b) in coeffs.iter().zip(&self.basis) {
            out += b.as_dmatrix() * *c;
        }
        ComplexMatrix::from_dmatrix(out)
    }

    /// Operator-norm distance from `m` to its least-squares projection on the
    /// span.
    pub fn residual(&self, m: &ComplexMatrix) -> f64 {
        let c = self.raw_coordinates(m);
        let c: Vec<C64> = c.iter().copied().collect();
        (m - &self.combine(&c)).op_norm()
    }

    /// Coefficients of `m` in the basis, or a not-in-span error carrying the
    /// residual.
    pub fn coordinates(&self, m: &ComplexMatrix) -> Result<Vec<C64>> {
        if m.rows() != self.ambient_dim || m.cols() != self.ambient_dim {
            return Err(Error::dim(format!(
                "expected a {0}x{0} matrix, got {1}x{2}",
                self.ambient_dim,
                m.rows(),
                m.cols()
            )));
        }
        let c: Vec<C64> = self.raw_coordinates(m).iter().copied().collect();
        let residual = (m - &self.combine(&c)).op_norm();
        if residual > COORDINATE_TOL * (1.0 + m.op_norm()) {
            return Err(Error::NotInSpan { residual });
        }
        Ok(c)
    }

    pub fn contains(&self, m: &ComplexMatrix) -> bool {
        self.coordinates(m).is_ok()
    }

    /// `X V X^{-1}` as a new subspace.
    pub fn conjugated(&self, x: &ComplexMatrix, x_inv: &ComplexMatrix) -> Result<Self> {
        let basis = self.basis.iter().map(|b| x.conjugate_with(x_inv, b)).collect();
        Self::new(basis, self.unital_algebra)
    }

    /// `{ v* : v in V }`.
    pub fn adjoint_space(&self) -> Result<Self> {
        Self::new(self.basis.iter().map(ComplexMatrix::adjoint).collect(), self.unital_algebra)
    }
}

/// Norm of a `d x d` block over `space`: the operator norm of the assembled
/// matrix, after checking every entry lies in the span.
pub fn level_norm(space: &OperatorSubspace, block: &Grid) -> Result<f64> {
    for row in block {
        for entry in row {
            space.coordinates(entry)?;
        }
    }
    Ok(assemble_block(block)?.op_norm())
}

/// A linear map between two operator subspaces, given by the images of the
/// domain basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MapJson", into = "MapJson")]
pub struct CbLinearMap {
    domain: OperatorSubspace,
    codomain: OperatorSubspace,
    images: Vec<ComplexMatrix>,
    unital: bool,
    multiplicative: bool,
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    domain: OperatorSubspace,
    codomain: OperatorSubspace,
    images: Vec<ComplexMatrix>,
}

impl TryFrom<MapJson> for CbLinearMap {
    type Error = Error;
    fn try_from(raw: MapJson) -> Result<Self> {
        CbLinearMap::new(raw.domain, raw.codomain, raw.images)
    }
}

impl From<CbLinearMap> for MapJson {
    fn from(f: CbLinearMap) -> Self {
        MapJson { domain: f.domain, codomain: f.codomain, images: f.images }
    }
}

impl CbLinearMap {
    /// Validates the images against the codomain and records whether the map
    /// is unital and multiplicative.
    pub fn new(domain: OperatorSubspace, codomain: OperatorSubspace, images: Vec<ComplexMatrix>) -> Result<Self> {
        if images.len() != domain.dim() {
            return Err(Error::dim(format!(
                "expected {} images (one per domain basis element), got {}",
                domain.dim(),
                images.len()
            )));
        }
        for img in &images {
            let c = codomain.coordinates(img)?;
            debug_assert_eq!(c.len(), codomain.dim());
        }
        let mut map = Self { domain, codomain, images, unital: false, multiplicative: false };
        let n = map.domain.ambient_dim();
        let m = map.codomain.ambient_dim();
        map.unital = match map.apply(&ComplexMatrix::identity(n)) {
            Ok(img) => (&img - &ComplexMatrix::identity(m)).op_norm() <= SPAN_TOL,
            Err(_) => false,
        };
        map.multiplicative = map.domain.is_unital_algebra() && map.check_multiplicative() <= MULTIPLICATIVE_TOL;
        Ok(map)
    }

    fn check_multiplicative(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, a) in self.domain.basis().iter().enumerate() {
            for (j, b) in self.domain.basis().iter().enumerate() {
                let lhs = match self.apply(&(a * b)) {
                    Ok(v) => v,
                    Err(_) => return f64::INFINITY,
                };
                let rhs = &self.images[i] * &self.images[j];
                worst = worst.max((&lhs - &rhs).op_norm() / (1.0 + rhs.op_norm()));
            }
        }
        worst
    }

    /// The identity map on `space`.
    pub fn identity(space: &OperatorSubspace) -> Self {
        Self::new(space.clone(), space.clone(), space.basis().to_vec()).expect("identity map is valid")
    }

    /// `a -> t a t^{-1}` on `space`, with codomain `t space t^{-1}`.
    pub fn conjugation(space: &OperatorSubspace, t: &ComplexMatrix) -> Result<Self> {
        let t_inv = t.inverse()?;
        let codomain = space.conjugated(t, &t_inv)?;
        let images = codomain.basis().to_vec();
        Self::new(space.clone(), codomain, images)
    }

    pub fn domain(&self) -> &OperatorSubspace {
        &self.domain
    }

    pub fn codomain(&self) -> &OperatorSubspace {
        &self.codomain
    }

    pub fn images(&self) -> &[ComplexMatrix] {
        &self.images
    }

    pub fn is_unital(&self) -> bool {
        self.unital
    }

    pub fn is_multiplicative(&self) -> bool {
        self.multiplicative
    }

    pub fn apply(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        let c = self.domain.coordinates(m)?;
        Ok(self.apply_coords(&c))
    }

    fn apply_coords(&self, c: &[C64]) -> ComplexMatrix {
        let n = self.codomain.ambient_dim();
        let mut out = DMatrix::<C64>::zeros(n, n);
        for (ck, img) in c.iter().zip(&self.images) {
            out += img.as_dmatrix() * *ck;
        }
        ComplexMatrix::from_dmatrix(out)
    }

    /// Entrywise application `f ⊗ id_d`.
    pub fn apply_level(&self, block: &Grid) -> Result<Grid> {
        block.iter().map(|row| row.iter().map(|m| self.apply(m)).collect()).collect()
    }

    /// Ratio `||(f(a_ij))|| / ||(a_ij)||` for a nonzero block.
    pub fn level_ratio(&self, block: &Grid) -> Result<f64> {
        let denom = level_norm(&self.domain, block)?;
        if denom == 0.0 {
            return Err(Error::invalid("level ratio of the zero block is undefined"));
        }
        Ok(assemble_block(&self.apply_level(block)?)?.op_norm() / denom)
    }

    /// Composition `g ∘ self`.
    pub fn then(&self, g: &CbLinearMap) -> Result<Self> {
        let images = self.images.iter().map(|m| g.apply(m)).collect::<Result<Vec<_>>>()?;
        Self::new(self.domain.clone(), g.codomain.clone(), images)
    }

    /// Inverse map, defined when the map is a bijection between the spans.
    pub fn inverse(&self) -> Result<Self> {
        let k = self.domain.dim();
        if self.codomain.dim() != k {
            return Err(Error::invalid("map between spaces of different dimension is not invertible"));
        }
        let mut coords = DMatrix::<C64>::zeros(k, k);
        for (j, img) in self.images.iter().enumerate() {
            let c = self.codomain.coordinates(img)?;
            for (i, v) in c.into_iter().enumerate() {
                coords[(i, j)] = v;
            }
        }
        let svd = coords.clone().svd(false, false);
        let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
        if !(smin > 1e-12 * smax) {
            return Err(Error::Singular { sigma_min: smin, sigma_max: smax });
        }
        let inv = coords.try_inverse().ok_or(Error::Singular { sigma_min: smin, sigma_max: smax })?;
        let images = (0..k)
            .map(|j| {
                let c: Vec<C64> = inv.column(j).iter().copied().collect();
                self.domain.combine(&c)
            })
            .collect();
        Self::new(self.codomain.clone(), self.domain.clone(), images)
    }

    /// `x a x^{-1} -> y f(a) y^{-1}`: both sides conjugated.
    pub fn conjugated(&self, x: Option<&ComplexMatrix>, y: Option<&ComplexMatrix>) -> Result<Self> {
        let (domain, codomain, images) = (self.domain.clone(), self.codomain.clone(), self.images.clone());
        let (domain, _) = match x {
            Some(x) => {
                let xi = x.inverse()?;
                (domain.conjugated(x, &xi)?, Some(xi))
            }
            None => (domain, None),
        };
        let (codomain, images) = match y {
            Some(y) => {
                let yi = y.inverse()?;
                let imgs = images.iter().map(|m| y.conjugate_with(&yi, m)).collect();
                (codomain.conjugated(y, &yi)?, imgs)
            }
            None => (codomain, images),
        };
        Self::new(domain, codomain, images)
    }

    /// The map `t* -> f(t)*` on the adjoint space.
    pub fn adjoint_map(&self) -> Result<Self> {
        Self::new(
            self.domain.adjoint_space()?,
            self.codomain.adjoint_space()?,
            self.images.iter().map(ComplexMatrix::adjoint).collect(),
        )
    }

    /// Level-`d` search problem for this map.
    pub fn level_problem(&self, level: usize) -> LevelProblem {
        LevelProblem::new(
            self.domain.basis().iter().map(|b| b.as_dmatrix().clone()).collect(),
            self.images.iter().map(|b| b.as_dmatrix().clone()).collect(),
            level,
        )
    }

    /// Smith level: the ambient dimension of the codomain.
    pub fn cb_level(&self) -> usize {
        self.codomain.ambient_dim()
    }
}

/// Evaluation of `A(c) = Σ c_ijk E_ij ⊗ b_k` and `F(c) = Σ c_ijk E_ij ⊗ f(b_k)`
/// for a coefficient vector `c` of length `d * d * K`, index `(i*d + j)*K + k`.
#[derive(Clone, Debug)]
pub struct LevelProblem {
    domain_basis: Vec<DMatrix<C64>>,
    images: Vec<DMatrix<C64>>,
    level: usize,
}

/// Top singular data of one side of the ratio.
#[derive(Clone, Debug)]
pub struct SideEval {
    pub matrix: DMatrix<C64>,
    pub sigma: f64,
    pub left: DVector<C64>,
    pub right: DVector<C64>,
}

fn side_eval(matrix: DMatrix<C64>) -> SideEval {
    let (sigma, left, right) = ComplexMatrix::from_dmatrix(matrix.clone()).top_singular_triplet();
    SideEval { matrix, sigma, left, right }
}

/// Schatten `p`-norm and its matrix gradient `sum (s_i/|M|_p)^{p-1} u_i v_i^*`.
fn schatten(m: DMatrix<C64>, p: f64) -> (f64, DMatrix<C64>) {
    let svd = checked_svd(&m);
    let smax = svd.sigma.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return (0.0, DMatrix::zeros(m.nrows(), m.ncols()));
    }
    let norm = smax * svd.sigma.iter().map(|s| (s / smax).powf(p)).sum::<f64>().powf(1.0 / p);
    let mut g = DMatrix::<C64>::zeros(m.nrows(), m.ncols());
    for (i, s) in svd.sigma.iter().enumerate() {
        let w = (s / norm).powf(p - 1.0);
        if w > 1e-300 {
            g += svd.u.column(i) * svd.v_t.row(i) * C64::new(w, 0.0);
        }
    }
    (norm, g)
}

impl LevelProblem {
    pub fn new(domain_basis: Vec<DMatrix<C64>>, images: Vec<DMatrix<C64>>, level: usize) -> Self {
        assert_eq!(domain_basis.len(), images.len());
        assert!(level >= 1);
        Self { domain_basis, images, level }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_coeffs(&self) -> usize {
        self.level * self.level * self.domain_basis.len()
    }

    pub fn images(&self) -> &[DMatrix<C64>] {
        &self.images
    }

    /// Same domain, codomain images replaced by `y f(b_k) y^{-1}`.
    pub fn with_conjugated_images(&self, y: &DMatrix<C64>, y_inv: &DMatrix<C64>) -> Self {
        Self {
            domain_basis: self.domain_basis.clone(),
            images: self.images.iter().map(|f| y * f * y_inv).collect(),
            level: self.level,
        }
    }

    fn assemble(&self, basis: &[DMatrix<C64>], c: &[C64]) -> DMatrix<C64> {
        let d = self.level;
        let k = basis.len();
        let n = basis[0].nrows();
        let mut out = DMatrix::<C64>::zeros(d * n, d * n);
        for i in 0..d {
            for j in 0..d {
                let mut view = out.view_mut((i * n, j * n), (n, n));
                for (kk, b) in basis.iter().enumerate() {
                    let coef = c[(i * d + j) * k + kk];
                    if coef != C64::new(0.0, 0.0) {
                        view += b * coef;
                    }
                }
            }
        }
        out
    }

    pub fn input_matrix(&self, c: &[C64]) -> DMatrix<C64> {
        self.assemble(&self.domain_basis, c)
    }

    pub fn output_matrix(&self, c: &[C64]) -> DMatrix<C64> {
        self.assemble(&self.images, c)
    }

    pub fn evaluate(&self, c: &[C64]) -> (SideEval, SideEval) {
        (side_eval(self.input_matrix(c)), side_eval(self.output_matrix(c)))
    }

    pub fn ratio(&self, c: &[C64]) -> f64 {
        let a = ComplexMatrix::from_dmatrix(self.input_matrix(c)).op_norm();
        let f = ComplexMatrix::from_dmatrix(self.output_matrix(c)).op_norm();
        if a == 0.0 {
            0.0
        } else {
            f / a
        }
    }

    /// Complex gradient `conj(u_i^* b_k v_j)` of `sigma_max` with respect to
    /// the coefficients, for basis `basis` and top singular pair `(u, v)`.
    fn sigma_gradient(&self, basis: &[DMatrix<C64>], side: &SideEval, out: &mut [C64], weight: f64) {
        let d = self.level;
        let k = basis.len();
        let n = basis[0].nrows();
        for i in 0..d {
            let ui = side.left.rows(i * n, n);
            for j in 0..d {
                let vj = side.right.rows(j * n, n);
                for (kk, b) in basis.iter().enumerate() {
                    let g = (ui.adjoint() * b * vj)[(0, 0)];
                    out[(i * d + j) * k + kk] += g.conj() * weight;
                }
            }
        }
    }

    /// Ratio and its gradient (as a complex vector whose real and imaginary
    /// parts are the partial derivatives in the real and imaginary
    /// coordinates).
    pub fn ratio_and_gradient(&self, c: &[C64]) -> (f64, Vec<C64>) {
        let (a, f) = self.evaluate(c);
        let mut grad = vec![C64::new(0.0, 0.0); c.len()];
        if a.sigma == 0.0 {
            return (0.0, grad);
        }
        let r = f.sigma / a.sigma;
        self.sigma_gradient(&self.images, &f, &mut grad, 1.0 / a.sigma);
        self.sigma_gradient(&self.domain_basis, &a, &mut grad, -r / a.sigma);
        (r, grad)
    }

    /// Accumulates `weight * conj(tr(G_ij^* b_k))` into `out`, the coefficient
    /// gradient of a real function whose matrix gradient is `g`.
    fn matrix_gradient(&self, basis: &[DMatrix<C64>], g: &DMatrix<C64>, out: &mut [C64], weight: f64) {
        let d = self.level;
        let k = basis.len();
        let n = basis[0].nrows();
        for i in 0..d {
            for j in 0..d {
                let block = g.view((i * n, j * n), (n, n));
                for (kk, b) in basis.iter().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for (x, y) in block.iter().zip(b.iter()) {
                        acc += x * y.conj();
                    }
                    out[(i * d + j) * k + kk] += acc * weight;
                }
            }
        }
    }

    /// Ratio of Schatten `p`-norms and its coefficient gradient. For large `p`
    /// this is a smooth stand-in for the operator-norm ratio.
    pub fn schatten_ratio_and_gradient(&self, c: &[C64], p: f64) -> (f64, Vec<C64>) {
        let (na, ga) = schatten(self.input_matrix(c), p);
        let (nf, gf) = schatten(self.output_matrix(c), p);
        let mut grad = vec![C64::new(0.0, 0.0); c.len()];
        if na == 0.0 {
            return (0.0, grad);
        }
        let r = nf / na;
        self.matrix_gradient(&self.images, &gf, &mut grad, 1.0 / na);
        self.matrix_gradient(&self.domain_basis, &ga, &mut grad, -r / na);
        (r, grad)
    }

    /// Grid form of a coefficient vector over the domain basis.
    pub fn grid(&self, c: &[C64]) -> Grid {
        let d = self.level;
        let k = self.domain_basis.len();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut m = DMatrix::<C64>::zeros(self.domain_basis[0].nrows(), self.domain_basis[0].ncols());
                        for (kk, b) in self.domain_basis.iter().enumerate() {
                            m += b * c[(i * d + j) * k + kk];
                        }
                        ComplexMatrix::from_dmatrix(m)
                    })
                    .collect()
            })
            .collect()
    }

    /// Coefficients of the block `I_d ⊗ I`, when the identity lies in the
    /// domain span.
    pub fn identity_coeffs(&self, domain: &OperatorSubspace) -> Option<Vec<C64>> {
        let c = domain.coordinates(&ComplexMatrix::identity(domain.ambient_dim())).ok()?;
        let d = self.level;
        let k = c.len();
        let mut out = vec![C64::new(0.0, 0.0); d * d * k];
        for i in 0..d {
            out[(i * d + i) * k..(i * d + i + 1) * k].copy_from_slice(&c);
        }
        Some(out)
    }
}

fn normalize(c: &mut [C64]) {
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        c.iter_mut().for_each(|z| *z /= norm);
    }
}

fn re_dot(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Limited-memory BFGS ascent with Armijo backtracking. `eval` returns a
/// scale-invariant objective and its gradient; the iterate is renormalized
/// (and the memory cleared) when its length drifts.
pub fn lbfgs_ascent<E>(eval: E, start: Vec<C64>, max_iter: usize) -> (f64, Vec<C64>)
where
    E: Fn(&[C64]) -> (f64, Vec<C64>),
{
    const MEMORY: usize = 8;
    let mut x = start;
    normalize(&mut x);
    let (mut f, mut g) = eval(&x);
    let mut hist: std::collections::VecDeque<(Vec<C64>, Vec<C64>, f64)> = std::collections::VecDeque::new();
    let mut fails = 0;
    for _ in 0..max_iter {
        let gnorm = re_dot(&g, &g).sqrt();
        if gnorm < 1e-13 {
            break;
        }
        // two-loop recursion on the ascent direction
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * re_dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= yi * a);
            alphas.push(a);
        }
        let scale = match hist.back() {
            Some((s, y, _)) => re_dot(s, y) / re_dot(y, y),
            None => 0.05 / gnorm,
        };
        q.iter_mut().for_each(|qi| *qi *= scale);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * re_dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += si * (a - b));
        }
        let mut dir = q;
        let mut slope = re_dot(&g, &dir);
        if !(slope > 0.0) {
            hist.clear();
            dir = g.iter().map(|z| z * (0.05 / gnorm)).collect();
            slope = re_dot(&g, &dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<C64> = x.iter().zip(&dir).map(|(xi, di)| xi + di * t).collect();
            let (ft, gt) = eval(&trial);
            if ft >= f + 1e-4 * t * slope && ft > f {
                accepted = Some((trial, ft, gt));
                break;
            }
            t *= 0.3;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            fails += 1;
            if fails > 3 {
                break;
            }
            continue;
        };
        let s: Vec<C64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // ascent: curvature pairs of -f
        let y: Vec<C64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = re_dot(&s, &y);
        let gain = fnew - f;
        x = xn;
        f = fnew;
        g = gn;
        if sy > 1e-16 * re_dot(&s, &s).sqrt() * re_dot(&y, &y).sqrt() {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > MEMORY {
                hist.pop_front();
            }
        }
        let len = re_dot(&x, &x).sqrt();
        if !(0.5..=2.0).contains(&len) {
            let inv = 1.0 / len;
            x.iter_mut().for_each(|z| *z *= inv);
            g.iter_mut().for_each(|z| *z *= len);
            hist.clear();
        }
        if gain <= 1e-16 * f.abs().max(1.0) {
            break;
        }
    }
    normalize(&mut x);
    (f, x)
}

/// Exponents of the Schatten continuation used before the exact polish.
pub const SCHATTEN_SCHEDULE: [f64; 6] = [4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0];

/// Ascent of the operator-norm ratio from `start`: L-BFGS through Schatten
/// norm ratios of growing exponent (smooth, so the search does not stall
/// where top singular values coalesce), then on the exact ratio. At most
/// `max_iter` iterations in total; returns the exact ratio at the end point.
pub fn ascend(problem: &LevelProblem, start: Vec<C64>, max_iter: usize) -> (f64, Vec<C64>) {
    let per_stage = (max_iter * 3 / 50).max(5);
    let last = max_iter.saturating_sub(per_stage * SCHATTEN_SCHEDULE.len()).min(max_iter / 10).max(5);
    let mut c = start;
    for &p in &SCHATTEN_SCHEDULE {
        c = lbfgs_ascent(|x| problem.schatten_ratio_and_gradient(x, p), c, per_stage).1;
    }
    let c = lbfgs_ascent(|x| problem.ratio_and_gradient(x), c, last).1;
    (problem.ratio(&c), c)
}

pub fn random_start<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    (0..n).map(|_| random::complex_normal(rng)).collect()
}

/// Outcome of a cb-norm search.
#[derive(Clone, Debug, Serialize)]
pub struct CbEstimate {
    /// Best ratio found; a certified lower bound for the cb norm.
    pub lower: f64,
    pub level_used: usize,
    /// Input block attaining `lower`, normalized to norm one.
    pub witness: Grid,
    /// Index of the restart that produced the witness (`None` for the
    /// identity candidate).
    pub restart: Option<usize>,
}

/// Seeded multistart search on a prepared level problem, returning every
/// run in order: `extra_starts` first, then random restart `k` drawn from
/// stream `k` of the seed.
pub fn search_all(
    problem: &LevelProblem,
    budget: usize,
    seed: u64,
    extra_starts: &[Vec<C64>],
    max_iter: usize,
) -> Vec<(f64, Vec<C64>)> {
    let n = problem.n_coeffs();
    (0..budget + extra_starts.len())
        .into_par_iter()
        .map(|idx| {
            let start = if idx < extra_starts.len() {
                extra_starts[idx].clone()
            } else {
                let mut rng = random::stream(seed, (idx - extra_starts.len()) as u64);
                random_start(&mut rng, n)
            };
            ascend(problem, start, max_iter)
        })
        .collect()
}

/// Best run of [`search_all`]; ties go to the lowest index, so raising the
/// budget can only raise the result.
pub fn search(
    problem: &LevelProblem,
    budget: usize,
    seed: u64,
    extra_starts: &[Vec<C64>],
    max_iter: usize,
) -> (f64, Vec<C64>, Option<usize>) {
    let mut best: (f64, Vec<C64>, Option<usize>) = (f64::NEG_INFINITY, Vec::new(), None);
    for (idx, (r, c)) in search_all(problem, budget, seed, extra_starts, max_iter).into_iter().enumerate() {
        if r > best.0 {
            best = (r, c, Some(idx));
        }
    }
    best
}

/// Lower estimate of `||f||_cb` at the Smith level (codomain ambient
/// dimension).
pub fn cb_norm_estimate(f: &CbLinearMap, budget: usize, seed: u64) -> Result<CbEstimate> {
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    let level = f.cb_level();
    let problem = f.level_problem(level);
    let (mut lower, mut coeffs, mut restart) = search(&problem, budget, seed, &[], ASCENT_ITERATION_CAP);
    if let Some(id) = problem.identity_coeffs(f.domain()) {
        let r = problem.ratio(&id);
        if r > lower {
            lower = r;
            coeffs = id;
            restart = None;
        }
    }
    let mut witness = problem.grid(&coeffs);
    let scale = assemble_block(&witness)?.op_norm();
    if scale > 0.0 {
        witness = witness.into_iter().map(|row| row.into_iter().map(|m| m.scale_real(1.0 / scale)).collect()).collect();
    }
    Ok(CbEstimate { lower, level_used: level, witness, restart })
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractivityVerdict {
    pub verdict: bool,
    pub worst_ratio: f64,
    pub witness: Grid,
}

/// Complete contractivity up to `tol`, judged by the best ratio the search
/// finds.
pub fn is_completely_contractive(f: &CbLinearMap, tol: f64, budget: usize, seed: u64) -> Result<ContractivityVerdict> {
    let est = cb_norm_estimate(f, budget, seed)?;
    Ok(ContractivityVerdict { verdict: est.lower <= 1.0 + tol, worst_ratio: est.lower, witness: est.witness })
}

/// Scalar multiple `s * I_n` as a convenience for building grids.
pub fn scalar_matrix(n: usize, s: C64) -> ComplexMatrix {
    ComplexMatrix::identity(n).scale(s)
}

/// Diagonal grid `diag(entries)` padded with zero blocks.
pub fn diagonal_grid(entries: &[ComplexMatrix]) -> Grid {
    let d = entries.len();
    let (r, c) = (entries[0].rows(), entries[0].cols());
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i == j { entries[i].clone() } else { ComplexMatrix::zeros(r, c) })
                .collect()
        })
        .collect()
}

/// Multiplies every entry of a grid by `s`.
pub fn scale_grid(grid: &Grid, s: f64) -> Grid {
    grid.iter().map(|row| row.iter().map(|m| m.scale(cr(s))).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::c64;

    fn upper_constant_space() -> OperatorSubspace {
        OperatorSubspace::new(vec![ComplexMatrix::identity(2), ComplexMatrix::unit(2, 0, 1)], true).unwrap()
    }

    fn row_space() -> OperatorSubspace {
        OperatorSubspace::new(vec![ComplexMatrix::unit(2, 0, 0), ComplexMatrix::unit(2, 0, 1)], false).unwrap()
    }

    fn psi() -> CbLinearMap {
        CbLinearMap::new(
            row_space(),
            OperatorSubspace::diagonal_algebra(2),
            vec![ComplexMatrix::unit(2, 0, 0), ComplexMatrix::unit(2, 1, 1)],
        )
        .unwrap()
    }

    #[test]
    fn coordinates_examples() {
        let s = upper_constant_space();
        let c = s.coordinates(&ComplexMatrix::identity(2)).unwrap();
        assert!((c[0] - cr(1.0)).norm() < 1e-12 && c[1].norm() < 1e-12);
        let m = ComplexMatrix::from_rows(&[vec![cr(3.0), c64(0.0, 2.0)], vec![cr(0.0), cr(3.0)]]);
        let c = s.coordinates(&m).unwrap();
        assert!((c[0] - cr(3.0)).norm() < 1e-12 && (c[1] - c64(0.0, 2.0)).norm() < 1e-12);
        match s.coordinates(&ComplexMatrix::unit(2, 1, 0)) {
            Err(Error::NotInSpan { residual }) => assert!((residual - 1.0).abs() < 1e-12),
            other => panic!("expected not-in-span, got {other:?}"),
        }
    }

    #[test]
    fn subspace_validation() {
        let dup = OperatorSubspace::new(vec![ComplexMatrix::identity(2), ComplexMatrix::identity(2).scale_real(2.0)], false);
        assert!(dup.is_err());
        // the row space is not an algebra containing the identity
        let bad = OperatorSubspace::new(row_space().basis().to_vec(), true);
        assert!(bad.is_err());
        // span{I, E_12, E_21} is not closed under products
        let open = OperatorSubspace::new(
            vec![ComplexMatrix::identity(2), ComplexMatrix::unit(2, 0, 1), ComplexMatrix::unit(2, 1, 0)],
            true,
        );
        assert!(open.is_err());
    }

    #[test]
    fn apply_level_examples() {
        let id = CbLinearMap::identity(&OperatorSubspace::full_matrix_algebra(2));
        let grid = vec![vec![ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]])]];
        assert_eq!(id.apply_level(&grid).unwrap()[0][0].distance(&grid[0][0]) < 1e-12, true);

        let s = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[0.0, 0.0]]);
        let out = psi().apply_level(&vec![vec![s]]).unwrap();
        let expect = ComplexMatrix::from_diagonal(&[cr(1.0), cr(2.0)]);
        assert!(out[0][0].distance(&expect) < 1e-12);

        let zero = vec![vec![ComplexMatrix::zeros(2, 2); 2]; 2];
        let out = psi().apply_level(&zero).unwrap();
        assert!(out.iter().flatten().all(|m| m.max_abs() == 0.0));

        let outside = vec![vec![ComplexMatrix::unit(2, 1, 0)]];
        assert!(matches!(psi().apply_level(&outside), Err(Error::NotInSpan { .. })));
    }

    #[test]
    fn level_norm_examples() {
        let s = OperatorSubspace::full_matrix_algebra(2);
        let m = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!((level_norm(&s, &vec![vec![m.clone()]]).unwrap() - m.op_norm()).abs() < 1e-12);
        let a = ComplexMatrix::from_diagonal(&[cr(3.0), cr(0.5)]);
        let dg = diagonal_grid(&[a.clone(), m.clone()]);
        assert!((level_norm(&s, &dg).unwrap() - 3.0).abs() < 1e-12);
        let e = ComplexMatrix::unit(2, 0, 1);
        let g = vec![vec![e.clone(), e.clone()], vec![e.clone(), e.clone()]];
        // (all-ones 2x2) ⊗ E_12 has norm 2 * 1
        assert!((level_norm(&upper_constant_space(), &g).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cb_identity_is_one() {
        let f = CbLinearMap::identity(&OperatorSubspace::full_matrix_algebra(2));
        let est = cb_norm_estimate(&f, 8, 1).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-9, "{}", est.lower);
        assert_eq!(est.level_used, 2);
    }

    /// Independent oracle for the conjugation example: scan rank-one inputs
    /// `x y*` over a lattice of unit vectors in C^2.
    fn rank_one_grid_oracle(t: &ComplexMatrix, steps: usize) -> f64 {
        let ti = t.inverse().unwrap();
        let mut best = 0.0_f64;
        let unit = |a: f64, p: f64| vec![cr(a.cos()), c64(0.0, p).exp() * a.sin()];
        for ia in 0..=steps {
            for ip in 0..steps {
                for ja in 0..=steps {
                    for jp in 0..steps {
                        let a1 = std::f64::consts::FRAC_PI_2 * ia as f64 / steps as f64;
                        let p1 = std::f64::consts::TAU * ip as f64 / steps as f64;
                        let a2 = std::f64::consts::FRAC_PI_2 * ja as f64 / steps as f64;
                        let p2 = std::f64::consts::TAU * jp as f64 / steps as f64;
                        let x = unit(a1, p1);
                        let y = unit(a2, p2);
                        let m = ComplexMatrix::from_rows(&[
                            vec![x[0] * y[0].conj(), x[0] * y[1].conj()],
                            vec![x[1] * y[0].conj(), x[1] * y[1].conj()],
                        ]);
                        best = best.max((t * &m * &ti).op_norm());
                    }
                }
            }
        }
        best
    }

    #[test]
    fn cb_conjugation_matches_condition_number() {
        let t = ComplexMatrix::from_diagonal(&[cr(1.0), cr(2.0)]);
        let oracle = rank_one_grid_oracle(&t, 8);
        assert!((oracle - 2.0).abs() < 1e-12);
        let f = CbLinearMap::conjugation(&OperatorSubspace::full_matrix_algebra(2), &t).unwrap();
        let est = cb_norm_estimate(&f, 16, 5).unwrap();
        assert!((est.lower - 2.0).abs() < 1e-4, "{}", est.lower);
        assert!(est.lower <= 2.0 + 1e-9);
        // the witness reproduces the reported value
        assert!((f.level_ratio(&est.witness).unwrap() - est.lower).abs() < 1e-9);
    }

    /// Brute-force lattice over 2x2 input grids of D = span{E_11, E_22}.
    fn psi_inverse_lattice_oracle() -> f64 {
        let vals = [cr(1.0), cr(-1.0), c64(0.0, 1.0), cr(0.0), cr(0.5)];
        let inv = psi().inverse().unwrap();
        let mut best = 0.0_f64;
        for &a in &vals {
            for &b in &vals {
                for &c in &vals {
                    for &d in &vals {
                        let z = ComplexMatrix::from_diagonal(&[a, b]);
                        let w = ComplexMatrix::from_diagonal(&[c, d]);
                        let grid = vec![vec![z, ComplexMatrix::zeros(2, 2)], vec![w, ComplexMatrix::zeros(2, 2)]];
                        if assemble_block(&grid).unwrap().op_norm() > 0.0 {
                            best = best.max(inv.level_ratio(&grid).unwrap());
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn cb_psi_inverse_is_sqrt_two() {
        let oracle = psi_inverse_lattice_oracle();
        assert!((oracle - 2f64.sqrt()).abs() < 1e-12, "{oracle}");
        let est = cb_norm_estimate(&psi().inverse().unwrap(), 8, 2).unwrap();
        assert!((est.lower - 2f64.sqrt()).abs() < 1e-4, "{}", est.lower);
    }

    #[test]
    fn contractivity_examples() {
        let m2 = OperatorSubspace::full_matrix_algebra(2);
        let id = CbLinearMap::identity(&m2);
        let v = is_completely_contractive(&id, 1e-9, 4, 3).unwrap();
        assert!(v.verdict && (v.worst_ratio - 1.0).abs() < 1e-9);

        let two = CbLinearMap::new(m2.clone(), m2.clone(), m2.basis().iter().map(|b| b.scale_real(2.0)).collect()).unwrap();
        let v = is_completely_contractive(&two, 1e-9, 4, 3).unwrap();
        assert!(!v.verdict && (v.worst_ratio - 2.0).abs() < 1e-9);

        let v = is_completely_contractive(&psi(), 1e-6, 8, 3).unwrap();
        assert!(v.verdict && (v.worst_ratio - 1.0).abs() < 1e-6, "{}", v.worst_ratio);
    }

    /// Level-1 lattice over phases and magnitudes of (z1, z2).
    #[test]
    fn psi_level_one_lattice_is_contractive() {
        let steps = 24;
        let mut worst = 0.0_f64;
        for a in 0..steps {
            for b in 0..steps {
                for mag in [0.25, 1.0, 4.0] {
                    let z1 = c64(0.0, std::f64::consts::TAU * a as f64 / steps as f64).exp();
                    let z2 = c64(0.0, std::f64::consts::TAU * b as f64 / steps as f64).exp() * mag;
                    let s = ComplexMatrix::from_rows(&[vec![z1, z2], vec![cr(0.0), cr(0.0)]]);
                    worst = worst.max(psi().level_ratio(&vec![vec![s]]).unwrap());
                }
            }
        }
        // max(|z1|,|z2|) / sqrt(|z1|^2 + |z2|^2), largest at the most lopsided magnitude
        assert!(worst <= 1.0 + 1e-12);
        assert!((worst - 4.0 / 17f64.sqrt()).abs() < 1e-12);
    }

    /// For maps on a diagonal algebra, `diag(a) -> T diag(a) T^{-1}` factors
    /// through the diagonal, and its cb norm is `min_D kappa(T D)` over
    /// positive diagonal `D`. Oracle: nested grid refinement over `log D`.
    fn diagonal_scaling_oracle(t: &ComplexMatrix) -> f64 {
        let kappa = |l1: f64, l2: f64| {
            let d = ComplexMatrix::from_diagonal(&[cr(1.0), cr(l1.exp()), cr(l2.exp())]);
            (t * &d).condition().unwrap()
        };
        let (mut c1, mut c2, mut width) = (0.0, 0.0, 4.0);
        let mut best = kappa(0.0, 0.0);
        for _ in 0..12 {
            let steps = 40;
            let (mut b1, mut b2) = (c1, c2);
            for i in 0..=steps {
                for j in 0..=steps {
                    let l1 = c1 - width + 2.0 * width * i as f64 / steps as f64;
                    let l2 = c2 - width + 2.0 * width * j as f64 / steps as f64;
                    let k = kappa(l1, l2);
                    if k < best {
                        best = k;
                        b1 = l1;
                        b2 = l2;
                    }
                }
            }
            c1 = b1;
            c2 = b2;
            width *= 0.25;
        }
        best
    }

    #[test]
    fn cb_on_diagonal_algebra_matches_scaling_oracle() {
        let t = random::random_invertible(&mut random::rng(21), 3, 3.0);
        let oracle = diagonal_scaling_oracle(&t);
        let f = CbLinearMap::conjugation(&OperatorSubspace::diagonal_algebra(3), &t).unwrap();
        let est = cb_norm_estimate(&f, 16, 1).unwrap();
        assert!(est.lower <= oracle + 1e-9, "{} > {}", est.lower, oracle);
        assert!(oracle - est.lower < 1e-6, "{} vs {}", est.lower, oracle);
    }

    #[test]
    fn search_is_deterministic_and_monotone_in_budget() {
        let t = ComplexMatrix::from_real_rows(&[&[1.0, 0.7], &[0.0, 1.5]]);
        let f = CbLinearMap::conjugation(&OperatorSubspace::full_matrix_algebra(2), &t).unwrap();
        let a = cb_norm_estimate(&f, 3, 9).unwrap();
        let b = cb_norm_estimate(&f, 3, 9).unwrap();
        assert_eq!(a.lower.to_bits(), b.lower.to_bits());
        let c = cb_norm_estimate(&f, 6, 9).unwrap();
        assert!(c.lower >= a.lower);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = ComplexMatrix::from_real_rows(&[&[1.0, 0.3], &[0.2, 2.0]]);
        let f = CbLinearMap::conjugation(&OperatorSubspace::full_matrix_algebra(2), &t).unwrap();
        let p = f.level_problem(2);
        let mut rng = random::rng(4);
        let c = random_start(&mut rng, p.n_coeffs());
        let (_, g) = p.ratio_and_gradient(&c);
        let h = 1e-6;
        for idx in [0, 3, 7, 12] {
            let mut cp = c.clone();
            cp[idx] += cr(h);
            let mut cm = c.clone();
            cm[idx] -= cr(h);
            let fd_re = (p.ratio(&cp) - p.ratio(&cm)) / (2.0 * h);
            let mut cp = c.clone();
            cp[idx] += c64(0.0, h);
            let mut cm = c.clone();
            cm[idx] -= c64(0.0, h);
            let fd_im = (p.ratio(&cp) - p.ratio(&cm)) / (2.0 * h);
            assert!((fd_re - g[idx].re).abs() < 1e-5, "re {idx}: {fd_re} vs {}", g[idx].re);
            assert!((fd_im - g[idx].im).abs() < 1e-5, "im {idx}: {fd_im} vs {}", g[idx].im);
        }
    }

    #[test]
    fn inverse_and_adjoint_maps() {
        let inv = psi().inverse().unwrap();
        let s = ComplexMatrix::from_rows(&[vec![c64(1.0, 2.0), cr(-3.0)], vec![cr(0.0), cr(0.0)]]);
        let back = inv.apply(&psi().apply(&s).unwrap()).unwrap();
        assert!(back.distance(&s) < 1e-12);
        let adj = psi().adjoint_map().unwrap();
        let img = adj.apply(&s.adjoint()).unwrap();
        assert!(img.distance(&psi().apply(&s).unwrap().adjoint()) < 1e-12);
    }

    #[test]
    fn json_schema_round_trip() {
        let json = serde_json::to_string(&psi()).unwrap();
        let back: CbLinearMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back.images().len(), 2);
        let bad = r#"{"ambient_dim": 3, "basis": [{"rows":2,"cols":2,"data":[[1,0],[0,0],[0,0],[1,0]]}], "unital_algebra": true}"#;
        assert!(serde_json::from_str::<OperatorSubspace>(bad).is_err());
    }
}
