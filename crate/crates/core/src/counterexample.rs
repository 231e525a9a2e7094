//! A unital cb algebra isomorphism between two commutative 3-dimensional
//! algebras in `M_4` that no pair of similarities turns into an isometry,
//! together with the 2x2 norm identities behind it and a numerical study of
//! how far candidate similarities stay from isometric.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{c64, cr, ComplexMatrix, C64};
use crate::operator_space::{CbLinearMap, OperatorSubspace};
use crate::random;

/// Norm of `[[a11, a12], [0, a22]]`. The discriminant is written as a sum
/// of squares so nothing cancels.
pub fn ut2_norm_closed_form(a11: C64, a12: C64, a22: C64) -> f64 {
    let (a, b, c) = (a11.norm_sqr(), a12.norm_sqr(), a22.norm_sqr());
    let s = a + b + c;
    let disc = (a - c) * (a - c) + b * (b + 2.0 * a + 2.0 * c);
    (0.5 * (s + disc.sqrt())).sqrt()
}

/// Entries of the two upper-triangular matrices
/// `[[alpha z1, beta z1 + gamma z2], [0, 0]]` and
/// `[[alpha' z1, beta' z1 + gamma' z2], [0, delta' z2]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UTParams {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub alpha_p: C64,
    pub beta_p: C64,
    pub gamma_p: C64,
    pub delta_p: C64,
}

impl UTParams {
    pub fn is_finite(&self) -> bool {
        [self.alpha, self.beta, self.gamma, self.alpha_p, self.beta_p, self.gamma_p, self.delta_p]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn lhs(&self, z1: C64, z2: C64) -> f64 {
        ut2_norm_closed_form(self.alpha * z1, self.beta * z1 + self.gamma * z2, cr(0.0))
    }

    pub fn rhs(&self, z1: C64, z2: C64) -> f64 {
        ut2_norm_closed_form(self.alpha_p * z1, self.beta_p * z1 + self.gamma_p * z2, self.delta_p * z2)
    }

    /// Largest relative gap `|lhs - rhs| / max(1, rhs)` over `points`.
    pub fn equality_gap(&self, points: &[(C64, C64)]) -> f64 {
        points
            .iter()
            .map(|&(z1, z2)| {
                let r = self.rhs(z1, z2);
                (self.lhs(z1, z2) - r).abs() / r.max(1.0)
            })
            .fold(0.0, f64::max)
    }

    fn scale(&self) -> f64 {
        [self.alpha, self.beta, self.gamma, self.alpha_p, self.beta_p, self.gamma_p, self.delta_p]
            .iter()
            .map(|z| z.norm_sqr())
            .fold(1.0, f64::max)
    }
}

/// Equispaced phases for `z1` and `z2` at unit modulus, `|z2|` swept over
/// `{1/2, 1, 2}`.
pub fn torus_grid(density: usize) -> Vec<(C64, C64)> {
    let phase = |k: usize| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / density as f64);
    let mut out = Vec::with_capacity(3 * density * density);
    for &m in &[0.5, 1.0, 2.0] {
        for i in 0..density {
            for j in 0..density {
                out.push((phase(i), phase(j) * m));
            }
        }
    }
    out
}

/// [`torus_grid`] plus the two coordinate axes `(1, 0)` and `(0, 1)`.
pub fn lemma_grid(density: usize) -> Vec<(C64, C64)> {
    let mut g = torus_grid(density);
    g.push((cr(1.0), cr(0.0)));
    g.push((cr(0.0), cr(1.0)));
    g
}

#[derive(Clone, Debug, Serialize)]
pub struct RelationCheck {
    pub hypothesis_holds: bool,
    pub hypothesis_gap: f64,
    pub eq_gamma_ok: bool,
    pub eq_alpha_ok: bool,
    pub ineq_betagamma_ok: bool,
    pub equality_implies_degenerate_ok: bool,
}

impl RelationCheck {
    pub fn all_ok(&self) -> bool {
        self.eq_gamma_ok && self.eq_alpha_ok && self.ineq_betagamma_ok && self.equality_implies_degenerate_ok
    }
}

/// Tests the norm equality on the grid; when it holds, checks the three
/// consequences for the moduli (vacuously true otherwise).
pub fn lemma_rel_check(p: &UTParams, tol: f64, grid_density: usize) -> Result<RelationCheck> {
    if grid_density < 8 {
        return Err(Error::invalid("grid density must be at least 8"));
    }
    let gap = p.equality_gap(&lemma_grid(grid_density));
    let holds = gap <= tol;
    let s = p.scale();
    let (a, b, g) = (p.alpha.norm(), p.beta.norm(), p.gamma.norm());
    let (ap, bp, gp, dp) = (p.alpha_p.norm(), p.beta_p.norm(), p.gamma_p.norm(), p.delta_p.norm());
    let eq_gamma = (g * g - gp * gp - dp * dp).abs() <= tol * s;
    let eq_alpha = (a * a + b * b - ap * ap - bp * bp).abs() <= tol * s;
    let ineq = b * g <= bp * gp + tol * s;
    let degenerate = (b * g - bp * gp).abs() > tol * s || ap * dp <= tol * s;
    Ok(RelationCheck {
        hypothesis_holds: holds,
        hypothesis_gap: gap,
        eq_gamma_ok: !holds || eq_gamma,
        eq_alpha_ok: !holds || eq_alpha,
        ineq_betagamma_ok: !holds || ineq,
        equality_implies_degenerate_ok: !holds || degenerate,
    })
}

/// With `gamma' != 0`: if the norm equality holds on the grid then
/// `alpha' delta'` must vanish. Returns whether that implication holds.
pub fn lemma_diag_check(p: &UTParams, tol: f64, grid_density: usize) -> Result<bool> {
    if grid_density < 8 {
        return Err(Error::invalid("grid density must be at least 8"));
    }
    if p.gamma_p.norm() <= tol {
        return Err(Error::invalid("gamma' must be nonzero"));
    }
    let holds = p.equality_gap(&lemma_grid(grid_density)) <= tol;
    Ok(!holds || (p.alpha_p * p.delta_p).norm() <= tol * p.scale())
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleScene {
    pub a_r: OperatorSubspace,
    pub a_d: OperatorSubspace,
    pub psi: CbLinearMap,
    pub x1: ComplexMatrix,
    pub x2: ComplexMatrix,
    pub y1: ComplexMatrix,
    pub y2: ComplexMatrix,
}

/// `[[lambda I, s], [0, lambda I]]` in `M_4`.
pub fn corner_element(lambda: C64, s: &ComplexMatrix) -> ComplexMatrix {
    let mut m = ComplexMatrix::identity(4).scale(lambda);
    for i in 0..2 {
        for j in 0..2 {
            m.set(i, j + 2, s.get(i, j));
        }
    }
    m
}

/// `s = [[z1, z2], [0, 0]]`.
pub fn r_element(z1: C64, z2: C64) -> ComplexMatrix {
    ComplexMatrix::from_rows(&[vec![z1, z2], vec![cr(0.0), cr(0.0)]])
}

/// `psi(s) = diag(z1, z2)`.
pub fn psi_small(z1: C64, z2: C64) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[z1, z2])
}

pub fn build_scene() -> Result<CounterexampleScene> {
    let one = cr(1.0);
    let zero = cr(0.0);
    let id = ComplexMatrix::identity(4);
    let r_basis = vec![id.clone(), corner_element(zero, &r_element(one, zero)), corner_element(zero, &r_element(zero, one))];
    let d_basis = vec![id, corner_element(zero, &psi_small(one, zero)), corner_element(zero, &psi_small(zero, one))];
    let a_r = OperatorSubspace::new(r_basis, true)?;
    let a_d = OperatorSubspace::new(d_basis.clone(), true)?;
    let psi = CbLinearMap::new(a_r.clone(), a_d.clone(), d_basis)?;
    if !psi.is_unital() || !psi.is_multiplicative() {
        return Err(Error::invalid("Psi failed its unital/multiplicative check"));
    }
    let i2 = ComplexMatrix::identity(2);
    Ok(CounterexampleScene { a_r, a_d, psi, x1: i2.clone(), x2: i2.clone(), y1: i2.clone(), y2: i2 })
}

/// Parameters of `X1 s X2` and `Y1 psi(s) Y2` for upper-triangular
/// candidates.
pub fn induced_params(x1: &ComplexMatrix, x2: &ComplexMatrix, y1: &ComplexMatrix, y2: &ComplexMatrix) -> UTParams {
    let (a11, a12) = (x1.get(0, 0), x1.get(0, 1));
    let (b11, b12, b22) = (x2.get(0, 0), x2.get(0, 1), x2.get(1, 1));
    let (c11, c12, c22) = (y1.get(0, 0), y1.get(0, 1), y1.get(1, 1));
    let (d11, d12, d22) = (y2.get(0, 0), y2.get(0, 1), y2.get(1, 1));
    // the second row of s is zero, so a12 never enters
    let _ = a12;
    UTParams {
        alpha: a11 * b11,
        beta: a11 * b12,
        gamma: a11 * b22,
        alpha_p: c11 * d11,
        beta_p: c11 * d12,
        gamma_p: c12 * d22,
        delta_p: c22 * d22,
    }
}

fn check_candidate(m: &ComplexMatrix, name: &str) -> Result<()> {
    if m.rows() != 2 || m.cols() != 2 {
        return Err(Error::dim(format!("{name} must be 2x2")));
    }
    if !m.is_upper_triangular(0.0) {
        return Err(Error::invalid(format!("{name} must be upper triangular")));
    }
    m.inverse().map(|_| ())
}

fn defect_on(p: &UTParams, points: &[(C64, C64)]) -> f64 {
    points.iter().map(|&(z1, z2)| (p.lhs(z1, z2) - p.rhs(z1, z2)).abs()).fold(0.0, f64::max)
}

/// `max | ||X1 s X2|| - ||Y1 psi(s) Y2|| |` over `points`.
pub fn isometry_defect_on(
    x1: &ComplexMatrix,
    x2: &ComplexMatrix,
    y1: &ComplexMatrix,
    y2: &ComplexMatrix,
    points: &[(C64, C64)],
) -> Result<f64> {
    for (m, name) in [(x1, "X1"), (x2, "X2"), (y1, "Y1"), (y2, "Y2")] {
        check_candidate(m, name)?;
    }
    Ok(defect_on(&induced_params(x1, x2, y1, y2), points))
}

/// Defect over [`torus_grid`]. The scene fixes `psi`; only the candidates
/// vary.
pub fn isometry_defect(
    _scene: &CounterexampleScene,
    x1: &ComplexMatrix,
    x2: &ComplexMatrix,
    y1: &ComplexMatrix,
    y2: &ComplexMatrix,
    grid_density: usize,
) -> Result<f64> {
    if grid_density == 0 {
        return Err(Error::invalid("grid density must be positive"));
    }
    isometry_defect_on(x1, x2, y1, y2, &torus_grid(grid_density))
}

/// `[[e^h e^{i phi1}, u], [0, e^{-h} e^{i phi2}]]`: unit determinant modulus.
fn ut_from(p: &[f64]) -> ComplexMatrix {
    let d1 = C64::from_polar(p[0].exp(), p[1]);
    let d2 = C64::from_polar((-p[0]).exp(), p[2]);
    ComplexMatrix::from_rows(&[vec![d1, c64(p[3], p[4])], vec![cr(0.0), d2]])
}

const PARAMS_PER_FACTOR: usize = 5;

fn candidates_from(p: &[f64]) -> [ComplexMatrix; 4] {
    std::array::from_fn(|k| ut_from(&p[k * PARAMS_PER_FACTOR..(k + 1) * PARAMS_PER_FACTOR]))
}

fn ut2_condition(m: &ComplexMatrix) -> f64 {
    let top = ut2_norm_closed_form(m.get(0, 0), m.get(0, 1), m.get(1, 1));
    let det = (m.get(0, 0) * m.get(1, 1)).norm();
    top * top / det
}

struct DefectCost<'a> {
    points: &'a [(C64, C64)],
    kappa_cap: f64,
}

impl DefectCost<'_> {
    fn eval(&self, p: &[f64]) -> f64 {
        let c = candidates_from(p);
        if c.iter().any(|m| ut2_condition(m) > self.kappa_cap) {
            return f64::INFINITY;
        }
        defect_on(&induced_params(&c[0], &c[1], &c[2], &c[3]), self.points)
    }
}

impl CostFunction for DefectCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DefectSearch {
    pub best_defect: f64,
    /// `[X1, X2, Y1, Y2]`, upper triangular with `|det| = 1`.
    pub best_candidates: Vec<ComplexMatrix>,
    pub restart: usize,
    pub kappa_cap: f64,
    pub grid_density: usize,
}

/// Nelder-Mead iterations per restart.
pub const DEFECT_ITERATIONS: u64 = 1500;

/// Random start inside the cap: off-diagonal and log-diagonal spreads small
/// enough that `kappa <= cap` for every factor.
fn defect_start<R: Rng + ?Sized>(rng: &mut R, kappa_cap: f64) -> Vec<f64> {
    let spread = 0.25 * kappa_cap.ln();
    let mut p = Vec::with_capacity(4 * PARAMS_PER_FACTOR);
    for _ in 0..4 {
        p.push(rng.random_range(-1.0..=1.0) * spread);
        p.push(rng.random_range(0.0..std::f64::consts::TAU));
        p.push(rng.random_range(0.0..std::f64::consts::TAU));
        let z = random::complex_normal(rng) * spread;
        p.push(z.re);
        p.push(z.im);
    }
    p
}

fn restart_run(cost: &DefectCost, seed: u64, index: usize) -> (f64, Vec<f64>) {
    let mut rng = random::stream(seed, index as u64);
    let start = defect_start(&mut rng, cost.kappa_cap);
    let f0 = cost.eval(&start);
    let step = 0.1 + 0.1 * cost.kappa_cap.ln();
    let mut simplex = vec![start.clone()];
    for k in 0..start.len() {
        let mut v = start.clone();
        // shrink the step until the vertex respects the cap
        let mut h = step;
        loop {
            v[k] = start[k] + h;
            if cost.eval(&v).is_finite() || h < 1e-6 {
                break;
            }
            h *= 0.5;
        }
        simplex.push(v);
    }
    let solver = match NelderMead::new(simplex).with_sd_tolerance(1e-12) {
        Ok(s) => s,
        Err(_) => return (f0, start),
    };
    let result = Executor::new(DefectCost { points: cost.points, kappa_cap: cost.kappa_cap }, solver)
        .configure(|s| s.max_iters(DEFECT_ITERATIONS))
        .run();
    match result {
        Ok(res) => {
            let state = res.state();
            match state.best_param.clone() {
                Some(p) if state.best_cost <= f0 => (state.best_cost, p),
                _ => (f0, start),
            }
        }
        Err(_) => (f0, start),
    }
}

/// Multistart Nelder-Mead over upper-triangular candidates with
/// `|det| = 1` and condition number at most `kappa_cap`. Restart `i` draws
/// from stream `i` of `seed`, so a larger budget never reports a larger
/// defect.
pub fn defect_minimize(
    _scene: &CounterexampleScene,
    kappa_cap: f64,
    budget: usize,
    seed: u64,
    grid_density: usize,
) -> Result<DefectSearch> {
    if !(kappa_cap >= 1.0) {
        return Err(Error::invalid("kappa cap must be at least 1"));
    }
    if budget == 0 || grid_density == 0 {
        return Err(Error::invalid("budget and grid density must be positive"));
    }
    let points = torus_grid(grid_density);
    let cost = DefectCost { points: &points, kappa_cap };
    let runs: Vec<(f64, Vec<f64>)> = (0..budget).into_par_iter().map(|i| restart_run(&cost, seed, i)).collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.0 < runs[best].0 {
            best = i;
        }
    }
    let cands = candidates_from(&runs[best].1);
    let best_defect = isometry_defect_on(&cands[0], &cands[1], &cands[2], &cands[3], &points)?;
    Ok(DefectSearch { best_defect, best_candidates: cands.to_vec(), restart: best, kappa_cap, grid_density })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_space::cb_norm_estimate;

    fn params(v: [C64; 7]) -> UTParams {
        UTParams {
            alpha: v[0],
            beta: v[1],
            gamma: v[2],
            alpha_p: v[3],
            beta_p: v[4],
            gamma_p: v[5],
            delta_p: v[6],
        }
    }

    #[test]
    fn closed_form_examples() {
        let (o, z) = (cr(1.0), cr(0.0));
        assert!((ut2_norm_closed_form(o, z, o) - 1.0).abs() < 1e-15);
        assert!((ut2_norm_closed_form(o, o, z) - 2f64.sqrt()).abs() < 1e-15);
        assert!((ut2_norm_closed_form(o, o, o) - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_svd() {
        let mut rng = random::rng(4);
        for _ in 0..500 {
            let v: Vec<C64> = (0..3).map(|_| random::complex_normal(&mut rng)).collect();
            let m = ComplexMatrix::from_rows(&[vec![v[0], v[1]], vec![cr(0.0), v[2]]]);
            assert!((ut2_norm_closed_form(v[0], v[1], v[2]) - m.op_norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn relation_examples() {
        let (o, z) = (cr(1.0), cr(0.0));
        let r = lemma_rel_check(&params([o, z, o, o, z, o, z]), 1e-10, 16).unwrap();
        assert!(r.hypothesis_holds && r.all_ok());

        // |gamma|^2 = 2 = |gamma'|^2 + |delta'|^2, but beta' = 0 with
        // alpha' delta' != 0, so the equality fails somewhere on the grid
        let p = params([o, z, cr(2f64.sqrt()), o, z, o, o]);
        let r = lemma_rel_check(&p, 1e-10, 16).unwrap();
        let g = 2f64.sqrt();
        assert!(((g * g) - (1.0 + 1.0)).abs() < 1e-12);
        assert!(!r.hypothesis_holds);
        assert!(r.all_ok());
        // direct substitution at z = (1, 1): sqrt(1 + 2) against the
        // closed form of [[1, 1], [0, 1]]
        let lhs = 3f64.sqrt();
        let rhs = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p.lhs(o, o) - lhs).abs() < 1e-12 && (p.rhs(o, o) - rhs).abs() < 1e-12);

        let mut rng = random::rng(9);
        for _ in 0..20 {
            let v: [C64; 7] = std::array::from_fn(|_| random::complex_normal(&mut rng));
            let r = lemma_rel_check(&params(v), 1e-8, 8).unwrap();
            assert!(!r.hypothesis_holds);
        }
    }

    #[test]
    fn diag_check_examples() {
        let (o, z) = (cr(1.0), cr(0.0));
        assert!(lemma_diag_check(&params([o, z, o, o, z, o, z]), 1e-10, 16).unwrap());
        // alpha' = 0, delta' != 0: column vector z1 (beta', 0) + z2 (gamma', delta')
        // matched by a row with the same Gram matrix
        let (bp, gp, dp) = (c64(0.6, 0.2), c64(-0.3, 0.9), c64(0.5, -0.4));
        let g = cr((gp.norm_sqr() + dp.norm_sqr()).sqrt());
        let b = bp * gp.conj() / g.conj();
        let a = cr((bp.norm_sqr() - b.norm_sqr()).sqrt());
        let p = params([a, b, g, z, bp, gp, dp]);
        assert!(p.equality_gap(&lemma_grid(16)) < 1e-14);
        assert!(lemma_diag_check(&p, 1e-10, 16).unwrap());
        assert!(lemma_diag_check(&params([o, o, o, o, o, o, o]), 1e-8, 16).unwrap());
        assert!(lemma_diag_check(&params([o, o, o, o, o, z, o]), 1e-8, 16).is_err());
    }

    #[test]
    fn scene_invariants() {
        let s = build_scene().unwrap();
        assert_eq!(s.a_r.dim(), 3);
        assert_eq!(s.a_d.dim(), 3);
        assert!(s.psi.is_unital() && s.psi.is_multiplicative());
        let a = corner_element(cr(0.0), &r_element(cr(0.0), cr(1.0)));
        let expected = corner_element(cr(0.0), &psi_small(cr(0.0), cr(1.0)));
        assert!(s.psi.apply(&a).unwrap().distance(&expected) < 1e-12);
        let id = ComplexMatrix::identity(4);
        assert!(s.psi.apply(&id).unwrap().distance(&id) < 1e-12);
        let mut rng = random::rng(2);
        for _ in 0..10 {
            let n = corner_element(cr(0.0), &r_element(random::complex_normal(&mut rng), random::complex_normal(&mut rng)));
            assert!((&n * &n).max_abs() < 1e-15);
        }
        let inv = s.psi.inverse().unwrap();
        assert!(inv.is_unital() && inv.is_multiplicative());
        for f in [&s.psi, &inv] {
            let est = cb_norm_estimate(f, 8, 1).unwrap();
            assert!(est.lower.is_finite() && est.lower >= 1.0);
        }
    }

    #[test]
    fn defect_examples() {
        let s = build_scene().unwrap();
        let i2 = ComplexMatrix::identity(2);
        let d = isometry_defect(&s, &i2, &i2, &i2, &i2, 16).unwrap();
        assert!(d >= 2f64.sqrt() - 1.0 - 1e-12);
        let at_one = isometry_defect_on(&i2, &i2, &i2, &i2, &[(cr(1.0), cr(1.0))]).unwrap();
        assert!((at_one - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        for c in [0.5, 0.9, 1.3] {
            let x = i2.scale_real(c);
            let d = isometry_defect(&s, &x, &x, &i2, &i2, 16).unwrap();
            assert!(d >= (c * c * 2f64.sqrt() - 1.0).abs() - 1e-12);
        }
        let slice: Vec<(C64, C64)> = (0..16).map(|k| (C64::from_polar(1.0 + k as f64 / 8.0, k as f64), cr(0.0))).collect();
        assert!(isometry_defect_on(&i2, &i2, &i2, &i2, &slice).unwrap() < 1e-15);
        let lower = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[1.0, 1.0]]);
        assert!(isometry_defect(&s, &lower, &i2, &i2, &i2, 8).is_err());
    }

    #[test]
    fn defect_is_phase_invariant() {
        let s = build_scene().unwrap();
        let mut rng = random::rng(12);
        let c: Vec<ComplexMatrix> = (0..4).map(|_| ut_from(&defect_start(&mut rng, 4.0))).collect();
        let d = isometry_defect(&s, &c[0], &c[1], &c[2], &c[3], 12).unwrap();
        let w = C64::from_polar(1.0, 0.7);
        let d2 = isometry_defect(&s, &c[0].scale(w), &c[1], &c[2], &c[3].scale(w.conj()), 12).unwrap();
        assert!((d - d2).abs() < 1e-12);
    }

    #[test]
    fn defect_minimize_with_unit_cap_keeps_the_gap() {
        let s = build_scene().unwrap();
        let r = defect_minimize(&s, 1.0, 4, 3, 12).unwrap();
        assert!(r.best_defect >= 0.41, "{}", r.best_defect);
        let again = defect_minimize(&s, 1.0, 4, 3, 12).unwrap();
        assert_eq!(r.best_defect.to_bits(), again.best_defect.to_bits());
    }

    #[test]
    fn defect_minimize_is_monotone_and_positive() {
        let s = build_scene().unwrap();
        let small = defect_minimize(&s, 10.0, 3, 5, 10).unwrap();
        let large = defect_minimize(&s, 10.0, 6, 5, 10).unwrap();
        assert!(large.best_defect <= small.best_defect);
        assert!(large.best_defect > 0.0);
        for m in &large.best_candidates {
            assert!(m.is_upper_triangular(0.0));
            assert!(m.condition().unwrap() <= 10.0 + 1e-9);
        }
    }
}
