//! Similarity constructions for completely bounded homomorphisms: the Paulsen
//! step, the alternating `X_n`/`Y_n` iteration with its norm chain, the
//! almost-isometric selection with its constants, and two diagnostics for
//! conjugation maps.
//!
//! The Paulsen step solves the semidefinite program of [`crate::sdp`] for
//! `P = X^* X`, takes the balanced square root, and then checks the
//! conjugated map with the cb search.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{assemble_block, block_diagonal, c64, cr, ComplexMatrix, C64};
use crate::operator_space::{search_all, CbLinearMap, Grid, LevelProblem, OperatorSubspace, ASCENT_ITERATION_CAP};
use crate::random;
use crate::sdp;

/// Tolerances and fixed constants used by the engine.
#[derive(Clone, Debug, Serialize)]
pub struct SimilarityTolerances {
    /// Allowed excess of the worst ratio over 1 for "completely contractive".
    pub contractive: f64,
    /// Allowed excess of `kappa(X)` over the target cb norm.
    pub kappa_slack: f64,
    /// Ratio excess below which the map is taken as already completely
    /// contractive and `X = I` is returned.
    pub polish: f64,
    /// Violation tolerance of the norm chain.
    pub chain: f64,
    /// Spectral radius below which an element counts as quasi-nilpotent.
    pub quasinilpotent: f64,
    /// Points per axis of the polar grid on the closed disc.
    pub polar_grid: usize,
    pub delta_halvings: usize,
    pub iteration_cap: usize,
}

impl Default for SimilarityTolerances {
    fn default() -> Self {
        Self {
            contractive: 1e-6,
            kappa_slack: 1e-3,
            polish: 1e-10,
            chain: 1e-9,
            quasinilpotent: 1e-10,
            polar_grid: 61,
            delta_halvings: 40,
            iteration_cap: 30,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimilarityStepResult {
    pub x: ComplexMatrix,
    /// Best ratio the search finds for the conjugated map.
    pub achieved_cb_bound: f64,
    pub kappa: f64,
    /// cb norm of the original map: the smallest `kappa` the semidefinite
    /// program admits, never below `search_lower`.
    pub target_cb: f64,
    /// Certified lower bound for the cb norm from the search.
    pub search_lower: f64,
    pub solver_iterations: usize,
    /// `X = Z W` with `W` the previous matrix of the same kind; `target_cb`
    /// is then only the search bound.
    pub preconditioned: bool,
}

fn best_run(runs: &[(f64, Vec<C64>)]) -> (f64, Vec<C64>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for (r, c) in runs {
        if *r > best.0 {
            best = (*r, c.clone());
        }
    }
    best
}

/// `X = P^{1/2}` rescaled so that `||X|| = ||X^{-1}||`.
fn balanced_root(p: &DMatrix<C64>) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let p = (p + p.adjoint()) * cr(0.5);
    balance(ComplexMatrix::from_dmatrix(p).hermitian_power(0.5)?)
}

/// `x` rescaled so that `||x|| = ||x^{-1}||`.
fn balance(x: ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let sv = x.singular_values();
    let (hi, lo) = (sv.iter().copied().fold(0.0, f64::max), sv.iter().copied().fold(f64::INFINITY, f64::min));
    let x = x.scale_real(1.0 / (hi * lo).sqrt());
    let xi = x.inverse()?;
    Ok((x, xi))
}

/// Ascent iterations per restart inside a similarity step; the program
/// already certifies the result, so the searches only cross-check it.
const STEP_ITERATION_CAP: usize = 60;

/// Extra program solves on the conjugated map when the verified ratio still
/// exceeds `1 + polish`.
const REFINE_ROUNDS: usize = 2;

/// Paulsen step for the map `domain[k] -> images[k]`. With `warm = (W, _)`
/// the images may be conjugated by `W` first, giving `X = Z W`; this is
/// tried when the program on the raw images breaks down, or straight away
/// when the flag is set.
fn paulsen_core(
    domain: &[DMatrix<C64>],
    images: &[DMatrix<C64>],
    budget: usize,
    seed: u64,
    tol: &SimilarityTolerances,
    warm: Option<(&ComplexMatrix, bool)>,
) -> Result<SimilarityStepResult> {
    let n = images[0].nrows();
    let base = LevelProblem::new(domain.to_vec(), images.to_vec(), n);
    let mut runs = search_all(&base, budget, random::derive_seed(seed, 0), &[], STEP_ITERATION_CAP);
    let lower = runs.iter().map(|r| r.0).fold(1.0, f64::max);
    if lower <= 1.0 + tol.polish {
        let x = ComplexMatrix::identity(n);
        return Ok(SimilarityStepResult {
            x,
            achieved_cb_bound: lower,
            kappa: 1.0,
            target_cb: lower,
            search_lower: lower,
            solver_iterations: 0,
            preconditioned: false,
        });
    }
    runs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let starts: Vec<Vec<C64>> = runs.iter().take(4).map(|r| r.1.clone()).collect();
    let certify = |pre: Option<&ComplexMatrix>| -> Result<SimilarityStepResult> {
        let (x, xi, target, iterations) = match pre {
            None => {
                let sol = sdp::similarity_program(domain, images)?;
                let (x, xi) = balanced_root(&sol.p)?;
                (x, xi, sol.spread.max(1.0).sqrt().max(lower), sol.iterations)
            }
            Some(w) => {
                let wi = w.inverse()?;
                let pre_images: Vec<DMatrix<C64>> =
                    images.iter().map(|m| w.as_dmatrix() * m * wi.as_dmatrix()).collect();
                let sol = sdp::similarity_program(domain, &pre_images)?;
                let (z, _) = balanced_root(&sol.p)?;
                let (x, xi) = balance(&z * w)?;
                (x, xi, lower, sol.iterations)
            }
        };
        let verify = |x: &ComplexMatrix, xi: &ComplexMatrix| {
            let conj = base.with_conjugated_images(x.as_dmatrix(), xi.as_dmatrix());
            best_run(&search_all(&conj, budget / 8, random::derive_seed(seed, 1), &starts, STEP_ITERATION_CAP)).0.max(1.0)
        };
        let (mut x, mut xi, mut r) = {
            let r = verify(&x, &xi);
            (x, xi, r)
        };
        let mut iterations = iterations;
        // solver error leaves a small excess; the program on the nearly
        // contractive conjugated map is well scaled and removes most of it
        for _ in 0..REFINE_ROUNDS {
            if r <= 1.0 + tol.polish {
                break;
            }
            let conj_images: Vec<DMatrix<C64>> = images.iter().map(|m| x.as_dmatrix() * m * xi.as_dmatrix()).collect();
            let Ok(sol) = sdp::similarity_program(domain, &conj_images) else { break };
            iterations += sol.iterations;
            let Ok((z, _)) = balanced_root(&sol.p) else { break };
            let Ok((x2, xi2)) = balance(&z * &x) else { break };
            let r2 = verify(&x2, &xi2);
            if r2 >= r {
                break;
            }
            (x, xi, r) = (x2, xi2, r2);
        }
        if r > 1.0 + tol.contractive {
            return Err(Error::OptimizerFailure { worst_ratio: r, iterations: iterations as usize, best: Box::new(x) });
        }
        let kappa = x.condition()?;
        Ok(SimilarityStepResult {
            x,
            achieved_cb_bound: r,
            kappa,
            target_cb: target,
            search_lower: lower,
            solver_iterations: iterations as usize,
            preconditioned: pre.is_some(),
        })
    };
    match warm {
        Some((w, true)) => certify(Some(w)),
        Some((w, false)) => certify(None).or_else(|_| certify(Some(w))),
        None => certify(None),
    }
}

/// Finds `X` such that `a -> X f(a) X^{-1}` is completely contractive with
/// `kappa(X)` within the slack of the estimated cb norm of `f`.
pub fn paulsen_step(f: &CbLinearMap, budget: usize, seed: u64) -> Result<SimilarityStepResult> {
    paulsen_step_with(f, budget, seed, &SimilarityTolerances::default())
}

pub fn paulsen_step_with(f: &CbLinearMap, budget: usize, seed: u64, tol: &SimilarityTolerances) -> Result<SimilarityStepResult> {
    if budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    if !f.is_unital() || !f.is_multiplicative() || !f.codomain().is_unital_algebra() {
        return Err(Error::invalid("the similarity step needs a unital homomorphism into a unital algebra"));
    }
    let dom: Vec<DMatrix<C64>> = f.domain().basis().iter().map(|b| b.as_dmatrix().clone()).collect();
    let img: Vec<DMatrix<C64>> = f.images().iter().map(|b| b.as_dmatrix().clone()).collect();
    paulsen_core(&dom, &img, budget, seed, tol, None)
}

fn as_dm(ms: &[ComplexMatrix]) -> Vec<DMatrix<C64>> {
    ms.iter().map(|m| m.as_dmatrix().clone()).collect()
}

fn conj_all(x: &ComplexMatrix, xi: &ComplexMatrix, ms: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    ms.iter().map(|m| x.conjugate_with(xi, m)).collect()
}

/// Norm of `(I ⊗ X) A (I ⊗ X^{-1})` for an assembled block `A`.
fn conj_block_norm(x: &ComplexMatrix, xi: &ComplexMatrix, a: &ComplexMatrix) -> f64 {
    let d = a.rows() / x.rows();
    (&block_diagonal(x, d) * a * &block_diagonal(xi, d)).op_norm()
}

/// Points of the polar grid on the closed unit disc: radii `i/(m-1)` and
/// angles `2 pi j / m`.
pub fn polar_grid(m: usize) -> Vec<C64> {
    let mut pts = Vec::with_capacity(m * m);
    for i in 0..m {
        let r = i as f64 / (m - 1) as f64;
        for j in 0..m {
            let t = std::f64::consts::TAU * j as f64 / m as f64;
            pts.push(c64(r * t.cos(), r * t.sin()));
        }
    }
    pts
}

/// `f(lambda) = ||X (a + lambda I) X^{-1}||` over `grid`.
pub fn f_table(x: &ComplexMatrix, xi: &ComplexMatrix, a: &ComplexMatrix, grid: &[C64]) -> Vec<f64> {
    let b = x.conjugate_with(xi, a);
    grid.iter().map(|&l| b.shift(l).op_norm()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct StepSummary {
    /// `"Y"` or `"X"`.
    pub kind: &'static str,
    pub index: usize,
    pub target_cb: f64,
    pub achieved_cb_bound: f64,
    pub kappa: f64,
    pub solver_iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationTrace {
    pub x_seq: Vec<ComplexMatrix>,
    pub y_seq: Vec<ComplexMatrix>,
    /// Per probe: `||A||, ||Y_1 Phi(A) Y_1^{-1}||, ||X_1 A X_1^{-1}||, ...`
    pub chain: Vec<Vec<f64>>,
    pub steps: Vec<StepSummary>,
    /// Sup over elements and grid of `f_n - f_{n+1}`, one entry per
    /// consecutive pair.
    pub f_gaps: Vec<f64>,
    /// `[element][n][grid point]` values of `f_n`.
    #[serde(skip)]
    pub f_grid: Vec<Vec<Vec<f64>>>,
}

impl IterationTrace {
    /// Largest increase between consecutive chain entries over all probes.
    pub fn chain_violation(&self) -> f64 {
        self.chain
            .iter()
            .flat_map(|c| c.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest pointwise increase of `f_n` in `n`.
    pub fn f_grid_violation(&self) -> f64 {
        self.f_grid
            .iter()
            .flat_map(|rows| rows.windows(2).flat_map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Failure partway through the iteration, with everything computed so far.
#[derive(Debug, thiserror::Error)]
#[error("{source} (after {} similarity steps)", partial.steps.len())]
pub struct PartialTrace {
    pub source: Error,
    pub partial: Box<IterationTrace>,
}

struct XyEngine {
    dom: Vec<ComplexMatrix>,
    img: Vec<ComplexMatrix>,
    budget: usize,
    seed: u64,
    tol: SimilarityTolerances,
    probes: Vec<(ComplexMatrix, ComplexMatrix)>,
    elements: Vec<ComplexMatrix>,
    grid: Vec<C64>,
    trace: IterationTrace,
    /// Set once a step needed the preconditioned route.
    prefer_warm: bool,
}

impl XyEngine {
    fn new(
        phi: &CbLinearMap,
        probes: &[Grid],
        elements: &[ComplexMatrix],
        budget: usize,
        seed: u64,
        tol: &SimilarityTolerances,
    ) -> Result<Self> {
        if !phi.is_unital() || !phi.is_multiplicative() {
            return Err(Error::invalid("iteration needs a unital homomorphism"));
        }
        phi.inverse()?;
        let mut prepared = Vec::with_capacity(probes.len());
        for p in probes {
            let a = assemble_block(p)?;
            if a.op_norm() == 0.0 {
                return Err(Error::invalid("probe blocks must be nonzero"));
            }
            let fa = assemble_block(&phi.apply_level(p)?)?;
            prepared.push((a, fa));
        }
        for e in elements {
            phi.domain().coordinates(e)?;
        }
        let chain = prepared.iter().map(|(a, _)| vec![a.op_norm()]).collect();
        Ok(Self {
            dom: phi.domain().basis().to_vec(),
            img: phi.images().to_vec(),
            budget,
            seed,
            tol: tol.clone(),
            probes: prepared,
            elements: elements.to_vec(),
            grid: polar_grid(tol.polar_grid),
            prefer_warm: false,
            trace: IterationTrace {
                x_seq: Vec::new(),
                y_seq: Vec::new(),
                chain,
                steps: Vec::new(),
                f_gaps: Vec::new(),
                f_grid: vec![Vec::new(); elements.len()],
            },
        })
    }

    fn step_seed(&self) -> u64 {
        random::derive_seed(self.seed, 1000 + self.trace.steps.len() as u64)
    }

    /// `Y_{n+1}` from `X_n` (or `Y_1` from `phi`).
    fn next_y(&mut self) -> Result<()> {
        let dom = match self.trace.x_seq.last() {
            Some(x) => conj_all(x, &x.inverse()?, &self.dom),
            None => self.dom.clone(),
        };
        let warm = self.trace.y_seq.last().cloned();
        let warm = warm.as_ref().map(|w| (w, self.prefer_warm));
        let res = paulsen_core(&as_dm(&dom), &as_dm(&self.img), self.budget, self.step_seed(), &self.tol, warm)?;
        self.prefer_warm |= res.preconditioned;
        let yi = res.x.inverse()?;
        for ((_, fa), chain) in self.probes.iter().zip(&mut self.trace.chain) {
            chain.push(conj_block_norm(&res.x, &yi, fa));
        }
        self.record("Y", &res);
        self.trace.y_seq.push(res.x);
        Ok(())
    }

    /// `X_n` from `Y_n`.
    fn next_x(&mut self) -> Result<()> {
        let y = self.trace.y_seq.last().expect("Y_n precedes X_n").clone();
        let dom = conj_all(&y, &y.inverse()?, &self.img);
        let warm = self.trace.x_seq.last().cloned();
        let warm = warm.as_ref().map(|w| (w, self.prefer_warm));
        let res = paulsen_core(&as_dm(&dom), &as_dm(&self.dom), self.budget, self.step_seed(), &self.tol, warm)?;
        self.prefer_warm |= res.preconditioned;
        let xi = res.x.inverse()?;
        for ((a, _), chain) in self.probes.iter().zip(&mut self.trace.chain) {
            chain.push(conj_block_norm(&res.x, &xi, a));
        }
        let mut gap = f64::NEG_INFINITY;
        for (e, rows) in self.elements.iter().zip(&mut self.trace.f_grid) {
            let table = f_table(&res.x, &xi, e, &self.grid);
            if let Some(prev) = rows.last() {
                gap = gap.max(prev.iter().zip(&table).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max));
            }
            rows.push(table);
        }
        if self.trace.x_seq.len() >= 1 && !self.elements.is_empty() {
            self.trace.f_gaps.push(gap);
        }
        self.record("X", &res);
        self.trace.x_seq.push(res.x);
        Ok(())
    }

    fn record(&mut self, kind: &'static str, res: &SimilarityStepResult) {
        let index = if kind == "Y" { self.trace.y_seq.len() + 1 } else { self.trace.x_seq.len() + 1 };
        self.trace.steps.push(StepSummary {
            kind,
            index,
            target_cb: res.target_cb,
            achieved_cb_bound: res.achieved_cb_bound,
            kappa: res.kappa,
            solver_iterations: res.solver_iterations,
        });
    }

    fn fail(self, source: Error) -> PartialTrace {
        PartialTrace { source, partial: Box::new(self.trace) }
    }
}

/// Runs `n_max` rounds of the alternating construction: `Y_n` makes
/// `X_{n-1} a X_{n-1}^{-1} -> Y_n phi(a) Y_n^{-1}` completely contractive and
/// `X_n` makes `Y_n phi(a) Y_n^{-1} -> X_n a X_n^{-1}` completely contractive.
/// The chain is recorded on every probe and `f_n` on every element of
/// `elements`.
pub fn iterate_xy(
    phi: &CbLinearMap,
    probes: &[Grid],
    elements: &[ComplexMatrix],
    n_max: usize,
    budget: usize,
    seed: u64,
    tol: &SimilarityTolerances,
) -> std::result::Result<IterationTrace, PartialTrace> {
    if n_max == 0 || budget == 0 {
        return Err(PartialTrace {
            source: Error::invalid("n_max and budget must be at least 1"),
            partial: Box::new(IterationTrace {
                x_seq: vec![],
                y_seq: vec![],
                chain: vec![],
                steps: vec![],
                f_gaps: vec![],
                f_grid: vec![],
            }),
        });
    }
    let mut engine = XyEngine::new(phi, probes, elements, budget, seed, tol).map_err(|e| PartialTrace {
        source: e,
        partial: Box::new(IterationTrace { x_seq: vec![], y_seq: vec![], chain: vec![], steps: vec![], f_gaps: vec![], f_grid: vec![] }),
    })?;
    for _ in 0..n_max {
        if let Err(e) = engine.next_y() {
            return Err(engine.fail(e));
        }
        if let Err(e) = engine.next_x() {
            return Err(engine.fail(e));
        }
    }
    Ok(engine.trace)
}

/// Seeded probe blocks at level `d` over `space`, each of norm one.
pub fn random_probes(space: &OperatorSubspace, count: usize, d: usize, seed: u64) -> Vec<Grid> {
    let mut rng = random::rng(seed);
    let k = space.dim();
    (0..count)
        .map(|_| {
            let g: Grid = (0..d)
                .map(|_| {
                    (0..d)
                        .map(|_| {
                            let c: Vec<C64> = (0..k).map(|_| random::complex_normal(&mut rng)).collect();
                            space.combine(&c)
                        })
                        .collect()
                })
                .collect();
            let s = assemble_block(&g).expect("square grid").op_norm();
            g.into_iter().map(|row| row.into_iter().map(|m| m.scale_real(1.0 / s)).collect()).collect()
        })
        .collect()
}

/// Unimodular `zeta` aligned with a largest-modulus eigenvalue of `a`, so that
/// `r(a + delta zeta I) = r(a) + delta`; `1` when `a` is quasi-nilpotent.
pub fn select_zeta(a: &ComplexMatrix, _delta: f64) -> Result<C64> {
    let eig = a.eigenvalues()?;
    let top = eig.into_iter().fold(cr(0.0), |b, z| if z.norm() > b.norm() { z } else { b });
    Ok(if top.norm() == 0.0 { cr(1.0) } else { top / top.norm() })
}

#[derive(Clone, Debug, Serialize)]
pub struct ZetaEntry {
    pub element: usize,
    pub zeta: [f64; 2],
    pub shifted_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlmostIsometryReport {
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub zeta: Vec<ZetaEntry>,
    pub rho: f64,
    pub sigma: f64,
    pub bound_factor: f64,
    /// `true` when no element is quasi-nilpotent and `delta = 0`.
    pub sharp_branch: bool,
    pub halvings: usize,
    /// `||X a X^{-1}|| / ||Y phi(a) Y^{-1}||` per element.
    pub measured_ratios: Vec<f64>,
    pub bound_holds: Vec<bool>,
    /// Worst ratio the search finds for `X a X^{-1} -> Y phi(a) Y^{-1}`.
    pub contractive_ratio: f64,
    pub f_gaps: Vec<f64>,
    pub steps: Vec<StepSummary>,
}

/// Iterates until consecutive `f_n` tables differ by less than `epsilon`
/// everywhere on the polar grid, then fixes `X = X_N`, `Y = Y_{N+1}` and
/// computes `delta`, `zeta_a`, `rho`, `sigma` and the bound factor.
pub fn almost_isometric(
    phi: &CbLinearMap,
    elements: &[ComplexMatrix],
    epsilon: f64,
    budget: usize,
    seed: u64,
    tol: &SimilarityTolerances,
) -> std::result::Result<AlmostIsometryReport, PartialTrace> {
    let bare = |e: Error| PartialTrace {
        source: e,
        partial: Box::new(IterationTrace { x_seq: vec![], y_seq: vec![], chain: vec![], steps: vec![], f_gaps: vec![], f_grid: vec![] }),
    };
    if !(epsilon > 0.0) || elements.is_empty() || budget == 0 {
        return Err(bare(Error::invalid("need epsilon > 0, a nonempty element list and budget >= 1")));
    }
    if elements.iter().any(|a| a.op_norm() == 0.0) {
        return Err(bare(Error::invalid("elements must be nonzero")));
    }
    let mut engine = XyEngine::new(phi, &[], elements, budget, seed, tol).map_err(bare)?;
    macro_rules! attempt {
        ($e:expr) => {
            if let Err(err) = $e {
                return Err(engine.fail(err));
            }
        };
    }
    attempt!(engine.next_y());
    attempt!(engine.next_x());
    let mut n_final = None;
    for n in 1..=tol.iteration_cap {
        attempt!(engine.next_y());
        attempt!(engine.next_x());
        if *engine.trace.f_gaps.last().expect("gap recorded") < epsilon {
            n_final = Some(n);
            break;
        }
    }
    let Some(n) = n_final else {
        let last_gap = engine.trace.f_gaps.last().copied().unwrap_or(f64::INFINITY);
        return Err(engine.fail(Error::NonConvergence { cap: tol.iteration_cap, last_gap }));
    };
    let x = engine.trace.x_seq[n - 1].clone();
    let y = engine.trace.y_seq[n].clone();
    match certificate(phi, elements, epsilon, n, &x, &y, budget, seed, tol) {
        Ok(mut report) => {
            report.f_gaps = engine.trace.f_gaps.clone();
            report.steps = engine.trace.steps.clone();
            Ok(report)
        }
        Err(e) => Err(engine.fail(e)),
    }
}

#[allow(clippy::too_many_arguments)]
fn certificate(
    phi: &CbLinearMap,
    elements: &[ComplexMatrix],
    epsilon: f64,
    n: usize,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    budget: usize,
    seed: u64,
    tol: &SimilarityTolerances,
) -> Result<AlmostIsometryReport> {
    let xi = x.inverse()?;
    let yi = y.inverse()?;
    let images = elements.iter().map(|a| phi.apply(a)).collect::<Result<Vec<_>>>()?;
    let xa: Vec<ComplexMatrix> = elements.iter().map(|a| x.conjugate_with(&xi, a)).collect();
    let yfa: Vec<ComplexMatrix> = images.iter().map(|b| y.conjugate_with(&yi, b)).collect();
    let radii = elements.iter().map(|a| a.spectral_radius()).collect::<Result<Vec<_>>>()?;
    let sharp = radii.iter().all(|&r| r > tol.quasinilpotent);

    let (delta, zetas, sigma, halvings) = if sharp {
        (0.0, vec![cr(1.0); elements.len()], 1.0, 0)
    } else {
        let zetas = elements.iter().map(|a| select_zeta(a, 0.5)).collect::<Result<Vec<_>>>()?;
        let mut delta = 0.5;
        let mut halvings = 0;
        loop {
            let mut sup = f64::NEG_INFINITY;
            let mut inf = f64::INFINITY;
            for i in 0..elements.len() {
                let s = zetas[i] * delta;
                sup = sup.max(yfa[i].shift(s).op_norm() / yfa[i].op_norm());
                inf = inf.min(xa[i].shift(s).op_norm() / xa[i].op_norm());
            }
            let sigma = sup / inf;
            if sigma < 1.0 + epsilon {
                break (delta, zetas, sigma, halvings);
            }
            if halvings == tol.delta_halvings {
                return Err(Error::DeltaSearchExhausted { halvings, last_sigma: sigma });
            }
            delta *= 0.5;
            halvings += 1;
        }
    };
    let shifted = elements
        .iter()
        .zip(&zetas)
        .map(|(a, z)| a.shift(z * delta).spectral_radius())
        .collect::<Result<Vec<_>>>()?;
    let rho = shifted.iter().copied().fold(f64::INFINITY, f64::min);
    let bound_factor = if sharp { 1.0 + epsilon / rho } else { (1.0 + epsilon) * (1.0 + epsilon / rho) };
    let measured: Vec<f64> = xa.iter().zip(&yfa).map(|(l, r)| l.op_norm() / r.op_norm()).collect();
    let bound_holds = xa.iter().zip(&yfa).map(|(l, r)| l.op_norm() <= bound_factor * r.op_norm() + 1e-9).collect();

    let dom = conj_all(x, &xi, phi.domain().basis());
    let img = conj_all(y, &yi, phi.images());
    let problem = LevelProblem::new(as_dm(&dom), as_dm(&img), phi.codomain().ambient_dim());
    let runs = search_all(&problem, budget, random::derive_seed(seed, 7), &[], ASCENT_ITERATION_CAP);
    let contractive_ratio = best_run(&runs).0;

    Ok(AlmostIsometryReport {
        x: x.clone(),
        y: y.clone(),
        epsilon,
        n,
        delta,
        zeta: zetas
            .iter()
            .zip(&shifted)
            .enumerate()
            .map(|(i, (z, r))| ZetaEntry { element: i, zeta: [z.re, z.im], shifted_radius: *r })
            .collect(),
        rho,
        sigma,
        bound_factor,
        sharp_branch: sharp,
        halvings,
        measured_ratios: measured,
        bound_holds,
        contractive_ratio,
        f_gaps: Vec::new(),
        steps: Vec::new(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ClbpDefect {
    pub ratio: f64,
    pub cb_est: f64,
    pub kappa: f64,
}

/// `||a -> X a X^{-1}||_cb / kappa(X)` on `alg`, with the cb norm estimated
/// from below.
pub fn clbp_defect(x: &ComplexMatrix, alg: &OperatorSubspace, budget: usize, seed: u64) -> Result<ClbpDefect> {
    if !alg.is_unital_algebra() {
        return Err(Error::invalid("clbp_defect needs a unital algebra"));
    }
    let kappa = x.condition()?;
    let f = CbLinearMap::conjugation(alg, x)?;
    let est = crate::operator_space::cb_norm_estimate(&f, budget, seed)?;
    Ok(ClbpDefect { ratio: est.lower / kappa, cb_est: est.lower, kappa })
}

#[derive(Clone, Debug, Serialize)]
pub struct JointSimilarity {
    pub forward_ok: bool,
    pub adjoint_ok: bool,
    pub norm_recovered: bool,
    pub forward_ratio: f64,
    pub adjoint_ratio: f64,
    /// Largest `| ||(theta(t_ij))|| - ||(t_ij)|| |` over the probes.
    pub probe_deviation: f64,
}

/// Checks that `t -> Z theta(t) Z^{-1}` and `t -> Z theta*(t) Z^{-1}` are both
/// completely contractive and, if so, that `theta` preserves the norms of
/// seeded probe blocks.
pub fn verify_joint_similarity(z: &ComplexMatrix, theta: &CbLinearMap, budget: usize, seed: u64) -> Result<JointSimilarity> {
    let tol = SimilarityTolerances::default();
    let zi = z.inverse()?;
    let ratio = |map: &CbLinearMap, stream: u64| -> f64 {
        let problem = map.level_problem(map.cb_level()).with_conjugated_images(z.as_dmatrix(), zi.as_dmatrix());
        best_run(&search_all(&problem, budget, random::derive_seed(seed, stream), &[], ASCENT_ITERATION_CAP)).0
    };
    let forward_ratio = ratio(theta, 1);
    let adjoint_ratio = ratio(&theta.adjoint_map()?, 2);
    let forward_ok = forward_ratio <= 1.0 + tol.contractive;
    let adjoint_ok = adjoint_ratio <= 1.0 + tol.contractive;
    let mut probe_deviation = 0.0_f64;
    for (i, probe) in random_probes(theta.domain(), 8, theta.cb_level(), random::derive_seed(seed, 3)).iter().enumerate() {
        let scale = 1.0 + i as f64;
        let lhs = assemble_block(&theta.apply_level(probe)?)?.op_norm() * scale;
        let rhs = assemble_block(probe)?.op_norm() * scale;
        probe_deviation = probe_deviation.max((lhs - rhs).abs());
    }
    let norm_recovered = forward_ok && adjoint_ok && probe_deviation <= tol.contractive;
    Ok(JointSimilarity { forward_ok, adjoint_ok, norm_recovered, forward_ratio, adjoint_ratio, probe_deviation })
}

/// Random unit-norm element of `space`.
pub fn random_element<R: Rng + ?Sized>(rng: &mut R, space: &OperatorSubspace) -> ComplexMatrix {
    let c: Vec<C64> = (0..space.dim()).map(|_| random::complex_normal(rng)).collect();
    let m = space.combine(&c);
    let s = m.op_norm();
    m.scale_real(1.0 / s)
}
