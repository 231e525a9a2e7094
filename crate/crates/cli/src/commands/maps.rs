use serde::Deserialize;
use serde_json::{json, Value};

use cbsim::counterexample::{corner_element, r_element};
use cbsim::operator_space::{cb_norm_estimate, CbLinearMap, OperatorSubspace};
use cbsim::similarity::{almost_isometric, clbp_defect, iterate_xy, paulsen_step_with, random_probes};
use cbsim::{cr, random, ComplexMatrix};

use super::{Command, MapSpec, Outcome};
use crate::config::{invalid, parse, Context};

pub struct CbNorm;

impl Command for CbNorm {
    fn name(&self) -> &'static str {
        "cbnorm"
    }

    fn default_budget(&self) -> usize {
        32
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let spec: MapSpec = parse(input)?;
        let f = spec.build()?;
        let est = cb_norm_estimate(&f, ctx.budget, ctx.seed)?;
        let cc = est.lower <= 1.0 + ctx.tol.contractive;
        let summary = format!("cb norm >= {:.12} at level {}", est.lower, est.level_used);
        Ok(Outcome::ok(json!({ "estimate": est, "completely_contractive": cc }), summary))
    }
}

pub struct Paulsen;

impl Command for Paulsen {
    fn name(&self) -> &'static str {
        "paulsen"
    }

    fn default_budget(&self) -> usize {
        16
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let spec: MapSpec = parse(input)?;
        let f = spec.build()?;
        let res = paulsen_step_with(&f, ctx.budget, ctx.seed, &ctx.tol.similarity(ctx.grid))?;
        let summary = format!("kappa(X) = {:.9}, worst ratio {:.12}", res.kappa, res.achieved_cb_bound);
        Ok(Outcome::ok(serde_json::to_value(&res)?, summary))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IterateInput {
    #[serde(default)]
    scene: Option<String>,
    #[serde(default)]
    map: Option<CbLinearMap>,
    #[serde(default = "five")]
    probes: usize,
    #[serde(default = "two")]
    probe_level: usize,
    #[serde(default = "four")]
    n_max: usize,
    #[serde(default)]
    elements: Vec<ComplexMatrix>,
}

fn two() -> usize {
    2
}

fn four() -> usize {
    4
}

fn five() -> usize {
    5
}

pub struct Iterate;

impl Command for Iterate {
    fn name(&self) -> &'static str {
        "iterate"
    }

    fn default_budget(&self) -> usize {
        32
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let inp: IterateInput = parse(input)?;
        if inp.n_max == 0 || inp.probe_level == 0 {
            return Err(invalid("n_max and probe_level must be at least 1"));
        }
        let phi = MapSpec { scene: inp.scene, map: inp.map }.build()?;
        let probes = random_probes(phi.domain(), inp.probes, inp.probe_level, random::derive_seed(ctx.seed, 1));
        let tol = ctx.tol.similarity(ctx.grid);
        let (trace, failure) = match iterate_xy(&phi, &probes, &inp.elements, inp.n_max, ctx.budget, ctx.seed, &tol) {
            Ok(t) => (t, None),
            Err(p) => {
                if super::engine_exit_code(&p.source) == 2 {
                    return Err(p.source.into());
                }
                (*p.partial, Some(p.source.to_string()))
            }
        };
        let violation = trace.chain_violation();
        let result = json!({
            "chain": trace.chain,
            "chain_violation": violation,
            "chain_ok": violation <= tol.chain,
            "steps": trace.steps,
            "f_gaps": trace.f_gaps,
            "x_seq": trace.x_seq,
            "y_seq": trace.y_seq,
        });
        let summary = format!("{} steps, chain violation {violation:e}", trace.steps.len());
        Ok(Outcome { result, summary, failure, csv: None })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlmostInput {
    #[serde(default)]
    scene: Option<String>,
    #[serde(default)]
    map: Option<CbLinearMap>,
    /// Defaults to three corner elements when the scene is used.
    #[serde(default)]
    elements: Option<Vec<ComplexMatrix>>,
    epsilon: f64,
}

/// Three nonscalar elements of the scene's domain algebra.
pub fn scene_elements() -> Vec<ComplexMatrix> {
    [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        .iter()
        .map(|&(a, b)| corner_element(cr(0.0), &r_element(cr(a), cr(b))))
        .collect()
}

pub struct AlmostIsometric;

impl Command for AlmostIsometric {
    fn name(&self) -> &'static str {
        "almost-isometric"
    }

    fn default_budget(&self) -> usize {
        8
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let inp: AlmostInput = parse(input)?;
        let spec = MapSpec { scene: inp.scene, map: inp.map };
        let elements = match (inp.elements, spec.scene.is_some()) {
            (Some(e), _) => e,
            (None, true) => scene_elements(),
            (None, false) => return Err(invalid("elements are required unless the scene is used")),
        };
        let phi = spec.build()?;
        let tol = ctx.tol.similarity(ctx.grid);
        match almost_isometric(&phi, &elements, inp.epsilon, ctx.budget, ctx.seed, &tol) {
            Ok(rep) => {
                let summary = format!("N = {}, delta = {:e}, sigma = {:.9}, rho = {:.6}", rep.n, rep.delta, rep.sigma, rep.rho);
                Ok(Outcome::ok(serde_json::to_value(&rep)?, summary))
            }
            Err(p) => {
                if super::engine_exit_code(&p.source) == 2 {
                    return Err(p.source.into());
                }
                let result = json!({ "partial_steps": p.partial.steps, "f_gaps": p.partial.f_gaps });
                Ok(Outcome { result, summary: String::new(), failure: Some(p.source.to_string()), csv: None })
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClbpInput {
    /// `full`, `scalars`, `diagonal`, or `basis` with an explicit basis.
    algebra: String,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    basis: Option<Vec<ComplexMatrix>>,
    /// Conjugating matrix; drawn from the seed when absent.
    #[serde(default)]
    x: Option<ComplexMatrix>,
    /// Condition bound for a drawn `x`.
    #[serde(default)]
    max_condition: Option<f64>,
}

pub struct Clbp;

impl Command for Clbp {
    fn name(&self) -> &'static str {
        "clbp"
    }

    fn default_budget(&self) -> usize {
        64
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let inp: ClbpInput = parse(input)?;
        let n = match (&inp.x, &inp.basis, inp.n) {
            (_, _, Some(n)) => n,
            (Some(x), _, None) => x.rows(),
            (None, Some(b), None) => b.first().map(|m| m.rows()).ok_or_else(|| invalid("basis must be non-empty"))?,
            (None, None, None) => return Err(invalid("give n, x or basis")),
        };
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let alg = match inp.algebra.as_str() {
            "full" => OperatorSubspace::full_matrix_algebra(n),
            "scalars" => OperatorSubspace::scalars(n),
            "diagonal" => OperatorSubspace::diagonal_algebra(n),
            "basis" => OperatorSubspace::new(inp.basis.clone().ok_or_else(|| invalid("algebra 'basis' needs a basis"))?, true)?,
            other => return Err(invalid(format!("unknown algebra '{other}' (known: full, scalars, diagonal, basis)"))),
        };
        if alg.ambient_dim() != n {
            return Err(invalid("n does not match the algebra"));
        }
        let x = match inp.x {
            Some(x) => x,
            None => {
                let cap = inp.max_condition.unwrap_or(10.0);
                if !(cap >= 1.0) {
                    return Err(invalid("max_condition must be at least 1"));
                }
                random::random_invertible(&mut random::rng(random::derive_seed(ctx.seed, 2)), n, cap)
            }
        };
        if x.rows() != n || x.cols() != n {
            return Err(invalid(format!("x must be {n}x{n}")));
        }
        let d = clbp_defect(&x, &alg, ctx.budget, ctx.seed)?;
        let summary = format!("ratio {:.9} (cb >= {:.9}, kappa {:.9})", d.ratio, d.cb_est, d.kappa);
        Ok(Outcome::ok(json!({ "x": x, "defect": d }), summary))
    }
}
