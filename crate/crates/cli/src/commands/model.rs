use serde::Deserialize;
use serde_json::{json, Value};

use cbsim::model::{
    blaschke_factor, carleson_delta, sandwich, eval_map_bounds, functional_calculus, model_operator, quasinilpotent_sweep, quotient_norm_level, vasyunin_similarity,
    BlaschkeProduct, PolyGrid,
};

use super::{poly, Command, CsvTable, Outcome, Pair};
use crate::config::{parse, Context};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelInput {
    theta: BlaschkeProduct,
    /// Polynomials as `[re, im]` coefficient lists, constant term first.
    #[serde(default = "default_polys")]
    polynomials: Vec<Vec<Pair>>,
    #[serde(default)]
    grids: Vec<Vec<Vec<Vec<Pair>>>>,
}

fn default_polys() -> Vec<Vec<Pair>> {
    vec![vec![[0.0, 0.0], [1.0, 0.0]]]
}

fn to_grid(g: &[Vec<Vec<Pair>>]) -> PolyGrid {
    g.iter().map(|row| row.iter().map(|u| poly(u)).collect()).collect()
}

fn pairs(z: &[cbsim::C64]) -> Vec<Pair> {
    z.iter().map(|c| [c.re, c.im]).collect()
}

pub struct Model;

impl Command for Model {
    fn name(&self) -> &'static str {
        "model"
    }

    fn default_budget(&self) -> usize {
        1
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let inp: ModelInput = parse(input)?;
        let m = model_operator(&inp.theta)?;
        let eigenvalues = m.s.eigenvalues()?;
        let theta_norm = m.theta_at_s()?.op_norm();
        let mut polys = Vec::with_capacity(inp.polynomials.len());
        for p in &inp.polynomials {
            let u = poly(p);
            let us = functional_calculus(&u, &m);
            let spectrum = cbsim::model::spectrum_quotient(&u, &inp.theta)?;
            let radius = spectrum.iter().map(|z| z.norm()).fold(0.0, f64::max);
            polys.push(json!({
                "u": p,
                "norm": us.op_norm(),
                "spectrum": pairs(&spectrum),
                "spectral_radius": radius,
                "quasinilpotent": radius <= ctx.tol.quasinilpotent,
            }));
        }
        let grids = inp
            .grids
            .iter()
            .map(|g| {
                quotient_norm_level(&to_grid(g), &m)
            })
            .collect::<cbsim::Result<Vec<f64>>>()?;
        let sweep = quasinilpotent_sweep(&inp.theta, ctx.tol.quasinilpotent)?;
        let summary = format!(
            "degree {}, ||S|| = {:.12}, ||theta(S)|| = {:e}, {} nontrivial quasi-nilpotent classes",
            inp.theta.degree(),
            m.s.op_norm(),
            theta_norm,
            sweep.len()
        );
        let result = json!({
            "s": m.s,
            "s_norm": m.s.op_norm(),
            "gram_condition": m.gram_condition,
            "eigenvalues": pairs(&eigenvalues),
            "theta_at_s_norm": theta_norm,
            "polynomials": polys,
            "grid_norms": grids,
            "quasinilpotent_classes": sweep.iter().map(|c| json!({
                "u": pairs(&c.u),
                "norm": c.norm,
                "spectral_radius": c.spectral_radius,
            })).collect::<Vec<_>>(),
        });
        let rows = inp
            .theta
            .roots()
            .iter()
            .map(|&(root, mult)| {
                let nearest = eigenvalues.iter().map(|e| (e - root).norm()).fold(f64::INFINITY, f64::min);
                vec![root.re.to_string(), root.im.to_string(), mult.to_string(), nearest.to_string()]
            })
            .collect();
        let csv = CsvTable { header: ["re", "im", "mult", "eigenvalue_distance"].map(String::from).to_vec(), rows };
        Ok(Outcome { result, summary, failure: None, csv: Some(csv) })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CarlesonInput {
    theta: BlaschkeProduct,
    #[serde(default = "unit_and_z")]
    polynomials: Vec<Vec<Pair>>,
    /// Extra matrix-level polynomial grids for the sandwich check.
    #[serde(default)]
    grids: Vec<Vec<Vec<Vec<Pair>>>>,
}

fn unit_and_z() -> Vec<Vec<Pair>> {
    vec![vec![[1.0, 0.0]], vec![[0.0, 0.0], [1.0, 0.0]]]
}

pub struct Carleson;

impl Command for Carleson {
    fn name(&self) -> &'static str {
        "carleson"
    }

    fn default_budget(&self) -> usize {
        16
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let inp: CarlesonInput = parse(input)?;
        let delta = carleson_delta(&inp.theta)?;
        let vas = vasyunin_similarity(&inp.theta)?;
        let bounds = inp
            .polynomials
            .iter()
            .map(|p| eval_map_bounds(&poly(p), &inp.theta, ctx.budget, ctx.seed))
            .collect::<cbsim::Result<Vec<_>>>()?;
        let m = model_operator(&inp.theta)?;
        let level_one = inp.polynomials.iter().map(|p| vec![vec![poly(p)]]);
        let grids: Vec<PolyGrid> = level_one.chain(inp.grids.iter().map(|g| to_grid(g))).collect();
        let sandwich = grids
            .iter()
            .map(|g| sandwich(g, &m, vas.delta_bound, ctx.tol.sandwich))
            .collect::<cbsim::Result<Vec<_>>>()?;
        let all_hold = sandwich.iter().all(|c| c.holds);

        let roots = inp.theta.flat_roots();
        let rows = roots
            .iter()
            .enumerate()
            .map(|(n, &l)| {
                let product: f64 =
                    roots.iter().enumerate().filter(|(k, _)| *k != n).map(|(_, &lk)| blaschke_factor(lk, l).norm()).product();
                [l.re, l.im, product, delta, vas.kappa, vas.delta_bound].map(|x| x.to_string()).to_vec()
            })
            .collect();
        let csv = CsvTable { header: ["re", "im", "product", "delta", "kappa", "delta_bound"].map(String::from).to_vec(), rows };
        let summary = format!("delta = {delta}, kappa(V) = {:.9}, sandwich {}", vas.kappa, if all_hold { "holds" } else { "FAILS" });
        let result = json!({
            "delta": delta,
            "vasyunin": vas,
            "sandwich": sandwich,
            "sandwich_holds": all_hold,
            "eval_map": bounds.iter().zip(&inp.polynomials).map(|(b, p)| json!({ "u": p, "bounds": b })).collect::<Vec<_>>(),
        });
        Ok(Outcome { result, summary, failure: None, csv: Some(csv) })
    }
}
