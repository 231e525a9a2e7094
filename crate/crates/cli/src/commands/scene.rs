use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cbsim::counterexample::{
    build_scene, defect_minimize, isometry_defect, isometry_defect_on, lemma_diag_check, lemma_rel_check, RelationCheck, UTParams,
};
use cbsim::{cr, ComplexMatrix};

use super::{Command, Outcome};
use crate::config::{invalid, parse, Context};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CounterexampleInput {
    #[serde(default = "ten")]
    kappa_cap: f64,
    /// Parameter sets for the lemma checks.
    #[serde(default)]
    lemma: Vec<UTParams>,
    /// `[X1, X2, Y1, Y2]` to evaluate besides the search.
    #[serde(default)]
    candidates: Option<Vec<ComplexMatrix>>,
    #[serde(default = "yes")]
    search: bool,
}

fn ten() -> f64 {
    10.0
}

fn yes() -> bool {
    true
}

#[derive(Serialize)]
struct LemmaEntry {
    params: UTParams,
    relations: Option<RelationCheck>,
    diagonal_ok: Option<bool>,
    note: Option<String>,
}

pub struct Counterexample;

impl Command for Counterexample {
    fn name(&self) -> &'static str {
        "counterexample"
    }

    fn default_budget(&self) -> usize {
        200
    }

    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome> {
        let inp: CounterexampleInput = parse(input)?;
        let density = ctx.grid.unwrap_or(8);
        let scene = build_scene()?;
        let digest = Sha256::digest(serde_json::to_string(&scene)?.as_bytes());
        let scene_hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();

        let id = ComplexMatrix::identity(2);
        let at_unit_point = isometry_defect_on(&id, &id, &id, &id, &[(cr(1.0), cr(1.0))])?;
        let identity_grid = isometry_defect(&scene, &id, &id, &id, &id, density)?;

        let candidates = match &inp.candidates {
            Some(c) if c.len() == 4 => Some(isometry_defect(&scene, &c[0], &c[1], &c[2], &c[3], density)?),
            Some(_) => return Err(invalid("candidates must list X1, X2, Y1, Y2")),
            None => None,
        };

        let search = if inp.search { Some(defect_minimize(&scene, inp.kappa_cap, ctx.budget, ctx.seed, density)?) } else { None };

        let lemma_density = density.max(8);
        let lemma = inp
            .lemma
            .iter()
            .map(|p| {
                let relations = lemma_rel_check(p, ctx.tol.lemma, lemma_density)?;
                let (diagonal_ok, note) = match lemma_diag_check(p, ctx.tol.lemma, lemma_density) {
                    Ok(v) => (Some(v), None),
                    Err(cbsim::Error::InvalidInput(msg)) => (None, Some(msg)),
                    Err(e) => return Err(e),
                };
                Ok(LemmaEntry { params: *p, relations: Some(relations), diagonal_ok, note })
            })
            .collect::<cbsim::Result<Vec<_>>>()?;

        let summary = match &search {
            Some(s) => format!("identity defect {at_unit_point:.12} at (1,1); best defect {:.9} (kappa cap {})", s.best_defect, s.kappa_cap),
            None => format!("identity defect {at_unit_point:.12} at (1,1)"),
        };
        let result = json!({
            "scene_hash": scene_hash,
            "grid_density": density,
            "identity_defect_unit_point": at_unit_point,
            "identity_defect_grid": identity_grid,
            "candidate_defect": candidates,
            "search": search,
            "lemma": lemma,
        });
        Ok(Outcome::ok(result, summary))
    }
}
