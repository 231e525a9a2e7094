//! Command registry. Each engine is a [`Command`] trait object looked up by
//! name; the runner never matches on command names itself.

mod maps;
mod model;
mod scene;

use serde::Deserialize;
use serde_json::Value;

use cbsim::counterexample::build_scene;
use cbsim::operator_space::CbLinearMap;
use cbsim::{c64, C64};

use crate::config::{invalid, Context};

pub use maps::{AlmostIsometric, CbNorm, Clbp, Iterate, Paulsen};
pub use model::{Carleson, Model};
pub use scene::Counterexample;

/// Result of one command run.
pub struct Outcome {
    pub result: Value,
    /// One-line human summary for stdout.
    pub summary: String,
    /// Engine failure after which a partial result was still produced.
    pub failure: Option<String>,
    pub csv: Option<CsvTable>,
}

impl Outcome {
    pub fn ok(result: Value, summary: String) -> Self {
        Outcome { result, summary, failure: None, csv: None }
    }
}

pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub trait Command: Sync {
    fn name(&self) -> &'static str;
    fn default_budget(&self) -> usize;
    fn run(&self, input: &Value, ctx: &Context) -> anyhow::Result<Outcome>;
}

pub const NAMES: [&str; 8] = ["cbnorm", "paulsen", "iterate", "almost-isometric", "counterexample", "model", "carleson", "clbp"];

static REGISTRY: [&dyn Command; 8] = [&CbNorm, &Paulsen, &Iterate, &AlmostIsometric, &Counterexample, &Model, &Carleson, &Clbp];

pub fn lookup(name: &str) -> anyhow::Result<&'static dyn Command> {
    REGISTRY
        .iter()
        .copied()
        .find(|c| c.name() == name)
        .ok_or_else(|| invalid(format!("unknown command '{name}' (known: {})", NAMES.join(", "))))
}

/// 2 for input problems, 3 for engine failures.
pub fn engine_exit_code(e: &cbsim::Error) -> u8 {
    use cbsim::Error::*;
    match e {
        Dimension(_) | NotInSpan { .. } | InvalidInput(_) | RepeatedRoot { .. } => 2,
        Singular { .. } | IllConditioned { .. } | OptimizerFailure { .. } | NonConvergence { .. } | DeltaSearchExhausted { .. } => 3,
    }
}

/// Complex numbers as `[re, im]` pairs.
pub type Pair = [f64; 2];

pub fn complex(p: &Pair) -> C64 {
    c64(p[0], p[1])
}

pub fn poly(p: &[Pair]) -> Vec<C64> {
    p.iter().map(complex).collect()
}

/// A linear map: the counterexample scene or an explicit map.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// `"counterexample"` selects the built-in scene map.
    #[serde(default)]
    pub scene: Option<String>,
    #[serde(default)]
    pub map: Option<CbLinearMap>,
}

impl MapSpec {
    pub fn build(self) -> anyhow::Result<CbLinearMap> {
        match (self.scene, self.map) {
            (Some(name), None) if name == "counterexample" => Ok(build_scene()?.psi),
            (Some(name), None) => Err(invalid(format!("unknown scene '{name}' (known: counterexample)"))),
            (None, Some(map)) => Ok(map),
            _ => Err(invalid("give exactly one of \"scene\" and \"map\"")),
        }
    }
}
