use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::builder::PossibleValuesParser;
use clap::Parser;
use serde::{Deserialize, Serialize};

use cbsim::similarity::SimilarityTolerances;

use crate::commands;

/// Smallest tolerance accepted from the command line or a config file.
pub const TOLERANCE_FLOOR: f64 = 1e-14;

/// Input error the user can fix; maps to exit status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "cbsim", version, about = "Completely bounded maps, similarity iterations and model operators")]
pub struct Cli {
    /// Engine to run.
    #[arg(value_parser = PossibleValuesParser::new(commands::NAMES), required_unless_present = "config")]
    pub command: Option<String>,

    /// JSON config file with the fields command, input_path, output_path,
    /// seed, budget, tolerances and grid. Replaces all other arguments.
    #[arg(long, conflicts_with_all = ["command", "input", "output", "seed", "budget", "tol", "grid"])]
    pub config: Option<PathBuf>,

    #[arg(long, required_unless_present = "config")]
    pub input: Option<PathBuf>,

    #[arg(long, required_unless_present = "config")]
    pub output: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of restarts for the searches; defaults depend on the command.
    #[arg(long)]
    pub budget: Option<usize>,

    /// Tolerance override `name=value`, repeatable.
    #[arg(long, value_name = "NAME=VALUE")]
    pub tol: Vec<String>,

    /// Grid density (polar grid for the iteration, torus grid for the
    /// counterexample).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    pub input_path: PathBuf,
    pub output_path: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub grid: Option<usize>,
}

/// Every tolerance a run can use, with its value after overrides.
#[derive(Debug, Clone, Serialize)]
pub struct ToleranceTable {
    pub contractive: f64,
    pub kappa_slack: f64,
    pub polish: f64,
    pub chain: f64,
    pub quasinilpotent: f64,
    /// Relation checks of the counterexample lemmas.
    pub lemma: f64,
    /// Two-sided inequality of the diagonal similarity.
    pub sandwich: f64,
}

impl Default for ToleranceTable {
    fn default() -> Self {
        let s = SimilarityTolerances::default();
        Self {
            contractive: s.contractive,
            kappa_slack: s.kappa_slack,
            polish: s.polish,
            chain: s.chain,
            quasinilpotent: s.quasinilpotent,
            lemma: 1e-8,
            sandwich: 1e-6,
        }
    }
}

impl ToleranceTable {
    fn set(&mut self, name: &str, value: f64) -> anyhow::Result<()> {
        if !value.is_finite() || value < TOLERANCE_FLOOR {
            return Err(invalid(format!("tolerance {name}={value} is below the floor {TOLERANCE_FLOOR:e}")));
        }
        let slot = match name {
            "contractive" => &mut self.contractive,
            "kappa_slack" => &mut self.kappa_slack,
            "polish" => &mut self.polish,
            "chain" => &mut self.chain,
            "quasinilpotent" => &mut self.quasinilpotent,
            "lemma" => &mut self.lemma,
            "sandwich" => &mut self.sandwich,
            _ => {
                return Err(invalid(format!(
                    "unknown tolerance '{name}' (known: contractive, kappa_slack, polish, chain, quasinilpotent, lemma, sandwich)"
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    pub fn similarity(&self, polar_grid: Option<usize>) -> SimilarityTolerances {
        let mut s = SimilarityTolerances::default();
        s.contractive = self.contractive;
        s.kappa_slack = self.kappa_slack;
        s.polish = self.polish;
        s.chain = self.chain;
        s.quasinilpotent = self.quasinilpotent;
        if let Some(g) = polar_grid {
            s.polar_grid = g;
        }
        s
    }
}

/// Resolved run parameters handed to a command.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub budget: usize,
    pub grid: Option<usize>,
    pub tol: ToleranceTable,
}

impl ExperimentConfig {
    pub fn from_cli(cli: Cli) -> anyhow::Result<Self> {
        if let Some(path) = cli.config {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
                .map_err(|e| invalid(format!("config {}: at '{}': {}", path.display(), e.path(), e.inner())))?;
            commands::lookup(&cfg.command)?;
            return Ok(cfg);
        }
        let mut tolerances = BTreeMap::new();
        for t in &cli.tol {
            let (name, value) = t.split_once('=').ok_or_else(|| invalid(format!("--tol expects name=value, got '{t}'")))?;
            let value: f64 = value.trim().parse().map_err(|_| invalid(format!("--tol {name}: '{value}' is not a number")))?;
            tolerances.insert(name.trim().to_string(), value);
        }
        Ok(ExperimentConfig {
            command: cli.command.expect("required by clap"),
            input_path: cli.input.expect("required by clap"),
            output_path: cli.output.expect("required by clap"),
            seed: cli.seed.unwrap_or(0),
            budget: cli.budget,
            tolerances,
            grid: cli.grid,
        })
    }

    pub fn context(&self, default_budget: usize) -> anyhow::Result<Context> {
        let mut tol = ToleranceTable::default();
        for (name, value) in &self.tolerances {
            tol.set(name, *value)?;
        }
        let budget = self.budget.unwrap_or(default_budget);
        if budget == 0 {
            return Err(invalid("budget must be at least 1"));
        }
        if self.grid == Some(0) {
            return Err(invalid("grid must be at least 1"));
        }
        Ok(Context { seed: self.seed, budget, grid: self.grid, tol })
    }
}

/// Reads and parses the input file; syntax errors carry line and column.
pub fn read_input(path: &Path) -> anyhow::Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading input {}", path.display()))?;
    if text.trim().is_empty() {
        return Err(invalid(format!("input {} is empty", path.display())));
    }
    serde_json::from_str(&text).map_err(|e| invalid(format!("input {}: malformed JSON at line {}, column {}: {e}", path.display(), e.line(), e.column())))
}

/// Typed view of the input; schema errors name the offending field path.
pub fn parse<T: serde::de::DeserializeOwned>(input: &serde_json::Value) -> anyhow::Result<T> {
    serde_path_to_error::deserialize(input).map_err(|e| invalid(format!("input does not match the schema at '{}': {}", e.path(), e.inner())))
}
