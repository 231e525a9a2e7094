use std::time::Duration;

use serde_json::{json, Value};

use crate::commands::Outcome;
use crate::config::{invalid, Context, ExperimentConfig};

/// The part of the report covered by the determinism guarantee.
pub fn result_block(cfg: &ExperimentConfig, ctx: &Context, input: &Value, outcome: &Outcome) -> Value {
    json!({
        "command": cfg.command,
        "seed": ctx.seed,
        "budget": ctx.budget,
        "grid": ctx.grid,
        "versions": {
            "cbsim": cbsim::VERSION,
            "cbsim-cli": env!("CARGO_PKG_VERSION"),
        },
        "input": input,
        "tolerances": ctx.tol,
        "result": outcome.result,
        "failure": outcome.failure,
    })
}

/// JSON report with the deterministic block under `report` and wall-clock
/// data under `timing`; a `.csv` output path takes the command's table
/// instead.
pub fn write(cfg: &ExperimentConfig, ctx: &Context, input: &Value, outcome: &Outcome, elapsed: Duration) -> anyhow::Result<()> {
    let path = &cfg.output_path;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let table = outcome
            .csv
            .as_ref()
            .ok_or_else(|| invalid(format!("{} has no CSV form; use a .json output", cfg.command)))?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        return Ok(());
    }
    let doc = json!({
        "report": result_block(cfg, ctx, input, outcome),
        "timing": { "elapsed_seconds": elapsed.as_secs_f64() },
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
