//! Browser bindings for the demo page in `www/`. Every export takes plain
//! strings/numbers and returns a JSON string, so the page needs no glue
//! beyond `JSON.parse`.

use rwprover::grpo::{clipped_term, compute_advantages, Variant};
use rwprover::verifier::{check_script_text, reward_of, RewardConfig};
use rwprover::Statement;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

/// Group-normalized advantages for a comma- or space-separated reward list.
#[wasm_bindgen]
pub fn advantages(rewards: &str, variant: &str) -> String {
    let variant: Variant = match variant.parse() {
        Ok(v) => v,
        Err(e) => return error(e),
    };
    let parsed: Result<Vec<f64>, _> = rewards
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::parse::<f64>)
        .collect();
    match parsed {
        Ok(r) if r.len() >= 2 => {
            let a = compute_advantages(&r, variant);
            json!({ "rewards": r, "advantages": a }).to_string()
        }
        Ok(_) => error("need at least two rewards"),
        Err(e) => error(format!("bad reward: {e}")),
    }
}

/// The per-token clipped surrogate and its derivative with respect to the
/// new log-probability, sampled at `points` ratios in (0, 2].
#[wasm_bindgen]
pub fn surrogate_curve(advantage: f64, epsilon: f64, points: usize) -> String {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return error("epsilon must lie in (0, 1)");
    }
    let points = points.clamp(2, 1000);
    let rows: Vec<Value> = (1..=points)
        .map(|i| {
            let ratio = 2.0 * i as f64 / points as f64;
            let (value, grad, clipped) = clipped_term(ratio.ln(), 0.0, advantage, epsilon);
            json!({ "ratio": ratio, "value": value, "grad": grad, "clipped": clipped })
        })
        .collect();
    Value::Array(rows).to_string()
}

/// Checks a proof script against `lhs = rhs` and reports the outcome with
/// its reward and feedback text.
#[wasm_bindgen]
pub fn check(statement: &str, script: &str, step_budget: usize) -> String {
    let s = match Statement::parse(statement) {
        Ok(s) => s,
        Err(e) => return error(format!("statement: {e}")),
    };
    let o = check_script_text(&s, script, step_budget.max(1));
    json!({
        "status": o.status.name(),
        "first_failure": o.first_failure,
        "warnings": o.warnings.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>(),
        "final_lhs": o.final_lhs.to_string(),
        "reward": reward_of(&o, &RewardConfig::default()),
        "feedback": o.feedback(),
    })
    .to_string()
}
