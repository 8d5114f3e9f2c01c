//! WebAssembly entry points for `www/index.html`. Every function returns a
//! JSON string; failures come back as `{"error": "..."}`.

use lols::theory::{bandit_unbiasedness_suite, reference_rollout_counterexample, snake_lower_bound, MAX_SNAKE_T};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn respond(result: lols::Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Learned roll-in on the shared-feature model, once with reference
/// roll-outs and once with a mixture that uses the reference with
/// probability `beta`.
#[wasm_bindgen]
pub fn shared_feature_trap(eps: f64, beta: f64, rounds: u32, seed: u32) -> String {
    respond(
        reference_rollout_counterexample(eps, beta, rounds as usize, u64::from(seed))
            .and_then(|r| serde_json::to_value(r).map_err(|e| lols::Error::Format(e.to_string()))),
    )
}

/// Best-neighbor descent over policies of the `t`-cube.
#[wasm_bindgen]
pub fn snake_descent(t: u32) -> String {
    if t == 0 || t as usize > MAX_SNAKE_T.min(6) {
        return json!({ "error": "T must lie in 1..=6" }).to_string();
    }
    respond(
        snake_lower_bound(t as usize)
            .and_then(|r| serde_json::to_value(r).map_err(|e| lols::Error::Format(e.to_string()))),
    )
}

/// Monte Carlo mean of the importance-weighted cost estimate for each action
/// against its exact expectation.
#[wasm_bindgen]
pub fn bandit_probe(eps: f64, beta: f64, trials: u32, seed: u32) -> String {
    if !(0.0..=1.0).contains(&beta) {
        return json!({ "error": "beta must lie in [0, 1]" }).to_string();
    }
    respond(
        bandit_unbiasedness_suite(eps, &[beta], trials.max(2) as usize, u64::from(seed)).and_then(|(_, cases)| {
            serde_json::to_value(cases).map_err(|e| lols::Error::Format(e.to_string()))
        }),
    )
}
