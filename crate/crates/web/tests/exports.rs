use lols_web::{bandit_probe, shared_feature_trap, snake_descent};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn trap_separates_reference_and_mixture_rollouts() {
    let r = parse(shared_feature_trap(0.1, 0.5, 500, 1));
    assert_eq!(r["reference_rollout"]["j"], 0.9);
    assert_eq!(r["mixture_rollout"]["j"], 0.0);
    assert!(parse(shared_feature_trap(2.0, 0.5, 10, 1))["error"].is_string());
}

#[test]
fn snake_three_cube() {
    let r = parse(snake_descent(3));
    assert_eq!(r["updates"], 4);
    assert!(parse(snake_descent(9))["error"].is_string());
}

#[test]
fn probe_cases_cover_both_actions() {
    let r = parse(bandit_probe(0.1, 0.5, 5000, 1));
    let cases = r.as_array().unwrap();
    assert_eq!(cases.len(), 2);
    for c in cases {
        let res = &c["result"];
        let (m, se, exact) = (res["monte_carlo_mean"].as_f64().unwrap(), res["standard_error"].as_f64().unwrap(), res["exact"].as_f64().unwrap());
        assert!((m - exact).abs() <= 4.0 * se);
    }
    assert!(parse(bandit_probe(0.1, 1.5, 10, 1))["error"].is_string());
}
