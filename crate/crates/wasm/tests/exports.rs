use rwprover_wasm::{advantages, check, surrogate_curve};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn advantages_report_normalized_values() {
    let v = parse(advantages("1, -1, -1, -1", "grpo"));
    let a: Vec<f64> = v["advantages"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((a[0] - 1.7321).abs() < 1e-4 && (a[1] + 0.5774).abs() < 1e-4);
    let v = parse(advantages("1 -1 -1 -1", "dr_grpo"));
    assert_eq!(v["advantages"][0].as_f64(), Some(1.5));
    assert!(parse(advantages("1", "grpo"))["error"].is_string());
    assert!(parse(advantages("1, x", "grpo"))["error"].is_string());
    assert!(parse(advantages("1, 2", "ppo"))["error"].is_string());
}

#[test]
fn surrogate_curve_flattens_outside_the_band() {
    let rows = parse(surrogate_curve(1.0, 0.2, 200));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 200);
    for r in rows {
        let ratio = r["ratio"].as_f64().unwrap();
        let grad = r["grad"].as_f64().unwrap();
        if ratio > 1.2 + 1e-9 {
            assert_eq!(grad, 0.0);
            assert!((r["value"].as_f64().unwrap() - 1.2).abs() < 1e-12);
        } else {
            assert!((grad - ratio).abs() < 1e-12);
        }
    }
    assert!(parse(surrogate_curve(1.0, 1.5, 10))["error"].is_string());
}

#[test]
fn check_reports_status_and_reward() {
    let ok = parse(check("(a + 0) = a", "rw add_zero at .", 32));
    assert_eq!(ok["status"], "Success");
    assert_eq!(ok["reward"].as_f64(), Some(1.0));
    let bad = parse(check("(a + 0) = a", "rw mul_one at .", 32));
    assert_eq!(bad["status"], "RuleMismatch");
    assert_eq!(bad["first_failure"].as_u64(), Some(0));
    assert_eq!(bad["reward"].as_f64(), Some(-1.0));
    let noop = parse(check("(a + a) = (a + a)", "rw add_comm at .", 32));
    assert_eq!(noop["warnings"][0], "NoOpRewrite(0)");
    assert!(parse(check("(a +", "", 32))["error"].is_string());
}
