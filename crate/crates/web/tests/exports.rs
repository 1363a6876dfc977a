use serde_json::Value;

use cmdp_web::{learn_example, queue_sweep, solve_game};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn matching_pennies() {
    let v = parse(&solve_game("[[1, -1], [-1, 1]]"));
    assert!(v["value"].as_f64().unwrap().abs() < 1e-12);
    for p in v["row_strategy"].as_array().unwrap() {
        assert!((p.as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn two_by_two_closed_form() {
    // [[3, -1], [-2, 1]]: p = (1 + 2) / 7, value = (3 - 2) / 7.
    let v = parse(&solve_game("[[3, -1], [-2, 1]]"));
    assert!((v["row_strategy"][0].as_f64().unwrap() - 3.0 / 7.0).abs() < 1e-12);
    assert!((v["value"].as_f64().unwrap() - 1.0 / 7.0).abs() < 1e-12);
}

#[test]
fn bad_input_is_reported_not_thrown() {
    assert!(parse(&solve_game("not json"))["error"].is_string());
    assert!(parse(&solve_game("[[1, 2], [3]]"))["error"].is_string());
    assert!(parse(&learn_example(3, 10, 0, 1))["error"].is_string());
    assert!(parse(&queue_sweep(1.0, 0.0, 5))["error"].is_string());
}

#[test]
fn example1_curve_heads_to_one() {
    let v = parse(&learn_example(1, 5000, 1, 500));
    let steps = v["steps"].as_array().unwrap();
    assert_eq!(steps.first().unwrap().as_u64(), Some(0));
    assert_eq!(steps.last().unwrap().as_u64(), Some(5000));
    let last = v["q"].as_array().unwrap().last().unwrap();
    assert!((last[0].as_f64().unwrap() - 1.0).abs() < 0.15);
    assert_eq!(v["actions"].as_u64(), Some(2));
}

#[test]
fn sweep_changes_sign_once() {
    let v = parse(&queue_sweep(9.0, 10.0, 11));
    let pts = v.as_array().unwrap();
    assert_eq!(pts.len(), 11);
    assert!(pts[0]["lp_feasible"].as_bool().unwrap());
    assert!(!pts[10]["lp_feasible"].as_bool().unwrap());
    let values: Vec<f64> = pts.iter().map(|p| p["game_value"].as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}
