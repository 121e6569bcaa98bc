use carbonfl_wasm::{bound_curve_json, compare_solvers_json, simulate_json};
use serde_json::Value;

#[test]
fn simulate_returns_one_series_per_policy() {
    let text = simulate_json(r#"{"n_centers": 4, "horizon": 8, "policies": ["cafe", "smn"]}"#).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let series = v["series"].as_array().unwrap();
    assert_eq!(series.len(), 2);
    assert_eq!(series[0]["policy"], "cafe");
    for s in series {
        assert_eq!(s["selections"].as_array().unwrap().len(), 8);
        let carbon: Vec<f64> = s["cumulative_carbon_kg"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert!(carbon.windows(2).all(|w| w[1] >= w[0]));
    }
    assert_eq!(v["intensities"].as_array().unwrap().len(), 8);
    assert_eq!(
        simulate_json(r#"{"n_centers": 4, "horizon": 8}"#).unwrap(),
        simulate_json(r#"{"n_centers": 4, "horizon": 8}"#).unwrap()
    );
}

#[test]
fn simulate_rejects_bad_input() {
    assert!(simulate_json(r#"{"policies": ["nope"]}"#).is_err());
    assert!(simulate_json(r#"{"profile": "weekly"}"#).is_err());
    assert!(simulate_json(r#"{"v": -1}"#).is_err());
    assert!(simulate_json("not json").is_err());
}

#[test]
fn exhaustive_dominates_in_comparison() {
    for seed in 0..5 {
        let text = compare_solvers_json(&format!(r#"{{"n_centers": 8, "seed": {seed}}}"#)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0]["solver"], "exhaustive");
        let best = rows[0]["objective"].as_f64().unwrap();
        for r in rows {
            assert!(r["objective"].as_f64().unwrap() <= best + 1e-9);
        }
    }
    assert!(compare_solvers_json(r#"{"n_centers": 40}"#).is_err());
}

#[test]
fn bound_curve_decreases_in_initial_queue() {
    let text = bound_curve_json("{}").unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let pts: Vec<f64> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["rhs_appendix"].as_f64().unwrap())
        .collect();
    assert_eq!(pts.len(), 13);
    assert!(pts.windows(2).all(|w| w[1] < w[0]));
    assert!(bound_curve_json(r#"{"gamma": 0.5}"#).is_err());
}
