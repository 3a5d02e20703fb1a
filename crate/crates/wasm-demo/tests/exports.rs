use fbsde_wasm_demo::{entropy_json, merton_json, riskmin_json};
use serde_json::Value;

#[test]
fn riskmin_profile_matches_closed_form() {
    let v: Value = serde_json::from_str(&riskmin_json(0.2, 0.4, 1.0, 1.0, 41, 40).unwrap()).unwrap();
    assert!((v["y0_at_x0"].as_f64().unwrap() - 1.125).abs() < 1e-9);
    assert_eq!(v["x"].as_array().unwrap().len(), 41);
    assert!(v["u"].as_array().unwrap().iter().all(|u| (u.as_f64().unwrap() - 1.25).abs() < 1e-9));
}

#[test]
fn merton_profile_is_close() {
    let v: Value = serde_json::from_str(&merton_json(0.05, 0.2, 1.0, 1.0, 100, 200).unwrap()).unwrap();
    assert!((v["y0_at_x0"].as_f64().unwrap() - 0.03125).abs() < 1e-3);
}

#[test]
fn entropy_estimate_and_limits() {
    let v: Value = serde_json::from_str(&entropy_json(0.2, 0.4, 1.0, 20_000, 1e-2, 42).unwrap()).unwrap();
    assert!(v["mc_within_3se"].as_bool().unwrap());
    assert!(entropy_json(0.2, 0.4, 1.0, 10_000_000, 1e-2, 42).is_err());
    assert!(riskmin_json(0.2, 0.4, 1.0, 1.0, 5000, 40).is_err());
    assert!(riskmin_json(0.2, 0.0, 1.0, 1.0, 41, 40).is_err());
}
