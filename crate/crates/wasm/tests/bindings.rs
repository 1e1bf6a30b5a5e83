use serde_json::Value;

use gnep_wasm::{continuation_path, share_sweep, solve_document};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).expect("exports return json")
}

#[test]
fn continuation_path_approaches_the_exact_equilibrium() {
    let out = parse(continuation_path(1.0, 1.0, 1.0, 1.0, 10.0, 4));
    let stages = out["stages"].as_array().unwrap();
    assert!(!stages.is_empty());
    // τ = 1 stage of the symmetric game has the closed form 0.75
    assert!((stages[0]["x"][0].as_f64().unwrap() - 0.75).abs() < 1e-9);
    let last = stages.last().unwrap();
    for k in 0..2 {
        let exact = out["exact"]["x"][k].as_f64().unwrap();
        assert!((last["x"][k].as_f64().unwrap() - exact).abs() < 1e-3);
    }
    let ps: Vec<f64> = stages.iter().map(|s| s["P"].as_f64().unwrap()).collect();
    assert!(ps.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn sweep_crosses_at_the_master_equilibrium() {
    // S2 at τ = 10: g_1 − g_2 changes sign exactly once
    let out = parse(share_sweep(2.0, 1.0, 1.0, 10.0, -1.0, 2.0, 61));
    let diffs: Vec<f64> = out["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["g"][0].as_f64().unwrap() - p["g"][1].as_f64().unwrap())
        .collect();
    let crossings = diffs.windows(2).filter(|w| w[0].signum() != w[1].signum() && w[0] != 0.0).count();
    assert_eq!(crossings, 1, "{diffs:?}");
}

#[test]
fn bad_inputs_come_back_as_errors() {
    assert!(parse(continuation_path(f64::NAN, 1.0, 1.0, 1.0, 10.0, 2))["error"].is_string());
    assert!(parse(share_sweep(1.0, 1.0, 1.0, -1.0, 0.0, 1.0, 10))["error"].is_string());
    assert!(parse(continuation_path(1.0, 1.0, 1.0, 1.0, 0.5, 2))["error"].is_string());
    let err = parse(solve_document("{\"name\": \"x\"}"));
    assert!(err["error"].as_str().unwrap().contains("players"), "{err}");
}

#[test]
fn solves_the_shipped_documents() {
    for name in ["s0", "s1", "s2"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/benchmarks/{name}.json"));
        let out = parse(solve_document(&std::fs::read_to_string(path).unwrap()));
        assert_eq!(out["summary"]["status"], "converged", "{name}: {out}");
        assert!(out["trace_csv"].as_str().unwrap().starts_with("k,tau,"));
    }
}
