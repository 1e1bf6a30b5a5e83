//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string. Failures come back as
//! `{"error": "..."}` so the page never has to catch a JS exception.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use gnep_core::benchmarks::scalar_pair;
use gnep_core::continuation::feasibility_trace;
use gnep_core::io::{summary_json, trace_csv, ProblemDocument};
use gnep_core::penalty::{eval_g, penalty_total};
use gnep_core::verification::oracle_solve;
use gnep_core::{solve_gnep, solve_nep, ContinuationConfig, Game, NepConfig, QuadraticPlus, TauSchedule};

fn respond(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn pair(c1: f64, c2: f64, b: f64) -> Result<Game, String> {
    if ![c1, c2, b].iter().all(|v| v.is_finite()) {
        return Err("c1, c2 and b must be finite numbers".into());
    }
    Ok(scalar_pair("demo", [c1, c2], b))
}

fn exact(game: &Game) -> Value {
    match oracle_solve(game) {
        Ok(t) => json!({ "x": t.x_star.values().as_slice(), "lambda": t.lambda_star.as_slice() }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Continuation path for the two-player scalar game: one entry per stage,
/// plus the exact equilibrium for comparison.
#[wasm_bindgen]
pub fn continuation_path(c1: f64, c2: f64, b: f64, tau0: f64, rho: f64, k_max: usize) -> String {
    respond((|| {
        let game = pair(c1, c2, b)?;
        let cfg = ContinuationConfig {
            schedule: TauSchedule { tau0, rho, k_max },
            ..ContinuationConfig::default()
        };
        let report = solve_gnep(&game, &QuadraticPlus, &cfg).map_err(|e| e.to_string())?;
        let stages: Vec<Value> = report
            .stages
            .iter()
            .map(|s| {
                json!({
                    "tau": s.tau,
                    "x": s.master.x.values().as_slice(),
                    "u": s.master.u.matrix().as_slice(),
                    "P": s.penalty,
                    "lambda": s.lambda_hat.as_slice(),
                    "master_iters": s.master.iters,
                })
            })
            .collect();
        Ok(json!({
            "status": report.status.as_str(),
            "stages": stages,
            "exact": exact(&game),
        }))
    })())
}

/// Sweeps player 1's share `u_1` over `[lo, hi]` (player 2 gets `b − u_1`)
/// and reports the inner equilibrium and the master map at each point. The
/// master equilibrium sits where `g_1 = g_2`.
#[wasm_bindgen]
pub fn share_sweep(c1: f64, c2: f64, b: f64, tau: f64, lo: f64, hi: f64, samples: usize) -> String {
    respond((|| {
        let game = pair(c1, c2, b)?;
        if !(tau > 0.0 && lo < hi) || !(2..=2000).contains(&samples) {
            return Err("need tau > 0, lo < hi and 2 ≤ samples ≤ 2000".into());
        }
        let cfg = NepConfig::default();
        let mut x = DVector::zeros(2);
        let mut rows = Vec::with_capacity(samples);
        for k in 0..samples {
            let u1 = lo + (hi - lo) * k as f64 / (samples - 1) as f64;
            let u = DMatrix::from_column_slice(2, 1, &[u1, b - u1]);
            // warm start along the sweep
            let nep = solve_nep(&game, &QuadraticPlus, tau, &u, &x, &cfg).map_err(|e| e.to_string())?;
            x = nep.x.values().clone();
            let g = eval_g(&game, &QuadraticPlus, &u, &x).map_err(|e| e.to_string())?;
            let p = penalty_total(&game, &QuadraticPlus, &x, &u).map_err(|e| e.to_string())?;
            rows.push(json!({ "u1": u1, "x": x.as_slice(), "g": g.as_slice(), "P": p }));
        }
        Ok(json!({ "tau": tau, "points": rows }))
    })())
}

/// Solves a full problem document, returning the run summary, the CSV trace
/// and the feasibility trace.
#[wasm_bindgen]
pub fn solve_document(text: &str) -> String {
    respond((|| {
        let doc = ProblemDocument::from_json_str(text).map_err(|e| e.to_string())?;
        let game = doc.to_game().map_err(|e| e.to_string())?;
        let cfg = doc.to_config().map_err(|e| e.to_string())?;
        let report = solve_gnep(&game, doc.penalty().as_ref(), &cfg).map_err(|e| e.to_string())?;
        let trace: Vec<[f64; 2]> = feasibility_trace(&report).into_iter().map(|(t, p)| [t, p]).collect();
        Ok(json!({
            "summary": summary_json(&game, &report),
            "trace_csv": trace_csv(&game, &report),
            "feasibility": trace,
        }))
    })())
}
