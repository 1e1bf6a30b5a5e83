use std::fmt::Write as _;
use std::io::{self, Write};

use serde_json::{json, Value};

use crate::continuation::GnepReport;
use crate::game::Game;
use crate::verification::GroundTruth;

/// 17 significant digits: round-trips every `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(game: &Game) -> String {
    let mut cols: Vec<String> = [
        "k",
        "tau",
        "master_iters",
        "nep_iters_total",
        "feas_P",
        "joint_residual_inf",
        "master_residual",
        "multiplier_spread",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=game.dim()).map(|k| format!("x_{k}")));
    for i in 1..=game.num_players() {
        cols.extend((1..=game.m()).map(|t| format!("u_{i}{t}")));
    }
    cols.extend((1..=game.m()).map(|t| format!("lambda_{t}")));
    cols.join(",")
}

/// The CSV trace: a header and one row per completed stage.
pub fn trace_csv(game: &Game, report: &GnepReport) -> String {
    let mut out = trace_header(game);
    out.push('\n');
    for s in &report.stages {
        let mut row = vec![
            s.k.to_string(),
            num(s.tau),
            s.master.iters.to_string(),
            s.master.total_nep_iters.to_string(),
            num(s.penalty),
            num(s.joint_residual),
            num(s.master.residual_u),
            num(s.spread),
        ];
        row.extend(s.master.x.values().iter().map(|v| num(*v)));
        let u = s.master.u.matrix();
        for i in 0..u.nrows() {
            row.extend((0..u.ncols()).map(|t| num(u[(i, t)])));
        }
        row.extend(s.lambda_hat.iter().map(|v| num(*v)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write_trace<W: Write>(game: &Game, report: &GnepReport, mut w: W) -> io::Result<()> {
    w.write_all(trace_csv(game, report).as_bytes())
}

/// `{name, status, x, u, lambda_hat, final_P, stages, failure}`; `u` is
/// row-major (one row per player).
pub fn summary_json(game: &Game, report: &GnepReport) -> Value {
    let u: Vec<Vec<f64>> = report.u.row_iter().map(|r| r.iter().copied().collect()).collect();
    json!({
        "name": game.name(),
        "status": report.status.as_str(),
        "x": report.x.as_slice(),
        "u": u,
        "lambda_hat": report.lambda_hat.as_slice(),
        "final_P": report.final_penalty(),
        "stages": report.stages.len(),
        "failure": report.failure.as_ref().map(|e| e.to_string()),
    })
}

pub fn ground_truth_json(truth: &GroundTruth) -> Value {
    json!({
        "x": truth.x_star.values().as_slice(),
        "lambda": truth.lambda_star.as_slice(),
        "active_joint": truth.active_joint,
        "active_bounds": truth.active_bounds,
        "residual": truth.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::continuation::{solve_gnep, ContinuationConfig, TauSchedule};
    use crate::penalty::QuadraticPlus;

    #[test]
    fn header_layout() {
        let g = benchmarks::random_instance(0);
        let h = trace_header(&g);
        let cols: Vec<&str> = h.split(',').collect();
        assert_eq!(cols.len(), 8 + g.dim() + g.num_players() * g.m() + g.m());
        assert_eq!(cols[8], "x_1");
        assert_eq!(cols[8 + g.dim()], "u_11");
        assert_eq!(*cols.last().unwrap(), format!("lambda_{}", g.m()));
    }

    #[test]
    fn numbers_round_trip() {
        let g = benchmarks::s2();
        let cfg = ContinuationConfig {
            schedule: TauSchedule { tau0: 1.0, rho: 10.0, k_max: 2 },
            ..ContinuationConfig::default()
        };
        let report = solve_gnep(&g, &QuadraticPlus, &cfg).unwrap();
        let csv = trace_csv(&g, &report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + report.stages.len());
        for (line, stage) in lines[1..].iter().zip(&report.stages) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[4].parse::<f64>().unwrap(), stage.penalty);
            assert_eq!(cells[8].parse::<f64>().unwrap(), stage.master.x[0]);
        }
        assert_eq!(num(0.1), "1.0000000000000001e-1");

        let s = summary_json(&g, &report);
        assert_eq!(s["status"], report.status.as_str());
        assert_eq!(s["u"].as_array().unwrap().len(), 2);
    }
}
