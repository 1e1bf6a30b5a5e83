use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::continuation::{ContinuationConfig, TauSchedule};
use crate::error::{ModelError, SolveError};
use crate::game::{Game, JointConstraints, PlayerSpec};
use crate::master::MasterConfig;
use crate::nep::NepConfig;
use crate::penalty::{PenaltyFunction, PenaltyKind, ShareFlags};

use super::apply_overrides;

/// Row-major matrix as nested arrays.
type Rows = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// Syntax or schema error; `path` is the offending field, `message`
    /// carries serde's line/column when available.
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("override {0}")]
    Override(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] SolveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerDoc {
    pub n: usize,
    pub c: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Rows,
    /// Couplings `R_ij`, keyed by the 0-based index `j`.
    #[serde(rename = "R", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub r: BTreeMap<usize, Rows>,
    /// `null` stands for an infinite bound.
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub m: usize,
    #[serde(rename = "A")]
    pub a_mat: Vec<Rows>,
    #[serde(rename = "a")]
    pub offsets: Vec<Vec<f64>>,
    /// Per player, either empty or one matrix per constraint row.
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<Rows>>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyDoc {
    pub kind: PenaltyKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverDoc {
    pub tol_u: f64,
    pub eps_nep: f64,
    pub lambda: f64,
    pub eps_feas: f64,
    pub eps_eq: f64,
    pub max_iter_master: usize,
    pub max_iter_nep: usize,
    /// Default seed for the sampled checks; the solver itself is
    /// deterministic.
    pub seed: u64,
    /// Anderson memory for both levels (0 disables).
    pub anderson_memory: usize,
    /// Safeguarded Newton candidates in the inner solver.
    pub newton: bool,
}

impl Default for SolverDoc {
    fn default() -> Self {
        let c = ContinuationConfig::default();
        Self {
            tol_u: c.master.tol_u,
            eps_nep: c.master.nep.tol,
            lambda: c.master.lambda,
            eps_feas: c.eps_feas,
            eps_eq: c.eps_eq,
            max_iter_master: c.master.max_iter,
            max_iter_nep: c.master.nep.max_iter,
            seed: 42,
            anderson_memory: c.master.anderson_memory,
            newton: c.master.nep.newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub name: String,
    pub players: Vec<PlayerDoc>,
    pub joint: JointDoc,
    #[serde(default)]
    pub shares: ShareFlags,
    #[serde(default)]
    pub penalty: PenaltyDoc,
    #[serde(default)]
    pub schedule: TauSchedule,
    #[serde(default)]
    pub solver: SolverDoc,
}

fn parse_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> DocError {
    let path = err.path().to_string();
    DocError::Parse {
        path: if path == "." { "document".into() } else { path },
        message: err.into_inner().to_string(),
    }
}

fn matrix(field: &str, rows: &Rows, nrows: usize, ncols: usize) -> Result<DMatrix<f64>, DocError> {
    if rows.len() != nrows {
        return Err(DocError::Field {
            field: field.into(),
            message: format!("expected {nrows} rows, got {}", rows.len()),
        });
    }
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != ncols) {
        return Err(DocError::Field {
            field: format!("{field}[{r}]"),
            message: format!("expected {ncols} columns, got {}", row.len()),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<DVector<f64>, DocError> {
    if v.len() != len {
        return Err(DocError::Field {
            field: field.into(),
            message: format!("expected length {len}, got {}", v.len()),
        });
    }
    Ok(DVector::from_column_slice(v))
}

fn bounds(field: &str, v: &[Option<f64>], len: usize, missing: f64) -> Result<DVector<f64>, DocError> {
    if v.len() != len {
        return Err(DocError::Field {
            field: field.into(),
            message: format!("expected length {len}, got {}", v.len()),
        });
    }
    Ok(DVector::from_iterator(len, v.iter().map(|b| b.unwrap_or(missing))))
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn finite_or_null(v: &DVector<f64>) -> Vec<Option<f64>> {
    v.iter().map(|b| b.is_finite().then_some(*b)).collect()
}

impl ProblemDocument {
    /// Parses a document; errors name the offending field and, for syntax
    /// problems, the line and column.
    pub fn from_json_str(text: &str) -> Result<Self, DocError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(parse_error)
    }

    /// Parses a document after applying dotted `key=value` overrides.
    pub fn from_json_str_with<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self, DocError> {
        if overrides.is_empty() {
            return Self::from_json_str(text);
        }
        let mut value: Value = serde_json::from_str(text).map_err(|e| DocError::Parse {
            path: "document".into(),
            message: e.to_string(),
        })?;
        apply_overrides(&mut value, overrides)?;
        serde_path_to_error::deserialize(value).map_err(parse_error)
    }

    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<Self, DocError> {
        let text = std::fs::read_to_string(path).map_err(|source| DocError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str_with(&text, overrides)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    /// Builds the game. Shape errors are reported against document fields.
    pub fn to_game(&self) -> Result<Game, DocError> {
        let l = self.players.len();
        let m = self.joint.m;
        let dims: Vec<usize> = self.players.iter().map(|p| p.n).collect();
        let mut players = Vec::with_capacity(l);
        for (i, p) in self.players.iter().enumerate() {
            let f = |s: &str| format!("players[{i}].{s}");
            let mut spec = PlayerSpec::new(
                vector(&f("c"), &p.c, p.n)?,
                matrix(&f("Q"), &p.q, p.n, p.n)?,
                bounds(&f("lower"), &p.lower, p.n, f64::NEG_INFINITY)?,
                bounds(&f("upper"), &p.upper, p.n, f64::INFINITY)?,
            );
            for (&j, r) in &p.r {
                let nj = *dims.get(j).ok_or_else(|| DocError::Field {
                    field: f(&format!("R.{j}")),
                    message: format!("no player {j} (players are 0-based, {l} given)"),
                })?;
                spec = spec.with_coupling(j, matrix(&f(&format!("R.{j}")), r, p.n, nj)?);
            }
            players.push(spec);
        }

        let jf = |s: String| format!("joint.{s}");
        if self.joint.a_mat.len() != l || self.joint.offsets.len() != l {
            return Err(DocError::Field {
                field: "joint".into(),
                message: format!("A and a need one entry per player ({l})"),
            });
        }
        let mut a = Vec::with_capacity(l);
        let mut offsets = Vec::with_capacity(l);
        for (i, &ni) in dims.iter().enumerate() {
            a.push(matrix(&jf(format!("A[{i}]")), &self.joint.a_mat[i], m, ni)?);
            offsets.push(vector(&jf(format!("a[{i}]")), &self.joint.offsets[i], m)?);
        }
        let quad = match &self.joint.c {
            None => vec![Vec::new(); l],
            Some(c) => {
                if c.len() != l {
                    return Err(DocError::Field {
                        field: "joint.C".into(),
                        message: format!("expected one entry per player ({l}), got {}", c.len()),
                    });
                }
                let mut quad = Vec::with_capacity(l);
                for (i, ci) in c.iter().enumerate() {
                    if !ci.is_empty() && ci.len() != m {
                        return Err(DocError::Field {
                            field: format!("joint.C[{i}]"),
                            message: format!("expected 0 or {m} matrices, got {}", ci.len()),
                        });
                    }
                    quad.push(
                        ci.iter()
                            .enumerate()
                            .map(|(t, rows)| matrix(&format!("joint.C[{i}][{t}]"), rows, dims[i], dims[i]))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                quad
            }
        };
        let b = vector("joint.b", &self.joint.b, m)?;
        Ok(Game::new(self.name.clone(), players, JointConstraints { a, offsets, quad, b })?)
    }

    pub fn penalty(&self) -> Box<dyn PenaltyFunction> {
        self.penalty.kind.build()
    }

    pub fn to_config(&self) -> Result<ContinuationConfig, SolveError> {
        let s = &self.solver;
        let cfg = ContinuationConfig {
            schedule: self.schedule,
            master: MasterConfig {
                lambda: s.lambda,
                tol_u: s.tol_u,
                max_iter: s.max_iter_master,
                anderson_memory: s.anderson_memory,
                nep: NepConfig {
                    tol: s.eps_nep,
                    max_iter: s.max_iter_nep,
                    anderson_memory: s.anderson_memory,
                    newton: s.newton,
                    ..NepConfig::default()
                },
            },
            eps_feas: s.eps_feas,
            eps_eq: s.eps_eq,
            shares: self.shares,
        };
        cfg.schedule.validate()?;
        cfg.master.validate(self.penalty().cocoercivity())?;
        if !(cfg.eps_feas >= 0.0 && cfg.eps_eq >= 0.0) {
            return Err(SolveError::Config("solver.eps_feas and solver.eps_eq must be non-negative".into()));
        }
        Ok(cfg)
    }

    /// Document for `game` with default solver settings.
    pub fn from_game(game: &Game) -> Self {
        let joint = game.joint();
        let players = game
            .players()
            .iter()
            .map(|p| PlayerDoc {
                n: p.dim(),
                c: p.c.iter().copied().collect(),
                q: rows_of(&p.q),
                r: p.couplings.iter().map(|(&j, r)| (j, rows_of(r))).collect(),
                lower: finite_or_null(&p.lower),
                upper: finite_or_null(&p.upper),
            })
            .collect();
        let c = (!joint.is_affine()).then(|| {
            joint
                .quad
                .iter()
                .map(|ci| ci.iter().map(rows_of).collect())
                .collect()
        });
        Self {
            name: game.name().to_string(),
            players,
            joint: JointDoc {
                m: game.m(),
                a_mat: joint.a.iter().map(rows_of).collect(),
                offsets: joint.offsets.iter().map(|v| v.iter().copied().collect()).collect(),
                c,
                b: joint.b.iter().copied().collect(),
            },
            shares: ShareFlags::default(),
            penalty: PenaltyDoc::default(),
            schedule: TauSchedule::default(),
            solver: SolverDoc::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;

    const S1: &str = r#"{
        "name": "s1",
        "players": [
            {"n": 1, "c": [1.0], "Q": [[1.0]], "lower": [0.0], "upper": [10.0]},
            {"n": 1, "c": [1.0], "Q": [[1.0]], "lower": [0.0], "upper": [10.0]}
        ],
        "joint": {"m": 1, "A": [[[1.0]], [[1.0]]], "a": [[0.0], [0.0]], "b": [1.0]}
    }"#;

    #[test]
    fn parses_minimal_document() {
        let doc = ProblemDocument::from_json_str(S1).unwrap();
        let game = doc.to_game().unwrap();
        assert_eq!(game, benchmarks::s1());
        assert_eq!(doc.schedule, TauSchedule::default());
        assert_eq!(doc.to_config().unwrap(), ContinuationConfig::default());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut games = benchmarks::shipped().to_vec();
        games.extend((0..10).map(benchmarks::random_instance));
        for g in games {
            let doc = ProblemDocument::from_game(&g);
            let again = ProblemDocument::from_json_str(&doc.to_json_pretty()).unwrap();
            assert_eq!(again, doc);
            assert_eq!(again.to_game().unwrap(), g);
        }
    }

    #[test]
    fn infinite_bounds_are_null() {
        let text = S1.replace("\"upper\": [10.0]}", "\"upper\": [null]}");
        let g = ProblemDocument::from_json_str(&text).unwrap().to_game().unwrap();
        assert_eq!(g.upper()[1], f64::INFINITY);
        let doc = ProblemDocument::from_game(&g);
        assert_eq!(doc.players[1].upper, vec![None]);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let text = S1.replace("\"n\": 1, \"c\"", "\"n\": 1, \"bogus\": 3, \"c\"");
        match ProblemDocument::from_json_str(&text) {
            Err(DocError::Parse { path, message }) => {
                assert_eq!(path, "players[0].bogus");
                assert!(message.contains("bogus") && message.contains("line"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = S1.replace("\"b\": [1.0]", "\"b\": [1.0], \"B\": 2");
        assert!(matches!(ProblemDocument::from_json_str(&text), Err(DocError::Parse { .. })));
    }

    #[test]
    fn shape_errors_name_the_field() {
        let text = S1.replace("\"Q\": [[1.0]], \"lower\": [0.0], \"upper\": [10.0]},\n", "\"Q\": [[1.0, 2.0]], \"lower\": [0.0], \"upper\": [10.0]},\n");
        match ProblemDocument::from_json_str(&text).unwrap().to_game() {
            Err(DocError::Field { field, .. }) => assert_eq!(field, "players[0].Q[0]"),
            other => panic!("{other:?}"),
        }
        let text = S1.replace("\"b\": [1.0]", "\"b\": [1.0, 2.0]");
        assert!(matches!(
            ProblemDocument::from_json_str(&text).unwrap().to_game(),
            Err(DocError::Field { .. })
        ));
    }

    #[test]
    fn overrides_apply_before_parsing() {
        let doc = ProblemDocument::from_json_str_with(S1, &["schedule.k_max=0", "schedule.tau0=1", "solver.lambda=0.5"]).unwrap();
        assert_eq!(doc.schedule.k_max, 0);
        assert_eq!(doc.solver.lambda, 0.5);
        let bad = ProblemDocument::from_json_str_with(S1, &["solver.lamda=0.5"]);
        assert!(matches!(bad, Err(DocError::Parse { ref path, .. }) if path.starts_with("solver")));
        let bad = ProblemDocument::from_json_str_with(S1, &["solver.lambda=3"]).unwrap();
        assert!(bad.to_config().is_err());
    }

    #[test]
    fn shipped_files_match_builtin_benchmarks() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("benchmarks");
        for g in benchmarks::shipped() {
            let doc = ProblemDocument::load::<&str>(&dir.join(format!("{}.json", g.name())), &[]).unwrap();
            assert_eq!(doc.to_game().unwrap(), g);
            assert_eq!(doc.to_config().unwrap(), ContinuationConfig::default());
        }
    }
}
