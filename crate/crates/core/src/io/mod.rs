//! JSON problem documents, dotted overrides, CSV traces and run summaries.

mod document;
mod overrides;
mod trace;

pub use document::{DocError, JointDoc, PenaltyDoc, PlayerDoc, ProblemDocument, SolverDoc};
pub use overrides::{apply_override, apply_overrides};
pub use trace::{ground_truth_json, summary_json, trace_csv, trace_header, write_trace};
