//! Hypothesis-graph models of AI risk: typed DAG, Monte Carlo engine, and the
//! forecasting and takeoff builtins used by formula nodes.

pub mod bayes;
pub mod engine;
pub mod error;
pub mod formula;
pub mod graph;
pub mod hardware;
pub mod io;
pub mod stochastic;
pub mod takeoff;
pub mod timelines;

pub use bayes::{naive_bayes_posterior, EvidenceItem, EvidenceSource, EvidenceSpec};
pub use engine::{
    estimate, run_monte_carlo, sensitivity_sweep, CompiledModel, OverrideSet, PosteriorSummary, RunConfig, SampleSet,
    SensitivityRow,
};
pub use error::{Error, Result};
pub use formula::evaluate_formula;
pub use graph::{
    resolve_alias, topological_order, validate_graph, Diagnostic, ModelGraph, NodeId, NodeKind, NodeSpec, Severity,
    ValidationReport, Value, ValueKind,
};
pub use stochastic::{DistributionSpec, RngStream};
pub use io::document::{
    model_structure, parse_model_document, read_model_document, serialize_model_document, shipped_model,
    ModelStructure, ParseOptions, ParseOutcome,
};
pub use io::report::{
    build_run_report, build_sensitivity_report, build_sensitivity_run, serialize_report, to_canonical_json, to_json_line, RunReport, RunRequest, SensitivityReport,
    SensitivityRequest, SensitivityRun, ENGINE_VERSION,
};
