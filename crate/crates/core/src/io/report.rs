//! Run reports: assembly from a run, overrides, and the canonical serializer.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::engine::{estimate, sensitivity_sweep, Column, CompiledModel, OverrideSet, PosteriorSummary, RunConfig, SampleSet, SensitivityRow};
use crate::error::{Error, Result};
use crate::graph::{ModelGraph, NodeId, Value, ValueKind};

pub const ENGINE_VERSION: &str = concat!("mtair-core ", env!("CARGO_PKG_VERSION"));

/// Nodes carrying this tag get a CDF in every report.
pub const TIMELINE_TAG: &str = "timeline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub samples: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Explicit overrides as given, excluding those supplied by the preset.
    #[serde(default)]
    pub overrides: BTreeMap<NodeId, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineReport {
    pub node: NodeId,
    pub start: i32,
    /// P(arrival by the end of year start + i).
    pub cdf: Vec<f64>,
    pub never_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub target: NodeId,
    pub rows: Vec<SensitivityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub engine_version: String,
    pub config: ReportConfig,
    pub summaries: Vec<PosteriorSummary>,
    #[serde(default)]
    pub timelines: Vec<TimelineReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// What a caller asks for; shared by the CLI and the HTTP API.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRequest {
    pub samples: u64,
    pub seed: u64,
    pub preset: Option<String>,
    /// Literal overrides keyed by node id, decoded against the node kinds.
    pub overrides: BTreeMap<String, Json>,
    /// Nodes to summarize; the model outputs when `None`.
    pub targets: Option<Vec<String>>,
}

pub fn parse_node_id(graph: &ModelGraph, raw: &str) -> Result<NodeId> {
    let id = NodeId::new(raw).map_err(|_| Error::NodeNotFound(raw.to_string()))?;
    if graph.node(&id).is_none() {
        return Err(Error::NodeNotFound(raw.to_string()));
    }
    Ok(id)
}

/// Decode one override literal (JSON) against the node's kind.
pub fn decode_override(graph: &ModelGraph, raw_id: &str, literal: &Json) -> Result<(NodeId, Value)> {
    let id = parse_node_id(graph, raw_id)?;
    let kind = &graph.node(&id).expect("checked").value_kind;
    let value = Value::from_json(literal, kind).map_err(|m| Error::KindMismatch(format!("`{id}`: {m}")))?;
    Ok((id, value))
}

pub fn preset_overrides(graph: &ModelGraph, name: &str) -> Result<OverrideSet> {
    let preset = graph.presets.get(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    Ok(OverrideSet {
        assignments: preset.clone(),
    })
}

/// Preset first, then explicit overrides on top.
pub fn resolve_overrides(graph: &ModelGraph, preset: Option<&str>, overrides: &BTreeMap<String, Json>) -> Result<(OverrideSet, BTreeMap<NodeId, Json>)> {
    let mut set = match preset {
        Some(name) => preset_overrides(graph, name)?,
        None => OverrideSet::new(),
    };
    let mut echo = BTreeMap::new();
    for (raw, literal) in overrides {
        let (id, value) = decode_override(graph, raw, literal)?;
        let kind = &graph.node(&id).expect("checked").value_kind;
        echo.insert(id.clone(), value.to_json(kind));
        set.assignments.insert(id, value);
    }
    Ok((set, echo))
}

fn timeline(samples: &SampleSet, id: &NodeId, horizon: (i32, i32)) -> Option<TimelineReport> {
    let len = (horizon.1 - horizon.0 + 1).max(0) as usize;
    let n = samples.samples() as f64;
    let (start, cdf) = match (samples.column(id)?, samples.kind(id)?) {
        (Column::Year(years), _) => {
            let mut counts = vec![0u64; len];
            for y in years.iter().flatten() {
                if let Some(i) = y.checked_sub(horizon.0).filter(|i| *i >= 0) {
                    if let Some(c) = counts.get_mut(i as usize) {
                        *c += 1;
                    }
                } else if let Some(c) = counts.first_mut() {
                    *c += 1;
                }
            }
            let mut acc = 0u64;
            let cdf: Vec<f64> = counts
                .iter()
                .map(|c| {
                    acc += c;
                    acc as f64 / n
                })
                .collect();
            (horizon.0, cdf)
        }
        (Column::SeriesSum(sums), ValueKind::Series { start, .. }) => (*start, sums.iter().map(|s| s / n).collect()),
        (Column::Series(rows), ValueKind::Series { start, .. }) => {
            let width = rows.first().map_or(0, Vec::len);
            (*start, (0..width).map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / n).collect())
        }
        _ => return None,
    };
    let never_mass = 1.0 - cdf.last().copied().unwrap_or(0.0);
    Some(TimelineReport {
        node: id.clone(),
        start,
        cdf,
        never_mass,
    })
}

/// Summaries for the requested targets plus CDFs for every timeline-tagged node.
pub fn report_from_samples(model: &CompiledModel, samples: &SampleSet, config: ReportConfig, targets: &[NodeId]) -> Result<RunReport> {
    let graph = model.graph();
    let summaries = targets.iter().map(|t| estimate(samples, t)).collect::<Result<Vec<_>>>()?;
    let timelines = graph
        .nodes
        .iter()
        .filter(|n| n.tags.contains(TIMELINE_TAG))
        .filter_map(|n| timeline(samples, &n.id, graph.horizon))
        .collect();
    Ok(RunReport {
        engine_version: ENGINE_VERSION.to_string(),
        config,
        summaries,
        timelines,
        sensitivity: None,
        wall_time_ms: None,
    })
}

fn targets_or_outputs(graph: &ModelGraph, targets: Option<&[String]>) -> Result<Vec<NodeId>> {
    match targets {
        Some(list) => list.iter().map(|t| parse_node_id(graph, t)).collect(),
        None => Ok(graph.outputs.clone()),
    }
}

/// Single entry point for `mtair run` and `POST /api/run`.
pub fn build_run_report(model: &CompiledModel, request: &RunRequest) -> Result<RunReport> {
    let graph = model.graph();
    let (overrides, echo) = resolve_overrides(graph, request.preset.as_deref(), &request.overrides)?;
    let targets = targets_or_outputs(graph, request.targets.as_deref())?;
    let config = RunConfig {
        overrides,
        ..RunConfig::new(request.samples, request.seed)
    };
    let samples = model.run(&config)?;
    let echo = ReportConfig {
        samples: request.samples,
        seed: request.seed,
        preset: request.preset.clone(),
        overrides: echo,
    };
    report_from_samples(model, &samples, echo, &targets)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensitivityRequest {
    pub target: String,
    /// The model's crux list when `None`.
    pub cruxes: Option<Vec<String>>,
    pub samples: u64,
    pub seed: u64,
    pub preset: Option<String>,
    pub overrides: BTreeMap<String, Json>,
}

/// Single entry point for `mtair sensitivity` and `POST /api/sensitivity`.
pub fn build_sensitivity_report(model: &CompiledModel, request: &SensitivityRequest) -> Result<SensitivityReport> {
    Ok(build_sensitivity_run(model, request)?.report)
}

/// A sensitivity report with the same provenance a run report carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRun {
    pub engine_version: String,
    pub config: ReportConfig,
    #[serde(flatten)]
    pub report: SensitivityReport,
}

pub fn build_sensitivity_run(model: &CompiledModel, request: &SensitivityRequest) -> Result<SensitivityRun> {
    let graph = model.graph();
    let target = parse_node_id(graph, &request.target)?;
    let cruxes = match &request.cruxes {
        Some(list) => list.iter().map(|c| parse_node_id(graph, c)).collect::<Result<Vec<_>>>()?,
        None => graph.cruxes.clone(),
    };
    let (overrides, echo) = resolve_overrides(graph, request.preset.as_deref(), &request.overrides)?;
    let config = RunConfig {
        overrides,
        ..RunConfig::new(request.samples, request.seed)
    };
    let rows = sensitivity_sweep(model, &target, &cruxes, &config)?;
    Ok(SensitivityRun {
        engine_version: ENGINE_VERSION.to_string(),
        config: ReportConfig {
            samples: request.samples,
            seed: request.seed,
            preset: request.preset.clone(),
            overrides: echo,
        },
        report: SensitivityReport { target, rows },
    })
}

/// Writes every f64 with 17 significant digits, which always reads back exactly.
#[derive(Debug, Clone, Default)]
pub struct Digits17<F = serde_json::ser::PrettyFormatter<'static>>(pub F);

pub fn format_f64(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if (0..17).contains(&exp) {
        let split = exp as usize + 1;
        let frac = if split < digits.len() { &digits[split..] } else { "0" };
        format!("{sign}{}.{frac}", &digits[..split])
    } else if (-7..0).contains(&exp) {
        format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
    } else {
        format!("{sign}{}.{}e{exp}", &digits[..1], &digits[1..])
    }
}

impl<F: serde_json::ser::Formatter> serde_json::ser::Formatter for Digits17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Any serializable value, pretty-printed with 17-digit floats.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Digits17(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

/// Field order follows the struct declarations, so output is stable.
/// One-line form of [`to_canonical_json`], without the trailing newline.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Digits17(serde_json::ser::CompactFormatter));
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

pub fn serialize_report(report: &RunReport) -> String {
    to_canonical_json(report)
}

pub fn parse_report(text: &str) -> serde_json::Result<RunReport> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::id;
    use crate::io::document::parse_model_document;
    use proptest::prelude::*;

    fn empty_report() -> RunReport {
        RunReport {
            engine_version: ENGINE_VERSION.into(),
            config: ReportConfig {
                samples: 10,
                seed: 42,
                preset: None,
                overrides: BTreeMap::new(),
            },
            summaries: Vec::new(),
            timelines: Vec::new(),
            sensitivity: None,
            wall_time_ms: None,
        }
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_f64(0.5), "0.50000000000000000");
        assert_eq!(format_f64(1.0), "1.0000000000000000");
        assert_eq!(format_f64(-2.5e-3), "-0.0025000000000000001");
        assert_eq!(format_f64(1e300), "1.0000000000000001e300");
        assert_eq!(format_f64(0.1), "0.10000000000000001");
        assert_eq!(format_f64(0.0), "0.0");
        for s in ["0.50000000000000000", "0.10000000000000001"] {
            assert_eq!(s.chars().filter(|c| c.is_ascii_digit()).count() - 1, 17);
        }
    }

    #[test]
    fn empty_report_round_trips_bytewise() {
        let text = serialize_report(&empty_report());
        let back = parse_report(&text).unwrap();
        assert_eq!(back, empty_report());
        assert_eq!(serialize_report(&back), text);
    }

    #[test]
    fn half_is_exact() {
        let mut r = empty_report();
        r.wall_time_ms = Some(0.5);
        let back = parse_report(&serialize_report(&r)).unwrap();
        assert_eq!(back.wall_time_ms, Some(0.5));
    }

    proptest! {
        #[test]
        fn floats_read_back_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let text = format_f64(x);
            let back: f64 = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    const NOT_MODEL: &str = r#"{
      "format_version": 1,
      "meta": {"title": "not", "horizon_start": 2022, "horizon_end": 2030},
      "modules": [{"id": "m"}],
      "nodes": [
        {"id": "a", "module": "m", "kind": "chance", "distribution": {"type": "bernoulli", "p": 0.5}, "value_kind": "bool"},
        {"id": "b", "module": "m", "kind": "formula", "builtin": "NOT", "parents": ["a"], "value_kind": "bool"},
        {"id": "y", "module": "m", "kind": "chance", "distribution": {"type": "uniform", "lo": 2020, "hi": 2040}, "value_kind": "year", "tags": ["timeline"]}
      ],
      "outputs": ["b"],
      "cruxes": ["a"],
      "presets": {"on": {"a": true}}
    }"#;

    fn request() -> RunRequest {
        RunRequest {
            samples: 2000,
            seed: 42,
            ..RunRequest::default()
        }
    }

    #[test]
    fn report_is_reproducible() {
        let model = CompiledModel::new(&parse_model_document(NOT_MODEL).unwrap()).unwrap();
        let a = serialize_report(&build_run_report(&model, &request()).unwrap());
        let b = serialize_report(&build_run_report(&model, &request()).unwrap());
        assert_eq!(a, b);
        let report = parse_report(&a).unwrap();
        assert_eq!(report.summaries.len(), 1);
        assert_eq!(report.timelines[0].node, id("y"));
        assert_eq!(report.timelines[0].cdf.len(), 9);
        assert_eq!(serialize_report(&report), a);
    }

    #[test]
    fn year_timeline_counts_early_arrivals_in_first_year() {
        let model = CompiledModel::new(&parse_model_document(NOT_MODEL).unwrap()).unwrap();
        let r = build_run_report(&model, &request()).unwrap();
        let t = &r.timelines[0];
        // Uniform(2020, 2040) floored: P(year <= 2022) = 3/20, P(<= 2030) = 11/20.
        assert!((t.cdf[0] - 0.15).abs() < 0.03);
        assert!((t.cdf[8] - 0.55).abs() < 0.04);
        assert!((t.never_mass + t.cdf[8] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn preset_and_overrides() {
        let model = CompiledModel::new(&parse_model_document(NOT_MODEL).unwrap()).unwrap();
        let mut req = request();
        req.preset = Some("on".into());
        let r = build_run_report(&model, &req).unwrap();
        assert_eq!(r.summaries[0].probability_true, Some(0.0));
        req.overrides.insert("a".into(), Json::Bool(false));
        let r = build_run_report(&model, &req).unwrap();
        assert_eq!(r.summaries[0].probability_true, Some(1.0));
        assert_eq!(r.config.overrides.get(&id("a")), Some(&Json::Bool(false)));

        req.preset = Some("off".into());
        assert_eq!(build_run_report(&model, &req).unwrap_err().code(), "UNKNOWN_PRESET");
        req.preset = None;
        req.overrides.insert("a".into(), Json::from(3));
        assert_eq!(build_run_report(&model, &req).unwrap_err().code(), "KIND_MISMATCH");
        req.overrides.clear();
        req.overrides.insert("zz".into(), Json::Bool(true));
        assert_eq!(build_run_report(&model, &req).unwrap_err().code(), "NODE_NOT_FOUND");
    }

    #[test]
    fn sensitivity_on_not_model() {
        let model = CompiledModel::new(&parse_model_document(NOT_MODEL).unwrap()).unwrap();
        let req = SensitivityRequest {
            target: "b".into(),
            cruxes: Some(vec!["a".into()]),
            samples: 1000,
            seed: 7,
            ..SensitivityRequest::default()
        };
        let s = build_sensitivity_report(&model, &req).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].delta, -1.0);
    }
}
