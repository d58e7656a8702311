//! Monte Carlo evaluation of a model graph, with do-style overrides,
//! posterior summaries and crux sensitivity sweeps.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{naive_bayes_posterior, EvidenceItem, EvidenceSource};
use crate::error::{Error, Result};
use crate::formula::{self, CompiledFormula};
use crate::graph::{topological_order, validate_graph, ModelGraph, NodeId, NodeKind, Value, ValueKind};
use crate::stochastic::{draw, DistributionSpec, RngStream};

const CHUNK: u64 = 256;

/// Intervention values, clamped in every sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverrideSet {
    pub assignments: BTreeMap<NodeId, Value>,
}

impl OverrideSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: NodeId, value: Value) -> Self {
        self.assignments.insert(id, value);
        self
    }

    /// Adds every assignment of `other`, which wins on conflicts.
    pub fn extend(&mut self, other: &OverrideSet) {
        for (k, v) in &other.assignments {
            self.assignments.insert(k.clone(), v.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub samples: u64,
    pub seed: u64,
    pub overrides: OverrideSet,
    /// Keep every sampled series rather than per-year sums.
    pub retain_series: bool,
}

impl RunConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        RunConfig {
            samples,
            seed,
            overrides: OverrideSet::default(),
            retain_series: false,
        }
    }
}

#[derive(Debug, Clone)]
enum Eval {
    Chance { spec: DistributionSpec, year: bool },
    Formula(CompiledFormula),
    Classifier { prior: f64, evidence: Vec<(EvidenceItem, Option<usize>)>, draw: bool },
    Alias(usize),
}

#[derive(Debug, Clone)]
struct CompiledNode {
    id: NodeId,
    kind: ValueKind,
    parents: Vec<usize>,
    eval: Eval,
}

/// A validated graph in evaluation order. Node `i` draws from stream `i`.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    graph: ModelGraph,
    nodes: Vec<CompiledNode>,
    index: HashMap<NodeId, usize>,
}

impl CompiledModel {
    pub fn new(graph: &ModelGraph) -> Result<Self> {
        let report = validate_graph(graph);
        if let Some(d) = report.errors().next() {
            let more = report.errors().count() - 1;
            let suffix = if more > 0 { format!(" (and {more} more)") } else { String::new() };
            return Err(Error::InvalidGraph(format!("{d}{suffix}")));
        }
        let order = topological_order(graph)?;
        let index: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut nodes = Vec::with_capacity(order.len());
        for id in &order {
            let spec = graph.node(id).expect("ordered ids exist");
            let parents: Vec<usize> = spec.parents.iter().map(|p| index[p]).collect();
            let eval = match &spec.kind {
                NodeKind::Chance(d) => Eval::Chance {
                    spec: d.clone(),
                    year: spec.value_kind == ValueKind::Year,
                },
                NodeKind::Formula { builtin, params } => {
                    let kinds: Vec<&ValueKind> = spec
                        .parents
                        .iter()
                        .map(|p| &graph.node(p).expect("validated").value_kind)
                        .collect();
                    Eval::Formula(formula::compile(builtin, params, &kinds, &spec.value_kind, graph.horizon)?)
                }
                NodeKind::Classifier { prior, evidence } => Eval::Classifier {
                    prior: *prior,
                    evidence: evidence
                        .iter()
                        .map(|e| {
                            let (observed, source) = match &e.source {
                                EvidenceSource::Node(n) => (None, Some(index[n])),
                                EvidenceSource::Fixed(b) => (Some(*b), None),
                                EvidenceSource::Missing => (None, None),
                            };
                            (EvidenceItem::new(&e.name, e.p_given_h, e.p_given_not_h, observed), source)
                        })
                        .collect(),
                    draw: spec.value_kind == ValueKind::Bool,
                },
                NodeKind::Alias { target } => Eval::Alias(index[target]),
            };
            nodes.push(CompiledNode {
                id: id.clone(),
                kind: spec.value_kind.clone(),
                parents,
                eval,
            });
        }
        Ok(CompiledModel {
            graph: graph.clone(),
            nodes,
            index,
        })
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    /// Node ids in evaluation order.
    pub fn order(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().map(|n| &n.id)
    }

    pub fn kind(&self, id: &NodeId) -> Option<&ValueKind> {
        self.index.get(id).map(|&i| &self.nodes[i].kind)
    }

    /// Resolves an override set to node indices, checking kinds.
    fn clamp_table(&self, overrides: &OverrideSet) -> Result<Vec<Option<Value>>> {
        let mut table = vec![None; self.nodes.len()];
        for (id, value) in &overrides.assignments {
            let &i = self.index.get(id).ok_or_else(|| Error::NodeNotFound(id.to_string()))?;
            if !self.nodes[i].kind.admits(value) {
                return Err(Error::KindMismatch(format!(
                    "override for `{id}` does not fit kind {}",
                    self.nodes[i].kind.tag()
                )));
            }
            table[i] = Some(value.clone());
        }
        Ok(table)
    }

    fn eval_node(&self, i: usize, values: &[Value], seed: u64, sample_index: u64) -> Result<Value> {
        let node = &self.nodes[i];
        let mut rng = RngStream::new(seed, sample_index, i as u64);
        match &node.eval {
            Eval::Chance { spec, year } => {
                let v = draw(spec, &mut rng);
                Ok(match (year, v) {
                    (true, Value::Real(x)) => {
                        let y = x.floor();
                        Value::Year((y.is_finite() && y <= self.graph.horizon.1 as f64).then_some(y as i32))
                    }
                    (_, v) => v,
                })
            }
            Eval::Formula(f) => {
                let inputs: Vec<&Value> = node.parents.iter().map(|&p| &values[p]).collect();
                f.eval(&inputs, &mut rng)
            }
            Eval::Classifier { prior, evidence, draw } => {
                let items: Vec<EvidenceItem> = evidence
                    .iter()
                    .map(|(item, source)| {
                        let mut item = item.clone();
                        if let Some(s) = source {
                            item.observed = values[*s].as_bool();
                        }
                        item
                    })
                    .collect();
                let posterior = naive_bayes_posterior(*prior, &items)?;
                Ok(if *draw {
                    Value::Bool(rng.bernoulli(posterior))
                } else {
                    Value::Real(posterior)
                })
            }
            Eval::Alias(t) => Ok(values[*t].clone()),
        }
    }

    fn run_sample(&self, clamp: &[Option<Value>], seed: u64, sample_index: u64, values: &mut Vec<Value>) -> Result<()> {
        values.clear();
        for i in 0..self.nodes.len() {
            let v = match &clamp[i] {
                Some(v) => v.clone(),
                None => self.eval_node(i, values, seed, sample_index).map_err(|e| match e {
                    e @ Error::BuiltinFailure { .. } => e,
                    e => Error::BuiltinFailure {
                        node: self.nodes[i].id.clone(),
                        sample: sample_index,
                        message: format!("{} ({})", e, e.code()),
                    },
                })?,
            };
            values.push(v);
        }
        Ok(())
    }

    /// Node values of one sample, in evaluation order.
    pub fn sample_values(&self, config: &RunConfig, sample_index: u64) -> Result<Vec<(NodeId, Value)>> {
        let clamp = self.clamp_table(&config.overrides)?;
        let mut values = Vec::new();
        self.run_sample(&clamp, config.seed, sample_index, &mut values)?;
        Ok(self.nodes.iter().map(|n| n.id.clone()).zip(values).collect())
    }

    pub fn run(&self, config: &RunConfig) -> Result<SampleSet> {
        if config.samples == 0 {
            return Err(Error::InvalidParams("samples must be at least 1".into()));
        }
        let clamp = self.clamp_table(&config.overrides)?;
        let horizon_len = self.graph.horizon_len();
        let chunks = config.samples.div_ceil(CHUNK);
        let parts: Vec<Result<Vec<Column>>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(config.samples);
                let mut cols: Vec<Column> = self
                    .nodes
                    .iter()
                    .map(|n| Column::empty(&n.kind, config.retain_series, horizon_len))
                    .collect();
                let mut values = Vec::with_capacity(self.nodes.len());
                for s in lo..hi {
                    self.run_sample(&clamp, config.seed, s, &mut values)?;
                    for (col, v) in cols.iter_mut().zip(values.drain(..)) {
                        col.push(v);
                    }
                }
                Ok(cols)
            })
            .collect();
        let mut columns: Vec<Column> = self
            .nodes
            .iter()
            .map(|n| Column::empty(&n.kind, config.retain_series, horizon_len))
            .collect();
        for part in parts {
            for (col, chunk) in columns.iter_mut().zip(part?) {
                col.append(chunk);
            }
        }
        Ok(SampleSet {
            ids: self.nodes.iter().map(|n| n.id.clone()).collect(),
            kinds: self.nodes.iter().map(|n| n.kind.clone()).collect(),
            index: self.index.clone(),
            columns,
            samples: config.samples,
            horizon: self.graph.horizon,
        })
    }
}

/// Per-node sampled values.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Bool(Vec<bool>),
    Real(Vec<f64>),
    Category(Vec<u32>),
    Year(Vec<Option<i32>>),
    /// Per-year sums over samples.
    SeriesSum(Vec<f64>),
    Series(Vec<Vec<f64>>),
}

impl Column {
    fn empty(kind: &ValueKind, retain_series: bool, horizon_len: usize) -> Self {
        match kind {
            ValueKind::Bool => Column::Bool(Vec::new()),
            ValueKind::Real { .. } => Column::Real(Vec::new()),
            ValueKind::Category { .. } => Column::Category(Vec::new()),
            ValueKind::Year => Column::Year(Vec::new()),
            ValueKind::Series { .. } if retain_series => Column::Series(Vec::new()),
            ValueKind::Series { .. } => Column::SeriesSum(vec![0.0; kind.series_len().unwrap_or(horizon_len)]),
        }
    }

    fn push(&mut self, v: Value) {
        match (self, v) {
            (Column::Bool(c), Value::Bool(b)) => c.push(b),
            (Column::Real(c), Value::Real(x)) => c.push(x),
            (Column::Category(c), Value::Category(x)) => c.push(x),
            (Column::Year(c), Value::Year(y)) => c.push(y),
            (Column::SeriesSum(acc), Value::Series(s)) => {
                for (a, x) in acc.iter_mut().zip(s) {
                    *a += x;
                }
            }
            (Column::Series(c), Value::Series(s)) => c.push(s),
            (col, v) => panic!("value {v:?} does not fit column {col:?}"),
        }
    }

    fn append(&mut self, other: Column) {
        match (self, other) {
            (Column::Bool(a), Column::Bool(b)) => a.extend(b),
            (Column::Real(a), Column::Real(b)) => a.extend(b),
            (Column::Category(a), Column::Category(b)) => a.extend(b),
            (Column::Year(a), Column::Year(b)) => a.extend(b),
            (Column::SeriesSum(a), Column::SeriesSum(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            (Column::Series(a), Column::Series(b)) => a.extend(b),
            _ => unreachable!("columns built from the same kinds"),
        }
    }
}

/// Result of a run: one column per node, immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    ids: Vec<NodeId>,
    kinds: Vec<ValueKind>,
    index: HashMap<NodeId, usize>,
    columns: Vec<Column>,
    samples: u64,
    horizon: (i32, i32),
}

impl SampleSet {
    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn column(&self, id: &NodeId) -> Option<&Column> {
        self.index.get(id).map(|&i| &self.columns[i])
    }

    pub fn kind(&self, id: &NodeId) -> Option<&ValueKind> {
        self.index.get(id).map(|&i| &self.kinds[i])
    }

    /// Fraction of samples in which a Bool node is true.
    pub fn probability_true(&self, id: &NodeId) -> Result<f64> {
        match self.column(id) {
            Some(Column::Bool(c)) => Ok(c.iter().filter(|b| **b).count() as f64 / c.len() as f64),
            Some(_) => Err(Error::TargetNotBool(id.to_string())),
            None => Err(Error::NodeNotFound(id.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub p: f64,
    /// `None` when the quantile falls on "never".
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryProbability {
    pub label: String,
    pub probability: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub node: NodeId,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quantiles: Vec<Quantile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub category_probabilities: Vec<CategoryProbability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability_never: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series_means: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_start: Option<i32>,
}

pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

fn binomial_se(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).max(0.0).sqrt()
}

/// Inverse empirical CDF on sorted values: the ceil(p n)-th smallest.
fn order_statistic(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn estimate(samples: &SampleSet, node: &NodeId) -> Result<PosteriorSummary> {
    let col = samples.column(node).ok_or_else(|| Error::NodeNotFound(node.to_string()))?;
    let kind = samples.kind(node).expect("column implies kind");
    let n = samples.samples as f64;
    let mut out = PosteriorSummary {
        node: node.clone(),
        kind: kind.tag().to_string(),
        mean: None,
        std_error: None,
        quantiles: Vec::new(),
        probability_true: None,
        category_probabilities: Vec::new(),
        probability_never: None,
        series_means: Vec::new(),
        series_start: None,
    };
    match col {
        Column::Bool(c) => {
            let p = c.iter().filter(|b| **b).count() as f64 / n;
            out.mean = Some(p);
            out.std_error = Some(binomial_se(p, n));
            out.probability_true = Some(p);
        }
        Column::Real(c) => {
            let (mean, se) = mean_and_se(c);
            out.mean = Some(mean);
            out.std_error = Some(se);
            let mut sorted = c.clone();
            sorted.sort_by(f64::total_cmp);
            out.quantiles = SUMMARY_QUANTILES
                .iter()
                .map(|&p| Quantile {
                    p,
                    value: Some(order_statistic(&sorted, p)),
                })
                .collect();
        }
        Column::Category(c) => {
            let labels = kind.labels().unwrap_or(&[]);
            let mut counts = vec![0u64; labels.len()];
            for &i in c {
                counts[i as usize] += 1;
            }
            out.category_probabilities = labels
                .iter()
                .zip(counts)
                .map(|(label, k)| {
                    let p = k as f64 / n;
                    CategoryProbability {
                        label: label.clone(),
                        probability: p,
                        std_error: binomial_se(p, n),
                    }
                })
                .collect();
        }
        Column::Year(c) => {
            let set: Vec<f64> = c.iter().filter_map(|y| y.map(f64::from)).collect();
            let never = (c.len() - set.len()) as f64 / n;
            out.probability_never = Some(never);
            out.std_error = Some(binomial_se(never, n));
            if !set.is_empty() {
                let (mean, se) = mean_and_se(&set);
                out.mean = Some(mean);
                out.std_error = Some(se);
            }
            // "never" sorts after every year.
            let mut sorted = set;
            sorted.sort_by(f64::total_cmp);
            out.quantiles = SUMMARY_QUANTILES
                .iter()
                .map(|&p| {
                    let k = ((p * n).ceil() as usize).clamp(1, c.len());
                    Quantile {
                        p,
                        value: sorted.get(k - 1).copied(),
                    }
                })
                .collect();
        }
        Column::SeriesSum(sums) => {
            out.series_means = sums.iter().map(|s| s / n).collect();
            out.series_start = Some(samples.horizon.0);
        }
        Column::Series(rows) => {
            let len = rows.first().map_or(0, Vec::len);
            out.series_means = (0..len).map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / n).collect();
            out.series_start = Some(samples.horizon.0);
        }
    }
    Ok(out)
}

pub fn run_monte_carlo(graph: &ModelGraph, config: &RunConfig) -> Result<SampleSet> {
    CompiledModel::new(graph)?.run(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub crux: NodeId,
    pub value_a: serde_json::Value,
    pub value_b: serde_json::Value,
    pub p_a: f64,
    pub p_b: f64,
    pub delta: f64,
    pub std_error_a: f64,
    pub std_error_b: f64,
}

/// Forces each crux to two values (true/false, or first/last label) under
/// common random numbers and reports the change in P(target).
pub fn sensitivity_sweep(
    model: &CompiledModel,
    target: &NodeId,
    cruxes: &[NodeId],
    config: &RunConfig,
) -> Result<Vec<SensitivityRow>> {
    match model.kind(target) {
        None => return Err(Error::NodeNotFound(target.to_string())),
        Some(ValueKind::Bool) => {}
        Some(_) => return Err(Error::TargetNotBool(target.to_string())),
    }
    let mut rows = Vec::with_capacity(cruxes.len());
    for crux in cruxes {
        let kind = model.kind(crux).ok_or_else(|| Error::NodeNotFound(crux.to_string()))?;
        let (a, b) = match kind {
            ValueKind::Bool => (Value::Bool(true), Value::Bool(false)),
            ValueKind::Category { labels } => (Value::Category(0), Value::Category(labels.len() as u32 - 1)),
            other => {
                return Err(Error::KindMismatch(format!(
                    "crux `{crux}` must be bool or category, got {}",
                    other.tag()
                )))
            }
        };
        let arm = |v: &Value| -> Result<f64> {
            let mut cfg = config.clone();
            cfg.overrides.assignments.insert(crux.clone(), v.clone());
            model.run(&cfg)?.probability_true(target)
        };
        let p_a = arm(&a)?;
        let p_b = arm(&b)?;
        let n = config.samples as f64;
        rows.push(SensitivityRow {
            crux: crux.clone(),
            value_a: a.to_json(kind),
            value_b: b.to_json(kind),
            p_a,
            p_b,
            delta: p_a - p_b,
            std_error_a: binomial_se(p_a, n),
            std_error_b: binomial_se(p_b, n),
        });
    }
    rows.sort_by(|x, y| y.delta.abs().total_cmp(&x.delta.abs()).then_with(|| x.crux.cmp(&y.crux)));
    Ok(rows)
}
