//! Typed hypothesis graph: node identifiers, value kinds, node specifications,
//! and structural validation.
//!
//! A [`ModelGraph`] is a flat collection of nodes addressed by globally unique
//! dotted ids. Nodes are grouped into modules for presentation only; edges
//! (parent lists plus alias links) must form a DAG.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bayes::EvidenceSpec;
use crate::error::{Error, Result};
use crate::formula;
use crate::stochastic::DistributionSpec;

/// Dotted node identifier such as `takeoff.intelligence_explosion`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(path: impl Into<String>) -> Result<Self, String> {
        let path = path.into();
        if path.is_empty() {
            return Err("node id is empty".into());
        }
        for segment in path.split('.') {
            if segment.is_empty()
                || !segment
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
            {
                return Err(format!(
                    "invalid node id `{path}`: segments must match [a-z0-9_]+"
                ));
            }
        }
        Ok(NodeId(path))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;

    fn try_from(value: String) -> Result<Self, String> {
        NodeId::new(value)
    }
}

impl TryFrom<&str> for NodeId {
    type Error = String;

    fn try_from(value: &str) -> Result<Self, String> {
        NodeId::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> String {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        NodeId::new(s)
    }
}

/// Shorthand used heavily in tests and builders. Panics on malformed ids.
pub fn id(path: &str) -> NodeId {
    NodeId::new(path).unwrap_or_else(|e| panic!("{e}"))
}

/// The type of value a node holds in every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueKind {
    Bool,
    Real {
        #[serde(default, skip_serializing_if = "String::is_empty")]
        unit: String,
    },
    Category {
        labels: Vec<String>,
    },
    Year,
    Series {
        start: i32,
        end: i32,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        unit: String,
    },
}

impl ValueKind {
    pub fn real() -> Self {
        ValueKind::Real {
            unit: String::new(),
        }
    }

    pub fn category<S: AsRef<str>>(labels: &[S]) -> Self {
        ValueKind::Category {
            labels: labels.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn series(start: i32, end: i32) -> Self {
        ValueKind::Series {
            start,
            end,
            unit: String::new(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ValueKind::Bool => "bool",
            ValueKind::Real { .. } => "real",
            ValueKind::Category { .. } => "category",
            ValueKind::Year => "year",
            ValueKind::Series { .. } => "series",
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        match self {
            ValueKind::Category { labels } => Some(labels),
            _ => None,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<u32> {
        self.labels()?
            .iter()
            .position(|l| l == label)
            .map(|i| i as u32)
    }

    pub fn series_len(&self) -> Option<usize> {
        match self {
            ValueKind::Series { start, end, .. } if end >= start => {
                Some((end - start + 1) as usize)
            }
            _ => None,
        }
    }

    /// Structural problems with the kind itself.
    pub fn check(&self) -> Result<(), String> {
        match self {
            ValueKind::Category { labels } => {
                if labels.is_empty() {
                    return Err("category label set is empty".into());
                }
                let unique: BTreeSet<&String> = labels.iter().collect();
                if unique.len() != labels.len() {
                    return Err("category labels are not unique".into());
                }
                Ok(())
            }
            ValueKind::Series { start, end, .. } if start > end => {
                Err(format!("series start {start} is after end {end}"))
            }
            _ => Ok(()),
        }
    }

    /// True when `value` is a legal inhabitant of this kind.
    pub fn admits(&self, value: &Value) -> bool {
        match (self, value) {
            (ValueKind::Bool, Value::Bool(_)) => true,
            (ValueKind::Real { .. }, Value::Real(_)) => true,
            (ValueKind::Year, Value::Year(_)) => true,
            (ValueKind::Category { labels }, Value::Category(i)) => (*i as usize) < labels.len(),
            (ValueKind::Series { .. }, Value::Series(v)) => Some(v.len()) == self.series_len(),
            _ => false,
        }
    }
}

/// A single sampled value. `Year(None)` means "never" (no arrival within the horizon).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Real(f64),
    Category(u32),
    Year(Option<i32>),
    Series(Vec<f64>),
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_year(&self) -> Option<Option<i32>> {
        match self {
            Value::Year(y) => Some(*y),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<u32> {
        match self {
            Value::Category(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_series(&self) -> Option<&[f64]> {
        match self {
            Value::Series(s) => Some(s),
            _ => None,
        }
    }

    /// Decode a JSON literal (document presets, API overrides) against a kind.
    ///
    /// Categories are given by label, years by integer or the string `"never"`.
    pub fn from_json(json: &serde_json::Value, kind: &ValueKind) -> Result<Value, String> {
        use serde_json::Value as J;
        match (kind, json) {
            (ValueKind::Bool, J::Bool(b)) => Ok(Value::Bool(*b)),
            (ValueKind::Real { .. }, J::Number(n)) => n
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Value::Real)
                .ok_or_else(|| format!("`{n}` is not a finite number")),
            (ValueKind::Year, J::String(s)) if s == "never" => Ok(Value::Year(None)),
            (ValueKind::Year, J::Null) => Ok(Value::Year(None)),
            (ValueKind::Year, J::Number(n)) => match n.as_i64() {
                Some(y) if i32::try_from(y).is_ok() => Ok(Value::Year(Some(y as i32))),
                _ => Err(format!("`{n}` is not an integer year")),
            },
            (ValueKind::Category { labels }, J::String(s)) => labels
                .iter()
                .position(|l| l == s)
                .map(|i| Value::Category(i as u32))
                .ok_or_else(|| format!("`{s}` is not one of {labels:?}")),
            (ValueKind::Series { .. }, _) => Err("series nodes cannot be overridden".into()),
            (kind, other) => Err(format!("expected a {} literal, got `{other}`", kind.tag())),
        }
    }

    /// Parse a command-line literal (`true`, `0.3`, `never`, `2040`, a category label).
    pub fn parse_literal(text: &str, kind: &ValueKind) -> Result<Value, String> {
        let text = text.trim();
        let json = match kind {
            ValueKind::Bool => match text {
                "true" => serde_json::Value::Bool(true),
                "false" => serde_json::Value::Bool(false),
                _ => return Err(format!("expected true or false, got `{text}`")),
            },
            ValueKind::Real { .. } => serde_json::from_str::<serde_json::Value>(text)
                .ok()
                .filter(|v| v.is_number())
                .ok_or_else(|| format!("expected a number, got `{text}`"))?,
            ValueKind::Year => {
                if text == "never" {
                    serde_json::Value::String("never".into())
                } else {
                    let year: i64 = text
                        .parse()
                        .map_err(|_| format!("expected an integer year or never, got `{text}`"))?;
                    serde_json::Value::from(year)
                }
            }
            ValueKind::Category { .. } => serde_json::Value::String(text.to_string()),
            ValueKind::Series { .. } => return Err("series nodes cannot be overridden".into()),
        };
        Value::from_json(&json, kind)
    }

    /// Encode for reports and documents; the inverse of [`Value::from_json`].
    pub fn to_json(&self, kind: &ValueKind) -> serde_json::Value {
        match self {
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Real(x) => serde_json::Value::from(*x),
            Value::Year(Some(y)) => serde_json::Value::from(*y),
            Value::Year(None) => serde_json::Value::String("never".into()),
            Value::Category(i) => match kind.labels().and_then(|l| l.get(*i as usize)) {
                Some(label) => serde_json::Value::String(label.clone()),
                None => serde_json::Value::from(*i),
            },
            Value::Series(s) => serde_json::Value::from(s.clone()),
        }
    }
}

/// How a node obtains its value in each sample.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Drawn from an elicited distribution.
    Chance(DistributionSpec),
    /// Deterministic or stochastic function of the parents, by builtin name.
    Formula {
        builtin: String,
        params: BTreeMap<String, serde_json::Value>,
    },
    /// Naive Bayes posterior over a latent hypothesis. Bool-kinded classifiers
    /// draw the hypothesis per sample; Real-kinded ones emit the posterior.
    Classifier {
        prior: f64,
        evidence: Vec<EvidenceSpec>,
    },
    /// Copy of another node's value.
    Alias { target: NodeId },
}

impl NodeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Chance(_) => "chance",
            NodeKind::Formula { .. } => "formula",
            NodeKind::Classifier { .. } => "classifier",
            NodeKind::Alias { .. } => "alias",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub module: NodeId,
    pub kind: NodeKind,
    pub parents: Vec<NodeId>,
    pub value_kind: ValueKind,
    pub doc: String,
    pub tags: BTreeSet<String>,
    /// Where the node comes from: a section title, or "elicitation placeholder".
    pub reference: String,
    /// Elicited values are stand-ins awaiting real expert input.
    pub placeholder: bool,
    /// Cosmetic display group; carries no semantics.
    pub color: Option<String>,
}

impl NodeSpec {
    pub fn new(id: NodeId, module: NodeId, kind: NodeKind, value_kind: ValueKind) -> Self {
        NodeSpec {
            id,
            module,
            kind,
            parents: Vec::new(),
            value_kind,
            doc: String::new(),
            tags: BTreeSet::new(),
            reference: String::new(),
            placeholder: false,
            color: None,
        }
    }

    pub fn with_parents(mut self, parents: &[&str]) -> Self {
        self.parents = parents.iter().map(|p| id(p)).collect();
        self
    }

    /// Edges used for ordering: parents plus the alias target.
    pub fn dependencies(&self) -> impl Iterator<Item = &NodeId> {
        let alias = match &self.kind {
            NodeKind::Alias { target } => Some(target),
            _ => None,
        };
        self.parents.iter().chain(alias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleDecl {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<NodeId>,
    #[serde(default)]
    pub doc: String,
}

/// A hypothesis graph. Immutable once validated; safe to share across evaluators.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub title: String,
    pub nodes: Vec<NodeSpec>,
    pub modules: Vec<ModuleDecl>,
    /// Inclusive (start year, end year).
    pub horizon: (i32, i32),
    pub outputs: Vec<NodeId>,
    pub cruxes: Vec<NodeId>,
    /// Named override bundles (worldview presets).
    pub presets: BTreeMap<String, BTreeMap<NodeId, Value>>,
}

impl ModelGraph {
    pub fn new(horizon: (i32, i32)) -> Self {
        ModelGraph {
            title: String::new(),
            nodes: Vec::new(),
            modules: Vec::new(),
            horizon,
            outputs: Vec::new(),
            cruxes: Vec::new(),
            presets: BTreeMap::new(),
        }
    }

    /// Add a node, declaring its module on first use.
    pub fn push(&mut self, node: NodeSpec) -> &mut Self {
        if !self.modules.iter().any(|m| m.id == node.module) {
            self.modules.push(ModuleDecl {
                id: node.module.clone(),
                parent: None,
                doc: String::new(),
            });
        }
        self.nodes.push(node);
        self
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn node_by_str(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id.as_str() == id)
    }

    pub fn horizon_len(&self) -> usize {
        (self.horizon.1 - self.horizon.0 + 1).max(0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    pub severity: Severity,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Diagnostic {
    pub fn error(node: Option<&NodeId>, code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            node: node.cloned(),
            severity: Severity::Error,
            code: code.to_string(),
            message: message.into(),
            line: None,
            column: None,
        }
    }

    pub fn warning(node: Option<&NodeId>, code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            ..Diagnostic::error(node, code, message)
        }
    }

    pub fn at(mut self, line: usize, column: usize) -> Self {
        self.line = Some(line);
        self.column = Some(column);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{severity} {}", self.code)?;
        if let (Some(line), Some(col)) = (self.line, self.column) {
            write!(f, " at {line}:{col}")?;
        }
        if let Some(node) = &self.node {
            write!(f, " [{node}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn codes(&self) -> Vec<&str> {
        self.diagnostics.iter().map(|d| d.code.as_str()).collect()
    }
}

/// Check every structural invariant of a candidate graph. Never fails: all
/// problems come back as diagnostics.
pub fn validate_graph(graph: &ModelGraph) -> ValidationReport {
    let mut diags = Vec::new();

    if graph.horizon.0 > graph.horizon.1 {
        diags.push(Diagnostic::error(
            None,
            "BAD_HORIZON",
            format!(
                "horizon start {} is after end {}",
                graph.horizon.0, graph.horizon.1
            ),
        ));
    }

    let mut index: HashMap<&NodeId, &NodeSpec> = HashMap::new();
    for node in &graph.nodes {
        if index.insert(&node.id, node).is_some() {
            diags.push(Diagnostic::error(
                Some(&node.id),
                "DUP_ID",
                format!("node id `{}` is declared more than once", node.id),
            ));
        }
    }

    let module_ids: BTreeSet<&NodeId> = graph.modules.iter().map(|m| &m.id).collect();
    for module in &graph.modules {
        if let Some(parent) = &module.parent {
            if !module_ids.contains(parent) {
                diags.push(Diagnostic::error(
                    Some(&module.id),
                    "UNKNOWN_MODULE",
                    format!("module `{}` has unknown parent `{parent}`", module.id),
                ));
            }
        }
    }

    for node in &graph.nodes {
        check_node(graph, node, &index, &module_ids, &mut diags);
    }

    for (list, what) in [(&graph.outputs, "output"), (&graph.cruxes, "crux")] {
        for id in list {
            match index.get(id) {
                None => diags.push(Diagnostic::error(
                    Some(id),
                    "MISSING_NODE",
                    format!("{what} `{id}` does not exist"),
                )),
                Some(node) if what == "crux" => {
                    if !matches!(
                        node.value_kind,
                        ValueKind::Bool | ValueKind::Category { .. }
                    ) {
                        diags.push(Diagnostic::error(
                            Some(id),
                            "KIND_MISMATCH",
                            format!("crux `{id}` must be Bool or Category"),
                        ));
                    }
                }
                Some(_) => {}
            }
        }
    }

    for (name, preset) in &graph.presets {
        for (target, value) in preset {
            match index.get(target) {
                None => diags.push(Diagnostic::error(
                    Some(target),
                    "MISSING_NODE",
                    format!("preset `{name}` sets unknown node `{target}`"),
                )),
                Some(node) if !node.value_kind.admits(value) => diags.push(Diagnostic::error(
                    Some(target),
                    "KIND_MISMATCH",
                    format!("preset `{name}` value does not match the node's kind"),
                )),
                Some(_) => {}
            }
        }
    }

    for cycle in find_cycles(graph, &index) {
        let listed: Vec<&str> = cycle.iter().map(|n| n.as_str()).collect();
        diags.push(Diagnostic::error(
            cycle.first(),
            "CYCLE",
            format!("directed cycle through {}", listed.join(", ")),
        ));
    }

    ValidationReport { diagnostics: diags }
}

fn check_node(
    graph: &ModelGraph,
    node: &NodeSpec,
    index: &HashMap<&NodeId, &NodeSpec>,
    module_ids: &BTreeSet<&NodeId>,
    diags: &mut Vec<Diagnostic>,
) {
    let nid = Some(&node.id);
    if !module_ids.contains(&node.module) {
        diags.push(Diagnostic::error(
            nid,
            "UNKNOWN_MODULE",
            format!("module `{}` is not declared", node.module),
        ));
    }
    if let Err(msg) = node.value_kind.check() {
        diags.push(Diagnostic::error(nid, "BAD_KIND", msg));
    }

    let mut all_parents_resolve = true;
    for parent in &node.parents {
        if !index.contains_key(parent) {
            all_parents_resolve = false;
            diags.push(Diagnostic::error(
                nid,
                "MISSING_PARENT",
                format!("parent `{parent}` does not exist"),
            ));
        }
    }

    match &node.kind {
        NodeKind::Alias { target } => {
            if !node.parents.is_empty() {
                diags.push(Diagnostic::error(
                    nid,
                    "BAD_ARITY",
                    "alias nodes take no parents",
                ));
            }
            match index.get(target) {
                None => diags.push(Diagnostic::error(
                    nid,
                    "ALIAS_UNRESOLVED",
                    format!("alias target `{target}` does not exist"),
                )),
                Some(t) if t.value_kind != node.value_kind => diags.push(Diagnostic::error(
                    nid,
                    "KIND_MISMATCH",
                    format!("alias kind differs from target `{target}`"),
                )),
                Some(_) => {}
            }
        }
        NodeKind::Chance(spec) => {
            if !node.parents.is_empty() {
                diags.push(Diagnostic::error(
                    nid,
                    "BAD_ARITY",
                    "chance nodes take no parents",
                ));
            }
            if let Err(e) = spec.validate() {
                diags.push(Diagnostic::error(nid, e.code(), e.to_string()));
            } else if !spec.fits_kind(&node.value_kind) {
                diags.push(Diagnostic::error(
                    nid,
                    "KIND_MISMATCH",
                    format!(
                        "distribution does not produce {} values",
                        node.value_kind.tag()
                    ),
                ));
            }
        }
        NodeKind::Classifier { prior, evidence } => {
            if !matches!(node.value_kind, ValueKind::Bool | ValueKind::Real { .. }) {
                diags.push(Diagnostic::error(
                    nid,
                    "KIND_MISMATCH",
                    "classifier nodes must be Bool or Real",
                ));
            }
            if !(*prior > 0.0 && *prior < 1.0) {
                diags.push(Diagnostic::error(
                    nid,
                    "DEGENERATE_PRIOR",
                    format!("prior {prior} must lie strictly between 0 and 1"),
                ));
            }
            for item in evidence {
                if let Err(e) = item.check() {
                    diags.push(Diagnostic::error(nid, e.code(), e.to_string()));
                }
                if let crate::bayes::EvidenceSource::Node(src) = &item.source {
                    if !node.parents.contains(src) {
                        diags.push(Diagnostic::error(
                            nid,
                            "MISSING_PARENT",
                            format!("evidence source `{src}` must be listed as a parent"),
                        ));
                    } else if let Some(p) = index.get(src) {
                        if p.value_kind != ValueKind::Bool {
                            diags.push(Diagnostic::error(
                                nid,
                                "KIND_MISMATCH",
                                format!("evidence source `{src}` is not Bool"),
                            ));
                        }
                    }
                }
            }
        }
        NodeKind::Formula { builtin, params } => {
            if !all_parents_resolve {
                return;
            }
            let kinds: Vec<&ValueKind> = node
                .parents
                .iter()
                .map(|p| &index[p].value_kind)
                .collect();
            if let Err(e) =
                formula::compile(builtin, params, &kinds, &node.value_kind, graph.horizon)
            {
                diags.push(Diagnostic::error(nid, e.code(), e.to_string()));
            }
        }
    }
}

/// Strongly connected components with more than one node (or a self loop),
/// each reported once with its members sorted.
fn find_cycles(graph: &ModelGraph, index: &HashMap<&NodeId, &NodeSpec>) -> Vec<Vec<NodeId>> {
    struct Tarjan<'a> {
        index: &'a HashMap<&'a NodeId, &'a NodeSpec>,
        counter: usize,
        order: HashMap<&'a NodeId, usize>,
        low: HashMap<&'a NodeId, usize>,
        stack: Vec<&'a NodeId>,
        on_stack: BTreeSet<&'a NodeId>,
        out: Vec<Vec<NodeId>>,
    }

    impl<'a> Tarjan<'a> {
        fn visit(&mut self, v: &'a NodeId) {
            self.order.insert(v, self.counter);
            self.low.insert(v, self.counter);
            self.counter += 1;
            self.stack.push(v);
            self.on_stack.insert(v);
            let node = self.index[v];
            let mut self_loop = false;
            for w in node.dependencies() {
                let Some(w_node) = self.index.get(w) else {
                    continue;
                };
                let w = &w_node.id;
                if w == v {
                    self_loop = true;
                }
                if !self.order.contains_key(w) {
                    self.visit(w);
                    let lw = self.low[w];
                    let lv = self.low.get_mut(v).unwrap();
                    *lv = (*lv).min(lw);
                } else if self.on_stack.contains(w) {
                    let ow = self.order[w];
                    let lv = self.low.get_mut(v).unwrap();
                    *lv = (*lv).min(ow);
                }
            }
            if self.low[v] == self.order[v] {
                let mut component = Vec::new();
                while let Some(w) = self.stack.pop() {
                    self.on_stack.remove(w);
                    component.push(w.clone());
                    if w == v {
                        break;
                    }
                }
                if component.len() > 1 || self_loop {
                    component.sort();
                    self.out.push(component);
                }
            }
        }
    }

    let mut t = Tarjan {
        index,
        counter: 0,
        order: HashMap::new(),
        low: HashMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        out: Vec::new(),
    };
    let mut ids: Vec<&NodeId> = index.keys().copied().collect();
    ids.sort();
    for v in ids {
        if !t.order.contains_key(v) {
            t.visit(v);
        }
    }
    let _ = graph;
    t.out.sort();
    t.out
}

/// Evaluation order: every node after all of its parents (and alias target),
/// ties broken by lexicographic id.
pub fn topological_order(graph: &ModelGraph) -> Result<Vec<NodeId>> {
    let mut index: HashMap<&NodeId, usize> = HashMap::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        if index.insert(&node.id, i).is_some() {
            return Err(Error::InvalidGraph(format!("duplicate id `{}`", node.id)));
        }
    }
    let n = graph.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in graph.nodes.iter().enumerate() {
        for dep in node.dependencies() {
            let Some(&j) = index.get(dep) else {
                return Err(Error::InvalidGraph(format!(
                    "`{}` depends on missing `{dep}`",
                    node.id
                )));
            };
            indegree[i] += 1;
            children[j].push(i);
        }
    }

    let mut ready: BTreeSet<(&NodeId, usize)> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| indegree[*i] == 0)
        .map(|(i, node)| (&node.id, i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.iter().next().copied() {
        ready.remove(&first);
        let (id, i) = first;
        order.push(id.clone());
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert((&graph.nodes[c].id, c));
            }
        }
    }

    if order.len() != n {
        let mut stuck: Vec<NodeId> = graph
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| indegree[*i] > 0)
            .map(|(_, node)| node.id.clone())
            .collect();
        stuck.sort();
        return Err(Error::Cycle(stuck));
    }
    Ok(order)
}

/// Follow alias links to the terminal non-alias node.
pub fn resolve_alias(graph: &ModelGraph, id: &NodeId) -> Result<NodeId> {
    let mut current = graph
        .node(id)
        .ok_or_else(|| Error::NodeNotFound(id.to_string()))?;
    let mut seen = BTreeSet::new();
    while let NodeKind::Alias { target } = &current.kind {
        if !seen.insert(current.id.clone()) {
            return Err(Error::Cycle(seen.into_iter().collect()));
        }
        current = graph
            .node(target)
            .ok_or_else(|| Error::AliasUnresolved(target.to_string()))?;
    }
    Ok(current.id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::DistributionSpec;

    fn bern(name: &str) -> NodeSpec {
        NodeSpec::new(
            id(name),
            id("m"),
            NodeKind::Chance(DistributionSpec::Bernoulli(0.5)),
            ValueKind::Bool,
        )
    }

    fn gate(name: &str, builtin: &str, parents: &[&str]) -> NodeSpec {
        NodeSpec::new(
            id(name),
            id("m"),
            NodeKind::Formula {
                builtin: builtin.into(),
                params: BTreeMap::new(),
            },
            ValueKind::Bool,
        )
        .with_parents(parents)
    }

    fn alias(name: &str, target: &str) -> NodeSpec {
        NodeSpec::new(
            id(name),
            id("m"),
            NodeKind::Alias { target: id(target) },
            ValueKind::Bool,
        )
    }

    fn graph(nodes: Vec<NodeSpec>) -> ModelGraph {
        let mut g = ModelGraph::new((2022, 2030));
        for n in nodes {
            g.push(n);
        }
        g
    }

    fn diamond() -> ModelGraph {
        graph(vec![
            bern("a"),
            gate("b", "NOT", &["a"]),
            gate("c", "NOT", &["a"]),
            gate("d", "AND", &["b", "c"]),
        ])
    }

    #[test]
    fn node_id_syntax() {
        assert!(NodeId::new("takeoff.intelligence_explosion").is_ok());
        assert!(NodeId::new("a2.b_3").is_ok());
        assert!(NodeId::new("").is_err());
        assert!(NodeId::new("a..b").is_err());
        assert!(NodeId::new("A.b").is_err());
        assert!(NodeId::new("a.b-c").is_err());
        assert!(NodeId::new(".a").is_err());
    }

    #[test]
    fn two_node_cycle_is_one_diagnostic() {
        let g = graph(vec![gate("a", "NOT", &["b"]), gate("b", "NOT", &["a"])]);
        let report = validate_graph(&g);
        let cycles: Vec<_> = report
            .diagnostics
            .iter()
            .filter(|d| d.code == "CYCLE")
            .collect();
        assert_eq!(cycles.len(), 1);
        assert!(cycles[0].message.contains('a') && cycles[0].message.contains('b'));
        assert_eq!(report.diagnostics.len(), 1);
    }

    #[test]
    fn empty_graph_is_valid() {
        assert!(validate_graph(&ModelGraph::new((2022, 2030)))
            .diagnostics
            .is_empty());
    }

    #[test]
    fn diamond_is_valid() {
        assert_eq!(validate_graph(&diamond()).diagnostics, vec![]);
    }

    #[test]
    fn structural_error_codes() {
        let mut g = graph(vec![bern("a"), bern("a"), gate("b", "NOT", &["zz"])]);
        g.push(alias("c", "missing"));
        g.push(gate("d", "NOT", &["a", "a"]));
        g.push(gate("e", "FROBNICATE", &["a"]));
        g.push(NodeSpec::new(
            id("f"),
            id("m"),
            NodeKind::Chance(DistributionSpec::Uniform(0.0, 1.0)),
            ValueKind::Bool,
        ));
        let codes = validate_graph(&g).codes().join(",");
        for code in [
            "DUP_ID",
            "MISSING_PARENT",
            "ALIAS_UNRESOLVED",
            "BAD_ARITY",
            "UNKNOWN_BUILTIN",
            "KIND_MISMATCH",
        ] {
            assert!(codes.contains(code), "{code} missing from {codes}");
        }
    }

    #[test]
    fn crux_must_be_discrete() {
        let mut g = graph(vec![NodeSpec::new(
            id("x"),
            id("m"),
            NodeKind::Chance(DistributionSpec::Point(1.0)),
            ValueKind::real(),
        )]);
        g.cruxes.push(id("x"));
        g.outputs.push(id("nope"));
        let report = validate_graph(&g);
        assert_eq!(report.codes(), vec!["MISSING_NODE", "KIND_MISMATCH"]);
    }

    #[test]
    fn topological_orders() {
        let chain = graph(vec![
            gate("c", "NOT", &["b"]),
            gate("b", "NOT", &["a"]),
            bern("a"),
        ]);
        assert_eq!(
            topological_order(&chain).unwrap(),
            vec![id("a"), id("b"), id("c")]
        );

        let isolated = graph(vec![bern("b"), bern("a")]);
        assert_eq!(topological_order(&isolated).unwrap(), vec![id("a"), id("b")]);

        assert_eq!(
            topological_order(&diamond()).unwrap(),
            vec![id("a"), id("b"), id("c"), id("d")]
        );

        let cyclic = graph(vec![gate("a", "NOT", &["b"]), gate("b", "NOT", &["a"])]);
        assert!(matches!(topological_order(&cyclic), Err(Error::Cycle(ids)) if ids.len() == 2));
    }

    #[test]
    fn alias_target_orders_before_alias() {
        let g = graph(vec![alias("a", "z"), bern("z")]);
        assert_eq!(topological_order(&g).unwrap(), vec![id("z"), id("a")]);
    }

    #[test]
    fn alias_resolution() {
        let g = graph(vec![bern("x"), alias("p", "x"), alias("q", "p")]);
        assert_eq!(resolve_alias(&g, &id("x")).unwrap(), id("x"));
        assert_eq!(resolve_alias(&g, &id("p")).unwrap(), id("x"));
        assert_eq!(resolve_alias(&g, &id("q")).unwrap(), id("x"));

        let dangling = graph(vec![alias("p", "gone")]);
        assert_eq!(
            resolve_alias(&dangling, &id("p")).unwrap_err().code(),
            "ALIAS_UNRESOLVED"
        );

        let looped = graph(vec![alias("p", "q"), alias("q", "p")]);
        assert_eq!(resolve_alias(&looped, &id("p")).unwrap_err().code(), "CYCLE");
        assert!(validate_graph(&looped).codes().contains(&"CYCLE"));
    }

    #[test]
    fn literals_decode_against_kinds() {
        let cat = ValueKind::category(&["few", "many"]);
        assert_eq!(Value::parse_literal("many", &cat), Ok(Value::Category(1)));
        assert!(Value::parse_literal("lots", &cat).is_err());
        assert_eq!(Value::parse_literal("never", &ValueKind::Year), Ok(Value::Year(None)));
        assert_eq!(
            Value::parse_literal("2040", &ValueKind::Year),
            Ok(Value::Year(Some(2040)))
        );
        assert_eq!(
            Value::parse_literal("0.25", &ValueKind::real()),
            Ok(Value::Real(0.25))
        );
        assert!(Value::parse_literal("0.25", &ValueKind::Bool).is_err());
        assert!(Value::parse_literal("yes", &ValueKind::Bool).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_dag() -> impl Strategy<Value = ModelGraph> {
            (1usize..14).prop_flat_map(|n| {
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), n)
                    .prop_map(move |adj| {
                        let mut g = ModelGraph::new((2022, 2030));
                        // Node names scrambled so id order differs from index order.
                        let name = |i: usize| format!("n{}", (i * 7 + 3) % 97);
                        for i in 0..n {
                            let parents: Vec<String> =
                                (0..i).filter(|&j| adj[i][j]).map(name).collect();
                            let node = if parents.is_empty() {
                                bern(&name(i))
                            } else {
                                let refs: Vec<&str> =
                                    parents.iter().map(|s| s.as_str()).collect();
                                gate(&name(i), "AND", &refs)
                            };
                            g.push(node);
                        }
                        g
                    })
            })
        }

        proptest! {
            #[test]
            fn topological_order_respects_every_edge(g in random_dag()) {
                prop_assert!(validate_graph(&g).is_valid());
                let order = topological_order(&g).unwrap();
                prop_assert_eq!(order.len(), g.nodes.len());
                let pos: HashMap<&NodeId, usize> =
                    order.iter().enumerate().map(|(i, n)| (n, i)).collect();
                prop_assert_eq!(pos.len(), g.nodes.len());
                for node in &g.nodes {
                    for p in &node.parents {
                        prop_assert!(pos[p] < pos[&node.id]);
                    }
                }
                prop_assert_eq!(topological_order(&g).unwrap(), order);
            }

            #[test]
            fn resolve_alias_is_idempotent(hops in 0usize..6) {
                let mut g = graph(vec![bern("x")]);
                let mut prev = "x".to_string();
                for h in 0..hops {
                    let name = format!("a{h}");
                    g.push(alias(&name, &prev));
                    prev = name;
                }
                let once = resolve_alias(&g, &id(&prev)).unwrap();
                prop_assert_eq!(&once, &id("x"));
                prop_assert_eq!(resolve_alias(&g, &once).unwrap(), once);
            }
        }
    }
}
