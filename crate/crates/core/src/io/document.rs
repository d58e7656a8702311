//! The `.mtair.json` model document: parser, serializer and structure view.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::{json, Map, Value as Json};

use crate::bayes::{EvidenceSource, EvidenceSpec};
use crate::graph::{
    validate_graph, Diagnostic, ModelGraph, ModuleDecl, NodeId, NodeKind, NodeSpec, Severity, Value, ValueKind,
};
use crate::stochastic::DistributionSpec;

pub const FORMAT_VERSION: u64 = 1;

const SHIPPED_MODEL: &str = include_str!("../../models/mtair.mtair.json");

/// The model shipped with the engine. Panics only if the bundled file is broken,
/// which the test suite rules out.
pub fn shipped_model() -> ModelGraph {
    parse_model_document(SHIPPED_MODEL).unwrap_or_else(|d| {
        let lines: Vec<String> = d.iter().map(|x| x.to_string()).collect();
        panic!("bundled model is invalid:\n{}", lines.join("\n"))
    })
}

pub fn shipped_model_text() -> &'static str {
    SHIPPED_MODEL
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Downgrade unknown fields from errors to warnings.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    /// Present whenever the document decoded, even if validation failed.
    pub graph: Option<ModelGraph>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }
}

/// Strict parse: a graph with zero error diagnostics, or every diagnostic found.
pub fn parse_model_document(text: &str) -> Result<ModelGraph, Vec<Diagnostic>> {
    let outcome = read_model_document(text, ParseOptions::default());
    match outcome.graph {
        Some(graph) if !outcome.has_errors() => Ok(graph),
        _ => Err(outcome.diagnostics),
    }
}

/// Decode and validate. Node-scoped diagnostics are located at the node record.
pub fn read_model_document(text: &str, options: ParseOptions) -> ParseOutcome {
    let root: Json = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            return ParseOutcome {
                graph: None,
                diagnostics: vec![Diagnostic::error(None, "SYNTAX", e.to_string()).at(e.line(), e.column())],
            }
        }
    };
    let mut d = Decoder {
        text,
        lenient: options.lenient,
        diags: Vec::new(),
        fatal: false,
    };
    let graph = d.document(&root);
    let mut diagnostics = d.diags;
    let graph = if d.fatal { None } else { graph };
    if let Some(g) = &graph {
        // The parser already reported duplicates with a location.
        let duplicates: BTreeSet<NodeId> = diagnostics
            .iter()
            .filter(|d| d.code == "DUPLICATE_ID")
            .filter_map(|d| d.node.clone())
            .collect();
        for mut diag in validate_graph(g).diagnostics {
            if diag.code == "DUP_ID" && diag.node.as_ref().is_some_and(|n| duplicates.contains(n)) {
                continue;
            }
            if let Some(node) = &diag.node {
                if let Some(i) = g.nodes.iter().position(|n| &n.id == node) {
                    if let Some((line, col)) = locate(text, &[Seg::Key("nodes"), Seg::Index(i)]) {
                        diag = diag.at(line, col);
                    }
                }
            }
            diagnostics.push(diag);
        }
    }
    ParseOutcome { graph, diagnostics }
}

#[derive(Debug, Clone, Copy)]
enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

struct Decoder<'t> {
    text: &'t str,
    lenient: bool,
    diags: Vec<Diagnostic>,
    /// Set when something could not be represented in a ModelGraph at all.
    fatal: bool,
}

impl Decoder<'_> {
    fn error(&mut self, path: &[Seg], node: Option<&NodeId>, code: &str, message: String) {
        let mut diag = Diagnostic::error(node, code, message);
        if let Some((line, col)) = locate(self.text, path) {
            diag = diag.at(line, col);
        }
        self.diags.push(diag);
        self.fatal = true;
    }

    fn check_fields(&mut self, obj: &Map<String, Json>, allowed: &[&str], path: &[Seg], node: Option<&NodeId>) {
        for key in obj.keys() {
            if allowed.contains(&key.as_str()) {
                continue;
            }
            let mut at = path.to_vec();
            at.push(Seg::Key(key));
            let msg = format!("unknown field `{key}`");
            if self.lenient {
                let mut diag = Diagnostic::warning(node, "UNKNOWN_FIELD", msg);
                if let Some((line, col)) = locate(self.text, &at) {
                    diag = diag.at(line, col);
                }
                self.diags.push(diag);
            } else {
                self.error(&at, node, "UNKNOWN_FIELD", msg);
            }
        }
    }

    fn object<'j>(&mut self, v: &'j Json, path: &[Seg], what: &str) -> Option<&'j Map<String, Json>> {
        match v.as_object() {
            Some(o) => Some(o),
            None => {
                self.error(path, None, "BAD_FIELD", format!("{what} must be an object"));
                None
            }
        }
    }

    fn field<'j>(&mut self, obj: &'j Map<String, Json>, key: &str, path: &[Seg], node: Option<&NodeId>) -> Option<&'j Json> {
        let v = obj.get(key);
        if v.is_none() {
            self.error(path, node, "MISSING_FIELD", format!("missing field `{key}`"));
        }
        v
    }

    fn typed<T: serde::de::DeserializeOwned>(&mut self, v: &Json, path: &[Seg], node: Option<&NodeId>, what: &str) -> Option<T> {
        match serde_json::from_value(v.clone()) {
            Ok(x) => Some(x),
            Err(e) => {
                self.error(path, node, "BAD_FIELD", format!("{what}: {e}"));
                None
            }
        }
    }

    fn node_id(&mut self, v: &Json, path: &[Seg], node: Option<&NodeId>) -> Option<NodeId> {
        let parsed = v.as_str().map(NodeId::new);
        match parsed {
            Some(Ok(id)) => Some(id),
            Some(Err(msg)) => {
                self.error(path, node, "BAD_ID", msg);
                None
            }
            None => {
                self.error(path, node, "BAD_ID", format!("expected an id string, got `{v}`"));
                None
            }
        }
    }

    fn id_list(&mut self, v: Option<&Json>, path: &[Seg], node: Option<&NodeId>) -> Vec<NodeId> {
        let Some(v) = v else { return Vec::new() };
        let Some(items) = v.as_array() else {
            self.error(path, node, "BAD_FIELD", "expected an array of ids".into());
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, item) in items.iter().enumerate() {
            let mut at = path.to_vec();
            at.push(Seg::Index(i));
            if let Some(id) = self.node_id(item, &at, node) {
                out.push(id);
            }
        }
        out
    }

    fn document(&mut self, root: &Json) -> Option<ModelGraph> {
        let obj = self.object(root, &[], "document")?;
        self.check_fields(
            obj,
            &["format_version", "meta", "modules", "nodes", "outputs", "cruxes", "presets"],
            &[],
            None,
        );
        let version_path = [Seg::Key("format_version")];
        match self.field(obj, "format_version", &[], None).map(|v| v.as_u64()) {
            Some(Some(FORMAT_VERSION)) => {}
            Some(_) => {
                let found = obj.get("format_version").cloned().unwrap_or(Json::Null);
                self.error(
                    &version_path,
                    None,
                    "UNSUPPORTED_VERSION",
                    format!("format_version {found} is not supported (expected {FORMAT_VERSION})"),
                );
                return None;
            }
            None => return None,
        }

        let meta_path = [Seg::Key("meta")];
        let meta = self.field(obj, "meta", &[], None)?;
        let meta = self.object(meta, &meta_path, "meta")?;
        self.check_fields(meta, &["title", "horizon_start", "horizon_end"], &meta_path, None);
        let title = match meta.get("title") {
            None => String::new(),
            Some(t) => self.typed(t, &[Seg::Key("meta"), Seg::Key("title")], None, "title")?,
        };
        let raw = self.field(meta, "horizon_start", &meta_path, None)?;
        let start: i32 = self.typed(
            raw,
            &[Seg::Key("meta"), Seg::Key("horizon_start")],
            None,
            "horizon_start",
        )?;
        let raw = self.field(meta, "horizon_end", &meta_path, None)?;
        let end: i32 = self.typed(
            raw,
            &[Seg::Key("meta"), Seg::Key("horizon_end")],
            None,
            "horizon_end",
        )?;

        let mut graph = ModelGraph::new((start, end));
        graph.title = title;

        if let Some(modules) = obj.get("modules") {
            graph.modules = self.modules(modules);
        }

        let nodes_path = [Seg::Key("nodes")];
        let nodes = self.field(obj, "nodes", &[], None)?;
        let Some(records) = nodes.as_array() else {
            self.error(&nodes_path, None, "BAD_FIELD", "nodes must be an array".into());
            return None;
        };
        let mut seen = BTreeSet::new();
        for (i, record) in records.iter().enumerate() {
            let path = [Seg::Key("nodes"), Seg::Index(i)];
            if let Some(node) = self.node(record, &path) {
                if !seen.insert(node.id.clone()) {
                    let msg = format!("node id `{}` is declared more than once", node.id);
                    let mut diag = Diagnostic::error(Some(&node.id), "DUPLICATE_ID", msg);
                    if let Some((line, col)) = locate(self.text, &path) {
                        diag = diag.at(line, col);
                    }
                    self.diags.push(diag);
                }
                graph.nodes.push(node);
            }
        }
        graph.outputs = self.id_list(obj.get("outputs"), &[Seg::Key("outputs")], None);
        graph.cruxes = self.id_list(obj.get("cruxes"), &[Seg::Key("cruxes")], None);
        if let Some(presets) = obj.get("presets") {
            graph.presets = self.presets(presets, &graph);
        }
        Some(graph)
    }

    fn modules(&mut self, v: &Json) -> Vec<ModuleDecl> {
        let Some(items) = v.as_array() else {
            self.error(&[Seg::Key("modules")], None, "BAD_FIELD", "modules must be an array".into());
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, item) in items.iter().enumerate() {
            let path = [Seg::Key("modules"), Seg::Index(i)];
            let Some(obj) = self.object(item, &path, "module") else { continue };
            self.check_fields(obj, &["id", "parent", "doc"], &path, None);
            let Some(idv) = self.field(obj, "id", &path, None) else { continue };
            let Some(id) = self.node_id(idv, &[Seg::Key("modules"), Seg::Index(i), Seg::Key("id")], None) else {
                continue;
            };
            let parent = match obj.get("parent") {
                None | Some(Json::Null) => None,
                Some(p) => self.node_id(p, &[Seg::Key("modules"), Seg::Index(i), Seg::Key("parent")], Some(&id)),
            };
            let doc = obj.get("doc").and_then(Json::as_str).unwrap_or_default().to_string();
            out.push(ModuleDecl { id, parent, doc });
        }
        out
    }

    fn node(&mut self, record: &Json, path: &[Seg]) -> Option<NodeSpec> {
        let obj = self.object(record, path, "node record")?;
        let idv = self.field(obj, "id", path, None)?;
        let id = self.node_id(idv, &with(path, Seg::Key("id")), None)?;
        let nid = Some(&id);
        let kind_tag = self.field(obj, "kind", path, nid)?.as_str().unwrap_or_default().to_string();
        let specific: &[&str] = match kind_tag.as_str() {
            "chance" => &["distribution"],
            "formula" => &["builtin", "params"],
            "classifier" => &["prior", "evidence"],
            "alias" => &["target"],
            _ => {
                self.error(
                    &with(path, Seg::Key("kind")),
                    nid,
                    "UNKNOWN_KIND",
                    format!("unknown node kind `{kind_tag}` (expected chance, formula, classifier or alias)"),
                );
                return None;
            }
        };
        let mut allowed = vec![
            "id", "module", "kind", "parents", "value_kind", "doc", "tags", "paper_ref", "placeholder", "color",
        ];
        allowed.extend_from_slice(specific);
        self.check_fields(obj, &allowed, path, nid);

        let kind = match kind_tag.as_str() {
            "chance" => {
                let at = with(path, Seg::Key("distribution"));
                let v = self.field(obj, "distribution", path, nid)?;
                NodeKind::Chance(self.distribution(v, &at, nid)?)
            }
            "formula" => {
                let builtin = self.field(obj, "builtin", path, nid)?;
                let builtin: String = self.typed(builtin, &with(path, Seg::Key("builtin")), nid, "builtin")?;
                let params = match obj.get("params") {
                    None => BTreeMap::new(),
                    Some(p) => self.typed(p, &with(path, Seg::Key("params")), nid, "params")?,
                };
                NodeKind::Formula { builtin, params }
            }
            "classifier" => {
                let prior = self.field(obj, "prior", path, nid)?;
                let prior: f64 = self.typed(prior, &with(path, Seg::Key("prior")), nid, "prior")?;
                let evidence = match obj.get("evidence") {
                    None => Vec::new(),
                    Some(e) => self.evidence(e, &with(path, Seg::Key("evidence")), nid)?,
                };
                NodeKind::Classifier { prior, evidence }
            }
            _ => {
                let target = self.field(obj, "target", path, nid)?;
                NodeKind::Alias {
                    target: self.node_id(target, &with(path, Seg::Key("target")), nid)?,
                }
            }
        };

        let module_v = self.field(obj, "module", path, nid)?;
        let module = self.node_id(module_v, &with(path, Seg::Key("module")), nid)?;
        let value_kind = match obj.get("value_kind") {
            Some(v) => self.value_kind(v, &with(path, Seg::Key("value_kind")), nid)?,
            None => {
                self.error(path, nid, "MISSING_FIELD", "missing field `value_kind`".into());
                return None;
            }
        };
        let parents = self.id_list(obj.get("parents"), &with(path, Seg::Key("parents")), nid);
        let mut spec = NodeSpec::new(id.clone(), module, kind, value_kind);
        spec.parents = parents;
        if let Some(v) = obj.get("doc") {
            spec.doc = self.typed(v, &with(path, Seg::Key("doc")), nid, "doc")?;
        }
        if let Some(v) = obj.get("tags") {
            spec.tags = self.typed(v, &with(path, Seg::Key("tags")), nid, "tags")?;
        }
        if let Some(v) = obj.get("paper_ref") {
            spec.reference = self.typed(v, &with(path, Seg::Key("paper_ref")), nid, "paper_ref")?;
        }
        if let Some(v) = obj.get("placeholder") {
            spec.placeholder = self.typed(v, &with(path, Seg::Key("placeholder")), nid, "placeholder")?;
        }
        if let Some(v) = obj.get("color") {
            spec.color = self.typed(v, &with(path, Seg::Key("color")), nid, "color")?;
        }
        Some(spec)
    }

    fn value_kind(&mut self, v: &Json, path: &[Seg], node: Option<&NodeId>) -> Option<ValueKind> {
        match v.as_str() {
            Some("bool") => Some(ValueKind::Bool),
            Some("real") => Some(ValueKind::real()),
            Some("year") => Some(ValueKind::Year),
            _ => self.typed(v, path, node, "value_kind"),
        }
    }

    fn distribution(&mut self, v: &Json, path: &[Seg], node: Option<&NodeId>) -> Option<DistributionSpec> {
        let obj = self.object(v, path, "distribution")?;
        let tag = obj.get("type").and_then(Json::as_str).unwrap_or_default().to_string();
        let fields: &[&str] = match tag.as_str() {
            "point" => &["value"],
            "bernoulli" => &["p"],
            "categorical" => &["labels", "probs"],
            "uniform" => &["lo", "hi"],
            "lognormal" => &["median", "sigma_log10"],
            "normal" => &["mean", "sd"],
            "mixture" => &["components"],
            _ => {
                self.error(
                    &with(path, Seg::Key("type")),
                    node,
                    "UNKNOWN_DISTRIBUTION",
                    format!("unknown distribution type `{tag}`"),
                );
                return None;
            }
        };
        let mut allowed = vec!["type"];
        allowed.extend_from_slice(fields);
        self.check_fields(obj, &allowed, path, node);
        let num = |d: &mut Self, key: &str| -> Option<f64> {
            let v = d.field(obj, key, path, node)?;
            d.typed(v, &with(path, Seg::Key(key)), node, key)
        };
        Some(match tag.as_str() {
            "point" => DistributionSpec::Point(num(self, "value")?),
            "bernoulli" => DistributionSpec::Bernoulli(num(self, "p")?),
            "uniform" => DistributionSpec::Uniform(num(self, "lo")?, num(self, "hi")?),
            "lognormal" => DistributionSpec::LogNormal {
                median: num(self, "median")?,
                sigma_log10: num(self, "sigma_log10")?,
            },
            "normal" => DistributionSpec::Normal {
                mean: num(self, "mean")?,
                sd: num(self, "sd")?,
            },
            "categorical" => {
                let labels = self.field(obj, "labels", path, node)?;
                let labels: Vec<String> = self.typed(labels, &with(path, Seg::Key("labels")), node, "labels")?;
                let probs = self.field(obj, "probs", path, node)?;
                let probs: Vec<f64> = self.typed(probs, &with(path, Seg::Key("probs")), node, "probs")?;
                DistributionSpec::Categorical { labels, probs }
            }
            _ => {
                let comps = self.field(obj, "components", path, node)?;
                let at = with(path, Seg::Key("components"));
                let Some(items) = comps.as_array() else {
                    self.error(&at, node, "BAD_FIELD", "components must be an array".into());
                    return None;
                };
                let mut parts = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    let cpath = with(&at, Seg::Index(i));
                    let c = self.object(item, &cpath, "mixture component")?;
                    self.check_fields(c, &["weight", "dist"], &cpath, node);
                    let w = self.field(c, "weight", &cpath, node)?;
                    let w: f64 = self.typed(w, &with(&cpath, Seg::Key("weight")), node, "weight")?;
                    let inner = self.field(c, "dist", &cpath, node)?;
                    let inner = self.distribution(inner, &with(&cpath, Seg::Key("dist")), node)?;
                    parts.push((w, inner));
                }
                DistributionSpec::Mixture(parts)
            }
        })
    }

    fn evidence(&mut self, v: &Json, path: &[Seg], node: Option<&NodeId>) -> Option<Vec<EvidenceSpec>> {
        let Some(items) = v.as_array() else {
            self.error(path, node, "BAD_FIELD", "evidence must be an array".into());
            return None;
        };
        let mut out = Vec::new();
        for (i, item) in items.iter().enumerate() {
            let at = with(path, Seg::Index(i));
            let obj = self.object(item, &at, "evidence item")?;
            self.check_fields(obj, &["name", "p_given_h", "p_given_not_h", "source"], &at, node);
            let name = self.field(obj, "name", &at, node)?;
            let name: String = self.typed(name, &with(&at, Seg::Key("name")), node, "name")?;
            let ph = self.field(obj, "p_given_h", &at, node)?;
            let p_given_h: f64 = self.typed(ph, &with(&at, Seg::Key("p_given_h")), node, "p_given_h")?;
            let pn = self.field(obj, "p_given_not_h", &at, node)?;
            let p_given_not_h: f64 = self.typed(pn, &with(&at, Seg::Key("p_given_not_h")), node, "p_given_not_h")?;
            let source = match obj.get("source") {
                None | Some(Json::Null) => EvidenceSource::Missing,
                Some(Json::Bool(b)) => EvidenceSource::Fixed(*b),
                Some(s) => EvidenceSource::Node(self.node_id(s, &with(&at, Seg::Key("source")), node)?),
            };
            out.push(EvidenceSpec {
                name,
                p_given_h,
                p_given_not_h,
                source,
            });
        }
        Some(out)
    }

    fn presets(&mut self, v: &Json, graph: &ModelGraph) -> BTreeMap<String, BTreeMap<NodeId, Value>> {
        let path = [Seg::Key("presets")];
        let Some(obj) = v.as_object() else {
            self.error(&path, None, "BAD_FIELD", "presets must be an object".into());
            return BTreeMap::new();
        };
        let mut out = BTreeMap::new();
        for (name, assignments) in obj {
            let at = [Seg::Key("presets"), Seg::Key(name)];
            let Some(assignments) = assignments.as_object() else {
                self.error(&at, None, "BAD_FIELD", format!("preset `{name}` must be an object"));
                continue;
            };
            let mut preset = BTreeMap::new();
            for (key, literal) in assignments {
                let vat = [Seg::Key("presets"), Seg::Key(name), Seg::Key(key)];
                let Some(target) = self.node_id(&Json::String(key.clone()), &vat, None) else { continue };
                // Unknown targets are left for validation to report.
                let decoded = match graph.node(&target) {
                    Some(node) => Value::from_json(literal, &node.value_kind),
                    None => untyped_literal(literal),
                };
                match decoded {
                    Ok(value) => {
                        preset.insert(target, value);
                    }
                    Err(msg) => self.error(&vat, Some(&target), "KIND_MISMATCH", format!("preset `{name}`: {msg}")),
                }
            }
            out.insert(name.clone(), preset);
        }
        out
    }
}

fn with<'a>(path: &[Seg<'a>], seg: Seg<'a>) -> Vec<Seg<'a>> {
    let mut v = path.to_vec();
    v.push(seg);
    v
}

fn untyped_literal(v: &Json) -> Result<Value, String> {
    match v {
        Json::Bool(b) => Ok(Value::Bool(*b)),
        Json::Number(n) => n.as_f64().map(Value::Real).ok_or_else(|| format!("bad number {n}")),
        Json::String(s) if s == "never" => Ok(Value::Year(None)),
        other => Err(format!("cannot interpret `{other}` without a node kind")),
    }
}

/// Line and column (1-based, in characters) of the value at `path`, scanning
/// text already known to be valid JSON.
fn locate(text: &str, path: &[Seg]) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut pos = skip_ws(bytes, 0);
    for seg in path {
        match (seg, bytes.get(pos)?) {
            (Seg::Key(key), b'{') => {
                pos = skip_ws(bytes, pos + 1);
                loop {
                    if bytes.get(pos)? == &b'}' {
                        return None;
                    }
                    let key_end = skip_string(bytes, pos)?;
                    let found: String = serde_json::from_str(&text[pos..key_end]).ok()?;
                    pos = skip_ws(bytes, key_end);
                    pos = skip_ws(bytes, pos + 1);
                    if found == *key {
                        break;
                    }
                    pos = skip_ws(bytes, skip_value(bytes, pos)?);
                    if bytes.get(pos)? == &b',' {
                        pos = skip_ws(bytes, pos + 1);
                    }
                }
            }
            (Seg::Index(n), b'[') => {
                pos = skip_ws(bytes, pos + 1);
                for _ in 0..*n {
                    if bytes.get(pos)? == &b']' {
                        return None;
                    }
                    pos = skip_ws(bytes, skip_value(bytes, pos)?);
                    if bytes.get(pos)? == &b',' {
                        pos = skip_ws(bytes, pos + 1);
                    }
                }
                if bytes.get(pos)? == &b']' {
                    return None;
                }
            }
            _ => return None,
        }
    }
    let before = &text[..pos];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().unwrap_or("").chars().count() + 1;
    Some((line, col))
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn skip_string(bytes: &[u8], pos: usize) -> Option<usize> {
    if bytes.get(pos)? != &b'"' {
        return None;
    }
    let mut i = pos + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(i + 1),
            _ => i += 1,
        }
    }
    None
}

fn skip_value(bytes: &[u8], pos: usize) -> Option<usize> {
    match bytes.get(pos)? {
        b'"' => skip_string(bytes, pos),
        b'{' | b'[' => {
            let mut depth = 0usize;
            let mut i = pos;
            while i < bytes.len() {
                match bytes[i] {
                    b'"' => {
                        i = skip_string(bytes, i)?;
                        continue;
                    }
                    b'{' | b'[' => depth += 1,
                    b'}' | b']' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(i + 1);
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
            None
        }
        _ => {
            let mut i = pos;
            while i < bytes.len() && !matches!(bytes[i], b',' | b'}' | b']') && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            Some(i)
        }
    }
}

fn value_kind_json(kind: &ValueKind) -> Json {
    match kind {
        ValueKind::Bool => json!("bool"),
        ValueKind::Year => json!("year"),
        ValueKind::Real { unit } if unit.is_empty() => json!("real"),
        other => serde_json::to_value(other).expect("value kinds serialize"),
    }
}

fn distribution_json(spec: &DistributionSpec) -> Json {
    match spec {
        DistributionSpec::Point(v) => json!({"type": "point", "value": v}),
        DistributionSpec::Bernoulli(p) => json!({"type": "bernoulli", "p": p}),
        DistributionSpec::Categorical { labels, probs } => {
            json!({"type": "categorical", "labels": labels, "probs": probs})
        }
        DistributionSpec::Uniform(lo, hi) => json!({"type": "uniform", "lo": lo, "hi": hi}),
        DistributionSpec::LogNormal { median, sigma_log10 } => {
            json!({"type": "lognormal", "median": median, "sigma_log10": sigma_log10})
        }
        DistributionSpec::Normal { mean, sd } => json!({"type": "normal", "mean": mean, "sd": sd}),
        DistributionSpec::Mixture(parts) => json!({
            "type": "mixture",
            "components": parts
                .iter()
                .map(|(w, d)| json!({"weight": w, "dist": distribution_json(d)}))
                .collect::<Vec<_>>(),
        }),
    }
}

fn node_json(node: &NodeSpec) -> Json {
    let mut obj = Map::new();
    obj.insert("id".into(), json!(node.id));
    obj.insert("module".into(), json!(node.module));
    obj.insert("kind".into(), json!(node.kind.tag()));
    match &node.kind {
        NodeKind::Chance(d) => {
            obj.insert("distribution".into(), distribution_json(d));
        }
        NodeKind::Formula { builtin, params } => {
            obj.insert("builtin".into(), json!(builtin));
            if !params.is_empty() {
                obj.insert("params".into(), json!(params));
            }
        }
        NodeKind::Classifier { prior, evidence } => {
            obj.insert("prior".into(), json!(prior));
            let items: Vec<Json> = evidence
                .iter()
                .map(|e| {
                    let source = match &e.source {
                        EvidenceSource::Node(id) => json!(id),
                        EvidenceSource::Fixed(b) => json!(b),
                        EvidenceSource::Missing => Json::Null,
                    };
                    json!({"name": e.name, "p_given_h": e.p_given_h, "p_given_not_h": e.p_given_not_h, "source": source})
                })
                .collect();
            obj.insert("evidence".into(), Json::Array(items));
        }
        NodeKind::Alias { target } => {
            obj.insert("target".into(), json!(target));
        }
    }
    if !node.parents.is_empty() {
        obj.insert("parents".into(), json!(node.parents));
    }
    obj.insert("value_kind".into(), value_kind_json(&node.value_kind));
    if !node.doc.is_empty() {
        obj.insert("doc".into(), json!(node.doc));
    }
    if !node.tags.is_empty() {
        obj.insert("tags".into(), json!(node.tags));
    }
    if !node.reference.is_empty() {
        obj.insert("paper_ref".into(), json!(node.reference));
    }
    if node.placeholder {
        obj.insert("placeholder".into(), json!(true));
    }
    if let Some(c) = &node.color {
        obj.insert("color".into(), json!(c));
    }
    Json::Object(obj)
}

fn presets_json(graph: &ModelGraph) -> Json {
    let mut out = Map::new();
    for (name, preset) in &graph.presets {
        let mut assignments = Map::new();
        for (id, value) in preset {
            let literal = match graph.node(id) {
                Some(node) => value.to_json(&node.value_kind),
                None => value.to_json(&ValueKind::real()),
            };
            assignments.insert(id.to_string(), literal);
        }
        out.insert(name.clone(), Json::Object(assignments));
    }
    Json::Object(out)
}

/// The document as a JSON value (keys sorted).
pub fn model_document_json(graph: &ModelGraph) -> Json {
    json!({
        "format_version": FORMAT_VERSION,
        "meta": {"title": graph.title, "horizon_start": graph.horizon.0, "horizon_end": graph.horizon.1},
        "modules": graph.modules,
        "nodes": graph.nodes.iter().map(node_json).collect::<Vec<_>>(),
        "outputs": graph.outputs,
        "cruxes": graph.cruxes,
        "presets": presets_json(graph),
    })
}

pub fn serialize_model_document(graph: &ModelGraph) -> String {
    let mut text = serde_json::to_string_pretty(&model_document_json(graph)).expect("documents serialize");
    text.push('\n');
    text
}

/// Node entry of the structure view served to clients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStructure {
    pub id: NodeId,
    pub module: NodeId,
    pub kind: String,
    pub value_kind: Json,
    pub parents: Vec<NodeId>,
    pub doc: String,
    pub tags: Vec<String>,
    pub paper_ref: String,
    pub placeholder: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    /// Alias target, for alias nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStructure {
    pub title: String,
    pub horizon: HorizonView,
    pub modules: Vec<ModuleDecl>,
    pub nodes: Vec<NodeStructure>,
    pub outputs: Vec<NodeId>,
    pub cruxes: Vec<NodeId>,
    pub presets: Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HorizonView {
    pub start: i32,
    pub end: i32,
}

/// Client-facing view of the graph: document order for nodes and modules.
pub fn model_structure(graph: &ModelGraph) -> ModelStructure {
    ModelStructure {
        title: graph.title.clone(),
        horizon: HorizonView {
            start: graph.horizon.0,
            end: graph.horizon.1,
        },
        modules: graph.modules.clone(),
        nodes: graph
            .nodes
            .iter()
            .map(|n| NodeStructure {
                id: n.id.clone(),
                module: n.module.clone(),
                kind: n.kind.tag().to_string(),
                value_kind: serde_json::to_value(&n.value_kind).expect("value kinds serialize"),
                parents: n.parents.clone(),
                doc: n.doc.clone(),
                tags: n.tags.iter().cloned().collect(),
                paper_ref: n.reference.clone(),
                placeholder: n.placeholder,
                color: n.color.clone(),
                target: match &n.kind {
                    NodeKind::Alias { target } => Some(target.clone()),
                    _ => None,
                },
            })
            .collect(),
        outputs: graph.outputs.clone(),
        cruxes: graph.cruxes.clone(),
        presets: presets_json(graph),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::id;

    const TWO_NODE: &str = r#"{
  "format_version": 1,
  "meta": {"title": "not", "horizon_start": 2022, "horizon_end": 2100},
  "modules": [{"id": "m"}],
  "nodes": [
    {"id": "a", "module": "m", "kind": "chance", "distribution": {"type": "bernoulli", "p": 0.5}, "value_kind": "bool"},
    {"id": "b", "module": "m", "kind": "formula", "builtin": "NOT", "parents": ["a"], "value_kind": "bool"}
  ],
  "outputs": ["b"],
  "cruxes": ["a"]
}"#;

    #[test]
    fn two_node_document() {
        let g = parse_model_document(TWO_NODE).unwrap();
        assert_eq!(g.nodes.len(), 2);
        let edges: usize = g.nodes.iter().map(|n| n.parents.len()).sum();
        assert_eq!(edges, 1);
        assert_eq!(g.outputs, vec![id("b")]);
    }

    #[test]
    fn kind_typo_is_located() {
        let text = TWO_NODE.replace(r#""kind": "chance""#, r#""kind": "chnce""#);
        let d = parse_model_document(&text).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, "UNKNOWN_KIND");
        assert_eq!(d[0].line, Some(6));
        let col = text.lines().nth(5).unwrap().find("\"chnce\"").unwrap() + 1;
        assert_eq!(d[0].column, Some(col));
    }

    #[test]
    fn syntax_error_has_location() {
        let d = parse_model_document("{\n  \"format_version\": 1,\n  oops\n}").unwrap_err();
        assert_eq!(d[0].code, "SYNTAX");
        assert_eq!(d[0].line, Some(3));
        assert_eq!(d[0].column, Some(3));
    }

    #[test]
    fn unknown_fields_strict_and_lenient() {
        let text = TWO_NODE.replace("\"cruxes\": [\"a\"]", "\"cruxes\": [\"a\"],\n  \"crux\": []");
        let d = parse_model_document(&text).unwrap_err();
        assert_eq!(d[0].code, "UNKNOWN_FIELD");
        assert_eq!(d[0].line, Some(11));
        let lenient = read_model_document(&text, ParseOptions { lenient: true });
        assert!(!lenient.has_errors());
        assert_eq!(lenient.diagnostics[0].severity, Severity::Warning);
        assert_eq!(lenient.graph.unwrap().nodes.len(), 2);
    }

    #[test]
    fn version_and_ids() {
        let d = parse_model_document(&TWO_NODE.replace("\"format_version\": 1", "\"format_version\": 2")).unwrap_err();
        assert_eq!(d[0].code, "UNSUPPORTED_VERSION");
        let d = parse_model_document(&TWO_NODE.replace("\"id\": \"b\"", "\"id\": \"B\"")).unwrap_err();
        assert_eq!(d[0].code, "BAD_ID");
        let d = parse_model_document(&TWO_NODE.replace("\"id\": \"b\"", "\"id\": \"a\"")).unwrap_err();
        assert!(d.iter().any(|x| x.code == "DUPLICATE_ID" && x.line == Some(7)));
    }

    #[test]
    fn semantic_errors_come_from_validation() {
        let text = TWO_NODE.replace("\"NOT\"", "\"NOPE\"");
        let d = parse_model_document(&text).unwrap_err();
        assert_eq!(d[0].code, "UNKNOWN_BUILTIN");
        assert_eq!(d[0].line, Some(7));
        let cyclic = TWO_NODE.replace(
            r#""kind": "chance", "distribution": {"type": "bernoulli", "p": 0.5}"#,
            r#""kind": "formula", "builtin": "NOT", "parents": ["b"]"#,
        );
        let d = parse_model_document(&cyclic).unwrap_err();
        assert_eq!(d.iter().filter(|x| x.code == "CYCLE").count(), 1);
    }

    #[test]
    fn round_trip_is_identity() {
        let g = parse_model_document(TWO_NODE).unwrap();
        let text = serialize_model_document(&g);
        let again = parse_model_document(&text).unwrap();
        assert_eq!(g, again);
        assert_eq!(text, serialize_model_document(&again));
    }

    #[test]
    fn locate_walks_nested_paths() {
        let text = "{\"a\": [1, {\"b\": \"x,]\"}, 3], \"c\": {\"d\": true}}";
        assert_eq!(locate(text, &[Seg::Key("a"), Seg::Index(2)]), Some((1, 25)));
        assert_eq!(locate(text, &[Seg::Key("c"), Seg::Key("d")]), Some((1, 40)));
        assert_eq!(locate(text, &[Seg::Key("a"), Seg::Index(3)]), None);
    }
}
