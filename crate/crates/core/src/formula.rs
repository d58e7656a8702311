//! Builtin catalog for formula nodes.
//!
//! A formula is compiled once against its parameter map and its parents'
//! value kinds, which catches arity, kind and parameter errors at validation
//! time. The compiled form is then evaluated once per sample.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::graph::{Value, ValueKind};
use crate::hardware::{budget_series, compute_available_series, cost_per_compute_series, BudgetParams, HardwareParams};
use crate::stochastic::{sample, RngStream};
use crate::takeoff::{
    breakthroughs_bucket, check_bucket_table, discontinuity, dsa_assessment, economic_takeover_years, final_outcomes,
    hlmi_distributed, influence_seeking, intelligence_explosion, mesa_failure_probability, post_hlmi_doubling_time,
    safety_race, takeoff_speed_class, Bucket, BucketCondition, DifficultyCruxes, DistributionFactors, DoublingConfig,
    DsaInputs, DsaRoute, FinalOutcomes, HardwarePathCruxes, MesaChainParams, OutcomeInputs, TAKEOFF_SPEED_LABELS,
};
use crate::timelines::{
    check_benchmark_points, combine_timelines, dl_extrapolation_anchor, evolutionary_anchor, extrapolation_timeline,
    hlmi_type_labels, inside_view_timeline, lifetime_anchor, other_methods_pathway, pathway_arrival_year,
    required_compute_distribution, scaling_law_anchor, semi_informative_timeline, Acceleration, AnchorComponent, Basis,
    EvolutionaryAnchorParams, ExtrapolationMode, LifetimeAnchorParams, Pathway, ScalingAnchorParams, ScalingKind,
    SemiInformativePriorParams, ShortAdjustment, TimelineCdf, TrialMode,
};

/// Every builtin name, sorted.
pub const BUILTINS: &[&str] = &[
    "ALGO_PROGRESS",
    "AND",
    "BERNOULLI",
    "BOOL_TABLE",
    "BREAKTHROUGHS_BUCKET",
    "BUDGET",
    "COMBINE_TIMELINES",
    "COMPUTE_AVAILABLE",
    "COST_PER_COMPUTE",
    "DISCONTINUITY",
    "DL_EXTRAPOLATION_ANCHOR",
    "DOUBLING_TIME",
    "DSA_ROUTE",
    "EVOLUTIONARY_ANCHOR",
    "EXTRAPOLATION",
    "FINAL_OUTCOME",
    "FIRST_YEAR_GE",
    "GATE_YEAR",
    "HAZARD_YEAR",
    "HLMI_DISTRIBUTED",
    "IN_CATEGORY",
    "INFLUENCE_SEEKING",
    "INSIDE_VIEW_WINNER",
    "INTELLIGENCE_EXPLOSION",
    "LIFETIME_ANCHOR",
    "LINEAR_MIX",
    "LOGNORMAL_AROUND",
    "MESA_CHAIN",
    "MIN_YEAR",
    "NAGI_READY",
    "NOT",
    "OR",
    "OTHER_METHODS",
    "PATHWAY_ARRIVAL",
    "PRODUCT",
    "REAL_TABLE",
    "REQUIRED_COMPUTE",
    "SAFETY_RACE",
    "SAMPLE_ARRIVAL",
    "SCALING_ANCHOR",
    "SELECT",
    "SEMI_INFORMATIVE",
    "TAKEOFF_SPEED_CLASS",
    "WBE_NEUROSCIENCE",
    "WEIGHTED_SUM",
    "YEAR_AFTER",
    "YEAR_IS_SET",
];

const BUCKET_LABELS: [&str; 3] = Bucket::LABELS;

#[derive(Debug, Clone, PartialEq)]
enum Op {
    And,
    Or,
    Not,
    WeightedSum(Vec<f64>),
    Product,
    MinYear,
    FirstYearGe(Option<f64>),
    LinearMix(Vec<f64>),
    Bernoulli,
    BoolTable(Vec<f64>),
    RealTable(Vec<f64>),
    InCategory(BTreeSet<u32>),
    YearIsSet,
    YearAfter,
    GateYear,
    HazardYear { base: f64, multipliers: Vec<f64> },
    LognormalAround(f64),
    Select,
    CostPerCompute { base_cost: f64, floor: f64 },
    Budget { base: f64, world_gdp: f64, richest_gdp: f64, tech_fraction: f64, government_fraction: f64 },
    ComputeAvailable,
    EvolutionaryAnchor,
    LifetimeAnchor,
    ScalingAnchor(ScalingKind),
    DlExtrapolation { points: Vec<(f64, f64)>, human_level: Option<f64> },
    RequiredCompute { sigma: Vec<f64>, easy: Vec<f64>, hard: Vec<f64> },
    AlgoProgress { elasticity: f64, accel_factor: f64 },
    PathwayArrival,
    WbeNeuroscience,
    NagiReady,
    OtherMethods,
    InsideViewWinner,
    SemiInformative { baseline: f64, origin: i32, per_doubling: Option<f64>, doublings_before_base: f64 },
    Extrapolation(ExtrapolationSpec),
    CombineTimelines { weights: Vec<f64>, horizon_years: u32, damping: f64 },
    SampleArrival,
    BreakthroughsBucket { statistical: BTreeSet<u32>, rows: Vec<[f64; 3]>, early_cutoff: i32 },
    Discontinuity,
    IntelligenceExplosion,
    DoublingTime(DoublingConfig),
    TakeoffSpeedClass,
    HlmiDistributed,
    MesaChain(MesaOutput),
    DsaRoute { concentration_boost: f64 },
    InfluenceSeeking,
    SafetyRace,
    FinalOutcome(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MesaOutput {
    InnerFailure,
    Deceptive,
}

#[derive(Debug, Clone, PartialEq)]
struct ExtrapolationSpec {
    subfields: bool,
    levels: Vec<f64>,
    rates: Vec<f64>,
    rates_per_oom: Vec<f64>,
    accel_factor: f64,
    threshold: Option<f64>,
}

/// A formula checked against its parents and ready to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledFormula {
    name: String,
    op: Op,
    out: ValueKind,
    horizon: (i32, i32),
}

// ---------------------------------------------------------------------------
// Parameter access

struct Params<'a> {
    builtin: &'a str,
    map: &'a BTreeMap<String, Json>,
    used: BTreeSet<&'static str>,
}

impl<'a> Params<'a> {
    fn new(builtin: &'a str, map: &'a BTreeMap<String, Json>) -> Self {
        Params {
            builtin,
            map,
            used: BTreeSet::new(),
        }
    }

    fn bad(&self, key: &str, what: &str) -> Error {
        Error::InvalidParams(format!("{}: parameter `{key}` {what}", self.builtin))
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Json> {
        self.used.insert(key);
        self.map.get(key)
    }

    fn opt_f64(&mut self, key: &'static str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| self.bad(key, "must be a finite number")),
        }
    }

    fn f64(&mut self, key: &'static str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| self.bad(key, "is required"))
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn opt_vec(&mut self, key: &'static str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Json::Array(items)) => items
                .iter()
                .map(|v| v.as_f64().filter(|x| x.is_finite()))
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| self.bad(key, "must be an array of finite numbers")),
            Some(_) => Err(self.bad(key, "must be an array")),
        }
    }

    fn vec(&mut self, key: &'static str) -> Result<Vec<f64>> {
        self.opt_vec(key)?.ok_or_else(|| self.bad(key, "is required"))
    }

    fn opt_str(&mut self, key: &'static str) -> Result<Option<&'a str>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.as_str().map(Some).ok_or_else(|| self.bad(key, "must be a string")),
        }
    }

    fn strings(&mut self, key: &'static str) -> Result<Vec<&'a str>> {
        match self.raw(key) {
            Some(Json::Array(items)) => items
                .iter()
                .map(|v| v.as_str())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| self.bad(key, "must be an array of strings")),
            Some(_) => Err(self.bad(key, "must be an array of strings")),
            None => Err(self.bad(key, "is required")),
        }
    }

    fn bool_or(&mut self, key: &'static str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| self.bad(key, "must be true or false")),
        }
    }

    fn rows<const N: usize>(&mut self, key: &'static str) -> Result<Vec<[f64; N]>> {
        let Some(Json::Array(rows)) = self.raw(key) else {
            return Err(self.bad(key, "must be an array of rows"));
        };
        rows.iter()
            .map(|row| {
                let Json::Array(cells) = row else { return None };
                let cells: Vec<f64> = cells.iter().map(|c| c.as_f64().filter(|x| x.is_finite())).collect::<Option<_>>()?;
                <[f64; N]>::try_from(cells).ok()
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| self.bad(key, &format!("rows must hold {N} finite numbers")))
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.map.keys().find(|k| !self.used.contains(k.as_str())) {
            return Err(Error::InvalidParams(format!("{}: unknown parameter `{key}`", self.builtin)));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Signature checks

struct Sig<'a> {
    builtin: &'a str,
    kinds: &'a [&'a ValueKind],
    horizon: (i32, i32),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum K {
    Bool,
    Real,
    Year,
    Cat,
    Series,
}

impl K {
    fn of(kind: &ValueKind) -> K {
        match kind {
            ValueKind::Bool => K::Bool,
            ValueKind::Real { .. } => K::Real,
            ValueKind::Year => K::Year,
            ValueKind::Category { .. } => K::Cat,
            ValueKind::Series { .. } => K::Series,
        }
    }

    fn name(self) -> &'static str {
        match self {
            K::Bool => "bool",
            K::Real => "real",
            K::Year => "year",
            K::Cat => "category",
            K::Series => "series",
        }
    }
}

impl Sig<'_> {
    fn arity(&self, expected: &str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::BadArity {
                builtin: self.builtin.to_string(),
                expected: expected.to_string(),
                got: self.kinds.len(),
            })
        }
    }

    fn exact(&self, n: usize) -> Result<()> {
        self.arity(&n.to_string(), self.kinds.len() == n)
    }

    fn at_least(&self, n: usize) -> Result<()> {
        self.arity(&format!("at least {n}"), self.kinds.len() >= n)
    }

    fn kind_at(&self, i: usize, want: K) -> Result<()> {
        let got = K::of(self.kinds[i]);
        if got != want {
            return Err(Error::KindMismatch(format!(
                "{}: input {} must be {}, got {}",
                self.builtin,
                i + 1,
                want.name(),
                got.name()
            )));
        }
        if got == K::Series {
            self.series_matches(self.kinds[i])?;
        }
        Ok(())
    }

    fn series_matches(&self, kind: &ValueKind) -> Result<()> {
        if let ValueKind::Series { start, end, .. } = kind {
            if (*start, *end) != self.horizon {
                return Err(Error::HorizonMismatch(format!(
                    "{}: series {start}..{end} does not match horizon {}..{}",
                    self.builtin, self.horizon.0, self.horizon.1
                )));
            }
        }
        Ok(())
    }

    /// Checks inputs `from..` against `pattern` in order.
    fn kinds(&self, from: usize, pattern: &[K]) -> Result<()> {
        for (j, want) in pattern.iter().enumerate() {
            self.kind_at(from + j, *want)?;
        }
        Ok(())
    }

    fn signature(&self, pattern: &[K]) -> Result<()> {
        self.exact(pattern.len())?;
        self.kinds(0, pattern)
    }

    fn all(&self, want: K) -> Result<()> {
        for i in 0..self.kinds.len() {
            self.kind_at(i, want)?;
        }
        Ok(())
    }

    fn labels(&self, i: usize) -> &[String] {
        self.kinds[i].labels().unwrap_or(&[])
    }

    fn category_with(&self, i: usize, labels: &[&str]) -> Result<()> {
        self.kind_at(i, K::Cat)?;
        let got = self.labels(i);
        if got.len() != labels.len() || got.iter().zip(labels).any(|(a, b)| a != b) {
            return Err(Error::KindMismatch(format!(
                "{}: input {} must be a category over {labels:?}, got {got:?}",
                self.builtin,
                i + 1
            )));
        }
        Ok(())
    }

    fn label_set(&self, i: usize, wanted: &[&str]) -> Result<BTreeSet<u32>> {
        let labels = self.labels(i);
        wanted
            .iter()
            .map(|w| {
                labels.iter().position(|l| l == w).map(|p| p as u32).ok_or_else(|| {
                    Error::InvalidParams(format!("{}: `{w}` is not a label of input {}", self.builtin, i + 1))
                })
            })
            .collect()
    }

    fn series_out(&self) -> ValueKind {
        ValueKind::series(self.horizon.0, self.horizon.1)
    }
}

fn weights_ok(builtin: &str, w: &[f64], must_sum_to_one: bool) -> Result<()> {
    if w.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::BadWeights(format!("{builtin}: weights must be nonnegative")));
    }
    let total: f64 = w.iter().sum();
    if must_sum_to_one && (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadWeights(format!("{builtin}: weights sum to {total}")));
    }
    Ok(())
}

fn prob_ok(builtin: &str, what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{builtin}: {what} = {p} outside [0, 1]")))
    }
}

fn table_len(builtin: &str, len: usize, inputs: usize) -> Result<()> {
    if inputs >= 20 || len != 1usize << inputs {
        return Err(Error::BadTable(format!(
            "{builtin}: {inputs} inputs need {} table entries, got {len}",
            1u64 << inputs.min(63)
        )));
    }
    Ok(())
}

/// Output kinds equal up to Real units.
fn same_shape(a: &ValueKind, b: &ValueKind) -> bool {
    match (a, b) {
        (ValueKind::Real { .. }, ValueKind::Real { .. }) => true,
        (ValueKind::Series { start: s1, end: e1, .. }, ValueKind::Series { start: s2, end: e2, .. }) => {
            s1 == s2 && e1 == e2
        }
        _ => a == b,
    }
}

// ---------------------------------------------------------------------------
// Compilation

/// Checks a builtin against its parameters, parent kinds and declared output
/// kind.
pub fn compile(
    builtin: &str,
    params: &BTreeMap<String, Json>,
    parent_kinds: &[&ValueKind],
    out: &ValueKind,
    horizon: (i32, i32),
) -> Result<CompiledFormula> {
    if horizon.1 < horizon.0 {
        return Err(Error::InvalidParams(format!("empty horizon {horizon:?}")));
    }
    let (op, expected) = compile_op(builtin, params, parent_kinds, horizon)?;
    if !same_shape(&expected, out) {
        return Err(Error::KindMismatch(format!(
            "{builtin} produces {}, node declares {}",
            describe(&expected),
            describe(out)
        )));
    }
    Ok(CompiledFormula {
        name: builtin.to_string(),
        op,
        out: out.clone(),
        horizon,
    })
}

fn describe(kind: &ValueKind) -> String {
    match kind {
        ValueKind::Category { labels } => format!("category {labels:?}"),
        ValueKind::Series { start, end, .. } => format!("series {start}..{end}"),
        other => other.tag().to_string(),
    }
}

fn compile_op(
    builtin: &str,
    params: &BTreeMap<String, Json>,
    kinds: &[&ValueKind],
    horizon: (i32, i32),
) -> Result<(Op, ValueKind)> {
    use K::*;
    let sig = Sig { builtin, kinds, horizon };
    let mut p = Params::new(builtin, params);
    let n = kinds.len();
    let real = ValueKind::real;
    let (op, out) = match builtin {
        "AND" | "OR" => {
            sig.at_least(1)?;
            sig.all(Bool)?;
            (if builtin == "AND" { Op::And } else { Op::Or }, ValueKind::Bool)
        }
        "NOT" => {
            sig.signature(&[Bool])?;
            (Op::Not, ValueKind::Bool)
        }
        "WEIGHTED_SUM" => {
            let w = p.vec("weights")?;
            sig.arity(&w.len().to_string(), n == w.len() && n > 0)?;
            sig.all(Real)?;
            (Op::WeightedSum(w), real())
        }
        "PRODUCT" => {
            sig.at_least(1)?;
            sig.all(Real)?;
            (Op::Product, real())
        }
        "MIN_YEAR" => {
            sig.at_least(1)?;
            sig.all(Year)?;
            (Op::MinYear, ValueKind::Year)
        }
        "FIRST_YEAR_GE" => {
            let threshold = p.opt_f64("threshold")?;
            if threshold.is_some() {
                sig.signature(&[Series])?;
            } else {
                sig.signature(&[Series, Real])?;
            }
            (Op::FirstYearGe(threshold), ValueKind::Year)
        }
        "LINEAR_MIX" => {
            let w = p.vec("weights")?;
            sig.arity(&w.len().to_string(), n == w.len() && n > 0)?;
            sig.all(Series)?;
            weights_ok(builtin, &w, true)?;
            (Op::LinearMix(w), sig.series_out())
        }
        "BERNOULLI" => {
            sig.signature(&[Real])?;
            (Op::Bernoulli, ValueKind::Bool)
        }
        "BOOL_TABLE" => {
            let probs = p.vec("probs")?;
            sig.all(Bool)?;
            table_len(builtin, probs.len(), n)?;
            for q in &probs {
                prob_ok(builtin, "table entry", *q)?;
            }
            (Op::BoolTable(probs), ValueKind::Bool)
        }
        "REAL_TABLE" => {
            let values = p.vec("values")?;
            sig.all(Bool)?;
            table_len(builtin, values.len(), n)?;
            (Op::RealTable(values), real())
        }
        "IN_CATEGORY" => {
            sig.exact(1)?;
            sig.kind_at(0, Cat)?;
            let labels = p.strings("labels")?;
            (Op::InCategory(sig.label_set(0, &labels)?), ValueKind::Bool)
        }
        "YEAR_IS_SET" => {
            sig.signature(&[Year])?;
            (Op::YearIsSet, ValueKind::Bool)
        }
        "YEAR_AFTER" => {
            sig.signature(&[Year, Year])?;
            (Op::YearAfter, ValueKind::Bool)
        }
        "GATE_YEAR" => {
            sig.at_least(1)?;
            sig.kind_at(0, Year)?;
            for i in 1..n {
                sig.kind_at(i, Bool)?;
            }
            (Op::GateYear, ValueKind::Year)
        }
        "HAZARD_YEAR" => {
            let base = p.f64("base_hazard")?;
            prob_ok(builtin, "base_hazard", base)?;
            let multipliers = p.opt_vec("multipliers")?.unwrap_or_default();
            sig.arity(&multipliers.len().to_string(), n == multipliers.len())?;
            sig.all(Bool)?;
            if multipliers.iter().any(|m| !(*m >= 0.0)) {
                return Err(Error::InvalidParams(format!("{builtin}: multipliers must be nonnegative")));
            }
            (Op::HazardYear { base, multipliers }, ValueKind::Year)
        }
        "LOGNORMAL_AROUND" => {
            sig.signature(&[Real])?;
            let sigma = p.f64("sigma_log10")?;
            if !(sigma >= 0.0) {
                return Err(Error::InvalidParams(format!("{builtin}: sigma_log10 must be nonnegative")));
            }
            (Op::LognormalAround(sigma), real())
        }
        "SELECT" => {
            sig.exact(3)?;
            sig.kind_at(0, Bool)?;
            if !same_shape(kinds[1], kinds[2]) {
                return Err(Error::KindMismatch(format!("{builtin}: both branches must have the same kind")));
            }
            sig.series_matches(kinds[1])?;
            (Op::Select, kinds[1].clone())
        }
        "COST_PER_COMPUTE" => {
            sig.signature(&[Real, Real, Real, Real, Bool])?;
            let base_cost = p.f64("base_cost")?;
            let floor = p.f64("landauer_floor_cost")?;
            if !(base_cost > 0.0 && floor > 0.0) {
                return Err(Error::InvalidParams(format!("{builtin}: costs must be positive")));
            }
            (Op::CostPerCompute { base_cost, floor }, sig.series_out())
        }
        "BUDGET" => {
            sig.signature(&[Real, Real, Real, Bool, Bool])?;
            let op = Op::Budget {
                base: p.f64("base_budget")?,
                world_gdp: p.f64("world_gdp_base")?,
                richest_gdp: p.f64("richest_gdp_base")?,
                tech_fraction: p.f64("tech_rd_gdp_fraction")?,
                government_fraction: p.f64("government_fraction")?,
            };
            (op, sig.series_out())
        }
        "COMPUTE_AVAILABLE" => {
            sig.signature(&[Series, Series])?;
            (Op::ComputeAvailable, sig.series_out())
        }
        "EVOLUTIONARY_ANCHOR" => {
            sig.signature(&[Real; 9])?;
            (Op::EvolutionaryAnchor, real())
        }
        "LIFETIME_ANCHOR" => {
            sig.signature(&[Real; 4])?;
            (Op::LifetimeAnchor, real())
        }
        "SCALING_ANCHOR" => {
            sig.signature(&[Real; 6])?;
            let kind = match p.opt_str("kind")?.unwrap_or("neural_net") {
                "genome" => ScalingKind::Genome,
                "neural_net" => ScalingKind::NeuralNet,
                other => return Err(Error::InvalidParams(format!("{builtin}: unknown kind `{other}`"))),
            };
            if !p.bool_or("horizon_linear", true)? {
                return Err(Error::UnsupportedSublinear);
            }
            (Op::ScalingAnchor(kind), real())
        }
        "DL_EXTRAPOLATION_ANCHOR" => {
            let points: Vec<(f64, f64)> = p.rows::<2>("points")?.into_iter().map(|[x, y]| (x, y)).collect();
            check_benchmark_points(&points)?;
            let human_level = p.opt_f64("human_level")?;
            match human_level {
                Some(h) => {
                    sig.exact(0)?;
                    dl_extrapolation_anchor(&points, h)?;
                }
                None => sig.signature(&[Real])?,
            }
            (Op::DlExtrapolation { points, human_level }, real())
        }
        "REQUIRED_COMPUTE" => {
            sig.signature(&[Real, Real, Real, Real, Real, Real, Bool])?;
            let sigma = p.vec("sigma_log10")?;
            let easy = p.vec("weights_easy")?;
            let hard = p.vec("weights_hard")?;
            if sigma.len() != 5 || easy.len() != 5 || hard.len() != 5 {
                return Err(Error::InvalidParams(format!("{builtin}: expected five entries per anchor list")));
            }
            if sigma.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidParams(format!("{builtin}: sigma_log10 must be positive")));
            }
            weights_ok(builtin, &easy, true)?;
            weights_ok(builtin, &hard, true)?;
            (Op::RequiredCompute { sigma, easy, hard }, real())
        }
        "ALGO_PROGRESS" => {
            sig.exact(4)?;
            sig.kinds(0, &[Bool, Series, Real])?;
            sig.category_with(3, &Acceleration::LABELS)?;
            let elasticity = p.f64("compute_elasticity")?;
            let accel_factor = p.f64_or("accel_factor", 0.0)?;
            if !(elasticity >= 0.0 && accel_factor >= 0.0) {
                return Err(Error::InvalidParams(format!("{builtin}: factors must be nonnegative")));
            }
            (Op::AlgoProgress { elasticity, accel_factor }, sig.series_out())
        }
        "PATHWAY_ARRIVAL" => {
            sig.signature(&[Real, Series, Series, Year])?;
            (Op::PathwayArrival, ValueKind::Year)
        }
        "WBE_NEUROSCIENCE" => {
            sig.signature(&[Year, Real])?;
            (Op::WbeNeuroscience, ValueKind::Year)
        }
        "NAGI_READY" => {
            sig.signature(&[Year, Bool, Real, Real, Year])?;
            (Op::NagiReady, ValueKind::Year)
        }
        "OTHER_METHODS" => {
            sig.signature(&[Real, Real, Real])?;
            (Op::OtherMethods, ValueKind::Year)
        }
        "INSIDE_VIEW_WINNER" => {
            sig.signature(&[Year; 7])?;
            (Op::InsideViewWinner, ValueKind::category(&hlmi_type_labels()))
        }
        "SEMI_INFORMATIVE" => {
            let baseline = p.f64("baseline")?;
            let origin = p.f64("origin_year")?;
            let per_doubling = match (p.opt_f64("baseline_per_doubling")?, p.opt_f64("years_per_doubling")?) {
                (Some(b), None) => Some(b),
                (None, Some(years)) => Some(1.0 - (1.0 - baseline).powf(years)),
                (None, None) => None,
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidParams(format!(
                        "{builtin}: give baseline_per_doubling or years_per_doubling, not both"
                    )))
                }
            };
            let doublings_before_base = p.f64_or("doublings_before_base", 0.0)?;
            if n == 0 {
                if per_doubling.is_some() {
                    return Err(Error::InvalidParams(format!("{builtin}: doubling trials need a compute input")));
                }
            } else {
                sig.signature(&[Bool, Series])?;
                if per_doubling.is_none() {
                    return Err(Error::InvalidParams(format!("{builtin}: compute input needs a per-doubling baseline")));
                }
            }
            let op = Op::SemiInformative {
                baseline,
                origin: origin as i32,
                per_doubling,
                doublings_before_base,
            };
            // Reject bad constants now rather than in every sample.
            let probe = [baseline].into_iter().chain(per_doubling);
            for b in probe {
                crate::timelines::calibrate_m(b)?;
            }
            if origin.fract() != 0.0 || origin as i32 >= horizon.0 {
                return Err(Error::InvalidParams(format!("{builtin}: origin_year must be an integer before the base year")));
            }
            (op, sig.series_out())
        }
        "EXTRAPOLATION" => {
            let subfields = match p.opt_str("mode")?.unwrap_or("automation") {
                "automation" => false,
                "subfields" => true,
                other => return Err(Error::InvalidParams(format!("{builtin}: unknown mode `{other}`"))),
            };
            let (levels, rates, rates_per_oom) = if subfields {
                (p.vec("current_levels")?, p.vec("rates")?, p.vec("rates_per_oom")?)
            } else {
                (vec![p.f64("current_level")?], vec![p.f64("rate")?], vec![p.f64("rate_per_oom")?])
            };
            if levels.is_empty() || levels.len() != rates.len() || levels.len() != rates_per_oom.len() {
                return Err(Error::InvalidParams(format!("{builtin}: level and rate lists must match")));
            }
            let accel_factor = p.f64_or("accel_factor", 0.0)?;
            let threshold = if subfields { p.opt_f64("threshold")? } else { None };
            let with_threshold = subfields && threshold.is_none();
            sig.exact(if with_threshold { 4 } else { 3 })?;
            sig.kinds(0, &[Bool, Series])?;
            sig.category_with(2, &Acceleration::LABELS)?;
            if with_threshold {
                sig.kind_at(3, Real)?;
            }
            let spec = ExtrapolationSpec {
                subfields,
                levels,
                rates,
                rates_per_oom,
                accel_factor,
                threshold,
            };
            (Op::Extrapolation(spec), sig.series_out())
        }
        "COMBINE_TIMELINES" => {
            let weights = p.vec("weights")?;
            let m = weights.len();
            sig.arity(&(m + 1).to_string(), n == m + 1 && m > 0)?;
            for i in 0..m {
                match K::of(kinds[i]) {
                    Year => {}
                    Series => sig.series_matches(kinds[i])?,
                    other => {
                        return Err(Error::KindMismatch(format!(
                            "{builtin}: input {} must be year or series, got {}",
                            i + 1,
                            other.name()
                        )))
                    }
                }
            }
            sig.kind_at(m, Bool)?;
            weights_ok(builtin, &weights, true)?;
            let horizon_years = p.f64_or("short_horizon_years", 0.0)?;
            let damping = p.f64_or("damping", 1.0)?;
            prob_ok(builtin, "damping", damping)?;
            if !(horizon_years >= 0.0) || horizon_years.fract() != 0.0 {
                return Err(Error::InvalidParams(format!("{builtin}: short_horizon_years must be a whole number")));
            }
            (
                Op::CombineTimelines {
                    weights,
                    horizon_years: horizon_years as u32,
                    damping,
                },
                sig.series_out(),
            )
        }
        "SAMPLE_ARRIVAL" => {
            sig.signature(&[Series])?;
            (Op::SampleArrival, ValueKind::Year)
        }
        "BREAKTHROUGHS_BUCKET" => {
            sig.exact(4)?;
            sig.kinds(0, &[Cat, Bool, Bool, Year])?;
            let statistical = p.strings("statistical_types")?;
            let statistical = sig.label_set(0, &statistical)?;
            let rows = p.rows::<3>("rows")?;
            check_bucket_table(&rows)?;
            let early_cutoff = p.f64("early_cutoff_year")? as i32;
            (
                Op::BreakthroughsBucket {
                    statistical,
                    rows,
                    early_cutoff,
                },
                ValueKind::category(&BUCKET_LABELS),
            )
        }
        "DISCONTINUITY" => {
            sig.exact(6)?;
            sig.kinds(0, &[Bool, Bool, Bool])?;
            sig.category_with(3, &BUCKET_LABELS)?;
            sig.kinds(4, &[Bool, Bool])?;
            (Op::Discontinuity, ValueKind::Bool)
        }
        "INTELLIGENCE_EXPLOSION" => {
            sig.signature(&[Bool; 6])?;
            (Op::IntelligenceExplosion, ValueKind::Bool)
        }
        "DOUBLING_TIME" => {
            sig.signature(&[Bool; 4])?;
            let d = DoublingConfig::default();
            let cfg = DoublingConfig {
                outside_median_days: p.f64_or("outside_median_days", d.outside_median_days)?,
                sigma_log10: p.f64_or("sigma_log10", d.sigma_log10)?,
                multiplier: p.f64_or("multiplier", d.multiplier)?,
            };
            post_hlmi_doubling_time(true, &DifficultyCruxes::default(), &cfg)?;
            (Op::DoublingTime(cfg), real())
        }
        "TAKEOFF_SPEED_CLASS" => {
            sig.signature(&[Bool, Bool, Real])?;
            (Op::TakeoffSpeedClass, ValueKind::category(&TAKEOFF_SPEED_LABELS))
        }
        "HLMI_DISTRIBUTED" => {
            sig.signature(&[Bool, Real, Bool, Bool, Bool, Bool, Bool, Bool])?;
            (Op::HlmiDistributed, ValueKind::Bool)
        }
        "MESA_CHAIN" => {
            sig.signature(&[Real; 11])?;
            let output = match p.opt_str("output")?.unwrap_or("inner_failure") {
                "inner_failure" => MesaOutput::InnerFailure,
                "deceptive" => MesaOutput::Deceptive,
                other => return Err(Error::InvalidParams(format!("{builtin}: unknown output `{other}`"))),
            };
            (Op::MesaChain(output), real())
        }
        "DSA_ROUTE" => {
            sig.signature(&[Bool, Bool, Real, Real, Real, Real, Real, Bool])?;
            let concentration_boost = p.f64_or("concentration_boost", 0.0)?;
            prob_ok(builtin, "concentration_boost", concentration_boost)?;
            (Op::DsaRoute { concentration_boost }, ValueKind::category(&DsaRoute::LABELS))
        }
        "INFLUENCE_SEEKING" => {
            sig.signature(&[Bool, Bool, Bool, Real])?;
            (Op::InfluenceSeeking, ValueKind::Bool)
        }
        "SAFETY_RACE" => {
            sig.signature(&[Year, Real, Year, Bool, Bool])?;
            (Op::SafetyRace, ValueKind::Bool)
        }
        "FINAL_OUTCOME" => {
            sig.signature(&[Bool; 10])?;
            let name = p.opt_str("output")?.unwrap_or("catastrophically_misaligned");
            let idx = FinalOutcomes::NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::InvalidParams(format!("{builtin}: unknown output `{name}`")))?;
            (Op::FinalOutcome(idx), ValueKind::Bool)
        }
        other => return Err(Error::UnknownBuiltin(other.to_string())),
    };
    p.finish()?;
    Ok((op, out))
}

// ---------------------------------------------------------------------------
// Evaluation

fn b(v: &Value) -> bool {
    v.as_bool().expect("compiled formula received a non-bool input")
}

fn r(v: &Value) -> f64 {
    v.as_real().expect("compiled formula received a non-real input")
}

fn y(v: &Value) -> Option<i32> {
    v.as_year().expect("compiled formula received a non-year input")
}

fn c(v: &Value) -> u32 {
    v.as_category().expect("compiled formula received a non-category input")
}

fn s(v: &Value) -> &[f64] {
    v.as_series().expect("compiled formula received a non-series input")
}

fn table_index(inputs: &[&Value]) -> usize {
    inputs.iter().fold(0, |acc, v| acc << 1 | b(v) as usize)
}

impl CompiledFormula {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn output_kind(&self) -> &ValueKind {
        &self.out
    }

    fn clip(&self, year: Option<i32>) -> Option<i32> {
        year.filter(|y| *y <= self.horizon.1)
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::InvalidParams(format!("{}: {}", self.name, message.into()))
    }

    fn prob(&self, what: &str, p: f64) -> Result<f64> {
        if (0.0..=1.0).contains(&p) {
            Ok(p)
        } else {
            Err(self.fail(format!("{what} = {p} outside [0, 1]")))
        }
    }

    /// Evaluates for one sample. Inputs must match the compiled parent kinds.
    pub fn eval(&self, inputs: &[&Value], rng: &mut RngStream) -> Result<Value> {
        let h = self.horizon;
        let n = (h.1 - h.0 + 1) as usize;
        Ok(match &self.op {
            Op::And => Value::Bool(inputs.iter().all(|v| b(v))),
            Op::Or => Value::Bool(inputs.iter().any(|v| b(v))),
            Op::Not => Value::Bool(!b(inputs[0])),
            Op::WeightedSum(w) => Value::Real(w.iter().zip(inputs).map(|(w, v)| w * r(v)).sum()),
            Op::Product => Value::Real(inputs.iter().map(|v| r(v)).product()),
            Op::MinYear => Value::Year(inputs.iter().filter_map(|v| y(v)).min()),
            Op::FirstYearGe(t) => {
                let t = t.unwrap_or_else(|| r(inputs[1]));
                Value::Year(s(inputs[0]).iter().position(|x| *x >= t).map(|i| h.0 + i as i32))
            }
            Op::LinearMix(w) => {
                let mut out = vec![0.0; n];
                for (w, v) in w.iter().zip(inputs) {
                    for (o, x) in out.iter_mut().zip(s(v)) {
                        *o += w * x;
                    }
                }
                Value::Series(out)
            }
            Op::Bernoulli => Value::Bool(rng.bernoulli(self.prob("probability", r(inputs[0]))?)),
            Op::BoolTable(probs) => Value::Bool(rng.bernoulli(probs[table_index(inputs)])),
            Op::RealTable(values) => Value::Real(values[table_index(inputs)]),
            Op::InCategory(set) => Value::Bool(set.contains(&c(inputs[0]))),
            Op::YearIsSet => Value::Bool(y(inputs[0]).is_some()),
            Op::YearAfter => Value::Bool(match (y(inputs[0]), y(inputs[1])) {
                (None, _) => true,
                (Some(_), None) => false,
                (Some(a), Some(b)) => a >= b,
            }),
            Op::GateYear => Value::Year(if inputs[1..].iter().all(|v| b(v)) { y(inputs[0]) } else { None }),
            Op::HazardYear { base, multipliers } => {
                let hazard = multipliers
                    .iter()
                    .zip(inputs)
                    .filter(|(_, v)| b(v))
                    .fold(*base, |acc, (m, _)| acc * m)
                    .clamp(0.0, 1.0);
                let k = rng.geometric(hazard, n as u64);
                Value::Year((k < n as u64).then(|| h.0 + k as i32))
            }
            Op::LognormalAround(sigma) => Value::Real(r(inputs[0]) * 10f64.powf(sigma * rng.standard_normal())),
            Op::Select => {
                if b(inputs[0]) {
                    inputs[1].clone()
                } else {
                    inputs[2].clone()
                }
            }
            Op::CostPerCompute { base_cost, floor } => {
                let p = HardwareParams {
                    base_cost: *base_cost,
                    moore_growth: r(inputs[0]),
                    moore_end_year: r(inputs[1]),
                    post_moore_growth: r(inputs[2]),
                    p_post_moore_end: r(inputs[3]),
                    reversible_computing: b(inputs[4]),
                    landauer_floor_cost: *floor,
                };
                Value::Series(cost_per_compute_series(&p, h, rng)?)
            }
            Op::Budget {
                base,
                world_gdp,
                richest_gdp,
                tech_fraction,
                government_fraction,
            } => {
                let p = BudgetParams {
                    base_budget: *base,
                    compute_trend_years: r(inputs[0]),
                    compute_trend_growth: r(inputs[1]),
                    gdp_growth: r(inputs[2]),
                    world_gdp_base: *world_gdp,
                    richest_gdp_base: *richest_gdp,
                    corporate_race: b(inputs[3]),
                    government_race: b(inputs[4]),
                    tech_rd_gdp_fraction: *tech_fraction,
                    government_fraction: *government_fraction,
                };
                Value::Series(budget_series(&p, h)?)
            }
            Op::ComputeAvailable => Value::Series(compute_available_series(s(inputs[0]), s(inputs[1]), h.0)?),
            Op::EvolutionaryAnchor => {
                let x: Vec<f64> = inputs.iter().map(|v| r(v)).collect();
                Value::Real(evolutionary_anchor(&EvolutionaryAnchorParams {
                    evo_years: x[0],
                    avg_neuron_population: x[1],
                    flop_per_neuron_year: x[2],
                    avg_animal_population: x[3],
                    env_flop_per_animal_year: x[4],
                    luck_factor: x[5],
                    speedup_population: x[6],
                    speedup_generations: x[7],
                    speedup_per_capita: x[8],
                })?)
            }
            Op::LifetimeAnchor => Value::Real(lifetime_anchor(&LifetimeAnchorParams {
                neurons: r(inputs[0]),
                flop_per_neuron_year: r(inputs[1]),
                training_years: r(inputs[2]),
                pretraining_factor: r(inputs[3]),
            })?),
            Op::ScalingAnchor(kind) => Value::Real(scaling_law_anchor(&ScalingAnchorParams {
                kind: *kind,
                param_count: r(inputs[0]),
                scaling_coeff: r(inputs[1]),
                scaling_exponent: r(inputs[2]),
                brain_flop_rate: r(inputs[3]),
                efficiency_factor: r(inputs[4]),
                horizon_seconds: r(inputs[5]),
                horizon_linear: true,
            })?),
            Op::DlExtrapolation { points, human_level } => {
                let level = human_level.unwrap_or_else(|| r(inputs[0]));
                Value::Real(dl_extrapolation_anchor(points, level)?)
            }
            Op::RequiredCompute { sigma, easy, hard } => {
                let weights = if b(inputs[6]) { hard } else { easy };
                let anchors: Vec<AnchorComponent> = (0..5)
                    .filter(|&i| weights[i] > 0.0)
                    .map(|i| AnchorComponent {
                        weight: weights[i],
                        median: r(inputs[i]),
                        sigma_log10: sigma[i],
                        evolutionary: i == 0,
                    })
                    .collect();
                let dist = required_compute_distribution(&anchors, r(inputs[5]))?;
                sample(&dist, rng)?
            }
            Op::AlgoProgress { elasticity, accel_factor } => {
                let compute = s(inputs[1]);
                let out: Vec<f64> = if b(inputs[0]) {
                    let base = compute[0];
                    if !(base > 0.0) {
                        return Err(Error::NonpositiveCost { year: h.0 });
                    }
                    let mut peak = base;
                    compute
                        .iter()
                        .map(|c| {
                            peak = peak.max(*c);
                            (peak / base).powf(*elasticity)
                        })
                        .collect()
                } else {
                    let growth = r(inputs[2]);
                    if !(growth >= 0.0) {
                        return Err(self.fail(format!("growth {growth} must be nonnegative")));
                    }
                    let accel = Acceleration::from_index(c(inputs[3])).expect("checked labels");
                    let g = accel.ratio(*accel_factor);
                    let (mut level, mut rate) = (1.0, growth);
                    (0..n)
                        .map(|t| {
                            if t > 0 {
                                level *= 1.0 + rate;
                                rate *= g;
                            }
                            level
                        })
                        .collect()
                };
                Value::Series(out)
            }
            Op::PathwayArrival => Value::Year(pathway_arrival_year(
                r(inputs[0]),
                s(inputs[1]),
                s(inputs[2]),
                y(inputs[3]),
                h.0,
            )?),
            Op::WbeNeuroscience => {
                let lag = r(inputs[1]);
                if !(lag >= 0.0 && lag < 1e6) {
                    return Err(self.fail(format!("lag {lag} must be a nonnegative number of years")));
                }
                Value::Year(self.clip(y(inputs[0]).map(|s| s + lag.round() as i32)))
            }
            Op::NagiReady => {
                let (wbe, on_path, fraction, lag, fallback) =
                    (y(inputs[0]), b(inputs[1]), r(inputs[2]), r(inputs[3]), y(inputs[4]));
                self.prob("advantage_fraction", fraction)?;
                if !(lag >= 0.0 && lag < 1e6) {
                    return Err(self.fail(format!("lag {lag} must be a nonnegative number of years")));
                }
                Value::Year(match (on_path, wbe) {
                    (true, Some(w)) => Some((w - (fraction * lag).round() as i32).max(h.0)),
                    _ => fallback,
                })
            }
            Op::OtherMethods => {
                let delay = r(inputs[2]);
                if !(delay >= 0.0 && delay < 1e6) {
                    return Err(self.fail(format!("delay {delay} must be a nonnegative number of years")));
                }
                Value::Year(other_methods_pathway(r(inputs[0]), r(inputs[1]), delay.round() as u32, h, rng)?)
            }
            Op::InsideViewWinner => {
                let samples: Vec<(Pathway, Option<i32>)> =
                    Pathway::ALL.iter().zip(inputs).map(|(p, v)| (*p, y(v))).collect();
                let (_, winner) = inside_view_timeline(&samples)?;
                Value::Category(winner.map_or(Pathway::ALL.len() as u32, |p| p as u32))
            }
            Op::SemiInformative {
                baseline,
                origin,
                per_doubling,
                doublings_before_base,
            } => {
                let by_compute = !inputs.is_empty() && b(inputs[0]);
                let params = if by_compute {
                    SemiInformativePriorParams {
                        baseline: per_doubling.expect("checked at compile time"),
                        origin_year: *origin,
                        mode: TrialMode::ComputeDoublings {
                            doublings_before_base: *doublings_before_base,
                        },
                        m_override: None,
                    }
                } else {
                    SemiInformativePriorParams {
                        baseline: *baseline,
                        origin_year: *origin,
                        mode: TrialMode::Years,
                        m_override: None,
                    }
                };
                let compute = by_compute.then(|| s(inputs[1]));
                Value::Series(semi_informative_timeline(&params, h, compute)?.cdf)
            }
            Op::Extrapolation(spec) => {
                let by_compute = b(inputs[0]);
                let accel = Acceleration::from_index(c(inputs[2])).expect("checked labels");
                let rates = if by_compute { &spec.rates_per_oom } else { &spec.rates };
                let fields: Vec<(f64, f64)> = spec.levels.iter().copied().zip(rates.iter().copied()).collect();
                let mode = if spec.subfields {
                    ExtrapolationMode::Subfields {
                        fields,
                        threshold: spec.threshold.unwrap_or_else(|| r(inputs[3])),
                    }
                } else {
                    ExtrapolationMode::Automation {
                        level: fields[0].0,
                        rate: fields[0].1,
                    }
                };
                let basis = if by_compute {
                    Basis::Log10Compute(s(inputs[1]))
                } else {
                    Basis::Time
                };
                match extrapolation_timeline(&mode, accel, spec.accel_factor, basis, h) {
                    Ok(cdf) => Value::Series(cdf.cdf),
                    Err(Error::Unreachable(_)) => Value::Series(vec![0.0; n]),
                    Err(e) => return Err(e),
                }
            }
            Op::CombineTimelines {
                weights,
                horizon_years,
                damping,
            } => {
                let m = weights.len();
                let parts: Vec<(f64, TimelineCdf)> = weights
                    .iter()
                    .zip(&inputs[..m])
                    .map(|(w, v)| {
                        let cdf = match v {
                            Value::Year(year) => TimelineCdf::point_mass(h, *year),
                            other => TimelineCdf {
                                start: h.0,
                                cdf: s(other).to_vec(),
                            },
                        };
                        (*w, cdf)
                    })
                    .collect();
                let adjust = ShortAdjustment {
                    enabled: b(inputs[m]),
                    horizon_years: *horizon_years,
                    damping: *damping,
                };
                Value::Series(combine_timelines(&parts, adjust)?.cdf)
            }
            Op::SampleArrival => {
                let cdf = TimelineCdf {
                    start: h.0,
                    cdf: s(inputs[0]).to_vec(),
                };
                Value::Year(cdf.sample_year(rng.uniform()))
            }
            Op::BreakthroughsBucket {
                statistical,
                rows,
                early_cutoff,
            } => {
                let cond = BucketCondition {
                    statistical_type: statistical.contains(&c(inputs[0])),
                    difficult_at_hlmi: b(inputs[1]),
                    hard_paths: b(inputs[2]),
                    early: y(inputs[3]).is_some_and(|yr| yr <= *early_cutoff),
                };
                Value::Category(breakthroughs_bucket(cond, rows, rng)? as u32)
            }
            Op::Discontinuity => {
                let bucket = Bucket::ALL[c(inputs[3]) as usize];
                Value::Bool(discontinuity(
                    b(inputs[0]),
                    b(inputs[1]),
                    b(inputs[2]),
                    bucket,
                    b(inputs[4]),
                    b(inputs[5]),
                ))
            }
            Op::IntelligenceExplosion => {
                let cruxes = DifficultyCruxes {
                    difficult_at_hlmi: false,
                    strongly_increasing: b(inputs[0]),
                    upper_limit_far_above: b(inputs[1]),
                    previous_intelligence_bottleneck: b(inputs[2]),
                };
                let hw = HardwarePathCruxes {
                    scales_with_researchers: b(inputs[3]),
                    hw_not_strongly_harder: b(inputs[4]),
                    room_for_improvement: b(inputs[5]),
                };
                Value::Bool(intelligence_explosion(&cruxes, &hw))
            }
            Op::DoublingTime(cfg) => {
                let cruxes = DifficultyCruxes {
                    difficult_at_hlmi: b(inputs[1]),
                    strongly_increasing: b(inputs[2]),
                    upper_limit_far_above: b(inputs[3]),
                    previous_intelligence_bottleneck: false,
                };
                let d = post_hlmi_doubling_time(b(inputs[0]), &cruxes, cfg)?;
                Value::Real(d.sample_days(rng))
            }
            Op::TakeoffSpeedClass => {
                Value::Category(takeoff_speed_class(b(inputs[0]), b(inputs[1]), r(inputs[2])) as u32)
            }
            Op::HlmiDistributed => {
                let f = DistributionFactors {
                    high_fixed_costs: b(inputs[2]),
                    easy_trade: b(inputs[3]),
                    large_hw_scaling_gains: b(inputs[4]),
                    catchup_easier: b(inputs[5]),
                    secrecy: b(inputs[6]),
                    eliminate_laggards: b(inputs[7]),
                };
                Value::Bool(hlmi_distributed(b(inputs[0]), r(inputs[1]) <= 0.0, &f))
            }
            Op::MesaChain(output) => {
                let x: Vec<f64> = inputs.iter().map(|v| r(v)).collect();
                let out = mesa_failure_probability(&MesaChainParams {
                    p_contains_mesa: x[0],
                    p_pseudo_given_mesa: x[1],
                    p_unsafe_given_pseudo: x[2],
                    p_fail_stop_given_unsafe: x[3],
                    count_ratio: x[4],
                    ease_ratio: x[5],
                    persistence_ratio: x[6],
                    rd_reduction_objective_robustness: x[7],
                    rd_reduction_myopia: x[8],
                    rd_transparency_detection: x[9],
                    modeling_odds: x[10],
                })?;
                Value::Real(match output {
                    MesaOutput::InnerFailure => out.p_inner_failure,
                    MesaOutput::Deceptive => out.p_deceptive,
                })
            }
            Op::DsaRoute { concentration_boost } => {
                let days = r(inputs[4]);
                let takeover_time = if days <= 0.0 {
                    Some(0.0)
                } else {
                    let lead_growth = std::f64::consts::LN_2 * 365.0 / days;
                    economic_takeover_years(r(inputs[3]), lead_growth, r(inputs[5]))?
                };
                let (_, route) = dsa_assessment(
                    &DsaInputs {
                        governance_prevents: b(inputs[0]),
                        distributed: b(inputs[1]),
                        lead_time_years: r(inputs[2]),
                        takeover_time,
                        p_single_dsa: r(inputs[6]),
                        coalition: b(inputs[7]),
                        concentration_boost: *concentration_boost,
                    },
                    rng,
                )?;
                Value::Category(route.index() as u32)
            }
            Op::InfluenceSeeking => Value::Bool(influence_seeking(
                b(inputs[0]),
                b(inputs[1]),
                b(inputs[2]),
                r(inputs[3]),
                rng,
            )?),
            Op::SafetyRace => Value::Bool(safety_race(
                y(inputs[0]),
                r(inputs[1]),
                y(inputs[2]),
                b(inputs[3]),
                b(inputs[4]),
            )),
            Op::FinalOutcome(idx) => {
                let bits: [bool; 10] = std::array::from_fn(|i| b(inputs[i]));
                let out = final_outcomes(&OutcomeInputs::from_bits(bits));
                Value::Bool(out.get(FinalOutcomes::NAMES[*idx]).expect("known output"))
            }
        })
    }
}

/// Horizon assumed by [`evaluate_formula`] when no series input fixes one.
pub const DEFAULT_HORIZON: (i32, i32) = (2022, 2100);

/// Evaluates a builtin directly on values, without a graph.
///
/// Kinds are read off the values: categories get labels `"0"`, `"1"`, ...
/// up to the largest index seen, and series inputs set the horizon (starting
/// at the default base year). Stochastic builtins use a fixed stream.
pub fn evaluate_formula(builtin: &str, params: &BTreeMap<String, Json>, parents: &[Value]) -> Result<Value> {
    let horizon = parents
        .iter()
        .find_map(|v| v.as_series().map(|s| (DEFAULT_HORIZON.0, DEFAULT_HORIZON.0 + s.len() as i32 - 1)))
        .unwrap_or(DEFAULT_HORIZON);
    let kinds: Vec<ValueKind> = parents
        .iter()
        .map(|v| match v {
            Value::Bool(_) => ValueKind::Bool,
            Value::Real(_) => ValueKind::real(),
            Value::Year(_) => ValueKind::Year,
            Value::Category(i) => ValueKind::category(&(0..=*i).map(|k| k.to_string()).collect::<Vec<_>>()),
            Value::Series(_) => ValueKind::series(horizon.0, horizon.1),
        })
        .collect();
    let refs: Vec<&ValueKind> = kinds.iter().collect();
    let (op, out) = compile_op(builtin, params, &refs, horizon)?;
    let f = CompiledFormula {
        name: builtin.to_string(),
        op,
        out,
        horizon,
    };
    let inputs: Vec<&Value> = parents.iter().collect();
    f.eval(&inputs, &mut RngStream::new(0, 0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn params(v: Json) -> BTreeMap<String, Json> {
        serde_json::from_value(v).unwrap()
    }

    fn none() -> BTreeMap<String, Json> {
        BTreeMap::new()
    }

    fn eval(builtin: &str, p: Json, parents: &[Value]) -> Result<Value> {
        evaluate_formula(builtin, &params(p), parents)
    }

    #[test]
    fn catalog_examples() {
        use Value::*;
        assert_eq!(eval("AND", json!({}), &[Bool(true), Bool(true), Bool(false)]), Ok(Bool(false)));
        assert_eq!(eval("OR", json!({}), &[Bool(false), Bool(true)]), Ok(Bool(true)));
        assert_eq!(eval("NOT", json!({}), &[Bool(false)]), Ok(Bool(true)));
        assert_eq!(
            eval("MIN_YEAR", json!({}), &[Year(Some(2040)), Year(None), Year(Some(2035))]),
            Ok(Year(Some(2035)))
        );
        assert_eq!(eval("MIN_YEAR", json!({}), &[Year(None)]), Ok(Year(None)));
        assert_eq!(
            eval("WEIGHTED_SUM", json!({"weights": [0.25, 0.75]}), &[Real(0.0), Real(4.0)]),
            Ok(Real(3.0))
        );
        assert_eq!(eval("PRODUCT", json!({}), &[Real(2.0), Real(3.5)]), Ok(Real(7.0)));
    }

    #[test]
    fn catalog_errors() {
        use Value::*;
        assert_eq!(eval("FROBNICATE", json!({}), &[]).unwrap_err().code(), "UNKNOWN_BUILTIN");
        assert_eq!(eval("NOT", json!({}), &[Bool(true), Bool(true)]).unwrap_err().code(), "BAD_ARITY");
        assert_eq!(eval("AND", json!({}), &[]).unwrap_err().code(), "BAD_ARITY");
        assert_eq!(eval("NOT", json!({}), &[Real(1.0)]).unwrap_err().code(), "KIND_MISMATCH");
        assert_eq!(
            eval("WEIGHTED_SUM", json!({"weights": [1.0]}), &[Real(0.0), Real(4.0)]).unwrap_err().code(),
            "BAD_ARITY"
        );
        assert_eq!(eval("NOT", json!({"x": 1}), &[Bool(true)]).unwrap_err().code(), "INVALID_PARAMS");
        assert_eq!(
            eval("BOOL_TABLE", json!({"probs": [0.5, 0.5, 0.5]}), &[Bool(true)]).unwrap_err().code(),
            "BAD_TABLE"
        );
    }

    #[test]
    fn series_builtins() {
        use Value::*;
        let a = Series(vec![0.0, 0.5, 1.0]);
        let bb = Series(vec![0.0, 0.0, 1.0]);
        assert_eq!(
            eval("LINEAR_MIX", json!({"weights": [0.5, 0.5]}), &[a.clone(), bb]),
            Ok(Series(vec![0.0, 0.25, 1.0]))
        );
        assert_eq!(eval("FIRST_YEAR_GE", json!({"threshold": 0.4}), &[a.clone()]), Ok(Year(Some(2023))));
        assert_eq!(eval("FIRST_YEAR_GE", json!({}), &[a.clone(), Real(2.0)]), Ok(Year(None)));
        assert_eq!(
            eval("LINEAR_MIX", json!({"weights": [0.5, 0.4]}), &[a.clone(), a]).unwrap_err().code(),
            "BAD_WEIGHTS"
        );
    }

    #[test]
    fn tables_msb_first() {
        use Value::*;
        let p = json!({"values": [0.0, 1.0, 2.0, 3.0]});
        assert_eq!(eval("REAL_TABLE", p.clone(), &[Bool(true), Bool(false)]), Ok(Real(2.0)));
        assert_eq!(eval("REAL_TABLE", p, &[Bool(false), Bool(true)]), Ok(Real(1.0)));
        let p = json!({"probs": [0.0, 1.0]});
        assert_eq!(eval("BOOL_TABLE", p.clone(), &[Bool(true)]), Ok(Bool(true)));
        assert_eq!(eval("BOOL_TABLE", p, &[Bool(false)]), Ok(Bool(false)));
        assert_eq!(eval("BOOL_TABLE", json!({"probs": [1.0]}), &[]), Ok(Bool(true)));
    }

    #[test]
    fn year_logic() {
        use Value::*;
        assert_eq!(eval("YEAR_AFTER", json!({}), &[Year(None), Year(Some(2030))]), Ok(Bool(true)));
        assert_eq!(eval("YEAR_AFTER", json!({}), &[Year(Some(2030)), Year(None)]), Ok(Bool(false)));
        assert_eq!(eval("YEAR_AFTER", json!({}), &[Year(Some(2030)), Year(Some(2030))]), Ok(Bool(true)));
        assert_eq!(eval("GATE_YEAR", json!({}), &[Year(Some(2030)), Bool(true)]), Ok(Year(Some(2030))));
        assert_eq!(eval("GATE_YEAR", json!({}), &[Year(Some(2030)), Bool(false)]), Ok(Year(None)));
        assert_eq!(eval("YEAR_IS_SET", json!({}), &[Year(None)]), Ok(Bool(false)));
        assert_eq!(
            eval("HAZARD_YEAR", json!({"base_hazard": 0.1, "multipliers": [10.0]}), &[Bool(true)]),
            Ok(Year(Some(2022)))
        );
        assert_eq!(
            eval("HAZARD_YEAR", json!({"base_hazard": 0.0, "multipliers": [10.0]}), &[Bool(true)]),
            Ok(Year(None))
        );
        assert_eq!(eval("WBE_NEUROSCIENCE", json!({}), &[Year(Some(2050)), Real(9.6)]), Ok(Year(Some(2060))));
        assert_eq!(eval("WBE_NEUROSCIENCE", json!({}), &[Year(Some(2095)), Real(9.6)]), Ok(Year(None)));
        let nagi = |on| {
            eval(
                "NAGI_READY",
                json!({}),
                &[Year(Some(2060)), Bool(on), Real(0.5), Real(10.0), Year(Some(2090))],
            )
        };
        assert_eq!(nagi(true), Ok(Year(Some(2055))));
        assert_eq!(nagi(false), Ok(Year(Some(2090))));
    }

    #[test]
    fn inside_view_winner_labels() {
        use Value::*;
        let mut years = vec![Year(None); 7];
        years[4] = Year(Some(2050));
        years[2] = Year(Some(2050));
        assert_eq!(eval("INSIDE_VIEW_WINNER", json!({}), &years), Ok(Category(2)));
        assert_eq!(eval("INSIDE_VIEW_WINNER", json!({}), &vec![Year(None); 7]), Ok(Category(7)));
    }

    #[test]
    fn compile_checks_output_kind() {
        let bool_kind = ValueKind::Bool;
        let kinds = [&bool_kind];
        assert!(compile("NOT", &none(), &kinds, &ValueKind::Bool, DEFAULT_HORIZON).is_ok());
        assert_eq!(
            compile("NOT", &none(), &kinds, &ValueKind::real(), DEFAULT_HORIZON).unwrap_err().code(),
            "KIND_MISMATCH"
        );
        let wrong = ValueKind::series(2022, 2050);
        let kinds = [&wrong];
        assert_eq!(
            compile("SAMPLE_ARRIVAL", &none(), &kinds, &ValueKind::Year, DEFAULT_HORIZON).unwrap_err().code(),
            "HORIZON_MISMATCH"
        );
        let sub = params(json!({"horizon_linear": false}));
        let r = ValueKind::real();
        assert_eq!(
            compile("SCALING_ANCHOR", &sub, &[&r; 6], &r, DEFAULT_HORIZON).unwrap_err().code(),
            "UNSUPPORTED_SUBLINEAR"
        );
    }

    #[test]
    fn combine_mixes_point_masses() {
        use Value::*;
        let p = json!({"weights": [0.5, 0.5]});
        let out = eval("COMBINE_TIMELINES", p, &[Year(Some(2022)), Year(Some(2024)), Bool(false)]).unwrap();
        let Series(cdf) = out else { panic!() };
        assert_eq!(&cdf[..4], &[0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn takeover_route_via_builtin() {
        use Value::*;
        // Doubling every 365 days: lead growth ln 2; takeover from 1% takes ln 99 / ln 2 years.
        let inputs = |lead| {
            [
                Bool(false),
                Bool(true),
                Real(lead),
                Real(0.01),
                Real(365.0),
                Real(0.0),
                Real(0.0),
                Bool(false),
            ]
        };
        assert_eq!(eval("DSA_ROUTE", json!({}), &inputs(6.7)), Ok(Category(0)));
        assert_eq!(eval("DSA_ROUTE", json!({}), &inputs(6.6)), Ok(Category(3)));
    }
}
