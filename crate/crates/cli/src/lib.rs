//! `mtair`: validate model documents, run them, sweep cruxes, or serve the API.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mtair_core::{
    build_run_report, build_sensitivity_run, read_model_document, serialize_report, to_canonical_json, to_json_line,
    CompiledModel, Diagnostic, Error, ModelGraph, ParseOptions, PosteriorSummary, RunRequest, SensitivityRequest,
    Severity, Value,
};
use mtair_server::{ServerConfig, DEFAULT_SAMPLE_CAP};
use serde_json::{json, Value as Json};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Worker-count cap; 0 or unset lets rayon decide.
pub const THREADS_ENV: &str = "MTAIR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mtair", version, about = "Hypothesis-graph models of AI risk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a model document.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo run; prints output probabilities.
    Run {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        /// Nodes to summarize (repeatable); defaults to the model outputs.
        #[arg(long = "target", value_name = "ID")]
        targets: Vec<String>,
        /// Write the full RunReport here.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
        /// Record wall time in the report and print it.
        #[arg(long)]
        timing: bool,
    },
    /// Tornado sweep of P(target) over crux values.
    Sensitivity {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long, value_name = "ID")]
        target: String,
        /// Comma-separated crux ids; defaults to the model cruxes.
        #[arg(long, value_name = "ID,...", value_delimiter = ',')]
        cruxes: Option<Vec<String>>,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API for this model.
    Serve {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
        max_samples: u64,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Machine-readable JSON lines on stdout, error JSON on stderr.
    #[arg(long)]
    pub json: bool,
    /// Downgrade unknown document fields to warnings.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct Sampling {
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Force a node value, e.g. `--set takeoff.discontinuity=true` (repeatable).
    #[arg(long = "set", value_name = "ID=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, String)>,
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
}

fn parse_assignment(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((id, value)) if !id.trim().is_empty() && !value.trim().is_empty() => {
            Ok((id.trim().to_string(), value.trim().to_string()))
        }
        _ => Err(format!("expected ID=VALUE, got `{raw}`")),
    }
}

/// A failure after argument parsing: printed, then exit 1.
#[derive(Debug)]
struct Failure {
    code: String,
    message: String,
    diagnostics: Vec<Diagnostic>,
}

impl Failure {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Failure {
            code: code.to_string(),
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(e.code(), e.to_string())
    }
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    configure_threads();
    let json = match &cli.command {
        Command::Validate { common, .. }
        | Command::Run { common, .. }
        | Command::Sensitivity { common, .. }
        | Command::Serve { common, .. } => common.json,
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            report_failure(&f, json, err);
            EXIT_FAILURE
        }
    }
}

fn configure_threads() {
    let n = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    if n > 0 {
        // Fails harmlessly when the pool already exists (repeat calls in one process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn report_failure(f: &Failure, json: bool, err: &mut dyn Write) {
    if json {
        for d in &f.diagnostics {
            let _ = writeln!(err, "{}", to_json_line(d));
        }
        let _ = writeln!(err, "{}", to_json_line(&json!({"error": {"code": f.code, "message": f.message}})));
    } else {
        for d in &f.diagnostics {
            let _ = writeln!(err, "{d}");
        }
        let _ = writeln!(err, "error {}: {}", f.code, f.message);
    }
}

fn load(path: &Path, lenient: bool, err: &mut dyn Write, json: bool) -> Result<ModelGraph, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new("IO", format!("{}: {e}", path.display())))?;
    let outcome = read_model_document(&text, ParseOptions { lenient });
    if outcome.has_errors() || outcome.graph.is_none() {
        let n = outcome.diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
        return Err(Failure {
            code: "INVALID_MODEL".into(),
            message: format!("{}: {n} error(s)", path.display()),
            diagnostics: outcome.diagnostics,
        });
    }
    for d in &outcome.diagnostics {
        let _ = if json { writeln!(err, "{}", to_json_line(d)) } else { writeln!(err, "{d}") };
    }
    Ok(outcome.graph.expect("checked"))
}

/// Turns `--set` literals into the JSON overrides a RunRequest takes.
fn decode_sets(graph: &ModelGraph, sets: &[(String, String)]) -> Result<BTreeMap<String, Json>, Failure> {
    let mut out = BTreeMap::new();
    for (raw, literal) in sets {
        let node = graph.node_by_str(raw).ok_or_else(|| Failure::from(Error::NodeNotFound(raw.clone())))?;
        let value = Value::parse_literal(literal, &node.value_kind)
            .map_err(|m| Failure::from(Error::KindMismatch(format!("`{raw}`: {m}"))))?;
        out.insert(raw.clone(), value.to_json(&node.value_kind));
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::new("IO", format!("{}: {e}", path.display())))
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, Failure> {
    match command {
        Command::Validate { file, common } => validate(&file, &common, out),
        Command::Run {
            file,
            common,
            sampling,
            targets,
            output,
            timing,
        } => {
            let graph = load(&file, common.lenient, err, common.json)?;
            let model = CompiledModel::new(&graph)?;
            let request = RunRequest {
                samples: sampling.samples,
                seed: sampling.seed,
                preset: sampling.preset.clone(),
                overrides: decode_sets(&graph, &sampling.set)?,
                targets: (!targets.is_empty()).then_some(targets),
            };
            let started = Instant::now();
            let mut report = build_run_report(&model, &request)?;
            if timing {
                let ms = started.elapsed().as_secs_f64() * 1e3;
                report.wall_time_ms = Some(ms);
                let _ = writeln!(err, "wall time: {ms:.1} ms");
            }
            if let Some(path) = &output {
                write_file(path, &serialize_report(&report))?;
            }
            if common.json {
                for s in &report.summaries {
                    let _ = writeln!(out, "{}", to_json_line(s));
                }
            } else {
                let _ = writeln!(out, "{}  samples {}  seed {}", report.engine_version, report.config.samples, report.config.seed);
                for s in &report.summaries {
                    print_summary(out, s);
                }
            }
            Ok(EXIT_OK)
        }
        Command::Sensitivity {
            file,
            common,
            sampling,
            target,
            cruxes,
            output,
        } => {
            let graph = load(&file, common.lenient, err, common.json)?;
            let model = CompiledModel::new(&graph)?;
            let request = SensitivityRequest {
                target,
                cruxes,
                samples: sampling.samples,
                seed: sampling.seed,
                preset: sampling.preset.clone(),
                overrides: decode_sets(&graph, &sampling.set)?,
            };
            let run = build_sensitivity_run(&model, &request)?;
            if let Some(path) = &output {
                write_file(path, &to_canonical_json(&run))?;
            }
            if common.json {
                for row in &run.report.rows {
                    let _ = writeln!(out, "{}", to_json_line(row));
                }
            } else {
                let _ = writeln!(out, "P({}) by crux, sorted by |delta|", run.report.target);
                for row in &run.report.rows {
                    let _ = writeln!(
                        out,
                        "{:<48} {}: {:.4}  {}: {:.4}  delta {:+.4}",
                        row.crux.as_str(),
                        literal(&row.value_a),
                        row.p_a,
                        literal(&row.value_b),
                        row.p_b,
                        row.delta
                    );
                }
            }
            Ok(EXIT_OK)
        }
        Command::Serve {
            file,
            common,
            port,
            max_samples,
        } => {
            let graph = load(&file, common.lenient, err, common.json)?;
            let model = CompiledModel::new(&graph)?;
            let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new("IO", e.to_string()))?;
            let _ = writeln!(err, "serving {} on http://{addr}", file.display());
            runtime
                .block_on(mtair_server::serve(model, ServerConfig { max_samples }, addr))
                .map_err(|e| Failure::new("IO", format!("{addr}: {e}")))?;
            Ok(EXIT_OK)
        }
    }
}

fn validate(file: &Path, common: &Common, out: &mut dyn Write) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| Failure::new("IO", format!("{}: {e}", file.display())))?;
    let outcome = read_model_document(&text, ParseOptions { lenient: common.lenient });
    for d in &outcome.diagnostics {
        let _ = if common.json { writeln!(out, "{}", to_json_line(d)) } else { writeln!(out, "{d}") };
    }
    if outcome.has_errors() {
        return Ok(EXIT_FAILURE);
    }
    if !common.json {
        let n = outcome.graph.as_ref().map_or(0, |g| g.nodes.len());
        let _ = writeln!(out, "ok: {n} nodes");
    }
    Ok(EXIT_OK)
}

fn literal(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn print_summary(out: &mut dyn Write, s: &PosteriorSummary) {
    let id = s.node.as_str();
    if let Some(p) = s.probability_true {
        let _ = writeln!(out, "{id:<44} P = {p:.4} ± {:.4}", s.std_error.unwrap_or(0.0));
    } else if !s.category_probabilities.is_empty() {
        let _ = writeln!(out, "{id}");
        for c in &s.category_probabilities {
            let _ = writeln!(out, "  {:<42} P = {:.4} ± {:.4}", c.label, c.probability, c.std_error);
        }
    } else if let Some(never) = s.probability_never {
        let median = s.quantiles.iter().find(|q| q.p == 0.5).and_then(|q| q.value);
        let median = median.map_or("never".to_string(), |y| format!("{y:.0}"));
        let _ = writeln!(out, "{id:<44} median {median}  P(never) = {never:.4}");
    } else if let Some(mean) = s.mean {
        let _ = writeln!(out, "{id:<44} mean = {mean:.6e} ± {:.2e}", s.std_error.unwrap_or(0.0));
    } else {
        let _ = writeln!(out, "{id:<44} ({})", s.kind);
    }
}
