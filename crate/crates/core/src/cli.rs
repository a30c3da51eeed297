//! The `lifecycle-dq` command line.
//!
//! Exit codes: 0 success, 1 validation or quality findings present, 2 usage,
//! schema or I/O error. Data goes to the output stream, diagnostics to the
//! error stream.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, TimeZone, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use crate::assess::{load_suite, run_suite, CheckOutcome};
use crate::attribute::{attribute_all, compare_loci, load_rules, AttributionAudit, RuleSet};
use crate::ingest::{load_dataset, load_manifest, DatasetSnapshot};
use crate::notation::{
    parse_assertion_file, parse_assertion_with, validate_assertion_with, DQAssertion, Finding,
    LabelMap, NotationError, ParseMode, Severity,
};
use crate::report::{
    build_coverage, load_attestations, load_report, render_report, DQReport, ManifestSummary, ReportFormat,
    ReportInputs,
};
use crate::simulate::{evaluate_localization, generate, load_scenario};
use crate::taxonomy::{core_parameters, ActorRegistry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lifecycle-dq", version, about = "Lifecycle-located data quality assessment")]
struct Cli {
    /// Actor registry extension (JSON with an `actors` list).
    #[arg(long, global = true, value_name = "JSON")]
    actors: Option<PathBuf>,
    /// Extra label-to-parameter mappings (JSON object).
    #[arg(long, global = true, value_name = "JSON")]
    labels: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Markdown,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate an assertion file.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "lenient")]
        mode: Mode,
    },
    /// Run a check suite over one or more extracts.
    Assess {
        /// CSV extract; pair each with a --manifest, in order.
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attribute failing outcomes to lifecycle loci.
    Attribute {
        #[arg(long)]
        outcomes: PathBuf,
        /// Rule document; the builtin rules when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Assemble and render a report.
    Report {
        /// Re-render an existing MachineJson report instead of assembling one.
        #[arg(long, conflicts_with_all = ["outcomes", "assertions", "attestations"])]
        from: Option<PathBuf>,
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        assertions: Option<PathBuf>,
        #[arg(long)]
        attestations: Option<PathBuf>,
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        dataset_id: Option<String>,
        #[arg(long)]
        context: Option<String>,
        /// RFC 3339 creation time; defaults to SOURCE_DATE_EPOCH, then the Unix epoch.
        #[arg(long)]
        created_at: Option<String>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the lifecycle coverage matrix.
    Coverage {
        #[arg(long)]
        assertions: Option<PathBuf>,
        #[arg(long)]
        attestations: Option<PathBuf>,
        /// Take assertions and attestations from a MachineJson report.
        #[arg(long, conflicts_with_all = ["assertions", "attestations"])]
        report: Option<PathBuf>,
        /// One column per core parameter instead of per category.
        #[arg(long)]
        by_parameter: bool,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Difference between two assertions in percentage points.
    Compare { a: String, b: String },
    /// Generate a synthetic scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also assess, attribute and score localization against the ledger.
        #[arg(long)]
        evaluate: bool,
    },
    /// List the core data quality parameters.
    Parameters,
}

struct Env {
    registry: ActorRegistry,
    labels: LabelMap,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn emit(out: &mut dyn Write, target: Option<&Path>, text: &str) -> Result<()> {
    match target {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => out.write_all(text.as_bytes()).context("cannot write output"),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s
}

/// Runs the command line; returns the exit code.
pub fn execute<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let text = e.render().to_string();
            if informational {
                let _ = out.write_all(text.as_bytes());
                return EXIT_OK;
            }
            let _ = err.write_all(text.as_bytes());
            return EXIT_ERROR;
        }
    };
    match run(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn environment(cli: &Cli) -> Result<Env> {
    let registry = match &cli.actors {
        Some(p) => ActorRegistry::from_config_json(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => ActorRegistry::builtin(),
    };
    let labels = match &cli.labels {
        Some(p) => LabelMap::from_json(&read(p)?).map_err(|e| anyhow!("in {}: {e}", p.display()))?,
        None => LabelMap::default(),
    };
    Ok(Env { registry, labels })
}

fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let env = environment(&cli)?;
    match cli.command {
        Command::Validate { file, mode } => validate(&env, &file, mode, out, err),
        Command::Assess { data, manifests, suite, out: target } => {
            assess(&data, &manifests, &suite, target.as_deref(), out, err)
        }
        Command::Attribute { outcomes, rules, format } => attribute(&env, &outcomes, rules.as_deref(), format, out),
        Command::Report {
            from,
            outcomes,
            rules,
            assertions,
            attestations,
            manifests,
            dataset_id,
            context,
            created_at,
            format,
            out: target,
        } => {
            let report = match from {
                Some(path) => load_report(&read(&path)?).with_context(|| format!("in {}", path.display()))?,
                None => {
                    let spec = ReportSpec {
                        outcomes,
                        rules,
                        assertions,
                        attestations,
                        manifests,
                        dataset_id,
                        context,
                        created_at,
                    };
                    assemble(&env, spec)?
                }
            };
            let format = match format {
                Format::Json => ReportFormat::MachineJson,
                Format::Markdown | Format::Text => ReportFormat::Markdown,
            };
            emit(out, target.as_deref(), &render_report(&report, format))?;
            Ok(EXIT_OK)
        }
        Command::Coverage { assertions, attestations, report, by_parameter, format } => {
            let (items, atts) = match report {
                Some(path) => {
                    let r = load_report(&read(&path)?).with_context(|| format!("in {}", path.display()))?;
                    (r.assertions, r.attestations)
                }
                None => (
                    match assertions {
                        Some(p) => load_assertions(&env, &p)?,
                        None => Vec::new(),
                    },
                    match attestations {
                        Some(p) => load_attestations(&read(&p)?).map_err(|e| anyhow!("in {}: {e}", p.display()))?,
                        None => Vec::new(),
                    },
                ),
            };
            let matrix = build_coverage(&items, &atts);
            let text = match format {
                Format::Json => to_json(&matrix),
                Format::Markdown | Format::Text => matrix.to_markdown(by_parameter),
            };
            emit(out, None, &text)?;
            Ok(EXIT_OK)
        }
        Command::Compare { a, b } => compare(&env, &a, &b, out, err),
        Command::Simulate { scenario, out: dir, evaluate } => simulate(&env, &scenario, &dir, evaluate, out),
        Command::Parameters => {
            for p in core_parameters() {
                writeln!(out, "{}\t{}\t{}", p.name(), p.category(), p.measurement_kind())?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn parse_mode(mode: Mode) -> ParseMode {
    match mode {
        Mode::Strict => ParseMode::Strict,
        Mode::Lenient => ParseMode::Lenient,
    }
}

fn validate(env: &Env, file: &Path, mode: Mode, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let text = read_text(file)?;
    let lines = parse_assertion_file(&text, &env.registry, &env.labels, parse_mode(mode));
    let (mut errors, mut warnings) = (0, 0);
    for line in &lines {
        let findings: Vec<Finding> = match &line.result {
            Ok(a) => {
                writeln!(out, "{}: {}", line.line, a.notation())?;
                validate_assertion_with(a, &env.registry, &env.labels)
            }
            Err(e) => vec![Finding::from(e)],
        };
        for f in &findings {
            writeln!(out, "{}: {f}", line.line)?;
            match f.severity {
                Severity::Error => errors += 1,
                Severity::Warning => warnings += 1,
            }
        }
        if let Some(offset) = line.result.as_ref().err().and_then(NotationError::offset) {
            writeln!(out, "{}", pointer(&line.text, offset))?;
        }
    }
    writeln!(err, "{} assertion(s), {errors} error(s), {warnings} warning(s)", lines.len())?;
    Ok(if errors > 0 { EXIT_FINDINGS } else { EXIT_OK })
}

/// The input with a caret under byte `offset`.
fn pointer(text: &str, offset: usize) -> String {
    let column = text.get(..offset.min(text.len())).map_or(offset, |s| s.chars().count());
    format!("    {text}\n    {}^", " ".repeat(column))
}

fn assess(
    data: &[PathBuf],
    manifests: &[PathBuf],
    suite: &Path,
    target: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    if data.len() != manifests.len() {
        bail!("each --data needs a matching --manifest ({} vs {})", data.len(), manifests.len());
    }
    let mut snapshots: Vec<DatasetSnapshot> = Vec::new();
    for (d, m) in data.iter().zip(manifests) {
        let manifest = load_manifest(&read(m)?).with_context(|| format!("in {}", m.display()))?;
        let snapshot = load_dataset(&read(d)?, &manifest).with_context(|| format!("in {}", d.display()))?;
        snapshots.push(snapshot);
    }
    let defs = load_suite(&read(suite)?).map_err(|e| anyhow!("in {}: {e}", suite.display()))?;
    let outcomes = run_suite(&defs, &snapshots);
    emit(out, target, &to_json(&outcomes))?;
    let failing = outcomes.iter().filter(|o| o.is_failing() || o.is_errored()).count();
    writeln!(err, "{} check(s), {failing} failing or errored", outcomes.len())?;
    Ok(if failing > 0 { EXIT_FINDINGS } else { EXIT_OK })
}

fn load_outcomes(path: &Path) -> Result<Vec<CheckOutcome>> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_rule_set(env: &Env, path: Option<&Path>) -> Result<RuleSet> {
    match path {
        Some(p) => load_rules(&read(p)?, &env.registry).with_context(|| format!("in {}", p.display())),
        None => Ok(RuleSet::defaults()),
    }
}

fn attribute(env: &Env, outcomes: &Path, rules: Option<&Path>, format: Format, out: &mut dyn Write) -> Result<i32> {
    let outcomes = load_outcomes(outcomes)?;
    let rules = load_rule_set(env, rules)?;
    let results = attribute_all(&outcomes, &rules);
    match format {
        Format::Json => {
            #[derive(serde::Serialize)]
            struct Attributed<'a> {
                results: &'a [crate::attribute::AttributedResult],
                audit: AttributionAudit,
            }
            let audit = AttributionAudit::of(&results, &rules);
            emit(out, None, &to_json(&Attributed { results: &results, audit }))?;
        }
        Format::Markdown | Format::Text => {
            for r in &results {
                match r.assertion() {
                    Some(a) => writeln!(out, "{}", a.notation())?,
                    None => writeln!(out, "unattributed {} {}", r.check_id, r.provisional_notation())?,
                }
            }
        }
    }
    Ok(EXIT_OK)
}

fn load_assertions(env: &Env, path: &Path) -> Result<Vec<DQAssertion>> {
    let text = read_text(path)?;
    let mut assertions = Vec::new();
    for line in parse_assertion_file(&text, &env.registry, &env.labels, ParseMode::Lenient) {
        match line.result {
            Ok(a) => assertions.push(a),
            Err(e) => bail!("{}:{}: {e}", path.display(), line.line),
        }
    }
    Ok(assertions)
}

struct ReportSpec {
    outcomes: Option<PathBuf>,
    rules: Option<PathBuf>,
    assertions: Option<PathBuf>,
    attestations: Option<PathBuf>,
    manifests: Vec<PathBuf>,
    dataset_id: Option<String>,
    context: Option<String>,
    created_at: Option<String>,
}

fn created_at(flag: Option<&str>) -> Result<DateTime<Utc>> {
    if let Some(text) = flag {
        return Ok(DateTime::parse_from_rfc3339(text)
            .with_context(|| format!("--created-at `{text}` is not RFC 3339"))?
            .with_timezone(&Utc));
    }
    let seconds = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse::<i64>().with_context(|| format!("SOURCE_DATE_EPOCH `{v}` is not an integer"))?,
        Err(_) => 0,
    };
    Utc.timestamp_opt(seconds, 0).single().ok_or_else(|| anyhow!("SOURCE_DATE_EPOCH out of range"))
}

fn assemble(env: &Env, spec: ReportSpec) -> Result<DQReport> {
    let outcomes = match &spec.outcomes {
        Some(p) => load_outcomes(p)?,
        None => Vec::new(),
    };
    let rules = load_rule_set(env, spec.rules.as_deref())?;
    let attributions = attribute_all(&outcomes, &rules);
    let audit = spec.outcomes.as_ref().map(|_| AttributionAudit::of(&attributions, &rules));
    let assertions = match &spec.assertions {
        Some(p) => load_assertions(env, p)?,
        None => Vec::new(),
    };
    let attestations = match &spec.attestations {
        Some(p) => load_attestations(&read(p)?).map_err(|e| anyhow!("in {}: {e}", p.display()))?,
        None => Vec::new(),
    };
    let mut manifests = Vec::new();
    for p in &spec.manifests {
        let m = load_manifest(&read(p)?).with_context(|| format!("in {}", p.display()))?;
        manifests.push(ManifestSummary::of(&m, None));
    }
    let dataset_id = spec
        .dataset_id
        .or_else(|| outcomes.iter().map(|o| o.dataset_id.clone()).find(|d| !d.is_empty()))
        .or_else(|| manifests.first().map(|m| m.dataset_id.clone()))
        .unwrap_or_else(|| "unspecified".to_string());
    let inputs = ReportInputs {
        dataset_id,
        context_label: spec.context,
        manifests,
        assertions,
        attestations,
        outcomes,
        attributions,
        audit,
        created_at: created_at(spec.created_at.as_deref())?,
    };
    Ok(DQReport::assemble(inputs, &env.registry, &env.labels)?)
}

fn parse_or_point(env: &Env, text: &str, err: &mut dyn Write) -> Result<Option<DQAssertion>> {
    match parse_assertion_with(text, &env.registry, &env.labels, ParseMode::Lenient) {
        Ok(a) => Ok(Some(a)),
        Err(e) => {
            writeln!(err, "error: {e}")?;
            if let Some(offset) = e.offset() {
                writeln!(err, "{}", pointer(text, offset))?;
            }
            Ok(None)
        }
    }
}

fn compare(env: &Env, a: &str, b: &str, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (Some(a), Some(b)) = (parse_or_point(env, a, err)?, parse_or_point(env, b, err)?) else {
        return Ok(EXIT_ERROR);
    };
    let report = compare_loci(&a, &b)?;
    writeln!(out, "delta: {} ({})", report.delta_text(), report.relation)?;
    writeln!(out, "{}", report.narrative)?;
    Ok(EXIT_OK)
}

fn simulate(env: &Env, scenario: &Path, dir: &Path, evaluate: bool, out: &mut dyn Write) -> Result<i32> {
    let scenario = load_scenario(&read(scenario)?).with_context(|| format!("in {}", scenario.display()))?;
    let generated = generate(&scenario, &env.registry)?;
    for path in generated.write_to_dir(dir)? {
        writeln!(out, "wrote {}", path.display())?;
    }
    if evaluate {
        let outcomes = run_suite(&generated.suite, &generated.snapshots());
        let results = attribute_all(&outcomes, &RuleSet::defaults());
        let score = evaluate_localization(&results, &generated.ledger);
        emit(out, None, &to_json(&score))?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("lifecycle-dq").chain(args.iter().copied());
        let code = execute(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn compare_quoted_pair() {
        let (code, out, _) = run_args(&[
            "compare",
            "DGO-DG-Clinician (Completeness: 94%)",
            "DRO-DR-Researcher (Completeness: 87%)",
        ]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().next(), Some("delta: 7pp (CrossOrganization)"));
    }

    #[test]
    fn compare_syntax_error_points_at_offset() {
        let (code, _, err) = run_args(&["compare", "DGO-DG-Clinician Completeness: 94%", "DGO-DG-Clinician (Completeness: 1%)"]);
        assert_eq!(code, 2);
        let lines: Vec<&str> = err.lines().collect();
        assert!(lines[0].starts_with("error: syntax error at byte 17"));
        assert_eq!(lines[2].find('^'), Some(4 + 17));
    }

    #[test]
    fn parameters_lists_nine() {
        let (code, out, _) = run_args(&["parameters"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 9);
        assert!(out.contains("Interoperability\tSystemTechnical\tComputedOrAttested"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_args(&[]).0, 2);
        assert_eq!(run_args(&["nonsense"]).0, 2);
        assert_eq!(run_args(&["validate", "/nonexistent/file.txt"]).0, 2);
        assert_eq!(run_args(&["--help"]).0, 0);
    }
}
