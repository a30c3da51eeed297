//! Coverage matrices, reports and provenance metadata.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::{CheckOutcome, OutcomeStatus};
use crate::attribute::{AttributedResult, AttributionAudit};
use crate::ingest::{DatasetManifest, Stage};
use crate::notation::{has_errors, validate_assertion_with, DQAssertion, LabelMap};
use crate::rational::format_percent;
use crate::taxonomy::{core_parameters, ActorRegistry, LifecycleLocus, OrgPhase, Parameter, ParameterCategory};

pub const SCHEMA_VERSION: &str = "1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("{0} is a computed parameter and cannot be attested")]
    NotAttestable(Parameter),
    #[error("assertion `{notation}` fails validation: {findings}")]
    InvalidAssertion { notation: String, findings: String },
    #[error("unsupported schema_version `{0}`")]
    SchemaVersion(String),
    #[error("malformed report: {0}")]
    Malformed(String),
}

/// A human statement covering a parameter no check computes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AttestationRecord", into = "AttestationRecord")]
pub struct Attestation {
    pub locus: LifecycleLocus,
    pub parameter: Parameter,
    pub statement: String,
    pub attested_by: String,
    pub attested_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttestationRecord {
    locus: LifecycleLocus,
    parameter: Parameter,
    statement: String,
    attested_by: String,
    attested_at: DateTime<Utc>,
}

impl Attestation {
    pub fn new(
        locus: LifecycleLocus,
        parameter: Parameter,
        statement: impl Into<String>,
        attested_by: impl Into<String>,
        attested_at: DateTime<Utc>,
    ) -> Result<Self, ReportError> {
        if !parameter.accepts_attestation() {
            return Err(ReportError::NotAttestable(parameter));
        }
        Ok(Attestation {
            locus,
            parameter,
            statement: statement.into(),
            attested_by: attested_by.into(),
            attested_at,
        })
    }
}

impl TryFrom<AttestationRecord> for Attestation {
    type Error = ReportError;

    fn try_from(r: AttestationRecord) -> Result<Self, Self::Error> {
        Attestation::new(r.locus, r.parameter, r.statement, r.attested_by, r.attested_at)
    }
}

impl From<Attestation> for AttestationRecord {
    fn from(a: Attestation) -> Self {
        AttestationRecord {
            locus: a.locus,
            parameter: a.parameter,
            statement: a.statement,
            attested_by: a.attested_by,
            attested_at: a.attested_at,
        }
    }
}

pub fn load_attestations(bytes: &[u8]) -> Result<Vec<Attestation>, String> {
    serde_json::from_slice(bytes).map_err(|e| e.to_string())
}

/// One lifecycle row of the coverage matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub org_phase: OrgPhase,
    /// Counts per category, in `ParameterCategory::ALL` order.
    pub categories: [u64; 3],
    /// Counts per core parameter, in stable parameter order.
    pub parameters: [u64; 9],
}

/// Where assessment has happened: lifecycle pair × parameter category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    rows: Vec<CoverageRow>,
    /// Assertions left out because their label resolves to no parameter.
    excluded: u64,
}

impl Default for CoverageMatrix {
    fn default() -> Self {
        CoverageMatrix {
            rows: OrgPhase::ALL
                .iter()
                .map(|&org_phase| CoverageRow { org_phase, categories: [0; 3], parameters: [0; 9] })
                .collect(),
            excluded: 0,
        }
    }
}

fn category_index(c: ParameterCategory) -> usize {
    ParameterCategory::ALL.iter().position(|&x| x == c).expect("category")
}

fn parameter_index(p: Parameter) -> usize {
    core_parameters().iter().position(|&x| x == p).expect("core parameter")
}

impl CoverageMatrix {
    pub fn rows(&self) -> &[CoverageRow] {
        &self.rows
    }

    pub fn excluded(&self) -> u64 {
        self.excluded
    }

    fn add(&mut self, pair: OrgPhase, parameter: Parameter) {
        let row = &mut self.rows[pair.lifecycle_index()];
        row.categories[category_index(parameter.category())] += 1;
        row.parameters[parameter_index(parameter)] += 1;
    }

    pub fn cell(&self, pair: OrgPhase, category: ParameterCategory) -> u64 {
        self.rows[pair.lifecycle_index()].categories[category_index(category)]
    }

    pub fn parameter_cell(&self, pair: OrgPhase, parameter: Parameter) -> u64 {
        self.rows[pair.lifecycle_index()].parameters[parameter_index(parameter)]
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flat_map(|r| r.categories).sum()
    }

    /// Nonzero category cells in lifecycle then category order.
    pub fn nonzero_cells(&self) -> Vec<(OrgPhase, ParameterCategory, u64)> {
        self.rows
            .iter()
            .flat_map(|r| {
                ParameterCategory::ALL
                    .iter()
                    .zip(r.categories)
                    .filter(|(_, n)| *n > 0)
                    .map(move |(&c, n)| (r.org_phase, c, n))
            })
            .collect()
    }

    fn is_well_formed(&self) -> bool {
        self.rows.len() == OrgPhase::ALL.len()
            && self.rows.iter().zip(OrgPhase::ALL).all(|(r, p)| {
                r.org_phase == p && r.categories.iter().sum::<u64>() == r.parameters.iter().sum::<u64>()
            })
    }

    /// Markdown table; nine parameter columns when `by_parameter` is set.
    pub fn to_markdown(&self, by_parameter: bool) -> String {
        let headers: Vec<&str> = if by_parameter {
            core_parameters().iter().map(|p| p.name()).collect()
        } else {
            ParameterCategory::ALL.iter().map(|c| c.name()).collect()
        };
        let mut out = format!("| Lifecycle | {} |\n", headers.join(" | "));
        out.push_str(&format!("|---|{}\n", "---:|".repeat(headers.len())));
        for row in &self.rows {
            let counts: Vec<String> = if by_parameter {
                row.parameters.iter().map(u64::to_string).collect()
            } else {
                row.categories.iter().map(u64::to_string).collect()
            };
            out.push_str(&format!("| {} | {} |\n", row.org_phase, counts.join(" | ")));
        }
        if self.excluded > 0 {
            out.push_str(&format!("\nExcluded (label resolves to no parameter): {}\n", self.excluded));
        }
        out
    }
}

/// Counts each item once, in its locus's lifecycle row and its parameter's
/// category column.
pub fn build_coverage(assertions: &[DQAssertion], attestations: &[Attestation]) -> CoverageMatrix {
    let mut matrix = CoverageMatrix::default();
    for a in assertions {
        match a.parameter {
            Some(p) => matrix.add(a.locus.org_phase(), p),
            None => matrix.excluded += 1,
        }
    }
    for a in attestations {
        matrix.add(a.locus.org_phase(), a.parameter);
    }
    matrix
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub dataset_id: String,
    pub stage: Stage,
    pub field_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_count: Option<usize>,
}

impl ManifestSummary {
    pub fn of(manifest: &DatasetManifest, row_count: Option<usize>) -> Self {
        ManifestSummary {
            dataset_id: manifest.dataset_id.clone(),
            stage: manifest.stage,
            field_count: manifest.fields.len(),
            row_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DQReport {
    pub schema_version: String,
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_label: Option<String>,
    pub manifests: Vec<ManifestSummary>,
    pub assertions: Vec<DQAssertion>,
    pub attestations: Vec<Attestation>,
    pub outcomes: Vec<CheckOutcome>,
    /// Failing outcomes no rule placed on a locus.
    pub unattributed: Vec<AttributedResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AttributionAudit>,
    pub coverage: CoverageMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_set_fingerprint: Option<String>,
    pub tool_version: String,
    pub created_at: DateTime<Utc>,
}

/// Everything a report is assembled from.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub dataset_id: String,
    pub context_label: Option<String>,
    pub manifests: Vec<ManifestSummary>,
    pub assertions: Vec<DQAssertion>,
    pub attestations: Vec<Attestation>,
    pub outcomes: Vec<CheckOutcome>,
    pub attributions: Vec<AttributedResult>,
    pub audit: Option<AttributionAudit>,
    pub created_at: DateTime<Utc>,
}

impl DQReport {
    /// Validates every assertion and derives coverage. Located attributions
    /// join the assertion list; the rest are kept as unattributed items.
    pub fn assemble(
        inputs: ReportInputs,
        registry: &ActorRegistry,
        labels: &LabelMap,
    ) -> Result<DQReport, ReportError> {
        let mut assertions = inputs.assertions;
        let mut unattributed = Vec::new();
        for r in inputs.attributions {
            match r.assertion() {
                Some(a) => assertions.push(a),
                None => unattributed.push(r),
            }
        }
        for a in &assertions {
            let findings = validate_assertion_with(a, registry, labels);
            if has_errors(&findings) {
                let findings: Vec<String> = findings.iter().map(ToString::to_string).collect();
                return Err(ReportError::InvalidAssertion { notation: a.notation(), findings: findings.join("; ") });
            }
        }
        let coverage = build_coverage(&assertions, &inputs.attestations);
        Ok(DQReport {
            schema_version: SCHEMA_VERSION.to_string(),
            dataset_id: inputs.dataset_id,
            context_label: inputs.context_label,
            manifests: inputs.manifests,
            assertions,
            attestations: inputs.attestations,
            outcomes: inputs.outcomes,
            unattributed,
            rule_set_fingerprint: inputs.audit.as_ref().map(|a| a.rule_set_fingerprint.clone()),
            audit: inputs.audit,
            coverage,
            tool_version: TOOL_VERSION.to_string(),
            created_at: inputs.created_at,
        })
    }
}

/// Reads a MachineJson report.
pub fn load_report(bytes: &[u8]) -> Result<DQReport, ReportError> {
    let report: DQReport = serde_json::from_slice(bytes).map_err(|e| ReportError::Malformed(e.to_string()))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(ReportError::SchemaVersion(report.schema_version));
    }
    if !report.coverage.is_well_formed() {
        return Err(ReportError::Malformed("coverage must have five lifecycle rows in order".into()));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    MachineJson,
    Markdown,
}

pub fn render_report(report: &DQReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::MachineJson => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// `9/10 (90%)`, `not assessable`, or the error message.
pub fn outcome_result_text(o: &CheckOutcome) -> String {
    match &o.status {
        OutcomeStatus::Assessed => {
            let rate = o.rate().expect("assessed");
            format!("{}/{} ({}%)", o.numerator, o.denominator, format_percent(rate, 1))
        }
        OutcomeStatus::NotAssessable => "not assessable".to_string(),
        OutcomeStatus::Errored { message } => format!("error: {message}"),
    }
}

fn render_markdown(r: &DQReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Data quality report: {}\n", r.dataset_id);
    if let Some(label) = &r.context_label {
        let _ = writeln!(out, "Context: {label}\n");
    }
    let _ = writeln!(out, "- Created: {}", timestamp(&r.created_at));
    let _ = writeln!(out, "- Tool version: {}", r.tool_version);
    if let Some(fp) = &r.rule_set_fingerprint {
        let _ = writeln!(out, "- Rule set: `{fp}`");
    }

    if !r.manifests.is_empty() {
        out.push_str("\n## Extracts\n\n| Dataset | Stage | Fields | Rows |\n|---|---|---:|---:|\n");
        for m in &r.manifests {
            let rows = m.row_count.map_or_else(|| "-".to_string(), |n| n.to_string());
            let _ = writeln!(out, "| {} | {} | {} | {} |", m.dataset_id, m.stage, m.field_count, rows);
        }
    }

    out.push_str("\n## Coverage\n\n");
    out.push_str(&r.coverage.to_markdown(false));

    out.push_str("\n## Assertions\n");
    let mut order: Vec<&DQAssertion> = r.assertions.iter().collect();
    order.sort_by(|a, b| a.locus.cmp(&b.locus));
    if order.is_empty() {
        out.push_str("\nNone.\n");
    }
    let mut i = 0;
    while i < order.len() {
        let locus = &order[i].locus;
        let group: Vec<&DQAssertion> = order[i..].iter().take_while(|a| &a.locus == locus).copied().collect();
        i += group.len();
        let _ = writeln!(out, "\n### {locus}\n\n```text");
        for a in &group {
            let _ = writeln!(out, "{}", a.notation());
        }
        out.push_str("```\n");
        let scoped: Vec<String> = group
            .iter()
            .filter_map(|a| {
                let s = a.scope.as_ref()?;
                let mut parts = Vec::new();
                if let Some(f) = &s.field_name {
                    parts.push(format!("field `{f}`"));
                }
                if let Some(d) = &s.subset_description {
                    parts.push(format!("subset `{d}`"));
                }
                if let Some(m) = &a.method_id {
                    parts.push(format!("check `{m}`"));
                }
                (!parts.is_empty()).then(|| format!("- `{}`: {}", a.notation(), parts.join(", ")))
            })
            .collect();
        if !scoped.is_empty() {
            let _ = writeln!(out, "\n{}", scoped.join("\n"));
        }
    }

    if !r.attestations.is_empty() {
        out.push_str("\n## Attestations\n\n");
        let mut atts: Vec<&Attestation> = r.attestations.iter().collect();
        atts.sort_by(|a, b| a.locus.cmp(&b.locus).then(a.parameter.cmp(&b.parameter)));
        for a in atts {
            let _ = writeln!(
                out,
                "- {} {}: {} (attested by {}, {})",
                a.locus,
                a.parameter,
                a.statement,
                a.attested_by,
                timestamp(&a.attested_at)
            );
        }
    }

    if !r.outcomes.is_empty() {
        out.push_str("\n## Check outcomes\n\n| Check | Kind | Stage | Fields | Result |\n|---|---|---|---|---|\n");
        for o in &r.outcomes {
            let stage = o.stage.map_or_else(|| "-".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                o.check_id,
                o.kind,
                stage,
                o.fields.join(", "),
                outcome_result_text(o)
            );
        }
    }

    out.push_str("\n## Unattributed\n\n");
    if r.unattributed.is_empty() {
        out.push_str("None.\n");
    }
    for u in &r.unattributed {
        let field = u.scope.field_name.as_deref().unwrap_or("-");
        let _ = writeln!(out, "- check `{}` on `{field}`: {}", u.check_id, u.provisional_notation());
    }

    if let Some(audit) = &r.audit {
        out.push_str("\n## Attribution audit\n\n");
        for (rule, n) in &audit.fired {
            let _ = writeln!(out, "- {rule}: {n}");
        }
        let _ = writeln!(out, "- attributed: {}, unattributed: {}", audit.attributed, audit.unattributed);
    }
    out
}

/// Flat record for external catalogs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    pub dataset_id: String,
    pub stages: Vec<Stage>,
    /// `ORG-PHASE-Actor` strings in lifecycle order.
    pub loci: Vec<String>,
    pub parameters: Vec<Parameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_set_fingerprint: Option<String>,
    pub tool_version: String,
    pub created_at: DateTime<Utc>,
}

pub fn export_provenance_metadata(report: &DQReport) -> ProvenanceRecord {
    let stages: BTreeSet<Stage> = report
        .manifests
        .iter()
        .map(|m| m.stage)
        .chain(report.outcomes.iter().filter_map(|o| o.stage))
        .collect();
    let loci: BTreeSet<&LifecycleLocus> = report
        .assertions
        .iter()
        .map(|a| &a.locus)
        .chain(report.attestations.iter().map(|a| &a.locus))
        .collect();
    let parameters: BTreeSet<Parameter> = report
        .assertions
        .iter()
        .filter_map(|a| a.parameter)
        .chain(report.attestations.iter().map(|a| a.parameter))
        .collect();
    ProvenanceRecord {
        dataset_id: report.dataset_id.clone(),
        stages: stages.into_iter().collect(),
        loci: loci.into_iter().map(ToString::to_string).collect(),
        parameters: parameters.into_iter().collect(),
        rule_set_fingerprint: report.rule_set_fingerprint.clone(),
        tool_version: report.tool_version.clone(),
        created_at: report.created_at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::{parse_assertion, ParseMode};
    use chrono::TimeZone;

    const QUOTED: [&str; 4] = [
        "DGO-DG-Clinician (Completeness: 94%)",
        "DRO-DR-Researcher (Completeness: 87%)",
        "DGO-DG-Organization (Policy: states Diagnosis only required only for billable encounter)",
        "DRO-DT-Engineer (Mapping: 92% success)",
    ];

    fn quoted() -> Vec<DQAssertion> {
        let reg = ActorRegistry::builtin();
        QUOTED.iter().map(|s| parse_assertion(s, &reg, ParseMode::Lenient).unwrap()).collect()
    }

    fn report(assertions: Vec<DQAssertion>) -> DQReport {
        let inputs = ReportInputs {
            dataset_id: "quoted".into(),
            assertions,
            created_at: Utc.timestamp_opt(0, 0).unwrap(),
            ..ReportInputs::default()
        };
        DQReport::assemble(inputs, &ActorRegistry::builtin(), &LabelMap::default()).unwrap()
    }

    #[test]
    fn quoted_coverage() {
        let m = build_coverage(&quoted(), &[]);
        assert_eq!(
            m.nonzero_cells(),
            vec![
                (OrgPhase::DGO_DG, ParameterCategory::Intrinsic, 1),
                (OrgPhase::DGO_DG, ParameterCategory::Contextual, 1),
                (OrgPhase::DRO_DT, ParameterCategory::SystemTechnical, 1),
                (OrgPhase::DRO_DR, ParameterCategory::Intrinsic, 1),
            ]
        );
        assert_eq!(m.total(), 4);
        assert_eq!(m.parameter_cell(OrgPhase::DRO_DT, Parameter::Interoperability), 1);
    }

    #[test]
    fn empty_and_excluded() {
        let m = build_coverage(&[], &[]);
        assert_eq!(m.rows().len(), 5);
        assert_eq!(m.total(), 0);
        let unresolved =
            parse_assertion("DGO-DG-Clinician (Vibes: 50%)", &ActorRegistry::builtin(), ParseMode::Lenient).unwrap();
        let m = build_coverage(&[unresolved], &[]);
        assert_eq!((m.total(), m.excluded()), (0, 1));
    }

    #[test]
    fn attestation_rules() {
        let locus: LifecycleLocus = "DGO-DG-Organization".parse().unwrap();
        let at = Utc.timestamp_opt(0, 0).unwrap();
        assert!(Attestation::new(locus.clone(), Parameter::Governance, "policy", "dpo", at).is_ok());
        assert_eq!(
            Attestation::new(locus, Parameter::Completeness, "x", "y", at).unwrap_err(),
            ReportError::NotAttestable(Parameter::Completeness)
        );
        let json = r#"[{"locus": "DGO-DG-Organization", "parameter": "Completeness", "statement": "s",
            "attested_by": "a", "attested_at": "2024-01-01T00:00:00Z"}]"#;
        assert!(load_attestations(json.as_bytes()).is_err());
    }

    #[test]
    fn markdown_contains_literal_lines() {
        let r = report(quoted());
        let md = render_report(&r, ReportFormat::Markdown);
        assert!(md.lines().any(|l| l == "DGO-DG-Clinician (Completeness: 94%)"));
        assert!(md.lines().any(|l| l == "DRO-DT-DataEngineer (Mapping: 92% success)"));
        let dgo = md.find("### DGO-DG-Clinician").unwrap();
        let dro = md.find("### DRO-DR-Researcher").unwrap();
        assert!(dgo < dro);
        assert_eq!(md, render_report(&r, ReportFormat::Markdown));
    }

    #[test]
    fn json_round_trip_and_metadata() {
        let r = report(quoted());
        let json = render_report(&r, ReportFormat::MachineJson);
        let back = load_report(json.as_bytes()).unwrap();
        assert_eq!(back, r);
        let meta = export_provenance_metadata(&r);
        assert!(meta.loci.contains(&"DRO-DT-DataEngineer".to_string()));
        assert_eq!(export_provenance_metadata(&back), meta);
        let again: ProvenanceRecord = serde_json::from_str(&serde_json::to_string(&meta).unwrap()).unwrap();
        assert_eq!(again, meta);
        let empty = export_provenance_metadata(&report(vec![]));
        assert!(empty.loci.is_empty());
    }

    #[test]
    fn not_assessable_is_never_a_percentage() {
        let mut r = report(vec![]);
        r.outcomes.push(CheckOutcome {
            check_id: "c".into(),
            kind: crate::assess::CheckKind::Completeness,
            parameter: Parameter::Completeness,
            fields: vec!["f".into()],
            dataset_id: "d".into(),
            stage: Some(Stage::SourceExtract),
            entry_mode: None,
            subset: None,
            status: OutcomeStatus::NotAssessable,
            numerator: 0,
            denominator: 0,
            strata: None,
            unattributed_stratum: None,
            violations: vec![],
            policy: None,
            lag_summary: None,
        });
        let md = render_report(&r, ReportFormat::Markdown);
        assert!(md.contains("| not assessable |"));
        assert!(!md.contains("0%"));
    }

    #[test]
    fn rejects_invalid_assertions_and_versions() {
        let reg = ActorRegistry::builtin();
        let mut bad = parse_assertion("DGO-DG-Clinician (Completeness: 94%)", &reg, ParseMode::Strict).unwrap();
        bad.measurement.qualifier = Some("a ) b".into());
        let inputs = ReportInputs { assertions: vec![bad], ..ReportInputs::default() };
        assert!(matches!(
            DQReport::assemble(inputs, &reg, &LabelMap::default()),
            Err(ReportError::InvalidAssertion { .. })
        ));
        let json = render_report(&report(vec![]), ReportFormat::MachineJson).replace("\"schema_version\": \"1\"", "\"schema_version\": \"2\"");
        assert_eq!(load_report(json.as_bytes()).unwrap_err(), ReportError::SchemaVersion("2".into()));
    }
}
