//! Decision rules that place check failures on lifecycle loci, and
//! cross-locus comparison of assertions.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assess::{CheckKind, CheckOutcome, DegeneracyFlag, OutcomeStatus, PolicyAnalysis, Stratum};
use crate::ingest::{EntryMode, Stage};
use crate::notation::{DQAssertion, Measurement, Scope};
use crate::rational::{self, Fraction, MAX_PRECISION};
use crate::taxonomy::{validate_locus, ActorRegistry, LifecycleLocus, Parameter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("priority {priority} is used by both `{first}` and `{second}`")]
    DuplicatePriority { priority: i64, first: String, second: String },
    #[error("rule `{rule}` targets an invalid locus `{target}`: {reason}")]
    InvalidLocus { rule: String, target: String, reason: String },
    #[error("rule document does not match the schema: {0}")]
    SchemaViolation(String),
}

/// Conditions a failing outcome must meet for a rule to fire. Empty lists
/// and absent flags match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleMatch {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub check_kinds: Vec<CheckKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entry_modes: Vec<EntryMode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<Stage>,
    /// Missingness lies only on rows where a policy does not require the field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_explained: Option<bool>,
    /// The transformed extract lost values the source extract had.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_vs_source: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionRule {
    pub id: String,
    pub priority: i64,
    #[serde(rename = "match")]
    pub matcher: RuleMatch,
    pub target: LifecycleLocus,
    /// Overrides `target` for outcomes on fields with the given entry mode.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub target_by_entry_mode: BTreeMap<EntryMode, LifecycleLocus>,
    pub rationale: String,
}

/// Facts about an outcome that rules can test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeFacts {
    pub kind: CheckKind,
    pub entry_mode: Option<EntryMode>,
    pub stage: Option<Stage>,
    pub policy_explained: bool,
    pub loss_vs_source: bool,
}

impl OutcomeFacts {
    /// `paired_source` is the same check run on the source extract, used to
    /// tell transformation loss from inherited gaps.
    pub fn of(outcome: &CheckOutcome, paired_source: Option<&CheckOutcome>) -> Self {
        let failures = |o: &CheckOutcome| o.denominator - o.numerator;
        let loss_vs_source = match (outcome.kind, outcome.stage) {
            (CheckKind::MappingSuccess, _) => outcome.is_failing(),
            (_, Some(Stage::TransformedExtract)) => match paired_source {
                Some(src) if src.status == OutcomeStatus::Assessed => {
                    outcome.is_failing() && failures(outcome) > failures(src)
                }
                _ => false,
            },
            _ => false,
        };
        OutcomeFacts {
            kind: outcome.kind,
            entry_mode: outcome.entry_mode,
            stage: outcome.stage,
            policy_explained: outcome.policy.as_ref().is_some_and(PolicyAnalysis::explains_missingness),
            loss_vs_source,
        }
    }
}

impl AttributionRule {
    pub fn matches(&self, facts: &OutcomeFacts) -> bool {
        let m = &self.matcher;
        let listed = |ok: bool, empty: bool| empty || ok;
        listed(m.check_kinds.contains(&facts.kind), m.check_kinds.is_empty())
            && listed(
                facts.entry_mode.is_some_and(|e| m.entry_modes.contains(&e)),
                m.entry_modes.is_empty(),
            )
            && listed(facts.stage.is_some_and(|s| m.stages.contains(&s)), m.stages.is_empty())
            && m.policy_explained.is_none_or(|want| want == facts.policy_explained)
            && m.loss_vs_source.is_none_or(|want| want == facts.loss_vs_source)
    }

    pub fn target_for(&self, entry_mode: Option<EntryMode>) -> &LifecycleLocus {
        entry_mode
            .and_then(|e| self.target_by_entry_mode.get(&e))
            .unwrap_or(&self.target)
    }
}

/// Immutable rules, kept in priority order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<AttributionRule>,
}

fn locus(text: &str) -> LifecycleLocus {
    text.parse().expect("builtin locus")
}

impl RuleSet {
    pub fn empty() -> Self {
        RuleSet { rules: Vec::new() }
    }

    /// The four builtin rules.
    pub fn defaults() -> Self {
        use CheckKind::*;
        let rules = vec![
            AttributionRule {
                id: "policy-explained-missingness".into(),
                priority: 10,
                matcher: RuleMatch {
                    check_kinds: vec![Completeness],
                    stages: vec![Stage::SourceExtract],
                    policy_explained: Some(true),
                    ..RuleMatch::default()
                },
                target: locus("DGO-DG-Organization"),
                target_by_entry_mode: BTreeMap::new(),
                rationale: "Missing values fall only where organizational policy does not require the field."
                    .into(),
            },
            AttributionRule {
                id: "ehr-enforced-failure".into(),
                priority: 20,
                matcher: RuleMatch {
                    check_kinds: vec![ConformanceValue, ConformanceFormat, PlausibilityRange, PlausibilityTemporal],
                    entry_modes: vec![EntryMode::EhrEnforced],
                    stages: vec![Stage::SourceExtract],
                    ..RuleMatch::default()
                },
                target: locus("DGO-DG-EHRSystem"),
                target_by_entry_mode: BTreeMap::new(),
                rationale: "The EHR constrains entry of this field, so invalid values are EHR issues.".into(),
            },
            AttributionRule {
                id: "author-entry-failure".into(),
                priority: 30,
                matcher: RuleMatch {
                    check_kinds: vec![
                        Completeness,
                        ConformanceValue,
                        ConformanceFormat,
                        PlausibilityRange,
                        PlausibilityTemporal,
                        DegeneracyByActor,
                    ],
                    entry_modes: vec![EntryMode::FreeEntry, EntryMode::DeviceGenerated],
                    stages: vec![Stage::SourceExtract],
                    ..RuleMatch::default()
                },
                target: locus("DGO-DG-Clinician"),
                target_by_entry_mode: BTreeMap::from([(EntryMode::DeviceGenerated, locus("DGO-DG-Wearable"))]),
                rationale: "The author is free to enter any value, so failures sit with whoever recorded it.".into(),
            },
            AttributionRule {
                id: "transformation-loss".into(),
                priority: 40,
                matcher: RuleMatch {
                    check_kinds: vec![MappingSuccess, Completeness],
                    stages: vec![Stage::TransformedExtract],
                    loss_vs_source: Some(true),
                    ..RuleMatch::default()
                },
                target: locus("DRO-DT-DataEngineer"),
                target_by_entry_mode: BTreeMap::new(),
                rationale: "Values present in the source extract were lost during transformation.".into(),
            },
        ];
        RuleSet { rules }
    }

    pub fn rules(&self) -> &[AttributionRule] {
        &self.rules
    }

    /// First rule, by priority, matching the facts.
    pub fn first_match(&self, facts: &OutcomeFacts) -> Option<&AttributionRule> {
        self.rules.iter().find(|r| r.matches(facts))
    }

    /// SHA-256 over the canonical JSON of the rules in priority order.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(&self.rules).expect("rules serialize");
        hex::encode(Sha256::digest(canonical))
    }

    fn from_rules(mut rules: Vec<AttributionRule>) -> Result<Self, RuleError> {
        rules.sort_by(|a, b| a.priority.cmp(&b.priority).then_with(|| a.id.cmp(&b.id)));
        for pair in rules.windows(2) {
            if pair[0].priority == pair[1].priority {
                return Err(RuleError::DuplicatePriority {
                    priority: pair[0].priority,
                    first: pair[0].id.clone(),
                    second: pair[1].id.clone(),
                });
            }
        }
        Ok(RuleSet { rules })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDocument {
    #[serde(default)]
    replace_defaults: bool,
    #[serde(default)]
    rules: Vec<RawRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    id: String,
    priority: i64,
    #[serde(rename = "match", default)]
    matcher: RuleMatch,
    target: String,
    #[serde(default)]
    target_by_entry_mode: BTreeMap<EntryMode, String>,
    #[serde(default)]
    rationale: String,
}

fn resolve_target(rule: &str, text: &str, registry: &ActorRegistry) -> Result<LifecycleLocus, RuleError> {
    let invalid = |reason: String| RuleError::InvalidLocus {
        rule: rule.to_string(),
        target: text.to_string(),
        reason,
    };
    let structural: LifecycleLocus = text.parse().map_err(|e| invalid(format!("{e}")))?;
    validate_locus(structural.organization(), structural.phase(), structural.actor(), registry)
        .map_err(|e| invalid(e.to_string()))
}

/// Loads a rule document. Empty input (or only whitespace) yields the defaults.
pub fn load_rules(bytes: &[u8], registry: &ActorRegistry) -> Result<RuleSet, RuleError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(RuleSet::defaults());
    }
    let doc: RuleDocument =
        serde_json::from_slice(bytes).map_err(|e| RuleError::SchemaViolation(e.to_string()))?;
    let mut rules = if doc.replace_defaults { Vec::new() } else { RuleSet::defaults().rules };
    for raw in doc.rules {
        if raw.id.is_empty() {
            return Err(RuleError::SchemaViolation("rule id must not be empty".into()));
        }
        let target = resolve_target(&raw.id, &raw.target, registry)?;
        let target_by_entry_mode = raw
            .target_by_entry_mode
            .iter()
            .map(|(mode, t)| Ok((*mode, resolve_target(&raw.id, t, registry)?)))
            .collect::<Result<_, RuleError>>()?;
        rules.push(AttributionRule {
            id: raw.id,
            priority: raw.priority,
            matcher: raw.matcher,
            target,
            target_by_entry_mode,
            rationale: raw.rationale,
        });
    }
    RuleSet::from_rules(rules)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Attribution {
    Rule { rule_id: String, locus: LifecycleLocus },
    /// No rule fired; the measurement is kept without a locus.
    Unattributed,
}

/// What the attribution was based on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub numerator: u64,
    pub denominator: u64,
    pub violation_count: usize,
    /// First few violating rows of the outcome.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sample_rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyAnalysis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<DegeneracyFlag>,
}

const SAMPLE_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributedResult {
    pub check_id: String,
    pub attribution: Attribution,
    pub label: String,
    pub parameter: Parameter,
    pub measurement: Measurement,
    pub scope: Scope,
    pub evidence: Evidence,
}

impl AttributedResult {
    pub fn rule_id(&self) -> Option<&str> {
        match &self.attribution {
            Attribution::Rule { rule_id, .. } => Some(rule_id),
            Attribution::Unattributed => None,
        }
    }

    pub fn locus(&self) -> Option<&LifecycleLocus> {
        match &self.attribution {
            Attribution::Rule { locus, .. } => Some(locus),
            Attribution::Unattributed => None,
        }
    }

    pub fn is_attributed(&self) -> bool {
        self.locus().is_some()
    }

    /// The located assertion; `None` when unattributed.
    pub fn assertion(&self) -> Option<DQAssertion> {
        let locus = self.locus()?.clone();
        let mut a = DQAssertion::new(locus, self.label.clone(), self.measurement.clone());
        a.parameter = Some(self.parameter);
        a.scope = Some(self.scope.clone());
        a.method_id = Some(self.check_id.clone());
        Some(a)
    }

    /// The measurement as it would appear after the locus, e.g. `(Mapping: 92% success)`.
    pub fn provisional_notation(&self) -> String {
        format!("({}: {})", self.label, self.measurement.render())
    }
}

/// Fewest decimals (up to 2) that render the percentage exactly.
fn precision_for(rate: Fraction) -> u32 {
    let pct = rate * Fraction::from_integer(100);
    (0..=2u32)
        .find(|&p| (pct * Fraction::from_integer(10i128.pow(p))).is_integer())
        .unwrap_or(2)
        .min(MAX_PRECISION)
}

fn rate_measurement(kind: CheckKind, rate: Fraction) -> Measurement {
    let m = Measurement::percent(rate).with_precision(precision_for(rate));
    match kind {
        CheckKind::MappingSuccess => m.with_qualifier("success"),
        _ => m,
    }
}

fn qualifier_safe(text: &str) -> bool {
    !text.is_empty() && !text.contains(')') && !text.chars().any(char::is_control)
}

fn flag_text(flag: &DegeneracyFlag, field: &str) -> String {
    match flag {
        DegeneracyFlag::NeverRecords => format!("never records {field}"),
        DegeneracyFlag::AlwaysSame { value } if qualifier_safe(value) => {
            format!("always records {field} as {value}")
        }
        DegeneracyFlag::AlwaysSame { .. } => format!("always records the same {field}"),
    }
}

fn primary_field(outcome: &CheckOutcome) -> Option<String> {
    match outcome.kind {
        CheckKind::MappingSuccess | CheckKind::Timeliness => outcome.fields.last().cloned(),
        _ => outcome.fields.first().cloned(),
    }
}

fn stratum_is_flagged(s: &Stratum) -> bool {
    !s.flags.is_empty() || s.numerator < s.denominator
}

/// Attributes one outcome. Passing, not-assessable and errored outcomes
/// yield nothing. A failing outcome yields one overall result plus one per
/// flagged actor stratum, all sharing the locus chosen by the first
/// matching rule.
pub fn attribute_outcome(
    outcome: &CheckOutcome,
    paired_source: Option<&CheckOutcome>,
    rules: &RuleSet,
) -> Vec<AttributedResult> {
    if !outcome.is_failing() {
        return Vec::new();
    }
    let facts = OutcomeFacts::of(outcome, paired_source);
    let attribution = match rules.first_match(&facts) {
        Some(rule) => Attribution::Rule {
            rule_id: rule.id.clone(),
            locus: rule.target_for(outcome.entry_mode).clone(),
        },
        None => Attribution::Unattributed,
    };
    let field = primary_field(outcome);
    let field_text = field.clone().unwrap_or_default();
    let label = outcome.kind.label().to_string();
    let rate = outcome.rate().expect("failing outcomes are assessed");

    let mut measurement = rate_measurement(outcome.kind, rate);
    if facts.policy_explained {
        let policy = outcome.policy.as_ref().expect("policy analysis");
        let text = format!("missing only where not required, required where {}", policy.condition);
        if qualifier_safe(&text) {
            measurement = measurement.with_qualifier(text);
        }
    }

    let mut results = Vec::new();
    results.push(AttributedResult {
        check_id: outcome.check_id.clone(),
        attribution: attribution.clone(),
        label: label.clone(),
        parameter: outcome.parameter,
        measurement,
        scope: Scope {
            dataset_id: Some(outcome.dataset_id.clone()),
            field_name: field.clone(),
            subset_description: outcome.subset.as_ref().map(ToString::to_string),
        },
        evidence: Evidence {
            numerator: outcome.numerator,
            denominator: outcome.denominator,
            violation_count: outcome.violations.len(),
            sample_rows: outcome.violations.iter().take(SAMPLE_ROWS).map(|v| v.row).collect(),
            policy: outcome.policy.clone(),
            flags: Vec::new(),
        },
    });

    for (actor_id, stratum) in outcome.strata.iter().flatten() {
        if !stratum_is_flagged(stratum) {
            continue;
        }
        let measurement = if stratum.flags.is_empty() {
            rate_measurement(outcome.kind, Fraction::new(stratum.numerator as i128, stratum.denominator as i128))
        } else {
            let texts: Vec<String> = stratum.flags.iter().map(|f| flag_text(f, &field_text)).collect();
            Measurement::text(texts.join(", "))
        };
        let mut subset = format!("actor_id={actor_id}");
        if let Some(s) = &outcome.subset {
            subset = format!("{s}; {subset}");
        }
        results.push(AttributedResult {
            check_id: outcome.check_id.clone(),
            attribution: attribution.clone(),
            label: label.clone(),
            parameter: outcome.parameter,
            measurement,
            scope: Scope {
                dataset_id: Some(outcome.dataset_id.clone()),
                field_name: field.clone(),
                subset_description: Some(subset),
            },
            evidence: Evidence {
                numerator: stratum.numerator,
                denominator: stratum.denominator,
                violation_count: (stratum.denominator - stratum.numerator) as usize,
                sample_rows: Vec::new(),
                policy: None,
                flags: stratum.flags.clone(),
            },
        });
    }
    results
}

/// The source-extract counterpart of a transformed-extract outcome: same
/// kind, fields and subset.
pub fn paired_source<'a>(outcome: &CheckOutcome, all: &'a [CheckOutcome]) -> Option<&'a CheckOutcome> {
    if outcome.stage != Some(Stage::TransformedExtract) || outcome.kind == CheckKind::MappingSuccess {
        return None;
    }
    all.iter().find(|o| {
        o.stage == Some(Stage::SourceExtract)
            && o.kind == outcome.kind
            && o.fields == outcome.fields
            && o.subset == outcome.subset
            && o.dataset_id == outcome.dataset_id
    })
}

/// Attributes every outcome, pairing transformed outcomes with their source
/// counterparts.
pub fn attribute_all(outcomes: &[CheckOutcome], rules: &RuleSet) -> Vec<AttributedResult> {
    outcomes
        .iter()
        .flat_map(|o| attribute_outcome(o, paired_source(o, outcomes), rules))
        .collect()
}

/// Which rules fired and how often.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionAudit {
    pub rule_set_fingerprint: String,
    pub fired: BTreeMap<String, usize>,
    pub attributed: usize,
    pub unattributed: usize,
}

impl AttributionAudit {
    pub fn of(results: &[AttributedResult], rules: &RuleSet) -> Self {
        let mut audit = AttributionAudit { rule_set_fingerprint: rules.fingerprint(), ..Self::default() };
        for r in results {
            match r.rule_id() {
                Some(id) => {
                    *audit.fired.entry(id.to_string()).or_default() += 1;
                    audit.attributed += 1;
                }
                None => audit.unattributed += 1,
            }
        }
        audit
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("parameters differ: {0} vs {1}")]
    ParameterMismatch(String, String),
    #[error("assertion `{0}` has no numeric measurement")]
    NonNumericAssertion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifecycleRelation {
    SamePhase,
    CrossPhase,
    CrossOrganization,
}

impl fmt::Display for LifecycleRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub parameter: Parameter,
    pub a: LifecycleLocus,
    pub b: LifecycleLocus,
    /// `a − b` in percentage points.
    #[serde(with = "rational::serde_fraction")]
    pub delta_pp: Fraction,
    pub relation: LifecycleRelation,
    pub narrative: String,
}

impl DeltaReport {
    /// `7pp`, or an exact fraction of a point when the delta is not a finite decimal.
    pub fn delta_text(&self) -> String {
        format!("{}pp", rational::format_exact(self.delta_pp))
    }
}

fn describe(a: &DQAssertion) -> String {
    a.notation()
}

/// Difference between two measurements of the same parameter, in percentage points.
pub fn compare_loci(a: &DQAssertion, b: &DQAssertion) -> Result<DeltaReport, CompareError> {
    let label = |x: &DQAssertion| x.parameter.map_or_else(|| x.label.clone(), |p| p.name().to_string());
    let parameter = match (a.parameter, b.parameter) {
        (Some(pa), Some(pb)) if pa == pb => pa,
        _ => return Err(CompareError::ParameterMismatch(label(a), label(b))),
    };
    let fa = a.measurement.fraction.ok_or_else(|| CompareError::NonNumericAssertion(describe(a)))?;
    let fb = b.measurement.fraction.ok_or_else(|| CompareError::NonNumericAssertion(describe(b)))?;
    let delta_pp = (fa - fb) * Fraction::from_integer(100);

    let relation = if a.locus.organization() != b.locus.organization() {
        LifecycleRelation::CrossOrganization
    } else if a.locus.phase() != b.locus.phase() {
        LifecycleRelation::CrossPhase
    } else {
        LifecycleRelation::SamePhase
    };
    let (earlier, later) = if a.locus <= b.locus { (&a.locus, &b.locus) } else { (&b.locus, &a.locus) };
    let size = rational::format_exact(delta_pp.abs());
    let narrative = if delta_pp.is_zero() {
        format!("{parameter} is the same at {earlier} and {later}.")
    } else if earlier.org_phase() == later.org_phase() {
        format!(
            "The {size}pp difference in {parameter} between {earlier} and {later} reflects \
             differences between the two actors' assessments within one phase, not a defect of either."
        )
    } else {
        format!(
            "The {size}pp difference in {parameter} between {earlier} and {later} is attributable to \
             processing between the two loci, not to {earlier}."
        )
    };
    Ok(DeltaReport { parameter, a: a.locus.clone(), b: b.locus.clone(), delta_pp, relation, narrative })
}
