//! Deterministic data quality checks over immutable snapshots.
//!
//! Every row-level check classifies each row as excluded, passing or failing;
//! the outcome's denominator is the number of classified rows and the
//! numerator the passing ones. Per-actor strata are built from the same
//! classification, so the strata always sum to the overall counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Cell, DatasetSnapshot, EntryMode, SemanticType, Stage};
use crate::rational::{ratio_of, Fraction};
use crate::taxonomy::Parameter;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssessError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("missing configuration: {0}")]
    MissingConfig(String),
    #[error("invalid range: min {min} is greater than max {max}")]
    InvalidRange { min: String, max: String },
    #[error("field `{0}` is neither numeric nor temporal")]
    NonNumericField(String),
    #[error("field `{0}` is not a date or timestamp")]
    NonTemporalField(String),
    #[error("stratification unavailable: manifest declares no actor_id_column")]
    NoActorColumn,
    #[error("no record/availability timestamp columns given or declared")]
    NoTimestampColumns,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stage mismatch: {0}")]
    StageMismatch(String),
    #[error("key column missing: {0}")]
    KeyColumnMissing(String),
    #[error("keys without a counterpart: {}", .0.join(", "))]
    KeyMismatch(Vec<String>),
    #[error("check `{check}` expects {expected} target field(s), got {got}")]
    TargetFieldCount { check: String, expected: usize, got: usize },
    #[error("no snapshot available for stage {0}")]
    MissingSnapshot(Stage),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckKind {
    Completeness,
    ConformanceValue,
    ConformanceFormat,
    PlausibilityRange,
    PlausibilityTemporal,
    DegeneracyByActor,
    Timeliness,
    MappingSuccess,
}

impl CheckKind {
    pub fn parameter(self) -> Parameter {
        match self {
            CheckKind::Completeness => Parameter::Completeness,
            CheckKind::ConformanceValue | CheckKind::ConformanceFormat => Parameter::Conformance,
            CheckKind::PlausibilityRange
            | CheckKind::PlausibilityTemporal
            | CheckKind::DegeneracyByActor => Parameter::Plausibility,
            CheckKind::Timeliness => Parameter::Timeliness,
            CheckKind::MappingSuccess => Parameter::Interoperability,
        }
    }

    /// Label used when the outcome is written in assertion notation.
    pub fn label(self) -> &'static str {
        match self {
            CheckKind::MappingSuccess => "Mapping",
            other => other.parameter().name(),
        }
    }

    fn field_count(self) -> usize {
        match self {
            CheckKind::PlausibilityTemporal | CheckKind::Timeliness | CheckKind::MappingSuccess => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConformanceMode {
    Value,
    Format,
}

/// Restricts a check to some rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubsetPredicate {
    /// Rows where the target field is required: all rows for a required
    /// field, rows satisfying its policy condition when one is declared.
    WhereRequired,
    /// Rows whose `field` holds one of `values`, or none of them when
    /// `exclude` is set. Missing cells never match.
    Match { field: String, values: BTreeSet<String>, exclude: bool },
}

pub const WHERE_REQUIRED: &str = "where-required";

impl fmt::Display for SubsetPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetPredicate::WhereRequired => f.write_str(WHERE_REQUIRED),
            SubsetPredicate::Match { field, values, exclude } => {
                let values: Vec<&str> = values.iter().map(String::as_str).collect();
                let op = if *exclude { "not in" } else { "in" };
                write!(f, "{field} {op} {{{}}}", values.join(", "))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SubsetRepr {
    Token(String),
    Match {
        field: String,
        values: BTreeSet<String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        exclude: bool,
    },
}

impl Serialize for SubsetPredicate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SubsetPredicate::WhereRequired => SubsetRepr::Token(WHERE_REQUIRED.into()),
            SubsetPredicate::Match { field, values, exclude } => SubsetRepr::Match {
                field: field.clone(),
                values: values.clone(),
                exclude: *exclude,
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SubsetPredicate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match SubsetRepr::deserialize(d)? {
            SubsetRepr::Token(t) if t == WHERE_REQUIRED => Ok(SubsetPredicate::WhereRequired),
            SubsetRepr::Token(t) => Err(serde::de::Error::custom(format!(
                "unknown subset token `{t}` (expected `{WHERE_REQUIRED}`)"
            ))),
            SubsetRepr::Match { field, values, exclude } => {
                Ok(SubsetPredicate::Match { field, values, exclude })
            }
        }
    }
}

/// A range bound: a number, or an ISO date/timestamp for temporal fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Number(f64),
    Text(String),
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Number(n) => write!(f, "{n}"),
            Bound::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Bound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Bound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_records: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dominant_share: Option<f64>,
    /// Human-readable duration such as `30days` or `1h`.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_duration")]
    pub max_lag: Option<Duration>,
}

mod opt_duration {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(d) => s.serialize_some(&humantime::format_duration(*d).to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| humantime::parse_duration(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

pub const DEFAULT_MIN_RECORDS: u64 = 10;
pub const DEFAULT_MAX_DOMINANT_SHARE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDefinition {
    pub id: String,
    pub kind: CheckKind,
    #[serde(default)]
    pub target_fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_predicate: Option<SubsetPredicate>,
    #[serde(default)]
    pub stratify_by_actor: bool,
    /// Which extract to check; defaults to the first snapshot supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub config: CheckConfig,
}

impl CheckDefinition {
    pub fn new(id: impl Into<String>, kind: CheckKind, fields: &[&str]) -> Self {
        CheckDefinition {
            id: id.into(),
            kind,
            target_fields: fields.iter().map(|f| f.to_string()).collect(),
            subset_predicate: None,
            stratify_by_actor: false,
            stage: None,
            config: CheckConfig::default(),
        }
    }

    pub fn on_stage(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn stratified(mut self) -> Self {
        self.stratify_by_actor = true;
        self
    }

    pub fn with_subset(mut self, subset: SubsetPredicate) -> Self {
        self.subset_predicate = Some(subset);
        self
    }

    pub fn with_config(mut self, config: CheckConfig) -> Self {
        self.config = config;
        self
    }
}

/// Parses a check-suite document: a JSON list of check definitions.
pub fn load_suite(bytes: &[u8]) -> Result<Vec<CheckDefinition>, String> {
    let suite: Vec<CheckDefinition> = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    let mut ids = BTreeSet::new();
    for def in &suite {
        if !ids.insert(def.id.as_str()) {
            return Err(format!("duplicate check id `{}`", def.id));
        }
    }
    Ok(suite)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum OutcomeStatus {
    Assessed,
    /// Empty denominator. Never reported as 0% or 100%.
    NotAssessable,
    Errored { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag")]
pub enum DegeneracyFlag {
    NeverRecords,
    AlwaysSame { value: String },
}

impl fmt::Display for DegeneracyFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegeneracyFlag::NeverRecords => f.write_str("never records"),
            DegeneracyFlag::AlwaysSame { value } => write!(f, "always records \"{value}\""),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub numerator: u64,
    pub denominator: u64,
    /// Rows authored by this actor, whether or not they were assessed.
    pub records: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<DegeneracyFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason")]
pub enum ViolationReason {
    Missing,
    CoercionFailure { raw: String },
    NotInAllowedSet { value: String },
    PatternMismatch { value: String },
    OutOfRange { value: String },
    TemporalOrder { before: String, after: String },
    NegativeLag { seconds: i64 },
    LagExceeded { seconds: i64 },
    Unmapped { key: String },
    Degenerate { actor: String, flag: DegeneracyFlag },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    #[serde(flatten)]
    pub reason: ViolationReason,
}

/// Where the missing cells of a policy-conditioned field fall.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyAnalysis {
    /// The field is required where this holds.
    pub condition: String,
    pub missing_where_required: u64,
    pub missing_where_not_required: u64,
}

impl PolicyAnalysis {
    /// Every missing cell sits on a row where the policy does not require the field.
    pub fn explains_missingness(&self) -> bool {
        self.missing_where_not_required > 0 && self.missing_where_required == 0
    }
}

/// Lag between record and availability timestamps, in seconds. The median
/// is the lower median.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSummary {
    pub min_seconds: i64,
    pub median_seconds: i64,
    pub max_seconds: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check_id: String,
    pub kind: CheckKind,
    pub parameter: Parameter,
    pub fields: Vec<String>,
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    /// Entry mode of the assessed field (the transformed field for mapping checks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_mode: Option<EntryMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<SubsetPredicate>,
    pub status: OutcomeStatus,
    pub numerator: u64,
    pub denominator: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<BTreeMap<String, Stratum>>,
    /// Rows with no actor id, when strata are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unattributed_stratum: Option<Stratum>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyAnalysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag_summary: Option<LagSummary>,
}

impl CheckOutcome {
    /// `numerator / denominator` when assessed.
    pub fn rate(&self) -> Option<Fraction> {
        match self.status {
            OutcomeStatus::Assessed => ratio_of(self.numerator, self.denominator),
            _ => None,
        }
    }

    pub fn is_failing(&self) -> bool {
        self.status == OutcomeStatus::Assessed && self.numerator < self.denominator
    }

    pub fn is_errored(&self) -> bool {
        matches!(self.status, OutcomeStatus::Errored { .. })
    }

    fn errored(def: &CheckDefinition, err: &AssessError) -> Self {
        CheckOutcome {
            check_id: def.id.clone(),
            kind: def.kind,
            parameter: def.kind.parameter(),
            fields: def.target_fields.clone(),
            dataset_id: String::new(),
            stage: def.stage,
            entry_mode: None,
            subset: def.subset_predicate.clone(),
            status: OutcomeStatus::Errored { message: err.to_string() },
            numerator: 0,
            denominator: 0,
            strata: None,
            unattributed_stratum: None,
            violations: Vec::new(),
            policy: None,
            lag_summary: None,
        }
    }
}

enum RowEval {
    Excluded,
    Pass,
    Fail(ViolationReason),
}

fn column<'a>(snapshot: &'a DatasetSnapshot, field: &str) -> Result<&'a [Cell], AssessError> {
    snapshot
        .column(field)
        .ok_or_else(|| AssessError::UnknownField(field.to_string()))
}

fn field_type(snapshot: &DatasetSnapshot, field: &str) -> Result<SemanticType, AssessError> {
    snapshot
        .manifest()
        .field(field)
        .map(|f| f.semantic_type)
        .ok_or_else(|| AssessError::UnknownField(field.to_string()))
}

fn cell_in(cell: &Cell, values: &BTreeSet<String>) -> bool {
    cell.value().is_some_and(|v| values.contains(&v.to_string()))
}

/// Per-row mask of rows included by the subset predicate.
fn subset_mask(
    snapshot: &DatasetSnapshot,
    target: &str,
    subset: Option<&SubsetPredicate>,
) -> Result<Vec<bool>, AssessError> {
    let rows = snapshot.row_count();
    match subset {
        None => Ok(vec![true; rows]),
        Some(SubsetPredicate::Match { field, values, exclude }) => {
            let col = column(snapshot, field)?;
            Ok(col
                .iter()
                .map(|c| !c.is_missing() && cell_in(c, values) != *exclude)
                .collect())
        }
        Some(SubsetPredicate::WhereRequired) => {
            let spec = snapshot
                .manifest()
                .field(target)
                .ok_or_else(|| AssessError::UnknownField(target.to_string()))?;
            match &spec.policy_condition {
                Some(cond) => {
                    let col = column(snapshot, &cond.field)?;
                    Ok(col.iter().map(|c| cell_in(c, &cond.values)).collect())
                }
                None => Ok(vec![spec.required; rows]),
            }
        }
    }
}

struct Assembly {
    numerator: u64,
    denominator: u64,
    violations: Vec<Violation>,
    strata: Option<(BTreeMap<String, Stratum>, Stratum)>,
}

fn assemble(evals: Vec<RowEval>, actors: Option<&[Option<String>]>) -> Assembly {
    let mut numerator = 0;
    let mut denominator = 0;
    let mut violations = Vec::new();
    let mut strata: Option<(BTreeMap<String, Stratum>, Stratum)> =
        actors.map(|_| (BTreeMap::new(), Stratum::default()));

    for (row, eval) in evals.into_iter().enumerate() {
        let (num, den) = match &eval {
            RowEval::Excluded => (0, 0),
            RowEval::Pass => (1, 1),
            RowEval::Fail(_) => (0, 1),
        };
        numerator += num;
        denominator += den;
        if let (Some((by_actor, unattributed)), Some(actors)) = (strata.as_mut(), actors) {
            let stratum = match &actors[row] {
                Some(id) => by_actor.entry(id.clone()).or_default(),
                None => unattributed,
            };
            stratum.records += 1;
            stratum.numerator += num;
            stratum.denominator += den;
        }
        if let RowEval::Fail(reason) = eval {
            violations.push(Violation { row, reason });
        }
    }
    Assembly { numerator, denominator, violations, strata }
}

fn actor_ids(snapshot: &DatasetSnapshot) -> Result<Vec<Option<String>>, AssessError> {
    if snapshot.manifest().actor_id_column.is_none() {
        return Err(AssessError::NoActorColumn);
    }
    Ok((0..snapshot.row_count()).map(|r| snapshot.actor_id(r)).collect())
}

struct Context<'a> {
    id: &'a str,
    kind: CheckKind,
    fields: Vec<String>,
    snapshot: &'a DatasetSnapshot,
    entry_field: &'a str,
    subset: Option<&'a SubsetPredicate>,
    stratify: bool,
}

impl Context<'_> {
    fn finish(self, evals: Vec<RowEval>) -> Result<CheckOutcome, AssessError> {
        let actors = if self.stratify { Some(actor_ids(self.snapshot)?) } else { None };
        let assembly = assemble(evals, actors.as_deref());
        let manifest = self.snapshot.manifest();
        let (strata, unattributed_stratum) = match assembly.strata {
            Some((s, u)) => (Some(s), Some(u)),
            None => (None, None),
        };
        Ok(CheckOutcome {
            check_id: self.id.to_string(),
            kind: self.kind,
            parameter: self.kind.parameter(),
            fields: self.fields,
            dataset_id: manifest.dataset_id.clone(),
            stage: Some(manifest.stage),
            entry_mode: manifest.field(self.entry_field).map(|f| f.entry_mode),
            subset: self.subset.cloned(),
            status: if assembly.denominator == 0 {
                OutcomeStatus::NotAssessable
            } else {
                OutcomeStatus::Assessed
            },
            numerator: assembly.numerator,
            denominator: assembly.denominator,
            strata,
            unattributed_stratum,
            violations: assembly.violations,
            policy: None,
            lag_summary: None,
        })
    }
}

fn completeness(ctx: Context<'_>, field: &str) -> Result<CheckOutcome, AssessError> {
    let snapshot = ctx.snapshot;
    let col = column(snapshot, field)?;
    let mask = subset_mask(snapshot, field, ctx.subset)?;
    let evals = col
        .iter()
        .zip(&mask)
        .map(|(cell, &included)| match (included, cell) {
            (false, _) => RowEval::Excluded,
            (true, Cell::Valid(_)) => RowEval::Pass,
            (true, Cell::Missing) => RowEval::Fail(ViolationReason::Missing),
            (true, Cell::Invalid(raw)) => RowEval::Fail(ViolationReason::CoercionFailure { raw: raw.clone() }),
        })
        .collect();

    let policy = match snapshot.manifest().field(field).and_then(|f| f.policy_condition.as_ref()) {
        Some(cond) => {
            let cond_col = column(snapshot, &cond.field)?;
            let (mut required, mut not_required) = (0, 0);
            for ((cell, &included), cond_cell) in col.iter().zip(&mask).zip(cond_col) {
                if included && cell.is_missing() {
                    if cell_in(cond_cell, &cond.values) {
                        required += 1;
                    } else {
                        not_required += 1;
                    }
                }
            }
            Some(PolicyAnalysis {
                condition: cond.to_string(),
                missing_where_required: required,
                missing_where_not_required: not_required,
            })
        }
        None => None,
    };
    let mut outcome = ctx.finish(evals)?;
    outcome.policy = policy;
    Ok(outcome)
}

/// Share of rows (in the subset) with a usable value.
pub fn check_completeness(
    snapshot: &DatasetSnapshot,
    field: &str,
    subset: Option<&SubsetPredicate>,
) -> Result<CheckOutcome, AssessError> {
    let ctx = Context {
        id: "completeness",
        kind: CheckKind::Completeness,
        fields: vec![field.to_string()],
        snapshot,
        entry_field: field,
        subset,
        stratify: false,
    };
    completeness(ctx, field)
}

fn conformance(ctx: Context<'_>, field: &str, mode: ConformanceMode) -> Result<CheckOutcome, AssessError> {
    let snapshot = ctx.snapshot;
    let col = column(snapshot, field)?;
    let spec = snapshot.manifest().field(field).expect("column exists");
    let mask = subset_mask(snapshot, field, ctx.subset)?;

    enum Rule<'r> {
        Allowed(&'r BTreeSet<String>),
        Pattern(Regex),
        Typed,
    }
    let rule = match mode {
        ConformanceMode::Value => Rule::Allowed(spec.allowed_values.as_ref().ok_or_else(|| {
            AssessError::MissingConfig(format!("field `{field}` declares no allowed_values"))
        })?),
        ConformanceMode::Format => match &spec.format_pattern {
            Some(p) => Rule::Pattern(
                Regex::new(&format!("^(?:{p})$")).map_err(|e| AssessError::InvalidConfig(e.to_string()))?,
            ),
            None if matches!(
                spec.semantic_type,
                SemanticType::Number | SemanticType::Date | SemanticType::Timestamp
            ) =>
            {
                Rule::Typed
            }
            None => {
                return Err(AssessError::MissingConfig(format!(
                    "field `{field}` declares no format_pattern and is not a typed column"
                )))
            }
        },
    };

    let evals = col
        .iter()
        .zip(&mask)
        .map(|(cell, &included)| match (included, cell) {
            (false, _) | (true, Cell::Missing) => RowEval::Excluded,
            (true, Cell::Invalid(raw)) => RowEval::Fail(ViolationReason::CoercionFailure { raw: raw.clone() }),
            (true, Cell::Valid(v)) => {
                let text = v.to_string();
                match &rule {
                    Rule::Allowed(set) if !set.contains(&text) => {
                        RowEval::Fail(ViolationReason::NotInAllowedSet { value: text })
                    }
                    Rule::Pattern(re) if !re.is_match(&text) => {
                        RowEval::Fail(ViolationReason::PatternMismatch { value: text })
                    }
                    _ => RowEval::Pass,
                }
            }
        })
        .collect();
    ctx.finish(evals)
}

/// Share of non-missing cells that conform, by allowed value set or by format.
pub fn check_conformance(
    snapshot: &DatasetSnapshot,
    field: &str,
    mode: ConformanceMode,
) -> Result<CheckOutcome, AssessError> {
    let kind = match mode {
        ConformanceMode::Value => CheckKind::ConformanceValue,
        ConformanceMode::Format => CheckKind::ConformanceFormat,
    };
    let ctx = Context {
        id: "conformance",
        kind,
        fields: vec![field.to_string()],
        snapshot,
        entry_field: field,
        subset: None,
        stratify: false,
    };
    conformance(ctx, field, mode)
}

fn bound_value(bound: &Bound, ty: SemanticType) -> Result<f64, AssessError> {
    match (bound, ty) {
        (Bound::Number(n), SemanticType::Number) if n.is_finite() => Ok(*n),
        (Bound::Text(t), SemanticType::Date | SemanticType::Timestamp) => {
            // a date bound on a timestamp field means midnight UTC
            let cell = match crate::ingest::coerce(t, ty) {
                Cell::Invalid(_) if ty == SemanticType::Timestamp => {
                    crate::ingest::coerce(t, SemanticType::Date)
                }
                c => c,
            };
            cell.value()
                .and_then(|v| v.epoch_seconds())
                .map(|s| s as f64)
                .ok_or_else(|| AssessError::InvalidConfig(format!("bound `{t}` is not an ISO date")))
        }
        _ => Err(AssessError::InvalidConfig(format!("bound `{bound}` does not match field type"))),
    }
}

fn plausibility_range(
    ctx: Context<'_>,
    field: &str,
    min: &Bound,
    max: &Bound,
) -> Result<CheckOutcome, AssessError> {
    let snapshot = ctx.snapshot;
    let col = column(snapshot, field)?;
    let ty = field_type(snapshot, field)?;
    if !(ty == SemanticType::Number || ty.is_temporal()) {
        return Err(AssessError::NonNumericField(field.to_string()));
    }
    let (lo, hi) = (bound_value(min, ty)?, bound_value(max, ty)?);
    if lo > hi {
        return Err(AssessError::InvalidRange { min: min.to_string(), max: max.to_string() });
    }
    let mask = subset_mask(snapshot, field, ctx.subset)?;
    let evals = col
        .iter()
        .zip(&mask)
        .map(|(cell, &included)| {
            let Some(value) = cell.value().filter(|_| included) else {
                return RowEval::Excluded;
            };
            let x = match value {
                crate::ingest::Value::Number(n) => *n,
                other => other.epoch_seconds().expect("temporal") as f64,
            };
            if lo <= x && x <= hi {
                RowEval::Pass
            } else {
                RowEval::Fail(ViolationReason::OutOfRange { value: value.to_string() })
            }
        })
        .collect();
    ctx.finish(evals)
}

/// Share of typed values inside `[min, max]`, bounds inclusive.
pub fn check_plausibility_range(
    snapshot: &DatasetSnapshot,
    field: &str,
    min: &Bound,
    max: &Bound,
) -> Result<CheckOutcome, AssessError> {
    let ctx = Context {
        id: "plausibility_range",
        kind: CheckKind::PlausibilityRange,
        fields: vec![field.to_string()],
        snapshot,
        entry_field: field,
        subset: None,
        stratify: false,
    };
    plausibility_range(ctx, field, min, max)
}

fn temporal_pair<'a>(
    snapshot: &'a DatasetSnapshot,
    first: &str,
    second: &str,
    err: fn(String) -> AssessError,
) -> Result<(&'a [Cell], &'a [Cell]), AssessError> {
    for field in [first, second] {
        if !field_type(snapshot, field)?.is_temporal() {
            return Err(err(field.to_string()));
        }
    }
    Ok((column(snapshot, first)?, column(snapshot, second)?))
}

fn plausibility_temporal(ctx: Context<'_>, before: &str, after: &str) -> Result<CheckOutcome, AssessError> {
    let snapshot = ctx.snapshot;
    let (b_col, a_col) = temporal_pair(snapshot, before, after, AssessError::NonTemporalField)?;
    let mask = subset_mask(snapshot, before, ctx.subset)?;
    let evals = b_col
        .iter()
        .zip(a_col)
        .zip(&mask)
        .map(|((b, a), &included)| match (included, b.value(), a.value()) {
            (true, Some(bv), Some(av)) => {
                if bv.epoch_seconds() <= av.epoch_seconds() {
                    RowEval::Pass
                } else {
                    RowEval::Fail(ViolationReason::TemporalOrder {
                        before: bv.to_string(),
                        after: av.to_string(),
                    })
                }
            }
            _ => RowEval::Excluded,
        })
        .collect();
    ctx.finish(evals)
}

/// Share of rows with both values present where `before <= after`.
pub fn check_plausibility_temporal(
    snapshot: &DatasetSnapshot,
    field_before: &str,
    field_after: &str,
) -> Result<CheckOutcome, AssessError> {
    let ctx = Context {
        id: "plausibility_temporal",
        kind: CheckKind::PlausibilityTemporal,
        fields: vec![field_before.to_string(), field_after.to_string()],
        snapshot,
        entry_field: field_before,
        subset: None,
        stratify: false,
    };
    plausibility_temporal(ctx, field_before, field_after)
}

fn timeliness(
    ctx: Context<'_>,
    record_field: &str,
    availability_field: &str,
    max_lag: Duration,
) -> Result<CheckOutcome, AssessError> {
    if max_lag.is_zero() {
        return Err(AssessError::InvalidConfig("max_lag must be positive".into()));
    }
    let max_lag = i64::try_from(max_lag.as_secs()).unwrap_or(i64::MAX);
    let snapshot = ctx.snapshot;
    let (r_col, a_col) = temporal_pair(snapshot, record_field, availability_field, AssessError::NonTemporalField)?;
    let mask = subset_mask(snapshot, record_field, ctx.subset)?;
    let mut lags = Vec::new();
    let evals = r_col
        .iter()
        .zip(a_col)
        .zip(&mask)
        .map(|((r, a), &included)| {
            let (true, Some(rv), Some(av)) = (included, r.value(), a.value()) else {
                return RowEval::Excluded;
            };
            let lag = av.epoch_seconds().expect("temporal") - rv.epoch_seconds().expect("temporal");
            lags.push(lag);
            if lag < 0 {
                RowEval::Fail(ViolationReason::NegativeLag { seconds: lag })
            } else if lag > max_lag {
                RowEval::Fail(ViolationReason::LagExceeded { seconds: lag })
            } else {
                RowEval::Pass
            }
        })
        .collect();
    let mut outcome = ctx.finish(evals)?;
    if !lags.is_empty() {
        lags.sort_unstable();
        outcome.lag_summary = Some(LagSummary {
            min_seconds: lags[0],
            median_seconds: lags[(lags.len() - 1) / 2],
            max_seconds: lags[lags.len() - 1],
        });
    }
    Ok(outcome)
}

/// Share of rows made available within `max_lag` of being recorded. Rows
/// whose availability precedes the record time fail as `NegativeLag`.
pub fn check_timeliness(
    snapshot: &DatasetSnapshot,
    record_ts_field: &str,
    availability_ts_field: &str,
    max_lag: Duration,
) -> Result<CheckOutcome, AssessError> {
    let ctx = Context {
        id: "timeliness",
        kind: CheckKind::Timeliness,
        fields: vec![record_ts_field.to_string(), availability_ts_field.to_string()],
        snapshot,
        entry_field: availability_ts_field,
        subset: None,
        stratify: false,
    };
    timeliness(ctx, record_ts_field, availability_ts_field, max_lag)
}

/// Per-actor screen for authors who never record a field or always record
/// the same value.
///
/// Actors with at least `min_records` rows are eligible. The outcome counts
/// eligible actors: the numerator is the number that are not flagged, so a
/// rate of 1 means no degenerate authors. Strata are always present.
pub fn check_degeneracy_by_actor(
    snapshot: &DatasetSnapshot,
    field: &str,
    min_records: u64,
    max_dominant_share: f64,
) -> Result<CheckOutcome, AssessError> {
    degeneracy(
        "degeneracy_by_actor",
        snapshot,
        field,
        None,
        min_records,
        max_dominant_share,
    )
}

fn degeneracy(
    id: &str,
    snapshot: &DatasetSnapshot,
    field: &str,
    subset: Option<&SubsetPredicate>,
    min_records: u64,
    max_dominant_share: f64,
) -> Result<CheckOutcome, AssessError> {
    if min_records == 0 {
        return Err(AssessError::InvalidConfig("min_records must be at least 1".into()));
    }
    if !(max_dominant_share > 0.0 && max_dominant_share <= 1.0) {
        return Err(AssessError::InvalidConfig("max_dominant_share must be in (0, 1]".into()));
    }
    let col = column(snapshot, field)?;
    let actors = actor_ids(snapshot)?;
    let mask = subset_mask(snapshot, field, subset)?;

    struct Tally {
        rows: Vec<usize>,
        values: BTreeMap<String, u64>,
        present: u64,
    }
    let mut by_actor: BTreeMap<String, Tally> = BTreeMap::new();
    let mut unattributed = Stratum::default();
    for (row, (cell, actor)) in col.iter().zip(&actors).enumerate() {
        if !mask[row] {
            continue;
        }
        let Some(actor) = actor else {
            unattributed.records += 1;
            continue;
        };
        let tally = by_actor
            .entry(actor.clone())
            .or_insert_with(|| Tally { rows: Vec::new(), values: BTreeMap::new(), present: 0 });
        tally.rows.push(row);
        if let Some(key) = cell.key() {
            *tally.values.entry(key).or_default() += 1;
            tally.present += 1;
        }
    }

    let mut strata = BTreeMap::new();
    let mut violations = Vec::new();
    let (mut numerator, mut denominator) = (0, 0);
    for (actor, tally) in by_actor {
        let records = tally.rows.len() as u64;
        let mut stratum = Stratum { records, ..Stratum::default() };
        if records >= min_records {
            stratum.denominator = 1;
            if tally.present == 0 {
                stratum.flags.push(DegeneracyFlag::NeverRecords);
            } else {
                // first maximum in key order
                let (value, count) = tally
                    .values
                    .iter()
                    .fold(None::<(&String, u64)>, |best, (v, &c)| match best {
                        Some((_, bc)) if bc >= c => best,
                        _ => Some((v, c)),
                    })
                    .expect("present values");
                if count as f64 >= max_dominant_share * tally.present as f64 {
                    stratum.flags.push(DegeneracyFlag::AlwaysSame { value: value.clone() });
                }
            }
            if stratum.flags.is_empty() {
                stratum.numerator = 1;
            } else {
                for &row in &tally.rows {
                    for flag in &stratum.flags {
                        violations.push(Violation {
                            row,
                            reason: ViolationReason::Degenerate { actor: actor.clone(), flag: flag.clone() },
                        });
                    }
                }
            }
        }
        numerator += stratum.numerator;
        denominator += stratum.denominator;
        strata.insert(actor, stratum);
    }
    violations.sort_by_key(|v| v.row);

    let manifest = snapshot.manifest();
    Ok(CheckOutcome {
        check_id: id.to_string(),
        kind: CheckKind::DegeneracyByActor,
        parameter: CheckKind::DegeneracyByActor.parameter(),
        fields: vec![field.to_string()],
        dataset_id: manifest.dataset_id.clone(),
        stage: Some(manifest.stage),
        entry_mode: manifest.field(field).map(|f| f.entry_mode),
        subset: subset.cloned(),
        status: if denominator == 0 { OutcomeStatus::NotAssessable } else { OutcomeStatus::Assessed },
        numerator,
        denominator,
        strata: Some(strata),
        unattributed_stratum: Some(unattributed),
        violations,
        policy: None,
        lag_summary: None,
    })
}

fn key_index(snapshot: &DatasetSnapshot, label: &str) -> Result<(String, Vec<Option<String>>), AssessError> {
    let key = snapshot
        .manifest()
        .key_column
        .clone()
        .ok_or_else(|| AssessError::KeyColumnMissing(format!("{label} manifest declares no key_column")))?;
    let col = column(snapshot, &key)?;
    Ok((key, col.iter().map(|c| c.value().map(|v| v.to_string())).collect()))
}

/// Share of source rows with a value whose paired transformed row still has
/// one. Rows pair up through the key column both manifests declare.
pub fn check_mapping_success(
    source: &DatasetSnapshot,
    transformed: &DatasetSnapshot,
    source_field: &str,
    transformed_field: &str,
) -> Result<CheckOutcome, AssessError> {
    mapping_success("mapping_success", source, transformed, source_field, transformed_field, None, false)
}

fn mapping_success(
    id: &str,
    source: &DatasetSnapshot,
    transformed: &DatasetSnapshot,
    source_field: &str,
    transformed_field: &str,
    subset: Option<&SubsetPredicate>,
    stratify: bool,
) -> Result<CheckOutcome, AssessError> {
    let (sm, tm) = (source.manifest(), transformed.manifest());
    if sm.stage != Stage::SourceExtract || tm.stage != Stage::TransformedExtract {
        return Err(AssessError::StageMismatch(format!(
            "expected SourceExtract and TransformedExtract, got {} and {}",
            sm.stage, tm.stage
        )));
    }
    if sm.dataset_id != tm.dataset_id {
        return Err(AssessError::StageMismatch(format!(
            "dataset ids differ: `{}` vs `{}`",
            sm.dataset_id, tm.dataset_id
        )));
    }
    let s_col = column(source, source_field)?;
    let t_col = column(transformed, transformed_field)?;
    let (_, s_keys) = key_index(source, "source")?;
    let (_, t_keys) = key_index(transformed, "transformed")?;

    let mut unmatched = BTreeSet::new();
    let mut t_rows: HashMap<&str, usize> = HashMap::new();
    for (row, key) in t_keys.iter().enumerate() {
        match key {
            Some(k) => {
                if t_rows.insert(k.as_str(), row).is_some() {
                    unmatched.insert(format!("{k} (duplicate in transformed)"));
                }
            }
            None => {
                unmatched.insert(format!("<missing key at transformed row {row}>"));
            }
        }
    }
    let mut seen = BTreeSet::new();
    for (row, key) in s_keys.iter().enumerate() {
        match key {
            Some(k) if !seen.insert(k.as_str()) => {
                unmatched.insert(format!("{k} (duplicate in source)"));
            }
            Some(k) if !t_rows.contains_key(k.as_str()) => {
                unmatched.insert(k.clone());
            }
            Some(_) => {}
            None => {
                unmatched.insert(format!("<missing key at source row {row}>"));
            }
        }
    }
    for k in t_rows.keys() {
        if !seen.contains(k) {
            unmatched.insert(k.to_string());
        }
    }
    if !unmatched.is_empty() {
        return Err(AssessError::KeyMismatch(unmatched.into_iter().collect()));
    }

    let mask = subset_mask(source, source_field, subset)?;
    let evals = s_col
        .iter()
        .zip(&s_keys)
        .zip(&mask)
        .map(|((cell, key), &included)| {
            if !included || cell.value().is_none() {
                return RowEval::Excluded;
            }
            let key = key.as_deref().expect("keys checked");
            match &t_col[t_rows[key]] {
                Cell::Valid(_) => RowEval::Pass,
                _ => RowEval::Fail(ViolationReason::Unmapped { key: key.to_string() }),
            }
        })
        .collect();

    let ctx = Context {
        id,
        kind: CheckKind::MappingSuccess,
        fields: vec![source_field.to_string(), transformed_field.to_string()],
        snapshot: source,
        entry_field: source_field,
        subset,
        stratify,
    };
    let mut outcome = ctx.finish(evals)?;
    outcome.dataset_id = tm.dataset_id.clone();
    outcome.stage = Some(Stage::TransformedExtract);
    outcome.entry_mode = tm.field(transformed_field).map(|f| f.entry_mode);
    Ok(outcome)
}

fn pick<'a>(snapshots: &'a [DatasetSnapshot], stage: Option<Stage>) -> Result<&'a DatasetSnapshot, AssessError> {
    match stage {
        Some(stage) => snapshots
            .iter()
            .find(|s| s.manifest().stage == stage)
            .ok_or(AssessError::MissingSnapshot(stage)),
        None => snapshots.first().ok_or(AssessError::MissingSnapshot(Stage::SourceExtract)),
    }
}

fn run_check_inner(def: &CheckDefinition, snapshots: &[DatasetSnapshot]) -> Result<CheckOutcome, AssessError> {
    let fields: Vec<&str> = def.target_fields.iter().map(String::as_str).collect();
    let arity_error = || AssessError::TargetFieldCount {
        check: def.id.clone(),
        expected: def.kind.field_count(),
        got: fields.len(),
    };
    let subset = def.subset_predicate.as_ref();

    if def.kind == CheckKind::MappingSuccess {
        let [source_field, transformed_field] = fields[..] else {
            return Err(arity_error());
        };
        let source = pick(snapshots, Some(Stage::SourceExtract))?;
        let transformed = pick(snapshots, Some(Stage::TransformedExtract))?;
        return mapping_success(
            &def.id,
            source,
            transformed,
            source_field,
            transformed_field,
            subset,
            def.stratify_by_actor,
        );
    }

    let snapshot = pick(snapshots, def.stage)?;
    if def.kind == CheckKind::Timeliness && fields.is_empty() {
        let m = snapshot.manifest();
        let (Some(rec), Some(avail)) = (&m.record_timestamp_column, &m.availability_timestamp_column) else {
            return Err(AssessError::NoTimestampColumns);
        };
        let ctx = Context {
            id: &def.id,
            kind: def.kind,
            fields: vec![rec.clone(), avail.clone()],
            snapshot,
            entry_field: avail,
            subset,
            stratify: def.stratify_by_actor,
        };
        let max_lag = def.config.max_lag.ok_or_else(|| AssessError::MissingConfig("max_lag".into()))?;
        return timeliness(ctx, rec, avail, max_lag);
    }
    if fields.len() != def.kind.field_count() {
        return Err(arity_error());
    }
    let ctx = Context {
        id: &def.id,
        kind: def.kind,
        fields: def.target_fields.clone(),
        snapshot,
        entry_field: fields[0],
        subset,
        stratify: def.stratify_by_actor,
    };
    let cfg = &def.config;
    match def.kind {
        CheckKind::Completeness => completeness(ctx, fields[0]),
        CheckKind::ConformanceValue => conformance(ctx, fields[0], ConformanceMode::Value),
        CheckKind::ConformanceFormat => conformance(ctx, fields[0], ConformanceMode::Format),
        CheckKind::PlausibilityRange => {
            let declared = snapshot.manifest().field(fields[0]).and_then(|f| f.numeric_range);
            let min = cfg.min.clone().or(declared.map(|r| Bound::Number(r[0])));
            let max = cfg.max.clone().or(declared.map(|r| Bound::Number(r[1])));
            let (Some(min), Some(max)) = (min, max) else {
                return Err(AssessError::MissingConfig("min and max".into()));
            };
            plausibility_range(ctx, fields[0], &min, &max)
        }
        CheckKind::PlausibilityTemporal => plausibility_temporal(ctx, fields[0], fields[1]),
        CheckKind::Timeliness => {
            let max_lag = cfg.max_lag.ok_or_else(|| AssessError::MissingConfig("max_lag".into()))?;
            let (e, a) = (fields[1], fields[0]);
            let ctx = Context { entry_field: e, ..ctx };
            timeliness(ctx, a, e, max_lag)
        }
        CheckKind::DegeneracyByActor => degeneracy(
            &def.id,
            snapshot,
            fields[0],
            subset,
            cfg.min_records.unwrap_or(DEFAULT_MIN_RECORDS),
            cfg.max_dominant_share.unwrap_or(DEFAULT_MAX_DOMINANT_SHARE),
        ),
        CheckKind::MappingSuccess => unreachable!("handled above"),
    }
}

/// Runs one definition; configuration and data errors become an `Errored` outcome.
pub fn run_check(def: &CheckDefinition, snapshots: &[DatasetSnapshot]) -> CheckOutcome {
    run_check_inner(def, snapshots).unwrap_or_else(|e| CheckOutcome::errored(def, &e))
}

/// Runs every definition independently, in definition order.
pub fn run_suite(defs: &[CheckDefinition], snapshots: &[DatasetSnapshot]) -> Vec<CheckOutcome> {
    defs.iter().map(|def| run_check(def, snapshots)).collect()
}
