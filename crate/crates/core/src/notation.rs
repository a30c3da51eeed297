//! Provenance assertion notation.
//!
//! Grammar of one assertion (one per line in assertion files):
//!
//! ```text
//! assertion = org "-" phase "-" actor SP "(" label ":" SP value ")"
//! org       = "DGO" | "DRO"
//! phase     = "DG" | "DT" | "DR"
//! actor     = UPPER *ALNUM
//! label     = UPPER *ALNUM
//! value     = number "%" [SP text] | text
//! number    = 1*DIGIT ["." 1*DIGIT]
//! text      = 1*(any character except ")" and control characters)
//! ```
//!
//! Lenient mode also accepts the short form `phase "-" actor ...`, in which
//! case the organization is DGO. Percentages are stored as exact fractions of
//! one; the number of decimals written is kept as the display precision.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{self, Fraction, MAX_PRECISION};
use crate::taxonomy::{
    is_identifier, ActorRegistry, LifecycleLocus, OrgPhase, Organization, Parameter, Phase,
    TaxonomyError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotationError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error(transparent)]
    Locus(#[from] TaxonomyError),
    #[error("actor `{given}` must be written as `{canonical}` in strict mode")]
    NonCanonicalActor { given: String, canonical: String },
    #[error("label `{0}` does not resolve to a data quality parameter")]
    UnresolvedLabel(String),
    #[error("percentage {value}% at byte {offset} exceeds 100%")]
    PercentOutOfRange { offset: usize, value: String },
}

impl NotationError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            NotationError::Syntax { offset, .. } | NotationError::PercentOutOfRange { offset, .. } => {
                Some(*offset)
            }
            _ => None,
        }
    }

    fn syntax(offset: usize, expected: impl Into<String>) -> Self {
        NotationError::Syntax { offset, expected: expected.into() }
    }
}

/// Maps assertion labels to core parameters.
///
/// Defaults: every core parameter name maps to itself, `Policy` maps to
/// Governance and `Mapping` maps to Interoperability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    entries: BTreeMap<String, Parameter>,
}

impl Default for LabelMap {
    fn default() -> Self {
        let mut entries: BTreeMap<String, Parameter> = crate::taxonomy::core_parameters()
            .iter()
            .map(|p| (p.name().to_string(), *p))
            .collect();
        entries.insert("Policy".into(), Parameter::Governance);
        entries.insert("Mapping".into(), Parameter::Interoperability);
        LabelMap { entries }
    }
}

impl LabelMap {
    pub fn empty() -> Self {
        LabelMap { entries: BTreeMap::new() }
    }

    pub fn with(mut self, label: impl Into<String>, parameter: Parameter) -> Self {
        self.entries.insert(label.into(), parameter);
        self
    }

    pub fn without(mut self, label: &str) -> Self {
        self.entries.remove(label);
        self
    }

    pub fn resolve(&self, label: &str) -> Option<Parameter> {
        self.entries.get(label).copied()
    }

    /// Loads overrides from a JSON object of `label -> parameter name`,
    /// layered over the defaults.
    pub fn from_json(bytes: &[u8]) -> Result<Self, String> {
        let raw: BTreeMap<String, Parameter> =
            serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        let mut map = LabelMap::default();
        for (label, parameter) in raw {
            if !is_identifier(&label) {
                return Err(format!("`{label}` is not a valid label"));
            }
            map.entries.insert(label, parameter);
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    /// Fraction of one; 94% is stored as 47/50.
    #[serde(default, with = "rational::serde_opt_fraction", skip_serializing_if = "Option::is_none")]
    pub fraction: Option<Fraction>,
    /// Decimals used when rendering the percentage.
    #[serde(default)]
    pub display_precision: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
}

impl Measurement {
    pub fn percent(fraction: Fraction) -> Self {
        Measurement { fraction: Some(fraction), display_precision: 0, qualifier: None }
    }

    pub fn text(qualifier: impl Into<String>) -> Self {
        Measurement { fraction: None, display_precision: 0, qualifier: Some(qualifier.into()) }
    }

    pub fn with_qualifier(mut self, qualifier: impl Into<String>) -> Self {
        self.qualifier = Some(qualifier.into());
        self
    }

    pub fn with_precision(mut self, precision: u32) -> Self {
        self.display_precision = precision;
        self
    }

    /// The value as written in notation, e.g. `92% success`.
    pub fn render(&self) -> String {
        match (&self.fraction, &self.qualifier) {
            (Some(f), Some(q)) => format!("{}% {q}", rational::format_percent(*f, self.display_precision)),
            (Some(f), None) => format!("{}%", rational::format_percent(*f, self.display_precision)),
            (None, Some(q)) => q.clone(),
            (None, None) => String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_description: Option<String>,
}

/// Text of an assertion exactly as it was read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceText {
    pub text: String,
    pub actor: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "AssertionRecord", try_from = "AssertionRecord")]
pub struct DQAssertion {
    pub locus: LifecycleLocus,
    /// Label as written.
    pub label: String,
    pub parameter: Option<Parameter>,
    pub measurement: Measurement,
    pub scope: Option<Scope>,
    pub method_id: Option<String>,
    pub asserted_at: Option<DateTime<Utc>>,
    /// Present on parsed assertions only.
    pub source: Option<SourceText>,
}

impl DQAssertion {
    pub fn new(locus: LifecycleLocus, label: impl Into<String>, measurement: Measurement) -> Self {
        let label = label.into();
        DQAssertion {
            parameter: LabelMap::default().resolve(&label),
            locus,
            label,
            measurement,
            scope: None,
            method_id: None,
            asserted_at: None,
            source: None,
        }
    }

    /// The assertion with its parse-time source text dropped.
    pub fn without_source(&self) -> Self {
        DQAssertion { source: None, ..self.clone() }
    }

    pub fn notation(&self) -> String {
        serialize_assertion(self)
    }
}

impl fmt::Display for DQAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_assertion(self))
    }
}

/// Machine-readable form of an assertion: the canonical notation string next
/// to its structured fields. The notation is informational on input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssertionRecord {
    #[serde(default)]
    notation: String,
    locus: LifecycleLocus,
    label: String,
    parameter: Option<Parameter>,
    #[serde(with = "rational::serde_opt_fraction", default)]
    fraction: Option<Fraction>,
    #[serde(default)]
    display_precision: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qualifier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scope: Option<Scope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    method_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asserted_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceText>,
}

impl From<DQAssertion> for AssertionRecord {
    fn from(a: DQAssertion) -> Self {
        AssertionRecord {
            notation: serialize_assertion(&a),
            locus: a.locus,
            label: a.label,
            parameter: a.parameter,
            fraction: a.measurement.fraction,
            display_precision: a.measurement.display_precision,
            qualifier: a.measurement.qualifier,
            scope: a.scope,
            method_id: a.method_id,
            asserted_at: a.asserted_at,
            source: a.source,
        }
    }
}

impl TryFrom<AssertionRecord> for DQAssertion {
    type Error = String;

    fn try_from(r: AssertionRecord) -> Result<Self, Self::Error> {
        if r.fraction.is_none() && r.qualifier.is_none() {
            return Err("assertion needs a fraction or a qualifier".into());
        }
        if r.display_precision > MAX_PRECISION {
            return Err(format!("display_precision exceeds {MAX_PRECISION}"));
        }
        Ok(DQAssertion {
            locus: r.locus,
            label: r.label,
            parameter: r.parameter,
            measurement: Measurement {
                fraction: r.fraction,
                display_precision: r.display_precision,
                qualifier: r.qualifier,
            },
            scope: r.scope,
            method_id: r.method_id,
            asserted_at: r.asserted_at,
            source: r.source,
        })
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn expect(&mut self, byte: u8, what: &str) -> Result<(), NotationError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(NotationError::syntax(self.pos, what))
        }
    }

    fn identifier(&mut self, what: &str) -> Result<&'a str, NotationError> {
        if !self.peek().is_some_and(|b| b.is_ascii_uppercase()) {
            return Err(NotationError::syntax(self.pos, what));
        }
        Ok(self.take_while(|b| b.is_ascii_alphanumeric()))
    }
}

struct ParsedValue {
    fraction: Option<Fraction>,
    precision: u32,
    qualifier: Option<String>,
}

/// Parses `1*DIGIT ["." 1*DIGIT] "%"` at the start of `value`; returns `None`
/// when the value does not begin with a percentage.
fn parse_percent(value: &str, base: usize) -> Result<Option<(Fraction, u32, usize)>, NotationError> {
    let bytes = value.as_bytes();
    let int_end = bytes.iter().position(|b| !b.is_ascii_digit()).unwrap_or(bytes.len());
    if int_end == 0 {
        return Ok(None);
    }
    let mut end = int_end;
    let mut frac_digits = "";
    if bytes.get(end) == Some(&b'.') {
        let frac_len = bytes[end + 1..].iter().take_while(|b| b.is_ascii_digit()).count();
        if frac_len == 0 {
            return Ok(None);
        }
        frac_digits = &value[end + 1..end + 1 + frac_len];
        end += 1 + frac_len;
    }
    if bytes.get(end) != Some(&b'%') {
        return Ok(None);
    }
    let written = &value[..end];
    let int_digits = value[..int_end].trim_start_matches('0');
    if int_digits.len() > 3 {
        return Err(NotationError::PercentOutOfRange { offset: base, value: written.to_string() });
    }
    if frac_digits.len() > MAX_PRECISION as usize {
        return Err(NotationError::syntax(
            base + int_end + 1 + MAX_PRECISION as usize,
            format!("at most {MAX_PRECISION} decimals"),
        ));
    }
    let precision = frac_digits.len() as u32;
    let int: i128 = if int_digits.is_empty() { 0 } else { int_digits.parse().expect("digits") };
    let frac: i128 = if frac_digits.is_empty() { 0 } else { frac_digits.parse().expect("digits") };
    let scale = 10i128.pow(precision);
    let fraction = Fraction::new(int * scale + frac, 100 * scale);
    if fraction > Fraction::one() {
        return Err(NotationError::PercentOutOfRange { offset: base, value: written.to_string() });
    }
    Ok(Some((fraction, precision, end + 1)))
}

fn check_text(text: &str, base: usize) -> Result<(), NotationError> {
    if text.is_empty() {
        return Err(NotationError::syntax(base, "measurement text"));
    }
    if let Some((i, _)) = text.char_indices().find(|(_, c)| c.is_control()) {
        return Err(NotationError::syntax(base + i, "printable text"));
    }
    Ok(())
}

fn parse_value(value: &str, base: usize) -> Result<ParsedValue, NotationError> {
    match parse_percent(value, base)? {
        Some((fraction, precision, consumed)) => {
            let rest = &value[consumed..];
            let qualifier = if rest.is_empty() {
                None
            } else {
                let Some(text) = rest.strip_prefix(' ') else {
                    return Err(NotationError::syntax(base + consumed, "space or `)`"));
                };
                check_text(text, base + consumed + 1)?;
                Some(text.to_string())
            };
            Ok(ParsedValue { fraction: Some(fraction), precision, qualifier })
        }
        None => {
            check_text(value, base)?;
            Ok(ParsedValue { fraction: None, precision: 0, qualifier: Some(value.to_string()) })
        }
    }
}

/// Parses a single assertion using the default label map.
pub fn parse_assertion(
    text: &str,
    registry: &ActorRegistry,
    mode: ParseMode,
) -> Result<DQAssertion, NotationError> {
    parse_assertion_with(text, registry, &LabelMap::default(), mode)
}

/// Like [`parse_assertion`] for untrusted bytes; invalid UTF-8 is a syntax
/// error at the first invalid byte.
pub fn parse_assertion_bytes(
    bytes: &[u8],
    registry: &ActorRegistry,
    mode: ParseMode,
) -> Result<DQAssertion, NotationError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| NotationError::syntax(e.valid_up_to(), "valid UTF-8"))?;
    parse_assertion(text, registry, mode)
}

pub fn parse_assertion_with(
    text: &str,
    registry: &ActorRegistry,
    labels: &LabelMap,
    mode: ParseMode,
) -> Result<DQAssertion, NotationError> {
    let mut cur = Cursor { text, pos: 0 };

    let first = cur.take_while(|b| b.is_ascii_uppercase());
    let (organization, phase) = match first {
        "DGO" | "DRO" => {
            let org: Organization = first.parse().expect("organization code");
            cur.expect(b'-', "`-`")?;
            let phase_start = cur.pos;
            let phase_text = cur.take_while(|b| b.is_ascii_uppercase());
            let phase: Phase = phase_text
                .parse()
                .map_err(|_| NotationError::syntax(phase_start, "phase code DG, DT or DR"))?;
            (org, phase)
        }
        "DG" | "DT" | "DR" if mode == ParseMode::Lenient => {
            (Organization::Dgo, first.parse().expect("phase code"))
        }
        _ => {
            let expected = match mode {
                ParseMode::Strict => "organization code DGO or DRO",
                ParseMode::Lenient => "organization code DGO or DRO, or phase code",
            };
            return Err(NotationError::syntax(0, expected));
        }
    };
    cur.expect(b'-', "`-`")?;
    let actor = cur.identifier("actor name")?;
    cur.expect(b' ', "space")?;
    cur.expect(b'(', "`(`")?;
    let label = cur.identifier("label")?;
    cur.expect(b':', "`:`")?;
    cur.expect(b' ', "space")?;

    let value_start = cur.pos;
    let close = text[value_start..]
        .find(')')
        .map(|i| value_start + i)
        .ok_or_else(|| NotationError::syntax(text.len(), "`)`"))?;
    if close + 1 != text.len() {
        return Err(NotationError::syntax(close + 1, "end of assertion"));
    }
    let raw_value = &text[value_start..close];
    let value = parse_value(raw_value, value_start)?;

    let pair = OrgPhase::new(organization, phase)?;
    let resolved = registry
        .resolve(actor)
        .ok_or_else(|| TaxonomyError::UnknownActor(actor.to_string()))?;
    if mode == ParseMode::Strict && resolved.canonical_name != actor {
        return Err(NotationError::NonCanonicalActor {
            given: actor.to_string(),
            canonical: resolved.canonical_name.clone(),
        });
    }
    let locus = crate::taxonomy::validate_locus(pair.organization(), pair.phase(), actor, registry)?;
    let parameter = labels.resolve(label);
    if mode == ParseMode::Strict && parameter.is_none() {
        return Err(NotationError::UnresolvedLabel(label.to_string()));
    }

    Ok(DQAssertion {
        locus,
        label: label.to_string(),
        parameter,
        measurement: Measurement {
            fraction: value.fraction,
            display_precision: value.precision,
            qualifier: value.qualifier,
        },
        scope: None,
        method_id: None,
        asserted_at: None,
        source: Some(SourceText {
            text: text.to_string(),
            actor: actor.to_string(),
            value: raw_value.to_string(),
        }),
    })
}

/// Canonical form `ORG-PHASE-Actor (Label: value)`.
pub fn serialize_assertion(a: &DQAssertion) -> String {
    format!("{} ({}: {})", a.locus, a.label, a.measurement.render())
}

/// One parsed line of an assertion file.
#[derive(Debug, Clone)]
pub struct AssertionLine {
    /// 1-based.
    pub line: usize,
    pub text: String,
    pub result: Result<DQAssertion, NotationError>,
}

/// Parses an assertion file: one assertion per line, blank lines ignored,
/// lines starting with `#` are comments.
pub fn parse_assertion_file(
    text: &str,
    registry: &ActorRegistry,
    labels: &LabelMap,
    mode: ParseMode,
) -> Vec<AssertionLine> {
    text.split('\n')
        .enumerate()
        .filter_map(|(idx, line)| {
            let line = line.strip_suffix('\r').unwrap_or(line).trim_end();
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                return None;
            }
            Some(AssertionLine {
                line: idx + 1,
                text: line.to_string(),
                result: parse_assertion_with(line, registry, labels, mode),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FindingCode {
    InvalidLocus,
    NonCanonicalActor,
    InvalidLabel,
    UnresolvedLabel,
    LabelParameterMismatch,
    EmptyMeasurement,
    PercentOutOfRange,
    PrecisionTooLarge,
    InvalidQualifier,
    AmbiguousQualifier,
    Syntax,
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub message: String,
}

impl Finding {
    fn error(code: FindingCode, message: impl Into<String>) -> Self {
        Finding { severity: Severity::Error, code, message: message.into() }
    }

    fn warning(code: FindingCode, message: impl Into<String>) -> Self {
        Finding { severity: Severity::Warning, code, message: message.into() }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.severity, self.code, self.message)
    }
}

impl From<&NotationError> for Finding {
    fn from(err: &NotationError) -> Self {
        let code = match err {
            NotationError::Syntax { .. } => FindingCode::Syntax,
            NotationError::Locus(_) => FindingCode::InvalidLocus,
            NotationError::NonCanonicalActor { .. } => FindingCode::NonCanonicalActor,
            NotationError::UnresolvedLabel(_) => FindingCode::UnresolvedLabel,
            NotationError::PercentOutOfRange { .. } => FindingCode::PercentOutOfRange,
        };
        Finding::error(code, err.to_string())
    }
}

/// Checks an assertion against the taxonomy and measurement invariants using
/// the default label map.
pub fn validate_assertion(a: &DQAssertion, registry: &ActorRegistry) -> Vec<Finding> {
    validate_assertion_with(a, registry, &LabelMap::default())
}

pub fn validate_assertion_with(
    a: &DQAssertion,
    registry: &ActorRegistry,
    labels: &LabelMap,
) -> Vec<Finding> {
    let mut findings = Vec::new();

    if let Err(e) = a.locus.check(registry) {
        findings.push(Finding::error(FindingCode::InvalidLocus, e.to_string()));
    } else if let Some(actor) = registry.resolve(a.locus.actor()) {
        if actor.canonical_name != a.locus.actor() {
            findings.push(Finding::warning(
                FindingCode::NonCanonicalActor,
                format!("actor `{}` is an alias of `{}`", a.locus.actor(), actor.canonical_name),
            ));
        }
    }

    if !is_identifier(&a.label) {
        findings.push(Finding::error(
            FindingCode::InvalidLabel,
            format!("label `{}` is not an identifier", a.label),
        ));
    }
    let mapped = labels.resolve(&a.label);
    match (a.parameter, mapped) {
        (None, None) => findings.push(Finding::warning(
            FindingCode::UnresolvedLabel,
            format!("label `{}` does not resolve to a core parameter", a.label),
        )),
        (Some(p), Some(m)) if p != m => findings.push(Finding::error(
            FindingCode::LabelParameterMismatch,
            format!("label `{}` maps to {m}, not {p}", a.label),
        )),
        (Some(p), None) => findings.push(Finding::error(
            FindingCode::LabelParameterMismatch,
            format!("label `{}` has no mapping to {p}", a.label),
        )),
        _ => {}
    }

    let m = &a.measurement;
    if m.fraction.is_none() && m.qualifier.is_none() {
        findings.push(Finding::error(
            FindingCode::EmptyMeasurement,
            "measurement has neither a percentage nor qualifier text",
        ));
    }
    if let Some(f) = m.fraction {
        if f < Fraction::zero() || f > Fraction::one() {
            findings.push(Finding::error(
                FindingCode::PercentOutOfRange,
                format!("{}% is outside 0..100%", rational::format_exact(f * Fraction::from_integer(100))),
            ));
        }
    }
    if m.display_precision > MAX_PRECISION {
        findings.push(Finding::error(
            FindingCode::PrecisionTooLarge,
            format!("display precision {} exceeds {MAX_PRECISION}", m.display_precision),
        ));
    }
    if let Some(q) = &m.qualifier {
        if q.is_empty() || q.contains(')') || q.chars().any(char::is_control) {
            findings.push(Finding::error(
                FindingCode::InvalidQualifier,
                "qualifier text must be non-empty and free of `)` and control characters",
            ));
        } else if m.fraction.is_none() && matches!(parse_percent(q, 0), Ok(Some(_)) | Err(_)) {
            findings.push(Finding::warning(
                FindingCode::AmbiguousQualifier,
                "qualifier text starts with a percentage and would be read back as a number",
            ));
        }
    }
    findings
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}
