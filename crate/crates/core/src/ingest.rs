//! Dataset manifests and CSV extracts.
//!
//! Loading never rejects a row because of its content: cells that match a
//! missing sentinel become [`Cell::Missing`] and cells that fail type
//! coercion become [`Cell::Invalid`], which conformance checks count later.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest schema violation: {0}")]
    SchemaViolation(String),
    #[error("{context} references unknown column `{column}`")]
    DanglingColumnReference { context: String, column: String },
    #[error("duplicate field name `{0}`")]
    DuplicateFieldName(String),
    #[error("table has no column `{0}`")]
    MissingColumn(String),
    #[error("malformed header: {0}")]
    HeaderMalformed(String),
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SemanticType {
    Code,
    Category,
    Text,
    Number,
    Date,
    Timestamp,
}

impl SemanticType {
    pub fn is_temporal(self) -> bool {
        matches!(self, SemanticType::Date | SemanticType::Timestamp)
    }
}

/// How values of a field come into existence at the point of generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntryMode {
    /// The EHR constrains entry to a code list or pattern.
    EhrEnforced,
    /// The author may type any value.
    FreeEntry,
    /// Produced by the EHR itself (timestamps, calculations).
    AutoGenerated,
    /// Captured by a device such as a wearable.
    DeviceGenerated,
}

impl fmt::Display for EntryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    SourceExtract,
    TransformedExtract,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A field is required only on rows where `field` holds one of `values`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCondition {
    pub field: String,
    pub values: BTreeSet<String>,
}

impl fmt::Display for PolicyCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let values: Vec<&str> = self.values.iter().map(String::as_str).collect();
        write!(f, "{} in {{{}}}", self.field, values.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub semantic_type: SemanticType,
    pub entry_mode: EntryMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generating_actor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_range: Option<[f64; 2]>,
    /// Regular expression a value must match in full.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_pattern: Option<String>,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_condition: Option<PolicyCondition>,
}

/// Raw values read as missing when a manifest declares none: empty, `NULL`, `NA`.
pub fn default_sentinels() -> BTreeSet<String> {
    ["", "NULL", "NA"].into_iter().map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub stage: Stage,
    pub fields: Vec<FieldSpec>,
    /// Column used to pair rows across source and transformed extracts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_column: Option<String>,
    /// Column naming the individual who authored each record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_timestamp_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability_timestamp_column: Option<String>,
    #[serde(default = "default_sentinels")]
    pub missing_sentinels: BTreeSet<String>,
}

impl DatasetManifest {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.dataset_id.is_empty() {
            return Err(IngestError::SchemaViolation("dataset_id must not be empty".into()));
        }
        let mut seen = HashSet::new();
        for field in &self.fields {
            if field.name.is_empty() {
                return Err(IngestError::SchemaViolation("field name must not be empty".into()));
            }
            if !seen.insert(field.name.as_str()) {
                return Err(IngestError::DuplicateFieldName(field.name.clone()));
            }
        }
        for field in &self.fields {
            if field.entry_mode == EntryMode::EhrEnforced
                && field.allowed_values.is_none()
                && field.format_pattern.is_none()
            {
                return Err(IngestError::SchemaViolation(format!(
                    "field `{}` is EhrEnforced but declares neither allowed_values nor format_pattern",
                    field.name
                )));
            }
            if let Some(pattern) = &field.format_pattern {
                Regex::new(pattern).map_err(|e| {
                    IngestError::SchemaViolation(format!("field `{}` format_pattern: {e}", field.name))
                })?;
            }
            if let Some([min, max]) = field.numeric_range {
                if !(min.is_finite() && max.is_finite()) || min > max {
                    return Err(IngestError::SchemaViolation(format!(
                        "field `{}` numeric_range must be finite with min <= max",
                        field.name
                    )));
                }
            }
            if let Some(cond) = &field.policy_condition {
                if self.field(&cond.field).is_none() {
                    return Err(IngestError::DanglingColumnReference {
                        context: format!("policy_condition of `{}`", field.name),
                        column: cond.field.clone(),
                    });
                }
            }
        }
        let refs = [
            ("key_column", &self.key_column),
            ("actor_id_column", &self.actor_id_column),
            ("record_timestamp_column", &self.record_timestamp_column),
            ("availability_timestamp_column", &self.availability_timestamp_column),
        ];
        for (context, column) in refs {
            if let Some(column) = column {
                if self.field(column).is_none() {
                    return Err(IngestError::DanglingColumnReference {
                        context: context.to_string(),
                        column: column.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a manifest document (JSON, unknown keys rejected).
pub fn load_manifest(bytes: &[u8]) -> Result<DatasetManifest, IngestError> {
    let manifest: DatasetManifest =
        serde_json::from_slice(bytes).map_err(|e| IngestError::SchemaViolation(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Number(f64),
    Date(NaiveDate),
    Timestamp(DateTime<Utc>),
}

impl Value {
    /// Seconds since the epoch for temporal values; dates count from midnight UTC.
    pub fn epoch_seconds(&self) -> Option<i64> {
        match self {
            Value::Date(d) => Some(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp()),
            Value::Timestamp(t) => Some(t.timestamp()),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Number(n) => write!(f, "{n}"),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Value::Timestamp(t) => write!(f, "{}", t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    /// Raw text that failed coercion to the field's type.
    Invalid(String),
    Valid(Value),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            Cell::Valid(v) => Some(v),
            _ => None,
        }
    }

    /// Text used to compare non-missing cells, e.g. when looking for a
    /// dominant value.
    pub fn key(&self) -> Option<String> {
        match self {
            Cell::Missing => None,
            Cell::Invalid(raw) => Some(raw.clone()),
            Cell::Valid(v) => Some(v.to_string()),
        }
    }
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    let b = raw.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok()
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    if !raw.as_bytes().get(4).is_some_and(|&b| b == b'-') {
        return None;
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|t| t.and_utc())
}

/// Coerces raw text to a field's semantic type. Dates and timestamps accept
/// ISO-8601 only; timestamps without an offset are taken as UTC.
pub fn coerce(raw: &str, ty: SemanticType) -> Cell {
    let value = match ty {
        SemanticType::Code | SemanticType::Category | SemanticType::Text => {
            Some(Value::Text(raw.to_string()))
        }
        SemanticType::Number => raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|n| n.is_finite())
            .map(Value::Number),
        SemanticType::Date => parse_date(raw).map(Value::Date),
        SemanticType::Timestamp => parse_timestamp(raw).map(Value::Timestamp),
    };
    match value {
        Some(v) => Cell::Valid(v),
        None => Cell::Invalid(raw.to_string()),
    }
}

/// Immutable, typed view of one extract.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSnapshot {
    manifest: DatasetManifest,
    row_count: usize,
    /// One column per manifest field, in manifest order.
    columns: Vec<Vec<Cell>>,
}

impl DatasetSnapshot {
    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column(&self, field: &str) -> Option<&[Cell]> {
        self.manifest.field_index(field).map(|i| self.columns[i].as_slice())
    }

    pub fn cell(&self, field: &str, row: usize) -> Option<&Cell> {
        self.column(field).and_then(|c| c.get(row))
    }

    /// Rows whose text failed coercion, with the raw text.
    pub fn coercion_failures(&self, field: &str) -> Vec<(usize, &str)> {
        self.column(field)
            .map(|col| {
                col.iter()
                    .enumerate()
                    .filter_map(|(i, c)| match c {
                        Cell::Invalid(raw) => Some((i, raw.as_str())),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// (typed, missing, invalid) counts for a field.
    pub fn cell_counts(&self, field: &str) -> Option<(usize, usize, usize)> {
        self.column(field).map(|col| {
            col.iter().fold((0, 0, 0), |(v, m, i), c| match c {
                Cell::Valid(_) => (v + 1, m, i),
                Cell::Missing => (v, m + 1, i),
                Cell::Invalid(_) => (v, m, i + 1),
            })
        })
    }

    /// Builds a snapshot whose rows are `order[i]` of this one. Used to check
    /// row-order invariance.
    pub fn permuted(&self, order: &[usize]) -> DatasetSnapshot {
        assert_eq!(order.len(), self.row_count, "permutation length");
        DatasetSnapshot {
            manifest: self.manifest.clone(),
            row_count: self.row_count,
            columns: self
                .columns
                .iter()
                .map(|col| order.iter().map(|&r| col[r].clone()).collect())
                .collect(),
        }
    }

    /// Value of the actor id column for a row, if declared and present.
    pub fn actor_id(&self, row: usize) -> Option<String> {
        let column = self.manifest.actor_id_column.as_deref()?;
        self.cell(column, row)?.value().map(|v| v.to_string())
    }

    /// Renders the snapshot back to CSV. Missing cells are written as empty.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer
            .write_record(self.manifest.fields.iter().map(|f| f.name.as_str()))
            .expect("in-memory write");
        for row in 0..self.row_count {
            let record: Vec<String> = self
                .columns
                .iter()
                .map(|col| match &col[row] {
                    Cell::Missing => String::new(),
                    Cell::Invalid(raw) => raw.clone(),
                    Cell::Valid(v) => v.to_string(),
                })
                .collect();
            writer.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Loads a CSV extract (UTF-8, header row, RFC 4180 quoting) against a manifest.
pub fn load_dataset(bytes: &[u8], manifest: &DatasetManifest) -> Result<DatasetSnapshot, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::HeaderMalformed(e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::HeaderMalformed("empty header row".into()));
    }
    let mut positions: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in headers.iter().enumerate() {
        if positions.insert(name, i).is_some() {
            return Err(IngestError::HeaderMalformed(format!("duplicate column `{name}`")));
        }
    }
    let indices = manifest
        .fields
        .iter()
        .map(|f| {
            positions
                .get(f.name.as_str())
                .copied()
                .ok_or_else(|| IngestError::MissingColumn(f.name.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut columns: Vec<Vec<Cell>> = vec![Vec::new(); manifest.fields.len()];
    let mut row_count = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::MalformedRow { row, message: e.to_string() })?;
        for ((field, &idx), column) in manifest.fields.iter().zip(&indices).zip(columns.iter_mut()) {
            let raw = record.get(idx).unwrap_or("");
            let cell = if manifest.missing_sentinels.contains(raw) {
                Cell::Missing
            } else {
                coerce(raw, field.semantic_type)
            };
            column.push(cell);
        }
        row_count += 1;
    }
    Ok(DatasetSnapshot { manifest: manifest.clone(), row_count, columns })
}
