// SPDX-License-Identifier: Apache-2.0

//! The log schema: entry types and their categories, the identifying fields
//! shared by every entry, and the per-parameter encoding specifications.
//!
//! A schema is the single source of truth for the numeric layout of a record.
//! It is validated as data ([`validate_schema`] returns a report rather than
//! failing), fingerprinted over a canonical serialization, and persisted as a
//! JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "identifying_fields": [{ "name": "server", "vocabulary": ["srv1", "srv2"] }],
//!   "labels": ["no_connection"],
//!   "entry_types": [{
//!     "name": "error",
//!     "categories": [{
//!       "name": "no_connection",
//!       "intrinsic_label": "no_connection",
//!       "params": [{ "name": "attempts", "level": "ratio", "encoding": "minmax",
//!                    "bounds": { "min": 0, "max": 10 } }]
//!     }]
//!   }]
//! }
//! ```
//!
//! What the wider literature calls an entry "class" is called a *category*
//! here.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Stevens level of measurement of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Nominal,
    OrdinalDichotomous,
    Ordinal,
    Interval,
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    OneHot,
    Bit,
    Helmert,
    BackwardDifference,
    OrthogonalPolynomial,
    Minmax,
    Sigmoid,
    Tanh,
    QuantileGaussian,
}

impl Encoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::OneHot => "one_hot",
            Encoding::Bit => "bit",
            Encoding::Helmert => "helmert",
            Encoding::BackwardDifference => "backward_difference",
            Encoding::OrthogonalPolynomial => "orthogonal_polynomial",
            Encoding::Minmax => "minmax",
            Encoding::Sigmoid => "sigmoid",
            Encoding::Tanh => "tanh",
            Encoding::QuantileGaussian => "quantile_gaussian",
        }
    }

    /// Whether values of this encoding are vocabulary tokens.
    pub fn is_categorical(self) -> bool {
        matches!(
            self,
            Encoding::OneHot
                | Encoding::Bit
                | Encoding::Helmert
                | Encoding::BackwardDifference
                | Encoding::OrthogonalPolynomial
        )
    }

    pub fn is_contrast(self) -> bool {
        matches!(
            self,
            Encoding::Helmert | Encoding::BackwardDifference | Encoding::OrthogonalPolynomial
        )
    }

    /// Encodings permitted for a level of measurement.
    pub fn allowed_for(level: Level) -> &'static [Encoding] {
        match level {
            Level::Nominal => &[Encoding::OneHot],
            Level::OrdinalDichotomous => &[Encoding::Bit],
            Level::Ordinal => &[
                Encoding::Helmert,
                Encoding::BackwardDifference,
                Encoding::OrthogonalPolynomial,
            ],
            Level::Interval | Level::Ratio => &[
                Encoding::Minmax,
                Encoding::Sigmoid,
                Encoding::Tanh,
                Encoding::QuantileGaussian,
            ],
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Bounds { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterScale {
    pub center: f64,
    pub scale: f64,
}

/// One parameter of an entry category: its level of measurement, encoding,
/// and the constants the encoding needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParameterSpecDoc")]
pub struct ParameterSpec {
    pub name: String,
    pub level: Level,
    pub encoding: Encoding,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_scale: Option<CenterScale>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterSpecDoc {
    name: String,
    level: Level,
    encoding: Encoding,
    vocabulary: Option<Vec<String>>,
    bounds: Option<Bounds>,
    center_scale: Option<CenterScale>,
}

impl TryFrom<ParameterSpecDoc> for ParameterSpec {
    type Error = String;

    fn try_from(doc: ParameterSpecDoc) -> Result<Self, String> {
        let constants = [
            doc.vocabulary.is_some(),
            doc.bounds.is_some(),
            doc.center_scale.is_some(),
        ];
        if constants.iter().filter(|c| **c).count() > 1 {
            return Err(format!(
                "parameter `{}` must carry exactly one of `vocabulary`, `bounds`, `center_scale`",
                doc.name
            ));
        }
        Ok(ParameterSpec {
            name: doc.name,
            level: doc.level,
            encoding: doc.encoding,
            vocabulary: doc.vocabulary,
            bounds: doc.bounds,
            center_scale: doc.center_scale,
        })
    }
}

impl ParameterSpec {
    pub fn categorical(name: &str, level: Level, encoding: Encoding, vocabulary: &[&str]) -> Self {
        ParameterSpec {
            name: name.to_string(),
            level,
            encoding,
            vocabulary: Some(vocabulary.iter().map(|s| s.to_string()).collect()),
            bounds: None,
            center_scale: None,
        }
    }

    pub fn minmax(name: &str, level: Level, min: f64, max: f64) -> Self {
        ParameterSpec {
            name: name.to_string(),
            level,
            encoding: Encoding::Minmax,
            vocabulary: None,
            bounds: Some(Bounds { min, max }),
            center_scale: None,
        }
    }

    pub fn squashed(name: &str, level: Level, encoding: Encoding, center: f64, scale: f64) -> Self {
        ParameterSpec {
            name: name.to_string(),
            level,
            encoding,
            vocabulary: None,
            bounds: None,
            center_scale: Some(CenterScale { center, scale }),
        }
    }

    pub fn vocab(&self) -> &[String] {
        self.vocabulary.as_deref().unwrap_or(&[])
    }

    /// Number of encoded columns this parameter occupies.
    pub fn width(&self) -> usize {
        let k = self.vocab().len();
        match self.encoding {
            Encoding::OneHot => k,
            Encoding::Bit => 1,
            Encoding::Helmert | Encoding::BackwardDifference | Encoding::OrthogonalPolynomial => k.saturating_sub(1),
            Encoding::Minmax | Encoding::Sigmoid | Encoding::Tanh | Encoding::QuantileGaussian => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldEncoding {
    #[default]
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyingFieldDef {
    pub name: String,
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub encoding: FieldEncoding,
}

impl IdentifyingFieldDef {
    pub fn new(name: &str, vocabulary: &[&str]) -> Self {
        IdentifyingFieldDef {
            name: name.to_string(),
            vocabulary: vocabulary.iter().map(|s| s.to_string()).collect(),
            encoding: FieldEncoding::OneHot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryCategoryDef {
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParameterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_label: Option<String>,
}

impl EntryCategoryDef {
    pub fn new(name: &str, params: Vec<ParameterSpec>) -> Self {
        EntryCategoryDef {
            name: name.to_string(),
            params,
            intrinsic_label: None,
        }
    }

    pub fn param(&self, name: &str) -> Option<(usize, &ParameterSpec)> {
        self.params.iter().enumerate().find(|(_, p)| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryTypeDef {
    pub name: String,
    pub categories: Vec<EntryCategoryDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSchema {
    pub version: u32,
    pub identifying_fields: Vec<IdentifyingFieldDef>,
    pub entry_types: Vec<EntryTypeDef>,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// Resolved position of a category in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryIndex {
    pub type_index: u32,
    pub category_index: u32,
}

impl fmt::Display for CategoryIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.type_index, self.category_index)
    }
}

impl LogSchema {
    pub fn from_json_str(text: &str, context: &str) -> Result<LogSchema> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("{context}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// Resolves a `(type, category)` pair to its indices and definition.
    pub fn category(&self, type_name: &str, category: &str) -> Result<(CategoryIndex, &EntryCategoryDef)> {
        for (ti, ty) in self.entry_types.iter().enumerate() {
            if ty.name != type_name {
                continue;
            }
            for (ci, cat) in ty.categories.iter().enumerate() {
                if cat.name == category {
                    return Ok((
                        CategoryIndex {
                            type_index: ti as u32,
                            category_index: ci as u32,
                        },
                        cat,
                    ));
                }
            }
        }
        Err(Error::UnknownTypeOrCategory {
            type_name: type_name.to_string(),
            category: category.to_string(),
        })
    }

    pub fn category_at(&self, index: CategoryIndex) -> Option<(&EntryTypeDef, &EntryCategoryDef)> {
        let ty = self.entry_types.get(index.type_index as usize)?;
        let cat = ty.categories.get(index.category_index as usize)?;
        Some((ty, cat))
    }

    /// All categories in schema order.
    pub fn categories(&self) -> impl Iterator<Item = (CategoryIndex, &EntryTypeDef, &EntryCategoryDef)> {
        self.entry_types.iter().enumerate().flat_map(|(ti, ty)| {
            ty.categories.iter().enumerate().map(move |(ci, cat)| {
                (
                    CategoryIndex {
                        type_index: ti as u32,
                        category_index: ci as u32,
                    },
                    ty,
                    cat,
                )
            })
        })
    }

    pub fn identifying_width(&self) -> usize {
        self.identifying_fields.iter().map(|f| f.vocabulary.len()).sum()
    }

    /// Canonical serialization: sorted keys, two-space indentation, LF line
    /// endings, trailing newline.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("schema serializes to JSON");
        let mut out = serde_json::to_string_pretty(&sort_keys(value)).expect("JSON value serializes");
        out.push('\n');
        out
    }

    pub fn fingerprint(&self) -> Result<Fingerprint> {
        let report = validate_schema(self);
        if !report.is_valid() {
            return Err(Error::InvalidSchema(report));
        }
        Ok(self.fingerprint_unchecked())
    }

    pub(crate) fn fingerprint_unchecked(&self) -> Fingerprint {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        Fingerprint(bytes)
    }
}

fn sort_keys(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// 64-bit schema digest, printed as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 8]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for Fingerprint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            context: "fingerprint".into(),
            message: format!("`{s}` is not 16 lowercase hex digits"),
        };
        if s.len() != 16 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(bad());
        }
        let mut bytes = [0u8; 8];
        hex::decode_to_slice(s, &mut bytes).map_err(|_| bad())?;
        Ok(Fingerprint(bytes))
    }
}

pub fn schema_fingerprint(schema: &LogSchema) -> Result<Fingerprint> {
    schema.fingerprint()
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<LogSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LogSchema::from_json_str(&text, &path.display().to_string())
}

pub fn save_schema(schema: &LogSchema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, schema.canonical_json()).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.code).collect()
    }

    fn push(&mut self, code: &'static str, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Names of types, categories, parameters and fields appear in dotted paths
/// and must stay free of separators.
pub(crate) fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

pub fn is_valid_writer_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

fn is_valid_token(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_control)
}

fn check_vocabulary(report: &mut ValidationReport, path: &str, vocab: &[String]) {
    if vocab.is_empty() {
        report.push("EMPTY_VOCABULARY", path, "vocabulary must not be empty");
    }
    let mut seen = HashSet::new();
    for token in vocab {
        if !is_valid_token(token) {
            report.push(
                "INVALID_TOKEN",
                path,
                format!("token {token:?} is empty or has control characters"),
            );
        }
        if !seen.insert(token.as_str()) {
            report.push("DUPLICATE_TOKEN", path, format!("token `{token}` repeated"));
        }
    }
}

fn check_param(report: &mut ValidationReport, path: &str, spec: &ParameterSpec) {
    if !is_valid_name(&spec.name) {
        report.push(
            "INVALID_NAME",
            path,
            format!("parameter name `{}` is not a plain token", spec.name),
        );
    }
    if !Encoding::allowed_for(spec.level).contains(&spec.encoding) {
        report.push(
            "LEVEL_ENCODING_MISMATCH",
            path,
            format!("level {:?} does not admit encoding {}", spec.level, spec.encoding),
        );
    }
    let needs_vocab = spec.encoding.is_categorical();
    let needs_bounds = spec.encoding == Encoding::Minmax;
    let needs_center_scale = matches!(spec.encoding, Encoding::Sigmoid | Encoding::Tanh);

    match (&spec.vocabulary, needs_vocab) {
        (Some(vocab), true) => {
            check_vocabulary(report, path, vocab);
            let k = vocab.len();
            if spec.encoding == Encoding::Bit && k != 2 {
                report.push(
                    "VOCABULARY_SIZE",
                    path,
                    format!("bit encoding needs exactly 2 tokens, got {k}"),
                );
            }
            if spec.encoding.is_contrast() && k < 2 {
                report.push(
                    "VOCABULARY_SIZE",
                    path,
                    format!("contrast coding needs at least 2 tokens, got {k}"),
                );
            }
        }
        (None, true) => report.push(
            "MISSING_VOCABULARY",
            path,
            format!("{} requires `vocabulary`", spec.encoding),
        ),
        (Some(_), false) => report.push(
            "UNEXPECTED_CONSTANTS",
            path,
            format!("{} takes no `vocabulary`", spec.encoding),
        ),
        (None, false) => {}
    }
    match (&spec.bounds, needs_bounds) {
        (Some(b), true) => {
            if !b.min.is_finite() || !b.max.is_finite() {
                report.push("NONFINITE_BOUNDS", path, "bounds must be finite");
            } else if b.min >= b.max {
                report.push(
                    "BOUNDS_ORDER",
                    path,
                    format!("min {} must be below max {}", b.min, b.max),
                );
            }
        }
        (None, true) => report.push("MISSING_BOUNDS", path, "minmax requires `bounds`"),
        (Some(_), false) => report.push(
            "UNEXPECTED_CONSTANTS",
            path,
            format!("{} takes no `bounds`", spec.encoding),
        ),
        (None, false) => {}
    }
    match (&spec.center_scale, needs_center_scale) {
        (Some(cs), true) => {
            if !cs.center.is_finite() || !cs.scale.is_finite() {
                report.push("NONFINITE_BOUNDS", path, "center and scale must be finite");
            } else if cs.scale <= 0.0 {
                report.push(
                    "NONPOSITIVE_SCALE",
                    path,
                    format!("scale {} must be positive", cs.scale),
                );
            }
        }
        (None, true) => report.push(
            "MISSING_CENTER_SCALE",
            path,
            format!("{} requires `center_scale`", spec.encoding),
        ),
        (Some(_), false) => report.push(
            "UNEXPECTED_CONSTANTS",
            path,
            format!("{} takes no `center_scale`", spec.encoding),
        ),
        (None, false) => {}
    }
}

/// Checks every schema invariant. Violations are returned as data; an empty
/// report means the schema is valid.
pub fn validate_schema(schema: &LogSchema) -> ValidationReport {
    let mut report = ValidationReport::default();
    if schema.version == 0 {
        report.push("VERSION_ZERO", "version", "version must be a positive integer");
    }

    let mut field_names = HashSet::new();
    for field in &schema.identifying_fields {
        let path = format!("field:{}", field.name);
        if !is_valid_name(&field.name) {
            report.push(
                "INVALID_NAME",
                &path,
                format!("field name `{}` is not a plain token", field.name),
            );
        }
        if !field_names.insert(field.name.as_str()) {
            report.push(
                "DUPLICATE_FIELD",
                &path,
                format!("identifying field `{}` repeated", field.name),
            );
        }
        check_vocabulary(&mut report, &path, &field.vocabulary);
    }

    let mut labels = HashSet::new();
    for label in &schema.labels {
        if !is_valid_token(label) {
            report.push(
                "INVALID_TOKEN",
                "labels",
                format!("label {label:?} is empty or has control characters"),
            );
        }
        if !labels.insert(label.as_str()) {
            report.push("DUPLICATE_LABEL", "labels", format!("label `{label}` repeated"));
        }
    }

    if schema.entry_types.is_empty() {
        report.push("EMPTY_SCHEMA", "entry_types", "at least one entry type is required");
    }
    let mut type_names = HashSet::new();
    for ty in &schema.entry_types {
        if !is_valid_name(&ty.name) {
            report.push(
                "INVALID_NAME",
                &ty.name,
                format!("type name `{}` is not a plain token", ty.name),
            );
        }
        if !type_names.insert(ty.name.as_str()) {
            report.push("DUPLICATE_TYPE", &ty.name, format!("entry type `{}` repeated", ty.name));
        }
        if ty.categories.is_empty() {
            report.push("EMPTY_TYPE", &ty.name, "entry type needs at least one category");
        }
        let mut cat_names = HashSet::new();
        for cat in &ty.categories {
            let path = format!("{}.{}", ty.name, cat.name);
            if !is_valid_name(&cat.name) {
                report.push(
                    "INVALID_NAME",
                    &path,
                    format!("category name `{}` is not a plain token", cat.name),
                );
            }
            if !cat_names.insert(cat.name.as_str()) {
                report.push(
                    "DUPLICATE_CATEGORY",
                    &path,
                    format!("category `{}` repeated under type `{}`", cat.name, ty.name),
                );
            }
            if let Some(label) = &cat.intrinsic_label {
                if !labels.contains(label.as_str()) {
                    report.push(
                        "UNKNOWN_LABEL",
                        &path,
                        format!("intrinsic label `{label}` not in `labels`"),
                    );
                }
            }
            let mut param_names = HashSet::new();
            for spec in &cat.params {
                let ppath = format!("{path}.{}", spec.name);
                if !param_names.insert(spec.name.as_str()) {
                    report.push("DUPLICATE_PARAM", &ppath, format!("parameter `{}` repeated", spec.name));
                }
                check_param(&mut report, &ppath, spec);
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Identifying,
    Parameter,
}

/// A contiguous block of encoded columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub kind: SegmentKind,
    pub offset: usize,
    pub width: usize,
    /// Per-column names, `width` entries.
    pub columns: Vec<String>,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub segments: Vec<Segment>,
    pub total_width: usize,
}

impl Layout {
    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.segments.iter().flat_map(|s| s.columns.iter().cloned()).collect()
    }
}

/// Name of the layout segment holding an identifying field.
pub fn field_segment_name(field: &str) -> String {
    format!("field:{field}")
}

fn param_columns(spec: &ParameterSpec) -> Vec<String> {
    match spec.encoding {
        Encoding::OneHot => spec.vocab().iter().map(|t| format!("{}={t}", spec.name)).collect(),
        Encoding::Helmert | Encoding::BackwardDifference | Encoding::OrthogonalPolynomial => {
            (1..=spec.width()).map(|j| format!("{}#{j}", spec.name)).collect()
        }
        _ => vec![spec.name.clone()],
    }
}

pub(crate) fn layout_for(schema: &LogSchema, cat: &EntryCategoryDef) -> Layout {
    let mut segments = Vec::with_capacity(schema.identifying_fields.len() + cat.params.len());
    let mut offset = 0;
    for field in &schema.identifying_fields {
        let width = field.vocabulary.len();
        segments.push(Segment {
            name: field_segment_name(&field.name),
            kind: SegmentKind::Identifying,
            offset,
            width,
            columns: field.vocabulary.iter().map(|t| format!("{}={t}", field.name)).collect(),
        });
        offset += width;
    }
    for spec in &cat.params {
        let width = spec.width();
        segments.push(Segment {
            name: spec.name.clone(),
            kind: SegmentKind::Parameter,
            offset,
            width,
            columns: param_columns(spec),
        });
        offset += width;
    }
    Layout {
        segments,
        total_width: offset,
    }
}

/// Column layout of records of one `(type, category)`.
pub fn vector_layout(schema: &LogSchema, type_name: &str, category: &str) -> Result<Layout> {
    let (_, cat) = schema.category(type_name, category)?;
    Ok(layout_for(schema, cat))
}
