// SPDX-License-Identifier: Apache-2.0

//! Schema evolution: classifying the changes between two schema versions and
//! rewriting records of the old version into the layout of the new one.
//!
//! A [`MigrationMap`] assigns one [`Rule`] to every segment of every target
//! category layout. Raw values retained in each record are what make
//! `re_encode_from_raw` possible; encoded values alone cannot be rescaled to
//! new bounds or vocabularies.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::emitter::encode_raw;
use crate::encoders::one_hot_encode;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::norm_state::{EncodingMarker, ParamId};
use crate::record::{header_line, parse_header, AiLogRecord, RawValue};
use crate::schema::{
    field_segment_name, layout_for, CategoryIndex, Encoding, EntryCategoryDef, Fingerprint, IdentifyingFieldDef,
    LogSchema, ParameterSpec,
};

// ---------------------------------------------------------------------------
// Diff
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChangeKind {
    VocabAppend,
    VocabRemove,
    VocabReorder,
    ParamAdd,
    ParamRemove,
    ParamReorder,
    BoundsChange,
    EncodingChange,
    CategoryAdd,
    CategoryRemove,
    FieldAdd,
    FieldRemove,
    LabelChange,
}

impl ChangeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChangeKind::VocabAppend => "vocab_append",
            ChangeKind::VocabRemove => "vocab_remove",
            ChangeKind::VocabReorder => "vocab_reorder",
            ChangeKind::ParamAdd => "param_add",
            ChangeKind::ParamRemove => "param_remove",
            ChangeKind::ParamReorder => "param_reorder",
            ChangeKind::BoundsChange => "bounds_change",
            ChangeKind::EncodingChange => "encoding_change",
            ChangeKind::CategoryAdd => "category_add",
            ChangeKind::CategoryRemove => "category_remove",
            ChangeKind::FieldAdd => "field_add",
            ChangeKind::FieldRemove => "field_remove",
            ChangeKind::LabelChange => "label_change",
        }
    }

    /// Changes that leave every old record meaningful under the new schema.
    pub fn is_compatible(self) -> bool {
        matches!(
            self,
            ChangeKind::VocabAppend | ChangeKind::CategoryAdd | ChangeKind::ParamAdd
        )
    }
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Change {
    pub kind: ChangeKind,
    /// `field:<name>`, `<type>.<category>`, `<type>.<category>.<param>` or
    /// `labels`.
    pub path: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Compatible,
    Breaking,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Compatible => "compatible",
            Classification::Breaking => "breaking",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaDiff {
    pub changes: Vec<Change>,
    pub classification: Classification,
}

impl SchemaDiff {
    pub fn is_compatible(&self) -> bool {
        self.classification == Classification::Compatible
    }

    pub fn kinds(&self) -> Vec<ChangeKind> {
        self.changes.iter().map(|c| c.kind).collect()
    }
}

impl fmt::Display for SchemaDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.changes {
            writeln!(f, "{}\t{}\t{}", c.kind, c.path, c.detail)?;
        }
        write!(f, "{}", self.classification)
    }
}

fn join(tokens: &[&String]) -> String {
    tokens.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
}

fn diff_vocab(path: &str, old: &[String], new: &[String], out: &mut Vec<Change>) {
    if old == new {
        return;
    }
    let new_set: HashSet<&String> = new.iter().collect();
    let removed: Vec<&String> = old.iter().filter(|t| !new_set.contains(t)).collect();
    let (kind, detail) = if !removed.is_empty() {
        (ChangeKind::VocabRemove, format!("removed {}", join(&removed)))
    } else if new.starts_with(old) {
        (
            ChangeKind::VocabAppend,
            format!("appended {}", join(&new[old.len()..].iter().collect::<Vec<_>>())),
        )
    } else {
        (
            ChangeKind::VocabReorder,
            format!("[{}] -> [{}]", old.join(","), new.join(",")),
        )
    };
    out.push(Change {
        kind,
        path: path.to_string(),
        detail,
    });
}

fn diff_param(path: &str, old: &ParameterSpec, new: &ParameterSpec, out: &mut Vec<Change>) {
    if old.encoding != new.encoding {
        out.push(Change {
            kind: ChangeKind::EncodingChange,
            path: path.to_string(),
            detail: format!("{} -> {}", old.encoding, new.encoding),
        });
        return;
    }
    if old.encoding.is_categorical() {
        diff_vocab(path, old.vocab(), new.vocab(), out);
    }
    if old.bounds != new.bounds {
        let show =
            |b: &Option<crate::schema::Bounds>| b.map_or("none".to_string(), |b| format!("({}, {})", b.min, b.max));
        out.push(Change {
            kind: ChangeKind::BoundsChange,
            path: path.to_string(),
            detail: format!("{} -> {}", show(&old.bounds), show(&new.bounds)),
        });
    }
    if old.center_scale != new.center_scale {
        let show = |c: &Option<crate::schema::CenterScale>| {
            c.map_or("none".to_string(), |c| format!("center {} scale {}", c.center, c.scale))
        };
        out.push(Change {
            kind: ChangeKind::BoundsChange,
            path: path.to_string(),
            detail: format!("{} -> {}", show(&old.center_scale), show(&new.center_scale)),
        });
    }
}

fn diff_category(path: &str, old: &EntryCategoryDef, new: &EntryCategoryDef, out: &mut Vec<Change>) {
    let new_names: HashSet<&str> = new.params.iter().map(|p| p.name.as_str()).collect();
    let old_names: HashSet<&str> = old.params.iter().map(|p| p.name.as_str()).collect();
    for p in &old.params {
        match new.param(&p.name) {
            Some((_, q)) => diff_param(&format!("{path}.{}", p.name), p, q, out),
            None => out.push(Change {
                kind: ChangeKind::ParamRemove,
                path: format!("{path}.{}", p.name),
                detail: describe(p),
            }),
        }
    }
    for p in new.params.iter().filter(|p| !old_names.contains(p.name.as_str())) {
        out.push(Change {
            kind: ChangeKind::ParamAdd,
            path: format!("{path}.{}", p.name),
            detail: describe(p),
        });
    }
    let kept_old: Vec<&str> = old
        .params
        .iter()
        .map(|p| p.name.as_str())
        .filter(|n| new_names.contains(n))
        .collect();
    let kept_new: Vec<&str> = new
        .params
        .iter()
        .map(|p| p.name.as_str())
        .filter(|n| old_names.contains(n))
        .collect();
    if kept_old != kept_new {
        out.push(Change {
            kind: ChangeKind::ParamReorder,
            path: path.to_string(),
            detail: format!("[{}] -> [{}]", kept_old.join(","), kept_new.join(",")),
        });
    }
    if old.intrinsic_label != new.intrinsic_label {
        out.push(Change {
            kind: ChangeKind::LabelChange,
            path: path.to_string(),
            detail: format!(
                "intrinsic label {} -> {}",
                old.intrinsic_label.as_deref().unwrap_or("none"),
                new.intrinsic_label.as_deref().unwrap_or("none")
            ),
        });
    }
}

fn describe(p: &ParameterSpec) -> String {
    format!("{} {}", format!("{:?}", p.level).to_lowercase(), p.encoding)
}

/// Lists every difference between two schema versions and classifies the
/// whole as compatible when all changes are vocabulary appends, category
/// additions or parameter additions.
pub fn diff_schemas(old: &LogSchema, new: &LogSchema) -> SchemaDiff {
    let mut changes = Vec::new();

    let new_fields: HashMap<&str, &IdentifyingFieldDef> =
        new.identifying_fields.iter().map(|f| (f.name.as_str(), f)).collect();
    let old_fields: HashSet<&str> = old.identifying_fields.iter().map(|f| f.name.as_str()).collect();
    for f in &old.identifying_fields {
        let path = field_segment_name(&f.name);
        match new_fields.get(f.name.as_str()) {
            Some(g) => diff_vocab(&path, &f.vocabulary, &g.vocabulary, &mut changes),
            None => changes.push(Change {
                kind: ChangeKind::FieldRemove,
                path,
                detail: String::new(),
            }),
        }
    }
    for f in new
        .identifying_fields
        .iter()
        .filter(|f| !old_fields.contains(f.name.as_str()))
    {
        changes.push(Change {
            kind: ChangeKind::FieldAdd,
            path: field_segment_name(&f.name),
            detail: format!("[{}]", f.vocabulary.join(",")),
        });
    }
    let kept_old: Vec<&str> = old
        .identifying_fields
        .iter()
        .map(|f| f.name.as_str())
        .filter(|n| new_fields.contains_key(n))
        .collect();
    let kept_new: Vec<&str> = new
        .identifying_fields
        .iter()
        .map(|f| f.name.as_str())
        .filter(|n| old_fields.contains(n))
        .collect();
    if kept_old != kept_new {
        changes.push(Change {
            kind: ChangeKind::ParamReorder,
            path: "fields".into(),
            detail: format!("[{}] -> [{}]", kept_old.join(","), kept_new.join(",")),
        });
    }

    let new_cats: HashMap<(&str, &str), &EntryCategoryDef> = new
        .categories()
        .map(|(_, t, c)| ((t.name.as_str(), c.name.as_str()), c))
        .collect();
    let old_cats: HashSet<(&str, &str)> = old
        .categories()
        .map(|(_, t, c)| (t.name.as_str(), c.name.as_str()))
        .collect();
    for (_, t, c) in old.categories() {
        let path = format!("{}.{}", t.name, c.name);
        match new_cats.get(&(t.name.as_str(), c.name.as_str())) {
            Some(d) => diff_category(&path, c, d, &mut changes),
            None => changes.push(Change {
                kind: ChangeKind::CategoryRemove,
                path,
                detail: String::new(),
            }),
        }
    }
    for (_, t, c) in new.categories() {
        if !old_cats.contains(&(t.name.as_str(), c.name.as_str())) {
            changes.push(Change {
                kind: ChangeKind::CategoryAdd,
                path: format!("{}.{}", t.name, c.name),
                detail: format!("{} params", c.params.len()),
            });
        }
    }

    if old.labels != new.labels {
        changes.push(Change {
            kind: ChangeKind::LabelChange,
            path: "labels".into(),
            detail: format!("[{}] -> [{}]", old.labels.join(","), new.labels.join(",")),
        });
    }

    let classification = if changes.iter().all(|c| c.kind.is_compatible()) {
        Classification::Compatible
    } else {
        Classification::Breaking
    };
    SchemaDiff {
        changes,
        classification,
    }
}

// ---------------------------------------------------------------------------
// Migration maps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Copy,
    ZeroPad,
    ReEncodeFromRaw,
    DefaultFill(f64),
    Drop,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Copy => f.write_str("copy"),
            Rule::ZeroPad => f.write_str("zero_pad"),
            Rule::ReEncodeFromRaw => f.write_str("re_encode_from_raw"),
            Rule::DefaultFill(v) => write!(f, "default_fill({v})"),
            Rule::Drop => f.write_str("drop"),
        }
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "copy" => Rule::Copy,
            "zero_pad" => Rule::ZeroPad,
            "re_encode_from_raw" => Rule::ReEncodeFromRaw,
            "drop" => Rule::Drop,
            other => {
                let value = other
                    .strip_prefix("default_fill(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "rule `{other}` must be copy, zero_pad, re_encode_from_raw, default_fill(<number>) or drop"
                        ))
                    })?;
                Rule::DefaultFill(value)
            }
        })
    }
}

/// Parses a `<segment>=<rule>` override.
pub fn parse_override(s: &str) -> Result<(String, Rule)> {
    let (segment, rule) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override `{s}` must be `<segment>=<rule>`")))?;
    Ok((segment.trim().to_string(), rule.parse()?))
}

/// Where a target segment's value comes from in the source record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Source {
    offset: usize,
    width: usize,
    raw_pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Target {
    Field(IdentifyingFieldDef),
    Param(ParameterSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRule {
    /// Override key of the segment.
    pub segment: String,
    pub rule: Rule,
    width: usize,
    source: Option<Source>,
    target: Option<Target>,
}

/// Rules for the records of one source category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMigration {
    pub type_name: String,
    pub category: String,
    pub from: CategoryIndex,
    /// `None` when records of this category are dropped.
    pub to: Option<CategoryIndex>,
    /// Target segments in layout order, then dropped source segments.
    pub rules: Vec<SegmentRule>,
}

#[derive(Debug, Clone)]
pub struct MigrationMap {
    pub from_fp: Fingerprint,
    pub to_fp: Fingerprint,
    old: Arc<LogSchema>,
    new: Arc<LogSchema>,
    categories: HashMap<CategoryIndex, CategoryMigration>,
}

impl MigrationMap {
    pub fn old_schema(&self) -> &LogSchema {
        &self.old
    }

    pub fn new_schema(&self) -> &LogSchema {
        &self.new
    }

    /// Per-category rules in old-schema order.
    pub fn categories(&self) -> Vec<&CategoryMigration> {
        let mut out: Vec<_> = self.categories.values().collect();
        out.sort_by_key(|c| c.from);
        out
    }

    /// The rule assigned to `segment` in source category `type.category`.
    pub fn rule(&self, type_name: &str, category: &str, segment: &str) -> Option<Rule> {
        self.categories
            .values()
            .find(|c| c.type_name == type_name && c.category == category)?
            .rules
            .iter()
            .find(|r| r.segment == segment)
            .map(|r| r.rule)
    }
}

impl fmt::Display for MigrationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} -> {}", self.from_fp, self.to_fp)?;
        for c in self.categories() {
            match c.to {
                Some(to) => writeln!(f, "{}.{} ({} -> {to})", c.type_name, c.category, c.from)?,
                None => writeln!(f, "{}.{} ({} -> dropped)", c.type_name, c.category, c.from)?,
            }
            for r in &c.rules {
                writeln!(f, "  {}\t{}", r.segment, r.rule)?;
            }
        }
        Ok(())
    }
}

fn unresolvable(segment: &str, reason: impl Into<String>) -> Error {
    Error::UnresolvableSegment {
        segment: segment.to_string(),
        reason: reason.into(),
    }
}

/// Automatic rule for a segment present in both versions, or the reason it
/// has none.
fn auto_param_rule(old: &ParameterSpec, new: &ParameterSpec) -> std::result::Result<Rule, String> {
    if old.encoding != new.encoding {
        return Err(format!("encoding_change {} -> {}", old.encoding, new.encoding));
    }
    if old.encoding.is_categorical() && old.vocab() != new.vocab() {
        if !new.vocab().starts_with(old.vocab()) {
            return Err("vocabulary tokens removed or reordered".into());
        }
        return Ok(if old.encoding == Encoding::OneHot {
            Rule::ZeroPad
        } else {
            Rule::ReEncodeFromRaw
        });
    }
    if old.bounds != new.bounds || old.center_scale != new.center_scale {
        return Ok(Rule::ReEncodeFromRaw);
    }
    Ok(Rule::Copy)
}

fn check_rule(
    segment: &str,
    rule: Rule,
    source: Option<Source>,
    width: usize,
    target: &Target,
    zero_pad_ok: bool,
) -> Result<()> {
    let bad = |reason: String| Err(unresolvable(segment, reason));
    match rule {
        Rule::Copy => match source {
            Some(s) if s.width == width => Ok(()),
            Some(s) => bad(format!("copy needs equal widths, source {} target {width}", s.width)),
            None => bad("copy needs a source segment".into()),
        },
        Rule::ZeroPad if !zero_pad_ok => {
            bad("zero_pad needs a one-hot segment whose old vocabulary prefixes the new".into())
        }
        Rule::ZeroPad => Ok(()),
        Rule::ReEncodeFromRaw => {
            if source.is_none() {
                return bad("re_encode_from_raw needs raw values from a source segment".into());
            }
            if matches!(target, Target::Param(p) if p.encoding == Encoding::QuantileGaussian) {
                return bad("quantile_gaussian values depend on writer state and cannot be re-encoded".into());
            }
            Ok(())
        }
        Rule::DefaultFill(_) => Ok(()),
        Rule::Drop => bad("drop applies only to segments absent from the new schema".into()),
    }
}

/// Builds the map taking records of `old` to `new`. Segments without an
/// automatic rule must be covered by `overrides`, keyed `field:<name>`,
/// `<type>.<category>.<param>`, or `<type>.<category>` to drop a removed
/// category.
pub fn build_migration(old: &LogSchema, new: &LogSchema, overrides: &HashMap<String, Rule>) -> Result<MigrationMap> {
    let from_fp = old.fingerprint()?;
    let to_fp = new.fingerprint()?;
    let mut used: HashSet<&str> = HashSet::new();

    // Identifying fields are shared by every category; resolve them once.
    let mut field_rules = Vec::new();
    for (fi, field) in new.identifying_fields.iter().enumerate() {
        let key = field_segment_name(&field.name);
        let old_pos = old.identifying_fields.iter().position(|f| f.name == field.name);
        let automatic = match old_pos.map(|p| &old.identifying_fields[p]) {
            Some(f) if f.vocabulary == field.vocabulary => Ok(Rule::Copy),
            Some(f) if field.vocabulary.starts_with(&f.vocabulary) => Ok(Rule::ZeroPad),
            Some(_) => Err("vocabulary tokens removed or reordered".to_string()),
            None => Err("field_add".to_string()),
        };
        let zero_pad_ok = old_pos.is_some_and(|p| field.vocabulary.starts_with(&old.identifying_fields[p].vocabulary));
        let rule = match overrides.get_key_value(&key) {
            Some((k, r)) => {
                used.insert(k);
                *r
            }
            None => automatic.map_err(|reason| unresolvable(&key, reason))?,
        };
        field_rules.push((fi, key, rule, old_pos, zero_pad_ok));
    }
    let mut dropped_fields = Vec::new();
    for f in &old.identifying_fields {
        if new.identifying_fields.iter().all(|g| g.name != f.name) {
            let key = field_segment_name(&f.name);
            match overrides.get_key_value(&key) {
                Some((k, Rule::Drop)) => {
                    used.insert(k);
                    dropped_fields.push(f.name.clone());
                }
                _ => return Err(unresolvable(&key, "field_remove discards data; override with drop")),
            }
        }
    }

    let mut categories = HashMap::new();
    for (from, ty, cat) in old.categories() {
        let cat_key = format!("{}.{}", ty.name, cat.name);
        let Ok((to, new_cat)) = new.category(&ty.name, &cat.name) else {
            match overrides.get_key_value(&cat_key) {
                Some((k, Rule::Drop)) => {
                    used.insert(k);
                    categories.insert(
                        from,
                        CategoryMigration {
                            type_name: ty.name.clone(),
                            category: cat.name.clone(),
                            from,
                            to: None,
                            rules: vec![],
                        },
                    );
                    continue;
                }
                _ => {
                    return Err(unresolvable(
                        &cat_key,
                        "category_remove discards records; override with drop",
                    ))
                }
            }
        };
        let old_layout = layout_for(old, cat);
        let new_layout = layout_for(new, new_cat);
        let n_old_fields = old.identifying_fields.len();
        let mut rules = Vec::new();

        for (fi, key, rule, old_pos, zero_pad_ok) in &field_rules {
            let field = &new.identifying_fields[*fi];
            let source = old_pos.map(|p| {
                let seg = old_layout
                    .segment(&field_segment_name(&old.identifying_fields[p].name))
                    .expect("field segment");
                Source {
                    offset: seg.offset,
                    width: seg.width,
                    raw_pos: p,
                }
            });
            let target = Target::Field(field.clone());
            check_rule(key, *rule, source, field.vocabulary.len(), &target, *zero_pad_ok)?;
            rules.push(SegmentRule {
                segment: key.clone(),
                rule: *rule,
                width: field.vocabulary.len(),
                source,
                target: Some(target),
            });
        }
        for spec in &new_cat.params {
            let key = format!("{cat_key}.{}", spec.name);
            let old_param = cat.param(&spec.name);
            let source = old_param.map(|(pi, _)| {
                let seg = old_layout.segment(&spec.name).expect("param segment");
                Source {
                    offset: seg.offset,
                    width: seg.width,
                    raw_pos: n_old_fields + pi,
                }
            });
            let automatic = match old_param {
                Some((_, old_spec)) => auto_param_rule(old_spec, spec),
                None => Ok(Rule::DefaultFill(0.0)),
            };
            let zero_pad_ok = old_param.is_some_and(|(_, o)| {
                o.encoding == Encoding::OneHot
                    && spec.encoding == Encoding::OneHot
                    && spec.vocab().starts_with(o.vocab())
            });
            let rule = match overrides.get_key_value(&key) {
                Some((k, r)) => {
                    used.insert(k);
                    *r
                }
                None => automatic.map_err(|reason| unresolvable(&key, reason))?,
            };
            let target = Target::Param(spec.clone());
            check_rule(&key, rule, source, spec.width(), &target, zero_pad_ok)?;
            rules.push(SegmentRule {
                segment: key,
                rule,
                width: spec.width(),
                source,
                target: Some(target),
            });
        }
        debug_assert_eq!(rules.iter().map(|r| r.width).sum::<usize>(), new_layout.total_width);

        for f in &dropped_fields {
            rules.push(SegmentRule {
                segment: field_segment_name(f),
                rule: Rule::Drop,
                width: 0,
                source: None,
                target: None,
            });
        }
        for spec in cat.params.iter().filter(|p| new_cat.param(&p.name).is_none()) {
            let key = format!("{cat_key}.{}", spec.name);
            match overrides.get_key_value(&key) {
                Some((k, Rule::Drop)) => {
                    used.insert(k);
                }
                _ => return Err(unresolvable(&key, "param_remove discards data; override with drop")),
            }
            rules.push(SegmentRule {
                segment: key,
                rule: Rule::Drop,
                width: 0,
                source: None,
                target: None,
            });
        }
        categories.insert(
            from,
            CategoryMigration {
                type_name: ty.name.clone(),
                category: cat.name.clone(),
                from,
                to: Some(to),
                rules,
            },
        );
    }

    if let Some(unused) = overrides.keys().find(|k| !used.contains(k.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "override `{unused}` names no migratable segment"
        )));
    }
    Ok(MigrationMap {
        from_fp,
        to_fp,
        old: Arc::new(old.clone()),
        new: Arc::new(new.clone()),
        categories,
    })
}

/// Rewrites one record into the new layout. Returns `None` for records that
/// the map drops: records of dropped categories, and encoding markers whose
/// parameter is not copied unchanged.
pub fn migrate_record(record: &AiLogRecord, map: &MigrationMap) -> Result<Option<AiLogRecord>> {
    if record.schema_fp != map.from_fp {
        return Err(Error::FingerprintMismatch {
            expected: map.from_fp.to_string(),
            found: record.schema_fp.to_string(),
        });
    }
    if record.is_meta() {
        return Ok(migrate_marker(record, map));
    }
    let cm = map
        .categories
        .get(&record.category)
        .ok_or_else(|| Error::UnknownTypeOrCategory {
            type_name: record.category.type_index.to_string(),
            category: record.category.category_index.to_string(),
        })?;
    let Some(to) = cm.to else {
        return Ok(None);
    };
    let width: usize = cm.rules.iter().map(|r| r.width).sum();
    let mut encoded = Vec::with_capacity(width);
    let mut raw = Vec::with_capacity(cm.rules.len());
    for r in &cm.rules {
        let Some(target) = &r.target else { continue };
        let source_raw = || r.source.map(|s| &record.raw[s.raw_pos]);
        match r.rule {
            Rule::Copy => {
                let s = r.source.expect("checked at build");
                encoded.extend_from_slice(&record.encoded[s.offset..s.offset + s.width]);
                raw.push(record.raw[s.raw_pos].clone());
            }
            Rule::ZeroPad => {
                let s = r.source.expect("checked at build");
                encoded.extend_from_slice(&record.encoded[s.offset..s.offset + s.width]);
                encoded.extend(std::iter::repeat_n(0.0, r.width - s.width));
                raw.push(record.raw[s.raw_pos].clone());
            }
            Rule::ReEncodeFromRaw => {
                let value = source_raw().expect("checked at build");
                match target {
                    Target::Field(f) => {
                        let token = value.as_token().ok_or_else(|| Error::RawValueMissing {
                            param: r.segment.clone(),
                            line: 0,
                        })?;
                        let bits = one_hot_encode(token, &f.vocabulary).map_err(|_| Error::UnknownToken {
                            field: f.name.clone(),
                            token: token.to_string(),
                        })?;
                        encoded.extend(bits.into_iter().map(f64::from));
                    }
                    Target::Param(spec) => {
                        if *value == RawValue::Missing {
                            return Err(Error::RawValueMissing {
                                param: r.segment.clone(),
                                line: 0,
                            });
                        }
                        encoded.extend(encode_raw(spec, value)?);
                    }
                }
                raw.push(value.clone());
            }
            Rule::DefaultFill(v) => {
                encoded.extend(std::iter::repeat_n(v, r.width));
                raw.push(RawValue::Missing);
            }
            Rule::Drop => unreachable!("drop rules have no target"),
        }
    }
    Ok(Some(AiLogRecord {
        schema_fp: map.to_fp,
        category: to,
        encoded,
        raw,
        ..record.clone()
    }))
}

fn migrate_marker(record: &AiLogRecord, map: &MigrationMap) -> Option<AiLogRecord> {
    let marker = EncodingMarker::from_record(record)?;
    let ParamId {
        type_name,
        category,
        param,
    } = &marker.param_id;
    let rule = map.rule(type_name, category, &format!("{type_name}.{category}.{param}"))?;
    (rule == Rule::Copy).then(|| AiLogRecord {
        schema_fp: map.to_fp,
        ..record.clone()
    })
}

/// Migrations applied one after another, each from the previous target.
#[derive(Debug, Clone)]
pub struct MigrationChain {
    maps: Vec<MigrationMap>,
}

impl MigrationChain {
    pub fn new(first: MigrationMap) -> Self {
        MigrationChain { maps: vec![first] }
    }

    pub fn then(mut self, next: MigrationMap) -> Result<Self> {
        let last = self.maps.last().expect("non-empty chain");
        if next.from_fp != last.to_fp {
            return Err(Error::FingerprintMismatch {
                expected: last.to_fp.to_string(),
                found: next.from_fp.to_string(),
            });
        }
        self.maps.push(next);
        Ok(self)
    }

    pub fn maps(&self) -> &[MigrationMap] {
        &self.maps
    }

    pub fn migrate_record(&self, record: &AiLogRecord) -> Result<Option<AiLogRecord>> {
        let mut current = record.clone();
        for map in &self.maps {
            match migrate_record(&current, map)? {
                Some(next) => current = next,
                None => return Ok(None),
            }
        }
        Ok(Some(current))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MigrateSummary {
    pub records: usize,
    pub migrated: usize,
    pub dropped: usize,
}

/// Migrates AI log text, keeping record order. The output starts with the
/// header of the new schema.
pub fn migrate_text(input: &str, map: &MigrationMap) -> Result<(String, MigrateSummary)> {
    let mut out = String::with_capacity(input.len() + 64);
    out.push_str(&header_line(map.to_fp));
    out.push('\n');
    let mut summary = MigrateSummary::default();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(header) = parse_header(line) {
            let found = header?;
            if found != map.from_fp {
                return Err(Error::FingerprintMismatch {
                    expected: map.from_fp.to_string(),
                    found: found.to_string(),
                });
            }
            continue;
        }
        let record = AiLogRecord::parse(line, line_no, &map.old)?;
        summary.records += 1;
        let migrated = migrate_record(&record, map).map_err(|e| match e {
            Error::RawValueMissing { param, .. } => Error::RawValueMissing { param, line: line_no },
            e => e,
        })?;
        match migrated {
            Some(r) => {
                r.write_line(&mut out);
                out.push('\n');
                summary.migrated += 1;
            }
            None => summary.dropped += 1,
        }
    }
    Ok((out, summary))
}

/// Migrates the AI log at `input` into a new file at `output`, written
/// atomically.
pub fn migrate_log(input: impl AsRef<Path>, output: impl AsRef<Path>, map: &MigrationMap) -> Result<MigrateSummary> {
    let text = fsutil::read_to_string(input.as_ref())?;
    let (out, summary) = migrate_text(&text, map)?;
    fsutil::write_atomically(output.as_ref(), out.as_bytes())?;
    Ok(summary)
}
