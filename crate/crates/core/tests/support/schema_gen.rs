// SPDX-License-Identifier: Apache-2.0

//! Random schemas, compatible-or-breaking evolutions of them, and events
//! valid under both versions.

#![allow(dead_code)]

use mlog_core::emitter::encode_entry;
use mlog_core::evolution::{build_migration, migrate_record, ChangeKind, MigrationMap, Rule};
use mlog_core::record::format_encoded;
use mlog_core::schema::{
    vector_layout, Bounds, CenterScale, Encoding, EntryCategoryDef, EntryTypeDef, IdentifyingFieldDef, Level,
};
use mlog_core::{AiLogRecord, LinkId, LogSchema, ParameterSpec, RawValue};
use rand::seq::SliceRandom;
use rand::Rng;

const ENCODINGS: [Encoding; 8] = [
    Encoding::OneHot,
    Encoding::Bit,
    Encoding::Helmert,
    Encoding::BackwardDifference,
    Encoding::OrthogonalPolynomial,
    Encoding::Minmax,
    Encoding::Sigmoid,
    Encoding::Tanh,
];

fn vocab(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_param(rng: &mut impl Rng, name: String) -> ParameterSpec {
    let encoding = *ENCODINGS.choose(rng).unwrap();
    let (level, vocabulary, bounds, center_scale) = match encoding {
        Encoding::OneHot => (Level::Nominal, Some(vocab("t", rng.gen_range(1..5))), None, None),
        Encoding::Bit => (Level::OrdinalDichotomous, Some(vocab("b", 2)), None, None),
        Encoding::Helmert | Encoding::BackwardDifference | Encoding::OrthogonalPolynomial => {
            (Level::Ordinal, Some(vocab("o", rng.gen_range(2..6))), None, None)
        }
        Encoding::Minmax => {
            let min = rng.gen_range(-100.0..100.0f64).round();
            let span = rng.gen_range(1.0..1000.0f64).round();
            (Level::Ratio, None, Some(Bounds::new(min, min + span)), None)
        }
        _ => {
            let cs = CenterScale {
                center: rng.gen_range(-10.0..10.0f64).round(),
                scale: rng.gen_range(1.0..20.0f64).round(),
            };
            (Level::Interval, None, None, Some(cs))
        }
    };
    ParameterSpec {
        name,
        level,
        encoding,
        vocabulary,
        bounds,
        center_scale,
    }
}

pub fn random_schema(rng: &mut impl Rng) -> LogSchema {
    let identifying_fields = (0..rng.gen_range(1..3))
        .map(|i| IdentifyingFieldDef {
            name: format!("f{i}"),
            vocabulary: vocab("v", rng.gen_range(1..5)),
            encoding: Default::default(),
        })
        .collect();
    let entry_types = (0..rng.gen_range(1..3))
        .map(|t| EntryTypeDef {
            name: format!("type{t}"),
            categories: (0..rng.gen_range(1..3))
                .map(|c| {
                    let params = (0..rng.gen_range(0..5))
                        .map(|p| random_param(rng, format!("p{p}")))
                        .collect();
                    EntryCategoryDef::new(&format!("cat{c}"), params)
                })
                .collect(),
        })
        .collect();
    LogSchema {
        version: 1,
        identifying_fields,
        entry_types,
        labels: vec![],
    }
}

fn is_original(p: &ParameterSpec) -> bool {
    !p.name.starts_with("added")
}

/// Applies between one and three changes drawn from vocabulary appends,
/// bounds changes and parameter additions.
pub fn evolve(rng: &mut impl Rng, old: &LogSchema) -> (LogSchema, Vec<ChangeKind>) {
    let mut new = old.clone();
    new.version += 1;
    let mut kinds = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        let t = rng.gen_range(0..new.entry_types.len());
        let c = rng.gen_range(0..new.entry_types[t].categories.len());
        let cat = &mut new.entry_types[t].categories[c];
        match rng.gen_range(0..3) {
            0 => {
                let field = rng.gen_bool(0.3);
                let target = if field {
                    let f = rng.gen_range(0..new.identifying_fields.len());
                    Some(&mut new.identifying_fields[f].vocabulary)
                } else {
                    let open: Vec<usize> = (0..cat.params.len())
                        .filter(|i| is_original(&cat.params[*i]) && cat.params[*i].encoding.is_categorical())
                        .filter(|i| cat.params[*i].encoding != Encoding::Bit)
                        .collect();
                    open.choose(rng).and_then(|i| cat.params[*i].vocabulary.as_mut())
                };
                if let Some(v) = target {
                    let token = format!("new{}", v.len());
                    v.push(token);
                    kinds.push(ChangeKind::VocabAppend);
                }
            }
            1 => {
                let candidates: Vec<&mut ParameterSpec> = cat
                    .params
                    .iter_mut()
                    .filter(|p| is_original(p) && !p.encoding.is_categorical())
                    .collect();
                if let Some(p) = candidates.into_iter().last() {
                    if let Some(b) = p.bounds.as_mut() {
                        // Keep an overlap with the old range so shared events exist.
                        let span = b.max - b.min;
                        b.max += rng.gen_range(1.0..span.max(2.0)).round();
                        b.min -= rng.gen_range(0.0..span / 2.0).round();
                    } else if let Some(cs) = p.center_scale.as_mut() {
                        cs.center += 1.0;
                        cs.scale *= 2.0;
                    }
                    kinds.push(ChangeKind::BoundsChange);
                }
            }
            _ => {
                let name = format!("added{}", cat.params.len());
                if cat.param(&name).is_none() {
                    cat.params.push(random_param(rng, name));
                    kinds.push(ChangeKind::ParamAdd);
                }
            }
        }
    }
    (new, kinds)
}

fn raw_for(rng: &mut impl Rng, old: &ParameterSpec, new: Option<&ParameterSpec>) -> RawValue {
    if old.encoding.is_categorical() {
        return RawValue::Token(old.vocab().choose(rng).unwrap().clone());
    }
    let bounds = |p: &ParameterSpec| p.bounds.unwrap_or(Bounds::new(-1e3, 1e3));
    let (a, b) = (bounds(old), new.map(bounds).unwrap_or(bounds(old)));
    let (lo, hi) = (a.min.max(b.min), a.max.min(b.max));
    let x: f64 = if rng.gen_bool(0.1) { lo } else { rng.gen_range(lo..=hi) };
    // Round-trip through the log's decimal form, as a stored raw value would.
    RawValue::Number((x * 1000.0).round() / 1000.0)
}

/// An event of `type.category` expressible under both schemas.
pub fn shared_event(
    rng: &mut impl Rng,
    old: &LogSchema,
    new: &LogSchema,
    t: usize,
    c: usize,
) -> (Vec<String>, Vec<RawValue>, Vec<RawValue>) {
    let ids = old
        .identifying_fields
        .iter()
        .map(|f| f.vocabulary.choose(rng).unwrap().clone())
        .collect();
    let old_cat = &old.entry_types[t].categories[c];
    let new_cat = &new.entry_types[t].categories[c];
    let old_params: Vec<RawValue> = old_cat
        .params
        .iter()
        .map(|p| raw_for(rng, p, new_cat.param(&p.name).map(|(_, q)| q)))
        .collect();
    let new_params = new_cat
        .params
        .iter()
        .map(|q| match old_cat.param(&q.name) {
            Some((i, _)) => old_params[i].clone(),
            None => raw_for(rng, q, None),
        })
        .collect();
    (ids, old_params, new_params)
}

/// Migrates `events` random events per category of `old` and compares every
/// segment not filled with a default against a direct encoding under `new`.
/// Returns the number of compared segments.
pub fn check_commutation(rng: &mut impl Rng, old: &LogSchema, new: &LogSchema, events: usize) -> Result<usize, String> {
    let map: MigrationMap = build_migration(old, new, &Default::default()).map_err(|e| format!("build: {e}"))?;
    let from_fp = old.fingerprint().unwrap();
    let mut compared = 0;
    for (t, ty) in old.entry_types.iter().enumerate() {
        for (c, cat) in ty.categories.iter().enumerate() {
            let layout = vector_layout(new, &ty.name, &cat.name).unwrap();
            let rules: Vec<(String, Rule)> = map
                .categories()
                .iter()
                .find(|m| m.type_name == ty.name && m.category == cat.name)
                .unwrap()
                .rules
                .iter()
                .map(|r| (r.segment.clone(), r.rule))
                .collect();
            for _ in 0..events {
                let (ids, old_params, new_params) = shared_event(rng, old, new, t, c);
                let before = encode_entry(old, &ty.name, &cat.name, &ids, &old_params).map_err(|e| e.to_string())?;
                let record = AiLogRecord {
                    schema_fp: from_fp,
                    writer_id: "w".into(),
                    seq: 0,
                    timestamp_us: 0,
                    link_id: LinkId(rng.gen()),
                    category: before.category,
                    encoded: before.encoded,
                    raw: before.raw,
                    label: None,
                };
                let migrated = migrate_record(&record, &map)
                    .map_err(|e| e.to_string())?
                    .ok_or("dropped")?;
                let direct = encode_entry(new, &ty.name, &cat.name, &ids, &new_params).map_err(|e| e.to_string())?;
                if migrated.encoded.len() != layout.total_width {
                    return Err(format!("width {} vs {}", migrated.encoded.len(), layout.total_width));
                }
                for (segment, rule) in &rules {
                    if matches!(rule, Rule::DefaultFill(_) | Rule::Drop) {
                        continue;
                    }
                    let name = if segment.starts_with("field:") {
                        segment.clone()
                    } else {
                        segment.rsplit('.').next().unwrap().to_string()
                    };
                    let range = layout.segment(&name).ok_or(format!("no segment {name}"))?.range();
                    let a: Vec<String> = migrated.encoded[range.clone()]
                        .iter()
                        .map(|v| format_encoded(*v))
                        .collect();
                    let b: Vec<String> = direct.encoded[range].iter().map(|v| format_encoded(*v)).collect();
                    if a != b {
                        return Err(format!("{segment} ({rule}): migrated {a:?} direct {b:?}"));
                    }
                    compared += 1;
                }
            }
        }
    }
    Ok(compared)
}
