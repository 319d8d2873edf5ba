// SPDX-License-Identifier: Apache-2.0

mod support;

use std::collections::HashMap;

use mlog_core::dataset::read_ai_log;
use mlog_core::emitter::{StepClock, Writer, WriterOptions};
use mlog_core::evolution::{
    build_migration, diff_schemas, migrate_log, migrate_text, parse_override, ChangeKind, MigrationChain, Rule,
};
use mlog_core::record::header_line;
use mlog_core::schema::{Encoding, EntryCategoryDef, EntryTypeDef, IdentifyingFieldDef, Level};
use mlog_core::{LogSchema, ParameterSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::schema_gen;

fn schema(version: u32, max: f64, colors: &[&str], extra: bool) -> LogSchema {
    let mut params = vec![
        ParameterSpec::minmax("size", Level::Ratio, 0.0, max),
        ParameterSpec::categorical("color", Level::Nominal, Encoding::OneHot, colors),
    ];
    if extra {
        params.push(ParameterSpec::minmax("retries", Level::Ratio, 0.0, 5.0));
    }
    LogSchema {
        version,
        identifying_fields: vec![IdentifyingFieldDef::new("host", &["a", "b"])],
        entry_types: vec![EntryTypeDef {
            name: "info".into(),
            categories: vec![EntryCategoryDef::new("put", params)],
        }],
        labels: vec![],
    }
}

fn write_log(path: &std::path::Path, s: &LogSchema, rows: &[(f64, &str)]) {
    let opts = WriterOptions::default().seed(9).clock(StepClock::new(5_000, 100));
    let mut w = Writer::open(s.clone(), path, None, "w0", opts).unwrap();
    for (size, color) in rows {
        w.log_event("info", "put", &["a"], &[(*size).into(), (*color).into()], None)
            .unwrap();
    }
}

fn encoded(line: &str) -> &str {
    line.split('|').nth(6).unwrap()
}

#[test]
fn bounds_change_re_encodes_from_raw() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("v1.log"), dir.path().join("v2.log"));
    let (old, new) = (
        schema(1, 10.0, &["red", "green"], false),
        schema(2, 20.0, &["red", "green"], false),
    );
    write_log(&input, &old, &[(5.0, "red")]);
    let map = build_migration(&old, &new, &HashMap::new()).unwrap();
    assert_eq!(map.rule("info", "put", "info.put.size"), Some(Rule::ReEncodeFromRaw));
    let summary = migrate_log(&input, &output, &map).unwrap();
    assert_eq!((summary.records, summary.migrated, summary.dropped), (1, 1, 0));
    let text = std::fs::read_to_string(&output).unwrap();
    let line = text.lines().nth(1).unwrap();
    assert_eq!(encoded(line), "1.000000,0.000000,0.250000,1.000000,0.000000");
}

#[test]
fn one_hot_append_zero_pads() {
    let (old, new) = (
        schema(1, 10.0, &["red", "green"], false),
        schema(2, 10.0, &["red", "green", "blue"], false),
    );
    assert!(diff_schemas(&old, &new).is_compatible());
    let map = build_migration(&old, &new, &HashMap::new()).unwrap();
    assert_eq!(map.rule("info", "put", "info.put.color"), Some(Rule::ZeroPad));
    let fp = old.fingerprint().unwrap();
    let input = format!("{}\n", header_line(fp));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v1.log");
    write_log(&path, &old, &[(2.0, "red")]);
    let (out, _) = migrate_text(&std::fs::read_to_string(&path).unwrap(), &map).unwrap();
    let line = out.lines().nth(1).unwrap();
    assert!(encoded(line).ends_with("1.000000,0.000000,0.000000"), "{line}");

    let (empty, summary) = migrate_text(&input, &map).unwrap();
    assert_eq!(empty, format!("{}\n", header_line(new.fingerprint().unwrap())));
    assert_eq!(summary.records, 0);
}

#[test]
fn added_parameter_defaults_and_overrides() {
    let (old, new) = (schema(1, 10.0, &["red"], false), schema(2, 10.0, &["red"], true));
    let map = build_migration(&old, &new, &HashMap::new()).unwrap();
    assert_eq!(
        map.rule("info", "put", "info.put.retries"),
        Some(Rule::DefaultFill(0.0))
    );

    let overrides: HashMap<String, Rule> = [parse_override("info.put.retries=default_fill(0.5)").unwrap()].into();
    let map = build_migration(&old, &new, &overrides).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("v1.log"), dir.path().join("v2.log"));
    write_log(&input, &old, &[(1.0, "red")]);
    migrate_log(&input, &output, &map).unwrap();
    let text = std::fs::read_to_string(&output).unwrap();
    assert!(encoded(text.lines().nth(1).unwrap()).ends_with(",0.500000"));
}

#[test]
fn removals_need_an_explicit_rule() {
    let (old, new) = (schema(1, 10.0, &["red"], true), schema(2, 10.0, &["red"], false));
    assert!(!diff_schemas(&old, &new).is_compatible());
    let err = build_migration(&old, &new, &HashMap::new()).unwrap_err();
    assert_eq!(err.code(), "UNRESOLVABLE_SEGMENT");
    let overrides: HashMap<String, Rule> = [parse_override("info.put.retries=drop").unwrap()].into();
    assert!(build_migration(&old, &new, &overrides).is_ok());
    let mut unused = overrides.clone();
    unused.insert("info.put.nothing".into(), Rule::Drop);
    assert_eq!(
        build_migration(&old, &new, &unused).unwrap_err().code(),
        "INVALID_ARGUMENT"
    );
}

#[test]
fn migration_keeps_count_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("v1.log"), dir.path().join("v2.log"));
    let old = schema(1, 10.0, &["red", "green"], false);
    let new = schema(2, 40.0, &["red", "green", "blue"], false);
    let rows: Vec<(f64, &str)> = (0..50)
        .map(|i| ((i % 11) as f64, if i % 3 == 0 { "green" } else { "red" }))
        .collect();
    write_log(&input, &old, &rows);
    let map = build_migration(&old, &new, &HashMap::new()).unwrap();
    let summary = migrate_log(&input, &output, &map).unwrap();
    assert_eq!(summary.migrated, 50);

    let before = read_ai_log(&input, &old).unwrap();
    let after = read_ai_log(&output, &new).unwrap();
    assert_eq!(after.fingerprint, new.fingerprint().unwrap());
    let keys = |s: &mlog_core::RecordStream| {
        s.records
            .iter()
            .map(|r| (r.seq, r.timestamp_us, r.link_id, r.raw.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(keys(&before), keys(&after));
}

#[test]
fn chained_migration_matches_direct() {
    let v1 = schema(1, 10.0, &["red"], false);
    let v2 = schema(2, 20.0, &["red", "green"], false);
    let v3 = schema(3, 40.0, &["red", "green", "blue"], false);
    let none = HashMap::new();
    let chain = MigrationChain::new(build_migration(&v1, &v2, &none).unwrap())
        .then(build_migration(&v2, &v3, &none).unwrap())
        .unwrap();
    assert!(MigrationChain::new(build_migration(&v1, &v2, &none).unwrap())
        .then(build_migration(&v1, &v2, &none).unwrap())
        .is_err());
    let direct = build_migration(&v1, &v3, &none).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v1.log");
    write_log(&path, &v1, &[(3.0, "red"), (10.0, "red")]);
    for record in read_ai_log(&path, &v1).unwrap().records {
        let a = chain.migrate_record(&record).unwrap().unwrap();
        let b = mlog_core::evolution::migrate_record(&record, &direct).unwrap().unwrap();
        assert_eq!(a.to_line(), b.to_line());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn migration_commutes_with_encoding(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let old = schema_gen::random_schema(&mut rng);
        let (new, kinds) = schema_gen::evolve(&mut rng, &old);
        let diff = diff_schemas(&old, &new);
        for k in &kinds {
            prop_assert!(diff.kinds().contains(k), "{}", diff);
        }
        prop_assert_eq!(diff.is_compatible(), !kinds.contains(&ChangeKind::BoundsChange));
        schema_gen::check_commutation(&mut rng, &old, &new, 8).map_err(TestCaseError::fail)?;
    }
}
