// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria 1 to 7. Prints one PASS/FAIL line per criterion with
//! its runtime and budget, and exits non-zero if any criterion fails.

#[path = "../../core/tests/support/schema_gen.rs"]
mod schema_gen;

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mlog_core::dataset::{merge_streams, read_ai_log, RecordStream};
use mlog_core::emitter::{StepClock, Writer, WriterOptions};
use mlog_core::encoders::{
    contrast_matrix, gaussian_map, minmax_normalize, one_hot_decode, one_hot_encode, sigmoid_normalize, tanh_normalize,
    ContrastKind, QuantileState,
};
use mlog_core::fixtures::{hdfs_schema, HDFS_LEGACY_LOG, HDFS_TEMPLATES};
use mlog_core::ingest::{convert_reader, parse_templates};
use mlog_core::norm_state::{renormalize_log, RangePolicy, RangeStrategy};
use mlog_core::schema::{vector_layout, Bounds, EntryCategoryDef, EntryTypeDef, IdentifyingFieldDef, Level};
use mlog_core::{LogSchema, ParameterSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. Encoder properties
// ---------------------------------------------------------------------------

const ENCODER_CASES: usize = 10_000;
const CONTRAST_TOL: f64 = 1e-12;

fn encoder_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kinds = [
        ContrastKind::BackwardDifference,
        ContrastKind::Helmert,
        ContrastKind::OrthogonalPolynomial,
    ];
    let mut worst_sum: f64 = 0.0;
    let mut worst_ortho: f64 = 0.0;
    for case in 0..ENCODER_CASES {
        // One-hot: a single set bit and a round trip.
        let n = rng.gen_range(1..=16);
        let vocab: Vec<String> = (0..n).map(|i| format!("tok{i}_{}", rng.gen::<u16>())).collect();
        let i = rng.gen_range(0..n);
        let bits = one_hot_encode(&vocab[i], &vocab).map_err(|e| e.to_string())?;
        check(bits.iter().filter(|b| **b == 1).count() == 1 && bits[i] == 1, || {
            format!("case {case}: one-hot {bits:?}")
        })?;
        check(one_hot_decode(&bits, &vocab).ok() == Some(vocab[i].as_str()), || {
            format!("case {case}: one-hot round trip")
        })?;

        // Contrast matrices for k in 2..=6.
        let k = rng.gen_range(2..=6);
        let kind = *kinds.choose(&mut rng).unwrap();
        let m = contrast_matrix(kind, k).map_err(|e| e.to_string())?;
        for a in 0..k - 1 {
            let col = m.column(a);
            worst_sum = worst_sum.max(col.iter().sum::<f64>().abs());
            if kind == ContrastKind::OrthogonalPolynomial {
                for b in 0..k - 1 {
                    let dot: f64 = col.iter().zip(m.column(b)).map(|(x, y)| x * y).sum();
                    worst_ortho = worst_ortho.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
                }
            }
        }

        // Min-max: unit interval, exact endpoints.
        let min = rng.gen_range(-1e6..1e6);
        let max = min + rng.gen_range(1e-3..1e6);
        let x = rng.gen_range(min..=max);
        let y = minmax_normalize(x, min, max).map_err(|e| e.to_string())?;
        check((0.0..=1.0).contains(&y), || format!("case {case}: minmax {y}"))?;
        check(
            minmax_normalize(min, min, max).ok() == Some(0.0) && minmax_normalize(max, min, max).ok() == Some(1.0),
            || format!("case {case}: minmax endpoints for [{min}, {max}]"),
        )?;

        // Squashing: bounds and monotonicity.
        let (center, scale) = (rng.gen_range(-100.0..100.0), rng.gen_range(1e-2..1e3));
        let a = rng.gen_range(-1e4..1e4);
        let b = a + rng.gen_range(0.0..1e3);
        let (sa, sb) = (
            sigmoid_normalize(a, center, scale).unwrap(),
            sigmoid_normalize(b, center, scale).unwrap(),
        );
        let (ta, tb) = (
            tanh_normalize(a, center, scale).unwrap(),
            tanh_normalize(b, center, scale).unwrap(),
        );
        check(
            (0.0..=1.0).contains(&sa) && (0.0..=1.0).contains(&sb) && sa <= sb,
            || format!("case {case}: sigmoid {sa} {sb}"),
        )?;
        check(
            (-1.0..=1.0).contains(&ta) && (-1.0..=1.0).contains(&tb) && ta <= tb,
            || format!("case {case}: tanh {ta} {tb}"),
        )?;
    }
    check(worst_sum < CONTRAST_TOL, || {
        format!("column sum deviation {worst_sum:e}")
    })?;
    check(worst_ortho < CONTRAST_TOL, || {
        format!("orthonormality deviation {worst_ortho:e}")
    })?;
    Ok(format!(
        "{ENCODER_CASES} cases, max |column sum| {worst_sum:.1e}, max orthonormality deviation {worst_ortho:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 2. Gaussian mapping
// ---------------------------------------------------------------------------

const KS_SAMPLES: usize = 10_000;
const KS_LIMIT: f64 = 0.02;

fn ks_statistic(mut z: Vec<f64>) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal.cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn ks_for(samples: &[f64], reservoir: usize) -> Result<f64, String> {
    let mut state = QuantileState::new(reservoir, 7);
    for x in samples {
        state.observe(*x).map_err(|e| e.to_string())?;
    }
    let z = samples
        .iter()
        .map(|x| gaussian_map(*x, &state))
        .collect::<mlog_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    Ok(ks_statistic(z))
}

fn gaussian_mapping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples: Vec<f64> = (0..KS_SAMPLES).map(|_| rng.gen::<f64>()).collect();
    let d = ks_for(&samples, KS_SAMPLES)?;
    let d_default = ks_for(&samples, mlog_core::encoders::DEFAULT_RESERVOIR)?;
    check(d < KS_LIMIT, || format!("KS {d:.4} >= {KS_LIMIT}"))?;
    Ok(format!(
        "KS {d:.4} < {KS_LIMIT} with reservoir {KS_SAMPLES} (default reservoir {}: KS {d_default:.4})",
        mlog_core::encoders::DEFAULT_RESERVOIR
    ))
}

// ---------------------------------------------------------------------------
// 3. Multi-writer integrity
// ---------------------------------------------------------------------------

const WRITERS: usize = 4;
const EVENTS_PER_WRITER: usize = 1_000;

fn multi_writer() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ai = dir.path().join("shared.ai.log");
    let schema = hdfs_schema();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..WRITERS)
            .map(|w| {
                let (ai, schema) = (&ai, schema.clone());
                scope.spawn(move || -> mlog_core::Result<()> {
                    let opts = WriterOptions::default().seed(100 + w as u64);
                    let mut writer = Writer::open(schema.clone(), ai, None, &format!("w{w}"), opts)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
                    for _ in 0..EVENTS_PER_WRITER {
                        let e = mlog_core::simulate::random_event(&schema, &mut rng);
                        writer.log_event(&e.type_name, &e.category, &e.identifying, &e.params, None)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("writer thread").map_err(|e| e.to_string()))
    })?;

    let text = std::fs::read_to_string(&ai).map_err(|e| e.to_string())?;
    let lines = text.lines().count();
    check(text.ends_with('\n') && lines == WRITERS * EVENTS_PER_WRITER + 1, || {
        format!("{lines} lines")
    })?;
    // Every line parses at full width, so no line is torn.
    let stream = read_ai_log(&ai, &schema).map_err(|e| e.to_string())?;
    check(stream.len() == WRITERS * EVENTS_PER_WRITER, || {
        format!("{} records", stream.len())
    })?;

    let mut per_writer: HashMap<String, RecordStream> = HashMap::new();
    for r in &stream.records {
        per_writer
            .entry(r.writer_id.clone())
            .or_insert_with(|| RecordStream::new(stream.fingerprint))
            .records
            .push(r.clone());
    }
    for (id, s) in &per_writer {
        let seqs: Vec<u64> = s.records.iter().map(|r| r.seq).collect();
        check(seqs == (0..EVENTS_PER_WRITER as u64).collect::<Vec<_>>(), || {
            format!("writer {id} sequence has gaps or reorders")
        })?;
    }

    let mut keyed: Vec<_> = stream.records.iter().collect();
    keyed.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let brute: Vec<String> = keyed.iter().map(|r| r.to_line()).collect();
    let mut writers: Vec<_> = per_writer.into_values().collect();
    writers.sort_by(|a, b| a.records[0].writer_id.cmp(&b.records[0].writer_id));
    let merged = merge_streams(writers).map_err(|e| e.to_string())?;
    let merged: Vec<String> = merged.records.iter().map(|r| r.to_line()).collect();
    check(merged == brute, || "merge differs from sort oracle".into())?;
    Ok(format!(
        "{} records from {WRITERS} writers, no torn lines, gap-free sequences, merge equals sort",
        stream.len()
    ))
}

// ---------------------------------------------------------------------------
// 4. Renormalization fidelity
// ---------------------------------------------------------------------------

const RENORM_RECORDS: usize = 1_000;

fn renorm_schema(min: f64, max: f64) -> LogSchema {
    LogSchema {
        version: 1,
        identifying_fields: vec![IdentifyingFieldDef::new("server", &["s1", "s2", "s3"])],
        entry_types: vec![EntryTypeDef {
            name: "info".into(),
            categories: vec![EntryCategoryDef::new(
                "transfer",
                vec![
                    ParameterSpec::minmax("bytes", Level::Ratio, min, max),
                    ParameterSpec::minmax("retries", Level::Ratio, 0.0, 10.0),
                ],
            )],
        }],
        labels: vec![],
    }
}

fn write_renorm(path: &Path, schema: &LogSchema, policy: Option<RangePolicy>, rows: &[(usize, f64, f64)]) -> Writer {
    let mut opts = WriterOptions::default().seed(4).clock(StepClock::new(1_000_000, 10));
    if let Some(p) = policy {
        opts = opts.range_policy(p);
    }
    let mut w = Writer::open(schema.clone(), path, None, "r", opts).unwrap();
    let servers = ["s1", "s2", "s3"];
    for (s, bytes, retries) in rows {
        w.log_event(
            "info",
            "transfer",
            &[servers[*s]],
            &[(*bytes).into(), (*retries).into()],
            None,
        )
        .unwrap();
    }
    w
}

fn encoded_sections(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('|').nth(6).unwrap_or_default().to_string())
        .collect()
}

fn renormalization() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("traverse.log"), dir.path().join("fresh.log"));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<(usize, f64, f64)> = (0..RENORM_RECORDS)
        .map(|i| {
            // Drift upwards so that bounds keep expanding.
            let hi = 100.0 + i as f64 * 5.0;
            let x = (rng.gen_range(-20.0..hi) * 100.0f64).round() / 100.0;
            (rng.gen_range(0..3), x, rng.gen_range(0..=10) as f64)
        })
        .collect();
    let start = renorm_schema(0.0, 100.0);
    let mut w = write_renorm(&a, &start, Some(RangePolicy::new(RangeStrategy::Traverse)), &rows);
    let jobs = w.take_jobs();
    drop(w);
    let last = jobs.last().ok_or("no renormalization was requested")?;
    renormalize_log(&a, &start, &last.param_id, last.new_bounds).map_err(|e| e.to_string())?;

    let lo = rows.iter().map(|r| r.1).fold(0.0, f64::min);
    let hi = rows.iter().map(|r| r.1).fold(100.0, f64::max);
    check(last.new_bounds == Bounds::new(lo, hi), || {
        format!("final bounds {:?}, observed [{lo}, {hi}]", last.new_bounds)
    })?;
    write_renorm(&b, &renorm_schema(lo, hi), None, &rows);
    let (ea, eb) = (encoded_sections(&a), encoded_sections(&b));
    check(ea.len() == RENORM_RECORDS && ea == eb, || {
        let first = ea.iter().zip(&eb).position(|(x, y)| x != y);
        format!("encoded sections differ (first at record {first:?})")
    })?;
    Ok(format!(
        "{RENORM_RECORDS} records, {} expansions, final bounds [{lo}, {hi}], encoded sections byte-equal",
        jobs.len()
    ))
}

// ---------------------------------------------------------------------------
// 5. Migration commutation
// ---------------------------------------------------------------------------

const SCHEMA_PAIRS: usize = 100;

fn migration_commutation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut compared = 0;
    let mut kinds: HashMap<&'static str, usize> = HashMap::new();
    for pair in 0..SCHEMA_PAIRS {
        let old = schema_gen::random_schema(&mut rng);
        let (new, applied) = schema_gen::evolve(&mut rng, &old);
        for k in applied {
            *kinds.entry(k.as_str()).or_default() += 1;
        }
        compared += schema_gen::check_commutation(&mut rng, &old, &new, 10).map_err(|e| format!("pair {pair}: {e}"))?;
    }
    let mut kinds: Vec<_> = kinds.into_iter().collect();
    kinds.sort();
    let kinds: Vec<String> = kinds.iter().map(|(k, n)| format!("{k} {n}")).collect();
    Ok(format!(
        "{SCHEMA_PAIRS} pairs ({}), {compared} segments byte-equal",
        kinds.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// 6. Legacy ingest
// ---------------------------------------------------------------------------

const GOLDEN: &str = include_str!("fixtures/hdfs_golden.ai.log");

fn legacy_ingest() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ai = dir.path().join("ai.log");
    let schema = hdfs_schema();
    let templates = parse_templates(HDFS_TEMPLATES, &schema).map_err(|e| e.to_string())?;
    let opts = WriterOptions::default()
        .seed(1)
        .clock(StepClock::new(1_600_000_000_000_000, 1_000));
    let mut writer = Writer::open(schema, &ai, None, "ingest", opts).map_err(|e| e.to_string())?;
    let mut skips = Vec::new();
    let summary =
        convert_reader(HDFS_LEGACY_LOG.as_bytes(), &templates, &mut writer, &mut skips).map_err(|e| e.to_string())?;
    drop(writer);
    check(summary.converted + summary.skipped == 20 && summary.total == 20, || {
        format!("{summary}")
    })?;
    let out = std::fs::read_to_string(&ai).map_err(|e| e.to_string())?;
    check(out == GOLDEN, || "AI log differs from the golden file".into())?;

    let first = out.lines().nth(1).ok_or("no records")?;
    let encoded: Vec<&str> = first.split('|').nth(6).unwrap().split(',').collect();
    let tail = &encoded[encoded.len() - 2..];
    let expected = [
        format!("{:.6}", (1_256_521_728.0 - 0.0) / (1.5e9 - 0.0)),
        format!("{:.6}", (10.0 - 0.0) / (20.0 - 0.0)),
    ];
    check(tail == expected, || format!("tail {tail:?}, expected {expected:?}"))?;
    Ok(format!(
        "converted {} + skipped {} = 20, golden match, tail [{}, {}]",
        summary.converted, summary.skipped, tail[0], tail[1]
    ))
}

// ---------------------------------------------------------------------------
// 7. Export needs no preprocessing
// ---------------------------------------------------------------------------

fn zero_preprocessing() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let schema_path = dir.path().join("schema.json");
    let schema = hdfs_schema();
    mlog_core::schema::save_schema(&schema, &schema_path).map_err(|e| e.to_string())?;
    let run = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_mlog"))
            .args(args)
            .current_dir(dir.path())
            .env("MLOG_COLOR", "0")
            .output()
            .map_err(|e| e.to_string())?;
        check(o.status.success(), || {
            format!("mlog {}: {}", args.join(" "), String::from_utf8_lossy(&o.stderr))
        })
    };
    let schema_arg = schema_path.to_str().unwrap();
    run(&[
        "--quiet",
        "--seed",
        "11",
        "--schema",
        schema_arg,
        "demo",
        "--writers",
        "4",
        "--events",
        "250",
    ])?;
    run(&[
        "--quiet",
        "--schema",
        schema_arg,
        "export",
        "--in",
        "demo.ai.log",
        "--select",
        "union",
        "--intrinsic",
        "--out",
        "matrix.csv",
    ])?;

    let union_width: usize = schema
        .categories()
        .map(|(_, t, c)| 1 + vector_layout(&schema, &t.name, &c.name).unwrap().total_width)
        .sum();
    let csv = std::fs::read_to_string(dir.path().join("matrix.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or("empty matrix")?.split(',').collect();
    check(
        header.len() == union_width + 1 && header.last() == Some(&"label"),
        || format!("header width {} vs schema width {union_width} + label", header.len()),
    )?;
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        check(cells.len() == header.len(), || {
            format!("row {i}: {} cells", cells.len())
        })?;
        check(cells.iter().all(|c| c.parse::<f64>().is_ok_and(f64::is_finite)), || {
            format!("row {i}: non-numeric or empty cell")
        })?;
        rows += 1;
    }
    check(rows == 1_000, || format!("{rows} rows"))?;
    Ok(format!(
        "{rows} rows x {} columns, all numeric, width from schema",
        header.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("encoder properties", Duration::from_secs(10), encoder_suite),
        ("gaussian mapping", Duration::from_secs(5), gaussian_mapping),
        ("multi-writer integrity", Duration::from_secs(30), multi_writer),
        ("renormalization fidelity", Duration::from_secs(10), renormalization),
        ("migration commutation", Duration::from_secs(30), migration_commutation),
        ("legacy ingest", Duration::from_secs(5), legacy_ingest),
        ("zero preprocessing", Duration::from_secs(5), zero_preprocessing),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= *budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; over budget"))
            }
        });
        let (status, detail) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!(
            "{status} {} {name} [{:.2}s / {}s]: {detail}",
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
