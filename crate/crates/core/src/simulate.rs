// SPDX-License-Identifier: Apache-2.0

//! Seeded multi-writer simulation over a schema, producing a reproducible
//! AI and human log pair.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::parse_ai_log;
use crate::emitter::{StepClock, Writer, WriterOptions};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::record::{header_line, RawValue};
use crate::schema::{Encoding, LogSchema, ParameterSpec};

/// One event drawn from a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedEvent {
    pub type_name: String,
    pub category: String,
    pub identifying: Vec<String>,
    pub params: Vec<RawValue>,
    pub text: String,
}

fn random_value(spec: &ParameterSpec, rng: &mut impl Rng) -> RawValue {
    if spec.encoding.is_categorical() {
        return RawValue::Token(spec.vocab().choose(rng).expect("non-empty vocabulary").clone());
    }
    let x = match (spec.encoding, spec.bounds, spec.center_scale) {
        (Encoding::Minmax, Some(b), _) => rng.gen_range(b.min..=b.max),
        (_, _, Some(cs)) => cs.center + cs.scale * rng.gen_range(-3.0..3.0),
        _ => rng.gen_range(0.0..1000.0),
    };
    // Three decimals keep raw sections short and exactly representable in text.
    let x = (x * 1000.0).round() / 1000.0;
    let x = match spec.bounds {
        Some(b) if spec.encoding == Encoding::Minmax => x.clamp(b.min, b.max),
        _ => x,
    };
    RawValue::Number(x)
}

/// Draws a category uniformly, then every identifying token and parameter.
pub fn random_event(schema: &LogSchema, rng: &mut impl Rng) -> SimulatedEvent {
    let categories: Vec<_> = schema.categories().collect();
    let (_, ty, cat) = categories.choose(rng).expect("schema has categories");
    let identifying: Vec<String> = schema
        .identifying_fields
        .iter()
        .map(|f| f.vocabulary.choose(rng).expect("non-empty vocabulary").clone())
        .collect();
    let params: Vec<RawValue> = cat.params.iter().map(|p| random_value(p, rng)).collect();
    let mut text = format!("{} {}", identifying.join(" "), cat.name);
    for (spec, value) in cat.params.iter().zip(&params) {
        text.push_str(&format!(" {}={value}", spec.name));
    }
    SimulatedEvent {
        type_name: ty.name.clone(),
        category: cat.name.clone(),
        identifying,
        params,
        text,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoOptions {
    pub seed: u64,
    pub writers: usize,
    /// Events per writer.
    pub events: usize,
    /// First timestamp of the fixed test clock.
    pub start_us: u64,
    pub step_us: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            seed: 0,
            writers: 3,
            events: 100,
            start_us: 1_700_000_000_000_000,
            step_us: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoSummary {
    pub writers: usize,
    pub records: usize,
    pub fingerprint: String,
}

/// Runs `writers` concurrent writers on one AI log and one human log, then
/// rewrites both in stream order so that the result does not depend on
/// thread scheduling. Existing files are replaced.
pub fn run_demo(schema: Arc<LogSchema>, ai: &Path, human: &Path, options: DemoOptions) -> Result<DemoSummary> {
    if options.writers == 0 {
        return Err(Error::InvalidArgument("at least one writer is required".into()));
    }
    for path in [ai, human] {
        std::fs::write(path, b"").map_err(|e| Error::io(path, e))?;
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..options.writers)
            .map(|i| {
                let schema = Arc::clone(&schema);
                scope.spawn(move || -> Result<()> {
                    let seed = options.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64);
                    let clock = StepClock::new(options.start_us + i as u64, options.step_us);
                    let opts = WriterOptions::default().seed(seed).clock(clock);
                    let mut writer = Writer::open(Arc::clone(&schema), ai, Some(human), &format!("demo-{i:02}"), opts)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
                    for _ in 0..options.events {
                        let e = random_event(&schema, &mut rng);
                        writer.log_event(&e.type_name, &e.category, &e.identifying, &e.params, Some(&e.text))?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("demo writer panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let records = canonicalize(&schema, ai, human)?;
    Ok(DemoSummary {
        writers: options.writers,
        records,
        fingerprint: schema.fingerprint()?.to_string(),
    })
}

/// Sorts an AI log into stream order and its human log to match. Returns the
/// number of records.
pub fn canonicalize(schema: &LogSchema, ai: &Path, human: &Path) -> Result<usize> {
    let mut stream = parse_ai_log(&fsutil::read_to_string(ai)?, schema)?;
    stream.sort();
    let mut out = header_line(stream.fingerprint);
    out.push('\n');
    let mut position = HashMap::with_capacity(stream.len());
    for (i, r) in stream.records.iter().enumerate() {
        r.write_line(&mut out);
        out.push('\n');
        position.insert(r.link_id.to_string(), i);
    }
    fsutil::write_atomically(ai, out.as_bytes())?;

    let text = fsutil::read_to_string(human)?;
    let mut lines: Vec<(usize, &str)> = text
        .lines()
        .map(|l| {
            let link = l
                .split_once(" [")
                .and_then(|(_, rest)| rest.split_once(']'))
                .map(|(id, _)| id);
            (link.and_then(|id| position.get(id)).copied().unwrap_or(usize::MAX), l)
        })
        .collect();
    lines.sort_by_key(|(pos, _)| *pos);
    let mut sorted = String::with_capacity(text.len());
    for (_, l) in lines {
        sorted.push_str(l);
        sorted.push('\n');
    }
    fsutil::write_atomically(human, sorted.as_bytes())?;
    Ok(stream.len())
}
