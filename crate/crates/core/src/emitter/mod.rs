// SPDX-License-Identifier: Apache-2.0

//! The logging API: every event produces one fixed-width numeric record in
//! the shared AI log and, optionally, one human-readable line carrying the
//! same link id.
//!
//! Many writers, in one process or several, may append to the same AI log.
//! Each record is written as a single line in one append, and records carry
//! `(timestamp, writer_id, seq)` so per-writer series can be recovered from
//! the interleaved file.

mod append;
mod encode;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use append::{AppendMode, ATOMIC_APPEND_MAX};
pub use encode::{encode_entry, EncodedEntry};
pub(crate) use encode::{encode_identifying, encode_raw, ParamEncoder};

use self::append::AppendFile;
use crate::encoders::DEFAULT_RESERVOIR;
use crate::error::{Error, Result};
use crate::norm_state::{
    apply_policy, EncodingChange, EncodingMarker, ParamId, PolicyOutcome, RangePolicy, RenormalizationJob, RunningStats,
};
use crate::record::{header_line, parse_header, AiLogRecord, LinkId, RawValue, META_TYPE_INDEX};
use crate::schema::{
    is_valid_writer_id, CategoryIndex, CenterScale, Encoding, Fingerprint, Level, LogSchema, ParameterSpec,
};

/// Source of record timestamps, in microseconds since the Unix epoch.
pub trait Clock: Send {
    fn now_micros(&mut self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_micros(&mut self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic clock for fixtures: `start`, `start + step`, ...
#[derive(Debug, Clone, Copy)]
pub struct StepClock {
    next: u64,
    step: u64,
}

impl StepClock {
    pub fn new(start: u64, step: u64) -> Self {
        StepClock { next: start, step }
    }
}

impl Clock for StepClock {
    fn now_micros(&mut self) -> u64 {
        let now = self.next;
        self.next += self.step;
        now
    }
}

pub struct WriterOptions {
    /// Seed for link ids and quantile reservoirs; drawn from the OS when unset.
    pub seed: Option<u64>,
    pub clock: Box<dyn Clock>,
    /// How to handle min-max values outside their bounds; `None` rejects them.
    pub range_policy: Option<RangePolicy>,
    pub reservoir_capacity: usize,
    pub append_mode: AppendMode,
}

impl Default for WriterOptions {
    fn default() -> Self {
        WriterOptions {
            seed: None,
            clock: Box::new(SystemClock),
            range_policy: None,
            reservoir_capacity: DEFAULT_RESERVOIR,
            append_mode: AppendMode::Auto,
        }
    }
}

impl WriterOptions {
    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn range_policy(mut self, policy: RangePolicy) -> Self {
        self.range_policy = Some(policy);
        self
    }

    pub fn reservoir_capacity(mut self, capacity: usize) -> Self {
        self.reservoir_capacity = capacity;
        self
    }

    pub fn append_mode(mut self, mode: AppendMode) -> Self {
        self.append_mode = mode;
        self
    }
}

struct ParamSlot {
    id: ParamId,
    encoder: ParamEncoder,
    stats: Option<RunningStats>,
}

struct CompiledCategory {
    index: CategoryIndex,
    label: Option<String>,
    params: Vec<ParamSlot>,
}

pub struct Writer {
    schema: Arc<LogSchema>,
    fp: Fingerprint,
    writer_id: String,
    next_seq: u64,
    ai: AppendFile,
    human: Option<AppendFile>,
    rng: ChaCha8Rng,
    clock: Box<dyn Clock>,
    policy: Option<RangePolicy>,
    categories: Vec<CompiledCategory>,
    by_name: HashMap<(String, String), usize>,
    jobs: Vec<RenormalizationJob>,
    buf: String,
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Checks the header of an existing AI log (writing one if the file is empty)
/// and returns the next free sequence number for `writer_id`.
fn prepare_ai_log(ai: &AppendFile, fp: Fingerprint, writer_id: &str) -> Result<u64> {
    let io = |e| Error::io(ai.path(), e);
    let mut reader = BufReader::new(ai.file());
    reader.seek(SeekFrom::Start(0)).map_err(io)?;
    let mut first = String::new();
    if reader.read_line(&mut first).map_err(io)? == 0 {
        ai.append(format!("{}\n", header_line(fp)).as_bytes())?;
        return Ok(0);
    }
    let found = match parse_header(first.trim_end_matches('\n')) {
        Some(Ok(found)) => found,
        _ => {
            return Err(Error::MalformedLine {
                line: 1,
                reason: "missing `#mlog v1 fp=` header".into(),
            })
        }
    };
    if found != fp {
        return Err(Error::SchemaMismatch {
            expected: fp.to_string(),
            found: found.to_string(),
        });
    }
    let mut next = 0;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io)? == 0 {
            break;
        }
        let mut fields = line.splitn(4, '|');
        let (_, w, s) = (fields.next(), fields.next(), fields.next());
        if w == Some(writer_id) {
            if let Some(seq) = s.and_then(|s| s.parse::<u64>().ok()) {
                next = next.max(seq + 1);
            }
        }
    }
    Ok(next)
}

impl Writer {
    /// Binds a writer to `schema` and the given sinks. An empty AI log gets a
    /// `#mlog v1 fp=<fingerprint>` header; an existing one must carry the
    /// schema's fingerprint.
    pub fn open(
        schema: impl Into<Arc<LogSchema>>,
        ai_path: impl AsRef<Path>,
        human_path: Option<&Path>,
        writer_id: &str,
        options: WriterOptions,
    ) -> Result<Writer> {
        let schema = schema.into();
        let fp = schema.fingerprint()?;
        if !is_valid_writer_id(writer_id) {
            return Err(Error::InvalidArgument(format!(
                "writer id `{writer_id}` must be non-empty and use only [A-Za-z0-9_.-]"
            )));
        }
        if options.reservoir_capacity == 0 {
            return Err(Error::InvalidArgument("reservoir capacity must be positive".into()));
        }
        let ai = AppendFile::open(ai_path.as_ref(), options.append_mode)?;
        ai.lock()?;
        let prepared = prepare_ai_log(&ai, fp, writer_id);
        ai.unlock()?;
        let next_seq = prepared?;
        let human = human_path
            .map(|p| AppendFile::open(p, options.append_mode))
            .transpose()?;

        let seed = options.seed.unwrap_or_else(rand::random);
        let mut categories = Vec::new();
        let mut by_name = HashMap::new();
        for (index, ty, cat) in schema.categories() {
            let params = cat
                .params
                .iter()
                .enumerate()
                .map(|(pi, spec)| {
                    let encoder = ParamEncoder::from_spec(spec)?;
                    let id = ParamId::new(&ty.name, &cat.name, &spec.name);
                    let stats = (!encoder.is_categorical()).then(|| {
                        let salt =
                            ((index.type_index as u64) << 40) ^ ((index.category_index as u64) << 20) ^ pi as u64;
                        RunningStats::new(id.clone(), options.reservoir_capacity, mix(seed, salt + 1))
                    });
                    Ok(ParamSlot { id, encoder, stats })
                })
                .collect::<Result<Vec<_>>>()?;
            by_name.insert((ty.name.clone(), cat.name.clone()), categories.len());
            categories.push(CompiledCategory {
                index,
                label: cat.intrinsic_label.clone(),
                params,
            });
        }

        Ok(Writer {
            schema,
            fp,
            writer_id: writer_id.to_string(),
            next_seq,
            ai,
            human,
            rng: ChaCha8Rng::seed_from_u64(mix(seed, 0)),
            clock: options.clock,
            policy: options.range_policy,
            categories,
            by_name,
            jobs: Vec::new(),
            buf: String::new(),
        })
    }

    pub fn schema(&self) -> &LogSchema {
        &self.schema
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fp
    }

    pub fn writer_id(&self) -> &str {
        &self.writer_id
    }

    /// Renormalization jobs requested by the traverse strategy so far.
    pub fn pending_jobs(&self) -> &[RenormalizationJob] {
        &self.jobs
    }

    pub fn take_jobs(&mut self) -> Vec<RenormalizationJob> {
        std::mem::take(&mut self.jobs)
    }

    pub fn stats(&self, id: &ParamId) -> Option<&RunningStats> {
        let ci = *self.by_name.get(&(id.type_name.clone(), id.category.clone()))?;
        self.categories[ci]
            .params
            .iter()
            .find(|p| p.id == *id)
            .and_then(|p| p.stats.as_ref())
    }

    /// Appends one event. `identifying` holds one token per identifying field
    /// and `params` one value per parameter, both in schema order. Nothing is
    /// written when the call fails.
    pub fn log_event<S: AsRef<str>>(
        &mut self,
        type_name: &str,
        category: &str,
        identifying: &[S],
        params: &[RawValue],
        human_text: Option<&str>,
    ) -> Result<LinkId> {
        let ci = *self
            .by_name
            .get(&(type_name.to_string(), category.to_string()))
            .ok_or_else(|| Error::UnknownTypeOrCategory {
                type_name: type_name.to_string(),
                category: category.to_string(),
            })?;
        let cat = &self.categories[ci];
        if params.len() != cat.params.len() {
            return Err(Error::ArityMismatch {
                what: format!("parameters of {type_name}.{category}"),
                expected: cat.params.len(),
                found: params.len(),
            });
        }

        // Validate everything before touching writer state.
        let mut encoded = Vec::new();
        let mut raw = Vec::with_capacity(identifying.len() + params.len());
        encode_identifying(&self.schema, identifying, &mut encoded, &mut raw)?;
        for (slot, value) in cat.params.iter().zip(params) {
            let value = slot.encoder.raw_value(&slot.id.param, value)?;
            if let (ParamEncoder::Minmax(b), RawValue::Number(x), None) = (&slot.encoder, &value, &self.policy) {
                if !b.contains(*x) {
                    return Err(Error::OutOfRange {
                        value: *x,
                        min: b.min,
                        max: b.max,
                    });
                }
            }
            raw.push(value);
        }

        let n_fields = self.schema.identifying_fields.len();
        let mut markers = Vec::new();
        let cat = &mut self.categories[ci];
        for (slot, value) in cat.params.iter_mut().zip(&raw[n_fields..]) {
            if let (Some(stats), RawValue::Number(x)) = (slot.stats.as_mut(), value) {
                stats.observe(*x)?;
                if let (ParamEncoder::Minmax(bounds), Some(policy)) = (&slot.encoder, &self.policy) {
                    if !bounds.contains(*x) {
                        let spec = ParameterSpec::minmax(&slot.id.param, Level::Ratio, bounds.min, bounds.max);
                        match apply_policy(stats, &spec, policy, *x)? {
                            PolicyOutcome::Traverse(job) => {
                                slot.encoder = ParamEncoder::Minmax(job.new_bounds);
                                self.jobs.push(job);
                            }
                            PolicyOutcome::Ignore { new_bounds, .. } => {
                                slot.encoder = ParamEncoder::Minmax(new_bounds);
                                markers.push(EncodingMarker {
                                    param_id: slot.id.clone(),
                                    change: EncodingChange::Bounds(new_bounds),
                                });
                            }
                            PolicyOutcome::Robust {
                                encoding,
                                center,
                                scale,
                            } => {
                                let cs = CenterScale { center, scale };
                                slot.encoder = if encoding == Encoding::Sigmoid {
                                    ParamEncoder::Sigmoid(cs)
                                } else {
                                    ParamEncoder::Tanh(cs)
                                };
                                markers.push(EncodingMarker {
                                    param_id: slot.id.clone(),
                                    change: EncodingChange::Squash {
                                        encoding,
                                        center,
                                        scale,
                                    },
                                });
                            }
                        }
                    }
                }
            }
            match (&slot.encoder, value) {
                // A single observation has no spread yet; it sits at the median.
                (ParamEncoder::Quantile, _) if slot.stats.as_ref().is_some_and(|s| s.count() < 2) => encoded.push(0.0),
                _ => slot.encoder.encode(
                    &slot.id.param,
                    value,
                    slot.stats.as_ref().map(|s| &s.quantiles),
                    &mut encoded,
                )?,
            }
        }
        let category_index = cat.index;
        let label = cat.label.clone();

        self.buf.clear();
        for marker in markers {
            let record = self.next_record(
                CategoryIndex {
                    type_index: META_TYPE_INDEX,
                    category_index: 0,
                },
                Vec::new(),
                marker.to_raw(),
                None,
            );
            record.write_line(&mut self.buf);
            self.buf.push('\n');
        }
        let record = self.next_record(category_index, encoded, raw, label);
        record.write_line(&mut self.buf);
        self.buf.push('\n');
        self.ai.append(self.buf.as_bytes())?;

        if let (Some(human), Some(text)) = (&self.human, human_text) {
            let line = human_line(record.timestamp_us, record.link_id, text);
            human.append(line.as_bytes())?;
        }
        Ok(record.link_id)
    }

    fn next_record(
        &mut self,
        category: CategoryIndex,
        encoded: Vec<f64>,
        raw: Vec<RawValue>,
        label: Option<String>,
    ) -> AiLogRecord {
        let record = AiLogRecord {
            schema_fp: self.fp,
            writer_id: self.writer_id.clone(),
            seq: self.next_seq,
            timestamp_us: self.clock.now_micros(),
            link_id: LinkId(self.rng.gen()),
            category,
            encoded,
            raw,
            label,
        };
        self.next_seq += 1;
        record
    }
}

pub fn format_timestamp(timestamp_us: u64) -> String {
    match chrono::DateTime::from_timestamp_micros(timestamp_us as i64) {
        Some(t) => t.format("%Y-%m-%dT%H:%M:%S%.6fZ").to_string(),
        None => format!("{timestamp_us}us"),
    }
}

/// `<ISO8601Z> [<link_id>] <text>` with line breaks in `text` flattened to
/// spaces, LF-terminated.
pub fn human_line(timestamp_us: u64, link_id: LinkId, text: &str) -> String {
    let text: String = text
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    format!("{} [{link_id}] {text}\n", format_timestamp(timestamp_us))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    Count,
    Sum,
    Mean,
    Max,
}

impl std::str::FromStr for Reducer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(Reducer::Count),
            "sum" => Ok(Reducer::Sum),
            "mean" => Ok(Reducer::Mean),
            "max" => Ok(Reducer::Max),
            _ => Err(Error::InvalidArgument(format!("unknown reducer `{s}`"))),
        }
    }
}

/// Collapses a variable-length collection into one scalar so that entries keep
/// a fixed number of parameters. `count` accepts any values; the others need
/// numbers. The sum and max of an empty list are 0.
pub fn reduce_dynamic(values: &[RawValue], reducer: Reducer) -> Result<f64> {
    if reducer == Reducer::Count {
        return Ok(values.len() as f64);
    }
    let numbers = values
        .iter()
        .map(|v| match v {
            RawValue::Number(x) => Ok(*x),
            RawValue::Token(t) => t
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("`{t}` is not a number"))),
            RawValue::Missing => Err(Error::InvalidArgument("missing value".into())),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(match reducer {
        Reducer::Count => unreachable!(),
        Reducer::Sum => numbers.iter().sum(),
        Reducer::Mean => {
            if numbers.is_empty() {
                return Err(Error::EmptyInput);
            }
            numbers.iter().sum::<f64>() / numbers.len() as f64
        }
        Reducer::Max => numbers
            .iter()
            .copied()
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
            .unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_examples() {
        let procs: Vec<RawValue> = ["p1", "p2", "p3"].into_iter().map(RawValue::from).collect();
        assert_eq!(reduce_dynamic(&procs, Reducer::Count).unwrap(), 3.0);
        assert_eq!(reduce_dynamic(&[], Reducer::Count).unwrap(), 0.0);
        assert_eq!(reduce_dynamic(&[2.0.into(), 4.0.into()], Reducer::Mean).unwrap(), 3.0);
        assert_eq!(reduce_dynamic(&[], Reducer::Mean).unwrap_err().code(), "EMPTY_INPUT");
        assert_eq!(reduce_dynamic(&[2.0.into(), (-4.0).into()], Reducer::Max).unwrap(), 2.0);
        assert_eq!(reduce_dynamic(&[1.5.into(), 4.0.into()], Reducer::Sum).unwrap(), 5.5);
        assert!(reduce_dynamic(&procs, Reducer::Sum).is_err());
    }

    #[test]
    fn human_line_format() {
        assert_eq!(
            human_line(1_000_000, LinkId(0xab), "two\nlines"),
            "1970-01-01T00:00:01.000000Z [000000000000000000000000000000ab] two lines\n"
        );
    }

    #[test]
    fn step_clock_advances() {
        let mut c = StepClock::new(10, 5);
        assert_eq!([c.now_micros(), c.now_micros(), c.now_micros()], [10, 15, 20]);
    }
}
