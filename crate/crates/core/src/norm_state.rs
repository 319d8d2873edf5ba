// SPDX-License-Identifier: Apache-2.0

//! Runtime normalization state and the strategies for values that escape the
//! current min-max range.
//!
//! * `traverse`: widen the bounds and rewrite every earlier record of the
//!   parameter from its retained raw value ([`renormalize_log`]).
//! * `ignore`: widen the bounds for future records only; earlier records keep
//!   the old scale until they age out of whatever window a consumer uses.
//! * `robust`: switch the parameter to sigmoid/tanh squashing centred on the
//!   reservoir median with half the interquartile range as scale.
//!
//! Strategy changes that leave history untouched are written into the log as
//! meta records (see [`EncodingMarker`]) so readers can segment regimes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::encoders::{minmax_normalize, QuantileState, DEFAULT_RESERVOIR};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::record::{parse_header, AiLogRecord, RawValue};
use crate::schema::{is_valid_name, Bounds, Encoding, LogSchema, ParameterSpec};

/// `type.category.param` path of a parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub type_name: String,
    pub category: String,
    pub param: String,
}

impl ParamId {
    pub fn new(type_name: &str, category: &str, param: &str) -> Self {
        ParamId {
            type_name: type_name.into(),
            category: category.into(),
            param: param.into(),
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.type_name, self.category, self.param)
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('.').collect();
        match parts.as_slice() {
            [t, c, p] if [t, c, p].iter().all(|x| is_valid_name(x)) => Ok(ParamId::new(t, c, p)),
            _ => Err(Error::InvalidArgument(format!(
                "`{s}` is not a type.category.param path"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeEvent {
    None,
    ExpandedMin,
    ExpandedMax,
}

#[derive(Debug, Clone)]
pub struct RunningStats {
    pub param_id: ParamId,
    bounds: Option<(f64, f64)>,
    count: u64,
    pub quantiles: QuantileState,
}

impl RunningStats {
    pub fn new(param_id: ParamId, reservoir: usize, seed: u64) -> Self {
        RunningStats {
            param_id,
            bounds: None,
            count: 0,
            quantiles: QuantileState::new(reservoir, seed),
        }
    }

    pub fn with_default_reservoir(param_id: ParamId, seed: u64) -> Self {
        Self::new(param_id, DEFAULT_RESERVOIR, seed)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn observed_min(&self) -> Option<f64> {
        self.bounds.map(|b| b.0)
    }

    pub fn observed_max(&self) -> Option<f64> {
        self.bounds.map(|b| b.1)
    }

    /// Folds `x` into the running bounds and the quantile reservoir. The first
    /// observation defines both bounds and reports `ExpandedMax`.
    pub fn observe(&mut self, x: f64) -> Result<RangeEvent> {
        if !x.is_finite() {
            return Err(Error::NonfiniteValue(x));
        }
        self.quantiles.observe(x)?;
        self.count += 1;
        let event = match self.bounds {
            None => {
                self.bounds = Some((x, x));
                RangeEvent::ExpandedMax
            }
            Some((lo, hi)) if x > hi => {
                self.bounds = Some((lo, x));
                RangeEvent::ExpandedMax
            }
            Some((lo, hi)) if x < lo => {
                self.bounds = Some((x, hi));
                RangeEvent::ExpandedMin
            }
            Some(_) => RangeEvent::None,
        };
        Ok(event)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeStrategy {
    Traverse,
    Ignore,
    Robust,
}

impl FromStr for RangeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traverse" => Ok(RangeStrategy::Traverse),
            "ignore" => Ok(RangeStrategy::Ignore),
            "robust" => Ok(RangeStrategy::Robust),
            _ => Err(Error::InvalidArgument(format!("unknown range strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangePolicy {
    pub strategy: RangeStrategy,
    /// Fraction of the new range added beyond the escaping value (traverse
    /// and ignore).
    pub expansion_margin: f64,
    /// Squashing function used by the robust strategy.
    pub robust_encoding: Encoding,
}

pub const MAX_EXPANSION_MARGIN: f64 = 10.0;

impl RangePolicy {
    pub fn new(strategy: RangeStrategy) -> Self {
        RangePolicy {
            strategy,
            expansion_margin: 0.0,
            robust_encoding: Encoding::Tanh,
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        if !(0.0..MAX_EXPANSION_MARGIN).contains(&margin) {
            return Err(Error::InvalidArgument(format!(
                "expansion margin {margin} outside [0, {MAX_EXPANSION_MARGIN})"
            )));
        }
        self.expansion_margin = margin;
        Ok(self)
    }

    pub fn with_robust_encoding(mut self, encoding: Encoding) -> Result<Self> {
        if !matches!(encoding, Encoding::Sigmoid | Encoding::Tanh) {
            return Err(Error::InvalidArgument(format!(
                "robust encoding must be sigmoid or tanh, got {encoding}"
            )));
        }
        self.robust_encoding = encoding;
        Ok(self)
    }
}

/// Request to rewrite all earlier records of a parameter with new bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormalizationJob {
    pub param_id: ParamId,
    pub new_bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyOutcome {
    Traverse(RenormalizationJob),
    Ignore {
        new_bounds: Bounds,
        inconsistent: bool,
    },
    Robust {
        encoding: Encoding,
        center: f64,
        scale: f64,
    },
}

fn expand(bounds: Bounds, x: f64, margin: f64) -> Bounds {
    if x > bounds.max {
        Bounds::new(bounds.min, x + margin * (x - bounds.min))
    } else {
        Bounds::new(x - margin * (bounds.max - x), bounds.max)
    }
}

/// Decides what to do with a value outside the current bounds of a min-max
/// parameter. `spec` is the parameter's current effective specification.
pub fn apply_policy(stats: &RunningStats, spec: &ParameterSpec, policy: &RangePolicy, x: f64) -> Result<PolicyOutcome> {
    let bounds = match (spec.encoding, spec.bounds) {
        (Encoding::Minmax, Some(b)) => b,
        _ => {
            return Err(Error::UnsupportedForEncoding {
                param: stats.param_id.to_string(),
                encoding: spec.encoding.to_string(),
            })
        }
    };
    if !x.is_finite() {
        return Err(Error::NonfiniteValue(x));
    }
    if bounds.contains(x) {
        return Err(Error::InvalidArgument(format!(
            "{x} lies inside [{}, {}]; no policy applies",
            bounds.min, bounds.max
        )));
    }
    Ok(match policy.strategy {
        RangeStrategy::Traverse => PolicyOutcome::Traverse(RenormalizationJob {
            param_id: stats.param_id.clone(),
            new_bounds: expand(bounds, x, policy.expansion_margin),
        }),
        RangeStrategy::Ignore => PolicyOutcome::Ignore {
            new_bounds: expand(bounds, x, policy.expansion_margin),
            inconsistent: true,
        },
        RangeStrategy::Robust => {
            let q = &stats.quantiles;
            let (center, iqr) = match (q.median(), q.iqr()) {
                (Some(m), Some(i)) => (m, i),
                _ => return Err(Error::InsufficientState(q.count())),
            };
            PolicyOutcome::Robust {
                encoding: policy.robust_encoding,
                center,
                scale: (iqr / 2.0).max(1e-9),
            }
        }
    })
}

/// In-log record announcing that a parameter's encoding changed without a
/// history rewrite. Raw layout: `[param path, kind, a, b]` where kind is
/// `bounds` (a, b = min, max) or the new squashing encoding (a, b = center,
/// scale).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMarker {
    pub param_id: ParamId,
    pub change: EncodingChange,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodingChange {
    Bounds(Bounds),
    Squash {
        encoding: Encoding,
        center: f64,
        scale: f64,
    },
}

impl EncodingMarker {
    pub fn to_raw(&self) -> Vec<RawValue> {
        let (kind, a, b) = match &self.change {
            EncodingChange::Bounds(bounds) => ("bounds", bounds.min, bounds.max),
            EncodingChange::Squash {
                encoding,
                center,
                scale,
            } => (encoding.as_str(), *center, *scale),
        };
        vec![
            RawValue::Token(self.param_id.to_string()),
            RawValue::Token(kind.to_string()),
            RawValue::Token(a.to_string()),
            RawValue::Token(b.to_string()),
        ]
    }

    pub fn from_record(record: &AiLogRecord) -> Option<EncodingMarker> {
        if !record.is_meta() || record.raw.len() != 4 {
            return None;
        }
        let tok = |i: usize| record.raw[i].as_token();
        let param_id: ParamId = tok(0)?.parse().ok()?;
        let a: f64 = tok(2)?.parse().ok()?;
        let b: f64 = tok(3)?.parse().ok()?;
        let change = match tok(1)? {
            "bounds" => EncodingChange::Bounds(Bounds::new(a, b)),
            "sigmoid" => EncodingChange::Squash {
                encoding: Encoding::Sigmoid,
                center: a,
                scale: b,
            },
            "tanh" => EncodingChange::Squash {
                encoding: Encoding::Tanh,
                center: a,
                scale: b,
            },
            _ => return None,
        };
        Some(EncodingMarker { param_id, change })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenormalizeSummary {
    pub records: usize,
    pub rewritten: usize,
    /// Records left alone because their writer had switched the parameter to
    /// a squashing encoding.
    pub skipped_after_switch: usize,
}

/// Rewrites the encoded value of one min-max parameter in every record of an
/// AI log text, recomputing it from the retained raw value with `new_bounds`.
/// All other lines are copied verbatim.
pub fn renormalize_text(
    input: &str,
    schema: &LogSchema,
    param_id: &ParamId,
    new_bounds: Bounds,
) -> Result<(String, RenormalizeSummary)> {
    if new_bounds.min >= new_bounds.max {
        return Err(Error::BoundsOrder {
            min: new_bounds.min,
            max: new_bounds.max,
        });
    }
    let (cat_index, cat) = schema.category(&param_id.type_name, &param_id.category)?;
    let (param_pos, spec) = cat
        .param(&param_id.param)
        .ok_or_else(|| Error::UnknownParameter(param_id.to_string()))?;
    if spec.encoding != Encoding::Minmax {
        return Err(Error::UnsupportedForEncoding {
            param: param_id.to_string(),
            encoding: spec.encoding.to_string(),
        });
    }
    let layout = crate::schema::layout_for(schema, cat);
    let offset = layout.segment(&spec.name).expect("param segment").offset;
    let raw_pos = schema.identifying_fields.len() + param_pos;
    let fp = schema.fingerprint()?;

    let mut switched_writers = std::collections::HashSet::new();
    let mut summary = RenormalizeSummary::default();
    let mut out = String::with_capacity(input.len());
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        if let Some(header) = parse_header(line) {
            let found = header?;
            if found != fp {
                return Err(Error::SchemaMismatch {
                    expected: fp.to_string(),
                    found: found.to_string(),
                });
            }
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let mut record = AiLogRecord::parse(line, line_no, schema)?;
        summary.records += 1;
        if let Some(marker) = EncodingMarker::from_record(&record) {
            if marker.param_id == *param_id && matches!(marker.change, EncodingChange::Squash { .. }) {
                switched_writers.insert(record.writer_id.clone());
            }
        }
        if record.category != cat_index {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        if switched_writers.contains(&record.writer_id) {
            summary.skipped_after_switch += 1;
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let x = record.raw[raw_pos].as_number().ok_or_else(|| Error::RawValueMissing {
            param: param_id.to_string(),
            line: line_no,
        })?;
        if !new_bounds.contains(x) {
            return Err(Error::ValueOutsideNewBounds {
                param: param_id.to_string(),
                value: x,
                min: new_bounds.min,
                max: new_bounds.max,
            });
        }
        record.encoded[offset] = minmax_normalize(x, new_bounds.min, new_bounds.max)?;
        summary.rewritten += 1;
        record.write_line(&mut out);
        out.push('\n');
    }
    Ok((out, summary))
}

/// File form of [`renormalize_text`]: holds an advisory lock on `path`,
/// writes the result to a sibling file and swaps it in atomically.
pub fn renormalize_log(
    path: impl AsRef<Path>,
    schema: &LogSchema,
    param_id: &ParamId,
    new_bounds: Bounds,
) -> Result<RenormalizeSummary> {
    let path = path.as_ref();
    fsutil::with_exclusive_lock(path, || {
        let input = fsutil::read_to_string(path)?;
        let (output, summary) = renormalize_text(&input, schema, param_id, new_bounds)?;
        if output != input {
            fsutil::write_atomically(path, output.as_bytes())?;
        }
        Ok(summary)
    })
}
