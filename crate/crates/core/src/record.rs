// SPDX-License-Identifier: Apache-2.0

//! The AI log record and its line format.
//!
//! ```text
//! #mlog v1 fp=<fp16>
//! <fp16>|<writer_id>|<seq>|<timestamp_us>|<link_id32hex>|<type_idx>.<cat_idx>|<e1,e2,...>|<r1,r2,...>|<label>
//! ```
//!
//! Encoded values are printed with exactly six fractional digits, raw numbers
//! in their shortest round-trip decimal form, and raw tokens and labels with
//! `%`, `|`, `,`, CR and LF percent-encoded. An empty raw item is a missing
//! value. Lines are ASCII apart from non-ASCII characters inside raw tokens.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::schema::{CategoryIndex, Fingerprint, LogSchema};

pub const HEADER_PREFIX: &str = "#mlog v1 fp=";

/// Type index reserved for in-log meta records (encoding-change markers).
pub const META_TYPE_INDEX: u32 = u32::MAX;

pub fn header_line(fp: Fingerprint) -> String {
    format!("{HEADER_PREFIX}{fp}")
}

pub fn parse_header(line: &str) -> Option<Result<Fingerprint>> {
    line.strip_prefix(HEADER_PREFIX).map(str::parse)
}

/// 128-bit identifier shared by an AI record and its human-readable line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub u128);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for LinkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(Error::Parse {
                context: "link id".into(),
                message: format!("`{s}` is not 32 lowercase hex digits"),
            });
        }
        Ok(LinkId(u128::from_str_radix(s, 16).expect("validated hex")))
    }
}

/// A raw (pre-encoding) value retained alongside the encoded vector.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Token(String),
    Number(f64),
    Missing,
}

impl RawValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            RawValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            RawValue::Token(t) => Some(t),
            _ => None,
        }
    }
}

impl From<f64> for RawValue {
    fn from(x: f64) -> Self {
        RawValue::Number(x)
    }
}

impl From<i64> for RawValue {
    fn from(x: i64) -> Self {
        RawValue::Number(x as f64)
    }
}

impl From<&str> for RawValue {
    fn from(t: &str) -> Self {
        RawValue::Token(t.to_string())
    }
}

impl From<String> for RawValue {
    fn from(t: String) -> Self {
        RawValue::Token(t)
    }
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Token(t) => f.write_str(&escape(t)),
            RawValue::Number(x) => write!(f, "{x}"),
            RawValue::Missing => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AiLogRecord {
    pub schema_fp: Fingerprint,
    pub writer_id: String,
    pub seq: u64,
    pub timestamp_us: u64,
    pub link_id: LinkId,
    pub category: CategoryIndex,
    pub encoded: Vec<f64>,
    pub raw: Vec<RawValue>,
    pub label: Option<String>,
}

impl AiLogRecord {
    pub fn is_meta(&self) -> bool {
        self.category.type_index == META_TYPE_INDEX
    }

    /// Ordering key for merged streams.
    pub fn order_key(&self) -> (u64, &str, u64) {
        (self.timestamp_us, self.writer_id.as_str(), self.seq)
    }

    pub fn to_line(&self) -> String {
        let mut out = String::with_capacity(96 + 10 * self.encoded.len());
        self.write_line(&mut out);
        out
    }

    /// Appends the record line, without the trailing LF.
    pub fn write_line(&self, out: &mut String) {
        let _ = write!(
            out,
            "{}|{}|{}|{}|{}|{}|",
            self.schema_fp, self.writer_id, self.seq, self.timestamp_us, self.link_id, self.category
        );
        write_encoded(out, &self.encoded);
        out.push('|');
        for (i, raw) in self.raw.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{raw}");
        }
        out.push('|');
        if let Some(label) = &self.label {
            out.push_str(&escape(label));
        }
    }

    /// Parses one record line against `schema`, which decides whether each
    /// raw item is a token or a number and how wide the encoded block is.
    pub fn parse(line: &str, line_no: usize, schema: &LogSchema) -> Result<AiLogRecord> {
        let bad = |reason: String| Error::MalformedLine { line: line_no, reason };
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 9 {
            return Err(bad(format!("expected 9 `|`-separated fields, found {}", fields.len())));
        }
        let schema_fp: Fingerprint = fields[0].parse().map_err(|e: Error| bad(e.to_string()))?;
        let writer_id = fields[1].to_string();
        if !crate::schema::is_valid_writer_id(&writer_id) {
            return Err(bad(format!("invalid writer id `{writer_id}`")));
        }
        let seq = parse_u64(fields[2]).ok_or_else(|| bad(format!("invalid seq `{}`", fields[2])))?;
        let timestamp_us = parse_u64(fields[3]).ok_or_else(|| bad(format!("invalid timestamp `{}`", fields[3])))?;
        let link_id: LinkId = fields[4].parse().map_err(|e: Error| bad(e.to_string()))?;
        let category =
            parse_category(fields[5]).ok_or_else(|| bad(format!("invalid category index `{}`", fields[5])))?;

        let encoded = if fields[6].is_empty() {
            Vec::new()
        } else {
            fields[6]
                .split(',')
                .map(|v| parse_encoded(v).ok_or_else(|| bad(format!("invalid encoded value `{v}`"))))
                .collect::<Result<Vec<_>>>()?
        };
        let raw_items: Vec<&str> = fields[7].split(',').collect();

        let raw = if category.type_index == META_TYPE_INDEX {
            if !encoded.is_empty() {
                return Err(bad("meta record carries encoded values".into()));
            }
            raw_items
                .iter()
                .map(|t| decode_token(t, line_no))
                .collect::<Result<Vec<_>>>()?
        } else {
            let (_, cat) = schema
                .category_at(category)
                .ok_or_else(|| bad(format!("category index {category} not in schema")))?;
            let expected = crate::schema::layout_for(schema, cat).total_width;
            if encoded.len() != expected {
                return Err(Error::WidthMismatch {
                    line: line_no,
                    expected,
                    found: encoded.len(),
                });
            }
            let n_fields = schema.identifying_fields.len();
            let arity = n_fields + cat.params.len();
            let raw_items: &[&str] = if arity == 0 && raw_items == [""] {
                &[]
            } else {
                &raw_items
            };
            if raw_items.len() != arity {
                return Err(bad(format!("expected {arity} raw values, found {}", raw_items.len())));
            }
            raw_items
                .iter()
                .enumerate()
                .map(|(i, item)| {
                    let numeric = i >= n_fields && !cat.params[i - n_fields].encoding.is_categorical();
                    if item.is_empty() {
                        Ok(RawValue::Missing)
                    } else if numeric {
                        item.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .map(RawValue::Number)
                            .ok_or_else(|| bad(format!("invalid raw number `{item}`")))
                    } else {
                        decode_token(item, line_no)
                    }
                })
                .collect::<Result<Vec<_>>>()?
        };

        let label = if fields[8].is_empty() {
            None
        } else {
            Some(unescape(fields[8]).ok_or_else(|| bad(format!("invalid label escape `{}`", fields[8])))?)
        };

        Ok(AiLogRecord {
            schema_fp,
            writer_id,
            seq,
            timestamp_us,
            link_id,
            category,
            encoded,
            raw,
            label,
        })
    }
}

fn decode_token(item: &str, line_no: usize) -> Result<RawValue> {
    if item.is_empty() {
        return Ok(RawValue::Missing);
    }
    unescape(item).map(RawValue::Token).ok_or_else(|| Error::MalformedLine {
        line: line_no,
        reason: format!("invalid escape in `{item}`"),
    })
}

fn parse_u64(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn parse_category(s: &str) -> Option<CategoryIndex> {
    let (t, c) = s.split_once('.')?;
    Some(CategoryIndex {
        type_index: parse_u64(t)?.try_into().ok()?,
        category_index: parse_u64(c)?.try_into().ok()?,
    })
}

fn parse_encoded(s: &str) -> Option<f64> {
    let (int, frac) = s.split_once('.')?;
    let digits = int.strip_prefix('-').unwrap_or(int);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if frac.len() != 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Fixed six-fractional-digit rendering; negative zero prints as zero.
pub fn format_encoded(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub(crate) fn write_encoded(out: &mut String, encoded: &[f64]) {
    for (i, v) in encoded.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_encoded(*v));
    }
}

pub fn escape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for ch in token.chars() {
        match ch {
            '%' => out.push_str("%25"),
            '|' => out.push_str("%7C"),
            ',' => out.push_str("%2C"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '%' {
            out.push(ch);
            continue;
        }
        let hi = chars.next()?.to_digit(16)?;
        let lo = chars.next()?.to_digit(16)?;
        out.push(char::from_u32(hi * 16 + lo)?);
    }
    Some(out)
}
