// SPDX-License-Identifier: Apache-2.0

//! Conversion of legacy free-text log lines into AI log records.
//!
//! A template is literal text with typed capture slots:
//!
//! ```text
//! id: job_submit
//! pattern: INFO <prog:token> <srv:token>: input size <sz:number> splits <n:number>
//! target: info.job_submit
//! bind: level="INFO" process=prog server=srv input_size=sz splits=n
//! ```
//!
//! `token` slots match a non-empty run of non-whitespace characters, `number`
//! slots an optional sign, digits, and an optional fraction. Literal text
//! must match exactly; a literal `<` is written `\<`. Templates are tried in
//! file order and the first one that matches wins.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use crate::emitter::Writer;
use crate::error::{Error, Result};
use crate::record::{LinkId, RawValue};
use crate::schema::LogSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Token,
    Number,
}

impl SlotKind {
    fn accepts(self, s: &str) -> bool {
        match self {
            SlotKind::Token => !s.is_empty() && !s.chars().any(char::is_whitespace),
            SlotKind::Number => is_number(s),
        }
    }
}

fn is_number(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let all_digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    all_digits(int) && frac.is_none_or(all_digits)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot { name: String, kind: SlotKind },
}

/// Value routed to an identifying field or parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    Slot(String),
    Const(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogTemplate {
    pub id: String,
    pub pattern: String,
    pub type_name: String,
    pub category: String,
    /// One binding per identifying field, in schema order.
    pub fields: Vec<Binding>,
    /// One binding per parameter of the target category, in schema order.
    pub params: Vec<Binding>,
    pieces: Vec<Piece>,
    slot_kinds: Vec<(String, SlotKind)>,
}

fn invalid(id: &str, reason: impl Into<String>) -> Error {
    Error::InvalidTemplate {
        id: id.to_string(),
        reason: reason.into(),
    }
}

fn parse_pattern(id: &str, pattern: &str) -> Result<Vec<Piece>> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'<') => {
                literal.push('<');
                chars.next();
            }
            '<' => {
                let mut body = String::new();
                loop {
                    match chars.next() {
                        Some('>') => break,
                        Some(c) => body.push(c),
                        None => return Err(invalid(id, format!("unterminated slot `<{body}`"))),
                    }
                }
                let (name, kind) = body
                    .split_once(':')
                    .ok_or_else(|| invalid(id, format!("slot `<{body}>` must be `<name:token>` or `<name:number>`")))?;
                let kind = match kind {
                    "token" => SlotKind::Token,
                    "number" => SlotKind::Number,
                    other => return Err(invalid(id, format!("unknown slot kind `{other}`"))),
                };
                if !crate::schema::is_valid_name(name) {
                    return Err(invalid(id, format!("slot name `{name}` is not a plain token")));
                }
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot {
                    name: name.to_string(),
                    kind,
                });
            }
            c => literal.push(c),
        }
    }
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    Ok(pieces)
}

fn parse_bindings(id: &str, text: &str, out: &mut Vec<(String, Binding)>) -> Result<()> {
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| invalid(id, format!("binding `{rest}` must be `name=slot` or `name=\"const\"`")))?;
        let name = rest[..eq].trim().to_string();
        rest = &rest[eq + 1..];
        let binding = if let Some(quoted) = rest.strip_prefix('"') {
            let mut value = String::new();
            let mut chars = quoted.char_indices();
            let end = loop {
                match chars.next() {
                    Some((i, '"')) => break i,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, c)) => value.push(c),
                        None => return Err(invalid(id, "dangling escape in constant")),
                    },
                    Some((_, c)) => value.push(c),
                    None => return Err(invalid(id, format!("unterminated constant for `{name}`"))),
                }
            };
            rest = &quoted[end + 1..];
            Binding::Const(value)
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let slot = rest[..end].to_string();
            rest = &rest[end..];
            Binding::Slot(slot)
        };
        if name.is_empty() {
            return Err(invalid(id, "binding without a name"));
        }
        out.push((name, binding));
        rest = rest.trim_start();
    }
    Ok(())
}

impl LogTemplate {
    /// Checks that every identifying field and parameter of the target is
    /// bound exactly once and that every slot binding names a slot.
    pub fn new(
        schema: &LogSchema,
        id: &str,
        pattern: &str,
        target: &str,
        bindings: &[(String, Binding)],
    ) -> Result<Self> {
        if !crate::schema::is_valid_name(id) {
            return Err(invalid(id, "template id must be a plain token"));
        }
        let pieces = parse_pattern(id, pattern)?;
        let mut slot_kinds = Vec::new();
        let mut seen = HashSet::new();
        for piece in &pieces {
            if let Piece::Slot { name, kind } = piece {
                if !seen.insert(name.clone()) {
                    return Err(invalid(id, format!("slot `{name}` appears twice")));
                }
                slot_kinds.push((name.clone(), *kind));
            }
        }
        let (type_name, category) = target
            .split_once('.')
            .ok_or_else(|| invalid(id, format!("target `{target}` must be `<type>.<category>`")))?;
        let (_, cat) = schema
            .category(type_name, category)
            .map_err(|e| invalid(id, e.to_string()))?;

        let mut bound = HashSet::new();
        for (name, binding) in bindings {
            if !bound.insert(name.as_str()) {
                return Err(invalid(id, format!("`{name}` bound twice")));
            }
            if let Binding::Slot(slot) = binding {
                if !seen.contains(slot) {
                    return Err(invalid(id, format!("`{name}` is bound to unknown slot `{slot}`")));
                }
            }
        }
        let take = |name: &str| {
            bindings
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| b.clone())
                .ok_or_else(|| invalid(id, format!("`{name}` is not bound")))
        };
        let fields = schema
            .identifying_fields
            .iter()
            .map(|f| take(&f.name))
            .collect::<Result<Vec<_>>>()?;
        let params = cat.params.iter().map(|p| take(&p.name)).collect::<Result<Vec<_>>>()?;
        let known: HashSet<&str> = schema
            .identifying_fields
            .iter()
            .map(|f| f.name.as_str())
            .chain(cat.params.iter().map(|p| p.name.as_str()))
            .collect();
        if let Some((name, _)) = bindings.iter().find(|(n, _)| !known.contains(n.as_str())) {
            return Err(invalid(
                id,
                format!("`{name}` is neither an identifying field nor a parameter of {target}"),
            ));
        }
        Ok(LogTemplate {
            id: id.to_string(),
            pattern: pattern.to_string(),
            type_name: type_name.to_string(),
            category: category.to_string(),
            fields,
            params,
            pieces,
            slot_kinds,
        })
    }

    /// Captures in slot order when `line` matches the whole pattern.
    pub fn captures(&self, line: &str) -> Option<Vec<(String, String)>> {
        let mut spans = Vec::with_capacity(self.slot_kinds.len());
        if !match_pieces(&self.pieces, line, 0, &mut spans) {
            return None;
        }
        Some(
            self.slot_kinds
                .iter()
                .zip(spans)
                .map(|((name, _), (a, b))| (name.clone(), line[a..b].to_string()))
                .collect(),
        )
    }

    fn slot_kind(&self, slot: &str) -> Option<SlotKind> {
        self.slot_kinds.iter().find(|(n, _)| n == slot).map(|(_, k)| *k)
    }
}

/// Backtracking matcher; slots try their shortest extent first.
fn match_pieces(pieces: &[Piece], line: &str, pos: usize, spans: &mut Vec<(usize, usize)>) -> bool {
    let Some((piece, rest)) = pieces.split_first() else {
        return pos == line.len();
    };
    match piece {
        Piece::Literal(lit) => {
            line[pos..].starts_with(lit.as_str()) && match_pieces(rest, line, pos + lit.len(), spans)
        }
        Piece::Slot { kind, .. } => {
            let run = line[pos..].find(char::is_whitespace).map_or(line.len(), |i| pos + i);
            let mut ends: Vec<usize> = line[pos..run]
                .char_indices()
                .map(|(i, c)| pos + i + c.len_utf8())
                .collect();
            ends.dedup();
            for end in ends {
                if !kind.accepts(&line[pos..end]) {
                    continue;
                }
                spans.push((pos, end));
                if match_pieces(rest, line, end, spans) {
                    return true;
                }
                spans.pop();
            }
            false
        }
    }
}

/// Parses a template file.
pub fn parse_templates(text: &str, schema: &LogSchema) -> Result<Vec<LogTemplate>> {
    #[derive(Default)]
    struct Block {
        line: usize,
        id: Option<String>,
        pattern: Option<String>,
        target: Option<String>,
        bindings: Vec<(String, Binding)>,
    }
    fn finish(block: Block, schema: &LogSchema, out: &mut Vec<LogTemplate>) -> Result<()> {
        let label = block.id.clone().unwrap_or_else(|| format!("<line {}>", block.line));
        let need = |v: Option<String>, key: &str| v.ok_or_else(|| invalid(&label, format!("missing `{key}:` line")));
        let id = need(block.id, "id")?;
        let pattern = need(block.pattern, "pattern")?;
        let target = need(block.target, "target")?;
        if out.iter().any(|t| t.id == id) {
            return Err(invalid(&id, "duplicate template id"));
        }
        out.push(LogTemplate::new(schema, &id, &pattern, &target, &block.bindings)?);
        Ok(())
    }

    let mut out = Vec::new();
    let mut block: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                finish(b, schema, &mut out)?;
            }
            continue;
        }
        if line.trim_start().starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| Error::Parse {
            context: format!("templates:{}", i + 1),
            message: format!("expected `key: value`, found `{line}`"),
        })?;
        let b = block.get_or_insert_with(|| Block {
            line: i + 1,
            ..Block::default()
        });
        let value = value.strip_prefix(' ').unwrap_or(value);
        let label = b.id.clone().unwrap_or_default();
        let set = |slot: &mut Option<String>| {
            if slot.is_some() {
                return Err(invalid(&label, format!("`{}:` given twice", key.trim())));
            }
            *slot = Some(value.to_string());
            Ok(())
        };
        match key.trim() {
            "id" => set(&mut b.id)?,
            "pattern" => set(&mut b.pattern)?,
            "target" => set(&mut b.target)?,
            "bind" => parse_bindings(&label, value, &mut b.bindings)?,
            other => {
                return Err(Error::Parse {
                    context: format!("templates:{}", i + 1),
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }
    if let Some(b) = block.take() {
        finish(b, schema, &mut out)?;
    }
    Ok(out)
}

pub fn load_templates(path: impl AsRef<Path>, schema: &LogSchema) -> Result<Vec<LogTemplate>> {
    parse_templates(&crate::fsutil::read_to_string(path.as_ref())?, schema)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateMatch {
    /// Position of the template in the list.
    pub index: usize,
    pub id: String,
    pub captures: Vec<(String, String)>,
}

impl TemplateMatch {
    pub fn get(&self, slot: &str) -> Option<&str> {
        self.captures.iter().find(|(n, _)| n == slot).map(|(_, v)| v.as_str())
    }
}

/// The first template in list order that matches `line`.
pub fn match_template(line: &str, templates: &[LogTemplate]) -> Option<TemplateMatch> {
    templates.iter().enumerate().find_map(|(index, t)| {
        t.captures(line).map(|captures| TemplateMatch {
            index,
            id: t.id.clone(),
            captures,
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineOutcome {
    Converted { template: usize, link_id: LinkId },
    Skipped { reason: String },
}

fn resolve(template: &LogTemplate, m: &TemplateMatch, binding: &Binding) -> RawValue {
    match binding {
        Binding::Const(v) => RawValue::Token(v.clone()),
        Binding::Slot(slot) => {
            let text = m.get(slot).expect("bound slots are captured");
            match template.slot_kind(slot) {
                Some(SlotKind::Number) => text
                    .parse::<f64>()
                    .map_or_else(|_| RawValue::Token(text.to_string()), RawValue::Number),
                _ => RawValue::Token(text.to_string()),
            }
        }
    }
}

/// Converts one line. On a match the event is emitted through `writer` with
/// the original line as its human-readable text; otherwise, or when the
/// writer rejects the values, a `line_no<TAB>reason<TAB>line` entry is
/// appended to `skips`. I/O failures are returned as errors.
pub fn convert_line(
    line: &str,
    line_no: usize,
    templates: &[LogTemplate],
    writer: &mut Writer,
    skips: &mut impl Write,
) -> Result<LineOutcome> {
    let reason = match match_template(line, templates) {
        None => "NO_MATCH".to_string(),
        Some(m) => {
            let t = &templates[m.index];
            let ids: Vec<String> = t
                .fields
                .iter()
                .map(|b| match resolve(t, &m, b) {
                    RawValue::Token(s) => s,
                    other => other.to_string(),
                })
                .collect();
            let params: Vec<RawValue> = t.params.iter().map(|b| resolve(t, &m, b)).collect();
            match writer.log_event(&t.type_name, &t.category, &ids, &params, Some(line)) {
                Ok(link_id) => {
                    return Ok(LineOutcome::Converted {
                        template: m.index,
                        link_id,
                    })
                }
                Err(e) if e.is_io() => return Err(e),
                Err(e) => format!("{} ({}): {e}", e.code(), m.id),
            }
        }
    };
    writeln!(skips, "{line_no}\t{reason}\t{line}").map_err(|e| Error::io("<skips>", e))?;
    Ok(LineOutcome::Skipped { reason })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConvertSummary {
    pub total: usize,
    pub converted: usize,
    pub skipped: usize,
    /// Hits per template id, in template order, for templates with hits.
    pub per_template: Vec<(String, usize)>,
}

impl fmt::Display for ConvertSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lines {} converted {} skipped {}",
            self.total, self.converted, self.skipped
        )?;
        for (id, n) in &self.per_template {
            write!(f, "\n  {id}\t{n}")?;
        }
        Ok(())
    }
}

/// Converts every line of `source` in order.
pub fn convert_reader(
    source: impl BufRead,
    templates: &[LogTemplate],
    writer: &mut Writer,
    skips: &mut impl Write,
) -> Result<ConvertSummary> {
    let mut hits = vec![0usize; templates.len()];
    let mut summary = ConvertSummary::default();
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<legacy log>", e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        summary.total += 1;
        match convert_line(line, i + 1, templates, writer, skips)? {
            LineOutcome::Converted { template, .. } => {
                summary.converted += 1;
                hits[template] += 1;
            }
            LineOutcome::Skipped { .. } => summary.skipped += 1,
        }
    }
    summary.per_template = templates
        .iter()
        .zip(hits)
        .filter(|(_, n)| *n > 0)
        .map(|(t, n)| (t.id.clone(), n))
        .collect();
    Ok(summary)
}

pub fn convert_file(
    source: impl AsRef<Path>,
    templates: &[LogTemplate],
    writer: &mut Writer,
    skips: &mut impl Write,
) -> Result<ConvertSummary> {
    let path = source.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    convert_reader(io::BufReader::new(file), templates, writer, skips).map_err(|e| match e {
        Error::Io { path: p, source } if p.as_os_str() == "<legacy log>" => Error::io(path, source),
        e => e,
    })
}
