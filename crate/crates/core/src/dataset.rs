// SPDX-License-Identifier: Apache-2.0

//! Read side: parsing AI logs, merging writers into one ordered stream,
//! attaching labels, and turning streams into training matrices.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::record::{format_encoded, parse_header, AiLogRecord, LinkId};
use crate::schema::{layout_for, CategoryIndex, Fingerprint, LogSchema};

/// Records sharing one schema fingerprint, ordered by
/// `(timestamp, writer_id, seq)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordStream {
    pub fingerprint: Fingerprint,
    pub records: Vec<AiLogRecord>,
}

impl RecordStream {
    pub fn new(fingerprint: Fingerprint) -> Self {
        RecordStream {
            fingerprint,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stable sort into stream order.
    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    }

    /// Records that carry an event, skipping encoding markers.
    pub fn events(&self) -> impl Iterator<Item = &AiLogRecord> {
        self.records.iter().filter(|r| !r.is_meta())
    }
}

/// Parses AI log text. Blank lines are skipped; a file holding only a header,
/// or nothing at all, yields an empty stream.
pub fn parse_ai_log(text: &str, schema: &LogSchema) -> Result<RecordStream> {
    let fp = schema.fingerprint()?;
    let mut stream = RecordStream::new(fp);
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(header) = parse_header(line) {
            let found = header.map_err(|e| Error::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
            if found != fp {
                return Err(Error::SchemaMismatch {
                    expected: fp.to_string(),
                    found: found.to_string(),
                });
            }
            seen_header = true;
            continue;
        }
        if !seen_header {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: "record before `#mlog v1 fp=` header".into(),
            });
        }
        let record = AiLogRecord::parse(line, line_no, schema)?;
        if record.schema_fp != fp {
            return Err(Error::SchemaMismatch {
                expected: fp.to_string(),
                found: record.schema_fp.to_string(),
            });
        }
        stream.records.push(record);
    }
    stream.sort();
    Ok(stream)
}

pub fn read_ai_log(path: impl AsRef<Path>, schema: &LogSchema) -> Result<RecordStream> {
    parse_ai_log(&fsutil::read_to_string(path.as_ref())?, schema)
}

/// K-way merge of sorted streams. Records with identical keys keep the order
/// of their input streams.
pub fn merge_streams(streams: Vec<RecordStream>) -> Result<RecordStream> {
    let fp = streams.first().ok_or(Error::EmptyInput)?.fingerprint;
    if let Some(other) = streams.iter().find(|s| s.fingerprint != fp) {
        return Err(Error::FingerprintMix(fp.to_string(), other.fingerprint.to_string()));
    }
    let total = streams.iter().map(RecordStream::len).sum();
    let mut sources: Vec<std::vec::IntoIter<AiLogRecord>> = streams
        .into_iter()
        .map(|mut s| {
            s.sort();
            s.records.into_iter()
        })
        .collect();
    let mut heads: Vec<Option<AiLogRecord>> = sources.iter_mut().map(Iterator::next).collect();
    let key = |r: &AiLogRecord, i: usize| Reverse((r.timestamp_us, r.writer_id.clone(), r.seq, i));
    let mut heap: BinaryHeap<_> = heads
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.as_ref().map(|r| key(r, i)))
        .collect();

    let mut out = RecordStream::new(fp);
    out.records.reserve(total);
    while let Some(Reverse((_, _, _, i))) = heap.pop() {
        let record = heads[i].take().expect("heap entry has a head");
        heads[i] = sources[i].next();
        if let Some(next) = &heads[i] {
            heap.push(key(next, i));
        }
        out.records.push(record);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LabelStrategy {
    /// The schema's `intrinsic_label` of each record's category.
    Intrinsic,
    /// Outcomes observed after the fact, keyed by link id.
    Delayed(HashMap<LinkId, String>),
    /// A human-supplied table keyed by link id.
    Manual(HashMap<LinkId, String>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelReport {
    pub labeled: usize,
    /// Table entries whose link id does not occur in the stream, sorted.
    pub unknown_link_ids: Vec<LinkId>,
}

/// Sets record labels per `strategy`. Records the strategy says nothing about
/// are left untouched. Every label must be in the schema's label vocabulary.
pub fn attach_labels(stream: &mut RecordStream, schema: &LogSchema, strategy: &LabelStrategy) -> Result<LabelReport> {
    let vocab: HashSet<&str> = schema.labels.iter().map(String::as_str).collect();
    let check = |label: &str| {
        if vocab.contains(label) {
            Ok(())
        } else {
            Err(Error::LabelNotInVocab(label.to_string()))
        }
    };
    let mut report = LabelReport::default();
    match strategy {
        LabelStrategy::Intrinsic => {
            let mut by_category = HashMap::new();
            for (index, _, cat) in schema.categories() {
                if let Some(label) = &cat.intrinsic_label {
                    check(label)?;
                    by_category.insert(index, label);
                }
            }
            for record in &mut stream.records {
                if let Some(label) = by_category.get(&record.category) {
                    record.label = Some((*label).clone());
                    report.labeled += 1;
                }
            }
        }
        LabelStrategy::Delayed(table) | LabelStrategy::Manual(table) => {
            for label in table.values() {
                check(label)?;
            }
            let mut used = HashSet::new();
            for record in stream.records.iter_mut().filter(|r| !r.is_meta()) {
                if let Some(label) = table.get(&record.link_id) {
                    record.label = Some(label.clone());
                    used.insert(record.link_id);
                    report.labeled += 1;
                }
            }
            report.unknown_link_ids = table.keys().filter(|id| !used.contains(*id)).copied().collect();
            report.unknown_link_ids.sort();
        }
    }
    Ok(report)
}

/// Reads a `link_id,label` table. A first row of `link_id,label` is taken as
/// a header.
pub fn read_label_table(reader: impl io::Read) -> Result<HashMap<LinkId, String>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut table = HashMap::new();
    for (i, row) in csv.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| Error::MalformedLine {
            line,
            reason: e.to_string(),
        })?;
        if row.len() != 2 {
            return Err(Error::MalformedLine {
                line,
                reason: format!("expected `link_id,label`, found {} columns", row.len()),
            });
        }
        if i == 0 && &row[0] == "link_id" {
            continue;
        }
        let link: LinkId = row[0].trim().parse().map_err(|e: Error| Error::MalformedLine {
            line,
            reason: e.to_string(),
        })?;
        table.insert(link, row[1].trim().to_string());
    }
    Ok(table)
}

pub fn load_label_table(path: impl AsRef<Path>) -> Result<HashMap<LinkId, String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_label_table(file)
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Category {
        type_name: String,
        category: String,
    },
    /// Every category of the schema in one matrix.
    Union,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Category { type_name, category } => write!(f, "{type_name}.{category}"),
            Selector::Union => f.write_str("union"),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "union" {
            return Ok(Selector::Union);
        }
        match s.split_once('.') {
            Some((t, c)) if !t.is_empty() && !c.is_empty() && !c.contains('.') => Ok(Selector::Category {
                type_name: t.to_string(),
                category: c.to_string(),
            }),
            _ => Err(Error::InvalidArgument(format!(
                "selector `{s}` must be `<type>.<category>` or `union`"
            ))),
        }
    }
}

/// A dense numeric matrix with one row per selected record.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Label indices into the schema label vocabulary, present when at least
    /// one selected record is labeled.
    pub labels: Option<Vec<Option<usize>>>,
    pub row_links: Vec<LinkId>,
    /// Window index of each row, for windowed exports.
    pub windows: Option<Vec<usize>>,
    /// Index of the input log each row came from, when requested.
    pub sources: Option<Vec<usize>>,
}

impl DatasetMatrix {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Records the input index of every row, looked up by link id. Rows whose
    /// link is missing from `source_of` get `usize::MAX`.
    pub fn set_sources(&mut self, source_of: &HashMap<LinkId, usize>) {
        self.sources = Some(
            self.row_links
                .iter()
                .map(|l| source_of.get(l).copied().unwrap_or(usize::MAX))
                .collect(),
        );
    }

    /// Writes the matrix as CSV. Columns are `window` (windowed matrices
    /// only), `source` (when set), the encoded columns, then `label` holding
    /// the label index or `-1` for unlabeled rows.
    pub fn write_csv(&self, writer: impl io::Write) -> Result<()> {
        let err = |e: csv::Error| Error::io("<csv>", io::Error::other(e));
        let mut csv = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = Vec::with_capacity(self.width() + 2);
        if self.windows.is_some() {
            header.push("window");
        }
        if self.sources.is_some() {
            header.push("source");
        }
        header.extend(self.columns.iter().map(String::as_str));
        if self.labels.is_some() {
            header.push("label");
        }
        csv.write_record(&header).map_err(err)?;
        let mut cells = Vec::with_capacity(header.len());
        for (i, row) in self.rows.iter().enumerate() {
            cells.clear();
            if let Some(windows) = &self.windows {
                cells.push(windows[i].to_string());
            }
            if let Some(sources) = &self.sources {
                cells.push(sources[i].to_string());
            }
            cells.extend(row.iter().map(|v| format_encoded(*v)));
            if let Some(labels) = &self.labels {
                cells.push(labels[i].map_or_else(|| "-1".to_string(), |l| l.to_string()));
            }
            csv.write_record(&cells).map_err(err)?;
        }
        csv.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Writes `row,link_id` pairs linking matrix rows to log entries.
    pub fn write_links(&self, mut writer: impl io::Write) -> io::Result<()> {
        writeln!(writer, "row,link_id")?;
        for (i, link) in self.row_links.iter().enumerate() {
            writeln!(writer, "{i},{link}")?;
        }
        Ok(())
    }
}

/// Column names of the matrix produced for `selector`. Union matrices start
/// with a one-hot `category=<type>.<category>` block followed by one block per
/// category, named `<type>.<category>:<column>`.
pub fn matrix_columns(schema: &LogSchema, selector: &Selector) -> Result<Vec<String>> {
    match selector {
        Selector::Category { type_name, category } => {
            let (_, cat) = schema.category(type_name, category)?;
            Ok(layout_for(schema, cat).column_names())
        }
        Selector::Union => {
            let mut columns: Vec<String> = schema
                .categories()
                .map(|(_, t, c)| format!("category={}.{}", t.name, c.name))
                .collect();
            for (_, t, c) in schema.categories() {
                for col in layout_for(schema, c).column_names() {
                    columns.push(format!("{}.{}:{col}", t.name, c.name));
                }
            }
            Ok(columns)
        }
    }
}

/// Builds the matrix of `selector` over the event records of `stream`, in
/// stream order.
pub fn to_matrix(stream: &RecordStream, schema: &LogSchema, selector: &Selector) -> Result<DatasetMatrix> {
    let columns = matrix_columns(schema, selector)?;
    let width = columns.len();
    // Category index -> (position among categories, block offset, block width).
    let mut blocks: HashMap<CategoryIndex, (usize, usize, usize)> = HashMap::new();
    match selector {
        Selector::Category { type_name, category } => {
            let (index, cat) = schema.category(type_name, category)?;
            blocks.insert(index, (0, 0, layout_for(schema, cat).total_width));
        }
        Selector::Union => {
            let n = schema.categories().count();
            let mut offset = n;
            for (pos, (index, _, cat)) in schema.categories().enumerate() {
                let w = layout_for(schema, cat).total_width;
                blocks.insert(index, (pos, offset, w));
                offset += w;
            }
        }
    }
    let label_index: HashMap<&str, usize> = schema.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut row_links = Vec::new();
    for record in stream.events() {
        let Some(&(pos, offset, w)) = blocks.get(&record.category) else {
            continue;
        };
        if record.encoded.len() != w {
            return Err(Error::WidthMismatch {
                line: rows.len() + 1,
                expected: w,
                found: record.encoded.len(),
            });
        }
        let row = if *selector == Selector::Union {
            let mut row = vec![0.0; width];
            row[pos] = 1.0;
            row[offset..offset + w].copy_from_slice(&record.encoded);
            row
        } else {
            record.encoded.clone()
        };
        let label = match &record.label {
            Some(l) => Some(
                *label_index
                    .get(l.as_str())
                    .ok_or_else(|| Error::LabelNotInVocab(l.clone()))?,
            ),
            None => None,
        };
        rows.push(row);
        labels.push(label);
        row_links.push(record.link_id);
    }
    if rows.is_empty() {
        return Err(Error::EmptySelection(selector.to_string()));
    }
    let labels = labels.iter().any(Option::is_some).then_some(labels);
    Ok(DatasetMatrix {
        columns,
        rows,
        labels,
        row_links,
        windows: None,
        sources: None,
    })
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    /// Sizes count records.
    Count,
    /// Sizes are microseconds.
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub mode: WindowMode,
    pub size: u64,
    pub stride: u64,
}

impl WindowSpec {
    pub fn new(mode: WindowMode, size: u64, stride: u64) -> Result<Self> {
        if size == 0 || stride == 0 {
            return Err(Error::InvalidArgument("window size and stride must be positive".into()));
        }
        Ok(WindowSpec { mode, size, stride })
    }
}

impl FromStr for WindowSpec {
    type Err = Error;

    /// `count:SIZE:STRIDE` or `duration:SIZE:STRIDE` (microseconds).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("window `{s}` must be `count|duration:SIZE:STRIDE`"));
        let mut parts = s.split(':');
        let mode = match parts.next() {
            Some("count") => WindowMode::Count,
            Some("duration") => WindowMode::Duration,
            _ => return Err(bad()),
        };
        let size = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let stride = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        WindowSpec::new(mode, size, stride)
    }
}

/// Cuts the event records of `stream` into windows. Count windows hold
/// exactly `size` records; duration windows are the half-open intervals
/// `[t0 + i*stride, t0 + i*stride + size)` from the first timestamp `t0` that
/// end by the last timestamp. Trailing partial windows are dropped; duration
/// windows over quiet periods are kept empty.
pub fn window(stream: &RecordStream, spec: WindowSpec) -> Vec<RecordStream> {
    let events: Vec<&AiLogRecord> = stream.events().collect();
    let slice = |records: &[&AiLogRecord]| RecordStream {
        fingerprint: stream.fingerprint,
        records: records.iter().map(|r| (*r).clone()).collect(),
    };
    let mut out = Vec::new();
    match spec.mode {
        WindowMode::Count => {
            let size = spec.size as usize;
            let mut start = 0usize;
            while start + size <= events.len() {
                out.push(slice(&events[start..start + size]));
                start += spec.stride as usize;
            }
        }
        WindowMode::Duration => {
            let (Some(first), Some(last)) = (events.first(), events.last()) else {
                return out;
            };
            let (t0, t_last) = (first.timestamp_us, last.timestamp_us);
            let mut begin = t0;
            while begin.saturating_add(spec.size) <= t_last.saturating_add(1) {
                let end = begin + spec.size;
                let lo = events.partition_point(|r| r.timestamp_us < begin);
                let hi = events.partition_point(|r| r.timestamp_us < end);
                out.push(slice(&events[lo..hi]));
                begin += spec.stride;
            }
        }
    }
    out
}

/// Matrix over all windows, rows repeated for every window they fall in.
pub fn windowed_matrix(
    stream: &RecordStream,
    schema: &LogSchema,
    selector: &Selector,
    spec: WindowSpec,
) -> Result<DatasetMatrix> {
    let mut matrix = DatasetMatrix {
        columns: matrix_columns(schema, selector)?,
        rows: Vec::new(),
        labels: None,
        row_links: Vec::new(),
        windows: Some(Vec::new()),
        sources: None,
    };
    let mut labels = Vec::new();
    for (i, w) in window(stream, spec).iter().enumerate() {
        let part = match to_matrix(w, schema, selector) {
            Ok(m) => m,
            Err(Error::EmptySelection(_)) => continue,
            Err(e) => return Err(e),
        };
        let n = part.len();
        matrix.rows.extend(part.rows);
        matrix.row_links.extend(part.row_links);
        labels.extend(part.labels.unwrap_or_else(|| vec![None; n]));
        matrix
            .windows
            .as_mut()
            .expect("windowed")
            .extend(std::iter::repeat_n(i, n));
    }
    if matrix.rows.is_empty() {
        return Err(Error::EmptySelection(selector.to_string()));
    }
    matrix.labels = labels.iter().any(Option::is_some).then_some(labels);
    Ok(matrix)
}
