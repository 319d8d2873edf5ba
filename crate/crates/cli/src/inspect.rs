// SPDX-License-Identifier: Apache-2.0

use std::io::{self, Write};

use mlog_core::emitter::format_timestamp;
use mlog_core::encoders::one_hot_decode;
use mlog_core::schema::{vector_layout, SegmentKind};
use mlog_core::{AiLogRecord, LogSchema};

/// Writes one record as a header line followed by one line per segment.
///
/// ```text
/// 2026-01-01T00:00:00.000000Z ingest#0 info.job_submit [link] label=-
///   level        INFO
///   input_size   0.837681            raw 1256521728
/// ```
pub fn write_record(out: &mut impl Write, schema: &LogSchema, r: &AiLogRecord) -> io::Result<()> {
    let ts = format_timestamp(r.timestamp_us);
    if r.is_meta() {
        let raw: Vec<String> = r.raw.iter().map(ToString::to_string).collect();
        return writeln!(
            out,
            "{ts} {}#{} marker [{}] {}",
            r.writer_id,
            r.seq,
            r.link_id,
            raw.join(" ")
        );
    }
    let Some((ty, cat)) = schema.category_at(r.category) else {
        return writeln!(
            out,
            "{ts} {}#{} category {} not in schema",
            r.writer_id, r.seq, r.category
        );
    };
    let layout = vector_layout(schema, &ty.name, &cat.name).expect("category resolved above");
    writeln!(
        out,
        "{ts} {}#{} {}.{} [{}] label={}",
        r.writer_id,
        r.seq,
        ty.name,
        cat.name,
        r.link_id,
        r.label.as_deref().unwrap_or("-")
    )?;
    let mut raw = r.raw.iter();
    for (seg, field) in layout.segments.iter().zip(
        schema
            .identifying_fields
            .iter()
            .map(Some)
            .chain(std::iter::repeat(None)),
    ) {
        let values = &r.encoded[seg.range()];
        let raw_value = raw.next().map(ToString::to_string).unwrap_or_default();
        match (seg.kind, field) {
            (SegmentKind::Identifying, Some(field)) => {
                let bits: Vec<u8> = values
                    .iter()
                    .map(|v| {
                        if *v == 1.0 {
                            1
                        } else if *v == 0.0 {
                            0
                        } else {
                            2
                        }
                    })
                    .collect();
                let token = one_hot_decode(&bits, &field.vocabulary).unwrap_or("?");
                writeln!(out, "  {:<16} {token}", field.name)?;
            }
            _ => {
                let enc: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(out, "  {:<16} {:<32} raw {raw_value}", seg.name, enc.join(" "))?;
            }
        }
    }
    Ok(())
}
