// SPDX-License-Identifier: Apache-2.0

//! Machine-learning-ready system logs.
//!
//! Every event is written twice: as a fixed-width, fully numerical record in
//! a shared AI log, and as a free-text line in a human log, linked by a
//! 128-bit id. A versioned [`schema::LogSchema`] fixes the layout of every
//! record: one-hot identifying fields followed by parameters encoded by their
//! level of measurement. Raw values are retained next to the encoded vector
//! so that records can be renormalized or migrated to a newer schema later.

pub mod dataset;
pub mod emitter;
pub mod encoders;
pub mod error;
pub mod evolution;
pub mod fixtures;
pub mod ingest;
pub mod norm_state;
pub mod record;
pub mod schema;
pub mod simulate;

mod fsutil;

pub use dataset::{DatasetMatrix, RecordStream};
pub use error::{Error, Result};
pub use record::{AiLogRecord, LinkId, RawValue};
pub use schema::{Fingerprint, Layout, LogSchema, ParameterSpec};
