// SPDX-License-Identifier: Apache-2.0

//! Bundled HDFS-style example: a schema, conversion templates and a short
//! legacy log.

use crate::schema::LogSchema;

pub const HDFS_SCHEMA_JSON: &str = include_str!("../data/hdfs_example.json");
pub const HDFS_TEMPLATES: &str = include_str!("../data/hdfs_templates.txt");
pub const HDFS_LEGACY_LOG: &str = include_str!("../data/hdfs_legacy.log");

pub fn hdfs_schema() -> LogSchema {
    LogSchema::from_json_str(HDFS_SCHEMA_JSON, "hdfs_example.json").expect("bundled schema parses")
}
