// SPDX-License-Identifier: Apache-2.0

//! `mlog`: schema governance, demo emission, legacy conversion, inspection,
//! renormalization, migration and dataset export.

mod inspect;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mlog_core::dataset::{
    attach_labels, load_label_table, merge_streams, read_ai_log, to_matrix, windowed_matrix, LabelStrategy, Selector,
    WindowSpec,
};
use mlog_core::emitter::{StepClock, Writer, WriterOptions};
use mlog_core::evolution::{build_migration, diff_schemas, migrate_log, parse_override};
use mlog_core::ingest::{convert_file, load_templates};
use mlog_core::norm_state::{renormalize_log, ParamId};
use mlog_core::schema::{load_schema, validate_schema, Bounds};
use mlog_core::simulate::{run_demo, DemoOptions};
use mlog_core::{LinkId, LogSchema};

#[derive(Parser)]
#[command(name = "mlog", version, about = "Machine-learning log toolchain")]
struct Cli {
    /// Schema file used by commands that read or write logs.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Seed for link ids and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress summaries on standard output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a schema or print its fingerprint.
    Schema {
        #[command(subcommand)]
        action: SchemaAction,
    },
    /// Print the changes between two schema versions and their classification.
    Diff { old: PathBuf, new: PathBuf },
    /// Rewrite an AI log from one schema version to another.
    Migrate {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        to: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `<segment>=<rule>`, repeatable.
        #[arg(long = "rule")]
        rules: Vec<String>,
    },
    /// Convert a legacy text log through templates.
    Convert {
        #[arg(long)]
        templates: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        ai_out: PathBuf,
        #[arg(long)]
        human_out: PathBuf,
        #[arg(long)]
        skips: PathBuf,
        #[arg(long, default_value = "ingest")]
        writer_id: String,
        /// Use a fixed clock starting here (microseconds) instead of wall time.
        #[arg(long)]
        clock_start: Option<u64>,
    },
    /// Re-encode one min-max parameter of an AI log with new bounds.
    Renormalize {
        log: PathBuf,
        /// `type.category.param`
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        min: f64,
        #[arg(long, allow_hyphen_values = true)]
        max: f64,
    },
    /// Export AI logs as a numeric CSV matrix.
    Export {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// `type.category` or `union`.
        #[arg(long, default_value = "union")]
        select: String,
        /// `link_id,label` table.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Attach each category's intrinsic label.
        #[arg(long)]
        intrinsic: bool,
        /// `count:SIZE:STRIDE` or `duration:SIZE:STRIDE` (microseconds).
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Write `row,link_id` pairs here.
        #[arg(long)]
        links: Option<PathBuf>,
        /// Add a `source` column with the index of each row's input log.
        #[arg(long)]
        provenance: bool,
    },
    /// Pretty-print AI log records with decoded identifying tokens.
    Inspect {
        log: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run a seeded multi-writer simulation with a fixed clock.
    Demo {
        #[arg(long, default_value_t = 3)]
        writers: usize,
        /// Events per writer.
        #[arg(long, default_value_t = 100)]
        events: usize,
        #[arg(long, default_value = "demo.ai.log")]
        ai_out: PathBuf,
        #[arg(long, default_value = "demo.human.log")]
        human_out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SchemaAction {
    Validate { file: PathBuf },
    Fingerprint { file: PathBuf },
}

/// Bad command-line input detected after parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Validation failures already listed on standard output.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

struct Ctx {
    schema: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn schema(&self) -> Result<LogSchema> {
        let path = self
            .schema
            .as_ref()
            .ok_or_else(|| Usage("this command needs --schema <file>".into()))?;
        load_valid_schema(path)
    }

    fn say(&self, text: impl std::fmt::Display) {
        if !self.quiet {
            println!("{text}");
        }
    }
}

fn load_valid_schema(path: &Path) -> Result<LogSchema> {
    let schema = load_schema(path)?;
    let report = validate_schema(&schema);
    if !report.is_valid() {
        return Err(Invalid(format!("{}: {report}", path.display())).into());
    }
    Ok(schema)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    Ok(BufWriter::new(file))
}

fn io_error(path: &Path, e: io::Error) -> anyhow::Error {
    anyhow::Error::new(e).context(format!("{}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        schema: cli.schema,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Schema { action } => match action {
            SchemaAction::Validate { file } => {
                let schema = load_schema(&file)?;
                let report = validate_schema(&schema);
                if report.is_valid() {
                    println!("OK");
                    return Ok(());
                }
                for v in &report.violations {
                    println!("{}\t{}\t{}", v.code, v.path, v.message);
                }
                Err(Invalid(format!(
                    "{} violation(s): {}",
                    report.violations.len(),
                    report.codes().join(", ")
                ))
                .into())
            }
            SchemaAction::Fingerprint { file } => {
                println!("{}", load_valid_schema(&file)?.fingerprint()?);
                Ok(())
            }
        },
        Command::Diff { old, new } => {
            let diff = diff_schemas(&load_valid_schema(&old)?, &load_valid_schema(&new)?);
            println!("{diff}");
            Ok(())
        }
        Command::Migrate {
            from,
            to,
            input,
            out,
            rules,
        } => {
            let (old, new) = (load_valid_schema(&from)?, load_valid_schema(&to)?);
            let overrides = rules
                .iter()
                .map(|r| parse_override(r))
                .collect::<mlog_core::Result<HashMap<_, _>>>()
                .map_err(|e| Usage(e.to_string()))?;
            let map = build_migration(&old, &new, &overrides)?;
            let summary = migrate_log(&input, &out, &map)?;
            ctx.say(format_args!(
                "records {} migrated {} dropped {}",
                summary.records, summary.migrated, summary.dropped
            ));
            Ok(())
        }
        Command::Convert {
            templates,
            input,
            ai_out,
            human_out,
            skips,
            writer_id,
            clock_start,
        } => {
            let schema = ctx.schema()?;
            let templates = load_templates(&templates, &schema)?;
            let mut options = WriterOptions::default();
            if let Some(seed) = ctx.seed {
                options = options.seed(seed);
            }
            if let Some(start) = clock_start {
                options = options.clock(StepClock::new(start, 1_000));
            }
            let mut writer = Writer::open(schema, &ai_out, Some(&human_out), &writer_id, options)?;
            let mut skip_file = create(&skips)?;
            let summary = convert_file(&input, &templates, &mut writer, &mut skip_file)?;
            skip_file.flush().map_err(|e| io_error(&skips, e))?;
            ctx.say(summary);
            Ok(())
        }
        Command::Renormalize { log, param, min, max } => {
            let schema = ctx.schema()?;
            let id: ParamId = param.parse()?;
            let summary = renormalize_log(&log, &schema, &id, Bounds::new(min, max))?;
            ctx.say(format_args!(
                "records {} rewritten {} skipped_after_switch {}",
                summary.records, summary.rewritten, summary.skipped_after_switch
            ));
            Ok(())
        }
        Command::Export {
            inputs,
            select,
            labels,
            intrinsic,
            window,
            out,
            links,
            provenance,
        } => {
            let schema = ctx.schema()?;
            let selector: Selector = select.parse().map_err(|e| Usage(format!("{e}")))?;
            let window: Option<WindowSpec> = window
                .map(|w| w.parse())
                .transpose()
                .map_err(|e: mlog_core::Error| Usage(e.to_string()))?;
            let streams = inputs
                .iter()
                .map(|p| read_ai_log(p, &schema))
                .collect::<mlog_core::Result<Vec<_>>>()?;
            let source_of: HashMap<LinkId, usize> = if provenance {
                streams
                    .iter()
                    .enumerate()
                    .flat_map(|(i, s)| s.records.iter().map(move |r| (r.link_id, i)))
                    .collect()
            } else {
                HashMap::new()
            };
            let mut stream = merge_streams(streams)?;
            if intrinsic {
                attach_labels(&mut stream, &schema, &LabelStrategy::Intrinsic)?;
            }
            if let Some(path) = labels {
                let report = attach_labels(&mut stream, &schema, &LabelStrategy::Manual(load_label_table(&path)?))?;
                if !report.unknown_link_ids.is_empty() {
                    eprintln!(
                        "{}: {} label(s) name link ids not in the input",
                        warn_tag(),
                        report.unknown_link_ids.len()
                    );
                }
            }
            let mut matrix = match window {
                Some(spec) => windowed_matrix(&stream, &schema, &selector, spec)?,
                None => to_matrix(&stream, &schema, &selector)?,
            };
            if provenance {
                matrix.set_sources(&source_of);
            }
            let mut file = create(&out)?;
            matrix.write_csv(&mut file)?;
            file.flush().map_err(|e| io_error(&out, e))?;
            if let Some(path) = links {
                let mut file = create(&path)?;
                matrix.write_links(&mut file).map_err(|e| io_error(&path, e))?;
                file.flush().map_err(|e| io_error(&path, e))?;
            }
            ctx.say(format_args!("rows {} columns {}", matrix.len(), matrix.width()));
            Ok(())
        }
        Command::Inspect { log, limit } => {
            let schema = ctx.schema()?;
            let stream = read_ai_log(&log, &schema)?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for r in stream.records.iter().take(limit.unwrap_or(usize::MAX)) {
                inspect::write_record(&mut out, &schema, r).map_err(|e| io_error(Path::new("<stdout>"), e))?;
            }
            Ok(())
        }
        Command::Demo {
            writers,
            events,
            ai_out,
            human_out,
        } => {
            let schema = match &ctx.schema {
                Some(_) => ctx.schema()?,
                None => mlog_core::fixtures::hdfs_schema(),
            };
            let options = DemoOptions {
                seed: ctx.seed.unwrap_or(0),
                writers,
                events,
                ..DemoOptions::default()
            };
            let summary = run_demo(Arc::new(schema), &ai_out, &human_out, options)?;
            ctx.say(format_args!(
                "writers {} records {} fp {}",
                summary.writers, summary.records, summary.fingerprint
            ));
            Ok(())
        }
    }
}

fn color() -> bool {
    std::env::var("MLOG_COLOR").map_or(true, |v| v != "0") && io::stderr().is_terminal()
}

fn paint(code: &str, text: &str) -> String {
    if color() {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn warn_tag() -> String {
    paint("33", "warning")
}

/// Exit status and diagnostic code for an error.
fn classify(err: &anyhow::Error) -> (u8, String) {
    if err.downcast_ref::<Usage>().is_some() {
        return (2, "USAGE".into());
    }
    if err.downcast_ref::<Invalid>().is_some() {
        return (1, "INVALID_SCHEMA".into());
    }
    if let Some(e) = err.downcast_ref::<mlog_core::Error>() {
        let status = if e.is_io() { 3 } else { 1 };
        return (status, e.code().to_string());
    }
    if err.downcast_ref::<io::Error>().is_some() {
        return (3, "IO_FAILURE".into());
    }
    (1, "ERROR".into())
}

/// The error chain joined by `: `, skipping causes already quoted by an
/// outer message.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (status, code) = classify(&err);
            eprintln!("{}: {}", paint("31", &format!("error[{code}]")), describe(&err));
            ExitCode::from(status)
        }
    }
}
