//! Stage orchestration: parse → clean → identify → sessionize → complete,
//! then write the record, user, and session tables plus `stats.json`.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::clean::removal_reason;
use crate::config::{ConfigError, FormatChoice, GraphSource, PipelineConfig};
use crate::graph::{GraphError, SiteGraph};
use crate::identity::{identify_users, IdentifyError, UserAssignment};
use crate::output;
use crate::parse::{detect_format, DetectError, ExtractError, ParseOutcome, RecordReader};
use crate::record::{LogFormat, LogRecord, PipelineStats, RecordKey};
use crate::sessions::{complete_paths, sessionize, Session};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("{file}: i/o error at byte {offset}: {source}")]
    Io {
        file: String,
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    /// 2 config/input, 3 i/o, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Input(_) => 2,
            PipelineError::Io { .. } => 3,
            PipelineError::Invariant(_) => 4,
        }
    }

    fn io(file: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            file: file.display().to_string(),
            offset: 0,
            source,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.0)
    }
}

impl From<ExtractError> for PipelineError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::Io {
                file,
                offset,
                source,
            } => PipelineError::Io {
                file,
                offset,
                source,
            },
            other => PipelineError::Input(other.to_string()),
        }
    }
}

impl From<IdentifyError> for PipelineError {
    fn from(e: IdentifyError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

/// Everything a run produced, for callers that want more than the files.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub stats: PipelineStats,
    pub users: Vec<UserAssignment>,
    pub sessions: Vec<Session>,
    /// All output records keyed for lookup; includes inferred entries.
    pub records: BTreeMap<RecordKey, LogRecord>,
    /// Real records in input order; inferred entries slot in by key range.
    pub record_order: Vec<RecordKey>,
}

/// Samples the first 25 non-blank lines of a file and detects its format.
pub fn detect_file(path: &Path) -> Result<LogFormat, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut sample = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if !line.trim().is_empty() {
            sample.push(line);
            if sample.len() >= 25 {
                break;
            }
        }
    }
    detect_format(sample.iter().map(String::as_str))
        .map_err(|e: DetectError| PipelineError::Input(format!("{}: {e}", path.display())))
}

/// Runs every stage and writes the outputs. Deterministic: identical inputs
/// and configuration produce byte-identical files.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::io(&cfg.output_dir, e))?;

    let mut stats = PipelineStats::default();
    let mut kept: Vec<LogRecord> = Vec::new();

    for input in &cfg.inputs {
        let format = match cfg.format {
            FormatChoice::Fixed(kind) => LogFormat::from(kind),
            FormatChoice::Auto => match detect_file(input) {
                Ok(f) => f,
                // a file with no content still contributes its blank lines
                Err(PipelineError::Input(_)) => LogFormat::NcsaCommon,
                Err(e) => return Err(e),
            },
        };
        let file = std::fs::File::open(input).map_err(|e| PipelineError::io(input, e))?;
        let reader = RecordReader::new(
            std::io::BufReader::new(file),
            format,
            input.display().to_string(),
            cfg.iis_offset_minutes,
        );
        for outcome in reader {
            stats.lines_read += 1;
            match outcome? {
                ParseOutcome::Record(record) => {
                    stats.records_parsed += 1;
                    match removal_reason(&record, &cfg.cleaning) {
                        Some(reason) => stats.count_removal(&reason.label()),
                        None => {
                            stats.records_after_cleaning += 1;
                            kept.push(record);
                        }
                    }
                }
                ParseOutcome::Skip(skip) => {
                    stats.count_skip(skip.reason.label(), skip.reason.is_malformed());
                }
            }
        }
    }

    let graph = match &cfg.graph_source {
        GraphSource::None => SiteGraph::new(),
        GraphSource::EdgeFile(path) => SiteGraph::from_edge_file(path).map_err(|e| match e {
            GraphError::Io(io) => PipelineError::io(path, io),
            other => PipelineError::Input(format!("{}: {other}", path.display())),
        })?,
        GraphSource::FromReferrers => SiteGraph::derive_from_records(kept.iter()),
    };

    let users = identify_users(&kept, cfg.identity_mode, Some(&graph))?;
    stats.users_identified = users.len() as u64;

    let record_order: Vec<RecordKey> = kept.iter().map(LogRecord::record_key).collect();
    let mut records: BTreeMap<RecordKey, LogRecord> =
        kept.into_iter().map(|r| (r.record_key(), r)).collect();

    let timeout = cfg.timeout();
    let mut sessions: Vec<Session> = Vec::new();
    for user in &users {
        let user_records: Vec<&LogRecord> = user.record_refs.iter().map(|k| &records[k]).collect();
        sessions.extend(sessionize(user.user_id, &user_records, timeout, None));
    }
    sessions.sort_by(|a, b| {
        (a.user_id, a.start_utc, &a.records).cmp(&(b.user_id, b.start_utc, &b.records))
    });
    for (i, s) in sessions.iter_mut().enumerate() {
        s.session_id = i as u64 + 1;
    }
    stats.sessions_identified = sessions.len() as u64;

    // path completion runs on every session; without referrer evidence or a
    // graph path it is a no-op
    for session in &mut sessions {
        let (updated, inferred) = complete_paths(session, &records, &graph);
        *session = updated;
        for r in inferred {
            stats.records_inferred += 1;
            records.insert(r.record_key(), r);
        }
    }

    stats.validate().map_err(PipelineError::Invariant)?;

    write_outputs(cfg, &stats, &records, &record_order, &users, &sessions)?;

    Ok(PipelineOutcome {
        stats,
        users,
        sessions,
        records,
        record_order,
    })
}

fn write_outputs(
    cfg: &PipelineConfig,
    stats: &PipelineStats,
    records: &BTreeMap<RecordKey, LogRecord>,
    record_order: &[RecordKey],
    users: &[UserAssignment],
    sessions: &[Session],
) -> Result<(), PipelineError> {
    let dir = &cfg.output_dir;
    let io_err = |e: std::io::Error| PipelineError::io(dir, e);

    // input order, with inferred records immediately before their anchor
    let mut ordered: Vec<&LogRecord> = Vec::with_capacity(records.len());
    for key in record_order {
        let before = RecordKey {
            source_file: key.source_file.clone(),
            line_no: key.line_no,
            sub_ordinal: i32::MIN,
        };
        for (_, inferred) in records.range(before..key.clone()) {
            ordered.push(inferred);
        }
        ordered.push(&records[key]);
    }

    output::write_records(dir, cfg.output_format, ordered.into_iter()).map_err(io_err)?;
    output::write_users(dir, cfg.output_format, users, records).map_err(io_err)?;
    output::write_sessions(dir, cfg.output_format, sessions, records).map_err(io_err)?;
    output::write_stats(dir, stats).map_err(io_err)?;
    Ok(())
}
