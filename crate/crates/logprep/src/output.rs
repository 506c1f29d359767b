//! Tabular outputs: the canonical record schema plus the user and session
//! tables, each written as RFC-4180 CSV (header row, UTF-8) or JSON lines
//! with the same field order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::graph::canonicalize_page;
use crate::identity::UserAssignment;
use crate::record::{format_utc, parse_utc, LogRecord, PipelineStats, RecordKey};
use crate::sessions::Session;

/// Fixed output schema for records. Fields absent in the source serialize
/// as empty CSV cells / JSON nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRow {
    pub line_no: u64,
    pub source_file: String,
    pub ip: String,
    pub timestamp_utc: String,
    pub offset_minutes: i32,
    pub method: String,
    pub uri: String,
    pub protocol: Option<String>,
    pub status: Option<u16>,
    pub bytes_sent: Option<u64>,
    pub username: Option<String>,
    pub user_agent: Option<String>,
    pub referrer: Option<String>,
    pub inferred: bool,
}

impl CanonicalRow {
    pub fn from_record(r: &LogRecord) -> Self {
        CanonicalRow {
            line_no: r.line_no,
            source_file: r.source_file.clone(),
            ip: r.ip.clone(),
            timestamp_utc: format_utc(&r.timestamp_utc),
            offset_minutes: r.offset_minutes,
            method: r.method.clone(),
            uri: r.uri.clone(),
            protocol: r.protocol.clone(),
            status: r.status,
            bytes_sent: r.bytes_sent,
            username: r.username.clone(),
            user_agent: r.user_agent.clone(),
            referrer: r.referrer.clone(),
            inferred: r.inferred,
        }
    }

    /// Rebuilds a record from its canonical row. Fields outside the schema
    /// (sub-ordinal, extra columns, server-side details) come back empty.
    pub fn into_record(self) -> Result<LogRecord, chrono::ParseError> {
        let ts = parse_utc(&self.timestamp_utc)?;
        let mut r = LogRecord::new(
            self.line_no,
            self.source_file,
            self.ip,
            ts,
            self.method,
            self.uri,
        );
        r.offset_minutes = self.offset_minutes;
        r.protocol = self.protocol;
        r.status = self.status;
        r.bytes_sent = self.bytes_sent;
        r.username = self.username;
        r.user_agent = self.user_agent;
        r.referrer = self.referrer;
        r.inferred = self.inferred;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub user_id: u32,
    pub ip: String,
    pub browser_family: String,
    pub browser_major: Option<u32>,
    pub os_family: String,
    pub record_count: u64,
    pub first_seen_utc: String,
    pub last_seen_utc: String,
}

impl UserRow {
    pub fn build(user: &UserAssignment, records: &BTreeMap<RecordKey, LogRecord>) -> Self {
        let timestamps = user.record_refs.iter().map(|k| records[k].timestamp_utc);
        let first = timestamps.clone().min().expect("user has records");
        let last = timestamps.max().expect("user has records");
        UserRow {
            user_id: user.user_id,
            ip: user.ip.clone(),
            browser_family: user.signature.browser_family.clone(),
            browser_major: user.signature.browser_major,
            os_family: user.signature.os_family.clone(),
            record_count: user.record_refs.len() as u64,
            first_seen_utc: format_utc(&first),
            last_seen_utc: format_utc(&last),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session_id: u64,
    pub user_id: u32,
    /// Real records only; inferred entries are counted separately.
    pub n_records: u64,
    pub n_inferred: u64,
    pub start_utc: String,
    pub end_utc: String,
    pub duration_seconds: i64,
    /// `|`-joined canonical page sequence; inferred pages carry a `*`.
    pub page_sequence: String,
}

impl SessionRow {
    pub fn build(session: &Session, records: &BTreeMap<RecordKey, LogRecord>) -> Self {
        let mut real = 0u64;
        let mut inferred = 0u64;
        let pages: Vec<String> = session
            .records
            .iter()
            .map(|k| {
                let r = &records[k];
                let page = canonicalize_page(&r.uri);
                if r.inferred {
                    inferred += 1;
                    format!("{page}*")
                } else {
                    real += 1;
                    page
                }
            })
            .collect();
        SessionRow {
            session_id: session.session_id,
            user_id: session.user_id,
            n_records: real,
            n_inferred: inferred,
            start_utc: format_utc(&session.start_utc),
            end_utc: format_utc(&session.end_utc),
            duration_seconds: (session.end_utc - session.start_utc).num_seconds(),
            page_sequence: pages.join("|"),
        }
    }
}

pub const RECORD_COLUMNS: [&str; 14] = [
    "line_no",
    "source_file",
    "ip",
    "timestamp_utc",
    "offset_minutes",
    "method",
    "uri",
    "protocol",
    "status",
    "bytes_sent",
    "username",
    "user_agent",
    "referrer",
    "inferred",
];

pub const USER_COLUMNS: [&str; 8] = [
    "user_id",
    "ip",
    "browser_family",
    "browser_major",
    "os_family",
    "record_count",
    "first_seen_utc",
    "last_seen_utc",
];

pub const SESSION_COLUMNS: [&str; 8] = [
    "session_id",
    "user_id",
    "n_records",
    "n_inferred",
    "start_utc",
    "end_utc",
    "duration_seconds",
    "page_sequence",
];

fn table_path(dir: &Path, name: &str, format: OutputFormat) -> PathBuf {
    dir.join(format!("{name}.{}", format.extension()))
}

fn write_table<T: Serialize>(
    dir: &Path,
    name: &str,
    columns: &[&str],
    format: OutputFormat,
    rows: impl Iterator<Item = T>,
) -> std::io::Result<PathBuf> {
    let path = table_path(dir, name, format);
    let file = std::fs::File::create(&path)?;
    let mut out = std::io::BufWriter::new(file);
    match format {
        OutputFormat::Csv => {
            // header written up front so empty tables still carry the schema
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(out);
            w.write_record(columns).map_err(std::io::Error::other)?;
            for row in rows {
                w.serialize(row).map_err(std::io::Error::other)?;
            }
            w.flush()?;
        }
        OutputFormat::Jsonl => {
            for row in rows {
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(path)
}

pub fn write_records<'a>(
    dir: &Path,
    format: OutputFormat,
    records: impl Iterator<Item = &'a LogRecord>,
) -> std::io::Result<PathBuf> {
    write_table(
        dir,
        "records",
        &RECORD_COLUMNS,
        format,
        records.map(CanonicalRow::from_record),
    )
}

pub fn write_users(
    dir: &Path,
    format: OutputFormat,
    users: &[UserAssignment],
    records: &BTreeMap<RecordKey, LogRecord>,
) -> std::io::Result<PathBuf> {
    write_table(
        dir,
        "users",
        &USER_COLUMNS,
        format,
        users.iter().map(|u| UserRow::build(u, records)),
    )
}

pub fn write_sessions(
    dir: &Path,
    format: OutputFormat,
    sessions: &[Session],
    records: &BTreeMap<RecordKey, LogRecord>,
) -> std::io::Result<PathBuf> {
    write_table(
        dir,
        "sessions",
        &SESSION_COLUMNS,
        format,
        sessions.iter().map(|s| SessionRow::build(s, records)),
    )
}

pub fn write_stats(dir: &Path, stats: &PipelineStats) -> std::io::Result<PathBuf> {
    let path = dir.join("stats.json");
    let mut text = serde_json::to_string_pretty(stats)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn read_records_csv(path: &Path) -> anyhow::Result<Vec<CanonicalRow>> {
    let mut rows = Vec::new();
    let mut reader = csv::Reader::from_path(path)?;
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn read_records_jsonl(path: &Path) -> anyhow::Result<Vec<CanonicalRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(line)?);
        }
    }
    Ok(rows)
}
