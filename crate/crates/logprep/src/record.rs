//! Core data model shared by every pipeline stage: parsed records, format
//! descriptors, the cleaning policy, and per-run statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// Wire format of a log file.
///
/// The W3C variant carries the current field map declared by the most recent
/// `#Fields:` directive; the other formats have fixed positional grammars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogFormat {
    /// Directive-prefixed, space-separated; fields declared by `#Fields:`.
    /// Timestamps are GMT.
    W3cExtended { field_map: Vec<String> },
    /// `host ident authuser [date] "request" status bytes`.
    NcsaCommon,
    /// NCSA common plus two trailing quoted fields: referrer and user agent.
    NcsaCombined,
    /// Fixed comma-separated format; timestamps are server-local time.
    Iis,
}

impl LogFormat {
    pub fn kind(&self) -> FormatKind {
        match self {
            LogFormat::W3cExtended { .. } => FormatKind::W3cExtended,
            LogFormat::NcsaCommon => FormatKind::NcsaCommon,
            LogFormat::NcsaCombined => FormatKind::NcsaCombined,
            LogFormat::Iis => FormatKind::Iis,
        }
    }
}

impl From<FormatKind> for LogFormat {
    fn from(kind: FormatKind) -> Self {
        match kind {
            FormatKind::W3cExtended => LogFormat::W3cExtended {
                field_map: Vec::new(),
            },
            FormatKind::NcsaCommon => LogFormat::NcsaCommon,
            FormatKind::NcsaCombined => LogFormat::NcsaCombined,
            FormatKind::Iis => LogFormat::Iis,
        }
    }
}

/// Format discriminant without the W3C field-map payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatKind {
    W3cExtended,
    NcsaCommon,
    NcsaCombined,
    Iis,
}

impl FormatKind {
    pub fn name(&self) -> &'static str {
        match self {
            FormatKind::W3cExtended => "w3c",
            FormatKind::NcsaCommon => "ncsa",
            FormatKind::NcsaCombined => "ncsa-combined",
            FormatKind::Iis => "iis",
        }
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FormatKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "w3c" => Ok(FormatKind::W3cExtended),
            "ncsa" => Ok(FormatKind::NcsaCommon),
            "ncsa-combined" => Ok(FormatKind::NcsaCombined),
            "iis" => Ok(FormatKind::Iis),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

/// One access-log entry, normalized across formats.
///
/// Fields that the source file marks with `-` (or that the format simply
/// lacks) are `None`; the literal dash is never stored. Timestamps are kept
/// as a UTC instant plus the source's UTC offset in minutes, so the original
/// wall-clock time is always `timestamp_utc + offset_minutes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    /// 1-based position in the source file. Inferred records reuse the
    /// line number of the real record they precede.
    pub line_no: u64,
    /// 0 for records read from the file; negative for inferred records,
    /// ordered so they sort immediately before their anchor line.
    pub sub_ordinal: i32,
    pub source_file: String,
    pub ip: String,
    pub timestamp_utc: DateTime<Utc>,
    pub offset_minutes: i32,
    pub method: String,
    /// Request target: path plus optional query string, kept verbatim.
    pub uri: String,
    pub protocol: Option<String>,
    pub status: Option<u16>,
    pub bytes_sent: Option<u64>,
    pub bytes_received: Option<u64>,
    pub username: Option<String>,
    pub user_agent: Option<String>,
    pub referrer: Option<String>,
    pub service_name: Option<String>,
    pub server_name: Option<String>,
    pub server_ip: Option<String>,
    pub time_taken_ms: Option<u64>,
    pub windows_status: Option<u32>,
    /// Columns the format declared but the model has no slot for,
    /// preserved verbatim as (name, value) pairs in declaration order.
    pub extra: Vec<(String, String)>,
    /// True only for path-completion insertions.
    pub inferred: bool,
}

impl LogRecord {
    /// A minimal record; optional fields start absent.
    pub fn new(
        line_no: u64,
        source_file: impl Into<String>,
        ip: impl Into<String>,
        timestamp_utc: DateTime<Utc>,
        method: impl Into<String>,
        uri: impl Into<String>,
    ) -> Self {
        LogRecord {
            line_no,
            sub_ordinal: 0,
            source_file: source_file.into(),
            ip: ip.into(),
            timestamp_utc,
            offset_minutes: 0,
            method: method.into(),
            uri: uri.into(),
            protocol: None,
            status: None,
            bytes_sent: None,
            bytes_received: None,
            username: None,
            user_agent: None,
            referrer: None,
            service_name: None,
            server_name: None,
            server_ip: None,
            time_taken_ms: None,
            windows_status: None,
            extra: Vec::new(),
            inferred: false,
        }
    }

    pub fn record_key(&self) -> RecordKey {
        RecordKey {
            source_file: self.source_file.clone(),
            line_no: self.line_no,
            sub_ordinal: self.sub_ordinal,
        }
    }

    /// Wall-clock time at the source, reconstructed from the stored offset.
    pub fn local_time(&self) -> chrono::NaiveDateTime {
        (self.timestamp_utc + chrono::Duration::minutes(self.offset_minutes as i64)).naive_utc()
    }
}

/// Total order over pipeline records: file, then line, then sub-ordinal.
/// Inferred records (negative sub-ordinal) sort immediately before the real
/// record whose line number they borrow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub source_file: String,
    pub line_no: u64,
    pub sub_ordinal: i32,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sub_ordinal == 0 {
            write!(f, "{}:{}", self.source_file, self.line_no)
        } else {
            write!(
                f,
                "{}:{}{}",
                self.source_file, self.line_no, self.sub_ordinal
            )
        }
    }
}

/// Controls which records the cleaning stage discards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleaningPolicy {
    /// Lowercase filename suffixes, each starting with `.`.
    pub irrelevant_suffixes: BTreeSet<String>,
    pub remove_failed_status: bool,
    /// Inclusive status ranges treated as failed when removal is enabled.
    pub failed_status_ranges: Vec<(u16, u16)>,
    /// Strip the query string before suffix matching (`/x.gif?ts=1` is
    /// still an image fetch).
    pub strip_query_before_match: bool,
}

/// Suffixes removed by default: embedded images and stylesheets.
pub const DEFAULT_IRRELEVANT_SUFFIXES: [&str; 4] = [".jpg", ".jpeg", ".gif", ".css"];

/// Optional preset of further embedded-resource suffixes. Not enabled by
/// default; callers opt in via [`CleaningPolicy::with_extra_suffixes`].
pub const EXTRA_RESOURCE_SUFFIXES: [&str; 5] = [".js", ".png", ".ico", ".bmp", ".swf"];

impl Default for CleaningPolicy {
    fn default() -> Self {
        CleaningPolicy {
            irrelevant_suffixes: DEFAULT_IRRELEVANT_SUFFIXES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            remove_failed_status: false,
            failed_status_ranges: vec![(400, 599)],
            strip_query_before_match: true,
        }
    }
}

impl CleaningPolicy {
    /// Replaces the suffix set. Suffixes are lowercased; each must begin
    /// with a dot.
    pub fn with_suffixes<I, S>(mut self, suffixes: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for s in suffixes {
            let s = s.as_ref().trim().to_ascii_lowercase();
            if !s.starts_with('.') || s.len() < 2 {
                return Err(format!("suffix '{s}' must start with '.'"));
            }
            set.insert(s);
        }
        self.irrelevant_suffixes = set;
        Ok(self)
    }

    /// Default policy plus the [`EXTRA_RESOURCE_SUFFIXES`] preset.
    pub fn with_extra_suffixes(mut self) -> Self {
        self.irrelevant_suffixes
            .extend(EXTRA_RESOURCE_SUFFIXES.iter().map(|s| s.to_string()));
        self
    }
}

/// Counters reported at the end of a run and written to `stats.json`.
///
/// Two arithmetic identities must hold on every run (see [`Self::validate`]):
/// parsed records split exactly into kept and removed, and read lines split
/// exactly into parsed records and skipped lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub lines_read: u64,
    pub lines_skipped_malformed: u64,
    pub lines_skipped_by_reason: BTreeMap<String, u64>,
    pub records_parsed: u64,
    pub records_removed_by_reason: BTreeMap<String, u64>,
    pub records_after_cleaning: u64,
    pub users_identified: u64,
    pub sessions_identified: u64,
    pub records_inferred: u64,
}

impl PipelineStats {
    pub fn count_skip(&mut self, reason_label: &str, malformed: bool) {
        *self
            .lines_skipped_by_reason
            .entry(reason_label.to_string())
            .or_insert(0) += 1;
        if malformed {
            self.lines_skipped_malformed += 1;
        }
    }

    pub fn count_removal(&mut self, reason_label: &str) {
        *self
            .records_removed_by_reason
            .entry(reason_label.to_string())
            .or_insert(0) += 1;
    }

    pub fn records_removed(&self) -> u64 {
        self.records_removed_by_reason.values().sum()
    }

    pub fn lines_skipped(&self) -> u64 {
        self.lines_skipped_by_reason.values().sum()
    }

    /// Checks the conservation identities; returns a description of the
    /// first violated one.
    pub fn validate(&self) -> Result<(), String> {
        if self.records_parsed != self.records_after_cleaning + self.records_removed() {
            return Err(format!(
                "records_parsed ({}) != records_after_cleaning ({}) + records_removed ({})",
                self.records_parsed,
                self.records_after_cleaning,
                self.records_removed()
            ));
        }
        if self.lines_read != self.records_parsed + self.lines_skipped() {
            return Err(format!(
                "lines_read ({}) != records_parsed ({}) + lines_skipped ({})",
                self.lines_read,
                self.records_parsed,
                self.lines_skipped()
            ));
        }
        let malformed: u64 = self
            .lines_skipped_by_reason
            .iter()
            .filter(|(k, _)| k.starts_with("MALFORMED"))
            .map(|(_, v)| v)
            .sum();
        if self.lines_skipped_malformed != malformed {
            return Err(format!(
                "lines_skipped_malformed ({}) != sum of MALFORMED_* reasons ({})",
                self.lines_skipped_malformed, malformed
            ));
        }
        Ok(())
    }
}

/// ISO-8601 UTC with `Z`; millisecond precision only when sub-second.
pub fn format_utc(ts: &DateTime<Utc>) -> String {
    if ts.timestamp_subsec_nanos() == 0 {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    } else {
        ts.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

pub fn parse_utc(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s).map(|dt| dt.with_timezone(&Utc))
}
