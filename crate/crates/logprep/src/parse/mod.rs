//! Field extraction: format detection plus line-by-line parsing of the three
//! supported log formats into [`LogRecord`]s.
//!
//! Parsing is tolerant by design: a malformed line becomes a counted skip,
//! never a file abort. Only I/O failures (and a W3C file whose data starts
//! before any `#Fields:` directive) stop a read.

use std::io::BufRead;

use thiserror::Error;

use crate::record::{LogFormat, LogRecord, PipelineStats};

pub mod iis;
pub mod ncsa;
pub mod w3c;

pub use w3c::{parse_w3c_directives, DirectiveError};

/// Why a line produced no record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkipReason {
    Directive,
    Blank,
    MalformedFieldCount,
    MalformedTimestamp,
    MalformedStatus,
}

impl SkipReason {
    pub fn label(&self) -> &'static str {
        match self {
            SkipReason::Directive => "DIRECTIVE",
            SkipReason::Blank => "BLANK",
            SkipReason::MalformedFieldCount => "MALFORMED_FIELD_COUNT",
            SkipReason::MalformedTimestamp => "MALFORMED_TIMESTAMP",
            SkipReason::MalformedStatus => "MALFORMED_STATUS",
        }
    }

    pub fn is_malformed(&self) -> bool {
        matches!(
            self,
            SkipReason::MalformedFieldCount
                | SkipReason::MalformedTimestamp
                | SkipReason::MalformedStatus
        )
    }
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Result of parsing one line: a record, or a counted skip.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ParseOutcome {
    Record(LogRecord),
    Skip(SkippedLine),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line_no: u64,
    pub reason: SkipReason,
    pub raw: String,
}

impl ParseOutcome {
    pub(crate) fn skip(line_no: u64, reason: SkipReason, raw: &str) -> Self {
        ParseOutcome::Skip(SkippedLine {
            line_no,
            reason,
            raw: raw.to_string(),
        })
    }

    pub fn as_record(&self) -> Option<&LogRecord> {
        match self {
            ParseOutcome::Record(r) => Some(r),
            ParseOutcome::Skip(_) => None,
        }
    }
}

/// Per-line parsing context: where the line came from and how to interpret
/// local-time formats.
#[derive(Debug, Clone, Copy)]
pub struct LineContext<'a> {
    pub source_file: &'a str,
    pub line_no: u64,
    /// UTC offset applied to formats that log local time without a zone.
    pub iis_offset_minutes: i32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectError {
    #[error("no non-blank line found in the sample")]
    EmptyInput,
}

/// Detects the format of a file from its first non-blank lines.
///
/// W3C wins when any sampled line starts with `#`; otherwise a first line
/// with ten or more comma-separated fields means IIS; otherwise the NCSA
/// flavor is picked from the presence of two trailing quoted fields.
pub fn detect_format<'a, I>(sample: I) -> Result<LogFormat, DetectError>
where
    I: IntoIterator<Item = &'a str>,
{
    let lines: Vec<&str> = sample
        .into_iter()
        .map(|l| l.trim_end_matches(['\r', '\n']))
        .filter(|l| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(DetectError::EmptyInput);
    }

    if lines.iter().any(|l| l.starts_with('#')) {
        // Use the last #Fields directive seen in the sample as the initial
        // field map; extraction replaces it when a later one appears.
        let mut field_map = Vec::new();
        for line in &lines {
            if let Some(map) = w3c::fields_directive(line) {
                field_map = map;
            }
        }
        return Ok(LogFormat::W3cExtended { field_map });
    }

    let first = lines[0];
    if first.split(',').count() >= 10 {
        return Ok(LogFormat::Iis);
    }

    if ncsa::looks_combined(first) {
        Ok(LogFormat::NcsaCombined)
    } else {
        Ok(LogFormat::NcsaCommon)
    }
}

/// Parses one line under the given format. Pure: identical input and format
/// always give an identical outcome. Directive and blank lines become skips.
pub fn parse_line(line: &str, format: &LogFormat, ctx: &LineContext<'_>) -> ParseOutcome {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() {
        return ParseOutcome::skip(ctx.line_no, SkipReason::Blank, line);
    }
    match format {
        LogFormat::W3cExtended { field_map } => {
            if line.starts_with('#') {
                return ParseOutcome::skip(ctx.line_no, SkipReason::Directive, line);
            }
            w3c::parse_data_line(line, field_map, ctx)
        }
        LogFormat::NcsaCommon => ncsa::parse(line, false, ctx),
        LogFormat::NcsaCombined => ncsa::parse(line, true, ctx),
        LogFormat::Iis => iis::parse(line, ctx),
    }
}

/// Writes a record back out in the given format. Inverse of [`parse_line`]
/// on its own output; used by the fixture generator and round-trip tests.
pub fn render_line(record: &LogRecord, format: &LogFormat, iis_offset_minutes: i32) -> String {
    match format {
        LogFormat::W3cExtended { field_map } => w3c::render(record, field_map),
        LogFormat::NcsaCommon => ncsa::render(record, false),
        LogFormat::NcsaCombined => ncsa::render(record, true),
        LogFormat::Iis => iis::render(record, iis_offset_minutes),
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("{file}: i/o error at byte {offset}: {source}")]
    Io {
        file: String,
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: data at line {line_no} before any #Fields directive")]
    MissingFieldsDirective { file: String, line_no: u64 },
}

/// Streaming reader: yields one [`ParseOutcome`] per input line, in file
/// order, holding only the current line in memory.
///
/// For W3C input it tracks the governing field map, replacing it whenever a
/// later `#Fields:` directive appears.
pub struct RecordReader<R> {
    input: R,
    format: LogFormat,
    source_file: String,
    iis_offset_minutes: i32,
    line_no: u64,
    byte_offset: u64,
    buf: String,
    failed: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(
        input: R,
        format: LogFormat,
        source_file: impl Into<String>,
        iis_offset_minutes: i32,
    ) -> Self {
        RecordReader {
            input,
            format,
            source_file: source_file.into(),
            iis_offset_minutes,
            line_no: 0,
            byte_offset: 0,
            buf: String::new(),
            failed: false,
        }
    }

    /// Byte offset of the end of the last line read.
    pub fn byte_offset(&self) -> u64 {
        self.byte_offset
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<ParseOutcome, ExtractError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        self.buf.clear();
        match self.input.read_line(&mut self.buf) {
            Ok(0) => None,
            Ok(n) => {
                self.byte_offset += n as u64;
                self.line_no += 1;
                let line = self.buf.trim_end_matches(['\r', '\n']).to_string();

                if let LogFormat::W3cExtended { field_map } = &mut self.format {
                    if line.starts_with('#') {
                        if let Some(map) = w3c::fields_directive(&line) {
                            *field_map = map;
                        }
                        return Some(Ok(ParseOutcome::skip(
                            self.line_no,
                            SkipReason::Directive,
                            &line,
                        )));
                    }
                    if !line.trim().is_empty() && field_map.is_empty() {
                        self.failed = true;
                        return Some(Err(ExtractError::MissingFieldsDirective {
                            file: self.source_file.clone(),
                            line_no: self.line_no,
                        }));
                    }
                }

                let ctx = LineContext {
                    source_file: &self.source_file,
                    line_no: self.line_no,
                    iis_offset_minutes: self.iis_offset_minutes,
                };
                Some(Ok(parse_line(&line, &self.format, &ctx)))
            }
            Err(e) => {
                self.failed = true;
                Some(Err(ExtractError::Io {
                    file: self.source_file.clone(),
                    offset: self.byte_offset,
                    source: e,
                }))
            }
        }
    }
}

/// Convenience wrapper: drains a reader, tallying every outcome into `stats`
/// and returning the parsed records.
pub fn extract_fields<R: BufRead>(
    input: R,
    format: LogFormat,
    source_file: &str,
    iis_offset_minutes: i32,
    stats: &mut PipelineStats,
) -> Result<Vec<LogRecord>, ExtractError> {
    let mut records = Vec::new();
    for outcome in RecordReader::new(input, format, source_file, iis_offset_minutes) {
        match outcome? {
            ParseOutcome::Record(r) => {
                stats.lines_read += 1;
                stats.records_parsed += 1;
                records.push(r);
            }
            ParseOutcome::Skip(s) => {
                stats.lines_read += 1;
                stats.count_skip(s.reason.label(), s.reason.is_malformed());
            }
        }
    }
    Ok(records)
}

/// Shared helpers for the positional formats.
pub(crate) fn absent(value: &str) -> Option<&str> {
    let v = value.trim();
    if v.is_empty() || v == "-" {
        None
    } else {
        Some(v)
    }
}

pub(crate) fn or_dash(value: Option<&str>) -> &str {
    value.unwrap_or("-")
}

/// Parses an HTTP status token: `-` is absent, digits must land in
/// [100, 599], anything else is a malformed status.
pub(crate) fn parse_status(token: &str) -> Result<Option<u16>, ()> {
    match absent(token) {
        None => Ok(None),
        Some(t) => {
            let n: u16 = t.parse().map_err(|_| ())?;
            if (100..=599).contains(&n) {
                Ok(Some(n))
            } else {
                Err(())
            }
        }
    }
}

/// Unsigned counters (bytes, durations): `-` or garbage is treated as
/// absent rather than failing the line.
pub(crate) fn parse_counter(token: &str) -> Option<u64> {
    absent(token).and_then(|t| t.parse().ok())
}

pub(crate) fn split_uri_query(uri: &str) -> (&str, Option<&str>) {
    match uri.split_once('?') {
        Some((stem, query)) => (stem, Some(query)),
        None => (uri, None),
    }
}

pub(crate) fn join_uri_query(stem: &str, query: Option<&str>) -> String {
    match query {
        Some(q) => format!("{stem}?{q}"),
        None => stem.to_string(),
    }
}
