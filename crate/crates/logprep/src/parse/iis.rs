//! IIS native log format: fifteen comma-separated fields (a trailing comma
//! is customary), timestamps in server-local time with no zone marker. The
//! configured pipeline offset converts them to UTC.

use chrono::{NaiveDate, TimeZone, Utc};

use super::{
    absent, join_uri_query, or_dash, parse_counter, parse_status, split_uri_query, LineContext,
    ParseOutcome, SkipReason,
};
use crate::record::LogRecord;

/// Canonical field order:
/// client-ip, username, date (MM/DD/YYYY), time (HH:MM:SS), service-name,
/// server-name, server-ip, time-taken-ms, bytes-received, bytes-sent,
/// status, windows-status, method, uri, parameters.
pub const FIELD_COUNT: usize = 15;

pub fn parse(line: &str, ctx: &LineContext<'_>) -> ParseOutcome {
    let mut fields: Vec<&str> = line.split(',').map(str::trim).collect();
    // trailing comma produces one empty trailing field
    if fields.len() == FIELD_COUNT + 1 && fields[FIELD_COUNT].is_empty() {
        fields.pop();
    }
    if fields.len() != FIELD_COUNT {
        return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedFieldCount, line);
    }

    let timestamp = match parse_local(fields[2], fields[3], ctx.iis_offset_minutes) {
        Some(ts) => ts,
        None => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedTimestamp, line),
    };
    let status = match parse_status(fields[10]) {
        Ok(s) => s,
        Err(()) => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedStatus, line),
    };

    let uri = absent(fields[13]).unwrap_or_default();
    let params = absent(fields[14]);

    let mut record = LogRecord::new(
        ctx.line_no,
        ctx.source_file,
        absent(fields[0]).unwrap_or_default(),
        timestamp,
        absent(fields[12]).unwrap_or_default().to_ascii_uppercase(),
        join_uri_query(uri, params),
    );
    record.offset_minutes = ctx.iis_offset_minutes;
    record.status = status;
    record.username = absent(fields[1]).map(String::from);
    record.service_name = absent(fields[4]).map(String::from);
    record.server_name = absent(fields[5]).map(String::from);
    record.server_ip = absent(fields[6]).map(String::from);
    record.time_taken_ms = parse_counter(fields[7]);
    record.bytes_received = parse_counter(fields[8]);
    record.bytes_sent = parse_counter(fields[9]);
    record.windows_status = absent(fields[11]).and_then(|t| t.parse().ok());
    ParseOutcome::Record(record)
}

fn parse_local(date: &str, time: &str, offset_minutes: i32) -> Option<chrono::DateTime<Utc>> {
    let d = NaiveDate::parse_from_str(date, "%m/%d/%Y").ok()?;
    let t = super::w3c::parse_clock(time)?;
    let local = d.and_time(t);
    Some(Utc.from_utc_datetime(&(local - chrono::Duration::minutes(offset_minutes as i64))))
}

pub fn render(record: &LogRecord, iis_offset_minutes: i32) -> String {
    let local = record.timestamp_utc + chrono::Duration::minutes(iis_offset_minutes as i64);
    let (stem, query) = split_uri_query(&record.uri);
    let fields = [
        record.ip.clone(),
        or_dash(record.username.as_deref()).to_string(),
        local.format("%m/%d/%Y").to_string(),
        local.format("%H:%M:%S").to_string(),
        or_dash(record.service_name.as_deref()).to_string(),
        or_dash(record.server_name.as_deref()).to_string(),
        or_dash(record.server_ip.as_deref()).to_string(),
        opt(record.time_taken_ms.map(|v| v.to_string())),
        opt(record.bytes_received.map(|v| v.to_string())),
        opt(record.bytes_sent.map(|v| v.to_string())),
        opt(record.status.map(|v| v.to_string())),
        opt(record.windows_status.map(|v| v.to_string())),
        record.method.clone(),
        stem.to_string(),
        opt(query.map(String::from)),
    ];
    format!("{},", fields.join(", "))
}

fn opt(v: Option<String>) -> String {
    v.unwrap_or_else(|| "-".into())
}
