//! W3C extended log format: `#`-prefixed directives declare the field list,
//! data lines are space-separated, timestamps are GMT.

use chrono::{NaiveDate, TimeZone, Utc};
use thiserror::Error;

use super::{
    absent, join_uri_query, or_dash, parse_counter, parse_status, split_uri_query, LineContext,
    ParseOutcome, SkipReason,
};
use crate::record::LogRecord;

/// Returns the token list of a `#Fields:` directive, or `None` for any
/// other line.
pub fn fields_directive(line: &str) -> Option<Vec<String>> {
    let rest = line.strip_prefix("#Fields:")?;
    Some(rest.split_ascii_whitespace().map(String::from).collect())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DirectiveError {
    #[error("data encountered before any #Fields directive")]
    MissingFieldsDirective,
}

/// Scans header lines and returns the governing field map: the last
/// `#Fields:` directive seen. Hitting a data line (or the end of input)
/// without one is an error.
pub fn parse_w3c_directives<'a, I>(lines: I) -> Result<Vec<String>, DirectiveError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut map: Vec<String> = Vec::new();
    for line in lines {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(m) = fields_directive(line) {
                map = m;
            }
        } else {
            // data line
            if map.is_empty() {
                return Err(DirectiveError::MissingFieldsDirective);
            }
            break;
        }
    }
    if map.is_empty() {
        Err(DirectiveError::MissingFieldsDirective)
    } else {
        Ok(map)
    }
}

/// Parses one data line against the field map. The token count must match
/// the map exactly; values never contain spaces in this format.
pub fn parse_data_line(line: &str, field_map: &[String], ctx: &LineContext<'_>) -> ParseOutcome {
    let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
    if field_map.is_empty() || tokens.len() != field_map.len() {
        return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedFieldCount, line);
    }

    let mut date: Option<&str> = None;
    let mut time: Option<&str> = None;
    let mut ip = String::new();
    let mut method = String::new();
    let mut uri_stem = String::new();
    let mut uri_query: Option<String> = None;
    let mut protocol = None;
    let mut status = None;
    let mut bytes_sent = None;
    let mut bytes_received = None;
    let mut username = None;
    let mut user_agent = None;
    let mut referrer = None;
    let mut service_name = None;
    let mut server_name = None;
    let mut server_ip = None;
    let mut time_taken_ms = None;
    let mut extra = Vec::new();

    for (name, value) in field_map.iter().zip(tokens.iter().copied()) {
        match name.as_str() {
            "date" => date = Some(value),
            "time" => time = Some(value),
            "c-ip" => ip = absent(value).unwrap_or_default().to_string(),
            "cs-username" => username = absent(value).map(String::from),
            "s-sitename" => service_name = absent(value).map(String::from),
            "s-computername" => server_name = absent(value).map(String::from),
            "s-ip" => server_ip = absent(value).map(String::from),
            "cs-method" => method = absent(value).unwrap_or_default().to_ascii_uppercase(),
            "cs-uri-stem" => uri_stem = absent(value).unwrap_or_default().to_string(),
            "cs-uri-query" => uri_query = absent(value).map(String::from),
            "sc-status" => match parse_status(value) {
                Ok(s) => status = s,
                Err(()) => {
                    return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedStatus, line)
                }
            },
            "sc-bytes" => bytes_sent = parse_counter(value),
            "cs-bytes" => bytes_received = parse_counter(value),
            "time-taken" => time_taken_ms = parse_counter(value),
            "cs-version" => protocol = absent(value).map(String::from),
            "cs(User-Agent)" => user_agent = absent(value).map(String::from),
            "cs(Referer)" => referrer = absent(value).map(String::from),
            // s-port and unrecognized tokens ride along verbatim.
            _ => extra.push((name.clone(), value.to_string())),
        }
    }

    let timestamp = match (date, time) {
        (Some(d), t) => match parse_gmt(d, t.unwrap_or("00:00:00")) {
            Some(ts) => ts,
            None => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedTimestamp, line),
        },
        (None, _) => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedTimestamp, line),
    };

    let mut record = LogRecord::new(
        ctx.line_no,
        ctx.source_file,
        ip,
        timestamp,
        method,
        join_uri_query(&uri_stem, uri_query.as_deref()),
    );
    record.offset_minutes = 0; // this format logs GMT
    record.protocol = protocol;
    record.status = status;
    record.bytes_sent = bytes_sent;
    record.bytes_received = bytes_received;
    record.username = username;
    record.user_agent = user_agent;
    record.referrer = referrer;
    record.service_name = service_name;
    record.server_name = server_name;
    record.server_ip = server_ip;
    record.time_taken_ms = time_taken_ms;
    record.extra = extra;
    ParseOutcome::Record(record)
}

/// `YYYY-MM-DD` plus `H:MM:SS` (hours may lack the leading zero; a
/// fractional-second suffix is accepted and truncated).
fn parse_gmt(date: &str, time: &str) -> Option<chrono::DateTime<Utc>> {
    let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
    let t = parse_clock(time)?;
    Some(Utc.from_utc_datetime(&d.and_time(t)))
}

pub(crate) fn parse_clock(time: &str) -> Option<chrono::NaiveTime> {
    let time = time.split_once('.').map(|(t, _)| t).unwrap_or(time);
    let mut parts = time.split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let s: u32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    chrono::NaiveTime::from_hms_opt(h, m, s)
}

/// Renders a record as one data line under the given field map. Absent
/// values become `-`; unknown map entries are taken from `record.extra`.
pub fn render(record: &LogRecord, field_map: &[String]) -> String {
    let (stem, query) = split_uri_query(&record.uri);
    let date = record.timestamp_utc.format("%Y-%m-%d").to_string();
    let time = record.timestamp_utc.format("%H:%M:%S").to_string();

    let mut out = Vec::with_capacity(field_map.len());
    for name in field_map {
        let value = match name.as_str() {
            "date" => date.clone(),
            "time" => time.clone(),
            "c-ip" => non_empty_or_dash(&record.ip),
            "cs-username" => or_dash(record.username.as_deref()).to_string(),
            "s-sitename" => or_dash(record.service_name.as_deref()).to_string(),
            "s-computername" => or_dash(record.server_name.as_deref()).to_string(),
            "s-ip" => or_dash(record.server_ip.as_deref()).to_string(),
            "cs-method" => non_empty_or_dash(&record.method),
            "cs-uri-stem" => non_empty_or_dash(stem),
            "cs-uri-query" => or_dash(query).to_string(),
            "sc-status" => record
                .status
                .map(|s| s.to_string())
                .unwrap_or_else(|| "-".into()),
            "sc-bytes" => opt_num(record.bytes_sent),
            "cs-bytes" => opt_num(record.bytes_received),
            "time-taken" => opt_num(record.time_taken_ms),
            "cs-version" => or_dash(record.protocol.as_deref()).to_string(),
            "cs(User-Agent)" => or_dash(record.user_agent.as_deref()).to_string(),
            "cs(Referer)" => or_dash(record.referrer.as_deref()).to_string(),
            _ => record
                .extra
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .unwrap_or_else(|| "-".into()),
        };
        out.push(value);
    }
    out.join(" ")
}

fn non_empty_or_dash(s: &str) -> String {
    if s.is_empty() {
        "-".into()
    } else {
        s.into()
    }
}

fn opt_num(n: Option<u64>) -> String {
    n.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::FormatKind;

    fn ctx(line_no: u64) -> LineContext<'static> {
        LineContext {
            source_file: "t.log",
            line_no,
            iis_offset_minutes: 0,
        }
    }

    fn sample_map() -> Vec<String> {
        [
            "date",
            "time",
            "cs-method",
            "cs-uri-stem",
            "c-ip",
            "cs-version",
            "sc-status",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    #[test]
    fn parses_sample_line_with_unpadded_hour() {
        let line = "2012-01-09 3:56:27 GET /Website/ ::1 HTTP/1.1 301";
        let out = parse_data_line(line, &sample_map(), &ctx(5));
        let r = out.as_record().expect("record");
        assert_eq!(
            r.timestamp_utc,
            Utc.with_ymd_and_hms(2012, 1, 9, 3, 56, 27).unwrap()
        );
        assert_eq!(r.offset_minutes, 0);
        assert_eq!(r.method, "GET");
        assert_eq!(r.uri, "/Website/");
        assert_eq!(r.ip, "::1");
        assert_eq!(r.protocol.as_deref(), Some("HTTP/1.1"));
        assert_eq!(r.status, Some(301));
        assert_eq!(r.line_no, 5);
    }

    #[test]
    fn directive_parsing_returns_field_tokens() {
        let lines = [
            "#Software: Microsoft Internet Information Services 7.5",
            "#Version: 1.0",
            "#Date: 2012-02-05 06:57:20",
            "#Fields: date time cs-method cs-uri-stem c-ip cs-version sc-status",
        ];
        let map = parse_w3c_directives(lines).unwrap();
        assert_eq!(
            map,
            [
                "date",
                "time",
                "cs-method",
                "cs-uri-stem",
                "c-ip",
                "cs-version",
                "sc-status"
            ]
        );
    }

    #[test]
    fn missing_fields_directive_is_an_error() {
        let lines = [
            "#Version: 1.0",
            "2012-01-09 3:56:27 GET /a ::1 HTTP/1.1 200",
        ];
        assert_eq!(
            parse_w3c_directives(lines).unwrap_err(),
            DirectiveError::MissingFieldsDirective
        );
    }

    #[test]
    fn second_fields_directive_governs() {
        let lines = [
            "#Fields: date time c-ip",
            "#Fields: date time cs-method cs-uri-stem c-ip",
        ];
        let map = parse_w3c_directives(lines).unwrap();
        assert_eq!(map.len(), 5);
    }

    #[test]
    fn field_count_mismatch_is_skipped() {
        let line = "2012-01-09 3:56:27 GET /Website/ ::1 HTTP/1.1"; // one short
        match parse_data_line(line, &sample_map(), &ctx(1)) {
            ParseOutcome::Skip(s) => assert_eq!(s.reason, SkipReason::MalformedFieldCount),
            other => panic!("expected skip, got {other:?}"),
        }
    }

    #[test]
    fn bad_status_is_skipped() {
        let line = "2012-01-09 3:56:27 GET /Website/ ::1 HTTP/1.1 999";
        match parse_data_line(line, &sample_map(), &ctx(1)) {
            ParseOutcome::Skip(s) => assert_eq!(s.reason, SkipReason::MalformedStatus),
            other => panic!("expected skip, got {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_is_skipped() {
        let line = "2012-13-41 3:56:27 GET /Website/ ::1 HTTP/1.1 200";
        match parse_data_line(line, &sample_map(), &ctx(1)) {
            ParseOutcome::Skip(s) => assert_eq!(s.reason, SkipReason::MalformedTimestamp),
            other => panic!("expected skip, got {other:?}"),
        }
    }

    #[test]
    fn unknown_tokens_preserved_as_extra_columns() {
        let map: Vec<String> = ["date", "time", "c-ip", "s-port", "x-custom"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let line = "2012-01-09 03:56:27 ::1 8080 hello";
        let out = parse_data_line(line, &map, &ctx(1));
        let r = out.as_record().unwrap();
        assert_eq!(
            r.extra,
            vec![
                ("s-port".to_string(), "8080".to_string()),
                ("x-custom".to_string(), "hello".to_string())
            ]
        );
        assert_eq!(render(r, &map), line);
    }

    #[test]
    fn render_reverses_parse() {
        let map: Vec<String> = [
            "date",
            "time",
            "c-ip",
            "cs-username",
            "cs-method",
            "cs-uri-stem",
            "cs-uri-query",
            "sc-status",
            "sc-bytes",
            "cs-version",
            "cs(User-Agent)",
            "cs(Referer)",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let line = "2012-01-09 03:56:27 192.168.0.7 alice GET /shop/cart id=9 200 512 HTTP/1.1 Mozilla/5.0(X11;Linux)Firefox/38.0 /shop";
        let out = parse_data_line(line, &map, &ctx(3));
        let r = out.as_record().expect("record");
        assert_eq!(r.uri, "/shop/cart?id=9");
        assert_eq!(r.username.as_deref(), Some("alice"));
        assert_eq!(render(r, &map), line);

        let format = crate::record::LogFormat::W3cExtended { field_map: map };
        assert_eq!(format.kind(), FormatKind::W3cExtended);
    }

    #[test]
    fn query_only_dash_roundtrip() {
        let map: Vec<String> = [
            "date",
            "time",
            "c-ip",
            "cs-method",
            "cs-uri-stem",
            "cs-uri-query",
            "sc-status",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let line = "2012-01-09 03:56:27 ::1 GET /plain - 200";
        let r = parse_data_line(line, &map, &ctx(1));
        let rec = r.as_record().unwrap();
        assert_eq!(rec.uri, "/plain");
        assert_eq!(render(rec, &map), line);
    }
}
