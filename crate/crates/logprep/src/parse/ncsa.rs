//! NCSA common and combined log formats. Space-separated with two grouping
//! constructs: `[...]` around the timestamp and `"..."` around the request
//! (and, in combined, the referrer and user agent).

use chrono::{DateTime, FixedOffset, Utc};

use super::{absent, or_dash, parse_counter, parse_status, LineContext, ParseOutcome, SkipReason};
use crate::record::LogRecord;

const TIMESTAMP_FMT: &str = "%d/%b/%Y:%H:%M:%S %z";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Plain(String),
    Bracketed(String),
    Quoted(String),
}

impl Token {
    fn text(&self) -> &str {
        match self {
            Token::Plain(s) | Token::Bracketed(s) | Token::Quoted(s) => s,
        }
    }
}

/// Splits a line on runs of spaces, honoring `[...]` and `"..."` groups.
/// Inside quotes, `\"` and `\\` are unescaped. Returns `None` for an
/// unterminated group.
fn tokenize(line: &str) -> Option<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while matches!(chars.peek(), Some(' ') | Some('\t')) {
            chars.next();
        }
        let Some(&first) = chars.peek() else { break };
        match first {
            '[' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some(']') => break,
                        Some(c) => s.push(c),
                        None => return None,
                    }
                }
                tokens.push(Token::Bracketed(s));
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(c @ ('"' | '\\')) => s.push(c),
                            Some(c) => {
                                s.push('\\');
                                s.push(c);
                            }
                            None => return None,
                        },
                        Some(c) => s.push(c),
                        None => return None,
                    }
                }
                tokens.push(Token::Quoted(s));
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c == ' ' || c == '\t' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                tokens.push(Token::Plain(s));
            }
        }
    }
    Some(tokens)
}

/// True when the line has the combined format's two trailing quoted fields
/// after the byte count.
pub fn looks_combined(line: &str) -> bool {
    match tokenize(line) {
        Some(tokens) => {
            tokens.len() >= 9
                && matches!(tokens[7], Token::Quoted(_))
                && matches!(tokens[8], Token::Quoted(_))
        }
        None => false,
    }
}

/// Fixed positional grammar: `host ident authuser [date] "request" status
/// bytes`, with combined adding `"referrer" "user-agent"`.
pub fn parse(line: &str, combined: bool, ctx: &LineContext<'_>) -> ParseOutcome {
    let expected = if combined { 9 } else { 7 };
    let tokens = match tokenize(line) {
        Some(t) => t,
        None => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedFieldCount, line),
    };
    if tokens.len() != expected {
        return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedFieldCount, line);
    }
    let shape_ok = matches!(tokens[0], Token::Plain(_))
        && matches!(tokens[3], Token::Bracketed(_))
        && matches!(tokens[4], Token::Quoted(_))
        && (!combined
            || (matches!(tokens[7], Token::Quoted(_)) && matches!(tokens[8], Token::Quoted(_))));
    if !shape_ok {
        return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedFieldCount, line);
    }

    let ts = match DateTime::parse_from_str(tokens[3].text(), TIMESTAMP_FMT) {
        Ok(ts) => ts,
        Err(_) => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedTimestamp, line),
    };

    // "METHOD URI [PROTOCOL]"
    let request: Vec<&str> = tokens[4].text().split_ascii_whitespace().collect();
    let (method, uri, protocol) = match request.as_slice() {
        [m, u] => (*m, *u, None),
        [m, u, p] => (*m, *u, Some(*p)),
        _ => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedFieldCount, line),
    };

    let status = match parse_status(tokens[5].text()) {
        Ok(s) => s,
        Err(()) => return ParseOutcome::skip(ctx.line_no, SkipReason::MalformedStatus, line),
    };

    let mut record = LogRecord::new(
        ctx.line_no,
        ctx.source_file,
        tokens[0].text(),
        ts.with_timezone(&Utc),
        method.to_ascii_uppercase(),
        uri,
    );
    record.offset_minutes = ts.offset().local_minus_utc() / 60;
    record.protocol = protocol.map(String::from);
    record.status = status;
    record.bytes_sent = parse_counter(tokens[6].text());
    record.username = absent(tokens[2].text()).map(String::from);
    if combined {
        record.referrer = absent(tokens[7].text()).map(String::from);
        record.user_agent = absent(tokens[8].text()).map(String::from);
    }
    ParseOutcome::Record(record)
}

pub fn render(record: &LogRecord, combined: bool) -> String {
    let offset = FixedOffset::east_opt(record.offset_minutes * 60)
        .unwrap_or_else(|| FixedOffset::east_opt(0).unwrap());
    let local = record.timestamp_utc.with_timezone(&offset);
    let request = match &record.protocol {
        Some(p) => format!("{} {} {}", record.method, record.uri, p),
        None => format!("{} {}", record.method, record.uri),
    };
    let mut line = format!(
        "{} - {} [{}] \"{}\" {} {}",
        record.ip,
        or_dash(record.username.as_deref()),
        local.format(TIMESTAMP_FMT),
        escape_quoted(&request),
        record
            .status
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into()),
        record
            .bytes_sent
            .map(|b| b.to_string())
            .unwrap_or_else(|| "-".into()),
    );
    if combined {
        line.push_str(&format!(
            " \"{}\" \"{}\"",
            escape_quoted(or_dash(record.referrer.as_deref())),
            escape_quoted(or_dash(record.user_agent.as_deref())),
        ));
    }
    line
}

fn escape_quoted(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
