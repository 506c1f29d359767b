//! Data cleaning: drops records that describe embedded resources (images,
//! stylesheets) or, optionally, failed requests, before any behavioral
//! analysis.

use std::collections::BTreeMap;
use std::fmt;

use crate::record::{CleaningPolicy, LogRecord};

/// Why a record was removed. Suffix rules are checked before the status
/// rule; among suffixes the lexicographically first match wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RemovalReason {
    Suffix(String),
    FailedStatus,
}

impl RemovalReason {
    pub fn label(&self) -> String {
        match self {
            RemovalReason::Suffix(s) => format!("SUFFIX:{s}"),
            RemovalReason::FailedStatus => "FAILED_STATUS".to_string(),
        }
    }
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Returns the reason this record is irrelevant, or `None` to keep it.
///
/// Suffix matching is case-insensitive on the URI path, after stripping the
/// query string when the policy says so.
pub fn removal_reason(record: &LogRecord, policy: &CleaningPolicy) -> Option<RemovalReason> {
    let path = if policy.strip_query_before_match {
        record.uri.split('?').next().unwrap_or("")
    } else {
        record.uri.as_str()
    };
    let path = path.to_ascii_lowercase();
    for suffix in &policy.irrelevant_suffixes {
        if path.ends_with(suffix.as_str()) {
            return Some(RemovalReason::Suffix(suffix.clone()));
        }
    }
    if policy.remove_failed_status {
        if let Some(status) = record.status {
            if policy
                .failed_status_ranges
                .iter()
                .any(|(lo, hi)| (*lo..=*hi).contains(&status))
            {
                return Some(RemovalReason::FailedStatus);
            }
        }
    }
    None
}

/// Filters a record list, preserving order, and tallies removals by reason.
pub fn clean(
    records: Vec<LogRecord>,
    policy: &CleaningPolicy,
) -> (Vec<LogRecord>, BTreeMap<String, u64>) {
    let mut removed: BTreeMap<String, u64> = BTreeMap::new();
    let kept = records
        .into_iter()
        .filter(|r| match removal_reason(r, policy) {
            Some(reason) => {
                *removed.entry(reason.label()).or_insert(0) += 1;
                false
            }
            None => true,
        })
        .collect();
    (kept, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn record(uri: &str) -> LogRecord {
        let ts = Utc.with_ymd_and_hms(2012, 1, 9, 3, 56, 27).unwrap();
        LogRecord::new(1, "f", "::1", ts, "GET", uri)
    }

    #[test]
    fn gif_is_removed_with_default_policy() {
        let p = CleaningPolicy::default();
        assert_eq!(
            removal_reason(&record("/img/logo.gif"), &p),
            Some(RemovalReason::Suffix(".gif".into()))
        );
    }

    #[test]
    fn page_request_is_kept() {
        let p = CleaningPolicy::default();
        assert_eq!(removal_reason(&record("/Website/"), &p), None);
    }

    #[test]
    fn uppercase_suffix_behind_query_is_removed() {
        let p = CleaningPolicy::default();
        assert_eq!(
            removal_reason(&record("/a/style.CSS?v=2"), &p),
            Some(RemovalReason::Suffix(".css".into()))
        );
    }

    #[test]
    fn query_stripping_can_be_disabled() {
        let p = CleaningPolicy {
            strip_query_before_match: false,
            ..CleaningPolicy::default()
        };
        assert_eq!(removal_reason(&record("/a/style.css?v=2"), &p), None);
        assert_eq!(
            removal_reason(&record("/a/style.css"), &p),
            Some(RemovalReason::Suffix(".css".into()))
        );
    }

    #[test]
    fn failed_status_rule_is_off_by_default() {
        let mut r = record("/missing.htm");
        r.status = Some(404);
        assert_eq!(removal_reason(&r, &CleaningPolicy::default()), None);

        let p = CleaningPolicy {
            remove_failed_status: true,
            ..CleaningPolicy::default()
        };
        assert_eq!(removal_reason(&r, &p), Some(RemovalReason::FailedStatus));
    }

    #[test]
    fn suffix_rule_wins_over_status_rule() {
        let p = CleaningPolicy {
            remove_failed_status: true,
            ..CleaningPolicy::default()
        };
        let mut r = record("/broken.gif");
        r.status = Some(404);
        assert_eq!(
            removal_reason(&r, &p),
            Some(RemovalReason::Suffix(".gif".into()))
        );
    }

    #[test]
    fn clean_preserves_order_and_conserves_counts() {
        let input: Vec<LogRecord> = [
            "/index.htm",
            "/banner.jpg",
            "/about.htm",
            "/style.css",
            "/pic.jpeg",
        ]
        .iter()
        .enumerate()
        .map(|(i, uri)| {
            let mut r = record(uri);
            r.line_no = i as u64 + 1;
            r
        })
        .collect();
        let n = input.len() as u64;
        let (kept, removed) = clean(input, &CleaningPolicy::default());
        assert_eq!(
            kept.iter().map(|r| r.uri.as_str()).collect::<Vec<_>>(),
            ["/index.htm", "/about.htm"]
        );
        assert_eq!(removed.get("SUFFIX:.jpg"), Some(&1));
        assert_eq!(removed.get("SUFFIX:.css"), Some(&1));
        assert_eq!(removed.get("SUFFIX:.jpeg"), Some(&1));
        assert_eq!(kept.len() as u64 + removed.values().sum::<u64>(), n);
    }

    #[test]
    fn clean_on_empty_input() {
        let (kept, removed) = clean(Vec::new(), &CleaningPolicy::default());
        assert!(kept.is_empty());
        assert!(removed.is_empty());
    }

    #[test]
    fn clean_identity_when_nothing_matches() {
        let input = vec![record("/a.htm"), record("/b.htm")];
        let (kept, removed) = clean(input.clone(), &CleaningPolicy::default());
        assert_eq!(kept, input);
        assert!(removed.is_empty());
    }
}
