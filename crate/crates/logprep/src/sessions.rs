//! Session identification and path completion.
//!
//! A session is one user's requests grouped by temporal proximity: a gap
//! strictly greater than the inactivity timeout starts a new session (a gap
//! exactly equal to it does not). Path completion then re-inserts page
//! views the log never saw — cached pages revisited via the back button —
//! inferred from referrers, falling back to the site graph.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};

use crate::graph::{canonicalize_page, SiteGraph};
use crate::record::{LogRecord, RecordKey};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    /// 1-based; per user from `sessionize`, renumbered globally by the
    /// pipeline in (user, start time) order.
    pub session_id: u64,
    pub user_id: u32,
    /// Record keys in timestamp order; may include inferred entries.
    pub records: Vec<RecordKey>,
    pub start_utc: DateTime<Utc>,
    /// Timestamp of the last real (non-inferred) record.
    pub end_utc: DateTime<Utc>,
}

/// Splits one user's records into sessions.
///
/// Records are ordered by (timestamp, record key); a new session opens when
/// the gap to the previous record exceeds `timeout`, or exceeds
/// `max_page_stay` when that is set. Session ids are 1-based per user.
pub fn sessionize(
    user_id: u32,
    records: &[&LogRecord],
    timeout: Duration,
    max_page_stay: Option<Duration>,
) -> Vec<Session> {
    let mut ordered: Vec<&LogRecord> = records.to_vec();
    ordered
        .sort_by(|a, b| (a.timestamp_utc, a.record_key()).cmp(&(b.timestamp_utc, b.record_key())));

    let mut sessions: Vec<Session> = Vec::new();
    let mut current: Vec<&LogRecord> = Vec::new();
    for r in ordered {
        if let Some(prev) = current.last() {
            let gap = r.timestamp_utc - prev.timestamp_utc;
            let split = gap > timeout || max_page_stay.is_some_and(|m| gap > m);
            if split {
                sessions.push(close(user_id, sessions.len() as u64 + 1, &current));
                current.clear();
            }
        }
        current.push(r);
    }
    if !current.is_empty() {
        sessions.push(close(user_id, sessions.len() as u64 + 1, &current));
    }
    sessions
}

fn close(user_id: u32, session_id: u64, records: &[&LogRecord]) -> Session {
    Session {
        session_id,
        user_id,
        records: records.iter().map(|r| r.record_key()).collect(),
        start_utc: records.first().expect("non-empty session").timestamp_utc,
        end_utc: records
            .iter()
            .rev()
            .find(|r| !r.inferred)
            .unwrap_or(records.last().expect("non-empty session"))
            .timestamp_utc,
    }
}

struct Entry {
    key: RecordKey,
    page: String,
    referrer: Option<String>,
    ts: DateTime<Utc>,
    inferred: bool,
}

/// Inserts the page views missing from a session.
///
/// For each consecutive pair (p, q): when q carries a referrer r that is
/// neither p nor absent from the session so far, the user must have
/// backtracked — the pages between p and the most recent earlier visit of r
/// are re-inserted, in reverse navigation order, as inferred records. When
/// q has no referrer at all, the interior of the shortest graph path from p
/// to q is inserted instead. Inferred timestamps are interpolated strictly
/// inside (t_p, t_q); if the interval is too narrow to order them, nothing
/// is inserted. Insertions are visible to later pairs, and pairs whose q is
/// already inferred are skipped, which makes the operation idempotent.
///
/// Returns the rewritten session and the newly created inferred records;
/// real records are never touched.
pub fn complete_paths(
    session: &Session,
    records: &BTreeMap<RecordKey, LogRecord>,
    graph: &SiteGraph,
) -> (Session, Vec<LogRecord>) {
    let mut work: Vec<Entry> = session
        .records
        .iter()
        .map(|k| {
            let r = &records[k];
            Entry {
                key: k.clone(),
                page: canonicalize_page(&r.uri),
                referrer: r.referrer.as_deref().map(canonicalize_page),
                ts: r.timestamp_utc,
                inferred: r.inferred,
            }
        })
        .collect();

    let mut new_records: Vec<LogRecord> = Vec::new();
    let mut i = 1;
    while i < work.len() {
        if work[i].inferred {
            i += 1;
            continue;
        }
        let pages = pages_to_insert(&work, i, graph);
        if !pages.is_empty() {
            let inserted = build_inferred(&work[i - 1], &work[i], &pages, records);
            let count = inserted.len();
            let entries: Vec<Entry> = inserted
                .iter()
                .map(|r| Entry {
                    key: r.record_key(),
                    page: r.uri.clone(),
                    referrer: None,
                    ts: r.timestamp_utc,
                    inferred: true,
                })
                .collect();
            new_records.extend(inserted);
            work.splice(i..i, entries);
            i += count;
        }
        i += 1;
    }

    let mut out = session.clone();
    out.records = work.iter().map(|e| e.key.clone()).collect();
    out.start_utc = work.first().map(|e| e.ts).unwrap_or(session.start_utc);
    out.end_utc = work
        .iter()
        .rev()
        .find(|e| !e.inferred)
        .map(|e| e.ts)
        .unwrap_or(session.end_utc);
    (out, new_records)
}

/// Decides what belongs between work[i-1] (p) and work[i] (q).
fn pages_to_insert(work: &[Entry], i: usize, graph: &SiteGraph) -> Vec<String> {
    let p = &work[i - 1];
    let q = &work[i];
    match &q.referrer {
        Some(r) if *r == p.page => Vec::new(),
        Some(r) => {
            // most recent visit of r before q
            match (0..i).rev().find(|&j| work[j].page == *r) {
                // backtrack from p down to r: pages at i-2, i-3, .., j
                Some(j) => (j..i.saturating_sub(1))
                    .rev()
                    .map(|idx| work[idx].page.clone())
                    .collect(),
                None => Vec::new(),
            }
        }
        None => match graph.shortest_path(&p.page, &q.page) {
            Some(path) if path.len() > 2 => path[1..path.len() - 1].to_vec(),
            _ => Vec::new(),
        },
    }
}

fn build_inferred(
    p: &Entry,
    q: &Entry,
    pages: &[String],
    records: &BTreeMap<RecordKey, LogRecord>,
) -> Vec<LogRecord> {
    let span_ms = (q.ts - p.ts).num_milliseconds();
    let k = pages.len() as i64;
    if span_ms < k + 1 {
        // interval too narrow to place strictly interior, ordered timestamps
        return Vec::new();
    }
    let template = &records[&q.key];
    pages
        .iter()
        .enumerate()
        .map(|(idx, page)| {
            let ts = p.ts + Duration::milliseconds(span_ms * (idx as i64 + 1) / (k + 1));
            let mut r = LogRecord::new(
                template.line_no,
                template.source_file.clone(),
                template.ip.clone(),
                ts,
                "GET",
                page.clone(),
            );
            r.sub_ordinal = idx as i32 - k as i32;
            r.offset_minutes = template.offset_minutes;
            r.user_agent = template.user_agent.clone();
            r.inferred = true;
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at_minutes(m: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2012, 1, 9, 10, 0, 0).unwrap() + Duration::minutes(m)
    }

    fn rec(line_no: u64, minutes: i64, uri: &str, referrer: Option<&str>) -> LogRecord {
        let mut r = LogRecord::new(line_no, "f", "::1", at_minutes(minutes), "GET", uri);
        r.referrer = referrer.map(String::from);
        r
    }

    fn timeout() -> Duration {
        Duration::minutes(30)
    }

    #[test]
    fn small_gaps_stay_in_one_session() {
        let rs = [
            rec(1, 0, "/a", None),
            rec(2, 10, "/b", None),
            rec(3, 20, "/c", None),
        ];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let sessions = sessionize(1, &refs, timeout(), None);
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].records.len(), 3);
        assert_eq!(sessions[0].start_utc, at_minutes(0));
        assert_eq!(sessions[0].end_utc, at_minutes(20));
    }

    #[test]
    fn gap_over_timeout_splits() {
        let rs = [rec(1, 0, "/a", None), rec(2, 31, "/b", None)];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let sessions = sessionize(1, &refs, timeout(), None);
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].session_id, 1);
        assert_eq!(sessions[1].session_id, 2);
    }

    #[test]
    fn gap_exactly_timeout_stays_in_session() {
        let rs = [rec(1, 0, "/a", None), rec(2, 30, "/b", None)];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let sessions = sessionize(1, &refs, timeout(), None);
        assert_eq!(sessions.len(), 1);
    }

    #[test]
    fn max_page_stay_tightens_splitting() {
        let rs = [rec(1, 0, "/a", None), rec(2, 20, "/b", None)];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        assert_eq!(sessionize(1, &refs, timeout(), None).len(), 1);
        assert_eq!(
            sessionize(1, &refs, timeout(), Some(Duration::minutes(10))).len(),
            2
        );
    }

    #[test]
    fn unsorted_input_is_ordered_by_time() {
        let rs = [rec(2, 10, "/b", None), rec(1, 0, "/a", None)];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let sessions = sessionize(1, &refs, timeout(), None);
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].records[0].line_no, 1);
    }

    fn store(rs: &[LogRecord]) -> BTreeMap<RecordKey, LogRecord> {
        rs.iter().map(|r| (r.record_key(), r.clone())).collect()
    }

    fn graph_ab_ac() -> SiteGraph {
        let mut g = SiteGraph::new();
        g.add_edge("/a", "/b");
        g.add_edge("/a", "/c");
        g
    }

    #[test]
    fn backtrack_insertion_on_three_node_example() {
        // A, B, C with C.referrer = A: the user went back to A before C
        let rs = [
            rec(1, 0, "/a", None),
            rec(2, 2, "/b", Some("/a")),
            rec(3, 4, "/c", Some("/a")),
        ];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let session = &sessionize(1, &refs, timeout(), None)[0];
        let store = store(&rs);
        let (completed, inserted) = complete_paths(session, &store, &graph_ab_ac());

        assert_eq!(inserted.len(), 1);
        let a_star = &inserted[0];
        assert_eq!(a_star.uri, "/a");
        assert!(a_star.inferred);
        assert!(a_star.timestamp_utc > at_minutes(2));
        assert!(a_star.timestamp_utc < at_minutes(4));
        assert_eq!(a_star.line_no, 3);
        assert_eq!(a_star.sub_ordinal, -1);

        let pages: Vec<String> = completed
            .records
            .iter()
            .map(|k| {
                if k.sub_ordinal < 0 {
                    format!("{}*", inserted[0].uri)
                } else {
                    store[k].uri.clone()
                }
            })
            .collect();
        assert_eq!(pages, ["/a", "/b", "/a*", "/c"]);
        // end time excludes inferred entries
        assert_eq!(completed.end_utc, at_minutes(4));
    }

    #[test]
    fn consistent_referrer_chain_is_untouched() {
        let rs = [rec(1, 0, "/a", None), rec(2, 2, "/b", Some("/a"))];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let session = &sessionize(1, &refs, timeout(), None)[0];
        let (completed, inserted) = complete_paths(session, &store(&rs), &graph_ab_ac());
        assert!(inserted.is_empty());
        assert_eq!(completed.records, session.records);
    }

    #[test]
    fn no_evidence_is_a_no_op() {
        // no referrers, no path between consecutive pages
        let rs = [rec(1, 0, "/x", None), rec(2, 2, "/y", None)];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let session = &sessionize(1, &refs, timeout(), None)[0];
        let (completed, inserted) = complete_paths(session, &store(&rs), &graph_ab_ac());
        assert!(inserted.is_empty());
        assert_eq!(completed.records, session.records);
    }

    #[test]
    fn referrer_not_seen_earlier_is_a_no_op() {
        let rs = [rec(1, 0, "/a", None), rec(2, 2, "/c", Some("/z"))];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let session = &sessionize(1, &refs, timeout(), None)[0];
        let (_, inserted) = complete_paths(session, &store(&rs), &graph_ab_ac());
        assert!(inserted.is_empty());
    }

    #[test]
    fn graph_fallback_inserts_interior_of_shortest_path() {
        let mut g = SiteGraph::new();
        g.add_edge("/a", "/m");
        g.add_edge("/m", "/z");
        let rs = [rec(1, 0, "/a", None), rec(2, 10, "/z", None)];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let session = &sessionize(1, &refs, timeout(), None)[0];
        let (completed, inserted) = complete_paths(session, &store(&rs), &g);
        assert_eq!(inserted.len(), 1);
        assert_eq!(inserted[0].uri, "/m");
        assert_eq!(completed.records.len(), 3);
    }

    #[test]
    fn completion_is_idempotent() {
        let rs = [
            rec(1, 0, "/a", None),
            rec(2, 2, "/b", Some("/a")),
            rec(3, 4, "/c", Some("/a")),
        ];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let session = &sessionize(1, &refs, timeout(), None)[0];
        let mut all = store(&rs);
        let (once, inserted) = complete_paths(session, &all, &graph_ab_ac());
        for r in &inserted {
            all.insert(r.record_key(), r.clone());
        }
        let (twice, inserted_again) = complete_paths(&once, &all, &graph_ab_ac());
        assert!(inserted_again.is_empty());
        assert_eq!(twice, once);
    }

    #[test]
    fn zero_width_interval_inserts_nothing() {
        let rs = [
            rec(1, 0, "/a", None),
            rec(2, 0, "/b", Some("/a")),
            rec(3, 0, "/c", Some("/a")),
        ];
        let refs: Vec<&LogRecord> = rs.iter().collect();
        let session = &sessionize(1, &refs, timeout(), None)[0];
        let (_, inserted) = complete_paths(session, &store(&rs), &graph_ab_ac());
        assert!(inserted.is_empty());
    }
}
