//! Deterministic synthetic-log generator. Produces a log file in any
//! supported format together with a ground-truth sidecar stating, per line,
//! whether cleaning removes it and which user and session it belongs to.
//!
//! Construction guarantees: exactly `irrelevant` lines match the default
//! cleaning policy, the kept lines span exactly `users` distinct
//! (IP, agent-signature) pairs, and no IP carries two agents — so grouping
//! by IP alone and by (IP, signature) agree.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::removal_reason;
use crate::parse::render_line;
use crate::record::{CleaningPolicy, FormatKind, LogFormat, LogRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub records: u64,
    pub irrelevant: u64,
    pub users: u64,
    pub sessions_per_user_mean: f64,
    pub seed: u64,
    pub format: FormatKind,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            records: 500,
            irrelevant: 59,
            users: 52,
            sessions_per_user_mean: 2.0,
            seed: 42,
            format: FormatKind::NcsaCombined,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("infeasible fixture: {0}")]
pub struct FixtureError(pub String);

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format: String,
    pub seed: u64,
    pub planned_users: u64,
    pub planned_sessions: u64,
    pub planned_removed_by_reason: BTreeMap<String, u64>,
    pub records: Vec<GroundTruthRecord>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub line_no: u64,
    pub removed: bool,
    pub removal_reason: Option<String>,
    pub user_id: Option<u32>,
    pub session_id: Option<u64>,
}

#[derive(Debug)]
pub struct Fixture {
    pub log_text: String,
    pub ground_truth: GroundTruth,
}

impl Fixture {
    /// Writes `access.log` and `ground_truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let log_path = dir.join("access.log");
        std::fs::write(&log_path, &self.log_text)?;
        let gt_path = dir.join("ground_truth.json");
        let mut text = serde_json::to_string_pretty(&self.ground_truth)?;
        text.push('\n');
        std::fs::write(&gt_path, text)?;
        Ok((log_path, gt_path))
    }
}

const PAGES: [&str; 12] = [
    "/",
    "/home.htm",
    "/about.htm",
    "/contact.htm",
    "/news.htm",
    "/products.htm",
    "/products/widgets.htm",
    "/products/gadgets.htm",
    "/downloads.htm",
    "/faq.htm",
    "/blog.htm",
    "/search.htm",
];

const RESOURCE_STEMS: [&str; 8] = [
    "/img/banner",
    "/img/logo",
    "/img/photo",
    "/img/icon",
    "/styles/site",
    "/styles/print",
    "/img/header",
    "/img/footer",
];

const SUFFIX_CYCLE: [&str; 4] = [".jpg", ".jpeg", ".gif", ".css"];

const AGENTS: [&str; 10] = [
    "Mozilla/5.0 (Windows NT 6.1) AppleWebKit/537.36 Chrome/47.0.2526.106 Safari/537.36",
    "Mozilla/5.0 (X11; Linux x86_64; rv:38.0) Gecko/20100101 Firefox/38.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_10_5) AppleWebKit/600.8.9 Version/8.0.8 Safari/600.8.9",
    "Mozilla/5.0 (compatible; MSIE 9.0; Windows NT 6.1; Trident/5.0)",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 Chrome/46.0.2490.86 Safari/537.36 Edge/13.10586",
    "Mozilla/5.0 (Linux; Android 5.1; Nexus 5) AppleWebKit/537.36 Chrome/46.0.2490.76 Mobile Safari/537.36",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 9_1 like Mac OS X) AppleWebKit/601.1.46 Version/9.0 Mobile/13B143 Safari/601.1",
    "Mozilla/5.0 (Windows NT 6.3; rv:36.0) Gecko/20100101 Firefox/36.0",
    "Opera/9.80 (Windows NT 6.0) Presto/2.12.388 Version/12.14",
    "Mozilla/5.0 (X11; Ubuntu; Linux i686) AppleWebKit/537.36 Chrome/40.0.2214.93 Safari/537.36",
];

struct Event {
    seq: u64,
    ts: DateTime<Utc>,
    user: Option<usize>,
    uri: String,
    referrer: Option<String>,
    status: u16,
    bytes: u64,
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture, FixtureError> {
    if spec.irrelevant > spec.records {
        return Err(FixtureError(format!(
            "irrelevant ({}) exceeds records ({})",
            spec.irrelevant, spec.records
        )));
    }
    let kept_total = spec.records - spec.irrelevant;
    if spec.users > kept_total {
        return Err(FixtureError(format!(
            "users ({}) exceeds kept records ({kept_total})",
            spec.users
        )));
    }
    if kept_total > 0 && spec.users == 0 {
        return Err(FixtureError(
            "kept records need at least one user".to_string(),
        ));
    }
    if spec.sessions_per_user_mean <= 0.0 || spec.sessions_per_user_mean.is_nan() {
        return Err(FixtureError(
            "sessions-per-user mean must be positive".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = Utc.with_ymd_and_hms(2012, 1, 9, 0, 0, 0).unwrap();

    // one identity per user; W3C is space-delimited, so agents use the
    // IIS-style `+` encoding there
    let identities: Vec<(String, String)> = (0..spec.users)
        .map(|u| {
            let ip = format!("172.16.{}.{}", 1 + u / 250, 1 + u % 250);
            let mut agent = AGENTS[(u as usize) % AGENTS.len()].to_string();
            if spec.format == FormatKind::W3cExtended {
                agent = agent.replace(' ', "+");
            }
            (ip, agent)
        })
        .collect();

    // kept records per user, each user getting at least one
    let mut per_user = vec![1u64; spec.users as usize];
    for _ in 0..kept_total.saturating_sub(spec.users) {
        per_user[rng.gen_range(0..spec.users as usize)] += 1;
    }

    let mut events: Vec<Event> = Vec::with_capacity(spec.records as usize);
    let mut seq = 0u64;
    for (u, &count) in per_user.iter().enumerate() {
        let n_sessions = poisson(&mut rng, spec.sessions_per_user_mean)
            .max(1)
            .min(count) as usize;
        let mut session_sizes = vec![1u64; n_sessions];
        for _ in 0..count - n_sessions as u64 {
            session_sizes[rng.gen_range(0..n_sessions)] += 1;
        }
        let mut t = base + Duration::minutes(rng.gen_range(0..=600));
        for (si, &size) in session_sizes.iter().enumerate() {
            if si > 0 {
                // strictly beyond the 30-minute default timeout
                t += Duration::seconds(rng.gen_range(31 * 60..=180 * 60));
            }
            let mut prev_page: Option<&str> = None;
            for k in 0..size {
                if k > 0 {
                    t += Duration::seconds(rng.gen_range(5..=290));
                }
                let page = PAGES[rng.gen_range(0..PAGES.len())];
                events.push(Event {
                    seq,
                    ts: t,
                    user: Some(u),
                    uri: page.to_string(),
                    referrer: prev_page.map(String::from),
                    status: *[200u16, 200, 200, 200, 200, 200, 200, 200, 301, 304]
                        .get(rng.gen_range(0..10))
                        .unwrap(),
                    bytes: rng.gen_range(200..=50_000),
                });
                seq += 1;
                prev_page = Some(page);
            }
        }
    }

    // embedded-resource fetches ride on a randomly chosen page view
    let kept_len = events.len();
    for j in 0..spec.irrelevant {
        let uri = resource_uri(j);
        let (ts, user, referrer) = if kept_len > 0 {
            let host = &events[rng.gen_range(0..kept_len)];
            (
                host.ts + Duration::seconds(rng.gen_range(0..=2)),
                host.user,
                Some(host.uri.clone()),
            )
        } else {
            (base + Duration::seconds(j as i64), None, None)
        };
        events.push(Event {
            seq,
            ts,
            user,
            uri,
            referrer,
            status: 200,
            bytes: rng.gen_range(40..=4_000),
        });
        seq += 1;
    }

    events.sort_by_key(|e| (e.ts, e.seq));

    let offset_minutes = match spec.format {
        FormatKind::NcsaCommon | FormatKind::NcsaCombined => 330,
        FormatKind::W3cExtended | FormatKind::Iis => 0,
    };
    let records: Vec<LogRecord> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (ip, agent) = match e.user {
                Some(u) => (identities[u].0.clone(), Some(identities[u].1.clone())),
                None => (format!("10.9.{}.{}", 1 + i / 250, 1 + i % 250), None),
            };
            let mut r = LogRecord::new(i as u64 + 1, "access.log", ip, e.ts, "GET", &e.uri);
            r.offset_minutes = offset_minutes;
            r.protocol = Some("HTTP/1.1".to_string());
            r.status = Some(e.status);
            r.bytes_sent = Some(e.bytes);
            r.referrer = e.referrer.clone();
            r.user_agent = agent;
            r
        })
        .collect();

    let format = match spec.format {
        FormatKind::W3cExtended => LogFormat::W3cExtended {
            field_map: [
                "date",
                "time",
                "c-ip",
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
            .collect(),
        },
        kind => LogFormat::from(kind),
    };

    let mut lines: Vec<String> = Vec::with_capacity(records.len() + 3);
    if let LogFormat::W3cExtended { field_map } = &format {
        lines.push("#Version: 1.0".to_string());
        lines.push(format!("#Date: {}", base.format("%Y-%m-%d %H:%M:%S")));
        lines.push(format!("#Fields: {}", field_map.join(" ")));
    }
    for r in &records {
        lines.push(render_line(r, &format, 0));
    }
    let mut log_text = lines.join("\n");
    log_text.push('\n');

    let ground_truth = plan_ground_truth(spec, &events, &records)?;
    Ok(Fixture {
        log_text,
        ground_truth,
    })
}

/// Replays the default pipeline rules over the planned records: removal by
/// the default policy, users by first appearance of the IP, sessions by the
/// 30-minute timeout, numbered in (user, start-time) order.
fn plan_ground_truth(
    spec: &FixtureSpec,
    events: &[Event],
    records: &[LogRecord],
) -> Result<GroundTruth, FixtureError> {
    let policy = CleaningPolicy::default();

    let mut removed_by_reason: BTreeMap<String, u64> = BTreeMap::new();
    let mut user_of_plan: BTreeMap<usize, u32> = BTreeMap::new();
    let mut assigned: Vec<Option<u32>> = vec![None; records.len()];
    let mut reasons: Vec<Option<String>> = vec![None; records.len()];
    let mut next_user = 0u32;
    for (i, r) in records.iter().enumerate() {
        match removal_reason(r, &policy) {
            Some(reason) => {
                let label = reason.label();
                *removed_by_reason.entry(label.clone()).or_insert(0) += 1;
                reasons[i] = Some(label);
            }
            None => {
                let plan_user = events[i].user.expect("kept record has a planned user");
                let id = *user_of_plan.entry(plan_user).or_insert_with(|| {
                    next_user += 1;
                    next_user
                });
                assigned[i] = Some(id);
            }
        }
    }

    let removed_total: u64 = removed_by_reason.values().sum();
    if removed_total != spec.irrelevant || user_of_plan.len() as u64 != spec.users {
        return Err(FixtureError(format!(
            "construction check failed: removed {removed_total}/{} users {}/{}",
            spec.irrelevant,
            user_of_plan.len(),
            spec.users
        )));
    }

    // kept record indices per user id, in line order
    let mut per_user: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, id) in assigned.iter().enumerate() {
        if let Some(id) = id {
            per_user.entry(*id).or_default().push(i);
        }
    }
    let timeout = Duration::minutes(30);
    let mut session_ids: Vec<Option<u64>> = vec![None; records.len()];
    let mut next_session = 0u64;
    for indices in per_user.values() {
        let mut ordered = indices.clone();
        ordered.sort_by_key(|&i| (records[i].timestamp_utc, i));
        let mut prev: Option<DateTime<Utc>> = None;
        for &i in &ordered {
            let split = match prev {
                Some(p) => records[i].timestamp_utc - p > timeout,
                None => true,
            };
            if split {
                next_session += 1;
            }
            session_ids[i] = Some(next_session);
            prev = Some(records[i].timestamp_utc);
        }
    }

    let gt_records = records
        .iter()
        .enumerate()
        .map(|(i, r)| GroundTruthRecord {
            line_no: r.line_no,
            removed: reasons[i].is_some(),
            removal_reason: reasons[i].clone(),
            user_id: assigned[i],
            session_id: session_ids[i],
        })
        .collect();

    Ok(GroundTruth {
        format: spec.format.name().to_string(),
        seed: spec.seed,
        planned_users: spec.users,
        planned_sessions: next_session,
        planned_removed_by_reason: removed_by_reason,
        records: gt_records,
    })
}

fn resource_uri(j: u64) -> String {
    let stem = RESOURCE_STEMS[(j % RESOURCE_STEMS.len() as u64) as usize];
    let suffix = SUFFIX_CYCLE[(j % SUFFIX_CYCLE.len() as u64) as usize];
    let mut uri = if j.is_multiple_of(5) {
        format!("{stem}{}", suffix.to_ascii_uppercase())
    } else {
        format!("{stem}{suffix}")
    };
    if j % 7 == 3 {
        uri.push_str("?v=2");
    }
    uri
}

fn poisson(rng: &mut impl Rng, mean: f64) -> u64 {
    let l = (-mean).exp();
    let mut k = 0u64;
    let mut p = 1.0f64;
    loop {
        p *= rng.gen::<f64>();
        if p <= l || k >= 1_000 {
            return k;
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_fixture() {
        let spec = FixtureSpec {
            records: 1,
            irrelevant: 0,
            users: 1,
            ..FixtureSpec::default()
        };
        let f = generate_fixture(&spec).unwrap();
        assert_eq!(f.log_text.lines().count(), 1);
        assert_eq!(f.ground_truth.planned_users, 1);
        assert_eq!(f.ground_truth.planned_sessions, 1);
        assert_eq!(f.ground_truth.records.len(), 1);
        assert_eq!(f.ground_truth.records[0].user_id, Some(1));
        assert_eq!(f.ground_truth.records[0].session_id, Some(1));
        assert!(!f.ground_truth.records[0].removed);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let spec = FixtureSpec {
            records: 120,
            irrelevant: 17,
            users: 9,
            ..FixtureSpec::default()
        };
        let a = generate_fixture(&spec).unwrap();
        let b = generate_fixture(&spec).unwrap();
        assert_eq!(a.log_text, b.log_text);
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let bad = [
            FixtureSpec {
                records: 10,
                irrelevant: 11,
                users: 1,
                ..FixtureSpec::default()
            },
            FixtureSpec {
                records: 10,
                irrelevant: 5,
                users: 6,
                ..FixtureSpec::default()
            },
            FixtureSpec {
                records: 10,
                irrelevant: 0,
                users: 0,
                ..FixtureSpec::default()
            },
        ];
        for spec in bad {
            assert!(generate_fixture(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn default_spec_plants_exact_counts() {
        let f = generate_fixture(&FixtureSpec::default()).unwrap();
        assert_eq!(f.log_text.lines().count(), 500);
        assert_eq!(f.ground_truth.records.len(), 500);
        let removed = f.ground_truth.records.iter().filter(|r| r.removed).count();
        assert_eq!(removed, 59);
        assert_eq!(f.ground_truth.planned_users, 52);
        let distinct_users: std::collections::BTreeSet<u32> = f
            .ground_truth
            .records
            .iter()
            .filter_map(|r| r.user_id)
            .collect();
        assert_eq!(distinct_users.len(), 52);
        // user ids are contiguous from 1 in first-appearance order
        assert_eq!(*distinct_users.iter().next().unwrap(), 1);
        assert_eq!(*distinct_users.iter().last().unwrap(), 52);
    }

    #[test]
    fn w3c_fixture_has_directives_and_no_spaces_in_agents() {
        let spec = FixtureSpec {
            records: 30,
            irrelevant: 4,
            users: 5,
            format: FormatKind::W3cExtended,
            ..FixtureSpec::default()
        };
        let f = generate_fixture(&spec).unwrap();
        let lines: Vec<&str> = f.log_text.lines().collect();
        assert!(lines[0].starts_with("#Version"));
        assert!(lines[2].starts_with("#Fields:"));
        assert_eq!(lines.len(), 33);
    }

    #[test]
    fn iis_fixture_renders_comma_fields() {
        let spec = FixtureSpec {
            records: 10,
            irrelevant: 2,
            users: 3,
            format: FormatKind::Iis,
            ..FixtureSpec::default()
        };
        let f = generate_fixture(&spec).unwrap();
        let first = f.log_text.lines().next().unwrap();
        assert!(first.split(',').count() >= 15, "{first}");
    }
}
