//! User identification. Two records belong to the same user only when they
//! share an IP address and an agent signature (browser family, major
//! version, OS family); the topology mode further splits a group when its
//! page accesses cannot be explained by one visitor following the site's
//! links.

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::{canonicalize_page, SiteGraph};
use crate::record::{LogRecord, RecordKey};

/// Browser and OS identity distilled from a raw user-agent string.
/// Comparing signatures instead of raw strings keeps minor-version churn
/// from splitting one visitor into many.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentSignature {
    pub browser_family: String,
    pub browser_major: Option<u32>,
    pub os_family: String,
}

impl AgentSignature {
    pub fn unknown() -> Self {
        AgentSignature {
            browser_family: "unknown".into(),
            browser_major: None,
            os_family: "unknown".into(),
        }
    }
}

/// Deterministic token-rule extraction.
///
/// Browser: first marker that matches, in the order Edge, Chrome, Firefox,
/// Safari, MSIE/Trident, Opera; otherwise the first `name/version` product
/// token. Major version: the digits right after the marker. OS: platform
/// tokens inside parenthesized groups, checked iOS, Android, Windows, Mac,
/// Linux (most specific first, since iOS agents also mention Mac OS X and
/// Android agents mention Linux).
pub fn agent_signature(user_agent: Option<&str>) -> AgentSignature {
    let Some(ua) = user_agent else {
        return AgentSignature::unknown();
    };
    let ua = ua.trim();
    if ua.is_empty() {
        return AgentSignature::unknown();
    }

    let (browser_family, browser_major) = browser_of(ua);
    AgentSignature {
        browser_family,
        browser_major,
        os_family: os_of(ua).to_string(),
    }
}

fn browser_of(ua: &str) -> (String, Option<u32>) {
    for marker in ["Edg/", "Edge/"] {
        if ua.contains(marker) {
            return ("Edge".into(), digits_after(ua, marker));
        }
    }
    if ua.contains("Chrome/") {
        return ("Chrome".into(), digits_after(ua, "Chrome/"));
    }
    if ua.contains("Firefox/") {
        return ("Firefox".into(), digits_after(ua, "Firefox/"));
    }
    if ua.contains("Safari/") {
        return ("Safari".into(), digits_after(ua, "Safari/"));
    }
    if ua.contains("MSIE") {
        return ("MSIE".into(), digits_after(ua, "MSIE "));
    }
    if ua.contains("Trident/") {
        return ("MSIE".into(), digits_after(ua, "rv:"));
    }
    if ua.contains("OPR/") {
        return ("Opera".into(), digits_after(ua, "OPR/"));
    }
    if ua.contains("Opera") {
        let v = digits_after(ua, "Opera/").or_else(|| digits_after(ua, "Opera "));
        return ("Opera".into(), v);
    }
    // fall back to the first product token
    for token in ua.split_ascii_whitespace() {
        if let Some((name, version)) = token.split_once('/') {
            if !name.is_empty() {
                return (name.to_string(), leading_digits(version));
            }
        }
    }
    ("unknown".into(), None)
}

fn digits_after(ua: &str, marker: &str) -> Option<u32> {
    ua.find(marker)
        .and_then(|i| leading_digits(&ua[i + marker.len()..]))
}

fn leading_digits(s: &str) -> Option<u32> {
    let digits: String = s.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn os_of(ua: &str) -> &'static str {
    let mut rest = ua;
    while let Some(start) = rest.find('(') {
        let tail = &rest[start + 1..];
        let end = tail.find(')').unwrap_or(tail.len());
        let group = &tail[..end];
        if ["iPhone", "iPad", "iPod", "iOS"]
            .iter()
            .any(|m| group.contains(m))
        {
            return "iOS";
        }
        if group.contains("Android") {
            return "Android";
        }
        if group.contains("Windows") {
            return "Windows";
        }
        if group.contains("Mac") {
            return "Mac";
        }
        if group.contains("Linux") || group.contains("X11") || group.contains("Ubuntu") {
            return "Linux";
        }
        rest = &tail[end.min(tail.len())..];
    }
    "unknown"
}

/// One identified user: the records of a single (IP, signature) pair, or a
/// topology-split subset of one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserAssignment {
    /// 1-based, assigned in order of first appearance in the record stream.
    pub user_id: u32,
    pub ip: String,
    pub signature: AgentSignature,
    pub record_refs: Vec<RecordKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityMode {
    Basic,
    Topology,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentifyError {
    #[error("topology mode requires a site graph")]
    MissingGraph,
}

/// Partitions cleaned records into users.
///
/// `Basic` groups by exact (IP, signature). `Topology` additionally splits a
/// group when, scanning its records in time order, a requested page is not
/// reachable from any page an open candidate user has visited: the record
/// joins the earliest candidate that has visited the page, links to it
/// directly, or (for an entry page) has no history yet; otherwise it starts
/// a new user.
pub fn identify_users(
    records: &[LogRecord],
    mode: IdentityMode,
    graph: Option<&SiteGraph>,
) -> Result<Vec<UserAssignment>, IdentifyError> {
    match mode {
        IdentityMode::Basic => Ok(identify_basic(records)),
        IdentityMode::Topology => {
            let graph = graph.ok_or(IdentifyError::MissingGraph)?;
            Ok(identify_topology(records, graph))
        }
    }
}

fn signature_groups(records: &[LogRecord]) -> Vec<((String, AgentSignature), Vec<usize>)> {
    let mut index: HashMap<(String, AgentSignature), usize> = HashMap::new();
    let mut groups: Vec<((String, AgentSignature), Vec<usize>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let key = (r.ip.clone(), agent_signature(r.user_agent.as_deref()));
        match index.get(&key) {
            Some(&g) => groups[g].1.push(i),
            None => {
                index.insert(key.clone(), groups.len());
                groups.push((key, vec![i]));
            }
        }
    }
    groups
}

fn identify_basic(records: &[LogRecord]) -> Vec<UserAssignment> {
    signature_groups(records)
        .into_iter()
        .enumerate()
        .map(|(i, ((ip, signature), members))| UserAssignment {
            user_id: i as u32 + 1,
            ip,
            signature,
            record_refs: members.iter().map(|&m| records[m].record_key()).collect(),
        })
        .collect()
}

struct Candidate {
    visited: std::collections::BTreeSet<String>,
    members: Vec<usize>,
}

fn identify_topology(records: &[LogRecord], graph: &SiteGraph) -> Vec<UserAssignment> {
    let mut users: Vec<(usize, String, AgentSignature, Vec<usize>)> = Vec::new();

    for ((ip, signature), mut members) in signature_groups(records) {
        // time order within the group; record order breaks timestamp ties
        members.sort_by_key(|&i| (records[i].timestamp_utc, i));
        let mut candidates: Vec<Candidate> = Vec::new();
        for &i in &members {
            let page = canonicalize_page(&records[i].uri);
            let joined = candidates.iter_mut().find(|c| {
                c.visited.iter().any(|p| graph.has_edge(p, &page))
                    || c.visited.contains(&page)
                    || (graph.is_entry_page(&page) && c.visited.is_empty())
            });
            match joined {
                Some(c) => {
                    c.visited.insert(page);
                    c.members.push(i);
                }
                None => {
                    let mut visited = std::collections::BTreeSet::new();
                    visited.insert(page);
                    candidates.push(Candidate {
                        visited,
                        members: vec![i],
                    });
                }
            }
        }
        for c in candidates {
            let anchor = *c.members.iter().min().expect("candidate never empty");
            let mut refs = c.members;
            refs.sort_unstable();
            users.push((anchor, ip.clone(), signature.clone(), refs));
        }
    }

    users.sort_by_key(|(anchor, ..)| *anchor);
    users
        .into_iter()
        .enumerate()
        .map(|(i, (_, ip, signature, members))| UserAssignment {
            user_id: i as u32 + 1,
            ip,
            signature,
            record_refs: members.iter().map(|&m| records[m].record_key()).collect(),
        })
        .collect()
}
