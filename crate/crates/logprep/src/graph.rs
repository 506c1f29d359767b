//! Directed site graph: pages as nodes, hyperlinks as edges. Used by
//! topology-based user identification and by path completion.
//!
//! All node text is canonicalized the same way on insert and on lookup:
//! scheme and host stripped, query dropped, lowercased.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::record::LogRecord;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiteGraph {
    nodes: BTreeSet<String>,
    edges: BTreeMap<String, BTreeSet<String>>,
    entry_pages: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed edge line {line_no}: expected two tab-separated pages")]
    MalformedEdgeLine { line_no: u64 },
    #[error("cannot read edge file: {0}")]
    Io(#[from] std::io::Error),
}

/// Canonical page form: host-less path, query and fragment stripped,
/// lowercased. Idempotent.
pub fn canonicalize_page(uri: &str) -> String {
    let mut s = uri.trim();
    for scheme in ["http://", "https://"] {
        if let Some(rest) = strip_prefix_ignore_case(s, scheme) {
            s = match rest.find('/') {
                Some(i) => &rest[i..],
                None => "/",
            };
            break;
        }
    }
    let s = s.split(['?', '#']).next().unwrap_or("");
    let s = s.to_ascii_lowercase();
    if s.is_empty() {
        "/".to_string()
    } else {
        s
    }
}

fn strip_prefix_ignore_case<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&s[prefix.len()..])
    } else {
        None
    }
}

impl SiteGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `from<TAB>to` pairs, one per line; blank lines are ignored.
    pub fn from_edge_lines<'a, I>(lines: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut graph = SiteGraph::new();
        for (i, line) in lines.into_iter().enumerate() {
            let line_no = i as u64 + 1;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 || fields[0].trim().is_empty() || fields[1].trim().is_empty() {
                return Err(GraphError::MalformedEdgeLine { line_no });
            }
            graph.add_edge(fields[0], fields[1]);
        }
        Ok(graph)
    }

    pub fn from_edge_file(path: &Path) -> Result<Self, GraphError> {
        let file = std::fs::File::open(path)?;
        let mut lines = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            lines.push(line?);
        }
        Self::from_edge_lines(lines.iter().map(String::as_str))
    }

    /// Derives a graph from the records' referrers. Two passes: the first
    /// collects every requested page as a node; the second adds an edge
    /// referrer→page when the referrer's canonical path is itself a known
    /// page (on-site), and marks pages reached with an absent or off-site
    /// referrer as entry pages.
    pub fn derive_from_records<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a LogRecord> + Clone,
    {
        let mut graph = SiteGraph::new();
        for r in records.clone() {
            graph.nodes.insert(canonicalize_page(&r.uri));
        }
        for r in records {
            let page = canonicalize_page(&r.uri);
            let onsite_ref = r
                .referrer
                .as_deref()
                .map(canonicalize_page)
                .filter(|c| graph.nodes.contains(c));
            match onsite_ref {
                Some(from) => graph.add_edge_canonical(from, page),
                None => {
                    graph.entry_pages.insert(page);
                }
            }
        }
        graph
    }

    pub fn add_edge(&mut self, from: &str, to: &str) {
        self.add_edge_canonical(canonicalize_page(from), canonicalize_page(to));
    }

    fn add_edge_canonical(&mut self, from: String, to: String) {
        self.nodes.insert(from.clone());
        self.nodes.insert(to.clone());
        self.edges.entry(from).or_default().insert(to);
    }

    pub fn add_entry_page(&mut self, page: &str) {
        let page = canonicalize_page(page);
        self.nodes.insert(page.clone());
        self.entry_pages.insert(page);
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges
            .get(&canonicalize_page(from))
            .is_some_and(|tos| tos.contains(&canonicalize_page(to)))
    }

    pub fn is_entry_page(&self, page: &str) -> bool {
        self.entry_pages.contains(&canonicalize_page(page))
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn entry_pages(&self) -> &BTreeSet<String> {
        &self.entry_pages
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Shortest directed path from `from` to `to`, endpoints included.
    /// Breadth-first with neighbors visited in sorted order, so ties break
    /// deterministically.
    pub fn shortest_path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        let from = canonicalize_page(from);
        let to = canonicalize_page(to);
        if !self.nodes.contains(&from) || !self.nodes.contains(&to) {
            return None;
        }
        if from == to {
            return Some(vec![from]);
        }
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        queue.push_back(&from);
        while let Some(cur) = queue.pop_front() {
            if let Some(nexts) = self.edges.get(cur) {
                for next in nexts {
                    if next == &from || prev.contains_key(next.as_str()) {
                        continue;
                    }
                    prev.insert(next, cur);
                    if *next == to {
                        let mut path = vec![to.clone()];
                        let mut at: &str = &to;
                        while let Some(&p) = prev.get(at) {
                            path.push(p.to_string());
                            at = p;
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(next);
                }
            }
        }
        None
    }
}
