//! BGP RIB snapshots and the covering-prefix index built from them.

mod mrt;

pub use self::mrt::{parse_mrt, MrtError};

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::net::IpAddr;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{host_prefix, parse_prefix, Asn};
use crate::trie::RadixTrie;

//------------ AS paths ------------------------------------------------------

#[derive(Clone, Debug, Eq, Hash, PartialEq)]
pub enum PathSegment {
    Sequence(Vec<Asn>),
    Set(Vec<Asn>),
}

impl PathSegment {
    fn is_empty(&self) -> bool {
        match self {
            PathSegment::Sequence(v) | PathSegment::Set(v) => v.is_empty(),
        }
    }
}

/// The origin derived from an AS path.
#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd)]
pub enum Origin {
    Asn(Asn),
    /// The path ends in an AS_SET, so the origin is ambiguous.
    AsSetMarker,
}

#[derive(Clone, Copy, Debug, Error, Eq, PartialEq)]
pub enum PathError {
    #[error("empty AS path")]
    EmptyPath,
    #[error("pair has an AS_SET origin")]
    AsSetOrigin,
}

/// Rightmost ASN of the path, or the AS_SET marker if the last segment is
/// a set. Empty segments are ignored.
pub fn origin_from_path(as_path: &[PathSegment]) -> Result<Origin, PathError> {
    match as_path.iter().rev().find(|s| !s.is_empty()) {
        None => Err(PathError::EmptyPath),
        Some(PathSegment::Set(_)) => Ok(Origin::AsSetMarker),
        Some(PathSegment::Sequence(seq)) => {
            Ok(Origin::Asn(*seq.last().expect("non-empty segment")))
        }
    }
}

struct DisplayPath<'a>(&'a [PathSegment]);

impl fmt::Display for DisplayPath<'_> {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let mut first = true;
        for seg in self.0 {
            let (open, close, sep, asns) = match seg {
                PathSegment::Sequence(v) => ("", "", " ", v),
                PathSegment::Set(v) => ("{", "}", ",", v),
            };
            if asns.is_empty() {
                continue;
            }
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            f.write_str(open)?;
            for (i, asn) in asns.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{}", asn.0)?;
            }
            f.write_str(close)?;
        }
        Ok(())
    }
}

//------------ RibEntry ------------------------------------------------------

#[derive(Clone, Debug, Eq, Hash, PartialEq)]
pub struct RibEntry {
    pub prefix: IpNet,
    pub as_path: Vec<PathSegment>,
    pub origin: Origin,
}

impl RibEntry {
    pub fn new(prefix: IpNet, as_path: Vec<PathSegment>) -> Result<Self, PathError> {
        let origin = origin_from_path(&as_path)?;
        Ok(RibEntry {
            prefix,
            as_path,
            origin,
        })
    }
}

/// Renders the text RIB form `prefix|as_path`.
impl fmt::Display for RibEntry {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{}|{}", self.prefix, DisplayPath(&self.as_path))
    }
}

/// A routed prefix and the AS originating it.
#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PrefixOriginPair {
    pub prefix: IpNet,
    #[serde(rename = "asn")]
    pub origin_asn: Asn,
}

impl PrefixOriginPair {
    pub fn new(prefix: IpNet, origin_asn: Asn) -> Self {
        PrefixOriginPair { prefix, origin_asn }
    }
}

impl TryFrom<&RibEntry> for PrefixOriginPair {
    type Error = PathError;

    fn try_from(entry: &RibEntry) -> Result<Self, Self::Error> {
        match entry.origin {
            Origin::Asn(asn) => Ok(PrefixOriginPair::new(entry.prefix, asn)),
            Origin::AsSetMarker => Err(PathError::AsSetOrigin),
        }
    }
}

impl fmt::Display for PrefixOriginPair {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{} {}", self.prefix, self.origin_asn)
    }
}

//------------ Parse results -------------------------------------------------

/// Counters reported alongside parsed entries.
#[derive(Clone, Debug, Default, Eq, PartialEq, Serialize)]
pub struct RibDiagnostics {
    pub records: usize,
    pub entries: usize,
    pub truncated_records: usize,
    pub malformed_records: usize,
    pub unsupported_records: usize,
    pub malformed_lines: usize,
    pub empty_path_entries: usize,
    pub as_set_entries: usize,
}

impl RibDiagnostics {
    /// Records dropped for any reason.
    pub fn skipped_records(&self) -> usize {
        self.truncated_records + self.malformed_records + self.unsupported_records
    }

    pub fn merge(&mut self, other: &RibDiagnostics) {
        self.records += other.records;
        self.entries += other.entries;
        self.truncated_records += other.truncated_records;
        self.malformed_records += other.malformed_records;
        self.unsupported_records += other.unsupported_records;
        self.malformed_lines += other.malformed_lines;
        self.empty_path_entries += other.empty_path_entries;
        self.as_set_entries += other.as_set_entries;
    }
}

#[derive(Clone, Debug, Default)]
pub struct RibParse {
    pub entries: Vec<RibEntry>,
    pub diagnostics: RibDiagnostics,
}

impl RibParse {
    fn push(&mut self, entry: RibEntry) {
        if entry.origin == Origin::AsSetMarker {
            self.diagnostics.as_set_entries += 1;
        }
        self.diagnostics.entries += 1;
        self.entries.push(entry);
    }
}

//------------ Text RIB ------------------------------------------------------

/// Parses `prefix|as_path` lines. `{a,b}` denotes an AS_SET segment.
///
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_text_rib<R: BufRead>(source: R) -> Result<RibParse, std::io::Error> {
    let mut out = RibParse::default();
    for (index, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.diagnostics.records += 1;
        match parse_text_line(line) {
            Some(entry) => out.push(entry),
            None => {
                log::debug!("malformed RIB line {}: {}", index + 1, line);
                out.diagnostics.malformed_lines += 1;
            }
        }
    }
    Ok(out)
}

fn parse_text_line(line: &str) -> Option<RibEntry> {
    let (prefix, path) = line.split_once('|')?;
    let prefix = parse_prefix(prefix).ok()?;
    let path = parse_text_path(path)?;
    RibEntry::new(prefix, path).ok()
}

fn parse_text_path(text: &str) -> Option<Vec<PathSegment>> {
    let mut segments = Vec::new();
    let mut sequence = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix('{') {
            let (inner, tail) = after.split_once('}')?;
            let set = inner
                .split(',')
                .map(|a| a.trim().parse::<Asn>().ok())
                .collect::<Option<Vec<_>>>()?;
            if !sequence.is_empty() {
                segments.push(PathSegment::Sequence(std::mem::take(&mut sequence)));
            }
            segments.push(PathSegment::Set(set));
            rest = tail.trim_start();
        } else {
            let end = rest
                .find(|c: char| c.is_whitespace() || c == '{')
                .unwrap_or(rest.len());
            sequence.push(rest[..end].parse::<Asn>().ok()?);
            rest = rest[end..].trim_start();
        }
    }
    if !sequence.is_empty() {
        segments.push(PathSegment::Sequence(sequence));
    }
    Some(segments)
}

//------------ PrefixTrie ----------------------------------------------------

/// Immutable index of prefix/origin pairs.
#[derive(Clone, Debug, Default)]
pub struct PrefixTrie {
    inner: RadixTrie<BTreeSet<Asn>>,
    pair_count: usize,
    as_set_entries: usize,
}

impl PrefixTrie {
    pub fn prefix_count(&self) -> usize {
        self.inner.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    /// Entries left out because their origin was an AS_SET.
    pub fn as_set_entries(&self) -> usize {
        self.as_set_entries
    }

    pub fn pairs(&self) -> BTreeSet<PrefixOriginPair> {
        self.inner
            .iter()
            .into_iter()
            .flat_map(|(prefix, asns)| {
                asns.iter()
                    .map(move |asn| PrefixOriginPair::new(prefix, *asn))
            })
            .collect()
    }

    /// Pairs whose prefix contains `net`.
    pub fn covering_prefix(&self, net: &IpNet) -> BTreeSet<PrefixOriginPair> {
        self.inner
            .covering(net)
            .into_iter()
            .flat_map(|(prefix, asns)| {
                asns.iter()
                    .map(move |asn| PrefixOriginPair::new(prefix, *asn))
            })
            .collect()
    }
}

impl PartialEq for PrefixTrie {
    fn eq(&self, other: &Self) -> bool {
        self.as_set_entries == other.as_set_entries && self.pairs() == other.pairs()
    }
}

impl Eq for PrefixTrie {}

pub fn build_trie<'a, I>(entries: I) -> PrefixTrie
where
    I: IntoIterator<Item = &'a RibEntry>,
{
    let mut trie = PrefixTrie::default();
    for entry in entries {
        match entry.origin {
            Origin::AsSetMarker => trie.as_set_entries += 1,
            Origin::Asn(asn) => {
                if trie
                    .inner
                    .get_or_insert_with(entry.prefix, BTreeSet::new)
                    .insert(asn)
                {
                    trie.pair_count += 1;
                }
            }
        }
    }
    trie
}

/// Every pair whose prefix contains `ip`, not only the longest match.
pub fn covering_pairs(ip: IpAddr, trie: &PrefixTrie) -> BTreeSet<PrefixOriginPair> {
    trie.covering_prefix(&host_prefix(ip))
}
