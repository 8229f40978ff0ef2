//! Ranked domain lists, www variants and rank bins.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::num::NonZeroU32;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

//------------ DomainName ----------------------------------------------------

/// A lowercase DNS name without the trailing dot.
///
/// Only ASCII names are accepted. Internationalized names must already be
/// in punycode form.
#[derive(Clone, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DomainName(String);

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("invalid domain name '{0}'")]
pub struct InvalidName(pub String);

impl DomainName {
    pub const MAX_LEN: usize = 253;
    pub const MAX_LABEL_LEN: usize = 63;

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    /// Whether the leftmost label is exactly `www`.
    pub fn starts_with_www(&self) -> bool {
        self.labels().next() == Some("www")
    }

    /// Prepends a label, returning `None` if the result would be too long.
    pub fn with_prefix_label(&self, label: &str) -> Option<DomainName> {
        DomainName::from_str(&format!("{}.{}", label, self.0)).ok()
    }
}

impl FromStr for DomainName {
    type Err = InvalidName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let name = trimmed.strip_suffix('.').unwrap_or(trimmed);
        if name.is_empty() || name.len() > Self::MAX_LEN {
            return Err(InvalidName(s.into()));
        }
        for label in name.split('.') {
            if label.is_empty()
                || label.len() > Self::MAX_LABEL_LEN
                || !label
                    .bytes()
                    .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
            {
                return Err(InvalidName(s.into()));
            }
        }
        Ok(DomainName(name.to_ascii_lowercase()))
    }
}

impl TryFrom<String> for DomainName {
    type Error = InvalidName;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<DomainName> for String {
    fn from(name: DomainName) -> Self {
        name.0
    }
}

impl fmt::Display for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(&self.0)
    }
}

//------------ DomainRecord --------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Www,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Www => "www",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DomainRecord {
    pub rank: u32,
    pub name: DomainName,
    pub variant: Variant,
}

impl DomainRecord {
    pub fn base(rank: u32, name: DomainName) -> Self {
        DomainRecord {
            rank,
            name,
            variant: Variant::Base,
        }
    }
}

//------------ Loading -------------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum ListFormat {
    /// `rank,domain` per line.
    CsvRankDomain,
    /// One domain per line, rank is the line number.
    PlainOrdered,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("domain list contains no valid records")]
    EmptyInput,
    #[error("rank {rank} appears more than once (line {line})")]
    DuplicateRank { rank: u32, line: usize },
    #[error("domain list is not valid UTF-8 or unreadable: {0}")]
    Io(#[from] std::io::Error),
}

/// A loaded list plus the counters reported on the diagnostics channel.
#[derive(Clone, Debug, Default, Eq, PartialEq)]
pub struct DomainList {
    pub records: Vec<DomainRecord>,
    pub malformed_lines: usize,
    pub duplicate_names: usize,
}

pub fn load_domain_list<R: BufRead>(
    source: R,
    format: ListFormat,
) -> Result<DomainList, IngestError> {
    // name -> rank, keeping the lowest rank for repeated names
    let mut by_name: HashMap<DomainName, u32> = HashMap::new();
    let mut seen_ranks: HashMap<u32, usize> = HashMap::new();
    let mut malformed = 0;
    let mut duplicate_names = 0;

    for (index, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = index + 1;
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let parsed = match format {
            ListFormat::CsvRankDomain => parse_csv_line(line),
            ListFormat::PlainOrdered => line
                .parse::<DomainName>()
                .ok()
                .map(|name| (line_no as u32, name)),
        };
        let Some((rank, name)) = parsed else {
            log::debug!("skipping malformed domain list line {}", line_no);
            malformed += 1;
            continue;
        };
        if format == ListFormat::CsvRankDomain && seen_ranks.insert(rank, line_no).is_some() {
            return Err(IngestError::DuplicateRank {
                rank,
                line: line_no,
            });
        }
        match by_name.get_mut(&name) {
            Some(existing) => {
                duplicate_names += 1;
                *existing = (*existing).min(rank);
            }
            None => {
                by_name.insert(name, rank);
            }
        }
    }

    if by_name.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut records: Vec<_> = by_name
        .into_iter()
        .map(|(name, rank)| DomainRecord::base(rank, name))
        .collect();
    records.sort();
    Ok(DomainList {
        records,
        malformed_lines: malformed,
        duplicate_names,
    })
}

fn parse_csv_line(line: &str) -> Option<(u32, DomainName)> {
    let (rank, name) = line.split_once(',')?;
    let rank: u32 = rank.trim().parse().ok().filter(|r| *r >= 1)?;
    let name = name.trim().parse().ok()?;
    Some((rank, name))
}

//------------ Variants ------------------------------------------------------

/// Returns the base record and, unless the name already starts with a `www`
/// label, its `www.` variant. Www records are returned unchanged.
pub fn expand_variants(record: &DomainRecord) -> Vec<DomainRecord> {
    let mut out = vec![record.clone()];
    if record.variant == Variant::Www || record.name.starts_with_www() {
        return out;
    }
    if let Some(www) = record.name.with_prefix_label("www") {
        out.push(DomainRecord {
            rank: record.rank,
            name: www,
            variant: Variant::Www,
        });
    }
    out
}

//------------ Bins ----------------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize)]
pub struct RankBin {
    pub index: u32,
    pub lo: u32,
    pub hi: u32,
}

impl RankBin {
    pub fn contains(&self, rank: u32) -> bool {
        self.lo <= rank && rank <= self.hi
    }
}

/// Index of the bin holding `rank` (1-based).
pub fn bin_index(rank: u32, bin_size: NonZeroU32) -> u32 {
    (rank.max(1) - 1) / bin_size.get()
}

/// Partitions `[1, max_rank]` into consecutive bins of `bin_size`.
pub fn assign_bins(records: &[DomainRecord], bin_size: NonZeroU32) -> Vec<RankBin> {
    let Some(max_rank) = records.iter().map(|r| r.rank).max() else {
        return Vec::new();
    };
    let size = bin_size.get();
    let count = bin_index(max_rank, bin_size) + 1;
    (0..count)
        .map(|index| {
            let lo = index * size + 1;
            let hi = lo.saturating_add(size - 1).min(max_rank);
            RankBin { index, lo, hi }
        })
        .collect()
}
