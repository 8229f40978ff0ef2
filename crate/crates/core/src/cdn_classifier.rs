//! Classifying domains as CDN-served.
//!
//! Two independent signals are produced: the CNAME-chain heuristic (two or
//! more aliases before the address records) and whether an origin AS
//! belongs to a known CDN operator, found by keyword spotting on AS
//! registry descriptions. The keyword approach yields a lower bound.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use num::rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dns_resolution::{ResolutionResult, ResolutionStatus};
use crate::domain_ingest::DomainName;
use crate::net::Asn;
use crate::rib_store::PrefixOriginPair;

/// Minimum alias chain length that marks a domain as CDN-served.
pub const CDN_CHAIN_THRESHOLD: usize = 2;

const BUNDLED_KEYWORDS: &str = include_str!("../data/cdn-keywords.txt");

#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
pub struct CdnLabel {
    pub domain: DomainName,
    pub by_chain: bool,
    pub by_asn: bool,
    pub external: Option<bool>,
    pub chain_length: usize,
}

#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub struct ChainClass {
    pub by_chain: bool,
    pub chain_length: usize,
}

pub fn chain_rule(chain_length: usize) -> bool {
    chain_length >= CDN_CHAIN_THRESHOLD
}

/// Applies the chain heuristic. Unsuccessful resolutions never count.
pub fn classify_by_chain(result: &ResolutionResult) -> ChainClass {
    if result.status != ResolutionStatus::Ok {
        return ChainClass {
            by_chain: false,
            chain_length: 0,
        };
    }
    let chain_length = result.cname_chain.len();
    ChainClass {
        by_chain: chain_rule(chain_length),
        chain_length,
    }
}

//------------ AS registry and keywords --------------------------------------

#[derive(Clone, Debug, Eq, PartialEq)]
pub struct AsRegistryEntry {
    pub asn: Asn,
    pub description: String,
}

#[derive(Clone, Debug, Default)]
pub struct AsRegistry {
    pub entries: Vec<AsRegistryEntry>,
    pub malformed_lines: usize,
    pub duplicates: usize,
}

/// Reads `ASN<whitespace>description` lines or `asn,description` CSV.
/// The first entry wins for repeated ASNs.
pub fn parse_as_registry<R: BufRead>(source: R) -> Result<AsRegistry, std::io::Error> {
    let mut registry = AsRegistry::default();
    let mut seen = BTreeSet::new();
    for line in source.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let split = match line.split_once(',') {
            Some((asn, desc)) if !asn.trim().contains(char::is_whitespace) => Some((asn, desc)),
            _ => line.split_once(char::is_whitespace),
        };
        let parsed = split.and_then(|(asn, desc)| {
            Some((
                asn.trim().parse::<Asn>().ok()?,
                desc.trim().trim_matches('"').to_string(),
            ))
        });
        match parsed {
            Some((asn, description)) => {
                if seen.insert(asn) {
                    registry.entries.push(AsRegistryEntry { asn, description });
                } else {
                    registry.duplicates += 1;
                }
            }
            None => registry.malformed_lines += 1,
        }
    }
    Ok(registry)
}

/// One lowercase token per line; `#` lines are comments.
pub fn parse_keywords<R: BufRead>(source: R) -> Result<Vec<String>, std::io::Error> {
    let mut out = Vec::new();
    for line in source.lines() {
        let line = line?;
        let token = line.trim().to_ascii_lowercase();
        if token.is_empty() || token.starts_with('#') || out.contains(&token) {
            continue;
        }
        out.push(token);
    }
    Ok(out)
}

pub fn bundled_keywords() -> Vec<String> {
    parse_keywords(BUNDLED_KEYWORDS.as_bytes()).expect("bundled keywords are valid")
}

/// ASNs whose lowercased description contains any keyword.
pub fn spot_keywords(keywords: &[String], registry: &[AsRegistryEntry]) -> BTreeSet<Asn> {
    registry
        .iter()
        .filter(|entry| {
            let desc = entry.description.to_lowercase();
            keywords
                .iter()
                .any(|k| !k.is_empty() && desc.contains(&k.to_lowercase()))
        })
        .map(|entry| entry.asn)
        .collect()
}

pub fn classify_by_asn<'a, I>(pairs: I, cdn_asns: &BTreeSet<Asn>) -> bool
where
    I: IntoIterator<Item = &'a PrefixOriginPair>,
{
    pairs.into_iter().any(|p| cdn_asns.contains(&p.origin_asn))
}

//------------ External comparison -------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct ExternalLabels {
    pub labels: BTreeMap<DomainName, bool>,
    pub malformed_lines: usize,
}

/// Reads `domain,0|1` lines.
pub fn load_external_labels<R: BufRead>(source: R) -> Result<ExternalLabels, std::io::Error> {
    let mut out = ExternalLabels::default();
    for line in source.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line.split_once(',').and_then(|(name, flag)| {
            let flag = match flag.trim() {
                "1" => true,
                "0" => false,
                _ => return None,
            };
            Some((name.parse::<DomainName>().ok()?, flag))
        });
        match parsed {
            Some((name, flag)) => {
                out.labels.insert(name, flag);
            }
            None => out.malformed_lines += 1,
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Eq, PartialEq)]
pub struct AgreementReport {
    pub labels: u64,
    pub with_external: u64,
    pub coverage: Ratio<u64>,
    /// `None` when no label has an external counterpart.
    pub agree: Option<Ratio<u64>>,
    /// Indexed `[heuristic][external]`, `1` meaning CDN.
    pub confusion: [[u64; 2]; 2],
}

/// Compares the chain heuristic with an external classification.
pub fn compare_external(
    labels: &[CdnLabel],
    external: &BTreeMap<DomainName, bool>,
) -> AgreementReport {
    let mut confusion = [[0u64; 2]; 2];
    for label in labels {
        if let Some(ext) = external.get(&label.domain) {
            confusion[label.by_chain as usize][*ext as usize] += 1;
        }
    }
    let total = labels.len() as u64;
    let with_external: u64 = confusion.iter().flatten().sum();
    let agreeing = confusion[0][0] + confusion[1][1];
    AgreementReport {
        labels: total,
        with_external,
        coverage: if total == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(with_external, total)
        },
        agree: (with_external > 0).then(|| Ratio::new(agreeing, with_external)),
        confusion,
    }
}
