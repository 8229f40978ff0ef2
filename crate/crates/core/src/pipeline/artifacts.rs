//! On-disk records exchanged between stages.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::net::IpAddr;
use std::path::Path;

use ipnet::IpNet;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dns_resolution::ResolutionStatus;
use crate::domain_ingest::{DomainName, Variant};
use crate::net::Asn;
use crate::rib_store::PrefixOriginPair;
use crate::roa_validation::ValidationState;

pub const RESOLVED: &str = "resolved.jsonl";
pub const MAPPED: &str = "mapped.jsonl";
pub const CROSSCHECK: &str = "crosscheck.jsonl";
pub const VALIDATED: &str = "validated.jsonl";
pub const CDN_LABELS: &str = "cdn_labels.jsonl";
pub const CDN_ASNS: &str = "cdn_asns.txt";
pub const AGREEMENT: &str = "agreement.json";
pub const OVERLAP: &str = "overlap.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";

/// One resolver's answer for one queried name.
#[derive(Clone, Debug, Deserialize, Eq, PartialEq, Serialize)]
pub struct ResolvedLine {
    pub rank: u32,
    pub variant: Variant,
    pub domain: DomainName,
    pub resolver: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<ResolutionStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub cnames: Vec<DomainName>,
    pub addresses: BTreeSet<IpAddr>,
    /// Special-purpose addresses dropped from `addresses`.
    pub rejected: BTreeSet<IpAddr>,
    pub ts: u64,
}

/// A queried name with the routed prefixes behind its addresses.
#[derive(Clone, Debug, Deserialize, Eq, PartialEq, Serialize)]
pub struct MappedLine {
    pub rank: u32,
    pub variant: Variant,
    pub domain: DomainName,
    pub resolver: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<ResolutionStatus>,
    pub cnames: Vec<DomainName>,
    pub addresses: BTreeSet<IpAddr>,
    /// Addresses no announced prefix covers.
    pub unreachable: BTreeSet<IpAddr>,
    pub pairs: BTreeSet<PrefixOriginPair>,
}

#[derive(Clone, Debug, Deserialize, Eq, PartialEq, Serialize)]
pub struct StatedPair {
    pub prefix: IpNet,
    pub asn: Asn,
    pub state: ValidationState,
}

impl StatedPair {
    pub fn pair(&self) -> PrefixOriginPair {
        PrefixOriginPair::new(self.prefix, self.asn)
    }
}

#[derive(Clone, Debug, Deserialize, Eq, PartialEq, Serialize)]
pub struct ValidatedLine {
    pub rank: u32,
    pub domain: DomainName,
    pub variant: Variant,
    pub pairs: Vec<StatedPair>,
    /// Covered fraction with six decimals, absent without data.
    pub covered: Option<String>,
    pub class: crate::analytics::CoverageClass,
}

#[derive(Clone, Debug, Deserialize, Eq, PartialEq, Serialize)]
pub struct LabelLine {
    pub rank: u32,
    pub variant: Variant,
    #[serde(flatten)]
    pub label: crate::cdn_classifier::CdnLabel,
}

#[derive(Clone, Debug, Deserialize, Eq, PartialEq, Serialize)]
pub struct OverlapLine {
    pub rank: u32,
    pub domain: DomainName,
    pub www_prefixes: usize,
    pub base_prefixes: usize,
    pub overlap: Option<String>,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("artifact types serialize"));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads an artifact left by `stage`.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    stage: &'static str,
) -> Result<Vec<T>, PipelineError> {
    let file = fs::File::open(path).map_err(|_| PipelineError::StageDependencyMissing {
        stage,
        artifact: path.to_path_buf(),
    })?;
    let mut items = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| PipelineError::Data(format!("{}:{}: {e}", path.display(), index + 1)))?;
        items.push(item);
    }
    Ok(items)
}
