//! Route origin validation against validated ROA payloads (RFC 6811).

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{family_max_len, parse_prefix, Asn};
use crate::rib_store::PrefixOriginPair;
use crate::trie::RadixTrie;

//------------ TrustAnchor ---------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustAnchor {
    Afrinic,
    Apnic,
    Arin,
    Lacnic,
    Ripe,
    Other,
}

impl TrustAnchor {
    /// Maps relying-party labels such as `ripe`, `RIPE NCC` or
    /// `apnic-iana` onto the five RIR anchors.
    pub fn from_label(label: &str) -> Self {
        let label = label.trim().to_ascii_lowercase();
        let first = label
            .split(|c: char| !c.is_ascii_alphanumeric())
            .next()
            .unwrap_or("");
        match first {
            "afrinic" => TrustAnchor::Afrinic,
            "apnic" => TrustAnchor::Apnic,
            "arin" => TrustAnchor::Arin,
            "lacnic" => TrustAnchor::Lacnic,
            "ripe" => TrustAnchor::Ripe,
            _ => TrustAnchor::Other,
        }
    }
}

//------------ RoaPayload ----------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize)]
pub struct RoaPayload {
    pub asn: Asn,
    pub prefix: IpNet,
    pub max_length: u8,
    pub trust_anchor: TrustAnchor,
}

#[derive(Clone, Debug, Error, Eq, PartialEq)]
pub enum RoaError {
    #[error("max length {max_length} below prefix length of {prefix}")]
    MaxLengthTooShort { prefix: IpNet, max_length: u8 },
    #[error("max length {max_length} exceeds the address family for {prefix}")]
    MaxLengthTooLong { prefix: IpNet, max_length: u8 },
}

impl RoaPayload {
    /// Checks `prefix.len <= max_length <= family max`. A missing max length
    /// defaults to the prefix length.
    pub fn new(
        asn: Asn,
        prefix: IpNet,
        max_length: Option<u8>,
        trust_anchor: TrustAnchor,
    ) -> Result<Self, RoaError> {
        let max_length = max_length.unwrap_or(prefix.prefix_len());
        if max_length < prefix.prefix_len() {
            return Err(RoaError::MaxLengthTooShort { prefix, max_length });
        }
        if max_length > family_max_len(&prefix) {
            return Err(RoaError::MaxLengthTooLong { prefix, max_length });
        }
        Ok(RoaPayload {
            asn,
            prefix: prefix.trunc(),
            max_length,
            trust_anchor,
        })
    }
}

impl fmt::Display for RoaPayload {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{},{},{}", self.asn, self.prefix, self.max_length)
    }
}

//------------ Loading -------------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum RoaFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize)]
pub enum RoaWarning {
    EmptyRoaSet,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RoaLoad {
    #[serde(skip)]
    pub roas: BTreeSet<RoaPayload>,
    pub rows: usize,
    pub malformed_rows: usize,
    pub duplicates: usize,
    pub warnings: Vec<RoaWarning>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("ROA JSON is not an array of objects: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads validated ROA payloads. Rows that could not have come out of a
/// correct validator are skipped and counted.
pub fn load_roas<R: BufRead>(source: R, format: RoaFormat) -> Result<RoaLoad, LoadError> {
    let mut load = RoaLoad::default();
    let rows: Vec<Option<RoaPayload>> = match format {
        RoaFormat::Csv => {
            let mut rows = Vec::new();
            for (index, line) in source.lines().enumerate() {
                let line = line?;
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                if index == 0 && is_csv_header(line) {
                    continue;
                }
                rows.push(parse_csv_row(line));
            }
            rows
        }
        RoaFormat::Json => {
            let mut text = String::new();
            let mut source = source;
            source.read_to_string(&mut text)?;
            if text.trim().is_empty() {
                Vec::new()
            } else {
                json_rows(serde_json::from_str(&text)?)?
                    .into_iter()
                    .map(parse_json_row)
                    .collect()
            }
        }
    };
    for row in rows {
        load.rows += 1;
        match row {
            Some(roa) => {
                if !load.roas.insert(roa) {
                    load.duplicates += 1;
                }
            }
            None => load.malformed_rows += 1,
        }
    }
    if load.roas.is_empty() {
        log::warn!("ROA set is empty; every pair will validate as not found");
        load.warnings.push(RoaWarning::EmptyRoaSet);
    }
    Ok(load)
}

fn is_csv_header(line: &str) -> bool {
    line.split(',')
        .next()
        .map(|f| f.trim().trim_matches('"').eq_ignore_ascii_case("asn"))
        .unwrap_or(false)
}

fn parse_csv_row(line: &str) -> Option<RoaPayload> {
    let fields: Vec<&str> = line
        .split(',')
        .map(|f| f.trim().trim_matches('"'))
        .collect();
    if !(3..=4).contains(&fields.len()) {
        return None;
    }
    let asn = fields[0].parse().ok()?;
    let prefix = parse_prefix(fields[1]).ok()?;
    let max_length = if fields[2].is_empty() {
        None
    } else {
        Some(fields[2].parse().ok()?)
    };
    let ta = fields
        .get(3)
        .map(|t| TrustAnchor::from_label(t))
        .unwrap_or(TrustAnchor::Other);
    RoaPayload::new(asn, prefix, max_length, ta).ok()
}

/// Accepts a bare array or a `{"roas": [...]}` wrapper.
fn json_rows(value: serde_json::Value) -> Result<Vec<serde_json::Value>, LoadError> {
    match value {
        serde_json::Value::Array(rows) => Ok(rows),
        serde_json::Value::Object(mut obj) => match obj.remove("roas") {
            Some(serde_json::Value::Array(rows)) => Ok(rows),
            _ => Err(LoadError::Json(serde::de::Error::custom(
                "missing \"roas\" array",
            ))),
        },
        _ => Err(LoadError::Json(serde::de::Error::custom(
            "expected an array",
        ))),
    }
}

#[derive(Deserialize)]
struct JsonRow {
    asn: serde_json::Value,
    prefix: String,
    #[serde(rename = "maxLength")]
    max_length: Option<u8>,
    ta: Option<String>,
}

fn parse_json_row(value: serde_json::Value) -> Option<RoaPayload> {
    let row: JsonRow = serde_json::from_value(value).ok()?;
    let asn: Asn = match row.asn {
        serde_json::Value::Number(n) => Asn(u32::try_from(n.as_u64()?).ok()?),
        serde_json::Value::String(s) => s.parse().ok()?,
        _ => return None,
    };
    let prefix = parse_prefix(&row.prefix).ok()?;
    let ta = row
        .ta
        .as_deref()
        .map(TrustAnchor::from_label)
        .unwrap_or(TrustAnchor::Other);
    RoaPayload::new(asn, prefix, row.max_length, ta).ok()
}

//------------ Index and validation ------------------------------------------

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationState {
    Valid,
    Invalid,
    #[serde(rename = "notfound")]
    NotFound,
}

impl fmt::Display for ValidationState {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            ValidationState::Valid => "valid",
            ValidationState::Invalid => "invalid",
            ValidationState::NotFound => "notfound",
        })
    }
}

/// Immutable prefix index over ROA payloads.
#[derive(Clone, Debug, Default)]
pub struct RoaIndex {
    trie: RadixTrie<Vec<RoaPayload>>,
    len: usize,
}

impl RoaIndex {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// ROAs whose prefix contains `prefix`.
    pub fn covering(&self, prefix: &IpNet) -> Vec<&RoaPayload> {
        self.trie
            .covering(prefix)
            .into_iter()
            .flat_map(|(_, roas)| roas.iter())
            .collect()
    }
}

pub fn build_roa_index<'a, I>(roas: I) -> RoaIndex
where
    I: IntoIterator<Item = &'a RoaPayload>,
{
    let mut index = RoaIndex::default();
    for roa in roas {
        let bucket = index.trie.get_or_insert_with(roa.prefix, Vec::new);
        if !bucket.contains(roa) {
            bucket.push(*roa);
            index.len += 1;
        }
    }
    index
}

/// Classifies a route as valid, invalid or not found.
///
/// NotFound when no ROA covers the prefix; Valid when a covering ROA with a
/// non-zero ASN equal to the origin allows the prefix length; Invalid
/// otherwise. AS0 ROAs therefore only ever invalidate.
pub fn validate(pair: &PrefixOriginPair, index: &RoaIndex) -> ValidationState {
    let covering = index.covering(&pair.prefix);
    if covering.is_empty() {
        return ValidationState::NotFound;
    }
    let matched = covering.iter().any(|roa| {
        roa.asn != Asn::ZERO
            && roa.asn == pair.origin_asn
            && pair.prefix.prefix_len() <= roa.max_length
    });
    if matched {
        ValidationState::Valid
    } else {
        ValidationState::Invalid
    }
}
