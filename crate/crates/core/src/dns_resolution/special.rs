//! The IANA special-purpose address table.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::net::IpAddr;

use ipnet::{IpNet, Ipv4Net, Ipv6Net};
use thiserror::Error;

use crate::net::parse_prefix;

const BUNDLED: &str = include_str!("../../data/special-purpose.txt");

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {source}")]
    Prefix {
        line: usize,
        source: crate::net::PrefixError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, Eq, PartialEq)]
pub struct SpecialPurposeTable {
    pub v4_blocks: Vec<Ipv4Net>,
    pub v6_blocks: Vec<Ipv6Net>,
}

impl SpecialPurposeTable {
    /// Parses one CIDR per line. Everything after `#` is a comment.
    pub fn parse<R: BufRead>(source: R) -> Result<Self, TableError> {
        let mut table = SpecialPurposeTable::default();
        for (index, line) in source.lines().enumerate() {
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let net = parse_prefix(content).map_err(|source| TableError::Prefix {
                line: index + 1,
                source,
            })?;
            match net {
                IpNet::V4(n) => table.v4_blocks.push(n),
                IpNet::V6(n) => table.v6_blocks.push(n),
            }
        }
        Ok(table)
    }

    /// The table shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED.as_bytes()).expect("bundled table is valid")
    }

    pub fn contains(&self, addr: &IpAddr) -> bool {
        match addr {
            IpAddr::V4(a) => self.v4_blocks.iter().any(|n| n.contains(a)),
            IpAddr::V6(a) => self.v6_blocks.iter().any(|n| n.contains(a)),
        }
    }
}

/// Splits `addresses` into those outside every table block and those inside.
pub fn filter_special_purpose(
    addresses: &BTreeSet<IpAddr>,
    table: &SpecialPurposeTable,
) -> (BTreeSet<IpAddr>, BTreeSet<IpAddr>) {
    addresses.iter().partition(|a| !table.contains(a))
}
