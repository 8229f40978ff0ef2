//! Small network vocabulary shared by the routing and validation modules.

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use ipnet::{IpNet, Ipv4Net, Ipv6Net};
use serde::{Deserialize, Serialize};
use thiserror::Error;

//------------ Asn -----------------------------------------------------------

/// A 32-bit autonomous system number.
#[derive(
    Clone, Copy, Debug, Default, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl Asn {
    pub const ZERO: Asn = Asn(0);

    /// The 2-byte placeholder used when a 4-byte ASN does not fit (RFC 6793).
    pub const TRANS: Asn = Asn(23456);

    pub fn into_u32(self) -> u32 {
        self.0
    }
}

impl From<u32> for Asn {
    fn from(value: u32) -> Self {
        Asn(value)
    }
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "AS{}", self.0)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("invalid AS number '{0}'")]
pub struct ParseAsnError(pub String);

impl FromStr for Asn {
    type Err = ParseAsnError;

    /// Accepts `64500`, `AS64500` and `as64500`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let digits = if trimmed.len() > 2 && trimmed[..2].eq_ignore_ascii_case("as") {
            &trimmed[2..]
        } else {
            trimmed
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseAsnError(s.into()));
        }
        digits
            .parse::<u32>()
            .map(Asn)
            .map_err(|_| ParseAsnError(s.into()))
    }
}

//------------ Prefixes ------------------------------------------------------

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PrefixError {
    #[error("cannot parse prefix '{0}'")]
    Syntax(String),
    #[error("prefix '{0}' has host bits set")]
    HostBits(String),
}

/// Parses a CIDR prefix and rejects it if any host bit is set.
pub fn parse_prefix(s: &str) -> Result<IpNet, PrefixError> {
    let s = s.trim();
    let net: IpNet = s.parse().map_err(|_| PrefixError::Syntax(s.into()))?;
    if net.trunc() != net {
        return Err(PrefixError::HostBits(s.into()));
    }
    Ok(net)
}

/// The maximum prefix length of the address family of `net`.
pub fn family_max_len(net: &IpNet) -> u8 {
    match net {
        IpNet::V4(_) => 32,
        IpNet::V6(_) => 128,
    }
}

/// The host route (/32 or /128) for an address.
pub fn host_prefix(addr: IpAddr) -> IpNet {
    match addr {
        IpAddr::V4(a) => IpNet::V4(Ipv4Net::new(a, 32).expect("/32 is valid")),
        IpAddr::V6(a) => IpNet::V6(Ipv6Net::new(a, 128).expect("/128 is valid")),
    }
}
