//! Resolving domains to CNAME chains and addresses.
//!
//! Answers come from a [`Resolver`]: either recorded fixtures
//! ([`FixtureSet`]) or a live recursive resolver ([`UdpResolver`]).

mod fixture;
mod live;
mod special;

pub use self::fixture::{FixtureError, FixtureLine, FixtureResolver, FixtureSet};
pub use self::live::{RateLimiter, UdpResolver};
pub use self::special::{filter_special_purpose, SpecialPurposeTable, TableError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain_ingest::DomainName;

/// Longest CNAME chain accepted before a result is discarded.
pub const MAX_CHAIN_LEN: usize = 16;

#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionStatus {
    Ok,
    NxDomain,
    ServFail,
    Timeout,
    Empty,
}

impl fmt::Display for ResolutionStatus {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            ResolutionStatus::Ok => "ok",
            ResolutionStatus::NxDomain => "nxdomain",
            ResolutionStatus::ServFail => "servfail",
            ResolutionStatus::Timeout => "timeout",
            ResolutionStatus::Empty => "empty",
        })
    }
}

/// What a resolver said about one name, before chain checks.
#[derive(Clone, Debug, Default, Eq, PartialEq)]
pub struct RawAnswer {
    pub cnames: Vec<DomainName>,
    pub addresses: BTreeSet<IpAddr>,
    pub status: Option<ResolutionStatus>,
    pub observed_at: u64,
}

#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
pub struct ResolutionResult {
    pub domain: DomainName,
    pub resolver_id: String,
    pub cname_chain: Vec<DomainName>,
    pub addresses: BTreeSet<IpAddr>,
    pub status: ResolutionStatus,
    pub observed_at: u64,
}

impl ResolutionResult {
    /// Drops special-purpose addresses, returning the rejected ones.
    pub fn apply_filter(&mut self, table: &SpecialPurposeTable) -> BTreeSet<IpAddr> {
        let (kept, rejected) = filter_special_purpose(&self.addresses, table);
        self.addresses = kept;
        rejected
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("CNAME loop at {0}")]
    ChainLoop(DomainName),
    #[error("CNAME chain longer than {MAX_CHAIN_LEN} hops")]
    ChainTooLong,
    #[error("no recorded answer for {domain} at resolver {resolver}")]
    NotRecorded {
        domain: DomainName,
        resolver: String,
    },
    #[error("resolver transport error: {0}")]
    Transport(String),
}

/// A source of DNS answers.
pub trait Resolver: Sync {
    fn id(&self) -> &str;

    fn lookup(&self, domain: &DomainName, timeout: Duration) -> Result<RawAnswer, ResolveError>;
}

/// Resolves `domain` and checks the alias chain.
///
/// A timeout is reported as [`ResolutionStatus::Timeout`] rather than an
/// error so cross-checks can see which resolver failed.
pub fn resolve_records(
    domain: &DomainName,
    resolver: &dyn Resolver,
    timeout: Duration,
) -> Result<ResolutionResult, ResolveError> {
    let raw = resolver.lookup(domain, timeout)?;
    check_chain(domain, &raw.cnames)?;
    let mut status = raw.status.unwrap_or(ResolutionStatus::Ok);
    let mut addresses = raw.addresses;
    if status == ResolutionStatus::Ok && addresses.is_empty() {
        status = ResolutionStatus::Empty;
    }
    if status != ResolutionStatus::Ok {
        addresses.clear();
    }
    Ok(ResolutionResult {
        domain: domain.clone(),
        resolver_id: resolver.id().to_string(),
        cname_chain: raw.cnames,
        addresses,
        status,
        observed_at: raw.observed_at,
    })
}

fn check_chain(domain: &DomainName, chain: &[DomainName]) -> Result<(), ResolveError> {
    if chain.len() > MAX_CHAIN_LEN {
        return Err(ResolveError::ChainTooLong);
    }
    let mut seen = BTreeSet::new();
    seen.insert(domain);
    for name in chain {
        if !seen.insert(name) {
            return Err(ResolveError::ChainLoop(name.clone()));
        }
    }
    Ok(())
}

/// Knobs for [`resolve_many`].
#[derive(Clone, Copy, Debug)]
pub struct ResolveOptions {
    pub timeout: Duration,
    pub in_flight: usize,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            timeout: Duration::from_secs(5),
            in_flight: 32,
        }
    }
}

/// Resolves every name with up to `in_flight` concurrent lookups.
///
/// Output order matches input order regardless of scheduling.
pub fn resolve_many(
    domains: &[DomainName],
    resolver: &dyn Resolver,
    options: ResolveOptions,
) -> Vec<Result<ResolutionResult, ResolveError>> {
    let next = AtomicUsize::new(0);
    let workers = options.in_flight.clamp(1, domains.len().max(1));
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(domain) = domains.get(index) else {
                    break;
                };
                let result = resolve_records(domain, resolver, options.timeout);
                if tx.send((index, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut slots: Vec<Option<_>> = (0..domains.len()).map(|_| None).collect();
        for (index, result) in rx {
            slots[index] = Some(result);
        }
        slots
            .into_iter()
            .map(|slot| slot.expect("every index is resolved exactly once"))
            .collect()
    })
}

//------------ Cross-checking ------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tristate {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub domain: DomainName,
    pub agree_addresses: bool,
    pub agree_prefix_level: Tristate,
    pub detail: BTreeMap<String, BTreeSet<IpAddr>>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CrossCheckError {
    #[error("cross-check needs at least two successful resolvers, got {0}")]
    InsufficientResolvers(usize),
    #[error("results mix domains {0} and {1}")]
    DomainMismatch(DomainName, DomainName),
}

/// Compares the address sets different resolvers returned for one domain.
pub fn cross_check(results: &[ResolutionResult]) -> Result<ConsistencyReport, CrossCheckError> {
    if let Some(first) = results.first() {
        if let Some(other) = results.iter().find(|r| r.domain != first.domain) {
            return Err(CrossCheckError::DomainMismatch(
                first.domain.clone(),
                other.domain.clone(),
            ));
        }
    }
    let detail: BTreeMap<String, BTreeSet<IpAddr>> = results
        .iter()
        .filter(|r| r.status == ResolutionStatus::Ok)
        .map(|r| (r.resolver_id.clone(), r.addresses.clone()))
        .collect();
    if detail.len() < 2 {
        return Err(CrossCheckError::InsufficientResolvers(detail.len()));
    }
    let mut sets = detail.values();
    let first = sets.next().expect("at least two entries");
    let agree_addresses = sets.all(|s| s == first);
    Ok(ConsistencyReport {
        domain: results[0].domain.clone(),
        agree_addresses,
        agree_prefix_level: Tristate::Unknown,
        detail,
    })
}

impl ConsistencyReport {
    /// Fills in prefix-level agreement once addresses can be mapped to
    /// routed prefixes.
    pub fn with_prefix_level<F>(mut self, mut prefixes_of: F) -> Self
    where
        F: FnMut(&IpAddr) -> BTreeSet<IpNet>,
    {
        let per_resolver: Vec<BTreeSet<IpNet>> = self
            .detail
            .values()
            .map(|addrs| addrs.iter().flat_map(&mut prefixes_of).collect())
            .collect();
        let agree = per_resolver.windows(2).all(|w| w[0] == w[1]);
        self.agree_prefix_level = if agree { Tristate::Yes } else { Tristate::No };
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    fn result(resolver: &str, status: ResolutionStatus, addrs: &[&str]) -> ResolutionResult {
        ResolutionResult {
            domain: name("example.com"),
            resolver_id: resolver.into(),
            cname_chain: vec![],
            addresses: addrs.iter().map(|a| a.parse().unwrap()).collect(),
            status,
            observed_at: 0,
        }
    }

    struct Scripted(Vec<DomainName>, Vec<&'static str>, ResolutionStatus);

    impl Resolver for Scripted {
        fn id(&self) -> &str {
            "scripted"
        }
        fn lookup(&self, _: &DomainName, _: Duration) -> Result<RawAnswer, ResolveError> {
            Ok(RawAnswer {
                cnames: self.0.clone(),
                addresses: self.1.iter().map(|a| a.parse().unwrap()).collect(),
                status: Some(self.2),
                observed_at: 42,
            })
        }
    }

    #[test]
    fn direct_a_record() {
        let r = Scripted(vec![], vec!["93.184.216.34"], ResolutionStatus::Ok);
        let res = resolve_records(&name("example.com"), &r, Duration::from_secs(1)).unwrap();
        assert!(res.cname_chain.is_empty());
        assert_eq!(res.addresses.len(), 1);
        assert_eq!(res.status, ResolutionStatus::Ok);
        assert_eq!(res.observed_at, 42);
    }

    #[test]
    fn nxdomain_has_no_addresses() {
        let r = Scripted(vec![], vec!["93.184.216.34"], ResolutionStatus::NxDomain);
        let res = resolve_records(&name("nope.example"), &r, Duration::from_secs(1)).unwrap();
        assert_eq!(res.status, ResolutionStatus::NxDomain);
        assert!(res.addresses.is_empty());
    }

    #[test]
    fn ok_without_addresses_is_empty() {
        let r = Scripted(vec![name("a.example")], vec![], ResolutionStatus::Ok);
        let res = resolve_records(&name("x.example"), &r, Duration::from_secs(1)).unwrap();
        assert_eq!(res.status, ResolutionStatus::Empty);
    }

    #[test]
    fn chain_loops_rejected() {
        let r = Scripted(
            vec![name("a.example"), name("b.example"), name("a.example")],
            vec!["1.2.3.4"],
            ResolutionStatus::Ok,
        );
        assert_eq!(
            resolve_records(&name("x.example"), &r, Duration::from_secs(1)),
            Err(ResolveError::ChainLoop(name("a.example")))
        );
        let back = Scripted(
            vec![name("a.example"), name("x.example")],
            vec!["1.2.3.4"],
            ResolutionStatus::Ok,
        );
        assert!(matches!(
            resolve_records(&name("x.example"), &back, Duration::from_secs(1)),
            Err(ResolveError::ChainLoop(_))
        ));
    }

    #[test]
    fn chain_cap() {
        let chain: Vec<_> = (0..=MAX_CHAIN_LEN)
            .map(|i| name(&format!("c{i}.example")))
            .collect();
        let r = Scripted(chain.clone(), vec!["1.2.3.4"], ResolutionStatus::Ok);
        assert_eq!(
            resolve_records(&name("x.example"), &r, Duration::from_secs(1)),
            Err(ResolveError::ChainTooLong)
        );
        let r = Scripted(
            chain[..MAX_CHAIN_LEN].to_vec(),
            vec!["1.2.3.4"],
            ResolutionStatus::Ok,
        );
        assert!(resolve_records(&name("x.example"), &r, Duration::from_secs(1)).is_ok());
    }

    #[test]
    fn resolve_many_keeps_order() {
        let r = Scripted(vec![], vec!["1.2.3.4"], ResolutionStatus::Ok);
        let names: Vec<_> = (0..50).map(|i| name(&format!("d{i}.example"))).collect();
        let out = resolve_many(
            &names,
            &r,
            ResolveOptions {
                in_flight: 8,
                ..Default::default()
            },
        );
        let got: Vec<_> = out.into_iter().map(|r| r.unwrap().domain).collect();
        assert_eq!(got, names);
        assert!(resolve_many(&[], &r, ResolveOptions::default()).is_empty());
    }

    #[test]
    fn cross_check_agreement() {
        let same = cross_check(&[
            result("google", ResolutionStatus::Ok, &["1.2.3.4"]),
            result("opendns", ResolutionStatus::Ok, &["1.2.3.4"]),
        ])
        .unwrap();
        assert!(same.agree_addresses);
        assert_eq!(same.agree_prefix_level, Tristate::Unknown);

        let differ = cross_check(&[
            result("google", ResolutionStatus::Ok, &["1.2.3.4"]),
            result("opendns", ResolutionStatus::Ok, &["1.2.3.5"]),
        ])
        .unwrap();
        assert!(!differ.agree_addresses);
        // Both addresses sit in the same /24, so prefix level agrees.
        let prefix = differ.with_prefix_level(|a| {
            let net: IpNet = format!("{a}/24").parse::<IpNet>().unwrap().trunc();
            BTreeSet::from([net])
        });
        assert_eq!(prefix.agree_prefix_level, Tristate::Yes);
    }

    #[test]
    fn cross_check_needs_two() {
        assert_eq!(
            cross_check(&[
                result("google", ResolutionStatus::Ok, &["1.2.3.4"]),
                result("opendns", ResolutionStatus::Timeout, &[]),
            ]),
            Err(CrossCheckError::InsufficientResolvers(1))
        );
        let mut other = result("opendns", ResolutionStatus::Ok, &[]);
        other.domain = name("other.com");
        assert!(matches!(
            cross_check(&[result("google", ResolutionStatus::Ok, &[]), other]),
            Err(CrossCheckError::DomainMismatch(..))
        ));
    }
}
