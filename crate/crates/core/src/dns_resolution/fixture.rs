//! Replaying recorded DNS answers from JSON-lines files.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RawAnswer, ResolutionResult, ResolutionStatus, ResolveError, Resolver};
use crate::domain_ingest::DomainName;

/// One recorded answer: `{"domain","resolver","cnames","a","aaaa","status","ts"}`.
#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
pub struct FixtureLine {
    pub domain: DomainName,
    pub resolver: String,
    #[serde(default)]
    pub cnames: Vec<DomainName>,
    #[serde(default)]
    pub a: Vec<Ipv4Addr>,
    #[serde(default)]
    pub aaaa: Vec<Ipv6Addr>,
    pub status: ResolutionStatus,
    #[serde(default)]
    pub ts: u64,
}

impl FixtureLine {
    fn addresses(&self) -> BTreeSet<IpAddr> {
        self.a
            .iter()
            .map(|a| IpAddr::V4(*a))
            .chain(self.aaaa.iter().map(|a| IpAddr::V6(*a)))
            .collect()
    }
}

impl From<&ResolutionResult> for FixtureLine {
    fn from(result: &ResolutionResult) -> Self {
        let mut a = Vec::new();
        let mut aaaa = Vec::new();
        for addr in &result.addresses {
            match addr {
                IpAddr::V4(v4) => a.push(*v4),
                IpAddr::V6(v6) => aaaa.push(*v6),
            }
        }
        FixtureLine {
            domain: result.domain.clone(),
            resolver: result.resolver_id.clone(),
            cnames: result.cname_chain.clone(),
            a,
            aaaa,
            status: result.status,
            ts: result.observed_at,
        }
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture line {line}: {source}")]
    Syntax {
        line: usize,
        source: serde_json::Error,
    },
    #[error("fixture line {line}: status {status} with addresses")]
    Inconsistent {
        line: usize,
        status: ResolutionStatus,
    },
    #[error("fixture line {line}: duplicate answer for {domain} at {resolver}")]
    Duplicate {
        line: usize,
        domain: DomainName,
        resolver: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// All recorded answers of a fixture file, keyed by resolver and name.
#[derive(Clone, Debug, Default)]
pub struct FixtureSet {
    answers: HashMap<(String, DomainName), FixtureLine>,
    resolvers: Vec<String>,
}

impl FixtureSet {
    pub fn load<R: BufRead>(source: R) -> Result<Self, FixtureError> {
        let mut set = FixtureSet::default();
        for (index, line) in source.lines().enumerate() {
            let line = line?;
            let line_no = index + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine =
                serde_json::from_str(&line).map_err(|source| FixtureError::Syntax {
                    line: line_no,
                    source,
                })?;
            if parsed.status != ResolutionStatus::Ok
                && !(parsed.a.is_empty() && parsed.aaaa.is_empty())
            {
                return Err(FixtureError::Inconsistent {
                    line: line_no,
                    status: parsed.status,
                });
            }
            if !set.resolvers.contains(&parsed.resolver) {
                set.resolvers.push(parsed.resolver.clone());
            }
            let key = (parsed.resolver.clone(), parsed.domain.clone());
            if set.answers.contains_key(&key) {
                return Err(FixtureError::Duplicate {
                    line: line_no,
                    domain: parsed.domain,
                    resolver: parsed.resolver,
                });
            }
            set.answers.insert(key, parsed);
        }
        Ok(set)
    }

    /// Resolver labels in order of first appearance.
    pub fn resolvers(&self) -> &[String] {
        &self.resolvers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn resolver(&self, label: &str) -> FixtureResolver<'_> {
        FixtureResolver {
            set: self,
            label: label.to_string(),
        }
    }
}

/// A [`Resolver`] answering from one resolver's recordings.
pub struct FixtureResolver<'a> {
    set: &'a FixtureSet,
    label: String,
}

impl Resolver for FixtureResolver<'_> {
    fn id(&self) -> &str {
        &self.label
    }

    fn lookup(&self, domain: &DomainName, _timeout: Duration) -> Result<RawAnswer, ResolveError> {
        let line = self
            .set
            .answers
            .get(&(self.label.clone(), domain.clone()))
            .ok_or_else(|| ResolveError::NotRecorded {
                domain: domain.clone(),
                resolver: self.label.clone(),
            })?;
        Ok(RawAnswer {
            cnames: line.cnames.clone(),
            addresses: line.addresses(),
            status: Some(line.status),
            observed_at: line.ts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dns_resolution::resolve_records;

    const HUFFPO: &str = r#"{"domain":"www.huffingtonpost.com","resolver":"google","cnames":["www.huffingtonpost.com.edgesuite.net","a495.g.akamai.net"],"a":["212.201.100.136"],"aaaa":[],"status":"ok","ts":1430000000}
{"domain":"example.com","resolver":"google","a":["93.184.216.34"],"status":"ok","ts":1430000001}
{"domain":"gone.example","resolver":"google","status":"nxdomain","ts":1430000002}
{"domain":"example.com","resolver":"opendns","a":["93.184.216.34"],"status":"ok","ts":1430000003}
"#;

    fn name(s: &str) -> DomainName {
        s.parse().unwrap()
    }

    #[test]
    fn replays_cname_chain() {
        let set = FixtureSet::load(HUFFPO.as_bytes()).unwrap();
        assert_eq!(set.resolvers(), ["google", "opendns"]);
        let google = set.resolver("google");
        let res =
            resolve_records(&name("www.huffingtonpost.com"), &google, Duration::ZERO).unwrap();
        assert_eq!(
            res.cname_chain,
            vec![
                name("www.huffingtonpost.com.edgesuite.net"),
                name("a495.g.akamai.net")
            ]
        );
        assert_eq!(
            res.addresses,
            BTreeSet::from(["212.201.100.136".parse().unwrap()])
        );
        assert_eq!(res.status, ResolutionStatus::Ok);

        let nx = resolve_records(&name("gone.example"), &google, Duration::ZERO).unwrap();
        assert_eq!(nx.status, ResolutionStatus::NxDomain);
        assert!(nx.addresses.is_empty());

        assert!(matches!(
            resolve_records(&name("unknown.example"), &google, Duration::ZERO),
            Err(ResolveError::NotRecorded { .. })
        ));
    }

    #[test]
    fn replay_is_deterministic() {
        let set = FixtureSet::load(HUFFPO.as_bytes()).unwrap();
        let render = || {
            let r = set.resolver("google");
            let res = resolve_records(&name("www.huffingtonpost.com"), &r, Duration::ZERO).unwrap();
            serde_json::to_vec(&FixtureLine::from(&res)).unwrap()
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn round_trips_through_result() {
        let set = FixtureSet::load(HUFFPO.as_bytes()).unwrap();
        let res = resolve_records(
            &name("www.huffingtonpost.com"),
            &set.resolver("google"),
            Duration::ZERO,
        )
        .unwrap();
        let line = FixtureLine::from(&res);
        let original: FixtureLine = serde_json::from_str(HUFFPO.lines().next().unwrap()).unwrap();
        assert_eq!(line, original);
    }

    #[test]
    fn rejects_bad_fixtures() {
        let inconsistent =
            r#"{"domain":"a.com","resolver":"g","a":["1.2.3.4"],"status":"servfail"}"#;
        assert!(matches!(
            FixtureSet::load(inconsistent.as_bytes()),
            Err(FixtureError::Inconsistent { line: 1, .. })
        ));
        let dup = "{\"domain\":\"a.com\",\"resolver\":\"g\",\"status\":\"empty\"}\n{\"domain\":\"a.com\",\"resolver\":\"g\",\"status\":\"empty\"}";
        assert!(matches!(
            FixtureSet::load(dup.as_bytes()),
            Err(FixtureError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            FixtureSet::load("{".as_bytes()),
            Err(FixtureError::Syntax { line: 1, .. })
        ));
    }
}
