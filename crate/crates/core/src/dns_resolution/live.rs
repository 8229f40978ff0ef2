//! Querying a live recursive resolver over UDP, with TCP on truncation.

use std::collections::BTreeSet;
use std::io::{ErrorKind, Read, Write};
use std::net::{IpAddr, SocketAddr, TcpStream, UdpSocket};
use std::str::FromStr;
use std::sync::atomic::{AtomicU16, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use hickory_proto::op::{Message, MessageType, OpCode, Query, ResponseCode};
use hickory_proto::rr::{Name, RData, RecordType};

use super::{RawAnswer, ResolutionStatus, ResolveError, Resolver};
use crate::domain_ingest::DomainName;

/// Enforces a minimum spacing between queries sent to one resolver.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    /// `per_second == 0` disables limiting.
    pub fn new(per_second: u32) -> Self {
        let interval = if per_second == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs(1) / per_second
        };
        RateLimiter {
            interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    /// Blocks until the caller may send.
    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + self.interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// A recursive resolver reached at `ip:port`, configured as `label=ip:port`.
#[derive(Debug)]
pub struct UdpResolver {
    label: String,
    addr: SocketAddr,
    limiter: RateLimiter,
    next_id: AtomicU16,
}

impl UdpResolver {
    pub fn new(label: impl Into<String>, addr: SocketAddr, queries_per_second: u32) -> Self {
        let seed = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.subsec_nanos() as u16)
            .unwrap_or(0);
        UdpResolver {
            label: label.into(),
            addr,
            limiter: RateLimiter::new(queries_per_second),
            next_id: AtomicU16::new(seed),
        }
    }

    /// Parses `label=ip:port`.
    pub fn from_endpoint(endpoint: &str, queries_per_second: u32) -> Result<Self, String> {
        let (label, addr) = endpoint
            .split_once('=')
            .ok_or_else(|| format!("resolver '{endpoint}' is not label=ip:port"))?;
        let addr: SocketAddr = addr
            .trim()
            .parse()
            .map_err(|_| format!("resolver '{endpoint}' has an invalid address"))?;
        if label.trim().is_empty() {
            return Err(format!("resolver '{endpoint}' has an empty label"));
        }
        Ok(Self::new(label.trim(), addr, queries_per_second))
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    fn query(
        &self,
        domain: &DomainName,
        rtype: RecordType,
        timeout: Duration,
    ) -> Result<Option<Message>, ResolveError> {
        let name = Name::from_str(&format!("{domain}."))
            .map_err(|e| ResolveError::Transport(e.to_string()))?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut request = Message::new(id, MessageType::Query, OpCode::Query);
        request.metadata.recursion_desired = true;
        request.add_query(Query::query(name, rtype));
        let wire = request
            .to_vec()
            .map_err(|e| ResolveError::Transport(e.to_string()))?;

        self.limiter.acquire();
        let Some(response) = self.exchange_udp(&wire, id, timeout)? else {
            return Ok(None);
        };
        if response.metadata.truncation {
            return self.exchange_tcp(&wire, id, timeout);
        }
        Ok(Some(response))
    }

    fn exchange_udp(
        &self,
        wire: &[u8],
        id: u16,
        timeout: Duration,
    ) -> Result<Option<Message>, ResolveError> {
        let bind: SocketAddr = if self.addr.is_ipv4() {
            "0.0.0.0:0".parse().expect("valid")
        } else {
            "[::]:0".parse().expect("valid")
        };
        let socket = UdpSocket::bind(bind).map_err(transport)?;
        socket.connect(self.addr).map_err(transport)?;
        socket.send(wire).map_err(transport)?;
        let deadline = Instant::now() + timeout;
        let mut buf = [0u8; 4096];
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Ok(None);
            }
            socket
                .set_read_timeout(Some(remaining))
                .map_err(transport)?;
            match socket.recv(&mut buf) {
                Ok(len) => {
                    // Ignore stray datagrams that do not answer this query.
                    if let Ok(msg) = Message::from_vec(&buf[..len]) {
                        if msg.metadata.id == id {
                            return Ok(Some(msg));
                        }
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    return Ok(None)
                }
                Err(e) => return Err(transport(e)),
            }
        }
    }

    fn exchange_tcp(
        &self,
        wire: &[u8],
        id: u16,
        timeout: Duration,
    ) -> Result<Option<Message>, ResolveError> {
        let mut stream = match TcpStream::connect_timeout(&self.addr, timeout) {
            Ok(s) => s,
            Err(e) if e.kind() == ErrorKind::TimedOut => return Ok(None),
            Err(e) => return Err(transport(e)),
        };
        stream.set_read_timeout(Some(timeout)).map_err(transport)?;
        stream.set_write_timeout(Some(timeout)).map_err(transport)?;
        let mut framed = (wire.len() as u16).to_be_bytes().to_vec();
        framed.extend_from_slice(wire);
        stream.write_all(&framed).map_err(transport)?;
        let mut len = [0u8; 2];
        match stream.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                return Ok(None)
            }
            Err(e) => return Err(transport(e)),
        }
        let mut body = vec![0u8; u16::from_be_bytes(len) as usize];
        stream.read_exact(&mut body).map_err(transport)?;
        let msg = Message::from_vec(&body).map_err(|e| ResolveError::Transport(e.to_string()))?;
        if msg.metadata.id != id {
            return Err(ResolveError::Transport("TCP answer id mismatch".into()));
        }
        Ok(Some(msg))
    }
}

fn transport(err: std::io::Error) -> ResolveError {
    ResolveError::Transport(err.to_string())
}

/// Alias chain and terminal addresses of one response.
pub(crate) fn interpret(
    domain: &DomainName,
    response: &Message,
) -> (ResolutionStatus, Vec<DomainName>, BTreeSet<IpAddr>) {
    let status = match response.metadata.response_code {
        ResponseCode::NoError => ResolutionStatus::Ok,
        ResponseCode::NXDomain => ResolutionStatus::NxDomain,
        _ => ResolutionStatus::ServFail,
    };
    let mut chain = Vec::new();
    let mut addresses = BTreeSet::new();
    if status != ResolutionStatus::Ok {
        return (status, chain, addresses);
    }
    let owner = |name: &Name| name.to_ascii().trim_end_matches('.').to_ascii_lowercase();
    let mut current = domain.as_str().to_string();
    // Follow the alias sequence; answers may appear in any order.
    while chain.len() <= super::MAX_CHAIN_LEN {
        let next = response.answers.iter().find_map(|rec| match &rec.data {
            RData::CNAME(target) if owner(&rec.name) == current => Some(owner(&target.0)),
            _ => None,
        });
        let Some(next) = next else { break };
        match next.parse::<DomainName>() {
            Ok(name) => {
                let repeated = chain.contains(&name) || name == *domain;
                chain.push(name);
                if repeated {
                    break;
                }
            }
            Err(_) => break,
        }
        current = next;
    }
    for rec in &response.answers {
        if owner(&rec.name) != current {
            continue;
        }
        match &rec.data {
            RData::A(a) => {
                addresses.insert(IpAddr::V4(a.0));
            }
            RData::AAAA(a) => {
                addresses.insert(IpAddr::V6(a.0));
            }
            _ => {}
        }
    }
    (status, chain, addresses)
}

impl Resolver for UdpResolver {
    fn id(&self) -> &str {
        &self.label
    }

    fn lookup(&self, domain: &DomainName, timeout: Duration) -> Result<RawAnswer, ResolveError> {
        let observed_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let v4 = self.query(domain, RecordType::A, timeout)?;
        let v6 = self.query(domain, RecordType::AAAA, timeout)?;
        let v4 = v4.map(|m| interpret(domain, &m));
        let v6 = v6.map(|m| interpret(domain, &m));
        let (status, cnames, addresses) = match (v4, v6) {
            (None, None) => (ResolutionStatus::Timeout, Vec::new(), BTreeSet::new()),
            (Some(one), None) | (None, Some(one)) => one,
            (Some(a), Some(b)) => {
                let status = if a.0 == ResolutionStatus::Ok || b.0 == ResolutionStatus::Ok {
                    ResolutionStatus::Ok
                } else {
                    a.0
                };
                let chain = if a.1.len() >= b.1.len() { a.1 } else { b.1 };
                let mut addrs = a.2;
                addrs.extend(b.2);
                (status, chain, addrs)
            }
        };
        Ok(RawAnswer {
            cnames,
            addresses,
            status: Some(status),
            observed_at,
        })
    }
}
