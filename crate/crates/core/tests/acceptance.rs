//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines are always printed:
//! `cargo test -p rpki-web-audit --test acceptance`.

use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ipnet::{IpNet, Ipv4Net, Ipv6Net};
use num::rational::Ratio;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use rpki_web_audit::analytics::{coverage_report, domain_coverage, fmt_ratio, CoverageClass};
use rpki_web_audit::cdn_classifier::classify_by_chain;
use rpki_web_audit::dns_resolution::{ResolutionResult, ResolutionStatus};
use rpki_web_audit::domain_ingest::{DomainName, DomainRecord, Variant};
use rpki_web_audit::net::Asn;
use rpki_web_audit::pipeline::{run_stage, PipelineConfig, Stage};
use rpki_web_audit::rib_store::{
    build_trie, covering_pairs, parse_mrt, Origin, PathSegment, PrefixOriginPair, RibEntry,
};
use rpki_web_audit::roa_validation::{
    build_roa_index, validate, RoaPayload, TrustAnchor, ValidationState,
};

// Pinned thresholds.
const ORACLE_INSTANCES: usize = 12_000;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const MONOTONE_SEQUENCES: usize = 1_000;
const TRIE_ENTRIES: usize = 10_000;
const TRIE_LOOKUPS: usize = 10_000;
const TRIE_MEAN_BUDGET: Duration = Duration::from_micros(10);
const E2E_BUDGET: Duration = Duration::from_secs(5);

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

//------------ random generators ---------------------------------------------

fn v4(rng: &mut StdRng, min_len: u8, max_len: u8) -> IpNet {
    // toy space 10.0.0.0/14 keeps overlaps frequent
    let addr = Ipv4Addr::from((10u32 << 24) | (rng.random::<u32>() & 0x0003_ffff));
    let len = rng.random_range(min_len..=max_len);
    IpNet::V4(Ipv4Net::new(addr, len).unwrap().trunc())
}

fn v6(rng: &mut StdRng, min_len: u8, max_len: u8) -> IpNet {
    let bits = (0x2a00u128 << 112) | ((rng.random::<u128>() >> 96) << 80);
    let len = rng.random_range(min_len..=max_len);
    IpNet::V6(Ipv6Net::new(Ipv6Addr::from(bits), len).unwrap().trunc())
}

fn toy_prefix(rng: &mut StdRng, roa: bool) -> IpNet {
    let v6_share = rng.random_bool(0.2);
    match (v6_share, roa) {
        (false, true) => v4(rng, 14, 22),
        (false, false) => v4(rng, 14, 26),
        (true, true) => v6(rng, 16, 40),
        (true, false) => v6(rng, 16, 48),
    }
}

fn toy_roa(rng: &mut StdRng) -> RoaPayload {
    let prefix = toy_prefix(rng, true);
    let max_len = if prefix.addr().is_ipv4() { 32 } else { 128 };
    let ml =
        if rng.random_bool(0.3) {
            None
        } else {
            Some(rng.random_range(
                prefix.prefix_len()..=prefix.prefix_len().saturating_add(6).min(max_len),
            ))
        };
    RoaPayload::new(Asn(rng.random_range(0..4)), prefix, ml, TrustAnchor::Ripe).unwrap()
}

/// Half the time a more specific of one of `roas`, so every state is
/// well represented.
fn pair_prefix(rng: &mut StdRng, roas: &[RoaPayload]) -> IpNet {
    if roas.is_empty() || rng.random_bool(0.5) {
        return toy_prefix(rng, false);
    }
    let roa = roas[rng.random_range(0..roas.len())].prefix;
    let len = rng.random_range(roa.prefix_len()..=(roa.prefix_len() + 8).min(roa.max_prefix_len()));
    match roa {
        IpNet::V4(n) => {
            let host = rng.random::<u32>() & u32::from(n.hostmask());
            let addr = Ipv4Addr::from(u32::from(n.network()) | host);
            IpNet::V4(Ipv4Net::new(addr, len).unwrap().trunc())
        }
        IpNet::V6(n) => {
            let host = rng.random::<u128>() & u128::from(n.hostmask());
            let addr = Ipv6Addr::from(u128::from(n.network()) | host);
            IpNet::V6(Ipv6Net::new(addr, len).unwrap().trunc())
        }
    }
}

/// Three-state origin validation by scanning every ROA.
fn scan_validate(pair: &PrefixOriginPair, roas: &[RoaPayload]) -> ValidationState {
    let mut covered = false;
    for roa in roas {
        if roa.prefix.contains(&pair.prefix) {
            covered = true;
            if roa.asn != Asn(0)
                && roa.asn == pair.origin_asn
                && pair.prefix.prefix_len() <= roa.max_length
            {
                return ValidationState::Valid;
            }
        }
    }
    if covered {
        ValidationState::Invalid
    } else {
        ValidationState::NotFound
    }
}

//------------ criteria ------------------------------------------------------

fn rfc6811_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6811);
    let start = Instant::now();
    let mut mismatches = 0;
    let mut seen = [0usize; 3];
    for _ in 0..ORACLE_INSTANCES {
        let roas: Vec<RoaPayload> = (0..rng.random_range(0..8))
            .map(|_| toy_roa(&mut rng))
            .collect();
        let index = build_roa_index(&roas);
        let pair = PrefixOriginPair::new(pair_prefix(&mut rng, &roas), Asn(rng.random_range(0..4)));
        let got = validate(&pair, &index);
        seen[got as usize] += 1;
        if got != scan_validate(&pair, &roas) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && elapsed < ORACLE_BUDGET && seen.iter().all(|n| *n > 0),
        format!(
            "{ORACLE_INSTANCES} instances, {mismatches} mismatches, states {seen:?}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn monotonicity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut violations = 0;
    let mut transitions = 0;
    for _ in 0..MONOTONE_SEQUENCES {
        let pairs: Vec<PrefixOriginPair> = (0..12)
            .map(|_| {
                PrefixOriginPair::new(toy_prefix(&mut rng, false), Asn(rng.random_range(0..4)))
            })
            .collect();
        let mut roas = Vec::new();
        let mut before: Vec<ValidationState> = vec![ValidationState::NotFound; pairs.len()];
        for _ in 0..rng.random_range(1..10) {
            roas.push(toy_roa(&mut rng));
            let index = build_roa_index(&roas);
            for (pair, prev) in pairs.iter().zip(before.iter_mut()) {
                let now = validate(pair, &index);
                let bad = matches!(
                    (*prev, now),
                    (
                        ValidationState::Valid,
                        ValidationState::Invalid | ValidationState::NotFound
                    ) | (ValidationState::Invalid, ValidationState::NotFound)
                );
                violations += bad as usize;
                transitions += (*prev != now) as usize;
                *prev = now;
            }
        }
    }
    check(
        violations == 0 && transitions > 0,
        format!(
            "{MONOTONE_SEQUENCES} sequences, {transitions} transitions, {violations} violations"
        ),
    )
}

fn trie_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut entries = Vec::with_capacity(TRIE_ENTRIES);
    while entries.len() < TRIE_ENTRIES {
        let prefix = if rng.random_bool(0.85) {
            let addr = Ipv4Addr::from(rng.random::<u32>() & 0x3fff_ffff | 0x4000_0000);
            IpNet::V4(
                Ipv4Net::new(addr, rng.random_range(8..=24))
                    .unwrap()
                    .trunc(),
            )
        } else {
            v6(&mut rng, 16, 48)
        };
        let origin = rng.random_range(1..70_000u32);
        let path = if rng.random_bool(0.02) {
            vec![
                PathSegment::Sequence(vec![Asn(3356)]),
                PathSegment::Set(vec![Asn(origin), Asn(origin + 1)]),
            ]
        } else {
            vec![PathSegment::Sequence(vec![Asn(3356), Asn(origin)])]
        };
        entries.push(RibEntry::new(prefix, path).unwrap());
    }
    let trie = build_trie(&entries);

    let addrs: Vec<IpAddr> = (0..TRIE_LOOKUPS)
        .map(|i| {
            if i % 2 == 0 {
                // inside a random announced prefix
                let p = entries[rng.random_range(0..entries.len())].prefix;
                match p {
                    IpNet::V4(n) => {
                        let host = rng.random::<u32>() & !u32::from(n.netmask());
                        IpAddr::V4(Ipv4Addr::from(u32::from(n.network()) | host))
                    }
                    IpNet::V6(n) => {
                        let host = rng.random::<u128>() & !u128::from(n.netmask());
                        IpAddr::V6(Ipv6Addr::from(u128::from(n.network()) | host))
                    }
                }
            } else {
                IpAddr::V4(Ipv4Addr::from(rng.random::<u32>()))
            }
        })
        .collect();

    let start = Instant::now();
    let found: Vec<BTreeSet<PrefixOriginPair>> =
        addrs.iter().map(|a| covering_pairs(*a, &trie)).collect();
    let mean = start.elapsed() / TRIE_LOOKUPS as u32;

    let mut mismatches = 0;
    let mut nonempty = 0;
    for (addr, got) in addrs.iter().zip(&found) {
        let expected: BTreeSet<PrefixOriginPair> = entries
            .iter()
            .filter(|e| e.prefix.contains(addr))
            .filter_map(|e| match e.origin {
                Origin::Asn(asn) => Some(PrefixOriginPair::new(e.prefix, asn)),
                Origin::AsSetMarker => None,
            })
            .collect();
        nonempty += !expected.is_empty() as usize;
        mismatches += (*got != expected) as usize;
    }
    check(
        mismatches == 0 && mean < TRIE_MEAN_BUDGET,
        format!(
            "{TRIE_ENTRIES} entries, {TRIE_LOOKUPS} lookups ({nonempty} covered), {mismatches} mismatches, mean {:.2}us",
            mean.as_secs_f64() * 1e6
        ),
    )
}

//------------ MRT conformance fixture ---------------------------------------

fn mrt_record(subtype: u16, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&1_420_070_400u32.to_be_bytes());
    out.extend_from_slice(&13u16.to_be_bytes());
    out.extend_from_slice(&subtype.to_be_bytes());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// AS_PATH attribute from `(segment type, asns)` with the given ASN width.
fn as_path_attr(kind: u8, segments: &[(u8, &[u32])], width: usize) -> Vec<u8> {
    let mut value = Vec::new();
    for (seg_type, asns) in segments {
        value.push(*seg_type);
        value.push(asns.len() as u8);
        for asn in *asns {
            if width == 4 {
                value.extend_from_slice(&asn.to_be_bytes());
            } else {
                value.extend_from_slice(&(*asn as u16).to_be_bytes());
            }
        }
    }
    let mut attr = vec![0x40, kind, value.len() as u8];
    attr.extend(value);
    attr
}

fn rib_body(seq: u32, prefix: &[u8], attrs: &[u8]) -> Vec<u8> {
    let mut body = seq.to_be_bytes().to_vec();
    body.extend_from_slice(prefix);
    body.extend_from_slice(&1u16.to_be_bytes()); // one entry
    body.extend_from_slice(&0u16.to_be_bytes()); // peer index
    body.extend_from_slice(&1_420_070_000u32.to_be_bytes());
    body.extend_from_slice(&(attrs.len() as u16).to_be_bytes());
    body.extend_from_slice(attrs);
    body
}

fn mrt_conformance() -> Outcome {
    const SEQ: u8 = 2;
    const SET: u8 = 1;
    let origin_attr = [0x40u8, 1, 1, 0];

    // peer index: one peer with a 2-byte AS, one with a 4-byte AS
    let mut peers = vec![0xc0, 0x00, 0x02, 0x01, 0x00, 0x00, 0x00, 0x02];
    peers.extend_from_slice(&[0x00, 0xc0, 0x00, 0x02, 0x02, 192, 0, 2, 2, 0x0d, 0x1c]);
    peers.extend_from_slice(&[
        0x02, 0xc0, 0x00, 0x02, 0x03, 192, 0, 2, 3, 0xfa, 0x56, 0xea, 0x01,
    ]);

    let with = |path: Vec<u8>| [origin_attr.to_vec(), path].concat();
    let mut data = mrt_record(1, &peers);
    // 61.1.0.0/16, 2-byte-range ASNs
    data.extend(mrt_record(
        2,
        &rib_body(
            0,
            &[16, 61, 1],
            &with(as_path_attr(2, &[(SEQ, &[3356, 174, 3320])], 4)),
        ),
    ));
    // 61.2.3.0/24, 4-byte origin
    data.extend(mrt_record(
        2,
        &rib_body(
            1,
            &[24, 61, 2, 3],
            &with(as_path_attr(2, &[(SEQ, &[3356, 4_200_000_001])], 4)),
        ),
    ));
    // 61.4.0.0/22 with an AS_SET terminal segment
    data.extend(mrt_record(
        2,
        &rib_body(
            2,
            &[22, 61, 4, 0],
            &with(as_path_attr(
                2,
                &[(SEQ, &[3356]), (SET, &[64512, 64513])],
                4,
            )),
        ),
    ));
    // 61.5.128.0/17, legacy 2-byte AS_PATH plus AS4_PATH
    let mut legacy = as_path_attr(2, &[(SEQ, &[3320, 23456])], 2);
    legacy.extend(as_path_attr(17, &[(SEQ, &[4_200_000_002])], 4));
    data.extend(mrt_record(
        2,
        &rib_body(3, &[17, 61, 5, 128], &with(legacy)),
    ));
    // 2a00:1::/32
    data.extend(mrt_record(
        4,
        &rib_body(
            4,
            &[32, 0x2a, 0x00, 0x00, 0x01],
            &with(as_path_attr(2, &[(SEQ, &[6939, 65001])], 4)),
        ),
    ));
    // 61.6.0.0/15
    data.extend(mrt_record(
        2,
        &rib_body(
            5,
            &[15, 61, 6],
            &with(as_path_attr(2, &[(SEQ, &[1299, 64496])], 4)),
        ),
    ));
    // a final record cut off mid-body
    let cut = mrt_record(
        2,
        &rib_body(
            6,
            &[24, 61, 7, 7],
            &with(as_path_attr(2, &[(SEQ, &[3356, 7])], 4)),
        ),
    );
    data.extend_from_slice(&cut[..cut.len() - 5]);

    let parsed = match parse_mrt(data.as_slice()) {
        Ok(p) => p,
        Err(e) => return Err(format!("parse failed: {e}")),
    };
    let seq = |a: &[u32]| PathSegment::Sequence(a.iter().map(|n| Asn(*n)).collect());
    let expected = vec![
        RibEntry::new(
            "61.1.0.0/16".parse().unwrap(),
            vec![seq(&[3356, 174, 3320])],
        )
        .unwrap(),
        RibEntry::new(
            "61.2.3.0/24".parse().unwrap(),
            vec![seq(&[3356, 4_200_000_001])],
        )
        .unwrap(),
        RibEntry::new(
            "61.4.0.0/22".parse().unwrap(),
            vec![seq(&[3356]), PathSegment::Set(vec![Asn(64512), Asn(64513)])],
        )
        .unwrap(),
        RibEntry::new(
            "61.5.128.0/17".parse().unwrap(),
            vec![seq(&[3320, 4_200_000_002])],
        )
        .unwrap(),
        RibEntry::new("2a00:1::/32".parse().unwrap(), vec![seq(&[6939, 65001])]).unwrap(),
        RibEntry::new("61.6.0.0/15".parse().unwrap(), vec![seq(&[1299, 64496])]).unwrap(),
    ];
    let d = &parsed.diagnostics;
    check(
        parsed.entries == expected
            && d.skipped_records() == 1
            && d.truncated_records == 1
            && expected[2].origin == Origin::AsSetMarker,
        format!(
            "{} entries (expected {}), {} skipped record(s), {} AS_SET origin(s)",
            parsed.entries.len(),
            expected.len(),
            d.skipped_records(),
            d.as_set_entries
        ),
    )
}

//------------ coverage arithmetic -------------------------------------------

fn name(s: &str) -> DomainName {
    s.parse().unwrap()
}

fn states(layout: &[ValidationState]) -> Vec<(PrefixOriginPair, ValidationState)> {
    layout
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (
                PrefixOriginPair::new(format!("61.9.{i}.0/24").parse().unwrap(), Asn(64500)),
                *s,
            )
        })
        .collect()
}

fn coverage_arithmetic() -> Outcome {
    use ValidationState::{Invalid as I, NotFound as N, Valid as V};
    let fb = domain_coverage(name("www.facebook.com"), &states(&[V, V, V]));
    let huff = domain_coverage(name("www.huffingtonpost.com"), &states(&[V, N, N]));
    let huff_base = domain_coverage(name("huffingtonpost.com"), &states(&[N, N, N]));
    let foo_bar = domain_coverage(name("foo.bar"), &states(&[V, I, V, N, N]));

    let cells = [
        (
            fb.covered_fraction(),
            fb.classification,
            Ratio::new(3, 3),
            CoverageClass::Full,
        ),
        (
            huff.covered_fraction(),
            huff.classification,
            Ratio::new(1, 3),
            CoverageClass::Partial,
        ),
        (
            huff_base.covered_fraction(),
            huff_base.classification,
            Ratio::new(0, 3),
            CoverageClass::None,
        ),
    ];
    let exact = cells
        .iter()
        .all(|(got, class, want, want_class)| *got == Some(*want) && class == want_class);
    let sixty = foo_bar.covered_fraction() == Some(Ratio::new(3, 5))
        && fmt_ratio(&Ratio::new(3, 5)) == "0.600000";

    let fb_base = domain_coverage(name("facebook.com"), &states(&[V, V]));
    let rows = coverage_report(
        &[
            (
                DomainRecord {
                    rank: 2,
                    name: name("www.facebook.com"),
                    variant: Variant::Www,
                },
                fb,
            ),
            (
                DomainRecord {
                    rank: 2,
                    name: name("facebook.com"),
                    variant: Variant::Base,
                },
                fb_base,
            ),
            (
                DomainRecord {
                    rank: 73,
                    name: name("www.huffingtonpost.com"),
                    variant: Variant::Www,
                },
                huff,
            ),
            (
                DomainRecord {
                    rank: 73,
                    name: name("huffingtonpost.com"),
                    variant: Variant::Base,
                },
                huff_base,
            ),
        ],
        10,
    );
    let lines: Vec<String> = rows.iter().map(|r| r.to_string()).collect();
    let table = lines
        == [
            "2 facebook.com ✓(3/3) ✓(2/2)",
            "73 huffingtonpost.com ◖(1/3) ✗(0/3)",
        ];
    check(
        exact && sixty && table,
        format!("3/3 full, 1/3 partial, 0/3 none, 3/5 = 60%; report rows {lines:?}"),
    )
}

//------------ end-to-end ----------------------------------------------------

fn fixture_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/e2e"))
}

fn run_all(out: &Path) -> Result<Duration, String> {
    let mut config =
        PipelineConfig::from_file(&fixture_dir().join("config.toml")).map_err(|e| e.to_string())?;
    config.output_dir = out.to_path_buf();
    let start = Instant::now();
    run_stage(Stage::All, &config).map_err(|e| e.to_string())?;
    Ok(start.elapsed())
}

fn end_to_end() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let elapsed = run_all(out.path())?;
    let mut differing = Vec::new();
    for (artifact, expected) in [
        ("bins_www.csv", "expected_bins_www.csv"),
        ("bins_base.csv", "expected_bins_base.csv"),
        ("cdn_bins_www.csv", "expected_cdn_bins_www.csv"),
    ] {
        let got = std::fs::read(out.path().join(artifact)).unwrap_or_default();
        let want = std::fs::read(fixture_dir().join(expected)).map_err(|e| e.to_string())?;
        if got != want {
            differing.push(artifact);
        }
    }
    check(
        differing.is_empty() && elapsed < E2E_BUDGET,
        format!(
            "100 domains, bins of 10, {differing:?} differ, {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn cdn_boundary() -> Outcome {
    let result = |chain: &[&str]| ResolutionResult {
        domain: name("www.example.com"),
        resolver_id: "fixture".into(),
        cname_chain: chain.iter().map(|c| name(c)).collect(),
        addresses: BTreeSet::from(["203.0.113.7".parse().unwrap()]),
        status: ResolutionStatus::Ok,
        observed_at: 0,
    };
    let chains: [&[&str]; 4] = [
        &[],
        &["a.example.net"],
        &["a.example.net", "b.example.net"],
        &["a.example.net", "b.example.net", "c.example.net"],
    ];
    let got: Vec<bool> = chains
        .iter()
        .map(|c| classify_by_chain(&result(c)).by_chain)
        .collect();
    let mut huff = result(&["www.huffingtonpost.com.edgesuite.net", "a495.g.akamai.net"]);
    huff.domain = name("www.huffingtonpost.com");
    huff.addresses = BTreeSet::from(["212.201.100.136".parse().unwrap()]);
    let huff_cdn = classify_by_chain(&huff).by_chain;
    check(
        got == [false, false, true, true] && huff_cdn,
        format!("lengths 0..=3 -> {got:?}, huffingtonpost chain -> {huff_cdn}"),
    )
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_all(a.path())?;
    run_all(b.path())?;
    let list = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let (la, lb) = (list(a.path()), list(b.path()));
    let differing: Vec<&str> = la
        .iter()
        .zip(&lb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        la.len() == lb.len() && differing.is_empty() && !la.is_empty(),
        format!(
            "{} artifacts compared, {} differ {differing:?}",
            la.len(),
            differing.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("RFC 6811 oracle", rfc6811_oracle),
        ("validation monotonicity", monotonicity),
        ("trie vs linear scan", trie_oracle),
        ("MRT conformance", mrt_conformance),
        ("coverage arithmetic", coverage_arithmetic),
        ("end-to-end synthetic audit", end_to_end),
        ("CDN chain boundary", cdn_boundary),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (label, run)) in criteria.iter().enumerate() {
        let (verdict, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{verdict}] {}. {label}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
