//! Staged execution of the audit.
//!
//! Each stage reads its inputs from the configuration or from the
//! artifacts of earlier stages in the output directory, and writes its
//! own artifacts plus a `<stage>.diag.json` summary. Artifacts are
//! canonically sorted so identical inputs give identical files.

pub mod artifacts;
mod config;

pub use self::config::{DomainListFormat, PipelineConfig, RoaFileFormat};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde_json::json;
use thiserror::Error;

use self::artifacts::*;
use crate::analytics::{
    self, coverage_report, domain_coverage, fmt_decimal, fmt_ratio, prefix_overlap,
    render_report_csv, render_report_text, DomainCoverage, OverlapStat, RankedCoverage,
};
use crate::cdn_classifier::{
    bundled_keywords, classify_by_asn, classify_by_chain, compare_external, load_external_labels,
    parse_as_registry, parse_keywords, spot_keywords, CdnLabel, ChainClass,
};
use crate::dns_resolution::{
    cross_check, resolve_many, FixtureResolver, FixtureSet, ResolutionResult, ResolveOptions,
    Resolver, SpecialPurposeTable, UdpResolver,
};
use crate::domain_ingest::{assign_bins, expand_variants, load_domain_list, DomainRecord, Variant};
use crate::rib_store::{build_trie, covering_pairs, parse_mrt, parse_text_rib, RibDiagnostics};
use crate::roa_validation::{build_roa_index, load_roas, validate, ValidationState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input file {}", .0.display())]
    MissingInput(PathBuf),
    #[error("no {0} configured")]
    Unconfigured(&'static str),
    #[error("stage '{stage}' has not been run: {} not found", artifact.display())]
    StageDependencyMissing {
        stage: &'static str,
        artifact: PathBuf,
    },
    #[error("unusable input: {0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 1 for usage and configuration problems, 2 for absent inputs, 3 for
    /// inputs that held no usable data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Unconfigured(_) => 1,
            PipelineError::MissingInput(_) | PipelineError::StageDependencyMissing { .. } => 2,
            PipelineError::Data(_) | PipelineError::Io { .. } => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Eq, Ord, PartialEq, PartialOrd)]
pub enum Stage {
    Resolve,
    Map,
    Validate,
    Classify,
    Analyze,
    Report,
    All,
}

impl Stage {
    pub const SEQUENCE: [Stage; 6] = [
        Stage::Resolve,
        Stage::Map,
        Stage::Validate,
        Stage::Classify,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Resolve => "resolve",
            Stage::Map => "map",
            Stage::Validate => "validate",
            Stage::Classify => "classify",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::SEQUENCE
            .into_iter()
            .chain([Stage::All])
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

/// Runs one stage, or every stage in order for [`Stage::All`].
pub fn run_stage(stage: Stage, config: &PipelineConfig) -> Result<(), PipelineError> {
    config.check()?;
    std::fs::create_dir_all(&config.output_dir).map_err(|e| PipelineError::Io {
        path: config.output_dir.clone(),
        source: e,
    })?;
    let out = config.output_dir.as_path();
    match stage {
        Stage::All => {
            for stage in Stage::SEQUENCE {
                run_stage(stage, config)?;
            }
            Ok(())
        }
        Stage::Resolve => resolve_stage(config, out),
        Stage::Map => map_stage(config, out),
        Stage::Validate => validate_stage(config, out),
        Stage::Classify => classify_stage(config, out),
        Stage::Analyze => analyze_stage(config, out),
        Stage::Report => report_stage(config, out),
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|_| PipelineError::MissingInput(path.to_path_buf()))
}

fn required<'a>(path: &'a Option<PathBuf>, what: &'static str) -> Result<&'a Path, PipelineError> {
    path.as_deref().ok_or(PipelineError::Unconfigured(what))
}

fn diag_path(out: &Path, stage: Stage) -> PathBuf {
    out.join(format!("{stage}.diag.json"))
}

//------------ resolve -------------------------------------------------------

fn resolve_stage(config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let list_path = required(&config.domain_list_path, "domain list")?;
    let list = load_domain_list(open_input(list_path)?, config.domain_list_format.into())
        .map_err(|e| PipelineError::Data(format!("{}: {e}", list_path.display())))?;
    let special = match &config.special_purpose_table_path {
        Some(path) => SpecialPurposeTable::parse(open_input(path)?)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?,
        None => SpecialPurposeTable::bundled(),
    };

    let queries: Vec<DomainRecord> = list.records.iter().flat_map(expand_variants).collect();
    let options = ResolveOptions {
        timeout: Duration::from_millis(config.timeout_ms),
        in_flight: config.in_flight,
    };

    let fixture_set: FixtureSet;
    let fixture_resolvers: Vec<FixtureResolver>;
    let live: Vec<UdpResolver>;
    let resolvers: Vec<&dyn Resolver> = if let Some(path) = &config.fixture_dns_path {
        fixture_set = FixtureSet::load(open_input(path)?)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
        fixture_resolvers = fixture_set
            .resolvers()
            .iter()
            .map(|l| fixture_set.resolver(l))
            .collect();
        fixture_resolvers
            .iter()
            .map(|r| r as &dyn Resolver)
            .collect()
    } else if !config.resolvers.is_empty() {
        live = config
            .resolvers
            .iter()
            .map(|endpoint| UdpResolver::from_endpoint(endpoint, config.queries_per_second))
            .collect::<Result<_, _>>()
            .map_err(PipelineError::Config)?;
        live.iter().map(|r| r as &dyn Resolver).collect()
    } else {
        return Err(PipelineError::Unconfigured("DNS fixture or resolver"));
    };
    if resolvers.is_empty() {
        return Err(PipelineError::Data("DNS fixture holds no answers".into()));
    }
    finish_resolve(config, out, &list, &queries, &special, options, &resolvers)
}

fn finish_resolve(
    config: &PipelineConfig,
    out: &Path,
    list: &crate::domain_ingest::DomainList,
    queries: &[DomainRecord],
    special: &SpecialPurposeTable,
    options: ResolveOptions,
    resolvers: &[&dyn Resolver],
) -> Result<(), PipelineError> {
    let names: Vec<_> = queries.iter().map(|q| q.name.clone()).collect();
    if let Some(primary) = &config.primary_resolver {
        if !resolvers.iter().any(|r| r.id() == primary) {
            return Err(PipelineError::Config(format!(
                "unknown primary resolver '{primary}'"
            )));
        }
    }
    let mut lines = Vec::with_capacity(queries.len() * resolvers.len());
    let mut by_status: BTreeMap<String, usize> = BTreeMap::new();
    let mut rejected_total = 0;
    for resolver in resolvers {
        let results = resolve_many(&names, *resolver, options);
        for (query, result) in queries.iter().zip(results) {
            let line = match result {
                Ok(mut result) => {
                    let rejected = result.apply_filter(special);
                    rejected_total += rejected.len();
                    *by_status.entry(result.status.to_string()).or_default() += 1;
                    ResolvedLine {
                        rank: query.rank,
                        variant: query.variant,
                        domain: result.domain,
                        resolver: result.resolver_id,
                        status: Some(result.status),
                        error: None,
                        cnames: result.cname_chain,
                        addresses: result.addresses,
                        rejected,
                        ts: result.observed_at,
                    }
                }
                Err(err) => {
                    *by_status.entry("error".into()).or_default() += 1;
                    ResolvedLine {
                        rank: query.rank,
                        variant: query.variant,
                        domain: query.name.clone(),
                        resolver: resolver.id().to_string(),
                        status: None,
                        error: Some(err.to_string()),
                        cnames: Vec::new(),
                        addresses: BTreeSet::new(),
                        rejected: BTreeSet::new(),
                        ts: 0,
                    }
                }
            };
            lines.push(line);
        }
    }
    let order: Vec<&str> = resolvers.iter().map(|r| r.id()).collect();
    let position = |id: &str| order.iter().position(|o| *o == id).unwrap_or(usize::MAX);
    lines.sort_by(|a, b| {
        (a.rank, a.variant, position(&a.resolver)).cmp(&(b.rank, b.variant, position(&b.resolver)))
    });
    write_jsonl(&out.join(RESOLVED), &lines)?;
    write_json(
        &diag_path(out, Stage::Resolve),
        &json!({
            "domains": list.records.len(),
            "malformed_lines": list.malformed_lines,
            "duplicate_names": list.duplicate_names,
            "queries": queries.len(),
            "resolvers": order,
            "answers_by_status": by_status,
            "special_purpose_rejected": rejected_total,
        }),
    )
}

//------------ map -----------------------------------------------------------

fn is_gzip_or_binary(head: &[u8]) -> bool {
    match head {
        [0x1f, 0x8b, ..] => true,
        _ => head
            .iter()
            .any(|b| !(b.is_ascii_graphic() || b.is_ascii_whitespace())),
    }
}

fn load_rib(
    path: &Path,
    diag: &mut RibDiagnostics,
) -> Result<Vec<crate::rib_store::RibEntry>, PipelineError> {
    let mut reader = open_input(path)?;
    let head = reader.fill_buf().map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let parsed = if is_gzip_or_binary(&head[..head.len().min(64)]) {
        parse_mrt(reader).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?
    } else {
        parse_text_rib(reader).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        })?
    };
    diag.merge(&parsed.diagnostics);
    Ok(parsed.entries)
}

fn primary_resolver(config: &PipelineConfig, lines: &[ResolvedLine]) -> Option<String> {
    config
        .primary_resolver
        .clone()
        .or_else(|| lines.first().map(|l| l.resolver.clone()))
}

fn map_stage(config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let resolved: Vec<ResolvedLine> = read_jsonl(&out.join(RESOLVED), "resolve")?;
    if config.rib_paths.is_empty() {
        return Err(PipelineError::Unconfigured("RIB source"));
    }
    let mut rib_diag = RibDiagnostics::default();
    let mut entries = Vec::new();
    for path in &config.rib_paths {
        entries.extend(load_rib(path, &mut rib_diag)?);
    }
    if entries.is_empty() {
        return Err(PipelineError::Data(
            "RIB sources hold no usable entries".into(),
        ));
    }
    let trie = build_trie(&entries);
    drop(entries);

    let primary = primary_resolver(config, &resolved);
    let mut mapped = Vec::new();
    let mut unreachable_total = 0;
    let mut crosscheck = Vec::new();
    let mut crosscheck_skipped = 0;
    let mut groups: BTreeMap<(u32, Variant), Vec<&ResolvedLine>> = BTreeMap::new();
    for line in &resolved {
        groups
            .entry((line.rank, line.variant))
            .or_default()
            .push(line);
    }
    for group in groups.values() {
        if let Some(line) = group.iter().find(|l| Some(&l.resolver) == primary.as_ref()) {
            let mut pairs = BTreeSet::new();
            let mut unreachable = BTreeSet::new();
            for addr in &line.addresses {
                let covering = covering_pairs(*addr, &trie);
                if covering.is_empty() {
                    unreachable.insert(*addr);
                }
                pairs.extend(covering);
            }
            unreachable_total += unreachable.len();
            mapped.push(MappedLine {
                rank: line.rank,
                variant: line.variant,
                domain: line.domain.clone(),
                resolver: line.resolver.clone(),
                status: line.status,
                cnames: line.cnames.clone(),
                addresses: line.addresses.clone(),
                unreachable,
                pairs,
            });
        }
        let results: Vec<ResolutionResult> = group
            .iter()
            .filter_map(|l| {
                Some(ResolutionResult {
                    domain: l.domain.clone(),
                    resolver_id: l.resolver.clone(),
                    cname_chain: l.cnames.clone(),
                    addresses: l.addresses.clone(),
                    status: l.status?,
                    observed_at: l.ts,
                })
            })
            .collect();
        if group.len() >= 2 {
            match cross_check(&results) {
                Ok(report) => crosscheck.push(report.with_prefix_level(|ip| {
                    covering_pairs(*ip, &trie)
                        .into_iter()
                        .map(|p| p.prefix)
                        .collect()
                })),
                Err(_) => crosscheck_skipped += 1,
            }
        }
    }
    write_jsonl(&out.join(MAPPED), &mapped)?;
    write_jsonl(&out.join(CROSSCHECK), &crosscheck)?;
    let disagreeing = crosscheck.iter().filter(|c| !c.agree_addresses).count();
    write_json(
        &diag_path(out, Stage::Map),
        &json!({
            "rib": rib_diag,
            "prefixes": trie.prefix_count(),
            "pairs": trie.pair_count(),
            "as_set_entries_excluded": trie.as_set_entries(),
            "primary_resolver": primary,
            "mapped_names": mapped.len(),
            "names_without_pairs": mapped.iter().filter(|m| m.pairs.is_empty()).count(),
            "unreachable_addresses": unreachable_total,
            "crosschecked_names": crosscheck.len(),
            "crosscheck_address_disagreements": disagreeing,
            "crosscheck_skipped": crosscheck_skipped,
        }),
    )
}

//------------ validate ------------------------------------------------------

fn validate_stage(config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let mapped: Vec<MappedLine> = read_jsonl(&out.join(MAPPED), "map")?;
    let roa_path = required(&config.roa_path, "ROA source")?;
    let load = load_roas(open_input(roa_path)?, config.roa_format(roa_path))
        .map_err(|e| PipelineError::Data(format!("{}: {e}", roa_path.display())))?;
    let index = build_roa_index(&load.roas);

    let mut counts: BTreeMap<ValidationState, usize> = BTreeMap::new();
    let lines: Vec<ValidatedLine> = mapped
        .iter()
        .map(|m| {
            let pairs: Vec<StatedPair> = m
                .pairs
                .iter()
                .map(|p| {
                    let state = validate(p, &index);
                    *counts.entry(state).or_default() += 1;
                    StatedPair {
                        prefix: p.prefix,
                        asn: p.origin_asn,
                        state,
                    }
                })
                .collect();
            let coverage = coverage_of(m.domain.clone(), &pairs);
            ValidatedLine {
                rank: m.rank,
                domain: m.domain.clone(),
                variant: m.variant,
                pairs,
                covered: coverage.covered_fraction().map(|f| fmt_ratio(&f)),
                class: coverage.classification,
            }
        })
        .collect();
    write_jsonl(&out.join(VALIDATED), &lines)?;
    let state_counts: BTreeMap<String, usize> = counts
        .into_iter()
        .map(|(s, n)| (s.to_string(), n))
        .collect();
    write_json(
        &diag_path(out, Stage::Validate),
        &json!({
            "roa_rows": load.rows,
            "roas": load.roas.len(),
            "malformed_rows": load.malformed_rows,
            "duplicates": load.duplicates,
            "warnings": load.warnings,
            "pair_states": state_counts,
        }),
    )
}

fn coverage_of(domain: crate::domain_ingest::DomainName, pairs: &[StatedPair]) -> DomainCoverage {
    let states: Vec<_> = pairs.iter().map(|p| (p.pair(), p.state)).collect();
    domain_coverage(domain, &states)
}

//------------ classify ------------------------------------------------------

fn classify_stage(config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let mapped: Vec<MappedLine> = read_jsonl(&out.join(MAPPED), "map")?;
    let keywords = match &config.keyword_path {
        Some(path) => parse_keywords(open_input(path)?).map_err(|e| PipelineError::Io {
            path: path.clone(),
            source: e,
        })?,
        None => bundled_keywords(),
    };
    let registry = match &config.as_registry_path {
        Some(path) => {
            Some(
                parse_as_registry(open_input(path)?).map_err(|e| PipelineError::Io {
                    path: path.clone(),
                    source: e,
                })?,
            )
        }
        None => None,
    };
    let cdn_asns = registry
        .as_ref()
        .map(|r| spot_keywords(&keywords, &r.entries))
        .unwrap_or_default();
    let external = match &config.external_labels_path {
        Some(path) => {
            Some(
                load_external_labels(open_input(path)?).map_err(|e| PipelineError::Io {
                    path: path.clone(),
                    source: e,
                })?,
            )
        }
        None => None,
    };

    let lines: Vec<LabelLine> = mapped
        .iter()
        .map(|m| {
            let chain = match m.status {
                Some(status) => classify_by_chain(&ResolutionResult {
                    domain: m.domain.clone(),
                    resolver_id: m.resolver.clone(),
                    cname_chain: m.cnames.clone(),
                    addresses: m.addresses.clone(),
                    status,
                    observed_at: 0,
                }),
                None => ChainClass {
                    by_chain: false,
                    chain_length: 0,
                },
            };
            LabelLine {
                rank: m.rank,
                variant: m.variant,
                label: CdnLabel {
                    domain: m.domain.clone(),
                    by_chain: chain.by_chain,
                    by_asn: classify_by_asn(&m.pairs, &cdn_asns),
                    external: external
                        .as_ref()
                        .and_then(|e| e.labels.get(&m.domain).copied()),
                    chain_length: chain.chain_length,
                },
            }
        })
        .collect();
    write_jsonl(&out.join(CDN_LABELS), &lines)?;
    let asn_text: String = cdn_asns.iter().map(|a| format!("{}\n", a.0)).collect();
    write_text(&out.join(CDN_ASNS), &asn_text)?;

    let labels: Vec<CdnLabel> = lines.iter().map(|l| l.label.clone()).collect();
    let empty = BTreeMap::new();
    let agreement = compare_external(
        &labels,
        external.as_ref().map(|e| &e.labels).unwrap_or(&empty),
    );
    write_json(
        &out.join(AGREEMENT),
        &json!({
            "labels": agreement.labels,
            "with_external": agreement.with_external,
            "coverage": fmt_ratio(&agreement.coverage),
            "agree": agreement.agree.map(|a| fmt_ratio(&a)),
            "confusion": agreement.confusion,
        }),
    )?;
    write_json(
        &diag_path(out, Stage::Classify),
        &json!({
            "keywords": keywords.len(),
            "registry_entries": registry.as_ref().map(|r| r.entries.len()),
            "registry_malformed_lines": registry.as_ref().map(|r| r.malformed_lines),
            "registry_duplicates": registry.as_ref().map(|r| r.duplicates),
            "cdn_asns": cdn_asns.len(),
            "external_malformed_lines": external.as_ref().map(|e| e.malformed_lines),
            "cdn_by_chain": labels.iter().filter(|l| l.by_chain).count(),
            "cdn_by_asn": labels.iter().filter(|l| l.by_asn).count(),
        }),
    )
}

//------------ analyze -------------------------------------------------------

fn load_coverages(out: &Path) -> Result<Vec<(DomainRecord, DomainCoverage)>, PipelineError> {
    let validated: Vec<ValidatedLine> = read_jsonl(&out.join(VALIDATED), "validate")?;
    Ok(validated
        .iter()
        .map(|v| {
            let record = DomainRecord {
                rank: v.rank,
                name: v.domain.clone(),
                variant: v.variant,
            };
            (record, coverage_of(v.domain.clone(), &v.pairs))
        })
        .collect())
}

fn analyze_stage(config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let coverages = load_coverages(out)?;
    let label_lines: Vec<LabelLine> = read_jsonl(&out.join(CDN_LABELS), "classify")?;
    let labels: BTreeMap<_, _> = label_lines
        .iter()
        .map(|l| (l.label.domain.clone(), l.label.clone()))
        .collect();
    let records: Vec<DomainRecord> = coverages.iter().map(|(r, _)| r.clone()).collect();
    let bins = assign_bins(&records, config.bin_size);

    let mut summary = serde_json::Map::new();
    for variant in [Variant::Www, Variant::Base] {
        let ranked: Vec<RankedCoverage> = coverages
            .iter()
            .filter(|(r, _)| r.variant == variant)
            .map(|(r, c)| RankedCoverage {
                rank: r.rank,
                coverage: c.clone(),
            })
            .collect();
        let (cdn, all) = analytics::cdn_conditional_rates(&ranked, &labels, &bins);
        write_text(
            &out.join(format!("bins_{}.csv", variant.as_str())),
            &analytics::render_bins_csv(&all),
        )?;
        write_text(
            &out.join(format!("cdn_bins_{}.csv", variant.as_str())),
            &analytics::render_bins_csv(&cdn),
        )?;

        let variant_labels: Vec<(u32, CdnLabel)> = label_lines
            .iter()
            .filter(|l| l.variant == variant)
            .map(|l| (l.rank, l.label.clone()))
            .collect();
        write_text(
            &out.join(format!("detection_bins_{}.csv", variant.as_str())),
            &analytics::render_detection_csv(&analytics::detection_bins(&variant_labels, &bins)),
        )?;

        let s = analytics::weighted_summary(&ranked);
        let mut classes: BTreeMap<String, usize> = BTreeMap::new();
        for r in &ranked {
            *classes
                .entry(r.coverage.classification.to_string())
                .or_default() += 1;
        }
        let dw = |i: usize| s.domain_weighted[i].as_ref().map(fmt_decimal);
        let pw = |i: usize| s.pair_weighted[i].as_ref().map(fmt_ratio);
        summary.insert(
            variant.as_str().to_string(),
            json!({
                "domains": s.domains,
                "with_data": s.with_data,
                "pairs": s.pairs,
                "classes": classes,
                "domain_weighted": {"covered": dw(0), "valid": dw(1), "invalid": dw(2)},
                "pair_weighted": {"covered": pw(0), "valid": pw(1), "invalid": pw(2)},
                "cdn_by_chain": variant_labels.iter().filter(|(_, l)| l.by_chain).count(),
            }),
        );
    }

    // www versus base prefix sets, per ranked domain
    let mut by_rank: BTreeMap<u32, [Option<&DomainCoverage>; 2]> = BTreeMap::new();
    let mut base_names = BTreeMap::new();
    for (record, coverage) in &coverages {
        let slot = by_rank.entry(record.rank).or_default();
        match record.variant {
            Variant::Www => slot[0] = Some(coverage),
            Variant::Base => {
                slot[1] = Some(coverage);
                base_names.insert(record.rank, record.name.clone());
            }
        }
    }
    let mut overlaps = Vec::new();
    let mut overlap_lines = Vec::new();
    for (rank, [www, base]) in &by_rank {
        let (Some(www), Some(base)) = (www, base) else {
            continue;
        };
        let (wp, bp) = (www.prefixes(), base.prefixes());
        let overlap = prefix_overlap(&wp, &bp);
        let domain = base_names[rank].clone();
        overlap_lines.push(OverlapLine {
            rank: *rank,
            domain: domain.clone(),
            www_prefixes: wp.len(),
            base_prefixes: bp.len(),
            overlap: overlap.map(|o| fmt_ratio(&o)),
        });
        overlaps.push((*rank, OverlapStat { domain, overlap }));
    }
    write_jsonl(&out.join(OVERLAP), &overlap_lines)?;
    write_text(
        &out.join("overlap_bins.csv"),
        &analytics::render_overlap_csv(&analytics::overlap_bins(&overlaps, &bins)),
    )?;
    let all_bin = crate::domain_ingest::RankBin {
        index: 0,
        lo: 0,
        hi: u32::MAX,
    };
    let total = analytics::overlap_bins(&overlaps, &[all_bin]).remove(0);
    summary.insert(
        "overlap".into(),
        json!({
            "domains": total.with_data,
            "mean": total.mean_overlap.as_ref().map(fmt_decimal),
            "identical_fraction": total.identical_fraction.as_ref().map(fmt_decimal),
        }),
    );
    summary.insert("bin_size".into(), json!(config.bin_size.get()));
    summary.insert("bins".into(), json!(bins.len()));
    write_json(&out.join(SUMMARY), &summary)?;
    write_json(
        &diag_path(out, Stage::Analyze),
        &json!({
            "records": coverages.len(),
            "bins": bins.len(),
            "overlap_pairs": overlaps.len(),
        }),
    )
}

//------------ report --------------------------------------------------------

fn report_stage(config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let coverages = load_coverages(out)?;
    let rows = coverage_report(&coverages, config.top_n);
    write_text(&out.join(REPORT_TXT), &render_report_text(&rows))?;
    write_text(&out.join(REPORT_CSV), &render_report_csv(&rows))?;
    write_json(
        &diag_path(out, Stage::Report),
        &json!({ "rows": rows.len(), "top_n": config.top_n }),
    )
}
