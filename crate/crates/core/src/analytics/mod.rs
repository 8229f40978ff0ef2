//! Per-domain coverage, rank-binned statistics and www/base overlap.
//!
//! All fractions are exact rationals. Per-domain values are `k/n` over
//! distinct prefix/origin pairs; bin means are kept as big rationals so
//! sums over many different denominators cannot overflow.

mod decimal;
mod report;

pub use self::decimal::{fmt_decimal, fmt_ratio, to_big, DECIMALS};
pub use self::report::{
    coverage_report, render_report_csv, render_report_text, CoverageCell, ReportRow,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ipnet::IpNet;
use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::Zero;
use serde::{Deserialize, Serialize};

use crate::cdn_classifier::CdnLabel;
use crate::domain_ingest::{DomainName, RankBin};
use crate::rib_store::PrefixOriginPair;
use crate::roa_validation::ValidationState;

pub type Fraction = Ratio<u64>;

//------------ DomainCoverage ------------------------------------------------

#[derive(Clone, Copy, Debug, Eq, Hash, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageClass {
    None,
    Partial,
    Full,
    #[serde(rename = "nodata")]
    NoData,
}

impl fmt::Display for CoverageClass {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            CoverageClass::None => "none",
            CoverageClass::Partial => "partial",
            CoverageClass::Full => "full",
            CoverageClass::NoData => "nodata",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, Eq, PartialEq)]
pub struct StateCounts {
    pub valid: u64,
    pub invalid: u64,
    pub notfound: u64,
}

impl StateCounts {
    pub fn total(&self) -> u64 {
        self.valid + self.invalid + self.notfound
    }

    /// Pairs with any ROA covering them, valid or not.
    pub fn covered(&self) -> u64 {
        self.valid + self.invalid
    }

    fn add(&mut self, state: ValidationState) {
        match state {
            ValidationState::Valid => self.valid += 1,
            ValidationState::Invalid => self.invalid += 1,
            ValidationState::NotFound => self.notfound += 1,
        }
    }
}

#[derive(Clone, Debug, Eq, PartialEq)]
pub struct DomainCoverage {
    pub domain: DomainName,
    pub pairs: Vec<(PrefixOriginPair, ValidationState)>,
    pub counts: StateCounts,
    pub classification: CoverageClass,
}

impl DomainCoverage {
    fn fraction(&self, count: u64) -> Option<Fraction> {
        let total = self.counts.total();
        (total > 0).then(|| Ratio::new(count, total))
    }

    pub fn covered_fraction(&self) -> Option<Fraction> {
        self.fraction(self.counts.covered())
    }

    pub fn valid_fraction(&self) -> Option<Fraction> {
        self.fraction(self.counts.valid)
    }

    pub fn invalid_fraction(&self) -> Option<Fraction> {
        self.fraction(self.counts.invalid)
    }

    pub fn notfound_fraction(&self) -> Option<Fraction> {
        self.fraction(self.counts.notfound)
    }

    pub fn has_data(&self) -> bool {
        self.classification != CoverageClass::NoData
    }

    pub fn prefixes(&self) -> BTreeSet<IpNet> {
        self.pairs.iter().map(|(p, _)| p.prefix).collect()
    }
}

/// Summarizes the validation states of one domain's pairs. Repeated pairs
/// are counted once.
pub fn domain_coverage(
    domain: DomainName,
    states: &[(PrefixOriginPair, ValidationState)],
) -> DomainCoverage {
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(states.len());
    let mut counts = StateCounts::default();
    for (pair, state) in states {
        if seen.insert(*pair) {
            pairs.push((*pair, *state));
            counts.add(*state);
        }
    }
    let classification = if counts.total() == 0 {
        CoverageClass::NoData
    } else if counts.covered() == counts.total() {
        CoverageClass::Full
    } else if counts.covered() == 0 {
        CoverageClass::None
    } else {
        CoverageClass::Partial
    };
    DomainCoverage {
        domain,
        pairs,
        counts,
        classification,
    }
}

//------------ Overlap -------------------------------------------------------

#[derive(Clone, Debug, Eq, PartialEq)]
pub struct OverlapStat {
    pub domain: DomainName,
    /// Jaccard index of the two prefix sets, `None` if both are empty.
    pub overlap: Option<Fraction>,
}

pub fn prefix_overlap(
    www_prefixes: &BTreeSet<IpNet>,
    base_prefixes: &BTreeSet<IpNet>,
) -> Option<Fraction> {
    let union = www_prefixes.union(base_prefixes).count() as u64;
    if union == 0 {
        return None;
    }
    let common = www_prefixes.intersection(base_prefixes).count() as u64;
    Some(Ratio::new(common, union))
}

//------------ Bins ----------------------------------------------------------

/// A domain's coverage together with its list rank.
#[derive(Clone, Debug, Eq, PartialEq)]
pub struct RankedCoverage {
    pub rank: u32,
    pub coverage: DomainCoverage,
}

#[derive(Clone, Debug, Eq, PartialEq)]
pub struct BinStat {
    pub bin: RankBin,
    /// Domains in the bin, with or without data.
    pub domain_count: u64,
    /// Domains contributing to the means.
    pub with_data: u64,
    pub mean_covered: Option<BigRational>,
    pub mean_valid: Option<BigRational>,
    pub mean_invalid: Option<BigRational>,
    pub mean_notfound: Option<BigRational>,
    pub cdn_fraction: Option<BigRational>,
}

#[derive(Default)]
struct BinAccumulator {
    domains: u64,
    with_data: u64,
    cdn: u64,
    covered: BigRational,
    valid: BigRational,
    invalid: BigRational,
    notfound: BigRational,
}

impl BinAccumulator {
    fn add(&mut self, coverage: &DomainCoverage, is_cdn: bool) {
        self.domains += 1;
        self.cdn += is_cdn as u64;
        if let (Some(c), Some(v), Some(i), Some(n)) = (
            coverage.covered_fraction(),
            coverage.valid_fraction(),
            coverage.invalid_fraction(),
            coverage.notfound_fraction(),
        ) {
            self.with_data += 1;
            self.covered += to_big(&c);
            self.valid += to_big(&v);
            self.invalid += to_big(&i);
            self.notfound += to_big(&n);
        }
    }

    fn finish(self, bin: RankBin) -> BinStat {
        let mean = |sum: BigRational| {
            (self.with_data > 0)
                .then(|| sum / BigRational::from_integer(BigInt::from(self.with_data)))
        };
        BinStat {
            bin,
            domain_count: self.domains,
            with_data: self.with_data,
            cdn_fraction: (self.domains > 0)
                .then(|| BigRational::new(BigInt::from(self.cdn), BigInt::from(self.domains))),
            mean_covered: mean(self.covered),
            mean_valid: mean(self.valid),
            mean_invalid: mean(self.invalid),
            mean_notfound: mean(self.notfound),
        }
    }
}

fn find_bin(bins: &[RankBin], rank: u32) -> Option<usize> {
    let pos = bins.partition_point(|b| b.hi < rank);
    (pos < bins.len() && bins[pos].contains(rank)).then_some(pos)
}

/// Means of per-domain fractions per rank bin. Domains without data count
/// toward `domain_count` and `cdn_fraction` but not toward the means.
pub fn bin_aggregate(
    coverages: &[RankedCoverage],
    labels: &BTreeMap<DomainName, CdnLabel>,
    bins: &[RankBin],
) -> Vec<BinStat> {
    let mut acc: Vec<BinAccumulator> = bins.iter().map(|_| BinAccumulator::default()).collect();
    for ranked in coverages {
        let Some(slot) = find_bin(bins, ranked.rank) else {
            log::warn!(
                "rank {} of {} is outside every bin",
                ranked.rank,
                ranked.coverage.domain
            );
            continue;
        };
        let is_cdn = labels
            .get(&ranked.coverage.domain)
            .map(|l| l.by_chain)
            .unwrap_or(false);
        acc[slot].add(&ranked.coverage, is_cdn);
    }
    acc.into_iter()
        .zip(bins)
        .map(|(a, bin)| a.finish(*bin))
        .collect()
}

/// The CDN-only series and the unconditioned series.
pub fn cdn_conditional_rates(
    coverages: &[RankedCoverage],
    labels: &BTreeMap<DomainName, CdnLabel>,
    bins: &[RankBin],
) -> (Vec<BinStat>, Vec<BinStat>) {
    let cdn_only: Vec<RankedCoverage> = coverages
        .iter()
        .filter(|c| {
            labels
                .get(&c.coverage.domain)
                .map(|l| l.by_chain)
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    (
        bin_aggregate(&cdn_only, labels, bins),
        bin_aggregate(coverages, labels, bins),
    )
}

/// Header of [`render_bins_csv`].
pub const BIN_CSV_HEADER: &str =
    "bin_lo,bin_hi,n,mean_covered,mean_valid,mean_invalid,mean_notfound,cdn_fraction";

pub fn render_bins_csv(stats: &[BinStat]) -> String {
    let field = |v: &Option<BigRational>| v.as_ref().map(fmt_decimal).unwrap_or_default();
    let mut out = String::from(BIN_CSV_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.bin.lo,
            s.bin.hi,
            s.domain_count,
            field(&s.mean_covered),
            field(&s.mean_valid),
            field(&s.mean_invalid),
            field(&s.mean_notfound),
            field(&s.cdn_fraction),
        ));
    }
    out
}

//------------ Overlap bins --------------------------------------------------

#[derive(Clone, Debug, Eq, PartialEq)]
pub struct OverlapBin {
    pub bin: RankBin,
    pub domain_count: u64,
    pub with_data: u64,
    pub mean_overlap: Option<BigRational>,
    pub identical_fraction: Option<BigRational>,
}

pub fn overlap_bins(overlaps: &[(u32, OverlapStat)], bins: &[RankBin]) -> Vec<OverlapBin> {
    let mut acc: Vec<(u64, u64, u64, BigRational)> = bins
        .iter()
        .map(|_| (0, 0, 0, BigRational::zero()))
        .collect();
    for (rank, stat) in overlaps {
        let Some(slot) = find_bin(bins, *rank) else {
            continue;
        };
        let a = &mut acc[slot];
        a.0 += 1;
        if let Some(o) = stat.overlap {
            a.1 += 1;
            a.2 += (o == Ratio::from_integer(1)) as u64;
            a.3 += to_big(&o);
        }
    }
    acc.into_iter()
        .zip(bins)
        .map(|((n, with_data, identical, sum), bin)| {
            let d = BigRational::from_integer(BigInt::from(with_data));
            OverlapBin {
                bin: *bin,
                domain_count: n,
                with_data,
                mean_overlap: (with_data > 0).then(|| sum / d.clone()),
                identical_fraction: (with_data > 0)
                    .then(|| BigRational::from_integer(BigInt::from(identical)) / d),
            }
        })
        .collect()
}

pub fn render_overlap_csv(stats: &[OverlapBin]) -> String {
    let field = |v: &Option<BigRational>| v.as_ref().map(fmt_decimal).unwrap_or_default();
    let mut out = String::from("bin_lo,bin_hi,n,with_data,mean_overlap,identical_fraction\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.bin.lo,
            s.bin.hi,
            s.domain_count,
            s.with_data,
            field(&s.mean_overlap),
            field(&s.identical_fraction)
        ));
    }
    out
}

//------------ CDN detection bins --------------------------------------------

/// Per-bin share of CDN domains by the chain heuristic and by the external
/// classification, for plotting the two detectors side by side.
#[derive(Clone, Debug, Eq, PartialEq)]
pub struct DetectionBin {
    pub bin: RankBin,
    pub domain_count: u64,
    pub chain_fraction: Option<BigRational>,
    pub external_count: u64,
    pub external_fraction: Option<BigRational>,
}

pub fn detection_bins(labels: &[(u32, CdnLabel)], bins: &[RankBin]) -> Vec<DetectionBin> {
    let mut acc: Vec<[u64; 4]> = bins.iter().map(|_| [0; 4]).collect();
    for (rank, label) in labels {
        let Some(slot) = find_bin(bins, *rank) else {
            continue;
        };
        let a = &mut acc[slot];
        a[0] += 1;
        a[1] += label.by_chain as u64;
        if let Some(ext) = label.external {
            a[2] += 1;
            a[3] += ext as u64;
        }
    }
    let frac = |k: u64, n: u64| (n > 0).then(|| BigRational::new(BigInt::from(k), BigInt::from(n)));
    acc.into_iter()
        .zip(bins)
        .map(|([n, chain, ext_n, ext], bin)| DetectionBin {
            bin: *bin,
            domain_count: n,
            chain_fraction: frac(chain, n),
            external_count: ext_n,
            external_fraction: frac(ext, ext_n),
        })
        .collect()
}

pub fn render_detection_csv(stats: &[DetectionBin]) -> String {
    let field = |v: &Option<BigRational>| v.as_ref().map(fmt_decimal).unwrap_or_default();
    let mut out = String::from("bin_lo,bin_hi,n,chain_fraction,external_n,external_fraction\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.bin.lo,
            s.bin.hi,
            s.domain_count,
            field(&s.chain_fraction),
            s.external_count,
            field(&s.external_fraction)
        ));
    }
    out
}

//------------ Global summary ------------------------------------------------

/// Overall rates weighted once by domain and once by pair.
#[derive(Clone, Debug, Eq, PartialEq)]
pub struct WeightedSummary {
    pub domains: u64,
    pub with_data: u64,
    pub pairs: u64,
    pub domain_weighted: [Option<BigRational>; 3],
    pub pair_weighted: [Option<Fraction>; 3],
}

/// Covered, valid and invalid rates in that order.
pub fn weighted_summary(coverages: &[RankedCoverage]) -> WeightedSummary {
    let mut acc = BinAccumulator::default();
    let mut totals = StateCounts::default();
    for c in coverages {
        acc.add(&c.coverage, false);
        totals.valid += c.coverage.counts.valid;
        totals.invalid += c.coverage.counts.invalid;
        totals.notfound += c.coverage.counts.notfound;
    }
    let pairs = totals.total();
    let pf = |k: u64| (pairs > 0).then(|| Ratio::new(k, pairs));
    let stat = acc.finish(RankBin {
        index: 0,
        lo: 0,
        hi: 0,
    });
    WeightedSummary {
        domains: stat.domain_count,
        with_data: stat.with_data,
        pairs,
        domain_weighted: [stat.mean_covered, stat.mean_valid, stat.mean_invalid],
        pair_weighted: [pf(totals.covered()), pf(totals.valid), pf(totals.invalid)],
    }
}
