//! Top-ranked domains with their www and base coverage side by side.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{CoverageClass, DomainCoverage};
use crate::domain_ingest::{DomainName, DomainRecord, Variant};

/// One table cell: `✓(3/3)`, `◖(1/3)`, `✗(0/3)` or `n/a`.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize)]
pub struct CoverageCell {
    pub class: CoverageClass,
    pub covered: u64,
    pub pairs: u64,
}

impl CoverageCell {
    fn from_coverage(c: &DomainCoverage) -> Self {
        CoverageCell {
            class: c.classification,
            covered: c.counts.covered(),
            pairs: c.counts.total(),
        }
    }

    fn is_covered(&self) -> bool {
        matches!(self.class, CoverageClass::Partial | CoverageClass::Full)
    }
}

impl fmt::Display for CoverageCell {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let glyph = match self.class {
            CoverageClass::Full => "✓",
            CoverageClass::Partial => "◖",
            CoverageClass::None => "✗",
            CoverageClass::NoData => return f.write_str("n/a"),
        };
        write!(f, "{glyph}({}/{})", self.covered, self.pairs)
    }
}

fn cell(c: &Option<CoverageCell>) -> String {
    c.map(|c| c.to_string()).unwrap_or_else(|| "n/a".into())
}

#[derive(Clone, Debug, Eq, PartialEq, Serialize)]
pub struct ReportRow {
    pub rank: u32,
    pub domain: DomainName,
    pub www: Option<CoverageCell>,
    pub base: Option<CoverageCell>,
}

impl fmt::Display for ReportRow {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.rank,
            self.domain,
            cell(&self.www),
            cell(&self.base)
        )
    }
}

/// The `top_n` best-ranked domains where at least one variant has any
/// ROA-covered pair, ascending by rank.
pub fn coverage_report(entries: &[(DomainRecord, DomainCoverage)], top_n: usize) -> Vec<ReportRow> {
    let mut by_rank: BTreeMap<u32, ReportRow> = BTreeMap::new();
    for (record, coverage) in entries {
        let row = by_rank.entry(record.rank).or_insert_with(|| ReportRow {
            rank: record.rank,
            domain: record.name.clone(),
            www: None,
            base: None,
        });
        let c = Some(CoverageCell::from_coverage(coverage));
        match record.variant {
            Variant::Www => row.www = c,
            Variant::Base => {
                row.domain = record.name.clone();
                row.base = c;
            }
        }
    }
    by_rank
        .into_values()
        .filter(|r| {
            r.www
                .iter()
                .chain(r.base.iter())
                .any(CoverageCell::is_covered)
        })
        .take(top_n)
        .collect()
}

/// Aligned plain-text table.
pub fn render_report_text(rows: &[ReportRow]) -> String {
    let header = ["rank", "domain", "www", "w/o www"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.rank.to_string(),
                r.domain.to_string(),
                cell(&r.www),
                cell(&r.base),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |fields: [&str; 4]| {
        let mut s = String::new();
        for (i, (f, w)) in fields.iter().zip(widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(f);
            if i + 1 < fields.len() {
                s.extend(std::iter::repeat_n(' ', w - f.chars().count()));
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    for row in &cells {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
    }
    out
}

pub fn render_report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("rank,domain,www,base\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.rank,
            r.domain,
            cell(&r.www),
            cell(&r.base)
        ));
    }
    out
}
