//! Nearest-neighbour comparison of probe words across domain-specific
//! embedding spaces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{Query, VectorSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    pub domain: String,
    pub probe: String,
    pub rank: usize,
    pub token: String,
    pub similarity: f64,
}

/// A probe that one domain's vocabulary does not contain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gap {
    pub domain: String,
    pub probe: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DomainReport {
    pub domains: Vec<String>,
    pub probes: Vec<String>,
    pub k: usize,
    pub rows: Vec<DomainRow>,
    pub gaps: Vec<Gap>,
}

impl DomainReport {
    pub fn neighbors<'a>(&'a self, domain: &'a str, probe: &'a str) -> impl Iterator<Item = &'a DomainRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.domain == domain && r.probe == probe)
    }

    pub fn is_gap(&self, domain: &str, probe: &str) -> bool {
        self.gaps.iter().any(|g| g.domain == domain && g.probe == probe)
    }
}

/// Top-`k` neighbours of every probe in every domain. Rows come out sorted
/// by domain, probe, then rank regardless of input order.
pub fn compare_domains<'a, I, S>(spaces: I, probes: &[S], k: usize) -> Result<DomainReport>
where
    I: IntoIterator<Item = (&'a str, &'a VectorSpace)>,
    S: AsRef<str>,
{
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut by_name: BTreeMap<&str, &VectorSpace> = BTreeMap::new();
    for (name, space) in spaces {
        if by_name.insert(name, space).is_some() {
            return Err(Error::Config(format!("domain {name:?} given twice")));
        }
    }
    let mut probe_list: Vec<String> = Vec::new();
    for p in probes {
        let p = p.as_ref();
        if !probe_list.iter().any(|q| q == p) {
            probe_list.push(p.to_string());
        }
    }
    if probe_list.is_empty() {
        return Err(Error::Config("no probe words given".into()));
    }
    for p in &probe_list {
        if !by_name.values().any(|s| s.contains(p)) {
            return Err(Error::Config(format!("probe {p:?} is missing from every domain")));
        }
    }
    let mut sorted_probes: Vec<&String> = probe_list.iter().collect();
    sorted_probes.sort();

    let mut report = DomainReport {
        domains: by_name.keys().map(|d| d.to_string()).collect(),
        probes: probe_list.clone(),
        k,
        ..DomainReport::default()
    };
    for (domain, space) in &by_name {
        for probe in &sorted_probes {
            if !space.contains(probe) {
                report.gaps.push(Gap {
                    domain: domain.to_string(),
                    probe: probe.to_string(),
                });
                continue;
            }
            let neighbors = space.nearest_neighbors(Query::Token(probe), k, &[] as &[&str])?;
            report
                .rows
                .extend(neighbors.into_iter().enumerate().map(|(r, n)| DomainRow {
                    domain: domain.to_string(),
                    probe: probe.to_string(),
                    rank: r + 1,
                    token: n.token,
                    similarity: n.similarity,
                }));
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::Config(format!("unknown table format {other:?} (expected csv or markdown)"))),
        }
    }
}

const WORDS_PER_CELL: usize = 3;

pub fn report_to_table(report: &DomainReport, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => to_csv(report),
        TableFormat::Markdown => to_markdown(report),
    }
}

fn to_csv(report: &DomainReport) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["domain", "probe", "rank", "token", "similarity"])
        .expect("in-memory write");
    for row in &report.rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Rows from the CSV form of a report.
pub fn parse_report_csv(text: &str) -> Result<Vec<DomainRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    if headers != vec!["domain", "probe", "rank", "token", "similarity"] {
        return Err(Error::Format(format!("unexpected report header {headers:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("report row: {e}"))))
        .collect()
}

fn to_markdown(report: &DomainReport) -> String {
    let mut out = String::from("| Domain |");
    for p in &report.probes {
        let _ = write!(out, " {p} |");
    }
    out.push_str("\n|---|");
    for _ in &report.probes {
        out.push_str("---|");
    }
    out.push('\n');
    for domain in &report.domains {
        let cells: Vec<Vec<String>> = report
            .probes
            .iter()
            .map(|p| {
                if report.is_gap(domain, p) {
                    return vec!["(absent)".to_string()];
                }
                let words: Vec<&str> = report.neighbors(domain, p).map(|r| r.token.as_str()).collect();
                words.chunks(WORDS_PER_CELL).map(|c| c.join(", ")).collect()
            })
            .collect();
        let lines = cells.iter().map(Vec::len).max().unwrap_or(0).max(1);
        for line in 0..lines {
            let label = if line == 0 { domain.as_str() } else { "" };
            let _ = write!(out, "| {label} |");
            for cell in &cells {
                let _ = write!(out, " {} |", cell.get(line).map(String::as_str).unwrap_or(""));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(tokens: &[&str], data: Vec<f64>, dim: usize) -> VectorSpace {
        VectorSpace::new(tokens.iter().map(|t| t.to_string()).collect(), data, dim, "x").unwrap()
    }

    fn toy() -> VectorSpace {
        space(
            &["female", "male", "woman", "man", "girl", "boy"],
            vec![1.0, 0.1, 0.1, 1.0, 0.9, 0.2, 0.2, 0.9, 0.8, 0.3, 0.3, 0.8],
            2,
        )
    }

    #[test]
    fn rows_match_direct_neighbor_queries() {
        let s = toy();
        let report = compare_domains([("a", &s)], &["male", "female"], 3).unwrap();
        for probe in ["female", "male"] {
            let direct = s.nearest_neighbors(Query::Token(probe), 3, &[] as &[&str]).unwrap();
            let rows: Vec<&DomainRow> = report.neighbors("a", probe).collect();
            assert_eq!(rows.len(), 3);
            for (r, (row, n)) in rows.iter().zip(&direct).enumerate() {
                assert_eq!(row.rank, r + 1);
                assert_eq!(row.token, n.token);
                assert_eq!(row.similarity, n.similarity);
            }
        }
        assert_eq!(report.rows[0].probe, "female");
    }

    #[test]
    fn identical_spaces_give_identical_lists_and_order_is_canonical() {
        let s = toy();
        let t = toy();
        let ab = compare_domains([("b", &s), ("a", &t)], &["female", "male"], 4).unwrap();
        let ba = compare_domains([("a", &t), ("b", &s)], &["female", "male"], 4).unwrap();
        assert_eq!(ab, ba);
        let a: Vec<_> = ab.neighbors("a", "male").map(|r| (&r.token, r.similarity)).collect();
        let b: Vec<_> = ab.neighbors("b", "male").map(|r| (&r.token, r.similarity)).collect();
        assert_eq!(a, b);
        assert_eq!(ab.rows.first().unwrap().domain, "a");
    }

    #[test]
    fn missing_probe_is_a_gap_unless_missing_everywhere() {
        let s = toy();
        let small = space(&["female", "woman", "girl"], vec![1.0, 0.0, 0.9, 0.1, 0.8, 0.2], 2);
        let report = compare_domains([("big", &s), ("small", &small)], &["female", "male"], 2).unwrap();
        assert!(report.is_gap("small", "male"));
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.neighbors("small", "female").count(), 2);
        assert!(matches!(compare_domains([("small", &small)], &["male"], 2), Err(Error::Config(_))));
        assert!(matches!(compare_domains([("big", &s)], &["male"], 0), Err(Error::Config(_))));
    }

    #[test]
    fn disjoint_neighborhoods_across_domains() {
        let food = space(
            &["apple", "pie", "fruit", "tart", "phone", "laptop", "chip"],
            vec![
                1.0, 0.0, 0.0, 0.95, 0.1, 0.0, 0.9, 0.0, 0.1, 0.92, 0.05, 0.05, 0.0, 1.0, 0.0, 0.0, 0.9, 0.1,
                0.1, 0.9, 0.0,
            ],
            3,
        );
        let tech = space(
            &["apple", "pie", "fruit", "tart", "phone", "laptop", "chip"],
            vec![
                0.0, 1.0, 0.0, 0.95, 0.1, 0.0, 0.9, 0.0, 0.1, 0.92, 0.05, 0.05, 0.0, 0.95, 0.1, 0.0, 0.9, 0.1,
                0.1, 0.9, 0.0,
            ],
            3,
        );
        let report = compare_domains([("food", &food), ("tech", &tech)], &["apple"], 3).unwrap();
        let f: Vec<&str> = report.neighbors("food", "apple").map(|r| r.token.as_str()).collect();
        let t: Vec<&str> = report.neighbors("tech", "apple").map(|r| r.token.as_str()).collect();
        let mut fs = f.clone();
        fs.sort();
        let mut ts = t.clone();
        ts.sort();
        assert_eq!(fs, ["fruit", "pie", "tart"]);
        assert_eq!(ts, ["chip", "laptop", "phone"]);
    }

    #[test]
    fn csv_round_trip_and_header_only_when_empty() {
        let s = toy();
        let report = compare_domains([("a", &s)], &["female", "male"], 5).unwrap();
        let text = report_to_table(&report, TableFormat::Csv);
        assert_eq!(parse_report_csv(&text).unwrap(), report.rows);

        let empty = DomainReport::default();
        assert_eq!(report_to_table(&empty, TableFormat::Csv), "domain,probe,rank,token,similarity\n");
        assert!(parse_report_csv("domain,probe,rank,token,similarity\n").unwrap().is_empty());

        let one = DomainReport {
            rows: vec![report.rows[0].clone()],
            ..DomainReport::default()
        };
        let rows = parse_report_csv(&report_to_table(&one, TableFormat::Csv)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rank, 1);
    }

    #[test]
    fn markdown_has_one_block_per_domain() {
        let s = toy();
        let small = space(&["female", "woman"], vec![1.0, 0.0, 0.9, 0.1], 2);
        let report = compare_domains([("wiki", &s), ("metoo", &small)], &["female", "male"], 5).unwrap();
        let md = report_to_table(&report, TableFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[0], "| Domain | female | male |");
        assert_eq!(lines[1], "|---|---|---|");
        assert!(lines[2].starts_with("| metoo | woman |"));
        assert!(lines[2].ends_with("(absent) |"));
        assert!(lines[3].starts_with("| wiki |"));
        assert!(lines[4].starts_with("|  |"));
        assert_eq!(lines.len(), 5);
    }
}
