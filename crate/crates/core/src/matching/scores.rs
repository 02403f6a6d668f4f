use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::cmc::{cmc_from_positions, CmcCurve};
use super::gallery::GalleryIndex;
use super::rank_descending;
use crate::backbone::Embedding;
use crate::error::{Error, Result};

/// Probe × identity similarity scores, higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub identities: Vec<String>,
    pub probes: Vec<String>,
    /// Row-major, `probes.len() × identities.len()`.
    pub scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(identities: Vec<String>, probes: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != identities.len() * probes.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} probes × {} identities",
                scores.len(),
                probes.len(),
                identities.len()
            )));
        }
        unique("identity", &identities)?;
        unique("probe", &probes)?;
        Ok(Self {
            identities,
            probes,
            scores,
        })
    }

    /// Per-identity maximum cosine for each probe.
    pub fn from_embeddings(probes: &[Embedding], gallery: &GalleryIndex) -> Result<Self> {
        let mut scores = Vec::with_capacity(probes.len() * gallery.identities().len());
        for p in probes {
            scores.extend(gallery.identity_scores(p)?.into_iter().map(|(_, s)| s));
        }
        Self::new(
            gallery.identities().to_vec(),
            probes.iter().map(|p| p.sample_id.clone()).collect(),
            scores,
        )
    }

    pub fn row(&self, probe: usize) -> &[f64] {
        let n = self.identities.len();
        &self.scores[probe * n..(probe + 1) * n]
    }

    /// Ranked `(identity, score)` list for one probe; ties keep column order.
    pub fn ranked(&self, probe: usize) -> Vec<(String, f64)> {
        let mut r: Vec<(String, f64)> = self
            .identities
            .iter()
            .cloned()
            .zip(self.row(probe).iter().copied())
            .collect();
        rank_descending(&mut r);
        r
    }

    /// CMC given each probe's true identity.
    pub fn cmc(&self, truth: &HashMap<String, String>, max_rank: usize) -> Result<CmcCurve> {
        let known: HashSet<&str> = self.identities.iter().map(String::as_str).collect();
        let mut missing = Vec::new();
        for p in &self.probes {
            match truth.get(p) {
                Some(id) if known.contains(id.as_str()) => {}
                _ => missing.push(p.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::ClosedSet(missing));
        }
        if max_rank > self.identities.len() {
            return Err(Error::Config(format!(
                "max_rank {max_rank} exceeds the {} identities",
                self.identities.len()
            )));
        }
        let positions: Vec<usize> = (0..self.probes.len())
            .map(|i| {
                let id = &truth[&self.probes[i]];
                self.ranked(i)
                    .iter()
                    .position(|(c, _)| c == id)
                    .expect("identity checked")
                    + 1
            })
            .collect();
        cmc_from_positions(&positions, max_rank)
    }

    /// Header of identity ids (first cell is the probe column label), then one
    /// row per probe.
    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut rows = rdr.records();
        let header = match rows.next() {
            Some(r) => r.map_err(|e| Error::parse(source, 1, e.to_string()))?,
            None => return Err(Error::parse(source, 1, "missing header row")),
        };
        if header.len() < 2 {
            return Err(Error::parse(
                source,
                1,
                "header needs a probe column and at least one identity",
            ));
        }
        let identities: Vec<String> = header
            .iter()
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        let mut probes = Vec::new();
        let mut scores = Vec::new();
        for (i, row) in rows.enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::parse(source, line, e.to_string()))?;
            if row.len() != identities.len() + 1 {
                return Err(Error::parse(
                    source,
                    line,
                    format!(
                        "expected {} fields, found {}",
                        identities.len() + 1,
                        row.len()
                    ),
                ));
            }
            probes.push(row[0].trim().to_string());
            for cell in row.iter().skip(1) {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(source, line, format!("invalid score {cell:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(
                        source,
                        line,
                        format!("non-finite score {cell:?}"),
                    ));
                }
                scores.push(v);
            }
        }
        Self::new(identities, probes, scores).map_err(|e| Error::parse(source, 1, e.to_string()))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    /// Scores are written with Rust's shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe");
        for id in &self.identities {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, p) in self.probes.iter().enumerate() {
            out.push_str(p);
            for s in self.row(i) {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
        out
    }
}

fn unique(what: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::Config(format!("empty {what} id")));
        }
        if !seen.insert(id) {
            return Err(Error::Config(format!("duplicate {what} id {id}")));
        }
    }
    Ok(())
}

/// One CMC per system plus a rank-by-system table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub systems: Vec<String>,
    pub curves: Vec<CmcCurve>,
}

impl ComparisonTable {
    /// `rank,<system>...` with percentages to two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank");
        for s in &self.systems {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        let max_rank = self.curves.first().map_or(0, CmcCurve::max_rank);
        for r in 1..=max_rank {
            let _ = write!(out, "{r}");
            for c in &self.curves {
                let _ = write!(out, ",{:.2}", c.at(r) * 100.0);
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates several systems on the same probe set.
pub fn compare_systems(
    systems: &[(String, ScoreMatrix)],
    truth: &HashMap<String, String>,
    max_rank: usize,
) -> Result<ComparisonTable> {
    let Some((first_name, first)) = systems.first() else {
        return Err(Error::Config("no systems to compare".into()));
    };
    let reference: HashSet<&String> = first.probes.iter().collect();
    for (name, m) in &systems[1..] {
        let probes: HashSet<&String> = m.probes.iter().collect();
        if probes != reference {
            let only_here = probes.difference(&reference).count();
            let only_there = reference.difference(&probes).count();
            return Err(Error::Alignment(format!(
                "system {name} has {only_here} probe(s) not in {first_name} and lacks {only_there} of its probe(s)"
            )));
        }
    }
    let curves = systems
        .iter()
        .map(|(_, m)| m.cmc(truth, max_rank))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable {
        systems: systems.iter().map(|(n, _)| n.clone()).collect(),
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn truth(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn csv_round_trip() {
        let m = ScoreMatrix::new(
            ids(&["A", "B"]),
            ids(&["p1", "p2"]),
            vec![0.5, -0.25, 1e-3, 0.1],
        )
        .unwrap();
        let back = ScoreMatrix::parse_csv(&m.to_csv(), "mem").unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "probe,A,B\np1,0.1,0.2\np2,0.3\n";
        match ScoreMatrix::parse_csv(bad, "s.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = "probe,A\np1,abc\n";
        assert!(matches!(
            ScoreMatrix::parse_csv(bad, "s.csv"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(ScoreMatrix::parse_csv("", "s.csv").is_err());
        assert!(ScoreMatrix::parse_csv("probe,A,A\np,1,2\n", "s.csv").is_err());
    }

    #[test]
    fn single_system_table_is_its_cmc() {
        let m = ScoreMatrix::new(
            ids(&["A", "B", "C"]),
            ids(&["p1", "p2"]),
            vec![0.9, 0.1, 0.0, 0.2, 0.1, 0.8],
        )
        .unwrap();
        let t = truth(&[("p1", "A"), ("p2", "B")]);
        let table = compare_systems(&[("sys".into(), m.clone())], &t, 3).unwrap();
        assert_eq!(table.curves[0], m.cmc(&t, 3).unwrap());
        assert_eq!(table.to_csv(), "rank,sys\n1,50.00\n2,50.00\n3,100.00\n");
    }

    #[test]
    fn misaligned_probe_sets_rejected() {
        let a = ScoreMatrix::new(ids(&["A"]), ids(&["p1"]), vec![0.1]).unwrap();
        let b = ScoreMatrix::new(ids(&["A"]), ids(&["p2"]), vec![0.1]).unwrap();
        let t = truth(&[("p1", "A"), ("p2", "A")]);
        assert!(matches!(
            compare_systems(&[("a".into(), a), ("b".into(), b)], &t, 1),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn unknown_truth_is_closed_set_error() {
        let m = ScoreMatrix::new(ids(&["A"]), ids(&["p1"]), vec![0.1]).unwrap();
        assert!(matches!(
            m.cmc(&truth(&[("p1", "Z")]), 1),
            Err(Error::ClosedSet(_))
        ));
    }
}
