use std::fmt::Write as _;

use super::gallery::{identify, GalleryIndex};
use crate::backbone::Embedding;
use crate::error::{Error, Result};

/// Cumulative identification accuracy for ranks `1..=max_rank`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    /// `accuracy[n - 1]` is the Rank-n accuracy in [0, 1].
    accuracy: Vec<f64>,
    num_probes: usize,
}

impl CmcCurve {
    pub fn max_rank(&self) -> usize {
        self.accuracy.len()
    }

    pub fn num_probes(&self) -> usize {
        self.num_probes
    }

    /// Rank-n accuracy in [0, 1]. Panics if `n` is outside `1..=max_rank`.
    pub fn at(&self, rank: usize) -> f64 {
        assert!(
            rank >= 1 && rank <= self.accuracy.len(),
            "rank {rank} out of range"
        );
        self.accuracy[rank - 1]
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracy
    }

    /// `rank,accuracy_percent` with two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,accuracy_percent\n");
        for (i, a) in self.accuracy.iter().enumerate() {
            let _ = writeln!(out, "{},{:.2}", i + 1, a * 100.0);
        }
        out
    }
}

/// Builds a curve from the 1-based rank at which each probe's true identity
/// was found.
pub fn cmc_from_positions(positions: &[usize], max_rank: usize) -> Result<CmcCurve> {
    if positions.is_empty() {
        return Err(Error::Config("no probes to evaluate".into()));
    }
    if max_rank == 0 {
        return Err(Error::Config("max_rank must be at least 1".into()));
    }
    let mut hits = vec![0usize; max_rank];
    for &p in positions {
        if p == 0 {
            return Err(Error::Config("ranks are 1-based".into()));
        }
        if p <= max_rank {
            hits[p - 1] += 1;
        }
    }
    let n = positions.len() as f64;
    let accuracy = hits
        .iter()
        .scan(0usize, |acc, &h| {
            *acc += h;
            Some(*acc as f64 / n)
        })
        .collect();
    Ok(CmcCurve {
        accuracy,
        num_probes: positions.len(),
    })
}

/// Closed-set CMC of `probes` against `gallery`.
pub fn cmc(
    probes: &[(Embedding, String)],
    gallery: &GalleryIndex,
    max_rank: usize,
) -> Result<CmcCurve> {
    let missing: Vec<String> = probes
        .iter()
        .filter(|(_, id)| !gallery.contains_identity(id))
        .map(|(e, _)| e.sample_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::ClosedSet(missing));
    }
    let n_ids = gallery.identities().len();
    if max_rank > n_ids {
        return Err(Error::Config(format!(
            "max_rank {max_rank} exceeds the {n_ids} enrolled identities"
        )));
    }
    let positions = probes
        .iter()
        .map(|(e, id)| {
            let ranked = identify(e, gallery)?;
            Ok(ranked.rank_of(id).expect("closed set checked above"))
        })
        .collect::<Result<Vec<_>>>()?;
    cmc_from_positions(&positions, max_rank)
}
