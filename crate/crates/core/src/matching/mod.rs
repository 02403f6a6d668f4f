//! Closed-set identification: cosine scoring against an enrolled gallery,
//! identity ranking, Rank-N accuracy and CMC curves.

mod cmc;
mod gallery;
pub mod io;
mod scores;

pub use cmc::{cmc, cmc_from_positions, CmcCurve};
pub use gallery::{identify, GalleryEntry, GalleryIndex, RankedCandidates};
pub use scores::{compare_systems, ComparisonTable, ScoreMatrix};

use crate::backbone::Embedding;
use crate::error::{Error, Result};

/// `a·b / (‖a‖‖b‖)`, clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "vector lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::Degenerate(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    cosine(&a.vector, &b.vector)
}

/// Sorts `(identity, score)` pairs by descending score. The sort is stable,
/// so equal scores keep their input order.
pub(crate) fn rank_descending(scores: &mut [(String, f64)]) {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
}
