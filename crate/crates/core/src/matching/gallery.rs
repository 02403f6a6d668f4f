use std::collections::{HashMap, HashSet};

use super::{cosine, rank_descending};
use crate::backbone::Embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub sample_id: String,
    pub identity_id: String,
    /// Unit norm.
    pub vector: Vec<f32>,
}

/// Enrolled templates in insertion order. Vectors are stored unit-normalized.
#[derive(Debug, Clone, Default)]
pub struct GalleryIndex {
    entries: Vec<GalleryEntry>,
    sample_ids: HashSet<String>,
    /// Distinct identities in order of first enrollment.
    identities: Vec<String>,
    identity_pos: HashMap<String, usize>,
    dim: Option<usize>,
}

impl GalleryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_embeddings<'a>(
        items: impl IntoIterator<Item = (&'a Embedding, &'a str)>,
    ) -> Result<Self> {
        let mut g = Self::new();
        for (e, identity) in items {
            g.insert(e, identity)?;
        }
        Ok(g)
    }

    pub fn insert(&mut self, embedding: &Embedding, identity_id: &str) -> Result<()> {
        if self.sample_ids.contains(&embedding.sample_id) {
            return Err(Error::Config(format!(
                "duplicate gallery sample id {}",
                embedding.sample_id
            )));
        }
        let dim = *self.dim.get_or_insert(embedding.vector.len());
        if embedding.vector.len() != dim {
            return Err(Error::Shape(format!(
                "gallery vectors have length {dim}, {} has {}",
                embedding.sample_id,
                embedding.vector.len()
            )));
        }
        let unit = embedding.to_unit()?;
        self.sample_ids.insert(embedding.sample_id.clone());
        if !self.identity_pos.contains_key(identity_id) {
            self.identity_pos
                .insert(identity_id.to_string(), self.identities.len());
            self.identities.push(identity_id.to_string());
        }
        self.entries.push(GalleryEntry {
            sample_id: embedding.sample_id.clone(),
            identity_id: identity_id.to_string(),
            vector: unit.vector,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[GalleryEntry] {
        &self.entries
    }

    pub fn identities(&self) -> &[String] {
        &self.identities
    }

    pub fn contains_identity(&self, identity: &str) -> bool {
        self.identity_pos.contains_key(identity)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Per-identity maximum cosine against `probe`, in enrollment order.
    pub fn identity_scores(&self, probe: &Embedding) -> Result<Vec<(String, f64)>> {
        if self.is_empty() {
            return Err(Error::Config("gallery is empty".into()));
        }
        let probe = probe.to_unit()?;
        let mut best = vec![f64::NEG_INFINITY; self.identities.len()];
        for e in &self.entries {
            let s = cosine(&probe.vector, &e.vector)?;
            let slot = &mut best[self.identity_pos[&e.identity_id]];
            if s > *slot {
                *slot = s;
            }
        }
        Ok(self.identities.iter().cloned().zip(best).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidates {
    pub probe_id: String,
    /// `(identity, score)` with non-increasing scores, one per enrolled identity.
    pub candidates: Vec<(String, f64)>,
}

impl RankedCandidates {
    /// 1-based rank of `identity`, if enrolled.
    pub fn rank_of(&self, identity: &str) -> Option<usize> {
        self.candidates
            .iter()
            .position(|(id, _)| id == identity)
            .map(|p| p + 1)
    }
}

/// Ranks every enrolled identity by its best template score.
/// Equal scores keep enrollment order.
pub fn identify(probe: &Embedding, gallery: &GalleryIndex) -> Result<RankedCandidates> {
    let mut candidates = gallery.identity_scores(probe)?;
    rank_descending(&mut candidates);
    Ok(RankedCandidates {
        probe_id: probe.sample_id.clone(),
        candidates,
    })
}
