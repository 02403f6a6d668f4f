//! Batch orchestration over manifests: preprocessing, input loading,
//! training, embedding and evaluation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::backbone::{HybridModel, VariantFlags};
use crate::error::{Error, Result};
use crate::imaging::io::{load_image, load_mask, save_png};
use crate::imaging::{preprocess, to_model_input_sized, ModelInput, PreprocessConfig, RawImage};
use crate::matching::io::EmbeddingRecord;
use crate::matching::{CmcCurve, GalleryIndex, ScoreMatrix};
use crate::protocol::SampleRecord;
use crate::training::{
    train, ArcFaceConfig, AugmentationPolicy, EpochLog, TrainConfig, TrainReport, TrainSample,
};

/// Resolves a manifest path relative to the manifest's directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub sample_id: String,
    pub role: crate::protocol::Role,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessBatch {
    /// Records of the written images, paths relative to the output directory.
    pub processed: Vec<SampleRecord>,
    pub excluded: Vec<Exclusion>,
}

/// Runs the imaging pipeline on every record, writing
/// `out_dir/images/<sample_id>.png`. Samples that fail are excluded and the
/// rest continue. If `mask_dir` is given, `<mask_dir>/<sample_id>.png` is
/// used as the segmentation mask when present.
pub fn preprocess_records(
    records: &[SampleRecord],
    base: &Path,
    out_dir: &Path,
    cfg: &PreprocessConfig,
    mask_dir: Option<&Path>,
) -> Result<PreprocessBatch> {
    cfg.validate()?;
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let results: Vec<Result<SampleRecord>> = records
        .par_iter()
        .map(|r| {
            let img = load_image(resolve(base, &r.path))?;
            let mask = match mask_dir.map(|d| d.join(format!("{}.png", r.sample_id))) {
                Some(p) if p.exists() => Some(load_mask(&p)?),
                _ => None,
            };
            let out = preprocess(&img, mask.as_ref(), cfg)?;
            let rel = PathBuf::from("images").join(format!("{}.png", r.sample_id));
            save_png(&out.enhanced, out_dir.join(&rel))?;
            Ok(SampleRecord {
                path: rel,
                ..r.clone()
            })
        })
        .collect();
    let mut batch = PreprocessBatch {
        processed: Vec::new(),
        excluded: Vec::new(),
    };
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(p) => batch.processed.push(p),
            Err(e) => {
                log::warn!("excluding {}: {e}", r.sample_id);
                batch.excluded.push(Exclusion {
                    sample_id: r.sample_id.clone(),
                    role: r.role,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(batch)
}

/// Loads images and converts them to `size`×`size` encoder inputs, in order.
pub fn load_inputs(records: &[SampleRecord], base: &Path, size: usize) -> Result<Vec<ModelInput>> {
    records
        .par_iter()
        .map(|r| {
            let img: RawImage = load_image(resolve(base, &r.path))?;
            Ok(to_model_input_sized(&img, size))
        })
        .collect()
}

/// Class labels by identity in first-appearance order.
pub fn label_records(records: &[SampleRecord]) -> (Vec<String>, Vec<usize>) {
    let mut classes: Vec<String> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    let labels = records
        .iter()
        .map(|r| {
            let id = r.identity_id();
            *pos.entry(id.clone()).or_insert_with(|| {
                classes.push(id);
                classes.len() - 1
            })
        })
        .collect();
    (classes, labels)
}

#[derive(Debug, Clone)]
pub struct TrainJob<'a> {
    pub train_cfg: TrainConfig,
    pub margin: f64,
    pub scale: f64,
    pub policy: AugmentationPolicy,
    pub flags: VariantFlags,
    pub records: &'a [SampleRecord],
    pub base: &'a Path,
}

/// Trains `model` on the job's records; returns the report and the class list.
pub fn train_records(
    model: &mut HybridModel,
    job: &TrainJob<'_>,
    on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<(TrainReport, Vec<String>)> {
    if job.records.is_empty() {
        return Err(Error::Dataset("no training records".into()));
    }
    let (classes, labels) = label_records(job.records);
    let inputs = load_inputs(job.records, job.base, model.config().input_size)?;
    let data: Vec<TrainSample> = inputs
        .into_iter()
        .zip(labels)
        .map(|(input, label)| TrainSample { input, label })
        .collect();
    let arcface = ArcFaceConfig {
        margin: job.margin,
        scale: job.scale,
        num_classes: classes.len(),
    };
    let report = train(
        model,
        &data,
        &job.train_cfg,
        &arcface,
        &job.policy,
        job.flags,
        on_epoch,
    )?;
    Ok((report, classes))
}

/// Inference embeddings for `records`, batched, in record order.
pub fn embed_records(
    model: &HybridModel,
    records: &[SampleRecord],
    base: &Path,
    flags: VariantFlags,
    batch_size: usize,
) -> Result<Vec<EmbeddingRecord>> {
    let size = model.config().input_size;
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(batch_size.max(1)) {
        let inputs = load_inputs(chunk, base, size)?;
        let refs: Vec<&ModelInput> = inputs.iter().collect();
        let ids: Vec<&str> = chunk.iter().map(|r| r.sample_id.as_str()).collect();
        let embs = model.encoder.embed(&refs, &ids, flags)?;
        for (r, e) in chunk.iter().zip(embs) {
            if !e.is_finite() {
                return Err(Error::Degenerate(format!(
                    "non-finite embedding for {}",
                    r.sample_id
                )));
            }
            out.push(EmbeddingRecord {
                id: r.sample_id.clone(),
                identity: r.identity_id(),
                vector: e.vector,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub scores: ScoreMatrix,
    pub cmc: CmcCurve,
}

/// Closed-set evaluation of embedded probes against an embedded gallery.
/// Ranks run to `max_rank`, capped at the number of enrolled identities.
pub fn evaluate(
    gallery: &[EmbeddingRecord],
    probes: &[EmbeddingRecord],
    max_rank: usize,
) -> Result<Evaluation> {
    let gallery_embs: Vec<_> = gallery.iter().map(EmbeddingRecord::embedding).collect();
    let index = GalleryIndex::from_embeddings(
        gallery_embs
            .iter()
            .zip(gallery.iter().map(|r| r.identity.as_str())),
    )?;
    let probe_embs: Vec<_> = probes.iter().map(EmbeddingRecord::embedding).collect();
    let scores = ScoreMatrix::from_embeddings(&probe_embs, &index)?;
    let truth: HashMap<String, String> = probes
        .iter()
        .map(|p| (p.id.clone(), p.identity.clone()))
        .collect();
    let rank = max_rank.min(index.identities().len());
    let cmc = scores.cmc(&truth, rank)?;
    Ok(Evaluation { scores, cmc })
}
