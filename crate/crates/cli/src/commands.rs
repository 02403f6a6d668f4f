use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use latentprint::backbone::{
    save_checkpoint, CheckpointMeta, DType, HybridEncoderConfig, HybridModel, VariantFlags,
};
use latentprint::config::{load_config, TrainSettings};
use latentprint::imaging::PreprocessConfig;
use latentprint::matching::io::{load_jsonl, write_jsonl, EmbeddingRecord};
use latentprint::matching::{compare_systems, identify, GalleryIndex, ScoreMatrix};
use latentprint::pipeline::{self, TrainJob};
use latentprint::protocol::{
    ablation_grid, experiment_1, experiment_2, load_manifest, roles_experiment, write_manifest,
    ExperimentSpec, SampleRecord, Split,
};
use latentprint::synth::{write_corpus, CorpusSpec};
use latentprint::training::{AugmentationPolicy, EpochLog};
use serde_json::json;

use crate::args::*;
use crate::output::{count_excluded_probes, ensure_dir, excluded_csv, write, write_run_json};

const SEED_ENV: &str = "LPF_SEED";

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => preprocess(&a),
        Command::Train(a) => train(&a),
        Command::Embed(a) => embed(&a),
        Command::Identify(a) => identify_cmd(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Compare(a) => compare(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn manifest_base(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_records(manifest: &Path) -> Result<Vec<SampleRecord>> {
    Ok(load_manifest(manifest)?)
}

fn experiment(name: ExperimentName, records: &[SampleRecord]) -> Result<(ExperimentSpec, Split)> {
    let spec = match name {
        ExperimentName::Roles => roles_experiment(records)?,
        ExperimentName::Experiment1 => experiment_1(records)?,
        ExperimentName::Experiment2 => experiment_2(records)?,
    };
    let split = spec.split(records)?;
    Ok((spec, split))
}

fn split_summary(spec: &ExperimentSpec, split: &Split) -> serde_json::Value {
    json!({
        "name": spec.name,
        "gallery_filter": spec.gallery.describe(),
        "probe_filter": spec.probes.describe(),
        "train_filter": spec.train.describe(),
        "gallery": split.gallery.len(),
        "probes": split.probes.len(),
        "train": split.train.len(),
        "gallery_identities": split.gallery_identities().len(),
    })
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("{SEED_ENV} must be an unsigned integer, got {v:?}")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{SEED_ENV}: {e}")),
    }
}

fn train_settings(config: Option<&Path>) -> Result<TrainSettings> {
    let mut s: TrainSettings = match config {
        Some(p) => load_config(p)?,
        None => TrainSettings::default(),
    };
    if let Some(seed) = seed_override()? {
        s.seed = seed;
    }
    Ok(s)
}

fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let cfg: PreprocessConfig = match &a.config {
        Some(p) => load_config(p)?,
        None => PreprocessConfig::default(),
    };
    cfg.validate()?;
    let records = load_records(&a.manifest)?;
    if records.is_empty() {
        bail!("no samples in {}", a.manifest.display());
    }
    ensure_dir(&a.out_dir)?;
    let batch = pipeline::preprocess_records(
        &records,
        &manifest_base(&a.manifest),
        &a.out_dir,
        &cfg,
        a.mask_dir.as_deref(),
    )?;
    write(
        &a.out_dir.join("excluded.csv"),
        excluded_csv(&batch.excluded)?,
    )?;
    if batch.processed.is_empty() {
        bail!(
            "no samples were processed successfully ({} excluded)",
            batch.excluded.len()
        );
    }
    write_manifest(a.out_dir.join("manifest.csv"), &batch.processed)?;
    write_run_json(
        &a.out_dir,
        "preprocess",
        a,
        json!({ "config": cfg, "processed": batch.processed.len(), "excluded": batch.excluded.len() }),
    )?;
    eprintln!(
        "processed {} sample(s), excluded {}",
        batch.processed.len(),
        batch.excluded.len()
    );
    Ok(())
}

fn flags_for(name: AblationName) -> VariantFlags {
    match name {
        AblationName::Cnn => VariantFlags::CNN_ONLY,
        AblationName::CnnSa => VariantFlags::CNN_ATTENTION,
        AblationName::Full => VariantFlags::FULL,
    }
}

struct Trained {
    model: HybridModel,
    classes: Vec<String>,
    epochs: Vec<EpochLog>,
}

/// Trains one model and writes `checkpoint/`, `train_log.csv` and
/// `classes.json` under `out_dir`.
fn train_one(
    settings: &TrainSettings,
    flags: VariantFlags,
    train_records: &[SampleRecord],
    base: &Path,
    init: Option<&Path>,
    out_dir: &Path,
) -> Result<Trained> {
    ensure_dir(out_dir)?;
    let mut model = match init {
        Some(dir) => HybridModel::from_checkpoint(dir)?.0,
        None => HybridModel::new(
            &HybridEncoderConfig::for_variant(settings.variant),
            settings.seed,
            DType::F32,
        )?,
    };
    let log_path = out_dir.join("train_log.csv");
    let fresh = !log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    if fresh {
        writeln!(log, "{}", EpochLog::CSV_HEADER)?;
    }
    let job = TrainJob {
        train_cfg: settings.train_config(),
        margin: settings.margin,
        scale: settings.scale,
        policy: AugmentationPolicy::default(),
        flags,
        records: train_records,
        base,
    };
    let (report, classes) = pipeline::train_records(&mut model, &job, |e| {
        writeln!(log, "{}", e.csv_line())
            .map_err(|err| latentprint::Error::Dataset(format!("training log: {err}")))?;
        Ok(())
    })?;
    let meta = CheckpointMeta {
        config: model.config().clone(),
        variant: model.config().variant,
        flags,
        seed: settings.seed,
        step: report.steps,
        num_classes: Some(classes.len()),
    };
    save_checkpoint(&model.store, out_dir.join("checkpoint"), &meta)?;
    let mut classes_json = serde_json::to_string_pretty(&classes)?;
    classes_json.push('\n');
    write(&out_dir.join("classes.json"), classes_json)?;
    Ok(Trained {
        model,
        classes,
        epochs: report.epochs,
    })
}

fn train(a: &TrainArgs) -> Result<()> {
    let settings = train_settings(a.config.as_deref())?;
    let records = load_records(&a.manifest)?;
    let (spec, split) = experiment(a.experiment, &records)?;
    let t = train_one(
        &settings,
        flags_for(a.ablation),
        &split.train,
        &manifest_base(&a.manifest),
        a.init_checkpoint.as_deref(),
        &a.out_dir,
    )?;
    write_run_json(
        &a.out_dir,
        "train",
        a,
        json!({
            "settings": settings,
            "encoder": t.model.config(),
            "augmentation": AugmentationPolicy::default(),
            "experiment": split_summary(&spec, &split),
            "classes": t.classes.len(),
        }),
    )?;
    if let (Some(first), Some(last)) = (t.epochs.first(), t.epochs.last()) {
        eprintln!(
            "trained {} epoch(s): loss {:.4} -> {:.4}",
            t.epochs.len(),
            first.mean_loss,
            last.mean_loss
        );
    }
    Ok(())
}

fn embed(a: &EmbedArgs) -> Result<()> {
    let (model, meta) = HybridModel::from_checkpoint(&a.checkpoint)?;
    let records = load_records(&a.manifest)?;
    let (spec, split) = experiment(a.experiment, &records)?;
    let base = manifest_base(&a.manifest);
    ensure_dir(&a.out_dir)?;
    let gallery = pipeline::embed_records(&model, &split.gallery, &base, meta.flags, a.batch_size)?;
    let probes = pipeline::embed_records(&model, &split.probes, &base, meta.flags, a.batch_size)?;
    write_jsonl(a.out_dir.join("gallery.jsonl"), &gallery)?;
    write_jsonl(a.out_dir.join("probes.jsonl"), &probes)?;
    write_run_json(
        &a.out_dir,
        "embed",
        a,
        json!({ "checkpoint": meta, "experiment": split_summary(&spec, &split) }),
    )?;
    Ok(())
}

fn gallery_index(records: &[EmbeddingRecord]) -> Result<GalleryIndex> {
    let embs: Vec<_> = records.iter().map(EmbeddingRecord::embedding).collect();
    Ok(GalleryIndex::from_embeddings(
        embs.iter().zip(records.iter().map(|r| r.identity.as_str())),
    )?)
}

fn identify_cmd(a: &IdentifyArgs) -> Result<()> {
    let gallery = gallery_index(&load_jsonl(&a.gallery)?)?;
    let probes = load_jsonl(&a.probes)?;
    ensure_dir(&a.out_dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["probe_id", "rank", "identity", "score"])?;
    for p in &probes {
        let ranked = identify(&p.embedding(), &gallery)?;
        for (i, (id, score)) in ranked.candidates.iter().take(a.top).enumerate() {
            w.write_record([
                p.id.as_str(),
                &(i + 1).to_string(),
                id.as_str(),
                &format!("{score:.6}"),
            ])?;
        }
    }
    write(&a.out_dir.join("candidates.csv"), w.into_inner()?)?;
    write_run_json(
        &a.out_dir,
        "identify",
        a,
        json!({ "probes": probes.len(), "identities": gallery.identities().len() }),
    )?;
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let gallery = load_jsonl(&a.gallery)?;
    let probes = load_jsonl(&a.probes)?;
    let excluded = a
        .excluded
        .as_deref()
        .map(count_excluded_probes)
        .transpose()?
        .unwrap_or(0);
    let ev = pipeline::evaluate(&gallery, &probes, a.max_rank)?;
    ensure_dir(&a.out_dir)?;
    write(&a.out_dir.join("cmc.csv"), ev.cmc.to_csv())?;
    write(&a.out_dir.join("scores.csv"), ev.scores.to_csv())?;
    let truth: HashMap<String, String> = probes
        .iter()
        .map(|p| (p.id.clone(), p.identity.clone()))
        .collect();
    let table = compare_systems(
        &[(a.system_name.clone(), ev.scores.clone())],
        &truth,
        ev.cmc.max_rank(),
    )?;
    write(&a.out_dir.join("rank_table.csv"), table.to_csv())?;
    let summary = json!({
        "probes_evaluated": ev.cmc.num_probes(),
        "probes_excluded": excluded,
        "gallery_templates": gallery.len(),
        "gallery_identities": ev.scores.identities.len(),
        "max_rank": ev.cmc.max_rank(),
        "rank1_percent": round2(ev.cmc.at(1) * 100.0),
        "rank_max_percent": round2(ev.cmc.at(ev.cmc.max_rank()) * 100.0),
    });
    write(
        &a.out_dir.join("summary.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary)?),
    )?;
    write_run_json(&a.out_dir, "evaluate", a, summary)?;
    eprintln!(
        "Rank-1 {:.2}%, Rank-{} {:.2}% over {} probe(s), {} excluded",
        ev.cmc.at(1) * 100.0,
        ev.cmc.max_rank(),
        ev.cmc.at(ev.cmc.max_rank()) * 100.0,
        ev.cmc.num_probes(),
        excluded
    );
    Ok(())
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn compare(a: &CompareArgs) -> Result<()> {
    let records = load_records(&a.manifest)?;
    let truth: HashMap<String, String> = records
        .iter()
        .map(|r| (r.sample_id.clone(), r.identity_id()))
        .collect();
    let systems = a
        .scores
        .iter()
        .map(|(name, path)| Ok((name.clone(), ScoreMatrix::load_csv(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let table = compare_systems(&systems, &truth, a.max_rank)?;
    ensure_dir(&a.out_dir)?;
    for (name, curve) in table.systems.iter().zip(&table.curves) {
        write(
            &a.out_dir.join(format!("cmc_{}.csv", sanitize(name))),
            curve.to_csv(),
        )?;
    }
    write(&a.out_dir.join("rank_table.csv"), table.to_csv())?;
    write_run_json(
        &a.out_dir,
        "compare",
        a,
        json!({ "systems": table.systems }),
    )?;
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let settings = train_settings(a.config.as_deref())?;
    let records = load_records(&a.manifest)?;
    let (spec, split) = experiment(a.experiment, &records)?;
    let base = manifest_base(&a.manifest);
    ensure_dir(&a.out_dir)?;
    let rank = a.max_rank.min(split.gallery_identities().len());
    let mut rows = Vec::new();
    for row in ablation_grid() {
        let dir = a.out_dir.join(sanitize(row.name));
        let t = train_one(&settings, row.flags(), &split.train, &base, None, &dir)?;
        let gallery = pipeline::embed_records(&t.model, &split.gallery, &base, row.flags(), 16)?;
        let probes = pipeline::embed_records(&t.model, &split.probes, &base, row.flags(), 16)?;
        let ev = pipeline::evaluate(&gallery, &probes, rank)?;
        write(&dir.join("cmc.csv"), ev.cmc.to_csv())?;
        eprintln!(
            "{}: Rank-1 {:.2}%, Rank-{rank} {:.2}%",
            row.name,
            ev.cmc.at(1) * 100.0,
            ev.cmc.at(rank) * 100.0
        );
        rows.push((row, ev.cmc.at(1), ev.cmc.at(rank)));
    }
    let yes = |b: bool| if b { "Yes" } else { "No" };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant".to_string(),
        "cnn".into(),
        "spatial_attention".into(),
        "transformer".into(),
        "rank1_accuracy_percent".into(),
        format!("rank{rank}_accuracy_percent"),
    ])?;
    for (row, r1, rn) in &rows {
        w.write_record([
            row.name,
            "Yes",
            yes(row.use_attention),
            yes(row.use_transformer),
            &format!("{:.2}", r1 * 100.0),
            &format!("{:.2}", rn * 100.0),
        ])?;
    }
    write(&a.out_dir.join("ablation.csv"), w.into_inner()?)?;
    write_run_json(
        &a.out_dir,
        "ablate",
        a,
        json!({ "settings": settings, "experiment": split_summary(&spec, &split), "rank": rank }),
    )?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = CorpusSpec {
        identities: a.identities,
        train_per_identity: a.train_per_identity,
        probes_per_identity: a.probes_per_identity,
        image_size: a.image_size,
        noise_sd: a.noise_sd,
        seed: a.seed,
    };
    let records = write_corpus(&a.out_dir, &spec)?;
    write_run_json(&a.out_dir, "synth", a, json!({ "records": records.len() }))?;
    Ok(())
}
