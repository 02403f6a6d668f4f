use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "lpf",
    version,
    about = "Latent fingerprint preprocessing, training and identification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance every image in a manifest and write a manifest of the results.
    Preprocess(PreprocessArgs),
    /// Train an encoder on an experiment's training records.
    Train(TrainArgs),
    /// Embed an experiment's gallery and probe records with a checkpoint.
    Embed(EmbedArgs),
    /// Rank gallery identities for every probe.
    Identify(IdentifyArgs),
    /// Closed-set CMC evaluation of embedded probes against a gallery.
    Evaluate(EvaluateArgs),
    /// Rank-N comparison of several systems from score matrices.
    Compare(CompareArgs),
    /// Train and evaluate the three encoder variants.
    Ablate(AblateArgs),
    /// Write a synthetic grating corpus and its manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    /// Use the manifest's role column.
    Roles,
    #[value(name = "experiment_1")]
    Experiment1,
    #[value(name = "experiment_2")]
    Experiment2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum AblationName {
    #[value(name = "cnn")]
    #[serde(rename = "cnn")]
    Cnn,
    #[value(name = "cnn+sa")]
    #[serde(rename = "cnn+sa")]
    CnnSa,
    #[value(name = "full")]
    #[serde(rename = "full")]
    Full,
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Preprocessing config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of `<sample_id>.png` foreground masks.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "roles")]
    pub experiment: ExperimentName,
    #[arg(long, value_enum, default_value = "full")]
    pub ablation: AblationName,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "roles")]
    pub experiment: ExperimentName,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Candidates listed per probe.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub max_rank: usize,
    /// `excluded.csv` from preprocessing; excluded probes are counted.
    #[arg(long)]
    pub excluded: Option<PathBuf>,
    /// Column label for this system in the rank table.
    #[arg(long, default_value = "proposed")]
    pub system_name: String,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// `name=path` pairs, one per system.
    #[arg(long = "scores", required = true, value_parser = parse_named_path)]
    pub scores: Vec<(String, PathBuf)>,
    /// Manifest giving each probe's identity.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub max_rank: usize,
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "roles")]
    pub experiment: ExperimentName,
    #[arg(long, default_value_t = 10)]
    pub max_rank: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub identities: usize,
    #[arg(long, default_value_t = 20)]
    pub train_per_identity: usize,
    #[arg(long, default_value_t = 1)]
    pub probes_per_identity: usize,
    #[arg(long, default_value_t = 128)]
    pub image_size: usize,
    #[arg(long, default_value_t = 6.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}
