//! Dataset manifests, experiment definitions and the ablation grid.

mod experiment;
mod manifest;

pub use experiment::{
    ablation_grid, experiment_1, experiment_2, roles_experiment, AblationRow, ExperimentSpec,
    RecordFilter, Split,
};
pub use manifest::{
    load_manifest, manifest_to_csv, parse_manifest, write_manifest, Role, SampleRecord, Subset,
    MANIFEST_HEADER,
};
