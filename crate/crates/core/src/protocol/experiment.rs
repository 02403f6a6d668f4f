use std::collections::HashSet;

use super::manifest::{Role, SampleRecord, Subset};
use crate::backbone::VariantFlags;
use crate::error::{Error, Result};

/// Conjunction of optional role and subset constraints.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecordFilter {
    pub roles: Option<Vec<Role>>,
    pub subsets: Option<Vec<Subset>>,
}

impl RecordFilter {
    pub fn subsets(subsets: &[Subset]) -> Self {
        Self {
            roles: None,
            subsets: Some(subsets.to_vec()),
        }
    }

    pub fn roles(roles: &[Role]) -> Self {
        Self {
            roles: Some(roles.to_vec()),
            subsets: None,
        }
    }

    pub fn matches(&self, r: &SampleRecord) -> bool {
        let role_ok = self.roles.as_ref().is_none_or(|rs| rs.contains(&r.role));
        let subset_ok = self
            .subsets
            .as_ref()
            .is_none_or(|ss| r.subset.is_some_and(|s| ss.contains(&s)));
        role_ok && subset_ok
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(rs) = &self.roles {
            parts.push(format!(
                "role in [{}]",
                rs.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(",")
            ));
        }
        if let Some(ss) = &self.subsets {
            parts.push(format!(
                "subset in [{}]",
                ss.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
            ));
        }
        if parts.is_empty() {
            "all".into()
        } else {
            parts.join(" and ")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub gallery: RecordFilter,
    pub probes: RecordFilter,
    pub train: RecordFilter,
    /// Ranks `1..=max_rank` are reported.
    pub max_rank: usize,
    pub closed_set: bool,
}

/// Records selected by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub gallery: Vec<SampleRecord>,
    pub probes: Vec<SampleRecord>,
    pub train: Vec<SampleRecord>,
}

impl Split {
    pub fn gallery_identities(&self) -> Vec<String> {
        distinct(self.gallery.iter().map(SampleRecord::identity_id))
    }

    pub fn probe_identities(&self) -> Vec<String> {
        distinct(self.probes.iter().map(SampleRecord::identity_id))
    }

    /// Distinct training identities in first-appearance order; index = class label.
    pub fn train_classes(&self) -> Vec<String> {
        distinct(self.train.iter().map(SampleRecord::identity_id))
    }
}

fn distinct(ids: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = HashSet::new();
    ids.filter(|id| seen.insert(id.clone())).collect()
}

impl ExperimentSpec {
    /// Applies the filters and enforces the experiment's invariants.
    pub fn split(&self, records: &[SampleRecord]) -> Result<Split> {
        let pick = |f: &RecordFilter| {
            records
                .iter()
                .filter(|r| f.matches(r))
                .cloned()
                .collect::<Vec<_>>()
        };
        let split = Split {
            gallery: pick(&self.gallery),
            probes: pick(&self.probes),
            train: pick(&self.train),
        };
        let gallery_ids: HashSet<&str> =
            split.gallery.iter().map(|r| r.sample_id.as_str()).collect();
        if let Some(r) = split
            .probes
            .iter()
            .find(|r| gallery_ids.contains(r.sample_id.as_str()))
        {
            return Err(Error::Config(format!(
                "{}: sample {} selected as both gallery and probe",
                self.name, r.sample_id
            )));
        }
        if self.closed_set {
            let enrolled: HashSet<String> = split.gallery_identities().into_iter().collect();
            let missing: Vec<String> = split
                .probe_identities()
                .into_iter()
                .filter(|id| !enrolled.contains(id))
                .collect();
            if !missing.is_empty() {
                return Err(Error::ClosedSet(missing));
            }
        }
        Ok(split)
    }
}

fn require(records: &[SampleRecord], subsets: &[Subset], what: &str) -> Result<()> {
    if records
        .iter()
        .any(|r| r.subset.is_some_and(|s| subsets.contains(&s)))
    {
        Ok(())
    } else {
        Err(Error::Config(format!("manifest has no {what} records")))
    }
}

/// Rolled gallery, latent probes, latent training pool.
pub fn experiment_1(records: &[SampleRecord]) -> Result<ExperimentSpec> {
    require(records, &[Subset::IiitdRolled], "iiitd_rolled")?;
    require(records, &[Subset::IiitdLatent], "iiitd_latent")?;
    let spec = ExperimentSpec {
        name: "experiment_1".into(),
        gallery: RecordFilter::subsets(&[Subset::IiitdRolled]),
        probes: RecordFilter::subsets(&[Subset::IiitdLatent]),
        train: RecordFilter::subsets(&[Subset::IiitdLatent]),
        max_rank: 10,
        closed_set: true,
    };
    spec.split(records)?;
    Ok(spec)
}

const EXP2_PROBES: [Subset; 4] = [Subset::Smt, Subset::LWall, Subset::LIpad, Subset::LAlum];

/// Cross-dataset: train on every IIITD record, R_opt gallery, the four
/// latent/smartphone subsets as probes. R_cap is used on neither side.
pub fn experiment_2(records: &[SampleRecord]) -> Result<ExperimentSpec> {
    require(records, &[Subset::ROpt], "R_opt")?;
    require(records, &EXP2_PROBES, "Smt/L_wall/L_ipad/L_alum")?;
    let spec = ExperimentSpec {
        name: "experiment_2".into(),
        gallery: RecordFilter::subsets(&[Subset::ROpt]),
        probes: RecordFilter::subsets(&EXP2_PROBES),
        train: RecordFilter::subsets(&[Subset::IiitdLatent, Subset::IiitdRolled]),
        max_rank: 10,
        closed_set: true,
    };
    spec.split(records)?;
    Ok(spec)
}

/// Uses the manifest's own role column: gallery and train records form the
/// training pool, probes are held out.
pub fn roles_experiment(records: &[SampleRecord]) -> Result<ExperimentSpec> {
    if !records.iter().any(|r| r.role == Role::Gallery) {
        return Err(Error::Config("manifest has no gallery records".into()));
    }
    let spec = ExperimentSpec {
        name: "roles".into(),
        gallery: RecordFilter::roles(&[Role::Gallery]),
        probes: RecordFilter::roles(&[Role::Probe]),
        train: RecordFilter::roles(&[Role::Gallery, Role::Train]),
        max_rank: 10,
        closed_set: true,
    };
    spec.split(records)?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationRow {
    pub name: &'static str,
    pub use_attention: bool,
    pub use_transformer: bool,
}

impl AblationRow {
    pub fn flags(&self) -> VariantFlags {
        VariantFlags {
            use_attention: self.use_attention,
            use_transformer: self.use_transformer,
        }
    }
}

pub fn ablation_grid() -> [AblationRow; 3] {
    [
        AblationRow {
            name: "cnn",
            use_attention: false,
            use_transformer: false,
        },
        AblationRow {
            name: "cnn+sa",
            use_attention: true,
            use_transformer: false,
        },
        AblationRow {
            name: "full",
            use_attention: true,
            use_transformer: true,
        },
    ]
}
