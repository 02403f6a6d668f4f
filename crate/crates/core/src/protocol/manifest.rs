use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 6] = [
    "sample_id",
    "path",
    "subject_id",
    "finger_id",
    "role",
    "subset",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Gallery,
    Probe,
    Train,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Gallery => "gallery",
            Role::Probe => "probe",
            Role::Train => "train",
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gallery" => Ok(Role::Gallery),
            "probe" => Ok(Role::Probe),
            "train" => Ok(Role::Train),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Source collection of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    ROpt,
    RCap,
    Smt,
    LWall,
    LIpad,
    LAlum,
    IiitdLatent,
    IiitdRolled,
}

impl Subset {
    pub const ALL: [Subset; 8] = [
        Subset::ROpt,
        Subset::RCap,
        Subset::Smt,
        Subset::LWall,
        Subset::LIpad,
        Subset::LAlum,
        Subset::IiitdLatent,
        Subset::IiitdRolled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::ROpt => "R_opt",
            Subset::RCap => "R_cap",
            Subset::Smt => "Smt",
            Subset::LWall => "L_wall",
            Subset::LIpad => "L_ipad",
            Subset::LAlum => "L_alum",
            Subset::IiitdLatent => "iiitd_latent",
            Subset::IiitdRolled => "iiitd_rolled",
        }
    }

    pub fn is_iiitd(self) -> bool {
        matches!(self, Subset::IiitdLatent | Subset::IiitdRolled)
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Subset::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown subset {s:?}"))
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub path: PathBuf,
    pub subject_id: String,
    pub finger_id: String,
    pub role: Role,
    pub subset: Option<Subset>,
}

impl SampleRecord {
    /// `subject_id/finger_id`.
    pub fn identity_id(&self) -> String {
        format!("{}/{}", self.subject_id, self.finger_id)
    }
}

/// Parses manifest CSV text. `source` names the file in error messages.
pub fn parse_manifest(text: &str, source: &str) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| Error::parse(source, 1, e.to_string()))?,
        None => return Err(Error::parse(source, 1, "missing header")),
    };
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header != MANIFEST_HEADER {
        return Err(Error::parse(
            source,
            1,
            format!("header must be {}", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(source, line, e.to_string()))?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(Error::parse(
                source,
                line,
                format!(
                    "expected {} fields, found {}",
                    MANIFEST_HEADER.len(),
                    row.len()
                ),
            ));
        }
        let field = |k: usize| row[k].trim();
        for (k, name) in MANIFEST_HEADER.iter().enumerate().take(5) {
            if field(k).is_empty() {
                return Err(Error::parse(source, line, format!("empty {name}")));
            }
        }
        let role = field(4)
            .parse::<Role>()
            .map_err(|m| Error::parse(source, line, m))?;
        let subset = match field(5) {
            "" => None,
            s => Some(
                s.parse::<Subset>()
                    .map_err(|m| Error::parse(source, line, m))?,
            ),
        };
        let sample_id = field(0).to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(Error::parse(
                source,
                line,
                format!("duplicate sample_id {sample_id}"),
            ));
        }
        out.push(SampleRecord {
            sample_id,
            path: PathBuf::from(field(1)),
            subject_id: field(2).to_string(),
            finger_id: field(3).to_string(),
            role,
            subset,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn manifest_to_csv(records: &[SampleRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Dataset(e.to_string());
    w.write_record(MANIFEST_HEADER).map_err(io)?;
    for r in records {
        let path = r
            .path
            .to_str()
            .ok_or_else(|| Error::Dataset(format!("non-UTF-8 path for {}", r.sample_id)))?;
        w.write_record([
            r.sample_id.as_str(),
            path,
            r.subject_id.as_str(),
            r.finger_id.as_str(),
            r.role.as_str(),
            r.subset.map_or("", Subset::as_str),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Dataset(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("manifest fields are UTF-8"))
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, manifest_to_csv(records)?).map_err(|e| Error::io(path, e))
}
