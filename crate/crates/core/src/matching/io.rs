//! JSON-lines embedding files: one `{"id", "identity", "vector"}` per line.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::Embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub id: String,
    pub identity: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn embedding(&self) -> Embedding {
        Embedding::new(self.id.clone(), self.vector.clone())
    }
}

pub fn parse_jsonl(text: &str, source: &str) -> Result<Vec<EmbeddingRecord>> {
    let mut out: Vec<EmbeddingRecord> = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
        if rec.vector.is_empty() || rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(
                source,
                i + 1,
                "vector must be nonempty and finite",
            ));
        }
        let d = *dim.get_or_insert(rec.vector.len());
        if rec.vector.len() != d {
            return Err(Error::parse(
                source,
                i + 1,
                format!("vector length {} differs from {d}", rec.vector.len()),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn to_jsonl(records: &[EmbeddingRecord]) -> Result<String> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<()> {
    let path = path.as_ref();
    let text = to_jsonl(records)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
