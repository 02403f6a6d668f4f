use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use latentprint::pipeline::Exclusion;
use latentprint::protocol::Role;
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// `run.json`: the command name, its arguments and the resolved settings.
pub fn write_run_json(
    out_dir: &Path,
    command: &str,
    args: &impl Serialize,
    resolved: serde_json::Value,
) -> Result<()> {
    let echo = serde_json::json!({
        "command": command,
        "args": args,
        "resolved": resolved,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut text = serde_json::to_string_pretty(&echo)?;
    text.push('\n');
    write(&out_dir.join("run.json"), text)
}

pub fn excluded_csv(excluded: &[Exclusion]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "role", "reason"])?;
    for e in excluded {
        w.write_record([e.sample_id.as_str(), e.role.as_str(), e.reason.as_str()])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Number of probe rows in an `excluded.csv`.
pub fn count_excluded_probes(path: &Path) -> Result<usize> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut n = 0;
    for row in rdr.records() {
        let row = row.with_context(|| format!("parsing {}", path.display()))?;
        let role: Role = row
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|e: String| anyhow::anyhow!("{}: {e}", path.display()))?;
        if role == Role::Probe {
            n += 1;
        }
    }
    Ok(n)
}
