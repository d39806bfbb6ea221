//! Versioned JSON documents for models and networks, plus a DOT view of a
//! model's CSV graph.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::sv::Model;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("expected a {expected} document, found {found}")]
    Kind { expected: String, found: String },
    #[error("unsupported format version {0} (this build reads {FORMAT_VERSION})")]
    Version(u32),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    version: u32,
    body: T,
}

#[derive(Deserialize)]
struct Header {
    kind: String,
    version: u32,
}

pub fn to_document<T: Serialize>(kind: &str, body: &T) -> Result<String, SnapshotError> {
    Ok(serde_json::to_string_pretty(&Envelope { kind: kind.to_string(), version: FORMAT_VERSION, body })?)
}

pub fn from_document<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, SnapshotError> {
    let h: Header = serde_json::from_str(text)?;
    if h.kind != kind {
        return Err(SnapshotError::Kind { expected: kind.to_string(), found: h.kind });
    }
    if h.version != FORMAT_VERSION {
        return Err(SnapshotError::Version(h.version));
    }
    let e: Envelope<T> = serde_json::from_str(text)?;
    Ok(e.body)
}

pub fn save<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<(), SnapshotError> {
    std::fs::write(path, to_document(kind, body)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, SnapshotError> {
    from_document(kind, &std::fs::read_to_string(path)?)
}

pub fn save_model(path: &Path, model: &Model) -> Result<(), SnapshotError> {
    save(path, "model", model)
}

pub fn load_model(path: &Path) -> Result<Model, SnapshotError> {
    load(path, "model")
}

/// Sources point at CSVs, CSVs at their targets; negative sources dashed.
pub fn model_to_dot(model: &Model) -> String {
    let mut s = String::from("digraph model {\n");
    for c in model.csvs() {
        let _ = writeln!(s, "  \"{}\" [shape=box, label=\"{} {:?}\"];", c.id.0, model.label(c.id), c.flag);
        for p in &c.pos {
            let _ = writeln!(s, "  \"{}\" -> \"{}\";", model.label(*p), c.id.0);
        }
        for n in &c.neg {
            let _ = writeln!(s, "  \"{}\" -> \"{}\" [style=dashed];", model.label(*n), c.id.0);
        }
        for t in &c.targets {
            let to = if model.csv(*t).is_some() { t.0.to_string() } else { model.label(*t) };
            let _ = writeln!(s, "  \"{}\" -> \"{to}\" [color=blue];", c.id.0);
        }
    }
    s.push_str("}\n");
    s
}
