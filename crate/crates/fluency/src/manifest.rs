//! JSON-lines recording manifest.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fluency_core::targets::RatingPair;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: duplicate recording_id {id:?}")]
    DuplicateRecordingId { line: usize, id: String },
    #[error("line {line}: embedding file {} not found", path.display())]
    MissingEmbeddingFile { line: usize, path: PathBuf },
}

/// One manifest row. Paths are kept as written; relative ones are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub recording_id: String,
    pub speaker_id: String,
    pub text_id: String,
    pub duration_s: f64,
    pub rater1: f64,
    pub rater2: f64,
    pub embedding_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_path: Option<String>,
}

impl ManifestRecord {
    pub fn ratings(&self) -> RatingPair {
        RatingPair {
            rater1: self.rater1,
            rater2: self.rater2,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.recording_id.is_empty() {
            return Err("empty recording_id".into());
        }
        if self.speaker_id.is_empty() {
            return Err("empty speaker_id".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(format!("duration_s must be positive, got {}", self.duration_s));
        }
        RatingPair::new(self.rater1, self.rater2).map_err(|e| e.to_string())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn resolve(&self, path: &str) -> PathBuf {
        self.dir.join(path)
    }

    pub fn embedding_path(&self, record: &ManifestRecord) -> PathBuf {
        self.resolve(&record.embedding_path)
    }

    pub fn alignment_path(&self, record: &ManifestRecord) -> Option<PathBuf> {
        record.alignment_path.as_deref().map(|p| self.resolve(p))
    }
}

/// Parses and validates rows without touching the filesystem. Blank lines are
/// skipped; line numbers are 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, ManifestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(raw).map_err(|e| ManifestError::ParseError {
            line,
            message: e.to_string(),
        })?;
        rec.validate()
            .map_err(|message| ManifestError::ParseError { line, message })?;
        if !seen.insert(rec.recording_id.clone()) {
            return Err(ManifestError::DuplicateRecordingId {
                line,
                id: rec.recording_id,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads a manifest and checks that every embedding file exists.
pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records = parse_manifest(&text)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = Manifest { dir, records };
    // Line numbers again, skipping blanks the way the parser did.
    let lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1);
    for (rec, line) in manifest.records.iter().zip(lines) {
        let p = manifest.embedding_path(rec);
        if !p.is_file() {
            return Err(ManifestError::MissingEmbeddingFile { line, path: p });
        }
    }
    Ok(manifest)
}

pub fn format_manifest(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("manifest rows serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> io::Result<()> {
    fs::write(path, format_manifest(records))
}
