//! Fold files: `{"seed": int, "folds": {speaker_id: fold_index}}`.

use std::fs;
use std::io;
use std::path::Path;

use fluency_core::folds::FoldAssignment;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FoldFileError {
    #[error("fold file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Speakers are written in sorted order, so equal assignments give equal bytes.
pub fn format_folds(folds: &FoldAssignment) -> String {
    let mut s = serde_json::to_string_pretty(folds).expect("fold map serializes");
    s.push('\n');
    s
}

pub fn parse_folds(text: &str) -> Result<FoldAssignment, FoldFileError> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_folds(path: &Path, folds: &FoldAssignment) -> Result<(), FoldFileError> {
    fs::write(path, format_folds(folds))?;
    Ok(())
}

pub fn read_folds(path: &Path) -> Result<FoldAssignment, FoldFileError> {
    parse_folds(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let text = "{\"seed\": 3, \"folds\": {\"b\": 1, \"a\": 0}}";
        let f = parse_folds(text).unwrap();
        assert_eq!(f.seed, 3);
        assert_eq!(f.fold_of("b"), Some(1));
        let out = format_folds(&f);
        assert!(out.find("\"a\"").unwrap() < out.find("\"b\"").unwrap());
        assert_eq!(parse_folds(&out).unwrap(), f);
        assert!(parse_folds("{\"seed\": 3}").is_err());
    }
}
