//! Word alignment files: one `token<TAB>start_s<TAB>end_s` per line.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use fluency_core::spans::{AlignedWord, SpanError, WordAlignment};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] SpanError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn fields(raw: &str) -> Option<(&str, &str, &str)> {
    let mut it = raw.split('\t');
    if let (Some(a), Some(b), Some(c), None) = (it.next(), it.next(), it.next(), it.next()) {
        return Some((a, b, c));
    }
    // Space-separated files from hand-edited sources.
    let mut it = raw.split_whitespace();
    match (it.next(), it.next(), it.next(), it.next()) {
        (Some(a), Some(b), Some(c), None) => Some((a, b, c)),
        _ => None,
    }
}

pub fn parse_alignment_str(text: &str, duration_s: f64) -> Result<WordAlignment, AlignmentError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let syntax = |message: String| AlignmentError::Syntax { line, message };
        let (token, start, end) =
            fields(raw).ok_or_else(|| syntax("expected token, start and end".into()))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| syntax(format!("bad time {s:?}")))
        };
        entries.push(AlignedWord {
            token: token.to_string(),
            start_s: parse(start)?,
            end_s: parse(end)?,
        });
    }
    Ok(WordAlignment::new(entries, duration_s)?)
}

pub fn parse_alignment(path: &Path, duration_s: f64) -> Result<WordAlignment, AlignmentError> {
    parse_alignment_str(&fs::read_to_string(path)?, duration_s)
}

/// Times are written in shortest round-trip form, so parsing the output
/// gives back the same values.
pub fn format_alignment(alignment: &WordAlignment) -> String {
    let mut out = String::new();
    for w in alignment.entries() {
        writeln!(out, "{}\t{}\t{}", w.token, w.start_s, w.end_s).unwrap();
    }
    out
}

pub fn write_alignment(path: &Path, alignment: &WordAlignment) -> io::Result<()> {
    fs::write(path, format_alignment(alignment))
}
