//! Hand-crafted feature tables: `recording_id,<feature1>,<feature2>,...`.

use std::path::Path;

use fluency_core::probe::FeatureTable;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature CSV header must start with recording_id")]
    BadHeader,
    #[error("feature CSV line {line}: {message}")]
    BadValue { line: u64, message: String },
    #[error("feature CSV has no row for recording {0}")]
    MissingRecording(String),
}

fn read(reader: csv::Reader<impl std::io::Read>) -> Result<FeatureTable, FeatureError> {
    let mut reader = reader;
    let header = reader.headers()?.clone();
    if header.get(0) != Some("recording_id") {
        return Err(FeatureError::BadHeader);
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        ids.push(row[0].to_string());
        for (j, col) in columns.iter_mut().enumerate() {
            let cell = row[j + 1].trim();
            let v: f64 = cell.parse().map_err(|_| FeatureError::BadValue {
                line,
                message: format!("{}: not a number: {cell:?}", names[j]),
            })?;
            if !v.is_finite() {
                return Err(FeatureError::BadValue {
                    line,
                    message: format!("{}: non-finite value", names[j]),
                });
            }
            col.push(v);
        }
    }
    Ok(FeatureTable {
        recording_ids: ids,
        features: names.into_iter().zip(columns).collect(),
    })
}

pub fn read_features(path: &Path) -> Result<FeatureTable, FeatureError> {
    read(csv::Reader::from_path(path)?)
}

pub fn parse_features(text: &str) -> Result<FeatureTable, FeatureError> {
    read(csv::Reader::from_reader(text.as_bytes()))
}

/// Reorders the table's rows to follow `order`. Rows for recordings not in
/// `order` are dropped.
pub fn reorder(table: &FeatureTable, order: &[String]) -> Result<FeatureTable, FeatureError> {
    let index: std::collections::HashMap<&str, usize> = table
        .recording_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let rows: Vec<usize> = order
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| FeatureError::MissingRecording(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    Ok(FeatureTable {
        recording_ids: order.to_vec(),
        features: table
            .features
            .iter()
            .map(|(n, v)| (n.clone(), rows.iter().map(|&i| v[i]).collect()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reorder() {
        let t = parse_features("recording_id,wcpm,sylpersec\na,100,3.5\nb,80,2.25\n").unwrap();
        assert_eq!(t.features[0], ("wcpm".to_string(), vec![100.0, 80.0]));
        let r = reorder(&t, &["b".into(), "a".into()]).unwrap();
        assert_eq!(r.features[1].1, vec![2.25, 3.5]);
        assert!(matches!(
            reorder(&t, &["c".into()]),
            Err(FeatureError::MissingRecording(_))
        ));
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_features("id,x\na,1\n"), Err(FeatureError::BadHeader)));
        assert!(matches!(
            parse_features("recording_id,x\na,1\nb,zz\n"),
            Err(FeatureError::BadValue { line: 3, .. })
        ));
    }
}
