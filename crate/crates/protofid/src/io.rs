//! Reading datasets and rule files, writing JSON and CSV outputs.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use protofid_core::dataset::DataError;
use protofid_core::rules::RuleError;
use protofid_core::{FeatureSchema, LabeledDataset, RuleSet, TrainedNetwork};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {path}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column {column}")]
    NonNumericCell { row: usize, column: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid rule file {path}")]
    Rules { path: PathBuf, source: RuleError },
}

fn open(path: &Path) -> Result<fs::File, IoError> {
    fs::File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a CSV whose header contains every schema feature and `label_column`.
/// Extra columns are ignored. Data rows are numbered from 1.
pub fn load_csv(path: &Path, schema: &FeatureSchema, label_column: &str) -> Result<LabeledDataset, IoError> {
    read_csv(open(path)?, schema, label_column)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema, label_column: &str) -> Result<LabeledDataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.to_string()))
    };
    let cols = schema.names().iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;
    let label_col = find(label_column)?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let cell = |c: usize, name: &str| -> Result<f64, IoError> {
            record
                .get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| IoError::NonNumericCell {
                    row: row_no,
                    column: name.to_string(),
                })
        };
        let row = cols
            .iter()
            .zip(schema.names())
            .map(|(&c, name)| cell(c, name))
            .collect::<Result<Vec<_>, _>>()?;
        labels.push(cell(label_col, label_column)?);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::EmptyFile);
    }
    Ok(LabeledDataset::new(schema.clone(), rows, labels)?)
}

pub fn load_rules(path: &Path) -> Result<RuleSet, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    RuleSet::parse(&text).map_err(|source| IoError::Rules {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON terminated by a newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| IoError::File {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(AsRef::as_ref))?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::File {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    write_text(path, &String::from_utf8_lossy(&bytes))
}

pub fn save_checkpoint(path: &Path, net: &TrainedNetwork) -> Result<(), IoError> {
    write_json(path, net)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedNetwork, IoError> {
    read_json(path)
}
