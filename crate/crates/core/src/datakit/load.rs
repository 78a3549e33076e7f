use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gradcore::Tensor;

use super::{DataError, Label, SsadDataset};

/// Which column carries the label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
    /// Every column is a feature; rows are labelled normal.
    Absent,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// `last`, `none`, a zero-based index, or a header name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "last" => LabelColumn::Last,
            "none" => LabelColumn::Absent,
            _ => match s.parse() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label: LabelColumn,
    /// Label value marking an anomaly.
    pub positive: String,
    /// `None` detects a header from the first line.
    pub header: Option<bool>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label: LabelColumn::Last,
            positive: "1".into(),
            header: None,
        }
    }
}

fn is_number(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok_and(f64::is_finite)
}

fn matches_token(cell: &str, token: &str) -> bool {
    let (cell, token) = (cell.trim(), token.trim());
    if cell == token {
        return true;
    }
    match (cell.parse::<f64>(), token.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Reads a comma-separated file of numeric features plus one label column.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<SsadDataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let source = path
        .file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(file, opts, &source)
}

pub fn parse_csv<R: Read>(reader: R, opts: &CsvOptions, source: &str) -> Result<SsadDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        records.push(rec);
    }
    let first = records.first().ok_or(DataError::Empty)?;
    let ncols = first.len();
    let labelled = opts.label != LabelColumn::Absent;
    if ncols < 1 + usize::from(labelled) {
        return Err(DataError::Invalid(format!(
            "need at least one feature column and a label column, found {ncols} column(s)"
        )));
    }
    let header = match opts.header {
        Some(h) => h,
        None => matches!(opts.label, LabelColumn::Name(_)) || {
            let label_guess = match opts.label {
                LabelColumn::Index(i) => i,
                LabelColumn::Absent => usize::MAX,
                _ => ncols - 1,
            };
            first.iter().enumerate().any(|(j, c)| j != label_guess && !is_number(c))
        },
    };
    let label_col = match &opts.label {
        LabelColumn::Absent => usize::MAX,
        LabelColumn::Last => ncols - 1,
        LabelColumn::Index(i) if *i < ncols => *i,
        LabelColumn::Index(i) => return Err(DataError::MissingColumn(i.to_string())),
        LabelColumn::Name(name) => {
            if !header {
                return Err(DataError::MissingColumn(format!("'{name}' (file has no header)")));
            }
            first
                .iter()
                .position(|c| c.trim() == name)
                .ok_or_else(|| DataError::MissingColumn(format!("'{name}'")))?
        }
    };
    let body = &records[usize::from(header)..];
    if body.is_empty() {
        return Err(DataError::Empty);
    }
    let d = ncols - usize::from(labelled);
    let mut data = Vec::with_capacity(body.len() * d);
    let mut labels = Vec::with_capacity(body.len());
    for (r, rec) in body.iter().enumerate() {
        let row = r + 1;
        if rec.len() != ncols {
            return Err(DataError::Ragged {
                row,
                expected: ncols,
                got: rec.len(),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if j == label_col {
                continue;
            }
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => {
                    return Err(DataError::NonNumeric {
                        row,
                        column: j,
                        value: cell.to_string(),
                    })
                }
            }
        }
        labels.push(if labelled && matches_token(&rec[label_col], &opts.positive) {
            Label::Anomaly
        } else {
            Label::Normal
        });
    }
    let n = labels.len();
    SsadDataset::new(Tensor::new(vec![n, d], data).expect("one value per feature cell"), labels, source)
}
