use std::fs::OpenOptions;
use std::path::Path;

use crate::error::{Error, Result};

use super::train::MetricsRecord;

pub const METRICS_HEADER: [&str; 9] = [
    "step",
    "lr",
    "alpha",
    "train_error",
    "val_error",
    "risk_sum",
    "reg_sum",
    "mean_mms",
    "min_norm_pairwise_margin",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes the records as CSV. With `append`, rows go after any existing
/// content and the header is written only if the file is new or empty.
pub fn write_metrics(path: impl AsRef<Path>, records: &[MetricsRecord], append: bool) -> Result<()> {
    let path = path.as_ref();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let fresh = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
    }
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.lr.to_string(),
            r.alpha.to_string(),
            r.train_error.to_string(),
            r.val_error.to_string(),
            cell(r.risk_sum),
            cell(r.reg_sum),
            cell(r.mean_mms),
            r.min_norm_pairwise_margin.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unexpected metrics header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse_err = |col: usize| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad {} value {:?}", METRICS_HEADER[col], &rec[col]),
        };
        let num = |col: usize| rec[col].parse::<f64>().map_err(|_| parse_err(col));
        let opt = |col: usize| {
            if rec[col].is_empty() {
                Ok(None)
            } else {
                num(col).map(Some)
            }
        };
        out.push(MetricsRecord {
            step: rec[0].parse().map_err(|_| parse_err(0))?,
            lr: num(1)?,
            alpha: num(2)?,
            train_error: num(3)?,
            val_error: num(4)?,
            risk_sum: opt(5)?,
            reg_sum: opt(6)?,
            mean_mms: opt(7)?,
            min_norm_pairwise_margin: num(8)?,
        });
    }
    Ok(out)
}
