use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::margin::predict;
use crate::model::Mlp;
use crate::numkernel::DMat;

/// Penultimate-layer features of a dataset with true and predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub features: DMat,
    pub labels: Vec<usize>,
    pub predicted: Vec<usize>,
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

pub fn embed(model: &Mlp, ds: &LabeledDataset) -> Result<Embeddings> {
    let trace = model.forward(ds.features())?;
    Ok(Embeddings {
        predicted: predict(&trace.scores),
        features: trace.features,
        labels: ds.labels().to_vec(),
    })
}

/// One CSV row per sample: `f0..f{d-1}`, `label`, `predicted`.
pub fn export_embeddings(model: &Mlp, ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let e = embed(model, ds)?;
    let mut w = csv::Writer::from_path(path).map_err(|err| csv_err(path, err))?;
    let mut header: Vec<String> = (0..e.features.cols()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    header.push("predicted".into());
    w.write_record(&header).map_err(|err| csv_err(path, err))?;
    for ((row, y), p) in e.features.row_iter().zip(&e.labels).zip(&e.predicted) {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        cells.push(y.to_string());
        cells.push(p.to_string());
        w.write_record(&cells).map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|err| Error::io(path, err))?;
    Ok(e)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let cols = rdr.headers().map_err(|e| csv_err(path, e))?.len();
    if cols < 3 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("embedding file needs at least 3 columns, found {cols}"),
        });
    }
    let d = cols - 2;
    let (mut data, mut labels, mut predicted) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |c: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad cell {c:?}"),
        };
        for c in rec.iter().take(d) {
            data.push(c.parse::<f64>().map_err(|_| bad(c))?);
        }
        labels.push(rec[d].parse::<usize>().map_err(|_| bad(&rec[d]))?);
        predicted.push(rec[d + 1].parse::<usize>().map_err(|_| bad(&rec[d + 1]))?);
    }
    if labels.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    Ok(Embeddings {
        features: DMat::from_vec(labels.len(), d, data)?,
        labels,
        predicted,
    })
}
