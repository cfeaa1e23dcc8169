//! Labeled datasets: synthetic generators, CSV and IDX ingestion,
//! standardization, seeded splits, and seeded batch order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{squared_distance, DMat, RngStream};

const SPLIT_STREAM_TAG: u64 = 0x7370_6c69_7400;
const BATCH_STREAM_TAG: u64 = 0x6261_7463_6800;
const GEN_STREAM_TAG: u64 = 0x6765_6e00;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMat,
    labels: Vec<usize>,
    num_classes: usize,
    feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: DMat, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::ShapeMismatch {
                op: "LabeledDataset::new",
                left: features.shape(),
                right: (labels.len(), 1),
            });
        }
        if num_classes == 0 {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            num_classes,
            feature_names: None,
        })
    }

    /// Class count inferred as `max label + 1`.
    pub fn from_labels(features: DMat, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(features, labels, k)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::invalid(format!(
                "{} feature names for {} features",
                names.len(),
                self.dim()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &DMat {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Classes in `0..num_classes` with no samples.
    pub fn empty_classes(&self) -> Vec<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Features and labels of the given rows, in order.
    pub fn gather(&self, indices: &[usize]) -> Result<(DMat, Vec<usize>)> {
        let x = self.features.select_rows(indices)?;
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((x, y))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let (x, y) = self.gather(indices)?;
        Ok(LabeledDataset {
            features: x,
            labels: y,
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticShape {
    /// Isotropic Gaussian blob per center.
    Blobs {
        centers: Vec<Vec<f64>>,
        n_per_class: usize,
        sigma: f64,
    },
    /// Two interleaved half circles.
    Moons { n: usize, noise: f64 },
    /// Two concentric circles.
    Rings { n: usize, radii: [f64; 2], noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub shape: SyntheticShape,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        match &self.shape {
            SyntheticShape::Blobs {
                centers,
                n_per_class,
                sigma,
            } => {
                if centers.len() < 2 {
                    return bad(format!("blobs need at least two centers, got {}", centers.len()));
                }
                let d = centers[0].len();
                if d == 0 || centers.iter().any(|c| c.len() != d) {
                    return bad("blob centers must share a positive dimension".into());
                }
                if centers.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("blob centers must be finite".into());
                }
                for i in 0..centers.len() {
                    for j in i + 1..centers.len() {
                        if squared_distance(&centers[i], &centers[j]) == 0.0 {
                            return bad(format!("blob centers {i} and {j} coincide"));
                        }
                    }
                }
                if *n_per_class == 0 {
                    return bad("n_per_class must be positive".into());
                }
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return bad(format!("sigma must be finite and >= 0, got {sigma}"));
                }
            }
            SyntheticShape::Moons { n, noise } => {
                if *n < 2 {
                    return bad(format!("moons need n >= 2, got {n}"));
                }
                if !(noise.is_finite() && *noise >= 0.0) {
                    return bad(format!("noise must be finite and >= 0, got {noise}"));
                }
            }
            SyntheticShape::Rings { n, radii, noise } => {
                if *n < 2 {
                    return bad(format!("rings need n >= 2, got {n}"));
                }
                if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii[0] == radii[1] {
                    return bad(format!("ring radii must be positive and distinct, got {radii:?}"));
                }
                if !(noise.is_finite() && *noise >= 0.0) {
                    return bad(format!("noise must be finite and >= 0, got {noise}"));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic synthetic dataset. Samples are grouped by class.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = RngStream::derive(spec.seed, GEN_STREAM_TAG);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let k = match &spec.shape {
        SyntheticShape::Blobs {
            centers,
            n_per_class,
            sigma,
        } => {
            for (c, center) in centers.iter().enumerate() {
                for _ in 0..*n_per_class {
                    rows.push(center.iter().map(|m| m + sigma * rng.normal()).collect());
                    labels.push(c);
                }
            }
            centers.len()
        }
        SyntheticShape::Moons { n, noise } => {
            let n_outer = n / 2;
            let n_inner = n - n_outer;
            let angle = |i: usize, count: usize| {
                if count <= 1 {
                    0.0
                } else {
                    std::f64::consts::PI * i as f64 / (count - 1) as f64
                }
            };
            for i in 0..n_outer {
                let t = angle(i, n_outer);
                rows.push(vec![t.cos() + noise * rng.normal(), t.sin() + noise * rng.normal()]);
                labels.push(0);
            }
            for i in 0..n_inner {
                let t = angle(i, n_inner);
                rows.push(vec![
                    1.0 - t.cos() + noise * rng.normal(),
                    0.5 - t.sin() + noise * rng.normal(),
                ]);
                labels.push(1);
            }
            2
        }
        SyntheticShape::Rings { n, radii, noise } => {
            let n0 = n / 2;
            for i in 0..*n {
                let class = usize::from(i >= n0);
                let t = rng.uniform(0.0, std::f64::consts::TAU);
                let r = radii[class];
                rows.push(vec![
                    r * t.cos() + noise * rng.normal(),
                    r * t.sin() + noise * rng.normal(),
                ]);
                labels.push(class);
            }
            2
        }
    };
    LabeledDataset::new(DMat::from_rows(&rows)?, labels, k)
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected {expected_len} columns, found {len}"),
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Comma-separated rows of features with an integer label in the last column.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let names = if has_header {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(h.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut cols = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() < 2 {
            return Err(parse_err(format!(
                "need at least one feature and a label, found {} columns",
                record.len()
            )));
        }
        cols = record.len() - 1;
        for cell in record.iter().take(cols) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite cell {cell:?}")));
            }
            data.push(v);
        }
        let cell = &record[cols];
        let label: i64 = cell
            .parse()
            .map_err(|_| parse_err(format!("label {cell:?} is not an integer")))?;
        if label < 0 {
            return Err(parse_err(format!("negative label {label}")));
        }
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    let features = DMat::from_vec(labels.len(), cols, data)?;
    let ds = LabeledDataset::from_labels(features, labels)?;
    match names {
        Some(mut n) if n.len() == cols + 1 => {
            n.pop();
            ds.with_feature_names(n)
        }
        _ => Ok(ds),
    }
}

/// Writes features with shortest round-trip formatting, so [`load_csv`]
/// restores every value bit for bit.
pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if header {
        let mut names: Vec<String> = match ds.feature_names() {
            Some(n) => n.to_vec(),
            None => (0..ds.dim()).map(|j| format!("x{j}")).collect(),
        };
        names.push("label".into());
        w.write_record(&names).map_err(|e| csv_error(path, e))?;
    }
    for (row, y) in ds.features.row_iter().zip(&ds.labels) {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        cells.push(y.to_string());
        w.write_record(&cells).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("truncated header at byte {offset}"),
        })
}

/// MNIST-style IDX pair: u8 images (magic 0x803) and u8 labels (magic 0x801).
/// Pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let label_bytes = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let fmt = |path: &Path, message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };

    let magic = read_be_u32(&images, 0, ip)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(fmt(ip, format!("bad image magic {magic:#010x}")));
    }
    let n = read_be_u32(&images, 4, ip)? as usize;
    let rows = read_be_u32(&images, 8, ip)? as usize;
    let cols = read_be_u32(&images, 12, ip)? as usize;
    let pixels = &images[16..];
    if pixels.len() != n * rows * cols {
        return Err(fmt(
            ip,
            format!("expected {} pixel bytes, found {}", n * rows * cols, pixels.len()),
        ));
    }

    let magic = read_be_u32(&label_bytes, 0, lp)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(fmt(lp, format!("bad label magic {magic:#010x}")));
    }
    let n_labels = read_be_u32(&label_bytes, 4, lp)? as usize;
    let labels = &label_bytes[8..];
    if labels.len() != n_labels {
        return Err(fmt(
            lp,
            format!("expected {n_labels} label bytes, found {}", labels.len()),
        ));
    }
    if n_labels != n {
        return Err(fmt(lp, format!("{n_labels} labels for {n} images")));
    }
    if n == 0 || rows * cols == 0 {
        return Err(fmt(ip, "empty image set".into()));
    }

    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = DMat::from_vec(n, rows * cols, data)?;
    LabeledDataset::from_labels(features, labels.iter().map(|&l| usize::from(l)).collect())
}

/// Per-feature affine map fit on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Divisor per feature; 1 where the training std was below 1e-12.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &LabeledDataset) -> Self {
        let n = ds.len() as f64;
        let d = ds.dim();
        let mut mean = vec![0.0; d];
        for row in ds.features.row_iter() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in ds.features.row_iter() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let std = (s / n).sqrt();
                if std < 1e-12 {
                    1.0
                } else {
                    std
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn apply(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        Ok(LabeledDataset {
            features: self.apply_features(&ds.features)?,
            ..ds.clone()
        })
    }

    pub fn apply_features(&self, x: &DMat) -> Result<DMat> {
        if x.cols() != self.mean.len() {
            return Err(Error::ShapeMismatch {
                op: "standardize",
                left: (1, self.mean.len()),
                right: x.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Fits on `train` and applies the same map to every dataset.
pub fn standardize(
    train: &LabeledDataset,
    others: &[&LabeledDataset],
) -> Result<(LabeledDataset, Vec<LabeledDataset>, Standardizer)> {
    if train.is_empty() {
        return Err(Error::invalid("cannot standardize an empty training set"));
    }
    let stats = Standardizer::fit(train);
    let t = stats.apply(train)?;
    let rest = others.iter().map(|d| stats.apply(d)).collect::<Result<_>>()?;
    Ok((t, rest, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Seeded permutation, then the first `round(fraction·n)` rows train.
pub fn split(ds: &LabeledDataset, spec: SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = ds.len();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::invalid(format!(
            "fraction {} of {n} samples leaves an empty split",
            spec.train_fraction
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    RngStream::derive(spec.seed, SPLIT_STREAM_TAG).shuffle(&mut perm);
    Ok((ds.subset(&perm[..n_train])?, ds.subset(&perm[n_train..])?))
}

/// Row indices of `n` samples in seeded order, cut into batches; the last
/// batch may be short.
pub fn batch_iter(n: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    RngStream::derive(epoch_seed, BATCH_STREAM_TAG).shuffle(&mut perm);
    Ok(perm.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(k: usize, n_per: usize, sigma: f64, seed: u64) -> SyntheticSpec {
        let centers = (0..k).map(|c| vec![10.0 * c as f64, -3.0 * c as f64]).collect();
        SyntheticSpec {
            seed,
            shape: SyntheticShape::Blobs {
                centers,
                n_per_class: n_per,
                sigma,
            },
        }
    }

    #[test]
    fn blobs_have_exact_class_counts() {
        let ds = gen_synthetic(&blobs(3, 100, 1.0, 1)).unwrap();
        assert_eq!(ds.len(), 300);
        assert_eq!(ds.class_counts(), vec![100, 100, 100]);
        assert_eq!(ds, gen_synthetic(&blobs(3, 100, 1.0, 1)).unwrap());
        assert_ne!(ds, gen_synthetic(&blobs(3, 100, 1.0, 2)).unwrap());
    }

    #[test]
    fn zero_sigma_blobs_sit_on_centers() {
        let ds = gen_synthetic(&blobs(3, 5, 0.0, 1)).unwrap();
        for (row, &y) in ds.features().row_iter().zip(ds.labels()) {
            assert_eq!(row, &[10.0 * y as f64, -3.0 * y as f64]);
        }
    }

    #[test]
    fn moons_and_rings_shapes() {
        let moons = gen_synthetic(&SyntheticSpec {
            seed: 3,
            shape: SyntheticShape::Moons { n: 101, noise: 0.0 },
        })
        .unwrap();
        assert_eq!(moons.class_counts(), vec![50, 51]);
        for (row, &y) in moons.features().row_iter().zip(moons.labels()) {
            let (cx, cy) = if y == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }

        let rings = gen_synthetic(&SyntheticSpec {
            seed: 3,
            shape: SyntheticShape::Rings {
                n: 40,
                radii: [1.0, 3.0],
                noise: 0.0,
            },
        })
        .unwrap();
        assert_eq!(rings.class_counts(), vec![20, 20]);
        for (row, &y) in rings.features().row_iter().zip(rings.labels()) {
            let r = (row[0] * row[0] + row[1] * row[1]).sqrt();
            assert!((r - [1.0, 3.0][y]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = blobs(2, 5, 1.0, 0);
        if let SyntheticShape::Blobs { centers, .. } = &mut s.shape {
            centers[1] = centers[0].clone();
        }
        assert!(gen_synthetic(&s).is_err());
        assert!(gen_synthetic(&blobs(2, 5, -1.0, 0)).is_err());
        let rings = SyntheticSpec {
            seed: 0,
            shape: SyntheticShape::Rings {
                n: 10,
                radii: [2.0, 2.0],
                noise: 0.1,
            },
        };
        assert!(gen_synthetic(&rings).is_err());
    }

    #[test]
    fn synthetic_spec_from_toml() {
        let spec: SyntheticSpec = toml::from_str(
            "seed = 4\n[shape]\nkind = \"moons\"\nn = 10\nnoise = 0.1\n",
        )
        .unwrap();
        assert_eq!(spec.shape, SyntheticShape::Moons { n: 10, noise: 0.1 });
        assert!(toml::from_str::<SyntheticSpec>("seed = 4\nfoo = 1\n[shape]\nkind = \"moons\"\nn = 10\nnoise = 0.1\n").is_err());
    }

    #[test]
    fn standardize_centers_and_scales() {
        let x = DMat::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
        let ds = LabeledDataset::new(x, vec![0, 1, 0], 2).unwrap();
        let (t, _, stats) = standardize(&ds, &[]).unwrap();
        assert_eq!(stats.scale[1], 1.0);
        for row in t.features().row_iter() {
            assert_eq!(row[1], 0.0);
        }
        let mean0: f64 = t.features().row_iter().map(|r| r[0]).sum::<f64>() / 3.0;
        assert!(mean0.abs() < 1e-10);
        let var0: f64 = t.features().row_iter().map(|r| r[0] * r[0]).sum::<f64>() / 3.0;
        assert!((var0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_applies_train_stats_to_others() {
        let ds = gen_synthetic(&blobs(3, 50, 2.0, 9)).unwrap();
        let (train, val) = split(&ds, SplitSpec { train_fraction: 0.8, seed: 1 }).unwrap();
        let (t, v, stats) = standardize(&train, &[&val]).unwrap();
        let means: Vec<f64> = (0..2)
            .map(|j| t.features().row_iter().map(|r| r[j]).sum::<f64>() / t.len() as f64)
            .collect();
        assert!(means.iter().all(|m| m.abs() < 1e-10));
        assert_eq!(v[0], stats.apply(&val).unwrap());

        // Applying non-identity stats twice is not the same as once; identity
        // stats are idempotent.
        let twice = stats.apply(&t).unwrap();
        assert_ne!(twice, t);
        let id = Standardizer::identity(2);
        assert_eq!(id.apply(&id.apply(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn split_cases() {
        let x = DMat::from_vec(100, 1, (0..100).map(f64::from).collect()).unwrap();
        let ds = LabeledDataset::new(x, (0..100).map(|i| i % 3).collect(), 3).unwrap();
        let spec = SplitSpec {
            train_fraction: 0.9,
            seed: 5,
        };
        let (a, b) = split(&ds, spec).unwrap();
        assert_eq!((a.len(), b.len()), (90, 10));
        assert_eq!(split(&ds, spec).unwrap(), (a.clone(), b.clone()));

        // Multiset equality: feature values are distinct ids here.
        let mut ids: Vec<u64> = a
            .features()
            .row_iter()
            .chain(b.features().row_iter())
            .map(|r| r[0] as u64)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..100).collect::<Vec<_>>());
        for (row, &y) in a.features().row_iter().zip(a.labels()) {
            assert_eq!(row[0] as usize % 3, y);
        }

        assert!(split(&ds, SplitSpec { train_fraction: 1.0, seed: 5 }).is_err());
        assert!(split(&ds, SplitSpec { train_fraction: 0.001, seed: 5 }).is_err());
    }

    #[test]
    fn batch_iter_cases() {
        let one = batch_iter(10, 32, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 10);

        let e1 = batch_iter(23, 5, 1).unwrap();
        assert_eq!(e1.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5, 5, 5, 3]);
        let mut flat: Vec<usize> = e1.concat();
        flat.sort_unstable();
        assert_eq!(flat, (0..23).collect::<Vec<_>>());

        let e2 = batch_iter(23, 5, 2).unwrap();
        assert_ne!(e1, e2);
        let mut flat2 = e2.concat();
        flat2.sort_unstable();
        assert_eq!(flat, flat2);
        assert_eq!(e1, batch_iter(23, 5, 1).unwrap());
        assert!(batch_iter(3, 0, 1).is_err());
    }
}
