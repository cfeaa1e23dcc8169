use std::fs;
use std::path::Path;

use marginkit::data::{load_csv, load_idx, save_csv, LabeledDataset};
use marginkit::numkernel::{DMat, RngStream};
use proptest::prelude::*;

/// Hand-rolled IDX writer, independent of the loader.
fn write_idx_images(path: &Path, images: &[[u8; 4]]) {
    let mut bytes = vec![0x00, 0x00, 0x08, 0x03];
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&2u32.to_be_bytes());
    bytes.extend_from_slice(&2u32.to_be_bytes());
    for img in images {
        bytes.extend_from_slice(img);
    }
    fs::write(path, bytes).unwrap();
}

fn write_idx_labels(path: &Path, labels: &[u8]) {
    let mut bytes = vec![0x00, 0x00, 0x08, 0x01];
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    fs::write(path, bytes).unwrap();
}

const IMAGES: [[u8; 4]; 4] = [[0, 255, 128, 1], [10, 20, 30, 40], [255, 255, 0, 0], [7, 0, 0, 200]];
const LABELS: [u8; 4] = [3, 0, 1, 3];

#[test]
fn idx_golden_pair_loads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lbl.idx"));
    write_idx_images(&ip, &IMAGES);
    write_idx_labels(&lp, &LABELS);

    // Byte-level golden check of the writer itself.
    let raw = fs::read(&ip).unwrap();
    assert_eq!(&raw[..16], &[0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2]);
    assert_eq!(raw.len(), 16 + 16);

    let ds = load_idx(&ip, &lp).unwrap();
    assert_eq!((ds.len(), ds.dim(), ds.num_classes()), (4, 4, 4));
    assert_eq!(ds.labels(), &[3, 0, 1, 3]);
    for (row, img) in ds.features().row_iter().zip(IMAGES) {
        let expect: Vec<f64> = img.iter().map(|&p| f64::from(p) / 255.0).collect();
        assert_eq!(row, expect.as_slice());
    }
    assert_eq!(ds.features()[(0, 1)], 1.0);
    assert_eq!(ds.features()[(0, 0)], 0.0);
    assert_eq!(ds.empty_classes(), vec![2]);
}

#[test]
fn idx_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lbl.idx"));

    write_idx_images(&ip, &IMAGES);
    write_idx_labels(&lp, &LABELS[..3]);
    let err = load_idx(&ip, &lp).unwrap_err();
    assert_eq!(err.category(), "format");
    assert!(err.to_string().contains("3 labels for 4 images"), "{err}");

    write_idx_labels(&lp, &LABELS);
    let mut truncated = fs::read(&ip).unwrap();
    truncated.pop();
    fs::write(&ip, &truncated).unwrap();
    assert_eq!(load_idx(&ip, &lp).unwrap_err().category(), "format");

    fs::write(&ip, [0u8, 0, 8]).unwrap();
    assert_eq!(load_idx(&ip, &lp).unwrap_err().category(), "format");

    write_idx_images(&ip, &IMAGES);
    let mut bad_magic = fs::read(&ip).unwrap();
    bad_magic[3] = 0x01;
    fs::write(&ip, &bad_magic).unwrap();
    assert!(load_idx(&ip, &lp).unwrap_err().to_string().contains("magic"));

    // Swapped files: each magic is checked against its role.
    write_idx_images(&ip, &IMAGES);
    assert!(load_idx(&lp, &ip).is_err());

    let missing = dir.path().join("missing.idx");
    assert_eq!(load_idx(&missing, &lp).unwrap_err().category(), "io");
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn csv_basic_cases() {
    let dir = tempfile::tempdir().unwrap();
    let ds = load_csv(write(dir.path(), "a.csv", "1.0,2.0,0\n3.0,4.0,1"), false).unwrap();
    assert_eq!((ds.len(), ds.dim(), ds.num_classes()), (2, 2, 2));
    assert_eq!(ds.features().row(1), &[3.0, 4.0]);

    let ds = load_csv(write(dir.path(), "h.csv", "x,y,class\n1,2,2\n"), true).unwrap();
    assert_eq!(ds.num_classes(), 3);
    assert_eq!(ds.feature_names().unwrap(), &["x".to_string(), "y".to_string()]);

    assert!(load_csv(write(dir.path(), "e.csv", ""), false).is_err());
    assert!(load_csv(write(dir.path(), "eh.csv", "x,label\n"), true).is_err());
}

#[test]
fn csv_errors_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("ragged.csv", "1,2,0\n3,1\n", 2),
        ("text.csv", "1,2,0\n3,4,1\n5,abc,0\n", 3),
        ("neg.csv", "1,2,-1\n", 1),
        ("frac.csv", "1,2,0\n1,2,1.5\n", 2),
    ];
    for (name, text, line) in cases {
        let err = load_csv(write(dir.path(), name, text), false).unwrap_err();
        assert_eq!(err.category(), "parse", "{name}: {err}");
        match err {
            marginkit::Error::Parse { line: l, .. } => assert_eq!(l, line, "{name}"),
            other => panic!("{name}: {other}"),
        }
    }
}

fn random_dataset(rng: &mut RngStream, n: usize, d: usize) -> LabeledDataset {
    let data = (0..n * d)
        .map(|_| {
            let mag = 10f64.powi(rng.below(20) as i32 - 10);
            rng.normal() * mag
        })
        .collect();
    let x = DMat::from_vec(n, d, data).unwrap();
    LabeledDataset::new(x, (0..n).map(|_| rng.below(5)).collect(), 5).unwrap()
}

#[test]
fn csv_round_trip_is_bit_exact_with_and_without_header() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(77);
    for (i, header) in [false, true].into_iter().enumerate() {
        let ds = random_dataset(&mut rng, 40, 6);
        let p = dir.path().join(format!("rt{i}.csv"));
        save_csv(&ds, &p, header).unwrap();
        let back = load_csv(&p, header).unwrap();
        let bits = |d: &LabeledDataset| d.features().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&ds));
        assert_eq!(back.labels(), ds.labels());
        // Save of the loaded data reproduces the same bytes.
        let p2 = dir.path().join(format!("rt{i}b.csv"));
        save_csv(&back, &p2, header).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_any_finite_values(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..60),
        d in 1usize..4,
    ) {
        let n = values.len() / d;
        prop_assume!(n >= 1);
        let x = DMat::from_vec(n, d, values[..n * d].to_vec()).unwrap();
        let ds = LabeledDataset::new(x, (0..n).map(|i| i % 2).collect(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        save_csv(&ds, &p, false).unwrap();
        let back = load_csv(&p, false).unwrap();
        let bits = |d: &LabeledDataset| d.features().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&ds));
    }
}
