use std::path::Path;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::train::{train_run, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub seed: u64,
    pub a: RunSummary,
    pub b: RunSummary,
}

/// How many seeds each side won on a metric, and how many tied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WinCount {
    pub a: usize,
    pub b: usize,
    pub tie: usize,
}

impl WinCount {
    fn tally<T: PartialOrd>(&mut self, a: T, b: T, higher_wins: bool) {
        match a.partial_cmp(&b) {
            Some(std::cmp::Ordering::Equal) | None => self.tie += 1,
            Some(std::cmp::Ordering::Greater) if higher_wins => self.a += 1,
            Some(std::cmp::Ordering::Less) if !higher_wins => self.a += 1,
            Some(_) => self.b += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<PairedRow>,
    pub accuracy_wins: WinCount,
    pub margin_wins: WinCount,
    /// Fewer steps wins; never reaching the target counts as infinitely many.
    pub steps_wins: WinCount,
}

/// Runs both configs once per seed. Seed `i` uses `a.train.seed + i` for
/// data generation, the split, model init and batch order on both sides, so
/// paired runs differ only in the factors under study.
pub fn compare_runs(
    a: &ExperimentConfig,
    b: &ExperimentConfig,
    base_dir: &Path,
    n_seeds: u64,
) -> Result<Comparison> {
    if n_seeds == 0 {
        return Err(Error::invalid("need at least one seed"));
    }
    a.train.validate()?;
    b.train.validate()?;
    let mut rows = Vec::new();
    let mut cmp = Comparison {
        rows: Vec::new(),
        accuracy_wins: WinCount::default(),
        margin_wins: WinCount::default(),
        steps_wins: WinCount::default(),
    };
    for i in 0..n_seeds {
        let seed = a.train.seed.wrapping_add(i);
        let run = |cfg: &ExperimentConfig, tag: &str| -> Result<RunSummary> {
            let data = cfg.data.with_seed(seed).prepare(base_dir)?;
            let mut train_cfg = cfg.train.clone();
            train_cfg.seed = seed;
            let (_, records) = train_run(&train_cfg, &data.train, &data.val)?;
            RunSummary::from_records(&format!("{tag}-seed{seed}"), &train_cfg, &records)
        };
        let (ra, rb) = (run(a, "a")?, run(b, "b")?);
        cmp.accuracy_wins
            .tally(ra.final_val_accuracy, rb.final_val_accuracy, true);
        cmp.margin_wins
            .tally(ra.final_min_margin, rb.final_min_margin, true);
        let steps = |s: Option<u64>| s.unwrap_or(u64::MAX);
        cmp.steps_wins
            .tally(steps(ra.steps_to_target), steps(rb.steps_to_target), false);
        rows.push(PairedRow { seed, a: ra, b: rb });
    }
    cmp.rows = rows;
    Ok(cmp)
}

pub const COMPARISON_HEADER: [&str; 9] = [
    "seed",
    "a_final_train_accuracy",
    "b_final_train_accuracy",
    "a_final_val_accuracy",
    "b_final_val_accuracy",
    "a_min_margin",
    "b_min_margin",
    "a_steps_to_target",
    "b_steps_to_target",
];

pub fn write_comparison(path: impl AsRef<Path>, cmp: &Comparison) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(COMPARISON_HEADER).map_err(io)?;
    let steps = |s: Option<u64>| s.map(|v| v.to_string()).unwrap_or_default();
    for r in &cmp.rows {
        w.write_record([
            r.seed.to_string(),
            r.a.final_train_accuracy.to_string(),
            r.b.final_train_accuracy.to_string(),
            r.a.final_val_accuracy.to_string(),
            r.b.final_val_accuracy.to_string(),
            r.a.final_min_margin.to_string(),
            r.b.final_min_margin.to_string(),
            steps(r.a.steps_to_target),
            steps(r.b.steps_to_target),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
