//! Per-step batch selection: keep the `b` candidates with the smallest minimal
//! margin score, or `b` uniformly random ones as a baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{mms, LinearHead, ScoreMatrix};
use crate::numkernel::{sort_indices_asc, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Random,
    Mms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub mode: SelectionMode,
    pub big_batch: usize,
    pub small_batch: usize,
}

impl SelectionConfig {
    /// Candidate batch ten times the training batch.
    pub fn with_default_ratio(mode: SelectionMode, small_batch: usize) -> Self {
        SelectionConfig {
            mode,
            big_batch: 10 * small_batch,
            small_batch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.small_batch == 0 || self.small_batch > self.big_batch {
            return Err(Error::Config(format!(
                "selection needs 1 <= small_batch <= big_batch, got {} and {}",
                self.small_batch, self.big_batch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Positions within the candidate batch.
    pub indices: Vec<usize>,
    /// MMS of each selected candidate, in `indices` order; empty for random mode.
    pub mms_values: Vec<f64>,
    pub mean_mms: Option<f64>,
}

fn check_sizes(big: usize, b: usize) -> Result<()> {
    if b == 0 || b > big {
        return Err(Error::invalid(format!(
            "cannot select {b} of {big} candidates"
        )));
    }
    Ok(())
}

/// Indices of the `b` smallest-MMS rows, ascending by MMS, ties by row index.
/// Rows with no reachable boundary (MMS = +∞) sort last.
pub fn select_mms(scores: &ScoreMatrix, head: &LinearHead, b: usize) -> Result<SelectionResult> {
    check_sizes(scores.num_samples(), b)?;
    let all: Vec<f64> = (0..scores.num_samples())
        .map(|i| mms(scores.row(i), head).map(|m| m.mms))
        .collect::<Result<_>>()?;
    let mut order = sort_indices_asc(&all);
    order.truncate(b);
    let mms_values: Vec<f64> = order.iter().map(|&i| all[i]).collect();
    let mean = mms_values.iter().sum::<f64>() / b as f64;
    Ok(SelectionResult {
        indices: order,
        mms_values,
        mean_mms: Some(mean),
    })
}

/// `b` distinct candidates drawn uniformly without replacement, returned in
/// ascending position order (so `b = B` is the identity).
pub fn select_random(big: usize, b: usize, rng: &mut RngStream) -> Result<SelectionResult> {
    check_sizes(big, b)?;
    let mut pool: Vec<usize> = (0..big).collect();
    // Partial Fisher–Yates: the first b slots end up uniformly drawn.
    for i in 0..b {
        let j = i + rng.below(big - i);
        pool.swap(i, j);
    }
    pool.truncate(b);
    pool.sort_unstable();
    Ok(SelectionResult {
        indices: pool,
        mms_values: Vec::new(),
        mean_mms: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margin::score_batch;
    use crate::numkernel::DMat;

    /// Head whose MMS equals the first score minus the second for every row
    /// whose top two are classes 0 and 1: ‖w_0 − w_1‖ = 1.
    fn unit_head() -> LinearHead {
        LinearHead::new(
            DMat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, -5.0]]).unwrap(),
            vec![0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn picks_smallest_mms() {
        let s = ScoreMatrix::new(
            DMat::from_rows(&[
                vec![0.3, 0.0, -9.0],
                vec![0.1, 0.0, -9.0],
                vec![0.5, 0.0, -9.0],
                vec![0.2, 0.0, -9.0],
            ])
            .unwrap(),
        );
        let r = select_mms(&s, &unit_head(), 2).unwrap();
        assert_eq!(r.indices, vec![1, 3]);
        assert_eq!(r.mms_values, vec![0.1, 0.2]);
        assert!((r.mean_mms.unwrap() - 0.15).abs() < 1e-15);

        let all = select_mms(&s, &unit_head(), 4).unwrap();
        let mut set = all.indices.clone();
        set.sort_unstable();
        assert_eq!(set, vec![0, 1, 2, 3]);
        assert!(select_mms(&s, &unit_head(), 5).is_err());
    }

    #[test]
    fn degenerate_rows_sort_last() {
        let head = LinearHead::new(
            DMat::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        let feats = DMat::from_rows(&[vec![5.0, 0.0], vec![0.5, 0.9]]).unwrap();
        let s = score_batch(&head, &feats).unwrap();
        // Row 0: top two are classes 0 and 1 with identical weights.
        let r = select_mms(&s, &head, 1).unwrap();
        assert_eq!(r.indices, vec![1]);
        let r = select_mms(&s, &head, 2).unwrap();
        assert_eq!(r.indices, vec![1, 0]);
        assert_eq!(r.mean_mms, Some(f64::INFINITY));
    }

    #[test]
    fn random_selection_cases() {
        let mut rng = RngStream::new(1);
        assert_eq!(select_random(6, 6, &mut rng).unwrap().indices, (0..6).collect::<Vec<_>>());
        let a = select_random(50, 7, &mut RngStream::new(9)).unwrap();
        let b = select_random(50, 7, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        let mut dedup = a.indices.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 7);
        assert!(a.indices.iter().all(|&i| i < 50));
        assert!(a.mean_mms.is_none() && a.mms_values.is_empty());
        assert!(select_random(3, 4, &mut rng).is_err());
    }

    #[test]
    fn random_selection_is_uniform() {
        let mut rng = RngStream::new(2024);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[select_random(10, 1, &mut rng).unwrap().indices[0]] += 1;
        }
        let expected = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::with_default_ratio(SelectionMode::Mms, 64).validate().is_ok());
        assert_eq!(SelectionConfig::with_default_ratio(SelectionMode::Mms, 64).big_batch, 640);
        let bad = SelectionConfig {
            mode: SelectionMode::Random,
            big_batch: 4,
            small_batch: 8,
        };
        assert!(bad.validate().is_err());
    }
}
