//! Margin geometry of a multi-class linear scoring layer.
//!
//! A [`LinearHead`] scores a feature vector φ as `s_j(φ) = w_j·φ + b_j`. The
//! decision boundary between classes `p` and `q` is the hyperplane
//! `(w_p − w_q)·φ + (b_p − b_q) = 0`, and the signed distance of φ to it is the
//! pairwise margin. The minimal margin score (MMS) of φ is the distance to the
//! boundary between its two highest-scoring classes; it never looks at labels.

use crate::error::{Error, Result};
use crate::numkernel::{
    argmax_tiebreak_low, dot, l2_norm, matmul, squared_distance, top2_tiebreak_low, DMat,
};

/// Normal vectors shorter than this are treated as "no boundary".
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Last-layer weights: row `j` of `weights` is `w_j`, `bias[j]` is `b_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weights: DMat,
    bias: Vec<f64>,
}

impl LinearHead {
    pub fn new(weights: DMat, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() < 2 {
            return Err(Error::invalid(format!(
                "a head needs at least two classes, got {}",
                weights.rows()
            )));
        }
        if bias.len() != weights.rows() {
            return Err(Error::ShapeMismatch {
                op: "LinearHead::new",
                left: weights.shape(),
                right: (bias.len(), 1),
            });
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("head parameters must be finite"));
        }
        Ok(LinearHead { weights, bias })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &DMat {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut DMat {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weights and biases as disjoint mutable slices.
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }

    pub fn w(&self, j: usize) -> &[f64] {
        self.weights.row(j)
    }

    /// `(W·c, b·c)`.
    pub fn scaled(&self, c: f64) -> LinearHead {
        LinearHead {
            weights: self.weights.scale(c),
            bias: self.bias.iter().map(|b| b * c).collect(),
        }
    }

    /// Scores of a single feature vector.
    pub fn score(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(phi.len())?;
        Ok((0..self.num_classes())
            .map(|j| dot(self.w(j), phi) + self.bias[j])
            .collect())
    }

    /// `‖w_p − w_q‖`.
    pub fn pair_normal_norm(&self, p: usize, q: usize) -> f64 {
        squared_distance(self.w(p), self.w(q)).sqrt()
    }

    fn check_class(&self, j: usize) -> Result<()> {
        if j >= self.num_classes() {
            return Err(Error::invalid(format!(
                "class {j} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.feature_dim() {
            return Err(Error::ShapeMismatch {
                op: "score",
                left: self.weights.shape(),
                right: (d, 1),
            });
        }
        Ok(())
    }
}

/// Scores of a batch, one row per sample and one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(DMat);

impl ScoreMatrix {
    pub fn new(scores: DMat) -> Self {
        ScoreMatrix(scores)
    }

    pub fn as_mat(&self) -> &DMat {
        &self.0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn num_samples(&self) -> usize {
        self.0.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.cols()
    }
}

/// Output of [`mms`]: the top-two classes and the distance to their boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsScore {
    pub j1: usize,
    pub j2: usize,
    /// `+∞` when `w_{j1} = w_{j2}` (no reachable boundary).
    pub mms: f64,
    pub boundary_exists: bool,
}

/// Per-sample margin summary combining the label-free MMS with the label-aware
/// score gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginRecord {
    pub sample_index: usize,
    pub j1: usize,
    pub j2: usize,
    pub xi: f64,
    pub mms: f64,
    pub boundary_exists: bool,
}

impl MarginRecord {
    pub fn new(
        sample_index: usize,
        scores_row: &[f64],
        head: &LinearHead,
        y: usize,
    ) -> Result<Self> {
        let m = mms(scores_row, head)?;
        Ok(MarginRecord {
            sample_index,
            j1: m.j1,
            j2: m.j2,
            xi: score_gap(scores_row, y)?,
            mms: m.mms,
            boundary_exists: m.boundary_exists,
        })
    }
}

pub fn score_batch(head: &LinearHead, features: &DMat) -> Result<ScoreMatrix> {
    if features.cols() != head.feature_dim() {
        return Err(Error::ShapeMismatch {
            op: "score_batch",
            left: head.weights.shape(),
            right: features.shape(),
        });
    }
    let mut scores = matmul(features, &head.weights.transpose())?;
    for i in 0..scores.rows() {
        for (s, b) in scores.row_mut(i).iter_mut().zip(&head.bias) {
            *s += b;
        }
    }
    Ok(ScoreMatrix(scores))
}

pub fn predict(scores: &ScoreMatrix) -> Vec<usize> {
    scores.0.row_iter().map(argmax_tiebreak_low).collect()
}

/// `argmax_{j ≠ y} s_j`, smallest index on ties.
pub fn competitive_class(scores_row: &[f64], y: usize) -> Result<usize> {
    if scores_row.len() < 2 {
        return Err(Error::invalid("competitive class needs at least two scores"));
    }
    if y >= scores_row.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            scores_row.len()
        )));
    }
    let mut best: Option<usize> = None;
    for (j, &s) in scores_row.iter().enumerate() {
        if j == y {
            continue;
        }
        match best {
            Some(b) if s <= scores_row[b] => {}
            _ => best = Some(j),
        }
    }
    Ok(best.expect("at least one competing class"))
}

/// ξ = s_y − s_m with m the competitive class.
pub fn score_gap(scores_row: &[f64], y: usize) -> Result<f64> {
    let m = competitive_class(scores_row, y)?;
    Ok(scores_row[y] - scores_row[m])
}

fn signed_distance(numerator: f64, norm: f64) -> f64 {
    if norm < DEGENERATE_NORM {
        if numerator > 0.0 {
            f64::INFINITY
        } else if numerator < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    } else {
        numerator / norm
    }
}

/// Signed distance from `x` to the boundary between classes `p` and `q`,
/// positive on the side of `p`.
pub fn pairwise_distance(head: &LinearHead, x: &[f64], p: usize, q: usize) -> Result<f64> {
    head.check_class(p)?;
    head.check_class(q)?;
    if p == q {
        return Err(Error::invalid(format!(
            "pairwise distance needs two distinct classes, got {p} twice"
        )));
    }
    head.check_dim(x.len())?;
    let diff: Vec<f64> = head.w(p).iter().zip(head.w(q)).map(|(a, b)| a - b).collect();
    let numerator = dot(&diff, x) + (head.bias[p] - head.bias[q]);
    Ok(signed_distance(numerator, l2_norm(&diff)))
}

/// Minimal margin score of a sample given its scores under `head`.
pub fn mms(scores_row: &[f64], head: &LinearHead) -> Result<MmsScore> {
    if scores_row.len() != head.num_classes() {
        return Err(Error::ShapeMismatch {
            op: "mms",
            left: head.weights.shape(),
            right: (1, scores_row.len()),
        });
    }
    let (j1, j2) = top2_tiebreak_low(scores_row)?;
    let norm = head.pair_normal_norm(j1, j2);
    let gap = scores_row[j1] - scores_row[j2];
    if norm < DEGENERATE_NORM {
        return Ok(MmsScore {
            j1,
            j2,
            mms: f64::INFINITY,
            boundary_exists: false,
        });
    }
    Ok(MmsScore {
        j1,
        j2,
        mms: gap / norm,
        boundary_exists: true,
    })
}

/// `d_{y,m}(φ) / ‖φ_max‖`, m the competitive class of φ.
pub fn normalized_feature_margin(
    head: &LinearHead,
    phi: &[f64],
    y: usize,
    phi_max_norm: f64,
) -> Result<f64> {
    if phi_max_norm.is_nan() || phi_max_norm <= 0.0 {
        return Err(Error::invalid(format!(
            "phi_max_norm must be positive, got {phi_max_norm}"
        )));
    }
    let scores = head.score(phi)?;
    let m = competitive_class(&scores, y)?;
    Ok(pairwise_distance(head, phi, y, m)? / phi_max_norm)
}

/// `(w_j·x + b_j)/‖w_j‖`, the distance to a one-vs-all boundary.
pub fn one_vs_all_distance(head: &LinearHead, x: &[f64], j: usize) -> Result<f64> {
    head.check_class(j)?;
    head.check_dim(x.len())?;
    let w = head.w(j);
    Ok(signed_distance(dot(w, x) + head.bias[j], l2_norm(w)))
}
