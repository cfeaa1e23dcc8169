//! Training objective `L = α·Σ R_i + Σ C_i` on the last layer, and its gradient.
//!
//! `C_i` is the per-sample empirical risk (hinge on the score gap, or
//! cross-entropy). `R_i` depends on the regularizer:
//!
//! * `pmm`: `‖w_y − w_m‖²·‖φ_max‖²` with `m` the competitive class of sample
//!   `i` and `φ_max` the largest feature vector in the batch;
//! * `one_vs_all_l2`: `Σ_j ‖w_j‖²`, once per batch;
//! * `weight_decay`: `coef·‖θ_head‖²` per sample (the harness adds the body);
//! * `none`.
//!
//! The competitive class and the `φ_max` row are re-derived from the current
//! scores at every evaluation and treated as constants when differentiating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{competitive_class, score_batch, LinearHead, ScoreMatrix};
use crate::numkernel::{l2_norm, softmax_stable, squared_distance, DMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Hinge,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawReg")]
pub enum RegKind {
    None,
    WeightDecay { coef: f64 },
    OneVsAllL2,
    Pmm,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum RegName {
    None,
    WeightDecay,
    OneVsAllL2,
    Pmm,
}

// Flat form so that stray keys are rejected for every variant, including the
// ones without fields.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReg {
    kind: RegName,
    coef: Option<f64>,
}

impl TryFrom<RawReg> for RegKind {
    type Error = String;

    fn try_from(raw: RawReg) -> std::result::Result<Self, String> {
        match (raw.kind, raw.coef) {
            (RegName::WeightDecay, Some(coef)) => Ok(RegKind::WeightDecay { coef }),
            (RegName::WeightDecay, None) => Err("weight_decay needs `coef`".into()),
            (_, Some(_)) => Err("`coef` is only valid for weight_decay".into()),
            (RegName::None, None) => Ok(RegKind::None),
            (RegName::OneVsAllL2, None) => Ok(RegKind::OneVsAllL2),
            (RegName::Pmm, None) => Ok(RegKind::Pmm),
        }
    }
}

impl RegKind {
    pub fn validate(&self) -> Result<()> {
        if let RegKind::WeightDecay { coef } = *self {
            if !(coef.is_finite() && coef >= 0.0) {
                return Err(Error::Config(format!(
                    "weight decay coefficient must be finite and >= 0, got {coef}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaSchedule {
    Constant { value: f64 },
    Linear { start: f64, end: f64, total_steps: u64 },
}

impl AlphaSchedule {
    /// Linear ramp from 1e-5 to 1e-3 over a run.
    pub fn linear_preset(total_steps: u64) -> Self {
        AlphaSchedule::Linear {
            start: 1e-5,
            end: 1e-3,
            total_steps: total_steps.max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a.is_finite() && a >= 0.0;
        match *self {
            AlphaSchedule::Constant { value } if !ok(value) => Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {value}"
            ))),
            AlphaSchedule::Linear { start, end, .. } if !ok(start) || !ok(end) => Err(
                Error::Config(format!("alpha endpoints must be finite and >= 0, got {start}, {end}")),
            ),
            AlphaSchedule::Linear { total_steps: 0, .. } => {
                Err(Error::Config("linear alpha schedule needs total_steps >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn alpha_at(schedule: &AlphaSchedule, step: u64) -> f64 {
    match *schedule {
        AlphaSchedule::Constant { value } => value,
        AlphaSchedule::Linear {
            start,
            end,
            total_steps,
        } => {
            let t = step.min(total_steps) as f64 / total_steps as f64;
            // lerp form that returns the endpoints exactly
            start * (1.0 - t) + end * t
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMaxMode {
    #[default]
    StopGradient,
    FlowGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub risk: RiskKind,
    pub reg: RegKind,
    #[serde(default)]
    pub phi_max_mode: PhiMaxMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub risk_sum: f64,
    pub reg_sum: f64,
    pub total: f64,
    pub alpha_used: f64,
}

/// Gradients of the batch objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_w: DMat,
    pub d_b: Vec<f64>,
    /// One row per sample: gradient w.r.t. that sample's feature vector.
    pub d_phi: DMat,
    /// Gradient of the risk term alone w.r.t. the scores.
    pub d_scores: DMat,
}

pub fn hinge_risk(xi: f64) -> f64 {
    (1.0 - xi).max(0.0)
}

/// `−log softmax(s)[y]`.
pub fn ce_risk(scores_row: &[f64], y: usize) -> Result<f64> {
    if y >= scores_row.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            scores_row.len()
        )));
    }
    let max = scores_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores_row.iter().map(|s| (s - max).exp()).sum();
    // (max − s_y) ≥ 0 and ln(sum) ≥ 0, so the result is never negative.
    Ok((max - scores_row[y]) + sum.ln())
}

/// `‖w_y − w_m‖²·‖φ_max‖²`.
pub fn pmm_reg(head: &LinearHead, y: usize, m: usize, phi_max_norm_sq: f64) -> Result<f64> {
    let k = head.num_classes();
    if y >= k || m >= k {
        return Err(Error::invalid(format!(
            "classes ({y}, {m}) out of range for {k} classes"
        )));
    }
    if y == m {
        return Err(Error::invalid(format!(
            "pairwise regularizer needs distinct classes, got {y} twice"
        )));
    }
    if phi_max_norm_sq.is_nan() || phi_max_norm_sq < 0.0 {
        return Err(Error::invalid("phi_max_norm_sq must be >= 0"));
    }
    Ok(squared_distance(head.w(y), head.w(m)) * phi_max_norm_sq)
}

/// `Σ_j ‖w_j‖²` (weights only).
pub fn ova_reg(head: &LinearHead) -> f64 {
    head.weights().as_slice().iter().map(|w| w * w).sum()
}

/// `coef·(‖W‖² + ‖b‖²)` for the head.
pub fn head_weight_decay(head: &LinearHead, coef: f64) -> f64 {
    let sq: f64 = head
        .weights()
        .as_slice()
        .iter()
        .chain(head.bias())
        .map(|p| p * p)
        .sum();
    coef * sq
}

/// Largest row norm and its row index (first one on ties).
pub fn phi_max_norm(features: &DMat) -> Result<(f64, usize)> {
    if features.rows() == 0 {
        return Err(Error::invalid("phi_max_norm of an empty batch"));
    }
    let mut best = (l2_norm(features.row(0)), 0);
    for (i, row) in features.row_iter().enumerate().skip(1) {
        let n = l2_norm(row);
        if n > best.0 {
            best = (n, i);
        }
    }
    Ok(best)
}

fn check_batch(head: &LinearHead, features: &DMat, labels: &[usize]) -> Result<()> {
    if features.cols() != head.feature_dim() {
        return Err(Error::ShapeMismatch {
            op: "objective",
            left: head.weights().shape(),
            right: features.shape(),
        });
    }
    if labels.len() != features.rows() {
        return Err(Error::ShapeMismatch {
            op: "objective labels",
            left: features.shape(),
            right: (labels.len(), 1),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= head.num_classes()) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            head.num_classes()
        )));
    }
    Ok(())
}

fn risk_of(risk: RiskKind, row: &[f64], y: usize) -> Result<f64> {
    match risk {
        RiskKind::Hinge => Ok(hinge_risk(crate::margin::score_gap(row, y)?)),
        RiskKind::CrossEntropy => ce_risk(row, y),
    }
}

fn reg_of(
    reg: RegKind,
    head: &LinearHead,
    scores: &ScoreMatrix,
    labels: &[usize],
    phi_max_sq: f64,
) -> Result<f64> {
    Ok(match reg {
        RegKind::None => 0.0,
        RegKind::WeightDecay { coef } => labels.len() as f64 * head_weight_decay(head, coef),
        RegKind::OneVsAllL2 => ova_reg(head),
        RegKind::Pmm => {
            let mut sum = 0.0;
            for (i, &y) in labels.iter().enumerate() {
                let m = competitive_class(scores.row(i), y)?;
                sum += pmm_reg(head, y, m, phi_max_sq)?;
            }
            sum
        }
    })
}

pub fn objective_batch(
    head: &LinearHead,
    features: &DMat,
    labels: &[usize],
    cfg: &ObjectiveConfig,
    alpha: f64,
) -> Result<ObjectiveValue> {
    check_batch(head, features, labels)?;
    let scores = score_batch(head, features)?;
    let mut risk_sum = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        risk_sum += risk_of(cfg.risk, scores.row(i), y)?;
    }
    let (phi_max, _) = phi_max_norm(features)?;
    let reg_sum = reg_of(cfg.reg, head, &scores, labels, phi_max * phi_max)?;
    Ok(ObjectiveValue {
        risk_sum,
        reg_sum,
        total: alpha * reg_sum + risk_sum,
        alpha_used: alpha,
    })
}

/// `∂(Σ C_i)/∂S`, one row per sample.
pub fn risk_score_gradients(scores: &ScoreMatrix, labels: &[usize], risk: RiskKind) -> Result<DMat> {
    let k = scores.num_classes();
    let mut d = DMat::zeros(scores.num_samples(), k);
    for (i, &y) in labels.iter().enumerate() {
        let row = scores.row(i);
        match risk {
            RiskKind::CrossEntropy => {
                let p = softmax_stable(row);
                let out = d.row_mut(i);
                out.copy_from_slice(&p);
                out[y] -= 1.0;
            }
            RiskKind::Hinge => {
                let m = competitive_class(row, y)?;
                // Subgradient 0 at ξ = 1 exactly.
                if row[y] - row[m] < 1.0 {
                    let out = d.row_mut(i);
                    out[y] = -1.0;
                    out[m] = 1.0;
                }
            }
        }
    }
    Ok(d)
}

/// Chain rule through the scoring layer: `(dW, db, dΦ)` from `dS`.
/// Samples are accumulated serially in batch order.
pub(crate) fn head_backward(head: &LinearHead, features: &DMat, d_scores: &DMat) -> (DMat, Vec<f64>, DMat) {
    let (k, d) = (head.num_classes(), head.feature_dim());
    let n = features.rows();
    let mut d_w = DMat::zeros(k, d);
    let mut d_b = vec![0.0; k];
    let mut d_phi = DMat::zeros(n, d);
    for i in 0..n {
        let phi = features.row(i);
        let ds = d_scores.row(i);
        for j in 0..k {
            let g = ds[j];
            if g == 0.0 {
                continue;
            }
            for (w, p) in d_w.row_mut(j).iter_mut().zip(phi) {
                *w += g * p;
            }
            d_b[j] += g;
            for (dp, w) in d_phi.row_mut(i).iter_mut().zip(head.w(j)) {
                *dp += g * w;
            }
        }
    }
    (d_w, d_b, d_phi)
}

pub fn objective_gradients(
    head: &LinearHead,
    features: &DMat,
    labels: &[usize],
    cfg: &ObjectiveConfig,
    alpha: f64,
) -> Result<GradientSet> {
    check_batch(head, features, labels)?;
    let (k, d) = (head.num_classes(), head.feature_dim());
    let n = features.rows();
    let scores = score_batch(head, features)?;
    let d_scores = risk_score_gradients(&scores, labels, cfg.risk)?;

    let (mut d_w, mut d_b, mut d_phi) = head_backward(head, features, &d_scores);
    debug_assert_eq!(d_w.shape(), (k, d));
    debug_assert_eq!(d_phi.rows(), n);

    match cfg.reg {
        RegKind::None => {}
        RegKind::WeightDecay { coef } => {
            let c = alpha * coef * n as f64 * 2.0;
            for (g, w) in d_w.as_mut_slice().iter_mut().zip(head.weights().as_slice()) {
                *g += c * w;
            }
            for (g, b) in d_b.iter_mut().zip(head.bias()) {
                *g += c * b;
            }
        }
        RegKind::OneVsAllL2 => {
            for (g, w) in d_w.as_mut_slice().iter_mut().zip(head.weights().as_slice()) {
                *g += alpha * 2.0 * w;
            }
        }
        RegKind::Pmm => {
            let (phi_max, max_row) = phi_max_norm(features)?;
            let phi_max_sq = phi_max * phi_max;
            let mut pair_sq_sum = 0.0;
            for (i, &y) in labels.iter().enumerate() {
                let m = competitive_class(scores.row(i), y)?;
                let diff: Vec<f64> = head.w(y).iter().zip(head.w(m)).map(|(a, b)| a - b).collect();
                pair_sq_sum += diff.iter().map(|v| v * v).sum::<f64>();
                let c = alpha * 2.0 * phi_max_sq;
                for (g, v) in d_w.row_mut(y).iter_mut().zip(&diff) {
                    *g += c * v;
                }
                for (g, v) in d_w.row_mut(m).iter_mut().zip(&diff) {
                    *g -= c * v;
                }
            }
            if cfg.phi_max_mode == PhiMaxMode::FlowGradient {
                let c = alpha * pair_sq_sum * 2.0;
                let phi = features.row(max_row).to_vec();
                for (g, p) in d_phi.row_mut(max_row).iter_mut().zip(&phi) {
                    *g += c * p;
                }
            }
        }
    }

    Ok(GradientSet {
        d_w,
        d_b,
        d_phi,
        d_scores,
    })
}
