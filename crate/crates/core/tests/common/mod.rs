//! Independent scalar re-implementations used as oracles, plus a generator of
//! instances on which no argmax changes under small perturbations.

#![allow(dead_code, clippy::needless_range_loop)]

use marginkit::numkernel::RngStream;
use marginkit::objective::{PhiMaxMode, RegKind, RiskKind};

pub const FD_STEP: f64 = 1e-5;

/// Plain nested-vector problem instance: head `w`, `b`; features `phi`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

pub fn scores(w: &[Vec<f64>], b: &[f64], phi: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(b)
        .map(|(wj, bj)| {
            let mut s = *bj;
            for l in 0..phi.len() {
                s += wj[l] * phi[l];
            }
            s
        })
        .collect()
}

/// Highest score among classes other than `y`, lowest index on ties.
pub fn rival(s: &[f64], y: usize) -> usize {
    let mut best = usize::MAX;
    for j in 0..s.len() {
        if j != y && (best == usize::MAX || s[j] > s[best]) {
            best = j;
        }
    }
    best
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `(risk_sum, reg_sum)` by direct loops. `frozen_phi_max_sq` replaces the
/// batch maximum when given.
pub fn objective_parts(
    inst: &Instance,
    risk: RiskKind,
    reg: RegKind,
    frozen_phi_max_sq: Option<f64>,
) -> (f64, f64) {
    let mut risk_sum = 0.0;
    let mut pmm = 0.0;
    let phi_max_sq = frozen_phi_max_sq
        .unwrap_or_else(|| inst.phi.iter().map(|p| sq_norm(p)).fold(0.0, f64::max));
    for (phi, &y) in inst.phi.iter().zip(&inst.y) {
        let s = scores(&inst.w, &inst.b, phi);
        let m = rival(&s, y);
        risk_sum += match risk {
            RiskKind::Hinge => (1.0 - (s[y] - s[m])).max(0.0),
            RiskKind::CrossEntropy => {
                let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = s.iter().map(|v| (v - max).exp()).sum();
                max + z.ln() - s[y]
            }
        };
        let diff: Vec<f64> = inst.w[y].iter().zip(&inst.w[m]).map(|(a, b)| a - b).collect();
        pmm += sq_norm(&diff) * phi_max_sq;
    }
    let w_sq: f64 = inst.w.iter().map(|r| sq_norm(r)).sum();
    let reg_sum = match reg {
        RegKind::None => 0.0,
        RegKind::WeightDecay { coef } => inst.y.len() as f64 * coef * (w_sq + sq_norm(&inst.b)),
        RegKind::OneVsAllL2 => w_sq,
        RegKind::Pmm => pmm,
    };
    (risk_sum, reg_sum)
}

pub fn objective_total(
    inst: &Instance,
    risk: RiskKind,
    reg: RegKind,
    alpha: f64,
    frozen_phi_max_sq: Option<f64>,
) -> f64 {
    let (r, g) = objective_parts(inst, risk, reg, frozen_phi_max_sq);
    alpha * g + r
}

/// Central difference of `f` in one coordinate.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + FD_STEP) - f(x0 - FD_STEP)) / (2.0 * FD_STEP)
}

/// Relative 1e-4 with a 1e-7 absolute floor.
pub fn grad_close(analytic: f64, numeric: f64) -> bool {
    let tol = (1e-4 * analytic.abs().max(numeric.abs())).max(1e-7);
    (analytic - numeric).abs() <= tol
}

/// Every derivative the objective has: head weights, biases and features.
#[derive(Debug, Clone)]
pub struct NumericGrads {
    pub d_w: Vec<Vec<f64>>,
    pub d_b: Vec<f64>,
    pub d_phi: Vec<Vec<f64>>,
}

pub fn numeric_grads(
    inst: &Instance,
    risk: RiskKind,
    reg: RegKind,
    mode: PhiMaxMode,
    alpha: f64,
) -> NumericGrads {
    let frozen = match mode {
        PhiMaxMode::StopGradient => Some(
            inst.phi
                .iter()
                .map(|p| sq_norm(p))
                .fold(0.0, f64::max),
        ),
        PhiMaxMode::FlowGradient => None,
    };
    let mut work = inst.clone();
    let eval = |w: &Instance| objective_total(w, risk, reg, alpha, frozen);

    let mut d_w = inst.w.clone();
    for j in 0..inst.w.len() {
        for l in 0..inst.w[j].len() {
            let x0 = inst.w[j][l];
            d_w[j][l] = central_diff(
                |x| {
                    work.w[j][l] = x;
                    let v = eval(&work);
                    work.w[j][l] = x0;
                    v
                },
                x0,
            );
        }
    }
    let mut d_b = inst.b.clone();
    for j in 0..inst.b.len() {
        let x0 = inst.b[j];
        d_b[j] = central_diff(
            |x| {
                work.b[j] = x;
                let v = eval(&work);
                work.b[j] = x0;
                v
            },
            x0,
        );
    }
    let mut d_phi = inst.phi.clone();
    for i in 0..inst.phi.len() {
        for l in 0..inst.phi[i].len() {
            let x0 = inst.phi[i][l];
            d_phi[i][l] = central_diff(
                |x| {
                    work.phi[i][l] = x;
                    let v = eval(&work);
                    work.phi[i][l] = x0;
                    v
                },
                x0,
            );
        }
    }
    NumericGrads { d_w, d_b, d_phi }
}

/// Margin by which a decision survives: gap between the rival and the
/// runner-up, distance of ξ from the hinge kink, and the gap between the two
/// largest feature norms.
pub fn stability_margin(inst: &Instance) -> f64 {
    let mut worst = f64::INFINITY;
    for (phi, &y) in inst.phi.iter().zip(&inst.y) {
        let s = scores(&inst.w, &inst.b, phi);
        let m = rival(&s, y);
        for j in 0..s.len() {
            if j != y && j != m {
                worst = worst.min(s[m] - s[j]);
            }
        }
        worst = worst.min((s[y] - s[m] - 1.0).abs());
    }
    let mut norms: Vec<f64> = inst.phi.iter().map(|p| sq_norm(p)).collect();
    norms.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if norms.len() > 1 {
        worst = worst.min(norms[0] - norms[1]);
    }
    worst
}

/// Random instance whose competitive classes, hinge activity and largest
/// feature row do not change within ±1e-3 of the evaluation point.
pub fn stable_instance(rng: &mut RngStream) -> Instance {
    loop {
        let k = 2 + rng.below(4);
        let d = 1 + rng.below(4);
        let n = 1 + rng.below(5);
        let inst = Instance {
            w: (0..k)
                .map(|_| (0..d).map(|_| rng.uniform(-1.5, 1.5)).collect())
                .collect(),
            b: (0..k).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            phi: (0..n)
                .map(|_| (0..d).map(|_| rng.normal()).collect())
                .collect(),
            y: (0..n).map(|_| rng.below(k)).collect(),
        };
        if stability_margin(&inst) > 1e-3 {
            return inst;
        }
    }
}
