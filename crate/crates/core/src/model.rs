//! Multi-layer perceptron body plus a [`LinearHead`], with hand-written backprop.
//!
//! The body maps inputs to features φ; the head scores φ. An empty body makes
//! the model a plain multi-class linear classifier on the raw inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{score_batch, LinearHead, ScoreMatrix};
use crate::numkernel::{matmul, DMat, RngStream};
use crate::objective::{head_backward, GradientSet};

const INIT_STREAM_TAG: u64 = 0x6d6f_6465_6c00;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation and the activation output.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One hidden layer in a model description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weights: DMat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl AffineLayer {
    pub fn new(weights: DMat, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::ShapeMismatch {
                op: "AffineLayer::new",
                left: weights.shape(),
                right: (bias.len(), 1),
            });
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(AffineLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    body: Vec<AffineLayer>,
    head: LinearHead,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: DMat,
    /// Per body layer: pre-activations and activations.
    pub pre: Vec<DMat>,
    pub post: Vec<DMat>,
    pub features: DMat,
    pub scores: ScoreMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_w: DMat,
    pub d_b: Vec<f64>,
}

/// Parameter gradients laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub body: Vec<LayerGrads>,
    pub head: LayerGrads,
}

impl MlpGradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        let body = model
            .body
            .iter()
            .map(|l| LayerGrads {
                d_w: DMat::zeros(l.out_dim(), l.in_dim()),
                d_b: vec![0.0; l.out_dim()],
            })
            .collect();
        MlpGradients {
            body,
            head: LayerGrads {
                d_w: DMat::zeros(model.num_classes(), model.feature_dim()),
                d_b: vec![0.0; model.num_classes()],
            },
        }
    }

    /// Slices in model parameter order: each body layer (W, b), then head (W, b).
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.body.len() + 2);
        for g in self.body.iter().chain(std::iter::once(&self.head)) {
            out.push(g.d_w.as_slice());
            out.push(g.d_b.as_slice());
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.body.len() + 2);
        for g in self.body.iter_mut().chain(std::iter::once(&mut self.head)) {
            out.push(g.d_w.as_mut_slice());
            out.push(g.d_b.as_mut_slice());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn uniform_matrix(rng: &mut RngStream, rows: usize, cols: usize, bound: f64) -> DMat {
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    DMat::from_vec(rows, cols, data).expect("finite init")
}

/// He-uniform bound for relu layers, Glorot-uniform otherwise.
pub fn init_bound(activation: Activation, fan_in: usize, fan_out: usize) -> f64 {
    match activation {
        Activation::Relu => (6.0 / fan_in as f64).sqrt(),
        _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}

impl Mlp {
    /// Random model with zero biases, deterministic in `seed`.
    pub fn init(input_dim: usize, hidden: &[LayerSpec], num_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "need at least two classes, got {num_classes}"
            )));
        }
        if let Some(bad) = hidden.iter().find(|l| l.width == 0) {
            return Err(Error::invalid(format!("hidden layer width must be positive: {bad:?}")));
        }
        let mut rng = RngStream::derive(seed, INIT_STREAM_TAG);
        let mut body = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for spec in hidden {
            let bound = init_bound(spec.activation, fan_in, spec.width);
            let weights = uniform_matrix(&mut rng, spec.width, fan_in, bound);
            body.push(AffineLayer::new(weights, vec![0.0; spec.width], spec.activation)?);
            fan_in = spec.width;
        }
        let bound = init_bound(Activation::Identity, fan_in, num_classes);
        let head = LinearHead::new(
            uniform_matrix(&mut rng, num_classes, fan_in, bound),
            vec![0.0; num_classes],
        )?;
        Ok(Mlp { body, head })
    }

    pub fn from_parts(body: Vec<AffineLayer>, head: LinearHead) -> Result<Self> {
        for pair in body.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch {
                    op: "Mlp::from_parts",
                    left: pair[0].weights.shape(),
                    right: pair[1].weights.shape(),
                });
            }
        }
        if let Some(last) = body.last() {
            if last.out_dim() != head.feature_dim() {
                return Err(Error::ShapeMismatch {
                    op: "Mlp::from_parts",
                    left: last.weights.shape(),
                    right: head.weights().shape(),
                });
            }
        }
        Ok(Mlp { body, head })
    }

    pub fn body(&self) -> &[AffineLayer] {
        &self.body
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut LinearHead {
        &mut self.head
    }

    pub fn input_dim(&self) -> usize {
        self.body
            .first()
            .map_or(self.head.feature_dim(), AffineLayer::in_dim)
    }

    pub fn feature_dim(&self) -> usize {
        self.head.feature_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.body
            .iter()
            .map(|l| LayerSpec {
                width: l.out_dim(),
                activation: l.activation,
            })
            .collect()
    }

    /// Parameter slices in the same order as [`MlpGradients::slices`].
    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.body.len() + 2);
        for l in &self.body {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.head.weights().as_slice());
        out.push(self.head.bias());
        out
    }

    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.body.len() + 2);
        for l in &mut self.body {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        let (w, b) = self.head.parts_mut();
        out.push(w);
        out.push(b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_slices().iter().map(|s| s.len()).sum()
    }

    fn check_input(&self, x: &DMat) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: (self.input_dim(), 1),
                right: x.shape(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &DMat) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.body.len());
        let mut post: Vec<DMat> = Vec::with_capacity(self.body.len());
        for layer in &self.body {
            let input = post.last().unwrap_or(x);
            let mut z = matmul(input, &layer.weights.transpose())?;
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let mut a = z.clone();
            a.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            pre.push(z);
            post.push(a);
        }
        let features = post.last().unwrap_or(x).clone();
        let scores = score_batch(&self.head, &features)?;
        Ok(ForwardTrace {
            input: x.clone(),
            pre,
            post,
            features,
            scores,
        })
    }

    pub fn extract_features(&self, x: &DMat) -> Result<DMat> {
        Ok(self.forward(x)?.features)
    }

    /// Backward pass from score gradients plus an extra feature gradient
    /// (e.g. from a feature-dependent regularizer).
    pub fn backward(&self, trace: &ForwardTrace, d_scores: &DMat, d_phi_extra: &DMat) -> Result<MlpGradients> {
        let n = trace.features.rows();
        if d_scores.shape() != (n, self.num_classes()) {
            return Err(Error::ShapeMismatch {
                op: "backward d_scores",
                left: (n, self.num_classes()),
                right: d_scores.shape(),
            });
        }
        if d_phi_extra.shape() != trace.features.shape() {
            return Err(Error::ShapeMismatch {
                op: "backward d_phi_extra",
                left: trace.features.shape(),
                right: d_phi_extra.shape(),
            });
        }
        let (d_w, d_b, mut d_phi) = head_backward(&self.head, &trace.features, d_scores);
        for (g, e) in d_phi.as_mut_slice().iter_mut().zip(d_phi_extra.as_slice()) {
            *g += e;
        }
        let body = self.body_backward(trace, d_phi)?;
        Ok(MlpGradients {
            body,
            head: LayerGrads { d_w, d_b },
        })
    }

    /// Backward pass when the head gradients and feature gradients come
    /// straight from the objective.
    pub fn backward_objective(&self, trace: &ForwardTrace, grads: &GradientSet) -> Result<MlpGradients> {
        if grads.d_phi.shape() != trace.features.shape() {
            return Err(Error::ShapeMismatch {
                op: "backward_objective",
                left: trace.features.shape(),
                right: grads.d_phi.shape(),
            });
        }
        let body = self.body_backward(trace, grads.d_phi.clone())?;
        Ok(MlpGradients {
            body,
            head: LayerGrads {
                d_w: grads.d_w.clone(),
                d_b: grads.d_b.clone(),
            },
        })
    }

    fn body_backward(&self, trace: &ForwardTrace, d_features: DMat) -> Result<Vec<LayerGrads>> {
        if trace.pre.len() != self.body.len() || trace.post.len() != self.body.len() {
            return Err(Error::invalid("trace was not produced by this model"));
        }
        let mut grads = Vec::with_capacity(self.body.len());
        let mut d_out = d_features;
        for (l, layer) in self.body.iter().enumerate().rev() {
            let pre = &trace.pre[l];
            let post = &trace.post[l];
            let input = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            let mut d_pre = d_out;
            for ((g, &z), &a) in d_pre
                .as_mut_slice()
                .iter_mut()
                .zip(pre.as_slice())
                .zip(post.as_slice())
            {
                *g *= layer.activation.derivative(z, a);
            }
            let mut d_w = DMat::zeros(layer.out_dim(), layer.in_dim());
            let mut d_b = vec![0.0; layer.out_dim()];
            for i in 0..d_pre.rows() {
                let x = input.row(i);
                for (j, &g) in d_pre.row(i).iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (w, xv) in d_w.row_mut(j).iter_mut().zip(x) {
                        *w += g * xv;
                    }
                    d_b[j] += g;
                }
            }
            d_out = matmul(&d_pre, &layer.weights)?;
            grads.push(LayerGrads { d_w, d_b });
        }
        grads.reverse();
        Ok(grads)
    }

    /// `p ← p − lr·g` for every parameter.
    pub fn sgd_step(&mut self, grads: &MlpGradients, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        let shapes_match = self
            .parameter_slices()
            .iter()
            .zip(grads.slices())
            .all(|(p, g)| p.len() == g.len())
            && grads.body.len() == self.body.len();
        if !shapes_match {
            return Err(Error::invalid("gradient layout does not match the model"));
        }
        for (p, g) in self.parameter_slices_mut().into_iter().zip(grads.slices()) {
            for (pv, gv) in p.iter_mut().zip(g) {
                *pv -= lr * gv;
            }
        }
        Ok(())
    }
}
