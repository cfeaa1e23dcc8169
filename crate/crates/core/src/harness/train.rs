use serde::{Deserialize, Serialize};

use crate::data::{batch_iter, LabeledDataset, Standardizer};
use crate::error::{Error, Result};
use crate::margin::{normalized_feature_margin, predict};
use crate::model::{ForwardTrace, Mlp, MlpGradients};
use crate::numkernel::RngStream;
use crate::objective::{
    alpha_at, objective_batch, objective_gradients, phi_max_norm, ObjectiveConfig,
    ObjectiveValue, RegKind,
};
use crate::selector::{select_mms, select_random, SelectionMode};

use super::checkpoint::Checkpoint;
use super::config::{lr_at, TrainConfig};

const EPOCH_STREAM_TAG: u64 = 0x6570_6f63_6800;
const SELECT_STREAM_TAG: u64 = 0x7365_6c00;

/// Seed of the candidate-batch shuffle for one epoch of a run.
pub fn epoch_seed(run_seed: u64, epoch: u64) -> u64 {
    RngStream::derive(run_seed ^ EPOCH_STREAM_TAG, epoch).next_u64()
}

/// Initial state of the random-selection stream for a run.
pub fn selection_rng(run_seed: u64) -> RngStream {
    RngStream::derive(run_seed, SELECT_STREAM_TAG)
}

/// One row of the metrics series. Errors are measured on the parameters
/// before the update of `step`; the batch fields describe that update and are
/// absent on the closing record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub lr: f64,
    pub alpha: f64,
    pub train_error: f64,
    pub val_error: f64,
    pub risk_sum: Option<f64>,
    pub reg_sum: Option<f64>,
    pub mean_mms: Option<f64>,
    pub min_norm_pairwise_margin: f64,
}

/// What happened at one step, for conformance and bookkeeping checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: u64,
    /// Training-set rows of the candidate batch, in batch order.
    pub candidates: Vec<usize>,
    /// Positions within `candidates` that were trained on.
    pub positions: Vec<usize>,
    pub alpha: f64,
    pub lr: f64,
    pub objective: ObjectiveValue,
    pub mean_mms: Option<f64>,
}

impl StepLog {
    pub fn selected(&self) -> Vec<usize> {
        self.positions.iter().map(|&p| self.candidates[p]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub error: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(model: &Mlp, ds: &LabeledDataset) -> Result<Evaluation> {
    if ds.num_classes() > model.num_classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, model has {}",
            ds.num_classes(),
            model.num_classes()
        )));
    }
    let scores = model.forward(ds.features())?.scores;
    let k = model.num_classes();
    let mut confusion = vec![vec![0; k]; k];
    let mut wrong = 0usize;
    for (&y, p) in ds.labels().iter().zip(predict(&scores)) {
        confusion[y][p] += 1;
        wrong += usize::from(p != y);
    }
    Ok(Evaluation {
        error: wrong as f64 / ds.len() as f64,
        confusion,
    })
}

/// Smallest normalized margin between each sample's true class and its
/// competitive class, with `φ_max` taken over the whole dataset. NaN when
/// every feature vector is zero.
pub fn min_norm_pairwise_margin(model: &Mlp, ds: &LabeledDataset) -> Result<f64> {
    let features = model.extract_features(ds.features())?;
    let (phi_max, _) = phi_max_norm(&features)?;
    if phi_max == 0.0 {
        return Ok(f64::NAN);
    }
    let mut min = f64::INFINITY;
    for (row, &y) in features.row_iter().zip(ds.labels()) {
        min = min.min(normalized_feature_margin(model.head(), row, y, phi_max)?);
    }
    Ok(min)
}

fn body_square_sum(model: &Mlp) -> f64 {
    let mut sq = 0.0;
    for layer in model.body() {
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            sq += v * v;
        }
    }
    sq
}

/// Batch objective of the whole model on a forward trace. Weight decay
/// covers every parameter, body included.
pub fn model_objective(
    model: &Mlp,
    trace: &ForwardTrace,
    labels: &[usize],
    cfg: &ObjectiveConfig,
    alpha: f64,
) -> Result<ObjectiveValue> {
    let mut v = objective_batch(model.head(), &trace.features, labels, cfg, alpha)?;
    if let RegKind::WeightDecay { coef } = cfg.reg {
        v.reg_sum += labels.len() as f64 * coef * body_square_sum(model);
        v.total = alpha * v.reg_sum + v.risk_sum;
    }
    Ok(v)
}

/// Gradient of [`model_objective`] with respect to every parameter.
pub fn model_gradients(
    model: &Mlp,
    trace: &ForwardTrace,
    labels: &[usize],
    cfg: &ObjectiveConfig,
    alpha: f64,
) -> Result<MlpGradients> {
    let head_grads = objective_gradients(model.head(), &trace.features, labels, cfg, alpha)?;
    let mut grads = model.backward_objective(trace, &head_grads)?;
    if let RegKind::WeightDecay { coef } = cfg.reg {
        let c = alpha * coef * labels.len() as f64 * 2.0;
        for (g, layer) in grads.body.iter_mut().zip(model.body()) {
            for (gv, w) in g.d_w.as_mut_slice().iter_mut().zip(layer.weights.as_slice()) {
                *gv += c * w;
            }
            for (gv, b) in g.d_b.iter_mut().zip(&layer.bias) {
                *gv += c * b;
            }
        }
    }
    Ok(grads)
}

/// Sequential trainer: candidate batch, selection, objective, SGD update.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    train: &'a LabeledDataset,
    val: &'a LabeledDataset,
    model: Mlp,
    step: u64,
    finished: bool,
    select_rng: RngStream,
    velocity: Option<MlpGradients>,
    input_map: Option<Standardizer>,
    epoch_cache: Option<(u64, Vec<Vec<usize>>)>,
    step_log: Option<Vec<StepLog>>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, train: &'a LabeledDataset, val: &'a LabeledDataset) -> Result<Self> {
        let model = Mlp::init(train.dim(), &cfg.hidden, train.num_classes(), cfg.seed)?;
        let rng = selection_rng(cfg.seed);
        Self::assemble(cfg, train, val, model, 0, false, rng, None)
    }

    pub fn from_checkpoint(
        ck: &Checkpoint,
        train: &'a LabeledDataset,
        val: &'a LabeledDataset,
    ) -> Result<Self> {
        let cfg = ck.config()?;
        if ck.step > cfg.total_steps {
            return Err(Error::Checkpoint(format!(
                "step {} is past total_steps {}",
                ck.step, cfg.total_steps
            )));
        }
        let mut t = Self::assemble(
            cfg,
            train,
            val,
            ck.model.clone(),
            ck.step,
            ck.finished,
            RngStream::from_state(ck.rng_state),
            ck.velocity.clone(),
        )?;
        t.input_map = ck.input_map.clone();
        Ok(t)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        cfg: TrainConfig,
        train: &'a LabeledDataset,
        val: &'a LabeledDataset,
        model: Mlp,
        step: u64,
        finished: bool,
        select_rng: RngStream,
        velocity: Option<MlpGradients>,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::invalid("training and validation sets must be non-empty"));
        }
        if train.dim() != model.input_dim() || val.dim() != model.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "Trainer",
                left: (model.input_dim(), 1),
                right: (train.dim(), val.dim()),
            });
        }
        if train.num_classes() != model.num_classes() || val.num_classes() != model.num_classes() {
            return Err(Error::invalid(format!(
                "class counts differ: train {}, validation {}, model {}",
                train.num_classes(),
                val.num_classes(),
                model.num_classes()
            )));
        }
        if cfg.selection.small_batch > train.len() {
            return Err(Error::Config(format!(
                "small_batch {} exceeds the {} training samples",
                cfg.selection.small_batch,
                train.len()
            )));
        }
        Ok(Trainer {
            cfg,
            train,
            val,
            model,
            step,
            finished,
            select_rng,
            velocity,
            input_map: None,
            epoch_cache: None,
            step_log: None,
        })
    }

    /// Input standardization to store alongside the model in checkpoints.
    pub fn with_input_map(mut self, map: Option<Standardizer>) -> Self {
        self.input_map = map;
        self
    }

    /// Keep a [`StepLog`] for every step from now on.
    pub fn record_steps(&mut self) {
        self.step_log.get_or_insert_with(Vec::new);
    }

    pub fn take_step_log(&mut self) -> Vec<StepLog> {
        self.step_log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn into_model(self) -> Mlp {
        self.model
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            config_toml: self.cfg.to_toml()?,
            step: self.step,
            finished: self.finished,
            rng_state: self.select_rng.state(),
            model: self.model.clone(),
            velocity: self.velocity.clone(),
            input_map: self.input_map.clone(),
        })
    }

    /// Training-set rows of the candidate batch used at `step`. Each epoch is
    /// a fresh seeded shuffle cut into batches of `big_batch`; the last batch
    /// of an epoch may be short.
    pub fn candidates(&mut self, step: u64) -> Result<Vec<usize>> {
        let n = self.train.len();
        let per_epoch = n.div_ceil(self.cfg.selection.big_batch) as u64;
        let (epoch, slot) = (step / per_epoch, (step % per_epoch) as usize);
        let stale = self.epoch_cache.as_ref().is_none_or(|(e, _)| *e != epoch);
        if stale {
            let batches = batch_iter(n, self.cfg.selection.big_batch, epoch_seed(self.cfg.seed, epoch))?;
            self.epoch_cache = Some((epoch, batches));
        }
        Ok(self.epoch_cache.as_ref().expect("filled above").1[slot].clone())
    }

    fn evaluate_now(&self) -> Result<MetricsRecord> {
        Ok(MetricsRecord {
            step: self.step,
            lr: lr_at(&self.cfg, self.step),
            alpha: alpha_at(&self.cfg.alpha, self.step),
            train_error: evaluate(&self.model, self.train)?.error,
            val_error: evaluate(&self.model, self.val)?.error,
            risk_sum: None,
            reg_sum: None,
            mean_mms: None,
            min_norm_pairwise_margin: min_norm_pairwise_margin(&self.model, self.val)?,
        })
    }

    fn train_step(&mut self) -> Result<StepLog> {
        let t = self.step;
        let candidates = self.candidates(t)?;
        let b = self.cfg.selection.small_batch.min(candidates.len());
        let (positions, mean_mms) = match self.cfg.selection.mode {
            SelectionMode::Mms => {
                let x = self.train.features().select_rows(&candidates)?;
                let scores = self.model.forward(&x)?.scores;
                let r = select_mms(&scores, self.model.head(), b)?;
                (r.indices, r.mean_mms)
            }
            SelectionMode::Random => {
                let r = select_random(candidates.len(), b, &mut self.select_rng)?;
                (r.indices, None)
            }
        };
        let chosen: Vec<usize> = positions.iter().map(|&p| candidates[p]).collect();
        let (x, y) = self.train.gather(&chosen)?;

        let alpha = alpha_at(&self.cfg.alpha, t);
        let lr = lr_at(&self.cfg, t);
        let trace = self.model.forward(&x)?;
        let objective = model_objective(&self.model, &trace, &y, &self.cfg.objective, alpha)?;
        let mut grads = model_gradients(&self.model, &trace, &y, &self.cfg.objective, alpha)?;

        // Step on the batch mean.
        let inv = 1.0 / b as f64;
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|g| *g *= inv);
        }
        if !grads.is_finite() {
            return Err(Error::invalid(format!("non-finite gradient at step {t}")));
        }
        if self.cfg.momentum > 0.0 {
            let mu = self.cfg.momentum;
            let v = self
                .velocity
                .get_or_insert_with(|| MlpGradients::zeros_like(&self.model));
            for (vs, gs) in v.slices_mut().into_iter().zip(grads.slices()) {
                for (vv, gv) in vs.iter_mut().zip(gs) {
                    *vv = mu * *vv + gv;
                }
            }
            self.model.sgd_step(v, lr)?;
        } else {
            self.model.sgd_step(&grads, lr)?;
        }

        Ok(StepLog {
            step: t,
            candidates,
            positions,
            alpha,
            lr,
            objective,
            mean_mms,
        })
    }

    fn reached_target(&self, rec: &MetricsRecord) -> bool {
        self.cfg.early_stop
            && self
                .cfg
                .target_accuracy
                .is_some_and(|target| 1.0 - rec.val_error >= target)
    }

    /// Trains until step `until` (clamped to `total_steps`) and returns the
    /// records emitted on the way. The closing record at `total_steps` is
    /// emitted only by the call that reaches it, so a run split at any step
    /// yields the same series as an uninterrupted one.
    pub fn run_to(&mut self, until: u64) -> Result<Vec<MetricsRecord>> {
        let until = until.min(self.cfg.total_steps);
        let mut records = Vec::new();
        if self.finished {
            return Ok(records);
        }
        while self.step < until {
            let mut probe = None;
            if self.step.is_multiple_of(self.cfg.eval_every) {
                let rec = self.evaluate_now()?;
                if self.reached_target(&rec) {
                    records.push(rec);
                    self.finished = true;
                    return Ok(records);
                }
                probe = Some(rec);
            }
            let log = self.train_step()?;
            if let Some(mut rec) = probe {
                rec.risk_sum = Some(log.objective.risk_sum);
                rec.reg_sum = Some(log.objective.reg_sum);
                rec.mean_mms = log.mean_mms;
                records.push(rec);
            }
            if let Some(l) = self.step_log.as_mut() {
                l.push(log);
            }
            self.step += 1;
        }
        if self.step == self.cfg.total_steps {
            records.push(self.evaluate_now()?);
            self.finished = true;
        }
        Ok(records)
    }

    pub fn run(&mut self) -> Result<Vec<MetricsRecord>> {
        self.run_to(self.cfg.total_steps)
    }
}

/// Trains a fresh model for the whole run.
pub fn train_run(
    cfg: &TrainConfig,
    train: &LabeledDataset,
    val: &LabeledDataset,
) -> Result<(Mlp, Vec<MetricsRecord>)> {
    let mut t = Trainer::new(cfg.clone(), train, val)?;
    let records = t.run()?;
    Ok((t.into_model(), records))
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub final_train_accuracy: f64,
    pub final_val_accuracy: f64,
    /// First evaluated step whose validation accuracy reached the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_to_target: Option<u64>,
    pub config_hash: String,
    pub final_min_margin: f64,
    pub final_step: u64,
}

impl RunSummary {
    pub fn from_records(run_id: &str, cfg: &TrainConfig, records: &[MetricsRecord]) -> Result<Self> {
        let last = records
            .last()
            .ok_or_else(|| Error::invalid("cannot summarize an empty metrics series"))?;
        let steps_to_target = cfg.target_accuracy.and_then(|target| {
            records
                .iter()
                .find(|r| 1.0 - r.val_error >= target)
                .map(|r| r.step)
        });
        Ok(RunSummary {
            run_id: run_id.to_owned(),
            final_train_accuracy: 1.0 - last.train_error,
            final_val_accuracy: 1.0 - last.val_error,
            steps_to_target,
            config_hash: cfg.hash()?,
            final_min_margin: last.min_norm_pairwise_margin,
            final_step: last.step,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
