// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Training loop, configuration, loss and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod loss;

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TAU_ORTH};
pub use config::{DatasetKind, LrSchedule, TrainConfig};
pub use loss::{margin_loss, pair_norm_backward, MarginLoss};

use crate::certify::{evaluate_cra, pair_lipschitz, CraReport};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::FeatureMap;
use crate::linalg::Matrix;
use crate::manifold::{
    epoch_retraction, stabilized_step, AdamState, ManifoldAdamConfig, ManifoldAdamState,
};
use crate::model::{Model, ModelGrads};

/// Examples per unit of parallel work inside a batch; partial sums are
/// reduced in chunk order.
pub const GRAD_CHUNK: usize = 16;

/// Optimizer state for every parameter of a [`Model`].
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: ManifoldAdamConfig,
    pub r: Vec<ManifoldAdamState>,
    pub m: Vec<ManifoldAdamState>,
    pub bias: Vec<AdamState>,
    pub pos: Vec<AdamState>,
    pub head_v: AdamState,
    pub head_bias: AdamState,
    /// Completed optimizer steps.
    pub steps: u64,
}

impl Optimizer {
    pub fn new(model: &Model, config: ManifoldAdamConfig) -> Result<Self> {
        config.validate()?;
        let mut r = Vec::new();
        let mut m = Vec::new();
        for b in &model.blocks {
            r.push(ManifoldAdamState::new(&b.r, config)?);
            m.push(ManifoldAdamState::new(&b.m, config)?);
        }
        Ok(Optimizer {
            config,
            r,
            m,
            bias: model.blocks.iter().map(|b| AdamState::new(b.bias.len())).collect(),
            pos: model.blocks.iter().map(|b| AdamState::new(b.pos.len())).collect(),
            head_v: AdamState::new(model.head_v.as_slice().len()),
            head_bias: AdamState::new(model.head_bias.len()),
            steps: 0,
        })
    }

    /// Sets the learning rate of every parameter state.
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
        for st in self.r.iter_mut().chain(self.m.iter_mut()) {
            st.config.lr = lr;
        }
    }

    /// One update of every parameter from batch-mean gradients.
    pub fn apply(&mut self, model: &mut Model, grads: &ModelGrads) -> Result<()> {
        if grads.blocks.len() != model.blocks.len() || self.r.len() != model.blocks.len() {
            return Err(Error::dims(
                "optimizer",
                format!(
                    "{} blocks, {} gradients, {} states",
                    model.blocks.len(),
                    grads.blocks.len(),
                    self.r.len()
                ),
            ));
        }
        let cfg = self.config;
        for (i, (block, g)) in model.blocks.iter_mut().zip(&grads.blocks).enumerate() {
            block.r = stabilized_step(&mut self.r[i], &block.r, &g.r)?;
            block.m = stabilized_step(&mut self.m[i], &block.m, &g.m)?;
            self.bias[i].step(&cfg, &mut block.bias, &g.bias)?;
            self.pos[i].step(&cfg, &mut block.pos, &g.pos)?;
        }
        self.head_v
            .step(&cfg, model.head_v.as_mut_slice(), grads.head_v.as_slice())?;
        self.head_bias
            .step(&cfg, &mut model.head_bias, &grads.head_bias)?;
        self.steps += 1;
        Ok(())
    }

    /// Polar retraction of every orthogonal parameter.
    pub fn retract(&mut self, model: &mut Model) -> Result<()> {
        for (i, block) in model.blocks.iter_mut().enumerate() {
            block.r = epoch_retraction(&mut self.r[i], &block.r)?;
            block.m = epoch_retraction(&mut self.m[i], &block.m)?;
        }
        Ok(())
    }
}

/// Sum of per-chunk results for one batch.
#[derive(Clone, Debug)]
pub struct BatchResult {
    /// Gradients of the batch-mean loss.
    pub grads: ModelGrads,
    pub mean_loss: f64,
    pub correct: usize,
}

fn chunk_gradients(
    model: &Model,
    images: &FeatureMap,
    labels: &[usize],
    pairs: &Matrix,
    eps_train: f64,
    scale: f64,
) -> Result<(ModelGrads, f64, usize)> {
    let (logits, cache) = model.forward_train(images)?;
    let n = model.spec.n_classes;
    let mut grad_logits = Matrix::zeros(labels.len(), n);
    let mut pair_grad = Matrix::zeros(n, model.spec.width);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let l = margin_loss(row, y, eps_train, pairs.row(y))?;
        loss_sum += l.loss;
        if crate::certify::unique_argmax(row) == Some(y) {
            correct += 1;
        }
        for (g, v) in grad_logits.as_mut_slice()[i * n..(i + 1) * n]
            .iter_mut()
            .zip(&l.grad_logits)
        {
            *g = scale * v;
        }
        pair_norm_backward(&model.head_v, y, pairs.row(y), &l.grad_pair, scale, &mut pair_grad);
    }
    let mut grads = model.backward(&cache, &grad_logits)?;
    grads.head_v.axpy(1.0, &pair_grad)?;
    Ok((grads, loss_sum, correct))
}

/// Gradients of the mean margin loss over a batch, reduced in a fixed order.
pub fn batch_gradients(
    model: &Model,
    images: &FeatureMap,
    labels: &[usize],
    eps_train: f64,
) -> Result<BatchResult> {
    if images.batch != labels.len() || labels.is_empty() {
        return Err(Error::dims(
            "batch_gradients",
            format!("{} images, {} labels", images.batch, labels.len()),
        ));
    }
    let pairs = pair_lipschitz(&model.head_v);
    let scale = 1.0 / labels.len() as f64;
    let len = images.map_len();
    let starts: Vec<usize> = (0..labels.len()).step_by(GRAD_CHUNK).collect();
    let parts: Vec<(ModelGrads, f64, usize)> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + GRAD_CHUNK).min(labels.len());
            let chunk = FeatureMap {
                batch: e - s,
                h: images.h,
                w: images.w,
                c: images.c,
                data: images.data[s * len..e * len].to_vec(),
            };
            chunk_gradients(model, &chunk, &labels[s..e], &pairs, eps_train, scale)
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut grads, mut loss, mut correct) = iter.next().expect("non-empty batch");
    for (g, l, c) in iter {
        grads.accumulate(&g)?;
        loss += l;
        correct += c;
    }
    grads.input = FeatureMap::zeros(0, images.h, images.w, images.c);
    Ok(BatchResult {
        grads,
        mean_loss: loss * scale,
        correct,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub clean_acc: f64,
    /// Largest orthogonality drift after the epoch (post retraction if enabled).
    pub drift_max: f64,
    /// Largest drift seen just before the retraction.
    pub drift_pre_retraction: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,loss,clean_acc,drift_max,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:.3}",
            self.epoch, self.loss, self.clean_acc, self.drift_max, self.seconds
        )
    }
}

/// Mini-batch order for an epoch: a seeded shuffle.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    idx.shuffle(&mut rng);
    idx
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> u64 {
    n.div_ceil(batch_size.max(1)) as u64
}

/// One pass over `dataset`, followed by the epoch-end retraction.
///
/// `epoch` is zero-based; the training radius follows `cfg.train_radius`
/// over `cfg.epochs` epochs.
pub fn train_epoch(
    model: &mut Model,
    opt: &mut Optimizer,
    dataset: &Dataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochMetrics> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    model.check_input(&dataset.images)?;
    let start = Instant::now();
    let per_epoch = steps_per_epoch(dataset.len(), cfg.batch_size);
    let total = per_epoch * cfg.epochs as u64;
    let order = epoch_order(dataset.len(), cfg.seed, epoch);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for batch in order.chunks(cfg.batch_size) {
        let (images, labels) = dataset.gather(batch);
        let eps = cfg.train_radius(opt.steps, total);
        let res = batch_gradients(model, &images, &labels, eps)?;
        opt.set_lr(cfg.learning_rate(opt.steps, total));
        if !res.mean_loss.is_finite() {
            let (param, drift) = model.max_drift();
            return Err(Error::Diverged {
                step: opt.steps as usize,
                param,
                drift,
            });
        }
        opt.apply(model, &res.grads)?;
        loss_sum += res.mean_loss * labels.len() as f64;
        correct += res.correct;
    }
    let drift_pre_retraction = model.max_drift().1;
    if opt.config.mode.retraction {
        opt.retract(model)?;
    }
    Ok(EpochMetrics {
        epoch: epoch + 1,
        loss: loss_sum / dataset.len() as f64,
        clean_acc: correct as f64 / dataset.len() as f64,
        drift_max: model.max_drift().1,
        drift_pre_retraction,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `cfg.epochs` epochs from `first_epoch`, calling `on_epoch` after each.
pub fn train<F>(
    model: &mut Model,
    opt: &mut Optimizer,
    dataset: &Dataset,
    cfg: &TrainConfig,
    first_epoch: usize,
    mut on_epoch: F,
) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&Model, &Optimizer, &EpochMetrics) -> Result<()>,
{
    cfg.validate()?;
    let mut out = Vec::new();
    for epoch in first_epoch..cfg.epochs {
        let m = train_epoch(model, opt, dataset, cfg, epoch)?;
        on_epoch(model, opt, &m)?;
        out.push(m);
    }
    Ok(out)
}

/// Loads the dataset named by `kind`; CIFAR ignores `labels`.
pub fn load_dataset(kind: DatasetKind, images: Option<&Path>, labels: Option<&Path>) -> Result<Dataset> {
    let images = images.ok_or_else(|| Error::Config("no image file given".into()))?;
    let check = |p: &Path| {
        if p.exists() {
            Ok(())
        } else {
            Err(Error::Config(format!("dataset file {} does not exist", p.display())))
        }
    };
    check(images)?;
    match kind {
        DatasetKind::Mnist => {
            let labels = labels.ok_or_else(|| Error::Config("no label file given".into()))?;
            check(labels)?;
            crate::data::load_mnist_idx(images, labels)
        }
        DatasetKind::Cifar => crate::data::load_cifar_bin(images),
    }
}

fn in_context(what: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{what}: {m}")),
        other => Error::Config(format!("{what}: {other}")),
    }
}

/// Number of classes for every supported dataset.
pub const N_CLASSES: usize = 10;

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
    pub test: Option<CraReport>,
}

/// Loads data, trains, writes metrics and checkpoints, and evaluates on the
/// test split when one is configured. `log` receives progress lines.
pub fn run(cfg: &TrainConfig, mut log: impl FnMut(&str)) -> Result<RunSummary> {
    cfg.validate()?;
    let mut train_set = load_dataset(
        cfg.dataset,
        cfg.train_images.as_deref(),
        cfg.train_labels.as_deref(),
    )
    .map_err(|e| in_context("training data", e))?;
    if let Some(n) = cfg.train_limit {
        train_set = train_set.take(n);
    }
    let test_set = match &cfg.test_images {
        Some(p) => {
            let d = load_dataset(cfg.dataset, Some(p), cfg.test_labels.as_deref())
                .map_err(|e| in_context("test data", e))?;
            Some(match cfg.test_limit {
                Some(n) => d.take(n),
                None => d,
            })
        }
        None => None,
    };
    let im = &train_set.images;
    let spec = cfg.model_spec(im.h, im.w, im.c, N_CLASSES);
    let mut model = Model::init(spec)?;
    let mut opt = Optimizer::new(&model, cfg.optimizer)?;
    log(&format!(
        "training {} parameters on {} examples for {} epochs",
        model.parameter_count(),
        train_set.len(),
        cfg.epochs
    ));
    let mut metrics_file = match &cfg.metrics {
        Some(p) => {
            let mut f = std::fs::File::create(p)?;
            writeln!(f, "{}", EpochMetrics::CSV_HEADER)?;
            Some(f)
        }
        None => None,
    };
    let metrics = train(&mut model, &mut opt, &train_set, cfg, 0, |model, opt, m| {
        log(&format!(
            "epoch {:>3}  loss {:.4}  train_acc {:.4}  drift {:.2e}  {:.1}s",
            m.epoch, m.loss, m.clean_acc, m.drift_max, m.seconds
        ));
        if let Some(f) = metrics_file.as_mut() {
            writeln!(f, "{}", m.csv_row())?;
        }
        if let Some(p) = &cfg.checkpoint {
            save_checkpoint(
                p,
                &Checkpoint {
                    model: model.clone(),
                    optimizer: Some(opt.clone()),
                    epoch: m.epoch as u64,
                },
            )?;
        }
        Ok(())
    })?;
    let test = match &test_set {
        Some(d) => {
            let rep = evaluate_cra(&model, d, &cfg.eval_eps)?;
            log(&rep.to_table());
            Some(rep)
        }
        None => None,
    };
    Ok(RunSummary {
        model,
        metrics,
        test,
    })
}

/// Fraction of examples whose unique top logit is the label.
pub fn clean_accuracy(model: &Model, dataset: &Dataset) -> Result<f64> {
    let records = crate::certify::certify_dataset(model, dataset, &[0.0])?;
    Ok(records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 16).map(|_| rng.random::<f64>()).collect();
        let labels = (0..n).map(|i| i % 3).collect();
        Dataset::new(FeatureMap::batched(n, 4, 4, 1, data).unwrap(), labels).unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            depth: 2,
            width: 8,
            alpha: 0.125,
            patch: 1,
            batch_size: 8,
            eps_train: 0.05,
            epochs: 3,
            ..Default::default()
        }
    }

    fn tiny_model(cfg: &TrainConfig) -> Model {
        Model::init(cfg.model_spec(4, 4, 1, 3)).unwrap()
    }

    #[test]
    fn chunked_gradients_equal_whole_batch() {
        let cfg = tiny_cfg();
        let model = tiny_model(&cfg);
        let d = toy(37, 1);
        let all = batch_gradients(&model, &d.images, &d.labels, 0.1).unwrap();
        let pairs = pair_lipschitz(&model.head_v);
        let (g, l, _) =
            chunk_gradients(&model, &d.images, &d.labels, &pairs, 0.1, 1.0 / 37.0).unwrap();
        assert!((all.mean_loss - l / 37.0).abs() < 1e-12);
        assert!(all.grads.head_v.max_abs_diff(&g.head_v) < 1e-12);
        assert!(all.grads.blocks[0].r.max_abs_diff(&g.blocks[0].r) < 1e-12);
    }

    #[test]
    fn zero_lr_keeps_weights_and_loss() {
        let mut cfg = tiny_cfg();
        cfg.optimizer.lr = 0.0;
        cfg.eps_train = 0.0;
        let mut model = tiny_model(&cfg);
        let before = model.clone();
        let mut opt = Optimizer::new(&model, cfg.optimizer).unwrap();
        let d = toy(16, 2);
        let ms = train(&mut model, &mut opt, &d, &cfg, 0, |_, _, _| Ok(())).unwrap();
        assert!((ms[0].loss - ms[2].loss).abs() < 1e-12);
        for (a, b) in model.blocks.iter().zip(&before.blocks) {
            assert!(a.r.value().max_abs_diff(b.r.value()) < 1e-12);
            assert_eq!(a.bias, b.bias);
        }
        assert_eq!(model.head_v, before.head_v);
    }

    #[test]
    fn drift_after_each_epoch() {
        let cfg = tiny_cfg();
        let mut model = tiny_model(&cfg);
        let mut opt = Optimizer::new(&model, cfg.optimizer).unwrap();
        let ms = train(&mut model, &mut opt, &toy(24, 3), &cfg, 0, |_, _, _| Ok(())).unwrap();
        assert!(ms.iter().all(|m| m.drift_max <= 1e-10));
        assert_eq!(opt.steps, 9);
        assert!(EpochMetrics::CSV_HEADER.split(',').count() == ms[0].csv_row().split(',').count());
    }

    #[test]
    fn deterministic_order() {
        assert_eq!(epoch_order(10, 1, 0), epoch_order(10, 1, 0));
        assert_ne!(epoch_order(10, 1, 0), epoch_order(10, 1, 1));
        assert_eq!(steps_per_epoch(10, 4), 3);
    }
}
