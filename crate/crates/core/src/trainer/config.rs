// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` training configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected.
//!
//! ```text
//! dataset = mnist
//! train_images = data/mnist/train-images-idx3-ubyte
//! train_labels = data/mnist/train-labels-idx1-ubyte
//! depth = 4
//! width = 64
//! patch = 1
//! epochs = 10
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{ActivationKind, Padding};
use crate::manifold::{Denominator, ManifoldAdamConfig, SecondMomentInit};
use crate::model::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar,
}

/// Learning-rate schedule over all training steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from `lr` to zero.
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub depth: usize,
    pub width: usize,
    pub alpha: f64,
    pub beta: f64,
    pub patch: usize,
    pub padding: Padding,
    pub activation: ActivationKind,
    pub optimizer: ManifoldAdamConfig,
    pub lr_schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    /// Target certification radius; training ramps up to `radius_factor` times this.
    pub eps_train: f64,
    pub radius_factor: f64,
    /// Fraction of all steps spent ramping the training radius up from zero.
    pub warmup_frac: f64,
    pub dataset: DatasetKind,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub eval_eps: Vec<f64>,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let spec = ModelSpec::default();
        TrainConfig {
            depth: spec.depth,
            width: spec.width,
            alpha: spec.alpha,
            beta: spec.beta,
            patch: spec.patch,
            padding: spec.padding,
            activation: spec.activation,
            optimizer: ManifoldAdamConfig {
                lr: 1e-2,
                v0: SecondMomentInit::Zero,
                ..Default::default()
            },
            lr_schedule: LrSchedule::Cosine,
            epochs: 10,
            batch_size: 128,
            eps_train: 36.0 / 255.0,
            radius_factor: 1.5,
            warmup_frac: 0.2,
            dataset: DatasetKind::Mnist,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_limit: None,
            test_limit: None,
            checkpoint: None,
            metrics: None,
            eval_eps: vec![0.0, 36.0 / 255.0, 72.0 / 255.0, 108.0 / 255.0],
            seed: 0,
            threads: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "depth",
    "width",
    "alpha",
    "beta",
    "patch",
    "padding",
    "activation",
    "lr",
    "beta1",
    "beta2",
    "eps_adam",
    "lookahead_k",
    "denominator",
    "bias_correction",
    "lookahead",
    "retraction",
    "v0",
    "lr_schedule",
    "epochs",
    "batch_size",
    "eps_train",
    "radius_factor",
    "warmup_frac",
    "dataset",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "train_limit",
    "test_limit",
    "checkpoint",
    "metrics",
    "eval_eps",
    "seed",
    "threads",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

/// Parses a number or a fraction such as `36/255`.
pub fn parse_real(key: &str, value: &str) -> Result<f64> {
    let v = match value.split_once('/') {
        Some((a, b)) => num::<f64>(key, a.trim())? / num::<f64>(key, b.trim())?,
        None => num::<f64>(key, value)?,
    };
    if !v.is_finite() {
        return Err(Error::Config(format!("`{key}`: `{value}` is not finite")));
    }
    Ok(v)
}

pub fn parse_eps_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_real("eps", s.trim()))
        .collect()
}

impl TrainConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let path = || Some(PathBuf::from(value));
        let opt = &mut self.optimizer;
        match key {
            "depth" => self.depth = num(key, value)?,
            "width" => self.width = num(key, value)?,
            "alpha" => self.alpha = parse_real(key, value)?,
            "beta" => self.beta = parse_real(key, value)?,
            "patch" => self.patch = num(key, value)?,
            "padding" => {
                self.padding = match value {
                    "circular" => Padding::Circular,
                    "zero" => Padding::Zero,
                    _ => return Err(Error::Config(format!("`padding`: unknown `{value}`"))),
                }
            }
            "activation" => {
                self.activation = match value {
                    "beta_abs" => ActivationKind::BetaAbs,
                    "minmax" => ActivationKind::MinMax,
                    _ => return Err(Error::Config(format!("`activation`: unknown `{value}`"))),
                }
            }
            "lr" => opt.lr = parse_real(key, value)?,
            "beta1" => opt.beta1 = parse_real(key, value)?,
            "beta2" => opt.beta2 = parse_real(key, value)?,
            "eps_adam" => opt.eps = parse_real(key, value)?,
            "lookahead_k" => opt.lookahead_k = num(key, value)?,
            "denominator" => {
                opt.mode.denominator = match value {
                    "sqrt_v" => Denominator::SqrtV,
                    "literal_v" => Denominator::LiteralV,
                    _ => return Err(Error::Config(format!("`denominator`: unknown `{value}`"))),
                }
            }
            "bias_correction" => opt.mode.bias_correction = boolean(key, value)?,
            "lookahead" => opt.mode.lookahead = boolean(key, value)?,
            "retraction" => opt.mode.retraction = boolean(key, value)?,
            "v0" => {
                opt.v0 = match value {
                    "zero" => SecondMomentInit::Zero,
                    "inverse_dim" => SecondMomentInit::InverseDim,
                    _ => return Err(Error::Config(format!("`v0`: unknown `{value}`"))),
                }
            }
            "lr_schedule" => {
                self.lr_schedule = match value {
                    "constant" => LrSchedule::Constant,
                    "cosine" => LrSchedule::Cosine,
                    _ => return Err(Error::Config(format!("`lr_schedule`: unknown `{value}`"))),
                }
            }
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "eps_train" => self.eps_train = parse_real(key, value)?,
            "radius_factor" => self.radius_factor = parse_real(key, value)?,
            "warmup_frac" => self.warmup_frac = parse_real(key, value)?,
            "dataset" => {
                self.dataset = match value {
                    "mnist" => DatasetKind::Mnist,
                    "cifar" => DatasetKind::Cifar,
                    _ => return Err(Error::Config(format!("`dataset`: unknown `{value}`"))),
                }
            }
            "train_images" => self.train_images = path(),
            "train_labels" => self.train_labels = path(),
            "test_images" => self.test_images = path(),
            "test_labels" => self.test_labels = path(),
            "train_limit" => self.train_limit = Some(num(key, value)?),
            "test_limit" => self.test_limit = Some(num(key, value)?),
            "checkpoint" => self.checkpoint = path(),
            "metrics" => self.metrics = path(),
            "eval_eps" => self.eval_eps = parse_eps_list(value)?,
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key `{key}` (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{}` is not key=value", o.as_ref())))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.eps_train >= 0.0) || !(self.radius_factor > 0.0) {
            return bad("eps_train must be non-negative and radius_factor positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return bad("warmup_frac must lie in [0, 1]");
        }
        if self.eval_eps.iter().any(|e| !(*e >= 0.0)) {
            return bad("eval_eps values must be non-negative");
        }
        Ok(())
    }

    /// Architecture for inputs of shape `h × w × c` with `n_classes` outputs.
    pub fn model_spec(&self, h: usize, w: usize, c: usize, n_classes: usize) -> ModelSpec {
        ModelSpec {
            depth: self.depth,
            width: self.width,
            alpha: self.alpha,
            beta: self.beta,
            patch: self.patch,
            n_classes,
            in_h: h,
            in_w: w,
            in_c: c,
            seed: self.seed,
            padding: self.padding,
            activation: self.activation,
        }
    }

    /// Learning rate for step `step` of `total`.
    pub fn learning_rate(&self, step: u64, total: u64) -> f64 {
        let lr = self.optimizer.lr;
        match self.lr_schedule {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine if total == 0 => lr,
            LrSchedule::Cosine => {
                let frac = (step as f64 / total as f64).min(1.0);
                0.5 * lr * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }

    /// Training radius at step `step` of `total` (linear ramp, then constant).
    pub fn train_radius(&self, step: u64, total: u64) -> f64 {
        let top = self.radius_factor * self.eps_train;
        let ramp = self.warmup_frac * total as f64;
        if ramp <= 0.0 {
            top
        } else {
            top * (step as f64 / ramp).min(1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_and_overrides() {
        let mut cfg = TrainConfig::parse(
            "# comment\ndepth = 2\nwidth=16 # trailing\n\nalpha = 1/8\nlookahead = false\ndataset = cifar\neval_eps = 0, 36/255\n",
        )
        .unwrap();
        assert_eq!((cfg.depth, cfg.width, cfg.alpha), (2, 16, 0.125));
        assert!(!cfg.optimizer.mode.lookahead);
        assert_eq!(cfg.dataset, DatasetKind::Cifar);
        assert_eq!(cfg.eval_eps, vec![0.0, 36.0 / 255.0]);
        cfg.apply_overrides(&["width=32", "lr=0"]).unwrap();
        assert_eq!((cfg.width, cfg.optimizer.lr), (32, 0.0));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        let e = TrainConfig::parse("depth = 2\nwdith = 3\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("wdith"), "{e}");
        assert!(TrainConfig::parse("depth 2").is_err());
        assert!(TrainConfig::parse("depth = two").is_err());
        assert!(TrainConfig::parse("retraction = maybe").is_err());
        assert!(TrainConfig::parse("epochs = 0").unwrap().validate().is_err());
        assert!(TrainConfig::default().apply_overrides(&["nokey"]).is_err());
    }

    #[test]
    fn radius_schedule() {
        let cfg = TrainConfig {
            eps_train: 1.0,
            ..Default::default()
        };
        assert_eq!(cfg.train_radius(0, 100), 0.0);
        assert_eq!(cfg.train_radius(10, 100), 0.75);
        assert_eq!(cfg.train_radius(20, 100), 1.5);
        assert_eq!(cfg.train_radius(99, 100), 1.5);
    }

    #[test]
    fn learning_rate_schedules() {
        let mut cfg = TrainConfig::default();
        cfg.set("lr", "0.5").unwrap();
        assert_eq!(cfg.learning_rate(0, 100), 0.5);
        assert!((cfg.learning_rate(50, 100) - 0.25).abs() < 1e-15);
        assert!(cfg.learning_rate(100, 100).abs() < 1e-15);
        cfg.set("lr_schedule", "constant").unwrap();
        assert_eq!(cfg.learning_rate(70, 100), 0.5);
        assert!(cfg.set("lr_schedule", "step").is_err());
    }
}
