// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Whole-network assembly: patchify → channel lift → `depth` shift-mixing
//! blocks → L2 spatial pool → linear head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::layers::{
    block_backward, block_forward, channel_lift, channel_lift_backward, head_backward,
    head_forward, l2_spatial_pool, l2_spatial_pool_backward, patchify, patchify_backward,
    ActivationKind, ActivationSpec, BlockCache, BlockParams, FeatureMap, Padding, ShiftSpec,
};
use crate::linalg::{random_orthogonal_with, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub depth: usize,
    pub width: usize,
    pub alpha: f64,
    pub beta: f64,
    pub patch: usize,
    pub n_classes: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub seed: u64,
    pub padding: Padding,
    pub activation: ActivationKind,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            depth: 4,
            width: 64,
            alpha: 1.0 / 16.0,
            beta: 0.75,
            patch: 2,
            n_classes: 10,
            in_h: 32,
            in_w: 32,
            in_c: 3,
            seed: 0,
            padding: Padding::Circular,
            activation: ActivationKind::BetaAbs,
        }
    }
}

impl ModelSpec {
    pub fn shift(&self) -> ShiftSpec {
        ShiftSpec {
            alpha: self.alpha,
            padding: self.padding,
        }
    }

    pub fn act(&self) -> ActivationSpec {
        ActivationSpec {
            beta: self.beta,
            kind: self.activation,
        }
    }

    /// Spatial size seen by the blocks.
    pub fn grid(&self) -> (usize, usize) {
        (self.in_h / self.patch.max(1), self.in_w / self.patch.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.n_classes < 2 {
            return bad(format!("need at least two classes, got {}", self.n_classes));
        }
        if self.patch == 0 || !self.in_h.is_multiple_of(self.patch) || !self.in_w.is_multiple_of(self.patch) {
            return bad(format!(
                "patch {} does not divide input {}x{}",
                self.patch, self.in_h, self.in_w
            ));
        }
        if self.in_h == 0 || self.in_w == 0 || self.in_c == 0 {
            return bad("input dimensions must be positive".into());
        }
        let stem_c = self.in_c * self.patch * self.patch;
        if self.width < stem_c {
            return bad(format!(
                "width {} is below the {stem_c} channels produced by the stem",
                self.width
            ));
        }
        self.shift().partition_size(self.width, 4)?;
        self.act().validate(self.width)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub blocks: Vec<BlockParams>,
    /// `n_classes × width`
    pub head_v: Matrix,
    pub head_bias: Vec<f64>,
}

/// Forward intermediates for [`Model::backward`].
#[derive(Debug)]
pub struct ModelCache {
    blocks: Vec<BlockCache>,
    backbone_out: FeatureMap,
    pooled: Matrix,
    lifted_from: usize,
    batch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParamGrads {
    pub r: Matrix,
    pub m: Matrix,
    pub bias: Vec<f64>,
    pub pos: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub blocks: Vec<BlockParamGrads>,
    pub head_v: Matrix,
    pub head_bias: Vec<f64>,
    /// Gradient with respect to the input images.
    pub input: FeatureMap,
}

impl Model {
    /// Random orthogonal `R`, `M`; zero bias and positional embedding; Gaussian head.
    pub fn init(spec: ModelSpec) -> Result<Model> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (h, w) = spec.grid();
        let c = spec.width;
        let mut blocks = Vec::with_capacity(spec.depth);
        for _ in 0..spec.depth {
            blocks.push(BlockParams {
                r: random_orthogonal_with(c, &mut rng)?,
                m: random_orthogonal_with(c, &mut rng)?,
                bias: vec![0.0; c],
                pos: vec![0.0; h * w],
                h,
                w,
            });
        }
        let std = 1.0 / (c as f64).sqrt();
        let head_v = Matrix::from_fn(spec.n_classes, c, |_, _| {
            std * rng.sample::<f64, _>(StandardNormal)
        });
        Ok(Model {
            spec,
            blocks,
            head_v,
            head_bias: vec![0.0; spec.n_classes],
        })
    }

    pub fn check_input(&self, images: &FeatureMap) -> Result<()> {
        let s = &self.spec;
        if (images.h, images.w, images.c) != (s.in_h, s.in_w, s.in_c) {
            return Err(Error::dims(
                "model input",
                format!(
                    "got {}x{}x{}, model expects {}x{}x{}",
                    images.h, images.w, images.c, s.in_h, s.in_w, s.in_c
                ),
            ));
        }
        Ok(())
    }

    fn embed(&self, images: &FeatureMap) -> Result<FeatureMap> {
        self.check_input(images)?;
        channel_lift(&patchify(images, self.spec.patch)?, self.spec.width)
    }

    /// Output of the last block, before pooling.
    pub fn backbone(&self, images: &FeatureMap) -> Result<FeatureMap> {
        let (shift, act) = (self.spec.shift(), self.spec.act());
        let mut x = self.embed(images)?;
        for block in &self.blocks {
            x = block_forward(&x, block, &shift, &act)?.0;
        }
        Ok(x)
    }

    /// Pooled backbone features, `batch × width`.
    pub fn features(&self, images: &FeatureMap) -> Result<Matrix> {
        Ok(l2_spatial_pool(&self.backbone(images)?))
    }

    /// Logits, `batch × n_classes`.
    pub fn logits(&self, images: &FeatureMap) -> Result<Matrix> {
        head_forward(&self.features(images)?, &self.head_v, &self.head_bias)
    }

    pub fn forward_train(&self, images: &FeatureMap) -> Result<(Matrix, ModelCache)> {
        let (shift, act) = (self.spec.shift(), self.spec.act());
        let mut x = self.embed(images)?;
        let lifted_from = self.spec.in_c * self.spec.patch * self.spec.patch;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block_forward(&x, block, &shift, &act)?;
            caches.push(cache);
            x = y;
        }
        let pooled = l2_spatial_pool(&x);
        let logits = head_forward(&pooled, &self.head_v, &self.head_bias)?;
        Ok((
            logits,
            ModelCache {
                blocks: caches,
                backbone_out: x,
                pooled,
                lifted_from,
                batch: images.batch,
            },
        ))
    }

    /// Gradients of `Σ grad_logits ⊙ logits` with respect to every parameter and the input.
    pub fn backward(&self, cache: &ModelCache, grad_logits: &Matrix) -> Result<ModelGrads> {
        if grad_logits.rows() != cache.batch || cache.blocks.len() != self.blocks.len() {
            return Err(Error::StaleCache(format!(
                "logit gradient has {} rows for a cached batch of {}",
                grad_logits.rows(),
                cache.batch
            )));
        }
        let (g_pooled, head_v, head_bias) = head_backward(&cache.pooled, &self.head_v, grad_logits)?;
        let mut g = l2_spatial_pool_backward(&cache.backbone_out, &cache.pooled, &g_pooled)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block_cache in cache.blocks.iter().rev() {
            let bg = block_backward(block_cache, &g)?;
            blocks.push(BlockParamGrads {
                r: bg.r,
                m: bg.m,
                bias: bg.bias,
                pos: bg.pos,
            });
            g = bg.x;
        }
        blocks.reverse();
        let input = patchify_backward(&channel_lift_backward(&g, cache.lifted_from)?, self.spec.patch)?;
        Ok(ModelGrads {
            blocks,
            head_v,
            head_bias,
            input,
        })
    }

    pub fn parameter_count(&self) -> usize {
        let c = self.spec.width;
        self.blocks
            .iter()
            .map(|b| 2 * c * c + c + b.pos.len())
            .sum::<usize>()
            + self.head_v.as_slice().len()
            + self.head_bias.len()
    }

    /// Largest `‖XᵀX − I‖_F` over all orthogonal parameters, with its name.
    pub fn max_drift(&self) -> (String, f64) {
        let mut worst = (String::new(), 0.0);
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, p) in [("R", &b.r), ("M", &b.m)] {
                let d = p.drift();
                if !(d <= worst.1) {
                    worst = (format!("block{i}.{name}"), d);
                }
            }
        }
        worst
    }
}

impl ModelGrads {
    pub fn zeros_like(model: &Model, batch: usize) -> Self {
        let c = model.spec.width;
        ModelGrads {
            blocks: model
                .blocks
                .iter()
                .map(|b| BlockParamGrads {
                    r: Matrix::zeros(c, c),
                    m: Matrix::zeros(c, c),
                    bias: vec![0.0; c],
                    pos: vec![0.0; b.pos.len()],
                })
                .collect(),
            head_v: Matrix::zeros(model.head_v.rows(), c),
            head_bias: vec![0.0; model.head_bias.len()],
            input: FeatureMap::zeros(batch, model.spec.in_h, model.spec.in_w, model.spec.in_c),
        }
    }

    /// `self += other` for parameter gradients (the input gradient is left alone).
    pub fn accumulate(&mut self, other: &ModelGrads) -> Result<()> {
        fn add(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.r.axpy(1.0, &b.r)?;
            a.m.axpy(1.0, &b.m)?;
            add(&mut a.bias, &b.bias);
            add(&mut a.pos, &b.pos);
        }
        self.head_v.axpy(1.0, &other.head_v)?;
        add(&mut self.head_bias, &other.head_bias);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelSpec {
        ModelSpec {
            depth: 2,
            width: 8,
            alpha: 0.125,
            beta: 0.75,
            patch: 1,
            n_classes: 3,
            in_h: 2,
            in_w: 2,
            in_c: 1,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::default().validate().is_ok());
        assert!(ModelSpec { depth: 0, ..tiny() }.validate().is_err());
        assert!(ModelSpec { alpha: 1.0 / 16.0, ..tiny() }.validate().is_err());
        assert!(ModelSpec { patch: 3, ..tiny() }.validate().is_err());
        assert!(ModelSpec { width: 2, in_c: 3, ..tiny() }.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_orthogonal() {
        let a = Model::init(tiny()).unwrap();
        assert_eq!(a, Model::init(tiny()).unwrap());
        assert!(a.max_drift().1 < 1e-12);
        assert_eq!(a.parameter_count(), 2 * (2 * 64 + 8 + 4) + 3 * 8 + 3);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let m = Model::init(tiny()).unwrap();
        assert!(m.logits(&FeatureMap::zeros(1, 3, 2, 1)).is_err());
        let logits = m.logits(&FeatureMap::zeros(4, 2, 2, 1)).unwrap();
        assert_eq!((logits.rows(), logits.cols()), (4, 3));
    }
}
