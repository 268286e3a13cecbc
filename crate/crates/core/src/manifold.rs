// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Adam on the orthogonal group.
//!
//! Updates stay on the manifold by right-multiplying with the exponential of a
//! skew-symmetric step. The stabilized variant uses a norm-adaptive truncated
//! Taylor series ([`fast_exp`]) and a Lookahead buffer of skew steps.
//! Periodic polar retraction is [`epoch_retraction`].

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_norm, matmul, matmul_tn, matrix_exp, polar_project, skew, sym, Matrix,
    OrthogonalParam, SkewMatrix, TAU_BETWEEN,
};

/// Frobenius-norm cut-offs between Taylor orders 2, 3, 4 and the exact exponential.
pub const FAST_EXP_THRESHOLDS: [f64; 3] = [0.05, 0.25, 1.0];

/// Largest symmetric-part norm accepted by [`fast_exp_checked`].
pub const SKEW_TOL: f64 = 1e-10;

/// Riemannian gradient `G − X·sym(XᵀG)`; lies in the tangent space at `X`.
pub fn riemannian_grad(x: &OrthogonalParam, euclid_grad: &Matrix) -> Result<Matrix> {
    x.value()
        .check_same_shape(euclid_grad, "riemannian_grad")?;
    let xtg = matmul_tn(x.value(), euclid_grad)?;
    let correction = matmul(x.value(), &sym(&xtg)?)?;
    euclid_grad.sub(&correction)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FastExpBranch {
    Order2,
    Order3,
    Order4,
    Exact,
}

impl FastExpBranch {
    pub fn select(norm: f64) -> Self {
        let [t2, t3, t4] = FAST_EXP_THRESHOLDS;
        if norm < t2 {
            FastExpBranch::Order2
        } else if norm < t3 {
            FastExpBranch::Order3
        } else if norm < t4 {
            FastExpBranch::Order4
        } else {
            FastExpBranch::Exact
        }
    }

    /// Taylor order, `None` for the exact branch.
    pub fn order(self) -> Option<usize> {
        match self {
            FastExpBranch::Order2 => Some(2),
            FastExpBranch::Order3 => Some(3),
            FastExpBranch::Order4 => Some(4),
            FastExpBranch::Exact => None,
        }
    }
}

/// Norm-adaptive truncated exponential of a skew-symmetric matrix.
pub fn fast_exp(a: &SkewMatrix) -> Result<Matrix> {
    let m = a.as_matrix();
    let norm = frobenius_norm(m);
    if !norm.is_finite() {
        return Err(Error::NonFinite("fast_exp input"));
    }
    let Some(order) = FastExpBranch::select(norm).order() else {
        return matrix_exp(m);
    };
    let n = a.dim();
    let mut result = Matrix::identity(n);
    result.axpy(1.0, m)?;
    let mut term = m.clone();
    for k in 2..=order {
        term = matmul(&term, m)?;
        term.scale_mut(1.0 / k as f64);
        result.axpy(1.0, &term)?;
    }
    Ok(result)
}

/// [`fast_exp`] on an arbitrary matrix, rejecting inputs that are not skew.
pub fn fast_exp_checked(a: &Matrix) -> Result<Matrix> {
    fast_exp(&SkewMatrix::try_new(a.clone(), SKEW_TOL)?)
}

/// How the exponential step is formed from the moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Denominator {
    /// `m̂ / (√v̂ + ε)`, standard Adam.
    SqrtV,
    /// `m / (v + ε)`, the stabilized listing taken literally.
    LiteralV,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OptimizerMode {
    pub denominator: Denominator,
    pub bias_correction: bool,
    pub lookahead: bool,
    pub retraction: bool,
}

impl Default for OptimizerMode {
    fn default() -> Self {
        OptimizerMode {
            denominator: Denominator::SqrtV,
            bias_correction: true,
            lookahead: true,
            retraction: true,
        }
    }
}

/// Initial value of the second moment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecondMomentInit {
    Zero,
    /// Every entry `1/d`.
    InverseDim,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Lookahead period `K`.
    pub lookahead_k: usize,
    pub mode: OptimizerMode,
    pub v0: SecondMomentInit,
}

impl Default for ManifoldAdamConfig {
    fn default() -> Self {
        ManifoldAdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lookahead_k: 5,
            mode: OptimizerMode::default(),
            v0: SecondMomentInit::InverseDim,
        }
    }
}

impl ManifoldAdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead_k == 0 {
            return Err(Error::InvalidArgument("lookahead period K must be positive".into()));
        }
        let finite = [self.lr, self.beta1, self.beta2, self.eps]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "bad optimizer hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-parameter optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldAdamState {
    pub m: Matrix,
    pub v: Matrix,
    /// Sum of skew steps since the last slow-weight update.
    pub buffer: Matrix,
    pub slow: OrthogonalParam,
    /// Completed steps.
    pub t: u64,
    pub config: ManifoldAdamConfig,
}

impl ManifoldAdamState {
    pub fn new(x: &OrthogonalParam, config: ManifoldAdamConfig) -> Result<Self> {
        config.validate()?;
        let d = x.dim();
        let v0 = match config.v0 {
            SecondMomentInit::Zero => 0.0,
            SecondMomentInit::InverseDim => 1.0 / d as f64,
        };
        Ok(ManifoldAdamState {
            m: Matrix::zeros(d, d),
            v: Matrix::from_fn(d, d, |_, _| v0),
            buffer: Matrix::zeros(d, d),
            slow: x.clone(),
            t: 0,
            config,
        })
    }

    /// Updates the moments with a Riemannian gradient and returns the skew step `Δ`.
    fn moment_step(&mut self, x: &OrthogonalParam, euclid_grad: &Matrix) -> Result<SkewMatrix> {
        if x.dim() != self.m.rows() {
            return Err(Error::dims(
                "manifold step",
                format!("parameter {} vs state {}", x.dim(), self.m.rows()),
            ));
        }
        if !euclid_grad.is_finite() {
            return Err(Error::NonFinite("manifold step gradient"));
        }
        let grad = riemannian_grad(x, euclid_grad)?;
        let ManifoldAdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            mode,
            ..
        } = self.config;
        let t = (self.t + 1).min(i32::MAX as u64) as i32;
        let (c1, c2) = if mode.bias_correction {
            (1.0 / (1.0 - beta1.powi(t)), 1.0 / (1.0 - beta2.powi(t)))
        } else {
            (1.0, 1.0)
        };
        // Only the gradient average is debiased; the prior keeps its weight.
        let prior = match (mode.bias_correction, self.config.v0) {
            (true, SecondMomentInit::InverseDim) => beta2.powi(t) / x.dim() as f64,
            _ => 0.0,
        };
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        let mut direction = Matrix::zeros(grad.rows(), grad.cols());
        for (((mi, vi), gi), di) in m
            .iter_mut()
            .zip(v.iter_mut())
            .zip(grad.as_slice())
            .zip(direction.as_mut_slice())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let v_hat = prior + (*vi - prior) * c2;
            *di = match mode.denominator {
                Denominator::SqrtV => (*mi * c1) / (v_hat.sqrt() + eps),
                Denominator::LiteralV => (*mi * c1) / (v_hat + eps),
            };
        }
        let delta = skew(&matmul_tn(x.value(), &direction)?)?;
        Ok(delta.scale(-lr))
    }
}

fn right_multiply(x: &Matrix, e: &Matrix) -> Result<OrthogonalParam> {
    let out = matmul(x, e)?;
    if !out.is_finite() {
        return Err(Error::NonFinite("manifold update"));
    }
    Ok(OrthogonalParam::new_unchecked(out, TAU_BETWEEN))
}

/// Plain Manifold Adam with the exact exponential.
///
/// Use with `SecondMomentInit::Zero` and `bias_correction = true` for the textbook form.
pub fn manifold_adam_step(
    state: &mut ManifoldAdamState,
    x: &OrthogonalParam,
    euclid_grad: &Matrix,
) -> Result<OrthogonalParam> {
    let delta = state.moment_step(x, euclid_grad)?;
    state.t += 1;
    right_multiply(x.value(), &matrix_exp(delta.as_matrix())?)
}

/// One step of the stabilized optimizer: FastExp updates plus tangent-space Lookahead.
///
/// Every `K`-th step (counting from one) the accumulated buffer is halved and
/// applied to the slow weight, which then replaces the fast weight.
pub fn stabilized_step(
    state: &mut ManifoldAdamState,
    x: &OrthogonalParam,
    euclid_grad: &Matrix,
) -> Result<OrthogonalParam> {
    state.config.validate()?;
    let delta = state.moment_step(x, euclid_grad)?;
    let k = state.config.lookahead_k as u64;
    let index = state.t;
    state.t += 1;

    if !state.config.mode.lookahead {
        return right_multiply(x.value(), &fast_exp(&delta)?);
    }
    state.buffer.axpy(1.0, delta.as_matrix())?;
    if !(index + 1).is_multiple_of(k) {
        right_multiply(x.value(), &fast_exp(&delta)?)
    } else {
        let half = skew(&state.buffer)?.scale(0.5);
        let slow = right_multiply(state.slow.value(), &fast_exp(&half)?)?;
        state.slow = slow.clone();
        state.buffer = Matrix::zeros(x.dim(), x.dim());
        Ok(slow)
    }
}

/// Polar retraction of the fast weight; the slow weight is synced to the result.
pub fn epoch_retraction(
    state: &mut ManifoldAdamState,
    x: &OrthogonalParam,
) -> Result<OrthogonalParam> {
    let projected = polar_project(x.value())?;
    state.slow = projected.clone();
    Ok(projected)
}

/// Whether a step counter sits on an epoch boundary of `n` steps.
pub fn is_epoch_end(completed_steps: u64, steps_per_epoch: u64) -> bool {
    steps_per_epoch > 0 && completed_steps > 0 && completed_steps.is_multiple_of(steps_per_epoch)
}

/// Elementwise Adam for unconstrained parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, cfg: &ManifoldAdamConfig, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if param.len() != self.m.len() || grad.len() != param.len() {
            return Err(Error::dims(
                "adam step",
                format!("param {} grad {} state {}", param.len(), grad.len(), self.m.len()),
            ));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient"));
        }
        self.t += 1;
        let t = self.t.min(i32::MAX as u64) as i32;
        let (c1, c2) = if cfg.mode.bias_correction {
            (1.0 / (1.0 - cfg.beta1.powi(t)), 1.0 / (1.0 - cfg.beta2.powi(t)))
        } else {
            (1.0, 1.0)
        };
        for (((p, g), m), v) in param
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.lr * (*m * c1) / ((*v * c2).sqrt() + cfg.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthogonality_drift, random_orthogonal, random_orthogonal_with};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(d, d, |_, _| rng.sample(StandardNormal))
    }

    fn random_skew(d: usize, norm: f64, rng: &mut ChaCha8Rng) -> SkewMatrix {
        let s = skew(&gaussian(d, rng)).unwrap();
        let n = s.norm();
        s.scale(norm / n)
    }

    fn sym_norm(a: &Matrix) -> f64 {
        frobenius_norm(&sym(a).unwrap())
    }

    #[test]
    fn riemannian_grad_at_identity() {
        let g = Matrix::from_rows(&[&[1.0, 2.0, 0.0], &[2.0, 3.0, 1.0], &[0.0, 1.0, 5.0]]);
        let r = riemannian_grad(&OrthogonalParam::identity(3), &g).unwrap();
        assert_eq!(r, Matrix::zeros(3, 3));

        let g = Matrix::from_rows(&[&[1.0, 4.0], &[0.0, 2.0]]);
        let r = riemannian_grad(&OrthogonalParam::identity(2), &g).unwrap();
        let want = g.sub(&sym(&g).unwrap()).unwrap();
        assert!(r.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn riemannian_grad_is_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = random_orthogonal_with(9, &mut rng).unwrap();
            let g = gaussian(9, &mut rng);
            let r = riemannian_grad(&x, &g).unwrap();
            assert!(sym_norm(&matmul_tn(x.value(), &r).unwrap()) < 1e-10);
        }
        assert!(riemannian_grad(&OrthogonalParam::identity(3), &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn fast_exp_branches() {
        assert_eq!(fast_exp(&SkewMatrix::zeros(5)).unwrap(), Matrix::identity(5));
        assert_eq!(FastExpBranch::select(0.049), FastExpBranch::Order2);
        assert_eq!(FastExpBranch::select(0.05), FastExpBranch::Order3);
        assert_eq!(FastExpBranch::select(0.2499), FastExpBranch::Order3);
        assert_eq!(FastExpBranch::select(0.25), FastExpBranch::Order4);
        assert_eq!(FastExpBranch::select(0.999), FastExpBranch::Order4);
        assert_eq!(FastExpBranch::select(1.0), FastExpBranch::Exact);
    }

    #[test]
    fn fast_exp_matches_reference_in_small_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_skew(8, 0.04, &mut rng);
        let err = frobenius_norm(
            &fast_exp(&a)
                .unwrap()
                .sub(&matrix_exp(a.as_matrix()).unwrap())
                .unwrap(),
        );
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn fast_exp_checked_rejects_symmetric() {
        let s = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(fast_exp_checked(&s), Err(Error::NotSkew(_))));
    }

    fn procrustes(x: &Matrix, q: &Matrix) -> (f64, Matrix) {
        let diff = x.sub(q).unwrap();
        (frobenius_norm(&diff).powi(2), diff.scale(2.0))
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let x = random_orthogonal(6, 3).unwrap();
        let cfg = ManifoldAdamConfig {
            v0: SecondMomentInit::Zero,
            ..Default::default()
        };
        let mut st = ManifoldAdamState::new(&x, cfg).unwrap();
        let y = manifold_adam_step(&mut st, &x, &Matrix::zeros(6, 6)).unwrap();
        assert_eq!(y.value(), x.value());
    }

    #[test]
    fn adam_single_step_stays_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = OrthogonalParam::identity(10);
        let cfg = ManifoldAdamConfig {
            v0: SecondMomentInit::Zero,
            ..Default::default()
        };
        let mut st = ManifoldAdamState::new(&x, cfg).unwrap();
        let y = manifold_adam_step(&mut st, &x, &gaussian(10, &mut rng)).unwrap();
        assert!(y.drift() < 1e-9);
        assert!(manifold_adam_step(&mut st, &y, &Matrix::from_fn(10, 10, |_, _| f64::NAN)).is_err());
    }

    #[test]
    fn adam_descends_procrustes() {
        let q = random_orthogonal(8, 10).unwrap();
        let mut x = random_orthogonal(8, 11).unwrap();
        let cfg = ManifoldAdamConfig {
            beta1: 0.0,
            lr: 1e-2,
            v0: SecondMomentInit::Zero,
            ..Default::default()
        };
        let mut st = ManifoldAdamState::new(&x, cfg).unwrap();
        let (f0, _) = procrustes(x.value(), q.value());
        let mut prev = f0;
        for _ in 0..2 {
            let (_, g) = procrustes(x.value(), q.value());
            x = manifold_adam_step(&mut st, &x, &g).unwrap();
            let (f, _) = procrustes(x.value(), q.value());
            assert!(f < prev, "{f} !< {prev}");
            prev = f;
        }
    }

    #[test]
    fn period_one_halves_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = random_orthogonal(6, 1).unwrap();
        let g = gaussian(6, &mut rng);
        let cfg = ManifoldAdamConfig {
            lookahead_k: 1,
            ..Default::default()
        };
        let mut a = ManifoldAdamState::new(&x0, cfg).unwrap();
        let mut shadow = ManifoldAdamState::new(&x0, cfg).unwrap();
        let y = stabilized_step(&mut a, &x0, &g).unwrap();
        let delta = shadow.moment_step(&x0, &g).unwrap();
        let want = matmul(x0.value(), &fast_exp(&delta.scale(0.5)).unwrap()).unwrap();
        assert!(y.value().max_abs_diff(&want) < 1e-15);
        assert_eq!(a.buffer, Matrix::zeros(6, 6));
        assert_eq!(a.slow.value(), y.value());
    }

    #[test]
    fn prior_second_moment_keeps_unit_weight_after_correction() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = 6;
        let x = random_orthogonal(d, 4).unwrap();
        let g = gaussian(d, &mut rng);
        let cfg = ManifoldAdamConfig::default();
        let mut st = ManifoldAdamState::new(&x, cfg).unwrap();
        let delta = st.moment_step(&x, &g).unwrap();
        let rg = riemannian_grad(&x, &g).unwrap();
        let dir = rg.map(|gi| gi / ((cfg.beta2 / d as f64 + gi * gi).sqrt() + cfg.eps));
        let want = skew(&matmul_tn(x.value(), &dir).unwrap()).unwrap().scale(-cfg.lr);
        let diff = delta.as_matrix().max_abs_diff(want.as_matrix());
        assert!(diff < 1e-15, "{diff}");
    }

    #[test]
    fn lookahead_period_matches_half_sum_of_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = 8;
        let k = 4;
        let x0 = random_orthogonal(d, 2).unwrap();
        let cfg = ManifoldAdamConfig {
            lookahead_k: k,
            lr: 1e-3,
            ..Default::default()
        };
        let mut st = ManifoldAdamState::new(&x0, cfg).unwrap();
        let mut shadow = st.clone();
        let mut x = x0.clone();
        let mut deltas = Vec::new();
        for step in 0..k {
            let g = gaussian(d, &mut rng);
            deltas.push(shadow.moment_step(&x, &g).unwrap());
            shadow.t += 1;
            let next = stabilized_step(&mut st, &x, &g).unwrap();
            if step + 1 < k {
                let want = matmul(x.value(), &fast_exp(&deltas[step]).unwrap()).unwrap();
                assert!(next.value().max_abs_diff(&want) < 1e-15);
            }
            x = next;
        }
        let mut sum = Matrix::zeros(d, d);
        for dl in &deltas {
            sum.axpy(0.5, dl.as_matrix()).unwrap();
        }
        let half = SkewMatrix::try_new(sum.clone(), 0.0).unwrap();
        let fast = matmul(x0.value(), &fast_exp(&half).unwrap()).unwrap();
        assert!(x.value().max_abs_diff(&fast) < 1e-14);
        let exact = matmul(x0.value(), &matrix_exp(&sum).unwrap()).unwrap();
        let order = FastExpBranch::select(half.norm()).order().unwrap();
        let tail: f64 = (order + 1..30)
            .map(|j| half.norm().powi(j as i32) / (1..=j).map(|i| i as f64).product::<f64>())
            .sum();
        assert!(frobenius_norm(&x.value().sub(&exact).unwrap()) <= tail + 1e-14);
        assert_eq!(st.buffer, Matrix::zeros(d, d));
    }

    #[test]
    fn buffer_stays_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = random_orthogonal(7, 3).unwrap();
        let cfg = ManifoldAdamConfig {
            lookahead_k: 7,
            ..Default::default()
        };
        let mut st = ManifoldAdamState::new(&x, cfg).unwrap();
        for _ in 0..5 {
            x = stabilized_step(&mut st, &x, &gaussian(7, &mut rng)).unwrap();
            assert!(sym_norm(&st.buffer) < 1e-12);
            assert!(st.v.as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn zero_period_rejected() {
        let x = OrthogonalParam::identity(3);
        let cfg = ManifoldAdamConfig {
            lookahead_k: 0,
            ..Default::default()
        };
        assert!(ManifoldAdamState::new(&x, cfg).is_err());
    }

    #[test]
    fn retraction_repairs_and_syncs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthogonal(10, 4).unwrap();
        let mut st = ManifoldAdamState::new(&q, Default::default()).unwrap();
        st.m = gaussian(10, &mut rng);
        st.buffer = skew(&gaussian(10, &mut rng)).unwrap().into_matrix();
        let (m, v, b) = (st.m.clone(), st.v.clone(), st.buffer.clone());

        let same = epoch_retraction(&mut st, &q).unwrap();
        assert!(same.value().max_abs_diff(q.value()) < 1e-10);
        assert_eq!(st.slow, same);

        let mut drifted = q.value().clone();
        let noise = gaussian(10, &mut rng);
        drifted.axpy(1e-2 / frobenius_norm(&noise), &noise).unwrap();
        let fixed = epoch_retraction(&mut st, &OrthogonalParam::new_unchecked(drifted, 1.0)).unwrap();
        assert!(orthogonality_drift(fixed.value()) < 1e-12);
        assert_eq!((st.m, st.v, st.buffer), (m, v, b));
    }

    #[test]
    fn stabilizers_do_not_move_weights_under_zero_gradient() {
        let x0 = random_orthogonal(5, 12).unwrap();
        let on = ManifoldAdamConfig::default();
        let mut off = on;
        off.mode.lookahead = false;
        off.mode.retraction = false;
        let mut sa = ManifoldAdamState::new(&x0, on).unwrap();
        let mut sb = ManifoldAdamState::new(&x0, off).unwrap();
        let (mut a, mut b) = (x0.clone(), x0.clone());
        for _ in 0..12 {
            a = stabilized_step(&mut sa, &a, &Matrix::zeros(5, 5)).unwrap();
            b = stabilized_step(&mut sb, &b, &Matrix::zeros(5, 5)).unwrap();
        }
        assert_eq!(a.value(), b.value());
        assert_eq!(a.value(), x0.value());
    }

    #[test]
    fn literal_denominator_runs_and_stays_near_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut x = random_orthogonal(6, 1).unwrap();
        let mut cfg = ManifoldAdamConfig::default();
        cfg.mode.denominator = Denominator::LiteralV;
        cfg.mode.bias_correction = false;
        cfg.lr = 1e-4;
        let mut st = ManifoldAdamState::new(&x, cfg).unwrap();
        for _ in 0..20 {
            x = stabilized_step(&mut st, &x, &gaussian(6, &mut rng)).unwrap();
        }
        assert!(x.drift() < 1e-3);
    }

    #[test]
    fn plain_adam_minimises_quadratic() {
        let cfg = ManifoldAdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut p = vec![3.0, -2.0];
        let mut st = AdamState::new(2);
        for _ in 0..300 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            st.step(&cfg, &mut p, &g).unwrap();
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
