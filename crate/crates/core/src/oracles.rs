// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Brute-force and closed-form references used by the test suites and the
//! `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{matmul, svd, Matrix};

/// Tolerance for calling a singular value (or DFT magnitude) equal to one.
pub const ISOMETRY_TOL: f64 = 1e-9;

/// A single-channel `k × k` kernel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    k: usize,
    entries: Vec<f64>,
}

impl Kernel2D {
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 || entries.len() != k * k {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {k}x{k} kernel",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel"));
        }
        Ok(Kernel2D { k, entries })
    }

    /// All zeros except `value` at `(a, b)`.
    pub fn one_hot(k: usize, a: usize, b: usize, value: f64) -> Result<Self> {
        let mut e = vec![0.0; k * k];
        *e.get_mut(a * k + b)
            .ok_or_else(|| Error::InvalidArgument(format!("({a},{b}) outside {k}x{k}")))? = value;
        Self::new(k, e)
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.k + b]
    }

    pub fn nonzeros(&self) -> usize {
        self.entries.iter().filter(|v| **v != 0.0).count()
    }

    fn check_grid(&self, h: usize, w: usize) -> Result<()> {
        if self.k > h.min(w) {
            return Err(Error::InvalidArgument(format!(
                "kernel {} larger than grid {h}x{w}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Direct circular cross-correlation: `out[y,x] = Σ K[a,b]·in[(y+a) mod H, (x+b) mod W]`.
pub fn circular_conv_direct(kernel: &Kernel2D, h: usize, w: usize, input: &[f64]) -> Result<Vec<f64>> {
    kernel.check_grid(h, w)?;
    if input.len() != h * w {
        return Err(Error::dims("circular_conv_direct", format!("{} values for {h}x{w}", input.len())));
    }
    let k = kernel.size();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for a in 0..k {
                for b in 0..k {
                    acc += kernel.get(a, b) * input[((y + a) % h) * w + (x + b) % w];
                }
            }
            out[y * w + x] = acc;
        }
    }
    Ok(out)
}

/// The `HW × HW` matrix of [`circular_conv_direct`] on row-major flattened inputs.
pub fn circular_conv_matrix(kernel: &Kernel2D, h: usize, w: usize) -> Result<Matrix> {
    kernel.check_grid(h, w)?;
    let n = h * w;
    let mut m = Matrix::zeros(n, n);
    let k = kernel.size();
    for y in 0..h {
        for x in 0..w {
            for a in 0..k {
                for b in 0..k {
                    let col = ((y + a) % h) * w + (x + b) % w;
                    m.as_mut_slice()[(y * w + x) * n + col] += kernel.get(a, b);
                }
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Evidence {
    /// Index (descending order) of the singular value farthest from one.
    SingularIndex(usize),
    /// Frequency `(u, v)` whose DFT magnitude is farthest from one.
    Frequency(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsometryVerdict {
    pub is_isometry: bool,
    pub max_sv: f64,
    pub min_sv: f64,
    pub evidence: Evidence,
}

impl IsometryVerdict {
    /// Largest `|σ − 1|`.
    pub fn residual(&self) -> f64 {
        (self.max_sv - 1.0).abs().max((self.min_sv - 1.0).abs())
    }

    fn from_values(values: &[f64], evidence_of: impl Fn(usize) -> Evidence) -> Self {
        let mut worst = 0;
        for (i, v) in values.iter().enumerate() {
            if (v - 1.0).abs() > (values[worst] - 1.0).abs() {
                worst = i;
            }
        }
        let max_sv = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_sv = values.iter().cloned().fold(f64::INFINITY, f64::min);
        IsometryVerdict {
            is_isometry: (max_sv - 1.0).abs() <= ISOMETRY_TOL && (min_sv - 1.0).abs() <= ISOMETRY_TOL,
            max_sv,
            min_sv,
            evidence: evidence_of(worst),
        }
    }
}

/// Isometry test through the singular values of a square operator.
pub fn isometry_check(op: &Matrix) -> Result<IsometryVerdict> {
    op.require_square("isometry_check")?;
    let s = svd(op)?.s;
    Ok(IsometryVerdict::from_values(&s, Evidence::SingularIndex))
}

/// Magnitudes of the 2D DFT of the kernel zero-padded to `H × W`, row-major.
pub fn padded_kernel_dft_magnitudes(kernel: &Kernel2D, h: usize, w: usize) -> Result<Vec<f64>> {
    kernel.check_grid(h, w)?;
    let mut buf = vec![Complex::new(0.0, 0.0); h * w];
    for a in 0..kernel.size() {
        for b in 0..kernel.size() {
            buf[a * w + b].re = kernel.get(a, b);
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    Ok(buf.iter().map(|c| c.norm()).collect())
}

/// Isometry test of a circular convolution through the DFT of its kernel.
pub fn isometry_check_dft(kernel: &Kernel2D, h: usize, w: usize) -> Result<IsometryVerdict> {
    let mags = padded_kernel_dft_magnitudes(kernel, h, w)?;
    Ok(IsometryVerdict::from_values(&mags, |i| Evidence::Frequency(i / w, i % w)))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Theorem1Report {
    pub k: usize,
    pub h: usize,
    pub w: usize,
    pub one_hot_checked: usize,
    pub random_checked: usize,
    /// One-hot `±1` kernels that failed the isometry test.
    pub sufficiency_counterexamples: Vec<Kernel2D>,
    /// Other kernels that passed it.
    pub necessity_counterexamples: Vec<Kernel2D>,
    /// Kernels where the SVD and DFT routes disagreed.
    pub route_disagreements: Vec<Kernel2D>,
    /// Largest `|σ − 1|` over the one-hot kernels.
    pub one_hot_residual: f64,
    /// Smallest `|σ − 1|` (worst-case) over the other kernels.
    pub random_min_residual: f64,
}

impl Theorem1Report {
    pub fn passed(&self) -> bool {
        self.sufficiency_counterexamples.is_empty()
            && self.necessity_counterexamples.is_empty()
            && self.route_disagreements.is_empty()
    }
}

/// A kernel that is not a single `±1` entry. Cycles through dense Gaussian,
/// dense with unit Frobenius norm, two non-zeros with unit norm, and a single
/// entry whose value is not `±1`.
fn non_one_hot(k: usize, rng: &mut ChaCha8Rng, trial: usize) -> Result<Kernel2D> {
    let n = k * k;
    let style = if n == 1 { 3 } else { trial % 4 };
    let mut e = vec![0.0; n];
    match style {
        0 | 1 => {
            for v in &mut e {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            if style == 1 {
                let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                e.iter_mut().for_each(|v| *v /= norm);
            }
        }
        2 => {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            let t: f64 = rng.random_range(0.05..std::f64::consts::FRAC_PI_2 - 0.05);
            e[i] = t.cos();
            e[j] = if rng.random() { t.sin() } else { -t.sin() };
        }
        _ => {
            let mut v: f64 = 1.0;
            while (v.abs() - 1.0f64).abs() < 1e-3 {
                v = rng.random_range(-3.0..3.0);
            }
            e[rng.random_range(0..n)] = v;
        }
    }
    Kernel2D::new(k, e)
}

/// Checks both directions of the single-channel circular-convolution isometry
/// characterization on an `H × W` grid.
pub fn theorem1_enumerate(k: usize, h: usize, w: usize, trials: usize, seed: u64) -> Result<Theorem1Report> {
    let mut rep = Theorem1Report {
        k,
        h,
        w,
        random_min_residual: f64::INFINITY,
        ..Default::default()
    };
    let judge = |kernel: Kernel2D, rep: &mut Theorem1Report| -> Result<IsometryVerdict> {
        let by_svd = isometry_check(&circular_conv_matrix(&kernel, h, w)?)?;
        let by_dft = isometry_check_dft(&kernel, h, w)?;
        if by_svd.is_isometry != by_dft.is_isometry
            || (by_svd.max_sv - by_dft.max_sv).abs() > 1e-9
            || (by_svd.min_sv - by_dft.min_sv).abs() > 1e-9
        {
            rep.route_disagreements.push(kernel);
        }
        Ok(by_svd)
    };
    for a in 0..k {
        for b in 0..k {
            for sign in [1.0, -1.0] {
                let kernel = Kernel2D::one_hot(k, a, b, sign)?;
                let v = judge(kernel.clone(), &mut rep)?;
                rep.one_hot_checked += 1;
                rep.one_hot_residual = rep.one_hot_residual.max(v.residual());
                if !v.is_isometry {
                    rep.sufficiency_counterexamples.push(kernel);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let kernel = non_one_hot(k, &mut rng, t)?;
        let v = judge(kernel.clone(), &mut rep)?;
        rep.random_checked += 1;
        rep.random_min_residual = rep.random_min_residual.min(v.residual());
        if v.is_isometry {
            rep.necessity_counterexamples.push(kernel);
        }
    }
    Ok(rep)
}

/// Central-difference gradient of `f` at `point`.
pub fn finite_diff_grad<F>(mut f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step {step} must be positive")));
    }
    let mut x = point.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite difference probe"));
        }
        g.push((up - down) / (2.0 * step));
    }
    Ok(g)
}

/// `max_i |a_i − b_i| / max(|b_i|, floor)`.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Tail `Σ_{j > order} a^j / j!` of the exponential series; bounds the
/// Frobenius error of an order-`order` Taylor truncation when `a ≥ ‖A‖_F`.
pub fn taylor_remainder_bound(a: f64, order: usize) -> f64 {
    let mut term = 1.0;
    for j in 1..=order {
        term *= a / j as f64;
    }
    let mut sum = 0.0;
    for j in order + 1..order + 200 {
        term *= a / j as f64;
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Plain Taylor series of `exp(A)` summed to convergence, without scaling.
///
/// Accurate for `‖A‖_F` up to a few units.
pub fn reference_exp(a: &Matrix) -> Result<Matrix> {
    a.require_square("reference_exp")?;
    let n = a.rows();
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for j in 1..400 {
        term = matmul(&term, a)?.scale(1.0 / j as f64);
        sum = sum.add(&term)?;
        let t = crate::linalg::frobenius_norm(&term);
        if t == 0.0 || t < 1e-18 * crate::linalg::frobenius_norm(&sum) {
            break;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn conv_matrix_cases() {
        let c = Kernel2D::new(1, vec![2.5]).unwrap();
        assert_eq!(circular_conv_matrix(&c, 3, 3).unwrap(), Matrix::identity(9).scale(2.5));

        let shift = circular_conv_matrix(&Kernel2D::one_hot(2, 1, 0, 1.0).unwrap(), 4, 4).unwrap();
        for row in 0..16 {
            let r = shift.row(row);
            assert_eq!(r.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(r.iter().filter(|&&v| v == 0.0).count(), 15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = Kernel2D::new(3, random_input(9, &mut rng)).unwrap();
        let m = circular_conv_matrix(&k, 4, 4).unwrap();
        for _ in 0..20 {
            let x = random_input(16, &mut rng);
            let direct = circular_conv_direct(&k, 4, 4, &x).unwrap();
            assert!(max_rel_error(&m.matvec(&x).unwrap(), &direct, 1.0) < 1e-12);
        }
        assert!(circular_conv_matrix(&k, 2, 4).is_err());
    }

    #[test]
    fn isometry_cases() {
        let p = circular_conv_matrix(&Kernel2D::one_hot(2, 1, 1, -1.0).unwrap(), 4, 4).unwrap();
        assert!(isometry_check(&p).unwrap().is_isometry);
        let half = isometry_check(&Matrix::identity(5).scale(0.5)).unwrap();
        assert!(!half.is_isometry);
        assert_eq!(half.max_sv, 0.5);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let k = Kernel2D::new(2, vec![r, r, 0.0, 0.0]).unwrap();
        let dft = isometry_check_dft(&k, 4, 4).unwrap();
        assert!(!dft.is_isometry);
        assert!(dft.min_sv.abs() < 1e-15);
        assert_eq!(dft.evidence, Evidence::Frequency(0, 2));
        let by_svd = isometry_check(&circular_conv_matrix(&k, 4, 4).unwrap()).unwrap();
        assert!((by_svd.max_sv - dft.max_sv).abs() < 1e-12 && by_svd.min_sv.abs() < 1e-7);
    }

    #[test]
    fn theorem1_small() {
        let rep = theorem1_enumerate(2, 4, 4, 40, 0).unwrap();
        assert_eq!(rep.one_hot_checked, 8);
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.one_hot_residual < 1e-12);

        let two = Kernel2D::one_hot(1, 0, 0, 2.0).unwrap();
        assert!(!isometry_check_dft(&two, 4, 4).unwrap().is_isometry);
    }

    #[test]
    fn finite_differences() {
        let x = [0.3, -1.2, 2.0];
        let g = finite_diff_grad(|v| 0.5 * v.iter().map(|t| t * t).sum::<f64>(), &x, 1e-5).unwrap();
        assert!(max_rel_error(&g, &x, 1.0) < 1e-8);
        let a = [1.5, -2.0, 0.25];
        let g = finite_diff_grad(|v| v.iter().zip(&a).map(|(p, q)| p * q).sum(), &x, 1e-5).unwrap();
        assert!(max_rel_error(&g, &a, 1.0) < 1e-10);
        assert!(finite_diff_grad(|_| f64::NAN, &x, 1e-5).is_err());
        assert!(finite_diff_grad(|_| 0.0, &x, 0.0).is_err());
    }

    #[test]
    fn remainder_and_reference() {
        assert!((taylor_remainder_bound(1.0, 0) - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        let tail: f64 = (3..20).map(|j| 0.1f64.powi(j) / (1..=j).map(f64::from).product::<f64>()).sum();
        assert!((taylor_remainder_bound(0.1, 2) - tail).abs() < 1e-15 * tail);
        let a = Matrix::from_rows(&[&[0.0, 0.7], &[-0.7, 0.0]]);
        let e = reference_exp(&a).unwrap();
        assert!((e[(0, 0)] - 0.7f64.cos()).abs() < 1e-15);
        assert!((e[(0, 1)] - 0.7f64.sin()).abs() < 1e-15);
    }
}
