// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic ℓ₂ certification for a network whose backbone is
//! `K`-Lipschitz and whose head is linear.
//!
//! For prediction `y` and competitor `j`, the logit gap `f_y − f_j` moves by
//! at most `K·‖V_y − V_j‖·‖δ‖` under a perturbation `δ`, so the prediction is
//! stable for every `‖δ‖ < min_j (f_y − f_j) / (K·‖V_y − V_j‖)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{FeatureMap, Padding};
use crate::linalg::Matrix;
use crate::model::Model;

const EVAL_CHUNK: usize = 64;

/// `(i, j)` entry is `‖V_i − V_j‖₂`.
pub fn pair_lipschitz(v: &Matrix) -> Matrix {
    let n = v.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = v
                .row(i)
                .iter()
                .zip(v.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            out.as_mut_slice()[i * n + j] = d;
            out.as_mut_slice()[j * n + i] = d;
        }
    }
    out
}

/// Index of the largest logit, or `None` when the maximum is shared.
pub fn unique_argmax(logits: &[f64]) -> Option<usize> {
    let (mut best, mut tied) = (0, false);
    for (j, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = j;
            tied = false;
        } else if l == logits[best] {
            tied = true;
        }
    }
    (!logits.is_empty() && !tied).then_some(best)
}

fn check_head(logits: &[f64], v: &Matrix, backbone_bound: f64) -> Result<()> {
    if logits.len() != v.rows() {
        return Err(Error::dims(
            "certified_radius",
            format!("{} logits for a head with {} rows", logits.len(), v.rows()),
        ));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    if !(backbone_bound > 0.0 && backbone_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "backbone bound must be positive, got {backbone_bound}"
        )));
    }
    Ok(())
}

fn radius_from_pairs(logits: &[f64], pairs: &Matrix, y: usize, backbone_bound: f64) -> f64 {
    let n = logits.len();
    let mut radius = f64::INFINITY;
    for j in (0..n).filter(|&j| j != y) {
        let lip = pairs.as_slice()[y * n + j];
        let margin = logits[y] - logits[j];
        if lip > 0.0 {
            radius = radius.min(margin / (backbone_bound * lip));
        }
    }
    radius.max(0.0)
}

/// `min_{j≠y} (f_y − f_j) / (K·‖V_y − V_j‖)` for the predicted class `y`; zero on a tie.
///
/// Competitors with `V_j = V_y` cannot be moved by any input and are skipped;
/// if every competitor is skipped the radius is infinite.
pub fn certified_radius(logits: &[f64], v: &Matrix, backbone_bound: f64) -> Result<f64> {
    check_head(logits, v, backbone_bound)?;
    Ok(match unique_argmax(logits) {
        None => 0.0,
        Some(y) => radius_from_pairs(logits, &pair_lipschitz(v), y, backbone_bound),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertRecord {
    pub label: usize,
    pub predicted: usize,
    /// Whether the top logit was shared; such records are never certified.
    pub tied: bool,
    pub logits: Vec<f64>,
    /// `f_y − f_j` for each `j ≠ y`, in class order.
    pub margins: Vec<f64>,
    /// `‖V_y − V_j‖₂` for each `j ≠ y`, aligned with `margins`.
    pub pair_lipschitz: Vec<f64>,
    pub radius: f64,
    /// `(ε, correct and radius ≥ ε)`.
    pub certified_at: Vec<(f64, bool)>,
}

impl CertRecord {
    pub fn correct(&self) -> bool {
        !self.tied && self.predicted == self.label
    }

    fn build(logits: &[f64], pairs: &Matrix, bound: f64, label: usize, eps: &[f64]) -> CertRecord {
        let n = logits.len();
        let tie = unique_argmax(logits);
        let predicted = tie.unwrap_or_else(|| {
            (0..n).fold(0, |b, j| if logits[j] > logits[b] { j } else { b })
        });
        let others = (0..n).filter(|&j| j != predicted);
        let margins = others.clone().map(|j| logits[predicted] - logits[j]).collect();
        let pair = others.map(|j| pairs.as_slice()[predicted * n + j]).collect();
        let radius = match tie {
            None => 0.0,
            Some(y) => radius_from_pairs(logits, pairs, y, bound),
        };
        let correct = tie.is_some() && predicted == label;
        CertRecord {
            label,
            predicted,
            tied: tie.is_none(),
            logits: logits.to_vec(),
            margins,
            pair_lipschitz: pair,
            radius,
            certified_at: eps.iter().map(|&e| (e, correct && radius >= e)).collect(),
        }
    }
}

pub fn certify_example(
    logits: &[f64],
    v: &Matrix,
    backbone_bound: f64,
    label: usize,
    eps_list: &[f64],
) -> Result<CertRecord> {
    check_head(logits, v, backbone_bound)?;
    Ok(CertRecord::build(logits, &pair_lipschitz(v), backbone_bound, label, eps_list))
}

/// Lipschitz constants of each backbone stage and their product.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzLedger {
    pub factors: Vec<(String, f64)>,
    pub backbone_bound: f64,
}

impl LipschitzLedger {
    pub fn from_factors(factors: Vec<(String, f64)>) -> Result<Self> {
        if let Some((name, f)) = factors.iter().find(|(_, f)| !(*f >= 0.0)) {
            return Err(Error::InvalidArgument(format!("factor `{name}` is {f}")));
        }
        let backbone_bound = factors.iter().map(|(_, f)| f).product();
        Ok(LipschitzLedger {
            factors,
            backbone_bound,
        })
    }

    /// Constants the architecture guarantees: every stage is an isometry or a
    /// 1-Lipschitz contraction as long as `R` and `M` are orthogonal.
    pub fn for_model(model: &Model) -> Self {
        let mut factors = vec![("patchify".to_string(), 1.0), ("channel_lift".to_string(), 1.0)];
        let shift = match model.spec.padding {
            Padding::Circular => "shift(circular)",
            Padding::Zero => "shift(zero)",
        };
        for i in 0..model.blocks.len() {
            for part in ["pos", "R", shift, "R^T", "M", "bias", "activation"] {
                factors.push((format!("block{i}.{part}"), 1.0));
            }
        }
        factors.push(("l2_pool".to_string(), 1.0));
        LipschitzLedger {
            factors,
            backbone_bound: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CraRow {
    pub epsilon: f64,
    pub cra: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CraReport {
    pub n_examples: usize,
    pub clean_acc: f64,
    pub rows: Vec<CraRow>,
}

impl CraReport {
    pub fn from_records(records: &[CertRecord], eps_list: &[f64]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("cannot report on an empty dataset".into()));
        }
        let n = records.len() as f64;
        let clean = records.iter().filter(|r| r.correct()).count() as f64 / n;
        let rows = eps_list
            .iter()
            .map(|&epsilon| CraRow {
                epsilon,
                cra: records
                    .iter()
                    .filter(|r| r.correct() && r.radius >= epsilon)
                    .count() as f64
                    / n,
            })
            .collect();
        Ok(CraReport {
            n_examples: records.len(),
            clean_acc: clean,
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,clean_acc,cra,n_examples\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.epsilon, self.clean_acc, r.cra, self.n_examples);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>10}  {:>9}  {:>9}  {:>10}\n",
            "epsilon", "clean_acc", "cra", "n_examples"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>10.6}  {:>9.4}  {:>9.4}  {:>10}",
                r.epsilon, self.clean_acc, r.cra, self.n_examples
            );
        }
        s
    }
}

fn validate_eps(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("empty epsilon list".into()));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::InvalidArgument(format!("epsilon {e} must be non-negative")));
    }
    Ok(())
}

/// One certification record per example, in dataset order.
pub fn certify_dataset(model: &Model, dataset: &Dataset, eps_list: &[f64]) -> Result<Vec<CertRecord>> {
    validate_eps(eps_list)?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot certify an empty dataset".into()));
    }
    model.check_input(&dataset.images)?;
    let bound = LipschitzLedger::for_model(model).backbone_bound;
    let pairs = pair_lipschitz(&model.head_v);
    let chunks: Vec<Vec<usize>> = (0..dataset.len())
        .collect::<Vec<_>>()
        .chunks(EVAL_CHUNK)
        .map(<[usize]>::to_vec)
        .collect();
    let per_chunk: Vec<Vec<CertRecord>> = chunks
        .par_iter()
        .map(|idx| -> Result<Vec<CertRecord>> {
            let (images, labels) = dataset.gather(idx);
            let logits = model.logits(&images)?;
            if !logits.is_finite() {
                return Err(Error::NonFinite("logits"));
            }
            Ok((0..idx.len())
                .map(|i| CertRecord::build(logits.row(i), &pairs, bound, labels[i], eps_list))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Clean accuracy and certified robust accuracy at every `ε`.
pub fn evaluate_cra(model: &Model, dataset: &Dataset, eps_list: &[f64]) -> Result<CraReport> {
    let records = certify_dataset(model, dataset, eps_list)?;
    CraReport::from_records(&records, eps_list)
}

/// Largest observed `‖φ(a) − φ(b)‖ / ‖a − b‖` for the backbone `φ` over random pairs.
///
/// Half the pairs are independent uniform images, half are small perturbations.
pub fn empirical_lipschitz_lower_bound(model: &Model, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let s = &model.spec;
    let len = s.in_h * s.in_w * s.in_c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(trials * len);
    let mut b = Vec::with_capacity(trials * len);
    for t in 0..trials {
        let scale = if t % 2 == 0 { 1.0 } else { 1e-2 };
        for _ in 0..len {
            let x: f64 = rng.random();
            a.push(x);
            b.push(x + scale * rng.random_range(-1.0..1.0));
        }
    }
    let fa = model.backbone(&FeatureMap::batched(trials, s.in_h, s.in_w, s.in_c, a.clone())?)?;
    let fb = model.backbone(&FeatureMap::batched(trials, s.in_h, s.in_w, s.in_c, b.clone())?)?;
    let out_len = fa.map_len();
    let mut best = 0.0f64;
    for t in 0..trials {
        let din = dist(&a[t * len..(t + 1) * len], &b[t * len..(t + 1) * len]);
        let dout = dist(
            &fa.data[t * out_len..(t + 1) * out_len],
            &fb.data[t * out_len..(t + 1) * out_len],
        );
        if din > 0.0 {
            best = best.max(dout / din);
        }
    }
    Ok(best)
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn pair_norms() {
        let p = pair_lipschitz(&Matrix::identity(2));
        assert_eq!(p.as_slice(), &[0.0, 2f64.sqrt(), 2f64.sqrt(), 0.0]);
        let same = Matrix::from_rows(&[&[1.0, 2.0], &[1.0, 2.0]]);
        assert_eq!(pair_lipschitz(&same).as_slice(), &[0.0; 4]);
    }

    #[test]
    fn radius_cases() {
        let v = Matrix::from_rows(&[&[0.5], &[-0.5]]);
        assert_eq!(certified_radius(&[1.0, -1.0], &v, 1.0).unwrap(), 2.0);
        assert_eq!(certified_radius(&[1.0, -1.0], &v, 2.0).unwrap(), 1.0);
        assert_eq!(certified_radius(&[0.3, 0.3], &v, 1.0).unwrap(), 0.0);
        assert!(certified_radius(&[f64::NAN, 0.0], &v, 1.0).is_err());
        assert!(certified_radius(&[1.0, 0.0], &v, 0.0).is_err());

        let same = Matrix::from_rows(&[&[1.0], &[1.0], &[0.0]]);
        let r = certified_radius(&[2.0, 1.0, 0.0], &same, 1.0).unwrap();
        assert_eq!(r, 2.0);
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(unique_argmax(&[1.0, 3.0, 2.0]), Some(1));
        assert_eq!(unique_argmax(&[3.0, 1.0, 3.0]), None);
        assert_eq!(unique_argmax(&[]), None);
    }

    #[test]
    fn record_fields() {
        let v = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let rec = certify_example(&[2.0, 0.0, 1.0], &v, 1.0, 0, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(rec.margins, vec![2.0, 1.0]);
        assert_eq!(rec.pair_lipschitz, vec![2f64.sqrt(), 1.0]);
        assert_eq!(rec.radius, 1.0);
        assert_eq!(rec.certified_at, vec![(0.0, true), (0.5, true), (1.0, true)]);
        let wrong = certify_example(&[2.0, 0.0, 1.0], &v, 1.0, 2, &[0.0]).unwrap();
        assert_eq!(wrong.certified_at, vec![(0.0, false)]);
        let tie = certify_example(&[2.0, 2.0, 1.0], &v, 1.0, 0, &[0.0]).unwrap();
        assert!(tie.tied && tie.radius == 0.0 && !tie.certified_at[0].1);
    }

    #[test]
    fn report_counts() {
        let v = Matrix::from_rows(&[&[0.5], &[-0.5]]);
        // Margins 0..9 with labels alternating correct / wrong every third example.
        let records: Vec<CertRecord> = (0..10)
            .map(|i| {
                let m = i as f64;
                let label = if i % 3 == 2 { 1 } else { 0 };
                let logits = if i == 0 { [0.0, 0.0] } else { [m / 2.0, -m / 2.0] };
                certify_example(&logits, &v, 1.0, label, &[0.0, 2.5, 100.0]).unwrap()
            })
            .collect();
        let rep = CraReport::from_records(&records, &[0.0, 2.5, 100.0]).unwrap();
        // Correct: i ∈ {1,3,4,6,7,9}; radius = i.
        assert_eq!(rep.clean_acc, 0.6);
        let cra: Vec<f64> = rep.rows.iter().map(|r| r.cra).collect();
        assert_eq!(cra, vec![0.6, 0.5, 0.0]);
        assert!(rep.to_csv().starts_with("epsilon,clean_acc,cra,n_examples\n0,0.6,0.6,10\n"));
        assert_eq!(rep.to_table().lines().count(), 4);
        assert!(CraReport::from_records(&[], &[0.0]).is_err());
    }

    #[test]
    fn ledger_bound_is_one() {
        let model = Model::init(ModelSpec {
            depth: 2,
            width: 16,
            in_h: 4,
            in_w: 4,
            ..Default::default()
        })
        .unwrap();
        let l = LipschitzLedger::for_model(&model);
        assert_eq!(l.backbone_bound, 1.0);
        assert!(l.factors.iter().all(|(_, f)| *f == 1.0));
        let custom = LipschitzLedger::from_factors(vec![("a".into(), 2.0), ("b".into(), 0.5)]).unwrap();
        assert_eq!(custom.backbone_bound, 1.0);
        assert!(LipschitzLedger::from_factors(vec![("a".into(), -1.0)]).is_err());
    }

    #[test]
    fn empirical_bound_below_one() {
        for padding in [Padding::Circular, Padding::Zero] {
            let model = Model::init(ModelSpec {
                depth: 2,
                width: 16,
                in_h: 4,
                in_w: 4,
                padding,
                ..Default::default()
            })
            .unwrap();
            let l = empirical_lipschitz_lower_bound(&model, 50, 1).unwrap();
            assert!(l > 0.0 && l <= 1.0 + 1e-6, "{l}");
        }
    }
}
