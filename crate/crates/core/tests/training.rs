// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use lipcert::data::Dataset;
use lipcert::layers::FeatureMap;
use lipcert::manifold::ManifoldAdamConfig;
use lipcert::model::Model;
use lipcert::trainer::checkpoint::{decode_checkpoint, encode_checkpoint};
use lipcert::trainer::{self, train, train_epoch, Checkpoint, Optimizer, TrainConfig};

/// Four well-separated classes on a 4×4 grid: the bright quadrant is the label.
fn quadrants(n: usize) -> Dataset {
    let mut pixels = Vec::with_capacity(n * 16);
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    for (i, &label) in labels.iter().enumerate() {
        for y in 0..4 {
            for x in 0..4 {
                let q = (y / 2) * 2 + x / 2;
                let jitter = ((i * 13 + y * 5 + x) % 7) as f64 / 30.0;
                pixels.push(if q == label { 0.8 + jitter } else { jitter });
            }
        }
    }
    Dataset::new(FeatureMap::batched(n, 4, 4, 1, pixels).unwrap(), labels).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        depth: 2,
        width: 8,
        alpha: 0.125,
        patch: 1,
        epochs: 30,
        batch_size: 16,
        eps_train: 0.05,
        optimizer: ManifoldAdamConfig {
            lr: 0.02,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn learns_a_separable_problem_and_stays_orthogonal() {
    let data = quadrants(64);
    let cfg = config();
    let mut model = Model::init(cfg.model_spec(4, 4, 1, 4)).unwrap();
    let mut opt = Optimizer::new(&model, cfg.optimizer).unwrap();
    let metrics = train(&mut model, &mut opt, &data, &cfg, 0, |_, _, _| Ok(())).unwrap();
    assert_eq!(metrics.len(), 30);
    assert!(metrics.last().unwrap().loss < metrics[0].loss);
    for m in &metrics {
        assert!(m.drift_max <= 1e-10, "epoch {} drift {}", m.epoch, m.drift_max);
    }
    assert!(trainer::clean_accuracy(&model, &data).unwrap() >= 0.95);
}

#[test]
fn resuming_from_an_epoch_matches_an_uninterrupted_run() {
    let data = quadrants(32);
    let cfg = TrainConfig {
        epochs: 4,
        ..config()
    };
    let init = Model::init(cfg.model_spec(4, 4, 1, 4)).unwrap();

    let mut full = init.clone();
    let mut opt_full = Optimizer::new(&full, cfg.optimizer).unwrap();
    train(&mut full, &mut opt_full, &data, &cfg, 0, |_, _, _| Ok(())).unwrap();

    let mut part = init;
    let mut opt_part = Optimizer::new(&part, cfg.optimizer).unwrap();
    for epoch in 0..2 {
        train_epoch(&mut part, &mut opt_part, &data, &cfg, epoch).unwrap();
    }
    let bytes = encode_checkpoint(&Checkpoint {
        model: part,
        optimizer: Some(opt_part),
        epoch: 2,
    });
    let ck = decode_checkpoint(&bytes).unwrap();
    let (mut part, mut opt_part) = (ck.model, ck.optimizer.unwrap());
    train(&mut part, &mut opt_part, &data, &cfg, 2, |_, _, _| Ok(())).unwrap();
    assert_eq!(part, full);
}
