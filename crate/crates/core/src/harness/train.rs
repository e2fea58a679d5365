use super::scene::{DatasetSpec, SyntheticScene};
use super::thread_pool;
use crate::autograd::Tape;
use crate::detector::{assign_targets, save_checkpoint, total_loss, Detector, DetectorConfig, Role};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub detector: DetectorConfig,
    pub data: DatasetSpec,
    /// Seeds parameter initialisation and batch order.
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs after which the learning rate is multiplied by `lr_decay`.
    pub lr_steps: Vec<usize>,
    pub lr_decay: f64,
    /// Linear warm-up length in optimiser steps.
    pub warmup_steps: usize,
    /// Global gradient-norm cap (0 disables).
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            data: DatasetSpec::default(),
            seed: 0,
            epochs: 30,
            batch_size: 4,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_steps: vec![20, 26],
            lr_decay: 0.1,
            warmup_steps: 50,
            grad_clip: 10.0,
        }
    }
}

/// Mean loss components over one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub focal: f64,
    pub giou: f64,
    pub edge: f64,
    pub positives: usize,
    pub seconds: f64,
}

pub fn loss_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,lr,loss,focal,giou,edge,positives,seconds\n");
    for e in history {
        s.push_str(&format!(
            "{},{:.6e},{:.6},{:.6},{:.6},{:.6},{},{:.3}\n",
            e.epoch, e.lr, e.loss, e.focal, e.giou, e.edge, e.positives, e.seconds
        ));
    }
    s
}

pub struct TrainOutcome {
    pub model: Detector,
    pub history: Vec<EpochStats>,
}

struct ItemResult {
    loss: f64,
    focal: f64,
    giou: f64,
    edge: f64,
    positives: usize,
    grads: Vec<Tensor>,
}

fn item_gradients(model: &Detector, scene: &SyntheticScene) -> Result<ItemResult> {
    let tape = Tape::new();
    let vars = model.bind(&tape, true);
    let out = model.forward(&tape, &vars, &scene.image)?;
    let targets = assign_targets(out.logits.value().hw(), &scene.objects);
    let l = total_loss(&out, &targets, &scene.objects, &model.cfg);
    let loss = l.total.value().item();
    let grads = tape.backward(l.total)?;
    Ok(ItemResult {
        loss,
        focal: l.focal,
        giou: l.giou,
        edge: l.edge,
        positives: l.num_pos,
        grads: vars.iter().map(|v| grads.get_or_zeros(*v)).collect(),
    })
}

fn lr_at(cfg: &TrainConfig, epoch: usize, step: usize) -> f64 {
    let decays = cfg.lr_steps.iter().filter(|&&e| epoch >= e).count();
    let warm = if step < cfg.warmup_steps {
        (step + 1) as f64 / cfg.warmup_steps as f64
    } else {
        1.0
    };
    cfg.lr * cfg.lr_decay.powi(decays as i32) * warm
}

/// SGD with momentum and weight decay on weights (not biases). Batch items
/// are processed in parallel and reduced in a fixed order, so runs with the
/// same config are bit-identical. A non-finite loss or gradient aborts with
/// [`Error::Divergence`].
pub fn train_on(cfg: &TrainConfig, scenes: &[SyntheticScene], mut on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut model = Detector::new(cfg.detector.clone(), cfg.seed)?;
    let decay: Vec<bool> = model.params.iter().map(|p| p.info.role == Role::Weight).collect();
    let mut velocity: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_0a7a);
    let pool = thread_pool();
    let mut history = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut acc = EpochStats {
            epoch: epoch + 1,
            lr: lr_at(cfg, epoch, step),
            loss: 0.0,
            focal: 0.0,
            giou: 0.0,
            edge: 0.0,
            positives: 0,
            seconds: 0.0,
        };
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<ItemResult> = pool
                .install(|| batch.par_iter().map(|&i| item_gradients(&model, &scenes[i])).collect::<Result<_>>())
                .map_err(|e| match e {
                    Error::NonFinite(detail) => Error::Divergence {
                        epoch: epoch + 1,
                        step: b,
                        detail,
                    },
                    e => e,
                })?;
            let inv = 1.0 / batch.len() as f64;
            let mut grads: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            for r in &results {
                if !r.loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        step: b,
                        detail: format!("loss {} (focal {}, giou {}, edge {})", r.loss, r.focal, r.giou, r.edge),
                    });
                }
                for (g, rg) in grads.iter_mut().zip(&r.grads) {
                    g.add_assign(rg);
                }
                acc.loss += r.loss;
                acc.focal += r.focal;
                acc.giou += r.giou;
                acc.edge += r.edge;
                acc.positives += r.positives;
            }
            let norm = grads
                .iter()
                .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                .sqrt()
                * inv;
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    step: b,
                    detail: "non-finite gradient".into(),
                });
            }
            let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
                cfg.grad_clip / norm
            } else {
                1.0
            };
            let lr = lr_at(cfg, epoch, step);
            for (((p, g), v), &wd) in model.params.iter_mut().zip(&grads).zip(velocity.iter_mut()).zip(&decay) {
                let pd = p.value.data_mut();
                for ((x, &gx), vx) in pd.iter_mut().zip(g.data()).zip(v.data_mut()) {
                    let grad = gx * inv * clip + if wd { cfg.weight_decay * *x } else { 0.0 };
                    *vx = cfg.momentum * *vx + grad;
                    *x -= lr * *vx;
                }
            }
            step += 1;
        }
        let n = scenes.len() as f64;
        acc.loss /= n;
        acc.focal /= n;
        acc.giou /= n;
        acc.edge /= n;
        acc.seconds = start.elapsed().as_secs_f64();
        on_epoch(&acc);
        history.push(acc);
    }
    Ok(TrainOutcome { model, history })
}

/// Generates the configured dataset and trains on it.
pub fn train(cfg: &TrainConfig, on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
    let scenes = cfg.data.generate()?;
    train_on(cfg, &scenes, on_epoch)
}

/// Writes the checkpoint, `loss.csv` and `train.json` to `dir`.
pub fn save_run(outcome: &TrainOutcome, cfg: &TrainConfig, dir: &Path) -> Result<()> {
    save_checkpoint(&outcome.model, dir)?;
    std::fs::write(dir.join("loss.csv"), loss_csv(&outcome.history))?;
    std::fs::write(dir.join("train.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}
