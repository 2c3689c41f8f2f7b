//! Student training: distillation, fine-tuning and hard example mining.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{pixel_dataset, DistillDataset};
use crate::model::{RayBatch, RayModel};
use crate::nn::{adam_step, AdamState};
use crate::ray::{Camera, SampleMode};
use crate::scene::OracleScene;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Iterations of linear learning-rate warmup.
    pub warmup: usize,
    /// Learning rate at the last iteration relative to `lr` (exponential decay).
    pub final_lr_frac: f64,
    pub batch: usize,
    pub iters: usize,
    /// Weight of the mask term for attribute models.
    pub mask_weight: f64,
    pub hard_mining: bool,
    /// Loss quantile treated as hard.
    pub hard_frac: f64,
    /// Share of each epoch drawn from the hard set.
    pub hard_ratio: f64,
    pub sample_mode: SampleMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            warmup: 50,
            final_lr_frac: 0.1,
            batch: 512,
            iters: 2000,
            mask_weight: 0.1,
            hard_mining: false,
            hard_frac: 0.05,
            hard_ratio: 0.25,
            sample_mode: SampleMode::StratifiedRandom,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate used at iteration `iter`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        let warm = if self.warmup == 0 { 1.0 } else { ((iter + 1) as f64 / self.warmup as f64).min(1.0) };
        let progress = if self.iters <= 1 { 0.0 } else { iter as f64 / (self.iters - 1) as f64 };
        self.lr * warm * self.final_lr_frac.powf(progress)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hard_frac) || !(0.0..1.0).contains(&self.hard_ratio) {
            return Err(Error::InvalidConfig("hard mining fractions out of range".into()));
        }
        if self.mask_weight < 0.0 || !(self.lr >= 0.0) || self.batch == 0 || !(self.final_lr_frac > 0.0) {
            return Err(Error::InvalidConfig("lr and mask weight must be non-negative, batch positive".into()));
        }
        Ok(())
    }
}

/// Loss record of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    /// `(iteration, total loss, mask loss)`.
    pub points: Vec<(usize, f64, f64)>,
    /// Mean loss of every completed epoch.
    pub epochs: Vec<f64>,
    pub with_masks: bool,
}

impl LossCurve {
    pub fn first_epoch(&self) -> Option<f64> {
        self.epochs.first().copied()
    }

    pub fn last_epoch(&self) -> Option<f64> {
        self.epochs.last().copied()
    }

    /// Mean loss over the first or last `n` iterations.
    pub fn head_mean(&self, n: usize) -> f64 {
        mean(self.points.iter().take(n).map(|p| p.1))
    }

    pub fn tail_mean(&self, n: usize) -> f64 {
        mean(self.points.iter().rev().take(n).map(|p| p.1))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if self.with_masks {
            out.write_record(["iter", "loss", "mask_loss"]).map_err(csv_err)?;
        } else {
            out.write_record(["iter", "loss"]).map_err(csv_err)?;
        }
        for &(i, l, m) in &self.points {
            let mut rec = vec![i.to_string(), l.to_string()];
            if self.with_masks {
                rec.push(m.to_string());
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Indices for the next epoch: a `ratio` share drawn with replacement from the
/// top-`frac` loss quantile, the rest uniformly from all samples.
pub fn mine_hard_examples<R: Rng + ?Sized>(
    losses: &[f64],
    frac: f64,
    ratio: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if losses.is_empty() {
        return Err(Error::EmptyInput("losses"));
    }
    if !(0.0..=1.0).contains(&frac) || !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig("hard mining fractions out of range".into()));
    }
    let n = losses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    let top = ((frac * n as f64).ceil() as usize).clamp(1, n);
    let hard = &order[..top];
    let n_hard = (ratio * n_draws as f64).round() as usize;
    let mut out = Vec::with_capacity(n_draws);
    for _ in 0..n_hard {
        out.push(hard[rng.gen_range(0..top)]);
    }
    for _ in n_hard..n_draws {
        out.push(rng.gen_range(0..n));
    }
    out.shuffle(rng);
    Ok(out)
}

/// Points the color output bias at the dataset's mean color.
pub fn init_color_bias<M: RayModel<f32>>(model: &mut M, data: &DistillDataset) {
    let mut mean = [0.0; 3];
    for c in &data.rgb {
        for k in 0..3 {
            mean[k] += c[k] / data.len().max(1) as f64;
        }
    }
    let graph = model.graph().clone();
    graph.set_color_bias(model.params_mut(), mean);
}

/// Minibatch Adam on the distillation loss.
///
/// With `iters == 0` the parameters are untouched.
pub fn distill<M: RayModel<f32>>(model: &mut M, data: &DistillDataset, cfg: &TrainConfig) -> Result<LossCurve> {
    train_on(model, data, cfg)
}

/// Trains on every pixel ray of the given frames with exact oracle colors.
pub fn finetune<M: RayModel<f32>>(
    model: &mut M,
    scene: &OracleScene,
    cams: &[Camera],
    frames_t: &[f64],
    cfg: &TrainConfig,
) -> Result<LossCurve> {
    if cams.len() != frames_t.len() {
        return Err(Error::LengthMismatch { left: cams.len(), right: frames_t.len() });
    }
    let frames: Vec<(Camera, f64)> = cams.iter().copied().zip(frames_t.iter().copied()).collect();
    finetune_frames(model, scene, &frames, &[], cfg)
}

/// [`finetune`] with one attribute vector per frame (zeros when `alphas` is empty).
pub fn finetune_frames<M: RayModel<f32>>(
    model: &mut M,
    scene: &OracleScene,
    frames: &[(Camera, f64)],
    alphas: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<LossCurve> {
    let data = pixel_dataset(scene, frames, alphas, model.n_attr())?;
    train_on(model, &data, cfg)
}

fn train_on<M: RayModel<f32>>(model: &mut M, data: &DistillDataset, cfg: &TrainConfig) -> Result<LossCurve> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if data.n_attr() != model.n_attr() {
        return Err(Error::ArityMismatch { model: model.n_attr(), data: data.n_attr() });
    }
    let n_attr = data.n_attr();
    let with_masks = n_attr > 0;
    let mut curve = LossCurve { with_masks, ..LossCurve::default() };
    if cfg.iters == 0 {
        return Ok(curve);
    }
    let c = model.base_config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd157_1770);
    let mut adam = AdamState::<f32>::new(model.n_params(), cfg.lr);
    let mut grads = vec![0.0f32; model.n_params()];
    let n = data.len();
    let batch = cfg.batch.min(n);
    let mut seen_loss = vec![f64::NAN; n];
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch_sum = 0.0;
    let mut epoch_count = 0;
    for iter in 0..cfg.iters {
        if cursor + batch > order.len() {
            if epoch_count > 0 {
                curve.epochs.push(epoch_sum / epoch_count as f64);
                epoch_sum = 0.0;
                epoch_count = 0;
            }
            order = next_epoch(&seen_loss, cfg, &mut rng)?;
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let rays: Vec<_> = idx.iter().map(|&i| data.rays[i]).collect();
        let ts: Vec<f64> = idx.iter().map(|&i| data.ts[i]).collect();
        let alphas: Vec<f64> = idx.iter().flat_map(|&i| data.sample(i).alpha.iter().copied()).collect();
        let b = RayBatch::<f32>::new(&rays, &ts, &alphas, n_attr, c.k_points, c.near, c.far, cfg.sample_mode, &mut rng)?;
        let target: Vec<f32> = idx.iter().flat_map(|&i| data.rgb[i]).map(|v| v as f32).collect();
        let tmasks: Option<Vec<f32>> =
            with_masks.then(|| idx.iter().flat_map(|&i| data.sample(i).masks.iter().map(|&v| v as f32)).collect());
        grads.fill(0.0);
        let report = model.loss_and_grad(&b, &target, tmasks.as_deref(), cfg.mask_weight, &mut grads)?;
        if !report.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { iter });
        }
        for (&i, &l) in idx.iter().zip(&report.per_sample) {
            seen_loss[i] = l;
        }
        curve.points.push((iter, report.loss, report.mask_loss));
        epoch_sum += report.loss;
        epoch_count += 1;
        adam.lr = cfg.lr_at(iter);
        adam_step(model.params_mut(), &grads, &mut adam)?;
    }
    if epoch_count > 0 {
        curve.epochs.push(epoch_sum / epoch_count as f64);
    }
    Ok(curve)
}

fn next_epoch(seen_loss: &[f64], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = seen_loss.len();
    if cfg.hard_mining && seen_loss.iter().all(|l| l.is_finite()) {
        return mine_hard_examples(seen_loss, cfg.hard_frac, cfg.hard_ratio, n, rng);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order)
}
