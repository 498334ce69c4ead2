//! The training loop: mask-mode input assembly, masked BCE, Adam, per-epoch
//! validation, best-checkpoint retention. Single-threaded and deterministic;
//! two runs with the same seed and data are bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{coat_output, sigmoid_forward};
use crate::nn::{init_params, unet_backward, unet_forward, ModelParams, Tensor, UNetConfig};
use crate::patches::{Patch, PatchArchive, Split};
use crate::rng::{shuffle, SplitMix64};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::eval::{ConfusionCounts, MetricsReport};

/// How the validity mask enters the model.
///
/// `Channel` stacks it as a fourth input channel; `Premultiply` zeroes
/// image pixels outside the mask; `FixedFill` replaces them with a
/// constant. The latter two feed the model 3 channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    Channel,
    Premultiply,
    FixedFill(f32),
}

impl MaskMode {
    pub fn in_channels(&self) -> usize {
        match self {
            MaskMode::Channel => 4,
            MaskMode::Premultiply | MaskMode::FixedFill(_) => 3,
        }
    }
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    4
}
fn default_epochs() -> usize {
    20
}
fn default_mask_mode() -> MaskMode {
    MaskMode::Channel
}
fn default_levels() -> usize {
    4
}
fn default_base_filters() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mask_mode")]
    pub mask_mode: MaskMode,
    #[serde(default)]
    pub checkpoint: Option<String>,
    /// Model depth; full-scale runs default to 4, desk-scale runs use 3.
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_base_filters")]
    pub base_filters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(Error::validation("learning_rate must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::validation("beta1 and beta2 must lie in [0, 1)"));
        }
        if self.batch_size < 1 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        Ok(())
    }

    pub fn model_config(&self) -> UNetConfig {
        UNetConfig {
            in_channels: self.mask_mode.in_channels(),
            out_channels: 1,
            levels: self.levels,
            base_filters: self.base_filters,
        }
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate as f32,
            beta1: self.beta1 as f32,
            beta2: self.beta2 as f32,
            epsilon: self.epsilon as f32,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_iou: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub config: UNetConfig,
    /// Parameters of the epoch with the best validation masked accuracy
    /// (earlier epoch on ties).
    pub best_params: ModelParams<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Write one patch's model input into `out` at batch slot `slot`.
pub fn write_model_input(patch: &Patch, mode: MaskMode, size: usize, out: &mut [f32]) {
    let plane = size * size;
    match mode {
        MaskMode::Channel => {
            out[..3 * plane].copy_from_slice(&patch.image);
            for i in 0..plane {
                out[3 * plane + i] = patch.mask[i] as f32;
            }
        }
        MaskMode::Premultiply => {
            for band in 0..3 {
                for i in 0..plane {
                    out[band * plane + i] = patch.image[band * plane + i] * patch.mask[i] as f32;
                }
            }
        }
        MaskMode::FixedFill(v) => {
            for band in 0..3 {
                for i in 0..plane {
                    out[band * plane + i] =
                        if patch.mask[i] != 0 { patch.image[band * plane + i] } else { v };
                }
            }
        }
    }
}

fn batch_tensors(
    archive: &PatchArchive,
    indices: &[usize],
    mode: MaskMode,
) -> (Tensor<f32>, Tensor<f32>, Tensor<f32>) {
    let s = archive.spec.size;
    let c = mode.in_channels();
    let n = indices.len();
    let plane = s * s;
    let mut x = Tensor::zeros(vec![n, c, s, s]);
    let mut labels = Tensor::zeros(vec![n, 1, s, s]);
    let mut mask = Tensor::zeros(vec![n, 1, s, s]);
    for (slot, &idx) in indices.iter().enumerate() {
        let patch = &archive.patches[idx];
        write_model_input(patch, mode, s, &mut x.data[slot * c * plane..(slot + 1) * c * plane]);
        for i in 0..plane {
            labels.data[slot * plane + i] = patch.label[i] as f32;
            mask.data[slot * plane + i] = patch.mask[i] as f32;
        }
    }
    (x, labels, mask)
}

/// Masked metrics of the current model over one split of the archive.
pub fn evaluate_split(
    cfg: &UNetConfig,
    params: &ModelParams<f32>,
    archive: &PatchArchive,
    split: Split,
    mode: MaskMode,
    threshold: f32,
) -> Result<MetricsReport> {
    let mut counts = ConfusionCounts::default();
    for idx in archive.indices_of(split) {
        let (x, _, mask) = batch_tensors(archive, &[idx], mode);
        let (logits, _) = unet_forward(cfg, params, &x)?;
        let probs = coat_output(&sigmoid_forward(&logits), &mask)?;
        let patch = &archive.patches[idx];
        for i in 0..probs.len() {
            counts.add(probs.data[i], patch.label[i], patch.mask[i], threshold);
        }
    }
    Ok(counts.report())
}

/// Train on the archive's train split, validating each epoch.
pub fn train(config: &TrainConfig, archive: &PatchArchive) -> Result<TrainOutcome> {
    config.validate()?;
    let train_idx = archive.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::validation("archive contains no train patches"));
    }
    let cfg = config.model_config();
    let mut params: ModelParams<f32> = init_params(&cfg, config.seed)?;
    let mut state = AdamState::new(&params);
    let hyper = config.adam_hyper();

    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order = train_idx.clone();
        let mut rng = SplitMix64::new(
            config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        shuffle(&mut order, &mut rng);

        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (x, labels, mask) = batch_tensors(archive, chunk, config.mask_mode);
            let (logits, cache) = unet_forward(&cfg, &params, &x)?;
            let (loss, grad_logits) =
                crate::nn::ops::masked_bce_with_logits(&logits, &labels, &mask, None)?;
            let grads = unet_backward(&cfg, &params, &cache, &grad_logits)?;
            adam_step(&mut params, &grads, &mut state, &hyper)?;
            loss_sum += loss as f64;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;

        let val = evaluate_split(&cfg, &params, archive, Split::Val, config.mask_mode, 0.5)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy: val.accuracy,
            val_iou: val.iou,
        });
        let accuracy = val.accuracy.unwrap_or(f64::NEG_INFINITY);
        if accuracy > best_accuracy || (best_accuracy == f64::NEG_INFINITY && epoch == 0) {
            best_accuracy = accuracy;
            best_params = params.clone();
            best_epoch = epoch;
        }
    }
    Ok(TrainOutcome { config: cfg, best_params, best_epoch, history })
}
