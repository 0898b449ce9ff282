use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::labels::generate_boundary_labels;
use crate::tensor::{SgdConfig, SgdState};
use crate::{Error, Result};

use super::augment::{augment, AugmentConfig};
use super::metrics::{boundary_confidence_stats, check_bands, evaluate, MetricsReport};
use super::model::{Model, ModelConfig};
use super::synth::{synth_dataset, SynthScene};
use super::{stream_rng, STREAM_AUGMENT, STREAM_DATA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub sgd: SgdConfig,
    pub augment: AugmentConfig,
    /// Steps averaged at each end of the loss curve.
    pub smoothing_window: usize,
    pub trimap_bands: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            sgd: SgdConfig::default(),
            augment: AugmentConfig::default(),
            smoothing_window: 50,
            trimap_bands: vec![1.5, 3.0, 5.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub size: usize,
    pub train_count: usize,
    pub eval_count: usize,
    pub train_seed: u64,
    pub eval_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            size: 64,
            train_count: 32,
            eval_count: 16,
            train_seed: 1,
            eval_seed: 2,
        }
    }
}

/// Everything a toy run depends on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

/// Per-step record of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub total: Vec<f64>,
    pub segmentation: Vec<f64>,
    pub boundary: Vec<f64>,
    pub lr: Vec<f64>,
}

/// Means of the first and last `window` entries, `None` when the curve is
/// shorter than the window.
pub fn smoothed_losses(curve: &[f64], window: usize) -> (Option<f64>, Option<f64>) {
    if window == 0 || curve.len() < window {
        return (None, None);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (
        Some(mean(&curve[..window])),
        Some(mean(&curve[curve.len() - window..])),
    )
}

/// Runs `cfg.steps` single-image SGD steps on augmented scenes drawn from
/// `scenes`. Data order and augmentation come from their own generators under
/// the model seed.
pub fn train(model: &mut Model<f32>, scenes: &[SynthScene], cfg: &TrainConfig) -> Result<TrainLog> {
    const OP: &str = "train";
    if cfg.steps > cfg.sgd.total_iters {
        return Err(Error::invalid(
            OP,
            format!(
                "steps {} exceed total_iters {}",
                cfg.steps, cfg.sgd.total_iters
            ),
        ));
    }
    if cfg.steps > 0 && scenes.is_empty() {
        return Err(Error::invalid(OP, "no training scenes"));
    }
    cfg.augment.validate()?;
    let mcfg = model.config.clone();
    let mut data_rng = stream_rng(mcfg.seed, STREAM_DATA);
    let mut aug_rng = stream_rng(mcfg.seed, STREAM_AUGMENT);
    let mut sgd = SgdState::new(cfg.sgd, &model.params.tensors());
    let frozen_beta = model.params.beta.data()[0];
    let mut log = TrainLog::default();

    for step in 0..cfg.steps {
        let scene = &scenes[data_rng.random_range(0..scenes.len())];
        let (image, labels) = augment(&scene.image, &scene.labels, &cfg.augment, &mut aug_rng)?;
        let boundary_labels = generate_boundary_labels(&labels, mcfg.boundary_radius)?;
        let (losses, grads) = model.loss_and_grads(&image, &labels, &boundary_labels)?;
        let total = f64::from(losses.total);
        if !total.is_finite() {
            return Err(Error::Diverged { step, loss: total });
        }
        let lr = sgd.step(&mut model.params.tensors_mut(), &grads.tensors(), step)?;
        let beta = &mut model.params.beta.data_mut()[0];
        *beta = if mcfg.variant.learns_beta() {
            beta.clamp(0.0, 1.0)
        } else {
            frozen_beta
        };
        log.total.push(total);
        log.segmentation.push(f64::from(losses.segmentation));
        log.boundary.push(f64::from(losses.boundary));
        log.lr.push(lr);
    }
    Ok(log)
}

/// Builds the datasets and model from `cfg`, trains, and evaluates on the
/// held-out scenes.
pub fn train_toy(cfg: &ToyConfig) -> Result<(Model<f32>, MetricsReport, TrainLog)> {
    check_bands(&cfg.train.trimap_bands)?;
    let d = &cfg.data;
    let n = cfg.model.num_classes;
    let train_set = synth_dataset(d.train_seed, d.train_count, d.size, n)?;
    let eval_set = synth_dataset(d.eval_seed, d.eval_count, d.size, n)?;
    let mut model = Model::new(cfg.model.clone())?;
    let log = train(&mut model, &train_set, &cfg.train)?;
    let eval = evaluate(&model, &eval_set, &cfg.train.trimap_bands)?;
    let confidence = boundary_confidence_stats(&model, &train_set)?;
    let (initial, last) = smoothed_losses(&log.total, cfg.train.smoothing_window);
    let report = MetricsReport {
        variant: cfg.model.variant,
        seed: cfg.model.seed,
        steps: cfg.train.steps,
        beta: f64::from(model.params.beta.data()[0]),
        eval,
        train_boundary_confidence: confidence,
        initial_smoothed_loss: initial,
        final_smoothed_loss: last,
        loss_curve: log.total.clone(),
    };
    Ok((model, report, log))
}
