//! Toy-scale training and evaluation: synthetic scenes, the dual-head model,
//! augmentation, the training loop, metrics and the ablation grid.

mod ablation;
mod augment;
mod metrics;
mod model;
pub mod store;
mod synth;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use ablation::{ablation_grid, aggregate, AblationRow, AblationTable, Aggregate, Spread};
pub use augment::{
    augment, crop_or_pad, flip_horizontal, resize_bilinear, resize_nearest, AugmentConfig,
};
pub use metrics::{
    boundary_confidence_stats, evaluate, evaluate_miou, evaluate_trimap, BandIou, ConfidenceStats,
    EvalReport, IouAccumulator, IouReport, MetricsReport,
};
pub use model::{
    argmax_labels, Conv, Linear, Losses, Model, ModelConfig, ModelParams, ModelTape, Variant,
};
pub use synth::{
    class_color, render_scene, synth_dataset, Shape, ShapeKind, SynthScene, MIN_SHAPE_SIZE,
};
pub use train::{smoothed_losses, train, train_toy, DataConfig, ToyConfig, TrainConfig, TrainLog};

pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_DATA: u64 = 1;
pub(crate) const STREAM_AUGMENT: u64 = 2;

/// Independent generator for one purpose (`STREAM_*`) under a seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
