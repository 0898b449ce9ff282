//! The toy segmentation network: a dilated convolution stack, a boundary head
//! whose confidence gates the propagation module, and a segmentation head on
//! the propagated features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{
    boundary_confidence, boundary_confidence_vjp, propagation_confidence,
    propagation_confidence_vjp, ConfidenceMap, GateParams,
};
use crate::labels::{LabelMap, DEFAULT_IGNORE};
use crate::scan::{bfp_backward, bfp_forward, BfpOptions, BfpParams, BfpTape};
use crate::tensor::{
    conv2d_dilated, conv2d_dilated_vjp, cross_entropy_masked, cross_entropy_masked_vjp,
    pointwise_linear, pointwise_linear_vjp, relu, relu_vjp, Tensor,
};
use crate::{Error, Real, Result};

/// How the propagation module is gated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// All six scans gated, `β` learned.
    Gated,
    /// No gate map at all.
    Ungated,
    /// Gated with `β` held at its configured value.
    BetaFrozen,
    /// Only the four horizontal scans gated.
    FirstStageUngated,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Ungated,
        Variant::Gated,
        Variant::BetaFrozen,
        Variant::FirstStageUngated,
    ];

    pub fn is_gated(self) -> bool {
        self != Variant::Ungated
    }

    pub fn learns_beta(self) -> bool {
        matches!(self, Variant::Gated | Variant::FirstStageUngated)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gated => "gated",
            Variant::Ungated => "ungated",
            Variant::BetaFrozen => "beta-frozen",
            Variant::FirstStageUngated => "first-stage-ungated",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    /// One 3×3 (or `kernel`×`kernel`) convolution per entry.
    pub dilations: Vec<usize>,
    pub kernel: usize,
    /// Extent of the 1D kernels inside the scans.
    pub scan_kernel: usize,
    /// Semantic classes, excluding the boundary class.
    pub num_classes: usize,
    pub boundary_radius: f64,
    pub gate: GateParams,
    pub variant: Variant,
    /// Block the gating-path gradient into the boundary head.
    pub stop_gradient: bool,
    /// Weight of the boundary loss.
    pub loss_weight: f64,
    pub seed: u64,
    pub ignore: u16,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            dilations: vec![1, 1, 2, 2, 4, 4],
            kernel: 3,
            scan_kernel: 1,
            num_classes: 5,
            boundary_radius: 3.0,
            gate: GateParams::default(),
            variant: Variant::Gated,
            stop_gradient: false,
            loss_weight: 1.0,
            seed: 7,
            ignore: DEFAULT_IGNORE,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        const OP: &str = "build_model";
        let bad = |msg: &str| Err(Error::invalid(OP, msg.to_string()));
        if self.channels == 0 {
            return bad("channels must be positive");
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return bad("dilations must be a non-empty list of positive rates");
        }
        if self.kernel.is_multiple_of(2) || self.scan_kernel.is_multiple_of(2) {
            return bad("kernel extents must be odd");
        }
        if self.num_classes < 2 {
            return bad("need at least two classes");
        }
        if usize::from(self.ignore) <= self.num_classes {
            return bad("ignore value collides with a class or the boundary class");
        }
        if !(self.boundary_radius > 0.0 && self.boundary_radius.is_finite()) {
            return bad("boundary radius must be positive");
        }
        if !(self.loss_weight >= 0.0 && self.loss_weight.is_finite()) {
            return bad("loss weight must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.gate.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.gate.alpha.is_finite() && self.gate.gamma.is_finite()) {
            return bad("alpha and gamma must be finite");
        }
        Ok(())
    }

    pub fn bfp_options(&self) -> BfpOptions {
        BfpOptions {
            gate_first_stage: self.variant != Variant::FirstStageUngated,
        }
    }

    /// Parameter count from the layer shapes alone.
    pub fn param_count(&self) -> usize {
        let (c, kk, ks, n) = (
            self.channels,
            self.kernel * self.kernel,
            self.scan_kernel,
            self.num_classes,
        );
        let backbone = (3 * c * kk + c) + (self.dilations.len() - 1) * (c * c * kk + c);
        let head_boundary = (n + 1) * c + (n + 1);
        let first = 2 * (2 * c * c * ks + c);
        let second = 4 * (3 * c * c * ks + c);
        let fuse = 4 * c * c;
        let head_seg = n * c + n;
        backbone + head_boundary + first + second + fuse + head_seg + 1
    }
}

/// Dilated convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    /// `Cout×Cin×k×k`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub dilation: usize,
}

/// Per-pixel linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `Cout×Cin`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub backbone: Vec<Conv<T>>,
    pub head_boundary: Linear<T>,
    pub bfp: BfpParams<T>,
    pub head_seg: Linear<T>,
    /// Shape `[1]`.
    pub beta: Tensor<T>,
}

impl<T: Real> ModelParams<T> {
    fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (c, k) = (cfg.channels, cfg.kernel);
        let mut cin = 3;
        let mut backbone = Vec::with_capacity(cfg.dilations.len());
        for &d in &cfg.dilations {
            let bound = (1.0 / (cin * k * k) as f64).sqrt();
            backbone.push(Conv {
                weight: Tensor::uniform(&[c, cin, k, k], bound, rng),
                bias: Tensor::zeros(&[c]),
                dilation: d,
            });
            cin = c;
        }
        let linear = |cout: usize, rng: &mut R| Linear {
            weight: Tensor::uniform(&[cout, c], (1.0 / c as f64).sqrt(), rng),
            bias: Tensor::zeros(&[cout]),
        };
        let head_boundary = linear(cfg.num_classes + 1, rng);
        let bfp = BfpParams::init(c, cfg.scan_kernel, rng);
        let head_seg = linear(cfg.num_classes, rng);
        Self {
            backbone,
            head_boundary,
            bfp,
            head_seg,
            beta: Tensor::scalar(T::of(cfg.gate.beta))
                .reshape(&[1])
                .expect("one element"),
        }
    }

    /// Tensors in a fixed order: backbone, boundary head, propagation module,
    /// segmentation head, `β`.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        for l in &self.backbone {
            v.push(&l.weight);
            v.push(&l.bias);
        }
        v.push(&self.head_boundary.weight);
        v.push(&self.head_boundary.bias);
        v.extend(self.bfp.tensors());
        v.push(&self.head_seg.weight);
        v.push(&self.head_seg.bias);
        v.push(&self.beta);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for l in &mut self.backbone {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v.push(&mut self.head_boundary.weight);
        v.push(&mut self.head_boundary.bias);
        v.extend(self.bfp.tensors_mut());
        v.push(&mut self.head_seg.weight);
        v.push(&mut self.head_seg.bias);
        v.push(&mut self.beta);
        v
    }

    pub fn zeros_like(&self) -> Self {
        let zl = |l: &Linear<T>| Linear {
            weight: Tensor::zeros(l.weight.shape()),
            bias: Tensor::zeros(l.bias.shape()),
        };
        Self {
            backbone: self
                .backbone
                .iter()
                .map(|l| Conv {
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                    dilation: l.dilation,
                })
                .collect(),
            head_boundary: zl(&self.head_boundary),
            bfp: self.bfp.zeros_like(),
            head_seg: zl(&self.head_seg),
            beta: Tensor::zeros(&[1]),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let cl = |l: &Linear<T>| Linear {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        ModelParams {
            backbone: self
                .backbone
                .iter()
                .map(|l| Conv {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                    dilation: l.dilation,
                })
                .collect(),
            head_boundary: cl(&self.head_boundary),
            bfp: self.bfp.cast(),
            head_seg: cl(&self.head_seg),
            beta: self.beta.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ModelTape<T> {
    /// Input of each backbone layer; the last entry is the feature map.
    acts: Vec<Tensor<T>>,
    /// Pre-activation of each backbone layer.
    pre: Vec<Tensor<T>>,
    pub boundary_scores: Tensor<T>,
    pub boundary: ConfidenceMap<T>,
    pub gate: Option<ConfidenceMap<T>>,
    bfp: BfpTape<T>,
    pub seg_scores: Tensor<T>,
}

impl<T: Real> ModelTape<T> {
    pub fn features(&self) -> &Tensor<T> {
        self.acts.last().expect("at least the input")
    }

    /// Signs of every ReLU pre-activation, backbone first, then the scans.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut v: Vec<bool> = self
            .pre
            .iter()
            .flat_map(|p| p.data().iter().map(|&a| a > T::zero()))
            .collect();
        for t in self.bfp.first_stage().iter().chain(self.bfp.second_stage()) {
            if let Some(pre) = t.pre_activations() {
                v.extend(pre.data().iter().map(|&a| a > T::zero()));
            }
        }
        v
    }

    /// Smallest `|pre-activation|` over every ReLU.
    pub fn min_abs_pre_activation(&self) -> f64 {
        let mut m = f64::INFINITY;
        let mut visit = |d: &[T]| {
            for &a in d {
                m = m.min(a.as_f64().abs());
            }
        };
        self.pre.iter().for_each(|p| visit(p.data()));
        for t in self.bfp.first_stage().iter().chain(self.bfp.second_stage()) {
            if let Some(pre) = t.pre_activations() {
                visit(pre.data());
            }
        }
        m
    }

    /// Per-pixel argmax of the segmentation scores.
    pub fn prediction(&self, ignore: u16) -> Result<LabelMap> {
        argmax_labels(&self.seg_scores, ignore)
    }

    /// Per-pixel argmax of the boundary-head scores, boundary class included.
    pub fn boundary_prediction(&self, ignore: u16) -> Result<LabelMap> {
        argmax_labels(&self.boundary_scores, ignore)
    }
}

/// Channel argmax, first maximum wins.
pub fn argmax_labels<T: Real>(scores: &Tensor<T>, ignore: u16) -> Result<LabelMap> {
    let (c, h, w) = scores.dims3("argmax_labels")?;
    let plane = h * w;
    let d = scores.data();
    let values = (0..plane)
        .map(|i| {
            let mut best = 0;
            for k in 1..c {
                if d[k * plane + i] > d[best * plane + i] {
                    best = k;
                }
            }
            best as u16
        })
        .collect();
    LabelMap::with_ignore(w, h, c, ignore, values)
}

/// Loss terms of one training example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses<T> {
    pub segmentation: T,
    pub boundary: T,
    pub total: T,
}

impl<T: Real> Model<T> {
    /// Builds and initialises the model from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = super::stream_rng(config.seed, super::STREAM_INIT);
        let params = ModelParams::init(&config, &mut rng);
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        let expected = config.param_count();
        if params.num_params() != expected {
            return Err(Error::invalid(
                "build_model",
                format!(
                    "parameters hold {} values, config implies {expected}",
                    params.num_params()
                ),
            ));
        }
        Ok(Self { config, params })
    }

    pub fn gate_params(&self) -> GateParams {
        GateParams {
            beta: self.params.beta.data()[0].as_f64(),
            ..self.config.gate
        }
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<ModelTape<T>> {
        let (c, _, _) = image.dims3("model_forward")?;
        if c != 3 {
            return Err(Error::shape("model_forward", &[3], &[c]));
        }
        let mut acts = vec![image.clone()];
        let mut pre = Vec::with_capacity(self.params.backbone.len());
        for l in &self.params.backbone {
            let z = conv2d_dilated(acts.last().expect("input"), &l.weight, &l.bias, l.dilation)?;
            acts.push(relu(&z));
            pre.push(z);
        }
        let features = acts.last().expect("features");
        let hb = &self.params.head_boundary;
        let boundary_scores = pointwise_linear(features, &hb.weight, Some(&hb.bias))?;
        let boundary = boundary_confidence(&boundary_scores)?;
        let gate = self
            .config
            .variant
            .is_gated()
            .then(|| propagation_confidence(&boundary, &self.gate_params()));
        let bfp = bfp_forward(
            features,
            gate.as_ref(),
            &self.params.bfp,
            self.config.bfp_options(),
        )?;
        let hs = &self.params.head_seg;
        let seg_scores = pointwise_linear(&bfp.output, &hs.weight, Some(&hs.bias))?;
        Ok(ModelTape {
            acts,
            pre,
            boundary_scores,
            boundary,
            gate,
            bfp,
            seg_scores,
        })
    }

    /// `CE(seg, labels) + λ·CE(boundary head, boundary_labels)`.
    pub fn losses(
        &self,
        tape: &ModelTape<T>,
        labels: &LabelMap,
        boundary_labels: &LabelMap,
    ) -> Result<Losses<T>> {
        let segmentation = cross_entropy_masked(&tape.seg_scores, labels)?;
        let boundary = cross_entropy_masked(&tape.boundary_scores, boundary_labels)?;
        Ok(Losses {
            segmentation,
            boundary,
            total: segmentation + T::of(self.config.loss_weight) * boundary,
        })
    }

    /// Gradient of the total loss with respect to every parameter.
    pub fn backward(
        &self,
        tape: &ModelTape<T>,
        labels: &LabelMap,
        boundary_labels: &LabelMap,
    ) -> Result<ModelParams<T>> {
        let mut grads = self.params.zeros_like();
        let hs = &self.params.head_seg;
        let ds1 = cross_entropy_masked_vjp(T::one(), &tape.seg_scores, labels)?;
        let g1 = pointwise_linear_vjp(&ds1, &tape.bfp.output, &hs.weight)?;
        grads.head_seg = Linear {
            weight: g1.weight,
            bias: g1.bias,
        };
        let gb = bfp_backward(&g1.input, &tape.bfp, &self.params.bfp)?;
        grads.bfp = gb.params;

        let mut ds2 = cross_entropy_masked_vjp(
            T::of(self.config.loss_weight),
            &tape.boundary_scores,
            boundary_labels,
        )?;
        if let Some(dp) = gb.p.as_ref() {
            let (db, dbeta) = propagation_confidence_vjp(dp, &tape.boundary, &self.gate_params())?;
            if self.config.variant.learns_beta() {
                grads.beta.data_mut()[0] = dbeta;
            }
            if !self.config.stop_gradient {
                ds2.add_assign(&boundary_confidence_vjp(&db, &tape.boundary_scores)?)?;
            }
        }
        let hb = &self.params.head_boundary;
        let g2 = pointwise_linear_vjp(&ds2, tape.features(), &hb.weight)?;
        grads.head_boundary = Linear {
            weight: g2.weight,
            bias: g2.bias,
        };

        let mut dx = gb.features;
        dx.add_assign(&g2.input)?;
        for (i, l) in self.params.backbone.iter().enumerate().rev() {
            let dz = relu_vjp(&dx, &tape.pre[i])?;
            let g = conv2d_dilated_vjp(&dz, &tape.acts[i], &l.weight, l.dilation)?;
            grads.backbone[i].weight = g.weight;
            grads.backbone[i].bias = g.bias;
            dx = g.input;
        }
        Ok(grads)
    }

    /// Total loss and its gradient for one example.
    pub fn loss_and_grads(
        &self,
        image: &Tensor<T>,
        labels: &LabelMap,
        boundary_labels: &LabelMap,
    ) -> Result<(Losses<T>, ModelParams<T>)> {
        let tape = self.forward(image)?;
        let losses = self.losses(&tape, labels, boundary_labels)?;
        let grads = self.backward(&tape, labels, boundary_labels)?;
        Ok((losses, grads))
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            channels: 4,
            dilations: vec![1, 2],
            num_classes: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn shapes_and_param_count() {
        let cfg = ModelConfig::default();
        let m = Model::<f32>::new(cfg.clone()).unwrap();
        assert_eq!(m.params.num_params(), cfg.param_count());
        let tape = m.forward(&Tensor::zeros(&[3, 64, 64])).unwrap();
        assert_eq!(tape.seg_scores.shape(), &[5, 64, 64]);
        assert_eq!(tape.boundary_scores.shape(), &[6, 64, 64]);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Model::<f32>::new(small()).unwrap();
        let b = Model::<f32>::new(small()).unwrap();
        assert_eq!(a, b);
        let c = Model::<f32>::new(ModelConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            ModelConfig {
                channels: 0,
                ..small()
            },
            ModelConfig {
                kernel: 2,
                ..small()
            },
            ModelConfig {
                num_classes: 1,
                ..small()
            },
            ModelConfig {
                dilations: vec![],
                ..small()
            },
            ModelConfig {
                gate: GateParams {
                    beta: 1.5,
                    ..GateParams::default()
                },
                ..small()
            },
        ] {
            assert!(Model::<f32>::new(cfg).is_err());
        }
    }

    #[test]
    fn argmax_takes_first_maximum() {
        let s = Tensor::<f64>::from_f64(&[3, 1, 2], &[1.0, 0.0, 1.0, 2.0, 0.5, 2.0]).unwrap();
        assert_eq!(argmax_labels(&s, 255).unwrap().values(), &[0, 1]);
    }
}
