use serde::{Deserialize, Serialize};

use crate::exec;
use crate::labels::{generate_boundary_labels, trimap_band_mask, LabelMap};
use crate::{Error, Result};

use super::model::{Model, Variant};
use super::synth::SynthScene;

/// Per-class IoU (absent classes are `None`) and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    /// `None` when no pixel was evaluated.
    pub miou: Option<f64>,
}

/// Intersection and union counts summed over any number of maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IouAccumulator {
    intersection: Vec<u64>,
    union: Vec<u64>,
    evaluated: u64,
}

impl IouAccumulator {
    pub fn new(num_classes: usize) -> Self {
        Self {
            intersection: vec![0; num_classes],
            union: vec![0; num_classes],
            evaluated: 0,
        }
    }

    /// Counts pixels where `gt` is not `ignore` and `mask` (if any) is set.
    /// Predictions outside `[0, num_classes)` count toward no class.
    pub fn add(
        &mut self,
        pred: &LabelMap,
        gt: &LabelMap,
        ignore: u16,
        mask: Option<&[bool]>,
    ) -> Result<()> {
        const OP: &str = "evaluate_miou";
        if pred.width() != gt.width() || pred.height() != gt.height() {
            return Err(Error::shape(
                OP,
                &[gt.height(), gt.width()],
                &[pred.height(), pred.width()],
            ));
        }
        if let Some(m) = mask {
            if m.len() != gt.len() {
                return Err(Error::shape(OP, &[gt.len()], &[m.len()]));
            }
        }
        let n = self.union.len();
        for (i, (&p, &g)) in pred.values().iter().zip(gt.values()).enumerate() {
            if g == ignore || mask.is_some_and(|m| !m[i]) {
                continue;
            }
            self.evaluated += 1;
            let (p, g) = (p as usize, g as usize);
            if p == g {
                if g < n {
                    self.intersection[g] += 1;
                    self.union[g] += 1;
                }
            } else {
                if g < n {
                    self.union[g] += 1;
                }
                if p < n {
                    self.union[p] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &IouAccumulator) {
        for (a, b) in self.intersection.iter_mut().zip(&other.intersection) {
            *a += b;
        }
        for (a, b) in self.union.iter_mut().zip(&other.union) {
            *a += b;
        }
        self.evaluated += other.evaluated;
    }

    pub fn evaluated(&self) -> u64 {
        self.evaluated
    }

    pub fn report(&self) -> IouReport {
        let per_class: Vec<Option<f64>> = self
            .intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let miou = (self.evaluated > 0 && !present.is_empty())
            .then(|| present.iter().sum::<f64>() / present.len() as f64);
        IouReport { per_class, miou }
    }
}

/// IoU per class over non-ignored, masked-in pixels; classes absent from both
/// maps are left out of the mean.
pub fn evaluate_miou(
    pred: &LabelMap,
    gt: &LabelMap,
    num_classes: usize,
    ignore: u16,
    mask: Option<&[bool]>,
) -> Result<IouReport> {
    let mut acc = IouAccumulator::new(num_classes);
    acc.add(pred, gt, ignore, mask)?;
    Ok(acc.report())
}

/// mIoU restricted to a band around the ground-truth boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandIou {
    pub band: f64,
    pub miou: Option<f64>,
}

pub(crate) fn check_bands(bands: &[f64]) -> Result<()> {
    if bands.iter().any(|&b| !(b > 0.0)) || bands.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "evaluate_trimap",
            "bands must be positive and strictly ascending",
        ));
    }
    Ok(())
}

/// mIoU within each trimap band of `gt`.
pub fn evaluate_trimap(pred: &LabelMap, gt: &LabelMap, bands: &[f64]) -> Result<Vec<BandIou>> {
    check_bands(bands)?;
    bands
        .iter()
        .map(|&band| {
            let mask = trimap_band_mask(gt, band)?;
            let r = evaluate_miou(pred, gt, gt.num_classes(), gt.ignore_value(), Some(&mask))?;
            Ok(BandIou { band, miou: r.miou })
        })
        .collect()
}

/// Mean boundary confidence on and off the generated boundary pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStats {
    pub on_boundary: Option<f64>,
    pub off_boundary: Option<f64>,
}

impl ConfidenceStats {
    fn from_sums(s: [f64; 4]) -> Self {
        Self {
            on_boundary: (s[1] > 0.0).then(|| s[0] / s[1]),
            off_boundary: (s[3] > 0.0).then(|| s[2] / s[3]),
        }
    }

    /// Whether boundary pixels receive strictly more confidence on average.
    pub fn separates(&self) -> bool {
        matches!((self.on_boundary, self.off_boundary), (Some(a), Some(b)) if a > b)
    }
}

/// `[sum on, count on, sum off, count off]` over non-ignored pixels.
fn confidence_sums(boundary_labels: &LabelMap, b: &[f32]) -> [f64; 4] {
    let boundary = boundary_labels.num_classes() as u16 - 1;
    let mut sums = [0.0; 4];
    for (&v, &p) in boundary_labels.values().iter().zip(b) {
        if v == boundary_labels.ignore_value() {
            continue;
        }
        let k = if v == boundary { 0 } else { 2 };
        sums[k] += f64::from(p);
        sums[k + 1] += 1.0;
    }
    sums
}

/// Boundary-confidence means over `scenes`, split by the boundary labels
/// generated from their ground truth.
pub fn boundary_confidence_stats(
    model: &Model<f32>,
    scenes: &[SynthScene],
) -> Result<ConfidenceStats> {
    let per_scene = exec::map_indices(
        scenes.len(),
        scenes.len() * 200_000,
        |i| -> Result<[f64; 4]> {
            let s = &scenes[i];
            let tape = model.forward(&s.image)?;
            let bl = generate_boundary_labels(&s.labels, model.config.boundary_radius)?;
            Ok(confidence_sums(&bl, tape.boundary.data()))
        },
    );
    let mut total = [0.0; 4];
    for s in per_scene {
        for (t, v) in total.iter_mut().zip(s?) {
            *t += v;
        }
    }
    Ok(ConfidenceStats::from_sums(total))
}

/// Scores of a model on a scene set. Counts are pooled over all scenes
/// before dividing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: usize,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    /// IoU of the boundary class predicted by the boundary head.
    pub boundary_iou: Option<f64>,
    pub trimap: Vec<BandIou>,
    pub boundary_confidence: ConfidenceStats,
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: Variant,
    pub seed: u64,
    pub steps: usize,
    pub beta: f64,
    /// On the held-out scenes.
    pub eval: EvalReport,
    /// Boundary confidence on the (unaugmented) training scenes.
    pub train_boundary_confidence: ConfidenceStats,
    /// Mean loss over the first and last smoothing windows.
    pub initial_smoothed_loss: Option<f64>,
    pub final_smoothed_loss: Option<f64>,
    pub loss_curve: Vec<f64>,
}

pub fn evaluate(model: &Model<f32>, scenes: &[SynthScene], bands: &[f64]) -> Result<EvalReport> {
    check_bands(bands)?;
    let cfg = &model.config;
    let n = cfg.num_classes;
    let per_scene = exec::map_indices(scenes.len(), scenes.len() * 200_000, |i| {
        let s = &scenes[i];
        let tape = model.forward(&s.image)?;
        let pred = tape.prediction(cfg.ignore)?;
        let mut seg = IouAccumulator::new(n);
        seg.add(&pred, &s.labels, cfg.ignore, None)?;
        let mut bands_acc = Vec::with_capacity(bands.len());
        for &b in bands {
            let mask = trimap_band_mask(&s.labels, b)?;
            let mut a = IouAccumulator::new(n);
            a.add(&pred, &s.labels, cfg.ignore, Some(&mask))?;
            bands_acc.push(a);
        }
        let bl = generate_boundary_labels(&s.labels, cfg.boundary_radius)?;
        let mut bacc = IouAccumulator::new(n + 1);
        bacc.add(
            &tape.boundary_prediction(cfg.ignore)?,
            &bl,
            cfg.ignore,
            None,
        )?;
        let conf = confidence_sums(&bl, tape.boundary.data());
        Ok::<_, Error>((seg, bands_acc, bacc, conf))
    });
    let mut seg = IouAccumulator::new(n);
    let mut band_acc: Vec<IouAccumulator> = bands.iter().map(|_| IouAccumulator::new(n)).collect();
    let mut bacc = IouAccumulator::new(n + 1);
    let mut conf = [0.0; 4];
    for r in per_scene {
        let (s, b, bd, c) = r?;
        seg.merge(&s);
        for (a, x) in band_acc.iter_mut().zip(&b) {
            a.merge(x);
        }
        bacc.merge(&bd);
        for (t, v) in conf.iter_mut().zip(c) {
            *t += v;
        }
    }
    let seg = seg.report();
    Ok(EvalReport {
        scenes: scenes.len(),
        per_class_iou: seg.per_class,
        miou: seg.miou,
        boundary_iou: bacc.report().per_class[n],
        trimap: bands
            .iter()
            .zip(&band_acc)
            .map(|(&band, a)| BandIou {
                band,
                miou: a.report().miou,
            })
            .collect(),
        boundary_confidence: ConfidenceStats::from_sums(conf),
    })
}
