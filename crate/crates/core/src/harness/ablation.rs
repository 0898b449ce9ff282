use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::metrics::MetricsReport;
use super::model::Variant;
use super::train::{train_toy, ToyConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Mean and sample standard deviation of a metric over seeds; `None` when
/// any run left it undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(values: &[Option<f64>]) -> Option<Self> {
        let v: Vec<f64> = values.iter().copied().collect::<Option<_>>()?;
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: Variant,
    pub runs: usize,
    pub miou: Option<Spread>,
    pub boundary_iou: Option<Spread>,
    /// `(band, spread)` per trimap band.
    pub trimap: Vec<(f64, Option<Spread>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and spread of each metric over `runs`, which should share a variant
/// and the trimap bands.
pub fn aggregate(variant: Variant, runs: &[AblationRow]) -> Aggregate {
    let bands: Vec<f64> = runs.first().map_or_else(Vec::new, |r| {
        r.report.eval.trimap.iter().map(|b| b.band).collect()
    });
    Aggregate {
        variant,
        runs: runs.len(),
        miou: Spread::of(&runs.iter().map(|r| r.report.eval.miou).collect::<Vec<_>>()),
        boundary_iou: Spread::of(
            &runs
                .iter()
                .map(|r| r.report.eval.boundary_iou)
                .collect::<Vec<_>>(),
        ),
        trimap: bands
            .iter()
            .enumerate()
            .map(|(i, &band)| {
                let v: Vec<Option<f64>> =
                    runs.iter().map(|r| r.report.eval.trimap[i].miou).collect();
                (band, Spread::of(&v))
            })
            .collect(),
    }
}

/// Trains `base` once per variant and seed (variant-major) and aggregates
/// each variant over its seeds. A variant listed twice gets two aggregates.
pub fn ablation_grid(
    base: &ToyConfig,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::invalid("ablation_grid", "need at least one seed"));
    }
    let mut rows = Vec::with_capacity(variants.len() * seeds.len());
    let mut aggregates = Vec::with_capacity(variants.len());
    for &variant in variants {
        let start = rows.len();
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.model.variant = variant;
            cfg.model.seed = seed;
            let (_, report, _) = train_toy(&cfg)?;
            rows.push(AblationRow {
                variant,
                seed,
                report,
            });
        }
        aggregates.push(aggregate(variant, &rows[start..]));
    }
    Ok(AblationTable { rows, aggregates })
}
