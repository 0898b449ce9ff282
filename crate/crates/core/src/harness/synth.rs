//! Synthetic scenes: flat-coloured rectangles and ellipses on a background,
//! with pixel noise, plus the label map they were rasterised from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::labels::LabelMap;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Smallest side on which a shape is placed; smaller scenes are background only.
pub const MIN_SHAPE_SIZE: usize = 8;

const PALETTE: [[f32; 3]; 8] = [
    [0.45, 0.45, 0.45],
    [0.85, 0.20, 0.15],
    [0.15, 0.70, 0.25],
    [0.20, 0.30, 0.85],
    [0.90, 0.80, 0.20],
    [0.75, 0.25, 0.80],
    [0.15, 0.80, 0.85],
    [0.95, 0.55, 0.10],
];

/// Base colour of a class. Classes past the fixed palette cycle through it
/// with a brightness offset.
pub fn class_color(class: usize) -> [f32; 3] {
    let base = PALETTE[class % PALETTE.len()];
    let shift = 0.1 * (class / PALETTE.len()) as f32;
    base.map(|v| (v + shift).fract())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
}

/// Axis-aligned shape centred at `(cy, cx)` with half-extents `(ry, rx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub class: u16,
    pub kind: ShapeKind,
    pub cy: f64,
    pub cx: f64,
    pub ry: f64,
    pub rx: f64,
}

impl Shape {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        let dy = (y as f64 - self.cy) / self.ry;
        let dx = (x as f64 - self.cx) / self.rx;
        match self.kind {
            ShapeKind::Rectangle => dy.abs() <= 1.0 && dx.abs() <= 1.0,
            ShapeKind::Ellipse => dy * dy + dx * dx <= 1.0,
        }
    }

    fn bbox_overlaps(&self, other: &Shape, margin: f64) -> bool {
        (self.cy - other.cy).abs() < self.ry + other.ry + margin
            && (self.cx - other.cx).abs() < self.rx + other.rx + margin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    /// `3×H×W`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub labels: LabelMap,
}

/// Paints `shapes` (later shapes on top) over class 0 and renders the image
/// with per-pixel Gaussian noise of standard deviation `noise`.
pub fn render_scene<R: Rng + ?Sized>(
    size: usize,
    num_classes: usize,
    shapes: &[Shape],
    noise: f64,
    rng: &mut R,
) -> Result<SynthScene> {
    let mut values = vec![0u16; size * size];
    for s in shapes {
        for y in 0..size {
            for x in 0..size {
                if s.contains(y, x) {
                    values[y * size + x] = s.class;
                }
            }
        }
    }
    let labels = LabelMap::new(size, size, num_classes, values)?;
    let normal =
        Normal::new(0.0, noise).map_err(|e| Error::invalid("render_scene", e.to_string()))?;
    let plane = size * size;
    let mut img = vec![0f32; 3 * plane];
    for (i, &l) in labels.values().iter().enumerate() {
        let col = class_color(l as usize);
        for ch in 0..3 {
            let v = col[ch] as f64 + normal.sample(rng);
            img[ch * plane + i] = v.clamp(0.0, 1.0) as f32;
        }
    }
    Ok(SynthScene {
        image: Tensor::from_vec(&[3, size, size], img)?,
        labels,
    })
}

fn random_shapes<R: Rng + ?Sized>(size: usize, num_classes: usize, rng: &mut R) -> Vec<Shape> {
    let mut shapes: Vec<Shape> = Vec::new();
    if size < MIN_SHAPE_SIZE || num_classes < 2 {
        return shapes;
    }
    let wanted = rng.random_range(1..=3usize);
    let (lo, hi) = (size as f64 / 10.0, size as f64 / 4.0);
    for _ in 0..wanted {
        for _attempt in 0..20 {
            let ry = rng.random_range(lo..hi);
            let rx = rng.random_range(lo..hi);
            let s = Shape {
                class: rng.random_range(1..num_classes) as u16,
                kind: if rng.random_bool(0.5) {
                    ShapeKind::Rectangle
                } else {
                    ShapeKind::Ellipse
                },
                cy: rng.random_range(ry..size as f64 - 1.0 - ry),
                cx: rng.random_range(rx..size as f64 - 1.0 - rx),
                ry,
                rx,
            };
            if shapes.iter().all(|o| !s.bbox_overlaps(o, 2.0)) {
                shapes.push(s);
                break;
            }
        }
    }
    shapes
}

/// `count` deterministic scenes of `size×size` pixels with `num_classes`
/// classes (class 0 is background).
pub fn synth_dataset(
    seed: u64,
    count: usize,
    size: usize,
    num_classes: usize,
) -> Result<Vec<SynthScene>> {
    if num_classes < 2 {
        return Err(Error::invalid(
            "synth_dataset",
            "need a background and at least one shape class",
        ));
    }
    if size == 0 {
        return Err(Error::invalid("synth_dataset", "size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let shapes = random_shapes(size, num_classes, &mut rng);
            render_scene(size, num_classes, &shapes, 0.08, &mut rng)
        })
        .collect()
}
