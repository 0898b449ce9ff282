//! Semantic label maps, boundary-class generation and trimap bands.

mod edt;
pub mod oracle;
mod pgm;

pub use edt::squared_distance_transform;
pub use pgm::{read_pgm, write_pgm, Pgm};

use crate::{Error, Result};

/// Conventional "do not evaluate" label in segmentation datasets.
pub const DEFAULT_IGNORE: u16 = 255;

/// Boundary radius used when none is given: "distance smaller than 9 pixels".
pub const DEFAULT_BOUNDARY_RADIUS: f64 = 9.0;

/// `H×W` map of class indices in `[0, num_classes)` or the ignore value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    num_classes: usize,
    ignore: u16,
    values: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, num_classes: usize, values: Vec<u16>) -> Result<Self> {
        Self::with_ignore(width, height, num_classes, DEFAULT_IGNORE, values)
    }

    pub fn with_ignore(
        width: usize,
        height: usize,
        num_classes: usize,
        ignore: u16,
        values: Vec<u16>,
    ) -> Result<Self> {
        const OP: &str = "LabelMap";
        if width == 0 || height == 0 {
            return Err(Error::invalid(OP, "dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::shape(OP, &[height, width], &[values.len()]));
        }
        if let Some(&bad) = values
            .iter()
            .find(|&&v| v != ignore && v as usize >= num_classes)
        {
            return Err(Error::range(
                OP,
                format!("label {bad} is not below num_classes {num_classes}"),
            ));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            ignore,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
    pub fn ignore_value(&self) -> u16 {
        self.ignore
    }
    pub fn values(&self) -> &[u16] {
        &self.values
    }
    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.values[y * self.width + x]
    }
    pub fn is_ignored(&self, i: usize) -> bool {
        self.values[i] == self.ignore
    }

    /// Pixel count per class (ignored pixels are not counted).
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &v in &self.values {
            if v != self.ignore {
                h[v as usize] += 1;
            }
        }
        h
    }

    /// Reads a binary PGM. `num_classes` defaults to one past the largest
    /// non-ignore value.
    pub fn from_pgm(pgm: &Pgm, num_classes: Option<usize>, ignore: u16) -> Result<Self> {
        let n = num_classes.unwrap_or_else(|| {
            pgm.values
                .iter()
                .filter(|&&v| v != ignore)
                .max()
                .map_or(1, |&m| m as usize + 1)
        });
        Self::with_ignore(pgm.width, pgm.height, n, ignore, pgm.values.clone())
    }

    /// PGM view: 8-bit when every possible value fits in a byte, else 16-bit.
    pub fn to_pgm(&self) -> Pgm {
        let maxval = if self.num_classes <= 255 && self.ignore <= 255 {
            255
        } else {
            65535
        };
        Pgm {
            width: self.width,
            height: self.height,
            maxval,
            values: self.values.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        num_classes: usize,
        ignore: u16,
        values: Vec<u16>,
    ) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            num_classes,
            ignore,
            values,
        }
    }
}

/// Euclidean distance from each pixel to the nearest pixel carrying a
/// different non-ignore label. Ignored pixels, and pixels with no differing
/// label anywhere, get `f64::INFINITY`.
pub fn differing_label_distance(labels: &LabelMap) -> Vec<f64> {
    let (w, h) = (labels.width, labels.height);
    let mut dist = vec![f64::INFINITY; w * h];
    let hist = labels.histogram();
    let present: Vec<usize> = (0..labels.num_classes).filter(|&c| hist[c] > 0).collect();
    if present.len() < 2 {
        return dist;
    }
    let mut sources = vec![false; w * h];
    for &c in &present {
        for (s, &v) in sources.iter_mut().zip(&labels.values) {
            *s = v != labels.ignore && v as usize != c;
        }
        let d2 = squared_distance_transform(&sources, w, h);
        for (i, &v) in labels.values.iter().enumerate() {
            if v as usize == c && v != labels.ignore {
                dist[i] = d2[i].sqrt();
            }
        }
    }
    dist
}

fn check_positive(op: &'static str, name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) {
        return Err(Error::invalid(
            op,
            format!("{name} must be positive, got {v}"),
        ));
    }
    Ok(())
}

/// Relabels every pixel closer than `radius` to a differently labelled pixel
/// as the extra boundary class `N`; the result has `N + 1` classes.
///
/// Ignored pixels keep the ignore value and never count as a differing label.
/// The rule is evaluated on the input map only, so applying it twice is not
/// the same as applying it once.
pub fn generate_boundary_labels(labels: &LabelMap, radius: f64) -> Result<LabelMap> {
    check_positive("generate_boundary_labels", "radius", radius)?;
    let boundary = labels.num_classes as u16;
    if boundary == labels.ignore {
        return Err(Error::invalid(
            "generate_boundary_labels",
            format!("boundary class {boundary} collides with the ignore value"),
        ));
    }
    let dist = differing_label_distance(labels);
    let values = labels
        .values
        .iter()
        .zip(&dist)
        .map(|(&v, &d)| if d < radius { boundary } else { v })
        .collect();
    Ok(LabelMap::from_parts_unchecked(
        labels.width,
        labels.height,
        labels.num_classes + 1,
        labels.ignore,
        values,
    ))
}

/// Pixels whose distance to a differently labelled pixel is below `band`.
pub fn trimap_band_mask(labels: &LabelMap, band: f64) -> Result<Vec<bool>> {
    check_positive("trimap_band_mask", "band", band)?;
    Ok(differing_label_distance(labels)
        .into_iter()
        .map(|d| d < band)
        .collect())
}

/// Fraction of non-ignored pixels that carry class `class`.
pub fn class_fraction(labels: &LabelMap, class: u16) -> f64 {
    let valid = labels
        .values
        .iter()
        .filter(|&&v| v != labels.ignore)
        .count();
    if valid == 0 {
        return 0.0;
    }
    labels.values.iter().filter(|&&v| v == class).count() as f64 / valid as f64
}
