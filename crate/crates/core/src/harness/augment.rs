use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::labels::LabelMap;
use crate::tensor::Tensor;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            scale_min: 0.5,
            scale_max: 2.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::invalid(
                "augment",
                "flip probability must lie in [0, 1]",
            ));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite())
        {
            return Err(Error::invalid(
                "augment",
                "scale range must be positive and ordered",
            ));
        }
        Ok(())
    }
}

/// Mirrors the image and its labels left to right.
pub fn flip_horizontal<T: Real>(
    image: &Tensor<T>,
    labels: &LabelMap,
) -> Result<(Tensor<T>, LabelMap)> {
    let (c, h, w) = image.dims3("flip_horizontal")?;
    check_pair("flip_horizontal", h, w, labels)?;
    let mut img = image.clone();
    for row in img.data_mut().chunks_exact_mut(w).take(c * h) {
        row.reverse();
    }
    let mut values = labels.values().to_vec();
    for row in values.chunks_exact_mut(w) {
        row.reverse();
    }
    let lab = LabelMap::with_ignore(w, h, labels.num_classes(), labels.ignore_value(), values)?;
    Ok((img, lab))
}

fn check_pair(op: &'static str, h: usize, w: usize, labels: &LabelMap) -> Result<()> {
    if labels.height() != h || labels.width() != w {
        return Err(Error::shape(
            op,
            &[h, w],
            &[labels.height(), labels.width()],
        ));
    }
    Ok(())
}

/// Source coordinate of output index `i` under half-pixel alignment.
fn source_coord(i: usize, from: usize, to: usize) -> f64 {
    ((i as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64)
}

/// Bilinear resize with half-pixel alignment and edge clamping.
pub fn resize_bilinear<T: Real>(
    image: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = image.dims3("resize_bilinear")?;
    if height == 0 || width == 0 {
        return Err(Error::invalid(
            "resize_bilinear",
            "target size must be positive",
        ));
    }
    let ys: Vec<(usize, usize, T)> = (0..height)
        .map(|y| {
            let s = source_coord(y, h, height);
            let y0 = s.floor() as usize;
            (y0, (y0 + 1).min(h - 1), T::of(s - y0 as f64))
        })
        .collect();
    let xs: Vec<(usize, usize, T)> = (0..width)
        .map(|x| {
            let s = source_coord(x, w, width);
            let x0 = s.floor() as usize;
            (x0, (x0 + 1).min(w - 1), T::of(s - x0 as f64))
        })
        .collect();
    let src = image.data();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (T::one() - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (T::one() - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (T::one() - fy) + bottom * fy);
            }
        }
    }
    Tensor::from_vec(&[c, height, width], out)
}

/// Nearest-neighbour resize, so no new label values appear.
pub fn resize_nearest(labels: &LabelMap, height: usize, width: usize) -> Result<LabelMap> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(
            "resize_nearest",
            "target size must be positive",
        ));
    }
    let (h, w) = (labels.height(), labels.width());
    let pick = |i: usize, from: usize, to: usize| {
        (((i as f64 + 0.5) * from as f64 / to as f64) as usize).min(from - 1)
    };
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        let sy = pick(y, h, height);
        for x in 0..width {
            values.push(labels.get(sy, pick(x, w, width)));
        }
    }
    LabelMap::with_ignore(
        width,
        height,
        labels.num_classes(),
        labels.ignore_value(),
        values,
    )
}

/// Places a window of `height×width` at offset `(oy, ox)` relative to the
/// source: positive offsets crop into it, negative ones pad before it. Padding
/// is zero in the image and the ignore value in the labels.
pub fn crop_or_pad<T: Real>(
    image: &Tensor<T>,
    labels: &LabelMap,
    height: usize,
    width: usize,
    oy: isize,
    ox: isize,
) -> Result<(Tensor<T>, LabelMap)> {
    let (c, h, w) = image.dims3("crop_or_pad")?;
    check_pair("crop_or_pad", h, w, labels)?;
    let mut img = vec![T::zero(); c * height * width];
    let mut values = vec![labels.ignore_value(); height * width];
    let src = image.data();
    for y in 0..height {
        let sy = y as isize + oy;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        for x in 0..width {
            let sx = x as isize + ox;
            if sx < 0 || sx >= w as isize {
                continue;
            }
            let (sy, sx) = (sy as usize, sx as usize);
            for ch in 0..c {
                img[(ch * height + y) * width + x] = src[(ch * h + sy) * w + sx];
            }
            values[y * width + x] = labels.get(sy, sx);
        }
    }
    Ok((
        Tensor::from_vec(&[c, height, width], img)?,
        LabelMap::with_ignore(
            width,
            height,
            labels.num_classes(),
            labels.ignore_value(),
            values,
        )?,
    ))
}

fn random_offset<R: Rng + ?Sized>(resized: usize, target: usize, rng: &mut R) -> isize {
    if resized >= target {
        rng.random_range(0..=resized - target) as isize
    } else {
        -(rng.random_range(0..=target - resized) as isize)
    }
}

/// Random horizontal flip, then a random rescale, then a random crop or pad
/// back to the original size.
pub fn augment<T: Real, R: Rng + ?Sized>(
    image: &Tensor<T>,
    labels: &LabelMap,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Tensor<T>, LabelMap)> {
    cfg.validate()?;
    let (_, h, w) = image.dims3("augment")?;
    check_pair("augment", h, w, labels)?;
    let (img, lab) = if rng.random_bool(cfg.flip_prob) {
        flip_horizontal(image, labels)?
    } else {
        (image.clone(), labels.clone())
    };
    let scale = if cfg.scale_max > cfg.scale_min {
        rng.random_range(cfg.scale_min..cfg.scale_max)
    } else {
        cfg.scale_min
    };
    let nh = ((h as f64 * scale).round() as usize).max(1);
    let nw = ((w as f64 * scale).round() as usize).max(1);
    let img = resize_bilinear(&img, nh, nw)?;
    let lab = resize_nearest(&lab, nh, nw)?;
    let oy = random_offset(nh, h, rng);
    let ox = random_offset(nw, w, rng);
    crop_or_pad(&img, &lab, h, w, oy, ox)
}
