//! All-pairs reference implementation of the boundary rule, for tests and
//! fixtures. Quadratic in the pixel count.

use crate::{Error, Result};

use super::LabelMap;

/// Same contract as [`generate_boundary_labels`](super::generate_boundary_labels),
/// computed by comparing every pixel with every other pixel.
pub fn brute_force_boundary_labels(labels: &LabelMap, radius: f64) -> Result<LabelMap> {
    if !(radius > 0.0) {
        return Err(Error::invalid(
            "brute_force_boundary_labels",
            "radius must be positive",
        ));
    }
    let w = labels.width();
    let vals = labels.values();
    let ignore = labels.ignore_value();
    let boundary = labels.num_classes() as u16;
    let out = (0..vals.len())
        .map(|i| {
            let v = vals[i];
            if v == ignore {
                return v;
            }
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            let mut best = i64::MAX;
            for (j, &u) in vals.iter().enumerate() {
                if u != ignore && u != v {
                    let (yy, xx) = ((j / w) as i64, (j % w) as i64);
                    best = best.min((y - yy).pow(2) + (x - xx).pow(2));
                }
            }
            if best != i64::MAX && (best as f64).sqrt() < radius {
                boundary
            } else {
                v
            }
        })
        .collect();
    LabelMap::with_ignore(
        labels.width(),
        labels.height(),
        labels.num_classes() + 1,
        ignore,
        out,
    )
}

/// All-pairs version of [`trimap_band_mask`](super::trimap_band_mask).
pub fn brute_force_band_mask(labels: &LabelMap, band: f64) -> Vec<bool> {
    let w = labels.width();
    let vals = labels.values();
    let ignore = labels.ignore_value();
    (0..vals.len())
        .map(|i| {
            let v = vals[i];
            if v == ignore {
                return false;
            }
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            vals.iter().enumerate().any(|(j, &u)| {
                let (yy, xx) = ((j / w) as i64, (j % w) as i64);
                u != ignore && u != v && (((y - yy).pow(2) + (x - xx).pow(2)) as f64).sqrt() < band
            })
        })
        .collect()
}
