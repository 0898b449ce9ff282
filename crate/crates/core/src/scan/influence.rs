use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceMap, ConfidenceRole};
use crate::tensor::Tensor;
use crate::Result;

use super::{dag_scan, uag_scan_inference, DagDirection, DagParams, ScanParams};

fn bumped(base: &Tensor<f64>, pixel: usize, eps: f64) -> Tensor<f64> {
    let (c, h, w) = (base.shape()[0], base.shape()[1], base.shape()[2]);
    let mut x = base.clone();
    for ch in 0..c {
        x.data_mut()[ch * h * w + pixel] += eps;
    }
    x
}

fn pixel_changed(a: &Tensor<f64>, b: &Tensor<f64>, pixel: usize) -> bool {
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    (0..c).any(|ch| a.data()[ch * h * w + pixel] != b.data()[ch * h * w + pixel])
}

/// Input pixels whose perturbation by `+eps` (all channels) changes any
/// output channel at `probe`. Meaningful in the linear regime, where every
/// ReLU stays active.
pub fn influence_mask<F>(
    scan: F,
    probe: (usize, usize),
    base: &Tensor<f64>,
    eps: f64,
) -> Result<Vec<bool>>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let (_, h, w) = base.dims3("influence_mask")?;
    if probe.0 >= h || probe.1 >= w {
        return Err(crate::Error::range(
            "influence_mask",
            format!("probe {probe:?} outside {h}×{w}"),
        ));
    }
    let at = probe.0 * w + probe.1;
    let y0 = scan(base)?;
    (0..h * w)
        .map(|src| Ok(pixel_changed(&y0, &scan(&bumped(base, src, eps))?, at)))
        .collect()
}

/// Influence masks for every probe at once: `result[probe][source]`, both
/// row-major pixel indices.
pub fn influence_matrix<F>(scan: F, base: &Tensor<f64>, eps: f64) -> Result<Vec<Vec<bool>>>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let (_, h, w) = base.dims3("influence_matrix")?;
    let n = h * w;
    let y0 = scan(base)?;
    let mut m = vec![vec![false; n]; n];
    for src in 0..n {
        let y = scan(&bumped(base, src, eps))?;
        for (probe, row) in m.iter_mut().enumerate() {
            row[src] = pixel_changed(&y0, &y, probe);
        }
    }
    Ok(m)
}

/// Gate applied during influence probing: open is no gate (`p ≡ 1`), closed
/// is `p ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeGate {
    Open,
    Closed,
}

/// Weights and an input under which every ReLU of both scan families stays
/// active, so influence masks show the dependency structure alone.
#[derive(Debug, Clone)]
pub struct ProbeSetup {
    pub input: Tensor<f64>,
    pub dag: DagParams<f64>,
    pub first: ScanParams<f64>,
    pub second: ScanParams<f64>,
    pub gate: Option<ConfidenceMap<f64>>,
}

pub const PROBE_CHANNELS: usize = 2;
pub const PROBE_EPS: f64 = 0.5;

impl ProbeSetup {
    pub fn new(height: usize, width: usize, gate: ProbeGate, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = PROBE_CHANNELS;
        let mut pos = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(0.2..0.3)).collect())
        };
        let input = pos(&[c, height, width])?;
        let dag = DagParams {
            u: pos(&[c, c])?,
            w_vertical: pos(&[c, c])?,
            w_horizontal: pos(&[c, c])?,
            w_diagonal: pos(&[c, c])?,
            bias: pos(&[c])?,
        };
        let first = ScanParams {
            u: pos(&[c, c, 1])?,
            w: pos(&[c, c, 1])?,
            w_diag: None,
            bias: pos(&[c])?,
        };
        let second = ScanParams {
            u: pos(&[c, c, 1])?,
            w: pos(&[c, c, 1])?,
            w_diag: Some(pos(&[c, c, 1])?),
            bias: pos(&[c])?,
        };
        let gate = match gate {
            ProbeGate::Open => None,
            ProbeGate::Closed => Some(ConfidenceMap::uniform(
                ConfidenceRole::Propagation,
                height,
                width,
                0.0,
            )?),
        };
        Ok(Self {
            input,
            dag,
            first,
            second,
            gate,
        })
    }

    fn dag_fn(&self, dir: DagDirection) -> impl Fn(&Tensor<f64>) -> Result<Tensor<f64>> + '_ {
        move |x| Ok(dag_scan(x, &self.dag, dir, self.gate.as_ref())?.0)
    }

    fn uag_fn(&self, dir: DagDirection) -> impl Fn(&Tensor<f64>) -> Result<Tensor<f64>> + '_ {
        let (parent, child) = dir.uag_pair();
        move |x| {
            let gate = self.gate.as_ref();
            let (h, _) = uag_scan_inference(x, &self.first, parent, gate)?;
            Ok(uag_scan_inference(&h, &self.second, child, gate)?.0)
        }
    }

    /// `result[probe][source]` for the pixel-by-pixel scan in `dir`.
    pub fn dag_masks(&self, dir: DagDirection) -> Result<Vec<Vec<bool>>> {
        influence_matrix(self.dag_fn(dir), &self.input, PROBE_EPS)
    }

    /// `result[probe][source]` for the vertical scan followed by the
    /// horizontal scan that together stand in for `dir`.
    pub fn uag_masks(&self, dir: DagDirection) -> Result<Vec<Vec<bool>>> {
        influence_matrix(self.uag_fn(dir), &self.input, PROBE_EPS)
    }

    pub fn dag_mask(&self, dir: DagDirection, probe: (usize, usize)) -> Result<Vec<bool>> {
        influence_mask(self.dag_fn(dir), probe, &self.input, PROBE_EPS)
    }

    pub fn uag_mask(&self, dir: DagDirection, probe: (usize, usize)) -> Result<Vec<bool>> {
        influence_mask(self.uag_fn(dir), probe, &self.input, PROBE_EPS)
    }
}

/// Renders a mask as rows of `#` (influences) and `.`.
pub fn render_mask(mask: &[bool], width: usize) -> String {
    mask.chunks(width)
        .map(|row| {
            row.iter()
                .map(|&b| if b { '#' } else { '.' })
                .collect::<String>()
                + "\n"
        })
        .collect()
}
