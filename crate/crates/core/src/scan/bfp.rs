use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceMap;
use crate::tensor::{pointwise_linear, pointwise_linear_vjp, Tensor};
use crate::{Error, Real, Result};

use super::uag::{uag_scan, uag_scan_second, uag_scan_vjp, UagTape};
use super::{ScanParams, UagDirection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfpOptions {
    /// Gate the two vertical scans as well as the four horizontal ones.
    pub gate_first_stage: bool,
}

impl Default for BfpOptions {
    fn default() -> Self {
        Self {
            gate_first_stage: true,
        }
    }
}

/// Weights of the six scans plus the fusion projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BfpParams<T> {
    /// Indexed like [`UagDirection::FIRST_STAGE`].
    pub first: [ScanParams<T>; 2],
    /// Indexed like [`UagDirection::SECOND_STAGE`].
    pub second: [ScanParams<T>; 4],
    /// `C×4C`, input channels ordered SE, SW, NE, NW.
    pub fuse: Tensor<T>,
}

impl<T: Real> BfpParams<T> {
    pub fn init<R: Rng + ?Sized>(channels: usize, k: usize, rng: &mut R) -> Self {
        let first = [
            ScanParams::init(channels, channels, k, false, rng),
            ScanParams::init(channels, channels, k, false, rng),
        ];
        let second = std::array::from_fn(|_| ScanParams::init(channels, channels, k, true, rng));
        let bound = (1.0 / (4 * channels) as f64).sqrt();
        Self {
            first,
            second,
            fuse: Tensor::uniform(&[channels, 4 * channels], bound, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.fuse.shape()[0]
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = self
            .first
            .iter()
            .chain(&self.second)
            .flat_map(|p| p.tensors())
            .collect();
        v.push(&self.fuse);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = self
            .first
            .iter_mut()
            .chain(self.second.iter_mut())
            .flat_map(|p| p.tensors_mut())
            .collect();
        v.push(&mut self.fuse);
        v
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            first: std::array::from_fn(|i| self.first[i].zeros_like()),
            second: std::array::from_fn(|i| self.second[i].zeros_like()),
            fuse: Tensor::zeros(self.fuse.shape()),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> BfpParams<U> {
        BfpParams {
            first: std::array::from_fn(|i| self.first[i].cast()),
            second: std::array::from_fn(|i| self.second[i].cast()),
            fuse: self.fuse.cast(),
        }
    }
}

fn concat_channels<T: Real>(hs: [&Tensor<T>; 4]) -> Result<Tensor<T>> {
    let shape = hs[0].shape();
    let (c, h, w) = hs[0].dims3("fuse_four")?;
    let mut data = Vec::with_capacity(4 * c * h * w);
    for t in hs {
        t.ensure_shape("fuse_four", shape)?;
        data.extend_from_slice(t.data());
    }
    Tensor::from_vec(&[4 * c, h, w], data)
}

/// Concatenates four `C×H×W` maps (SE, SW, NE, NW) and projects back to `C`
/// channels with a per-pixel linear map `proj: C×4C`.
pub fn fuse_four<T: Real>(hs: [&Tensor<T>; 4], proj: &Tensor<T>) -> Result<Tensor<T>> {
    pointwise_linear(&concat_channels(hs)?, proj, None)
}

/// Gradients of [`fuse_four`] for the four inputs and the projection.
pub fn fuse_four_vjp<T: Real>(
    upstream: &Tensor<T>,
    hs: [&Tensor<T>; 4],
    proj: &Tensor<T>,
) -> Result<([Tensor<T>; 4], Tensor<T>)> {
    let cat = concat_channels(hs)?;
    let g = pointwise_linear_vjp(upstream, &cat, proj)?;
    let (c4, h, w) = cat.dims3("fuse_four_vjp")?;
    let block = c4 / 4 * h * w;
    let d = g.input.data();
    let parts = std::array::from_fn(|i| {
        Tensor::from_vec(&[c4 / 4, h, w], d[i * block..(i + 1) * block].to_vec())
            .expect("block size")
    });
    Ok((parts, g.weight))
}

/// Forward state of the propagation module.
#[derive(Debug, Clone)]
pub struct BfpTape<T> {
    pub output: Tensor<T>,
    /// Sequential steps over all six scans: `2H + 4W`.
    pub sequential_steps: usize,
    first: [UagTape<T>; 2],
    second: [UagTape<T>; 4],
    options: BfpOptions,
    gated: bool,
}

impl<T: Real> BfpTape<T> {
    pub fn first_stage(&self) -> &[UagTape<T>; 2] {
        &self.first
    }
    pub fn second_stage(&self) -> &[UagTape<T>; 4] {
        &self.second
    }

    pub fn discard_state(&mut self) {
        self.first
            .iter_mut()
            .chain(self.second.iter_mut())
            .for_each(|t| t.discard_state());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfpGrads<T> {
    pub features: Tensor<T>,
    pub params: BfpParams<T>,
    pub p: Option<Tensor<T>>,
}

/// Runs the S and N scans on `features`, the SE/SW scans on the S output and
/// the NE/NW scans on the N output, then fuses the four horizontal outputs.
pub fn bfp_forward<T: Real>(
    features: &Tensor<T>,
    p: Option<&ConfidenceMap<T>>,
    params: &BfpParams<T>,
    options: BfpOptions,
) -> Result<BfpTape<T>> {
    let first_gate = if options.gate_first_stage { p } else { None };
    let [s, n] = &params.first;
    let first = [
        uag_scan(features, s, UagDirection::S, first_gate)?,
        uag_scan(features, n, UagDirection::N, first_gate)?,
    ];
    let mut second = Vec::with_capacity(4);
    for (i, dir) in UagDirection::SECOND_STAGE.into_iter().enumerate() {
        let parent = if dir.parent() == Some(UagDirection::S) {
            &first[0]
        } else {
            &first[1]
        };
        second.push(uag_scan_second(&parent.output, &params.second[i], dir, p)?);
    }
    let second: [UagTape<T>; 4] = second
        .try_into()
        .map_err(|_| Error::MissingState("second stage"))?;
    let output = fuse_four(
        [
            &second[0].output,
            &second[1].output,
            &second[2].output,
            &second[3].output,
        ],
        &params.fuse,
    )?;
    let sequential_steps = first
        .iter()
        .chain(&second)
        .map(|t| t.steps.sequential_steps)
        .sum();
    Ok(BfpTape {
        output,
        sequential_steps,
        first,
        second,
        options,
        gated: p.is_some(),
    })
}

/// Exact adjoint of [`bfp_forward`], including the gradient through every gate.
pub fn bfp_backward<T: Real>(
    upstream: &Tensor<T>,
    tape: &BfpTape<T>,
    params: &BfpParams<T>,
) -> Result<BfpGrads<T>> {
    upstream.ensure_shape("bfp_backward", tape.output.shape())?;
    let outs = [
        &tape.second[0].output,
        &tape.second[1].output,
        &tape.second[2].output,
        &tape.second[3].output,
    ];
    let (dh, dfuse) = fuse_four_vjp(upstream, outs, &params.fuse)?;
    let mut grads = params.zeros_like();
    grads.fuse = dfuse;
    let (_, h, w) = tape.output.dims3("bfp_backward")?;
    let mut dp = tape.gated.then(|| Tensor::<T>::zeros(&[h, w]));
    let mut dparent = [
        Tensor::zeros(tape.first[0].output.shape()),
        Tensor::zeros(tape.first[1].output.shape()),
    ];

    for (i, dir) in UagDirection::SECOND_STAGE.into_iter().enumerate() {
        let g = uag_scan_vjp(&dh[i], &tape.second[i], &params.second[i])?;
        let slot = usize::from(dir.parent() != Some(UagDirection::S));
        dparent[slot].add_assign(&g.input)?;
        if let (Some(acc), Some(gp)) = (dp.as_mut(), g.p.as_ref()) {
            acc.add_assign(gp)?;
        }
        grads.second[i] = g.params;
    }
    let mut dfeatures = Tensor::zeros(&tape.first[0].input_shape());
    for i in 0..2 {
        let g = uag_scan_vjp(&dparent[i], &tape.first[i], &params.first[i])?;
        dfeatures.add_assign(&g.input)?;
        if tape.options.gate_first_stage {
            if let (Some(acc), Some(gp)) = (dp.as_mut(), g.p.as_ref()) {
                acc.add_assign(gp)?;
            }
        }
        grads.first[i] = g.params;
    }
    Ok(BfpGrads {
        features: dfeatures,
        params: grads,
        p: dp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn averaging_projection_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hs: Vec<Tensor<f64>> = (0..4)
            .map(|_| Tensor::uniform(&[2, 3, 3], 1.0, &mut rng))
            .collect();
        let mut proj = Tensor::<f64>::zeros(&[2, 8]);
        for o in 0..2 {
            for b in 0..4 {
                proj.data_mut()[o * 8 + b * 2 + o] = 0.25;
            }
        }
        let y = fuse_four([&hs[0], &hs[1], &hs[2], &hs[3]], &proj).unwrap();
        for i in 0..y.len() {
            let mean =
                (hs[0].data()[i] + hs[1].data()[i] + hs[2].data()[i] + hs[3].data()[i]) / 4.0;
            assert!((y.data()[i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_block_selects_one_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::uniform(&[2, 2, 3], 1.0, &mut rng);
        let z = Tensor::zeros(&[2, 2, 3]);
        let mut proj = Tensor::<f64>::zeros(&[2, 8]);
        proj.data_mut()[4] = 1.0; // out 0 ← block 2, channel 0
        proj.data_mut()[8 + 5] = 1.0; // out 1 ← block 2, channel 1
        let y = fuse_four([&z, &z, &x, &z], &proj).unwrap();
        assert!(y.bit_eq(&x));
        assert!(fuse_four([&z, &z, &x, &Tensor::zeros(&[2, 2, 2])], &proj).is_err());
    }

    #[test]
    fn step_total_and_gradient_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = BfpParams::<f64>::init(3, 1, &mut rng);
        let x = Tensor::uniform(&[3, 5, 7], 1.0, &mut rng);
        let tape = bfp_forward(&x, None, &params, BfpOptions::default()).unwrap();
        assert_eq!(tape.sequential_steps, 2 * 5 + 4 * 7);
        let g = bfp_backward(&Tensor::zeros(&[3, 5, 7]), &tape, &params).unwrap();
        assert_eq!(g.features.max_abs(), 0.0);
        assert!(g.params.tensors().iter().all(|t| t.max_abs() == 0.0));
        assert!(g.p.is_none());
        assert_eq!(
            params.num_params(),
            2 * (9 + 9 + 3) + 4 * (9 + 9 + 9 + 3) + 3 * 12
        );
    }
}
