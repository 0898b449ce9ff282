use rand::Rng;

use crate::confidence::ConfidenceMap;
use crate::tensor::Tensor;
use crate::{Error, Real, Result};

use super::{DagDirection, StepCount};

/// Per-pixel weights of a DAG scan: one input map and one map per predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct DagParams<T> {
    /// `Cout×Cin`
    pub u: Tensor<T>,
    /// Predecessor in the previous row, same column. `Cout×Cout`
    pub w_vertical: Tensor<T>,
    /// Predecessor in the same row, previous column. `Cout×Cout`
    pub w_horizontal: Tensor<T>,
    /// Predecessor in the previous row and previous column. `Cout×Cout`
    pub w_diagonal: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> DagParams<T> {
    pub fn init<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        let bu = (1.0 / cin as f64).sqrt();
        let bw = (1.0 / cout as f64).sqrt();
        Self {
            u: Tensor::uniform(&[cout, cin], bu, rng),
            w_vertical: Tensor::uniform(&[cout, cout], bw, rng),
            w_horizontal: Tensor::uniform(&[cout, cout], bw, rng),
            w_diagonal: Tensor::uniform(&[cout, cout], bw, rng),
            bias: Tensor::zeros(&[cout]),
        }
    }

    fn validate(&self, cin: usize) -> Result<usize> {
        const OP: &str = "dag_scan";
        let cout = self.bias.len();
        self.u.ensure_shape(OP, &[cout, cin])?;
        for w in [&self.w_vertical, &self.w_horizontal, &self.w_diagonal] {
            w.ensure_shape(OP, &[cout, cout])?;
        }
        Ok(cout)
    }
}

#[inline]
fn matvec_acc<T: Real>(acc: &mut [T], m: &[T], src: &[T], stride: usize, at: usize, gate: T) {
    let cin = m.len() / acc.len();
    for (o, a) in acc.iter_mut().enumerate() {
        let row = &m[o * cin..(o + 1) * cin];
        let mut s = T::zero();
        for (c, &wv) in row.iter().enumerate() {
            s += wv * (src[c * stride + at] * gate);
        }
        *a += s;
    }
}

/// Pixel-by-pixel recurrent scan. For `SE`,
/// `h(r,c) = relu(U·i(r,c) + Wv·h(r−1,c) + Wh·h(r,c−1) + Wd·h(r−1,c−1) + δ)`
/// with zero for missing predecessors; other directions mirror the offsets.
/// An optional gate multiplies each predecessor's hidden state by its `p`.
pub fn dag_scan<T: Real>(
    input: &Tensor<T>,
    params: &DagParams<T>,
    dir: DagDirection,
    p: Option<&ConfidenceMap<T>>,
) -> Result<(Tensor<T>, StepCount)> {
    const OP: &str = "dag_scan";
    let (cin, h, w) = input.dims3(OP)?;
    let cout = params.validate(cin)?;
    if let Some(p) = p {
        p.values().ensure_shape(OP, &[h, w])?;
    }
    let (down, right) = match dir {
        DagDirection::SE => (true, true),
        DagDirection::SW => (true, false),
        DagDirection::NE => (false, true),
        DagDirection::NW => (false, false),
    };
    let plane = h * w;
    let x = input.data();
    let (u, wv, wh, wd, bias) = (
        params.u.data(),
        params.w_vertical.data(),
        params.w_horizontal.data(),
        params.w_diagonal.data(),
        params.bias.data(),
    );
    let gate_at = |i: usize| p.map_or(T::one(), |p| p.data()[i]);
    let mut out = vec![T::zero(); cout * plane];
    let mut acc = vec![T::zero(); cout];
    if h == 0 || w == 0 {
        return Err(Error::invalid(OP, "empty image"));
    }

    for ri in 0..h {
        let r = if down { ri } else { h - 1 - ri };
        let prev_r = if ri > 0 {
            Some(if down { r - 1 } else { r + 1 })
        } else {
            None
        };
        for ci in 0..w {
            let c = if right { ci } else { w - 1 - ci };
            let prev_c = if ci > 0 {
                Some(if right { c - 1 } else { c + 1 })
            } else {
                None
            };
            acc.copy_from_slice(bias);
            matvec_acc(&mut acc, u, x, plane, r * w + c, T::one());
            if let Some(pr) = prev_r {
                let at = pr * w + c;
                matvec_acc(&mut acc, wv, &out, plane, at, gate_at(at));
            }
            if let Some(pc) = prev_c {
                let at = r * w + pc;
                matvec_acc(&mut acc, wh, &out, plane, at, gate_at(at));
            }
            if let (Some(pr), Some(pc)) = (prev_r, prev_c) {
                let at = pr * w + pc;
                matvec_acc(&mut acc, wd, &out, plane, at, gate_at(at));
            }
            for (o, &a) in acc.iter().enumerate() {
                out[o * plane + r * w + c] = if a > T::zero() { a } else { T::zero() };
            }
        }
    }
    Ok((
        Tensor::from_vec(&[cout, h, w], out)?,
        StepCount {
            sequential_steps: plane,
            parallel_width: 1,
        },
    ))
}
