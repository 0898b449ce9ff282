use crate::confidence::ConfidenceMap;
use crate::exec;
use crate::tensor::{
    line_conv_acc_block, line_conv_input_grad, line_conv_kernel_grad, Tensor, LINE_BLOCK,
};
use crate::{Error, Real, Result};

use super::{ScanParams, StepCount, UagDirection};

/// Maps a scan direction onto a `steps × channels × len` working layout in
/// which step `t` is a contiguous line and steps run forward.
#[derive(Debug, Clone, Copy)]
struct Layout {
    dir: UagDirection,
    height: usize,
    width: usize,
    steps: usize,
    len: usize,
}

impl Layout {
    fn new(dir: UagDirection, height: usize, width: usize) -> Self {
        let (steps, len) = if dir.is_first_stage() {
            (height, width)
        } else {
            (width, height)
        };
        Self {
            dir,
            height,
            width,
            steps,
            len,
        }
    }

    /// Offset along the line of the diagonal predecessor: the row the parent
    /// scan came from.
    fn diag_shift(&self) -> isize {
        match self.dir {
            UagDirection::SE | UagDirection::SW => 1,
            UagDirection::NE | UagDirection::NW => -1,
            _ => 0,
        }
    }

    /// Image column of step `t` for second-stage scans, image row for
    /// first-stage ones.
    #[inline]
    fn step_index(&self, t: usize) -> usize {
        match self.dir {
            UagDirection::N => self.height - 1 - t,
            UagDirection::SW | UagDirection::NW => self.width - 1 - t,
            _ => t,
        }
    }

    fn gather<T: Real>(&self, x: &[T], channels: usize) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        self.transfer(x, &mut out, channels, true);
        out
    }

    fn scatter<T: Real>(&self, buf: &[T], channels: usize) -> Vec<T> {
        let mut out = vec![T::zero(); buf.len()];
        self.transfer(buf, &mut out, channels, false);
        out
    }

    /// Writes one working-layout step slab into an image-layout buffer.
    fn scatter_step<T: Real>(&self, t: usize, slab: &[T], out: &mut [T], channels: usize) {
        let (h, w) = (self.height, self.width);
        let plane = h * w;
        let idx = self.step_index(t);
        for (c, line) in slab.chunks_exact(self.len).enumerate().take(channels) {
            if self.dir.is_first_stage() {
                out[c * plane + idx * w..][..w].copy_from_slice(line);
            } else {
                for (r, &v) in line.iter().enumerate() {
                    out[c * plane + r * w + idx] = v;
                }
            }
        }
    }

    /// Copies between image layout and working layout in either direction.
    fn transfer<T: Real>(&self, src: &[T], dst: &mut [T], channels: usize, to_work: bool) {
        let (h, w) = (self.height, self.width);
        let plane = h * w;
        if self.dir.is_first_stage() {
            for t in 0..self.steps {
                let r = self.step_index(t);
                for c in 0..channels {
                    let img = c * plane + r * w;
                    let wk = (t * channels + c) * w;
                    if to_work {
                        dst[wk..wk + w].copy_from_slice(&src[img..img + w]);
                    } else {
                        dst[img..img + w].copy_from_slice(&src[wk..wk + w]);
                    }
                }
            }
            return;
        }
        let cols: Vec<usize> = (0..self.steps).map(|t| self.step_index(t)).collect();
        for c in 0..channels {
            for r in 0..h {
                let img = c * plane + r * w;
                for (t, &col) in cols.iter().enumerate() {
                    let wk = (t * channels + c) * h + r;
                    if to_work {
                        dst[wk] = src[img + col];
                    } else {
                        dst[img + col] = src[wk];
                    }
                }
            }
        }
    }
}

/// `dst[c][l] = src[c][l − shift]`, zero where out of range.
fn shift_lines<T: Real>(src: &[T], dst: &mut [T], len: usize, shift: isize) {
    for (s, d) in src.chunks_exact(len).zip(dst.chunks_exact_mut(len)) {
        if shift >= 0 {
            let k = (shift as usize).min(len);
            d[..k].iter_mut().for_each(|v| *v = T::zero());
            d[k..].copy_from_slice(&s[..len - k]);
        } else {
            let k = ((-shift) as usize).min(len);
            d[..len - k].copy_from_slice(&s[k..]);
            d[len - k..].iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

#[derive(Debug, Clone)]
struct UagState<T> {
    x: Vec<T>,
    pre: Vec<T>,
    h: Vec<T>,
    p: Option<Vec<T>>,
}

/// Result of a forward scan with the state its backward pass needs.
#[derive(Debug, Clone)]
pub struct UagTape<T> {
    pub output: Tensor<T>,
    pub steps: StepCount,
    dir: UagDirection,
    in_channels: usize,
    state: Option<UagState<T>>,
}

impl<T: Real> UagTape<T> {
    pub fn direction(&self) -> UagDirection {
        self.dir
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [
            self.in_channels,
            self.output.shape()[1],
            self.output.shape()[2],
        ]
    }

    /// Pre-activations in image layout, `Cout×H×W`.
    pub fn pre_activations(&self) -> Option<Tensor<T>> {
        let st = self.state.as_ref()?;
        let (co, h, w) = (
            self.output.shape()[0],
            self.output.shape()[1],
            self.output.shape()[2],
        );
        let lay = Layout::new(self.dir, h, w);
        Tensor::from_vec(&[co, h, w], lay.scatter(&st.pre, co)).ok()
    }

    /// Drops the saved state; a later backward pass will fail.
    pub fn discard_state(&mut self) {
        self.state = None;
    }

    pub fn into_output(self) -> Tensor<T> {
        self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UagGrads<T> {
    pub input: Tensor<T>,
    pub params: ScanParams<T>,
    /// Gradient with respect to the gate map, when the scan was gated.
    pub p: Option<Tensor<T>>,
}

fn check_gate<T: Real>(
    op: &'static str,
    p: Option<&ConfidenceMap<T>>,
    h: usize,
    w: usize,
) -> Result<()> {
    if let Some(p) = p {
        p.values().ensure_shape(op, &[h, w])?;
    }
    Ok(())
}

fn forward<T: Real>(
    op: &'static str,
    input: &Tensor<T>,
    params: &ScanParams<T>,
    dir: UagDirection,
    p: Option<&ConfidenceMap<T>>,
    save: bool,
) -> Result<UagTape<T>> {
    params.validate(op)?;
    let (cin, h, w) = input.dims3(op)?;
    if cin != params.in_channels() {
        return Err(Error::shape(
            op,
            &[params.in_channels(), h, w],
            input.shape(),
        ));
    }
    check_gate(op, p, h, w)?;
    let (co, k) = (params.out_channels(), params.kernel_extent());
    let lay = Layout::new(dir, h, w);
    let (steps, len) = (lay.steps, lay.len);
    let slab = co * len;
    let x = lay.gather(input.data(), cin);
    let p_l = p.map(|p| lay.gather(p.data(), 1));
    let (u, wd, bias) = (params.u.data(), params.w.data(), params.bias.data());
    let diag = if dir.is_first_stage() {
        None
    } else {
        params.w_diag.as_ref().map(|d| (d.data(), lay.diag_shift()))
    };

    // Without saved state only the current and previous step are kept.
    let kept = if save { steps } else { 2.min(steps) };
    let slot = |t: usize| if save { t } else { t % 2 } * slab;
    let mut pre = vec![T::zero(); kept * slab];
    let mut hid = vec![T::zero(); kept * slab];
    let mut out_img = if save {
        Vec::new()
    } else {
        vec![T::zero(); co * h * w]
    };
    let mut gated = vec![T::zero(); slab];
    let mut shifted = vec![T::zero(); slab];
    let step_work = co * k * len * (cin + co * if diag.is_some() { 2 } else { 1 });
    for t in 0..steps {
        if t > 0 {
            let prev = &hid[slot(t - 1)..slot(t - 1) + slab];
            match &p_l {
                Some(pl) => {
                    let gate = &pl[(t - 1) * len..t * len];
                    for (g, line) in gated.chunks_exact_mut(len).zip(prev.chunks_exact(len)) {
                        for ((gv, &hv), &pv) in g.iter_mut().zip(line).zip(gate) {
                            *gv = hv * pv;
                        }
                    }
                }
                None => gated.copy_from_slice(prev),
            }
            if let Some((_, shift)) = diag {
                shift_lines(&gated, &mut shifted, len, shift);
            }
        }
        let xt = &x[t * cin * len..(t + 1) * cin * len];
        let cur = &mut pre[slot(t)..slot(t) + slab];
        exec::for_each_chunk(cur, LINE_BLOCK * len, step_work, |b, lines| {
            let (o0, o1) = (b * LINE_BLOCK, b * LINE_BLOCK + lines.len() / len);
            for (o, line) in (o0..o1).zip(lines.chunks_exact_mut(len)) {
                line.iter_mut().for_each(|v| *v = bias[o]);
            }
            line_conv_acc_block(&u[o0 * cin * k..o1 * cin * k], k, xt, len, cin, lines, len);
            if t > 0 {
                line_conv_acc_block(
                    &wd[o0 * co * k..o1 * co * k],
                    k,
                    &gated,
                    len,
                    co,
                    lines,
                    len,
                );
                if let Some((dd, _)) = diag {
                    line_conv_acc_block(
                        &dd[o0 * co * k..o1 * co * k],
                        k,
                        &shifted,
                        len,
                        co,
                        lines,
                        len,
                    );
                }
            }
        });
        let at = slot(t);
        for (hv, &a) in hid[at..at + slab].iter_mut().zip(&pre[at..at + slab]) {
            *hv = if a > T::zero() { a } else { T::zero() };
        }
        if !save {
            lay.scatter_step(t, &hid[at..at + slab], &mut out_img, co);
        }
    }

    let out_img = if save { lay.scatter(&hid, co) } else { out_img };
    let output = Tensor::from_vec(&[co, h, w], out_img)?;
    Ok(UagTape {
        output,
        steps: StepCount {
            sequential_steps: steps,
            parallel_width: len,
        },
        dir,
        in_channels: cin,
        state: save.then_some(UagState {
            x,
            pre,
            h: hid,
            p: p_l,
        }),
    })
}

/// First-stage (vertical) scan: rows in order of `dir`, each row computed as
/// `relu(U⊛i + W⊛(h_prev ⊙ p_prev) + δ)` with a zero hidden state before the
/// first row. Without a gate map `p ≡ 1`.
pub fn uag_scan<T: Real>(
    input: &Tensor<T>,
    params: &ScanParams<T>,
    dir: UagDirection,
    p: Option<&ConfidenceMap<T>>,
) -> Result<UagTape<T>> {
    const OP: &str = "uag_scan";
    if !dir.is_first_stage() {
        return Err(Error::invalid(
            OP,
            format!("{dir:?} is not a first-stage direction"),
        ));
    }
    if params.w_diag.is_some() {
        return Err(Error::invalid(
            OP,
            "first-stage scans take no diagonal kernel",
        ));
    }
    forward(OP, input, params, dir, p, true)
}

/// Second-stage (horizontal) scan over the output of its parent vertical scan.
/// Each column also receives the previous column shifted one row toward the
/// parent's origin, through `w_diag` (treated as zero when absent).
pub fn uag_scan_second<T: Real>(
    input: &Tensor<T>,
    params: &ScanParams<T>,
    dir: UagDirection,
    p: Option<&ConfidenceMap<T>>,
) -> Result<UagTape<T>> {
    const OP: &str = "uag_scan_second";
    if dir.is_first_stage() {
        return Err(Error::invalid(
            OP,
            format!("{dir:?} is not a second-stage direction"),
        ));
    }
    forward(OP, input, params, dir, p, true)
}

/// Forward-only scan in either stage, keeping no state for a backward pass.
/// Bit-identical to the output of [`uag_scan`] / [`uag_scan_second`].
pub fn uag_scan_inference<T: Real>(
    input: &Tensor<T>,
    params: &ScanParams<T>,
    dir: UagDirection,
    p: Option<&ConfidenceMap<T>>,
) -> Result<(Tensor<T>, StepCount)> {
    const OP: &str = "uag_scan_inference";
    if dir.is_first_stage() && params.w_diag.is_some() {
        return Err(Error::invalid(
            OP,
            "first-stage scans take no diagonal kernel",
        ));
    }
    let tape = forward(OP, input, params, dir, p, false)?;
    Ok((tape.output, tape.steps))
}

/// Exact adjoint of [`uag_scan`] / [`uag_scan_second`].
pub fn uag_scan_vjp<T: Real>(
    upstream: &Tensor<T>,
    tape: &UagTape<T>,
    params: &ScanParams<T>,
) -> Result<UagGrads<T>> {
    const OP: &str = "uag_scan_vjp";
    let st = tape
        .state
        .as_ref()
        .ok_or(Error::MissingState("uag scan state was discarded"))?;
    upstream.ensure_shape(OP, tape.output.shape())?;
    params.validate(OP)?;
    let (co, h, w) = (
        tape.output.shape()[0],
        tape.output.shape()[1],
        tape.output.shape()[2],
    );
    let cin = tape.in_channels;
    if params.out_channels() != co || params.in_channels() != cin {
        return Err(Error::shape(
            OP,
            &[co, cin, params.kernel_extent()],
            params.u.shape(),
        ));
    }
    let k = params.kernel_extent();
    let lay = Layout::new(tape.dir, h, w);
    let (steps, len) = (lay.steps, lay.len);
    let slab = co * len;
    let (u, wk) = (params.u.data(), params.w.data());
    let diag = if tape.dir.is_first_stage() {
        None
    } else {
        params.w_diag.as_ref().map(|d| (d.data(), lay.diag_shift()))
    };

    let mut gh = lay.gather(upstream.data(), co);
    let mut da = vec![T::zero(); steps * slab];
    let mut dw = vec![T::zero(); co * co * k];
    let mut dwd = vec![T::zero(); if diag.is_some() { co * co * k } else { 0 }];
    let mut dp = st.p.as_ref().map(|_| vec![T::zero(); steps * len]);
    let mut gated = vec![T::zero(); slab];
    let mut shifted = vec![T::zero(); slab];
    let mut dg = vec![T::zero(); slab];
    let mut dsh = vec![T::zero(); slab];
    let work = co * co * k * len;

    for t in (0..steps).rev() {
        for ((d, &g), &a) in da[t * slab..(t + 1) * slab]
            .iter_mut()
            .zip(&gh[t * slab..(t + 1) * slab])
            .zip(&st.pre[t * slab..(t + 1) * slab])
        {
            *d = if a > T::zero() { g } else { T::zero() };
        }
        if t == 0 {
            break;
        }
        let prev = &st.h[(t - 1) * slab..t * slab];
        let gate = st.p.as_ref().map(|p| &p[(t - 1) * len..t * len]);
        match gate {
            Some(gate) => {
                for (g, line) in gated.chunks_exact_mut(len).zip(prev.chunks_exact(len)) {
                    for ((gv, &hv), &pv) in g.iter_mut().zip(line).zip(gate) {
                        *gv = hv * pv;
                    }
                }
            }
            None => gated.copy_from_slice(prev),
        }
        let dat = &da[t * slab..(t + 1) * slab];

        exec::for_each_chunk(&mut dw, co * k, work, |o, dk| {
            line_conv_kernel_grad(&dat[o * len..(o + 1) * len], k, &gated, len, co, dk);
        });
        dg.iter_mut().for_each(|v| *v = T::zero());
        exec::for_each_chunk(&mut dg, len, work, |c, line| {
            line_conv_input_grad(wk, co, co, k, c, dat, len, line);
        });
        if let Some((dd, shift)) = diag {
            shift_lines(&gated, &mut shifted, len, shift);
            exec::for_each_chunk(&mut dwd, co * k, work, |o, dk| {
                line_conv_kernel_grad(&dat[o * len..(o + 1) * len], k, &shifted, len, co, dk);
            });
            dsh.iter_mut().for_each(|v| *v = T::zero());
            exec::for_each_chunk(&mut dsh, len, work, |c, line| {
                line_conv_input_grad(dd, co, co, k, c, dat, len, line);
            });
            // adjoint of the shift: dg[m] += dsh[m + shift]
            for (g, s) in dg.chunks_exact_mut(len).zip(dsh.chunks_exact(len)) {
                for (m, gv) in g.iter_mut().enumerate() {
                    let src = m as isize + shift;
                    if src >= 0 && (src as usize) < len {
                        *gv += s[src as usize];
                    }
                }
            }
        }

        let ghp = &mut gh[(t - 1) * slab..t * slab];
        match gate {
            Some(gate) => {
                let dpt = &mut dp.as_mut().expect("gated scan")[(t - 1) * len..t * len];
                for c in 0..co {
                    for l in 0..len {
                        let i = c * len + l;
                        ghp[i] += dg[i] * gate[l];
                        dpt[l] += dg[i] * prev[i];
                    }
                }
            }
            None => {
                for (a, &b) in ghp.iter_mut().zip(&dg) {
                    *a += b;
                }
            }
        }
    }

    let mut du = vec![T::zero(); co * cin * k];
    exec::for_each_chunk(&mut du, cin * k, steps * co * cin * k * len, |o, dk| {
        for t in 0..steps {
            let d = &da[t * slab + o * len..t * slab + (o + 1) * len];
            line_conv_kernel_grad(d, k, &st.x[t * cin * len..], len, cin, dk);
        }
    });
    let dbias: Vec<T> = (0..co)
        .map(|o| {
            let mut acc = T::zero();
            for t in 0..steps {
                for &v in &da[t * slab + o * len..t * slab + (o + 1) * len] {
                    acc += v;
                }
            }
            acc
        })
        .collect();
    let mut dx = vec![T::zero(); steps * cin * len];
    exec::for_each_chunk(&mut dx, len, steps * co * cin * k * len, |idx, line| {
        let (t, c) = (idx / cin, idx % cin);
        line_conv_input_grad(u, co, cin, k, c, &da[t * slab..(t + 1) * slab], len, line);
    });

    let grads = ScanParams {
        u: Tensor::from_vec(&[co, cin, k], du)?,
        w: Tensor::from_vec(&[co, co, k], dw)?,
        w_diag: match (&params.w_diag, diag) {
            (Some(_), Some(_)) => Some(Tensor::from_vec(&[co, co, k], dwd)?),
            (Some(d), None) => Some(Tensor::zeros(d.shape())),
            (None, _) => None,
        },
        bias: Tensor::from_vec(&[co], dbias)?,
    };
    let p = match dp {
        Some(dp) => Some(Tensor::from_vec(&[h, w], lay.scatter(&dp, 1))?),
        None => None,
    };
    Ok(UagGrads {
        input: Tensor::from_vec(&[cin, h, w], lay.scatter(&dx, cin))?,
        params: grads,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::ConfidenceRole;
    use crate::tensor::transpose_hw;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_params(u: f64, w: f64, wd: Option<f64>) -> ScanParams<f64> {
        ScanParams {
            u: Tensor::from_f64(&[1, 1, 1], &[u]).unwrap(),
            w: Tensor::from_f64(&[1, 1, 1], &[w]).unwrap(),
            w_diag: wd.map(|v| Tensor::from_f64(&[1, 1, 1], &[v]).unwrap()),
            bias: Tensor::zeros(&[1]),
        }
    }

    fn gate(h: usize, w: usize, v: f64) -> ConfidenceMap<f64> {
        ConfidenceMap::uniform(ConfidenceRole::Propagation, h, w, v).unwrap()
    }

    #[test]
    fn column_running_sum() {
        let x = Tensor::from_f64(&[1, 3, 1], &[1.0, 2.0, 3.0]).unwrap();
        let tape = uag_scan(
            &x,
            &scalar_params(1.0, 1.0, None),
            UagDirection::S,
            Some(&gate(3, 1, 1.0)),
        )
        .unwrap();
        assert_eq!(tape.output.data(), &[1.0, 3.0, 6.0]);
        assert_eq!(tape.steps.sequential_steps, 3);
        let tape = uag_scan(&x, &scalar_params(1.0, 1.0, None), UagDirection::N, None).unwrap();
        assert_eq!(tape.output.data(), &[6.0, 5.0, 3.0]);
    }

    #[test]
    fn second_stage_hand_unrolled() {
        let x = Tensor::<f64>::full(&[1, 2, 2], 1.0);
        let tape = uag_scan_second(
            &x,
            &scalar_params(1.0, 1.0, Some(1.0)),
            UagDirection::SE,
            Some(&gate(2, 2, 1.0)),
        )
        .unwrap();
        // column 0: (1, 1); (0,1) = 1 + 1; (1,1) = 1 + 1 + h(0,0)
        assert_eq!(tape.output.data(), &[1.0, 2.0, 1.0, 3.0]);
        assert_eq!(tape.steps.sequential_steps, 2);
        let ne = uag_scan_second(
            &x,
            &scalar_params(1.0, 1.0, Some(1.0)),
            UagDirection::NE,
            None,
        )
        .unwrap();
        assert_eq!(ne.output.data(), &[1.0, 3.0, 1.0, 2.0]);
    }

    #[test]
    fn severed_recurrence_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::uniform(&[2, 4, 5], 1.0, &mut rng).map(f64::abs);
        let mut p = ScanParams::<f64>::zeros(2, 2, 3, false);
        for c in 0..2 {
            p.u.data_mut()[(c * 2 + c) * 3 + 1] = 1.0;
        }
        for dir in UagDirection::FIRST_STAGE {
            assert!(uag_scan(&x, &p, dir, None).unwrap().output.bit_eq(&x));
        }
    }

    #[test]
    fn closed_gate_decouples_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::uniform(&[2, 4, 3], 1.0, &mut rng);
        let params = ScanParams::init(2, 2, 3, false, &mut rng);
        let closed = uag_scan(&x, &params, UagDirection::S, Some(&gate(4, 3, 0.0))).unwrap();
        let mut no_rec = params.clone();
        no_rec.w.fill(0.0);
        let local = uag_scan(&x, &no_rec, UagDirection::S, None).unwrap();
        assert!(closed.output.bit_eq(&local.output));
    }

    #[test]
    fn zero_diag_matches_transposed_vertical_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f64>::uniform(&[2, 5, 4], 1.0, &mut rng);
        let mut params = ScanParams::init(2, 2, 3, true, &mut rng);
        params.bias.fill(0.1);
        params.w_diag.as_mut().unwrap().fill(0.0);
        let east = uag_scan_second(&x, &params, UagDirection::SE, None).unwrap();
        let plain = ScanParams {
            w_diag: None,
            ..params.clone()
        };
        let south = uag_scan(&transpose_hw(&x), &plain, UagDirection::S, None).unwrap();
        assert!(east.output.bit_eq(&transpose_hw(&south.output)));
    }

    #[test]
    fn stage_and_shape_errors() {
        let x = Tensor::<f64>::zeros(&[1, 2, 2]);
        let p1 = scalar_params(1.0, 1.0, None);
        assert!(uag_scan(&x, &p1, UagDirection::SE, None).is_err());
        assert!(uag_scan_second(&x, &p1, UagDirection::S, None).is_err());
        assert!(uag_scan(
            &x,
            &scalar_params(1.0, 1.0, Some(1.0)),
            UagDirection::S,
            None
        )
        .is_err());
        assert!(uag_scan(&x, &p1, UagDirection::S, Some(&gate(3, 2, 1.0))).is_err());
        assert!(uag_scan(&Tensor::zeros(&[2, 2, 2]), &p1, UagDirection::S, None).is_err());
    }

    #[test]
    fn discarded_state_blocks_backward() {
        let x = Tensor::<f64>::full(&[1, 2, 2], 1.0);
        let p = scalar_params(1.0, 1.0, None);
        let mut tape = uag_scan(&x, &p, UagDirection::S, None).unwrap();
        tape.discard_state();
        assert!(matches!(
            uag_scan_vjp(&x, &tape, &p),
            Err(Error::MissingState(_))
        ));
    }

    #[test]
    fn inference_matches_taped_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::uniform(&[5, 7, 9], 1.0, &mut rng);
        let gate = ConfidenceMap::new(
            ConfidenceRole::Propagation,
            Tensor::<f32>::uniform(&[7, 9], 1.0, &mut rng).map(|v| v.abs()),
        )
        .unwrap();
        for dir in UagDirection::ALL {
            let params = ScanParams::<f32>::init(5, 6, 3, !dir.is_first_stage(), &mut rng);
            for g in [None, Some(&gate)] {
                let tape = if dir.is_first_stage() {
                    uag_scan(&x, &params, dir, g)
                } else {
                    uag_scan_second(&x, &params, dir, g)
                }
                .unwrap();
                let (out, steps) = uag_scan_inference(&x, &params, dir, g).unwrap();
                assert!(out.bit_eq(&tape.output), "{dir:?}");
                assert_eq!(steps, tape.steps);
            }
        }
    }
}
