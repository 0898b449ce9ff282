//! Central finite-difference checks of every backward pass, in double
//! precision.
//!
//! Each check draws a random instance per seed, evaluates a scalar loss
//! `Σ upstream · f(θ)` and compares its analytic gradient with central
//! differences over the flattened inputs and parameters. The error of one
//! instance is norm-wise, `max|a − n| / max(max|a|, max|n|)`, and a check
//! reports the worst instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::confidence::{
    boundary_confidence, boundary_confidence_vjp, propagation_confidence,
    propagation_confidence_vjp, ConfidenceMap, ConfidenceRole, GateParams,
};
use crate::harness::{synth_dataset, Model, ModelConfig};
use crate::labels::{generate_boundary_labels, LabelMap};
use crate::scan::{
    bfp_backward, bfp_forward, fuse_four, fuse_four_vjp, uag_scan, uag_scan_second, uag_scan_vjp,
    BfpOptions, BfpParams, ScanParams, UagDirection, UagTape,
};
use crate::tensor::{
    conv1d_axis, conv1d_axis_vjp, conv2d_dilated, conv2d_dilated_vjp, cross_entropy_masked,
    cross_entropy_masked_vjp, pointwise_linear, pointwise_linear_vjp, relu, relu_vjp, sigmoid,
    sigmoid_vjp, softmax_channels, softmax_channels_vjp, Axis, Tensor,
};
use crate::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Random instances per check.
pub const SEEDS: u64 = 20;
/// Tolerance for elementwise operations, convolutions, losses and the gate.
pub const TOL_ELEMENTWISE: f64 = 1e-6;
/// Tolerance for the recurrent scans and the propagation module.
pub const TOL_SCAN: f64 = 1e-4;
/// Tolerance for the whole model.
pub const TOL_END_TO_END: f64 = 1e-3;
/// Smallest `|pre-activation|` accepted at a ReLU in a test point.
pub const KINK_MARGIN: f64 = 1e-3;
/// Parameters probed per end-to-end instance.
pub const END_TO_END_PARAMS: usize = 8;

const MAX_DRAWS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub tolerance: f64,
    pub seeds: u64,
    /// Worst error over the seeds.
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Norm-wise relative error between two gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `theta` along each coordinate in `coords`.
pub fn numeric_gradient<F>(f: F, theta: &[f64], coords: &[usize], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = theta.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(&x)?;
            x[i] = orig - step;
            let down = f(&x)?;
            x[i] = orig;
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}

/// One random instance: flattened point, its analytic gradient and the loss.
struct Case {
    theta: Vec<f64>,
    analytic: Vec<f64>,
    loss: Box<dyn Fn(&[f64]) -> Result<f64>>,
    /// Coordinates to probe; all of them when `None`.
    coords: Option<Vec<usize>>,
}

type Setup = fn(&mut ChaCha8Rng) -> Result<Option<Case>>;

fn run(name: &str, tolerance: f64, setup: Setup) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut case = None;
        for _ in 0..MAX_DRAWS {
            case = setup(&mut rng)?;
            if case.is_some() {
                break;
            }
        }
        let case = case.ok_or_else(|| {
            Error::invalid(
                "gradcheck",
                format!("{name}: no kink-free test point found"),
            )
        })?;
        let coords = case
            .coords
            .clone()
            .unwrap_or_else(|| (0..case.theta.len()).collect());
        let numeric = numeric_gradient(&case.loss, &case.theta, &coords, FD_STEP)?;
        let analytic: Vec<f64> = coords.iter().map(|&i| case.analytic[i]).collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(CheckResult {
        name: name.to_string(),
        tolerance,
        seeds: SEEDS,
        max_rel_error: worst,
        passed: worst < tolerance,
    })
}

// ---------------------------------------------------------------------------
// Packing helpers.

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).expect("sized")
}

fn flatten(ts: &[&Tensor<f64>]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn unpack(theta: &[f64], shapes: &[Vec<usize>]) -> Vec<Tensor<f64>> {
    let mut off = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let t = Tensor::from_vec(s, theta[off..off + n].to_vec()).expect("sized");
            off += n;
            t
        })
        .collect()
}

fn shapes_of(ts: &[&Tensor<f64>]) -> Vec<Vec<usize>> {
    ts.iter().map(|t| t.shape().to_vec()).collect()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn min_abs(t: &Tensor<f64>) -> f64 {
    t.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

// ---------------------------------------------------------------------------
// Tensor-core operations.

fn conv1d_case(rng: &mut ChaCha8Rng, axis: Axis) -> Result<Option<Case>> {
    let (cin, cout, h, w) = (2, 3, 4, 5);
    let k = if rng.random_bool(0.5) { 3 } else { 5 };
    let x = rand_tensor(rng, &[cin, h, w], -1.0, 1.0);
    let kernel = rand_tensor(rng, &[cout, cin, k], -1.0, 1.0);
    let bias = rand_tensor(rng, &[cout], -1.0, 1.0);
    let up = rand_tensor(rng, &[cout, h, w], -1.0, 1.0);
    let g = conv1d_axis_vjp(&up, &x, &kernel, axis)?;
    let shapes = shapes_of(&[&x, &kernel, &bias]);
    Ok(Some(Case {
        theta: flatten(&[&x, &kernel, &bias]),
        analytic: flatten(&[&g.input, &g.kernel, &g.bias]),
        loss: Box::new(move |th| {
            let t = unpack(th, &shapes);
            Ok(dot(&up, &conv1d_axis(&t[0], &t[1], &t[2], axis)?))
        }),
        coords: None,
    }))
}

fn relu_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let x = rand_tensor(rng, &[2, 3, 4], -1.0, 1.0);
    if min_abs(&x) < KINK_MARGIN {
        return Ok(None);
    }
    let up = rand_tensor(rng, &[2, 3, 4], -1.0, 1.0);
    let g = relu_vjp(&up, &x)?;
    Ok(Some(Case {
        theta: x.data().to_vec(),
        analytic: g.data().to_vec(),
        loss: Box::new(move |th| Ok(dot(&up, &relu(&Tensor::from_vec(&[2, 3, 4], th.to_vec())?)))),
        coords: None,
    }))
}

fn sigmoid_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let x = rand_tensor(rng, &[2, 3, 4], -4.0, 4.0);
    let up = rand_tensor(rng, &[2, 3, 4], -1.0, 1.0);
    let g = sigmoid_vjp(&up, &sigmoid(&x))?;
    Ok(Some(Case {
        theta: x.data().to_vec(),
        analytic: g.data().to_vec(),
        loss: Box::new(move |th| {
            Ok(dot(
                &up,
                &sigmoid(&Tensor::from_vec(&[2, 3, 4], th.to_vec())?),
            ))
        }),
        coords: None,
    }))
}

fn softmax_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let x = rand_tensor(rng, &[4, 3, 3], -3.0, 3.0);
    let up = rand_tensor(rng, &[4, 3, 3], -1.0, 1.0);
    let g = softmax_channels_vjp(&up, &softmax_channels(&x)?)?;
    Ok(Some(Case {
        theta: x.data().to_vec(),
        analytic: g.data().to_vec(),
        loss: Box::new(move |th| {
            Ok(dot(
                &up,
                &softmax_channels(&Tensor::from_vec(&[4, 3, 3], th.to_vec())?)?,
            ))
        }),
        coords: None,
    }))
}

fn random_labels(rng: &mut ChaCha8Rng, w: usize, h: usize, classes: usize) -> Result<LabelMap> {
    let values = (0..w * h)
        .map(|_| {
            if rng.random_bool(0.1) {
                255
            } else {
                rng.random_range(0..classes) as u16
            }
        })
        .collect();
    LabelMap::new(w, h, classes, values)
}

fn cross_entropy_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let x = rand_tensor(rng, &[4, 3, 5], -3.0, 3.0);
    let target = random_labels(rng, 5, 3, 4)?;
    let scale = rng.random_range(0.5..2.0);
    let g = cross_entropy_masked_vjp(scale, &x, &target)?;
    Ok(Some(Case {
        theta: x.data().to_vec(),
        analytic: g.data().to_vec(),
        loss: Box::new(move |th| {
            Ok(scale * cross_entropy_masked(&Tensor::from_vec(&[4, 3, 5], th.to_vec())?, &target)?)
        }),
        coords: None,
    }))
}

fn pointwise_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let x = rand_tensor(rng, &[3, 2, 4], -1.0, 1.0);
    let w = rand_tensor(rng, &[5, 3], -1.0, 1.0);
    let b = rand_tensor(rng, &[5], -1.0, 1.0);
    let up = rand_tensor(rng, &[5, 2, 4], -1.0, 1.0);
    let g = pointwise_linear_vjp(&up, &x, &w)?;
    let shapes = shapes_of(&[&x, &w, &b]);
    Ok(Some(Case {
        theta: flatten(&[&x, &w, &b]),
        analytic: flatten(&[&g.input, &g.weight, &g.bias]),
        loss: Box::new(move |th| {
            let t = unpack(th, &shapes);
            Ok(dot(&up, &pointwise_linear(&t[0], &t[1], Some(&t[2]))?))
        }),
        coords: None,
    }))
}

fn conv2d_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let dilation = rng.random_range(1..=3);
    let x = rand_tensor(rng, &[2, 5, 6], -1.0, 1.0);
    let w = rand_tensor(rng, &[3, 2, 3, 3], -1.0, 1.0);
    let b = rand_tensor(rng, &[3], -1.0, 1.0);
    let up = rand_tensor(rng, &[3, 5, 6], -1.0, 1.0);
    let g = conv2d_dilated_vjp(&up, &x, &w, dilation)?;
    let shapes = shapes_of(&[&x, &w, &b]);
    Ok(Some(Case {
        theta: flatten(&[&x, &w, &b]),
        analytic: flatten(&[&g.input, &g.weight, &g.bias]),
        loss: Box::new(move |th| {
            let t = unpack(th, &shapes);
            Ok(dot(&up, &conv2d_dilated(&t[0], &t[1], &t[2], dilation)?))
        }),
        coords: None,
    }))
}

// ---------------------------------------------------------------------------
// Confidence.

fn gate_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let b = rand_tensor(rng, &[3, 4], 0.05, 0.95);
    let beta = rng.random_range(0.05..0.95);
    let up = rand_tensor(rng, &[3, 4], -1.0, 1.0);
    let gp = GateParams {
        beta,
        ..GateParams::default()
    };
    let bmap = ConfidenceMap::new(ConfidenceRole::Boundary, b.clone())?;
    let (db, dbeta) = propagation_confidence_vjp(&up, &bmap, &gp)?;
    let mut theta = b.data().to_vec();
    theta.push(beta);
    let mut analytic = db.data().to_vec();
    analytic.push(dbeta);
    Ok(Some(Case {
        theta,
        analytic,
        loss: Box::new(move |th| {
            let (bv, beta) = th.split_at(12);
            let bmap = ConfidenceMap::new(
                ConfidenceRole::Boundary,
                Tensor::from_vec(&[3, 4], bv.to_vec())?,
            )?;
            let gp = GateParams {
                beta: beta[0],
                ..GateParams::default()
            };
            Ok(dot(&up, propagation_confidence(&bmap, &gp).values()))
        }),
        coords: None,
    }))
}

fn boundary_confidence_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let x = rand_tensor(rng, &[4, 3, 3], -3.0, 3.0);
    let up = rand_tensor(rng, &[3, 3], -1.0, 1.0);
    let g = boundary_confidence_vjp(&up, &x)?;
    Ok(Some(Case {
        theta: x.data().to_vec(),
        analytic: g.data().to_vec(),
        loss: Box::new(move |th| {
            Ok(dot(
                &up,
                boundary_confidence(&Tensor::from_vec(&[4, 3, 3], th.to_vec())?)?.values(),
            ))
        }),
        coords: None,
    }))
}

// ---------------------------------------------------------------------------
// Scans.

fn scan_forward(
    x: &Tensor<f64>,
    params: &ScanParams<f64>,
    dir: UagDirection,
    p: Option<&ConfidenceMap<f64>>,
) -> Result<UagTape<f64>> {
    if dir.is_first_stage() {
        uag_scan(x, params, dir, p)
    } else {
        uag_scan_second(x, params, dir, p)
    }
}

fn scan_params_from(t: &[Tensor<f64>], with_diag: bool) -> ScanParams<f64> {
    ScanParams {
        u: t[0].clone(),
        w: t[1].clone(),
        w_diag: with_diag.then(|| t[2].clone()),
        bias: t[if with_diag { 3 } else { 2 }].clone(),
    }
}

fn scan_case(rng: &mut ChaCha8Rng, dir: UagDirection) -> Result<Option<Case>> {
    let (cin, cout, h, w) = (2, 3, 4, 5);
    let k = if rng.random_bool(0.5) { 1 } else { 3 };
    let with_diag = !dir.is_first_stage();
    let x = rand_tensor(rng, &[cin, h, w], -1.0, 1.0);
    let mut params = ScanParams::<f64>::init(cin, cout, k, with_diag, rng);
    params.bias = rand_tensor(rng, &[cout], -0.5, 0.5);
    let p = rand_tensor(rng, &[h, w], 0.05, 0.95);
    let pmap = ConfidenceMap::new(ConfidenceRole::Propagation, p.clone())?;
    let tape = scan_forward(&x, &params, dir, Some(&pmap))?;
    if min_abs(&tape.pre_activations().expect("state kept")) < KINK_MARGIN {
        return Ok(None);
    }
    let up = rand_tensor(rng, &[cout, h, w], -1.0, 1.0);
    let g = uag_scan_vjp(&up, &tape, &params)?;
    let mut ts: Vec<&Tensor<f64>> = vec![&x];
    ts.extend(params.tensors());
    ts.push(&p);
    let shapes = shapes_of(&ts);
    let theta = flatten(&ts);
    let mut gs: Vec<&Tensor<f64>> = vec![&g.input];
    gs.extend(g.params.tensors());
    let gp = g.p.clone().expect("gated scan");
    gs.push(&gp);
    Ok(Some(Case {
        analytic: flatten(&gs),
        theta,
        loss: Box::new(move |th| {
            let t = unpack(th, &shapes);
            let n = t.len();
            let params = scan_params_from(&t[1..n - 1], with_diag);
            let pmap = ConfidenceMap::new(ConfidenceRole::Propagation, t[n - 1].clone())?;
            Ok(dot(
                &up,
                &scan_forward(&t[0], &params, dir, Some(&pmap))?.output,
            ))
        }),
        coords: None,
    }))
}

fn fuse_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let hs: Vec<Tensor<f64>> = (0..4)
        .map(|_| rand_tensor(rng, &[2, 3, 3], -1.0, 1.0))
        .collect();
    let proj = rand_tensor(rng, &[2, 8], -1.0, 1.0);
    let up = rand_tensor(rng, &[2, 3, 3], -1.0, 1.0);
    let (dh, dproj) = fuse_four_vjp(&up, [&hs[0], &hs[1], &hs[2], &hs[3]], &proj)?;
    let ts = [&hs[0], &hs[1], &hs[2], &hs[3], &proj];
    let shapes = shapes_of(&ts);
    Ok(Some(Case {
        theta: flatten(&ts),
        analytic: flatten(&[&dh[0], &dh[1], &dh[2], &dh[3], &dproj]),
        loss: Box::new(move |th| {
            let t = unpack(th, &shapes);
            Ok(dot(&up, &fuse_four([&t[0], &t[1], &t[2], &t[3]], &t[4])?))
        }),
        coords: None,
    }))
}

fn bfp_params_from(t: &[Tensor<f64>], template: &BfpParams<f64>) -> BfpParams<f64> {
    let mut p = template.clone();
    for (slot, v) in p.tensors_mut().into_iter().zip(t) {
        *slot = v.clone();
    }
    p
}

fn bfp_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let (c, h, w) = (2, 4, 4);
    let k = if rng.random_bool(0.5) { 1 } else { 3 };
    let x = rand_tensor(rng, &[c, h, w], -1.0, 1.0);
    let mut params = BfpParams::<f64>::init(c, k, rng);
    for s in params.first.iter_mut().chain(params.second.iter_mut()) {
        s.bias = rand_tensor(rng, &[c], -0.5, 0.5);
    }
    let p = rand_tensor(rng, &[h, w], 0.05, 0.95);
    let pmap = ConfidenceMap::new(ConfidenceRole::Propagation, p.clone())?;
    let options = BfpOptions::default();
    let tape = bfp_forward(&x, Some(&pmap), &params, options)?;
    let margin = tape
        .first_stage()
        .iter()
        .chain(tape.second_stage())
        .map(|t| min_abs(&t.pre_activations().expect("state kept")))
        .fold(f64::INFINITY, f64::min);
    if margin < KINK_MARGIN {
        return Ok(None);
    }
    let up = rand_tensor(rng, &[c, h, w], -1.0, 1.0);
    let g = bfp_backward(&up, &tape, &params)?;
    let mut ts: Vec<&Tensor<f64>> = vec![&x];
    ts.extend(params.tensors());
    ts.push(&p);
    let shapes = shapes_of(&ts);
    let theta = flatten(&ts);
    let mut gs: Vec<&Tensor<f64>> = vec![&g.features];
    gs.extend(g.params.tensors());
    let gp = g.p.clone().expect("gated module");
    gs.push(&gp);
    let analytic = flatten(&gs);
    Ok(Some(Case {
        theta,
        analytic,
        loss: Box::new(move |th| {
            let t = unpack(th, &shapes);
            let n = t.len();
            let params = bfp_params_from(&t[1..n - 1], &params);
            let pmap = ConfidenceMap::new(ConfidenceRole::Propagation, t[n - 1].clone())?;
            Ok(dot(
                &up,
                &bfp_forward(&t[0], Some(&pmap), &params, options)?.output,
            ))
        }),
        coords: None,
    }))
}

// ---------------------------------------------------------------------------
// Whole model.

/// The 16×16 double-precision model used by the end-to-end check.
pub fn end_to_end_config() -> ModelConfig {
    ModelConfig {
        channels: 4,
        dilations: vec![1, 2],
        num_classes: 3,
        boundary_radius: 2.0,
        gate: GateParams {
            beta: 0.7,
            ..GateParams::default()
        },
        ..ModelConfig::default()
    }
}

fn model_with(template: &Model<f64>, theta: &[f64]) -> Model<f64> {
    let mut m = template.clone();
    let mut off = 0;
    for t in m.params.tensors_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&theta[off..off + n]);
        off += n;
    }
    m
}

fn end_to_end_case(rng: &mut ChaCha8Rng) -> Result<Option<Case>> {
    let cfg = ModelConfig {
        seed: rng.random(),
        ..end_to_end_config()
    };
    let scene = synth_dataset(rng.random(), 1, 16, cfg.num_classes)?.remove(0);
    let image: Tensor<f64> = scene.image.cast();
    let labels = scene.labels;
    let boundary = generate_boundary_labels(&labels, cfg.boundary_radius)?;
    let model = Model::<f64>::new(cfg)?;
    let theta = flatten(&model.params.tensors());
    let tape = model.forward(&image)?;
    let pattern = tape.relu_pattern();
    let grads = model.backward(&tape, &labels, &boundary)?;
    let analytic = flatten(&grads.tensors());

    // Probe parameters whose perturbation leaves every ReLU on the same side.
    let mut coords = Vec::with_capacity(END_TO_END_PARAMS);
    let mut tries = 0;
    while coords.len() < END_TO_END_PARAMS && tries < 50 * END_TO_END_PARAMS {
        tries += 1;
        let i = rng.random_range(0..theta.len());
        if coords.contains(&i) {
            continue;
        }
        let mut stable = true;
        for sign in [1.0, -1.0] {
            let mut th = theta.clone();
            th[i] += sign * FD_STEP;
            if model_with(&model, &th).forward(&image)?.relu_pattern() != pattern {
                stable = false;
                break;
            }
        }
        if stable {
            coords.push(i);
        }
    }
    if coords.len() < END_TO_END_PARAMS {
        return Ok(None);
    }
    Ok(Some(Case {
        theta,
        analytic,
        loss: Box::new(move |th| {
            let m = model_with(&model, th);
            let tape = m.forward(&image)?;
            Ok(m.losses(&tape, &labels, &boundary)?.total)
        }),
        coords: Some(coords),
    }))
}

// ---------------------------------------------------------------------------

/// Names of every check, in the order [`check_all`] runs them.
pub const CHECKS: [&str; 19] = [
    "conv1d_row",
    "conv1d_column",
    "relu",
    "sigmoid",
    "softmax",
    "cross_entropy",
    "pointwise_linear",
    "conv2d_dilated",
    "propagation_confidence",
    "boundary_confidence",
    "uag_s",
    "uag_n",
    "uag_se",
    "uag_sw",
    "uag_ne",
    "uag_nw",
    "fuse_four",
    "bfp",
    "end_to_end",
];

/// Runs one named check.
pub fn check(name: &str) -> Result<CheckResult> {
    match name {
        "conv1d_row" => run(name, TOL_ELEMENTWISE, |r| conv1d_case(r, Axis::Row)),
        "conv1d_column" => run(name, TOL_ELEMENTWISE, |r| conv1d_case(r, Axis::Column)),
        "relu" => run(name, TOL_ELEMENTWISE, relu_case),
        "sigmoid" => run(name, TOL_ELEMENTWISE, sigmoid_case),
        "softmax" => run(name, TOL_ELEMENTWISE, softmax_case),
        "cross_entropy" => run(name, TOL_ELEMENTWISE, cross_entropy_case),
        "pointwise_linear" => run(name, TOL_ELEMENTWISE, pointwise_case),
        "conv2d_dilated" => run(name, TOL_ELEMENTWISE, conv2d_case),
        "propagation_confidence" => run(name, TOL_ELEMENTWISE, gate_case),
        "boundary_confidence" => run(name, TOL_ELEMENTWISE, boundary_confidence_case),
        "uag_s" => run(name, TOL_SCAN, |r| scan_case(r, UagDirection::S)),
        "uag_n" => run(name, TOL_SCAN, |r| scan_case(r, UagDirection::N)),
        "uag_se" => run(name, TOL_SCAN, |r| scan_case(r, UagDirection::SE)),
        "uag_sw" => run(name, TOL_SCAN, |r| scan_case(r, UagDirection::SW)),
        "uag_ne" => run(name, TOL_SCAN, |r| scan_case(r, UagDirection::NE)),
        "uag_nw" => run(name, TOL_SCAN, |r| scan_case(r, UagDirection::NW)),
        "fuse_four" => run(name, TOL_ELEMENTWISE, fuse_case),
        "bfp" => run(name, TOL_SCAN, bfp_case),
        "end_to_end" => run(name, TOL_END_TO_END, end_to_end_case),
        _ => Err(Error::invalid(
            "gradcheck",
            format!("unknown check {name:?}"),
        )),
    }
}

/// Runs every check.
pub fn check_all() -> Result<Vec<CheckResult>> {
    CHECKS.iter().map(|n| check(n)).collect()
}
