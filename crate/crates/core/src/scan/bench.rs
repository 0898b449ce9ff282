use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exec;
use crate::tensor::Tensor;
use crate::{Real, Result};

use super::{dag_scan, uag_scan_inference, DagDirection, DagParams, ScanParams, UagDirection};

/// Loop counts printed in the published timing table for 480×360 and 960×720
/// inputs (60×45 and 120×90 feature maps): `(width, height, dag, uag)`.
pub const TABLE_UAG_LOOPS: [(usize, usize, usize, usize); 2] =
    [(60, 45, 10800, 300), (120, 90, 43200, 600)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchVariant {
    Dag,
    Uag,
}

impl fmt::Display for BenchVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchVariant::Dag => "dag",
            BenchVariant::Uag => "uag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// `WxH` of the feature map.
    pub resolution: String,
    pub variant: BenchVariant,
    pub sequential_steps: usize,
    pub wall_clock_ms: f64,
    pub threads: usize,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str =
        "resolution,variant,sequential_steps,wall_clock_ms,threads";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.3},{}",
            self.resolution, self.variant, self.sequential_steps, self.wall_clock_ms, self.threads
        )
    }
}

/// All four DAG scans over `x`; returns total sequential steps.
pub fn run_dag_suite<T: Real>(x: &Tensor<T>, params: &[DagParams<T>; 4]) -> Result<usize> {
    let mut steps = 0;
    for (d, p) in DagDirection::ALL.into_iter().zip(params) {
        steps += dag_scan(x, p, d, None)?.1.sequential_steps;
    }
    Ok(steps)
}

/// The six UAG scans (two vertical, four horizontal on their parents).
pub fn run_uag_suite<T: Real>(
    x: &Tensor<T>,
    first: &[ScanParams<T>; 2],
    second: &[ScanParams<T>; 4],
) -> Result<usize> {
    let (s, s_steps) = uag_scan_inference(x, &first[0], UagDirection::S, None)?;
    let (n, n_steps) = uag_scan_inference(x, &first[1], UagDirection::N, None)?;
    let mut steps = s_steps.sequential_steps + n_steps.sequential_steps;
    for (i, d) in UagDirection::SECOND_STAGE.into_iter().enumerate() {
        let parent = if d.parent() == Some(UagDirection::S) {
            &s
        } else {
            &n
        };
        steps += uag_scan_inference(parent, &second[i], d, None)?
            .1
            .sequential_steps;
    }
    Ok(steps)
}

fn timed<F: FnMut() -> Result<usize>>(f: &mut F) -> Result<(usize, f64)> {
    let t0 = Instant::now();
    let steps = f()?;
    Ok((steps, t0.elapsed().as_secs_f64() * 1e3))
}

/// Times the DAG and UAG scan suites on fixed-seed random single-precision
/// inputs for each `(width, height)`, reporting the best of `reps`
/// interleaved runs of each.
pub fn run_bench(
    sizes: &[(usize, usize)],
    channels: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    let threads = exec::current_threads();
    for &(w, h) in sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f32>::uniform(&[channels, h, w], 1.0, &mut rng);
        let dag: [DagParams<f32>; 4] =
            std::array::from_fn(|_| DagParams::init(channels, channels, &mut rng));
        let first: [ScanParams<f32>; 2] =
            std::array::from_fn(|_| ScanParams::init(channels, channels, 1, false, &mut rng));
        let second: [ScanParams<f32>; 4] =
            std::array::from_fn(|_| ScanParams::init(channels, channels, 1, true, &mut rng));
        let resolution = format!("{w}x{h}");
        let mut run_dag = || run_dag_suite(&x, &dag);
        let mut run_uag = || run_uag_suite(&x, &first, &second);
        let (mut dag_best, mut uag_best) = (f64::INFINITY, f64::INFINITY);
        let (mut dag_steps, mut uag_steps) = (0, 0);
        for _ in 0..reps.max(1) {
            let (s, ms) = timed(&mut run_dag)?;
            dag_steps = s;
            dag_best = dag_best.min(ms);
            let (s, ms) = timed(&mut run_uag)?;
            uag_steps = s;
            uag_best = uag_best.min(ms);
        }
        rows.push(BenchRow {
            resolution: resolution.clone(),
            variant: BenchVariant::Dag,
            sequential_steps: dag_steps,
            wall_clock_ms: dag_best,
            threads,
        });
        rows.push(BenchRow {
            resolution,
            variant: BenchVariant::Uag,
            sequential_steps: uag_steps,
            wall_clock_ms: uag_best,
            threads,
        });
    }
    Ok(rows)
}
