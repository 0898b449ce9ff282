//! Recurrent image scans.
//!
//! A UAG scan walks the image one full row (or column) per sequential step;
//! every position along that line is computed independently. A DAG scan
//! walks pixel by pixel. Two UAG scans composed (a vertical parent, then a
//! horizontal child that also sees the diagonal neighbour) reach exactly the
//! quadrant a DAG scan reaches, in `H + W` steps instead of `H·W`.

mod bench;
mod bfp;
mod dag;
mod influence;
mod uag;

pub use bench::{run_bench, run_dag_suite, run_uag_suite, BenchRow, BenchVariant, TABLE_UAG_LOOPS};
pub use bfp::{
    bfp_backward, bfp_forward, fuse_four, fuse_four_vjp, BfpGrads, BfpOptions, BfpParams, BfpTape,
};
pub use dag::{dag_scan, DagParams};
pub use influence::{
    influence_mask, influence_matrix, render_mask, ProbeGate, ProbeSetup, PROBE_CHANNELS, PROBE_EPS,
};
pub use uag::{uag_scan, uag_scan_inference, uag_scan_second, uag_scan_vjp, UagGrads, UagTape};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Real, Result};

/// Direction of a row/column scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UagDirection {
    S,
    N,
    SE,
    SW,
    NE,
    NW,
}

impl UagDirection {
    pub const ALL: [UagDirection; 6] = [
        UagDirection::S,
        UagDirection::N,
        UagDirection::SE,
        UagDirection::SW,
        UagDirection::NE,
        UagDirection::NW,
    ];
    pub const FIRST_STAGE: [UagDirection; 2] = [UagDirection::S, UagDirection::N];
    /// Also the channel order used by [`fuse_four`].
    pub const SECOND_STAGE: [UagDirection; 4] = [
        UagDirection::SE,
        UagDirection::SW,
        UagDirection::NE,
        UagDirection::NW,
    ];

    pub fn is_first_stage(self) -> bool {
        matches!(self, UagDirection::S | UagDirection::N)
    }

    /// The vertical scan a second-stage scan is built on.
    pub fn parent(self) -> Option<UagDirection> {
        match self {
            UagDirection::S | UagDirection::N => None,
            UagDirection::SE | UagDirection::SW => Some(UagDirection::S),
            UagDirection::NE | UagDirection::NW => Some(UagDirection::N),
        }
    }

    /// The DAG direction whose dependency quadrant this parent→child pair covers.
    pub fn dag_equivalent(self) -> Option<DagDirection> {
        match self {
            UagDirection::SE => Some(DagDirection::SE),
            UagDirection::SW => Some(DagDirection::SW),
            UagDirection::NE => Some(DagDirection::NE),
            UagDirection::NW => Some(DagDirection::NW),
            _ => None,
        }
    }
}

/// Direction of a pixel-by-pixel scan; each pixel reads its vertical,
/// horizontal and diagonal predecessors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DagDirection {
    SE,
    SW,
    NE,
    NW,
}

impl DagDirection {
    pub const ALL: [DagDirection; 4] = [
        DagDirection::SE,
        DagDirection::SW,
        DagDirection::NE,
        DagDirection::NW,
    ];

    pub fn uag_pair(self) -> (UagDirection, UagDirection) {
        match self {
            DagDirection::SE => (UagDirection::S, UagDirection::SE),
            DagDirection::SW => (UagDirection::S, UagDirection::SW),
            DagDirection::NE => (UagDirection::N, UagDirection::NE),
            DagDirection::NW => (UagDirection::N, UagDirection::NW),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCount {
    pub sequential_steps: usize,
    /// Independent positions computed per step.
    pub parallel_width: usize,
}

impl StepCount {
    pub fn covers(&self, height: usize, width: usize) -> bool {
        self.sequential_steps * self.parallel_width >= height * width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTotals {
    /// Four pixel-by-pixel scans.
    pub dag_total: usize,
    /// Two vertical scans of `H` steps plus four horizontal scans of `W` steps.
    pub uag_total: usize,
}

pub fn count_steps(height: usize, width: usize) -> Result<StepTotals> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("count_steps", "extents must be positive"));
    }
    Ok(StepTotals {
        dag_total: 4 * height * width,
        uag_total: 2 * height + 4 * width,
    })
}

/// Weights of one scan. `u` maps input channels, `w` carries the previous
/// hidden line, `w_diag` (second-stage scans only) carries the previous line
/// shifted by one position toward the parent scan's origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanParams<T> {
    /// `Cout×Cin×k`
    pub u: Tensor<T>,
    /// `Cout×Cout×k`
    pub w: Tensor<T>,
    /// `Cout×Cout×k`
    pub w_diag: Option<Tensor<T>>,
    /// `Cout`
    pub bias: Tensor<T>,
}

impl<T: Real> ScanParams<T> {
    pub fn zeros(cin: usize, cout: usize, k: usize, with_diag: bool) -> Self {
        Self {
            u: Tensor::zeros(&[cout, cin, k]),
            w: Tensor::zeros(&[cout, cout, k]),
            w_diag: with_diag.then(|| Tensor::zeros(&[cout, cout, k])),
            bias: Tensor::zeros(&[cout]),
        }
    }

    /// Weights uniform in `±sqrt(1/fan_in)`, bias zero.
    pub fn init<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        k: usize,
        with_diag: bool,
        rng: &mut R,
    ) -> Self {
        let bound_u = (1.0 / (cin * k) as f64).sqrt();
        let bound_w = (1.0 / (cout * k) as f64).sqrt();
        let u = Tensor::uniform(&[cout, cin, k], bound_u, rng);
        let w = Tensor::uniform(&[cout, cout, k], bound_w, rng);
        let w_diag = with_diag.then(|| Tensor::uniform(&[cout, cout, k], bound_w, rng));
        Self {
            u,
            w,
            w_diag,
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn kernel_extent(&self) -> usize {
        self.u.shape()[2]
    }
    pub fn in_channels(&self) -> usize {
        self.u.shape()[1]
    }
    pub fn out_channels(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn validate(&self, op: &'static str) -> Result<()> {
        let [cout, cin, k] = self.u.shape()[..] else {
            return Err(Error::invalid(
                op,
                format!("U must be Cout×Cin×k, got {:?}", self.u.shape()),
            ));
        };
        if k % 2 == 0 {
            return Err(Error::invalid(op, format!("kernel extent {k} must be odd")));
        }
        let _ = cin;
        self.w.ensure_shape(op, &[cout, cout, k])?;
        if let Some(d) = &self.w_diag {
            d.ensure_shape(op, &[cout, cout, k])?;
        }
        self.bias.ensure_shape(op, &[cout])
    }

    /// Parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.u, &self.w];
        v.extend(self.w_diag.as_ref());
        v.push(&self.bias);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.u, &mut self.w];
        v.extend(self.w_diag.as_mut());
        v.push(&mut self.bias);
        v
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            u: Tensor::zeros(self.u.shape()),
            w: Tensor::zeros(self.w.shape()),
            w_diag: self.w_diag.as_ref().map(|d| Tensor::zeros(d.shape())),
            bias: Tensor::zeros(self.bias.shape()),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ScanParams<U> {
        ScanParams {
            u: self.u.cast(),
            w: self.w.cast(),
            w_diag: self.w_diag.as_ref().map(|d| d.cast()),
            bias: self.bias.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_step_counts() {
        let t = count_steps(45, 60).unwrap();
        assert_eq!(t.dag_total, 10800);
        assert_eq!(t.uag_total, 330);
        let t = count_steps(90, 120).unwrap();
        assert_eq!(t.dag_total, 43200);
        assert_eq!(t.uag_total, 660);
        assert!(count_steps(0, 3).is_err());
    }

    #[test]
    fn doubling_extents() {
        let a = count_steps(45, 60).unwrap();
        let b = count_steps(90, 120).unwrap();
        assert_eq!(b.dag_total, 4 * a.dag_total);
        assert_eq!(b.uag_total, 2 * a.uag_total);
    }

    #[test]
    fn direction_relations() {
        for d in UagDirection::SECOND_STAGE {
            let dag = d.dag_equivalent().unwrap();
            assert_eq!(dag.uag_pair(), (d.parent().unwrap(), d));
        }
        assert!(UagDirection::FIRST_STAGE
            .iter()
            .all(|d| d.parent().is_none()));
    }
}
