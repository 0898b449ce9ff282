use bfp::confidence::{ConfidenceMap, ConfidenceRole};
use bfp::scan::{
    bfp_forward, count_steps, dag_scan, uag_scan, uag_scan_inference, uag_scan_second,
    uag_scan_vjp, BfpOptions, BfpParams, DagDirection, DagParams, ProbeGate, ProbeSetup,
    ScanParams, UagDirection,
};
use bfp::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn params_for(
    dir: UagDirection,
    cin: usize,
    cout: usize,
    k: usize,
    r: &mut ChaCha8Rng,
) -> ScanParams<f64> {
    let mut p = ScanParams::init(cin, cout, k, !dir.is_first_stage(), r);
    p.bias = Tensor::uniform(&[cout], 0.5, r);
    p
}

fn run(
    x: &Tensor<f64>,
    p: &ScanParams<f64>,
    dir: UagDirection,
    gate: Option<&ConfidenceMap<f64>>,
) -> Tensor<f64> {
    if dir.is_first_stage() {
        uag_scan(x, p, dir, gate).unwrap().output
    } else {
        uag_scan_second(x, p, dir, gate).unwrap().output
    }
}

#[test]
fn published_step_counts() {
    let t = count_steps(45, 60).unwrap();
    assert_eq!(t.dag_total, 10800);
    assert_eq!(t.uag_total, 330);
    let t = count_steps(90, 120).unwrap();
    assert_eq!(t.dag_total, 43200);
    assert_eq!(t.uag_total, 660);
}

#[test]
fn recorded_steps_follow_scan_extent() {
    let x = Tensor::<f64>::uniform(&[2, 5, 7], 1.0, &mut rng(1));
    for dir in UagDirection::ALL {
        let p = params_for(dir, 2, 2, 3, &mut rng(2));
        let (_, steps) = uag_scan_inference(&x, &p, dir, None).unwrap();
        let extent = if dir.is_first_stage() { 5 } else { 7 };
        assert_eq!(steps.sequential_steps, extent, "{dir:?}");
        assert!(steps.covers(5, 7));
    }
    let d = DagParams::<f64>::init(2, 2, &mut rng(3));
    for dir in DagDirection::ALL {
        assert_eq!(dag_scan(&x, &d, dir, None).unwrap().1.sequential_steps, 35);
    }
}

proptest! {
    #[test]
    fn doubling_extents(h in 1usize..200, w in 1usize..200) {
        let a = count_steps(h, w).unwrap();
        let b = count_steps(2 * h, 2 * w).unwrap();
        prop_assert_eq!(b.dag_total, 4 * a.dag_total);
        prop_assert_eq!(b.uag_total, 2 * a.uag_total);
    }

    #[test]
    fn open_gate_is_bit_identical_to_no_gate(seed in any::<u64>(), h in 1usize..9, w in 1usize..9, k in prop_oneof![Just(1usize), Just(3)]) {
        let mut r = rng(seed);
        let x = Tensor::<f64>::uniform(&[3, h, w], 1.0, &mut r);
        let ones = ConfidenceMap::uniform(ConfidenceRole::Propagation, h, w, 1.0).unwrap();
        for dir in UagDirection::ALL {
            let p = params_for(dir, 3, 2, k, &mut r);
            prop_assert!(run(&x, &p, dir, Some(&ones)).bit_eq(&run(&x, &p, dir, None)));
        }
        let bp = BfpParams::<f64>::init(3, k, &mut r);
        let a = bfp_forward(&x, Some(&ones), &bp, BfpOptions::default()).unwrap();
        let b = bfp_forward(&x, None, &bp, BfpOptions::default()).unwrap();
        prop_assert!(a.output.bit_eq(&b.output));
    }
}

#[test]
fn open_gate_is_bit_identical_in_f32() {
    let mut r = rng(9);
    let x = Tensor::<f32>::uniform(&[4, 6, 5], 1.0, &mut r);
    let ones = ConfidenceMap::<f32>::uniform(ConfidenceRole::Propagation, 6, 5, 1.0).unwrap();
    let bp = BfpParams::<f32>::init(4, 3, &mut r);
    let a = bfp_forward(&x, Some(&ones), &bp, BfpOptions::default()).unwrap();
    let b = bfp_forward(&x, None, &bp, BfpOptions::default()).unwrap();
    assert!(a.output.bit_eq(&b.output));
}

#[test]
fn closed_gate_gives_single_pixel_influence() {
    let s = ProbeSetup::new(6, 7, ProbeGate::Closed, 4).unwrap();
    for dir in DagDirection::ALL {
        for masks in [s.uag_masks(dir).unwrap(), s.dag_masks(dir).unwrap()] {
            for (probe, m) in masks.iter().enumerate() {
                let on: Vec<usize> = (0..m.len()).filter(|&i| m[i]).collect();
                assert_eq!(on, [probe], "{dir:?}");
            }
        }
    }
}

#[test]
fn uag_pairs_reach_exactly_the_dag_quadrant() {
    let s = ProbeSetup::new(8, 8, ProbeGate::Open, 5).unwrap();
    for dir in DagDirection::ALL {
        let uag = s.uag_masks(dir).unwrap();
        let dag = s.dag_masks(dir).unwrap();
        assert_eq!(uag, dag, "{dir:?}");
        // The DAG reaches its full quadrant.
        let (down, right) = match dir {
            DagDirection::SE => (true, true),
            DagDirection::SW => (true, false),
            DagDirection::NE => (false, true),
            DagDirection::NW => (false, false),
        };
        for (probe, m) in dag.iter().enumerate() {
            let (pr, pc) = (probe / 8, probe % 8);
            for (src, &on) in m.iter().enumerate() {
                let (sr, sc) = (src / 8, src % 8);
                let rows = if down { sr <= pr } else { sr >= pr };
                let cols = if right { sc <= pc } else { sc >= pc };
                assert_eq!(on, rows && cols);
            }
        }
    }
}

#[test]
fn non_square_grids_match() {
    for (h, w) in [(3, 8), (8, 3), (1, 5), (5, 1)] {
        let s = ProbeSetup::new(h, w, ProbeGate::Open, 6).unwrap();
        for dir in DagDirection::ALL {
            assert_eq!(
                s.uag_masks(dir).unwrap(),
                s.dag_masks(dir).unwrap(),
                "{h}×{w} {dir:?}"
            );
        }
    }
}

/// `|∂ out[probe] / ∂ in[source]|` summed over channels, through a parent and
/// child scan under gate `p`.
fn sensitivity(
    s: &ProbeSetup,
    dir: DagDirection,
    p: &ConfidenceMap<f64>,
    probe: usize,
    source: usize,
) -> f64 {
    let (parent, child) = dir.uag_pair();
    let t1 = uag_scan(&s.input, &s.first, parent, Some(p)).unwrap();
    let t2 = uag_scan_second(&t1.output, &s.second, child, Some(p)).unwrap();
    let [c, h, w] = t2.input_shape();
    let mut up = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        up.data_mut()[ch * h * w + probe] = 1.0;
    }
    let g2 = uag_scan_vjp(&up, &t2, &s.second).unwrap();
    let g1 = uag_scan_vjp(&g2.input, &t1, &s.first).unwrap();
    (0..c)
        .map(|ch| g1.input.data()[ch * h * w + source].abs())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn raising_one_gate_never_weakens_influence(
        seed in any::<u64>(),
        dir_i in 0usize..4,
        at in 0usize..36,
        probe in 0usize..36,
        source in 0usize..36,
    ) {
        let s = ProbeSetup::new(6, 6, ProbeGate::Open, seed).unwrap();
        let dir = DagDirection::ALL[dir_i];
        let mut r = rng(seed);
        let base: Vec<f64> = (0..36).map(|_| r.random_range(0.0..1.0)).collect();
        let mut last = 0.0;
        for v in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let mut vals = base.clone();
            vals[at] = v;
            let p = ConfidenceMap::new(ConfidenceRole::Propagation, Tensor::from_vec(&[6, 6], vals).unwrap()).unwrap();
            let g = sensitivity(&s, dir, &p, probe, source);
            prop_assert!(g >= last, "p={v}: {g} < {last}");
            last = g;
        }
    }
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let mut r = rng(11);
    let (c, h, w) = (16, 40, 36);
    let x = Tensor::<f32>::uniform(&[c, h, w], 1.0, &mut r);
    let bp = BfpParams::<f32>::init(c, 3, &mut r);
    let vals: Vec<f32> = (0..h * w).map(|_| r.random_range(0.0..1.0)).collect();
    let p = ConfidenceMap::new(
        ConfidenceRole::Propagation,
        Tensor::from_vec(&[h, w], vals).unwrap(),
    )
    .unwrap();
    let up = Tensor::<f32>::uniform(&[c, h, w], 1.0, &mut r);
    let dag = DagParams::<f32>::init(c, c, &mut r);

    let go = || {
        let t = bfp_forward(&x, Some(&p), &bp, BfpOptions::default()).unwrap();
        let g = bfp::scan::bfp_backward(&up, &t, &bp).unwrap();
        let d = dag_scan(&x, &dag, DagDirection::NE, Some(&p)).unwrap().0;
        (t.output, g.features, g.p.unwrap(), g.params.fuse, d)
    };
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let one = pool(1).install(go);
    for n in [2, 3, 4] {
        let many = pool(n).install(go);
        assert!(one.0.bit_eq(&many.0), "{n} threads: output");
        assert!(one.1.bit_eq(&many.1), "{n} threads: features grad");
        assert!(one.2.bit_eq(&many.2), "{n} threads: gate grad");
        assert!(one.3.bit_eq(&many.3), "{n} threads: fuse grad");
        assert!(one.4.bit_eq(&many.4), "{n} threads: dag");
    }
}
