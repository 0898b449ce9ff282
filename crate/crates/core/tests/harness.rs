use bfp::harness::{
    ablation_grid, evaluate_miou, evaluate_trimap, synth_dataset, train_toy, DataConfig, Model,
    ModelConfig, ToyConfig, TrainConfig, Variant,
};
use bfp::labels::LabelMap;
use bfp::tensor::SgdConfig;
use bfp::Tensor;
use proptest::prelude::*;

const IGNORE: u16 = 255;

fn split_map(w: usize, h: usize, at: usize) -> LabelMap {
    LabelMap::new(
        w,
        h,
        2,
        (0..w * h).map(|i| u16::from(i % w >= at)).collect(),
    )
    .unwrap()
}

fn tiny(steps: usize) -> ToyConfig {
    ToyConfig {
        model: ModelConfig {
            channels: 4,
            dilations: vec![1, 2],
            ..ModelConfig::default()
        },
        train: TrainConfig {
            steps,
            smoothing_window: 5,
            sgd: SgdConfig {
                total_iters: 100,
                ..SgdConfig::default()
            },
            ..TrainConfig::default()
        },
        data: DataConfig {
            size: 24,
            train_count: 4,
            eval_count: 2,
            ..DataConfig::default()
        },
    }
}

#[test]
fn all_zero_prediction_against_half_split() {
    let gt = split_map(4, 2, 2);
    let pred = LabelMap::new(4, 2, 2, vec![0; 8]).unwrap();
    let r = evaluate_miou(&pred, &gt, 2, IGNORE, None).unwrap();
    assert_eq!(r.per_class, [Some(0.5), Some(0.0)]);
    assert_eq!(r.miou, Some(0.25));
}

#[test]
fn masked_to_class_zero_region() {
    let gt = split_map(4, 2, 2);
    let pred = LabelMap::new(4, 2, 2, vec![0; 8]).unwrap();
    let mask: Vec<bool> = gt.values().iter().map(|&v| v == 0).collect();
    let r = evaluate_miou(&pred, &gt, 2, IGNORE, Some(&mask)).unwrap();
    assert_eq!(r.per_class, [Some(1.0), None]);
    assert_eq!(r.miou, Some(1.0));
    let r = evaluate_miou(&pred, &gt, 2, IGNORE, Some(&[false; 8])).unwrap();
    assert_eq!(r.miou, None);
}

#[test]
fn one_column_error_hurts_the_narrow_band_most() {
    let gt = split_map(16, 16, 8);
    let mut v = gt.values().to_vec();
    for y in 0..16 {
        v[y * 16 + 8] = 0;
    }
    let pred = LabelMap::new(16, 16, 2, v).unwrap();
    let bands = evaluate_trimap(&pred, &gt, &[1.5, 8.0, 100.0]).unwrap();
    assert_eq!(bands[0].miou, Some(0.25));
    assert_eq!(bands[1].miou, Some((7.0 / 8.0 + 6.0 / 7.0) / 2.0));
    assert!(bands[0].miou < bands[1].miou);
    let full = evaluate_miou(&pred, &gt, 2, IGNORE, None).unwrap();
    assert_eq!(bands[2].miou, full.miou);
}

#[test]
fn perfect_prediction_at_every_band() {
    let gt = split_map(10, 6, 3);
    for b in evaluate_trimap(&gt, &gt, &[1.5, 2.0, 4.0, 50.0]).unwrap() {
        assert_eq!(b.miou, Some(1.0));
    }
    // Nothing lies strictly closer than one pixel to the split.
    assert_eq!(evaluate_trimap(&gt, &gt, &[1.0]).unwrap()[0].miou, None);
    assert!(evaluate_trimap(&gt, &gt, &[2.0, 1.0]).is_err());
}

fn map_pair() -> impl Strategy<Value = (LabelMap, LabelMap)> {
    (1usize..10, 1usize..10, 1usize..5).prop_flat_map(|(w, h, n)| {
        let cell = || prop_oneof![6 => 0..n as u16, 1 => Just(IGNORE)];
        (
            proptest::collection::vec(cell(), w * h),
            proptest::collection::vec(0..n as u16, w * h),
        )
            .prop_map(move |(g, p)| {
                (
                    LabelMap::new(w, h, n, p).unwrap(),
                    LabelMap::new(w, h, n, g).unwrap(),
                )
            })
    })
}

proptest! {
    #[test]
    fn miou_is_one_iff_prediction_is_exact((pred, gt) in map_pair()) {
        let r = evaluate_miou(&pred, &gt, gt.num_classes(), IGNORE, None).unwrap();
        let exact = pred.values().iter().zip(gt.values()).all(|(&p, &g)| g == IGNORE || p == g);
        let any = gt.values().iter().any(|&g| g != IGNORE);
        prop_assert_eq!(r.miou == Some(1.0), exact && any);
        if let Some(m) = r.miou {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn miou_is_permutation_equivariant((pred, gt) in map_pair(), rot in 0u16..5) {
        let n = gt.num_classes();
        let perm = |m: &LabelMap| {
            let v = m.values().iter().map(|&x| if x == IGNORE { x } else { (x + rot) % n as u16 }).collect();
            LabelMap::new(m.width(), m.height(), n, v).unwrap()
        };
        let a = evaluate_miou(&pred, &gt, n, IGNORE, None).unwrap();
        let b = evaluate_miou(&perm(&pred), &perm(&gt), n, IGNORE, None).unwrap();
        for c in 0..n {
            prop_assert_eq!(a.per_class[c], b.per_class[(c + rot as usize) % n]);
        }
        match (a.miou, b.miou) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn param_count_matches_allocation(
        channels in 1usize..6,
        layers in 1usize..4,
        scan_kernel in prop_oneof![Just(1usize), Just(3)],
        classes in 2usize..6,
    ) {
        let cfg = ModelConfig {
            channels,
            dilations: (1..=layers).collect(),
            scan_kernel,
            num_classes: classes,
            ..ModelConfig::default()
        };
        let m = Model::<f32>::new(cfg.clone()).unwrap();
        prop_assert_eq!(m.params.num_params(), cfg.param_count());
    }
}

#[test]
fn default_model_size() {
    let cfg = ModelConfig::default();
    let (c, n, k) = (8usize, 5usize, 1usize);
    let backbone = (3 * c * 9 + c) + 5 * (c * c * 9 + c);
    let scans = 2 * (2 * c * c * k + c) + 4 * (3 * c * c * k + c);
    let expected = backbone + (n + 1) * c + (n + 1) + scans + 4 * c * c + n * c + n + 1;
    assert_eq!(cfg.param_count(), expected);
}

#[test]
fn synthetic_data_is_seeded() {
    let a = synth_dataset(3, 4, 32, 5).unwrap();
    assert_eq!(a, synth_dataset(3, 4, 32, 5).unwrap());
    assert_ne!(a, synth_dataset(4, 4, 32, 5).unwrap());
    for s in &a {
        assert_eq!(s.image.shape(), [3, 32, 32]);
        assert!(s.labels.values().iter().all(|&v| v < 5));
    }
}

#[test]
fn frozen_zero_beta_equals_ungated_forward() {
    let base = ModelConfig {
        gate: bfp::confidence::GateParams {
            beta: 0.0,
            ..Default::default()
        },
        ..ModelConfig::default()
    };
    let scene = &synth_dataset(5, 1, 32, 5).unwrap()[0];
    let image: Tensor<f32> = scene.image.clone();
    let frozen = Model::<f32>::new(ModelConfig {
        variant: Variant::BetaFrozen,
        ..base.clone()
    })
    .unwrap();
    let ungated = Model::<f32>::new(ModelConfig {
        variant: Variant::Ungated,
        ..base
    })
    .unwrap();
    assert_eq!(frozen.params, ungated.params);
    let a = frozen.forward(&image).unwrap();
    let b = ungated.forward(&image).unwrap();
    assert!(a.seg_scores.bit_eq(&b.seg_scores));
    assert!(a.gate.unwrap().data().iter().all(|&p| p == 1.0));
}

#[test]
fn frozen_zero_beta_equals_ungated_training() {
    let mut cfg = tiny(12);
    cfg.model.gate.beta = 0.0;
    let table = ablation_grid(&cfg, &[Variant::BetaFrozen, Variant::Ungated], &[3]).unwrap();
    let (a, b) = (&table.rows[0].report, &table.rows[1].report);
    assert_eq!(a.loss_curve, b.loss_curve);
    assert_eq!(a.eval, b.eval);
    assert_eq!(a.train_boundary_confidence, b.train_boundary_confidence);
    assert_eq!(a.beta, 0.0);
}

#[test]
fn ablation_bookkeeping_and_repeatability() {
    let cfg = tiny(6);
    let table = ablation_grid(
        &cfg,
        &[Variant::Gated, Variant::Gated, Variant::Ungated],
        &[1, 2, 3],
    )
    .unwrap();
    assert_eq!(table.rows.len(), 9);
    assert_eq!(table.aggregates.len(), 3);
    for i in 0..3 {
        assert_eq!(table.rows[i], table.rows[i + 3]);
    }
    assert_eq!(table.aggregates[0].runs, 3);
    assert_eq!(
        table.aggregates[0].trimap.len(),
        cfg.train.trimap_bands.len()
    );
    assert!(ablation_grid(&cfg, &[Variant::Gated], &[]).is_err());
}

#[test]
fn zero_steps_writes_initial_metrics_only() {
    let (_, report, log) = train_toy(&tiny(0)).unwrap();
    assert!(log.total.is_empty());
    assert_eq!(report.steps, 0);
    assert_eq!(report.final_smoothed_loss, None);
    assert!(report.eval.miou.is_some());
}

#[test]
fn training_is_repeatable_across_thread_counts() {
    let cfg = tiny(10);
    let run = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| train_toy(&cfg).unwrap())
    };
    let (m1, r1, _) = run(1);
    let (m2, r2, _) = run(1);
    let (m4, r4, _) = run(4);
    assert_eq!(r1, r2);
    assert_eq!(r1, r4);
    assert_eq!(m1, m2);
    assert_eq!(m1, m4);
    assert_eq!(
        serde_json::to_string(&r1).unwrap(),
        serde_json::to_string(&r4).unwrap()
    );
}

#[test]
fn loss_weight_zero_leaves_boundary_head_to_the_gate() {
    let scene = &synth_dataset(8, 1, 24, 5).unwrap()[0];
    let b = bfp::labels::generate_boundary_labels(&scene.labels, 3.0).unwrap();
    let cfg = ModelConfig {
        channels: 4,
        dilations: vec![1],
        loss_weight: 0.0,
        ..ModelConfig::default()
    };
    let ungated = Model::<f32>::new(ModelConfig {
        variant: Variant::Ungated,
        ..cfg.clone()
    })
    .unwrap();
    let (_, g) = ungated
        .loss_and_grads(&scene.image, &scene.labels, &b)
        .unwrap();
    assert!(g.head_boundary.weight.data().iter().all(|&v| v == 0.0));
    let gated = Model::<f32>::new(cfg).unwrap();
    let (_, g) = gated
        .loss_and_grads(&scene.image, &scene.labels, &b)
        .unwrap();
    assert!(g.head_boundary.weight.data().iter().any(|&v| v != 0.0));
}
