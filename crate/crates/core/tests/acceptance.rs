//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bfp::confidence::{propagation_confidence, ConfidenceMap, ConfidenceRole, GateParams};
use bfp::gradcheck;
use bfp::harness::store::load_model;
use bfp::harness::{
    aggregate, synth_dataset, train_toy, AblationRow, Aggregate, DataConfig, Model, ModelConfig,
    Spread, ToyConfig, TrainConfig, Variant,
};
use bfp::labels::oracle::brute_force_boundary_labels;
use bfp::labels::{generate_boundary_labels, LabelMap};
use bfp::scan::{
    bfp_forward, count_steps, run_bench, uag_scan, uag_scan_second, BenchVariant, BfpOptions,
    BfpParams, DagDirection, ProbeGate, ProbeSetup, ScanParams, UagDirection, TABLE_UAG_LOOPS,
};
use bfp::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/fixtures/toy")
}

fn c1_step_counts() -> Check {
    let mut notes = Vec::new();
    for (w, h, dag, uag) in TABLE_UAG_LOOPS {
        let t = count_steps(h, w).map_err(err)?;
        ensure(
            t.dag_total == dag,
            format!("{w}x{h}: dag {} != {dag}", t.dag_total),
        )?;
        ensure(
            t.uag_total == 2 * h + 4 * w,
            format!("{w}x{h}: uag {} != 2H+4W", t.uag_total),
        )?;
        notes.push(format!(
            "{w}x{h} dag {} uag {} (published uag {uag})",
            t.dag_total, t.uag_total
        ));
    }
    Ok(notes.join("; "))
}

fn c2_speed() -> Check {
    let t0 = Instant::now();
    let rows = pool(1)
        .install(|| run_bench(&[(60, 45), (120, 90)], 32, 15, 0))
        .map_err(err)?;
    let ratio = |res: &str| {
        let ms = |v| {
            rows.iter()
                .find(|r| r.resolution == res && r.variant == v)
                .map(|r| r.wall_clock_ms)
                .expect("row")
        };
        ms(BenchVariant::Dag) / ms(BenchVariant::Uag)
    };
    let (small, large) = (ratio("60x45"), ratio("120x90"));
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!("1 thread, 32 channels: uag {small:.2}x faster at 60x45, {large:.2}x at 120x90 ({secs:.0}s)");
    ensure(small >= 3.0, format!("{detail}; need >= 3x at 60x45"))?;
    ensure(
        large > small,
        format!("{detail}; ratio must grow with size"),
    )?;
    ensure(secs < 120.0, format!("{detail}; over 2 minutes"))?;
    Ok(detail)
}

fn c3_equivalence() -> Check {
    let setup = ProbeSetup::new(8, 8, ProbeGate::Open, 0).map_err(err)?;
    for dir in DagDirection::ALL {
        let uag = setup.uag_masks(dir).map_err(err)?;
        let dag = setup.dag_masks(dir).map_err(err)?;
        if let Some(p) = (0..64).find(|&p| uag[p] != dag[p]) {
            return Err(format!(
                "{dir:?}: masks differ at probe ({}, {})",
                p / 8,
                p % 8
            ));
        }
    }
    Ok("4 directions x 64 probes on 8x8, k=1, gate open: identical masks".into())
}

fn c4_gradients() -> Check {
    let t0 = Instant::now();
    let results = gradcheck::check_all().map_err(err)?;
    let secs = t0.elapsed().as_secs_f64();
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} {:.2e} >= {:.0e}", r.name, r.max_rel_error, r.tolerance))
        .collect();
    ensure(failed.is_empty(), format!("failed: {}", failed.join(", ")))?;
    ensure(secs < 60.0, format!("took {secs:.1}s"))?;
    let worst = |tol: f64| {
        results
            .iter()
            .filter(|r| r.tolerance == tol)
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    };
    Ok(format!(
        "{} checks x {} seeds in {secs:.1}s; worst {:.1e} elementwise, {:.1e} scans, {:.1e} end-to-end",
        results.len(),
        gradcheck::SEEDS,
        worst(gradcheck::TOL_ELEMENTWISE),
        worst(gradcheck::TOL_SCAN),
        worst(gradcheck::TOL_END_TO_END),
    ))
}

fn c5_gating_identities() -> Check {
    // β = 0 (held fixed) against the ungated model, forward and training.
    let base = ModelConfig {
        gate: GateParams {
            beta: 0.0,
            ..GateParams::default()
        },
        ..ModelConfig::default()
    };
    let with = |variant| ModelConfig {
        variant,
        ..base.clone()
    };
    let scene = &synth_dataset(11, 1, 64, 5).map_err(err)?[0];
    let frozen = Model::<f32>::new(with(Variant::BetaFrozen)).map_err(err)?;
    let ungated = Model::<f32>::new(with(Variant::Ungated)).map_err(err)?;
    let a = frozen.forward(&scene.image).map_err(err)?;
    let b = ungated.forward(&scene.image).map_err(err)?;
    ensure(
        a.seg_scores.bit_eq(&b.seg_scores),
        "beta=0 forward differs from ungated",
    )?;
    let short = |variant| ToyConfig {
        model: with(variant),
        train: TrainConfig {
            steps: 25,
            ..TrainConfig::default()
        },
        data: DataConfig {
            train_count: 4,
            eval_count: 2,
            ..DataConfig::default()
        },
    };
    let (ma, ra, _) = train_toy(&short(Variant::BetaFrozen)).map_err(err)?;
    let (mb, rb, _) = train_toy(&short(Variant::Ungated)).map_err(err)?;
    ensure(
        ra.loss_curve == rb.loss_curve && ra.eval == rb.eval,
        "beta=0 training differs from ungated",
    )?;
    ensure(
        ma.params
            .tensors()
            .iter()
            .zip(mb.params.tensors())
            .all(|(x, y)| x.bit_eq(y)),
        "beta=0 weights differ from ungated after training",
    )?;

    // p ≡ 1 against no gate, every scan direction and the full module.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::<f64>::uniform(&[4, 9, 7], 1.0, &mut rng);
    let ones = ConfidenceMap::uniform(ConfidenceRole::Propagation, 9, 7, 1.0).map_err(err)?;
    for dir in UagDirection::ALL {
        for k in [1, 3] {
            let p = ScanParams::<f64>::init(4, 4, k, !dir.is_first_stage(), &mut rng);
            let run = |g| {
                if dir.is_first_stage() {
                    uag_scan(&x, &p, dir, g).map(|t| t.output)
                } else {
                    uag_scan_second(&x, &p, dir, g).map(|t| t.output)
                }
            };
            ensure(
                run(Some(&ones))
                    .map_err(err)?
                    .bit_eq(&run(None).map_err(err)?),
                format!("{dir:?} k={k}: p=1 differs from ungated"),
            )?;
        }
    }
    let bp = BfpParams::<f64>::init(4, 3, &mut rng);
    let gated = bfp_forward(&x, Some(&ones), &bp, BfpOptions::default()).map_err(err)?;
    let plain = bfp_forward(&x, None, &bp, BfpOptions::default()).map_err(err)?;
    ensure(
        gated.output.bit_eq(&plain.output),
        "module with p=1 differs from ungated",
    )?;

    // p ≡ 0: every output depends on its own pixel only.
    let closed = ProbeSetup::new(8, 8, ProbeGate::Closed, 0).map_err(err)?;
    for dir in DagDirection::ALL {
        for masks in [
            closed.uag_masks(dir).map_err(err)?,
            closed.dag_masks(dir).map_err(err)?,
        ] {
            for (probe, m) in masks.iter().enumerate() {
                let on: Vec<usize> = (0..64).filter(|&i| m[i]).collect();
                ensure(
                    on == [probe],
                    format!("{dir:?}: p=0 mask at {probe} is {on:?}"),
                )?;
            }
        }
    }
    Ok("beta=0 == ungated (forward + 25 training steps), p=1 == ungated (6 scans, module), p=0 single-pixel masks".into())
}

fn c6_boundary_labels() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut boundary_pixels = 0;
    for i in 0..200 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let n = rng.random_range(1..=6);
        let radius = rng.random_range(0.5..12.0);
        let values = if i % 2 == 0 {
            (0..w * h)
                .map(|_| {
                    if rng.random_bool(0.05) {
                        255
                    } else {
                        rng.random_range(0..n)
                    }
                })
                .collect()
        } else {
            // Blocky maps: a few overlapping rectangles.
            let mut v = vec![0u16; w * h];
            for _ in 0..rng.random_range(1..6) {
                let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
                let (x1, y1) = (rng.random_range(x0..w) + 1, rng.random_range(y0..h) + 1);
                let c = rng.random_range(0..n);
                for y in y0..y1 {
                    v[y * w + x0..y * w + x1].fill(c);
                }
            }
            v
        };
        let map = LabelMap::new(w, h, n as usize, values).map_err(err)?;
        let fast = generate_boundary_labels(&map, radius).map_err(err)?;
        let slow = brute_force_boundary_labels(&map, radius).map_err(err)?;
        ensure(
            fast == slow,
            format!("map {i} ({w}x{h}, {n} classes, r={radius}) differs from oracle"),
        )?;
        boundary_pixels += fast.values().iter().filter(|&&v| v == n).count();
    }
    let b = ConfidenceMap::new(
        ConfidenceRole::Boundary,
        Tensor::from_vec(&[1, 1], vec![0.2f64]).map_err(err)?,
    )
    .map_err(err)?;
    let p = propagation_confidence(&b, &GateParams::default()).data()[0];
    ensure(p == 0.5, format!("p(b=0.2, beta=1) = {p:e}"))?;
    Ok(format!(
        "200 maps equal the oracle ({boundary_pixels} boundary pixels); p(0.2, 1) = 0.5"
    ))
}

fn fmt_spread(s: &Option<Spread>) -> String {
    s.map_or_else(
        || "undefined".into(),
        |s| format!("{:.4} ± {:.4}", s.mean, s.std),
    )
}

fn trimap_report(gated_seed7: AblationRow) -> Result<(Aggregate, Aggregate), String> {
    let base = ToyConfig::default();
    let run = |variant, seed| {
        let mut cfg = base.clone();
        cfg.model.variant = variant;
        cfg.model.seed = seed;
        train_toy(&cfg)
            .map(|(_, report, _)| AblationRow {
                variant,
                seed,
                report,
            })
            .map_err(err)
    };
    let mut gated = vec![gated_seed7];
    for seed in [8, 9] {
        gated.push(run(Variant::Gated, seed)?);
    }
    let mut ungated = Vec::new();
    for seed in [7, 8, 9] {
        ungated.push(run(Variant::Ungated, seed)?);
    }
    let (g, u) = (
        aggregate(Variant::Gated, &gated),
        aggregate(Variant::Ungated, &ungated),
    );
    let dir = option_env!("CARGO_TARGET_TMPDIR")
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let json = serde_json::json!({ "gated": g, "ungated": u, "rows": gated.iter().chain(&ungated).map(|r| {
        serde_json::json!({ "variant": r.variant, "seed": r.seed, "miou": r.report.eval.miou, "trimap": r.report.eval.trimap })
    }).collect::<Vec<_>>() });
    let path = dir.join("trimap_report.json");
    if fs::write(&path, serde_json::to_string_pretty(&json).map_err(err)?).is_ok() {
        println!("   report written to {}", path.display());
    }
    Ok((g, u))
}

fn c7_training() -> Check {
    let cfg = ToyConfig::default();
    let t0 = Instant::now();
    let (model, report, _) = pool(1).install(|| train_toy(&cfg)).map_err(err)?;
    let (model3, report3, _) = pool(3).install(|| train_toy(&cfg)).map_err(err)?;
    let secs = t0.elapsed().as_secs_f64();

    let (first, last) = (
        report.initial_smoothed_loss.ok_or("no initial loss")?,
        report.final_smoothed_loss.ok_or("no final loss")?,
    );
    ensure(
        last < 0.5 * first,
        format!("smoothed loss {first:.4} -> {last:.4} is not halved"),
    )?;
    let conf = report.train_boundary_confidence;
    let (on, off) = (
        conf.on_boundary.ok_or("no boundary pixels")?,
        conf.off_boundary.ok_or("no interior")?,
    );
    ensure(
        on > off,
        format!("boundary confidence {on:.4} on vs {off:.4} off"),
    )?;
    ensure(report == report3, "report differs between 1 and 3 threads")?;
    ensure(
        model
            .params
            .tensors()
            .iter()
            .zip(model3.params.tensors())
            .all(|(a, b)| a.bit_eq(b)),
        "weights differ between 1 and 3 threads",
    )?;
    let mut pinned = serde_json::to_string_pretty(&report).map_err(err)?;
    pinned.push('\n');
    let dir = fixture_dir();
    let stored =
        fs::read_to_string(dir.join("metrics.json")).map_err(|e| format!("pinned metrics: {e}"))?;
    ensure(
        stored == pinned,
        "report differs from the pinned metrics.json",
    )?;
    let (_, stored_model) = load_model(&dir).map_err(err)?;
    ensure(
        stored_model
            .params
            .tensors()
            .iter()
            .zip(model.params.tensors())
            .all(|(a, b)| a.bit_eq(b)),
        "weights differ from the pinned model",
    )?;
    ensure(secs < 600.0, format!("took {secs:.0}s"))?;
    let detail = format!(
        "loss {first:.4} -> {last:.4}, boundary confidence {on:.4} on / {off:.4} off, mIoU {:.4}, \
         identical at 1 and 3 threads and to the pinned run ({secs:.0}s for both runs)",
        report.eval.miou.unwrap_or(f64::NAN)
    );

    let t1 = Instant::now();
    let row = AblationRow {
        variant: Variant::Gated,
        seed: cfg.model.seed,
        report,
    };
    let (g, u) = trimap_report(row)?;
    println!(
        "   trimap mIoU over seeds 7, 8, 9 ({:.0}s):",
        t1.elapsed().as_secs_f64()
    );
    println!("   {:>6}  {:>18}  {:>18}  gap", "band", "gated", "ungated");
    for ((band, gs), (_, us)) in g.trimap.iter().zip(&u.trimap) {
        let gap = match (gs, us) {
            (Some(a), Some(b)) if a.mean > b.mean => "gated higher",
            (Some(a), Some(b)) if a.mean < b.mean => "ungated higher",
            (Some(_), Some(_)) => "equal",
            _ => "undefined",
        };
        println!(
            "   {band:>6}  {:>18}  {:>18}  {gap}",
            fmt_spread(gs),
            fmt_spread(us)
        );
    }
    println!(
        "   {:>6}  {:>18}  {:>18}",
        "all",
        fmt_spread(&g.miou),
        fmt_spread(&u.miou)
    );
    Ok(detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Check); 7] = [
        ("C1", "step counts", c1_step_counts),
        ("C2", "speed trend", c2_speed),
        ("C3", "dependency equivalence", c3_equivalence),
        ("C4", "gradient suite", c4_gradients),
        ("C5", "gating identities", c5_gating_identities),
        ("C6", "boundary labeling", c6_boundary_labels),
        ("C7", "toy training regression", c7_training),
    ];
    let mut failures = 0;
    for (id, name, f) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("{id} FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
