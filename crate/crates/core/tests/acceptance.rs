//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Criteria that train models
//! take the better part of an hour on one core; set
//! `EQUIKIT_ACCEPTANCE_SKIP_TRAINING=1` to skip them. Artefacts (reports,
//! sweep CSV, ablation table) are written under the cargo target tmp dir.

mod common;

use common::geometry_oracles::{angle_sweep_min_area, brute_force_hull, monte_carlo_iou, random_box, random_points};
use common::grad_suite::gradient_suite;
use equikit::detector::{Ablation, Detector, DetectorConfig};
use equikit::geometry::{convex_hull, min_area_rect, polygon_iou, Point, Polygon};
use equikit::harness::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn out_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).expect("artefact dir");
    d
}

fn write_json<T: Serialize>(name: &str, value: &T) {
    let _ = std::fs::write(out_dir().join(name), serde_json::to_string_pretty(value).unwrap());
}

fn exact_c4() -> Outcome {
    let t = Instant::now();
    let layers = [
        "lift_conv",
        "group_conv",
        "group_pool",
        "to_vector_field",
        "orientation_align",
        "re_dcn",
        "ri_dcn",
        "detector",
    ];
    let opts = VerifyOptions {
        group: 4,
        trials: 100,
        ..VerifyOptions::default()
    };
    let r = verify_equivariance(
        &VerifyOptions {
            detector_tol: 1e-8,
            ..opts
        },
        &layers,
    )?;
    write_json("verify_c4.json", &r);
    let secs = t.elapsed().as_secs_f64();
    let worst = r.checks.iter().map(|c| c.error).fold(0.0, f64::max);
    let det_trials = opts.trials.min(25);
    let ok = r.checks.iter().all(|c| c.error < 1e-8) && secs < 120.0;
    Ok((
        ok,
        format!(
            "worst commutator {worst:.2e} over {} checks (100 trials per layer, {det_trials} for the detector), {secs:.1} s",
            r.checks.len()
        ),
    ))
}

fn approx_c8() -> Outcome {
    let opts = VerifyOptions {
        group: 8,
        trials: 100,
        ..VerifyOptions::default()
    };
    let layers = [
        "lift_conv",
        "group_conv",
        "group_pool",
        "to_vector_field",
        "orientation_align",
        "re_dcn",
        "ri_dcn",
    ];
    let r = verify_equivariance(&opts, &layers)?;
    write_json("verify_c8.json", &r);
    let odd: Vec<_> = r.checks.iter().filter(|c| c.g % 2 == 1).collect();
    let gated: Vec<_> = odd.iter().filter(|c| c.gated).collect();
    let worst = gated.iter().max_by(|a, b| a.error.total_cmp(&b.error)).ok_or("no checks")?;
    let vf = odd.iter().filter(|c| !c.gated).map(|c| c.error).fold(0.0, f64::max);
    let quarter_ok = r.checks.iter().filter(|c| c.g % 2 == 0).all(|c| c.pass);
    let ok = gated.iter().all(|c| c.error < 0.05) && quarter_ok;
    Ok((
        ok,
        format!(
            "worst 45°-class relative error {:.2}% ({}); to_vector_field off-grid {:.1}% reported, not gated (hard argmax)",
            100.0 * worst.error,
            worst.layer,
            100.0 * vf
        ),
    ))
}

fn strided() -> Outcome {
    let opts = VerifyOptions {
        group: 4,
        trials: 100,
        ..VerifyOptions::default()
    };
    let r = verify_equivariance(&opts, &["strided_padded", "strided_unpadded"])?;
    let quarter: Vec<_> = r.checks.iter().filter(|c| c.g == 1).collect();
    let padded = quarter.iter().find(|c| c.layer == "strided_padded").ok_or("missing")?.error;
    let unpadded = quarter.iter().find(|c| c.layer == "strided_unpadded").ok_or("missing")?.error;
    // The verifier reports the worst trial; the control must fail on every trial.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut min_unpadded = f64::INFINITY;
    for _ in 0..20 {
        let x = equikit::tensor::Tensor::randn(&[2, 34, 34], 1.0, &mut rng);
        let w = equikit::tensor::Tensor::randn(&[2, 2, 3, 3], 1.0, &mut rng);
        let spec = equikit::tensor::Conv2dSpec::new(2, 1);
        let g = equikit::cyclic::CyclicGroup::new(4)?;
        let lhs = equikit::cyclic::lift_conv(&equikit::tensor::rotate_image(&x, 1, 4), &w, 4, spec)?;
        let rhs = g.act(1, &equikit::cyclic::lift_conv(&x, &w, 4, spec)?)?;
        min_unpadded = min_unpadded.min(lhs.tensor.max_abs_diff(&rhs.tensor));
    }
    let ok = padded < 1e-10 && unpadded > 1e-3 && min_unpadded > 1e-3;
    Ok((
        ok,
        format!("90° commutator with pad_to_odd {padded:.2e}; without {unpadded:.2e} (smallest over 20 fresh draws {min_unpadded:.2e})"),
    ))
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let rows = gradient_suite(0..100)?;
    let secs = t.elapsed().as_secs_f64();
    let worst = rows.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err)).ok_or("empty")?;
    let evals: usize = rows.iter().map(|r| r.evaluations).sum();
    let ok = rows.iter().all(|r| r.max_rel_err < 1e-4) && secs < 300.0;
    Ok((
        ok,
        format!(
            "{} ops x 100 seeds, worst rel. error {:.2e} ({}), {evals} evaluations, {secs:.1} s",
            rows.len(),
            worst.max_rel_err,
            worst.op
        ),
    ))
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rect_err: f64 = 0.0;
    for _ in 0..200 {
        let hull = convex_hull(&random_points(rng.random_range(3..25), 10.0, &mut rng))?;
        let want = angle_sweep_min_area(hull.vertices());
        rect_err = rect_err.max(((min_area_rect(&hull)?.area() - want) / want).abs());
    }
    let mut iou_err: f64 = 0.0;
    for _ in 0..10 {
        let a = random_box(&mut rng, 10.0).to_polygon()?;
        let b = random_box(&mut rng, 10.0).to_polygon()?;
        iou_err = iou_err.max((polygon_iou(&a, &b)? - monte_carlo_iou(&a, &b, 1_000_000, &mut rng)).abs());
    }
    let sq = |x0: f64| {
        Polygon::new(vec![
            Point::new(x0, 0.0),
            Point::new(x0 + 1.0, 0.0),
            Point::new(x0 + 1.0, 1.0),
            Point::new(x0, 1.0),
        ])
    };
    let third = polygon_iou(&sq(0.0)?, &sq(0.5)?)?;
    let mut hull_ok = 0;
    for trial in 0..1000 {
        let pts = random_points(3 + trial % 50, 10.0, &mut rng);
        let key = |p: &Point| (p.x, p.y);
        let mut got = convex_hull(&pts)?.vertices().to_vec();
        let mut want = brute_force_hull(&pts);
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        hull_ok += usize::from(got == want);
    }
    let ok = rect_err < 1e-6 && iou_err < 1e-2 && third == 1.0 / 3.0 && hull_ok == 1000;
    Ok((
        ok,
        format!(
            "min_area_rect rel. error {rect_err:.1e} (200 hulls); IoU vs 10^6-sample Monte Carlo {iou_err:.1e}; \
             half-shifted squares IoU {third}; hull equals brute force on {hull_ok}/1000 sets"
        ),
    ))
}

fn param_efficiency() -> Outcome {
    let cfg = DetectorConfig::default();
    let full = Detector::new(cfg.clone(), 0)?.summary();
    let base = Detector::new(cfg.baseline(), 0)?.summary();
    let ratio = full.total as f64 / base.total as f64;
    Ok((
        ratio <= 0.30,
        format!(
            "C{} detector {} parameters vs channel-matched baseline {} ({:.1}%)",
            cfg.n,
            full.total,
            base.total,
            100.0 * ratio
        ),
    ))
}

/// Training protocol shared by the experiment criteria.
fn protocol(detector: DetectorConfig, seed: u64, scene: SceneConfig) -> TrainConfig {
    TrainConfig {
        detector,
        data: DatasetSpec {
            seed: 0,
            count: 128,
            scene,
        },
        seed,
        epochs: 50,
        lr_steps: vec![34, 45],
        ..TrainConfig::default()
    }
}

fn test_set(scene: SceneConfig) -> Result<Vec<SyntheticScene>, equikit::Error> {
    DatasetSpec {
        seed: 1_000_000,
        count: 48,
        scene,
    }
    .generate()
}

#[derive(Serialize)]
struct AblationRun {
    preset: &'static str,
    seed: u64,
    final_loss: f64,
    ap50: f64,
    ap75: f64,
    edge_concentration: f64,
    train_seconds: f64,
}

const PRESETS: [&str; 5] = ["full", "oa", "vector-field", "group-pool", "none"];

fn ablation_runs() -> Result<Vec<AblationRun>, Box<dyn std::error::Error>> {
    let test = test_set(SceneConfig::default())?;
    let mut runs = Vec::new();
    for preset in PRESETS {
        for seed in 0..3 {
            let detector = DetectorConfig {
                ablation: Ablation::preset(preset).ok_or("preset")?,
                ..DetectorConfig::default()
            };
            let t = Instant::now();
            let out = train(&protocol(detector, seed, SceneConfig::default()), |_| {})?;
            let train_seconds = t.elapsed().as_secs_f64();
            let m = evaluate(&out.model, &test, 0.0)?;
            let run = AblationRun {
                preset,
                seed,
                final_loss: out.history.last().map(|h| h.loss).unwrap_or(f64::NAN),
                ap50: m.ap50,
                ap75: m.ap75,
                edge_concentration: edge_concentration(&out.model, &test, 2.0)?,
                train_seconds,
            };
            println!(
                "    {preset:>12} seed {seed}: AP50 {:.3} AP75 {:.3} edge@2px {:.3} loss {:.4} ({:.0} s)",
                run.ap50, run.ap75, run.edge_concentration, run.final_loss, run.train_seconds
            );
            runs.push(run);
        }
    }
    write_json("ablation.json", &runs);
    Ok(runs)
}

fn mean_of(runs: &[AblationRun], preset: &str, f: impl Fn(&AblationRun) -> f64) -> f64 {
    let v: Vec<f64> = runs.iter().filter(|r| r.preset == preset).map(f).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn edge_constraint(runs: &[AblationRun]) -> Outcome {
    let on = mean_of(runs, "full", |r| r.edge_concentration);
    let off = mean_of(runs, "oa", |r| r.edge_concentration);
    Ok((
        on >= 0.9 && off < 0.5,
        format!(
            "point 0 within 2 px of a gt edge midpoint: {:.1}% of held-out positives with the constraint, {:.1}% without (means over 3 seeds)",
            100.0 * on,
            100.0 * off
        ),
    ))
}

fn ablation_order(runs: &[AblationRun]) -> Outcome {
    let means: Vec<f64> = PRESETS.iter().map(|p| mean_of(runs, p, |r| r.ap50)).collect();
    let ok = means.windows(2).all(|w| w[0] >= w[1] - 0.01);
    let table: Vec<String> = PRESETS.iter().zip(&means).map(|(p, m)| format!("{p} {:.1}", 100.0 * m)).collect();
    Ok((ok, format!("mean AP50 over 3 seeds: {}", table.join(" >= "))))
}

fn rotation_robustness() -> Outcome {
    let t = Instant::now();
    let narrow = SceneConfig {
        min_angle_deg: -22.5,
        max_angle_deg: 22.5,
        ..SceneConfig::default()
    };
    let cfg = DetectorConfig::default();
    let model = train(&protocol(cfg.clone(), 0, narrow.clone()), |_| {})?.model;
    let baseline = train(&protocol(cfg.baseline(), 0, narrow.clone()), |_| {})?.model;
    let test = test_set(narrow)?;
    let rows = rotation_sweep(&model, Some(&baseline), &test, &sweep_angles(5.0))?;
    let secs = t.elapsed().as_secs_f64();
    let _ = std::fs::write(out_dir().join("sweep.csv"), sweep_csv(&rows));
    let at = |a: f64| rows.iter().find(|r| r.angle_deg == a).expect("angle");
    let spread = |sel: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = rows.iter().filter(|r| sel(r.angle_deg)).map(|r| r.map).collect();
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    let quarter = spread(&|a| a % 90.0 == 0.0);
    let all = spread(&|_| true);
    let b0 = at(0.0).baseline_map.unwrap_or(f64::NAN);
    let b45 = at(45.0).baseline_map.unwrap_or(f64::NAN);
    let ok = quarter < 0.01 && all < 0.05 && b0 - b45 > 0.10 && secs < 7200.0;
    Ok((
        ok,
        format!(
            "equivariant mAP {:.1} at 0°, spread {:.2} pts over quarter turns and {:.2} pts over 5° steps; \
             baseline {:.1} at 0° vs {:.1} at 45°; training + sweep {:.0} s",
            100.0 * at(0.0).map,
            100.0 * quarter,
            100.0 * all,
            100.0 * b0,
            100.0 * b45,
            secs
        ),
    ))
}

fn report(id: usize, name: &str, outcome: Outcome, passed: &mut usize) {
    let line = match outcome {
        Ok((true, d)) => {
            *passed += 1;
            format!("PASS  {d}")
        }
        Ok((false, d)) => format!("FAIL  {d}"),
        Err(e) => format!("FAIL  error: {e}"),
    };
    println!("criterion {id} [{name}] {line}");
}

fn main() {
    let skip_training = std::env::var("EQUIKIT_ACCEPTANCE_SKIP_TRAINING").is_ok_and(|v| !v.is_empty() && v != "0");
    let mut passed = 0;
    let mut total = 0;
    let mut run = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        total += 1;
        report(id, name, f(), &mut passed);
    };
    run(1, "exact C4 equivariance", &exact_c4);
    run(2, "approximate C8 equivariance", &approx_c8);
    run(3, "strided-conv regression", &strided);
    run(4, "gradient suite", &gradients);
    run(5, "geometry oracles", &geometry);
    if skip_training {
        for (id, name) in [(6, "edge constraint"), (7, "rotation robustness"), (8, "ablation ordering")] {
            println!("criterion {id} [{name}] SKIP  EQUIKIT_ACCEPTANCE_SKIP_TRAINING is set");
        }
    } else {
        println!("  training 5 ablation presets x 3 seeds");
        match ablation_runs() {
            Ok(runs) => {
                run(6, "edge constraint", &|| edge_constraint(&runs));
                run(7, "rotation robustness", &rotation_robustness);
                run(8, "ablation ordering", &|| ablation_order(&runs));
            }
            Err(e) => {
                let msg = e.to_string();
                run(6, "edge constraint", &|| Err(msg.clone().into()));
                run(7, "rotation robustness", &rotation_robustness);
                run(8, "ablation ordering", &|| Err(msg.clone().into()));
            }
        }
    }
    run(9, "parameter efficiency", &param_efficiency);
    println!(
        "acceptance: {passed}/{total} criteria passed (artefacts in {})",
        out_dir().display()
    );
}
