//! Acceptance criteria, one PASS/FAIL line each. The criteria run in one test
//! so the wall-clock budgets are not shared with other tests.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flamesurf::estimate::{
    estimate, fit_flame, joint_refine, triangulate_pixels, EstimatorConfig, StereoObservation,
};
use flamesurf::eval::{compare_models, evaluate_manifest, Baseline, EvalOptions, Frame, Label, Manifest, ManifestFrame};
use flamesurf::geom::{CameraModel, Pixel, Pose, Rig};
use flamesurf::model::{arc_from_midpoint, midpoint_from_arc, ArcMidpoint, ArcParams, FlameModel, Kernel, WidthModel};
use flamesurf::silhouette::{threshold, write_pgm16};
use flamesurf::synth::{render_scene, scene_grid, GridScene, NoiseSpec, HOT};

const T: u16 = HOT / 2 + 1;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn observe(g: &GridScene) -> StereoObservation {
    let (a, b) = render_scene(&g.spec);
    let rig = &g.spec.rig;
    StereoObservation::new(threshold(&a, T), threshold(&b, T), rig.cam1, rig.cam2).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn parameterization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (alpha, beta, r) = (rng.random_range(0.05..=PI), rng.random_range(-PI..PI), rng.random_range(0.05..=10.0));
        let p = ArcParams::arc(alpha, beta, r).unwrap();
        match arc_from_midpoint(&midpoint_from_arc(&p)).unwrap() {
            ArcParams::Arc { alpha: a, beta: b, radius: s } => {
                // Headings compare on the circle; the error is relative to pi.
                let db = (b - beta + PI).rem_euclid(2.0 * PI) - PI;
                worst = worst.max(rel(a, alpha)).max(rel(s, r)).max(db.abs() / PI);
            }
            ArcParams::Straight { .. } => worst = f64::INFINITY,
        }
    }
    let t = start.elapsed();
    Verdict {
        name: "parameterization round-trip",
        pass: worst <= 1e-9 && t < Duration::from_secs(1),
        detail: format!("max relative error {worst:.2e}, {t:.2?}"),
    }
}

fn camera(eye: Point3<f64>, target: Point3<f64>) -> CameraModel {
    let pose = Pose::look_at(&eye, &target, &Vector3::x()).unwrap();
    CameraModel::from_fov(160, 120, 71f64.to_radians(), 56f64.to_radians(), pose).unwrap()
}

fn triangulation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let start = Instant::now();
    let target = Point3::new(0.0, 0.0, 0.3);
    // Both cameras 0.4 m from the target, 60 degrees apart about the X axis.
    let at = |deg: f64| {
        let a = f64::to_radians(deg);
        target + Vector3::new(0.0, -a.cos(), a.sin()) * 0.4
    };
    let (c1, c2) = (camera(at(0.0), target), camera(at(60.0), target));
    let mut exact: f64 = 0.0;
    let mut noisy = Vec::new();
    for _ in 0..100 {
        let x = target + Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let (p1, p2) = (c1.project(&x).unwrap(), c2.project(&x).unwrap());
        exact = exact.max((triangulate_pixels(&c1, &p1, &c2, &p2).unwrap() - x).norm());
        let mut jitter = |p: Pixel| Pixel::new(p.x + rng.random_range(-0.5..0.5), p.y + rng.random_range(-0.5..0.5));
        let (q1, q2) = (jitter(p1), jitter(p2));
        noisy.push((triangulate_pixels(&c1, &q1, &c2, &q2).unwrap() - x).norm());
    }
    noisy.sort_by(f64::total_cmp);
    let median = noisy[noisy.len() / 2];
    let t = start.elapsed();
    Verdict {
        name: "triangulation",
        pass: exact <= 1e-6 && median < 5e-3 && t < Duration::from_secs(1),
        detail: format!("exact max {exact:.2e} m, noisy median {:.2} mm, {t:.2?}", median * 1e3),
    }
}

fn interpolation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..20);
        let mut ls: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
        ls.sort_by(f64::total_cmp);
        ls.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let samples: Vec<(f64, f64)> = ls.iter().map(|&l| (l, rng.random_range(0.0..0.08))).collect();
        let gp = WidthModel::fit(&samples, 0.0, Kernel::default()).unwrap();
        for &(l, w) in &samples {
            worst = worst.max((gp.mean(l) - w).abs());
        }
    }
    Verdict {
        name: "width interpolation",
        pass: worst <= 1e-7,
        detail: format!("max error {worst:.2e} m"),
    }
}

struct GridRun {
    ious: Vec<f64>,
    elapsed: Duration,
    slowest: Duration,
}

fn run_grid(grid: &[GridScene], cfg: &EstimatorConfig) -> GridRun {
    let start = Instant::now();
    let mut ious = Vec::new();
    let mut slowest = Duration::ZERO;
    for g in grid {
        let obs = observe(g);
        let t = Instant::now();
        match estimate(&obs, cfg) {
            Ok(e) => {
                slowest = slowest.max(t.elapsed());
                ious.extend([e.diagnostics.iou1, e.diagnostics.iou2]);
            }
            Err(_) => ious.extend([0.0, 0.0]),
        }
    }
    GridRun {
        ious,
        elapsed: start.elapsed(),
        slowest,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn round_trip(clean: &GridRun, jitter: &GridRun) -> Verdict {
    let total = clean.elapsed + jitter.elapsed;
    let (m, lo, mj) = (mean(&clean.ious), min(&clean.ious), mean(&jitter.ious));
    Verdict {
        name: "render-estimate round-trip",
        pass: m >= 0.90 && lo >= 0.85 && mj >= 0.80 && total < Duration::from_secs(120),
        detail: format!("noise-free mean {m:.3} min {lo:.3}; 1 px jitter mean {mj:.3}; {total:.1?}"),
    }
}

fn timing(grid: &[GridScene], refined: &GridRun) -> Verdict {
    let cfg = EstimatorConfig::default().without_refinement();
    let mut slowest = Duration::ZERO;
    for g in grid {
        let obs = observe(g);
        let t = Instant::now();
        let _ = fit_flame(&obs, &cfg);
        slowest = slowest.max(t.elapsed());
    }
    Verdict {
        name: "fit time",
        pass: slowest < Duration::from_millis(100) && refined.slowest < Duration::from_secs(2),
        detail: format!("slowest without refinement {slowest:.1?}, with {:.1?}", refined.slowest),
    }
}

fn frames(grid: &[GridScene]) -> Vec<Frame> {
    grid.iter()
        .enumerate()
        .map(|(i, g)| Frame {
            id: format!("scene{i:02}"),
            label: Label::from_alpha(g.alpha),
            obs: observe(g),
        })
        .collect()
}

fn ordering(grid: &[GridScene]) -> Verdict {
    let opts = EvalOptions {
        baseline: Baseline::Both,
        ..Default::default()
    };
    let report = compare_models(&frames(grid), &EstimatorConfig::default(), &opts).unwrap();
    let get = |kind: &str, group: &str| report.summary.map[kind].get(group).copied().unwrap_or(f64::NAN);
    let curved = get("arc", "strong-wind") - get("straight", "strong-wind");
    let flat = get("arc", "light-wind") - get("straight", "light-wind");
    Verdict {
        name: "arc beats straight baseline",
        pass: curved >= 0.03 && flat.abs() <= 0.03,
        detail: format!(
            "curved arc {:.3} vs straight {:.3}; near-straight arc {:.3} vs straight {:.3}",
            get("arc", "strong-wind"),
            get("straight", "strong-wind"),
            get("arc", "light-wind"),
            get("straight", "light-wind")
        ),
    }
}

fn monotone(grid: &[GridScene]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = EstimatorConfig::default();
    let mut held = 0;
    let mut worst = f64::INFINITY;
    for g in grid {
        let obs = observe(g);
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let m = g.spec.model.midpoint();
        let shifted = ArcMidpoint::new(m.point() + dir.normalize() * 0.02).unwrap();
        let start = FlameModel::from_midpoint(shifted, g.spec.model.width().clone(), 64).unwrap();
        let out = joint_refine(&start, &obs, &cfg);
        let gain = out.objective - out.initial_objective;
        worst = worst.min(gain);
        held += usize::from(gain >= 0.0);
    }
    Verdict {
        name: "refinement never degrades",
        pass: held == grid.len(),
        detail: format!("{held}/{} runs, smallest gain {worst:.4}", grid.len()),
    }
}

fn determinism(grid: &[GridScene]) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let rig: Rig = grid[0].spec.rig;
    rig.save(&dir.path().join("rig.json")).unwrap();
    // Frames share one rig, so reuse the first scene's cameras.
    let mut entries = Vec::new();
    for (i, g) in grid.iter().take(4).enumerate() {
        let mut spec = g.spec.clone();
        spec.rig = rig;
        let (a, b) = render_scene(&spec);
        let (p1, p2) = (format!("f{i}_1.pgm"), format!("f{i}_2.pgm"));
        write_pgm16(&dir.path().join(&p1), &a).unwrap();
        write_pgm16(&dir.path().join(&p2), &b).unwrap();
        entries.push(ManifestFrame {
            id: format!("f{i}"),
            img1: p1.into(),
            img2: p2.into(),
            label: Label::from_alpha(g.alpha),
        });
    }
    let manifest = Manifest {
        rig: Some("rig.json".into()),
        threshold: Some(T),
        frames: entries,
    };
    let opts = EvalOptions {
        jobs: 2,
        ..Default::default()
    };
    let run = |out: &str| {
        let r = evaluate_manifest(&manifest, dir.path(), None, None, &EstimatorConfig::default(), &opts).unwrap();
        let out = dir.path().join(out);
        r.write(&out).unwrap();
        (std::fs::read(out.join("report.csv")).unwrap(), std::fs::read(out.join("summary.json")).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    Verdict {
        name: "evaluation determinism",
        pass: a == b && !a.0.is_empty(),
        detail: format!("{} CSV bytes, {} JSON bytes", a.0.len(), a.1.len()),
    }
}

#[test]
fn acceptance_criteria() {
    let clean_grid = scene_grid(30, NoiseSpec::default(), 1).unwrap();
    let jitter = NoiseSpec {
        boundary_jitter: 1.0,
        ..Default::default()
    };
    let jitter_grid = scene_grid(30, jitter, 1).unwrap();
    let cfg = EstimatorConfig::default();
    let clean = run_grid(&clean_grid, &cfg);
    let noisy = run_grid(&jitter_grid, &cfg);

    let verdicts = [
        parameterization(),
        triangulation(),
        interpolation(),
        round_trip(&clean, &noisy),
        ordering(&clean_grid),
        monotone(&clean_grid),
        timing(&clean_grid, &clean),
        determinism(&clean_grid),
    ];
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
