use std::f64::consts::FRAC_PI_2;

use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

use super::*;
use crate::geom::Pose;
use crate::model::ArcParams;
use crate::silhouette::threshold;
use crate::synth::{framing_rig, lepton_camera, profile_model, render_scene, NoiseSpec, ProfileKind, SceneSpec};

fn observe(model: FlameModel) -> StereoObservation {
    let rig = framing_rig(&model);
    let spec = SceneSpec::new(model, rig, NoiseSpec::default(), 0).unwrap();
    let (a, b) = render_scene(&spec);
    StereoObservation::new(threshold(&a, 1), threshold(&b, 1), spec.rig.cam1, spec.rig.cam2).unwrap()
}

fn curved_scene() -> (FlameModel, StereoObservation) {
    let arc = ArcParams::arc(0.8, 2.0, 1.2).unwrap();
    let model = profile_model(&arc, ProfileKind::RiseFall, 0.04).unwrap();
    (model.clone(), observe(model))
}

fn straight_scene() -> (FlameModel, StereoObservation) {
    let arc = ArcParams::straight(0.3).unwrap();
    let model = profile_model(&arc, ProfileKind::Constant, 0.03).unwrap();
    (model.clone(), observe(model))
}

fn two_view_count(obs: &StereoObservation, d: f64, theta: f64) -> usize {
    let cfg = EstimatorConfig {
        d,
        theta,
        ..Default::default()
    };
    match_ray_pairs(obs, &cfg).len()
}

#[test]
fn curved_flame_reprojects_in_both_views() {
    let (_, obs) = curved_scene();
    let e = estimate(&obs, &EstimatorConfig::default()).unwrap();
    assert!(e.diagnostics.iou1 >= 0.90 && e.diagnostics.iou2 >= 0.90, "{:?}", e.diagnostics);
}

#[test]
fn straight_flame_estimates_near_zero_bend() {
    let (_, obs) = straight_scene();
    let m = fit_flame(&obs, &EstimatorConfig::default()).unwrap();
    let alpha = match m.arc() {
        ArcParams::Straight { .. } => 0.0,
        ArcParams::Arc { alpha, .. } => *alpha,
    };
    assert!(alpha < 0.05, "alpha {alpha}");
}

#[test]
fn tiny_silhouettes_give_too_few_points() {
    let (_, obs) = curved_scene();
    let dot = |sil: &Silhouette, cam: &CameraModel| {
        let c = cam.project(&Point3::new(0.0, 0.0, 0.2)).unwrap();
        let (x, y) = (c.x.round() as usize, c.y.round() as usize);
        let mut mask = vec![false; sil.width() * sil.height()];
        mask[y * sil.width() + x] = true;
        mask[y * sil.width() + x + 1] = true;
        Silhouette::from_mask(sil.width(), sil.height(), mask).unwrap()
    };
    let tiny = StereoObservation::new(
        dot(&obs.sil1, &obs.cam1),
        dot(&obs.sil2, &obs.cam2),
        obs.cam1.clone(),
        obs.cam2.clone(),
    )
    .unwrap();
    let err = estimate(&tiny, &EstimatorConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InsufficientPoints(n) if n < 3), "{err}");
}

#[test]
fn empty_silhouette_and_zero_baseline_are_rejected() {
    let (_, obs) = curved_scene();
    let empty = StereoObservation {
        sil2: Silhouette::empty(obs.sil2.width(), obs.sil2.height()),
        ..obs.clone()
    };
    assert!(matches!(estimate(&empty, &EstimatorConfig::default()), Err(Error::EmptySilhouette)));
    let same = StereoObservation::new(obs.sil1.clone(), obs.sil1.clone(), obs.cam1.clone(), obs.cam1.clone());
    assert!(matches!(same, Err(Error::DegenerateGeometry(_))));
}

#[test]
fn zero_iterations_return_the_input() {
    let (truth, obs) = curved_scene();
    let cfg = EstimatorConfig {
        refine_iters: 0,
        ..Default::default()
    };
    let out = joint_refine(&truth, &obs, &cfg);
    assert!(!out.improved);
    assert_eq!(out.model.to_file(), truth.to_file());
    assert_eq!(out.objective, out.initial_objective);
}

#[test]
fn refining_a_perturbed_midpoint_never_loses() {
    let (truth, obs) = curved_scene();
    let shifted = ArcMidpoint::new(truth.midpoint().point() + Vector3::new(0.02, 0.0, 0.0)).unwrap();
    let start = FlameModel::from_midpoint(shifted, truth.width().clone(), 64).unwrap();
    let out = joint_refine(&start, &obs, &EstimatorConfig::default());
    assert!((out.initial_objective - refine_objective(&start, &obs)).abs() < 1e-12);
    assert!(out.objective >= out.initial_objective);
    assert!((refine_objective(&out.model, &obs) - out.objective).abs() < 1e-12);
}

#[test]
fn pair_gates_can_exclude_everything() {
    let (_, obs) = curved_scene();
    assert!(two_view_count(&obs, 0.01, 0.35) > 0);
    assert_eq!(two_view_count(&obs, 0.0, 0.35), 0);
    assert_eq!(two_view_count(&obs, 0.01, FRAC_PI_2), 0);
}

#[test]
fn straight_flame_pairs_lie_on_the_surface() {
    let (truth, obs) = straight_scene();
    let cfg = EstimatorConfig::default();
    let pts = recover_two_view_points(&obs, truth.curve(), &cfg);
    assert!(pts.len() > 10);
    for p in &pts.points {
        let f = truth.surface_value(&p.point);
        assert!(f.abs() <= cfg.d, "F = {f} at l = {}", p.l);
    }
}

#[test]
fn side_view_tangent_rays_read_the_true_radius() {
    let (truth, obs) = straight_scene();
    let curve = truth.curve();
    let pts = recover_one_view_points(&obs.sil1, &obs.cam1, curve, &EstimatorConfig::default());
    let interior: Vec<_> = pts.points.iter().filter(|p| p.l > 0.02 && p.l < 0.28).collect();
    assert!(interior.len() > 20);
    // One pixel at the side camera's depth.
    let px = obs.cam1.depth(&Point3::new(0.0, 0.0, 0.15)) / obs.cam1.fx;
    for p in interior {
        assert!((p.w - 0.03).abs() <= px, "w = {} at l = {}", p.w, p.l);
    }
}

#[test]
fn one_view_gate() {
    let (truth, obs) = straight_scene();
    let curve = truth.curve();
    let count = |gamma: f64| {
        let cfg = EstimatorConfig {
            gamma,
            ..Default::default()
        };
        recover_one_view_points(&obs.sil1, &obs.cam1, curve, &cfg).len()
    };
    assert!(count(0.0) >= count(1.0) && count(1.0) >= count(1.47));
    assert_eq!(count(0.0), obs.sil1.edge_points().len() - {
        // Rays whose nearest curve point is an end say nothing about widths.
        let (_, rays) = edge_rays_of(&obs.sil1, &obs.cam1);
        rays.iter()
            .filter(|r| {
                let c = crate::geom::ray_polyline_closest(r, &curve.points).unwrap();
                let (_, l) = curve.params.closest_point(&c.on_ray);
                !(l > 0.0 && l < curve.total_length()) || c.ray_param <= 0.0
            })
            .count()
    });

    // Looking down the flame axis, every ray runs along the tangent.
    let pose = Pose::look_at(&Point3::new(0.0, 0.0, -0.2), &Point3::new(0.0, 0.0, 0.3), &Vector3::x()).unwrap();
    let cam = lepton_camera(pose);
    let sil = reproject_silhouette(&truth, &cam);
    assert!(!sil.is_empty());
    assert_eq!(recover_one_view_points(&sil, &cam, curve, &EstimatorConfig::default()).len(), 0);
}

fn edge_rays_of(sil: &Silhouette, cam: &CameraModel) -> (Vec<crate::geom::Pixel>, Vec<crate::geom::Ray>) {
    let px = sil.edge_points();
    let rays = px.iter().map(|p| cam.backproject(p)).collect();
    (px, rays)
}

#[test]
fn registered_points_sit_on_the_fitted_surface() {
    let (truth, obs) = straight_scene();
    let cfg = EstimatorConfig::default().without_refinement();
    let evidence = BoundaryEvidence::new(&obs, &cfg);
    let (points, width) = fit_on_curve(&evidence, truth.curve(), &cfg).unwrap();
    let model = truth.with_width(width).unwrap();
    for p in &points.points {
        assert!(p.w >= 0.0 && (0.0..=truth.curve().total_length()).contains(&p.l));
        let footprint = 2.0 * obs.cam1.depth(&p.point).max(obs.cam2.depth(&p.point)) / obs.cam1.fx;
        let f = model.surface_value(&p.point);
        assert!(f.abs() <= cfg.d.max(footprint), "F = {f} at l = {}", p.l);
    }
}

#[test]
fn swapping_views_keeps_the_midpoint() {
    let (_, obs) = curved_scene();
    let a = triangulate_midpoint(&obs).unwrap();
    let b = triangulate_midpoint(&obs.swapped()).unwrap();
    assert!((a.point() - b.point()).norm() < 1e-9);
}

#[test]
fn config_rejects_unknown_and_invalid_fields() {
    let ok: EstimatorConfig = serde_json::from_str(r#"{"d": 0.02}"#).unwrap();
    assert_eq!(ok.d, 0.02);
    assert_eq!(ok.refine_iters, 200);
    assert!(serde_json::from_str::<EstimatorConfig>(r#"{"dd": 0.02}"#).is_err());
    let bad = EstimatorConfig {
        gamma: 2.0,
        ..Default::default()
    };
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
}

#[test]
fn line_kind_keeps_the_midpoint_on_the_axis() {
    let (_, obs) = curved_scene();
    let cfg = EstimatorConfig {
        model: ModelKind::Line,
        ..Default::default()
    };
    let m = fit_flame(&obs, &cfg).unwrap();
    assert!(m.is_line_kind());
    let p = m.midpoint();
    assert!(p.point().x == 0.0 && p.point().y == 0.0 && p.point().z > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn looser_pair_gates_match_more(d in 0.001f64..0.02, theta in 0.05f64..0.6) {
        let (_, obs) = curved_scene();
        prop_assert!(two_view_count(&obs, d, theta) <= two_view_count(&obs, 1e3, 1e-6));
    }
}
