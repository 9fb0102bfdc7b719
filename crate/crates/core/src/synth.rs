//! Synthetic ground truth: analytic width profiles, flame models, a Lepton-like
//! two-camera rig and seeded silhouette rendering with optional noise.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{render_mask, PixelRays};
use crate::geom::{CameraModel, Pose, Rig};
use crate::model::{ArcParams, FlameModel, FlameModelFile, Kernel, WidthModel, DEFAULT_CURVE_SAMPLES};
use crate::silhouette::ThermalImage;

pub const LEPTON_WIDTH: usize = 160;
pub const LEPTON_HEIGHT: usize = 120;
pub const LEPTON_HFOV_DEG: f64 = 71.0;
pub const LEPTON_VFOV_DEG: f64 = 56.0;
pub const PROFILE_SAMPLES: usize = 32;
pub const HOT: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    RiseFall,
    Constant,
    Linear,
}

/// `PROFILE_SAMPLES` evenly spaced `(l, w)` samples over `[0, length]`.
pub fn make_profile(kind: ProfileKind, peak_w: f64, length: f64) -> Result<Vec<(f64, f64)>> {
    if !(peak_w > 0.0 && peak_w.is_finite() && length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "profile needs positive peak and length, got {peak_w} and {length}"
        )));
    }
    Ok((0..PROFILE_SAMPLES)
        .map(|i| {
            let u = i as f64 / (PROFILE_SAMPLES - 1) as f64;
            let w = match kind {
                ProfileKind::RiseFall => (peak_w * (PI * u).sin()).max(0.0),
                ProfileKind::Constant => peak_w,
                ProfileKind::Linear => peak_w * u,
            };
            (length * u, w)
        })
        .collect())
}

/// Ground-truth flame: the profile interpolated exactly by the width GP.
pub fn profile_model(arc: &ArcParams, kind: ProfileKind, peak_w: f64) -> Result<FlameModel> {
    let samples = make_profile(kind, peak_w, arc.total_length())?;
    let width = WidthModel::fit(&samples, 0.0, Kernel::default())?;
    FlameModel::from_arc(arc, width, DEFAULT_CURVE_SAMPLES)
}

pub fn lepton_camera(pose: Pose) -> CameraModel {
    CameraModel::from_fov(
        LEPTON_WIDTH,
        LEPTON_HEIGHT,
        LEPTON_HFOV_DEG.to_radians(),
        LEPTON_VFOV_DEG.to_radians(),
        pose,
    )
    .expect("Lepton intrinsics are valid")
}

fn look(eye: Point3<f64>, target: Point3<f64>) -> Pose {
    Pose::look_at(&eye, &target, &Vector3::x()).expect("eye, target and up are not collinear")
}

/// Fixed rig: a side camera 0.5 m from the torch axis and a camera on the
/// end effector 0.15 m behind the nozzle, looking along the torch.
pub fn default_rig() -> Rig {
    Rig {
        cam1: lepton_camera(look(Point3::new(0.0, -0.5, 0.25), Point3::new(0.0, 0.0, 0.25))),
        cam2: lepton_camera(look(Point3::new(0.03, -0.03, -0.15), Point3::new(0.0, 0.0, 0.5))),
    }
}

/// The default rig adapted to the flame's extent so the whole flame is in
/// frame: the side camera backs off from 0.5 m as needed, and the end-effector
/// camera retreats along the torch axis from 0.15 m behind the nozzle.
pub fn framing_rig(model: &FlameModel) -> Rig {
    let w = model.max_width();
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &model.curve().points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    lo -= Vector3::repeat(w);
    hi += Vector3::repeat(w);
    let mid = nalgebra::center(&lo, &hi);
    let (tan_h, tan_v) = (
        (0.5 * LEPTON_HFOV_DEG.to_radians()).tan(),
        (0.5 * LEPTON_VFOV_DEG.to_radians()).tan(),
    );
    let margin = 0.05;
    // Image x runs along Z, image y along X for this orientation.
    let fit = ((0.5 * (hi.z - lo.z) + margin) / tan_h).max((0.5 * (hi.x - lo.x) + margin) / tan_v);
    let dist = fit.max(0.5);
    let eye1 = Point3::new(mid.x, lo.y - dist, mid.z);
    let cam1 = lepton_camera(look(eye1, mid));

    let corners: Vec<Point3<f64>> = model
        .curve()
        .points
        .iter()
        .flat_map(|p| {
            [Vector3::x(), Vector3::y(), Vector3::z()]
                .into_iter()
                .flat_map(move |e| [p + e * w, p - e * w])
        })
        .collect();
    let in_frame = |cam: &CameraModel| {
        corners.iter().all(|c| {
            cam.project(c).is_ok_and(|px| {
                px.x >= 2.0 && px.y >= 2.0 && px.x <= cam.width as f64 - 3.0 && px.y <= cam.height as f64 - 3.0
            })
        })
    };
    let mut back = 0.15;
    let mut cam2 = lepton_camera(look(Point3::new(0.03, -0.03, -back), mid));
    for _ in 0..40 {
        if in_frame(&cam2) {
            break;
        }
        back *= 1.15;
        cam2 = lepton_camera(look(Point3::new(0.03, -0.03, -back), mid));
    }
    Rig { cam1, cam2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Probability that a flame pixel reads cold.
    #[serde(default)]
    pub pixel_dropout: f64,
    /// Standard deviation of the per-pixel sample position, in pixels.
    #[serde(default)]
    pub boundary_jitter: f64,
    /// Number of small spurious hot blobs per image.
    #[serde(default)]
    pub hot_clutter: usize,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pixel_dropout) {
            return Err(Error::InvalidConfig(format!(
                "pixel_dropout = {} outside [0, 1]",
                self.pixel_dropout
            )));
        }
        if !(self.boundary_jitter >= 0.0 && self.boundary_jitter.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "boundary_jitter = {} must be finite and >= 0",
                self.boundary_jitter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub model: FlameModel,
    pub rig: Rig,
    pub noise: NoiseSpec,
    pub seed: u64,
}

/// JSON form of a scene. Without a rig, [`framing_rig`] is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub model: FlameModelFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rig: Option<Rig>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(model: FlameModel, rig: Rig, noise: NoiseSpec, seed: u64) -> Result<Self> {
        noise.validate()?;
        Ok(Self { model, rig, noise, seed })
    }

    pub fn from_file(f: &SceneFile) -> Result<Self> {
        let model = FlameModel::from_file(&f.model)?;
        let rig = f.rig.clone().unwrap_or_else(|| framing_rig(&model));
        Self::new(model, rig, f.noise, f.seed)
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            model: self.model.to_file(),
            rig: Some(self.rig.clone()),
            noise: self.noise,
            seed: self.seed,
        }
    }
}

fn render_view(spec: &SceneSpec, cam: &CameraModel, stream: u64) -> ThermalImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let noise = &spec.noise;
    let rays = if noise.boundary_jitter > 0.0 {
        let normal = Normal::new(0.0, noise.boundary_jitter).expect("validated std");
        PixelRays::with_offsets(cam, |_, _| (normal.sample(&mut rng), normal.sample(&mut rng)))
    } else {
        PixelRays::new(cam)
    };
    let mut mask = vec![false; rays.len()];
    render_mask(&spec.model, &rays, &mut mask);

    if noise.pixel_dropout > 0.0 {
        for m in mask.iter_mut().filter(|m| **m) {
            if rng.random::<f64>() < noise.pixel_dropout {
                *m = false;
            }
        }
    }
    for _ in 0..noise.hot_clutter {
        let cx = rng.random_range(0..cam.width) as isize;
        let cy = rng.random_range(0..cam.height) as isize;
        let r = rng.random_range(1..=2i64) as isize;
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let inside = (x - cx).pow(2) + (y - cy).pow(2) <= r * r;
                if inside && (0..cam.width as isize).contains(&x) && (0..cam.height as isize).contains(&y) {
                    mask[y as usize * cam.width + x as usize] = true;
                }
            }
        }
    }
    let data = mask.iter().map(|&m| if m { HOT } else { 0 }).collect();
    ThermalImage::new(cam.width, cam.height, data).expect("sized to camera")
}

/// Binary thermal images (0 or 65535) of the scene in both cameras.
pub fn render_scene(spec: &SceneSpec) -> (ThermalImage, ThermalImage) {
    (render_view(spec, &spec.rig.cam1, 1), render_view(spec, &spec.rig.cam2, 2))
}

/// One cell of the evaluation grid.
#[derive(Debug, Clone)]
pub struct GridScene {
    pub alpha: f64,
    pub beta: f64,
    pub radius: f64,
    pub peak_width: f64,
    pub spec: SceneSpec,
}

pub const GRID_ALPHAS: [f64; 4] = [0.1, 0.4, 0.8, 1.2];
pub const GRID_RADII: [f64; 3] = [0.6, 1.2, 2.0];

/// `count` scenes cycling through every (alpha, radius) pair with rise-fall
/// widths peaking between 0.02 m and 0.06 m and seeded bend directions.
pub fn scene_grid(count: usize, noise: NoiseSpec, seed: u64) -> Result<Vec<GridScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let alpha = GRID_ALPHAS[i % GRID_ALPHAS.len()];
            let radius = GRID_RADII[i % GRID_RADII.len()];
            let peak_width = 0.02 + 0.01 * (i % 5) as f64;
            let beta = rng.random_range(0.0..TAU);
            let arc = ArcParams::arc(alpha, beta, radius)?;
            let model = profile_model(&arc, ProfileKind::RiseFall, peak_width)?;
            let rig = framing_rig(&model);
            let spec = SceneSpec::new(model, rig, noise, seed.wrapping_add(i as u64))?;
            Ok(GridScene {
                alpha,
                beta,
                radius,
                peak_width,
                spec,
            })
        })
        .collect()
}
