//! Flame estimation from a calibrated silhouette pair.
//!
//! Pipeline: triangulate the arc midpoint from the silhouette centroids,
//! sample the center curve, register surface points from ray pairs and from
//! single rays tangent to the surface, fit the width GP, and optionally refine
//! midpoint and widths against the reprojection IoU.

mod inscribed;
mod points;
mod refine;
mod render;
mod triangulate;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::CameraModel;
use crate::model::{
    ArcMidpoint, ArcParams, CenterCurve, FlameModel, FlameModelFile, Kernel, KernelKind, ModelKind, WidthModel,
    DEFAULT_LENGTH_SCALE, DEFAULT_SIGMA_F, DEFAULT_SIGMA_N, DEFAULT_STRAIGHT_EPS,
};
use crate::silhouette::Silhouette;

pub use points::{
    fundamental_matrix, match_ray_pairs, recover_one_view_points, recover_two_view_points,
    BoundaryEvidence, PointSource, SurfacePoint, SurfacePointSet, POINT_BINS,
};
pub use refine::{joint_refine, refine_objective, RefineOutcome};
pub use render::{render_mask, reproject_silhouette, PixelRays};
pub use triangulate::{
    triangulate_axis_depth, triangulate_axis_pixels, triangulate_midpoint, triangulate_pixels,
};

/// Two silhouettes of the same flame with their calibrations in `{H}`.
#[derive(Debug, Clone)]
pub struct StereoObservation {
    pub sil1: Silhouette,
    pub sil2: Silhouette,
    pub cam1: CameraModel,
    pub cam2: CameraModel,
}

pub const MIN_BASELINE: f64 = 1e-6;

impl StereoObservation {
    pub fn new(sil1: Silhouette, sil2: Silhouette, cam1: CameraModel, cam2: CameraModel) -> Result<Self> {
        for (s, c) in [(&sil1, &cam1), (&sil2, &cam2)] {
            if s.width() != c.width || s.height() != c.height {
                return Err(Error::DimensionMismatch(s.width(), s.height(), c.width, c.height));
            }
        }
        let baseline = (cam1.center() - cam2.center()).norm();
        if baseline <= MIN_BASELINE {
            return Err(Error::DegenerateGeometry(format!(
                "camera baseline {baseline:.3e} m"
            )));
        }
        Ok(Self { sil1, sil2, cam1, cam2 })
    }

    pub fn view(&self, index: usize) -> (&Silhouette, &CameraModel) {
        match index {
            1 => (&self.sil1, &self.cam1),
            2 => (&self.sil2, &self.cam2),
            _ => panic!("view index {index} out of range"),
        }
    }

    /// The same observation with the views exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            sil1: self.sil2.clone(),
            sil2: self.sil1.clone(),
            cam1: self.cam2.clone(),
            cam2: self.cam1.clone(),
        }
    }
}

fn default_d() -> f64 {
    0.01
}
fn default_theta() -> f64 {
    0.35
}
fn default_gamma() -> f64 {
    1.47
}
fn default_true() -> bool {
    true
}
fn default_refine_iters() -> usize {
    200
}
fn default_samples() -> usize {
    64
}
fn default_straight_eps() -> f64 {
    DEFAULT_STRAIGHT_EPS
}
fn default_nozzle_radius() -> f64 {
    0.005
}
fn default_sigma_n() -> f64 {
    DEFAULT_SIGMA_N
}
fn default_sigma_f() -> f64 {
    DEFAULT_SIGMA_F
}
fn default_kernel() -> KernelKind {
    KernelKind::ThinPlate
}
fn default_length_scale() -> f64 {
    DEFAULT_LENGTH_SCALE
}
fn default_knots() -> usize {
    8
}
fn default_model() -> ModelKind {
    ModelKind::Arc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Maximum ray-pair distance for a two-view match, meters.
    #[serde(default = "default_d")]
    pub d: f64,
    /// Minimum angle between matched rays, radians.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Minimum angle between a one-view ray and the curve tangent, radians.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_true")]
    pub refine: bool,
    #[serde(default = "default_refine_iters")]
    pub refine_iters: usize,
    /// Center-curve polyline samples.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_straight_eps")]
    pub straight_eps: f64,
    /// Width pinned at the nozzle (l = 0); zero disables the anchor.
    #[serde(default = "default_nozzle_radius")]
    pub nozzle_radius: f64,
    #[serde(default = "default_sigma_n")]
    pub sigma_n: f64,
    #[serde(default = "default_sigma_f")]
    pub sigma_f: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_length_scale")]
    pub length_scale: f64,
    /// Width knots optimized during refinement.
    #[serde(default = "default_knots")]
    pub knots: usize,
    /// `line` forces the straight baseline with the midpoint on the torch axis.
    #[serde(default = "default_model")]
    pub model: ModelKind,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            d: default_d(),
            theta: default_theta(),
            gamma: default_gamma(),
            refine: true,
            refine_iters: default_refine_iters(),
            samples: default_samples(),
            straight_eps: default_straight_eps(),
            nozzle_radius: default_nozzle_radius(),
            sigma_n: default_sigma_n(),
            sigma_f: default_sigma_f(),
            kernel: default_kernel(),
            length_scale: default_length_scale(),
            knots: default_knots(),
            model: default_model(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let nonneg = [
            ("d", self.d),
            ("theta", self.theta),
            ("gamma", self.gamma),
            ("nozzle_radius", self.nozzle_radius),
            ("sigma_n", self.sigma_n),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if self.gamma > FRAC_PI_2 || self.theta > FRAC_PI_2 {
            return bad("gamma and theta must not exceed pi/2".into());
        }
        if !(self.straight_eps > 0.0 && self.straight_eps < 1.0) {
            return bad(format!("straight_eps = {} outside (0, 1)", self.straight_eps));
        }
        if self.samples < 2 {
            return bad(format!("samples = {} (need >= 2)", self.samples));
        }
        if self.knots == 0 {
            return bad("knots must be positive".into());
        }
        self.width_kernel().validate()
    }

    pub fn width_kernel(&self) -> Kernel {
        Kernel {
            kind: self.kernel,
            sigma_f: self.sigma_f,
            length_scale: self.length_scale,
        }
    }

    pub fn fit_widths(&self, samples: &[(f64, f64)]) -> Result<WidthModel> {
        WidthModel::fit(samples, self.sigma_n, self.width_kernel())
    }

    pub fn without_refinement(&self) -> Self {
        Self {
            refine: false,
            ..self.clone()
        }
    }
}

/// Summary written next to the model in the estimation JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_two_view: usize,
    pub n_one_view: usize,
    pub iou1: f64,
    pub iou2: f64,
    pub refined: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateFile {
    #[serde(flatten)]
    pub model: FlameModelFile,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub model: FlameModel,
    /// Model before refinement.
    pub initial: FlameModel,
    pub points: SurfacePointSet,
    pub refinement: Option<RefineOutcome>,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    pub fn to_file(&self) -> EstimateFile {
        EstimateFile {
            model: self.model.to_file(),
            diagnostics: self.diagnostics,
        }
    }
}

/// Midpoint and curve for the configured model kind.
fn initial_arc(obs: &StereoObservation, cfg: &EstimatorConfig) -> Result<(ArcParams, Option<ArcMidpoint>)> {
    match cfg.model {
        ModelKind::Arc => {
            let m = triangulate_midpoint(obs)?;
            Ok((ArcParams::from_midpoint(&m, cfg.straight_eps)?, Some(m)))
        }
        ModelKind::Line => {
            let z = triangulate_axis_depth(obs)?;
            Ok((ArcParams::straight(2.0 * z)?, None))
        }
    }
}

/// Runs the full pipeline and keeps the intermediate products.
pub fn estimate(obs: &StereoObservation, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    if obs.sil1.is_empty() || obs.sil2.is_empty() {
        return Err(Error::EmptySilhouette);
    }
    let (arc, midpoint) = initial_arc(obs, cfg)?;
    let curve = arc.sample(cfg.samples)?;
    let evidence = BoundaryEvidence::new(obs, cfg);
    let (points, width) = fit_on_curve(&evidence, &curve, cfg)?;
    let initial = match midpoint {
        Some(m) => FlameModel::from_midpoint(m, width, cfg.samples)?,
        None => FlameModel::line(arc.total_length(), width, cfg.samples)?,
    };

    let (model, refinement) = if cfg.refine {
        let out = joint_refine(&initial, obs, cfg);
        (out.model.clone(), Some(out))
    } else {
        (initial.clone(), None)
    };

    let iou1 = view_iou(&model, &obs.sil1, &obs.cam1);
    let iou2 = view_iou(&model, &obs.sil2, &obs.cam2);
    let diagnostics = Diagnostics {
        n_two_view: points.count(PointSource::TwoView),
        n_one_view: points.count(PointSource::OneView),
        iou1,
        iou2,
        refined: refinement.as_ref().is_some_and(|r| r.improved),
    };
    Ok(Estimate {
        model,
        initial,
        points,
        refinement,
        diagnostics,
    })
}

/// Surface points registered against `curve` and the width GP fitted to them,
/// with the nozzle anchor when configured.
pub fn fit_on_curve(
    evidence: &BoundaryEvidence,
    curve: &CenterCurve,
    cfg: &EstimatorConfig,
) -> Result<(SurfacePointSet, WidthModel)> {
    let points = evidence.surface_points(curve);
    if points.len() < 3 {
        return Err(Error::InsufficientPoints(points.len()));
    }
    let mut samples = points.width_samples();
    if cfg.nozzle_radius > 0.0 {
        samples.push((0.0, cfg.nozzle_radius));
    }
    let width = cfg.fit_widths(&samples)?;
    Ok((points, width))
}

pub fn fit_flame(obs: &StereoObservation, cfg: &EstimatorConfig) -> Result<FlameModel> {
    estimate(obs, cfg).map(|e| e.model)
}

/// Reprojection IoU of `model` against an observed silhouette.
pub fn view_iou(model: &FlameModel, sil: &Silhouette, cam: &CameraModel) -> f64 {
    let rays = PixelRays::new(cam);
    let mut mask = vec![false; rays.len()];
    render_mask(model, &rays, &mut mask);
    crate::silhouette::iou_of_masks(&mask, sil.mask())
}

#[cfg(test)]
mod tests;
