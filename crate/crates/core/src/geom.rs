//! Frames, pinhole projection, rays and closest-point queries.
//!
//! Every 3D quantity lives in the torch nozzle frame `{H}`: origin at the
//! nozzle center, `+Z` along the nozzle. A [`Pose`] maps `{H}` into a camera
//! frame (`p_cam = R p + t`). Pixels use the raster convention: origin at the
//! top-left pixel center, `x` right, `y` down.

use std::path::Path;

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Pixel = Point2<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;
const MIN_DEPTH: f64 = 1e-9;
const PARALLEL_ANGLE: f64 = 1e-9;

/// Rigid transform from the nozzle frame into a camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !ortho.is_finite() || ortho > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!("det(R) = {det}, expected +1")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera placed at `eye` looking at `target`; `up` fixes the roll so that
    /// image `y` (down) points against it.
    pub fn look_at(eye: &Point3<f64>, target: &Point3<f64>, up: &Vector3<f64>) -> Result<Self> {
        let z = target - eye;
        if z.norm() < 1e-12 {
            return Err(Error::InvalidPose("eye and target coincide".into()));
        }
        let z = z.normalize();
        let up_perp = up - z * up.dot(&z);
        if up_perp.norm() < 1e-9 {
            return Err(Error::InvalidPose("up vector is parallel to the view axis".into()));
        }
        let y = -up_perp.normalize();
        let x = y.cross(&z);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye.coords);
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Camera center expressed in `{H}`: `-Rᵀ t`.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }
}

/// Pinhole camera with its pose relative to the nozzle frame. No distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraFile", into = "CameraFile")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: Pose,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be non-zero".into()));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Camera from horizontal/vertical field of view (radians) with the
    /// principal point at the image center.
    pub fn from_fov(width: usize, height: usize, hfov: f64, vfov: f64, pose: Pose) -> Result<Self> {
        let fx = 0.5 * width as f64 / (0.5 * hfov).tan();
        let fy = 0.5 * height as f64 / (0.5 * vfov).tan();
        let cx = 0.5 * (width as f64 - 1.0);
        let cy = 0.5 * (height as f64 - 1.0);
        Self::new(fx, fy, cx, cy, width, height, pose)
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn center(&self) -> Point3<f64> {
        self.pose.center()
    }

    /// Depth of `p` along the optical axis.
    pub fn depth(&self, p: &Point3<f64>) -> f64 {
        self.pose.transform(p).z
    }

    /// Projects a point of `{H}` into the image. The pixel may fall outside
    /// the raster.
    pub fn project(&self, p: &Point3<f64>) -> Result<Pixel> {
        let pc = self.pose.transform(p);
        if pc.z <= MIN_DEPTH {
            return Err(Error::BehindCamera(pc.z));
        }
        Ok(Pixel::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// Ray from the camera center through `px`, expressed in `{H}`.
    pub fn backproject(&self, px: &Pixel) -> Ray {
        let d_cam = Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0);
        let dir = self.pose.rotation().transpose() * d_cam;
        Ray::new(self.center(), dir)
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`; it must be non-zero.
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    pub fn at(&self, s: f64) -> Point3<f64> {
        self.origin + self.direction * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayRayClosest {
    pub on_a: Point3<f64>,
    pub on_b: Point3<f64>,
    pub distance: f64,
    /// Acute angle between the two directions, in `[0, π/2]`.
    pub angle: f64,
}

/// Closest points between the two (infinite) lines carrying `a` and `b`.
pub fn ray_ray_closest(a: &Ray, b: &Ray) -> RayRayClosest {
    let cos = a.direction.dot(&b.direction);
    let angle = cos.abs().min(1.0).acos();
    let (on_a, on_b) = if angle < PARALLEL_ANGLE {
        let foot = b.origin + b.direction * (a.origin - b.origin).dot(&b.direction);
        (a.origin, foot)
    } else {
        let w0 = a.origin - b.origin;
        let d = a.direction.dot(&w0);
        let e = b.direction.dot(&w0);
        let denom = 1.0 - cos * cos;
        let sa = (cos * e - d) / denom;
        let sb = (e - cos * d) / denom;
        (a.at(sa), b.at(sb))
    };
    RayRayClosest {
        on_a,
        on_b,
        distance: (on_a - on_b).norm(),
        angle,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCurveClosest {
    pub on_ray: Point3<f64>,
    pub on_curve: Point3<f64>,
    /// Ray parameter of `on_ray` (non-negative).
    pub ray_param: f64,
    pub segment: usize,
    /// Position of `on_curve` inside its segment, in `[0, 1]`.
    pub segment_param: f64,
    pub distance: f64,
}

/// Closest pair between a ray (`s >= 0`) and a segment. Returns `(s, t)`.
pub(crate) fn ray_segment_params(ray: &Ray, q0: &Point3<f64>, q1: &Point3<f64>) -> (f64, f64) {
    let d2 = q1 - q0;
    let r = ray.origin - q0;
    let e = d2.norm_squared();
    let c = ray.direction.dot(&r);
    if e <= f64::EPSILON {
        return ((-c).max(0.0), 0.0);
    }
    let b = ray.direction.dot(&d2);
    let f = d2.dot(&r);
    let denom = e - b * b;
    let mut s = if denom > 1e-14 * e {
        ((b * f - c * e) / denom).max(0.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c).max(0.0);
    } else if t > 1.0 {
        t = 1.0;
        s = (b - c).max(0.0);
    }
    (s, t)
}

/// Closest approach between a ray (forward half only) and a polyline.
pub fn ray_polyline_closest(ray: &Ray, curve: &[Point3<f64>]) -> Result<RayCurveClosest> {
    if curve.len() < 2 {
        return Err(Error::EmptyCurve(curve.len()));
    }
    let mut best: Option<RayCurveClosest> = None;
    for (i, seg) in curve.windows(2).enumerate() {
        let (s, t) = ray_segment_params(ray, &seg[0], &seg[1]);
        let on_ray = ray.at(s);
        let on_curve = seg[0] + (seg[1] - seg[0]) * t;
        let distance = (on_ray - on_curve).norm();
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(RayCurveClosest {
                on_ray,
                on_curve,
                ray_param: s,
                segment: i,
                segment_param: t,
                distance,
            });
        }
    }
    Ok(best.expect("curve has at least one segment"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCurveClosest {
    pub point: Point3<f64>,
    pub segment: usize,
    pub segment_param: f64,
    pub distance: f64,
}

/// Parameter in `[0, 1]` of the foot of `p` on segment `q0 q1`.
pub(crate) fn segment_foot_param(p: &Point3<f64>, q0: &Point3<f64>, q1: &Point3<f64>) -> f64 {
    let d = q1 - q0;
    let len2 = d.norm_squared();
    if len2 <= f64::EPSILON {
        return 0.0;
    }
    ((p - q0).dot(&d) / len2).clamp(0.0, 1.0)
}

/// Closest point on a polyline to `p`, interpolating inside segments.
pub fn point_polyline_closest(p: &Point3<f64>, curve: &[Point3<f64>]) -> Result<PointCurveClosest> {
    if curve.len() < 2 {
        return Err(Error::EmptyCurve(curve.len()));
    }
    let mut best: Option<PointCurveClosest> = None;
    for (i, seg) in curve.windows(2).enumerate() {
        let t = segment_foot_param(p, &seg[0], &seg[1]);
        let point = seg[0] + (seg[1] - seg[0]) * t;
        let distance = (p - point).norm();
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(PointCurveClosest {
                point,
                segment: i,
                segment_param: t,
                distance,
            });
        }
    }
    Ok(best.expect("curve has at least one segment"))
}

/// On-disk camera calibration record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major `{H}`-to-camera rotation.
    pub rotation: [f64; 9],
    /// Translation in meters.
    pub translation: [f64; 3],
}

impl TryFrom<CameraFile> for CameraModel {
    type Error = Error;

    fn try_from(f: CameraFile) -> Result<Self> {
        let pose = Pose::new(
            Matrix3::from_row_slice(&f.rotation),
            Vector3::from(f.translation),
        )?;
        CameraModel::new(f.fx, f.fy, f.cx, f.cy, f.width, f.height, pose)
    }
}

impl From<CameraModel> for CameraFile {
    fn from(c: CameraModel) -> Self {
        let r = c.pose.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        let t = c.pose.translation();
        CameraFile {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation,
            translation: [t.x, t.y, t.z],
        }
    }
}

/// Calibrated two-camera rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rig {
    pub cam1: CameraModel,
    pub cam2: CameraModel,
}

impl Rig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// 1-based view lookup.
    pub fn view(&self, index: usize) -> Option<&CameraModel> {
        match index {
            1 => Some(&self.cam1),
            2 => Some(&self.cam2),
            _ => None,
        }
    }
}
