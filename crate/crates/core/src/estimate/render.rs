use nalgebra::{Point3, Vector3};

use crate::geom::{CameraModel, Pixel};
use crate::model::FlameModel;
use crate::silhouette::Silhouette;

/// Back-projected ray directions for every pixel of a camera, row-major.
#[derive(Debug, Clone)]
pub struct PixelRays {
    cam: CameraModel,
    origin: Point3<f64>,
    dirs: Vec<Vector3<f64>>,
}

impl PixelRays {
    /// Rays through pixel centers.
    pub fn new(cam: &CameraModel) -> Self {
        Self::with_offsets(cam, |_, _| (0.0, 0.0))
    }

    /// Rays through pixel centers displaced by `offset(x, y)`, in pixels.
    pub fn with_offsets(cam: &CameraModel, mut offset: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut dirs = Vec::with_capacity(cam.width * cam.height);
        for y in 0..cam.height {
            for x in 0..cam.width {
                let (dx, dy) = offset(x, y);
                let ray = cam.backproject(&Pixel::new(x as f64 + dx, y as f64 + dy));
                dirs.push(*ray.direction());
            }
        }
        Self {
            cam: cam.clone(),
            origin: cam.center(),
            dirs,
        }
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn camera(&self) -> &CameraModel {
        &self.cam
    }

    /// Inclusive pixel box that may see the sphere, or `None` if it is behind
    /// the camera or off-image.
    fn sphere_box(&self, center: &Point3<f64>, radius: f64) -> Option<[usize; 4]> {
        let cam = &self.cam;
        let p = cam.pose.transform(center);
        if p.z + radius <= 0.0 {
            return None;
        }
        let (w, h) = (cam.width as f64, cam.height as f64);
        let full = [0, cam.width - 1, 0, cam.height - 1];
        if p.z <= radius * 1.000_001 {
            return Some(full);
        }
        // Slopes of the planes through the camera center tangent to the sphere.
        let span = |a: f64| {
            let denom = p.z * p.z - radius * radius;
            let root = radius * (a * a + denom).max(0.0).sqrt();
            ((a * p.z - root) / denom, (a * p.z + root) / denom)
        };
        let (x0, x1) = span(p.x);
        let (y0, y1) = span(p.y);
        let u0 = (cam.fx * x0 + cam.cx).floor().max(0.0);
        let u1 = (cam.fx * x1 + cam.cx).ceil().min(w - 1.0);
        let v0 = (cam.fy * y0 + cam.cy).floor().max(0.0);
        let v1 = (cam.fy * y1 + cam.cy).ceil().min(h - 1.0);
        if u0 > u1 || v0 > v1 {
            return None;
        }
        Some([u0 as usize, u1 as usize, v0 as usize, v1 as usize])
    }
}

/// Rasterizes the model silhouette into `mask` (row-major, camera-sized).
///
/// Each polyline segment sweeps a sphere whose radius interpolates the sample
/// widths linearly; a pixel is set when its ray meets any swept volume in
/// front of the camera. The test per segment is exact: the squared ray-point
/// distance minus the squared radius is a quadratic in the segment parameter.
pub fn render_mask(model: &FlameModel, rays: &PixelRays, mask: &mut [bool]) {
    assert_eq!(mask.len(), rays.len());
    mask.fill(false);
    let pts = &model.curve().points;
    let ws = model.sample_widths();
    let o = rays.origin;
    let width = rays.cam.width;

    for s in 0..pts.len() - 1 {
        let (q0, q1) = (pts[s], pts[s + 1]);
        let (w0, w1) = (ws[s], ws[s + 1]);
        if w0 <= 0.0 && w1 <= 0.0 {
            continue;
        }
        let e = q1 - q0;
        let center = Point3::from((q0.coords + q1.coords) * 0.5);
        let Some([u0, u1, v0, v1]) = rays.sphere_box(&center, 0.5 * e.norm() + w0.max(w1)) else {
            continue;
        };
        let m = q0 - o;
        let (ee, me, mm) = (e.dot(&e), m.dot(&e), m.dot(&m));
        let dw = w1 - w0;
        for y in v0..=v1 {
            let row = y * width;
            for x in u0..=u1 {
                let i = row + x;
                if mask[i] {
                    continue;
                }
                let v = &rays.dirs[i];
                let (ev, mv) = (e.dot(v), m.dot(v));
                // |perp(t)|² - w(t)² = A t² + B t + C over t in [0, 1].
                let a = ee - ev * ev - dw * dw;
                let b = 2.0 * (me - mv * ev) - 2.0 * w0 * dw;
                let c = mm - mv * mv - w0 * w0;
                let t = if c <= 0.0 {
                    Some(0.0)
                } else if a + b + c <= 0.0 {
                    Some(1.0)
                } else if a > 0.0 {
                    let ts = -b / (2.0 * a);
                    (ts > 0.0 && ts < 1.0 && c - b * b / (4.0 * a) <= 0.0).then_some(ts)
                } else {
                    None
                };
                if let Some(t) = t {
                    // Depth along the ray of the touching sphere center.
                    mask[i] = mv + t * ev > 0.0;
                }
            }
        }
    }
}

/// Model silhouette in `cam`, without component filtering.
pub fn reproject_silhouette(model: &FlameModel, cam: &CameraModel) -> Silhouette {
    let rays = PixelRays::new(cam);
    let mut mask = vec![false; rays.len()];
    render_mask(model, &rays, &mut mask);
    Silhouette::from_mask(cam.width, cam.height, mask).expect("mask sized to camera")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::model::{ArcMidpoint, Kernel, WidthModel};
    use proptest::prelude::*;

    fn side_camera() -> CameraModel {
        let pose = Pose::look_at(&Point3::new(0.0, -0.5, 0.15), &Point3::new(0.0, 0.0, 0.15), &Vector3::x()).unwrap();
        CameraModel::new(150.0, 150.0, 79.5, 59.5, 160, 120, pose).unwrap()
    }

    fn constant_width(w: f64, length: f64) -> WidthModel {
        let samples: Vec<(f64, f64)> = (0..6).map(|i| (length * i as f64 / 5.0, w)).collect();
        WidthModel::fit(&samples, 0.0, Kernel::default()).unwrap()
    }

    /// Brute-force membership: any ray point within the swept radius of the polyline.
    fn brute_force(model: &FlameModel, cam: &CameraModel) -> Vec<bool> {
        let pts = &model.curve().points;
        let ws = model.sample_widths();
        let mut mask = vec![false; cam.width * cam.height];
        for y in 0..cam.height {
            for x in 0..cam.width {
                let ray = cam.backproject(&Pixel::new(x as f64, y as f64));
                'seg: for s in 0..pts.len() - 1 {
                    for k in 0..=200 {
                        let t = k as f64 / 200.0;
                        let q = pts[s] + (pts[s + 1] - pts[s]) * t;
                        let r = ws[s] + t * (ws[s + 1] - ws[s]);
                        let along = (q - ray.origin).dot(ray.direction());
                        if along > 0.0 && (q - ray.at(along)).norm() <= r {
                            mask[y * cam.width + x] = true;
                            break 'seg;
                        }
                    }
                }
            }
        }
        mask
    }

    #[test]
    fn straight_cylinder_matches_analytic_projection() {
        let cam = side_camera();
        let m = FlameModel::line(0.3, constant_width(0.05, 0.3), 16).unwrap();
        let sil = reproject_silhouette(&m, &cam);
        // A capsule contains the ray's nearest approach to its axis segment
        // exactly when that distance is below the radius.
        let (q0, q1) = (Point3::origin(), Point3::new(0.0, 0.0, 0.3));
        let band = 0.6 / 150.0;
        for y in 0..cam.height {
            for x in 0..cam.width {
                let ray = cam.backproject(&Pixel::new(x as f64, y as f64));
                let (s, t) = crate::geom::ray_segment_params(&ray, &q0, &q1);
                let d = (ray.at(s) - (q0 + (q1 - q0) * t)).norm();
                if (d - 0.05).abs() > band {
                    assert_eq!(sil.get(x, y), d < 0.05, "pixel ({x}, {y}) d = {d}");
                }
            }
        }
        assert!(sil.count() > 1000);
    }

    #[test]
    fn matches_brute_force_on_arc() {
        let cam = side_camera();
        let samples: Vec<(f64, f64)> = (0..8).map(|i| (0.05 * i as f64, 0.01 + 0.03 * (i as f64 / 7.0))).collect();
        let width = WidthModel::fit(&samples, 0.0, Kernel::default()).unwrap();
        let m = FlameModel::from_midpoint(ArcMidpoint::new(Point3::new(0.04, 0.01, 0.15)).unwrap(), width, 24).unwrap();
        let fast = reproject_silhouette(&m, &cam);
        let brute = brute_force(&m, &cam);
        let differ = fast.mask().iter().zip(&brute).filter(|(a, b)| a != b).count();
        assert!(differ <= 3, "{differ} pixels differ");
        assert!(fast.count() > 100);
    }

    #[test]
    fn zero_width_and_looking_away_are_empty() {
        let cam = side_camera();
        let m = FlameModel::line(0.3, constant_width(0.0, 0.3), 16).unwrap();
        assert!(reproject_silhouette(&m, &cam).is_empty());
        let away = Pose::look_at(&Point3::new(0.0, -0.5, 0.15), &Point3::new(0.0, -1.0, 0.15), &Vector3::x()).unwrap();
        let cam = CameraModel { pose: away, ..side_camera() };
        let m = FlameModel::line(0.3, constant_width(0.05, 0.3), 16).unwrap();
        assert!(reproject_silhouette(&m, &cam).is_empty());
    }

    #[test]
    fn camera_inside_bounding_sphere() {
        // The nozzle-side camera sits inside the first segment's bounding sphere.
        let pose = Pose::look_at(&Point3::new(0.0, 0.0, -0.08), &Point3::new(0.0, 0.0, 1.0), &Vector3::x()).unwrap();
        let cam = CameraModel::new(80.0, 80.0, 79.5, 59.5, 160, 120, pose).unwrap();
        let m = FlameModel::line(1.0, constant_width(0.05, 1.0), 4).unwrap();
        let sil = reproject_silhouette(&m, &cam);
        assert!(sil.get(80, 60));
        assert_eq!(sil.mask(), brute_force(&m, &cam).as_slice());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn widening_never_removes_pixels(w in 0.005f64..0.04, grow in 0.0f64..0.02) {
            let cam = side_camera();
            let a = reproject_silhouette(&FlameModel::line(0.3, constant_width(w, 0.3), 16).unwrap(), &cam);
            let b = reproject_silhouette(&FlameModel::line(0.3, constant_width(w + grow, 0.3), 16).unwrap(), &cam);
            prop_assert!(a.mask().iter().zip(b.mask()).all(|(&x, &y)| !x || y));
        }
    }
}
