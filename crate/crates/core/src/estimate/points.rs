use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{EstimatorConfig, StereoObservation};
use crate::geom::{ray_polyline_closest, ray_ray_closest, CameraModel, Pixel, Ray};
use crate::model::CenterCurve;
use crate::silhouette::Silhouette;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointSource {
    TwoView,
    OneView,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub point: Point3<f64>,
    pub source: PointSource,
    /// Arc length of the nearest center-curve point.
    pub l: f64,
    /// Distance from that curve point.
    pub w: f64,
}

impl SurfacePoint {
    fn register(point: Point3<f64>, source: PointSource, curve: &CenterCurve) -> Self {
        let (foot, l) = curve.params.closest_point(&point);
        Self {
            point,
            source,
            l,
            w: (point - foot).norm(),
        }
    }

    /// Registers only points beside the curve; points past either end say
    /// nothing about a cross-section.
    fn register_beside(point: Point3<f64>, source: PointSource, curve: &CenterCurve) -> Option<Self> {
        let p = Self::register(point, source, curve);
        (p.l > 0.0 && p.l < curve.total_length()).then_some(p)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfacePointSet {
    pub points: Vec<SurfacePoint>,
}

impl SurfacePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, source: PointSource) -> usize {
        self.points.iter().filter(|p| p.source == source).count()
    }

    /// `(l, w)` pairs for the width regression.
    pub fn width_samples(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.l, p.w)).collect()
    }

    fn bin(l: f64, total: f64, bins: usize) -> usize {
        if total <= 0.0 {
            return 0;
        }
        ((l / total * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    }

    /// Which of `bins` equal arc-length bins hold at least one point.
    pub fn occupied_bins(&self, total: f64, bins: usize) -> Vec<bool> {
        let mut occ = vec![false; bins];
        for p in &self.points {
            occ[Self::bin(p.l, total, bins)] = true;
        }
        occ
    }

    /// Appends the points of `other` that fall in unoccupied bins.
    pub fn extend_unbinned(&mut self, other: SurfacePointSet, occupied: &[bool], total: f64) {
        let bins = occupied.len();
        self.points.extend(
            other
                .points
                .into_iter()
                .filter(|p| !occupied[Self::bin(p.l, total, bins)]),
        );
    }
}

/// `F` with `x2ᵀ F x1 = 0` for pixels `x1` in `cam1` and `x2` in `cam2`.
pub fn fundamental_matrix(cam1: &CameraModel, cam2: &CameraModel) -> Matrix3<f64> {
    let r = cam2.pose.rotation() * cam1.pose.rotation().transpose();
    let t = cam2.pose.translation() - r * cam1.pose.translation();
    let essential = t.cross_matrix() * r;
    let k1_inv = cam1.intrinsic_matrix().try_inverse().expect("valid intrinsics");
    let k2_inv = cam2.intrinsic_matrix().try_inverse().expect("valid intrinsics");
    k2_inv.transpose() * essential * k1_inv
}

fn edge_rays(sil: &Silhouette, cam: &CameraModel) -> (Vec<Pixel>, Vec<Ray>) {
    let px = sil.edge_points();
    let rays = px.iter().map(|p| cam.backproject(p)).collect();
    (px, rays)
}

fn in_front(ray: &Ray, p: &Point3<f64>) -> bool {
    (p - ray.origin).dot(ray.direction()) > 0.0
}

fn line_distance(ray: &Ray, p: &Point3<f64>) -> f64 {
    let v = p - ray.origin;
    (v - ray.direction() * v.dot(ray.direction())).norm()
}

/// A matched pair meets at a corner of the visual hull, outside the surface.
/// Both rays are tangent to the cross-section there, so the width is their
/// distance from the curve foot; the point is moved onto that radius. Pairs
/// whose rays disagree on that distance by more than `tol` graze something
/// else, such as the rounded tip, and are dropped.
fn pair_point(corner: Point3<f64>, a: &Ray, b: &Ray, curve: &CenterCurve, tol: f64) -> Option<SurfacePoint> {
    let p = SurfacePoint::register_beside(corner, PointSource::TwoView, curve)?;
    let foot = curve.params.point_at_length(p.l);
    let (da, db) = (line_distance(a, &foot), line_distance(b, &foot));
    if (da - db).abs() > tol {
        return None;
    }
    let w = 0.5 * (da + db);
    let out = corner - foot;
    let point = if out.norm() > 0.0 { foot + out * (w / out.norm()) } else { corner };
    Some(SurfacePoint { point, w, ..p })
}

/// Boundary ray pairs that nearly intersect at a sufficient angle, with the
/// midpoint of their common perpendicular. View-2 candidates are tried in
/// order of distance to the epipolar line of the view-1 point; each is used
/// at most once.
pub fn match_ray_pairs(obs: &StereoObservation, cfg: &EstimatorConfig) -> Vec<(Ray, Ray, Point3<f64>)> {
    let (px1, rays1) = edge_rays(&obs.sil1, &obs.cam1);
    let (px2, rays2) = edge_rays(&obs.sil2, &obs.cam2);
    let f = fundamental_matrix(&obs.cam1, &obs.cam2);
    let mut used = vec![false; px2.len()];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(px2.len());
    let mut out = Vec::new();

    for (p1, r1) in px1.iter().zip(&rays1) {
        let line = f * Vector3::new(p1.x, p1.y, 1.0);
        let norm = line.x.hypot(line.y);
        if norm < 1e-15 {
            continue;
        }
        order.clear();
        order.extend(
            px2.iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, p2)| ((line.x * p2.x + line.y * p2.y + line.z).abs() / norm, k)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, k) in &order {
            let c = ray_ray_closest(r1, &rays2[k]);
            if c.distance < cfg.d && c.angle > cfg.theta && in_front(r1, &c.on_a) && in_front(&rays2[k], &c.on_b) {
                used[k] = true;
                let mid = Point3::from((c.on_a.coords + c.on_b.coords) * 0.5);
                out.push((*r1, rays2[k], mid));
                break;
            }
        }
    }
    out
}

/// Registers matched ray pairs against `curve`.
pub fn recover_two_view_points(
    obs: &StereoObservation,
    curve: &CenterCurve,
    cfg: &EstimatorConfig,
) -> SurfacePointSet {
    register_pairs(&match_ray_pairs(obs, cfg), curve, cfg.d)
}

fn register_pairs(pairs: &[(Ray, Ray, Point3<f64>)], curve: &CenterCurve, tol: f64) -> SurfacePointSet {
    SurfacePointSet {
        points: pairs.iter().filter_map(|(a, b, mid)| pair_point(*mid, a, b, curve, tol)).collect(),
    }
}

fn register_tangent_rays(rays: &[Ray], curve: &CenterCurve, gamma: f64, out: &mut SurfacePointSet) {
    for ray in rays {
        let Ok(c) = ray_polyline_closest(ray, &curve.points) else {
            continue;
        };
        let tangent = curve.segment_tangent(c.segment);
        let angle = ray.direction().dot(&tangent).abs().min(1.0).acos();
        if angle >= gamma && c.ray_param > 0.0 {
            out.points.extend(SurfacePoint::register_beside(c.on_ray, PointSource::OneView, curve));
        }
    }
}

/// Registers the ray point nearest the center curve for boundary rays that
/// cross the local tangent at an angle of at least `gamma`.
pub fn recover_one_view_points(
    sil: &Silhouette,
    cam: &CameraModel,
    curve: &CenterCurve,
    cfg: &EstimatorConfig,
) -> SurfacePointSet {
    let (_, rays) = edge_rays(sil, cam);
    let mut out = SurfacePointSet::default();
    register_tangent_rays(&rays, curve, cfg.gamma, &mut out);
    out
}

/// Curve-independent boundary data: edge rays of both views and the matched
/// ray pairs. Registering it against a curve is cheap.
#[derive(Debug, Clone)]
pub struct BoundaryEvidence {
    rays: [Vec<Ray>; 2],
    pairs: Vec<(Ray, Ray, Point3<f64>)>,
    gamma: f64,
    d: f64,
}

impl BoundaryEvidence {
    pub fn new(obs: &StereoObservation, cfg: &EstimatorConfig) -> Self {
        Self {
            rays: [edge_rays(&obs.sil1, &obs.cam1).1, edge_rays(&obs.sil2, &obs.cam2).1],
            pairs: match_ray_pairs(obs, cfg),
            gamma: cfg.gamma,
            d: cfg.d,
        }
    }

    /// One-view points from both views, then two-view points in arc-length
    /// bins that no one-view point reached. Tangent rays pin the width
    /// directly; pairs only fill the stretches where rays are too oblique.
    pub fn surface_points(&self, curve: &CenterCurve) -> SurfacePointSet {
        let mut out = SurfacePointSet::default();
        for rays in &self.rays {
            register_tangent_rays(rays, curve, self.gamma, &mut out);
        }
        let total = curve.total_length();
        let bins = out.occupied_bins(total, POINT_BINS);
        out.extend_unbinned(register_pairs(&self.pairs, curve, self.d), &bins, total);
        out
    }
}

/// Arc-length bins used to keep two-view points off stretches already covered
/// by one-view points.
pub const POINT_BINS: usize = 32;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::model::ArcParams;
    use proptest::prelude::*;

    fn camera(eye: Point3<f64>, target: Point3<f64>) -> CameraModel {
        let pose = Pose::look_at(&eye, &target, &Vector3::x()).unwrap();
        CameraModel::from_fov(160, 120, 71f64.to_radians(), 56f64.to_radians(), pose).unwrap()
    }

    proptest! {
        #[test]
        fn fundamental_matrix_annihilates_projections(
            x in -0.2f64..0.2, y in -0.2f64..0.2, z in 0.05f64..0.6,
        ) {
            let c1 = camera(Point3::new(0.0, -0.6, 0.3), Point3::new(0.0, 0.0, 0.3));
            let c2 = camera(Point3::new(0.1, 0.05, -0.3), Point3::new(0.0, 0.0, 0.5));
            let p = Point3::new(x, y, z);
            let (a, b) = (c1.project(&p).unwrap(), c2.project(&p).unwrap());
            let f = fundamental_matrix(&c1, &c2);
            let line = f * Vector3::new(a.x, a.y, 1.0);
            let dist = (line.x * b.x + line.y * b.y + line.z).abs() / line.x.hypot(line.y);
            prop_assert!(dist < 1e-8, "{}", dist);
        }
    }

    #[test]
    fn bins_filter_covered_arc_lengths() {
        let curve = ArcParams::straight(1.0).unwrap().sample(8).unwrap();
        let at = |z: f64, s| SurfacePoint::register(Point3::new(0.02, 0.0, z), s, &curve);
        let mut set = SurfacePointSet {
            points: vec![at(0.1, PointSource::TwoView)],
        };
        let occ = set.occupied_bins(1.0, 4);
        assert_eq!(occ, vec![true, false, false, false]);
        let extra = SurfacePointSet {
            points: vec![at(0.2, PointSource::OneView), at(0.6, PointSource::OneView)],
        };
        set.extend_unbinned(extra, &occ, 1.0);
        assert_eq!(set.len(), 2);
        assert_eq!(set.count(PointSource::OneView), 1);
        assert!((set.points[1].l - 0.6).abs() < 1e-12 && (set.points[1].w - 0.02).abs() < 1e-12);
    }
}
