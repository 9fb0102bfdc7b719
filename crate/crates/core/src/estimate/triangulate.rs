use nalgebra::{Matrix3x4, Point3, SMatrix, Vector3, Vector4};

use super::{StereoObservation, MIN_BASELINE};
use crate::error::{Error, Result};
use crate::geom::{CameraModel, Pixel};
use crate::model::ArcMidpoint;

/// Singular-value gap below which the two-view system has no unique solution.
const GAP_TOL: f64 = 1e-9;

/// The two independent-up-to-rank cross-product rows `[x]_x [R | t]` for one
/// view, written in normalized image coordinates.
fn view_rows(cam: &CameraModel, px: &Pixel) -> SMatrix<f64, 3, 4> {
    let x = Vector3::new((px.x - cam.cx) / cam.fx, (px.y - cam.cy) / cam.fy, 1.0);
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(cam.pose.rotation());
    p.fixed_view_mut::<3, 1>(0, 3).copy_from(cam.pose.translation());
    x.cross_matrix() * p
}

fn stacked(cam1: &CameraModel, px1: &Pixel, cam2: &CameraModel, px2: &Pixel) -> Result<SMatrix<f64, 6, 4>> {
    let baseline = (cam1.center() - cam2.center()).norm();
    if baseline <= MIN_BASELINE {
        return Err(Error::DegenerateGeometry(format!("camera baseline {baseline:.3e} m")));
    }
    let mut a = SMatrix::<f64, 6, 4>::zeros();
    a.fixed_view_mut::<3, 4>(0, 0).copy_from(&view_rows(cam1, px1));
    a.fixed_view_mut::<3, 4>(3, 0).copy_from(&view_rows(cam2, px2));
    Ok(a)
}

/// Homogeneous least-squares intersection of the two pixel rays.
pub fn triangulate_pixels(cam1: &CameraModel, px1: &Pixel, cam2: &CameraModel, px2: &Pixel) -> Result<Point3<f64>> {
    let a = stacked(cam1, px1, cam2, px2)?;
    // Singular values come back in descending order.
    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    if sv[2] - sv[3] <= GAP_TOL * sv[0] {
        return Err(Error::DegenerateGeometry("rays are nearly parallel".into()));
    }
    let v_t = svd.v_t.expect("requested V");
    let x: Vector4<f64> = v_t.row(3).transpose();
    if x.w.abs() <= 1e-12 * x.xyz().norm() {
        return Err(Error::DegenerateGeometry("rays meet at infinity".into()));
    }
    Ok(Point3::from(x.xyz() / x.w))
}

/// Arc midpoint from the silhouette centroids.
pub fn triangulate_midpoint(obs: &StereoObservation) -> Result<ArcMidpoint> {
    let c1 = obs.sil1.centroid().ok_or(Error::EmptySilhouette)?;
    let c2 = obs.sil2.centroid().ok_or(Error::EmptySilhouette)?;
    let x = triangulate_pixels(&obs.cam1, &c1, &obs.cam2, &c2)?;
    if !(x.z > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "triangulated midpoint lies behind the nozzle (z = {:.3e})",
            x.z
        )));
    }
    ArcMidpoint::new(x)
}

/// Least-squares midpoint depth when the midpoint is constrained to the torch
/// axis, as in the straight baseline.
pub fn triangulate_axis_depth(obs: &StereoObservation) -> Result<f64> {
    let c1 = obs.sil1.centroid().ok_or(Error::EmptySilhouette)?;
    let c2 = obs.sil2.centroid().ok_or(Error::EmptySilhouette)?;
    triangulate_axis_pixels(&obs.cam1, &c1, &obs.cam2, &c2)
}

/// Depth `z` of the point `(0, 0, z)` best explaining both pixels.
pub fn triangulate_axis_pixels(cam1: &CameraModel, px1: &Pixel, cam2: &CameraModel, px2: &Pixel) -> Result<f64> {
    let a = stacked(cam1, px1, cam2, px2)?;
    let a3 = a.column(2);
    let a4 = a.column(3);
    let denom = a3.dot(&a3);
    if denom <= 1e-18 {
        return Err(Error::DegenerateGeometry("torch axis is unobservable".into()));
    }
    let z = -a3.dot(&a4) / denom;
    if !(z > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "axis midpoint lies behind the nozzle (z = {z:.3e})"
        )));
    }
    Ok(z)
}
