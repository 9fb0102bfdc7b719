use nalgebra::Point3;

use super::StereoObservation;
use crate::geom::CameraModel;
use crate::model::CenterCurve;

struct View {
    cam: CameraModel,
    nearest: Vec<Option<[usize; 2]>>,
}

impl View {
    /// Largest radius of a sphere at `p` whose image stays inside the
    /// silhouette, or `None` when this view cannot tell.
    fn radius(&self, p: &Point3<f64>) -> Option<f64> {
        let depth = self.cam.pose.transform(p).z;
        let px = self.cam.project(p).ok()?;
        let (w, h) = (self.cam.width, self.cam.height);
        if !(px.x >= 0.0 && px.y >= 0.0 && px.x <= (w - 1) as f64 && px.y <= (h - 1) as f64) {
            return None;
        }
        // The neighbors' nearest background pixels include the query's own.
        let (cx, cy) = (px.x.round() as usize, px.y.round() as usize);
        let mut d = f64::INFINITY;
        for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                if let Some([bx, by]) = self.nearest[y * w + x] {
                    d = d.min((bx as f64 - px.x).hypot(by as f64 - px.y));
                }
            }
        }
        if !d.is_finite() {
            return None;
        }
        // The edge lies half a pixel short of the nearest background center.
        let focal = 0.5 * (self.cam.fx + self.cam.fy);
        Some((d - 0.5).max(0.0) * depth / focal)
    }
}

/// Widths read off the silhouettes' distance transforms: at each curve point,
/// the radius of the largest sphere that projects inside both silhouettes.
pub(super) struct InscribedWidths {
    views: [View; 2],
}

impl InscribedWidths {
    pub(super) fn new(obs: &StereoObservation) -> Self {
        let view = |sil: &crate::silhouette::Silhouette, cam: &CameraModel| View {
            cam: cam.clone(),
            nearest: sil.nearest_background(),
        };
        Self {
            views: [view(&obs.sil1, &obs.cam1), view(&obs.sil2, &obs.cam2)],
        }
    }

    /// `(l, w)` at every curve sample past the nozzle that some view constrains.
    pub(super) fn samples(&self, curve: &CenterCurve) -> Vec<(f64, f64)> {
        curve
            .points
            .iter()
            .zip(&curve.lengths)
            .skip(1)
            .filter_map(|(p, &l)| {
                let w = self.views.iter().filter_map(|v| v.radius(p)).reduce(f64::min)?;
                Some((l, w))
            })
            .collect()
    }
}
