use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::arc::{ArcMidpoint, ArcParams, CenterCurve, DEFAULT_STRAIGHT_EPS};
use super::width::{WidthFile, WidthModel};
use crate::error::{Error, Result};
use crate::geom::point_polyline_closest;

pub const DEFAULT_CURVE_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Spine {
    Midpoint(ArcMidpoint),
    Line(f64),
}

/// Center curve plus cross-section width function. The boundary surface is the
/// zero set of [`FlameModel::surface_value`]; the ends close with spherical caps.
#[derive(Debug, Clone, PartialEq)]
pub struct FlameModel {
    spine: Spine,
    arc: ArcParams,
    width: WidthModel,
    curve: CenterCurve,
    /// Width mean at each curve sample.
    sample_widths: Vec<f64>,
}

impl FlameModel {
    pub fn from_midpoint(midpoint: ArcMidpoint, width: WidthModel, samples: usize) -> Result<Self> {
        let arc = ArcParams::from_midpoint(&midpoint, DEFAULT_STRAIGHT_EPS)?;
        Self::build(Spine::Midpoint(midpoint), arc, width, samples)
    }

    pub fn line(length: f64, width: WidthModel, samples: usize) -> Result<Self> {
        let arc = ArcParams::straight(length)?;
        Self::build(Spine::Line(length), arc, width, samples)
    }

    /// Arcs go through their midpoint so that the serialized form reloads bit-exactly.
    pub fn from_arc(arc: &ArcParams, width: WidthModel, samples: usize) -> Result<Self> {
        match *arc {
            ArcParams::Straight { length } => Self::line(length, width, samples),
            ArcParams::Arc { .. } => Self::from_midpoint(arc.midpoint(), width, samples),
        }
    }

    fn build(spine: Spine, arc: ArcParams, width: WidthModel, samples: usize) -> Result<Self> {
        let curve = arc.sample(samples)?;
        let sample_widths = curve.lengths.iter().map(|&l| width.mean(l)).collect();
        Ok(Self {
            spine,
            arc,
            width,
            curve,
            sample_widths,
        })
    }

    pub fn with_width(&self, width: WidthModel) -> Result<Self> {
        Self::build(self.spine, self.arc, width, self.curve.points.len())
    }

    pub fn arc(&self) -> &ArcParams {
        &self.arc
    }

    pub fn width(&self) -> &WidthModel {
        &self.width
    }

    pub fn curve(&self) -> &CenterCurve {
        &self.curve
    }

    pub fn sample_widths(&self) -> &[f64] {
        &self.sample_widths
    }

    pub fn is_line_kind(&self) -> bool {
        matches!(self.spine, Spine::Line(_))
    }

    pub fn midpoint(&self) -> ArcMidpoint {
        match self.spine {
            Spine::Midpoint(m) => m,
            Spine::Line(_) => self.arc.midpoint(),
        }
    }

    pub fn max_width(&self) -> f64 {
        self.sample_widths.iter().copied().fold(0.0, f64::max)
    }

    /// Signed distance-like value: negative inside, zero on the boundary.
    pub fn surface_value(&self, p: &Point3<f64>) -> f64 {
        let c = point_polyline_closest(p, &self.curve.points).expect("curve has >= 2 samples");
        let l = self.curve.length_at(c.segment, c.segment_param);
        c.distance - self.width.mean(l)
    }

    /// Same surface as [`Self::surface_value`], with the foot searched around
    /// the analytic arc position and widths interpolated between curve samples.
    pub fn fast_value(&self, p: &Point3<f64>) -> f64 {
        let pts = &self.curve.points;
        let segments = pts.len() - 1;
        let guess = match self.arc {
            ArcParams::Arc { alpha, .. } => self.arc.local_angle(p) / alpha,
            ArcParams::Straight { length } => p.z / length,
        };
        let guess = ((guess * segments as f64).floor().max(0.0) as usize).min(segments - 1);
        let lo = guess.saturating_sub(1);
        let hi = (guess + 1).min(segments - 1);
        let mut best = (f64::INFINITY, 0usize, 0.0);
        for s in lo..=hi {
            let t = crate::geom::segment_foot_param(p, &pts[s], &pts[s + 1]);
            let d = (p - (pts[s] + (pts[s + 1] - pts[s]) * t)).norm_squared();
            if d < best.0 {
                best = (d, s, t);
            }
        }
        let (d2, s, t) = best;
        let w = self.sample_widths[s] + t * (self.sample_widths[s + 1] - self.sample_widths[s]);
        d2.sqrt() - w
    }

    pub fn to_file(&self) -> FlameModelFile {
        let (kind, midpoint, length) = match self.spine {
            Spine::Midpoint(m) => {
                let p = m.point();
                (ModelKind::Arc, Some([p.x, p.y, p.z]), None)
            }
            Spine::Line(l) => (ModelKind::Line, None, Some(l)),
        };
        FlameModelFile {
            kind,
            midpoint,
            length,
            width: self.width.to_file(),
            samples: self.curve.points.len(),
        }
    }

    pub fn from_file(f: &FlameModelFile) -> Result<Self> {
        let width = WidthModel::from_file(&f.width)?;
        match (f.kind, f.midpoint, f.length) {
            (ModelKind::Arc, Some(m), None) => {
                Self::from_midpoint(ArcMidpoint::new(Point3::from(m))?, width, f.samples)
            }
            (ModelKind::Line, None, Some(l)) => Self::line(l, width, f.samples),
            (ModelKind::Arc, _, _) => Err(Error::InvalidArc(
                "kind \"arc\" needs \"midpoint\" and no \"length\"".into(),
            )),
            (ModelKind::Line, _, _) => Err(Error::InvalidArc(
                "kind \"line\" needs \"length\" and no \"midpoint\"".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Arc,
    Line,
}

/// Serialized [`FlameModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlameModelFile {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub midpoint: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    pub width: WidthFile,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_CURVE_SAMPLES
}

pub fn surface_value(model: &FlameModel, p: &Point3<f64>) -> f64 {
    model.surface_value(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::width::Kernel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn constant_width(w: f64, length: f64) -> WidthModel {
        let samples: Vec<(f64, f64)> = (0..9).map(|i| (length * i as f64 / 8.0, w)).collect();
        WidthModel::fit(&samples, 0.0, Kernel::default()).unwrap()
    }

    fn rise_fall(peak: f64, length: f64) -> WidthModel {
        let samples: Vec<(f64, f64)> = (0..32)
            .map(|i| {
                let l = length * i as f64 / 31.0;
                (l, peak * (std::f64::consts::PI * l / length).sin().max(0.0))
            })
            .collect();
        WidthModel::fit(&samples, 0.0, Kernel::default()).unwrap()
    }

    #[test]
    fn value_on_curve_is_negative_width() {
        let width = constant_width(0.03, 1.0);
        let m = FlameModel::line(1.0, width, 64).unwrap();
        assert_abs_diff_eq!(m.surface_value(&Point3::new(0.0, 0.0, 0.5)), -0.03, epsilon = 1e-9);
    }

    #[test]
    fn value_on_boundary_is_zero() {
        let arc = ArcParams::arc(0.8, 2.0, 0.6).unwrap();
        let m = FlameModel::from_arc(&arc, rise_fall(0.04, arc.total_length()), 64).unwrap();
        let l = 0.3 * arc.total_length();
        let w = m.width().mean(l);
        let center = arc.center().unwrap();
        let on = arc.point_at_length(l);
        // Radial direction lies in the arc plane and is perpendicular to the tangent.
        let outward = (on - center).normalize();
        let p = on + outward * w;
        let seg = arc.total_length() / 63.0;
        let sagitta = 0.6 * (1.0 - (seg / 0.6 / 2.0).cos());
        // Sampling tolerance: chord sagitta plus the width change across a segment.
        let dw = (m.width().mean(l + seg) - w).abs();
        let v = m.surface_value(&p);
        assert!(v.abs() <= sagitta + dw, "F = {v}, sagitta {sagitta}, dw {dw}");
    }

    #[test]
    fn straight_constant_width_matches_capped_cylinder() {
        let m = FlameModel::line(0.5, constant_width(0.05, 0.5), 64).unwrap();
        let res = 0.5 / 63.0;
        for i in 0..12 {
            for j in 0..12 {
                for k in 0..12 {
                    let p = Point3::new(
                        -0.1 + 0.2 * i as f64 / 11.0,
                        -0.1 + 0.2 * j as f64 / 11.0,
                        -0.1 + 0.7 * k as f64 / 11.0,
                    );
                    let axis = Point3::new(0.0, 0.0, p.z.clamp(0.0, 0.5));
                    let analytic = (p - axis).norm() - 0.05;
                    assert!((m.surface_value(&p) - analytic).abs() <= 2.0 * res);
                }
            }
        }
    }

    #[test]
    fn fast_value_agrees_with_exact_value() {
        let arc = ArcParams::arc(1.2, -0.6, 0.9).unwrap();
        let m = FlameModel::from_arc(&arc, rise_fall(0.05, arc.total_length()), 64).unwrap();
        let center = arc.point_at_length(0.5 * arc.total_length());
        for i in 0..2000 {
            let f = i as f64;
            let p = center
                + nalgebra::Vector3::new(
                    0.4 * (f * 0.37).sin(),
                    0.4 * (f * 0.53).cos(),
                    0.6 * (f * 0.11).sin(),
                );
            let exact = m.surface_value(&p);
            if exact < 0.1 {
                assert!((m.fast_value(&p) - exact).abs() < 1e-4, "{p}: {exact}");
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let arc = ArcParams::arc(0.8, 2.0, 1.2).unwrap();
        let m = FlameModel::from_arc(&arc, rise_fall(0.04, arc.total_length()), 64).unwrap();
        let text = serde_json::to_string(&m.to_file()).unwrap();
        let back = FlameModel::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.arc(), m.arc());
        assert_eq!(back.curve(), m.curve());
        assert_eq!(back.sample_widths(), m.sample_widths());

        let bad = r#"{"kind":"line","midpoint":[0,0,1],"width":{"l":[0],"w":[0.01],"sigma_n":0,"kernel":"thinplate","sigma_f":1}}"#;
        assert!(FlameModel::from_file(&serde_json::from_str(bad).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn lipschitz_up_to_width_change(
            a in prop::array::uniform3(-0.3f64..0.3),
            b in prop::array::uniform3(-0.3f64..0.3),
        ) {
            let arc = ArcParams::arc(0.9, 0.4, 0.7).unwrap();
            let m = FlameModel::from_arc(&arc, rise_fall(0.05, arc.total_length()), 64).unwrap();
            let p = Point3::new(a[0], a[1], a[2] + 0.3);
            let q = Point3::new(b[0], b[1], b[2] + 0.3);
            let foot = |x: &Point3<f64>| {
                let c = point_polyline_closest(x, &m.curve().points).unwrap();
                m.width().mean(m.curve().length_at(c.segment, c.segment_param))
            };
            let dw = (foot(&p) - foot(&q)).abs();
            prop_assert!((m.surface_value(&p) - m.surface_value(&q)).abs() <= (p - q).norm() + dw + 1e-12);
        }
    }
}
