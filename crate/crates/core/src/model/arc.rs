//! Circular-arc center curve anchored at the nozzle.
//!
//! The arc leaves the nozzle (origin of `{H}`) with tangent `+Z`, bends in the
//! half-plane at azimuth `beta` and spans the central angle `alpha` with radius
//! `radius`. Its center sits at `R_Z(beta) [radius, 0, 0]`. The midpoint of the
//! arc determines the three parameters uniquely, which is why the midpoint is
//! the stored representation.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub const DEFAULT_STRAIGHT_EPS: f64 = 1e-4;
pub const DEFAULT_ON_CURVE_TOL: f64 = 1e-6;

/// Midpoint of the flame center arc, in front of the nozzle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcMidpoint(Point3<f64>);

impl ArcMidpoint {
    pub fn new(p: Point3<f64>) -> Result<Self> {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArc("non-finite midpoint".into()));
        }
        if p.z <= 0.0 {
            return Err(Error::InvalidArc(format!(
                "midpoint must lie in front of the nozzle (z = {})",
                p.z
            )));
        }
        Ok(Self(p))
    }

    pub fn point(&self) -> &Point3<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArcParams {
    Arc { alpha: f64, beta: f64, radius: f64 },
    /// Degenerate arc: the segment from the nozzle to `(0, 0, length)`.
    Straight { length: f64 },
}

fn rotate_z(beta: f64, v: Vector3<f64>) -> Vector3<f64> {
    let (s, c) = beta.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

impl ArcParams {
    pub fn arc(alpha: f64, beta: f64, radius: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < TAU) {
            return Err(Error::InvalidArc(format!("central angle {alpha} outside (0, 2π)")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArc(format!("radius {radius} must be positive")));
        }
        if !beta.is_finite() {
            return Err(Error::InvalidArc("non-finite rotation angle".into()));
        }
        Ok(Self::Arc {
            alpha,
            beta,
            radius,
        })
    }

    pub fn straight(length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArc(format!("length {length} must be positive")));
        }
        Ok(Self::Straight { length })
    }

    /// Inverts the midpoint representation. Midpoints within `eps_straight`
    /// (ratio of lateral offset to distance) of the Z axis give the straight
    /// degenerate of twice the midpoint height.
    pub fn from_midpoint(m: &ArcMidpoint, eps_straight: f64) -> Result<Self> {
        let p = m.point();
        let norm = p.coords.norm();
        if norm < 1e-9 {
            return Err(Error::ZeroMidpoint);
        }
        let lateral = p.x.hypot(p.y);
        let ratio = (lateral / norm).min(1.0);
        if ratio < eps_straight {
            return Self::straight(2.0 * p.z);
        }
        let alpha = 4.0 * ratio.asin();
        let beta = p.y.atan2(p.x);
        let radius = 0.5 * norm / (0.25 * alpha).sin();
        Self::arc(alpha, beta, radius)
    }

    pub fn midpoint(&self) -> ArcMidpoint {
        ArcMidpoint(self.point_at_length(0.5 * self.total_length()))
    }

    pub fn is_straight(&self) -> bool {
        matches!(self, Self::Straight { .. })
    }

    pub fn total_length(&self) -> f64 {
        match *self {
            Self::Arc { alpha, radius, .. } => alpha * radius,
            Self::Straight { length } => length,
        }
    }

    /// Arc center `X_O`; `None` for the straight degenerate.
    pub fn center(&self) -> Option<Point3<f64>> {
        match *self {
            Self::Arc { beta, radius, .. } => {
                Some(Point3::from(rotate_z(beta, Vector3::new(radius, 0.0, 0.0))))
            }
            Self::Straight { .. } => None,
        }
    }

    pub fn point_at_length(&self, l: f64) -> Point3<f64> {
        match *self {
            Self::Arc { beta, radius, .. } => {
                let a = l / radius;
                let local = Vector3::new(radius * (1.0 - a.cos()), 0.0, radius * a.sin());
                Point3::from(rotate_z(beta, local))
            }
            Self::Straight { .. } => Point3::new(0.0, 0.0, l),
        }
    }

    pub fn tangent_at_length(&self, l: f64) -> Vector3<f64> {
        match *self {
            Self::Arc { beta, radius, .. } => {
                let a = l / radius;
                rotate_z(beta, Vector3::new(a.sin(), 0.0, a.cos()))
            }
            Self::Straight { .. } => Vector3::z(),
        }
    }

    /// Angle of `p` about the arc center in the arc plane, measured from the
    /// nozzle. Only meaningful for arcs.
    pub(crate) fn local_angle(&self, p: &Point3<f64>) -> f64 {
        match *self {
            Self::Arc {
                alpha,
                beta,
                radius,
            } => {
                let q = rotate_z(-beta, p.coords);
                let a = q.z.atan2(radius - q.x);
                // Pick the turn representation nearest to [0, alpha].
                if a < 0.0 && a + TAU - alpha < -a {
                    a + TAU
                } else {
                    a
                }
            }
            Self::Straight { .. } => 0.0,
        }
    }

    /// Exact closest point on the (analytic) curve and its arc length.
    pub fn closest_point(&self, p: &Point3<f64>) -> (Point3<f64>, f64) {
        match *self {
            Self::Arc { alpha, radius, .. } => {
                let a = self.local_angle(p);
                let l = if (0.0..=alpha).contains(&a) {
                    a * radius
                } else {
                    let start = self.point_at_length(0.0);
                    let end = self.point_at_length(alpha * radius);
                    if (p - start).norm() <= (p - end).norm() {
                        0.0
                    } else {
                        alpha * radius
                    }
                };
                (self.point_at_length(l), l)
            }
            Self::Straight { length } => {
                let l = p.z.clamp(0.0, length);
                (Point3::new(0.0, 0.0, l), l)
            }
        }
    }

    /// Arc length from the nozzle to a point on the curve, via the chord
    /// `l = 2 r asin(|pc| / 2r)`. Rejects points farther than `tol` from the curve.
    pub fn arc_length_of(&self, pc: &Point3<f64>, tol: f64) -> Result<f64> {
        let (foot, l_foot) = self.closest_point(pc);
        let off = (pc - foot).norm();
        if off > tol {
            return Err(Error::OffCurve(off));
        }
        match *self {
            Self::Arc { radius, .. } => {
                // The chord relation only covers half a turn.
                if l_foot / radius > PI {
                    return Ok(l_foot);
                }
                let chord = pc.coords.norm();
                Ok(2.0 * radius * (chord / (2.0 * radius)).min(1.0).asin())
            }
            Self::Straight { .. } => Ok(pc.coords.norm()),
        }
    }

    /// `m` evenly spaced samples from the nozzle to the far end.
    pub fn sample(&self, m: usize) -> Result<CenterCurve> {
        if m < 2 {
            return Err(Error::EmptyCurve(m));
        }
        let total = self.total_length();
        let lengths: Vec<f64> = (0..m)
            .map(|i| total * i as f64 / (m - 1) as f64)
            .collect();
        let points = lengths.iter().map(|&l| self.point_at_length(l)).collect();
        Ok(CenterCurve {
            params: *self,
            points,
            lengths,
        })
    }
}

/// Polyline samples of the center curve with cumulative arc lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterCurve {
    pub params: ArcParams,
    pub points: Vec<Point3<f64>>,
    pub lengths: Vec<f64>,
}

impl CenterCurve {
    pub fn total_length(&self) -> f64 {
        *self.lengths.last().expect("curve has samples")
    }

    pub fn segment_tangent(&self, segment: usize) -> Vector3<f64> {
        (self.points[segment + 1] - self.points[segment]).normalize()
    }

    /// Arc length at a position inside a polyline segment.
    pub fn length_at(&self, segment: usize, t: f64) -> f64 {
        let l0 = self.lengths[segment];
        l0 + t * (self.lengths[segment + 1] - l0)
    }
}

pub fn arc_from_midpoint(m: &ArcMidpoint) -> Result<ArcParams> {
    ArcParams::from_midpoint(m, DEFAULT_STRAIGHT_EPS)
}

pub fn midpoint_from_arc(p: &ArcParams) -> ArcMidpoint {
    p.midpoint()
}

pub fn sample_center_curve(p: &ArcParams, m: usize) -> Result<CenterCurve> {
    p.sample(m)
}

pub fn arc_length_of(p: &ArcParams, pc: &Point3<f64>) -> Result<f64> {
    p.arc_length_of(pc, DEFAULT_ON_CURVE_TOL)
}
