//! Flame representation: circular-arc center curve, GP width function and the
//! implicit boundary surface built from them.

mod arc;
mod flame;
mod width;

pub use arc::{
    arc_from_midpoint, arc_length_of, midpoint_from_arc, sample_center_curve, ArcMidpoint,
    ArcParams, CenterCurve, DEFAULT_ON_CURVE_TOL, DEFAULT_STRAIGHT_EPS,
};
pub use flame::{surface_value, FlameModel, FlameModelFile, ModelKind, DEFAULT_CURVE_SAMPLES};
pub use width::{
    width_fit, width_predict, Kernel, KernelKind, WidthFile, WidthModel, DEFAULT_LENGTH_SCALE,
    DEFAULT_SIGMA_F, DEFAULT_SIGMA_N,
};
