use std::f64::consts::TAU;

use nalgebra::Point3;

use super::render::{render_mask, PixelRays};
use super::inscribed::InscribedWidths;
use super::{EstimatorConfig, StereoObservation};
use crate::error::Error;
use crate::error::Result;
use crate::model::{ArcMidpoint, ArcParams, FlameModel};
use crate::optim::NelderMead;
use crate::silhouette::{iou_of_masks, Silhouette};

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub model: FlameModel,
    /// Sum of the two view IoUs for the input model.
    pub initial_objective: f64,
    /// Sum of the two view IoUs for the returned model.
    pub objective: f64,
    pub evaluations: usize,
    /// Whether the returned model differs from the input.
    pub improved: bool,
    pub warning: Option<String>,
}

/// Sum of per-view reprojection IoUs, the quantity refinement maximizes.
pub fn refine_objective(model: &FlameModel, obs: &StereoObservation) -> f64 {
    Scorer::new(obs, 0).score(model)
}

/// Square dilation by `radius` pixels, as two separable max passes.
fn dilate(mask: &[bool], width: usize, radius: usize, out: &mut Vec<bool>) {
    out.clear();
    out.extend_from_slice(mask);
    if radius == 0 {
        return;
    }
    let height = mask.len() / width;
    let mut rows = vec![false; mask.len()];
    for y in 0..height {
        let row = &mask[y * width..(y + 1) * width];
        for x in 0..width {
            let (a, b) = (x.saturating_sub(radius), (x + radius).min(width - 1));
            rows[y * width + x] = row[a..=b].iter().any(|&v| v);
        }
    }
    for y in 0..height {
        let (a, b) = (y.saturating_sub(radius), (y + radius).min(height - 1));
        for x in 0..width {
            out[y * width + x] = (a..=b).any(|yy| rows[yy * width + x]);
        }
    }
}

struct View {
    rays: PixelRays,
    /// Observed mask dilated by the index in pixels.
    observed: Vec<Vec<bool>>,
}

struct Scorer {
    views: [View; 2],
    buf: Vec<bool>,
    grown: Vec<bool>,
}

impl Scorer {
    fn new(obs: &StereoObservation, max_radius: usize) -> Self {
        let view = |sil: &Silhouette, cam| {
            let observed = (0..=max_radius)
                .map(|r| {
                    let mut out = Vec::new();
                    dilate(sil.mask(), sil.width(), r, &mut out);
                    out
                })
                .collect();
            View {
                rays: PixelRays::new(cam),
                observed,
            }
        };
        Self {
            views: [view(&obs.sil1, &obs.cam1), view(&obs.sil2, &obs.cam2)],
            buf: Vec::new(),
            grown: Vec::new(),
        }
    }

    /// Summed IoU with both masks dilated by `radius`; 0 gives the exact objective.
    fn score_at(&mut self, model: &FlameModel, radius: usize) -> f64 {
        let mut total = 0.0;
        for view in &self.views {
            self.buf.resize(view.rays.len(), false);
            render_mask(model, &view.rays, &mut self.buf);
            let observed = &view.observed[radius];
            if radius == 0 {
                total += iou_of_masks(&self.buf, observed);
            } else {
                dilate(&self.buf, view.rays.camera().width, radius, &mut self.grown);
                total += iou_of_masks(&self.grown, observed);
            }
        }
        total
    }

    fn score(&mut self, model: &FlameModel) -> f64 {
        self.score_at(model, 0)
    }
}

/// How the tail of a decision vector sets the width profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Profile {
    /// One factor scaling the silhouettes' inscribed radii along the curve.
    Scaled,
    /// Widths at evenly spaced fractions of the curve length.
    Knots,
}

/// Maps decision vectors to models. A vector holds the spine (the midpoint,
/// or the axis depth for the straight model) followed by the width profile.
struct Decoder<'a> {
    cfg: &'a EstimatorConfig,
    inscribed: &'a InscribedWidths,
    line: bool,
}

impl Decoder<'_> {
    fn spine_dims(&self) -> usize {
        if self.line {
            1
        } else {
            3
        }
    }

    fn encode_spine(&self, fm: &FlameModel) -> Vec<f64> {
        if self.line {
            vec![0.5 * fm.arc().total_length()]
        } else {
            fm.midpoint().point().coords.iter().copied().collect()
        }
    }

    /// `model`'s widths at the knot fractions, after its spine.
    fn encode_knots(&self, model: &FlameModel) -> Vec<f64> {
        let mut x = self.encode_spine(model);
        let (k, total) = (self.cfg.knots, model.arc().total_length());
        x.extend((0..k).map(|i| model.width().mean(total * knot_fraction(i, k))));
        x
    }

    fn decode(&self, x: &[f64], profile: Profile) -> Result<FlameModel> {
        let (spine, widths) = x.split_at(self.spine_dims());
        let (arc, midpoint) = if self.line {
            (ArcParams::straight(2.0 * spine[0])?, None)
        } else {
            let m = ArcMidpoint::new(Point3::new(spine[0], spine[1], spine[2]))?;
            (ArcParams::from_midpoint(&m, self.cfg.straight_eps)?, Some(m))
        };
        let samples: Vec<(f64, f64)> = match profile {
            Profile::Scaled => {
                let curve = arc.sample(self.cfg.samples)?;
                // The radii cover the nozzle, so the anchor that closes sparse
                // point sets is not needed here.
                let mut s = self.inscribed.samples(&curve);
                s.iter_mut().for_each(|(_, w)| *w *= widths[0]);
                s
            }
            Profile::Knots => {
                let total = arc.total_length();
                let k = widths.len();
                widths.iter().enumerate().map(|(i, &w)| (total * knot_fraction(i, k), w)).collect()
            }
        };
        if samples.is_empty() {
            return Err(Error::InsufficientPoints(0));
        }
        let width = self.cfg.fit_widths(&samples)?;
        match midpoint {
            Some(m) => FlameModel::from_midpoint(m, width, self.cfg.samples),
            None => FlameModel::line(arc.total_length(), width, self.cfg.samples),
        }
    }

    /// Box and initial simplex steps around `x`. Knots stay within three
    /// times the largest starting width.
    fn bounds(&self, x: &[f64], profile: Profile) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let dims = self.spine_dims();
        let scale = x[..dims].iter().map(|v| v * v).sum::<f64>().sqrt();
        let reach = 0.5 * scale + 0.05;
        let (mut lower, mut upper, mut step) = (Vec::new(), Vec::new(), Vec::new());
        for (i, &v) in x[..dims].iter().enumerate() {
            let is_depth = self.line || i == 2;
            lower.push(if is_depth { (v - reach).max(1e-3) } else { v - reach });
            upper.push(v + reach);
            step.push((0.1 * scale).max(0.01));
        }
        let widest = x[dims..].iter().copied().fold(0.0, f64::max);
        for _ in dims..x.len() {
            match profile {
                Profile::Scaled => {
                    lower.push(FACTOR_RANGE.0);
                    upper.push(FACTOR_RANGE.1);
                    step.push(0.1);
                }
                Profile::Knots => {
                    lower.push(0.0);
                    upper.push((3.0 * widest).max(1e-3));
                    step.push((0.2 * widest).max(1e-3));
                }
            }
        }
        (lower, upper, step)
    }
}

fn knot_fraction(i: usize, k: usize) -> f64 {
    if k < 2 {
        0.5
    } else {
        i as f64 / (k - 1) as f64
    }
}

/// Bounds of the profile scale; inscribed radii read slightly small.
const FACTOR_RANGE: (f64, f64) = (0.5, 2.0);

/// Bend angles, headings and length factors of the coarse shape scan.
const SCAN_ALPHAS: [f64; 5] = [0.2, 0.5, 0.8, 1.1, 1.4];
const SCAN_BETAS: usize = 12;
const SCAN_LENGTHS: [f64; 3] = [0.7, 1.0, 1.4];

/// Midpoints of a coarse family of arcs around the current length. Centroid
/// triangulation misplaces strongly bent flames, so the search starts from
/// the best scanned shapes.
fn scan_midpoints(length: f64) -> Vec<Point3<f64>> {
    let mut out = Vec::with_capacity(SCAN_ALPHAS.len() * SCAN_BETAS * SCAN_LENGTHS.len());
    for &f in &SCAN_LENGTHS {
        for &alpha in &SCAN_ALPHAS {
            for k in 0..SCAN_BETAS {
                let beta = TAU * k as f64 / SCAN_BETAS as f64;
                if let Ok(arc) = ArcParams::arc(alpha, beta, f * length / alpha) {
                    out.push(*arc.midpoint().point());
                }
            }
        }
    }
    out
}

/// Shapes the first stage starts from: the input and the best scanned ones.
const STARTS: usize = 4;

/// Search stages: the width profile, the dilation radius in pixels, the
/// share of the iteration budget and how many of the previous stage's best
/// results it continues from. Thin silhouettes give the exact IoU no overlap
/// to follow until the shapes nearly coincide, so the curve is placed first
/// on dilated masks with the inscribed profile. Free knots then recover what
/// the inscribed radii miss, such as tips only a pixel or two wide.
const STAGES: [(Profile, usize, f64, usize); 4] = [
    (Profile::Scaled, 2, 0.25, STARTS),
    (Profile::Scaled, 1, 0.2, 2),
    (Profile::Scaled, 0, 0.2, 1),
    (Profile::Knots, 0, 0.35, 1),
];

fn distinct(x: &[f64], y: &[f64], dims: usize) -> bool {
    let d: f64 = x[..dims].iter().zip(&y[..dims]).map(|(a, b)| (a - b) * (a - b)).sum();
    d.sqrt() > 0.1 * y[..dims].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Maximizes the summed reprojection IoU over the center curve and the width
/// profile with bounded simplex searches. The returned model never scores
/// below the input.
pub fn joint_refine(fm: &FlameModel, obs: &StereoObservation, cfg: &EstimatorConfig) -> RefineOutcome {
    let mut scorer = Scorer::new(obs, STAGES[0].1);
    let initial_objective = scorer.score(fm);
    let unchanged = |evaluations| RefineOutcome {
        model: fm.clone(),
        initial_objective,
        objective: initial_objective,
        evaluations,
        improved: false,
        warning: None,
    };
    if cfg.refine_iters == 0 {
        return unchanged(1);
    }

    let inscribed = InscribedWidths::new(obs);
    let decoder = Decoder {
        cfg,
        inscribed: &inscribed,
        line: fm.is_line_kind(),
    };
    let dims = decoder.spine_dims();
    let mut evaluations = 1;
    let mut score = |x: &[f64], profile: Profile, radius: usize| match decoder.decode(x, profile) {
        Ok(m) => -scorer.score_at(&m, radius),
        Err(_) => f64::INFINITY,
    };

    // The input shape plus the best distinct scanned shapes.
    let mut first = decoder.encode_spine(fm);
    first.push(1.0);
    let mut starts = vec![first];
    if !decoder.line {
        let mut ranked: Vec<(f64, Vec<f64>)> = scan_midpoints(fm.arc().total_length())
            .iter()
            .map(|m| {
                let x = [m.coords.as_slice(), &[1.0]].concat();
                (score(&x, Profile::Scaled, STAGES[0].1), x)
            })
            .collect();
        evaluations += ranked.len();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (f, x) in ranked {
            if starts.len() < STARTS && f.is_finite() && starts.iter().all(|y| distinct(&x, y, dims)) {
                starts.push(x);
            }
        }
    }
    let mut candidates = starts;
    let mut current = Profile::Scaled;
    // Best exact objective over the stage results.
    let mut best: Option<(Vec<f64>, Profile, f64)> = None;
    let mut spent = 0;
    for (k, &(profile, radius, share, keep)) in STAGES.iter().enumerate() {
        let iters = if k + 1 == STAGES.len() {
            cfg.refine_iters - spent
        } else {
            ((cfg.refine_iters as f64 * share).ceil() as usize).min(cfg.refine_iters - spent)
        };
        spent += iters;
        if iters == 0 {
            continue;
        }
        let mut results = Vec::new();
        for x in candidates.iter().take(keep) {
            let x = if profile == current {
                x.clone()
            } else {
                match decoder.decode(x, current) {
                    Ok(m) => decoder.encode_knots(&m),
                    Err(_) => continue,
                }
            };
            let (lower, upper, step) = decoder.bounds(&x, profile);
            let nm = NelderMead {
                lower,
                upper,
                step,
                max_iters: iters,
                f_tol: 1e-9,
            };
            let m = nm.minimize(&x, |p| score(p, profile, radius));
            evaluations += m.evals;
            let exact = if radius == 0 {
                m.f
            } else {
                evaluations += 1;
                score(&m.x, profile, 0)
            };
            if best.as_ref().is_none_or(|b| exact <= b.2) {
                best = Some((m.x.clone(), profile, exact));
            }
            results.push((m.f, m.x));
        }
        if !results.is_empty() {
            results.sort_by(|a, b| a.0.total_cmp(&b.0));
            candidates = results.into_iter().map(|r| r.1).collect();
            current = profile;
        }
    }

    let Some((x, profile, f)) = best.filter(|b| -b.2 > initial_objective) else {
        return unchanged(evaluations);
    };
    match decoder.decode(&x, profile) {
        Ok(model) => RefineOutcome {
            model,
            initial_objective,
            objective: -f,
            evaluations,
            improved: true,
            warning: None,
        },
        Err(e) => RefineOutcome {
            warning: Some(format!("incumbent failed to rebuild: {e}")),
            ..unchanged(evaluations)
        },
    }
}
