//! Scoring of reprojected silhouettes and the arc versus straight-line
//! comparison over a labeled set of frames.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit_flame, reproject_silhouette, EstimatorConfig, StereoObservation};
use crate::geom::Rig;
use crate::model::ModelKind;
use crate::silhouette::{mask_iou, read_pgm, threshold, Silhouette, ThermalImage, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    LightWind,
    StrongWind,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::LightWind => "light-wind",
            Label::StrongWind => "strong-wind",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// Stand-in for wind labels on synthetic scenes, from the bend angle.
    pub fn from_alpha(alpha: f64) -> Self {
        if alpha <= 0.3 {
            Label::LightWind
        } else if (0.5..=1.2).contains(&alpha) {
            Label::StrongWind
        } else {
            Label::Unlabeled
        }
    }
}

/// Pixel counts of one predicted mask against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViewCounts {
    pub intersection: usize,
    pub predicted: usize,
    pub truth: usize,
}

impl ViewCounts {
    fn of(pred: &Silhouette, gt: &Silhouette) -> Self {
        Self {
            intersection: pred.mask().iter().zip(gt.mask()).filter(|(a, b)| **a && **b).count(),
            predicted: pred.count(),
            truth: gt.count(),
        }
    }

    /// An empty prediction is right only when the truth is empty too.
    pub fn precision(&self) -> f64 {
        match (self.predicted, self.truth) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (p, _) => self.intersection as f64 / p as f64,
        }
    }

    pub fn recall(&self) -> f64 {
        match (self.truth, self.predicted) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (t, _) => self.intersection as f64 / t as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub iou1: f64,
    pub iou2: f64,
    pub precision1: f64,
    pub precision2: f64,
    pub label: Label,
    pub counts: [ViewCounts; 2],
}

impl FrameScore {
    /// Mean of the two per-view precisions.
    pub fn precision(&self) -> f64 {
        0.5 * (self.precision1 + self.precision2)
    }
}

pub fn frame_score(
    pred1: &Silhouette,
    pred2: &Silhouette,
    gt1: &Silhouette,
    gt2: &Silhouette,
    label: Label,
) -> Result<FrameScore> {
    let iou1 = mask_iou(pred1, gt1)?;
    let iou2 = mask_iou(pred2, gt2)?;
    let counts = [ViewCounts::of(pred1, gt1), ViewCounts::of(pred2, gt2)];
    Ok(FrameScore {
        iou1,
        iou2,
        precision1: counts[0].precision(),
        precision2: counts[1].precision(),
        label,
        counts,
    })
}

fn in_group(s: &FrameScore, group: Option<Label>) -> bool {
    group.is_none_or(|g| s.label == g)
}

fn group_name(group: Option<Label>) -> &'static str {
    group.map_or("all", Label::as_str)
}

/// Mean over frames of the per-frame precision; `None` selects every frame.
pub fn dataset_map(scores: &[FrameScore], group: Option<Label>) -> Result<f64> {
    let picked: Vec<f64> = scores.iter().filter(|s| in_group(s, group)).map(FrameScore::precision).collect();
    if picked.is_empty() {
        return Err(Error::EmptyGroup(group_name(group).into()));
    }
    Ok(picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Precision over all predicted pixels of the group, both views pooled.
pub fn pooled_map(scores: &[FrameScore], group: Option<Label>) -> Result<f64> {
    let mut any = false;
    let (mut inter, mut pred) = (0usize, 0usize);
    for s in scores.iter().filter(|s| in_group(s, group)) {
        any = true;
        for c in &s.counts {
            inter += c.intersection;
            pred += c.predicted;
        }
    }
    if !any {
        return Err(Error::EmptyGroup(group_name(group).into()));
    }
    Ok(if pred == 0 { 0.0 } else { inter as f64 / pred as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Straight,
    Arc,
    #[default]
    Both,
}

impl Baseline {
    pub fn kinds(self) -> &'static [ModelKind] {
        match self {
            Baseline::Straight => &[ModelKind::Line],
            Baseline::Arc => &[ModelKind::Arc],
            Baseline::Both => &[ModelKind::Arc, ModelKind::Line],
        }
    }
}

pub fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Arc => "arc",
        ModelKind::Line => "straight",
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub id: String,
    pub label: Label,
    pub obs: StereoObservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub baseline: Baseline,
    /// Worker threads across frames; zero uses the global pool.
    pub jobs: usize,
    /// Also report pixel-pooled precision.
    pub pooled: bool,
}

/// One model fitted to one frame, or the reason it could not be.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub frame_id: String,
    pub label: Label,
    pub kind: ModelKind,
    pub score: std::result::Result<FrameScore, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub frame_id: String,
    pub model_kind: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: usize,
    /// Mean per-frame precision by model kind, then by group.
    pub map: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled_map: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub outcomes: Vec<FrameOutcome>,
    pub summary: Summary,
}

fn score_frame(frame: &Frame, kind: ModelKind, cfg: &EstimatorConfig) -> Result<FrameScore> {
    let cfg = EstimatorConfig { model: kind, ..cfg.clone() };
    let model = fit_flame(&frame.obs, &cfg)?;
    let p1 = reproject_silhouette(&model, &frame.obs.cam1);
    let p2 = reproject_silhouette(&model, &frame.obs.cam2);
    frame_score(&p1, &p2, &frame.obs.sil1, &frame.obs.sil2, frame.label)
}

fn run_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Fits every requested model kind to every frame, in parallel across frames,
/// and summarizes precision per label group. Frame failures are recorded.
pub fn compare_models(frames: &[Frame], cfg: &EstimatorConfig, opts: &EvalOptions) -> Result<Report> {
    let loaded: Vec<std::result::Result<Frame, (String, Label, String)>> = frames.iter().cloned().map(Ok).collect();
    compare_loaded(loaded, cfg, opts)
}

fn compare_loaded(
    frames: Vec<std::result::Result<Frame, (String, Label, String)>>,
    cfg: &EstimatorConfig,
    opts: &EvalOptions,
) -> Result<Report> {
    if frames.is_empty() {
        return Err(Error::EmptyGroup("all".into()));
    }
    cfg.validate()?;
    let kinds = opts.baseline.kinds();
    let outcomes: Vec<FrameOutcome> = run_pool(opts.jobs, || {
        frames
            .par_iter()
            .flat_map_iter(|f| {
                kinds.iter().map(move |&kind| match f {
                    Ok(frame) => FrameOutcome {
                        frame_id: frame.id.clone(),
                        label: frame.label,
                        kind,
                        score: score_frame(frame, kind, cfg).map_err(|e| e.to_string()),
                    },
                    Err((id, label, err)) => FrameOutcome {
                        frame_id: id.clone(),
                        label: *label,
                        kind,
                        score: Err(err.clone()),
                    },
                })
            })
            .collect()
    });
    let summary = summarize(frames.len(), &outcomes, kinds, opts.pooled);
    Ok(Report { outcomes, summary })
}

fn summarize(frames: usize, outcomes: &[FrameOutcome], kinds: &[ModelKind], pooled: bool) -> Summary {
    let groups = [None, Some(Label::LightWind), Some(Label::StrongWind), Some(Label::Unlabeled)];
    let mut map = BTreeMap::new();
    let mut pooled_out = BTreeMap::new();
    for &kind in kinds {
        let scores: Vec<FrameScore> = outcomes
            .iter()
            .filter(|o| o.kind == kind)
            .filter_map(|o| o.score.as_ref().ok().copied())
            .collect();
        let by_group = |f: fn(&[FrameScore], Option<Label>) -> Result<f64>| {
            groups
                .iter()
                .filter_map(|&g| f(&scores, g).ok().map(|v| (group_name(g).to_string(), v)))
                .collect::<BTreeMap<_, _>>()
        };
        map.insert(kind_name(kind).to_string(), by_group(dataset_map));
        if pooled {
            pooled_out.insert(kind_name(kind).to_string(), by_group(pooled_map));
        }
    }
    let failures = outcomes
        .iter()
        .filter_map(|o| {
            o.score.as_ref().err().map(|e| Failure {
                frame_id: o.frame_id.clone(),
                model_kind: kind_name(o.kind).into(),
                error: e.clone(),
            })
        })
        .collect();
    Summary {
        frames,
        map,
        pooled_map: pooled.then_some(pooled_out),
        failures,
    }
}

impl Report {
    /// Whether every fit of every frame failed.
    pub fn all_failed(&self) -> bool {
        self.outcomes.iter().all(|o| o.score.is_err())
    }

    /// One row per successful fit.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frame_id", "label", "model_kind", "precision1", "precision2", "iou1", "iou2"])
            .map_err(csv_error)?;
        for o in &self.outcomes {
            if let Ok(s) = &o.score {
                w.write_record([
                    o.frame_id.as_str(),
                    o.label.as_str(),
                    kind_name(o.kind),
                    &s.precision1.to_string(),
                    &s.precision2.to_string(),
                    &s.iou1.to_string(),
                    &s.iou2.to_string(),
                ])
                .map_err(csv_error)?;
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)? + "\n")
    }

    /// Writes `report.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    pub id: String,
    pub img1: PathBuf,
    pub img2: PathBuf,
    #[serde(default)]
    pub label: Label,
}

/// Frames to evaluate. Relative paths resolve against the manifest's folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rig: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u16>,
    pub frames: Vec<ManifestFrame>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_frame(f: &ManifestFrame, base: &Path, rig: &Rig, t: u16) -> Result<Frame> {
    let a = ThermalImage::from(read_pgm(&resolve(base, &f.img1))?);
    let b = ThermalImage::from(read_pgm(&resolve(base, &f.img2))?);
    let obs = StereoObservation::new(threshold(&a, t), threshold(&b, t), rig.cam1, rig.cam2)?;
    Ok(Frame {
        id: f.id.clone(),
        label: f.label,
        obs,
    })
}

/// Loads and evaluates every manifest frame. A frame that fails to load is
/// recorded as failed for each model kind. `rig` and `t` override the
/// manifest's own.
pub fn evaluate_manifest(
    manifest: &Manifest,
    base: &Path,
    rig: Option<&Rig>,
    t: Option<u16>,
    cfg: &EstimatorConfig,
    opts: &EvalOptions,
) -> Result<Report> {
    if manifest.frames.is_empty() {
        return Err(Error::EmptyGroup("all".into()));
    }
    let rig = match (rig, &manifest.rig) {
        (Some(r), _) => *r,
        (None, Some(p)) => Rig::load(&resolve(base, p))?,
        (None, None) => return Err(Error::InvalidConfig("no rig given".into())),
    };
    let t = t.or(manifest.threshold).unwrap_or(DEFAULT_THRESHOLD);
    let frames = manifest
        .frames
        .iter()
        .map(|f| load_frame(f, base, &rig, t).map_err(|e| (f.id.clone(), f.label, e.to_string())))
        .collect();
    compare_loaded(frames, cfg, opts)
}
