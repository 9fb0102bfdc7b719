use std::io::Write;
use std::path::{Path, PathBuf};

use flamesurf::estimate::{estimate, reproject_silhouette, EstimatorConfig, StereoObservation};
use flamesurf::eval::{evaluate_manifest, EvalOptions, Manifest};
use flamesurf::geom::Rig;
use flamesurf::model::{FlameModel, FlameModelFile};
use flamesurf::silhouette::{encode_mask_pgm, read_pgm, threshold, write_pgm16, ThermalImage, DEFAULT_THRESHOLD};
use flamesurf::synth::{render_scene, SceneFile, SceneSpec};
use flamesurf::Error;

use crate::config::RunConfig;
use crate::{Command, EstimatorArgs};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_EMPTY_SILHOUETTE: u8 = 4;
pub const EXIT_DEGENERATE: u8 = 5;
pub const EXIT_INSUFFICIENT_POINTS: u8 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn bad_input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_BAD_INPUT,
            message: message.into(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::EmptySilhouette => EXIT_EMPTY_SILHOUETTE,
        Error::DegenerateGeometry(_) | Error::ZeroMidpoint => EXIT_DEGENERATE,
        Error::InsufficientPoints(_) => EXIT_INSUFFICIENT_POINTS,
        _ => EXIT_BAD_INPUT,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Attaches the path to errors raised while handling it.
fn at<T>(path: &Path, r: flamesurf::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure {
        code: exit_code(&e),
        message: format!("{}: {e}", path.display()),
    })
}

fn read_text(path: &Path) -> Outcome<String> {
    at(path, std::fs::read_to_string(path).map_err(Error::from))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::bad_input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome<()> {
    at(path, std::fs::write(path, bytes).map_err(Error::from))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Outcome<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::from(Error::Io(e))),
    }
}

fn load_rig(path: &Path) -> Outcome<Rig> {
    parse_json(path)
}

fn load_image(path: &Path) -> Outcome<ThermalImage> {
    at(path, read_pgm(path)).map(ThermalImage::from)
}

/// File configuration with command-line overrides applied.
struct Resolved {
    run: RunConfig,
    estimator: EstimatorConfig,
    threshold: u16,
}

fn load_config(path: &Path) -> Outcome<RunConfig> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::parse(&text, base).map_err(|e| Failure::bad_input(format!("{}: {e}", path.display())))
}

fn resolve(args: &EstimatorArgs) -> Outcome<Resolved> {
    let mut run = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(r) = &args.rig {
        run.rig = Some(r.clone());
    }
    let mut estimator = run.estimator.clone();
    if args.no_refine {
        estimator.refine = false;
    }
    estimator.validate()?;
    let threshold = args.threshold.or(run.threshold).unwrap_or(DEFAULT_THRESHOLD);
    Ok(Resolved {
        run,
        estimator,
        threshold,
    })
}

fn require_file(path: &Path) -> Outcome<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_IO,
            message: format!("{}: no such file", path.display()),
        })
    }
}

pub fn run(command: Command) -> Outcome<()> {
    match command {
        Command::Synth { spec, out, seed, config } => {
            let run = match &config {
                Some(p) => load_config(p)?,
                None => RunConfig::default(),
            };
            let out = out.or(run.out).ok_or_else(|| Failure::bad_input("--out is required"))?;
            synth(&spec, &out, seed.or(run.seed))
        }
        Command::Estimate { img1, img2, est, out } => estimate_cmd(&img1, &img2, &est, out),
        Command::Render { model, rig, view, out } => render(&model, &rig, view, out.as_deref()),
        Command::Eval {
            manifest,
            est,
            out,
            jobs,
            baseline,
            pooled,
            seed: _,
        } => eval(&manifest, &est, &out, jobs, baseline.into(), pooled),
    }
}

fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Outcome<()> {
    let file: SceneFile = parse_json(spec_path)?;
    let mut spec = SceneSpec::from_file(&file).map_err(|e| Failure::bad_input(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    at(out, std::fs::create_dir_all(out).map_err(Error::from))?;
    let (a, b) = render_scene(&spec);
    for (name, img) in [("view1.pgm", &a), ("view2.pgm", &b)] {
        let p = out.join(name);
        at(&p, write_pgm16(&p, img))?;
    }
    let rig = out.join("rig.json");
    at(&rig, spec.rig.save(&rig))?;
    let model = serde_json::to_string_pretty(&spec.model.to_file()).map_err(|e| Failure::from(Error::from(e)))?;
    write_file(&out.join("model.json"), (model + "\n").as_bytes())?;
    eprintln!("wrote view1.pgm, view2.pgm, rig.json and model.json to {}", out.display());
    Ok(())
}

fn estimate_cmd(img1: &Path, img2: &Path, args: &EstimatorArgs, out: Option<PathBuf>) -> Outcome<()> {
    let r = resolve(args)?;
    let rig_path = r
        .run
        .rig
        .clone()
        .ok_or_else(|| Failure::bad_input("--rig is required"))?;
    for p in [img1, img2, rig_path.as_path()] {
        require_file(p)?;
    }
    let out = out.or(r.run.out.clone());
    let rig = load_rig(&rig_path)?;
    let (a, b) = (load_image(img1)?, load_image(img2)?);
    let obs = StereoObservation::new(threshold(&a, r.threshold), threshold(&b, r.threshold), rig.cam1, rig.cam2)?;
    let e = estimate(&obs, &r.estimator)?;
    let d = &e.diagnostics;
    eprintln!(
        "points: {} two-view, {} one-view; IoU {:.3} / {:.3}; refined: {}",
        d.n_two_view, d.n_one_view, d.iou1, d.iou2, d.refined
    );
    if let Some(w) = e.refinement.as_ref().and_then(|r| r.warning.as_ref()) {
        eprintln!("warning: {w}");
    }
    let json = serde_json::to_string_pretty(&e.to_file()).map_err(|e| Failure::from(Error::from(e)))?;
    emit(out.as_deref(), (json + "\n").as_bytes())
}

fn render(model_path: &Path, rig_path: &Path, view: usize, out: Option<&Path>) -> Outcome<()> {
    let file: FlameModelFile = parse_json(model_path)?;
    let model = FlameModel::from_file(&file).map_err(|e| Failure::bad_input(format!("{}: {e}", model_path.display())))?;
    let rig = load_rig(rig_path)?;
    let cam = rig
        .view(view)
        .ok_or_else(|| Failure::bad_input(format!("view {view} out of range; the rig has views 1 and 2")))?;
    let sil = reproject_silhouette(&model, cam);
    emit(out, &encode_mask_pgm(&sil))
}

fn eval(
    manifest_path: &Path,
    args: &EstimatorArgs,
    out: &Path,
    jobs: Option<usize>,
    baseline: flamesurf::eval::Baseline,
    pooled: bool,
) -> Outcome<()> {
    let r = resolve(args)?;
    let manifest: Manifest = parse_json(manifest_path)?;
    if manifest.frames.is_empty() {
        return Err(Failure::bad_input(format!("{}: manifest lists no frames", manifest_path.display())));
    }
    let rig = match &r.run.rig {
        Some(p) => Some(load_rig(p)?),
        None => None,
    };
    let threshold = args.threshold.or(r.run.threshold);
    let opts = EvalOptions {
        baseline,
        jobs: jobs.or(r.run.jobs).unwrap_or(0),
        pooled,
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let report = evaluate_manifest(&manifest, base, rig.as_ref(), threshold, &r.estimator, &opts)?;
    for f in &report.summary.failures {
        eprintln!("frame {} ({}): {}", f.frame_id, f.model_kind, f.error);
    }
    at(out, report.write(out))?;
    for (kind, groups) in &report.summary.map {
        for (group, v) in groups {
            eprintln!("mAP {kind} {group}: {v:.4}");
        }
    }
    if report.all_failed() {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: "every frame failed".into(),
        });
    }
    Ok(())
}
