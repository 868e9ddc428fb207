use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use partlift::backends::{
    Detector, NoiseParams, NoisyDetector, NoisySegmenter, OracleDetector, OracleSegmenter, RemoteClient, Segmenter,
};
use partlift::extension::{ExtensionConfig, FailurePolicy};
use partlift::formats::{self, PartsFile, PlyEncoding};
use partlift::geometry::normalize_to_unit_sphere;
use partlift::labeling::LabelingConfig;
use partlift::metrics::{evaluate, EvalInput};
use partlift::multiview::{
    place_viewpoints, render as render_view, RenderSettings, DEFAULT_CAMERA_DISTANCE, DEFAULT_SPLAT_RADIUS,
};
use partlift::pipeline::{self, PipelineError, Prepared};
use partlift::scenes::{generate_scene, SceneSpec};
use partlift::{ColoredPointCloud, GroundTruth, Part3D, PipelineConfig, TextPrompt};
use thiserror::Error;

use crate::{
    BackendArgs, EvalArgs, GenArgs, LabelArgs, LabelOpts, PipelineArgs, RenderArgs, SegmentArgs, SegmentOpts, ViewArgs,
};

#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Input(String),
    #[error("backend: {0}")]
    Backend(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Backend(_) => 3,
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_backend() {
            Self::Backend(e.to_string())
        } else {
            Self::Input(e.to_string())
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub enum BackendSpec {
    Oracle,
    /// Noise parameters, and whether the spec named its own seed.
    Noisy(NoiseParams, bool),
    Remote(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "oracle" if rest.is_empty() => Ok(Self::Oracle),
            "noisy" => {
                let seeded = rest.split(',').any(|kv| kv.trim().starts_with("seed="));
                Ok(Self::Noisy(rest.parse()?, seeded))
            }
            "remote" if !rest.is_empty() => Ok(Self::Remote(rest.to_string())),
            "remote" => Err("remote needs a URL, e.g. remote:http://localhost:8000".into()),
            _ => Err(format!("unknown backend `{s}` (expected oracle, noisy[:params] or remote:<url>)")),
        }
    }
}

struct Backends {
    segmenter: Box<dyn Segmenter>,
    detector: Box<dyn Detector>,
}

fn backends(args: &BackendArgs, num_points: usize) -> Result<Backends, Failure> {
    let gt = || -> Result<Arc<GroundTruth>, Failure> {
        let path = args.gt.as_ref().ok_or_else(|| Failure::Input("this backend needs --gt".into()))?;
        let gt = read_gt(path)?;
        if gt.num_points() != num_points {
            return Err(input_err(path, format!("{} labels for a cloud of {num_points} points", gt.num_points())));
        }
        Ok(Arc::new(gt))
    };
    Ok(match &args.backend {
        BackendSpec::Oracle => {
            let gt = gt()?;
            Backends {
                segmenter: Box::new(OracleSegmenter::new(gt.clone())),
                detector: Box::new(OracleDetector::new(gt)),
            }
        }
        BackendSpec::Noisy(params, seeded) => {
            let gt = gt()?;
            let params = NoiseParams { seed: if *seeded { params.seed } else { args.seed }, ..*params };
            Backends {
                segmenter: Box::new(NoisySegmenter::new(gt.clone(), params)),
                detector: Box::new(NoisyDetector::new(gt, params)),
            }
        }
        BackendSpec::Remote(url) => {
            let client = Arc::new(RemoteClient::new(url.clone()));
            Backends { segmenter: Box::new(client.clone()), detector: Box::new(client) }
        }
    })
}

fn read_cloud(path: &Path) -> Result<ColoredPointCloud, Failure> {
    let file = File::open(path).map_err(|e| input_err(path, e))?;
    formats::read_ply(BufReader::new(file)).map_err(|e| input_err(path, e))
}

fn read_gt(path: &Path) -> Result<GroundTruth, Failure> {
    let file = File::open(path).map_err(|e| input_err(path, e))?;
    formats::read_ground_truth(BufReader::new(file)).map_err(|e| input_err(path, e))
}

fn read_parts(path: &Path) -> Result<PartsFile, Failure> {
    let file = File::open(path).map_err(|e| input_err(path, e))?;
    formats::read_parts(BufReader::new(file)).map_err(|e| input_err(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| input_err(path, e))
}

fn config(
    views: &ViewArgs,
    backend: &BackendArgs,
    segment: Option<&SegmentOpts>,
    label: Option<&LabelOpts>,
) -> Result<PipelineConfig, Failure> {
    let on_failure = if backend.skip_failed_views { FailurePolicy::SkipView } else { FailurePolicy::Abort };
    let mut cfg = PipelineConfig { views: views.views, resolution: views.resolution, ..Default::default() };
    if let Some(s) = segment {
        if !(0.0..=1.0).contains(&s.merge_threshold) {
            return Err(Failure::Input(format!("merge threshold {} is outside [0, 1]", s.merge_threshold)));
        }
        cfg.merge_threshold = s.merge_threshold;
        cfg.extension = ExtensionConfig {
            fps_count: s.fps_count,
            sve_fps_count: s.sve_fps_count,
            extend: !s.no_extend,
            on_failure,
            ..cfg.extension
        };
    }
    if let Some(l) = label {
        cfg.labeling = LabelingConfig { use_cnvp: !l.no_cnvp, vote_mode: l.vote_mode, on_failure };
    }
    Ok(cfg)
}

fn prompt(opts: &LabelOpts, backend: &BackendArgs) -> Result<TextPrompt, Failure> {
    match (&opts.prompt, &backend.gt) {
        (Some(text), _) => TextPrompt::parse(text).map_err(|e| Failure::Input(format!("prompt: {e}"))),
        (None, Some(gt)) => {
            read_gt(gt)?.prompt().map_err(|e| Failure::Input(format!("prompt from {}: {e}", gt.display())))
        }
        (None, None) => Err(Failure::Input("--prompt is required without --gt".into())),
    }
}

fn prepare(cloud: &ColoredPointCloud, cfg: &PipelineConfig) -> Result<Prepared, Failure> {
    let t0 = Instant::now();
    let prep = pipeline::prepare(cloud, cfg)?;
    log::info!("rendered {} views at {}px in {:.2?}", prep.viewpoints.len(), cfg.resolution, t0.elapsed());
    Ok(prep)
}

fn run_segment(prep: &Prepared, segmenter: &dyn Segmenter, cfg: &PipelineConfig) -> Result<Vec<Part3D>, Failure> {
    let t0 = Instant::now();
    let out = pipeline::segment(prep, segmenter, cfg)?;
    log::info!(
        "segmented in {:.2?}: {} groups, {} SVE extensions applied, {} parts",
        t0.elapsed(),
        out.stats.groups,
        out.stats.extensions,
        out.parts.len()
    );
    Ok(out.parts)
}

fn run_label(
    prep: &Prepared,
    parts: &[Part3D],
    detector: &dyn Detector,
    prompt: &TextPrompt,
    cfg: &PipelineConfig,
    opts: &LabelOpts,
) -> Result<Vec<Part3D>, Failure> {
    let t0 = Instant::now();
    let out = pipeline::label(prep, parts, detector, prompt, cfg)?;
    log::info!(
        "labeled in {:.2?}: {} boxes, {} discarded by cross-space matching, {} of {} parts labeled",
        t0.elapsed(),
        out.boxes,
        out.discarded,
        out.parts.iter().filter(|p| p.label.is_some()).count(),
        out.parts.len()
    );
    let part_names: Vec<String> = parts.iter().map(|p| format!("part_{}", p.part_id)).collect();
    if let Some(path) = &opts.votes_csv {
        write(path, formats::matrix_csv(prompt.class_names(), &part_names, &out.votes.to_rows()))?;
    }
    if let Some(path) = &opts.decision_csv {
        write(path, formats::matrix_csv(prompt.class_names(), &part_names, &out.decision.to_rows()))?;
    }
    Ok(out.parts)
}

pub fn gen(a: GenArgs) -> Result<(), Failure> {
    let mut spec = SceneSpec::new(a.template, a.seed).with_points(a.points);
    spec.colors = a.colors;
    if let Some(r) = a.rotate {
        spec = spec.with_rotation([r[0], r[1], r[2]]);
    }
    let (cloud, gt) = generate_scene(&spec).map_err(|e| Failure::Input(e.to_string()))?;
    let encoding = if a.ascii { PlyEncoding::Ascii } else { PlyEncoding::BinaryLittleEndian };
    write(&a.out, formats::write_ply(&cloud, encoding))?;
    let gt_path = a.gt_out.unwrap_or_else(|| sidecar_path(&a.out));
    write(&gt_path, formats::write_ground_truth(&gt))?;
    log::info!("{} with {} points written to {} and {}", a.template, cloud.len(), a.out.display(), gt_path.display());
    Ok(())
}

/// `mug.ply` -> `mug.gt.json`.
fn sidecar_path(cloud: &Path) -> PathBuf {
    cloud.with_extension("gt.json")
}

pub fn render(a: RenderArgs) -> Result<(), Failure> {
    let cloud = read_cloud(&a.input)?;
    let viewpoints =
        place_viewpoints(a.views.views, DEFAULT_CAMERA_DISTANCE).map_err(|e| Failure::Input(e.to_string()))?;
    if a.views.resolution == 0 {
        return Err(Failure::Input("resolution must be positive".into()));
    }
    let selected: Vec<_> = if a.view_ids.is_empty() {
        viewpoints
    } else {
        a.view_ids
            .iter()
            .map(|&id| {
                viewpoints
                    .iter()
                    .find(|v| v.id == id)
                    .copied()
                    .ok_or_else(|| Failure::Input(format!("no viewpoint {id} among {} views", viewpoints.len())))
            })
            .collect::<Result<_, _>>()?
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| input_err(&a.out_dir, e))?;
    let (normalized, _) = normalize_to_unit_sphere(&cloud);
    let settings = RenderSettings { resolution: a.views.resolution, splat_radius: DEFAULT_SPLAT_RADIUS };
    for vp in selected {
        let rp = render_view(&normalized, &vp, settings);
        let stem = a.out_dir.join(format!("view_{:02}", vp.id));
        write(&stem.with_extension("png"), formats::encode_png(&rp).map_err(|e| Failure::Input(e.to_string()))?)?;
        write(&stem.with_extension("idx"), formats::encode_index_map(&rp))?;
        log::info!("view {}: {} visible points", vp.id, rp.visible().len());
    }
    Ok(())
}

pub fn segment(a: SegmentArgs) -> Result<(), Failure> {
    let cloud = read_cloud(&a.input)?;
    let cfg = config(&a.views, &a.backend, Some(&a.segment), None)?;
    let b = backends(&a.backend, cloud.len())?;
    let prep = prepare(&cloud, &cfg)?;
    let parts = run_segment(&prep, b.segmenter.as_ref(), &cfg)?;
    write(&a.out, formats::write_parts(&PartsFile::from_parts(cloud.len(), &parts)))
}

pub fn label(a: LabelArgs) -> Result<(), Failure> {
    let cloud = read_cloud(&a.input)?;
    let cfg = config(&a.views, &a.backend, None, Some(&a.label))?;
    let prompt = prompt(&a.label, &a.backend)?;
    let file = read_parts(&a.parts)?;
    if file.num_points != cloud.len() {
        return Err(input_err(&a.parts, format!("covers {} points, the cloud has {}", file.num_points, cloud.len())));
    }
    let parts = file.to_parts(prompt.class_names()).map_err(|e| input_err(&a.parts, e))?;
    let b = backends(&a.backend, cloud.len())?;
    let prep = prepare(&cloud, &cfg)?;
    let labeled = run_label(&prep, &parts, b.detector.as_ref(), &prompt, &cfg, &a.label)?;
    write(&a.out, formats::write_parts(&PartsFile::from_labeled(cloud.len(), &labeled, prompt.class_names())))
}

pub fn pipeline(a: PipelineArgs) -> Result<(), Failure> {
    let cloud = read_cloud(&a.input)?;
    let cfg = config(&a.views, &a.backend, Some(&a.segment), Some(&a.label))?;
    let prompt = prompt(&a.label, &a.backend)?;
    let b = backends(&a.backend, cloud.len())?;
    let prep = prepare(&cloud, &cfg)?;
    let parts = run_segment(&prep, b.segmenter.as_ref(), &cfg)?;
    if let Some(path) = &a.parts_out {
        write(path, formats::write_parts(&PartsFile::from_parts(cloud.len(), &parts)))?;
    }
    let labeled = run_label(&prep, &parts, b.detector.as_ref(), &prompt, &cfg, &a.label)?;
    write(&a.out, formats::write_parts(&PartsFile::from_labeled(cloud.len(), &labeled, prompt.class_names())))
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    if a.pred.len() != a.gt.len() {
        return Err(Failure::Input(format!("{} prediction files but {} ground-truth files", a.pred.len(), a.gt.len())));
    }
    let mut loaded = Vec::new();
    for (pred_path, gt_path) in a.pred.iter().zip(&a.gt) {
        let gt = read_gt(gt_path)?;
        let file = read_parts(pred_path)?;
        if file.num_points != gt.num_points() {
            return Err(input_err(
                pred_path,
                format!("covers {} points, {} has {}", file.num_points, gt_path.display(), gt.num_points()),
            ));
        }
        let parts = file.to_parts(&gt.classes).map_err(|e| input_err(pred_path, e))?;
        let name =
            pred_path.file_stem().map_or_else(|| pred_path.display().to_string(), |s| s.to_string_lossy().into_owned());
        loaded.push((name, file.is_labeled(), parts, gt));
    }
    let inputs: Vec<EvalInput> = loaded
        .iter()
        .map(|(name, labeled, parts, gt)| EvalInput { name: name.clone(), parts, gt, labeled: *labeled })
        .collect();
    let report = evaluate(&inputs);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}
