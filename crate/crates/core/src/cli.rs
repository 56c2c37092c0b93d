//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 success, 1 usage error, 2 data or
//! validation error, 3 internal failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::anatomy::{ContainmentParams, DiaphragmParams};
use crate::error::{Error, Result};
use crate::ingest::{assemble_study, load_mask, load_manifest, probe_dims, Dims, Spacing};
use crate::losses::{gradient_check, random_input, Loss, LossInput};
use crate::measurement::{measure_study, MeasureParams};
use crate::metrics::{
    coco_thresholds, confusion_counts, det_table_csv, detection_eval, seg_metrics, seg_table_csv,
    stage_report, stage_table_csv, confusion_csv, ConfusionCounts, DetectionSet,
};
use crate::phantom::{load_spec, write_phantom, PhantomSpec};
use crate::preprocess::{load_hu, preprocess_slice, save_image8, ClaheSpec, WindowSpec};
use crate::report::{write_overlays, StageReportFile};
use crate::staging::{stage_study, StagingRules, TStage};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "TSTAGE_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "tstage", version, about = "Lung-tumor T-staging from segmentation masks")]
struct Cli {
    /// Worker threads (default: $TSTAGE_WORKERS, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stage one or more studies and write JSON reports.
    Stage(StageArgs),
    /// Per-slice measurements of one study as CSV.
    Measure(MeasureArgs),
    /// Evaluation tables.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Window, equalize and resize one CT slice.
    Preprocess(PreprocessArgs),
    /// Write synthetic studies with ground truth.
    Phantom(PhantomArgs),
    /// Loss diagnostics.
    #[command(subcommand)]
    Losses(LossesCmd),
}

#[derive(Args, Debug)]
struct AnatomyArgs {
    /// Diaphragm band height as a fraction of each lung's height.
    #[arg(long, default_value_t = DiaphragmParams::default().band_fraction)]
    band_fraction: f64,
    /// Clearance the tumor needs from the lung boundary to count as surrounded.
    #[arg(long, default_value_t = 0.0)]
    margin_mm: f64,
}

impl AnatomyArgs {
    fn params(&self) -> (DiaphragmParams, ContainmentParams) {
        (
            DiaphragmParams { band_fraction: self.band_fraction },
            ContainmentParams { margin_mm: self.margin_mm },
        )
    }
}

#[derive(Args, Debug)]
struct StageArgs {
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    /// JSON file overriding individual staging rule fields.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Report path; a directory when several manifests are given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-slice overlay PNGs here (one subdirectory per study when
    /// several manifests are given).
    #[arg(long)]
    overlay_dir: Option<PathBuf>,
    #[command(flatten)]
    anatomy: AnatomyArgs,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    invasion_threshold_mm: f64,
    #[command(flatten)]
    anatomy: AnatomyArgs,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, Default)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum MetricsCmd {
    /// Mask PNGs, or directories of PNGs paired by file name.
    Seg(PairArgs),
    /// Detection JSON files, joined by image_id.
    Det(PairArgs),
    /// `study_id,stage` CSV files, joined by study_id.
    Stage {
        #[command(flatten)]
        pair: PairArgs,
        /// Also write the confusion matrix as CSV.
        #[arg(long)]
        confusion_out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// 16-bit HU PNG or `HUGRID` text file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// WIDTH:CENTER in HU.
    #[arg(long, default_value = "1400:-700", value_parser = parse_window, allow_hyphen_values = true)]
    window: WindowSpec,
    /// CLIP:ROWSxCOLS.
    #[arg(long, default_value = "1.0:16x16", value_parser = parse_clahe)]
    clahe: ClaheSpec,
    #[arg(long, conflicts_with = "clahe")]
    no_clahe: bool,
    /// N or ROWSxCOLS.
    #[arg(long, value_parser = parse_dims)]
    resize: Option<Dims>,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// Phantom spec JSON; random when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random phantoms, seeds `seed..seed+count`, one directory each.
    #[arg(long, conflicts_with = "spec")]
    count: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum LossesCmd {
    /// Compare analytic gradients with central finite differences.
    Check {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_window(s: &str) -> std::result::Result<WindowSpec, String> {
    let (w, c) = s.split_once(':').ok_or("expected WIDTH:CENTER")?;
    let width_hu: f64 = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let center_hu: f64 = c.parse().map_err(|_| format!("bad center {c:?}"))?;
    if !(width_hu > 0.0) {
        return Err("width must be > 0".into());
    }
    Ok(WindowSpec { width_hu, center_hu })
}

fn parse_clahe(s: &str) -> std::result::Result<ClaheSpec, String> {
    let (clip, grid) = s.split_once(':').ok_or("expected CLIP:ROWSxCOLS")?;
    let clip_limit: f64 = clip.parse().map_err(|_| format!("bad clip limit {clip:?}"))?;
    let d = parse_dims(grid)?;
    Ok(ClaheSpec { clip_limit, tile_grid: (d.rows, d.cols) })
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let parse = |v: &str| v.parse::<usize>().ok().filter(|&n| n > 0).ok_or(format!("bad size {v:?}"));
    match s.split_once(['x', 'X']) {
        Some((r, c)) => Ok(Dims::new(parse(r)?, parse(c)?)),
        None => {
            let n = parse(s)?;
            Ok(Dims::new(n, n))
        }
    }
}

enum Failure {
    Usage(String),
    Data(Error),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Runs the CLI with process stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let workers = match cli.workers.map(Ok).or_else(|| {
        std::env::var(WORKERS_ENV).ok().map(|v| v.parse::<usize>().map_err(|_| v))
    }) {
        None => 0,
        Some(Ok(n)) => n,
        Some(Err(v)) => {
            let _ = writeln!(err, "error: {WORKERS_ENV}={v:?} is not a worker count");
            return 1;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "internal error: {e}");
            return 3;
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        pool.install(|| dispatch(cli.command, &mut buf))
    }));
    if out.write_all(&buf).is_err() {
        return 3;
    }
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(Failure::Usage(m))) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Ok(Err(Failure::Data(e))) => {
            let _ = writeln!(err, "error: {}", chain(&e));
            2
        }
        Ok(Err(Failure::Internal(m))) => {
            let _ = writeln!(err, "internal error: {m}");
            3
        }
        Err(_) => {
            let _ = writeln!(err, "internal error: unexpected panic");
            3
        }
    }
}

fn chain(e: &Error) -> String {
    let mut s = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(inner) = src {
        if !s.contains(&inner.to_string()) {
            s.push_str(": ");
            s.push_str(&inner.to_string());
        }
        src = inner.source();
    }
    s
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult {
    match cmd {
        Command::Stage(a) => stage(a, out),
        Command::Measure(a) => measure(a, out),
        Command::Metrics(m) => metrics(m, out),
        Command::Preprocess(a) => preprocess(a),
        Command::Phantom(a) => phantom(a, out),
        Command::Losses(LossesCmd::Check { trials, seed }) => losses_check(trials, seed, out),
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => out.write_all(text.as_bytes()).map_err(|e| Failure::Internal(e.to_string())),
    }
}

fn load_rules(path: Option<&Path>) -> Result<StagingRules> {
    let Some(path) = path else {
        return Ok(StagingRules::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rules: StagingRules =
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    rules.validate()?;
    Ok(rules)
}

fn stage(a: StageArgs, out: &mut dyn Write) -> CliResult {
    let rules = load_rules(a.rules.as_deref())?;
    let (diaphragm, containment) = a.anatomy.params();
    let many = a.manifest.len() > 1;
    if many && a.out.as_ref().is_some_and(|p| p.is_file()) {
        return Err(Failure::Usage("--out must be a directory when several manifests are given".into()));
    }
    if many {
        for dir in a.out.iter().chain(&a.overlay_dir) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let reports = a
        .manifest
        .par_iter()
        .map(|m| -> Result<StageReportFile> {
            let study = assemble_study(&load_manifest(m)?)?;
            let report = StageReportFile::new(stage_study(&study, &rules, diaphragm, containment)?);
            if let Some(dir) = &a.overlay_dir {
                let dir = if many { dir.join(&report.report.study_id) } else { dir.clone() };
                write_overlays(&study, diaphragm, dir)?;
            }
            if let Some(path) = &a.out {
                let path = if many { path.join(format!("{}.json", report.report.study_id)) } else { path.clone() };
                report.save(path)?;
            }
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    if !many && a.out.is_none() {
        return emit(&reports[0].to_json(), None, out);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["study_id", "stage", "fired_rule", "size_mm"]).expect("in-memory");
    for r in &reports {
        let r = &r.report;
        w.write_record([
            r.study_id.clone(),
            r.stage().to_string(),
            r.decision.fired_rule.clone(),
            format!("{:.4}", r.properties.size_mm),
        ])
        .expect("in-memory");
    }
    emit(&String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8"), None, out)
}

fn measure(a: MeasureArgs, out: &mut dyn Write) -> CliResult {
    let (diaphragm, containment) = a.anatomy.params();
    let params = MeasureParams { diaphragm, containment, invasion_threshold_mm: a.invasion_threshold_mm };
    let study = assemble_study(&load_manifest(&a.manifest)?)?;
    let m = measure_study(&study, &params)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &m.slices {
        w.serialize(s).map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let text = String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8");
    emit(&text, a.out.as_deref(), out)
}

fn metrics(cmd: MetricsCmd, out: &mut dyn Write) -> CliResult {
    match cmd {
        MetricsCmd::Seg(p) => {
            let pairs = mask_pairs(&p.pred, &p.gt)?;
            let mut rows = Vec::new();
            let mut pooled = ConfusionCounts::default();
            for (name, pred, gt) in &pairs {
                let dims = probe_dims(gt)?;
                let c = confusion_counts(&load_mask(pred, dims)?, &load_mask(gt, dims)?)?;
                pooled = pooled + c;
                rows.push((name.clone(), seg_metrics(&c)));
            }
            if rows.len() > 1 {
                rows.push(("pooled".into(), seg_metrics(&pooled)));
            }
            let text = match p.format {
                Format::Csv => seg_table_csv(&rows),
                Format::Json => to_json(&rows.iter().map(|(n, m)| serde_json::json!({"name": n, "metrics": m})).collect::<Vec<_>>()),
            };
            emit(&text, p.out.as_deref(), out)
        }
        MetricsCmd::Det(p) => {
            let set = join_detections(&read_json::<DetectionSet>(&p.pred)?, &read_json::<DetectionSet>(&p.gt)?);
            let report = detection_eval(&set, &coco_thresholds())?;
            let text = match p.format {
                Format::Csv => det_table_csv(&[("all".into(), report)]),
                Format::Json => to_json(&report),
            };
            emit(&text, p.out.as_deref(), out)
        }
        MetricsCmd::Stage { pair: p, confusion_out } => {
            let pred = read_stage_csv(&p.pred)?;
            let gt = read_stage_csv(&p.gt)?;
            if pred.len() != gt.len() {
                return Err(Error::LengthMismatch { left: pred.len(), right: gt.len() }.into());
            }
            let mut pred_stages = Vec::with_capacity(gt.len());
            for (id, _) in &gt {
                let s = pred.iter().find(|(pid, _)| pid == id).map(|(_, s)| *s).ok_or_else(|| {
                    Error::validation("study_id", format!("{id:?} has no prediction in {}", p.pred.display()))
                })?;
                pred_stages.push(s);
            }
            let gt_stages: Vec<TStage> = gt.iter().map(|(_, s)| *s).collect();
            let table = stage_report(&pred_stages, &gt_stages)?;
            if let Some(path) = &confusion_out {
                emit(&confusion_csv(&table), Some(path), out)?;
            }
            let text = match p.format {
                Format::Csv => stage_table_csv(&table),
                Format::Json => to_json(&table),
            };
            emit(&text, p.out.as_deref(), out)
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}

/// Ground-truth images in order, each with the predictions of the same
/// `image_id`; prediction-only images are appended.
fn join_detections(pred: &DetectionSet, gt: &DetectionSet) -> DetectionSet {
    let mut images = gt.images.clone();
    for img in &mut images {
        img.predictions = pred
            .images
            .iter()
            .filter(|p| p.image_id == img.image_id)
            .flat_map(|p| p.predictions.iter().copied())
            .collect();
    }
    for p in &pred.images {
        if !gt.images.iter().any(|g| g.image_id == p.image_id) {
            let mut extra = p.clone();
            extra.ground_truth.clear();
            images.push(extra);
        }
    }
    DetectionSet { images }
}

fn mask_pairs(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if !gt.is_dir() {
        let name = gt.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(name, pred.to_path_buf(), gt.to_path_buf())]);
    }
    let mut names: Vec<String> = fs::read_dir(gt)
        .map_err(|e| Error::io(gt, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(names.into_iter().map(|n| (n.clone(), pred.join(&n), gt.join(&n))).collect())
}

fn read_stage_csv(path: &Path) -> Result<Vec<(String, TStage)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), message };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| parse_err(format!("missing column {name:?}")));
    let (id_col, stage_col) = (col("study_id")?, col("stage")?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let stage = rec[stage_col].parse::<TStage>().map_err(|e| parse_err(e.to_string()))?;
        rows.push((rec[id_col].to_string(), stage));
    }
    Ok(rows)
}

fn preprocess(a: PreprocessArgs) -> CliResult {
    let raw = load_hu(&a.input, Spacing::UNIT)?;
    let clahe = (!a.no_clahe).then_some(a.clahe);
    let img = preprocess_slice(&raw, a.window, clahe, a.resize)?;
    save_image8(&img, &a.out)?;
    Ok(())
}

fn phantom(a: PhantomArgs, out: &mut dyn Write) -> CliResult {
    if a.count == Some(0) {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    let specs: Vec<(PhantomSpec, PathBuf)> = match (&a.spec, a.count) {
        (Some(path), _) => vec![(load_spec(path)?, a.out.clone())],
        (None, None) => vec![(PhantomSpec::random(a.seed), a.out.clone())],
        (None, Some(n)) => (a.seed..a.seed + n)
            .map(|s| {
                let spec = PhantomSpec::random(s);
                let dir = a.out.join(&spec.study_id);
                (spec, dir)
            })
            .collect(),
    };
    let manifests = specs
        .par_iter()
        .map(|(spec, dir)| write_phantom(spec, dir))
        .collect::<Result<Vec<_>>>()?;
    let mut text = String::new();
    for m in manifests {
        text.push_str(&m.display().to_string());
        text.push('\n');
    }
    emit(&text, None, out)
}

fn losses_check(trials: usize, seed: u64, out: &mut dyn Write) -> CliResult {
    use rand::SeedableRng;
    let example = LossInput::new(vec![0.8, 0.2, 0.6, 0.4], vec![1.0, 0.0, 1.0, 0.0])?;
    let mut text = String::from("loss,example_value,max_relative_error\n");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<LossInput> = (0..trials).map(|_| random_input(&mut rng, 256)).collect();
    let mut worst_all = 0.0f64;
    for loss in Loss::ALL {
        let mut worst = 0.0f64;
        for input in &inputs {
            worst = worst.max(gradient_check(loss, input, 1e-5)?);
        }
        worst_all = worst_all.max(worst);
        text.push_str(&format!("{},{:.4},{:.3e}\n", loss.name(), loss.eval(&example)?.value, worst));
    }
    emit(&text, None, out)?;
    if worst_all >= 1e-5 {
        return Err(Failure::Internal(format!("gradient check failed: relative error {worst_all:.3e}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers() {
        assert_eq!(parse_window("1400:-700").unwrap(), WindowSpec::LUNG);
        assert!(parse_window("0:-700").is_err());
        assert_eq!(parse_clahe("2.5:8x4").unwrap(), ClaheSpec { clip_limit: 2.5, tile_grid: (8, 4) });
        assert_eq!(parse_dims("256").unwrap(), Dims::new(256, 256));
        assert_eq!(parse_dims("128x64").unwrap(), Dims::new(128, 64));
        assert!(parse_dims("0").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run_with(["tstage", "stage"], &mut o, &mut e), 1);
        assert_eq!(run_with(["tstage", "bogus"], &mut o, &mut e), 1);
        assert!(!e.is_empty());
        let mut o = Vec::new();
        assert_eq!(run_with(["tstage", "--version"], &mut o, &mut e), 0);
        assert!(String::from_utf8(o).unwrap().contains(env!("CARGO_PKG_VERSION")));
    }
}
