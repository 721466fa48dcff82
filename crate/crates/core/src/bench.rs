//! Dataset ingestion, disparity/view evaluation and rate-distortion sweeps.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costvolume::DisparitySign;
use crate::encoder::{encode_downsample, encode_fps, encode_grid, serialize, SampleSet};
use crate::error::{Error, Result};
use crate::imagecore::io::read_image;
use crate::imagecore::Image;
use crate::matcher::{decode, run_lower_bound_pipeline, DisparityMap, PipelineParams, Strategy};
use crate::synthesis::{psnr, synthesize};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "SOB_DATA_DIR";
pub const CONFIG_FILE: &str = "dataset.cfg";
pub const DEFAULT_THRESHOLD: f32 = 1.0;
/// Depth jump (in pixels) that marks a discontinuity when no mask is given.
pub const DISC_JUMP: f32 = 2.0;
pub const DISC_RADIUS: usize = 4;

/// `$SOB_DATA_DIR`, else `data/middlebury` under the workspace root.
pub fn default_data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/middlebury"),
    }
}

/// Contents of a `dataset.cfg`: flat `key = value` lines, `#` comments.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub name: String,
    pub left: String,
    pub right: String,
    pub gt: Option<String>,
    pub gt_right: Option<String>,
    pub nonocc: Option<String>,
    pub all: Option<String>,
    pub disc: Option<String>,
    pub dmax: usize,
    pub gt_scale: f32,
    pub sign: DisparitySign,
}

impl FromStr for DatasetConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut kv = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Dataset(format!("line {}: expected key = value", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| kv.remove(k);
        let required = |v: Option<String>, k: &str| v.ok_or_else(|| Error::Dataset(format!("missing key `{k}`")));
        let number = |v: String, k: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Dataset(format!("`{k}` is not a number: {v}")))
        };
        let cfg = DatasetConfig {
            name: required(take("name"), "name")?,
            left: required(take("left"), "left")?,
            right: required(take("right"), "right")?,
            gt: take("gt"),
            gt_right: take("gt_right"),
            nonocc: take("nonocc"),
            all: take("all"),
            disc: take("disc"),
            dmax: number(required(take("dmax"), "dmax")?, "dmax")? as usize,
            gt_scale: number(required(take("gt_scale"), "gt_scale")?, "gt_scale")? as f32,
            sign: match take("sign") {
                Some(s) => s.parse()?,
                None => DisparitySign::default(),
            },
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Dataset(format!("unknown key `{k}`")));
        }
        if !(cfg.gt_scale > 0.0) {
            return Err(Error::Dataset("gt_scale must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub nonocc: Vec<bool>,
    pub all: Vec<bool>,
    pub disc: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub left: Image,
    pub right: Image,
    /// Ground truth in pixels; 0 where unknown.
    pub gt: Vec<f32>,
    pub masks: Masks,
    pub dmax: usize,
    pub gt_scale: f32,
    pub sign: DisparitySign,
    /// Masks that had to be approximated.
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn width(&self) -> usize {
        self.left.width()
    }

    pub fn height(&self) -> usize {
        self.left.height()
    }

    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            sign: self.sign,
            ..PipelineParams::new(self.dmax)
        }
    }
}

fn read_at(dir: &Path, file: &str) -> Result<Image> {
    let path = dir.join(file);
    if !path.exists() {
        return Err(Error::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    read_image(&path)
}

fn mask_from(img: &Image, keep: impl Fn(f32) -> bool) -> Vec<bool> {
    let c = img.channels();
    img.data().chunks_exact(c).map(|p| keep(p[0])).collect()
}

fn gt_from(img: &Image, scale: f32) -> Vec<f32> {
    img.data().chunks_exact(img.channels()).map(|p| p[0] / scale).collect()
}

/// Loads `<dir>/<name>/dataset.cfg` and the files it names.
pub fn load_middlebury(dir: &Path, name: &str) -> Result<Dataset> {
    let root = dir.join(name);
    let cfg_path = root.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(|source| Error::Io {
        path: cfg_path.clone(),
        source,
    })?;
    let cfg: DatasetConfig = text.parse()?;
    load_with_config(&root, &cfg)
}

pub fn load_with_config(root: &Path, cfg: &DatasetConfig) -> Result<Dataset> {
    let left = read_at(root, &cfg.left)?;
    let right = read_at(root, &cfg.right)?;
    let (w, h) = (left.width(), left.height());
    let check = |img: &Image, what: &str| {
        if img.width() != w || img.height() != h {
            Err(Error::dims(format!(
                "{}: {what} is {}x{}, left is {w}x{h}",
                cfg.name,
                img.width(),
                img.height()
            )))
        } else {
            Ok(())
        }
    };
    check(&right, "right image")?;
    let gt_file = cfg
        .gt
        .as_deref()
        .ok_or_else(|| Error::Dataset(format!("{}: ground truth required for evaluate", cfg.name)))?;
    let gt_img = read_at(root, gt_file)?;
    check(&gt_img, "ground truth")?;
    let gt = gt_from(&gt_img, cfg.gt_scale);
    let max = gt.iter().cloned().fold(0f32, f32::max);
    if max > cfg.dmax as f32 + 0.5 {
        return Err(Error::Dataset(format!(
            "{}: ground truth reaches {max} > dmax {} (wrong gt_scale?)",
            cfg.name, cfg.dmax
        )));
    }
    let known: Vec<bool> = gt.iter().map(|&g| g > 0.0).collect();
    let mut warnings = Vec::new();

    let all = match &cfg.all {
        Some(f) => {
            let m = read_at(root, f)?;
            check(&m, "all mask")?;
            mask_from(&m, |v| v > 0.0)
        }
        None => known.clone(),
    };
    let all: Vec<bool> = all.iter().zip(&known).map(|(&a, &k)| a && k).collect();

    let nonocc = match (&cfg.nonocc, &cfg.gt_right) {
        (Some(f), _) => {
            let m = read_at(root, f)?;
            check(&m, "nonocc mask")?;
            mask_from(&m, |v| v >= 255.0)
        }
        (None, Some(f)) => {
            let r = read_at(root, f)?;
            check(&r, "right ground truth")?;
            cross_check(&gt, &gt_from(&r, cfg.gt_scale), w, h, cfg.sign)
        }
        (None, None) => {
            warnings.push(format!("{}: no occlusion information; nonocc = all", cfg.name));
            all.clone()
        }
    };
    let nonocc: Vec<bool> = nonocc.iter().zip(&all).map(|(&a, &k)| a && k).collect();

    let disc = match &cfg.disc {
        Some(f) => {
            let m = read_at(root, f)?;
            check(&m, "disc mask")?;
            mask_from(&m, |v| v >= 255.0)
        }
        None => discontinuities(&gt, w, h, DISC_JUMP, DISC_RADIUS),
    };
    let disc: Vec<bool> = disc.iter().zip(&nonocc).map(|(&a, &k)| a && k).collect();

    Ok(Dataset {
        name: cfg.name.clone(),
        left,
        right,
        gt,
        masks: Masks { nonocc, all, disc },
        dmax: cfg.dmax,
        gt_scale: cfg.gt_scale,
        sign: cfg.sign,
        warnings,
    })
}

/// Left pixels whose ground truth is confirmed by the right ground truth.
pub fn cross_check(gt_left: &[f32], gt_right: &[f32], w: usize, h: usize, sign: DisparitySign) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let dl = gt_left[y * w + x];
            if dl <= 0.0 {
                continue;
            }
            if let Some(t) = sign.target(x, dl.round() as usize, w) {
                let dr = gt_right[y * w + t];
                out[y * w + x] = dr > 0.0 && (dl - dr).abs() <= 1.0;
            }
        }
    }
    out
}

/// Pixels within `radius` (square window) of a ground-truth jump above
/// `jump` between 4-neighbours with known values.
pub fn discontinuities(gt: &[f32], w: usize, h: usize, jump: f32, radius: usize) -> Vec<bool> {
    let mut edge = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = gt[y * w + x];
            if g <= 0.0 {
                continue;
            }
            let mut mark = |j: usize| {
                let o = gt[j];
                if o > 0.0 && (g - o).abs() > jump {
                    edge[y * w + x] = true;
                    edge[j] = true;
                }
            };
            if x + 1 < w {
                mark(y * w + x + 1);
            }
            if y + 1 < h {
                mark((y + 1) * w + x);
            }
        }
    }
    // Separable box dilation.
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (x.saturating_sub(radius), (x + radius).min(w - 1));
            rows[y * w + x] = edge[y * w + a..=y * w + b].iter().any(|&e| e);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (y.saturating_sub(radius), (y + radius).min(h - 1));
            out[y * w + x] = (a..=b).any(|yy| rows[yy * w + x]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RegionScore {
    /// Percentage of pixels whose error exceeds the threshold.
    pub bad: f64,
    pub rms: f64,
    pub pixels: usize,
    pub bad_pixels: usize,
    pub squared_error: f64,
}

impl RegionScore {
    fn from_sums(bad_pixels: usize, squared_error: f64, pixels: usize) -> Self {
        let (bad, rms) = if pixels == 0 {
            (0.0, 0.0)
        } else {
            (100.0 * bad_pixels as f64 / pixels as f64, (squared_error / pixels as f64).sqrt())
        };
        RegionScore {
            bad,
            rms,
            pixels,
            bad_pixels,
            squared_error,
        }
    }

    pub fn score(d: &[f32], gt: &[f32], mask: &[bool], threshold: f32) -> Self {
        let (mut bad, mut sq, mut n) = (0usize, 0f64, 0usize);
        for ((&d, &g), _) in d.iter().zip(gt).zip(mask).filter(|(_, &m)| m) {
            let e = d - g;
            bad += (e.abs() > threshold) as usize;
            sq += (e as f64) * (e as f64);
            n += 1;
        }
        Self::from_sums(bad, sq, n)
    }

    /// Score of the union of two disjoint regions.
    pub fn merged(&self, other: &RegionScore) -> Self {
        Self::from_sums(
            self.bad_pixels + other.bad_pixels,
            self.squared_error + other.squared_error,
            self.pixels + other.pixels,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub nonocc: RegionScore,
    pub all: RegionScore,
    pub disc: RegionScore,
    /// PSNR of the warped view over its non-occluded pixels.
    pub psnr_warp: Option<f64>,
    /// Same region after enhancement.
    pub psnr_enhanced: Option<f64>,
    pub fraction: f64,
    pub bytes: Option<usize>,
    /// Wall-clock seconds per stage, in execution order.
    pub stages: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn seconds(&self) -> f64 {
        self.stages.iter().map(|(_, s)| s).sum()
    }
}

pub fn evaluate(d: &DisparityMap, ds: &Dataset, threshold: f32) -> Result<EvalReport> {
    if d.width() != ds.width() || d.height() != ds.height() {
        return Err(Error::dims(format!(
            "disparity map {}x{} vs dataset {}x{}",
            d.width(),
            d.height(),
            ds.width(),
            ds.height()
        )));
    }
    if !(threshold >= 0.0) {
        return Err(Error::param("threshold must be non-negative"));
    }
    let values = d.to_f32();
    Ok(EvalReport {
        nonocc: RegionScore::score(&values, &ds.gt, &ds.masks.nonocc, threshold),
        all: RegionScore::score(&values, &ds.gt, &ds.masks.all, threshold),
        disc: RegionScore::score(&values, &ds.gt, &ds.masks.disc, threshold),
        fraction: 1.0,
        ..EvalReport::default()
    })
}

/// How point payloads are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Grid,
    Fps,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid" => Ok(Sampling::Grid),
            "fps" => Ok(Sampling::Fps),
            _ => Err(Error::param(format!("unknown sampling `{s}` (grid|fps)"))),
        }
    }
}

impl Sampling {
    pub fn name(self) -> &'static str {
        match self {
            Sampling::Grid => "grid",
            Sampling::Fps => "fps",
        }
    }
}

/// One rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Decode(Strategy),
    /// Band-limited cost volume from the full pair.
    LowerBound,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Decode(s) => s.name(),
            Method::LowerBound => "lower_bound",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lower_bound" | "lowerbound" => Ok(Method::LowerBound),
            other => Ok(Method::Decode(other.parse()?)),
        }
    }
}

/// Integer step whose squared reciprocal is closest to `fraction`.
pub fn step_for_budget(fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!("budget must lie in (0, 1], got {fraction}")));
    }
    Ok(((1.0 / fraction.sqrt()).round() as usize).max(1))
}

/// Encodes `right` under `budget` for the given strategy.
pub fn encode_for_budget(right: &Image, strategy: Strategy, sampling: Sampling, budget: f64, seed: u64) -> Result<SampleSet> {
    let step = step_for_budget(budget)?;
    match (strategy, sampling) {
        (Strategy::Downsample, _) => encode_downsample(right, step),
        (_, Sampling::Grid) => encode_grid(right, step),
        (_, Sampling::Fps) => {
            let count = ((budget * (right.width() * right.height()) as f64).round() as usize).max(1);
            encode_fps(right, count, seed, 0.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub params: PipelineParams,
    pub sampling: Sampling,
    pub seed: u64,
    pub threshold: f32,
    /// Also warp, enhance and score the synthesized view.
    pub synthesis: bool,
    /// Run each row once untimed before measuring.
    pub warmup: bool,
}

impl SweepOptions {
    pub fn new(params: PipelineParams) -> Self {
        SweepOptions {
            params,
            sampling: Sampling::Grid,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            synthesis: true,
            warmup: false,
        }
    }
}

/// One line of a rate-distortion report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub strategy: String,
    #[serde(default)]
    pub scheme: String,
    #[serde(default)]
    pub budget: Option<f64>,
    pub fraction: f64,
    #[serde(default)]
    pub bytes: Option<usize>,
    #[serde(default)]
    pub bad_nonocc: Option<f64>,
    #[serde(default)]
    pub bad_all: Option<f64>,
    #[serde(default)]
    pub bad_disc: Option<f64>,
    #[serde(default)]
    pub rms_nonocc: Option<f64>,
    #[serde(default)]
    pub rms_all: Option<f64>,
    #[serde(default)]
    pub rms_disc: Option<f64>,
    #[serde(default)]
    pub psnr_warp: Option<f64>,
    #[serde(default)]
    pub psnr_enhanced: Option<f64>,
    #[serde(default)]
    pub seconds: Option<f64>,
    /// `ok`, or the error that stopped the row.
    #[serde(default)]
    pub status: String,
}

impl SweepRow {
    fn empty(dataset: &str, method: Method, scheme: &str, budget: f64) -> Self {
        SweepRow {
            dataset: dataset.to_string(),
            strategy: method.name().to_string(),
            scheme: scheme.to_string(),
            budget: Some(budget),
            fraction: budget,
            bytes: None,
            bad_nonocc: None,
            bad_all: None,
            bad_disc: None,
            rms_nonocc: None,
            rms_all: None,
            rms_disc: None,
            psnr_warp: None,
            psnr_enhanced: None,
            seconds: None,
            status: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn key(&self) -> (String, String, String, u64) {
        (
            self.dataset.clone(),
            self.strategy.clone(),
            self.scheme.clone(),
            self.fraction.to_bits(),
        )
    }
}

/// Output of one encode → decode → synthesize → evaluate run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub disparity: DisparityMap,
    pub report: EvalReport,
    pub payload: Option<SampleSet>,
}

fn timed<T>(stages: &mut Vec<(String, f64)>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    stages.push((name.to_string(), t.elapsed().as_secs_f64()));
    Ok(out)
}

/// Runs one point of a curve and scores it.
pub fn run_once(ds: &Dataset, method: Method, budget: f64, opts: &SweepOptions) -> Result<RunOutcome> {
    let p = &opts.params;
    let mut stages = Vec::new();
    let (disparity, payload) = match method {
        Method::LowerBound => {
            step_for_budget(budget)?;
            let d = timed(&mut stages, "decode", || run_lower_bound_pipeline(&ds.left, &ds.right, budget, p))?;
            (d, None)
        }
        Method::Decode(strategy) => {
            let payload = timed(&mut stages, "encode", || {
                encode_for_budget(&ds.right, strategy, opts.sampling, budget, opts.seed)
            })?;
            let d = timed(&mut stages, "decode", || decode(strategy, &ds.left, &payload, p))?;
            (d, Some(payload))
        }
    };
    let mut report = evaluate(&disparity, ds, opts.threshold)?;
    if let Some(payload) = &payload {
        report.fraction = payload.fraction();
        report.bytes = Some(serialize(payload).len());
        if opts.synthesis {
            let fp = p.filter_params(payload.spacing())?;
            let s = timed(&mut stages, "synthesize", || synthesize(&ds.left, &disparity, payload, ds.sign, &fp))?;
            let holes = Some(s.warped.occlusion.as_slice());
            report.psnr_warp = Some(psnr(&s.warped.image, &ds.right, holes)?);
            report.psnr_enhanced = Some(psnr(&s.output, &ds.right, holes)?);
        }
    } else {
        report.fraction = budget;
    }
    report.stages = stages;
    Ok(RunOutcome {
        disparity,
        report,
        payload,
    })
}

fn scheme_label(method: Method, sampling: Sampling) -> &'static str {
    match method {
        Method::LowerBound => "full",
        Method::Decode(Strategy::Downsample) => "downsample",
        Method::Decode(_) => sampling.name(),
    }
}

/// One row per budget; failures are recorded in the row's status and do
/// not stop the sweep. Rows are computed in parallel.
pub fn rate_distortion_sweep(ds: &Dataset, method: Method, budgets: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("budgets must be sorted ascending"));
    }
    for &b in budgets {
        step_for_budget(b)?;
    }
    opts.params.validate()?;
    let scheme = scheme_label(method, opts.sampling);
    Ok(budgets
        .par_iter()
        .map(|&budget| {
            let mut row = SweepRow::empty(&ds.name, method, scheme, budget);
            if opts.warmup {
                let _ = run_once(ds, method, budget, opts);
            }
            match run_once(ds, method, budget, opts) {
                Ok(out) => {
                    let r = out.report;
                    row.fraction = r.fraction;
                    row.bytes = r.bytes;
                    row.bad_nonocc = Some(r.nonocc.bad);
                    row.bad_all = Some(r.all.bad);
                    row.bad_disc = Some(r.disc.bad);
                    row.rms_nonocc = Some(r.nonocc.rms);
                    row.rms_all = Some(r.all.rms);
                    row.rms_disc = Some(r.disc.rms);
                    row.psnr_warp = r.psnr_warp;
                    row.psnr_enhanced = r.psnr_enhanced;
                    row.seconds = Some(r.seconds());
                    row.status = "ok".into();
                }
                Err(e) => {
                    log::warn!("{} {} @ {budget}: {e}", ds.name, method.name());
                    row.status = format!("error: {e}");
                }
            }
            row
        })
        .collect())
}

pub fn write_rows<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_rows(file, rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_rows(file)
}

/// Adds externally produced rows to a report. Computed rows win on
/// duplicate (dataset, strategy, scheme, fraction) keys. The result is
/// ordered by that key.
pub fn merge_rows(computed: Vec<SweepRow>, external: Vec<SweepRow>) -> Vec<SweepRow> {
    let mut table = BTreeMap::new();
    for r in external.into_iter().chain(computed) {
        table.insert(r.key(), r);
    }
    let mut rows: Vec<SweepRow> = table.into_values().collect();
    rows.sort_by(|a, b| {
        (&a.dataset, &a.strategy, &a.scheme)
            .cmp(&(&b.dataset, &b.strategy, &b.scheme))
            .then(a.fraction.total_cmp(&b.fraction))
    });
    rows
}
