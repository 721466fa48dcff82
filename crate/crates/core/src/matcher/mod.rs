//! Disparity selection, left-right consistency and the decoding pipelines.

mod interp;
mod pipeline;
mod tree;

use std::str::FromStr;

use crate::costvolume::{CostVolume, DisparitySign, VolumeKind};
use crate::error::{Error, Result};
use crate::imagecore::Image;

pub use interp::interpolate_samples;
pub use pipeline::{
    decode, run_downsample_pipeline, run_full_pipeline, run_hybrid_pipeline, run_lower_bound_pipeline,
    run_sparse_pipeline, PipelineParams, Strategy,
};
pub use tree::{aggregate, aggregate_with_tree, SpanningTree, DEFAULT_SIGMA_TREE};

/// Integer disparities with a per-pixel stability flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    dmax: usize,
    disparity: Vec<u32>,
    stability: Vec<bool>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, dmax: usize, disparity: Vec<u32>, stability: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if disparity.len() != n || stability.len() != n {
            return Err(Error::dims(format!("disparity map {width}x{height} needs {n} entries")));
        }
        if let Some(d) = disparity.iter().find(|&&d| d as usize > dmax) {
            return Err(Error::param(format!("disparity {d} exceeds dmax {dmax}")));
        }
        Ok(DisparityMap {
            width,
            height,
            dmax,
            disparity,
            stability,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dmax(&self) -> usize {
        self.dmax
    }

    pub fn disparity(&self) -> &[u32] {
        &self.disparity
    }

    pub fn stability(&self) -> &[bool] {
        &self.stability
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.disparity[y * self.width + x]
    }

    #[inline]
    pub fn is_stable(&self, x: usize, y: usize) -> bool {
        self.stability[y * self.width + x]
    }

    pub fn stable_fraction(&self) -> f64 {
        self.stability.iter().filter(|&&s| s).count() as f64 / self.stability.len() as f64
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.disparity.iter().map(|&d| d as f32).collect()
    }

    /// Disparities multiplied by `scale` as an 8-bit image (saturating).
    pub fn to_image(&self, scale: f32) -> Image {
        let data = self.disparity.iter().map(|&d| d as f32 * scale).collect();
        Image::from_clamped(self.width, self.height, 1, data).expect("valid dimensions")
    }
}

/// Winner-take-all over occupied entries; ties go to the smallest disparity.
/// Pixels with no occupied entry get disparity 0.
pub fn select_disparity(v: &CostVolume) -> DisparityMap {
    let n = v.layer_len();
    let mut best = vec![f32::INFINITY; n];
    let mut disparity = vec![0u32; n];
    for d in 0..v.layers() {
        let (layer, occ) = (v.layer(d), v.occupancy_layer(d));
        for i in 0..n {
            if occ[i] && layer[i] < best[i] {
                best[i] = layer[i];
                disparity[i] = d as u32;
            }
        }
    }
    DisparityMap {
        width: v.width(),
        height: v.height(),
        dmax: v.dmax(),
        disparity,
        stability: vec![true; n],
    }
}

/// How pixels failing the consistency check are given a disparity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Refill {
    /// Nearest stable pixel on the row, looking left first, then right.
    #[default]
    ScanLeftRight,
    /// The smaller of the nearest stable disparities to either side.
    Background,
    /// Tree re-aggregation of the stable disparities (see [`refine_nonlocal`]);
    /// [`lr_consistency`] itself scans as `ScanLeftRight`.
    NonLocal,
}

impl FromStr for Refill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scan" => Ok(Refill::ScanLeftRight),
            "background" => Ok(Refill::Background),
            "nonlocal" => Ok(Refill::NonLocal),
            other => Err(Error::param(format!("unknown refill {other:?} (scan|background|nonlocal)"))),
        }
    }
}

impl Refill {
    pub fn name(self) -> &'static str {
        match self {
            Refill::ScanLeftRight => "scan",
            Refill::Background => "background",
            Refill::NonLocal => "nonlocal",
        }
    }
}

/// Marks `left(x)` stable iff `|left(x) - right(t)| <= threshold` where `t`
/// is the match of `x` under `sign` (unstable when `t` is out of range), then
/// refills unstable pixels per `refill`. Rows without stable pixels get 0.
pub fn lr_consistency(
    left: &DisparityMap,
    right: &DisparityMap,
    threshold: u32,
    sign: DisparitySign,
    refill: Refill,
) -> Result<DisparityMap> {
    if left.width != right.width || left.height != right.height {
        return Err(Error::dims(format!(
            "left map {}x{} vs right map {}x{}",
            left.width, left.height, right.width, right.height
        )));
    }
    let w = left.width;
    let mut stability = vec![false; left.disparity.len()];
    for y in 0..left.height {
        for x in 0..w {
            let d = left.get(x, y);
            if let Some(t) = sign.target(x, d as usize, w) {
                stability[y * w + x] = d.abs_diff(right.get(t, y)) <= threshold;
            }
        }
    }
    let mut disparity = left.disparity.clone();
    for (row, stable) in disparity.chunks_mut(w).zip(stability.chunks(w)) {
        refill_row(row, stable, refill);
    }
    Ok(DisparityMap {
        width: w,
        height: left.height,
        dmax: left.dmax,
        disparity,
        stability,
    })
}

/// Re-estimates unstable pixels from the stable ones: the cost of `d` at a
/// stable pixel is `|d - disparity|`, unstable pixels carry no cost, and the
/// volume is tree-aggregated over `guide` before winner-take-all. Stable
/// pixels keep their values.
pub fn refine_nonlocal(map: &DisparityMap, guide: &Image, sigma_tree: f32) -> Result<DisparityMap> {
    if guide.width() != map.width || guide.height() != map.height {
        return Err(Error::dims("guide and disparity map differ in size"));
    }
    let n = map.disparity.len();
    if map.stability.iter().all(|&s| s) {
        return Ok(map.clone());
    }
    let layers = map.dmax + 1;
    let mut costs = vec![0f32; n * layers];
    let mut occupancy = vec![false; n * layers];
    for d in 0..layers {
        for i in 0..n {
            if map.stability[i] {
                costs[d * n + i] = (d as f32 - map.disparity[i] as f32).abs();
                occupancy[d * n + i] = true;
            }
        }
    }
    let v = CostVolume::from_parts(map.width, map.height, map.dmax, VolumeKind::Dense, costs, occupancy)?;
    let votes = select_disparity(&aggregate(&v, guide, sigma_tree)?);
    let disparity = (0..n)
        .map(|i| if map.stability[i] { map.disparity[i] } else { votes.disparity[i] })
        .collect();
    Ok(DisparityMap {
        disparity,
        ..map.clone()
    })
}

fn refill_row(row: &mut [u32], stable: &[bool], refill: Refill) {
    let w = row.len();
    let mut left = vec![None; w];
    let mut last = None;
    for x in 0..w {
        if stable[x] {
            last = Some(row[x]);
        }
        left[x] = last;
    }
    let mut right = None;
    for x in (0..w).rev() {
        if stable[x] {
            right = Some(row[x]);
            continue;
        }
        row[x] = match (refill, left[x], right) {
            (Refill::Background, Some(a), Some(b)) => a.min(b),
            (_, a, b) => a.or(b).unwrap_or(0),
        };
    }
}
