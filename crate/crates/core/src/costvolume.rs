//! Disparity space images: dense and sparse construction, blending, and the
//! bandwidth-limited lower-bound volume.

use std::path::Path;

use rayon::prelude::*;

use crate::encoder::{gray_of, SampleSet};
use crate::error::{Error, Result};
use crate::imagecore::{io, plane, resized_dims, Image, ResizeMode, ANTIALIAS_PER_FACTOR};

/// Floor applied to sparse costs so that a perfect match stays distinguishable
/// from missing data.
pub const SPARSE_DELTA: f32 = 1e-6;

/// Where the right-view match of left pixel `x` lies at disparity `d`.
///
/// `Positive` is `x + d`; `Negative` is `x - d`, the usual geometry of a
/// rectified left/right pair (and of the Middlebury data).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DisparitySign {
    Positive,
    #[default]
    Negative,
}

impl DisparitySign {
    /// Column in the other view matched by column `x` at disparity `d`.
    #[inline]
    pub fn target(self, x: usize, d: usize, width: usize) -> Option<usize> {
        match self {
            DisparitySign::Positive => Some(x + d).filter(|&t| t < width),
            DisparitySign::Negative => x.checked_sub(d),
        }
    }

    /// Column `x` whose match at disparity `d` is `u` (inverse of `target`).
    #[inline]
    pub fn source(self, u: usize, d: usize, width: usize) -> Option<usize> {
        self.flipped().target(u, d, width)
    }

    /// Sign seen from the other view.
    pub fn flipped(self) -> Self {
        match self {
            DisparitySign::Positive => DisparitySign::Negative,
            DisparitySign::Negative => DisparitySign::Positive,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DisparitySign::Positive => "positive",
            DisparitySign::Negative => "negative",
        }
    }
}

impl std::str::FromStr for DisparitySign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" | "pos" | "+" => Ok(DisparitySign::Positive),
            "negative" | "neg" | "-" => Ok(DisparitySign::Negative),
            other => Err(Error::param(format!("unknown disparity sign {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    /// Every in-range entry carries a cost; unoccupied entries are
    /// out-of-bounds matches or unresolved after densification.
    Dense,
    /// Only sampled matches are occupied.
    Sparse,
}

/// A `W x H x (dmax + 1)` cost volume stored layer-major (disparity
/// outermost), with a per-entry occupancy flag.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    dmax: usize,
    kind: VolumeKind,
    costs: Vec<f32>,
    occupancy: Vec<bool>,
}

impl CostVolume {
    pub fn from_parts(
        width: usize,
        height: usize,
        dmax: usize,
        kind: VolumeKind,
        costs: Vec<f32>,
        occupancy: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height * (dmax + 1);
        if costs.len() != n || occupancy.len() != n {
            return Err(Error::dims(format!(
                "volume {width}x{height}x{} needs {n} entries",
                dmax + 1
            )));
        }
        if costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::param("costs must be non-negative"));
        }
        Ok(CostVolume {
            width,
            height,
            dmax,
            kind,
            costs,
            occupancy,
        })
    }

    /// Fully occupied volume from layer-major costs.
    pub fn dense(width: usize, height: usize, dmax: usize, costs: Vec<f32>) -> Result<Self> {
        let n = costs.len();
        CostVolume::from_parts(width, height, dmax, VolumeKind::Dense, costs, vec![true; n])
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

    pub fn layers(&self) -> usize {
        self.dmax + 1
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn layer_len(&self) -> usize {
        self.width * self.height
    }

    pub fn costs(&self) -> &[f32] {
        &self.costs
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn layer(&self, d: usize) -> &[f32] {
        let n = self.layer_len();
        &self.costs[d * n..(d + 1) * n]
    }

    pub fn occupancy_layer(&self, d: usize) -> &[bool] {
        let n = self.layer_len();
        &self.occupancy[d * n..(d + 1) * n]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, d: usize) -> usize {
        (d * self.height + y) * self.width + x
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, d: usize) -> f32 {
        self.costs[self.index(x, y, d)]
    }

    #[inline]
    pub fn is_occupied(&self, x: usize, y: usize, d: usize) -> bool {
        self.occupancy[self.index(x, y, d)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn same_shape(&self, other: &CostVolume) -> bool {
        self.width == other.width && self.height == other.height && self.dmax == other.dmax
    }

    /// Dumps one disparity layer as a PFM for inspection.
    pub fn write_layer_pfm(&self, d: usize, path: &Path) -> Result<()> {
        if d > self.dmax {
            return Err(Error::param(format!("layer {d} beyond dmax {}", self.dmax)));
        }
        io::write_pfm(path, self.width, self.height, self.layer(d))
    }
}

fn pixel_cost(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum()
}

/// Full absolute-difference volume: `cost(x, y, d) = |I1(x, y) - I2(t, y)|`
/// with `t = sign.target(x, d)`. Out-of-range matches are left unoccupied.
///
/// Color inputs use the sum of per-channel differences; convert to grayscale
/// first for the single-channel cost.
pub fn dsi_full(left: &Image, right: &Image, dmax: usize, sign: DisparitySign) -> Result<CostVolume> {
    if !left.same_shape(right) || left.channels() != right.channels() {
        return Err(Error::dims(format!(
            "left {}x{}x{} vs right {}x{}x{}",
            left.width(),
            left.height(),
            left.channels(),
            right.width(),
            right.height(),
            right.channels()
        )));
    }
    let (w, h) = (left.width(), left.height());
    let n = w * h;
    let mut costs = vec![0f32; n * (dmax + 1)];
    let mut occupancy = vec![false; n * (dmax + 1)];
    costs
        .par_chunks_mut(n)
        .zip(occupancy.par_chunks_mut(n))
        .enumerate()
        .for_each(|(d, (cl, ol))| {
            for y in 0..h {
                for x in 0..w {
                    if let Some(t) = sign.target(x, d, w) {
                        let i = y * w + x;
                        cl[i] = pixel_cost(left.pixel(x, y), right.pixel(t, y));
                        ol[i] = true;
                    }
                }
            }
        });
    Ok(CostVolume {
        width: w,
        height: h,
        dmax,
        kind: VolumeKind::Dense,
        costs,
        occupancy,
    })
}

/// Sparse volume from point samples of the right view: each sample at
/// `(u, y)` fills `(x, y, d)` for every `d` with `sign.target(x, d) == u`,
/// using `max(|I1(x, y) - v|, delta)`.
pub fn dsi_sparse(
    left: &Image,
    samples: &SampleSet,
    dmax: usize,
    delta: f32,
    sign: DisparitySign,
) -> Result<CostVolume> {
    if !samples.scheme().is_point() {
        return Err(Error::WrongScheme {
            expected: "grid or fps",
            actual: samples.scheme().name(),
        });
    }
    if samples.width() != left.width() || samples.height() != left.height() {
        return Err(Error::dims(format!(
            "samples cover {}x{}, left image is {}x{}",
            samples.width(),
            samples.height(),
            left.width(),
            left.height()
        )));
    }
    let color = left.channels() == 3;
    if color && samples.channels() != 3 {
        return Err(Error::dims("color left image needs color samples"));
    }
    let (w, h) = (left.width(), left.height());
    let n = w * h;
    let mut costs = vec![0f32; n * (dmax + 1)];
    let mut occupancy = vec![false; n * (dmax + 1)];
    for s in samples.samples() {
        let value: Vec<f32> = if color {
            s.value.iter().map(|&v| v as f32).collect()
        } else {
            vec![gray_of(s.value)]
        };
        for d in 0..=dmax {
            if let Some(x) = sign.source(s.x, d, w) {
                let i = d * n + s.y * w + x;
                costs[i] = pixel_cost(left.pixel(x, s.y), &value).max(delta);
                occupancy[i] = true;
            }
        }
    }
    Ok(CostVolume {
        width: w,
        height: h,
        dmax,
        kind: VolumeKind::Sparse,
        costs,
        occupancy,
    })
}

/// Occupancy-normalized weighted mean: `w * a + (1 - w) * b` where both
/// inputs are occupied. An entry occupied in one input only keeps that
/// input's cost, unless its weight is zero, in which case it stays empty.
pub fn blend(a: &CostVolume, b: &CostVolume, weight: f32) -> Result<CostVolume> {
    if !a.same_shape(b) {
        return Err(Error::dims("blend inputs differ in shape"));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::param(format!("blend weight {weight} outside [0, 1]")));
    }
    let (wa, wb) = (weight, 1.0 - weight);
    let mut costs = Vec::with_capacity(a.costs.len());
    let mut occupancy = Vec::with_capacity(a.costs.len());
    for i in 0..a.costs.len() {
        let (ca, cb) = (a.costs[i], b.costs[i]);
        let (c, o) = match (a.occupancy[i] && wa > 0.0, b.occupancy[i] && wb > 0.0) {
            (true, true) => (cb + wa * (ca - cb), true),
            (true, false) => (ca, true),
            (false, true) => (cb, true),
            (false, false) => (0.0, false),
        };
        costs.push(c);
        occupancy.push(o);
    }
    let kind = if a.kind == VolumeKind::Dense && b.kind == VolumeKind::Dense {
        VolumeKind::Dense
    } else {
        VolumeKind::Sparse
    };
    Ok(CostVolume {
        width: a.width,
        height: a.height,
        dmax: a.dmax,
        kind,
        costs,
        occupancy,
    })
}

/// Volume a bandwidth of `fraction` could at best convey: every layer is
/// decimated by `1 / sqrt(fraction)` per axis (anti-aliased) and brought back
/// bilinearly. Unoccupied entries are excluded through normalized
/// resampling and stay unoccupied.
pub fn lower_bound_dsi(full: &CostVolume, fraction: f64) -> Result<CostVolume> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!("fraction {fraction} outside (0, 1]")));
    }
    if full.kind != VolumeKind::Dense {
        return Err(Error::param("lower bound needs a dense volume"));
    }
    if fraction == 1.0 {
        return Ok(full.clone());
    }
    let (w, h) = (full.width, full.height);
    let factor = 1.0 / fraction.sqrt();
    let (lw, lh) = resized_dims(w, h, factor, ResizeMode::DownsampleAntialias);
    let round_trip = |data: &[f32]| {
        let low = plane::resample(data, w, h, factor, lw, lh, ResizeMode::DownsampleAntialias, ANTIALIAS_PER_FACTOR);
        plane::resample(&low, lw, lh, factor, w, h, ResizeMode::UpsampleBilinear, ANTIALIAS_PER_FACTOR)
    };
    let n = w * h;
    let mut costs = vec![0f32; full.costs.len()];
    costs.par_chunks_mut(n).enumerate().for_each(|(d, out)| {
        let occ = full.occupancy_layer(d);
        let layer = full.layer(d);
        if occ.iter().all(|&o| o) {
            out.copy_from_slice(&round_trip(layer));
            return;
        }
        let num: Vec<f32> = layer.iter().zip(occ).map(|(&c, &o)| if o { c } else { 0.0 }).collect();
        let den: Vec<f32> = occ.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        let (num, den) = (round_trip(&num), round_trip(&den));
        for i in 0..n {
            out[i] = if occ[i] && den[i] > 1e-6 { (num[i] / den[i]).max(0.0) } else { 0.0 };
        }
    });
    for c in &mut costs {
        *c = c.max(0.0);
    }
    Ok(CostVolume {
        width: w,
        height: h,
        dmax: full.dmax,
        kind: VolumeKind::Dense,
        costs,
        occupancy: full.occupancy.clone(),
    })
}
