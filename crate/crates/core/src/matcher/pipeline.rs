//! End-to-end decoders: full image + reduced payload -> disparity map.

use std::str::FromStr;
use std::time::Instant;

use log::debug;

use super::{aggregate, lr_consistency, refine_nonlocal, select_disparity, DisparityMap, Refill, SpanningTree};
use crate::costvolume::{blend, dsi_full, dsi_sparse, lower_bound_dsi, CostVolume, DisparitySign, VolumeKind, SPARSE_DELTA};
use crate::encoder::{SampleSet, Scheme};
use crate::error::{Error, Result};
use crate::imagecore::{gaussian_smooth, resize_to, to_grayscale, Image, ResizeMode, ANTIALIAS_PER_FACTOR};
use crate::jbf::{densify_dsi, FilterParams, UnresolvedFill, DEFAULT_SIGMA_R, DEFAULT_SIGMA_S_MULT};
use crate::matcher::interpolate_samples;
use crate::matcher::tree::{aggregate_with_tree, DEFAULT_SIGMA_TREE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Downsample,
    Sparse,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Downsample, Strategy::Sparse, Strategy::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Downsample => "downsample",
            Strategy::Sparse => "sparse",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::param(format!("unknown strategy {s:?} (downsample|sparse|hybrid)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub dmax: usize,
    pub sign: DisparitySign,
    /// Weight of the densified sparse volume in the hybrid blend.
    pub hybrid_weight: f32,
    pub sigma_r: f32,
    /// Spatial sigma of the densifying filter, in sample spacings.
    pub sigma_s_mult: f32,
    pub sigma_tree: f32,
    pub lr_check: bool,
    pub lr_threshold: u32,
    pub refill: Refill,
    /// Smooth the left image to match the bandwidth of the right payload.
    pub smooth_left: bool,
    /// Low-pass sigma per unit of decimation factor or sample spacing.
    pub antialias: f32,
    /// Sum of per-channel differences instead of grayscale costs.
    pub color_costs: bool,
    pub delta: f32,
    pub unresolved: UnresolvedFill,
}

impl PipelineParams {
    pub fn new(dmax: usize) -> Self {
        PipelineParams {
            dmax,
            sign: DisparitySign::default(),
            hybrid_weight: 0.5,
            sigma_r: DEFAULT_SIGMA_R,
            sigma_s_mult: DEFAULT_SIGMA_S_MULT,
            sigma_tree: DEFAULT_SIGMA_TREE,
            lr_check: true,
            lr_threshold: 1,
            refill: Refill::default(),
            smooth_left: true,
            antialias: ANTIALIAS_PER_FACTOR,
            color_costs: false,
            delta: SPARSE_DELTA,
            unresolved: UnresolvedFill::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hybrid_weight) {
            return Err(Error::param(format!("hybrid weight {} outside [0, 1]", self.hybrid_weight)));
        }
        for (name, v) in [
            ("sigma_r", self.sigma_r),
            ("sigma_s_mult", self.sigma_s_mult),
            ("sigma_tree", self.sigma_tree),
            ("delta", self.delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.antialias >= 0.0 && self.antialias.is_finite()) {
            return Err(Error::param(format!("antialias must be non-negative, got {}", self.antialias)));
        }
        Ok(())
    }

    /// Densifying filter for samples `spacing` pixels apart.
    pub fn filter_params(&self, spacing: f64) -> Result<FilterParams> {
        FilterParams::new(self.sigma_s_mult * spacing as f32, self.sigma_r)
    }
}

fn check_dims(left: &Image, payload: &SampleSet) -> Result<()> {
    if payload.width() != left.width() || payload.height() != left.height() {
        return Err(Error::dims(format!(
            "payload describes {}x{}, left image is {}x{}",
            payload.width(),
            payload.height(),
            left.width(),
            left.height()
        )));
    }
    Ok(())
}

/// Images the costs are computed on: both color or both grayscale.
fn cost_pair(left: &Image, right: &Image, color: bool) -> (Image, Image) {
    if color && left.channels() == 3 && right.channels() == 3 {
        (left.clone(), right.clone())
    } else {
        (to_grayscale(left), to_grayscale(right))
    }
}

fn smoothed(img: &Image, sigma: f32, enabled: bool) -> Result<Image> {
    if enabled && sigma > 0.0 {
        gaussian_smooth(img, sigma)
    } else {
        Ok(img.clone())
    }
}

/// Aggregation over the guide's spanning tree, then winner-take-all.
fn finish(left_volume: &CostVolume, guide: &Image, p: &PipelineParams) -> Result<DisparityMap> {
    let t = Instant::now();
    let tree = SpanningTree::build(guide);
    let aggregated = aggregate_with_tree(left_volume, &tree, p.sigma_tree)?;
    debug!("aggregation: {:.2?}", t.elapsed());
    Ok(select_disparity(&aggregated))
}

fn right_view_map(right_cost: &Image, left_cost: &Image, right_guide: &Image, p: &PipelineParams) -> Result<DisparityMap> {
    let v = dsi_full(right_cost, left_cost, p.dmax, p.sign.flipped())?;
    let aggregated = aggregate(&v, right_guide, p.sigma_tree)?;
    Ok(select_disparity(&aggregated))
}

/// Consistency check against the right-view map; `guide` drives the
/// non-local refill.
fn with_lr(
    left_map: DisparityMap,
    right: impl FnOnce() -> Result<DisparityMap>,
    guide: &Image,
    p: &PipelineParams,
) -> Result<DisparityMap> {
    if !p.lr_check {
        return Ok(left_map);
    }
    let right_map = right()?;
    let checked = lr_consistency(&left_map, &right_map, p.lr_threshold, p.sign, p.refill)?;
    match p.refill {
        Refill::NonLocal => refine_nonlocal(&checked, guide, p.sigma_tree),
        _ => Ok(checked),
    }
}

/// Standard matcher on a full stereo pair.
pub fn run_full_pipeline(left: &Image, right: &Image, p: &PipelineParams) -> Result<DisparityMap> {
    p.validate()?;
    let (l, r) = cost_pair(left, right, p.color_costs);
    let v = dsi_full(&l, &r, p.dmax, p.sign)?;
    let map = finish(&v, left, p)?;
    with_lr(map, || right_view_map(&r, &l, right, p), left, p)
}

/// Upsample the decimated right image, smooth the left to the same
/// bandwidth, and match the dense pair. The smoothed images are also the
/// aggregation guides, as for any dense matcher fed this pair.
pub fn run_downsample_pipeline(left: &Image, payload: &SampleSet, p: &PipelineParams) -> Result<DisparityMap> {
    p.validate()?;
    check_dims(left, payload)?;
    let (Scheme::Downsample { factor }, Some(low)) = (payload.scheme(), payload.low_res()) else {
        return Err(Error::WrongScheme {
            expected: "downsample",
            actual: payload.scheme().name(),
        });
    };
    let f = *factor as f64;
    let right = resize_to(low, f, left.width(), left.height(), ResizeMode::UpsampleBilinear, p.antialias)?;
    let left_s = smoothed(left, p.antialias * f as f32, p.smooth_left && *factor > 1)?;
    let (l, r) = cost_pair(&left_s, &right, p.color_costs);
    let t = Instant::now();
    let v = dsi_full(&l, &r, p.dmax, p.sign)?;
    debug!("dense volume: {:.2?}", t.elapsed());
    let map = finish(&v, &left_s, p)?;
    with_lr(map, || right_view_map(&r, &l, &right, p), &left_s, p)
}

fn require_points(payload: &SampleSet) -> Result<()> {
    if payload.scheme().is_point() {
        Ok(())
    } else {
        Err(Error::WrongScheme {
            expected: "grid or fps",
            actual: payload.scheme().name(),
        })
    }
}

/// Sparse volume from the samples, densified with the left image as guide.
/// A payload holding every pixel is already complete and skips the filter.
fn densified_sparse(left: &Image, payload: &SampleSet, p: &PipelineParams) -> Result<CostVolume> {
    let color = p.color_costs && left.channels() == 3 && payload.channels() == 3;
    let l = if color { left.clone() } else { to_grayscale(left) };
    let t = Instant::now();
    let sparse = dsi_sparse(&l, payload, p.dmax, p.delta, p.sign)?;
    if payload.len() == left.width() * left.height() {
        let (w, h, dmax) = (sparse.width(), sparse.height(), sparse.dmax());
        return CostVolume::from_parts(w, h, dmax, VolumeKind::Dense, sparse.costs().to_vec(), sparse.occupancy().to_vec());
    }
    let fp = p.filter_params(payload.spacing())?;
    let dense = densify_dsi(&sparse, left, &fp, p.unresolved)?;
    debug!("densify (sigma_s {}): {:.2?}", fp.sigma_s, t.elapsed());
    Ok(dense)
}

/// Sparse volume -> densify -> aggregate -> select. No consistency check:
/// there is no right image to match from.
pub fn run_sparse_pipeline(left: &Image, payload: &SampleSet, p: &PipelineParams) -> Result<DisparityMap> {
    p.validate()?;
    check_dims(left, payload)?;
    require_points(payload)?;
    let v = densified_sparse(left, payload, p)?;
    finish(&v, left, p)
}

/// Blend of the densified sparse volume with the volume of an interpolated,
/// low-passed right image, which also stands in for the right view in the
/// consistency check.
pub fn run_hybrid_pipeline(left: &Image, payload: &SampleSet, p: &PipelineParams) -> Result<DisparityMap> {
    p.validate()?;
    check_dims(left, payload)?;
    require_points(payload)?;
    let route_a = densified_sparse(left, payload, p)?;

    let sigma = p.antialias * payload.spacing() as f32;
    let interpolated = interpolate_samples(payload)?;
    let right = smoothed(&interpolated, sigma, true)?;
    let left_s = smoothed(left, sigma, p.smooth_left)?;
    let (l, r) = cost_pair(&left_s, &right, p.color_costs);
    let route_b = dsi_full(&l, &r, p.dmax, p.sign)?;

    let v = blend(&route_a, &route_b, p.hybrid_weight)?;
    let map = finish(&v, left, p)?;
    with_lr(map, || right_view_map(&r, &l, &right, p), left, p)
}

/// Matching from the full pair with each cost layer band-limited to what
/// `fraction` of the right image could convey.
pub fn run_lower_bound_pipeline(left: &Image, right: &Image, fraction: f64, p: &PipelineParams) -> Result<DisparityMap> {
    p.validate()?;
    let (l, r) = cost_pair(left, right, p.color_costs);
    let v = lower_bound_dsi(&dsi_full(&l, &r, p.dmax, p.sign)?, fraction)?;
    let map = finish(&v, left, p)?;
    with_lr(
        map,
        || {
            let v = lower_bound_dsi(&dsi_full(&r, &l, p.dmax, p.sign.flipped())?, fraction)?;
            Ok(select_disparity(&aggregate(&v, right, p.sigma_tree)?))
        },
        left,
        p,
    )
}

pub fn decode(strategy: Strategy, left: &Image, payload: &SampleSet, p: &PipelineParams) -> Result<DisparityMap> {
    match strategy {
        Strategy::Downsample => run_downsample_pipeline(left, payload, p),
        Strategy::Sparse => run_sparse_pipeline(left, payload, p),
        Strategy::Hybrid => run_hybrid_pipeline(left, payload, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_downsample, encode_fps, encode_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textured scene: background at disparity 2, a square at disparity 6.
    /// Returns (left, right, true left disparities) with x - d matching.
    fn scene(w: usize, h: usize, seed: u64) -> (Image, Image, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg: Vec<f32> = (0..(w + 16) * h).map(|_| rng.gen_range(20..230) as f32).collect();
        let fg: Vec<f32> = (0..(w + 16) * h).map(|_| rng.gen_range(20..230) as f32).collect();
        let inside = |x: usize, y: usize| (w / 3..2 * w / 3).contains(&x) && (h / 3..2 * h / 3).contains(&y);
        let mut truth = vec![0u32; w * h];
        let left = Image::from_fn(w, h, |x, y| if inside(x, y) { fg[y * (w + 16) + x] } else { bg[y * (w + 16) + x] }).unwrap();
        for y in 0..h {
            for x in 0..w {
                truth[y * w + x] = if inside(x, y) { 6 } else { 2 };
            }
        }
        // Right pixel u shows left pixel u + d; the foreground wins.
        let right = Image::from_fn(w, h, |u, y| {
            if u + 6 < w && inside(u + 6, y) {
                fg[y * (w + 16) + u + 6]
            } else {
                bg[y * (w + 16) + u + 2]
            }
        })
        .unwrap();
        (left, right, truth)
    }

    fn accuracy(map: &DisparityMap, truth: &[u32], margin: usize) -> f64 {
        let (w, h) = (map.width(), map.height());
        let mut good = 0;
        let mut total = 0;
        for y in 0..h {
            for x in margin..w {
                total += 1;
                if map.get(x, y).abs_diff(truth[y * w + x]) <= 1 {
                    good += 1;
                }
            }
        }
        good as f64 / total as f64
    }

    #[test]
    fn full_matcher_recovers_the_scene() {
        let (l, r, truth) = scene(48, 36, 1);
        let p = PipelineParams::new(8);
        let map = run_full_pipeline(&l, &r, &p).unwrap();
        assert!(accuracy(&map, &truth, 8) > 0.95);
        assert!(map.stable_fraction() > 0.8);
    }

    #[test]
    fn downsample_at_factor_one_is_the_full_matcher() {
        let (l, r, _) = scene(40, 30, 2);
        let p = PipelineParams::new(8);
        let ds = encode_downsample(&r, 1).unwrap();
        assert_eq!(
            run_downsample_pipeline(&l, &ds, &p).unwrap(),
            run_full_pipeline(&l, &r, &p).unwrap()
        );
    }

    #[test]
    fn sparse_at_spacing_one_agrees_with_downsample_at_factor_one() {
        let (l, r, _) = scene(40, 30, 3);
        let mut p = PipelineParams::new(8);
        p.lr_check = false;
        let dense = run_downsample_pipeline(&l, &encode_downsample(&r, 1).unwrap(), &p).unwrap();
        let sparse = run_sparse_pipeline(&l, &encode_grid(&r, 1).unwrap(), &p).unwrap();
        assert_eq!(dense.disparity(), sparse.disparity());
    }

    #[test]
    fn strategies_work_on_reduced_payloads() {
        let (l, r, truth) = scene(60, 45, 4);
        let p = PipelineParams::new(8);
        let grid = encode_grid(&r, 3).unwrap();
        let fps = encode_fps(&r, grid.len(), 9, 0.2).unwrap();
        let ds = encode_downsample(&r, 2).unwrap();
        let sparse = run_sparse_pipeline(&l, &grid, &p).unwrap();
        assert!(sparse.stability().iter().all(|&s| s));
        assert!(accuracy(&sparse, &truth, 8) > 0.8, "{}", accuracy(&sparse, &truth, 8));
        let hybrid = run_hybrid_pipeline(&l, &grid, &p).unwrap();
        assert!(accuracy(&hybrid, &truth, 8) > 0.8, "{}", accuracy(&hybrid, &truth, 8));
        let hybrid_fps = run_hybrid_pipeline(&l, &fps, &p).unwrap();
        assert!(accuracy(&hybrid_fps, &truth, 8) > 0.7);
        let down = run_downsample_pipeline(&l, &ds, &p).unwrap();
        assert!(accuracy(&down, &truth, 8) > 0.8, "{}", accuracy(&down, &truth, 8));
    }

    #[test]
    fn hybrid_with_full_weight_is_sparse_before_the_check() {
        let (l, r, _) = scene(40, 30, 5);
        let mut p = PipelineParams::new(8);
        p.hybrid_weight = 1.0;
        p.lr_check = false;
        let grid = encode_grid(&r, 3).unwrap();
        assert_eq!(
            run_hybrid_pipeline(&l, &grid, &p).unwrap(),
            run_sparse_pipeline(&l, &grid, &p).unwrap()
        );
    }

    #[test]
    fn pipelines_are_deterministic() {
        let (l, r, _) = scene(36, 24, 6);
        let p = PipelineParams::new(8);
        let fps = encode_fps(&r, 100, 3, 0.2).unwrap();
        assert_eq!(
            run_hybrid_pipeline(&l, &fps, &p).unwrap(),
            run_hybrid_pipeline(&l, &fps, &p).unwrap()
        );
    }

    #[test]
    fn scheme_and_param_errors() {
        let (l, r, _) = scene(20, 16, 7);
        let p = PipelineParams::new(4);
        let grid = encode_grid(&r, 2).unwrap();
        let ds = encode_downsample(&r, 2).unwrap();
        assert!(matches!(run_downsample_pipeline(&l, &grid, &p), Err(Error::WrongScheme { .. })));
        assert!(matches!(run_sparse_pipeline(&l, &ds, &p), Err(Error::WrongScheme { .. })));
        assert!(matches!(run_hybrid_pipeline(&l, &ds, &p), Err(Error::WrongScheme { .. })));
        let mut bad = p.clone();
        bad.hybrid_weight = 1.5;
        assert!(run_hybrid_pipeline(&l, &grid, &bad).is_err());
        let small = Image::filled(10, 16, 1, 0.0).unwrap();
        assert!(run_sparse_pipeline(&small, &grid, &p).is_err());
        assert_eq!("hybrid".parse::<Strategy>().unwrap(), Strategy::Hybrid);
        assert!("graphcut".parse::<Strategy>().is_err());
    }

    #[test]
    fn lower_bound_at_full_rate_is_the_full_matcher() {
        let (l, r, _) = scene(30, 20, 8);
        let p = PipelineParams::new(8);
        assert_eq!(
            run_lower_bound_pipeline(&l, &r, 1.0, &p).unwrap(),
            run_full_pipeline(&l, &r, &p).unwrap()
        );
        assert!(run_lower_bound_pipeline(&l, &r, 0.04, &p).is_ok());
    }
}
