//! Joint bilateral filtering with a truncated square window, plus the
//! sparse-normalized variant used to densify cost volumes.
//!
//! Every entry point shares one accumulation routine, so a fully occupied
//! sparse layer filters to exactly the same values as the dense filter.

use rayon::prelude::*;

use crate::costvolume::{CostVolume, VolumeKind};
use crate::error::{Error, Result};
use crate::imagecore::Image;

pub const DEFAULT_SIGMA_R: f32 = 20.0;
/// Spatial sigma as a multiple of the sample spacing.
pub const DEFAULT_SIGMA_S_MULT: f32 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub sigma_s: f32,
    pub sigma_r: f32,
    /// Window half-size; `None` means `ceil(3 * sigma_s)`.
    pub radius: Option<usize>,
}

impl FilterParams {
    pub fn new(sigma_s: f32, sigma_r: f32) -> Result<Self> {
        let p = FilterParams {
            sigma_s,
            sigma_r,
            radius: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults for samples `spacing` pixels apart.
    pub fn for_spacing(spacing: f64) -> Result<Self> {
        FilterParams::new(DEFAULT_SIGMA_S_MULT * spacing as f32, DEFAULT_SIGMA_R)
    }

    pub fn with_radius(mut self, radius: usize) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn radius(&self) -> usize {
        self.radius
            .unwrap_or_else(|| (3.0 * self.sigma_s as f64 - 1e-9).ceil().max(0.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::param(format!("sigma_s must be positive, got {}", self.sigma_s)));
        }
        if !(self.sigma_r > 0.0 && self.sigma_r.is_finite()) {
            return Err(Error::param(format!("sigma_r must be positive, got {}", self.sigma_r)));
        }
        Ok(())
    }
}

/// What densification writes into entries whose window held no samples.
/// Such entries stay unoccupied either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnresolvedFill {
    /// Largest resolved cost of the layer.
    #[default]
    LayerMax,
    /// Closest resolved entry on the same row and layer (layer max if none).
    RowNearest,
}

impl UnresolvedFill {
    pub fn name(self) -> &'static str {
        match self {
            UnresolvedFill::LayerMax => "layer-max",
            UnresolvedFill::RowNearest => "row-nearest",
        }
    }
}

impl std::str::FromStr for UnresolvedFill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layer-max" => Ok(UnresolvedFill::LayerMax),
            "row-nearest" => Ok(UnresolvedFill::RowNearest),
            other => Err(Error::param(format!("unknown fill {other:?} (layer-max|row-nearest)"))),
        }
    }
}

/// Range weight on guide differences. Integer-valued gray guides use a table.
enum RangeKernel {
    Table(Vec<f64>),
    Direct { inv_two_var: f64, channels: usize },
}

impl RangeKernel {
    fn new(guide: &Image, sigma_r: f32) -> Self {
        let inv_two_var = 1.0 / (2.0 * (sigma_r as f64).powi(2));
        if guide.channels() == 1 && guide.data().iter().all(|v| v.fract() == 0.0) {
            let table = (0..=255).map(|d: i32| (-((d * d) as f64) * inv_two_var).exp()).collect();
            RangeKernel::Table(table)
        } else {
            RangeKernel::Direct {
                inv_two_var,
                channels: guide.channels(),
            }
        }
    }

    #[inline]
    fn weight(&self, a: &[f32], b: &[f32]) -> f64 {
        match self {
            RangeKernel::Table(t) => t[(a[0] - b[0]).abs() as usize],
            RangeKernel::Direct { inv_two_var, channels } => {
                let sq: f64 = a.iter().zip(b).map(|(p, q)| ((p - q) as f64).powi(2)).sum();
                (-(sq / *channels as f64) * inv_two_var).exp()
            }
        }
    }
}

/// Occupied entries grouped by pixel: for pixel `q`, `layer[start[q]..start[q+1]]`
/// and the matching costs. `rows[y]` lists the columns with any entry.
struct Entries {
    start: Vec<usize>,
    layer: Vec<u32>,
    cost: Vec<f32>,
    rows: Vec<Vec<usize>>,
}

impl Entries {
    /// `values` is layer-major with `layers` planes of `w * h`.
    fn gather(values: &[f32], occupancy: Option<&[bool]>, layers: usize, w: usize, h: usize) -> Self {
        let n = w * h;
        let occupied = |i: usize| occupancy.map_or(true, |o| o[i]);
        let mut start = Vec::with_capacity(n + 1);
        let mut layer = Vec::new();
        let mut cost = Vec::new();
        let mut rows = vec![Vec::new(); h];
        start.push(0);
        for q in 0..n {
            for d in 0..layers {
                let i = d * n + q;
                if occupied(i) {
                    layer.push(d as u32);
                    cost.push(values[i]);
                }
            }
            if layer.len() > *start.last().unwrap_or(&0) {
                rows[q / w].push(q % w);
            }
            start.push(layer.len());
        }
        Entries {
            start,
            layer,
            cost,
            rows,
        }
    }
}

/// Filters `layers` planes at once. Returns layer-major values and a
/// resolved flag per entry (false where the window held no occupied entry).
fn filter_planes(
    values: &[f32],
    occupancy: Option<&[bool]>,
    layers: usize,
    guide: &Image,
    p: &FilterParams,
) -> (Vec<f32>, Vec<bool>) {
    let (w, h) = (guide.width(), guide.height());
    let n = w * h;
    let r = p.radius();
    let side = 2 * r + 1;
    let inv_two_var_s = 1.0 / (2.0 * (p.sigma_s as f64).powi(2));
    let spatial: Vec<f64> = (0..side * side)
        .map(|i| {
            let dy = (i / side) as f64 - r as f64;
            let dx = (i % side) as f64 - r as f64;
            (-(dx * dx + dy * dy) * inv_two_var_s).exp()
        })
        .collect();
    let range = RangeKernel::new(guide, p.sigma_r);
    let entries = Entries::gather(values, occupancy, layers, w, h);

    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = vec![0f32; w * layers];
            let mut resolved = vec![false; w * layers];
            let mut num = vec![0f64; layers];
            let mut den = vec![0f64; layers];
            for x in 0..w {
                num.fill(0.0);
                den.fill(0.0);
                let gp = guide.pixel(x, y);
                let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
                for yq in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    let cols = &entries.rows[yq];
                    let lo = cols.partition_point(|&c| c < x0);
                    let hi = cols.partition_point(|&c| c <= x1);
                    let srow = (yq + r - y) * side;
                    for &xq in &cols[lo..hi] {
                        let wgt = spatial[srow + xq + r - x] * range.weight(gp, guide.pixel(xq, yq));
                        let q = yq * w + xq;
                        for k in entries.start[q]..entries.start[q + 1] {
                            let d = entries.layer[k] as usize;
                            num[d] += wgt * entries.cost[k] as f64;
                            den[d] += wgt;
                        }
                    }
                }
                for d in 0..layers {
                    if den[d] > 0.0 {
                        out[d * w + x] = (num[d] / den[d]) as f32;
                        resolved[d * w + x] = true;
                    }
                }
            }
            (out, resolved)
        })
        .collect();

    let mut out = vec![0f32; n * layers];
    let mut resolved = vec![false; n * layers];
    for (y, (vals, res)) in rows.into_iter().enumerate() {
        for d in 0..layers {
            let dst = d * n + y * w;
            out[dst..dst + w].copy_from_slice(&vals[d * w..(d + 1) * w]);
            resolved[dst..dst + w].copy_from_slice(&res[d * w..(d + 1) * w]);
        }
    }
    (out, resolved)
}

fn check_guide(w: usize, h: usize, guide: &Image) -> Result<()> {
    if guide.width() != w || guide.height() != h {
        return Err(Error::dims(format!(
            "guide is {}x{}, target is {w}x{h}",
            guide.width(),
            guide.height()
        )));
    }
    Ok(())
}

/// Edge-preserving smoothing of `target` with range weights taken from `guide`.
pub fn jbf_dense(target: &Image, guide: &Image, p: &FilterParams) -> Result<Image> {
    p.validate()?;
    check_guide(target.width(), target.height(), guide)?;
    let planes: Vec<f32> = (0..target.channels()).flat_map(|c| target.plane(c)).collect();
    let (out, _) = filter_planes(&planes, None, target.channels(), guide, p);
    let n = target.width() * target.height();
    let planes: Vec<Vec<f32>> = out.chunks(n).map(<[f32]>::to_vec).collect();
    Image::from_planes(target.width(), target.height(), &planes)
}

/// A filtered layer: values everywhere, `resolved` false where no occupied
/// entry fell inside the window (those values are 0).
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredLayer {
    pub values: Vec<f32>,
    pub resolved: Vec<bool>,
}

/// Normalized filtering over the occupied entries of one layer.
pub fn jbf_sparse_layer(
    layer: &[f32],
    occupancy: &[bool],
    guide: &Image,
    p: &FilterParams,
) -> Result<FilteredLayer> {
    p.validate()?;
    let n = guide.width() * guide.height();
    if layer.len() != n || occupancy.len() != n {
        return Err(Error::dims(format!(
            "layer of {} entries vs guide of {n} pixels",
            layer.len()
        )));
    }
    let (values, resolved) = filter_planes(layer, Some(occupancy), 1, guide, p);
    Ok(FilteredLayer { values, resolved })
}

/// Densifies every layer with the sparse-normalized filter. Resolved entries
/// become occupied; the rest are filled per `fill` and left unoccupied.
pub fn densify_dsi(v: &CostVolume, guide: &Image, p: &FilterParams, fill: UnresolvedFill) -> Result<CostVolume> {
    p.validate()?;
    check_guide(v.width(), v.height(), guide)?;
    let (w, n) = (v.width(), v.layer_len());
    let (mut costs, resolved) = filter_planes(v.costs(), Some(v.occupancy()), v.layers(), guide, p);
    for d in 0..v.layers() {
        let layer = &mut costs[d * n..(d + 1) * n];
        let res = &resolved[d * n..(d + 1) * n];
        let max = layer
            .iter()
            .zip(res)
            .filter(|(_, &r)| r)
            .map(|(&c, _)| c)
            .fold(0f32, f32::max);
        match fill {
            UnresolvedFill::LayerMax => {
                for (c, &r) in layer.iter_mut().zip(res) {
                    if !r {
                        *c = max;
                    }
                }
            }
            UnresolvedFill::RowNearest => {
                for (row, rrow) in layer.chunks_mut(w).zip(res.chunks(w)) {
                    fill_row_nearest(row, rrow, max);
                }
            }
        }
    }
    CostVolume::from_parts(v.width(), v.height(), v.dmax(), VolumeKind::Dense, costs, resolved)
}

fn fill_row_nearest(row: &mut [f32], resolved: &[bool], fallback: f32) {
    let w = row.len();
    let mut left: Vec<Option<usize>> = vec![None; w];
    let mut last = None;
    for x in 0..w {
        if resolved[x] {
            last = Some(x);
        }
        left[x] = last;
    }
    let mut next = None;
    for x in (0..w).rev() {
        if resolved[x] {
            next = Some(x);
            continue;
        }
        let pick = match (left[x], next) {
            (Some(a), Some(b)) => Some(if x - a <= b - x { a } else { b }),
            (a, b) => a.or(b),
        };
        row[x] = pick.map_or(fallback, |i| row[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costvolume::{dsi_sparse, DisparitySign, SPARSE_DELTA};
    use crate::encoder::encode_grid;
    use crate::imagecore::gaussian_smooth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, channels: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * channels).map(|_| rng.gen_range(0..=255) as f32).collect();
        Image::new(w, h, channels, data).unwrap()
    }

    /// Direct O(W·H·r²) windowed sum, written independently of the production path.
    fn brute(
        target: &[f32],
        occ: &[bool],
        guide: &Image,
        sigma_s: f64,
        sigma_r: f64,
        r: isize,
    ) -> Vec<Option<f64>> {
        let (w, h) = (guide.width() as isize, guide.height() as isize);
        let c = guide.channels();
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (mut num, mut den) = (0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (xq, yq) = (x + dx, y + dy);
                        if xq < 0 || yq < 0 || xq >= w || yq >= h {
                            continue;
                        }
                        let q = (yq * w + xq) as usize;
                        if !occ[q] {
                            continue;
                        }
                        let mut sq = 0.0;
                        for ch in 0..c {
                            let a = guide.get(x as usize, y as usize, ch) as f64;
                            let b = guide.get(xq as usize, yq as usize, ch) as f64;
                            sq += (a - b) * (a - b);
                        }
                        sq /= c as f64;
                        let f = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_s * sigma_s)).exp()
                            * (-sq / (2.0 * sigma_r * sigma_r)).exp();
                        num += f * target[q] as f64;
                        den += f;
                    }
                }
                out.push((den > 0.0).then(|| num / den));
            }
        }
        out
    }

    fn assert_close(a: f32, b: f64) {
        let rel = (a as f64 - b).abs() / b.abs().max(1.0);
        assert!(rel < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn params_validation() {
        assert!(FilterParams::new(0.0, 20.0).is_err());
        assert!(FilterParams::new(3.0, -1.0).is_err());
        let p = FilterParams::for_spacing(5.0).unwrap();
        assert_eq!((p.sigma_s, p.sigma_r, p.radius()), (15.0, 20.0, 45));
        assert_eq!(FilterParams::new(1.5, 20.0).unwrap().radius(), 5);
        assert_eq!(p.with_radius(2).radius(), 2);
    }

    #[test]
    fn dense_matches_brute_force_gray_and_color() {
        for (channels, seed) in [(1, 1), (3, 2)] {
            let guide = random(32, 32, channels, seed);
            let target = random(32, 32, 1, seed + 10);
            let p = FilterParams::new(2.0, 20.0).unwrap();
            let got = jbf_dense(&target, &guide, &p).unwrap();
            let oracle = brute(target.data(), &[true; 1024], &guide, 2.0, 20.0, 6);
            for (a, b) in got.data().iter().zip(oracle) {
                assert_close(*a, b.unwrap());
            }
        }
    }

    #[test]
    fn non_integral_guide_uses_direct_kernel() {
        let guide = gaussian_smooth(&random(32, 32, 1, 3), 1.3).unwrap();
        let target = random(32, 32, 1, 4);
        let p = FilterParams::new(1.5, 10.0).unwrap();
        let got = jbf_dense(&target, &guide, &p).unwrap();
        let oracle = brute(target.data(), &[true; 1024], &guide, 1.5, 10.0, 5);
        for (a, b) in got.data().iter().zip(oracle) {
            assert_close(*a, b.unwrap());
        }
    }

    #[test]
    fn sparse_matches_brute_force() {
        let guide = random(32, 32, 1, 5);
        let target = random(32, 32, 1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let occ: Vec<bool> = (0..1024).map(|_| rng.gen_bool(0.05)).collect();
        let p = FilterParams::new(1.0, 20.0).unwrap();
        let got = jbf_sparse_layer(target.data(), &occ, &guide, &p).unwrap();
        let oracle = brute(target.data(), &occ, &guide, 1.0, 20.0, 3);
        let mut unresolved = 0;
        for i in 0..1024 {
            match oracle[i] {
                Some(b) => {
                    assert!(got.resolved[i]);
                    assert_close(got.values[i], b);
                }
                None => {
                    unresolved += 1;
                    assert!(!got.resolved[i]);
                }
            }
        }
        assert!(unresolved > 0, "test should exercise empty windows");
    }

    #[test]
    fn constant_target_and_constant_guide() {
        let guide = random(20, 15, 1, 8);
        let flat = Image::filled(20, 15, 1, 77.0).unwrap();
        let p = FilterParams::new(2.0, 20.0).unwrap();
        let out = jbf_dense(&flat, &guide, &p).unwrap();
        assert!(out.data().iter().all(|v| (v - 77.0).abs() < 1e-4));

        // Constant guide: a truncated, renormalized spatial Gaussian.
        let target = random(20, 15, 1, 9);
        let out = jbf_dense(&target, &Image::filled(20, 15, 1, 50.0).unwrap(), &p).unwrap();
        let oracle = brute(target.data(), &[true; 300], &flat, 2.0, 20.0, 6);
        for (a, b) in out.data().iter().zip(oracle) {
            assert_close(*a, b.unwrap());
        }
    }

    #[test]
    fn step_edge_is_preserved() {
        let guide = Image::from_fn(9, 9, |x, _| if x < 4 { 20.0 } else { 220.0 }).unwrap();
        let out = jbf_dense(&guide, &guide, &FilterParams::new(2.0, 20.0).unwrap()).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                assert!((out.get(x, y, 0) - guide.get(x, y, 0)).abs() < 1.0);
            }
        }
    }

    #[test]
    fn single_sample_spreads_exactly() {
        let guide = random(15, 15, 1, 11);
        let mut layer = vec![0f32; 225];
        let mut occ = vec![false; 225];
        layer[7 * 15 + 7] = 42.5;
        occ[7 * 15 + 7] = true;
        let p = FilterParams::new(1.0, 20.0).unwrap();
        let got = jbf_sparse_layer(&layer, &occ, &guide, &p).unwrap();
        for y in 0..15usize {
            for x in 0..15usize {
                let inside = x.abs_diff(7) <= 3 && y.abs_diff(7) <= 3;
                assert_eq!(got.resolved[y * 15 + x], inside);
                if inside {
                    assert_eq!(got.values[y * 15 + x], 42.5);
                }
            }
        }
    }

    #[test]
    fn full_occupancy_equals_dense_exactly() {
        let guide = random(24, 18, 3, 12);
        let target = random(24, 18, 1, 13);
        let p = FilterParams::new(2.5, 20.0).unwrap();
        let dense = jbf_dense(&target, &guide, &p).unwrap();
        let sparse = jbf_sparse_layer(target.data(), &[true; 24 * 18], &guide, &p).unwrap();
        assert_eq!(dense.data(), &sparse.values[..]);
        assert!(sparse.resolved.iter().all(|&r| r));
    }

    #[test]
    fn grid_layer_on_two_region_guide() {
        // Two regions; grid samples carry the region's own level.
        let guide = Image::from_fn(32, 32, |x, _| if x < 16 { 40.0 } else { 200.0 }).unwrap();
        let layer: Vec<f32> = (0..1024).map(|i| if i % 32 < 16 { 10.0 } else { 90.0 }).collect();
        let occ: Vec<bool> = (0..1024).map(|i| (i % 32) % 5 == 2 && (i / 32) % 5 == 2).collect();
        let p = FilterParams::for_spacing(5.0).unwrap();
        let got = jbf_sparse_layer(&layer, &occ, &guide, &p).unwrap();
        let oracle = brute(&layer, &occ, &guide, 15.0, 20.0, 45);
        // A sample's own weight is 1, so cross-region leakage at its pixel is at
        // most (cross-region samples) x (range weight across the step) x (value gap).
        let samples = occ.iter().filter(|&&o| o).count() as f64;
        let bound = samples * (-(160.0f64 * 160.0) / 800.0).exp() * 80.0;
        for i in 0..1024 {
            assert_close(got.values[i], oracle[i].unwrap());
            if occ[i] {
                assert!(((got.values[i] - layer[i]).abs() as f64) <= bound + 1e-5);
            }
        }
    }

    #[test]
    fn densify_fills_and_flags() {
        let left = random(30, 20, 1, 14);
        let right = random(30, 20, 1, 15);
        let grid = encode_grid(&right, 6).unwrap();
        let sparse = dsi_sparse(&left, &grid, 4, SPARSE_DELTA, DisparitySign::Negative).unwrap();
        let p = FilterParams::new(1.0, 20.0).unwrap();
        let dense = densify_dsi(&sparse, &left, &p, UnresolvedFill::LayerMax).unwrap();
        for d in 0..5 {
            let filtered = jbf_sparse_layer(sparse.layer(d), sparse.occupancy_layer(d), &left, &p).unwrap();
            assert_eq!(dense.occupancy_layer(d), &filtered.resolved[..]);
            let max = filtered
                .values
                .iter()
                .zip(&filtered.resolved)
                .filter(|(_, &r)| r)
                .map(|(v, _)| *v)
                .fold(0f32, f32::max);
            for i in 0..600 {
                let expect = if filtered.resolved[i] { filtered.values[i] } else { max };
                assert_eq!(dense.layer(d)[i], expect);
            }
        }
        assert!(dense.occupied_count() < dense.costs().len());

        let nearest = densify_dsi(&sparse, &left, &p, UnresolvedFill::RowNearest).unwrap();
        assert_eq!(nearest.occupancy(), dense.occupancy());
    }

    #[test]
    fn densify_dense_volume_is_layerwise_dense_filter() {
        let left = random(16, 12, 1, 16);
        let right = random(16, 12, 1, 17);
        let full = crate::costvolume::dsi_full(&left, &right, 2, DisparitySign::Positive).unwrap();
        let all = CostVolume::dense(16, 12, 2, full.costs().to_vec()).unwrap();
        let p = FilterParams::new(1.5, 20.0).unwrap();
        let out = densify_dsi(&all, &left, &p, UnresolvedFill::LayerMax).unwrap();
        for d in 0..3 {
            let layer = Image::new(16, 12, 1, all.layer(d).to_vec()).unwrap();
            let expect = jbf_dense(&layer, &left, &p).unwrap();
            assert_eq!(out.layer(d), expect.data());
        }
    }

    #[test]
    fn empty_layer_is_unresolved() {
        let guide = random(8, 8, 1, 18);
        let v = CostVolume::from_parts(8, 8, 1, VolumeKind::Sparse, vec![0.0; 128], vec![false; 128]).unwrap();
        let out = densify_dsi(&v, &guide, &FilterParams::new(1.0, 20.0).unwrap(), UnresolvedFill::LayerMax).unwrap();
        assert_eq!(out.occupied_count(), 0);
    }

    #[test]
    fn row_nearest_fill() {
        let mut row = [0.0, 5.0, 0.0, 0.0, 9.0, 0.0];
        fill_row_nearest(&mut row, &[false, true, false, false, true, false], 99.0);
        assert_eq!(row, [5.0, 5.0, 5.0, 9.0, 9.0, 9.0]);
        let mut row = [0.0, 0.0];
        fill_row_nearest(&mut row, &[false, false], 3.0);
        assert_eq!(row, [3.0, 3.0]);
    }

    #[test]
    fn guide_mismatch_is_an_error() {
        let p = FilterParams::new(1.0, 20.0).unwrap();
        assert!(jbf_dense(&random(8, 8, 1, 0), &random(8, 7, 1, 0), &p).is_err());
        assert!(jbf_sparse_layer(&[0.0; 10], &[true; 10], &random(8, 8, 1, 0), &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sparse_output_is_a_convex_combination(seed in any::<u64>(), density in 0.02f64..0.5) {
            let guide = random(16, 16, 1, seed);
            let target = random(16, 16, 1, seed ^ 0x5a5a);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let occ: Vec<bool> = (0..256).map(|_| rng.gen_bool(density)).collect();
            let p = FilterParams::new(1.0, 20.0).unwrap();
            let r = p.radius();
            let out = jbf_sparse_layer(target.data(), &occ, &guide, &p).unwrap();
            for y in 0..16usize {
                for x in 0..16usize {
                    let i = y * 16 + x;
                    if !out.resolved[i] {
                        continue;
                    }
                    let window = (y.saturating_sub(r)..=(y + r).min(15))
                        .flat_map(|yq| (x.saturating_sub(r)..=(x + r).min(15)).map(move |xq| yq * 16 + xq))
                        .filter(|&q| occ[q])
                        .map(|q| target.data()[q]);
                    let (lo, hi) = window.fold((f32::MAX, f32::MIN), |(a, b), v| (a.min(v), b.max(v)));
                    prop_assert!(out.values[i] >= lo - 1e-3 && out.values[i] <= hi + 1e-3);
                }
            }
        }
    }
}
