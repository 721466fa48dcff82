//! Farthest-point sampling.
//!
//! The sampler is a small state machine shared by the encoder and the
//! decoder: positions depend only on the seed and on the values of the
//! samples already taken, so a receiver that knows the values can replay the
//! exact same sequence of coordinates.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Intensity spread that doubles the priority of an adaptive candidate.
pub const DEFAULT_DETAIL_SCALE: f32 = 32.0;

type HeapEntry = (u64, Reverse<u32>, Reverse<u32>);

#[derive(Debug)]
pub struct FpsSampler {
    width: usize,
    height: usize,
    count: usize,
    uniform_count: usize,
    detail_scale: f32,
    /// Squared distance from each pixel to its nearest chosen sample.
    dist2: Vec<u64>,
    /// Index of that nearest sample.
    owner: Vec<u32>,
    values: Vec<f32>,
    positions: Vec<(usize, usize)>,
    heap: BinaryHeap<HeapEntry>,
    rng: ChaCha8Rng,
    pending: Option<(usize, usize, u64)>,
}

impl FpsSampler {
    pub fn new(
        width: usize,
        height: usize,
        count: usize,
        seed: u64,
        adaptive_fraction: f32,
        detail_scale: f32,
    ) -> Result<Self> {
        if count == 0 || count > width * height {
            return Err(Error::param(format!(
                "fps count {count} outside 1..={}",
                width * height
            )));
        }
        if !(0.0..=1.0).contains(&adaptive_fraction) {
            return Err(Error::param("adaptive fraction must lie in [0, 1]"));
        }
        if !(detail_scale > 0.0) || !detail_scale.is_finite() {
            return Err(Error::param("detail scale must be positive"));
        }
        let adaptive = ((adaptive_fraction as f64) * count as f64 + 1e-9).floor() as usize;
        Ok(FpsSampler {
            width,
            height,
            count,
            uniform_count: count - adaptive.min(count),
            detail_scale,
            dist2: vec![u64::MAX; width * height],
            owner: vec![0; width * height],
            values: Vec::with_capacity(count),
            positions: Vec::with_capacity(count),
            heap: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
        })
    }

    /// Samples taken in the distance-only phase.
    pub fn uniform_count(&self) -> usize {
        self.uniform_count
    }

    pub fn taken(&self) -> usize {
        self.positions.len()
    }

    /// Coordinates of the next sample. Must be followed by [`FpsSampler::push`]
    /// with the value read there.
    pub fn next_position(&mut self) -> (usize, usize) {
        assert!(self.taken() < self.count, "all samples taken");
        assert!(self.pending.is_none(), "push the previous value first");
        let (x, y, bound) = if self.positions.is_empty() {
            let i = self.rng.gen_range(0..self.width * self.height);
            (i % self.width, i / self.width, u64::MAX)
        } else if self.taken() < self.uniform_count {
            self.farthest()
        } else {
            self.most_detailed()
        };
        self.pending = Some((x, y, bound));
        (x, y)
    }

    /// Records the (gray) value of the sample returned by the last
    /// [`FpsSampler::next_position`].
    pub fn push(&mut self, value: f32) {
        let (x, y, bound) = self.pending.take().expect("next_position first");
        let index = self.positions.len() as u32;
        self.positions.push((x, y));
        self.values.push(value);
        let track = self.taken() < self.uniform_count;

        if bound == u64::MAX {
            for py in 0..self.height {
                for px in 0..self.width {
                    let d = sq(px, x) + sq(py, y);
                    let i = py * self.width + px;
                    self.dist2[i] = d;
                    self.owner[i] = index;
                }
            }
            if track {
                self.heap = (0..self.width * self.height)
                    .filter(|&i| self.dist2[i] > 0)
                    .map(|i| entry(self.dist2[i], i % self.width, i / self.width))
                    .collect();
            }
            return;
        }

        // Only pixels closer than the current maximum distance can change owner.
        let r = (bound as f64).sqrt().ceil() as usize;
        let (x0, x1) = (x.saturating_sub(r), (x + r).min(self.width - 1));
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(self.height - 1));
        for py in y0..=y1 {
            let dy = sq(py, y);
            for px in x0..=x1 {
                let i = py * self.width + px;
                let d = sq(px, x) + dy;
                if d < self.dist2[i] {
                    self.dist2[i] = d;
                    self.owner[i] = index;
                    if track && d > 0 {
                        self.heap.push(entry(d, px, py));
                    }
                }
            }
        }
    }

    fn farthest(&mut self) -> (usize, usize, u64) {
        while let Some((d, Reverse(y), Reverse(x))) = self.heap.pop() {
            let (x, y) = (x as usize, y as usize);
            if d > 0 && self.dist2[y * self.width + x] == d {
                return (x, y, d);
            }
        }
        unreachable!("count <= W*H leaves an unsampled pixel")
    }

    /// Maximizes `distance * (1 + spread / detail_scale)`, where `spread` is
    /// the intensity range over the candidate's nearest sample and the samples
    /// owning neighboring cells. Ties go to the smallest `(y, x)`.
    fn most_detailed(&mut self) -> (usize, usize, u64) {
        let n = self.values.len();
        let mut lo = self.values.clone();
        let mut hi = self.values.clone();
        let w = self.width;
        let link = |a: u32, b: u32, lo: &mut [f32], hi: &mut [f32]| {
            let (a, b) = (a as usize, b as usize);
            let (va, vb) = (self.values[a], self.values[b]);
            lo[a] = lo[a].min(vb);
            hi[a] = hi[a].max(vb);
            lo[b] = lo[b].min(va);
            hi[b] = hi[b].max(va);
        };
        for y in 0..self.height {
            for x in 0..w {
                let o = self.owner[y * w + x];
                if x + 1 < w && self.owner[y * w + x + 1] != o {
                    link(o, self.owner[y * w + x + 1], &mut lo, &mut hi);
                }
                if y + 1 < self.height && self.owner[(y + 1) * w + x] != o {
                    link(o, self.owner[(y + 1) * w + x], &mut lo, &mut hi);
                }
            }
        }
        let weight: Vec<f64> = (0..n)
            .map(|i| 1.0 + ((hi[i] - lo[i]) / self.detail_scale) as f64)
            .collect();

        let mut best = (0usize, 0usize);
        let mut best_score = -1f64;
        let mut max_d2 = 0u64;
        for y in 0..self.height {
            for x in 0..w {
                let i = y * w + x;
                let d2 = self.dist2[i];
                max_d2 = max_d2.max(d2);
                if d2 == 0 {
                    continue;
                }
                let score = (d2 as f64).sqrt() * weight[self.owner[i] as usize];
                if score > best_score {
                    best_score = score;
                    best = (x, y);
                }
            }
        }
        (best.0, best.1, max_d2)
    }
}

#[inline]
fn sq(a: usize, b: usize) -> u64 {
    let d = a.abs_diff(b) as u64;
    d * d
}

#[inline]
fn entry(d2: u64, x: usize, y: usize) -> HeapEntry {
    (d2, Reverse(y as u32), Reverse(x as u32))
}

/// Replays the sampler over known values to recover the sample coordinates.
pub(crate) fn replay_positions(
    width: usize,
    height: usize,
    count: usize,
    seed: u64,
    adaptive_fraction: f32,
    detail_scale: f32,
    gray_values: &[f32],
) -> Result<Vec<(u32, u32)>> {
    let mut sampler = FpsSampler::new(width, height, count, seed, adaptive_fraction, detail_scale)?;
    let mut out = Vec::with_capacity(count);
    for &v in gray_values.iter().take(count) {
        let (x, y) = sampler.next_position();
        sampler.push(v);
        out.push((x as u32, y as u32));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_fps, encode_fps_with, PixelSource};
    use crate::imagecore::Image;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| if (x / 4 + y / 3) % 2 == 0 { (x * 9 % 256) as f32 } else { 200.0 }).unwrap()
    }

    fn positions(img: &Image, count: usize, seed: u64, adaptive: f32) -> Vec<(usize, usize)> {
        encode_fps(img, count, seed, adaptive)
            .unwrap()
            .samples()
            .map(|s| (s.x, s.y))
            .collect()
    }

    /// Exhaustive farthest-point reference: O(W H n) per step.
    fn brute_force(w: usize, h: usize, first: (usize, usize), count: usize) -> Vec<(usize, usize)> {
        let mut chosen = vec![first];
        while chosen.len() < count {
            let mut best = (0, 0);
            let mut best_d = 0u64;
            for y in 0..h {
                for x in 0..w {
                    let d = chosen.iter().map(|&(cx, cy)| sq(x, cx) + sq(y, cy)).min().unwrap();
                    if d > best_d {
                        best_d = d;
                        best = (x, y);
                    }
                }
            }
            chosen.push(best);
        }
        chosen
    }

    #[test]
    fn single_sample_is_the_seeded_start() {
        let img = texture(13, 9);
        let a = positions(&img, 1, 42, 0.0);
        let b = positions(&img, 1, 42, 0.0);
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let i = rng.gen_range(0..13 * 9);
        assert_eq!(a, vec![(i % 13, i / 13)]);
    }

    #[test]
    fn second_sample_is_the_farthest_corner() {
        let img = texture(16, 11);
        for seed in 0..8 {
            let p = positions(&img, 2, seed, 0.0);
            let (fx, fy) = p[0];
            let mut best = (0, 0);
            let mut best_d = 0;
            for y in 0..11 {
                for x in 0..16 {
                    let d = sq(x, fx) + sq(y, fy);
                    if d > best_d {
                        best_d = d;
                        best = (x, y);
                    }
                }
            }
            assert_eq!(p[1], best);
            assert!([0, 15].contains(&best.0) && [0, 10].contains(&best.1));
        }
    }

    #[test]
    fn uniform_phase_matches_exhaustive_reference() {
        let img = texture(19, 14);
        let got = positions(&img, 40, 7, 0.0);
        assert_eq!(got, brute_force(19, 14, got[0], 40));
    }

    #[test]
    fn adaptive_tail_keeps_the_uniform_prefix() {
        let img = texture(30, 20);
        let n = 60;
        let plain = positions(&img, n, 11, 0.0);
        let adaptive = positions(&img, n, 11, 0.2);
        let prefix = (0.8f64 * n as f64).ceil() as usize;
        assert_eq!(plain[..prefix], adaptive[..prefix]);
        assert_ne!(plain, adaptive);
    }

    #[test]
    fn fully_sampled_image_covers_every_pixel() {
        let img = texture(6, 5);
        let mut p = positions(&img, 30, 1, 0.3);
        p.sort();
        p.dedup();
        assert_eq!(p.len(), 30);
    }

    #[test]
    fn rejects_bad_counts() {
        let img = texture(4, 4);
        assert!(encode_fps(&img, 0, 0, 0.0).is_err());
        assert!(encode_fps(&img, 17, 0, 0.0).is_err());
        assert!(encode_fps(&img, 3, 0, 1.5).is_err());
        assert!(encode_fps_with(&img, 3, 0, 0.5, 0.0).is_err());
    }

    #[test]
    fn replay_recovers_positions_from_values() {
        let img = texture(25, 18);
        let s = encode_fps(&img, 45, 99, 0.25).unwrap();
        let replayed = replay_positions(25, 18, 45, 99, 0.25, DEFAULT_DETAIL_SCALE, &s.gray_values()).unwrap();
        let original: Vec<(u32, u32)> = s.samples().map(|p| (p.x as u32, p.y as u32)).collect();
        assert_eq!(replayed, original);
        assert_eq!(img.channels(), PixelSource::channels(&img));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn deterministic_and_min_spacing_non_increasing(
            w in 3usize..24, h in 3usize..24, seed in any::<u64>(), frac in 0.05f64..0.6
        ) {
            let img = texture(w, h);
            let count = ((w * h) as f64 * frac).ceil() as usize;
            let a = positions(&img, count, seed, 0.0);
            prop_assert_eq!(&a, &positions(&img, count, seed, 0.0));

            let mut min_pair = u64::MAX;
            let mut last = u64::MAX;
            for k in 1..a.len() {
                for j in 0..k {
                    min_pair = min_pair.min(sq(a[k].0, a[j].0) + sq(a[k].1, a[j].1));
                }
                prop_assert!(min_pair <= last);
                last = min_pair;
            }
        }
    }
}
