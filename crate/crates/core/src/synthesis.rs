//! Right-view synthesis: forward warp of the left image, hole filling from
//! the payload, and residual correction with the exact samples.

use crate::costvolume::DisparitySign;
use crate::encoder::{Scheme, SampleSet};
use crate::error::{Error, Result};
use crate::imagecore::{gaussian_smooth, resize_to, to_grayscale, Image, ResizeMode, ANTIALIAS_PER_FACTOR};
use crate::jbf::{jbf_sparse_layer, FilterParams};
use crate::matcher::{interpolate_samples, DisparityMap};

/// Intensity written into holes.
pub const HOLE_VALUE: f32 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    pub image: Image,
    /// True where no source pixel landed.
    pub occlusion: Vec<bool>,
}

impl WarpResult {
    pub fn hole_count(&self) -> usize {
        self.occlusion.iter().filter(|&&o| o).count()
    }
}

/// Forward-maps every left pixel to its match under `sign`. When several
/// land on one target the largest disparity (nearest surface) wins; ties
/// keep the first in raster order.
pub fn warp(left: &Image, d: &DisparityMap, sign: DisparitySign) -> Result<WarpResult> {
    let (w, h, c) = (left.width(), left.height(), left.channels());
    if d.width() != w || d.height() != h {
        return Err(Error::dims(format!(
            "disparity map {}x{} vs image {w}x{h}",
            d.width(),
            d.height()
        )));
    }
    let mut data = vec![HOLE_VALUE; w * h * c];
    let mut depth: Vec<Option<u32>> = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let disp = d.get(x, y);
            let Some(t) = sign.target(x, disp as usize, w) else {
                continue;
            };
            let i = y * w + t;
            if depth[i].map_or(true, |z| disp > z) {
                depth[i] = Some(disp);
                data[i * c..(i + 1) * c].copy_from_slice(left.pixel(x, y));
            }
        }
    }
    Ok(WarpResult {
        image: Image::new(w, h, c, data)?,
        occlusion: depth.iter().map(Option::is_none).collect(),
    })
}

fn with_channels(img: Image, channels: usize) -> Result<Image> {
    match (img.channels(), channels) {
        (a, b) if a == b => Ok(img),
        (3, 1) => Ok(to_grayscale(&img)),
        (a, b) => Err(Error::dims(format!("cannot turn a {a}-channel payload into {b} channels"))),
    }
}

/// Dense estimate of the right image from the payload alone: the upsampled
/// image for a downsample payload, otherwise the interpolated samples
/// low-passed by `antialias * spacing`.
pub fn payload_image(payload: &SampleSet, antialias: f32) -> Result<Image> {
    match (payload.scheme(), payload.low_res()) {
        (Scheme::Downsample { factor }, Some(low)) => resize_to(
            low,
            *factor as f64,
            payload.width(),
            payload.height(),
            ResizeMode::UpsampleBilinear,
            antialias,
        ),
        _ => gaussian_smooth(&interpolate_samples(payload)?, antialias * payload.spacing() as f32),
    }
}

/// Fills holes from the payload; other pixels are left untouched.
pub fn inpaint(w: &WarpResult, payload: &SampleSet) -> Result<Image> {
    if payload.width() != w.image.width() || payload.height() != w.image.height() {
        return Err(Error::dims("payload and warped image differ in size"));
    }
    if w.occlusion.iter().all(|&o| !o) {
        return Ok(w.image.clone());
    }
    let fill = with_channels(payload_image(payload, ANTIALIAS_PER_FACTOR)?, w.image.channels())?;
    let c = w.image.channels();
    let mut data = w.image.data().to_vec();
    for (i, _) in w.occlusion.iter().enumerate().filter(|(_, &o)| o) {
        data[i * c..(i + 1) * c].copy_from_slice(&fill.data()[i * c..(i + 1) * c]);
    }
    Image::new(w.image.width(), w.image.height(), c, data)
}

/// Corrects the warped image with the residual at sample sites, spread by
/// the sparse joint bilateral filter guided by the warped image. Holes and
/// pixels out of the filter's reach are left unchanged.
pub fn enhance(w: &WarpResult, payload: &SampleSet, p: &FilterParams) -> Result<Image> {
    if !payload.scheme().is_point() {
        return Err(Error::WrongScheme {
            expected: "grid or fps",
            actual: payload.scheme().name(),
        });
    }
    let (wd, ht, c) = (w.image.width(), w.image.height(), w.image.channels());
    if payload.width() != wd || payload.height() != ht {
        return Err(Error::dims("payload and warped image differ in size"));
    }
    if c == 3 && payload.channels() != 3 {
        return Err(Error::dims("color synthesis needs a color payload"));
    }
    let n = wd * ht;
    let mut residual = vec![vec![0f32; n]; c];
    let mut occupied = vec![false; n];
    for s in payload.samples() {
        let i = s.y * wd + s.x;
        if w.occlusion[i] {
            continue;
        }
        occupied[i] = true;
        if c == 1 {
            residual[0][i] = to_gray(s.value) - w.image.data()[i];
        } else {
            for ch in 0..3 {
                residual[ch][i] = s.value[ch] as f32 - w.image.data()[i * 3 + ch];
            }
        }
    }
    let mut data = w.image.data().to_vec();
    for (ch, layer) in residual.iter().enumerate() {
        let spread = jbf_sparse_layer(layer, &occupied, &w.image, p)?;
        for i in 0..n {
            if !w.occlusion[i] && spread.resolved[i] {
                data[i * c + ch] = (data[i * c + ch] + spread.values[i]).clamp(0.0, 255.0);
            }
        }
    }
    Image::new(wd, ht, c, data)
}

fn to_gray(v: &[u8]) -> f32 {
    crate::encoder::gray_of(v)
}

/// `10 log10(255^2 / MSE)` over pixels not flagged in `exclude`, with the
/// squared error averaged over channels. Identical inputs give infinity.
pub fn psnr(a: &Image, b: &Image, exclude: Option<&[bool]>) -> Result<f64> {
    if !a.same_shape(b) || a.channels() != b.channels() {
        return Err(Error::dims("psnr inputs differ in shape"));
    }
    let n = a.width() * a.height();
    if exclude.is_some_and(|m| m.len() != n) {
        return Err(Error::dims("psnr mask has the wrong size"));
    }
    let c = a.channels();
    let (mut sum, mut count) = (0f64, 0usize);
    for i in 0..n {
        if exclude.is_some_and(|m| m[i]) {
            continue;
        }
        for ch in 0..c {
            let e = (a.data()[i * c + ch] - b.data()[i * c + ch]) as f64;
            sum += e * e;
        }
        count += c;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    })
}

/// Everything the synthesis stage produces for one decode.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub warped: WarpResult,
    /// Warp with holes filled (no enhancement).
    pub inpainted: Image,
    /// Enhanced where the payload has samples, then holes filled. Equal to
    /// `inpainted` for downsample payloads.
    pub output: Image,
}

pub fn synthesize(
    left: &Image,
    d: &DisparityMap,
    payload: &SampleSet,
    sign: DisparitySign,
    p: &FilterParams,
) -> Result<Synthesis> {
    let warped = warp(left, d, sign)?;
    let inpainted = inpaint(&warped, payload)?;
    let output = if payload.scheme().is_point() {
        let enhanced = WarpResult {
            image: enhance(&warped, payload, p)?,
            occlusion: warped.occlusion.clone(),
        };
        inpaint(&enhanced, payload)?
    } else {
        inpainted.clone()
    };
    Ok(Synthesis {
        warped,
        inpainted,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_downsample, encode_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, 1, (0..w * h).map(|_| rng.gen_range(0..=255) as f32).collect()).unwrap()
    }

    fn constant_map(w: usize, h: usize, d: u32) -> DisparityMap {
        DisparityMap::new(w, h, 64, vec![d; w * h], vec![true; w * h]).unwrap()
    }

    #[test]
    fn zero_and_constant_disparity() {
        let img = random(12, 5, 1);
        let out = warp(&img, &constant_map(12, 5, 0), DisparitySign::Positive).unwrap();
        assert_eq!(out.image, img);
        assert_eq!(out.hole_count(), 0);

        let out = warp(&img, &constant_map(12, 5, 3), DisparitySign::Positive).unwrap();
        for y in 0..5 {
            for x in 0..12 {
                assert_eq!(out.occlusion[y * 12 + x], x < 3);
                if x >= 3 {
                    assert_eq!(out.image.get(x, y, 0), img.get(x - 3, y, 0));
                } else {
                    assert_eq!(out.image.get(x, y, 0), HOLE_VALUE);
                }
            }
        }
        // The opposite geometry opens the band on the right.
        let out = warp(&img, &constant_map(12, 5, 3), DisparitySign::Negative).unwrap();
        assert!((0..12).all(|x| out.occlusion[x] == (x >= 9)));
    }

    #[test]
    fn two_layer_scene_occlusion_and_z_order() {
        // Foreground (d = 8) over columns 20..30, background d = 2.
        let (w, h) = (48, 4);
        let img = Image::from_fn(w, h, |x, _| if (20..30).contains(&x) { 250.0 } else { (x * 3) as f32 }).unwrap();
        let disp: Vec<u32> = (0..w * h).map(|i| if (20..30).contains(&(i % w)) { 8 } else { 2 }).collect();
        let d = DisparityMap::new(w, h, 8, disp, vec![true; w * h]).unwrap();
        let out = warp(&img, &d, DisparitySign::Positive).unwrap();
        for y in 0..h {
            for x in 0..w {
                // Background 19 lands on 21; foreground starts at 28.
                let hole = x < 2 || (22..28).contains(&x);
                assert_eq!(out.occlusion[y * w + x], hole, "x={x}");
            }
            // Foreground covers 28..38 and hides the background mapped there.
            for x in 28..38 {
                assert_eq!(out.image.get(x, y, 0), 250.0);
            }
            assert_eq!(out.image.get(38, y, 0), (36 * 3) as f32);
        }
    }

    #[test]
    fn warp_round_trip_on_visible_region() {
        let img = random(20, 3, 2);
        let fwd = warp(&img, &constant_map(20, 3, 4), DisparitySign::Positive).unwrap();
        let back = warp(&fwd.image, &constant_map(20, 3, 4), DisparitySign::Negative).unwrap();
        for y in 0..3 {
            for x in 0..16 {
                assert_eq!(back.image.get(x, y, 0), img.get(x, y, 0));
            }
        }
    }

    #[test]
    fn inpaint_cases() {
        let right = random(30, 20, 3);
        let grid = encode_grid(&right, 3).unwrap();
        let full = WarpResult {
            image: right.clone(),
            occlusion: vec![false; 600],
        };
        assert_eq!(inpaint(&full, &grid).unwrap(), right);

        // A fully occluded row takes the smoothed interpolation.
        let mut occlusion = vec![false; 600];
        occlusion[10 * 30..11 * 30].fill(true);
        let holed = WarpResult {
            image: right.clone(),
            occlusion,
        };
        let out = inpaint(&holed, &grid).unwrap();
        let field = gaussian_smooth(&interpolate_samples(&grid).unwrap(), 1.5).unwrap();
        for x in 0..30 {
            assert_eq!(out.get(x, 10, 0), field.get(x, 10, 0));
            assert_eq!(out.get(x, 9, 0), right.get(x, 9, 0));
        }

        // Textureless holes are filled exactly.
        let flat = Image::filled(30, 20, 1, 90.0).unwrap();
        let mut occlusion = vec![false; 600];
        occlusion[100..130].fill(true);
        let mut image = flat.data().to_vec();
        image[100..130].fill(0.0);
        let holed = WarpResult {
            image: Image::new(30, 20, 1, image).unwrap(),
            occlusion,
        };
        for payload in [encode_grid(&flat, 4).unwrap(), encode_downsample(&flat, 3).unwrap()] {
            assert_eq!(inpaint(&holed, &payload).unwrap(), flat);
        }
    }

    #[test]
    fn enhance_cases() {
        let right = random(30, 24, 4);
        let grid = encode_grid(&right, 3).unwrap();
        let p = FilterParams::for_spacing(3.0).unwrap();
        let exact = WarpResult {
            image: right.clone(),
            occlusion: vec![false; 720],
        };
        assert_eq!(enhance(&exact, &grid, &p).unwrap(), right);

        // A constant bias of 10 is removed everywhere the filter reaches.
        let mid = Image::filled(30, 24, 1, 120.0).unwrap();
        let shifted = WarpResult {
            image: Image::filled(30, 24, 1, 110.0).unwrap(),
            occlusion: vec![false; 720],
        };
        let out = enhance(&shifted, &encode_grid(&mid, 3).unwrap(), &p).unwrap();
        assert!(out.data().iter().all(|v| (v - 120.0).abs() < 1e-3));

        // Holes are never touched.
        let mut occlusion = vec![false; 720];
        occlusion[50] = true;
        let mut image = shifted.image.data().to_vec();
        image[50] = 0.0;
        let holed = WarpResult {
            image: Image::new(30, 24, 1, image).unwrap(),
            occlusion,
        };
        let out = enhance(&holed, &encode_grid(&mid, 3).unwrap(), &p).unwrap();
        assert_eq!(out.data()[50], 0.0);

        let ds = encode_downsample(&right, 2).unwrap();
        assert!(matches!(enhance(&exact, &ds, &p), Err(Error::WrongScheme { .. })));
    }

    #[test]
    fn enhance_is_exact_at_samples_for_small_sigma() {
        let right = random(30, 24, 5);
        let warped = WarpResult {
            image: random(30, 24, 6),
            occlusion: vec![false; 720],
        };
        let grid = encode_grid(&right, 3).unwrap();
        let out = enhance(&warped, &grid, &FilterParams::new(0.5, 20.0).unwrap()).unwrap();
        for s in grid.samples() {
            assert!((out.get(s.x, s.y, 0) - s.value[0] as f32).abs() <= 1.0);
        }
    }

    #[test]
    fn psnr_values() {
        let a = random(10, 10, 7);
        assert_eq!(psnr(&a, &a, None).unwrap(), f64::INFINITY);
        let b = Image::from_clamped(10, 10, 1, a.data().iter().map(|v| if *v < 255.0 { v + 1.0 } else { v - 1.0 }).collect()).unwrap();
        assert!((psnr(&a, &b, None).unwrap() - 48.1308).abs() < 1e-3);
        let mask = vec![true; 100];
        assert!(matches!(psnr(&a, &b, Some(&mask)), Err(Error::EmptyMask)));
        let mut mask = vec![false; 100];
        mask[0] = true;
        assert!((psnr(&a, &b, Some(&mask)).unwrap() - 48.1308).abs() < 1e-3);
        assert!(psnr(&a, &random(10, 9, 0), None).is_err());
    }

    #[test]
    fn synthesize_combines_the_stages() {
        let left = random(32, 16, 8);
        let right = warp(&left, &constant_map(32, 16, 2), DisparitySign::Positive).unwrap().image;
        let grid = encode_grid(&right, 2).unwrap();
        let p = FilterParams::for_spacing(2.0).unwrap();
        let s = synthesize(&left, &constant_map(32, 16, 2), &grid, DisparitySign::Positive, &p).unwrap();
        assert_eq!(s.warped.hole_count(), 32);
        let exclude = s.warped.occlusion.clone();
        assert_eq!(psnr(&s.output, &right, Some(&exclude)).unwrap(), f64::INFINITY);
        let ds = encode_downsample(&right, 2).unwrap();
        let s = synthesize(&left, &constant_map(32, 16, 2), &ds, DisparitySign::Positive, &p).unwrap();
        assert_eq!(s.output, s.inpainted);
    }
}
