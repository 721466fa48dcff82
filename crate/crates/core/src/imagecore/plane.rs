//! Single-channel `f32` raster kernels shared by images and cost layers.
//!
//! Everything here works on row-major slices with an explicit width and
//! height. Borders replicate the outermost pixel.

use super::ResizeMode;

/// Normalized, truncated Gaussian taps for `sigma > 0`; radius is `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    debug_assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / sum) as f32).collect()
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur with replicate borders. `sigma == 0` copies.
pub fn blur(data: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;

    let mut horizontal = vec![0f32; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        let out = &mut horizontal[y * width..(y + 1) * width];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0f64;
            for (k, &w) in kernel.iter().enumerate() {
                let sx = clamp_index(x as isize + k as isize - radius, width);
                acc += w as f64 * row[sx] as f64;
            }
            *o = acc as f32;
        }
    }

    let mut out = vec![0f32; data.len()];
    let mut acc = vec![0f64; width];
    for y in 0..height {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (k, &w) in kernel.iter().enumerate() {
            let sy = clamp_index(y as isize + k as isize - radius, height);
            let src = &horizontal[sy * width..(sy + 1) * width];
            for (a, &s) in acc.iter_mut().zip(src) {
                *a += w as f64 * s as f64;
            }
        }
        for (o, a) in out[y * width..(y + 1) * width].iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }
    out
}

/// Bilinear lookup at a real-valued position, clamped to the raster.
#[inline]
pub fn sample_bilinear(data: &[f32], width: usize, height: usize, fx: f64, fy: f64) -> f32 {
    let fx = fx.clamp(0.0, (width - 1) as f64);
    let fy = fy.clamp(0.0, (height - 1) as f64);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let at = |x: usize, y: usize| data[y * width + x] as f64;
    let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
    let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
    (top * (1.0 - ty) + bottom * ty) as f32
}

/// Resample a plane to `out_width x out_height`.
///
/// `factor` is the linear scale between the grids: the decimation factor for
/// [`ResizeMode::DownsampleAntialias`], the magnification for the upsample
/// modes. Pixel centers are aligned, so output pixel `i` reads the input at
/// `(i + 0.5) * step - 0.5` where `step` is `factor` when decimating and
/// `1 / factor` when magnifying.
pub fn resample(
    data: &[f32],
    width: usize,
    height: usize,
    factor: f64,
    out_width: usize,
    out_height: usize,
    mode: ResizeMode,
    antialias: f32,
) -> Vec<f32> {
    let (source, step) = match mode {
        ResizeMode::DownsampleAntialias => {
            let sigma = antialias * factor as f32;
            // factor <= 1 is not a decimation; skip the low-pass.
            let smoothed = if factor > 1.0 {
                blur(data, width, height, sigma)
            } else {
                data.to_vec()
            };
            (smoothed, factor)
        }
        ResizeMode::UpsampleBilinear | ResizeMode::UpsampleNearest => (data.to_vec(), 1.0 / factor),
    };

    let mut out = Vec::with_capacity(out_width * out_height);
    for oy in 0..out_height {
        let fy = (oy as f64 + 0.5) * step - 0.5;
        for ox in 0..out_width {
            let fx = (ox as f64 + 0.5) * step - 0.5;
            let v = match mode {
                ResizeMode::UpsampleNearest => {
                    let sx = clamp_index(fx.round() as isize, width);
                    let sy = clamp_index(fy.round() as isize, height);
                    source[sy * width + sx]
                }
                _ => sample_bilinear(&source, width, height, fx, fy),
            };
            out.push(v);
        }
    }
    out
}
