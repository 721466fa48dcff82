//! Image container, color conversion, smoothing and resampling.

pub mod io;
pub mod plane;

use crate::error::{Error, Result};

/// Decimation low-pass: `sigma = ANTIALIAS_PER_FACTOR * factor`.
pub const ANTIALIAS_PER_FACTOR: f32 = 0.5;

/// Luma weights applied to (R, G, B).
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// A grayscale or RGB raster with intensities in `[0, 255]`.
///
/// Samples are interleaved and row-major. Values are kept as `f32` so that
/// filtering stays exact; quantization to 8 bits happens only on I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    DownsampleAntialias,
    UpsampleBilinear,
    UpsampleNearest,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be at least 1x1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::param(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::dims(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::param(format!("intensity {v} outside [0, 255]")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image, clamping every value into `[0, 255]`.
    pub fn from_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 255.0) };
        }
        Image::new(width, height, channels, data)
    }

    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(width, height, channels, bytes.iter().map(|&b| b as f32).collect())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel image from a per-pixel function.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Copy of channel `c` as a contiguous plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f32>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0f32; width * height * channels];
        for (c, p) in planes.iter().enumerate() {
            if p.len() != width * height {
                return Err(Error::dims("plane size"));
            }
            for (i, &v) in p.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Image::from_clamped(width, height, channels, data)
    }

    /// Rounded 8-bit samples.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Same image with every sample rounded to the nearest integer.
    pub fn quantized(&self) -> Image {
        Image {
            data: self.data.iter().map(|v| v.round()).collect(),
            ..self.clone()
        }
    }

    fn map_planes(&self, f: impl Fn(&[f32]) -> Vec<f32>) -> Image {
        let planes: Vec<Vec<f32>> = (0..self.channels).map(|c| f(&self.plane(c))).collect();
        Image::from_planes(self.width, self.height, &planes).expect("shape preserved")
    }
}

/// Luma conversion; single-channel input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect();
    Image::from_clamped(img.width, img.height, 1, data).expect("valid shape")
}

/// Per-channel Gaussian blur, truncation radius `ceil(3 sigma)`, replicate border.
pub fn gaussian_smooth(img: &Image, sigma: f32) -> Result<Image> {
    if !(sigma >= 0.0) {
        return Err(Error::param(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    Ok(img.map_planes(|p| plane::blur(p, img.width, img.height, sigma)))
}

fn scaled_len(n: usize, scale: f64) -> usize {
    // Guard against 384 * (1/5) * 5 style round-off before taking the ceiling.
    ((n as f64 * scale) - 1e-9).ceil().max(1.0) as usize
}

/// Output dimensions produced by [`resize`].
pub fn resized_dims(width: usize, height: usize, factor: f64, mode: ResizeMode) -> (usize, usize) {
    let scale = match mode {
        ResizeMode::DownsampleAntialias => 1.0 / factor,
        _ => factor,
    };
    (scaled_len(width, scale), scaled_len(height, scale))
}

/// Resize by `factor`: the decimation factor when downsampling (output
/// `ceil(W / factor)`), the magnification when upsampling (`ceil(W * factor)`).
pub fn resize(img: &Image, factor: f64, mode: ResizeMode) -> Result<Image> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::param(format!("resize factor must be positive, got {factor}")));
    }
    let (w, h) = resized_dims(img.width, img.height, factor, mode);
    resize_to(img, factor, w, h, mode, ANTIALIAS_PER_FACTOR)
}

/// Resize with an explicit output size, keeping the pixel-center alignment
/// implied by `factor`. Used to bring a decimated image back to the exact
/// source size.
pub fn resize_to(
    img: &Image,
    factor: f64,
    width: usize,
    height: usize,
    mode: ResizeMode,
    antialias: f32,
) -> Result<Image> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::param(format!("resize factor must be positive, got {factor}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::param("resize output must be at least 1x1"));
    }
    if factor == 1.0 && width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let planes: Vec<Vec<f32>> = (0..img.channels)
        .map(|c| {
            plane::resample(&img.plane(c), img.width, img.height, factor, width, height, mode, antialias)
        })
        .collect();
    Image::from_planes(width, height, &planes)
}
