//! Camera-side encoding of the right image into a reduced payload.
//!
//! Three schemes are supported: a uniform grid of raw pixels, farthest-point
//! sampling (optionally adaptive in its tail), and a decimated image. The
//! point schemes never read more than the pixels they transmit.

mod fps;
mod wire;

pub use fps::{FpsSampler, DEFAULT_DETAIL_SCALE};
pub use wire::{deserialize, deserialize_with_limit, serialize, DEFAULT_MAX_PIXELS, MAGIC};

use crate::error::{Error, Result};
use crate::imagecore::{self, Image, ResizeMode};

/// Read access to a source raster, one pixel at a time.
///
/// The encoders are written against this trait so tests can count exactly
/// which pixels a scheme touches.
pub trait PixelSource {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize;
    /// Writes the 8-bit value of `(x, y)` into `out` (`channels` bytes).
    fn read(&self, x: usize, y: usize, out: &mut [u8]);
}

impl PixelSource for Image {
    fn width(&self) -> usize {
        Image::width(self)
    }

    fn height(&self) -> usize {
        Image::height(self)
    }

    fn channels(&self) -> usize {
        Image::channels(self)
    }

    fn read(&self, x: usize, y: usize, out: &mut [u8]) {
        for (o, v) in out.iter_mut().zip(self.pixel(x, y)) {
            *o = v.round().clamp(0.0, 255.0) as u8;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Grid {
        spacing: usize,
        origin_x: usize,
        origin_y: usize,
    },
    Fps {
        count: usize,
        seed: u64,
        adaptive_fraction: f32,
        detail_scale: f32,
    },
    Downsample {
        factor: usize,
    },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Grid { .. } => "grid",
            Scheme::Fps { .. } => "fps",
            Scheme::Downsample { .. } => "downsample",
        }
    }

    pub fn is_point(&self) -> bool {
        !matches!(self, Scheme::Downsample { .. })
    }
}

/// One transmitted pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample<'a> {
    pub x: usize,
    pub y: usize,
    pub value: &'a [u8],
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Points {
        positions: Vec<(u32, u32)>,
        values: Vec<u8>,
    },
    Image(Image),
}

/// The encoded right image: scheme descriptor plus transmitted values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    width: usize,
    height: usize,
    channels: usize,
    scheme: Scheme,
    payload: Payload,
}

impl SampleSet {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    /// Number of transmitted point samples (0 for the downsample scheme).
    pub fn len(&self) -> usize {
        match &self.payload {
            Payload::Points { positions, .. } => positions.len(),
            Payload::Image(_) => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.payload {
            Payload::Points { positions, .. } => positions.is_empty(),
            Payload::Image(_) => false,
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample<'_>> + '_ {
        let (positions, values): (&[(u32, u32)], &[u8]) = match &self.payload {
            Payload::Points { positions, values } => (positions, values),
            Payload::Image(_) => (&[], &[]),
        };
        let c = self.channels;
        positions.iter().enumerate().map(move |(i, &(x, y))| Sample {
            x: x as usize,
            y: y as usize,
            value: &values[i * c..(i + 1) * c],
        })
    }

    pub(crate) fn raw_values(&self) -> &[u8] {
        match &self.payload {
            Payload::Points { values, .. } => values,
            Payload::Image(_) => &[],
        }
    }

    /// The decimated image carried by the downsample scheme.
    pub fn low_res(&self) -> Option<&Image> {
        match &self.payload {
            Payload::Image(img) => Some(img),
            Payload::Points { .. } => None,
        }
    }

    /// Declared share of the source: `|samples| / (W H)` for point schemes,
    /// `1 / f^2` for the downsample scheme.
    pub fn fraction(&self) -> f64 {
        match self.scheme {
            Scheme::Downsample { factor } => 1.0 / (factor * factor) as f64,
            _ => self.len() as f64 / (self.width * self.height) as f64,
        }
    }

    /// Effective sample spacing: the grid step, or `sqrt(W H / n)` for other
    /// point sets, or the decimation factor.
    pub fn spacing(&self) -> f64 {
        match self.scheme {
            Scheme::Grid { spacing, .. } => spacing as f64,
            Scheme::Downsample { factor } => factor as f64,
            Scheme::Fps { .. } => ((self.width * self.height) as f64 / self.len().max(1) as f64).sqrt(),
        }
    }

    /// Sample values reduced to one intensity each (luma for RGB).
    pub fn gray_values(&self) -> Vec<f32> {
        self.raw_values()
            .chunks_exact(self.channels)
            .map(|v| gray_of(v))
            .collect()
    }

    /// A copy holding only the samples accepted by `keep`; the scheme
    /// descriptor is kept as-is.
    pub fn filtered(&self, mut keep: impl FnMut(&Sample<'_>) -> bool) -> SampleSet {
        let mut positions = Vec::new();
        let mut values = Vec::new();
        for s in self.samples() {
            if keep(&s) {
                positions.push((s.x as u32, s.y as u32));
                values.extend_from_slice(s.value);
            }
        }
        SampleSet {
            payload: Payload::Points { positions, values },
            ..self.clone()
        }
    }

    /// Builds a point set from explicit samples. Used for tests and for
    /// payloads produced outside this crate.
    pub fn from_points(
        width: usize,
        height: usize,
        channels: usize,
        scheme: Scheme,
        points: Vec<(usize, usize, Vec<u8>)>,
    ) -> Result<Self> {
        if !scheme.is_point() {
            return Err(Error::param("from_points needs a point scheme"));
        }
        let mut seen = vec![false; width * height];
        let mut positions = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len() * channels);
        for (x, y, v) in points {
            if x >= width || y >= height {
                return Err(Error::param(format!("sample ({x}, {y}) out of bounds")));
            }
            if v.len() != channels {
                return Err(Error::param("sample value has the wrong channel count"));
            }
            if std::mem::replace(&mut seen[y * width + x], true) {
                return Err(Error::param(format!("duplicate sample at ({x}, {y})")));
            }
            positions.push((x as u32, y as u32));
            values.extend_from_slice(&v);
        }
        Ok(SampleSet {
            width,
            height,
            channels,
            scheme,
            payload: Payload::Points { positions, values },
        })
    }
}

pub(crate) fn gray_of(v: &[u8]) -> f32 {
    match v {
        [g] => *g as f32,
        [r, g, b] => imagecore::LUMA[0] * *r as f32 + imagecore::LUMA[1] * *g as f32 + imagecore::LUMA[2] * *b as f32,
        _ => unreachable!("1 or 3 channels"),
    }
}

/// Grid positions `(ox + i s, oy + j s)` inside the image, row-major.
pub fn grid_positions(width: usize, height: usize, spacing: usize, origin_x: usize, origin_y: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for y in (origin_y..height).step_by(spacing) {
        for x in (origin_x..width).step_by(spacing) {
            out.push((x as u32, y as u32));
        }
    }
    out
}

fn check_grid(width: usize, height: usize, spacing: usize, origin_x: usize, origin_y: usize) -> Result<()> {
    if spacing == 0 {
        return Err(Error::param("grid spacing must be >= 1"));
    }
    if spacing > width.min(height) {
        return Err(Error::param(format!(
            "grid spacing {spacing} exceeds the smaller image side {}",
            width.min(height)
        )));
    }
    if origin_x >= spacing || origin_y >= spacing {
        return Err(Error::param("grid origin must be smaller than the spacing"));
    }
    Ok(())
}

/// Uniform grid with the default centered origin `(s/2, s/2)`.
pub fn encode_grid<S: PixelSource + ?Sized>(src: &S, spacing: usize) -> Result<SampleSet> {
    encode_grid_at(src, spacing, spacing / 2, spacing / 2)
}

pub fn encode_grid_at<S: PixelSource + ?Sized>(
    src: &S,
    spacing: usize,
    origin_x: usize,
    origin_y: usize,
) -> Result<SampleSet> {
    let (w, h, c) = (src.width(), src.height(), src.channels());
    check_grid(w, h, spacing, origin_x, origin_y)?;
    let positions = grid_positions(w, h, spacing, origin_x, origin_y);
    let mut values = vec![0u8; positions.len() * c];
    for (i, &(x, y)) in positions.iter().enumerate() {
        src.read(x as usize, y as usize, &mut values[i * c..(i + 1) * c]);
    }
    Ok(SampleSet {
        width: w,
        height: h,
        channels: c,
        scheme: Scheme::Grid {
            spacing,
            origin_x,
            origin_y,
        },
        payload: Payload::Points { positions, values },
    })
}

/// Farthest-point sampling; the last `adaptive_fraction` of the samples are
/// biased toward detailed regions.
pub fn encode_fps<S: PixelSource + ?Sized>(
    src: &S,
    count: usize,
    seed: u64,
    adaptive_fraction: f32,
) -> Result<SampleSet> {
    encode_fps_with(src, count, seed, adaptive_fraction, DEFAULT_DETAIL_SCALE)
}

pub fn encode_fps_with<S: PixelSource + ?Sized>(
    src: &S,
    count: usize,
    seed: u64,
    adaptive_fraction: f32,
    detail_scale: f32,
) -> Result<SampleSet> {
    let (w, h, c) = (src.width(), src.height(), src.channels());
    let mut sampler = FpsSampler::new(w, h, count, seed, adaptive_fraction, detail_scale)?;
    let mut positions = Vec::with_capacity(count);
    let mut values = vec![0u8; count * c];
    for i in 0..count {
        let (x, y) = sampler.next_position();
        let value = &mut values[i * c..(i + 1) * c];
        src.read(x, y, value);
        sampler.push(gray_of(value));
        positions.push((x as u32, y as u32));
    }
    Ok(SampleSet {
        width: w,
        height: h,
        channels: c,
        scheme: Scheme::Fps {
            count,
            seed,
            adaptive_fraction,
            detail_scale,
        },
        payload: Payload::Points { positions, values },
    })
}

/// Anti-aliased decimation by an integer factor, quantized to 8 bits.
pub fn encode_downsample(img: &Image, factor: usize) -> Result<SampleSet> {
    if factor == 0 {
        return Err(Error::param("downsample factor must be >= 1"));
    }
    if factor > img.width().min(img.height()) {
        return Err(Error::param(format!(
            "downsample factor {factor} exceeds the smaller image side"
        )));
    }
    let low = imagecore::resize(img, factor as f64, ResizeMode::DownsampleAntialias)?.quantized();
    Ok(SampleSet {
        width: img.width(),
        height: img.height(),
        channels: img.channels(),
        scheme: Scheme::Downsample { factor },
        payload: Payload::Image(low),
    })
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;

    struct Counting<'a> {
        img: &'a Image,
        reads: Cell<usize>,
    }

    impl PixelSource for Counting<'_> {
        fn width(&self) -> usize {
            self.img.width()
        }
        fn height(&self) -> usize {
            self.img.height()
        }
        fn channels(&self) -> usize {
            self.img.channels()
        }
        fn read(&self, x: usize, y: usize, out: &mut [u8]) {
            self.reads.set(self.reads.get() + 1);
            self.img.read(x, y, out)
        }
    }

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x * 37 + y * 91 + x * y) % 251) as f32).unwrap()
    }

    #[test]
    fn grid_spacing_one_is_everything() {
        let img = texture(7, 5);
        let s = encode_grid(&img, 1).unwrap();
        assert_eq!(s.len(), 35);
        assert_eq!(s.fraction(), 1.0);
        for smp in s.samples() {
            assert_eq!(smp.value[0] as f32, img.get(smp.x, smp.y, 0));
        }
    }

    #[test]
    fn grid_fractions_match_spacing() {
        let img = Image::filled(384, 288, 1, 9.0).unwrap();
        let five = encode_grid(&img, 5).unwrap();
        // Independent count: positions 2, 7, ... < 384 and 2, 7, ... < 288.
        let nx = (0..384).filter(|x| x % 5 == 2).count();
        let ny = (0..288).filter(|y| y % 5 == 2).count();
        assert_eq!(five.len(), nx * ny);
        assert_eq!(five.len(), 4466);
        assert!((five.fraction() - 0.04).abs() < (77.0 + 58.0) / (384.0 * 288.0));

        let three = encode_grid(&img, 3).unwrap();
        assert!((three.fraction() - 1.0 / 9.0).abs() < 0.002, "{}", three.fraction());
    }

    #[test]
    fn grid_reads_only_the_samples() {
        let img = texture(40, 30);
        let counting = Counting {
            img: &img,
            reads: Cell::new(0),
        };
        let s = encode_grid(&counting, 4).unwrap();
        assert_eq!(counting.reads.get(), s.len());

        let counting = Counting {
            img: &img,
            reads: Cell::new(0),
        };
        let s = encode_fps(&counting, 50, 3, 0.2).unwrap();
        assert_eq!(counting.reads.get(), s.len());
    }

    #[test]
    fn grid_rejects_oversized_spacing() {
        let img = texture(10, 6);
        assert!(encode_grid(&img, 7).is_err());
        assert!(encode_grid(&img, 0).is_err());
        assert!(encode_grid(&img, 6).is_ok());
        assert!(encode_grid_at(&img, 3, 3, 0).is_err());
    }

    #[test]
    fn grid_samples_lie_on_the_lattice() {
        let img = texture(23, 17);
        let s = encode_grid_at(&img, 4, 1, 3).unwrap();
        let expected: Vec<(usize, usize)> = (0..17)
            .filter(|y| y % 4 == 3)
            .flat_map(|y| (0..23).filter(|x| x % 4 == 1).map(move |x| (x, y)))
            .collect();
        let got: Vec<(usize, usize)> = s.samples().map(|p| (p.x, p.y)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn downsample_payloads() {
        let img = texture(20, 15);
        let full = encode_downsample(&img, 1).unwrap();
        assert_eq!(full.low_res().unwrap(), &img);
        assert_eq!(full.fraction(), 1.0);

        let five = encode_downsample(&img, 5).unwrap();
        assert!((five.fraction() - 0.04).abs() < 1e-12);
        assert_eq!(five.low_res().unwrap().width(), 4);

        let flat = Image::filled(12, 10, 1, 130.0).unwrap();
        let half = encode_downsample(&flat, 2).unwrap();
        assert!(half.low_res().unwrap().data().iter().all(|&v| v == 130.0));

        assert!(encode_downsample(&img, 16).is_err());
        assert!(encode_downsample(&img, 0).is_err());
    }

    #[test]
    fn from_points_validates() {
        let scheme = Scheme::Grid {
            spacing: 1,
            origin_x: 0,
            origin_y: 0,
        };
        assert!(SampleSet::from_points(4, 4, 1, scheme, vec![(4, 0, vec![1])]).is_err());
        assert!(SampleSet::from_points(4, 4, 1, scheme, vec![(1, 1, vec![1]), (1, 1, vec![2])]).is_err());
        let ok = SampleSet::from_points(4, 4, 1, scheme, vec![(1, 1, vec![1])]).unwrap();
        assert_eq!(ok.len(), 1);
    }
}
