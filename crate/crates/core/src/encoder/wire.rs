//! `.sob` payload layout (all integers little-endian):
//!
//! ```text
//! "SOB1"  u8 scheme (1 grid, 2 fps, 3 downsample)  u8 channels
//! u32 width  u32 height
//! grid:       u32 spacing  u32 origin_x  u32 origin_y
//! fps:        u32 count    u64 seed      f32 adaptive_fraction  f32 detail_scale
//! downsample: u32 factor   u32 low_width u32 low_height
//! values:     u8 x channels per sample, in scheme order
//! ```
//!
//! Grid coordinates are implicit. FPS coordinates are recovered by replaying
//! the sampler over the value stream, so only the seed travels.

use super::fps::replay_positions;
use super::{check_grid, grid_positions, Payload, SampleSet, Scheme};
use crate::error::{Error, Result};
use crate::imagecore::{resized_dims, Image, ResizeMode};

pub const MAGIC: &[u8; 4] = b"SOB1";

/// Largest `width * height` accepted by [`deserialize`].
pub const DEFAULT_MAX_PIXELS: usize = 1 << 24;

const TAG_GRID: u8 = 1;
const TAG_FPS: u8 = 2;
const TAG_DOWNSAMPLE: u8 = 3;

pub fn serialize(s: &SampleSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + s.raw_values().len());
    out.extend_from_slice(MAGIC);
    let tag = match s.scheme {
        Scheme::Grid { .. } => TAG_GRID,
        Scheme::Fps { .. } => TAG_FPS,
        Scheme::Downsample { .. } => TAG_DOWNSAMPLE,
    };
    out.push(tag);
    out.push(s.channels as u8);
    put_u32(&mut out, s.width);
    put_u32(&mut out, s.height);
    match s.scheme {
        Scheme::Grid {
            spacing,
            origin_x,
            origin_y,
        } => {
            put_u32(&mut out, spacing);
            put_u32(&mut out, origin_x);
            put_u32(&mut out, origin_y);
        }
        Scheme::Fps {
            count,
            seed,
            adaptive_fraction,
            detail_scale,
        } => {
            put_u32(&mut out, count);
            out.extend_from_slice(&seed.to_le_bytes());
            out.extend_from_slice(&adaptive_fraction.to_le_bytes());
            out.extend_from_slice(&detail_scale.to_le_bytes());
        }
        Scheme::Downsample { factor } => {
            let low = s.low_res().expect("downsample payload");
            put_u32(&mut out, factor);
            put_u32(&mut out, low.width());
            put_u32(&mut out, low.height());
        }
    }
    match &s.payload {
        Payload::Points { values, .. } => out.extend_from_slice(values),
        Payload::Image(low) => out.extend_from_slice(&low.to_u8()),
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        let slice = self.bytes.get(self.pos..end).ok_or(Error::Truncated(what))?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<SampleSet> {
    deserialize_with_limit(bytes, DEFAULT_MAX_PIXELS)
}

/// [`deserialize`] with an explicit cap on `width * height`.
pub fn deserialize_with_limit(bytes: &[u8], max_pixels: usize) -> Result<SampleSet> {
    let mut r = Reader { bytes, pos: 0 };
    let header = r.take(4, "header")?;
    if header != MAGIC {
        return Err(Error::BadMagic);
    }
    let tag = r.u8("header")?;
    let channels = r.u8("header")? as usize;
    let width = r.u32("header")?;
    let height = r.u32("header")?;
    if channels != 1 && channels != 3 {
        return Err(Error::Payload(format!("unsupported channel count {channels}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Payload("zero image dimension".into()));
    }
    let pixels = width
        .checked_mul(height)
        .filter(|&p| p <= max_pixels)
        .ok_or_else(|| Error::Payload(format!("{width}x{height} exceeds the pixel limit")))?;

    let set = match tag {
        TAG_GRID => {
            let spacing = r.u32("grid parameters")?;
            let origin_x = r.u32("grid parameters")?;
            let origin_y = r.u32("grid parameters")?;
            check_grid(width, height, spacing, origin_x, origin_y).map_err(as_payload)?;
            let positions = grid_positions(width, height, spacing, origin_x, origin_y);
            let values = r.take(positions.len() * channels, "sample values")?.to_vec();
            SampleSet {
                width,
                height,
                channels,
                scheme: Scheme::Grid {
                    spacing,
                    origin_x,
                    origin_y,
                },
                payload: Payload::Points { positions, values },
            }
        }
        TAG_FPS => {
            let count = r.u32("fps parameters")?;
            let seed = r.u64("fps parameters")?;
            let adaptive_fraction = r.f32("fps parameters")?;
            let detail_scale = r.f32("fps parameters")?;
            if count == 0 || count > pixels {
                return Err(Error::Payload(format!("fps count {count} out of range")));
            }
            let values = r.take(count * channels, "sample values")?.to_vec();
            let gray: Vec<f32> = values.chunks_exact(channels).map(super::gray_of).collect();
            let positions =
                replay_positions(width, height, count, seed, adaptive_fraction, detail_scale, &gray)
                    .map_err(as_payload)?;
            SampleSet {
                width,
                height,
                channels,
                scheme: Scheme::Fps {
                    count,
                    seed,
                    adaptive_fraction,
                    detail_scale,
                },
                payload: Payload::Points { positions, values },
            }
        }
        TAG_DOWNSAMPLE => {
            let factor = r.u32("downsample parameters")?;
            let low_w = r.u32("downsample parameters")?;
            let low_h = r.u32("downsample parameters")?;
            if factor == 0 || factor > width.min(height) {
                return Err(Error::Payload(format!("downsample factor {factor} out of range")));
            }
            let expected = resized_dims(width, height, factor as f64, ResizeMode::DownsampleAntialias);
            if (low_w, low_h) != expected {
                return Err(Error::Payload(format!(
                    "low-res size {low_w}x{low_h} does not match factor {factor}"
                )));
            }
            let values = r.take(low_w * low_h * channels, "sample values")?;
            let low = Image::from_u8(low_w, low_h, channels, values)?;
            SampleSet {
                width,
                height,
                channels,
                scheme: Scheme::Downsample { factor },
                payload: Payload::Image(low),
            }
        }
        other => return Err(Error::Payload(format!("unknown scheme tag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Payload(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(set)
}

fn as_payload(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Payload(m),
        other => other,
    }
}
