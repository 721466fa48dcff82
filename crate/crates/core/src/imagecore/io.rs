//! Raster files: PNG, PGM (P5), PPM (P6) through the `image` crate, and
//! grayscale PFM for real-valued maps.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use super::Image;
use crate::error::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(format_err(path, format!("unsupported raster extension {ext:?}"))),
    }
}

/// Reads an 8-bit grayscale or RGB raster. Alpha is dropped; 16-bit input is
/// reduced to 8 bits.
pub fn read_image(path: &Path) -> Result<Image> {
    let format = format_for(path)?;
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| format_err(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let is_gray = matches!(
        decoded,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    if is_gray {
        Image::from_u8(w, h, 1, decoded.to_luma8().as_raw())
    } else {
        Image::from_u8(w, h, 3, decoded.to_rgb8().as_raw())
    }
}

/// Writes an image rounded to 8 bits. `.pgm` requires one channel and `.ppm`
/// three; `.png` takes either.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let format = format_for(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = img.to_u8();
    let dynamic = match img.channels() {
        1 => {
            if ext.eq_ignore_ascii_case("ppm") {
                return Err(format_err(path, "PPM output needs a 3-channel image"));
            }
            DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sized"))
        }
        _ => {
            if ext.eq_ignore_ascii_case("pgm") {
                return Err(format_err(path, "PGM output needs a 1-channel image"));
            }
            DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("sized"))
        }
    };
    dynamic
        .save_with_format(path, format)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Writes a boolean mask as a 0/255 grayscale PNG.
pub fn write_mask(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let data = mask.iter().map(|&m| if m { 255.0 } else { 0.0 }).collect();
    write_image(path, &Image::new(width, height, 1, data)?)
}

/// Grayscale PFM: `Pf` header, little-endian (scale -1.0), rows stored bottom
/// to top.
pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f32]) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let mut out = Vec::with_capacity(32 + values.len() * 4);
    write!(out, "Pf\n{width} {height}\n-1.0\n").expect("in-memory write");
    for y in (0..height).rev() {
        for v in &values[y * width..(y + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a grayscale PFM written in either byte order; returns rows top to
/// bottom.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "Pf" {
        return Err(format_err(path, format!("expected grayscale PFM, got {:?}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_err(path, "bad PFM dimensions"));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let scale: f32 = fields[3].parse().map_err(|_| format_err(path, "bad PFM scale"))?;
    let little = scale < 0.0;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() < w * h * 4 {
        return Err(format_err(path, "truncated PFM raster"));
    }
    let mut values = vec![0f32; w * h];
    for (i, chunk) in body.chunks_exact(4).take(w * h).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, col) = (i / w, i % w);
        values[(h - 1 - row) * w + col] = v;
    }
    Ok((w, h, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let values: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 1.0).collect();
        write_pfm(&path, 4, 3, &values).unwrap();
        let (w, h, back) = read_pfm(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, values);
        let raw = fs::read(&path).unwrap();
        assert!(raw.starts_with(b"Pf\n4 3\n-1.0\n"));
    }

    #[test]
    fn png_and_pnm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Image::from_u8(3, 2, 1, &[0, 10, 20, 30, 40, 255]).unwrap();
        let rgb = Image::from_u8(2, 1, 3, &[1, 2, 3, 250, 251, 252]).unwrap();
        for name in ["g.png", "g.pgm"] {
            let p = dir.path().join(name);
            write_image(&p, &gray).unwrap();
            assert_eq!(read_image(&p).unwrap(), gray);
        }
        for name in ["c.png", "c.ppm"] {
            let p = dir.path().join(name);
            write_image(&p, &rgb).unwrap();
            assert_eq!(read_image(&p).unwrap(), rgb);
        }
        assert!(write_image(&dir.path().join("x.ppm"), &gray).is_err());
        assert!(write_image(&dir.path().join("x.bmp"), &gray).is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_image(Path::new("/nonexistent/left.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/left.png"));
    }
}
