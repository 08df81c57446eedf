//! 8-bit image files (PNG, JPEG) and little-endian PFM float rasters.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb, RgbImage};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major RGB raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbRaster<T: Real> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Vector3<T>>,
}

/// Reads an RGB image, optionally resizing it to `size` first.
pub fn load_rgb<T: Real>(path: &Path, size: Option<(usize, usize)>) -> Result<RgbRaster<T>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let mut img = image::open(path)?.to_rgb8();
    if let Some((w, h)) = size {
        if (img.width() as usize, img.height() as usize) != (w, h) {
            img = image::imageops::resize(&img, w as u32, h as u32, FilterType::Triangle);
        }
    }
    let pixels = img.pixels().map(|p| Vector3::from_fn(|c, _| T::lit(p.0[c] as f64 / 255.0))).collect();
    Ok(RgbRaster { width: img.width() as usize, height: img.height() as usize, pixels })
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB raster as 8-bit PNG, clamping to `[0, 1]`.
pub fn save_png<T: Real>(path: &Path, width: usize, height: usize, pixels: &[Vector3<T>]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Contract(format!("{} pixels do not fill a {width}x{height} image", pixels.len())));
    }
    let img: RgbImage = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        let p = pixels[y as usize * width + x as usize];
        Rgb([to_u8(p.x.as_f64()), to_u8(p.y.as_f64()), to_u8(p.z.as_f64())])
    });
    img.save(path)?;
    Ok(())
}

/// Float raster with 1 or 3 channels, stored top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatRaster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// Writes a PFM file (`Pf` grey or `PF` color, little endian). PFM stores
/// rows bottom to top; the flip happens here.
pub fn write_pfm(path: &Path, r: &FloatRaster) -> Result<()> {
    if !(r.channels == 1 || r.channels == 3) || r.data.len() != r.width * r.height * r.channels {
        return Err(Error::Contract("PFM rasters need 1 or 3 channels and a full buffer".into()));
    }
    let mut out = Vec::with_capacity(r.data.len() * 4 + 32);
    write!(out, "{}\n{} {}\n-1.0\n", if r.channels == 3 { "PF" } else { "Pf" }, r.width, r.height)?;
    let row = r.width * r.channels;
    for y in (0..r.height).rev() {
        for v in &r.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<FloatRaster> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let bad = |line: usize, msg: &str| Error::Parse { path: path.to_path_buf(), line, msg: msg.to_string() };
    // three whitespace-terminated header tokens lines
    let mut pos = 0;
    let mut header = Vec::new();
    while header.len() < 3 {
        let end = bytes[pos..].iter().position(|b| *b == b'\n').ok_or_else(|| bad(header.len() + 1, "truncated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad(header.len() + 1, "header is not text"))?;
        header.push(line.trim().to_string());
        pos += end + 1;
    }
    let channels = match header[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(bad(1, &format!("unknown PFM magic `{other}`"))),
    };
    let dims: Vec<usize> = header[1].split_whitespace().map(|s| s.parse().map_err(|_| bad(2, "bad dimensions"))).collect::<Result<_>>()?;
    let [width, height] = dims[..] else { return Err(bad(2, "expected `width height`")) };
    let scale: f64 = header[2].parse().map_err(|_| bad(3, "bad scale"))?;
    let n = width * height * channels;
    if bytes.len() - pos != n * 4 {
        return Err(bad(4, &format!("expected {} bytes of samples, found {}", n * 4, bytes.len() - pos)));
    }
    let read = |i: usize| {
        let b: [u8; 4] = bytes[pos + 4 * i..pos + 4 * i + 4].try_into().unwrap();
        if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let row = width * channels;
    let mut data = vec![0.0; n];
    for y in 0..height {
        let src = (height - 1 - y) * row;
        for k in 0..row {
            data[y * row + k] = read(src + k);
        }
    }
    Ok(FloatRaster { width, height, channels, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1, 3] {
            let r = FloatRaster { width: 5, height: 3, channels, data: (0..15 * channels).map(|i| i as f32 * 0.25 - 1.0).collect() };
            let p = dir.path().join(format!("x{channels}.pfm"));
            write_pfm(&p, &r).unwrap();
            assert_eq!(read_pfm(&p).unwrap(), r);
        }
    }

    #[test]
    fn png_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let px: Vec<Vector3<f64>> = (0..12).map(|i| Vector3::new(i as f64 / 11.0, 0.5, 1.2)).collect();
        let p = dir.path().join("a.png");
        save_png(&p, 4, 3, &px).unwrap();
        let back = load_rgb::<f64>(&p, None).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        for (a, b) in back.pixels.iter().zip(&px) {
            assert!((a - b.map(|v| v.min(1.0))).abs().max() <= 0.5 / 255.0 + 1e-12);
        }
        assert_eq!(load_rgb::<f64>(&p, Some((2, 2))).unwrap().pixels.len(), 4);
    }

    #[test]
    fn truncated_pfm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pfm");
        fs::write(&p, b"Pf\n2 2\n-1.0\n\0\0").unwrap();
        assert!(matches!(read_pfm(&p), Err(Error::Parse { .. })));
    }
}
