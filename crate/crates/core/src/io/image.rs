//! 8-bit sRGB PNG for viewing, 32-bit float PFM for lossless round trips.

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::scene::{AlphaMask, ImageBuffer};
use crate::{Error, Result};

pub fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

fn encode_png(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(data).map_err(png_err)?;
    }
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<(u32, u32, png::ColorType, Vec<u8>)> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, info.color_type, buf))
}

/// Write linear RGB as 8-bit sRGB, clamping to `[0, 1]`.
pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (linear_to_srgb(v) * 255.0).round() as u8)
        .collect();
    write_atomic(path, &encode_png(img.width, img.height, png::ColorType::Rgb, &bytes)?)
}

/// Read an sRGB PNG back to linear RGB.
pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let (w, h, color, buf) = decode_png(&read_bytes(path)?)?;
    let channels = match color {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(Error::Png(format!("unsupported color type {other:?}"))),
    };
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for px in buf.chunks_exact(channels) {
        let rgb = if channels >= 3 { [px[0], px[1], px[2]] } else { [px[0]; 3] };
        data.extend(rgb.map(|v| srgb_to_linear(v as f64 / 255.0)));
    }
    ImageBuffer::from_data(w, h, data)
}

pub fn write_mask_png(path: &Path, mask: &AlphaMask) -> Result<()> {
    let bytes: Vec<u8> = mask.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    write_atomic(path, &encode_png(mask.width, mask.height, png::ColorType::Grayscale, &bytes)?)
}

pub fn read_mask_png(path: &Path) -> Result<AlphaMask> {
    let (w, h, color, buf) = decode_png(&read_bytes(path)?)?;
    let stride = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::Png(format!("unsupported mask color type {other:?}"))),
    };
    Ok(AlphaMask {
        width: w,
        height: h,
        data: buf.iter().step_by(stride).map(|&v| v as f64 / 255.0).collect(),
    })
}

/// Color PFM, little endian, rows stored bottom to top.
pub fn encode_pfm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row = img.width as usize * 3;
    for y in (0..img.height as usize).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageBuffer> {
    let bad = |m: &str| Error::Schema(format!("PFM: {m}"));
    // Header: three whitespace-terminated tokens, then raw floats.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?);
    }
    pos += 1;
    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("missing PF magic")),
    };
    let w: u32 = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: u32 = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let n = w as usize * h as usize * channels;
    let body = bytes.get(pos..pos + n * 4).ok_or_else(|| bad("truncated pixel data"))?;
    let vals: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| {
            let arr = [b[0], b[1], b[2], b[3]];
            (if little { f32::from_le_bytes(arr) } else { f32::from_be_bytes(arr) }) as f64
        })
        .collect();
    let row = w as usize * channels;
    let mut data = Vec::with_capacity(w as usize * h as usize * 3);
    for y in (0..h as usize).rev() {
        for px in vals[y * row..(y + 1) * row].chunks_exact(channels) {
            if channels == 3 {
                data.extend_from_slice(px);
            } else {
                data.extend([px[0]; 3]);
            }
        }
    }
    ImageBuffer::from_data(w, h, data)
}

pub fn write_pfm(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_atomic(path, &encode_pfm(img))
}

pub fn read_pfm(path: &Path) -> Result<ImageBuffer> {
    decode_pfm(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_image(w: u32, h: u32) -> ImageBuffer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(w as u64 * 31 + h as u64);
        let data = (0..w * h * 3).map(|_| rng.random_range(0.0..1.0)).collect();
        ImageBuffer::from_data(w, h, data).unwrap()
    }

    #[test]
    fn srgb_round_trip() {
        for i in 0..=255 {
            let v = i as f64 / 255.0;
            assert!((linear_to_srgb(srgb_to_linear(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn pfm_round_trip_is_f32_exact() {
        let img = random_image(7, 5);
        let back = decode_pfm(&encode_pfm(&img)).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert_eq!(*a as f32 as f64, *b);
        }
        assert_eq!(encode_pfm(&back), encode_pfm(&img));
    }

    #[test]
    fn pfm_rejects_garbage() {
        assert!(decode_pfm(b"P6\n1 1\n255\n").is_err());
        assert!(decode_pfm(b"PF\n2 2\n-1.0\n\0\0").is_err());
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = random_image(6, 4);
        let p = dir.path().join("a.png");
        write_png(&p, &img).unwrap();
        let back = read_png(&p).unwrap();
        assert_eq!((back.width, back.height), (6, 4));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((linear_to_srgb(*a) - linear_to_srgb(*b)).abs() <= 0.5 / 255.0 + 1e-9);
        }
        let mask = AlphaMask {
            width: 3,
            height: 1,
            data: vec![0.0, 1.0, 1.0],
        };
        let mp = dir.path().join("m.png");
        write_mask_png(&mp, &mask).unwrap();
        assert_eq!(read_mask_png(&mp).unwrap(), mask);
    }
}
