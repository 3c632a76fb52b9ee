//! Portable Float Map encoding and decoding.
//!
//! The on-disk layout is the classic text header followed by raw 32-bit
//! floats: magic `PF` (three channels) or `Pf` (one channel), one line with
//! `width height`, one line with the scale whose sign encodes endianness
//! (negative = little endian), then `width * height * channels` floats with
//! rows ordered bottom to top. Writing always emits the canonical
//! little-endian form with scale `-1.0`; reading accepts either endianness.

use crate::error::{Error, Result};
use crate::render::image::{RgbImage, ScalarImage};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: u32,
    pub height: u32,
    /// 1 (grayscale, magic `Pf`) or 3 (color, magic `PF`).
    pub channels: u32,
    /// Row-major, top-to-bottom, channels interleaved.
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let mut data = Vec::with_capacity(img.data.len() * 3);
        for px in &img.data {
            data.extend_from_slice(&[px[0] as f32, px[1] as f32, px[2] as f32]);
        }
        Self {
            width: img.width,
            height: img.height,
            channels: 3,
            data,
        }
    }

    pub fn from_scalar(img: &ScalarImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            channels: 1,
            data: img.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_rgb(&self) -> Result<RgbImage> {
        if self.channels != 3 {
            return Err(Error::Dimension(format!(
                "expected a 3-channel image, got {} channel(s)",
                self.channels
            )));
        }
        let mut img = RgbImage::new(self.width, self.height);
        for (dst, src) in img.data.iter_mut().zip(self.data.chunks_exact(3)) {
            *dst = [src[0] as f64, src[1] as f64, src[2] as f64];
        }
        Ok(img)
    }

    pub fn to_scalar(&self) -> Result<ScalarImage> {
        if self.channels != 1 {
            return Err(Error::Dimension(format!(
                "expected a 1-channel image, got {} channel(s)",
                self.channels
            )));
        }
        let mut img = ScalarImage::new(self.width, self.height);
        for (dst, &src) in img.data.iter_mut().zip(self.data.iter()) {
            *dst = src as f64;
        }
        Ok(img)
    }
}

/// Encode to the canonical little-endian byte form.
pub fn encode_pfm(img: &PfmImage) -> Vec<u8> {
    assert!(
        img.channels == 1 || img.channels == 3,
        "PFM supports 1 or 3 channels"
    );
    assert_eq!(
        img.data.len(),
        (img.width * img.height * img.channels) as usize,
        "data length must match dimensions"
    );
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row_len = (img.width * img.channels) as usize;
    for y in (0..img.height as usize).rev() {
        let row = &img.data[y * row_len..(y + 1) * row_len];
        for &v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decode either-endian bytes produced by any conforming writer.
pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "PF" => 3u32,
        "Pf" => 1u32,
        other => {
            return Err(Error::InvalidInput(format!(
                "not a PFM file (magic {other:?})"
            )))
        }
    };
    let width: u32 = parse_token(bytes, &mut pos, "width")?;
    let height: u32 = parse_token(bytes, &mut pos, "height")?;
    let scale: f64 = parse_token(bytes, &mut pos, "scale")?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("PFM dimensions must be nonzero".into()));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::InvalidInput(format!("invalid PFM scale {scale}")));
    }
    let little_endian = scale < 0.0;
    let count = (width * height * channels) as usize;
    let need = count * 4;
    let payload = bytes
        .get(pos..)
        .filter(|p| p.len() >= need)
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "PFM payload truncated: need {need} bytes, have {}",
                bytes.len().saturating_sub(pos)
            ))
        })?;
    let row_len = (width * channels) as usize;
    let mut data = vec![0.0f32; count];
    for file_row in 0..height as usize {
        let image_row = height as usize - 1 - file_row;
        for i in 0..row_len {
            let o = (file_row * row_len + i) * 4;
            let raw: [u8; 4] = payload[o..o + 4].try_into().unwrap();
            data[image_row * row_len + i] = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_pfm(path: &Path, img: &PfmImage) -> Result<()> {
    std::fs::write(path, encode_pfm(img))?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<PfmImage> {
    let bytes = std::fs::read(path)?;
    decode_pfm(&bytes).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::Integrity {
            file: path.display().to_string(),
            message: msg,
        },
        other => other,
    })
}

/// Read one whitespace-delimited header token, consuming exactly one
/// trailing whitespace byte (the separator before the next token or the
/// binary payload).
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::InvalidInput("truncated PFM header".into()));
    }
    let token = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::InvalidInput("non-ASCII PFM header".into()))?
        .to_string();
    if *pos < bytes.len() {
        *pos += 1; // the single separator byte
    }
    Ok(token)
}

fn parse_token<T: std::str::FromStr>(bytes: &[u8], pos: &mut usize, what: &str) -> Result<T> {
    let token = next_token(bytes, pos)?;
    token
        .parse()
        .map_err(|_| Error::InvalidInput(format!("invalid PFM {what}: {token:?}")))
}
