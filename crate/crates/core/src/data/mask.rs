use std::path::Path;

use crate::error::{PjxError, Result};
use crate::grid::area_resample;
use crate::model::AttentionMap;

/// A grayscale image as row-major intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub max_value: u32,
    pub pixels: Vec<f64>,
}

/// Parses a portable graymap, plain (`P2`) or binary (`P5`, 8-bit or 16-bit).
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |msg: &str| PjxError::Input(format!("pgm: {msg}"));
    let mut pos = 0;
    let mut header = Vec::new();
    // magic, width, height, maxval; '#' starts a comment up to end of line
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    let binary = match header[0] {
        "P2" => false,
        "P5" => true,
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad number {s}")));
    let (width, height, max_value) = (num(header[1])?, num(header[2])?, num(header[3])?);
    if width == 0 || height == 0 || max_value == 0 || max_value > 65535 {
        return Err(bad("dimensions and maxval must be positive"));
    }
    let count = width * height;
    let pixels: Vec<f64> = if binary {
        let data = &bytes[(pos + 1).min(bytes.len())..];
        let wide = max_value > 255;
        let need = if wide { 2 * count } else { count };
        if data.len() < need {
            return Err(bad("truncated raster"));
        }
        if wide {
            data.chunks_exact(2)
                .take(count)
                .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64)
                .collect()
        } else {
            data[..count].iter().map(|&b| b as f64).collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad("raster is not ASCII"))?;
        let vals = text
            .split_whitespace()
            .map(|t| t.parse::<u32>().map(f64::from).map_err(|_| bad(&format!("bad pixel {t}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != count {
            return Err(bad(&format!("expected {count} pixels, found {}", vals.len())));
        }
        vals
    };
    if pixels.iter().any(|&p| p > max_value as f64) {
        return Err(bad("pixel exceeds maxval"));
    }
    Ok(GrayImage {
        height,
        width,
        max_value: max_value as u32,
        pixels,
    })
}

/// Plain graymap text for a 0/1 mask, each cell repeated `upscale` times on
/// both axes.
pub fn mask_to_pgm(mask: &[bool], height: usize, width: usize, upscale: usize) -> String {
    let u = upscale.max(1);
    let mut out = format!("P2\n{} {}\n255\n", width * u, height * u);
    for r in 0..height * u {
        let row: Vec<&str> = (0..width * u)
            .map(|c| if mask[(r / u) * width + c / u] { "255" } else { "0" })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Converts a segmentation mask into an attention distribution: area-average
/// down to `height x width`, keep cells at or above half the maximum, spread
/// mass uniformly over them. An all-zero mask yields the uniform map.
pub fn mask_to_attention(image: &GrayImage, height: usize, width: usize) -> Result<AttentionMap> {
    let cells = area_resample(&image.pixels, image.height, image.width, height, width);
    let max = cells.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(AttentionMap::uniform(height, width));
    }
    let mass = cells
        .iter()
        .map(|&v| if v >= 0.5 * max { 1.0 } else { 0.0 })
        .collect();
    AttentionMap::from_mass(height, width, mass)
}

pub fn load_attention_gt(path: &Path, height: usize, width: usize) -> Result<AttentionMap> {
    let bytes = std::fs::read(path).map_err(|e| PjxError::io(path, e))?;
    mask_to_attention(&parse_pgm(&bytes)?, height, width)
}
