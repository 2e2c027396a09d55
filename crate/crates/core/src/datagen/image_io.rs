//! Binary netpbm (`P5` graymap / `P6` pixmap, maxval 255) and raw `.f64`
//! arrays.
//!
//! Samples are quantized as `round(v * 255)` when written and decoded as
//! `byte / 255`. The raw format stores `height: u32`, `width: u32`, then
//! `height * width` little-endian `f64` values in row-major order.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("image io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0} (only 255)")]
    Maxval(u32),
    #[error("payload truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("pixel buffer of {len} does not match {height}x{width}x{channels}")]
    Dimensions {
        height: usize,
        width: usize,
        channels: usize,
        len: usize,
    },
}

/// Float image in `[0, 1]` with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self, ImageIoError> {
        if pixels.len() != height * width * channels || height == 0 || width == 0 {
            return Err(ImageIoError::Dimensions {
                height,
                width,
                channels,
                len: pixels.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn gray(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self, ImageIoError> {
        Self::new(height, width, 1, pixels)
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(b: u8) -> f64 {
    f64::from(b) / 255.0
}

/// Rounds every value onto the 8-bit grid so that a netpbm round trip is
/// lossless.
pub fn quantize_in_place(values: &mut [f64]) {
    for v in values {
        *v = dequantize(quantize(*v));
    }
}

pub fn encode_pnm(img: &Image) -> Result<Vec<u8>, ImageIoError> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(ImageIoError::Header(format!("{c} channels cannot be stored as netpbm"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(ImageIoError::Header(format!("unsupported magic {m:?}"))),
    };
    let width = parse_dim(&next_token(bytes, &mut pos)?, "width")?;
    let height = parse_dim(&next_token(bytes, &mut pos)?, "height")?;
    let maxval: u32 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| ImageIoError::Header("maxval".into()))?;
    if maxval != 255 {
        return Err(ImageIoError::Maxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if bytes.get(pos).is_none_or(|b| !b.is_ascii_whitespace()) {
        return Err(ImageIoError::Header("missing raster separator".into()));
    }
    pos += 1;
    let expected = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(ImageIoError::Truncated {
            expected,
            got: raster.len(),
        });
    }
    let pixels = raster[..expected].iter().map(|&b| dequantize(b)).collect();
    Image::new(height, width, channels, pixels)
}

fn parse_dim(tok: &str, what: &str) -> Result<usize, ImageIoError> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(ImageIoError::Header(format!("bad {what} {tok:?}"))),
    }
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String, ImageIoError> {
    loop {
        match bytes.get(*pos) {
            None => return Err(ImageIoError::Header("unexpected end of header".into())),
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
        }
    }
    let start = *pos;
    while bytes
        .get(*pos)
        .is_some_and(|&b| !b.is_ascii_whitespace() && b != b'#')
    {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn write_pnm(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    std::fs::write(path, encode_pnm(img)?)?;
    Ok(())
}

pub fn read_pnm(path: &Path) -> Result<Image, ImageIoError> {
    decode_pnm(&std::fs::read(path)?)
}

pub fn encode_f64(height: usize, width: usize, values: &[f64]) -> Result<Vec<u8>, ImageIoError> {
    if values.len() != height * width {
        return Err(ImageIoError::Dimensions {
            height,
            width,
            channels: 1,
            len: values.len(),
        });
    }
    let h = u32::try_from(height).map_err(|_| ImageIoError::Header("height".into()))?;
    let w = u32::try_from(width).map_err(|_| ImageIoError::Header("width".into()))?;
    let mut out = Vec::with_capacity(8 + values.len() * 8);
    out.extend(h.to_le_bytes());
    out.extend(w.to_le_bytes());
    for v in values {
        out.extend(v.to_le_bytes());
    }
    Ok(out)
}

/// Returns `(height, width, values)`.
pub fn decode_f64(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), ImageIoError> {
    if bytes.len() < 8 {
        return Err(ImageIoError::Truncated {
            expected: 8,
            got: bytes.len(),
        });
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let expected = h * w * 8;
    let body = &bytes[8..];
    if body.len() != expected {
        return Err(ImageIoError::Truncated {
            expected,
            got: body.len(),
        });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((h, w, values))
}

pub fn write_f64(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<(), ImageIoError> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_f64(height, width, values)?)?;
    f.flush()?;
    Ok(())
}

pub fn read_f64(path: &Path) -> Result<(usize, usize, Vec<f64>), ImageIoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_f64(&bytes)
}
