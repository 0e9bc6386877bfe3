//! Binary portable-pixmap frames: P5 (grayscale) and P6 (RGB), 8-bit,
//! maxval 255. Header comments (`#`) are honored; anything else is a
//! format error.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use std::io::Write;
use std::path::Path;

/// Decoded frame as channel-major planes, values 0..=255.
pub struct RawFrame {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// (c, h, w) row-major.
    pub pixels: Vec<u8>,
}

pub fn parse(bytes: &[u8], what: &str) -> Result<RawFrame> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => {
            return Err(Error::Format(format!(
                "{what}: expected binary P5 or P6 magic"
            )))
        }
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = parse_header_int(bytes, &mut pos, what)?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "{what}: maxval must be 255, got {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("{what}: zero image dimension")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format(format!("{what}: malformed header end"))),
    }
    let payload = width * height * channels;
    let data = bytes
        .get(pos..pos + payload)
        .ok_or_else(|| Error::Format(format!("{what}: truncated pixel payload")))?;
    if pos + payload != bytes.len() {
        return Err(Error::Format(format!("{what}: trailing bytes after payload")));
    }
    // Interleaved (h, w, c) on disk -> channel planes (c, h, w).
    let mut pixels = vec![0u8; payload];
    if channels == 1 {
        pixels.copy_from_slice(data);
    } else {
        let plane = width * height;
        for (i, px) in data.chunks_exact(channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                pixels[c * plane + i] = v;
            }
        }
    }
    Ok(RawFrame {
        channels,
        height,
        width,
        pixels,
    })
}

fn parse_header_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    // Skip whitespace and # comments.
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::Format(format!("{what}: missing header integer")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("{what}: unparsable header integer")))
}

/// Scale 8-bit planes into a [0,1] tensor of shape (C, H, W).
pub fn to_tensor<T: Real>(frame: &RawFrame) -> Tensor<T> {
    let data: Vec<T> = frame
        .pixels
        .iter()
        .map(|&b| T::from_f64(b as f64 / 255.0))
        .collect();
    Tensor::new(vec![frame.channels, frame.height, frame.width], data)
        .expect("parser guarantees consistent dims")
}

pub fn read_file<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path)?;
    let frame = parse(&bytes, &path.display().to_string())?;
    Ok(to_tensor(&frame))
}

/// Write channel-major planes as P5 (1 channel) or P6 (3 channels).
pub fn write_file(path: &Path, channels: usize, height: usize, width: usize, pixels: &[u8]) -> Result<()> {
    if channels != 1 && channels != 3 {
        return Err(Error::Usage(format!(
            "can only write 1- or 3-channel frames, got {channels}"
        )));
    }
    if pixels.len() != channels * height * width {
        return Err(Error::Usage(format!(
            "pixel buffer length {} does not match {channels}x{height}x{width}",
            pixels.len()
        )));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let magic = if channels == 1 { "P5" } else { "P6" };
    write!(f, "{magic}\n{width} {height}\n255\n")?;
    if channels == 1 {
        f.write_all(pixels)?;
    } else {
        let plane = width * height;
        let mut row = Vec::with_capacity(3);
        for i in 0..plane {
            row.clear();
            row.extend_from_slice(&[pixels[i], pixels[plane + i], pixels[2 * plane + i]]);
            f.write_all(&row)?;
        }
    }
    f.flush()?;
    Ok(())
}
