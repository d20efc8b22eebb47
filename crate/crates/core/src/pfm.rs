//! Portable Float Map reader and writer.
//!
//! `Pf` is the 1-channel variant, `PF` the 3-channel one. Samples are 32-bit
//! floats; the scale line's sign selects byte order (negative = little
//! endian) and scanlines run bottom to top. Writes always use scale `-1.0`.
//! Values are widened to f64 on read and narrowed on write, so a raster that
//! has already been through one write/read cycle round-trips bitwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

pub fn write_pfm(path: &Path, raster: &Raster) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let magic = match raster.channels() {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::InvalidDimensions(
                raster.height(),
                raster.width(),
                c,
            ))
        }
    };
    write!(w, "{}\n{} {}\n-1.0\n", magic, raster.width(), raster.height())?;
    let (h, width, ch) = raster.shape();
    for row in (0..h).rev() {
        for col in 0..width {
            for c in 0..ch {
                let v = raster.get(row, col, c) as f32;
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Raster> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_pfm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_pfm(bytes: &[u8]) -> Result<Raster> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::Format("missing magic".into()))?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::Format(format!("bad magic {other:?}"))),
    };
    let width: usize = parse_token(bytes, &mut pos, "width")?;
    let height: usize = parse_token(bytes, &mut pos, "height")?;
    let scale: f64 = parse_token(bytes, &mut pos, "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("bad scale {scale}")));
    }
    let little_endian = scale < 0.0;
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(height, width, channels));
    }
    let count = width * height * channels;
    let need = count * 4;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(Error::Format(format!(
            "truncated: need {need} sample bytes, found {}",
            body.len()
        )));
    }
    let mut data = vec![0.0f64; count];
    for i in 0..count {
        let b: [u8; 4] = body[i * 4..i * 4 + 4].try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        if !v.is_finite() {
            return Err(Error::NonFiniteData(format!("sample {i} is {v}")));
        }
        // Bottom-to-top file order back to top-down raster order.
        let row_in_file = i / (width * channels);
        let rest = i % (width * channels);
        let row = height - 1 - row_in_file;
        data[row * width * channels + rest] = v as f64;
    }
    Raster::from_vec(height, width, channels, data)
}

/// One whitespace-delimited header token. A single whitespace byte terminates
/// each token, which keeps the byte offset exact for the binary body.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return None;
    }
    let tok = String::from_utf8_lossy(&bytes[start..*pos]).into_owned();
    if *pos < bytes.len() {
        *pos += 1; // consume the single delimiter before binary data
    }
    Some(tok)
}

fn parse_token<T: std::str::FromStr>(bytes: &[u8], pos: &mut usize, what: &str) -> Result<T> {
    let tok = next_token(bytes, pos).ok_or_else(|| Error::Format(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::Format(format!("bad {what} {tok:?}")))
}
