//! 8-bit PGM (P5) export for quick visual inspection.
//!
//! Write-only by design; PFM is the lossless interchange format. Values are
//! expected in [0,1] and map to [0,255] with round-half-up. Three-channel
//! rasters are collapsed to their channel mean first.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::raster::Raster;

pub fn write_pgm(path: &Path, raster: &Raster) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", raster.width(), raster.height())?;
    let ch = raster.channels();
    for row in 0..raster.height() {
        for col in 0..raster.width() {
            let mut v = 0.0;
            for c in 0..ch {
                v += raster.get(row, col, c);
            }
            v /= ch as f64;
            w.write_all(&[quantize(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// [0,1] to a byte, round half up, clamping out-of-range inputs.
fn quantize(v: f64) -> u8 {
    let scaled = (v * 255.0 + 0.5).floor();
    scaled.clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        // 0.5/255 * 255 = 0.5 exactly: half rounds up
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(127.49 / 255.0), 127);
        assert_eq!(quantize(1.2), 255);
        assert_eq!(quantize(-0.1), 0);
    }

    #[test]
    fn header_and_payload() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        let r = Raster::from_vec(1, 2, 1, vec![0.0, 1.0]).unwrap();
        write_pgm(&p, &r).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes, b"P5\n2 1\n255\n\x00\xff");
    }
}
