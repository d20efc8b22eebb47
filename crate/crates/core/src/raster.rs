//! Row-major float rasters.
//!
//! Images, depth maps, flow fields, and masks are all `Raster` specializations
//! with 1 or 3 channels. Data is `f64` end to end; the landscape and gradient
//! analyses need the headroom and these frames are small enough that the extra
//! width is free. Layout is fixed: index of `(row, col, ch)` is
//! `(row * width + col) * channels + ch`, and file I/O depends on it.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    /// Raster with every entry set to `fill`.
    pub fn filled(height: usize, width: usize, channels: usize, fill: f64) -> Result<Self> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidDimensions(height, width, channels));
        }
        if !fill.is_finite() {
            return Err(Error::NonFiniteData(format!("fill value {fill}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![fill; height * width * channels],
        })
    }

    /// Wrap an existing buffer. Length must match and all values be finite.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidDimensions(height, width, channels));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidDimensions(height, width, channels));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData(format!("raster value {bad}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Build from a per-pixel function of `(row, col, ch)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut out = Self::filled(height, width, channels, 0.0)?;
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    let v = f(r, c, ch);
                    out.data[(r * width + c) * channels + ch] = v;
                }
            }
        }
        Ok(out)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = self.idx(row, col, ch);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Raster) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Elementwise unary map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise binary map; shapes must agree.
    pub fn map2(&self, other: &Raster, f: impl Fn(f64, f64) -> f64) -> Result<Raster> {
        self.same_shape(other)?;
        Ok(Raster {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Plain arithmetic mean over all entries.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// True if every entry is exactly 0.0 or 1.0.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Mean of `values` over the pixels reserved by a binary mask.
///
/// Masked-out entries are skipped entirely, not multiplied by zero, so the
/// result is bitwise independent of whatever they hold. Errors if the mask
/// reserves no pixels.
pub fn reduce_masked_mean(values: &Raster, mask: &Raster) -> Result<f64> {
    values.same_shape(mask)?;
    if values.channels() != 1 {
        return Err(Error::InvalidDimensions(
            values.height(),
            values.width(),
            values.channels(),
        ));
    }
    debug_assert!(mask.is_binary(), "mask must hold only 0/1 values");
    let mut sum = 0.0;
    let mut reserved = 0u64;
    for (&v, &m) in values.data().iter().zip(mask.data().iter()) {
        if m == 1.0 {
            sum += v;
            reserved += 1;
        }
    }
    if reserved == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / reserved as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filled_sets_every_entry() {
        let r = Raster::filled(2, 3, 1, 0.0).unwrap();
        assert_eq!(r.data(), &[0.0; 6]);
        let r = Raster::filled(1, 1, 3, 0.5).unwrap();
        assert_eq!(r.data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            Raster::filled(0, 3, 1, 0.0),
            Err(Error::InvalidDimensions(0, 3, 1))
        ));
        assert!(Raster::filled(2, 2, 2, 0.0).is_err());
    }

    #[test]
    fn non_finite_fill_rejected() {
        assert!(Raster::filled(1, 1, 1, f64::NAN).is_err());
        assert!(Raster::from_vec(1, 2, 1, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn map2_subtract_self_is_exact_zero() {
        let a = Raster::from_fn(4, 5, 3, |r, c, ch| (r * 31 + c * 7 + ch) as f64 * 0.013).unwrap();
        let z = a.map2(&a, |x, y| x - y).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn map2_max_with_zero_is_identity_for_nonnegative() {
        let zeros = Raster::filled(3, 3, 1, 0.0).unwrap();
        let b = Raster::from_fn(3, 3, 1, |r, c, _| (r + c) as f64).unwrap();
        let m = zeros.map2(&b, f64::max).unwrap();
        assert_eq!(m, b);
    }

    #[test]
    fn map2_shape_mismatch() {
        let a = Raster::filled(2, 2, 1, 0.0).unwrap();
        let b = Raster::filled(2, 3, 1, 0.0).unwrap();
        assert!(matches!(a.map2(&b, f64::max), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn masked_mean_full_mask_is_plain_mean() {
        let v = Raster::from_vec(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = Raster::filled(1, 4, 1, 1.0).unwrap();
        assert_eq!(reduce_masked_mean(&v, &m).unwrap(), 2.5);
    }

    #[test]
    fn masked_mean_respects_mask() {
        let v = Raster::from_vec(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = Raster::from_vec(1, 4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(reduce_masked_mean(&v, &m).unwrap(), 3.5);
    }

    #[test]
    fn masked_mean_empty_mask_errors() {
        let v = Raster::filled(2, 2, 1, 1.0).unwrap();
        let m = Raster::filled(2, 2, 1, 0.0).unwrap();
        assert!(matches!(reduce_masked_mean(&v, &m), Err(Error::EmptyMask)));
    }

    #[test]
    fn masked_mean_ignores_masked_out_values_bitwise() {
        let v1 = Raster::from_vec(1, 4, 1, vec![1.0, 999.0, 3.0, -7.5]).unwrap();
        let v2 = Raster::from_vec(1, 4, 1, vec![1.0, -4e18, 3.0, 123.0]).unwrap();
        let m = Raster::from_vec(1, 4, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let a = reduce_masked_mean(&v1, &m).unwrap();
        let b = reduce_masked_mean(&v2, &m).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
