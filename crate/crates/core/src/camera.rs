//! Rectified stereo camera model and the depth/flow raster specializations.
//!
//! Convention, fixed throughout the crate: the target is the left image and
//! the source is the right image, so the horizontal displacement of a visible
//! point is always negative and the vertical displacement is identically zero.
//! Flow fields therefore store only the signed horizontal component; the
//! depth conversions take its absolute value.

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Rectified stereo rig: horizontal focal length in pixels and baseline in
/// meters. Disparity of a point at depth `d` is `focal_x * baseline / d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    focal_x: f64,
    baseline: f64,
}

impl CameraRig {
    pub fn new(focal_x: f64, baseline: f64) -> Result<Self> {
        if !(focal_x.is_finite() && focal_x > 0.0) {
            return Err(Error::Domain(format!("focal_x must be positive, got {focal_x}")));
        }
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::Domain(format!("baseline must be positive, got {baseline}")));
        }
        Ok(Self { focal_x, baseline })
    }

    pub fn focal_x(&self) -> f64 {
        self.focal_x
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    /// `focal_x * baseline`, the disparity-depth product.
    pub fn fb(&self) -> f64 {
        self.focal_x * self.baseline
    }
}

/// Single-channel raster of metric depths, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap(Raster);

impl DepthMap {
    pub fn from_raster(raster: Raster) -> Result<Self> {
        if raster.channels() != 1 {
            let (h, w, c) = raster.shape();
            return Err(Error::InvalidDimensions(h, w, c));
        }
        for r in 0..raster.height() {
            for c in 0..raster.width() {
                let v = raster.get(r, c, 0);
                if v <= 0.0 {
                    return Err(Error::NonPositiveDepth {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
            }
        }
        Ok(Self(raster))
    }

    /// Uniform depth plane.
    pub fn constant(height: usize, width: usize, depth: f64) -> Result<Self> {
        Self::from_raster(Raster::filled(height, width, 1, depth)?)
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col, 0)
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }
}

/// Single-channel raster of signed horizontal displacements in pixels.
///
/// Finiteness is enforced; the sign convention is not, so fields loaded from
/// external files pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField(Raster);

impl FlowField {
    pub fn from_raster(raster: Raster) -> Result<Self> {
        if raster.channels() != 1 {
            let (h, w, c) = raster.shape();
            return Err(Error::InvalidDimensions(h, w, c));
        }
        Ok(Self(raster))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col, 0)
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }
}
