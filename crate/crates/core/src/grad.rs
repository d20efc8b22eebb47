//! Analytic gradients of the masked loss totals with respect to depth.
//!
//! Each function returns the masked-mean total together with its true
//! derivative per pixel. Masks are indicator fields with stop-gradient
//! semantics: they weight contributions but are never differentiated. Note
//! that the photometric gradient at a pixel can be nonzero even where the
//! mask is zero, because SSIM windows of masked-in neighbors reach it; the
//! optimizer applies its own mask projection on top of these derivatives.
//!
//! Kinks use subgradient zero: the L1 terms at exact equality and the depth
//! regression at `D = D_hat`.

use crate::camera::{CameraRig, DepthMap};
use crate::error::{Error, Result};
use crate::loss::{
    channel_mean_abs_diff, photometric_error, window_stats, LossConfig,
};
use crate::raster::{reduce_masked_mean, Raster};
use crate::warp::{inverse_warp, warp_gradient_depth, PaddingMode};

/// Masked total and its per-pixel depth derivative.
#[derive(Debug, Clone)]
pub struct MaskedLoss {
    pub total: f64,
    /// 1-channel raster of `d(total)/dD` at every pixel.
    pub grad_depth: Raster,
}

#[inline]
pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mask_count(mask: &Raster) -> Result<f64> {
    let t = mask.data().iter().filter(|&&m| m == 1.0).count();
    if t == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(t as f64)
}

/// Photometric loss: masked mean of
/// `(alpha/2)(1 - SSIM(target, warp(source, D))) + (1-alpha) * L1`.
///
/// The backward pass walks every masked-in SSIM window and distributes the
/// quotient-rule partials onto the (replicate-clamped) taps, so border
/// windows see exactly the weights the forward pass used.
pub fn photometric_masked_grad(
    target: &Raster,
    source: &Raster,
    depth: &DepthMap,
    rig: &CameraRig,
    cfg: &LossConfig,
    mask: &Raster,
) -> Result<MaskedLoss> {
    cfg.validate()?;
    let warped = inverse_warp(source, depth, rig, cfg.padding)?.image;
    let pe = photometric_error(target, &warped, cfg)?;
    let total = reduce_masked_mean(&pe, mask)?;
    let t = mask_count(mask)?;

    let (h, w, ch) = target.shape();
    let win = cfg.ssim_window;
    let radius = (win / 2) as isize;
    let n = (win * win) as f64;
    let inv_ch = 1.0 / ch as f64;
    let ssim_weight = -0.5 * cfg.alpha * inv_ch;
    let l1_weight = (1.0 - cfg.alpha) * inv_ch;

    let mut grad_warped = Raster::filled(h, w, ch, 0.0)?;
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c, 0) != 1.0 {
                continue;
            }
            let q_weight = 1.0 / t;
            for k in 0..ch {
                let s = window_stats(target, &warped, r, c, k, win);
                let n1 = 2.0 * s.mu_a * s.mu_b + cfg.ssim_c1;
                let n2 = 2.0 * s.cov + cfg.ssim_c2;
                let d1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + cfg.ssim_c1;
                let d2 = s.var_a + s.var_b + cfg.ssim_c2;
                let ssim = (n1 * n2) / (d1 * d2);
                for dr in -radius..=radius {
                    let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                    for dc in -radius..=radius {
                        let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                        let x_t = target.get(rr, cc, k);
                        let y_t = warped.get(rr, cc, k);
                        let dn1 = 2.0 * s.mu_a / n;
                        let dn2 = 2.0 * (x_t - s.mu_a) / n;
                        let dd1 = 2.0 * s.mu_b / n;
                        let dd2 = 2.0 * (y_t - s.mu_b) / n;
                        let ds = (dn1 * n2 + n1 * dn2) / (d1 * d2)
                            - ssim * (dd1 / d1 + dd2 / d2);
                        let i = grad_warped.idx(rr, cc, k);
                        grad_warped.data_mut()[i] += q_weight * ssim_weight * ds;
                    }
                }
                let diff = warped.get(r, c, k) - target.get(r, c, k);
                let i = grad_warped.idx(r, c, k);
                grad_warped.data_mut()[i] += q_weight * l1_weight * sign0(diff);
            }
        }
    }

    let wg = warp_gradient_depth(source, depth, rig, cfg.padding)?;
    let grad_depth = Raster::from_fn(h, w, 1, |r, c, _| {
        let mut acc = 0.0;
        for k in 0..ch {
            acc += grad_warped.get(r, c, k) * wg.get(r, c, k);
        }
        acc
    })?;
    Ok(MaskedLoss { total, grad_depth })
}

/// Depth regression: masked mean of `ln(|D - D_hat| + 1)`.
pub fn depth_regression_masked_grad(
    depth: &DepthMap,
    pseudo: &DepthMap,
    mask: &Raster,
) -> Result<MaskedLoss> {
    let loss = crate::loss::depth_regression_loss(depth, pseudo)?;
    let total = reduce_masked_mean(&loss, mask)?;
    let t = mask_count(mask)?;
    let (h, w) = (depth.height(), depth.width());
    let grad_depth = Raster::from_fn(h, w, 1, |r, c, _| {
        if mask.get(r, c, 0) != 1.0 {
            return 0.0;
        }
        let diff = depth.get(r, c) - pseudo.get(r, c);
        sign0(diff) / (diff.abs() + 1.0) / t
    })?;
    Ok(MaskedLoss { total, grad_depth })
}

/// Flow-guided photometric term: masked mean of the channel-mean absolute
/// difference between the depth warp and the (fixed) pseudo-depth warp.
pub fn flow_guided_masked_grad(
    source: &Raster,
    depth: &DepthMap,
    pseudo: &DepthMap,
    rig: &CameraRig,
    padding: PaddingMode,
    mask: &Raster,
) -> Result<MaskedLoss> {
    let warped = inverse_warp(source, depth, rig, padding)?.image;
    let reference = inverse_warp(source, pseudo, rig, padding)?.image;
    let loss = channel_mean_abs_diff(&warped, &reference)?;
    let total = reduce_masked_mean(&loss, mask)?;
    let t = mask_count(mask)?;
    let wg = warp_gradient_depth(source, depth, rig, padding)?;
    let (h, w, ch) = warped.shape();
    let inv_ch = 1.0 / ch as f64;
    let grad_depth = Raster::from_fn(h, w, 1, |r, c, _| {
        if mask.get(r, c, 0) != 1.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for k in 0..ch {
            let diff = warped.get(r, c, k) - reference.get(r, c, k);
            acc += sign0(diff) * wg.get(r, c, k);
        }
        acc * inv_ch / t
    })?;
    Ok(MaskedLoss { total, grad_depth })
}
