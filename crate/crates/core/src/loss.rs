//! Training losses and masks.
//!
//! The photometric loss blends an SSIM term with an L1 term over the
//! reconstruction; the flow-distillation loss is the sum of a log depth
//! regression against the flow-implied pseudo label and a flow-guided
//! photometric term comparing the two reconstructions. Masks are indicator
//! rasters: the auto mask keeps pixels where warping beats the raw pair, the
//! prior-flow mask keeps pixels whose flow magnitude implies depth inside the
//! estimation range. All comparisons are strict so ties drop out.

use crate::camera::{CameraRig, DepthMap, FlowField};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::raster::{reduce_masked_mean, Raster};
use crate::warp::{depth_from_flow, inverse_warp, PaddingMode};

/// Photometric loss parameters. The SSIM constants follow the usual
/// `(0.01)^2`, `(0.03)^2` choice for unit dynamic range; the window is a box
/// filter, matching the self-supervised depth convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// SSIM mixing weight; the SSIM term gets `alpha/2`, the L1 term `1-alpha`.
    pub alpha: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    /// Odd box-window side in pixels.
    pub ssim_window: usize,
    /// Out-of-frame handling for every warp issued by the losses.
    pub padding: PaddingMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
            ssim_window: 3,
            padding: PaddingMode::Border,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if self.ssim_c1 <= 0.0 || self.ssim_c2 <= 0.0 {
            return Err(Error::Domain("ssim constants must be positive".into()));
        }
        if self.ssim_window.is_multiple_of(2) || self.ssim_window == 0 {
            return Err(Error::Domain(format!(
                "ssim_window {} must be odd",
                self.ssim_window
            )));
        }
        Ok(())
    }
}

/// Prior-flow mask parameter: pixels whose flow magnitude implies depth
/// beyond `delta` are removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub delta: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { delta: 80.0 }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Domain(format!("delta {} must be positive", self.delta)));
        }
        Ok(())
    }
}

/// Output activation `D = 1 / (a*sigma + b)` mapping `sigma` in [0,1] onto
/// `[min_depth, max_depth]`, monotone decreasing in sigma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthActivation {
    min_depth: f64,
    max_depth: f64,
    a_coef: f64,
    b_coef: f64,
}

impl DepthActivation {
    pub fn new(min_depth: f64, max_depth: f64) -> Result<Self> {
        if !(min_depth.is_finite() && max_depth.is_finite() && 0.0 < min_depth && min_depth < max_depth)
        {
            return Err(Error::Domain(format!(
                "need 0 < min_depth < max_depth, got {min_depth}, {max_depth}"
            )));
        }
        Ok(Self {
            min_depth,
            max_depth,
            a_coef: 1.0 / min_depth - 1.0 / max_depth,
            b_coef: 1.0 / max_depth,
        })
    }

    pub fn min_depth(&self) -> f64 {
        self.min_depth
    }

    pub fn max_depth(&self) -> f64 {
        self.max_depth
    }

    pub fn a_coef(&self) -> f64 {
        self.a_coef
    }

    pub fn b_coef(&self) -> f64 {
        self.b_coef
    }

    #[inline]
    pub fn depth(&self, sigma: f64) -> f64 {
        1.0 / (self.a_coef * sigma + self.b_coef)
    }

    /// Derivative of the activation: `dD/dsigma = -a * D^2`.
    #[inline]
    pub fn depth_derivative(&self, sigma: f64) -> f64 {
        let d = self.depth(sigma);
        -self.a_coef * d * d
    }

    /// Sigma producing the given depth, saturating outside the range.
    #[inline]
    pub fn sigma_for_depth(&self, depth: f64) -> f64 {
        ((1.0 / depth - self.b_coef) / self.a_coef).clamp(0.0, 1.0)
    }
}

impl Default for DepthActivation {
    fn default() -> Self {
        Self::new(0.1, 80.0).expect("default range is valid")
    }
}

/// Multi-scale depth predictions, all held at full resolution.
#[derive(Debug, Clone)]
pub struct ScaleSet(Vec<DepthMap>);

impl ScaleSet {
    pub fn new(scales: Vec<DepthMap>) -> Result<Self> {
        let first = scales
            .first()
            .ok_or_else(|| Error::Domain("scale set must be nonempty".into()))?;
        let shape = first.raster().shape();
        for s in &scales {
            if s.raster().shape() != shape {
                return Err(Error::ShapeMismatch {
                    left: shape,
                    right: s.raster().shape(),
                });
            }
        }
        Ok(Self(scales))
    }

    pub fn scales(&self) -> &[DepthMap] {
        &self.0
    }
}

/// Loss, mask, and activation parameters bundled for the experiment surface.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Configs {
    pub loss: LossConfig,
    pub mask: MaskConfig,
    pub activation: DepthActivation,
}

const CONFIG_KEYS: &[&str] = &[
    "alpha",
    "ssim_c1",
    "ssim_c2",
    "ssim_window",
    "padding",
    "delta",
    "min_depth",
    "max_depth",
];

impl Configs {
    /// Read from a flat `key=value` map; absent keys keep their defaults.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        kv.check_keys(CONFIG_KEYS)?;
        let defaults = Self::default();
        let loss = LossConfig {
            alpha: kv.get_parsed("alpha")?.unwrap_or(defaults.loss.alpha),
            ssim_c1: kv.get_parsed("ssim_c1")?.unwrap_or(defaults.loss.ssim_c1),
            ssim_c2: kv.get_parsed("ssim_c2")?.unwrap_or(defaults.loss.ssim_c2),
            ssim_window: kv
                .get_parsed("ssim_window")?
                .unwrap_or(defaults.loss.ssim_window),
            padding: kv.get_parsed("padding")?.unwrap_or(defaults.loss.padding),
        };
        let mask = MaskConfig {
            delta: kv.get_parsed("delta")?.unwrap_or(defaults.mask.delta),
        };
        let min_depth = kv
            .get_parsed("min_depth")?
            .unwrap_or(defaults.activation.min_depth);
        let max_depth = kv
            .get_parsed("max_depth")?
            .unwrap_or(defaults.activation.max_depth);
        loss.validate()?;
        mask.validate()?;
        Ok(Self {
            loss,
            mask,
            activation: DepthActivation::new(min_depth, max_depth)?,
        })
    }

    pub fn to_kv_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("alpha".into(), format!("{}", self.loss.alpha)),
            ("ssim_c1".into(), format!("{}", self.loss.ssim_c1)),
            ("ssim_c2".into(), format!("{}", self.loss.ssim_c2)),
            ("ssim_window".into(), format!("{}", self.loss.ssim_window)),
            ("padding".into(), format!("{}", self.loss.padding)),
            ("delta".into(), format!("{}", self.mask.delta)),
            ("min_depth".into(), format!("{}", self.activation.min_depth)),
            ("max_depth".into(), format!("{}", self.activation.max_depth)),
        ]
    }
}

/// Per-window statistics for one channel: box-filtered means, variances, and
/// covariance with replicate padding at the borders.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowStats {
    pub mu_a: f64,
    pub mu_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov: f64,
}

#[inline]
pub(crate) fn window_stats(
    a: &Raster,
    b: &Raster,
    row: usize,
    col: usize,
    ch: usize,
    window: usize,
) -> WindowStats {
    let radius = (window / 2) as isize;
    let h = a.height() as isize;
    let w = a.width() as isize;
    let n = (window * window) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for dr in -radius..=radius {
        let rr = (row as isize + dr).clamp(0, h - 1) as usize;
        for dc in -radius..=radius {
            let cc = (col as isize + dc).clamp(0, w - 1) as usize;
            let va = a.get(rr, cc, ch);
            let vb = b.get(rr, cc, ch);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    let mu_a = sa / n;
    let mu_b = sb / n;
    WindowStats {
        mu_a,
        mu_b,
        var_a: saa / n - mu_a * mu_a,
        var_b: sbb / n - mu_b * mu_b,
        cov: sab / n - mu_a * mu_b,
    }
}

#[inline]
pub(crate) fn ssim_from_stats(s: &WindowStats, cfg: &LossConfig) -> f64 {
    let n1 = 2.0 * s.mu_a * s.mu_b + cfg.ssim_c1;
    let n2 = 2.0 * s.cov + cfg.ssim_c2;
    let d1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + cfg.ssim_c1;
    let d2 = s.var_a + s.var_b + cfg.ssim_c2;
    ((n1 * n2) / (d1 * d2)).clamp(-1.0, 1.0)
}

/// Per-pixel SSIM index, box-filtered over `cfg.ssim_window`, channel-averaged.
pub fn ssim(a: &Raster, b: &Raster, cfg: &LossConfig) -> Result<Raster> {
    a.same_shape(b)?;
    cfg.validate()?;
    let (h, w, ch) = a.shape();
    Raster::from_fn(h, w, 1, |r, c, _| {
        let mut acc = 0.0;
        for k in 0..ch {
            acc += ssim_from_stats(&window_stats(a, b, r, c, k, cfg.ssim_window), cfg);
        }
        acc / ch as f64
    })
}

/// Per-pixel SSIM index at a single pixel; shares the exact tap convention
/// with `ssim` so local and full evaluations agree bitwise.
pub(crate) fn ssim_at(a: &Raster, b: &Raster, row: usize, col: usize, cfg: &LossConfig) -> f64 {
    let ch = a.channels();
    let mut acc = 0.0;
    for k in 0..ch {
        acc += ssim_from_stats(&window_stats(a, b, row, col, k, cfg.ssim_window), cfg);
    }
    acc / ch as f64
}

/// Photometric error map:
/// `(alpha/2) * (1 - SSIM) + (1 - alpha) * mean_ch |target - candidate|`.
pub fn photometric_error(target: &Raster, candidate: &Raster, cfg: &LossConfig) -> Result<Raster> {
    target.same_shape(candidate)?;
    cfg.validate()?;
    let (h, w, _) = target.shape();
    Raster::from_fn(h, w, 1, |r, c, _| {
        photometric_error_at(target, candidate, r, c, cfg)
    })
}

#[inline]
pub(crate) fn photometric_error_at(
    target: &Raster,
    candidate: &Raster,
    row: usize,
    col: usize,
    cfg: &LossConfig,
) -> f64 {
    let ch = target.channels();
    let mut l1 = 0.0;
    for k in 0..ch {
        l1 += (target.get(row, col, k) - candidate.get(row, col, k)).abs();
    }
    l1 /= ch as f64;
    let s = ssim_at(target, candidate, row, col, cfg);
    0.5 * cfg.alpha * (1.0 - s) + (1.0 - cfg.alpha) * l1
}

/// Photometric loss of a depth hypothesis: error between the target and the
/// depth-warped source.
pub fn photometric_loss(
    target: &Raster,
    source: &Raster,
    depth: &DepthMap,
    rig: &CameraRig,
    cfg: &LossConfig,
) -> Result<Raster> {
    let warped = inverse_warp(source, depth, rig, cfg.padding)?;
    photometric_error(target, &warped.image, cfg)
}

/// Auto mask: 1 where the warped reconstruction strictly beats comparing the
/// raw pair, 0 elsewhere (including ties).
pub fn auto_mask(
    target: &Raster,
    source: &Raster,
    depth: &DepthMap,
    rig: &CameraRig,
    cfg: &LossConfig,
) -> Result<Raster> {
    let pe_warped = photometric_loss(target, source, depth, rig, cfg)?;
    let pe_raw = photometric_error(target, source, cfg)?;
    pe_warped.map2(&pe_raw, |w, r| if w < r { 1.0 } else { 0.0 })
}

/// Depth regression against the pseudo label: `ln(|D - D_hat| + 1)` per pixel.
pub fn depth_regression_loss(depth: &DepthMap, pseudo: &DepthMap) -> Result<Raster> {
    depth.raster().map2(pseudo.raster(), |d, p| (d - p).abs().ln_1p())
}

/// Flow-guided photometric term: channel-mean absolute difference between the
/// reconstruction from the estimated depth and from the pseudo depth.
pub fn flow_guided_photometric_loss(
    source: &Raster,
    depth: &DepthMap,
    pseudo: &DepthMap,
    rig: &CameraRig,
    padding: PaddingMode,
) -> Result<Raster> {
    let a = inverse_warp(source, depth, rig, padding)?.image;
    let b = inverse_warp(source, pseudo, rig, padding)?.image;
    channel_mean_abs_diff(&a, &b)
}

pub(crate) fn channel_mean_abs_diff(a: &Raster, b: &Raster) -> Result<Raster> {
    a.same_shape(b)?;
    let (h, w, ch) = a.shape();
    Raster::from_fn(h, w, 1, |r, c, _| {
        let mut acc = 0.0;
        for k in 0..ch {
            acc += (a.get(r, c, k) - b.get(r, c, k)).abs();
        }
        acc / ch as f64
    })
}

/// Flow distillation loss: depth regression plus flow-guided photometric
/// term, with the pseudo label converted from the prior flow.
///
/// Pixels with degenerate prior flow must be removed upstream by the
/// prior-flow mask; encountering one here is an error.
pub fn flow_distillation_loss(
    source: &Raster,
    depth: &DepthMap,
    prior_flow: &FlowField,
    rig: &CameraRig,
    padding: PaddingMode,
) -> Result<Raster> {
    let pseudo = depth_from_flow(prior_flow, rig)?;
    let dr = depth_regression_loss(depth, &pseudo)?;
    let fp = flow_guided_photometric_loss(source, depth, &pseudo, rig, padding)?;
    dr.map2(&fp, |a, b| a + b)
}

/// Prior-flow mask: 1 where `|flow| > focal_x * baseline / delta`, i.e. where
/// the flow-implied depth is strictly inside the estimation range.
pub fn prior_flow_mask(prior_flow: &FlowField, rig: &CameraRig, cfg: &MaskConfig) -> Raster {
    let threshold = rig.fb() / cfg.delta;
    prior_flow
        .raster()
        .map(|f| if f.abs() > threshold { 1.0 } else { 0.0 })
}

/// Map a sigma raster in [0,1] through the output activation.
pub fn sigma_to_depth(sigma: &Raster, act: &DepthActivation) -> Result<DepthMap> {
    if sigma.channels() != 1 {
        let (h, w, c) = sigma.shape();
        return Err(Error::InvalidDimensions(h, w, c));
    }
    for r in 0..sigma.height() {
        for c in 0..sigma.width() {
            let s = sigma.get(r, c, 0);
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::SigmaOutOfRange {
                    row: r,
                    col: c,
                    value: s,
                });
            }
        }
    }
    DepthMap::from_raster(sigma.map(|s| act.depth(s)))
}

/// Masked final loss: masked mean per scale, then an unweighted mean across
/// scales. The same mask applies at every scale.
pub fn final_loss(per_scale_losses: &[Raster], mask: &Raster) -> Result<f64> {
    if per_scale_losses.is_empty() {
        return Err(Error::Domain("final loss needs at least one scale".into()));
    }
    let mut acc = 0.0;
    for loss in per_scale_losses {
        acc += reduce_masked_mean(loss, mask)?;
    }
    Ok(acc / per_scale_losses.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;
    use crate::warp::flow_from_depth;

    /// Independent scalar SSIM oracle for constant patches: zero variance and
    /// covariance, so only the luminance factor differs from 1.
    fn ssim_const_oracle(a: f64, b: f64, c1: f64, c2: f64) -> f64 {
        ((2.0 * a * b + c1) * (0.0 + c2)) / ((a * a + b * b + c1) * (0.0 + c2))
    }

    fn random_image(h: usize, w: usize, ch: usize, seed: u64) -> Raster {
        let mut rng = Prng::new(seed);
        Raster::from_fn(h, w, ch, |_, _, _| rng.uniform()).unwrap()
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let img = random_image(8, 9, 3, 4);
        let s = ssim(&img, &img, &LossConfig::default()).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ssim_constant_patches_match_scalar_oracle() {
        let cfg = LossConfig::default();
        let a = Raster::filled(6, 6, 3, 0.5).unwrap();
        let b = Raster::filled(6, 6, 3, 0.7).unwrap();
        let expect = ssim_const_oracle(0.5, 0.7, cfg.ssim_c1, cfg.ssim_c2);
        assert!((expect - 0.945_953_249_560_87).abs() < 1e-12);
        let s = ssim(&a, &b, &cfg).unwrap();
        for &v in s.data() {
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
    }

    #[test]
    fn ssim_opposite_constants_near_zero() {
        let cfg = LossConfig::default();
        let a = Raster::filled(4, 4, 1, 0.0).unwrap();
        let b = Raster::filled(4, 4, 1, 1.0).unwrap();
        let expect = ssim_const_oracle(0.0, 1.0, cfg.ssim_c1, cfg.ssim_c2);
        let s = ssim(&a, &b, &cfg).unwrap();
        for &v in s.data() {
            assert!((v - expect).abs() < 1e-15);
            assert!((v - 9.999e-5).abs() < 1e-8);
        }
    }

    #[test]
    fn ssim_is_symmetric() {
        let cfg = LossConfig::default();
        let a = random_image(7, 5, 3, 21);
        let b = random_image(7, 5, 3, 22);
        let ab = ssim(&a, &b, &cfg).unwrap();
        let ba = ssim(&b, &a, &cfg).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn photometric_error_identity_is_zero() {
        let img = random_image(6, 6, 3, 9);
        let pe = photometric_error(&img, &img, &LossConfig::default()).unwrap();
        assert!(pe.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn photometric_error_constant_patches_match_oracle() {
        let cfg = LossConfig::default();
        let a = Raster::filled(5, 5, 3, 0.5).unwrap();
        let b = Raster::filled(5, 5, 3, 0.7).unwrap();
        let s = ssim_const_oracle(0.5, 0.7, cfg.ssim_c1, cfg.ssim_c2);
        let expect = 0.425 * (1.0 - s) + 0.15 * 0.2;
        assert!((expect - 0.052_969_869).abs() < 1e-6);
        let pe = photometric_error(&a, &b, &cfg).unwrap();
        for &v in pe.data() {
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_collapses_to_l1() {
        let cfg = LossConfig {
            alpha: 0.0,
            ..LossConfig::default()
        };
        let a = Raster::filled(4, 4, 3, 0.5).unwrap();
        let b = Raster::filled(4, 4, 3, 0.7).unwrap();
        let pe = photometric_error(&a, &b, &cfg).unwrap();
        for &v in pe.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn photometric_error_bounded_by_one_for_unit_inputs() {
        let cfg = LossConfig::default();
        let a = random_image(8, 8, 3, 31);
        let b = random_image(8, 8, 3, 32);
        let pe = photometric_error(&a, &b, &cfg).unwrap();
        for &v in pe.data() {
            assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn auto_mask_is_zero_when_source_equals_target() {
        let rig = CameraRig::new(100.0, 0.5).unwrap();
        let img = random_image(6, 16, 3, 5);
        let depth = DepthMap::constant(6, 16, 25.0).unwrap();
        let mask = auto_mask(&img, &img, &depth, &rig, &LossConfig::default()).unwrap();
        // pe(target, source) = 0 and nothing beats zero strictly
        assert!(mask.data().iter().all(|&v| v == 0.0));
    }

    /// Landscape-sweep oracle at field scale: the masked mean photometric
    /// loss at ground truth must be strictly below the one at a +10% depth
    /// perturbation on a textured scene.
    #[test]
    fn photometric_loss_grows_away_from_ground_truth() {
        use crate::scene::{render, DepthModel, SceneSpec, TextureModel};
        let spec = SceneSpec {
            height: 24,
            width: 80,
            rig: CameraRig::new(40.0, 0.5).unwrap(),
            depth_model: DepthModel::ConstantPlane { depth: 5.0 },
            texture_model: TextureModel::BandlimitedNoise {
                seed: 3,
                max_freq: 0.2,
            },
            illumination_gain: 1.0,
            illumination_bias: 0.0,
            flow_noise_sigma: 0.0,
        };
        let scene = render(&spec, 4).unwrap();
        let cfg = LossConfig::default();
        let at_gt =
            photometric_loss(&scene.target, &scene.source, &scene.depth_gt, &spec.rig, &cfg)
                .unwrap();
        let perturbed =
            DepthMap::from_raster(scene.depth_gt.raster().map(|d| 1.1 * d)).unwrap();
        let at_perturbed =
            photometric_loss(&scene.target, &scene.source, &perturbed, &spec.rig, &cfg).unwrap();
        let in_bounds =
            inverse_warp(&scene.source, &scene.depth_gt, &spec.rig, cfg.padding)
                .unwrap()
                .in_bounds;
        let gt_mean = crate::raster::reduce_masked_mean(&at_gt, &in_bounds).unwrap();
        let perturbed_mean =
            crate::raster::reduce_masked_mean(&at_perturbed, &in_bounds).unwrap();
        assert!(
            gt_mean < perturbed_mean,
            "gt {gt_mean} vs perturbed {perturbed_mean}"
        );
    }

    /// At ground truth on a textured stereo pair the warped reconstruction
    /// beats the raw comparison wherever the raw pair actually differs, so
    /// the auto mask keeps every interior textured pixel.
    #[test]
    fn auto_mask_keeps_textured_pixels_at_ground_truth() {
        use crate::scene::{render, DepthModel, SceneSpec, TextureModel};
        let spec = SceneSpec {
            height: 24,
            width: 80,
            rig: CameraRig::new(40.0, 0.5).unwrap(),
            depth_model: DepthModel::ConstantPlane { depth: 5.0 },
            texture_model: TextureModel::BandlimitedNoise {
                seed: 8,
                max_freq: 0.2,
            },
            illumination_gain: 1.0,
            illumination_bias: 0.0,
            flow_noise_sigma: 0.0,
        };
        let scene = render(&spec, 6).unwrap();
        let cfg = LossConfig::default();
        let mask =
            auto_mask(&scene.target, &scene.source, &scene.depth_gt, &spec.rig, &cfg).unwrap();
        let raw = photometric_error(&scene.target, &scene.source, &cfg).unwrap();
        let in_bounds =
            inverse_warp(&scene.source, &scene.depth_gt, &spec.rig, cfg.padding)
                .unwrap()
                .in_bounds;
        let bound = spec.interpolation_bound();
        let mut kept = 0;
        for r in 1..23 {
            for c in 1..79 {
                // textured: the raw pair differs well beyond the warp's
                // interpolation error at this pixel
                if in_bounds.get(r, c, 0) == 1.0 && raw.get(r, c, 0) > 10.0 * bound {
                    assert_eq!(mask.get(r, c, 0), 1.0, "pixel ({r},{c})");
                    kept += 1;
                }
            }
        }
        assert!(kept > 1000, "scene too flat for the check: {kept}");
    }

    #[test]
    fn depth_regression_examples() {
        let d = DepthMap::constant(2, 2, 6.0).unwrap();
        let p = DepthMap::constant(2, 2, 5.0).unwrap();
        let l = depth_regression_loss(&d, &p).unwrap();
        for &v in l.data() {
            assert!((v - 2.0f64.ln()).abs() < 1e-15);
        }
        // symmetric in |.|
        let l2 = depth_regression_loss(&p, &d).unwrap();
        assert_eq!(l, l2);
        let z = depth_regression_loss(&d, &d).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flow_guided_loss_zero_for_equal_depths() {
        let rig = CameraRig::new(100.0, 0.5).unwrap();
        let src = random_image(6, 20, 3, 8);
        let d = DepthMap::constant(6, 20, 12.5).unwrap();
        let l =
            flow_guided_photometric_loss(&src, &d, &d, &rig, PaddingMode::Border).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flow_guided_loss_zero_for_constant_source() {
        let rig = CameraRig::new(100.0, 0.5).unwrap();
        let src = Raster::filled(4, 30, 3, 0.6).unwrap();
        let d = DepthMap::constant(4, 30, 10.0).unwrap();
        let p = DepthMap::constant(4, 30, 30.0).unwrap();
        let l = flow_guided_photometric_loss(&src, &d, &p, &rig, PaddingMode::Border).unwrap();
        assert!(l.data().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn flow_guided_ramp_sees_displacement_gap() {
        // linear ramp slope 1/W, disparity gap d px -> loss d/W on interior
        let rig = CameraRig::new(100.0, 0.5).unwrap(); // fb = 50
        let w = 50;
        let src = Raster::from_fn(3, w, 1, |_, c, _| c as f64 / w as f64).unwrap();
        let d1 = DepthMap::constant(3, w, 25.0).unwrap(); // flow -2
        let d2 = DepthMap::constant(3, w, 10.0).unwrap(); // flow -5
        let l = flow_guided_photometric_loss(&src, &d1, &d2, &rig, PaddingMode::Border).unwrap();
        for c in 5..w {
            assert!((l.get(0, c, 0) - 3.0 / w as f64).abs() < 1e-12, "col {c}");
        }
    }

    #[test]
    fn flow_distillation_zero_at_pseudo_label() {
        let rig = CameraRig::new(100.0, 0.5).unwrap();
        let src = random_image(5, 24, 3, 13);
        let depth = DepthMap::constant(5, 24, 8.0).unwrap();
        let flow = flow_from_depth(&depth, &rig);
        let recovered = depth_from_flow(&flow, &rig).unwrap();
        let l =
            flow_distillation_loss(&src, &recovered, &flow, &rig, PaddingMode::Border).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flow_distillation_dominates_both_terms() {
        let rig = CameraRig::new(100.0, 0.5).unwrap();
        let src = random_image(5, 24, 3, 14);
        let depth = DepthMap::constant(5, 24, 8.0).unwrap();
        let gt = DepthMap::constant(5, 24, 11.0).unwrap();
        let flow = flow_from_depth(&gt, &rig);
        let pseudo = depth_from_flow(&flow, &rig).unwrap();
        let fd = flow_distillation_loss(&src, &depth, &flow, &rig, PaddingMode::Border).unwrap();
        let dr = depth_regression_loss(&depth, &pseudo).unwrap();
        let fp =
            flow_guided_photometric_loss(&src, &depth, &pseudo, &rig, PaddingMode::Border).unwrap();
        for i in 0..fd.data().len() {
            let m = dr.data()[i].max(fp.data()[i]);
            assert!(fd.data()[i] >= m - 1e-15);
        }
    }

    #[test]
    fn flow_distillation_degenerate_flow_errors() {
        let rig = CameraRig::new(100.0, 0.5).unwrap();
        let src = random_image(2, 4, 3, 15);
        let depth = DepthMap::constant(2, 4, 8.0).unwrap();
        let flow = FlowField::from_raster(Raster::filled(2, 4, 1, 0.0).unwrap()).unwrap();
        assert!(matches!(
            flow_distillation_loss(&src, &depth, &flow, &rig, PaddingMode::Border),
            Err(Error::DegenerateFlow { .. })
        ));
    }

    #[test]
    fn prior_flow_mask_threshold_arithmetic() {
        let rig = CameraRig::new(100.0, 0.5).unwrap(); // fb/delta = 0.625
        let cfg = MaskConfig { delta: 80.0 };
        let flow = FlowField::from_raster(
            Raster::from_vec(1, 3, 1, vec![-1.0, -0.5, -0.625]).unwrap(),
        )
        .unwrap();
        let m = prior_flow_mask(&flow, &rig, &cfg);
        // strict: exactly-at-threshold maps to 0
        assert_eq!(m.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn prior_flow_mask_matches_pseudo_depth_range() {
        let rig = CameraRig::new(320.0, 0.54).unwrap();
        let cfg = MaskConfig::default();
        let mut rng = Prng::new(77);
        let flow = FlowField::from_raster(
            Raster::from_fn(20, 50, 1, |_, _, _| -rng.uniform_in(0.5, 300.0)).unwrap(),
        )
        .unwrap();
        let m = prior_flow_mask(&flow, &rig, &cfg);
        for r in 0..20 {
            for c in 0..50 {
                let pseudo = rig.fb() / flow.get(r, c).abs();
                assert_eq!(m.get(r, c, 0) == 1.0, pseudo < cfg.delta, "({r},{c})");
            }
        }
    }

    #[test]
    fn sigma_to_depth_endpoints_and_midpoint() {
        let act = DepthActivation::new(0.1, 80.0).unwrap();
        let s = Raster::from_vec(1, 3, 1, vec![0.0, 1.0, 0.5]).unwrap();
        let d = sigma_to_depth(&s, &act).unwrap();
        assert!((d.get(0, 0) - 80.0).abs() < 1e-12);
        assert!((d.get(0, 1) - 0.1).abs() < 1e-15);
        // 1 / (0.5 * 9.9875 + 0.0125) = 1 / 5.00625
        assert!((d.get(0, 2) - 1.0 / 5.00625).abs() < 1e-15);
        assert!((d.get(0, 2) - 0.199_750_3).abs() < 1e-7);
    }

    #[test]
    fn sigma_outside_unit_interval_rejected() {
        let act = DepthActivation::default();
        let s = Raster::from_vec(1, 2, 1, vec![0.5, 1.1]).unwrap();
        assert!(matches!(
            sigma_to_depth(&s, &act),
            Err(Error::SigmaOutOfRange { col: 1, .. })
        ));
    }

    #[test]
    fn final_loss_single_and_multi_scale() {
        let ones = Raster::filled(1, 4, 1, 1.0).unwrap();
        let l = Raster::from_vec(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(final_loss(std::slice::from_ref(&l), &ones).unwrap(), 2.5);

        let mask = Raster::from_vec(1, 4, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(final_loss(std::slice::from_ref(&l), &mask).unwrap(), 3.0);

        let a = Raster::filled(1, 4, 1, 0.2).unwrap();
        let b = Raster::filled(1, 4, 1, 0.4).unwrap();
        let two = final_loss(&[a, b], &ones).unwrap();
        assert!((two - 0.3).abs() < 1e-15);
    }

    #[test]
    fn final_loss_invariant_to_masked_out_values() {
        let mask = Raster::from_vec(1, 4, 1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let l1 = Raster::from_vec(1, 4, 1, vec![0.1, 9.0, 0.3, -2.0]).unwrap();
        let l2 = Raster::from_vec(1, 4, 1, vec![0.1, -123.0, 0.3, 55.0]).unwrap();
        let a = final_loss(&[l1], &mask).unwrap();
        let b = final_loss(&[l2], &mask).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn scale_set_validates_shapes() {
        let a = DepthMap::constant(4, 4, 1.0).unwrap();
        let b = DepthMap::constant(4, 5, 1.0).unwrap();
        assert!(ScaleSet::new(vec![a.clone(), a.clone()]).is_ok());
        assert!(ScaleSet::new(vec![a, b]).is_err());
        assert!(ScaleSet::new(vec![]).is_err());
    }

    #[test]
    fn configs_roundtrip_through_kv() {
        let cfgs = Configs::default();
        let text = crate::kv::format_kv(&cfgs.to_kv_pairs());
        let back = Configs::from_kv(&KvMap::parse(&text).unwrap()).unwrap();
        assert_eq!(cfgs, back);
        assert!(Configs::from_kv(&KvMap::parse("bogus=1").unwrap()).is_err());
    }
}
