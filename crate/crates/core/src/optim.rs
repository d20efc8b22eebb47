//! Per-pixel depth optimization, landscape sweeps, metrics, and the
//! gradient checker.
//!
//! The optimizer trains a per-pixel sigma field through the output activation
//! instead of a network: with every pixel an independent parameter, outcome
//! differences are attributable to the loss alone. Adam is projected: sigma
//! is clamped to [0,1] after each step and masked-out pixels receive exactly
//! zero gradient, so their parameters never move.

use crate::camera::{CameraRig, DepthMap};
use crate::error::{Error, Result};
use crate::grad::{
    depth_regression_masked_grad, flow_guided_masked_grad, photometric_masked_grad, MaskedLoss,
};
use crate::loss::{auto_mask, photometric_error_at, prior_flow_mask, Configs, DepthActivation};
use crate::raster::Raster;
use crate::rng::Prng;
use crate::scene::RenderedScene;
use crate::warp::{sample_horizontal, FLOW_EPSILON};

/// Standard evaluation distance cap in meters.
pub const EVAL_DEPTH_CAP: f64 = 80.0;

/// Loss explodes past this: treat the run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        // The inverse-depth activation squeezes the far range into a thin
        // sigma sliver (10..80 m spans sigma ~ 0.009..0), so the normalized
        // Adam step must resolve ~1e-4 or the field oscillates at the clamp.
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 600,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Domain(format!("lr {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Domain(format!("{name} {b} outside [0,1)")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Domain("eps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pixel sigma parameters plus the activation mapping them to depth.
#[derive(Debug, Clone)]
pub struct DepthField {
    sigma: Raster,
    activation: DepthActivation,
}

impl DepthField {
    pub fn from_sigma(sigma: Raster, activation: DepthActivation) -> Result<Self> {
        if sigma.channels() != 1 {
            let (h, w, c) = sigma.shape();
            return Err(Error::InvalidDimensions(h, w, c));
        }
        for r in 0..sigma.height() {
            for c in 0..sigma.width() {
                let s = sigma.get(r, c, 0);
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::SigmaOutOfRange { row: r, col: c, value: s });
                }
            }
        }
        Ok(Self { sigma, activation })
    }

    /// Uniform field at the given metric depth.
    pub fn constant_depth(
        height: usize,
        width: usize,
        depth: f64,
        activation: DepthActivation,
    ) -> Result<Self> {
        if !(activation.min_depth()..=activation.max_depth()).contains(&depth) {
            return Err(Error::Domain(format!(
                "init depth {depth} outside activation range [{}, {}]",
                activation.min_depth(),
                activation.max_depth()
            )));
        }
        let sigma = Raster::filled(height, width, 1, activation.sigma_for_depth(depth))?;
        Self::from_sigma(sigma, activation)
    }

    /// Field whose depths match the given map, saturating outside the
    /// activation range.
    pub fn from_depths(depths: &DepthMap, activation: DepthActivation) -> Self {
        let sigma = depths.raster().map(|d| activation.sigma_for_depth(d));
        Self { sigma, activation }
    }

    pub fn sigma(&self) -> &Raster {
        &self.sigma
    }

    pub fn activation(&self) -> &DepthActivation {
        &self.activation
    }

    pub fn depth_map(&self) -> DepthMap {
        DepthMap::from_raster(self.sigma.map(|s| self.activation.depth(s)))
            .expect("activation output is positive")
    }
}

/// Loss/mask combination selecting the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Lp,
    LpMp,
    LpMf,
    Lfd,
    LfdMp,
    LfdMf,
    Ldr,
    Lfp,
    /// Same objective as `Lfd`; kept as its own row for the combination study.
    LdrLfp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MaskChoice {
    None,
    Auto,
    PriorFlow,
}

impl LossKind {
    pub const ALL: &'static [LossKind] = &[
        LossKind::Lp,
        LossKind::LpMp,
        LossKind::LpMf,
        LossKind::Lfd,
        LossKind::LfdMp,
        LossKind::LfdMf,
        LossKind::Ldr,
        LossKind::Lfp,
        LossKind::LdrLfp,
    ];

    pub(crate) fn mask_choice(&self) -> MaskChoice {
        match self {
            LossKind::LpMp | LossKind::LfdMp => MaskChoice::Auto,
            LossKind::LpMf | LossKind::LfdMf => MaskChoice::PriorFlow,
            _ => MaskChoice::None,
        }
    }

    fn has_photometric(&self) -> bool {
        matches!(self, LossKind::Lp | LossKind::LpMp | LossKind::LpMf)
    }

    fn has_regression(&self) -> bool {
        matches!(
            self,
            LossKind::Lfd | LossKind::LfdMp | LossKind::LfdMf | LossKind::Ldr | LossKind::LdrLfp
        )
    }

    fn has_flow_guided(&self) -> bool {
        matches!(
            self,
            LossKind::Lfd | LossKind::LfdMp | LossKind::LfdMf | LossKind::Lfp | LossKind::LdrLfp
        )
    }

    pub fn needs_pseudo(&self) -> bool {
        self.has_regression() || self.has_flow_guided()
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossKind::Lp => "Lp",
            LossKind::LpMp => "Lp+Mp",
            LossKind::LpMf => "Lp+Mf",
            LossKind::Lfd => "Lfd",
            LossKind::LfdMp => "Lfd+Mp",
            LossKind::LfdMf => "Lfd+Mf",
            LossKind::Ldr => "Ldr",
            LossKind::Lfp => "Lfp",
            LossKind::LdrLfp => "Ldr+Lfp",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Lp" => Ok(LossKind::Lp),
            "Lp+Mp" => Ok(LossKind::LpMp),
            "Lp+Mf" => Ok(LossKind::LpMf),
            "Lfd" => Ok(LossKind::Lfd),
            "Lfd+Mp" => Ok(LossKind::LfdMp),
            "Lfd+Mf" => Ok(LossKind::LfdMf),
            "Ldr" => Ok(LossKind::Ldr),
            "Lfp" => Ok(LossKind::Lfp),
            "Ldr+Lfp" => Ok(LossKind::LdrLfp),
            other => Err(Error::Config(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Standard depth metrics over evaluation-valid pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl EvalReport {
    /// `(metric, value)` rows in the fixed CSV order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("abs_rel", self.abs_rel),
            ("sq_rel", self.sq_rel),
            ("rmse", self.rmse),
            ("rmse_log", self.rmse_log),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
        ]
    }
}

/// Evaluate a depth prediction against the scene's ground truth.
///
/// Valid pixels are unoccluded, have ground truth at or below the 80 m cap,
/// and project inside the source frame under the ground-truth flow.
pub fn evaluate(depth: &DepthMap, scene: &RenderedScene, rig: &CameraRig) -> Result<EvalReport> {
    let (h, w) = (scene.height(), scene.width());
    if depth.height() != h || depth.width() != w {
        return Err(Error::ShapeMismatch {
            left: depth.raster().shape(),
            right: (h, w, 1),
        });
    }
    let fb = rig.fb();
    let max_x = (w - 1) as f64;
    let mut n = 0u64;
    let (mut abs_rel, mut sq_rel, mut mse, mut mse_log) = (0.0, 0.0, 0.0, 0.0);
    let (mut d1, mut d2, mut d3) = (0u64, 0u64, 0u64);
    for r in 0..h {
        for c in 0..w {
            let gt = scene.depth_gt.get(r, c);
            if scene.occlusion.get(r, c, 0) != 0.0 || gt > EVAL_DEPTH_CAP {
                continue;
            }
            let x = c as f64 - fb / gt;
            if !(0.0..=max_x).contains(&x) {
                continue;
            }
            let d = depth.get(r, c);
            let err = d - gt;
            abs_rel += err.abs() / gt;
            sq_rel += err * err / gt;
            mse += err * err;
            let log_err = d.ln() - gt.ln();
            mse_log += log_err * log_err;
            let ratio = (d / gt).max(gt / d);
            if ratio < 1.25 {
                d1 += 1;
            }
            if ratio < 1.25 * 1.25 {
                d2 += 1;
            }
            if ratio < 1.25 * 1.25 * 1.25 {
                d3 += 1;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyEval);
    }
    let nf = n as f64;
    Ok(EvalReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (mse / nf).sqrt(),
        rmse_log: (mse_log / nf).sqrt(),
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
    })
}

/// Sampled per-pixel loss curves over a depth grid.
#[derive(Debug, Clone)]
pub struct LandscapeCurve {
    pub depths: Vec<f64>,
    pub lp: Vec<f64>,
    pub ldr: Vec<f64>,
    pub lfp: Vec<f64>,
    pub lfd: Vec<f64>,
}

/// Sweep the depth of a single pixel over `[lo, hi]` in `step` increments,
/// holding every other pixel at ground truth, and record each loss at that
/// pixel. The prior flow provides the pseudo label for the distillation
/// terms.
pub fn sweep_landscape(
    scene: &RenderedScene,
    pixel: (usize, usize),
    rig: &CameraRig,
    cfgs: &Configs,
    depth_range: (f64, f64),
    step: f64,
) -> Result<LandscapeCurve> {
    let (row, col) = pixel;
    let (h, w) = (scene.height(), scene.width());
    if row >= h || col >= w {
        return Err(Error::PixelOutOfBounds {
            row,
            col,
            height: h,
            width: w,
        });
    }
    let (lo, hi) = depth_range;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("sweep step {step} must be positive")));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("bad depth range [{lo}, {hi}]")));
    }
    cfgs.loss.validate()?;

    let fb = rig.fb();
    let prior = scene.prior_flow.get(row, col);
    if prior.abs() <= FLOW_EPSILON {
        return Err(Error::DegenerateFlow {
            row,
            col,
            value: prior,
        });
    }
    let pseudo_depth = fb / prior.abs();
    let padding = cfgs.loss.padding;

    // Warp once at ground truth; only the swept pixel's sample moves.
    let mut warped = crate::warp::inverse_warp(&scene.source, &scene.depth_gt, rig, padding)?.image;
    let ch = scene.source.channels();
    let ref_x = col as f64 - prior.abs();
    let reference: Vec<f64> = (0..ch)
        .map(|k| sample_horizontal(&scene.source, row, k, ref_x, padding))
        .collect();

    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let mut curve = LandscapeCurve {
        depths: Vec::with_capacity(n),
        lp: Vec::with_capacity(n),
        ldr: Vec::with_capacity(n),
        lfp: Vec::with_capacity(n),
        lfd: Vec::with_capacity(n),
    };
    for i in 0..n {
        let d = lo + i as f64 * step;
        let x = col as f64 - fb / d;
        let mut lfp = 0.0;
        for (k, reference_value) in reference.iter().enumerate() {
            let sample = sample_horizontal(&scene.source, row, k, x, padding);
            warped.set(row, col, k, sample);
            lfp += (sample - reference_value).abs();
        }
        lfp /= ch as f64;
        let lp = photometric_error_at(&scene.target, &warped, row, col, &cfgs.loss);
        let ldr = (d - pseudo_depth).abs().ln_1p();
        curve.depths.push(d);
        curve.lp.push(lp);
        curve.ldr.push(ldr);
        curve.lfp.push(lfp);
        curve.lfd.push(ldr + lfp);
    }
    Ok(curve)
}

/// Strict interior local minima; an equal-valued plateau flanked by strictly
/// larger samples on both sides counts once.
pub fn count_local_minima(values: &[f64]) -> Result<usize> {
    if values.len() < 3 {
        return Err(Error::CurveTooShort { len: values.len() });
    }
    let mut count = 0;
    let mut i = 1;
    while i < values.len() - 1 {
        if values[i] < values[i - 1] {
            let mut j = i;
            while j + 1 < values.len() && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < values.len() && values[j + 1] > values[i] {
                count += 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(count)
}

/// Pseudo depth from the prior flow with mask awareness: masked-out pixels
/// get a placeholder of 1 (their loss contribution is zeroed by the mask),
/// while a degenerate flow at a masked-in pixel is an error.
fn pseudo_depth_masked(
    scene: &RenderedScene,
    rig: &CameraRig,
    mask: &Raster,
) -> Result<DepthMap> {
    let fb = rig.fb();
    let (h, w) = (scene.height(), scene.width());
    let mut data = vec![1.0f64; h * w];
    for r in 0..h {
        for c in 0..w {
            let f = scene.prior_flow.get(r, c);
            if mask.get(r, c, 0) == 1.0 {
                if f.abs() <= FLOW_EPSILON {
                    return Err(Error::DegenerateFlow {
                        row: r,
                        col: c,
                        value: f,
                    });
                }
                data[r * w + c] = fb / f.abs();
            }
        }
    }
    DepthMap::from_raster(Raster::from_vec(h, w, 1, data)?)
}

/// Masked total and depth gradient for one loss kind at the current depth.
fn masked_loss_and_grad(
    kind: LossKind,
    scene: &RenderedScene,
    depth: &DepthMap,
    pseudo: Option<&DepthMap>,
    rig: &CameraRig,
    cfgs: &Configs,
    mask: &Raster,
) -> Result<MaskedLoss> {
    let mut total = 0.0;
    let mut grad: Option<Raster> = None;
    let mut add = |part: MaskedLoss| {
        total += part.total;
        grad = Some(match grad.take() {
            None => part.grad_depth,
            Some(acc) => acc
                .map2(&part.grad_depth, |a, b| a + b)
                .expect("gradients share the field shape"),
        });
    };
    if kind.has_photometric() {
        add(photometric_masked_grad(
            &scene.target,
            &scene.source,
            depth,
            rig,
            &cfgs.loss,
            mask,
        )?);
    }
    if kind.has_regression() {
        let pseudo = pseudo.expect("regression kinds carry a pseudo label");
        add(depth_regression_masked_grad(depth, pseudo, mask)?);
    }
    if kind.has_flow_guided() {
        let pseudo = pseudo.expect("flow-guided kinds carry a pseudo label");
        add(flow_guided_masked_grad(
            &scene.source,
            depth,
            pseudo,
            rig,
            cfgs.loss.padding,
            mask,
        )?);
    }
    Ok(MaskedLoss {
        total,
        grad_depth: grad.expect("every kind has at least one term"),
    })
}

fn mask_for(
    kind: LossKind,
    scene: &RenderedScene,
    depth: &DepthMap,
    rig: &CameraRig,
    cfgs: &Configs,
) -> Result<Raster> {
    match kind.mask_choice() {
        MaskChoice::None => Raster::filled(scene.height(), scene.width(), 1, 1.0),
        MaskChoice::Auto => auto_mask(&scene.target, &scene.source, depth, rig, &cfgs.loss),
        MaskChoice::PriorFlow => Ok(prior_flow_mask(&scene.prior_flow, rig, &cfgs.mask)),
    }
}

/// Run projected Adam on the sigma field against the selected masked loss.
///
/// Returns the final field and the loss trace: one entry per step evaluated
/// before the update, plus the loss at the final parameters.
pub fn optimize_depth(
    scene: &RenderedScene,
    init: &DepthField,
    kind: LossKind,
    adam: &AdamConfig,
    rig: &CameraRig,
    cfgs: &Configs,
) -> Result<(DepthField, Vec<f64>)> {
    adam.validate()?;
    cfgs.loss.validate()?;
    cfgs.mask.validate()?;
    let (h, w) = (scene.height(), scene.width());
    if init.sigma.height() != h || init.sigma.width() != w {
        return Err(Error::ShapeMismatch {
            left: init.sigma.shape(),
            right: (h, w, 1),
        });
    }

    let act = init.activation;
    let mut sigma = init.sigma.clone();
    let count = h * w;
    let mut m = vec![0.0f64; count];
    let mut v = vec![0.0f64; count];
    let mut trace = Vec::with_capacity(adam.steps + 1);

    // The prior-flow mask is static; the auto mask tracks the current depth.
    let static_mask = match kind.mask_choice() {
        MaskChoice::Auto => None,
        _ => Some(mask_for(kind, scene, &init.depth_map(), rig, cfgs)?),
    };
    let pseudo = if kind.needs_pseudo() {
        let mask_now = match &static_mask {
            Some(m) => m.clone(),
            None => Raster::filled(h, w, 1, 1.0)?,
        };
        // the auto mask varies per step; the pseudo label must exist wherever
        // it could reserve pixels, so build it against the all-ones mask
        let pseudo_mask = match kind.mask_choice() {
            MaskChoice::PriorFlow => mask_now,
            _ => Raster::filled(h, w, 1, 1.0)?,
        };
        Some(pseudo_depth_masked(scene, rig, &pseudo_mask)?)
    } else {
        None
    };

    let current_loss_and_mask = |sigma: &Raster| -> Result<(MaskedLoss, Raster)> {
        let depth = crate::loss::sigma_to_depth(sigma, &act)?;
        let mask = match &static_mask {
            Some(m) => m.clone(),
            None => mask_for(kind, scene, &depth, rig, cfgs)?,
        };
        let ml = masked_loss_and_grad(kind, scene, &depth, pseudo.as_ref(), rig, cfgs, &mask)?;
        Ok((ml, mask))
    };

    for step in 0..adam.steps {
        let (ml, mask) = current_loss_and_mask(&sigma)?;
        trace.push(ml.total);
        if !ml.total.is_finite() || ml.total > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step,
                loss: ml.total,
            });
        }
        let t = (step + 1) as i32;
        let bc1 = 1.0 - adam.beta1.powi(t);
        let bc2 = 1.0 - adam.beta2.powi(t);
        let sdata = sigma.data_mut();
        for i in 0..count {
            // chain through the activation; masked-out pixels get zero
            let g = ml.grad_depth.data()[i]
                * act_derivative(&act, sdata[i])
                * mask.data()[i];
            m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g;
            v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g * g;
            let update = adam.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + adam.eps);
            sdata[i] = (sdata[i] - update).clamp(0.0, 1.0);
        }
    }
    let (final_ml, _) = current_loss_and_mask(&sigma)?;
    trace.push(final_ml.total);

    Ok((DepthField::from_sigma(sigma, act)?, trace))
}

#[inline]
fn act_derivative(act: &DepthActivation, sigma: f64) -> f64 {
    act.depth_derivative(sigma)
}

/// One gradient-checker site.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckSample {
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub finite_diff: f64,
}

/// Relative disagreement with a floor: both values below 1e-12 count as
/// exact agreement.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let den = a.abs().max(b.abs());
    if den < 1e-12 {
        0.0
    } else {
        (a - b).abs() / den
    }
}

/// Worst relative error between the analytic gradient and central finite
/// differences over randomly sampled sites.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    kind: LossKind,
    scene: &RenderedScene,
    field: &DepthField,
    rig: &CameraRig,
    cfgs: &Configs,
    trials: usize,
    h_rel: f64,
    seed: u64,
) -> Result<f64> {
    let samples = grad_check_samples(kind, scene, field, rig, cfgs, trials, h_rel, seed)?;
    Ok(samples
        .iter()
        .map(|s| relative_error(s.analytic, s.finite_diff))
        .fold(0.0, f64::max))
}

/// Gradient-checker sites with both gradient values, for inspection.
///
/// The finite difference is taken on the local restriction of the masked
/// total: only windows touching the perturbed pixel contribute, which is the
/// same derivative without the cancellation of a large constant background.
/// Sites avoid the kinks and bilinear cell boundaries: sigma near its box
/// bounds, sample coordinates within 1e-3 px of a grid line (or leaving the
/// cell under perturbation), `|D - D_hat| < 1e-6`, and near-zero L1 terms.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_samples(
    kind: LossKind,
    scene: &RenderedScene,
    field: &DepthField,
    rig: &CameraRig,
    cfgs: &Configs,
    trials: usize,
    h_rel: f64,
    seed: u64,
) -> Result<Vec<GradCheckSample>> {
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    if !(h_rel.is_finite() && h_rel > 0.0) {
        return Err(Error::Domain(format!("h_rel {h_rel} must be positive")));
    }
    cfgs.loss.validate()?;
    let (h, w) = (scene.height(), scene.width());
    let act = field.activation;
    let depth = field.depth_map();
    let mask = mask_for(kind, scene, &depth, rig, cfgs)?; // frozen for the check
    let pseudo = if kind.needs_pseudo() {
        Some(pseudo_depth_masked(scene, rig, &mask)?)
    } else {
        None
    };
    let analytic_depth_grad =
        masked_loss_and_grad(kind, scene, &depth, pseudo.as_ref(), rig, cfgs, &mask)?.grad_depth;
    let t_count = mask.data().iter().filter(|&&m| m == 1.0).count() as f64;

    let padding = cfgs.loss.padding;
    let fb = rig.fb();
    let ch = scene.source.channels();
    let radius = if kind.has_photometric() {
        (cfgs.loss.ssim_window / 2) as isize
    } else {
        0
    };
    let mut warped = crate::warp::inverse_warp(&scene.source, &depth, rig, padding)?.image;
    let reference = match &pseudo {
        Some(p) => Some(crate::warp::inverse_warp(&scene.source, p, rig, padding)?.image),
        None => None,
    };

    // local masked-total restriction around pixel (r, c) with sigma = s there
    let local_eval = |r: usize, c: usize, s: f64, warped: &mut Raster| -> f64 {
        let d = act.depth(s);
        let x = c as f64 - fb / d;
        let mut saved = [0.0f64; 3];
        let mut acc = 0.0;
        if kind.has_photometric() || kind.has_flow_guided() {
            for (k, slot) in saved.iter_mut().enumerate().take(ch) {
                *slot = warped.get(r, c, k);
                warped.set(r, c, k, sample_horizontal(&scene.source, r, k, x, padding));
            }
        }
        if kind.has_photometric() {
            let r0 = (r as isize - radius).max(0) as usize;
            let r1 = ((r as isize + radius) as usize).min(h - 1);
            let c0 = (c as isize - radius).max(0) as usize;
            let c1 = ((c as isize + radius) as usize).min(w - 1);
            for qr in r0..=r1 {
                for qc in c0..=c1 {
                    if mask.get(qr, qc, 0) == 1.0 {
                        acc += photometric_error_at(&scene.target, warped, qr, qc, &cfgs.loss)
                            / t_count;
                    }
                }
            }
        }
        if mask.get(r, c, 0) == 1.0 {
            if kind.has_regression() {
                let p = pseudo.as_ref().unwrap().get(r, c);
                acc += (d - p).abs().ln_1p() / t_count;
            }
            if kind.has_flow_guided() {
                let refr = reference.as_ref().unwrap();
                let mut l1 = 0.0;
                for k in 0..ch {
                    l1 += (warped.get(r, c, k) - refr.get(r, c, k)).abs();
                }
                acc += l1 / ch as f64 / t_count;
            }
        }
        if kind.has_photometric() || kind.has_flow_guided() {
            for (k, slot) in saved.iter().enumerate().take(ch) {
                warped.set(r, c, k, *slot);
            }
        }
        acc
    };

    let mut rng = Prng::new(seed);
    let mut samples = Vec::with_capacity(trials);
    let mut attempts = 0usize;
    let attempt_cap = trials.saturating_mul(2000);
    while samples.len() < trials {
        attempts += 1;
        if attempts > attempt_cap {
            return Err(Error::Domain(format!(
                "could not find {trials} admissible sites (got {})",
                samples.len()
            )));
        }
        let r = rng.index(h);
        let c = rng.index(w);
        let s0 = field.sigma.get(r, c, 0);
        if !(5e-3..=1.0 - 5e-3).contains(&s0) {
            continue;
        }
        let hs = h_rel * s0;
        if s0 - hs < 0.0 || s0 + hs > 1.0 {
            continue;
        }
        let d0 = act.depth(s0);
        let d_lo = act.depth(s0 + hs); // activation is decreasing
        let d_hi = act.depth(s0 - hs);
        if kind.has_photometric() || kind.has_flow_guided() {
            let xs = [d0, d_lo, d_hi].map(|d| c as f64 - fb / d);
            let cell = xs[0].floor();
            if xs.iter().any(|x| x.floor() != cell)
                || xs.iter().any(|x| !(1.0..=(w as f64 - 2.0)).contains(x))
                || (xs[0] - cell).min(cell + 1.0 - xs[0]) < 1e-3
            {
                continue;
            }
        }
        if kind.has_regression() {
            let p = pseudo.as_ref().unwrap().get(r, c);
            if (d0 - p).abs() < 1e-6 || (d_lo - p).signum() != (d_hi - p).signum() {
                continue;
            }
        }
        // L1 kinks: each channel's difference must keep one strict sign over
        // the whole stencil, or vanish identically (flat loss, both sides 0)
        let l1_admissible = |other: &dyn Fn(usize) -> f64| -> bool {
            (0..ch).all(|k| {
                let diffs = [d0, d_lo, d_hi].map(|d| {
                    let x = c as f64 - fb / d;
                    sample_horizontal(&scene.source, r, k, x, padding) - other(k)
                });
                let flat = diffs.iter().all(|v| *v == 0.0);
                let same_sign = diffs.iter().all(|v| *v > 1e-7)
                    || diffs.iter().all(|v| *v < -1e-7);
                flat || same_sign
            })
        };
        if kind.has_flow_guided() {
            let refr = reference.as_ref().unwrap();
            if !l1_admissible(&|k| refr.get(r, c, k)) {
                continue;
            }
        }
        if kind.has_photometric() && !l1_admissible(&|k| scene.target.get(r, c, k)) {
            continue;
        }
        let up = local_eval(r, c, s0 + hs, &mut warped);
        let down = local_eval(r, c, s0 - hs, &mut warped);
        let finite_diff = (up - down) / (2.0 * hs);
        let analytic = analytic_depth_grad.get(r, c, 0) * act.depth_derivative(s0);
        samples.push(GradCheckSample {
            row: r,
            col: c,
            analytic,
            finite_diff,
        });
    }
    Ok(samples)
}
