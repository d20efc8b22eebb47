//! Synthetic rectified-stereo scenes.
//!
//! Textures are continuous analytic functions of the target-view horizontal
//! coordinate, so both views sample the same function and the rendered pair
//! is photometrically consistent up to interpolation error — an exactness
//! real data never offers. The source view applies an illumination gain and
//! bias, which is the controlled stand-in for broken color constancy. The
//! prior flow is the exact flow implied by the ground-truth depth, optionally
//! perturbed by sign-preserving Gaussian noise, standing in for a pretrained
//! stereo matcher.

use std::path::Path;

use crate::camera::{CameraRig, DepthMap, FlowField};
use crate::error::{Error, Result};
use crate::kv::{format_kv, KvMap};
use crate::pfm::{read_pfm, write_pfm};
use crate::raster::Raster;
use crate::rng::Prng;

/// Depths never exceed this; values in `(80, 200]` are deliberately allowed
/// so out-of-range behavior can be exercised.
pub const MAX_SCENE_DEPTH: f64 = 200.0;
pub const MIN_SCENE_DEPTH: f64 = 0.1;

/// Flow-noise truncation floor: noisy flow magnitudes never drop below this,
/// which preserves the sign and keeps the depth conversion well defined.
pub const MIN_PRIOR_FLOW_MAG: f64 = 1e-3;

/// Axis-aligned constant-depth layer on the target grid; `bottom`/`right`
/// are exclusive. Nearer layers occlude farther ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
    pub depth: f64,
}

impl DepthBox {
    fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.bottom).contains(&row) && (self.left..self.right).contains(&col)
    }

    fn covers_row(&self, row: usize) -> bool {
        (self.top..self.bottom).contains(&row)
    }

    /// Source-view column footprint `[left - 0.5 - disparity, right - 0.5 - disparity)`:
    /// the union of the unit-width pixel footprints shifted by the layer's flow.
    fn footprint(&self, fb: f64) -> (f64, f64) {
        let disp = fb / self.depth;
        (
            self.left as f64 - 0.5 - disp,
            self.right as f64 - 0.5 - disp,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DepthModel {
    ConstantPlane { depth: f64 },
    /// depth(col) = depth0 + gradient * col
    SlantedPlane { depth0: f64, gradient: f64 },
    LayeredBoxes { layers: Vec<DepthBox> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextureModel {
    /// Gentle linear ramp; bilinear interpolation is exact on it.
    SmoothRamp,
    /// Sum of 8 random sinusoids per channel, drawn from the texture's own
    /// seed so the pattern is independent of the render seed.
    BandlimitedNoise { seed: u64, max_freq: f64 },
    /// Gray vertical stripes `0.5 + 0.4 sin(tau * u / period + phase)`.
    PeriodicStripes { period: f64, phase: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub rig: CameraRig,
    pub depth_model: DepthModel,
    pub texture_model: TextureModel,
    /// Applied to the source image only.
    pub illumination_gain: f64,
    pub illumination_bias: f64,
    /// Std-dev of the Gaussian perturbation of the prior flow, in pixels.
    pub flow_noise_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub target: Raster,
    pub source: Raster,
    pub depth_gt: DepthMap,
    pub prior_flow: FlowField,
    /// 1 marks target pixels with no valid source correspondence.
    pub occlusion: Raster,
}

impl RenderedScene {
    pub fn height(&self) -> usize {
        self.target.height()
    }

    pub fn width(&self) -> usize {
        self.target.width()
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 {
            return Err(Error::InvalidSpec(format!(
                "frame {}x{} too small",
                self.height, self.width
            )));
        }
        if !(0.5..=1.5).contains(&self.illumination_gain) {
            return Err(Error::InvalidSpec(format!(
                "illumination_gain {} outside [0.5, 1.5]",
                self.illumination_gain
            )));
        }
        if !self.illumination_bias.is_finite() {
            return Err(Error::InvalidSpec("illumination_bias not finite".into()));
        }
        if !(self.flow_noise_sigma.is_finite() && self.flow_noise_sigma >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "flow_noise_sigma {} must be nonnegative",
                self.flow_noise_sigma
            )));
        }
        let depth_ok = |d: f64| (MIN_SCENE_DEPTH..=MAX_SCENE_DEPTH).contains(&d);
        match &self.depth_model {
            DepthModel::ConstantPlane { depth } => {
                if !depth_ok(*depth) {
                    return Err(Error::InvalidSpec(format!("plane depth {depth} out of range")));
                }
            }
            DepthModel::SlantedPlane { depth0, gradient } => {
                let d_last = depth0 + gradient * (self.width - 1) as f64;
                if !depth_ok(*depth0) || !depth_ok(d_last) {
                    return Err(Error::InvalidSpec(format!(
                        "slanted plane spans [{depth0}, {d_last}], out of range"
                    )));
                }
                // no self-occlusion: the target-to-source column map must stay
                // monotone, i.e. 1 - d(disparity)/d(col) > 0 everywhere
                let d_min = depth0.min(d_last);
                let slope = self.rig.fb() * gradient.abs() / (d_min * d_min);
                if gradient < &0.0 && slope >= 1.0 {
                    return Err(Error::InvalidSpec(
                        "slanted plane would self-occlude".into(),
                    ));
                }
            }
            DepthModel::LayeredBoxes { layers } => {
                if layers.is_empty() {
                    return Err(Error::InvalidSpec("layered_boxes needs layers".into()));
                }
                for b in layers {
                    if b.top >= b.bottom || b.left >= b.right {
                        return Err(Error::InvalidSpec(format!("empty box {b:?}")));
                    }
                    if b.bottom > self.height || b.right > self.width {
                        return Err(Error::InvalidSpec(format!("box {b:?} exceeds frame")));
                    }
                    if !depth_ok(b.depth) {
                        return Err(Error::InvalidSpec(format!("box depth {} out of range", b.depth)));
                    }
                }
                for r in 0..self.height {
                    for c in 0..self.width {
                        if !layers.iter().any(|b| b.contains(r, c)) {
                            return Err(Error::InvalidSpec(format!(
                                "pixel ({r},{c}) covered by no box"
                            )));
                        }
                    }
                }
            }
        }
        match &self.texture_model {
            TextureModel::SmoothRamp => {}
            TextureModel::BandlimitedNoise { max_freq, .. } => {
                if !(0.02..=0.5).contains(max_freq) {
                    return Err(Error::InvalidSpec(format!(
                        "noise max_freq {max_freq} outside [0.02, 0.5]"
                    )));
                }
            }
            TextureModel::PeriodicStripes { period, phase } => {
                if !(period.is_finite() && *period >= 2.0) {
                    return Err(Error::InvalidSpec(format!("stripe period {period} < 2")));
                }
                if !phase.is_finite() {
                    return Err(Error::InvalidSpec("stripe phase not finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Upper bound on the linear-interpolation error of the source image for
    /// constant-depth surfaces: `gain * sup|T''| / 8` plus a floor for exact
    /// cases. For slanted planes the nonunit column map is folded in.
    pub fn interpolation_bound(&self) -> f64 {
        let tex = TextureEval::build(self);
        let m2 = tex.max_second_derivative();
        let m1 = tex.max_first_derivative();
        let (stretch, curvature) = match &self.depth_model {
            DepthModel::ConstantPlane { .. } | DepthModel::LayeredBoxes { .. } => (1.0, 0.0),
            DepthModel::SlantedPlane { depth0, gradient } => {
                let d_last = depth0 + gradient * (self.width - 1) as f64;
                let d_min = depth0.min(d_last);
                let dd = self.rig.fb() * gradient.abs() / (d_min * d_min);
                let denom = if *gradient < 0.0 { 1.0 - dd } else { 1.0 };
                let ddd = 2.0 * self.rig.fb() * gradient * gradient / (d_min * d_min * d_min);
                (1.0 / (denom * denom), ddd / (denom * denom * denom))
            }
        };
        self.illumination_gain * (m2 * stretch + m1 * curvature) / 8.0 + 1e-12
    }
}

/// Evaluable texture, built once per render.
pub(crate) enum TextureEval {
    Ramp { slope: f64 },
    Noise { comps: Vec<[(f64, f64, f64); 8]> },
    Stripes { period: f64, phase: f64 },
}

const NOISE_AMP: f64 = 0.05; // 8 components * 0.05 = 0.4 total swing
const STRIPE_AMP: f64 = 0.4;
const TAU: f64 = std::f64::consts::TAU;

impl TextureEval {
    pub(crate) fn build(spec: &SceneSpec) -> Self {
        match &spec.texture_model {
            TextureModel::SmoothRamp => TextureEval::Ramp {
                slope: 0.5 / (2.0 * spec.width as f64),
            },
            TextureModel::PeriodicStripes { period, phase } => TextureEval::Stripes {
                period: *period,
                phase: *phase,
            },
            TextureModel::BandlimitedNoise { seed, max_freq } => {
                let mut rng = Prng::new(*seed);
                let mut comps = Vec::with_capacity(3);
                for _ in 0..3 {
                    let mut ch = [(0.0, 0.0, 0.0); 8];
                    for slot in ch.iter_mut() {
                        *slot = (
                            rng.uniform_in(0.02, *max_freq),
                            rng.uniform_in(0.0, 0.5 * *max_freq),
                            rng.uniform_in(0.0, TAU),
                        );
                    }
                    comps.push(ch);
                }
                TextureEval::Noise { comps }
            }
        }
    }

    /// Texture value for channel `ch` at continuous target coordinates.
    pub(crate) fn value(&self, ch: usize, u: f64, v: f64) -> f64 {
        match self {
            TextureEval::Ramp { slope } => 0.1 + slope * u.max(0.0),
            TextureEval::Stripes { period, phase } => {
                0.5 + STRIPE_AMP * (TAU * u / period + phase).sin()
            }
            TextureEval::Noise { comps } => {
                let mut acc = 0.5;
                for &(fu, fv, ph) in &comps[ch] {
                    acc += NOISE_AMP * (TAU * (fu * u + fv * v) + ph).sin();
                }
                acc
            }
        }
    }

    /// sup over channels of |d^2 T / du^2|.
    pub(crate) fn max_second_derivative(&self) -> f64 {
        match self {
            TextureEval::Ramp { .. } => 0.0,
            TextureEval::Stripes { period, .. } => {
                STRIPE_AMP * (TAU / period) * (TAU / period)
            }
            TextureEval::Noise { comps } => comps
                .iter()
                .map(|ch| {
                    ch.iter()
                        .map(|&(fu, _, _)| NOISE_AMP * (TAU * fu) * (TAU * fu))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
        }
    }

    /// sup over channels of |d T / du|.
    pub(crate) fn max_first_derivative(&self) -> f64 {
        match self {
            TextureEval::Ramp { slope } => *slope,
            TextureEval::Stripes { period, .. } => STRIPE_AMP * TAU / period,
            TextureEval::Noise { comps } => comps
                .iter()
                .map(|ch| {
                    ch.iter()
                        .map(|&(fu, _, _)| NOISE_AMP * TAU * fu)
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
        }
    }
}

/// Depth queries shared by the renderer and the occlusion computation.
struct DepthSurface<'a> {
    model: &'a DepthModel,
    fb: f64,
}

impl DepthSurface<'_> {
    fn depth_at(&self, row: usize, col: usize) -> f64 {
        match self.model {
            DepthModel::ConstantPlane { depth } => *depth,
            DepthModel::SlantedPlane { depth0, gradient } => depth0 + gradient * col as f64,
            DepthModel::LayeredBoxes { layers } => layers
                .iter()
                .filter(|b| b.contains(row, col))
                .map(|b| b.depth)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Surface visible at continuous source column `x` on `row`:
    /// `(depth, disparity)` with texture coordinate `u = x + disparity`.
    fn visible_at_source(&self, row: usize, x: f64) -> (f64, f64) {
        match self.model {
            DepthModel::ConstantPlane { depth } => (*depth, self.fb / depth),
            DepthModel::SlantedPlane { depth0, gradient } => {
                if gradient.abs() < 1e-12 {
                    return (*depth0, self.fb / depth0);
                }
                // solve (u - x)(depth0 + gradient*u) = fb for the texture
                // coordinate u of the point imaged at source column x
                let g = *gradient;
                let b = depth0 - g * x;
                let c = -(x * depth0 + self.fb);
                let disc = (b * b - 4.0 * g * c).max(0.0).sqrt();
                let u1 = (-b + disc) / (2.0 * g);
                let u2 = (-b - disc) / (2.0 * g);
                let pick = |u: f64| {
                    let d = depth0 + g * u;
                    d > 0.0 && u >= x
                };
                let u = if pick(u1) { u1 } else { u2 };
                let d = depth0 + g * u;
                (d, u - x)
            }
            DepthModel::LayeredBoxes { layers } => {
                let mut best: Option<(f64, f64)> = None;
                let mut fallback: Option<(f64, f64)> = None;
                for b in layers {
                    if !b.covers_row(row) {
                        continue;
                    }
                    let disp = self.fb / b.depth;
                    let (lo, hi) = b.footprint(self.fb);
                    if (lo..hi).contains(&x) && best.is_none_or(|(d, _)| b.depth < d) {
                        best = Some((b.depth, disp));
                    }
                    if fallback.is_none_or(|(d, _)| b.depth > d) {
                        fallback = Some((b.depth, disp));
                    }
                }
                // outside every footprint the farthest surface extends on
                best.or(fallback).expect("validated coverage")
            }
        }
    }

    /// A target pixel is occluded when a strictly nearer layer's source
    /// footprint covers its projected source coordinate.
    fn occluded(&self, row: usize, col: usize) -> bool {
        let DepthModel::LayeredBoxes { layers } = self.model else {
            return false;
        };
        let d = self.depth_at(row, col);
        let x = col as f64 - self.fb / d;
        layers.iter().any(|b| {
            if !b.covers_row(row) || b.depth >= d - 1e-9 {
                return false;
            }
            let (lo, hi) = b.footprint(self.fb);
            (lo..hi).contains(&x)
        })
    }
}

/// Render a scene. Pure function of `(spec, rng_seed)`: rerendering with the
/// same arguments is bitwise identical.
pub fn render(spec: &SceneSpec, rng_seed: u64) -> Result<RenderedScene> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let fb = spec.rig.fb();
    let tex = TextureEval::build(spec);
    let surface = DepthSurface {
        model: &spec.depth_model,
        fb,
    };

    let depth_gt = DepthMap::from_raster(Raster::from_fn(h, w, 1, |r, c, _| {
        surface.depth_at(r, c)
    })?)?;

    let target = Raster::from_fn(h, w, 3, |r, c, ch| {
        tex.value(ch, c as f64, r as f64).clamp(0.0, 1.0)
    })?;

    let gain = spec.illumination_gain;
    let bias = spec.illumination_bias;
    let source = Raster::from_fn(h, w, 3, |r, x, ch| {
        let (_, disp) = surface.visible_at_source(r, x as f64);
        let u = x as f64 + disp;
        (gain * tex.value(ch, u, r as f64) + bias).clamp(0.0, 1.0)
    })?;

    let occlusion = Raster::from_fn(h, w, 1, |r, c, _| {
        if surface.occluded(r, c) {
            1.0
        } else {
            0.0
        }
    })?;

    let mut rng = Prng::new(rng_seed);
    let sigma = spec.flow_noise_sigma;
    let prior_flow = FlowField::from_raster(Raster::from_fn(h, w, 1, |r, c, _| {
        let exact = -fb / depth_gt.get(r, c);
        if sigma == 0.0 {
            exact
        } else {
            // truncation keeps the flow strictly negative
            (exact + sigma * rng.normal()).min(-MIN_PRIOR_FLOW_MAG)
        }
    })?)?;

    Ok(RenderedScene {
        target,
        source,
        depth_gt,
        prior_flow,
        occlusion,
    })
}

/// The demonstration scene for the loss-landscape separation, plus the pixel
/// the sweep is run at.
///
/// A striped foreground plate at 10 m carries the designated pixel; the
/// stripes period and phase are chosen so the photometric loss acquires
/// additional minima from value matches under the 1.1 illumination gain while
/// the distillation losses stay single-valleyed over the whole sweep range.
/// A far background (120 m) and a near-cap side band (65 m) give the
/// prior-flow mask real work in the ablation runs.
pub fn stress_scene() -> (SceneSpec, (usize, usize)) {
    let spec = SceneSpec {
        height: 64,
        width: 192,
        rig: CameraRig::new(40.0, 0.5).expect("valid rig"),
        depth_model: DepthModel::LayeredBoxes {
            layers: vec![
                DepthBox {
                    top: 0,
                    left: 0,
                    bottom: 64,
                    right: 192,
                    depth: 120.0,
                },
                DepthBox {
                    top: 0,
                    left: 160,
                    bottom: 64,
                    right: 192,
                    depth: 65.0,
                },
                DepthBox {
                    top: 8,
                    left: 8,
                    bottom: 56,
                    right: 148,
                    depth: 10.0,
                },
            ],
        },
        texture_model: TextureModel::PeriodicStripes {
            period: 19.0,
            phase: 1.7358,
        },
        illumination_gain: 1.1,
        illumination_bias: 0.0,
        flow_noise_sigma: 0.0,
    };
    (spec, (32, 76))
}

/// Load a prior flow field from a 1-channel PFM, validating finiteness.
pub fn load_prior_flow(path: &Path) -> Result<FlowField> {
    let raster = read_pfm(path)?;
    if raster.channels() != 1 {
        return Err(Error::Format(format!(
            "{}: prior flow must be 1-channel, got {}",
            path.display(),
            raster.channels()
        )));
    }
    FlowField::from_raster(raster)
}

// ---------------------------------------------------------------------------
// Flat key=value serialization and the scene directory layout
// ---------------------------------------------------------------------------

const SPEC_KEYS: &[&str] = &[
    "height",
    "width",
    "focal_x",
    "baseline",
    "depth_model",
    "plane_depth",
    "slant_depth0",
    "slant_gradient",
    "boxes",
    "texture",
    "noise_seed",
    "noise_max_freq",
    "stripe_period",
    "stripe_phase",
    "illumination_gain",
    "illumination_bias",
    "flow_noise_sigma",
];

pub fn spec_to_kv(spec: &SceneSpec) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("height".into(), spec.height.to_string()),
        ("width".into(), spec.width.to_string()),
        ("focal_x".into(), format!("{}", spec.rig.focal_x())),
        ("baseline".into(), format!("{}", spec.rig.baseline())),
    ];
    match &spec.depth_model {
        DepthModel::ConstantPlane { depth } => {
            pairs.push(("depth_model".into(), "constant_plane".into()));
            pairs.push(("plane_depth".into(), format!("{depth}")));
        }
        DepthModel::SlantedPlane { depth0, gradient } => {
            pairs.push(("depth_model".into(), "slanted_plane".into()));
            pairs.push(("slant_depth0".into(), format!("{depth0}")));
            pairs.push(("slant_gradient".into(), format!("{gradient}")));
        }
        DepthModel::LayeredBoxes { layers } => {
            pairs.push(("depth_model".into(), "layered_boxes".into()));
            let boxes = layers
                .iter()
                .map(|b| format!("{},{},{},{},{}", b.top, b.left, b.bottom, b.right, b.depth))
                .collect::<Vec<_>>()
                .join(";");
            pairs.push(("boxes".into(), boxes));
        }
    }
    match &spec.texture_model {
        TextureModel::SmoothRamp => pairs.push(("texture".into(), "smooth_ramp".into())),
        TextureModel::BandlimitedNoise { seed, max_freq } => {
            pairs.push(("texture".into(), "bandlimited_noise".into()));
            pairs.push(("noise_seed".into(), seed.to_string()));
            pairs.push(("noise_max_freq".into(), format!("{max_freq}")));
        }
        TextureModel::PeriodicStripes { period, phase } => {
            pairs.push(("texture".into(), "periodic_stripes".into()));
            pairs.push(("stripe_period".into(), format!("{period}")));
            pairs.push(("stripe_phase".into(), format!("{phase}")));
        }
    }
    pairs.push(("illumination_gain".into(), format!("{}", spec.illumination_gain)));
    pairs.push(("illumination_bias".into(), format!("{}", spec.illumination_bias)));
    pairs.push(("flow_noise_sigma".into(), format!("{}", spec.flow_noise_sigma)));
    pairs
}

pub fn spec_from_kv(kv: &KvMap) -> Result<SceneSpec> {
    kv.check_keys(SPEC_KEYS)?;
    let depth_model = match kv.require::<String>("depth_model")?.as_str() {
        "constant_plane" => DepthModel::ConstantPlane {
            depth: kv.require("plane_depth")?,
        },
        "slanted_plane" => DepthModel::SlantedPlane {
            depth0: kv.require("slant_depth0")?,
            gradient: kv.require("slant_gradient")?,
        },
        "layered_boxes" => {
            let raw: String = kv.require("boxes")?;
            let mut layers = Vec::new();
            for part in raw.split(';') {
                let fields: Vec<&str> = part.split(',').collect();
                if fields.len() != 5 {
                    return Err(Error::Config(format!("box entry {part:?} needs 5 fields")));
                }
                let parse_usize = |s: &str| -> Result<usize> {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad box coordinate {s:?}")))
                };
                layers.push(DepthBox {
                    top: parse_usize(fields[0])?,
                    left: parse_usize(fields[1])?,
                    bottom: parse_usize(fields[2])?,
                    right: parse_usize(fields[3])?,
                    depth: fields[4]
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad box depth {:?}", fields[4])))?,
                });
            }
            DepthModel::LayeredBoxes { layers }
        }
        other => return Err(Error::Config(format!("unknown depth_model {other:?}"))),
    };
    let texture_model = match kv.require::<String>("texture")?.as_str() {
        "smooth_ramp" => TextureModel::SmoothRamp,
        "bandlimited_noise" => TextureModel::BandlimitedNoise {
            seed: kv.require("noise_seed")?,
            max_freq: kv.require("noise_max_freq")?,
        },
        "periodic_stripes" => TextureModel::PeriodicStripes {
            period: kv.require("stripe_period")?,
            phase: kv.require("stripe_phase")?,
        },
        other => return Err(Error::Config(format!("unknown texture {other:?}"))),
    };
    let spec = SceneSpec {
        height: kv.require("height")?,
        width: kv.require("width")?,
        rig: CameraRig::new(kv.require("focal_x")?, kv.require("baseline")?)?,
        depth_model,
        texture_model,
        illumination_gain: kv.get_parsed("illumination_gain")?.unwrap_or(1.0),
        illumination_bias: kv.get_parsed("illumination_bias")?.unwrap_or(0.0),
        flow_noise_sigma: kv.get_parsed("flow_noise_sigma")?.unwrap_or(0.0),
    };
    spec.validate()?;
    Ok(spec)
}

/// Fixed artifact names inside a scene directory.
pub const SCENE_FILES: &[&str] = &[
    "target.pfm",
    "source.pfm",
    "depth_gt.pfm",
    "prior_flow.pfm",
    "occlusion.pfm",
];

/// Write the five rasters plus `scene.cfg` into `dir`.
pub fn save_scene_dir(dir: &Path, spec: &SceneSpec, scene: &RenderedScene) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("scene.cfg"), format_kv(&spec_to_kv(spec)))?;
    write_pfm(&dir.join("target.pfm"), &scene.target)?;
    write_pfm(&dir.join("source.pfm"), &scene.source)?;
    write_pfm(&dir.join("depth_gt.pfm"), scene.depth_gt.raster())?;
    write_pfm(&dir.join("prior_flow.pfm"), scene.prior_flow.raster())?;
    write_pfm(&dir.join("occlusion.pfm"), &scene.occlusion)?;
    Ok(())
}

/// Load a scene directory written by `save_scene_dir`. Values carry the f32
/// quantization of the PFM container.
pub fn load_scene_dir(dir: &Path) -> Result<(SceneSpec, RenderedScene)> {
    let spec = spec_from_kv(&KvMap::load(&dir.join("scene.cfg"))?)?;
    let target = read_pfm(&dir.join("target.pfm"))?;
    let source = read_pfm(&dir.join("source.pfm"))?;
    let depth_gt = DepthMap::from_raster(read_pfm(&dir.join("depth_gt.pfm"))?)?;
    let prior_flow = load_prior_flow(&dir.join("prior_flow.pfm"))?;
    let occlusion = read_pfm(&dir.join("occlusion.pfm"))?;
    if !occlusion.is_binary() {
        return Err(Error::Format(format!(
            "{}: occlusion mask must be 0/1",
            dir.join("occlusion.pfm").display()
        )));
    }
    target.same_shape(&source)?;
    if (target.height(), target.width()) != (depth_gt.height(), depth_gt.width())
        || (target.height(), target.width()) != (spec.height, spec.width)
    {
        return Err(Error::Format(format!(
            "{}: raster shapes disagree with scene.cfg",
            dir.display()
        )));
    }
    Ok((
        spec,
        RenderedScene {
            target,
            source,
            depth_gt,
            prior_flow,
            occlusion,
        },
    ))
}
