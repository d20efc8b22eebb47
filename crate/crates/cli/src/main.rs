//! Command-line experiments: scene generation, landscape sweeps, per-pixel
//! optimization, ablations, gradient checks, warps, and evaluation.
//!
//! Every run validates its inputs and computes results in memory before the
//! first byte is written, so a failing invocation leaves no partial
//! artifacts. Outputs are accompanied by a flat key=value manifest recording
//! the configuration, the seed, and an FNV-1a 64 checksum of each artifact.
//! Exit codes: 0 success, 1 domain or validation error, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use depthlab::kv::{format_kv, KvMap};
use depthlab::optim::{
    evaluate, grad_check_samples, optimize_depth, relative_error, sweep_landscape, AdamConfig,
    DepthField, LossKind,
};
use depthlab::pfm::{read_pfm, write_pfm};
use depthlab::pgm::write_pgm;
use depthlab::raster::Raster;
use depthlab::scene::{load_scene_dir, render, save_scene_dir, spec_from_kv, spec_to_kv};
use depthlab::warp::inverse_warp;
use depthlab::{Configs, DepthMap, Error, RenderedScene, SceneSpec};

#[derive(Parser)]
#[command(name = "depthlab", version, about = "Stereo depth-loss laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic stereo scene into a directory of PFM files.
    GenScene(GenSceneArgs),
    /// Sweep the per-pixel losses over a depth grid and write a CSV.
    Landscape(LandscapeArgs),
    /// Optimize a per-pixel depth field against one loss.
    Optimize(OptimizeArgs),
    /// Run a set of loss/mask combinations from one init and tabulate metrics.
    Ablate(AblateArgs),
    /// Compare analytic gradients against finite differences.
    GradCheck(GradCheckArgs),
    /// Inverse-warp the source image by a depth map.
    Warp(WarpArgs),
    /// Evaluate a depth map against the scene ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenSceneArgs {
    /// Scene spec as a flat key=value file; "stress" for the built-in
    /// landscape demonstration scene.
    #[arg(long)]
    config: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write 8-bit PGM previews.
    #[arg(long, default_value_t = false)]
    pgm: bool,
}

#[derive(Args)]
struct LandscapeArgs {
    /// Scene directory written by gen-scene.
    #[arg(long)]
    scene: PathBuf,
    /// Pixel as row,col.
    #[arg(long)]
    pixel: String,
    /// Depth grid as lo:hi:step.
    #[arg(long)]
    range: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional loss config (key=value).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Loss kind: Lp, Lp+Mp, Lp+Mf, Lfd, Lfd+Mp, Lfd+Mf, Ldr, Lfp, Ldr+Lfp.
    #[arg(long)]
    loss: String,
    /// Constant init depth in meters.
    #[arg(long, default_value_t = 60.0)]
    init_depth: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 600)]
    steps: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Comma-separated loss kinds, each run from the identical init.
    #[arg(long, default_value = "Lp,Lp+Mp,Lp+Mf,Lfd,Lfd+Mp,Lfd+Mf")]
    losses: String,
    #[arg(long, default_value_t = 60.0)]
    init_depth: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 600)]
    steps: usize,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    loss: String,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1e-5)]
    h_rel: f64,
    /// Seed for site sampling and the random sigma field.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sigma field drawn uniformly from this range.
    #[arg(long, default_value_t = 0.01)]
    sigma_lo: f64,
    #[arg(long, default_value_t = 0.2)]
    sigma_hi: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optional CSV of per-site gradients.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WarpArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Depth PFM; defaults to the scene ground truth.
    #[arg(long)]
    depth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    pgm: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Depth PFM to evaluate (metric depths, 1 channel).
    #[arg(long)]
    depth: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> depthlab::Result<()> {
    match command {
        Command::GenScene(a) => gen_scene(a),
        Command::Landscape(a) => landscape(a),
        Command::Optimize(a) => optimize(a),
        Command::Ablate(a) => ablate(a),
        Command::GradCheck(a) => grad_check_cmd(a),
        Command::Warp(a) => warp_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

// ---------------------------------------------------------------------------
// manifest and CSV plumbing
// ---------------------------------------------------------------------------

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Manifest rows: command echo, config pairs, seed, then one checksum row per
/// artifact, all in deterministic order.
struct Manifest {
    pairs: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self {
            pairs: vec![("command".into(), command.into())],
        }
    }

    fn push(&mut self, key: &str, value: String) {
        self.pairs.push((key.into(), value));
    }

    fn extend(&mut self, prefix: &str, pairs: &[(String, String)]) {
        for (k, v) in pairs {
            self.pairs.push((format!("{prefix}.{k}"), v.clone()));
        }
    }

    fn checksum_file(&mut self, path: &Path) -> depthlab::Result<()> {
        let bytes = std::fs::read(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.pairs
            .push((format!("checksum.{name}"), format!("{:016x}", fnv1a64(&bytes))));
        Ok(())
    }

    fn write(&self, path: &Path) -> depthlab::Result<()> {
        std::fs::write(path, format_kv(&self.pairs))?;
        Ok(())
    }
}

/// Manifest location: inside an output directory, or next to a file output.
fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.txt")
    } else {
        let mut name = out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        name.push_str(".manifest.txt");
        out.with_file_name(name)
    }
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> depthlab::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn load_configs(path: &Option<PathBuf>) -> depthlab::Result<Configs> {
    match path {
        None => Ok(Configs::default()),
        Some(p) => Configs::from_kv(&KvMap::load(p)?),
    }
}

fn load_scene(dir: &Path) -> depthlab::Result<(SceneSpec, RenderedScene)> {
    load_scene_dir(dir)
}

fn parse_pixel(s: &str) -> depthlab::Result<(usize, usize)> {
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("pixel {s:?} must be row,col")))?;
    let parse = |t: &str| -> depthlab::Result<usize> {
        t.trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad pixel coordinate {t:?}")))
    };
    Ok((parse(r)?, parse(c)?))
}

fn parse_range(s: &str) -> depthlab::Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("range {s:?} must be lo:hi:step")));
    }
    let parse = |t: &str| -> depthlab::Result<f64> {
        t.trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad range component {t:?}")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

fn parse_loss(s: &str) -> depthlab::Result<LossKind> {
    s.trim().parse()
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn gen_scene(a: GenSceneArgs) -> depthlab::Result<()> {
    let spec = if a.config == "stress" {
        let (spec, pixel) = depthlab::scene::stress_scene();
        eprintln!("stress scene: designated pixel {},{}", pixel.0, pixel.1);
        spec
    } else {
        spec_from_kv(&KvMap::load(Path::new(&a.config))?)?
    };
    let scene = render(&spec, a.seed)?;

    save_scene_dir(&a.out, &spec, &scene)?;
    if a.pgm {
        write_pgm(&a.out.join("target.pgm"), &scene.target)?;
        write_pgm(&a.out.join("source.pgm"), &scene.source)?;
        let max_d = scene
            .depth_gt
            .raster()
            .data()
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        write_pgm(
            &a.out.join("depth_gt.pgm"),
            &scene.depth_gt.raster().map(|d| d / max_d),
        )?;
    }

    let mut manifest = Manifest::new("gen-scene");
    manifest.extend("scene", &spec_to_kv(&spec));
    manifest.push("seed", a.seed.to_string());
    for name in depthlab::scene::SCENE_FILES {
        manifest.checksum_file(&a.out.join(name))?;
    }
    manifest.write(&manifest_path(&a.out, true))
}

fn landscape(a: LandscapeArgs) -> depthlab::Result<()> {
    let (spec, scene) = load_scene(&a.scene)?;
    let cfgs = load_configs(&a.config)?;
    let pixel = parse_pixel(&a.pixel)?;
    let (lo, hi, step) = parse_range(&a.range)?;
    let curve = sweep_landscape(&scene, pixel, &spec.rig, &cfgs, (lo, hi), step)?;

    let rows: Vec<Vec<String>> = (0..curve.depths.len())
        .map(|i| {
            vec![
                format_float(curve.depths[i]),
                format_float(curve.lp[i]),
                format_float(curve.ldr[i]),
                format_float(curve.lfp[i]),
                format_float(curve.lfd[i]),
            ]
        })
        .collect();
    write_csv(&a.out, "depth,L_p,L_dr,L_fp,L_fd", &rows)?;

    let mut manifest = Manifest::new("landscape");
    manifest.push("scene", a.scene.display().to_string());
    manifest.extend("loss", &cfgs.to_kv_pairs());
    manifest.push("pixel", format!("{},{}", pixel.0, pixel.1));
    manifest.push("range", format!("{lo}:{hi}:{step}"));
    manifest.checksum_file(&a.out)?;
    manifest.write(&manifest_path(&a.out, false))
}

fn optimize(a: OptimizeArgs) -> depthlab::Result<()> {
    let (spec, scene) = load_scene(&a.scene)?;
    let cfgs = load_configs(&a.config)?;
    let kind = parse_loss(&a.loss)?;
    let adam = AdamConfig {
        lr: a.lr,
        steps: a.steps,
        ..AdamConfig::default()
    };
    let init = DepthField::constant_depth(
        scene.height(),
        scene.width(),
        a.init_depth,
        cfgs.activation,
    )?;
    let (field, trace) = optimize_depth(&scene, &init, kind, &adam, &spec.rig, &cfgs)?;
    let depth = field.depth_map();
    let report = evaluate(&depth, &scene, &spec.rig)?;

    std::fs::create_dir_all(&a.out)?;
    let trace_rows: Vec<Vec<String>> = trace
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), format_float(*l)])
        .collect();
    write_csv(&a.out.join("loss_trace.csv"), "step,loss", &trace_rows)?;
    let eval_rows: Vec<Vec<String>> = report
        .rows()
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), format_float(v)])
        .collect();
    write_csv(&a.out.join("eval.csv"), "metric,value", &eval_rows)?;
    write_pfm(&a.out.join("depth.pfm"), depth.raster())?;

    let mut manifest = Manifest::new("optimize");
    manifest.push("scene", a.scene.display().to_string());
    manifest.extend("loss_config", &cfgs.to_kv_pairs());
    manifest.push("loss", kind.to_string());
    manifest.push("init_depth", format_float(a.init_depth));
    manifest.push("lr", format_float(a.lr));
    manifest.push("steps", a.steps.to_string());
    for name in ["loss_trace.csv", "eval.csv", "depth.pfm"] {
        manifest.checksum_file(&a.out.join(name))?;
    }
    manifest.write(&manifest_path(&a.out, true))
}

fn ablate(a: AblateArgs) -> depthlab::Result<()> {
    let (spec, scene) = load_scene(&a.scene)?;
    let cfgs = load_configs(&a.config)?;
    let kinds: Vec<LossKind> = a
        .losses
        .split(',')
        .map(parse_loss)
        .collect::<depthlab::Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::Config("no losses given".into()));
    }
    let adam = AdamConfig {
        lr: a.lr,
        steps: a.steps,
        ..AdamConfig::default()
    };
    let init = DepthField::constant_depth(
        scene.height(),
        scene.width(),
        a.init_depth,
        cfgs.activation,
    )?;

    // all runs complete before anything is written
    let mut rows = Vec::with_capacity(kinds.len());
    for &kind in &kinds {
        let (field, _) = optimize_depth(&scene, &init, kind, &adam, &spec.rig, &cfgs)?;
        let report = evaluate(&field.depth_map(), &scene, &spec.rig)?;
        rows.push(vec![
            kind.to_string(),
            format_float(report.abs_rel),
            format_float(report.sq_rel),
            format_float(report.rmse),
            format_float(report.rmse_log),
            format_float(report.delta1),
            format_float(report.delta2),
            format_float(report.delta3),
        ]);
    }
    write_csv(
        &a.out,
        "loss,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3",
        &rows,
    )?;

    let mut manifest = Manifest::new("ablate");
    manifest.push("scene", a.scene.display().to_string());
    manifest.extend("loss_config", &cfgs.to_kv_pairs());
    manifest.push("losses", a.losses.clone());
    manifest.push("init_depth", format_float(a.init_depth));
    manifest.push("lr", format_float(a.lr));
    manifest.push("steps", a.steps.to_string());
    manifest.checksum_file(&a.out)?;
    manifest.write(&manifest_path(&a.out, false))
}

fn grad_check_cmd(a: GradCheckArgs) -> depthlab::Result<()> {
    let (spec, scene) = load_scene(&a.scene)?;
    let cfgs = load_configs(&a.config)?;
    let kind = parse_loss(&a.loss)?;
    if !(a.sigma_lo >= 0.0 && a.sigma_hi <= 1.0 && a.sigma_lo < a.sigma_hi) {
        return Err(Error::Config(format!(
            "sigma range [{}, {}] must sit inside [0,1]",
            a.sigma_lo, a.sigma_hi
        )));
    }
    let mut rng = depthlab::rng::Prng::new(a.seed);
    let sigma = Raster::from_fn(scene.height(), scene.width(), 1, |_, _, _| {
        rng.uniform_in(a.sigma_lo, a.sigma_hi)
    })?;
    let field = DepthField::from_sigma(sigma, cfgs.activation)?;
    let samples = grad_check_samples(
        kind, &scene, &field, &spec.rig, &cfgs, a.trials, a.h_rel, a.seed,
    )?;
    let worst = samples
        .iter()
        .map(|s| relative_error(s.analytic, s.finite_diff))
        .fold(0.0, f64::max);
    println!("max_rel_error={worst}");

    if let Some(out) = &a.out {
        let rows: Vec<Vec<String>> = samples
            .iter()
            .map(|s| {
                vec![
                    s.row.to_string(),
                    s.col.to_string(),
                    format_float(s.analytic),
                    format_float(s.finite_diff),
                    format_float(relative_error(s.analytic, s.finite_diff)),
                ]
            })
            .collect();
        write_csv(out, "row,col,analytic,finite_diff,rel_error", &rows)?;
        let mut manifest = Manifest::new("grad-check");
        manifest.push("scene", a.scene.display().to_string());
        manifest.extend("loss_config", &cfgs.to_kv_pairs());
        manifest.push("loss", kind.to_string());
        manifest.push("trials", a.trials.to_string());
        manifest.push("h_rel", format_float(a.h_rel));
        manifest.push("seed", a.seed.to_string());
        manifest.push("max_rel_error", format_float(worst));
        manifest.checksum_file(out)?;
        manifest.write(&manifest_path(out, false))?;
    }
    Ok(())
}

fn warp_cmd(a: WarpArgs) -> depthlab::Result<()> {
    let (spec, scene) = load_scene(&a.scene)?;
    let cfgs = load_configs(&a.config)?;
    let depth = match &a.depth {
        None => scene.depth_gt.clone(),
        Some(path) => DepthMap::from_raster(read_pfm(path)?)?,
    };
    let result = inverse_warp(&scene.source, &depth, &spec.rig, cfgs.loss.padding)?;

    std::fs::create_dir_all(&a.out)?;
    write_pfm(&a.out.join("warped.pfm"), &result.image)?;
    write_pfm(&a.out.join("in_bounds.pfm"), &result.in_bounds)?;
    if a.pgm {
        write_pgm(&a.out.join("warped.pgm"), &result.image)?;
    }

    let mut manifest = Manifest::new("warp");
    manifest.push("scene", a.scene.display().to_string());
    manifest.push(
        "depth",
        a.depth
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "ground_truth".into()),
    );
    manifest.push("padding", cfgs.loss.padding.to_string());
    for name in ["warped.pfm", "in_bounds.pfm"] {
        manifest.checksum_file(&a.out.join(name))?;
    }
    manifest.write(&manifest_path(&a.out, true))
}

fn eval_cmd(a: EvalArgs) -> depthlab::Result<()> {
    let (spec, scene) = load_scene(&a.scene)?;
    let depth = DepthMap::from_raster(read_pfm(&a.depth)?)?;
    let report = evaluate(&depth, &scene, &spec.rig)?;

    let rows: Vec<Vec<String>> = report
        .rows()
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), format_float(v)])
        .collect();
    write_csv(&a.out, "metric,value", &rows)?;

    let mut manifest = Manifest::new("eval");
    manifest.push("scene", a.scene.display().to_string());
    manifest.push("depth", a.depth.display().to_string());
    manifest.checksum_file(&a.out)?;
    manifest.write(&manifest_path(&a.out, false))
}
