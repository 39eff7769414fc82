//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or input
//! data error, 3 numeric failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{register, AffineParams};
use crate::config::Settings;
use crate::datasynth::synth_sample;
use crate::error::{Error, Result};
use crate::eval::{psnr, ssim, temporal_profile};
use crate::matcher::SoftmaxMode;
use crate::media::{
    list_images, load_clip, load_frame, load_frames, load_mask, load_masks, mask_to_visibility,
    save_frames, save_masks, save_rgb, HoleMask, VideoClip, VisibilityMap,
};
use crate::pipeline::inpaint_video;

#[derive(Debug, Parser)]
#[command(name = "vidfill", version, about = "Copy-and-paste video inpainting")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log per-frame progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Complete the holes of a frame sequence.
    Inpaint(InpaintArgs),
    /// Generate a synthetic holed clip with ground truth.
    Synth(SynthArgs),
    /// Score predicted frames against ground truth.
    Eval(EvalArgs),
    /// Register one frame onto another and dump the optimizer trace.
    AlignDebug(AlignDebugArgs),
    /// Stack one pixel row of every frame into an image.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
struct InpaintArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_bidirectional: bool,
    #[arg(long)]
    no_ref_update: bool,
    #[arg(long, value_parser = ["masked", "normal"])]
    softmax: Option<String>,
    /// Per-frame diagnostics CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    object_masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Hole masks; adds hole-region PSNR.
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AlignDebugArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    mask_t: Option<PathBuf>,
    #[arg(long)]
    mask_r: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    row: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the tool on `args` (without the program name) and returns the exit
/// code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("vidfill"))
        .chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    let result = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Error::Config(format!("cannot start thread pool: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("vidfill: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Inpaint(a) => cmd_inpaint(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::AlignDebug(a) => cmd_align_debug(a),
        Command::Profile(a) => cmd_profile(a),
    }
}

fn settings(path: Option<&Path>) -> Result<Settings> {
    match path {
        Some(p) => Settings::load(p),
        None => Ok(Settings::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn cmd_inpaint(a: &InpaintArgs) -> Result<()> {
    let mut cfg = settings(a.config.as_deref())?.inpaint;
    if a.no_bidirectional {
        cfg.bidirectional = false;
    }
    if a.no_ref_update {
        cfg.reference_update = false;
    }
    if let Some(s) = &a.softmax {
        cfg.softmax = s.parse::<SoftmaxMode>()?;
    }
    let clip = load_clip(&a.frames, &a.masks)?;
    log::info!("inpainting {} frames of {:?}", clip.len(), clip.dims());
    let (out, report) = inpaint_video(&clip, &cfg)?;
    save_frames(out.frames(), &a.out)?;
    if let Some(path) = &a.report {
        write_text(path, &report.to_csv())?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut p = settings(a.config.as_deref())?.synth;
    p.seed = a.seed;
    let images = list_images(&a.images)?;
    if images.is_empty() {
        return Err(Error::NoFrames(a.images.clone()));
    }
    let objects = list_images(&a.object_masks)?;
    if objects.is_empty() {
        return Err(Error::NoFrames(a.object_masks.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let image_path = &images[rng.random_range(0..images.len())];
    let object_path = &objects[rng.random_range(0..objects.len())];
    let source = load_frame(image_path)?;
    let object = load_mask(object_path)?;
    let sample = synth_sample(&source, &object, &p, &mut rng)?;

    save_frames(sample.input.frames(), &a.out.join("input_frames"))?;
    save_masks(sample.input.masks(), &a.out.join("input_masks"))?;
    save_frames(sample.truth.frames(), &a.out.join("truth_frames"))?;

    let name = |path: &Path| {
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let mut m = String::new();
    let _ = writeln!(m, "source = {}", name(image_path));
    let _ = writeln!(m, "object_mask = {}", name(object_path));
    let _ = writeln!(m, "synth.seed = {}", p.seed);
    let _ = writeln!(m, "synth.n_frames = {}", p.n_frames);
    let _ = writeln!(m, "synth.out_size = {}", p.out_size);
    let _ = writeln!(m, "synth.rotation_deg = {}", p.step_rotation_deg);
    let _ = writeln!(m, "synth.shear_deg = {}", p.step_shear_deg);
    let _ = writeln!(m, "synth.scale = {}", p.step_scale);
    let _ = writeln!(m, "synth.translation_px = {}", p.step_translation_px);
    let _ = writeln!(m, "synth.mask_scale_max = {}", p.mask_scale_max);
    let _ = writeln!(m, "synth.mask_translation_px = {}", p.mask_step_translation_px);
    let _ = writeln!(m, "synth.mask_rotation_deg = {}", p.mask_step_rotation_deg);
    write_text(&a.out.join("manifest.txt"), &m)
}

fn fmt_db(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pred = load_frames(&a.pred)?;
    let truth = load_frames(&a.truth)?;
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted frames but {} ground-truth frames",
            pred.len(),
            truth.len()
        )));
    }
    let masks: Option<Vec<HoleMask>> = a.masks.as_deref().map(load_masks).transpose()?;
    if let Some(m) = &masks {
        if m.len() != pred.len() {
            return Err(Error::CountMismatch {
                frames: pred.len(),
                masks: m.len(),
            });
        }
    }
    let mut csv = String::from("frame,psnr_full,psnr_hole,ssim\n");
    let (mut full, mut hole, mut ss) = (Vec::new(), Vec::new(), Vec::new());
    for (t, (p, g)) in pred.iter().zip(&truth).enumerate() {
        let pf = psnr(p, g, None)?;
        let ph = match &masks {
            Some(m) if !m[t].is_empty() => Some(psnr(p, g, Some(&m[t]))?),
            _ => None,
        };
        let s = ssim(p, g)?;
        let _ = writeln!(csv, "{t},{:.4},{},{s:.6}", pf, fmt_db(ph));
        full.push(pf);
        hole.extend(ph);
        ss.push(s);
    }
    let _ = writeln!(
        csv,
        "mean,{},{},{}",
        fmt_db(mean(&full)),
        fmt_db(mean(&hole)),
        mean(&ss).map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
    );
    write_text(&a.out, &csv)
}

fn optional_visibility(path: Option<&Path>, dims: (usize, usize)) -> Result<VisibilityMap> {
    match path {
        Some(p) => {
            let m = load_mask(p)?;
            crate::error::ensure_dims(dims, m.dims())?;
            Ok(mask_to_visibility(&m))
        }
        None => Ok(VisibilityMap::ones(dims.0, dims.1)),
    }
}

fn cmd_align_debug(a: &AlignDebugArgs) -> Result<()> {
    let cfg = settings(a.config.as_deref())?.inpaint.align;
    let target = load_frame(&a.target)?;
    let reference = load_frame(&a.reference)?;
    let v_t = optional_visibility(a.mask_t.as_deref(), target.dims())?;
    let v_r = optional_visibility(a.mask_r.as_deref(), reference.dims())?;
    let reg = register(&target, &v_t, &reference, &v_r, &cfg, &AffineParams::IDENTITY)?;
    let mut csv = String::from("level,iter,objective,a11,a12,a21,a22,tx,ty\n");
    for e in &reg.trace {
        let _ = writeln!(csv, "{},{},{:.9},,,,,,", e.level, e.iter, e.objective);
    }
    let p = reg.params.to_array();
    let _ = writeln!(
        csv,
        "final,,{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
        reg.objective, p[0], p[1], p[2], p[3], p[4], p[5]
    );
    write_text(&a.out, &csv)
}

fn cmd_profile(a: &ProfileArgs) -> Result<()> {
    let clip = VideoClip::unmasked(load_frames(&a.frames)?)?;
    let profile = temporal_profile(&clip, a.row)?;
    ensure_parent(&a.out)?;
    save_rgb(&profile.to_rgb8(), &a.out)
}
