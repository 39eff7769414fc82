//! Frame-by-frame completion: align references, match, paste, diffuse, then
//! update references and blend a forward and a reverse pass.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::align::{register, warp_affine, AffineParams, AlignConfig, InitMode};
use crate::error::{ensure_dims, Error, Result};
use crate::features::{normalize_features, Encoder, EncoderSpec};
use crate::matcher::{context_match, MatchInput, SoftmaxMode};
use crate::media::{
    downsample_visibility, mask_to_visibility, Frame, HoleMask, VideoClip, VisibilityMap,
};
use crate::paste::{
    composite_paste, diffusion_fill, upsample_weights, upsample_weights_unmasked, PasteInput,
};

/// How candidate reference frames are spaced in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefStride {
    /// Every other frame is a candidate.
    #[default]
    Auto,
    /// Only frames whose index is congruent to the target modulo `s`.
    Every(usize),
}

impl std::str::FromStr for RefStride {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Self::Every(n)),
            _ => Err(Error::Config(format!("ref_stride must be `auto` or a positive integer, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for RefStride {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Every(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintConfig {
    pub max_refs: usize,
    pub ref_stride: RefStride,
    pub encoder: EncoderSpec,
    pub align: AlignConfig,
    pub bidirectional: bool,
    pub reference_update: bool,
    pub softmax: SoftmaxMode,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            max_refs: 10,
            ref_stride: RefStride::Auto,
            encoder: EncoderSpec::default(),
            align: AlignConfig::default(),
            bidirectional: true,
            reference_update: true,
            softmax: SoftmaxMode::Masked,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_refs == 0 {
            return Err(Error::Config("max_refs must be at least 1".into()));
        }
        self.encoder.validate()?;
        self.align.validate()
    }
}

/// Per-reference diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RefReport {
    pub index: usize,
    pub theta: f64,
    pub align_objective: f64,
    pub usable: bool,
}

/// Diagnostics for one completed frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameReport {
    pub frame: usize,
    pub refs: Vec<RefReport>,
    /// Share of hole pixels that no reference could supply.
    pub invisible_fraction: f64,
    pub ms_align: f64,
    pub ms_match: f64,
    pub ms_paste: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineReport {
    /// One entry per frame, in frame order.
    pub forward: Vec<FrameReport>,
    /// Present when the reverse pass ran; in frame order.
    pub reverse: Option<Vec<FrameReport>>,
}

impl PipelineReport {
    /// Forward-pass rows, one per (frame, reference); frames without
    /// references get a single row with `NA` reference fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "frame,ref_index,theta,align_objective,invisible_fraction,ms_align,ms_match,ms_paste\n",
        );
        for f in &self.forward {
            let tail = format!(
                "{:.6},{:.3},{:.3},{:.3}",
                f.invisible_fraction, f.ms_align, f.ms_match, f.ms_paste
            );
            if f.refs.is_empty() {
                let _ = writeln!(s, "{},NA,NA,NA,{tail}", f.frame);
            }
            for r in &f.refs {
                let _ = writeln!(
                    s,
                    "{},{},{:.6},{:.6},{tail}",
                    f.frame, r.index, r.theta, r.align_objective
                );
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reference indices for target `t` in a clip of `n` frames: all candidates
/// when they fit in `max_refs`, otherwise `max_refs` of them evenly spread.
pub fn select_references(n: usize, t: usize, max_refs: usize, stride: RefStride) -> Result<Vec<usize>> {
    if t >= n {
        return Err(Error::InvalidInput(format!("frame {t} outside clip of {n}")));
    }
    let candidates: Vec<usize> = match stride {
        RefStride::Auto => (0..n).filter(|&j| j != t).collect(),
        RefStride::Every(s) => (0..n).filter(|&j| j != t && j % s == t % s).collect(),
    };
    if candidates.len() <= max_refs {
        return Ok(candidates);
    }
    Ok((0..max_refs)
        .map(|k| candidates[k * candidates.len() / max_refs])
        .collect())
}

/// A reference already warped into the target's frame.
#[derive(Debug, Clone)]
pub struct AlignedReference {
    pub index: usize,
    pub frame: Frame,
    /// `V^{r->t}`: 1 where the warped reference holds known content.
    pub visibility: VisibilityMap,
    pub params: AffineParams,
    pub objective: f64,
}

/// Registers `reference` onto `target` and warps it.
pub fn align_reference(
    target: &Frame,
    target_hole: &HoleMask,
    reference: &Frame,
    reference_hole: &HoleMask,
    index: usize,
    cfg: &AlignConfig,
    init: &AffineParams,
) -> Result<AlignedReference> {
    let v_t = mask_to_visibility(target_hole);
    let v_r = mask_to_visibility(reference_hole);
    let reg = register(target, &v_t, reference, &v_r, cfg, init)?;
    let (frame, visibility) = warp_affine(reference, &v_r, &reg.params)?;
    Ok(AlignedReference {
        index,
        frame,
        visibility,
        params: reg.params,
        objective: reg.objective,
    })
}

/// Warps `reference` with known parameters.
pub fn warp_reference(
    reference: &Frame,
    reference_hole: &HoleMask,
    index: usize,
    params: &AffineParams,
) -> Result<AlignedReference> {
    let (frame, visibility) = warp_affine(reference, &mask_to_visibility(reference_hole), params)?;
    Ok(AlignedReference {
        index,
        frame,
        visibility,
        params: *params,
        objective: f64::NAN,
    })
}

/// Result of completing a single frame from aligned references.
#[derive(Debug, Clone)]
pub struct Completion {
    pub frame: Frame,
    pub theta: Vec<f64>,
    pub usable: Vec<bool>,
    /// Hole pixels filled by diffusion.
    pub never_visible: HoleMask,
    pub ms_match: f64,
    pub ms_paste: f64,
}

/// Encode, match, upsample, paste and diffuse. Pixels outside `hole` are
/// copied from `target` unchanged.
pub fn complete_frame(
    target: &Frame,
    hole: &HoleMask,
    refs: &[AlignedReference],
    encoder: &Encoder,
    mode: SoftmaxMode,
) -> Result<Completion> {
    let dims = target.dims();
    ensure_dims(dims, hole.dims())?;
    for r in refs {
        ensure_dims(dims, r.frame.dims())?;
        ensure_dims(dims, r.visibility.dims())?;
    }
    let (w, h) = dims;
    if hole.is_empty() {
        return Ok(Completion {
            frame: target.clone(),
            theta: Vec::new(),
            usable: Vec::new(),
            never_visible: HoleMask::empty(w, h),
            ms_match: 0.0,
            ms_paste: 0.0,
        });
    }
    if refs.is_empty() {
        let t0 = Instant::now();
        let frame = diffusion_fill(target, hole)?;
        return Ok(Completion {
            frame,
            theta: Vec::new(),
            usable: Vec::new(),
            never_visible: hole.clone(),
            ms_match: 0.0,
            ms_paste: ms(t0),
        });
    }

    let t0 = Instant::now();
    let stride = encoder.spec().stride;
    let f_t = normalize_features(&encoder.encode(target, hole)?);
    let v_t_low = downsample_visibility(&mask_to_visibility(hole), stride)?;
    let mut ref_features = Vec::with_capacity(refs.len());
    let mut joint = Vec::with_capacity(refs.len());
    let mut ref_vis = Vec::with_capacity(refs.len());
    for r in refs {
        ref_features.push(normalize_features(&encoder.encode(&r.frame, &r.visibility.to_hole_mask())?));
        let v_low = downsample_visibility(&r.visibility, stride)?;
        joint.push(v_t_low.product(&v_low)?);
        ref_vis.push(v_low);
    }
    let matched = context_match(
        &MatchInput {
            target_features: f_t,
            ref_features,
            joint_visibility: joint,
            ref_visibility: ref_vis,
        },
        mode,
    )?;
    let ms_match = ms(t0);

    let t1 = Instant::now();
    let warped_vis: Vec<VisibilityMap> = refs.iter().map(|r| r.visibility.clone()).collect();
    let weights = match mode {
        SoftmaxMode::Masked => upsample_weights(&matched.c_match, &warped_vis, stride)?,
        SoftmaxMode::Normal => upsample_weights_unmasked(&matched.c_match, dims, stride)?,
    };
    let input = PasteInput {
        target: target.clone(),
        hole: hole.clone(),
        warped_refs: refs.iter().map(|r| r.frame.clone()).collect(),
        warped_vis,
        c_match_lowres: matched.c_match,
        stride,
    };
    let (pasted, never) = composite_paste(&input, &weights)?;
    let never_visible = HoleMask::from_fn(w, h, |x, y| never.get(x, y) > 0.0);
    let frame = diffusion_fill(&pasted, &never_visible)?;
    Ok(Completion {
        frame,
        theta: matched.theta,
        usable: matched.usable,
        never_visible,
        ms_match,
        ms_paste: ms(t1),
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Completes frame `t` of `clip` from its selected references. References
/// whose registration fails for lack of overlap or a degenerate fit are
/// dropped. `cache` holds the last estimate per reference index and is
/// updated in place.
pub fn inpaint_frame(
    clip: &VideoClip,
    t: usize,
    cfg: &InpaintConfig,
    encoder: &Encoder,
    cache: &mut HashMap<usize, AffineParams>,
) -> Result<(Frame, FrameReport)> {
    let n = clip.len();
    let target = clip.frame(t);
    let hole = clip.mask(t);
    let mut report = FrameReport {
        frame: t,
        ..Default::default()
    };
    if hole.is_empty() {
        return Ok((target.clone(), report));
    }

    let t0 = Instant::now();
    let indices = select_references(n, t, cfg.max_refs, cfg.ref_stride)?;
    let inits: Vec<AffineParams> = indices
        .iter()
        .map(|r| match cfg.align.init {
            InitMode::Previous => cache.get(r).copied().unwrap_or(AffineParams::IDENTITY),
            InitMode::Identity => AffineParams::IDENTITY,
        })
        .collect();
    let aligned: Vec<Result<AlignedReference>> = indices
        .par_iter()
        .zip(&inits)
        .map(|(&r, init)| align_reference(target, hole, clip.frame(r), clip.mask(r), r, &cfg.align, init))
        .collect();
    let mut refs = Vec::with_capacity(aligned.len());
    for (res, &r) in aligned.into_iter().zip(&indices) {
        match res {
            Ok(a) => {
                cache.insert(r, a.params);
                refs.push(a);
            }
            Err(e) if e.is_numeric() => {
                log::debug!("frame {t}: dropping reference {r}: {e}");
                cache.remove(&r);
            }
            Err(e) => return Err(e),
        }
    }
    report.ms_align = ms(t0);

    let done = complete_frame(target, hole, &refs, encoder, cfg.softmax)?;
    report.invisible_fraction = done.never_visible.hole_count() as f64 / hole.hole_count() as f64;
    report.ms_match = done.ms_match;
    report.ms_paste = done.ms_paste;
    report.refs = refs
        .iter()
        .enumerate()
        .map(|(k, r)| RefReport {
            index: r.index,
            theta: done.theta[k],
            align_objective: r.objective,
            usable: done.usable[k],
        })
        .collect();
    Ok((done.frame, report))
}

fn run_pass(
    clip: &VideoClip,
    order: impl Iterator<Item = usize>,
    cfg: &InpaintConfig,
    encoder: &Encoder,
) -> Result<(Vec<Frame>, Vec<FrameReport>)> {
    let mut state = clip.clone();
    let (w, h) = clip.dims();
    let mut outputs: Vec<Option<Frame>> = vec![None; clip.len()];
    let mut reports: Vec<Option<FrameReport>> = vec![None; clip.len()];
    let mut cache = HashMap::new();
    for t in order {
        let (frame, report) = inpaint_frame(&state, t, cfg, encoder, &mut cache)?;
        log::info!(
            "frame {t}: {} refs, {:.1}% never visible",
            report.refs.len(),
            100.0 * report.invisible_fraction
        );
        if cfg.reference_update {
            state.replace(t, frame.clone(), HoleMask::empty(w, h))?;
        }
        outputs[t] = Some(frame);
        reports[t] = Some(report);
    }
    Ok((
        outputs.into_iter().map(|f| f.expect("every frame visited")).collect(),
        reports.into_iter().map(|r| r.expect("every frame visited")).collect(),
    ))
}

/// `forward * t/n + reverse * (n-t)/n` for a 1-based frame index `t`.
pub fn blend_passes(forward: &Frame, reverse: &Frame, t: usize, n: usize) -> Result<Frame> {
    if t == 0 || t > n {
        return Err(Error::InvalidInput(format!("blend index {t} outside 1..={n}")));
    }
    ensure_dims(forward.dims(), reverse.dims())?;
    let wf = t as f64 / n as f64;
    let wr = (n - t) as f64 / n as f64;
    let data = forward
        .data()
        .iter()
        .zip(reverse.data())
        .map(|(a, b)| a * wf + b * wr)
        .collect();
    let (w, h) = forward.dims();
    Ok(Frame::from_raw_clamped(w, h, data))
}

/// Completes every frame. The forward pass visits frames in order; when
/// enabled, an independent reverse pass on the original input is blended
/// in. Output masks are empty and pixels outside the original holes are
/// the input's, bit for bit.
pub fn inpaint_video(clip: &VideoClip, cfg: &InpaintConfig) -> Result<(VideoClip, PipelineReport)> {
    cfg.validate()?;
    let encoder = Encoder::new(&cfg.encoder)?;
    let n = clip.len();
    let (fwd, rev) = if cfg.bidirectional {
        let (f, r) = rayon::join(
            || run_pass(clip, 0..n, cfg, &encoder),
            || run_pass(clip, (0..n).rev(), cfg, &encoder),
        );
        (f?, Some(r?))
    } else {
        (run_pass(clip, 0..n, cfg, &encoder)?, None)
    };
    let (fwd_frames, fwd_reports) = fwd;
    let (w, h) = clip.dims();
    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let blended = match &rev {
            Some((rev_frames, _)) => blend_passes(&fwd_frames[t], &rev_frames[t], t + 1, n)?,
            None => fwd_frames[t].clone(),
        };
        frames.push(restore_known(&blended, clip.frame(t), clip.mask(t)));
    }
    let out = VideoClip::new(frames, vec![HoleMask::empty(w, h); n])?;
    Ok((
        out,
        PipelineReport {
            forward: fwd_reports,
            reverse: rev.map(|(_, r)| r),
        },
    ))
}

fn restore_known(filled: &Frame, input: &Frame, hole: &HoleMask) -> Frame {
    let mut data = filled.data().to_vec();
    for (i, &m) in hole.data().iter().enumerate() {
        if m == 0 {
            data[i * 3..i * 3 + 3].copy_from_slice(&input.data()[i * 3..i * 3 + 3]);
        }
    }
    let (w, h) = filled.dims();
    Frame::from_raw_clamped(w, h, data)
}
