//! Synthetic training and evaluation clips built from still images and
//! object masks: a random-walk camera over a source image, a moving object
//! mask, and the composite with zeroed holes.

use rand::Rng;

use crate::align::{PixelAffine, Raster};
use crate::error::{Error, Result};
use crate::media::{Frame, HoleMask, VideoClip};

const MAX_ORIGIN_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_frames: usize,
    pub out_size: usize,
    /// Per-step rotation range in degrees (symmetric).
    pub step_rotation_deg: f64,
    pub step_shear_deg: f64,
    /// Per-step relative scale range, e.g. 0.02 for 0.98..1.02.
    pub step_scale: f64,
    pub step_translation_px: f64,
    /// Largest side of the object's bounding box as a fraction of `out_size`.
    pub mask_scale_max: f64,
    pub mask_step_translation_px: f64,
    pub mask_step_rotation_deg: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_frames: 5,
            out_size: 256,
            step_rotation_deg: 2.0,
            step_shear_deg: 2.0,
            step_scale: 0.02,
            step_translation_px: 5.0,
            mask_scale_max: 0.5,
            mask_step_translation_px: 5.0,
            mask_step_rotation_deg: 2.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::Config("synth.n_frames must be at least 1".into()));
        }
        if self.out_size < crate::media::MIN_FRAME_SIDE {
            return Err(Error::Config(format!(
                "synth.out_size must be at least {}",
                crate::media::MIN_FRAME_SIDE
            )));
        }
        let ranges = [
            self.step_rotation_deg,
            self.step_shear_deg,
            self.step_scale,
            self.step_translation_px,
            self.mask_step_translation_px,
            self.mask_step_rotation_deg,
        ];
        if ranges.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config("synth step ranges must be finite and non-negative".into()));
        }
        if self.step_scale >= 1.0 {
            return Err(Error::Config("synth.step_scale must be below 1".into()));
        }
        if !(self.mask_scale_max > 0.0 && self.mask_scale_max <= 1.0) {
            return Err(Error::Config("synth.mask_scale_max must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Background frames and, for each, the map from its pixels to source pixels.
#[derive(Debug, Clone)]
pub struct Background {
    pub frames: Vec<Frame>,
    pub viewports: Vec<PixelAffine>,
}

impl Background {
    /// Pixel map from frame `target` to frame `reference`, so that
    /// `frames[reference]` sampled through it reproduces `frames[target]`.
    pub fn relative_map(&self, target: usize, reference: usize) -> PixelAffine {
        let inv = self.viewports[reference]
            .inverse()
            .expect("viewport maps are invertible");
        inv.then_after(&self.viewports[target])
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
    if range == 0.0 {
        0.0
    } else {
        rng.random_range(-range..=range)
    }
}

fn random_step<R: Rng + ?Sized>(rng: &mut R, p: &SynthParams) -> PixelAffine {
    let c = (p.out_size as f64 - 1.0) / 2.0;
    let angle = symmetric(rng, p.step_rotation_deg).to_radians();
    let shear = symmetric(rng, p.step_shear_deg).to_radians();
    let scale = 1.0 + symmetric(rng, p.step_scale);
    let dx = symmetric(rng, p.step_translation_px);
    let dy = symmetric(rng, p.step_translation_px);
    PixelAffine::about_center(c, c, angle, scale, shear, dx, dy)
}

fn corners_inside(map: &PixelAffine, out: usize, w: usize, h: usize) -> bool {
    let e = (out - 1) as f64;
    [(0.0, 0.0), (e, 0.0), (0.0, e), (e, e)].iter().all(|&(x, y)| {
        let (sx, sy) = map.apply(x, y);
        sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64
    })
}

/// Random crop of `source` followed by a compounding random walk of
/// rotation, shear, scale and translation steps.
pub fn synth_background<R: Rng + ?Sized>(
    source: &Frame,
    p: &SynthParams,
    rng: &mut R,
) -> Result<Background> {
    p.validate()?;
    let (w, h) = source.dims();
    let out = p.out_size;
    if w < out || h < out {
        return Err(Error::InvalidInput(format!(
            "source {w}x{h} is smaller than the {out}x{out} output"
        )));
    }
    let steps: Vec<PixelAffine> = (1..p.n_frames).map(|_| random_step(rng, p)).collect();
    // viewports relative to a crop origin at (0, 0)
    let mut relative = vec![PixelAffine::IDENTITY];
    for s in &steps {
        let last = *relative.last().expect("non-empty");
        relative.push(last.then_after(s));
    }

    let mut origin = None;
    for _ in 0..MAX_ORIGIN_ATTEMPTS {
        let ox = rng.random_range(0..=w - out) as f64;
        let oy = rng.random_range(0..=h - out) as f64;
        let shift = PixelAffine::translation(ox, oy);
        if relative
            .iter()
            .all(|r| corners_inside(&shift.then_after(r), out, w, h))
        {
            origin = Some(shift);
            break;
        }
    }
    let Some(shift) = origin else {
        return Err(Error::Unsatisfiable(format!(
            "no crop origin keeps all {} viewports inside the source after {MAX_ORIGIN_ATTEMPTS} attempts",
            p.n_frames
        )));
    };

    let src = Raster::from_frame(source);
    let mut frames = Vec::with_capacity(p.n_frames);
    let mut viewports = Vec::with_capacity(p.n_frames);
    let mut buf = [0.0; 3];
    for r in &relative {
        let map = shift.then_after(r);
        frames.push(Frame::from_fn(out, out, |x, y| {
            let (sx, sy) = map.apply(x as f64, y as f64);
            src.sample(sx, sy, &mut buf);
            buf
        }));
        viewports.push(map);
    }
    Ok(Background { frames, viewports })
}

fn bounding_box(m: &HoleMask) -> Option<(usize, usize, usize, usize)> {
    let (w, h) = m.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if m.is_hole(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    (x0 <= x1).then_some((x0, y0, x1, y1))
}

/// Moving object masks: the object is shrunk so its bounding box is at most
/// `mask_scale_max * out_size`, placed at random, then moved by a random
/// walk of translations and rotations. Its center is clamped so that the
/// whole object stays inside the frame.
pub fn synth_mask_sequence<R: Rng + ?Sized>(
    object: &HoleMask,
    p: &SynthParams,
    rng: &mut R,
) -> Result<Vec<HoleMask>> {
    p.validate()?;
    let Some((x0, y0, x1, y1)) = bounding_box(object) else {
        return Err(Error::InvalidInput("object mask has no hole pixels".into()));
    };
    let out = p.out_size as f64;
    let bw = (x1 - x0 + 1) as f64;
    let bh = (y1 - y0 + 1) as f64;
    let side = rng.random_range(0.5..=1.0) * p.mask_scale_max * out;
    let scale = side / bw.max(bh);
    let obj_c = ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0);
    // radius of the scaled bounding box around its center
    let radius = 0.5 * scale * (bw * bw + bh * bh).sqrt();
    let (lo, hi) = if 2.0 * radius <= out - 1.0 {
        (radius, out - 1.0 - radius)
    } else {
        ((out - 1.0) / 2.0, (out - 1.0) / 2.0)
    };
    let place = |v: f64| v.clamp(lo, hi);
    let mut cx = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let mut cy = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let mut angle: f64 = 0.0;

    let src = Raster {
        width: object.width(),
        height: object.height(),
        channels: 1,
        data: object.data().iter().map(|&v| v as f64).collect(),
    };
    let n = p.out_size;
    let mut masks = Vec::with_capacity(p.n_frames);
    for k in 0..p.n_frames {
        if k > 0 {
            cx = place(cx + symmetric(rng, p.mask_step_translation_px));
            cy = place(cy + symmetric(rng, p.mask_step_translation_px));
            angle += symmetric(rng, p.mask_step_rotation_deg).to_radians();
        }
        // output pixel -> object pixel
        let (s, c) = angle.sin_cos();
        let map = PixelAffine {
            m: [
                [c / scale, s / scale, obj_c.0 - (c * cx + s * cy) / scale],
                [-s / scale, c / scale, obj_c.1 - (-s * cx + c * cy) / scale],
            ],
        };
        let mut cover = vec![0.0; n * n];
        let mut buf = [0.0];
        for y in 0..n {
            for x in 0..n {
                let (sx, sy) = map.apply(x as f64, y as f64);
                if src.in_bounds(sx, sy) {
                    src.sample(sx, sy, &mut buf);
                    cover[y * n + x] = buf[0];
                }
            }
        }
        let mut mask = HoleMask::from_fn(n, n, |x, y| cover[y * n + x] >= 0.5);
        if mask.is_empty() {
            // thin objects can vanish when shrunk; keep any covered pixel
            mask = HoleMask::from_fn(n, n, |x, y| cover[y * n + x] > 0.0);
        }
        masks.push(mask);
    }
    Ok(masks)
}

/// Union of a few random ellipses, a stand-in object when no mask library
/// is available.
pub fn random_object_mask<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> HoleMask {
    let count = rng.random_range(1..=4);
    let blobs: Vec<(f64, f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let cx = rng.random_range(0.3..0.7) * width as f64;
            let cy = rng.random_range(0.3..0.7) * height as f64;
            let rx = rng.random_range(0.1..0.3) * width as f64;
            let ry = rng.random_range(0.1..0.3) * height as f64;
            let a = rng.random_range(0.0..std::f64::consts::PI);
            (cx, cy, rx.max(1.0), ry.max(1.0), a)
        })
        .collect();
    HoleMask::from_fn(width, height, |x, y| {
        blobs.iter().any(|&(cx, cy, rx, ry, a)| {
            let (s, c) = a.sin_cos();
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let u = (c * dx + s * dy) / rx;
            let v = (-s * dx + c * dy) / ry;
            u * u + v * v <= 1.0
        })
    })
}

/// `(input, truth)`: truth carries empty masks, input has hole pixels set
/// to 0 and the masks attached.
pub fn composite_holes(bg: &[Frame], masks: &[HoleMask]) -> Result<(VideoClip, VideoClip)> {
    if bg.len() != masks.len() {
        return Err(Error::CountMismatch {
            frames: bg.len(),
            masks: masks.len(),
        });
    }
    let truth = VideoClip::unmasked(bg.to_vec())?;
    let mut frames = Vec::with_capacity(bg.len());
    for (f, m) in bg.iter().zip(masks) {
        crate::error::ensure_dims(f.dims(), m.dims())?;
        let (w, h) = f.dims();
        frames.push(Frame::from_fn(w, h, |x, y| {
            if m.is_hole(x, y) {
                [0.0; 3]
            } else {
                f.pixel(x, y)
            }
        }));
    }
    let input = VideoClip::new(frames, masks.to_vec())?;
    Ok((input, truth))
}

/// A complete synthetic sample from one source image and one object mask.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub input: VideoClip,
    pub truth: VideoClip,
    pub background: Background,
}

/// Background walk, mask walk and composite, all driven by one random stream.
pub fn synth_sample<R: Rng + ?Sized>(
    source: &Frame,
    object: &HoleMask,
    p: &SynthParams,
    rng: &mut R,
) -> Result<SynthSample> {
    let background = synth_background(source, p, rng)?;
    let masks = synth_mask_sequence(object, p, rng)?;
    let (input, truth) = composite_holes(&background.frames, &masks)?;
    Ok(SynthSample {
        input,
        truth,
        background,
    })
}
