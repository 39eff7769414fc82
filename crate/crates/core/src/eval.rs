//! Quality metrics: PSNR, SSIM, temporal profiles and a flicker score.

use image::RgbImage;

use crate::align::{register, AffineParams, AlignConfig, PixelAffine};
use crate::error::{ensure_dims, Error, Result};
use crate::media::{quantize, Frame, HoleMask, VideoClip, VisibilityMap};

/// Reported PSNR for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio with peak 1.0, over the whole frame or over
/// the pixels flagged in `region`.
pub fn psnr(a: &Frame, b: &Frame, region: Option<&HoleMask>) -> Result<f64> {
    ensure_dims(a.dims(), b.dims())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (pa, pb)) in a.data().chunks_exact(3).zip(b.data().chunks_exact(3)).enumerate() {
        if let Some(r) = region {
            if r.data()[i] == 0 {
                continue;
            }
        }
        sum += pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        count += 3;
    }
    if let Some(r) = region {
        ensure_dims(a.dims(), r.dims())?;
    }
    if count == 0 {
        return Err(Error::InvalidInput("PSNR region is empty".into()));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over valid window positions only.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                s += kv * tmp[(y + j) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Single-scale SSIM (11x11 Gaussian window, sigma 1.5, dynamic range 1),
/// averaged over valid window positions and then over channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    ensure_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for c in 0..3 {
        let x = a.channel(c).data;
        let y = b.channel(c).data;
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let sxx = filter_valid(&xx, w, h, &k);
        let syy = filter_valid(&yy, w, h, &k);
        let sxy = filter_valid(&xy, w, h, &k);
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (m1, m2) = (mx[i], my[i]);
            let v1 = sxx[i] - m1 * m1;
            let v2 = syy[i] - m2 * m2;
            let cov = sxy[i] - m1 * m2;
            acc += ((2.0 * m1 * m2 + c1) * (2.0 * cov + c2))
                / ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / 3.0)
}

/// One pixel row per frame, stacked in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfile {
    pub width: usize,
    pub frames: usize,
    /// Interleaved RGB, `frames` rows of `width` pixels.
    pub data: Vec<f64>,
}

impl TemporalProfile {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width * 3..(t + 1) * self.width * 3]
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        RgbImage::from_raw(self.width as u32, self.frames as u32, bytes)
            .expect("profile buffer size")
    }
}

pub fn temporal_profile(clip: &VideoClip, row: usize) -> Result<TemporalProfile> {
    let (w, h) = clip.dims();
    if row >= h {
        return Err(Error::InvalidInput(format!("row {row} outside frame height {h}")));
    }
    let mut data = Vec::with_capacity(clip.len() * w * 3);
    for f in clip.frames() {
        data.extend_from_slice(&f.data()[row * w * 3..(row + 1) * w * 3]);
    }
    Ok(TemporalProfile {
        width: w,
        frames: clip.len(),
        data,
    })
}

/// Mean over the union of the regions of the per-pixel temporal standard
/// deviation (population, averaged over channels) after aligning every frame
/// to the first one.
///
/// Aligned frames are sampled with nearest-neighbour lookup so that
/// interpolation does not smooth the values being compared. Regions are
/// carried into the first frame's coordinates with the same maps. At each
/// pixel only frames whose aligned sample lies inside the image contribute.
pub fn flicker_metric(clip: &VideoClip, regions: &[HoleMask], cfg: &AlignConfig) -> Result<f64> {
    if regions.len() != clip.len() {
        return Err(Error::CountMismatch {
            frames: clip.len(),
            masks: regions.len(),
        });
    }
    let dims = clip.dims();
    for r in regions {
        ensure_dims(dims, r.dims())?;
    }
    let (w, h) = dims;
    let first = clip.frame(0);
    let ones = VisibilityMap::ones(w, h);
    let mut maps = vec![PixelAffine::IDENTITY];
    for t in 1..clip.len() {
        let reg = register(first, &ones, clip.frame(t), &ones, cfg, &AffineParams::IDENTITY)?;
        maps.push(reg.params.to_pixel(dims, dims));
    }

    let lookup = |map: &PixelAffine, x: usize, y: usize| -> Option<usize> {
        let (sx, sy) = map.apply(x as f64, y as f64);
        let (rx, ry) = (sx.round(), sy.round());
        (rx >= 0.0 && ry >= 0.0 && rx < w as f64 && ry < h as f64)
            .then(|| ry as usize * w + rx as usize)
    };

    let mut sum = 0.0;
    let mut count = 0usize;
    let mut samples: Vec<[f64; 3]> = Vec::with_capacity(clip.len());
    for y in 0..h {
        for x in 0..w {
            samples.clear();
            let mut in_union = false;
            for (t, map) in maps.iter().enumerate() {
                if let Some(i) = lookup(map, x, y) {
                    in_union |= regions[t].data()[i] == 1;
                    let d = &clip.frame(t).data()[i * 3..i * 3 + 3];
                    samples.push([d[0], d[1], d[2]]);
                }
            }
            if !in_union {
                continue;
            }
            count += 1;
            let n = samples.len() as f64;
            let mut sd = 0.0;
            for c in 0..3 {
                let mean = samples.iter().map(|s| s[c]).sum::<f64>() / n;
                let var = samples.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / n;
                sd += var.sqrt();
            }
            sum += sd / 3.0;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("flicker region union is empty".into()));
    }
    Ok(sum / count as f64)
}
