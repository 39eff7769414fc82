//! Pasting copied reference content into the target hole, plus harmonic
//! diffusion for pixels that no reference can supply.

use crate::align::Raster;
use crate::error::{ensure_dims, Error, Result};
use crate::media::{Frame, HoleMask, Plane, VisibilityMap};

/// Default stopping residual for [`diffusion_fill`].
pub const DIFFUSION_TOLERANCE: f64 = 1e-6;
/// Sweep cap for [`diffusion_fill`].
pub const DIFFUSION_MAX_SWEEPS: usize = 10_000;

/// Everything the paste stage needs at image and feature resolution.
#[derive(Debug, Clone)]
pub struct PasteInput {
    pub target: Frame,
    pub hole: HoleMask,
    pub warped_refs: Vec<Frame>,
    pub warped_vis: Vec<VisibilityMap>,
    pub c_match_lowres: Vec<Plane>,
    pub stride: usize,
}

impl PasteInput {
    fn validate(&self) -> Result<()> {
        let dims = self.target.dims();
        ensure_dims(dims, self.hole.dims())?;
        if self.warped_refs.len() != self.warped_vis.len()
            || self.warped_refs.len() != self.c_match_lowres.len()
        {
            return Err(Error::InvalidInput("reference list lengths differ".into()));
        }
        for (f, v) in self.warped_refs.iter().zip(&self.warped_vis) {
            ensure_dims(dims, f.dims())?;
            ensure_dims(dims, v.dims())?;
        }
        Ok(())
    }
}

/// Per-reference weights at image resolution and the matching never-visible mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FullResWeights {
    pub weights: Vec<Plane>,
    /// `1 - sum_r weights_r`.
    pub c_mask: Plane,
}

fn check_stride(low: (usize, usize), full: (usize, usize), stride: usize) -> Result<()> {
    if stride == 0 || full.0.div_ceil(stride) != low.0 || full.1.div_ceil(stride) != low.1 {
        return Err(Error::InvalidInput(format!(
            "weight map {low:?} does not match image {full:?} at stride {stride}"
        )));
    }
    Ok(())
}

fn bilinear_upsample(p: &Plane, stride: usize, w: usize, h: usize) -> Plane {
    let src = Raster {
        width: p.width,
        height: p.height,
        channels: 1,
        data: p.data.clone(),
    };
    let s = stride as f64;
    let mut out = Plane::new(w, h, 0.0);
    let mut buf = [0.0];
    for y in 0..h {
        let sy = (y as f64 + 0.5) / s - 0.5;
        for x in 0..w {
            let sx = (x as f64 + 0.5) / s - 0.5;
            src.sample(sx, sy, &mut buf);
            out.data[y * w + x] = buf[0];
        }
    }
    out
}

/// Bilinear upsampling of the match weights, zeroed where the full-resolution
/// warped reference is invisible, then renormalized per pixel.
///
/// A pixel whose visible references all received zero upsampled weight (this
/// happens along hole borders, where the feature-level visibility is more
/// conservative) splits its weight evenly over those visible references.
pub fn upsample_weights(
    c_match: &[Plane],
    warped_vis: &[VisibilityMap],
    stride: usize,
) -> Result<FullResWeights> {
    if c_match.len() != warped_vis.len() {
        return Err(Error::InvalidInput("reference list lengths differ".into()));
    }
    let Some(first) = warped_vis.first() else {
        return Err(Error::InvalidInput("no references to upsample".into()));
    };
    let (w, h) = first.dims();
    for (c, v) in c_match.iter().zip(warped_vis) {
        ensure_dims((w, h), v.dims())?;
        check_stride(c.dims(), (w, h), stride)?;
    }
    let mut weights: Vec<Plane> = c_match
        .iter()
        .map(|c| bilinear_upsample(c, stride, w, h))
        .collect();
    let mut c_mask = Plane::new(w, h, 1.0);
    for i in 0..w * h {
        let mut total = 0.0;
        let mut visible = 0usize;
        for (wt, v) in weights.iter_mut().zip(warped_vis) {
            if v.data()[i] < 1.0 {
                wt.data[i] = 0.0;
            } else {
                visible += 1;
                total += wt.data[i];
            }
        }
        if visible == 0 {
            continue;
        }
        if total > 0.0 {
            for wt in weights.iter_mut() {
                wt.data[i] /= total;
            }
        } else {
            let even = 1.0 / visible as f64;
            for (wt, v) in weights.iter_mut().zip(warped_vis) {
                if v.data()[i] >= 1.0 {
                    wt.data[i] = even;
                }
            }
        }
        c_mask.data[i] = 0.0;
    }
    Ok(FullResWeights { weights, c_mask })
}

/// Bilinear upsampling renormalized over all references, with no visibility
/// gating. Pairs with [`crate::matcher::SoftmaxMode::Normal`].
pub fn upsample_weights_unmasked(
    c_match: &[Plane],
    dims: (usize, usize),
    stride: usize,
) -> Result<FullResWeights> {
    let (w, h) = dims;
    for c in c_match {
        check_stride(c.dims(), dims, stride)?;
    }
    let mut weights: Vec<Plane> = c_match
        .iter()
        .map(|c| bilinear_upsample(c, stride, w, h))
        .collect();
    let mut c_mask = Plane::new(w, h, 1.0);
    for i in 0..w * h {
        let total: f64 = weights.iter().map(|p| p.data[i]).sum();
        if total > 0.0 {
            for wt in weights.iter_mut() {
                wt.data[i] /= total;
            }
            c_mask.data[i] = 0.0;
        }
    }
    Ok(FullResWeights { weights, c_mask })
}

/// Copies the target outside the hole and the weighted reference mix inside
/// it. Hole pixels without weight mass are left at 0 and flagged in the
/// returned mask (which is 0 everywhere outside the hole).
pub fn composite_paste(input: &PasteInput, weights: &FullResWeights) -> Result<(Frame, Plane)> {
    input.validate()?;
    let (w, h) = input.target.dims();
    if weights.weights.len() != input.warped_refs.len() {
        return Err(Error::InvalidInput("weight count differs from reference count".into()));
    }
    for p in &weights.weights {
        ensure_dims((w, h), p.dims())?;
    }
    let mut data = input.target.data().to_vec();
    let mut never = Plane::new(w, h, 0.0);
    for i in 0..w * h {
        if input.hole.data()[i] == 0 {
            continue;
        }
        let mut acc = [0.0; 3];
        let mut mass = 0.0;
        for (wt, r) in weights.weights.iter().zip(&input.warped_refs) {
            let a = wt.data[i];
            if a == 0.0 {
                continue;
            }
            mass += a;
            let px = &r.data()[i * 3..i * 3 + 3];
            for c in 0..3 {
                acc[c] += a * px[c];
            }
        }
        if mass > 0.0 {
            data[i * 3..i * 3 + 3].copy_from_slice(&acc);
        } else {
            data[i * 3..i * 3 + 3].fill(0.0);
            never.data[i] = 1.0;
        }
    }
    Ok((Frame::from_raw_clamped(w, h, data), never))
}

/// Fills `fill_region` with the solution of the discrete Laplace equation
/// (each pixel equal to the mean of its in-image 4-neighbours), with the
/// surrounding known pixels as Dirichlet boundary.
pub fn diffusion_fill(frame: &Frame, fill_region: &HoleMask) -> Result<Frame> {
    diffusion_fill_with(frame, fill_region, DIFFUSION_TOLERANCE, DIFFUSION_MAX_SWEEPS)
}

pub fn diffusion_fill_with(
    frame: &Frame,
    fill_region: &HoleMask,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<Frame> {
    ensure_dims(frame.dims(), fill_region.dims())?;
    let (w, h) = frame.dims();
    let region = fill_region.data();
    let unknown: Vec<usize> = (0..w * h).filter(|&i| region[i] == 1).collect();
    if unknown.is_empty() {
        return Ok(frame.clone());
    }
    if unknown.len() == w * h {
        return Frame::filled(w, h, [0.5; 3]);
    }

    let mut data = frame.data().to_vec();

    // boundary statistics: known pixels touching the region
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut mean = [0.0; 3];
    let mut n_boundary = 0usize;
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (w, 0, h, 0);
    for &i in &unknown {
        let (x, y) = (i % w, i / w);
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
        for j in neighbours(x, y, w, h).into_iter().flatten() {
            if region[j] == 0 {
                for c in 0..3 {
                    let v = data[j * 3 + c];
                    lo[c] = lo[c].min(v);
                    hi[c] = hi[c].max(v);
                    mean[c] += v;
                }
                n_boundary += 1;
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= n_boundary as f64;
    }
    for &i in &unknown {
        data[i * 3..i * 3 + 3].copy_from_slice(&mean);
    }

    // red-black SOR with the optimal factor for the region's bounding box
    let side = (x_max - x_min + 1).max(y_max - y_min + 1) as f64;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / (side + 1.0)).sin());
    let colors: [Vec<usize>; 2] = [
        unknown.iter().copied().filter(|&i| (i % w + i / w) % 2 == 0).collect(),
        unknown.iter().copied().filter(|&i| (i % w + i / w) % 2 == 1).collect(),
    ];
    for _ in 0..max_sweeps {
        let mut residual = 0.0f64;
        for color in &colors {
            for &i in color {
                let (x, y) = (i % w, i / w);
                let mut sum = [0.0; 3];
                let mut n = 0.0;
                for j in neighbours(x, y, w, h).into_iter().flatten() {
                    for c in 0..3 {
                        sum[c] += data[j * 3 + c];
                    }
                    n += 1.0;
                }
                for c in 0..3 {
                    let r = sum[c] / n - data[i * 3 + c];
                    residual = residual.max(r.abs());
                    data[i * 3 + c] += omega * r;
                }
            }
        }
        if residual < tolerance {
            break;
        }
    }
    for &i in &unknown {
        for c in 0..3 {
            data[i * 3 + c] = data[i * 3 + c].clamp(lo[c], hi[c]);
        }
    }
    Ok(Frame::from_raw_clamped(w, h, data))
}

#[inline]
fn neighbours(x: usize, y: usize, w: usize, h: usize) -> [Option<usize>; 4] {
    [
        (x > 0).then(|| y * w + x - 1),
        (x + 1 < w).then(|| y * w + x + 1),
        (y > 0).then(|| (y - 1) * w + x),
        (y + 1 < h).then(|| (y + 1) * w + x),
    ]
}
