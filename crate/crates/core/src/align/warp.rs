//! Bilinear resampling under affine maps, with visibility propagation.

use crate::error::{ensure_dims, Result};
use crate::media::{Frame, VisibilityMap};

use super::affine::{AffineParams, PixelAffine};

/// Warped visibility at or above this value counts as visible.
pub const VISIBILITY_THRESHOLD: f64 = 0.999;

const BOUNDS_EPS: f64 = 1e-9;

/// Interleaved multi-channel raster without value-range invariants. Used for
/// pyramid levels and intermediate buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn from_frame(frame: &Frame) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            channels: 3,
            data: frame.data().to_vec(),
        }
    }

    pub fn from_visibility(v: &VisibilityMap) -> Self {
        Self {
            width: v.width(),
            height: v.height(),
            channels: 1,
            data: v.data().to_vec(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= -BOUNDS_EPS
            && y >= -BOUNDS_EPS
            && x <= (self.width - 1) as f64 + BOUNDS_EPS
            && y <= (self.height - 1) as f64 + BOUNDS_EPS
    }

    /// Bilinear sample at `(x, y)` with edge clamping; writes `channels` values.
    #[inline]
    pub fn sample(&self, x: f64, y: f64, out: &mut [f64]) {
        let (x0, fx) = split(x, self.width);
        let (y0, fy) = split(y, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let c = self.channels;
        let i00 = (y0 * self.width + x0) * c;
        let i10 = (y0 * self.width + x1) * c;
        let i01 = (y1 * self.width + x0) * c;
        let i11 = (y1 * self.width + x1) * c;
        for k in 0..c {
            let top = (1.0 - fx) * self.data[i00 + k] + fx * self.data[i10 + k];
            let bot = (1.0 - fx) * self.data[i01 + k] + fx * self.data[i11 + k];
            out[k] = (1.0 - fy) * top + fy * bot;
        }
    }

    /// Bilinear sample plus its analytic spatial derivatives.
    #[inline]
    pub fn sample_with_gradient(
        &self,
        x: f64,
        y: f64,
        val: &mut [f64],
        gx: &mut [f64],
        gy: &mut [f64],
    ) {
        let (x0, fx) = split(x, self.width);
        let (y0, fy) = split(y, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let c = self.channels;
        let i00 = (y0 * self.width + x0) * c;
        let i10 = (y0 * self.width + x1) * c;
        let i01 = (y1 * self.width + x0) * c;
        let i11 = (y1 * self.width + x1) * c;
        for k in 0..c {
            let (p00, p10, p01, p11) = (
                self.data[i00 + k],
                self.data[i10 + k],
                self.data[i01 + k],
                self.data[i11 + k],
            );
            let top = (1.0 - fx) * p00 + fx * p10;
            let bot = (1.0 - fx) * p01 + fx * p11;
            val[k] = (1.0 - fy) * top + fy * bot;
            gx[k] = (1.0 - fy) * (p10 - p00) + fy * (p11 - p01);
            gy[k] = bot - top;
        }
    }

    /// 2x2 box reduction; odd sizes replicate the last row/column.
    pub fn half(&self) -> Self {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        let c = self.channels;
        let mut data = vec![0.0; w * h * c];
        for y in 0..h {
            let ya = (2 * y).min(self.height - 1);
            let yb = (2 * y + 1).min(self.height - 1);
            for x in 0..w {
                let xa = (2 * x).min(self.width - 1);
                let xb = (2 * x + 1).min(self.width - 1);
                for k in 0..c {
                    let s = self.data[(ya * self.width + xa) * c + k]
                        + self.data[(ya * self.width + xb) * c + k]
                        + self.data[(yb * self.width + xa) * c + k]
                        + self.data[(yb * self.width + xb) * c + k];
                    data[(y * w + x) * c + k] = 0.25 * s;
                }
            }
        }
        Self {
            width: w,
            height: h,
            channels: c,
            data,
        }
    }

    /// 2x2 minimum reduction (single channel visibility).
    pub fn half_min(&self) -> Self {
        debug_assert_eq!(self.channels, 1);
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            let ya = (2 * y).min(self.height - 1);
            let yb = (2 * y + 1).min(self.height - 1);
            for x in 0..w {
                let xa = (2 * x).min(self.width - 1);
                let xb = (2 * x + 1).min(self.width - 1);
                data[y * w + x] = self.data[ya * self.width + xa]
                    .min(self.data[ya * self.width + xb])
                    .min(self.data[yb * self.width + xa])
                    .min(self.data[yb * self.width + xb]);
            }
        }
        Self {
            width: w,
            height: h,
            channels: 1,
            data,
        }
    }
}

/// Splits a coordinate into a base index in `[0, n - 2]` and a fraction in
/// `[0, 1]`, clamping to the raster.
#[inline]
fn split(x: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let xc = x.clamp(0.0, (n - 1) as f64);
    let i = (xc.floor() as usize).min(n - 2);
    (i, xc - i as f64)
}

/// Resamples `src` onto an `out_w x out_h` grid through the pixel map `map`
/// (output pixel -> source coordinate). Returns the sampled raster and the
/// soft visibility (`src_vis` sampled, times the in-bounds indicator).
pub fn resample(
    src: &Raster,
    src_vis: Option<&Raster>,
    map: &PixelAffine,
    out_w: usize,
    out_h: usize,
) -> (Raster, Vec<f64>) {
    let c = src.channels;
    let mut data = vec![0.0; out_w * out_h * c];
    let mut vis = vec![0.0; out_w * out_h];
    let mut vbuf = [0.0];
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = map.apply(x as f64, y as f64);
            let i = y * out_w + x;
            src.sample(sx, sy, &mut data[i * c..(i + 1) * c]);
            if src.in_bounds(sx, sy) {
                vis[i] = match src_vis {
                    Some(v) => {
                        v.sample(sx, sy, &mut vbuf);
                        vbuf[0]
                    }
                    None => 1.0,
                };
            }
        }
    }
    (
        Raster {
            width: out_w,
            height: out_h,
            channels: c,
            data,
        },
        vis,
    )
}

/// Warps `img` into the target raster: `output(p) = img(A p + t)`.
///
/// Samples that land outside the source raster get visibility 0 (their color
/// is the edge-clamped bilinear sample). A binary input visibility yields a
/// binary output, thresholded at [`VISIBILITY_THRESHOLD`].
pub fn warp_affine(
    img: &Frame,
    v: &VisibilityMap,
    a: &AffineParams,
) -> Result<(Frame, VisibilityMap)> {
    ensure_dims(img.dims(), v.dims())?;
    a.validate()?;
    let dims = img.dims();
    let map = a.to_pixel(dims, dims);
    let src = Raster::from_frame(img);
    let src_vis = Raster::from_visibility(v);
    let (out, mut vis) = resample(&src, Some(&src_vis), &map, dims.0, dims.1);
    if v.is_binary() {
        for x in &mut vis {
            *x = if *x >= VISIBILITY_THRESHOLD { 1.0 } else { 0.0 };
        }
    } else {
        for x in &mut vis {
            *x = x.clamp(0.0, 1.0);
        }
    }
    Ok((
        Frame::from_raw_clamped(dims.0, dims.1, out.data),
        VisibilityMap::from_raw(dims.0, dims.1, vis, v.is_binary()),
    ))
}
