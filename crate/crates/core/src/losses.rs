//! Training losses as pure functions: region-split reconstruction, alignment,
//! perceptual, style and total-variation terms, and their weighted total.
//!
//! Every term is a per-pixel (or per-cell) mean so that weights keep their
//! meaning across resolutions. Pixel differences use the channel-sum L1 norm.

use nalgebra::DMatrix;

use crate::error::{ensure_dims, Error, Result};
use crate::features::{Encoder, EncoderKind, EncoderSpec, FeatureMap};
use crate::media::{Frame, HoleMask, Plane, VisibilityMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub align: f64,
    pub hole_visible: f64,
    pub hole_invisible: f64,
    pub non_hole: f64,
    pub perceptual: f64,
    pub style: f64,
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            align: 2.0,
            hole_visible: 10.0,
            hole_invisible: 20.0,
            non_hole: 6.0,
            perceptual: 0.01,
            style: 24.0,
            tv: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.align,
            self.hole_visible,
            self.hole_invisible,
            self.non_hole,
            self.perceptual,
            self.style,
            self.tv,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// The seven scalar loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub align: f64,
    pub hole_visible: f64,
    pub hole_invisible: f64,
    pub non_hole: f64,
    pub perceptual: f64,
    pub style: f64,
    pub tv: f64,
}

impl LossComponents {
    pub fn splat(v: f64) -> Self {
        Self {
            align: v,
            hole_visible: v,
            hole_invisible: v,
            non_hole: v,
            perceptual: v,
            style: v,
            tv: v,
        }
    }
}

/// Reconstruction losses split into visible-hole, never-visible-hole and
/// non-hole parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionLosses {
    pub hole_visible: f64,
    pub hole_invisible: f64,
    pub non_hole: f64,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `c_mask` is 1 on never-visible pixels. With `swap_hole_weights` the
/// `c_mask` and `1 - c_mask` factors of the two hole terms are exchanged.
pub fn region_losses(
    pred: &Frame,
    truth: &Frame,
    hole: &HoleMask,
    c_mask: &Plane,
    swap_hole_weights: bool,
) -> Result<RegionLosses> {
    let dims = pred.dims();
    ensure_dims(dims, truth.dims())?;
    ensure_dims(dims, hole.dims())?;
    ensure_dims(dims, c_mask.dims())?;
    if c_mask.data.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidInput("c_mask must lie in [0, 1]".into()));
    }
    let n = (dims.0 * dims.1) as f64;
    let (mut vis, mut invis, mut non) = (0.0, 0.0, 0.0);
    for (i, (p, t)) in pred
        .data()
        .chunks_exact(3)
        .zip(truth.data().chunks_exact(3))
        .enumerate()
    {
        let d = l1(p, t);
        if hole.data()[i] == 1 {
            let c = c_mask.data[i];
            let (wv, wi) = if swap_hole_weights { (c, 1.0 - c) } else { (1.0 - c, c) };
            vis += wv * d;
            invis += wi * d;
        } else {
            non += d;
        }
    }
    Ok(RegionLosses {
        hole_visible: vis / n,
        hole_invisible: invis / n,
        non_hole: non / n,
    })
}

/// Alignment loss: for each aligned reference, the mean over pixels of the
/// visibility-masked channel-sum L1 difference to the target, summed over
/// references.
pub fn align_loss(target: &Frame, aligned: &[Frame], joint_vis: &[VisibilityMap]) -> Result<f64> {
    if aligned.len() != joint_vis.len() {
        return Err(Error::InvalidInput("reference list lengths differ".into()));
    }
    let dims = target.dims();
    let n = (dims.0 * dims.1) as f64;
    let mut total = 0.0;
    for (r, v) in aligned.iter().zip(joint_vis) {
        ensure_dims(dims, r.dims())?;
        ensure_dims(dims, v.dims())?;
        let s: f64 = target
            .data()
            .chunks_exact(3)
            .zip(r.data().chunks_exact(3))
            .zip(v.data())
            .map(|((a, b), &w)| w * l1(a, b))
            .sum();
        total += s / n;
    }
    Ok(total)
}

/// `F^T F / (C h w)` for the `(h w) x C` unrolling of `f`.
pub fn gram_matrix(f: &FeatureMap) -> DMatrix<f64> {
    let c = f.channels;
    let cells = f.width * f.height;
    let mut g = DMatrix::<f64>::zeros(c, c);
    if c == 0 || cells == 0 {
        return g;
    }
    let m = DMatrix::from_row_slice(cells, c, &f.data);
    g.gemm_tr(1.0 / (c * cells) as f64, &m, &m, 0.0);
    g
}

/// One stage of a feature backbone.
pub trait FeatureStage: Send + Sync {
    fn extract(&self, frame: &Frame) -> Result<FeatureMap>;
}

/// Returns the frame itself as a 3-channel, stride-1 feature map.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStage;

impl FeatureStage for IdentityStage {
    fn extract(&self, frame: &Frame) -> Result<FeatureMap> {
        Ok(FeatureMap {
            width: frame.width(),
            height: frame.height(),
            channels: 3,
            stride: 1,
            data: frame.data().to_vec(),
        })
    }
}

impl FeatureStage for Encoder {
    fn extract(&self, frame: &Frame) -> Result<FeatureMap> {
        self.encode(frame, &HoleMask::empty(frame.width(), frame.height()))
    }
}

/// Ordered feature extractors whose resolution strictly decreases.
pub struct FeatureBackbone {
    stages: Vec<Box<dyn FeatureStage>>,
}

impl std::fmt::Debug for FeatureBackbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureBackbone")
            .field("stages", &self.stages.len())
            .finish()
    }
}

impl FeatureBackbone {
    pub fn new(stages: Vec<Box<dyn FeatureStage>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidInput("backbone needs at least one stage".into()));
        }
        Ok(Self { stages })
    }

    pub fn identity() -> Self {
        Self {
            stages: vec![Box::new(IdentityStage)],
        }
    }

    /// Seeded-conv encoders at strides 2, 4 and 8.
    pub fn seeded(seed: u64, channels: usize) -> Result<Self> {
        let mut stages: Vec<Box<dyn FeatureStage>> = Vec::new();
        for (i, stride) in [2usize, 4, 8].into_iter().enumerate() {
            let spec = EncoderSpec {
                kind: EncoderKind::SeededConv,
                stride,
                channels,
                seed: seed.wrapping_add(i as u64),
                layers: stride.trailing_zeros() as usize + 1,
            };
            stages.push(Box::new(Encoder::new(&spec)?));
        }
        Ok(Self { stages })
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn extract(&self, frame: &Frame) -> Result<Vec<FeatureMap>> {
        let maps = self
            .stages
            .iter()
            .map(|s| s.extract(frame))
            .collect::<Result<Vec<_>>>()?;
        for pair in maps.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.width * b.height >= a.width * a.height {
                return Err(Error::InvalidInput(
                    "backbone stages must strictly decrease resolution".into(),
                ));
            }
        }
        Ok(maps)
    }
}

/// `(perceptual, style)`: stage means of the per-cell channel-sum L1
/// feature difference and of the mean absolute gram difference.
pub fn perceptual_style_loss(
    pred_comp: &Frame,
    truth: &Frame,
    backbone: &FeatureBackbone,
) -> Result<(f64, f64)> {
    ensure_dims(truth.dims(), pred_comp.dims())?;
    let fp = backbone.extract(pred_comp)?;
    let ft = backbone.extract(truth)?;
    let p = fp.len() as f64;
    let (mut perc, mut style) = (0.0, 0.0);
    for (a, b) in fp.iter().zip(&ft) {
        a.same_shape(b)?;
        let cells = (a.width * a.height).max(1) as f64;
        perc += l1(&a.data, &b.data) / cells;
        let ga = gram_matrix(a);
        let gb = gram_matrix(b);
        let entries = ga.len().max(1) as f64;
        style += l1(ga.as_slice(), gb.as_slice()) / entries;
    }
    Ok((perc / p, style / p))
}

/// Anisotropic total variation: mean absolute forward difference along x
/// plus the same along y, per channel.
pub fn tv_loss(frame: &Frame) -> f64 {
    let (w, h) = frame.dims();
    let d = frame.data();
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * 3;
            if x + 1 < w {
                sx += l1(&d[i..i + 3], &d[i + 3..i + 6]);
            }
            if y + 1 < h {
                sy += l1(&d[i..i + 3], &d[i + 3 * w..i + 3 * w + 3]);
            }
        }
    }
    let nx = (h * (w - 1) * 3) as f64;
    let ny = ((h - 1) * w * 3) as f64;
    sx / nx + sy / ny
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    let parts = [
        (c.align, w.align),
        (c.hole_visible, w.hole_visible),
        (c.hole_invisible, w.hole_invisible),
        (c.non_hole, w.non_hole),
        (c.perceptual, w.perceptual),
        (c.style, w.style),
        (c.tv, w.tv),
    ];
    if parts.iter().any(|(v, _)| !v.is_finite()) {
        return Err(Error::NonFinite("loss component"));
    }
    Ok(parts.iter().map(|(v, k)| v * k).sum())
}
