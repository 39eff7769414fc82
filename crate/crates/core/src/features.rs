//! Frame encoders producing per-cell feature vectors for context matching.
//!
//! Two encoders share one contract: `raw-pool` averages RGB over
//! `stride x stride` blocks, `seeded-conv` runs a fixed random ReLU CNN over
//! the RGB + mask stack.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure_dims, Error, Result};
use crate::media::{Frame, HoleMask};

/// `h x w x C` feature tensor, interleaved per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Image pixels per cell along each axis.
    pub stride: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, channels: usize, stride: usize) -> Self {
        Self {
            width,
            height,
            channels,
            stride,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        ensure_dims(self.dims(), other.dims())?;
        if self.channels != other.channels {
            return Err(Error::InvalidInput(format!(
                "feature channel mismatch: {} vs {}",
                self.channels, other.channels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    RawPool,
    SeededConv,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-pool" => Ok(Self::RawPool),
            "seeded-conv" => Ok(Self::SeededConv),
            other => Err(Error::Config(format!("unknown encoder kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RawPool => "raw-pool",
            Self::SeededConv => "seeded-conv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub stride: usize,
    /// Output channels of the conv encoder; raw-pool always yields 3.
    pub channels: usize,
    pub seed: u64,
    pub layers: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            kind: EncoderKind::SeededConv,
            stride: 4,
            channels: 32,
            seed: 0,
            layers: 3,
        }
    }
}

impl EncoderSpec {
    pub fn raw_pool(stride: usize) -> Self {
        Self {
            kind: EncoderKind::RawPool,
            stride,
            channels: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4, 8].contains(&self.stride) {
            return Err(Error::Config(format!(
                "encoder.stride must be 1, 2, 4 or 8 (got {})",
                self.stride
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("encoder.channels must be at least 1".into()));
        }
        if self.kind == EncoderKind::SeededConv {
            let downs = self.stride.trailing_zeros() as usize;
            if self.layers < downs.max(1) {
                return Err(Error::Config(format!(
                    "encoder.layers = {} cannot reach stride {}",
                    self.layers, self.stride
                )));
            }
        }
        Ok(())
    }

    pub fn output_channels(&self) -> usize {
        match self.kind {
            EncoderKind::RawPool => 3,
            EncoderKind::SeededConv => self.channels,
        }
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    stride: usize,
    /// `[out][ky][kx][in]`
    weights: Vec<f64>,
}

impl ConvLayer {
    fn forward(&self, input: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
        let ow = w.div_ceil(self.stride);
        let oh = h.div_ceil(self.stride);
        let mut out = vec![0.0; ow * oh * self.out_ch];
        let k_stride = 9 * self.in_ch;
        for oy in 0..oh {
            for ox in 0..ow {
                let o = &mut out[(oy * ow + ox) * self.out_ch..(oy * ow + ox + 1) * self.out_ch];
                for ky in 0..3 {
                    let iy = (oy * self.stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * self.stride + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = &input[(iy as usize * w + ix as usize) * self.in_ch..]
                            [..self.in_ch];
                        let base = (ky * 3 + kx) * self.in_ch;
                        for (oc, acc) in o.iter_mut().enumerate() {
                            let wt = &self.weights[oc * k_stride + base..][..self.in_ch];
                            *acc += wt.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                for v in o.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        (out, ow, oh)
    }
}

/// An encoder with its weights materialized once.
#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncoderSpec,
    layers: Vec<ConvLayer>,
}

impl Encoder {
    pub fn new(spec: &EncoderSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        if spec.kind == EncoderKind::SeededConv {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let downs = spec.stride.trailing_zeros() as usize;
            let mut in_ch = 4;
            for l in 0..spec.layers {
                let fan_in = 9 * in_ch;
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .expect("positive standard deviation");
                let weights = (0..spec.channels * fan_in)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                layers.push(ConvLayer {
                    in_ch,
                    out_ch: spec.channels,
                    stride: if l < downs { 2 } else { 1 },
                    weights,
                });
                in_ch = spec.channels;
            }
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn encode(&self, frame: &Frame, mask: &HoleMask) -> Result<FeatureMap> {
        ensure_dims(frame.dims(), mask.dims())?;
        Ok(match self.spec.kind {
            EncoderKind::RawPool => raw_pool(frame, self.spec.stride),
            EncoderKind::SeededConv => self.conv(frame, mask),
        })
    }

    fn conv(&self, frame: &Frame, mask: &HoleMask) -> FeatureMap {
        let (mut w, mut h) = frame.dims();
        let mut buf = Vec::with_capacity(w * h * 4);
        for (px, &m) in frame.data().chunks_exact(3).zip(mask.data()) {
            buf.extend_from_slice(px);
            buf.push(f64::from(m));
        }
        for layer in &self.layers {
            let (out, ow, oh) = layer.forward(&buf, w, h);
            buf = out;
            w = ow;
            h = oh;
        }
        FeatureMap {
            width: w,
            height: h,
            channels: self.spec.channels,
            stride: self.spec.stride,
            data: buf,
        }
    }
}

/// Encodes one frame; builds the encoder weights on every call.
pub fn encode(frame: &Frame, mask: &HoleMask, spec: &EncoderSpec) -> Result<FeatureMap> {
    Encoder::new(spec)?.encode(frame, mask)
}

fn raw_pool(frame: &Frame, stride: usize) -> FeatureMap {
    let (w, h) = frame.dims();
    let ow = w.div_ceil(stride);
    let oh = h.div_ceil(stride);
    let mut out = FeatureMap::zeros(ow, oh, 3, stride);
    let norm = 1.0 / (stride * stride) as f64;
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = [0.0; 3];
            for dy in 0..stride {
                let y = (oy * stride + dy).min(h - 1);
                for dx in 0..stride {
                    let x = (ox * stride + dx).min(w - 1);
                    let p = frame.pixel(x, y);
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                }
            }
            for (o, a) in out.cell_mut(ox, oy).iter_mut().zip(acc) {
                *o = a * norm;
            }
        }
    }
    out
}

/// Scales every cell vector to unit L2 norm; zero vectors stay zero.
pub fn normalize_features(f: &FeatureMap) -> FeatureMap {
    let mut out = f.clone();
    for cell in out.data.chunks_exact_mut(f.channels) {
        let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in cell.iter_mut() {
                *v /= norm;
            }
        }
    }
    out
}
