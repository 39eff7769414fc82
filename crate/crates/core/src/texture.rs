//! Seeded procedural color textures, usable as synthetic background sources.
//!
//! A texture is a continuous function of the plane, so it can be rendered
//! through any pixel map without resampling error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::PixelAffine;
use crate::media::Frame;

#[derive(Debug, Clone)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: [f64; 3],
}

#[derive(Debug, Clone)]
struct Blob {
    cx: f64,
    cy: f64,
    inv_two_sigma2: f64,
    amp: [f64; 3],
}

/// Sum of random plane waves and Gaussian blobs, mapped into `[0.05, 0.95]`.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<Wave>,
    blobs: Vec<Blob>,
    offset: [f64; 3],
    scale: f64,
}

impl Texture {
    /// Texture with wavelengths between `min_wavelength` and
    /// `8 * min_wavelength` pixels, blobs spread over a `extent` square.
    pub fn new(seed: u64, min_wavelength: f64, extent: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut waves = Vec::new();
        let mut total_amp = 0.0;
        for _ in 0..14 {
            let wavelength = min_wavelength * 8f64.powf(rng.random::<f64>());
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let k = std::f64::consts::TAU / wavelength;
            // coarser waves carry more energy
            let a = 0.6 * (wavelength / (8.0 * min_wavelength)).sqrt();
            let amp = [
                a * rng.random_range(-1.0..1.0),
                a * rng.random_range(-1.0..1.0),
                a * rng.random_range(-1.0..1.0),
            ];
            total_amp += a;
            waves.push(Wave {
                kx: k * theta.cos(),
                ky: k * theta.sin(),
                phase: rng.random::<f64>() * std::f64::consts::TAU,
                amp,
            });
        }
        let mut blobs = Vec::new();
        for _ in 0..24 {
            let sigma = rng.random_range(0.02..0.08) * extent;
            let a = rng.random_range(0.3..0.8);
            total_amp += a * 0.25;
            blobs.push(Blob {
                cx: rng.random::<f64>() * extent,
                cy: rng.random::<f64>() * extent,
                inv_two_sigma2: 1.0 / (2.0 * sigma * sigma),
                amp: [
                    a * rng.random_range(-1.0..1.0),
                    a * rng.random_range(-1.0..1.0),
                    a * rng.random_range(-1.0..1.0),
                ],
            });
        }
        let offset = [
            rng.random_range(0.4..0.6),
            rng.random_range(0.4..0.6),
            rng.random_range(0.4..0.6),
        ];
        Self {
            waves,
            blobs,
            offset,
            scale: 0.45 / total_amp.max(1e-9) * 2.5,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for w in &self.waves {
            let s = (w.kx * x + w.ky * y + w.phase).sin();
            for c in 0..3 {
                acc[c] += w.amp[c] * s;
            }
        }
        for b in &self.blobs {
            let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
            let g = (-d2 * b.inv_two_sigma2).exp();
            for c in 0..3 {
                acc[c] += b.amp[c] * g;
            }
        }
        let mut out = [0.0; 3];
        for c in 0..3 {
            // soft squash into [0.05, 0.95]
            let z = self.scale * acc[c];
            out[c] = self.offset[c] + 0.45 * z.tanh();
            out[c] = out[c].clamp(0.05, 0.95);
        }
        out
    }

    pub fn render(&self, width: usize, height: usize) -> Frame {
        Frame::from_fn(width, height, |x, y| self.eval(x as f64, y as f64))
    }

    /// Renders `frame(p) = texture(map(p))`.
    pub fn render_mapped(&self, width: usize, height: usize, map: &PixelAffine) -> Frame {
        Frame::from_fn(width, height, |x, y| {
            let (sx, sy) = map.apply(x as f64, y as f64);
            self.eval(sx, sy)
        })
    }
}
