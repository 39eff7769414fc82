use crate::error::{Error, Result};

/// Smallest accepted `|det|` of the linear part.
pub const MIN_DET: f64 = 1e-4;

/// Affine map from target coordinates to reference coordinates, both
/// normalized to `[-1, 1]` per axis (pixel centers, `u = (2x + 1) / W - 1`).
///
/// `p_ref = A * p_tgt + t` with `A = [[a11, a12], [a21, a22]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for AffineParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineParams {
    pub const IDENTITY: Self = Self {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            tx,
            ty,
            ..Self::IDENTITY
        }
    }

    /// Parameter vector in `[a11, a12, a21, a22, tx, ty]` order.
    pub fn to_array(&self) -> [f64; 6] {
        [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty]
    }

    pub fn from_array(p: [f64; 6]) -> Self {
        Self {
            a11: p[0],
            a12: p[1],
            a21: p[2],
            a22: p[3],
            tx: p[4],
            ty: p[5],
        }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Checks finiteness and non-degeneracy.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite("affine parameters"));
        }
        let det = self.det();
        if det.abs() < MIN_DET {
            return Err(Error::DegenerateTransform(det));
        }
        Ok(())
    }

    /// Applies the map to a normalized point.
    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        (
            self.a11 * u + self.a12 * v + self.tx,
            self.a21 * u + self.a22 * v + self.ty,
        )
    }

    /// Pixel-space form of this map for a target raster of `out_dims` and a
    /// source raster of `in_dims` (both `(width, height)`).
    pub fn to_pixel(&self, out_dims: (usize, usize), in_dims: (usize, usize)) -> PixelAffine {
        let (wo, ho) = (out_dims.0 as f64, out_dims.1 as f64);
        let (wi, hi) = (in_dims.0 as f64, in_dims.1 as f64);
        let m11 = self.a11 * (wi / wo);
        let m12 = self.a12 * (wi / ho);
        let m21 = self.a21 * (hi / wo);
        let m22 = self.a22 * (hi / ho);
        // Arranged so that the identity maps to exactly zero offset.
        let bx = 0.5 * wi * (self.tx + 1.0 - self.a11 - self.a12) + 0.5 * (m11 + m12 - 1.0);
        let by = 0.5 * hi * (self.ty + 1.0 - self.a21 - self.a22) + 0.5 * (m21 + m22 - 1.0);
        PixelAffine {
            m: [[m11, m12, bx], [m21, m22, by]],
        }
    }

    /// Inverse of [`AffineParams::to_pixel`].
    pub fn from_pixel(px: &PixelAffine, out_dims: (usize, usize), in_dims: (usize, usize)) -> Self {
        let (wo, ho) = (out_dims.0 as f64, out_dims.1 as f64);
        let (wi, hi) = (in_dims.0 as f64, in_dims.1 as f64);
        let [[m11, m12, bx], [m21, m22, by]] = px.m;
        let a11 = m11 * wo / wi;
        let a12 = m12 * ho / wi;
        let a21 = m21 * wo / hi;
        let a22 = m22 * ho / hi;
        let tx = (bx - 0.5 * (m11 + m12 - 1.0)) / (0.5 * wi) - 1.0 + a11 + a12;
        let ty = (by - 0.5 * (m21 + m22 - 1.0)) / (0.5 * hi) - 1.0 + a21 + a22;
        Self {
            a11,
            a12,
            a21,
            a22,
            tx,
            ty,
        }
    }

    /// Largest parameter difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `result(p) = a(b(p))`.
pub fn compose_affine(a: &AffineParams, b: &AffineParams) -> AffineParams {
    AffineParams {
        a11: a.a11 * b.a11 + a.a12 * b.a21,
        a12: a.a11 * b.a12 + a.a12 * b.a22,
        a21: a.a21 * b.a11 + a.a22 * b.a21,
        a22: a.a21 * b.a12 + a.a22 * b.a22,
        tx: a.a11 * b.tx + a.a12 * b.ty + a.tx,
        ty: a.a21 * b.tx + a.a22 * b.ty + a.ty,
    }
}

pub fn invert_affine(a: &AffineParams) -> Result<AffineParams> {
    a.validate()?;
    let det = a.det();
    let i11 = a.a22 / det;
    let i12 = -a.a12 / det;
    let i21 = -a.a21 / det;
    let i22 = a.a11 / det;
    Ok(AffineParams {
        a11: i11,
        a12: i12,
        a21: i21,
        a22: i22,
        tx: -(i11 * a.tx + i12 * a.ty),
        ty: -(i21 * a.tx + i22 * a.ty),
    })
}

/// Affine map in pixel coordinates: `x' = m[0] . (x, y, 1)`, `y' = m[1] . (x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelAffine {
    pub m: [[f64; 3]; 2],
}

impl PixelAffine {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy]],
        }
    }

    /// Rotation by `angle` radians, anisotropic scale and shear about the
    /// point `(cx, cy)`, followed by a translation.
    pub fn about_center(
        cx: f64,
        cy: f64,
        angle: f64,
        scale: f64,
        shear: f64,
        dx: f64,
        dy: f64,
    ) -> Self {
        let (s, c) = angle.sin_cos();
        // R * S * H, H = [[1, tan(shear)], [0, 1]]
        let k = shear.tan();
        let l11 = scale * c;
        let l12 = scale * (c * k - s);
        let l21 = scale * s;
        let l22 = scale * (s * k + c);
        Self {
            m: [
                [l11, l12, cx - l11 * cx - l12 * cy + dx],
                [l21, l22, cy - l21 * cx - l22 * cy + dy],
            ],
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.m[0][2],
            self.m[1][0] * x + self.m[1][1] * y + self.m[1][2],
        )
    }

    /// `self(other(p))`.
    pub fn then_after(&self, other: &Self) -> Self {
        let a = &self.m;
        let b = &other.m;
        Self {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                    a[0][0] * b[0][2] + a[0][1] * b[1][2] + a[0][2],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                    a[1][0] * b[0][2] + a[1][1] * b[1][2] + a[1][2],
                ],
            ],
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let [[a, b, tx], [c, d, ty]] = self.m;
        let det = a * d - b * c;
        if !det.is_finite() || det.abs() < 1e-12 {
            return None;
        }
        let (i11, i12, i21, i22) = (d / det, -b / det, -c / det, a / det);
        Some(Self {
            m: [
                [i11, i12, -(i11 * tx + i12 * ty)],
                [i21, i22, -(i21 * tx + i22 * ty)],
            ],
        })
    }
}

/// Largest endpoint distance, in pixels, between where `a` and `b` send the
/// four corner pixels of a `dims` target raster into a `ref_dims` raster.
pub fn corner_error(
    a: &AffineParams,
    b: &AffineParams,
    dims: (usize, usize),
    ref_dims: (usize, usize),
) -> f64 {
    let pa = a.to_pixel(dims, ref_dims);
    let pb = b.to_pixel(dims, ref_dims);
    corner_error_px(&pa, &pb, dims)
}

pub fn corner_error_px(a: &PixelAffine, b: &PixelAffine, dims: (usize, usize)) -> f64 {
    let (w, h) = ((dims.0 - 1) as f64, (dims.1 - 1) as f64);
    [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
        .iter()
        .map(|&(x, y)| {
            let (ax, ay) = a.apply(x, y);
            let (bx, by) = b.apply(x, y);
            (ax - bx).hypot(ay - by)
        })
        .fold(0.0, f64::max)
}
