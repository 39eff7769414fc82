//! Coarse-to-fine masked affine registration.
//!
//! Minimizes the mean Charbonnier distance `sqrt(d^2 + eps^2)` between the
//! target and the warped reference over pixels visible in both, using
//! Levenberg-Marquardt steps on IRLS normal equations. A step is only kept
//! when it lowers the objective.

use nalgebra::{Matrix6, Vector6};

use crate::error::{ensure_dims, Error, Result};
use crate::media::{Frame, VisibilityMap};

use super::affine::AffineParams;
use super::warp::{Raster, VISIBILITY_THRESHOLD};

/// Minimum fraction of jointly visible pixels at the coarsest level.
pub const MIN_JOINT_VISIBILITY: f64 = 0.01;

/// How the first estimate for a (target, reference) pair is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Identity,
    /// Reuse the estimate of the previous target against the same reference.
    Previous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub pyramid_levels: usize,
    pub max_iters_per_level: usize,
    /// Relative objective decrease below which a level stops.
    pub tolerance: f64,
    pub charbonnier_eps: f64,
    pub init: InitMode,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 4,
            max_iters_per_level: 100,
            tolerance: 1e-5,
            charbonnier_eps: 1e-3,
            init: InitMode::Previous,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 {
            return Err(Error::Config("align.levels must be at least 1".into()));
        }
        if self.max_iters_per_level == 0 {
            return Err(Error::Config("align.max_iters must be at least 1".into()));
        }
        if !(self.charbonnier_eps > 0.0) {
            return Err(Error::Config("align.eps must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("align.tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// One accepted optimizer state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub level: usize,
    pub iter: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub params: AffineParams,
    /// Full-resolution objective at `params`.
    pub objective: f64,
    /// Full-resolution objective at the initial parameters.
    pub initial_objective: f64,
    pub trace: Vec<TraceEntry>,
}

struct Level {
    target: Raster,
    target_vis: Raster,
    reference: Raster,
    reference_vis: Raster,
}

/// Pyramid of (target, reference) pairs; level 0 is full resolution.
pub struct AlignProblem {
    levels: Vec<Level>,
    eps: f64,
}

struct NormalEquations {
    objective: f64,
    hessian: Matrix6<f64>,
    gradient: Vector6<f64>,
}

impl AlignProblem {
    pub fn new(
        target: &Frame,
        v_t: &VisibilityMap,
        reference: &Frame,
        v_r: &VisibilityMap,
        levels: usize,
        eps: f64,
    ) -> Result<Self> {
        ensure_dims(target.dims(), reference.dims())?;
        ensure_dims(target.dims(), v_t.dims())?;
        ensure_dims(reference.dims(), v_r.dims())?;
        let mut pyramid = vec![Level {
            target: Raster::from_frame(target),
            target_vis: Raster::from_visibility(v_t),
            reference: Raster::from_frame(reference),
            reference_vis: Raster::from_visibility(v_r),
        }];
        while pyramid.len() < levels.max(1) {
            let last = pyramid.last().expect("non-empty");
            if last.target.width < 16 || last.target.height < 16 {
                break;
            }
            let next = Level {
                target: last.target.half(),
                target_vis: last.target_vis.half_min(),
                reference: last.reference.half(),
                reference_vis: last.reference_vis.half_min(),
            };
            pyramid.push(next);
        }
        Ok(Self {
            levels: pyramid,
            eps,
        })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Count of jointly visible pixels and total pixels at `level` under `p`.
    pub fn joint_visibility(&self, level: usize, p: &AffineParams) -> (usize, usize) {
        let lv = &self.levels[level];
        let map = p.to_pixel(lv.target.dims(), lv.reference.dims());
        let mut vbuf = [0.0];
        let mut visible = 0;
        for y in 0..lv.target.height {
            for x in 0..lv.target.width {
                if lv.target_vis.data[y * lv.target.width + x] < VISIBILITY_THRESHOLD {
                    continue;
                }
                let (sx, sy) = map.apply(x as f64, y as f64);
                if !lv.reference.in_bounds(sx, sy) {
                    continue;
                }
                lv.reference_vis.sample(sx, sy, &mut vbuf);
                if vbuf[0] >= VISIBILITY_THRESHOLD {
                    visible += 1;
                }
            }
        }
        (visible, lv.target.width * lv.target.height)
    }

    /// Mean Charbonnier residual over jointly visible pixels (channels summed
    /// per pixel). `None` when no pixel is jointly visible.
    pub fn objective(&self, level: usize, p: &AffineParams) -> Option<f64> {
        let lv = &self.levels[level];
        let map = p.to_pixel(lv.target.dims(), lv.reference.dims());
        let c = lv.target.channels;
        let eps2 = self.eps * self.eps;
        let mut vbuf = [0.0];
        let mut val = [0.0; 4];
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in 0..lv.target.height {
            for x in 0..lv.target.width {
                let i = y * lv.target.width + x;
                if lv.target_vis.data[i] < VISIBILITY_THRESHOLD {
                    continue;
                }
                let (sx, sy) = map.apply(x as f64, y as f64);
                if !lv.reference.in_bounds(sx, sy) {
                    continue;
                }
                lv.reference_vis.sample(sx, sy, &mut vbuf);
                if vbuf[0] < VISIBILITY_THRESHOLD {
                    continue;
                }
                lv.reference.sample(sx, sy, &mut val[..c]);
                for k in 0..c {
                    let d = lv.target.data[i * c + k] - val[k];
                    sum += (d * d + eps2).sqrt();
                }
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    /// Analytic gradient of [`AlignProblem::objective`] with the visible set
    /// held fixed at `p`.
    pub fn gradient(&self, level: usize, p: &AffineParams) -> Option<[f64; 6]> {
        self.normal_equations(level, p).map(|ne| {
            let g = ne.gradient;
            [g[0], g[1], g[2], g[3], g[4], g[5]]
        })
    }

    fn normal_equations(&self, level: usize, p: &AffineParams) -> Option<NormalEquations> {
        let lv = &self.levels[level];
        let (w, h) = lv.target.dims();
        let map = p.to_pixel((w, h), lv.reference.dims());
        let c = lv.target.channels;
        let eps2 = self.eps * self.eps;
        let half_w = 0.5 * lv.reference.width as f64;
        let half_h = 0.5 * lv.reference.height as f64;
        let mut vbuf = [0.0];
        let (mut val, mut gx, mut gy) = ([0.0; 4], [0.0; 4], [0.0; 4]);
        let mut hessian = Matrix6::zeros();
        let mut gradient = Vector6::zeros();
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in 0..h {
            let v = (2.0 * y as f64 + 1.0) / h as f64 - 1.0;
            for x in 0..w {
                let i = y * w + x;
                if lv.target_vis.data[i] < VISIBILITY_THRESHOLD {
                    continue;
                }
                let (sx, sy) = map.apply(x as f64, y as f64);
                if !lv.reference.in_bounds(sx, sy) {
                    continue;
                }
                lv.reference_vis.sample(sx, sy, &mut vbuf);
                if vbuf[0] < VISIBILITY_THRESHOLD {
                    continue;
                }
                let u = (2.0 * x as f64 + 1.0) / w as f64 - 1.0;
                lv.reference
                    .sample_with_gradient(sx, sy, &mut val[..c], &mut gx[..c], &mut gy[..c]);
                for k in 0..c {
                    let r = lv.target.data[i * c + k] - val[k];
                    let rho = (r * r + eps2).sqrt();
                    sum += rho;
                    let ax = gx[k] * half_w;
                    let ay = gy[k] * half_h;
                    // d r / d p
                    let j = Vector6::new(-ax * u, -ax * v, -ay * u, -ay * v, -ax, -ay);
                    let wgt = 1.0 / rho;
                    hessian.syger(wgt, &j, &j, 1.0);
                    gradient.axpy(r * wgt, &j, 1.0);
                }
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        let n = count as f64;
        for r in 0..6 {
            for col in 0..r {
                hessian[(col, r)] = hessian[(r, col)];
            }
        }
        Some(NormalEquations {
            objective: sum / n,
            hessian: hessian / n,
            gradient: gradient / n,
        })
    }

    /// Levenberg-Marquardt descent on one level starting from `start`.
    fn refine_level(
        &self,
        level: usize,
        start: AffineParams,
        cfg: &AlignConfig,
        trace: &mut Vec<TraceEntry>,
    ) -> Result<AffineParams> {
        let mut p = start;
        let Some(mut current) = self.objective(level, &p) else {
            return Ok(p);
        };
        if !current.is_finite() {
            return Err(Error::NonFinite("alignment objective"));
        }
        trace.push(TraceEntry {
            level,
            iter: 0,
            objective: current,
        });
        let mut lambda = 1e-3;
        for iter in 1..=cfg.max_iters_per_level {
            let Some(ne) = self.normal_equations(level, &p) else {
                break;
            };
            if !ne.objective.is_finite() {
                return Err(Error::NonFinite("alignment objective"));
            }
            let mut accepted = None;
            while lambda <= 1e10 {
                let mut a = ne.hessian;
                for d in 0..6 {
                    a[(d, d)] += lambda * ne.hessian[(d, d)] + 1e-12;
                }
                let Some(delta) = a.cholesky().map(|ch| ch.solve(&(-ne.gradient))) else {
                    lambda *= 10.0;
                    continue;
                };
                let mut arr = p.to_array();
                for (k, v) in arr.iter_mut().enumerate() {
                    *v += delta[k];
                }
                let cand = AffineParams::from_array(arr);
                if cand.validate().is_ok() {
                    if let Some(e) = self.objective(level, &cand) {
                        if e < current {
                            accepted = Some((cand, e));
                            lambda = (lambda * 0.1).max(1e-9);
                            break;
                        }
                    }
                }
                lambda *= 10.0;
            }
            let Some((cand, e)) = accepted else {
                break;
            };
            let decrease = (current - e) / current.max(f64::MIN_POSITIVE);
            p = cand;
            current = e;
            trace.push(TraceEntry {
                level,
                iter,
                objective: current,
            });
            if decrease < cfg.tolerance {
                break;
            }
        }
        Ok(p)
    }
}

/// Rotations (degrees) tried by the coarse search around the start point.
const SEARCH_ROTATIONS: [f64; 7] = [-12.0, -8.0, -4.0, 0.0, 4.0, 8.0, 12.0];
/// Isotropic scales tried by the coarse search.
const SEARCH_SCALES: [f64; 5] = [0.88, 0.94, 1.0, 1.06, 1.12];
/// Translation half-range of the coarse search as a fraction of the image side.
const SEARCH_SHIFT_FRACTION: f64 = 0.125;
/// Number of best grid candidates refined at the coarsest level.
const SEARCH_KEEP: usize = 3;

impl AlignProblem {
    /// Grid search of similarity perturbations of `init` on `level`, then
    /// descent from the best few candidates. `init` itself is always one of
    /// the refined candidates, so the result is never worse than refining it.
    fn best_start(
        &self,
        level: usize,
        init: &AffineParams,
        cfg: &AlignConfig,
        trace: &mut Vec<TraceEntry>,
    ) -> Result<AffineParams> {
        let lv = &self.levels[level];
        let dims = lv.target.dims();
        let ref_dims = lv.reference.dims();
        let init_px = init.to_pixel(dims, ref_dims);
        let cx = 0.5 * (dims.0 as f64 - 1.0);
        let cy = 0.5 * (dims.1 as f64 - 1.0);
        let rx = (SEARCH_SHIFT_FRACTION * dims.0 as f64).ceil() as i64;
        let ry = (SEARCH_SHIFT_FRACTION * dims.1 as f64).ceil() as i64;

        let mut scored: Vec<(f64, AffineParams)> = Vec::new();
        for &deg in &SEARCH_ROTATIONS {
            for &scale in &SEARCH_SCALES {
                for dy in -ry..=ry {
                    for dx in -rx..=rx {
                        let perturb = super::PixelAffine::about_center(
                            cx,
                            cy,
                            deg.to_radians(),
                            scale,
                            0.0,
                            dx as f64,
                            dy as f64,
                        );
                        let cand_px = init_px.then_after(&perturb);
                        let cand = AffineParams::from_pixel(&cand_px, dims, ref_dims);
                        if cand.validate().is_err() {
                            continue;
                        }
                        let (visible, total) = self.joint_visibility(level, &cand);
                        if (visible as f64) < 0.25 * total as f64 {
                            continue;
                        }
                        if let Some(e) = self.objective(level, &cand) {
                            if e.is_finite() {
                                scored.push((e, cand));
                            }
                        }
                    }
                }
            }
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut starts = vec![*init];
        starts.extend(scored.into_iter().take(SEARCH_KEEP).map(|(_, p)| p));
        let mut best: Option<(f64, AffineParams, Vec<TraceEntry>)> = None;
        for start in starts {
            let mut local = Vec::new();
            let p = self.refine_level(level, start, cfg, &mut local)?;
            let Some(e) = self.objective(level, &p) else {
                continue;
            };
            if best.as_ref().is_none_or(|(b, _, _)| e < *b) {
                best = Some((e, p, local));
            }
        }
        match best {
            Some((_, p, local)) => {
                trace.extend(local);
                Ok(p)
            }
            None => Ok(*init),
        }
    }
}

/// Full registration with an explicit starting point.
pub fn register(
    target: &Frame,
    v_t: &VisibilityMap,
    reference: &Frame,
    v_r: &VisibilityMap,
    cfg: &AlignConfig,
    init: &AffineParams,
) -> Result<Registration> {
    cfg.validate()?;
    init.validate()?;
    let problem = AlignProblem::new(
        target,
        v_t,
        reference,
        v_r,
        cfg.pyramid_levels,
        cfg.charbonnier_eps,
    )?;
    let coarsest = problem.level_count() - 1;
    let (visible, total) = problem.joint_visibility(coarsest, init);
    if (visible as f64) < MIN_JOINT_VISIBILITY * total as f64 {
        return Err(Error::InsufficientVisibility { visible, total });
    }
    let initial_objective = problem
        .objective(0, init)
        .ok_or(Error::InsufficientVisibility { visible: 0, total })?;
    if !initial_objective.is_finite() {
        return Err(Error::NonFinite("alignment objective"));
    }

    let mut trace = Vec::new();
    let mut p = problem.best_start(coarsest, init, cfg, &mut trace)?;
    for level in (0..coarsest).rev() {
        p = problem.refine_level(level, p, cfg, &mut trace)?;
    }
    let objective = problem.objective(0, &p).unwrap_or(f64::INFINITY);
    if !(objective <= initial_objective) {
        return Ok(Registration {
            params: *init,
            objective: initial_objective,
            initial_objective,
            trace,
        });
    }
    Ok(Registration {
        params: p,
        objective,
        initial_objective,
        trace,
    })
}

/// Estimates the affine map aligning `reference` to `target`, starting from
/// the identity.
pub fn estimate_affine(
    target: &Frame,
    v_t: &VisibilityMap,
    reference: &Frame,
    v_r: &VisibilityMap,
    cfg: &AlignConfig,
) -> Result<AffineParams> {
    register(target, v_t, reference, v_r, cfg, &AffineParams::IDENTITY).map(|r| r.params)
}
