//! Frame, mask and visibility containers plus image-sequence I/O.
//!
//! Frames are stored as interleaved RGB `f64` in `[0, 1]`. Masks use `1` for
//! hole pixels; visibility maps are the complement (`1` = usable pixel).

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

use crate::error::{ensure_dims, Error, Result};

/// Smallest accepted frame side, in pixels.
pub const MIN_FRAME_SIDE: usize = 8;

/// Gray level at or above which a stored mask pixel counts as hole.
pub const MASK_THRESHOLD: u8 = 128;

/// An RGB frame with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    /// Builds a frame from interleaved RGB samples, validating the invariants.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::InvalidInput(format!(
                "frame {width}x{height} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "frame buffer has {} samples, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidInput(format!(
                "frame sample {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Uniform frame.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel. Samples are
    /// clamped into `[0, 1]`; non-finite samples become 0.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(
            width >= MIN_FRAME_SIDE && height >= MIN_FRAME_SIDE,
            "frame {width}x{height} below minimum size"
        );
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(clamp_unit));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub(crate) fn from_raw_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = clamp_unit(v);
        }
    }

    /// Single channel copy as a [`Plane`].
    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < 3);
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let data = img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(img.width() as usize, img.height() as usize, data)
    }
}

/// Binary hole mask, `1` marks a missing pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl HoleMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask buffer has {} samples, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_hole(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, hole: bool) {
        self.data[y * self.width + x] = u8::from(hole);
    }

    pub fn hole_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.hole_count() == 0
    }

    /// Elementwise complement.
    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn to_gray8(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&v| v * 255).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_gray8(img: &GrayImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img
                .as_raw()
                .iter()
                .map(|&b| u8::from(b >= MASK_THRESHOLD))
                .collect(),
        }
    }
}

/// A real-valued single-channel map (weights, saliency, grayscale content).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Grayscale export, values clamped to `[0, 1]` and scaled by 255.
    pub fn to_gray8(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }
}

/// Per-pixel usability, `1` = fully visible.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    binary: bool,
}

impl VisibilityMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>, binary: bool) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "visibility buffer has {} samples, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("visibility values must lie in [0, 1]".into()));
        }
        if binary && data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("binary visibility must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
            binary,
        })
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1.0; width * height],
            binary: true,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
            binary: true,
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>, binary: bool) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
            binary,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn visible_count(&self) -> usize {
        self.data.iter().filter(|&&v| v >= 1.0).count()
    }

    /// Elementwise product; binary if both operands are.
    pub fn product(&self, other: &Self) -> Result<Self> {
        ensure_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
            binary: self.binary && other.binary,
        })
    }

    /// Hole mask with `1` wherever visibility is below 1.
    pub fn to_hole_mask(&self) -> HoleMask {
        HoleMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| u8::from(v < 1.0)).collect(),
        }
    }

    pub fn as_plane(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }
}

/// Ordered frames with one hole mask each.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Vec<Frame>,
    masks: Vec<HoleMask>,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, masks: Vec<HoleMask>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("clip needs at least one frame".into()));
        }
        if frames.len() != masks.len() {
            return Err(Error::CountMismatch {
                frames: frames.len(),
                masks: masks.len(),
            });
        }
        let dims = frames[0].dims();
        for (f, m) in frames.iter().zip(&masks) {
            ensure_dims(dims, f.dims())?;
            ensure_dims(dims, m.dims())?;
        }
        Ok(Self { frames, masks })
    }

    /// Clip with all-zero masks.
    pub fn unmasked(frames: Vec<Frame>) -> Result<Self> {
        let masks = frames
            .iter()
            .map(|f| HoleMask::empty(f.width(), f.height()))
            .collect();
        Self::new(frames, masks)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn masks(&self) -> &[HoleMask] {
        &self.masks
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    pub fn mask(&self, t: usize) -> &HoleMask {
        &self.masks[t]
    }

    /// Replaces frame `t` and its mask, keeping dimensions consistent.
    pub fn replace(&mut self, t: usize, frame: Frame, mask: HoleMask) -> Result<()> {
        ensure_dims(self.dims(), frame.dims())?;
        ensure_dims(self.dims(), mask.dims())?;
        self.frames[t] = frame;
        self.masks[t] = mask;
        Ok(())
    }

    pub fn into_parts(self) -> (Vec<Frame>, Vec<HoleMask>) {
        (self.frames, self.masks)
    }
}

#[inline]
fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Clamp to `[0, 1]`, scale to 255 and round.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// Regular, non-hidden files of `dir` in lexicographic order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Frame::from_rgb8(&img.to_rgb8())
}

pub fn load_mask(path: &Path) -> Result<HoleMask> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(HoleMask::from_gray8(&img.to_luma8()))
}

/// Loads a clip from a frame directory and a mask directory, pairing files
/// by lexicographic order.
pub fn load_clip(frame_dir: &Path, mask_dir: &Path) -> Result<VideoClip> {
    let frame_paths = list_images(frame_dir)?;
    let mask_paths = list_images(mask_dir)?;
    if frame_paths.is_empty() {
        return Err(Error::NoFrames(frame_dir.to_path_buf()));
    }
    if frame_paths.len() != mask_paths.len() {
        return Err(Error::CountMismatch {
            frames: frame_paths.len(),
            masks: mask_paths.len(),
        });
    }
    let mut frames = Vec::with_capacity(frame_paths.len());
    let mut masks = Vec::with_capacity(mask_paths.len());
    for (fp, mp) in frame_paths.iter().zip(&mask_paths) {
        let frame = load_frame(fp)?;
        let mask = load_mask(mp)?;
        ensure_dims(frame.dims(), mask.dims())?;
        frames.push(frame);
        masks.push(mask);
    }
    VideoClip::new(frames, masks)
}

/// Loads every frame of a directory without masks.
pub fn load_frames(dir: &Path) -> Result<Vec<Frame>> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    paths.iter().map(|p| load_frame(p)).collect()
}

pub fn load_masks(dir: &Path) -> Result<Vec<HoleMask>> {
    list_images(dir)?.iter().map(|p| load_mask(p)).collect()
}

pub(crate) fn sequence_name(i: usize, n: usize) -> String {
    let digits = n.max(1).to_string().len().max(5);
    format!("{i:0digits$}.png")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    frame.to_rgb8().save(path).map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_gray(img: &GrayImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes frames as zero-padded `NNNNN.png` files.
pub fn save_frames(frames: &[Frame], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    for (i, f) in frames.iter().enumerate() {
        save_frame(f, &dir.join(sequence_name(i, frames.len())))?;
    }
    Ok(())
}

/// Writes masks as 0/255 grayscale files.
pub fn save_masks(masks: &[HoleMask], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    for (i, m) in masks.iter().enumerate() {
        save_gray(&m.to_gray8(), &dir.join(sequence_name(i, masks.len())))?;
    }
    Ok(())
}

/// Saves a clip under `out_dir/frames` and `out_dir/masks`.
pub fn save_clip(clip: &VideoClip, out_dir: &Path) -> Result<()> {
    save_frames(clip.frames(), &out_dir.join("frames"))?;
    save_masks(clip.masks(), &out_dir.join("masks"))
}

/// `V = 1 - M`.
pub fn mask_to_visibility(mask: &HoleMask) -> VisibilityMap {
    VisibilityMap {
        width: mask.width,
        height: mask.height,
        data: mask.data.iter().map(|&m| 1.0 - f64::from(m)).collect(),
        binary: true,
    }
}

/// Block-minimum downsampling. Dimensions that are not multiples of `factor`
/// are padded by edge replication first, so the output is
/// `ceil(W / factor) x ceil(H / factor)`.
pub fn downsample_visibility(v: &VisibilityMap, factor: usize) -> Result<VisibilityMap> {
    if factor == 0 {
        return Err(Error::InvalidInput("downsampling factor must be positive".into()));
    }
    let out_w = v.width.div_ceil(factor);
    let out_h = v.height.div_ceil(factor);
    let mut data = vec![1.0f64; out_w * out_h];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut m = f64::INFINITY;
            for dy in 0..factor {
                let y = (oy * factor + dy).min(v.height - 1);
                for dx in 0..factor {
                    let x = (ox * factor + dx).min(v.width - 1);
                    m = m.min(v.get(x, y));
                }
            }
            data[oy * out_w + ox] = m;
        }
    }
    Ok(VisibilityMap::from_raw(out_w, out_h, data, v.binary))
}
