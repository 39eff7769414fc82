//! Flat `key = value` configuration files.
//!
//! Blank lines and text after `#` are ignored. Every key must be known.

use std::path::Path;

use crate::align::InitMode;
use crate::datasynth::SynthParams;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::pipeline::InpaintConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub inpaint: InpaintConfig,
    pub loss: LossWeights,
    pub synth: SynthParams,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::default();
        s.apply_text(&text)?;
        Ok(s)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.inpaint.validate()?;
        self.loss.validate()?;
        self.synth.validate()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let ip = &mut self.inpaint;
        let sy = &mut self.synth;
        let lw = &mut self.loss;
        match key {
            "max_refs" => ip.max_refs = parse_num(key, v)?,
            "ref_stride" => ip.ref_stride = v.parse()?,
            "bidirectional" => ip.bidirectional = parse_bool(key, v)?,
            "reference_update" => ip.reference_update = parse_bool(key, v)?,
            "softmax" => ip.softmax = v.parse()?,

            "encoder.kind" => ip.encoder.kind = v.parse()?,
            "encoder.stride" => ip.encoder.stride = parse_num(key, v)?,
            "encoder.channels" => ip.encoder.channels = parse_num(key, v)?,
            "encoder.seed" => ip.encoder.seed = parse_num(key, v)?,
            "encoder.layers" => ip.encoder.layers = parse_num(key, v)?,

            "align.levels" => ip.align.pyramid_levels = parse_num(key, v)?,
            "align.max_iters" => ip.align.max_iters_per_level = parse_num(key, v)?,
            "align.tol" => ip.align.tolerance = parse_num(key, v)?,
            "align.eps" => ip.align.charbonnier_eps = parse_num(key, v)?,
            "align.init" => {
                ip.align.init = match v {
                    "identity" => InitMode::Identity,
                    "previous" => InitMode::Previous,
                    _ => return Err(Error::Config(format!("`{key}`: expected identity or previous"))),
                }
            }

            "loss.align" => lw.align = parse_num(key, v)?,
            "loss.hole_visible" => lw.hole_visible = parse_num(key, v)?,
            "loss.hole_invisible" => lw.hole_invisible = parse_num(key, v)?,
            "loss.non_hole" => lw.non_hole = parse_num(key, v)?,
            "loss.perceptual" => lw.perceptual = parse_num(key, v)?,
            "loss.style" => lw.style = parse_num(key, v)?,
            "loss.tv" => lw.tv = parse_num(key, v)?,

            "synth.n_frames" => sy.n_frames = parse_num(key, v)?,
            "synth.out_size" => sy.out_size = parse_num(key, v)?,
            "synth.rotation_deg" => sy.step_rotation_deg = parse_num(key, v)?,
            "synth.shear_deg" => sy.step_shear_deg = parse_num(key, v)?,
            "synth.scale" => sy.step_scale = parse_num(key, v)?,
            "synth.translation_px" => sy.step_translation_px = parse_num(key, v)?,
            "synth.mask_scale_max" => sy.mask_scale_max = parse_num(key, v)?,
            "synth.mask_translation_px" => sy.mask_step_translation_px = parse_num(key, v)?,
            "synth.mask_rotation_deg" => sy.mask_step_rotation_deg = parse_num(key, v)?,
            "synth.seed" => sy.seed = parse_num(key, v)?,

            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::EncoderKind;
    use crate::matcher::SoftmaxMode;
    use crate::pipeline::RefStride;

    #[test]
    fn parses_known_keys() {
        let mut s = Settings::default();
        s.apply_text(
            "# ablation\nsoftmax = normal\nreference_update=off\n\nencoder.kind = raw-pool # fast\n\
             ref_stride = 2\nalign.init = identity\nloss.tv = 0.5\nsynth.n_frames = 7\n",
        )
        .unwrap();
        assert_eq!(s.inpaint.softmax, SoftmaxMode::Normal);
        assert!(!s.inpaint.reference_update);
        assert_eq!(s.inpaint.encoder.kind, EncoderKind::RawPool);
        assert_eq!(s.inpaint.ref_stride, RefStride::Every(2));
        assert_eq!(s.inpaint.align.init, InitMode::Identity);
        assert_eq!(s.loss.tv, 0.5);
        assert_eq!(s.synth.n_frames, 7);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut s = Settings::default();
        assert!(matches!(s.apply_text("colour = red"), Err(Error::Config(_))));
        assert!(matches!(s.apply_text("max_refs"), Err(Error::Config(_))));
        assert!(matches!(s.apply_text("max_refs = many"), Err(Error::Config(_))));
        assert!(matches!(s.apply_text("max_refs = 0"), Err(Error::Config(_))));
        assert!(matches!(s.apply_text("bidirectional = maybe"), Err(Error::Config(_))));
    }
}
