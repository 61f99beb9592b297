//! Training configuration, read from flat `key = value` text files.
//!
//! Blank lines and `#` comments are skipped; unknown keys are errors. Every
//! key has a default taken from the bundled `configs/synthlab.cfg`.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::MixDirection;
use crate::pseudo::ConfidenceMode;
use crate::synthlab::scene::{DomainSpec, PhotometricShift};

pub const DEFAULT_CONFIG: &str = include_str!("../../configs/synthlab.cfg");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub ema_alpha: f64,
    pub hidden_dim: usize,
    pub conf_threshold: f64,
    #[serde(with = "mode_serde")]
    pub confidence_mode: ConfidenceMode,
    pub imix: bool,
    pub imix_start_fraction: f64,
    pub tau: f64,
    #[serde(with = "direction_serde")]
    pub direction: MixDirection,
    pub occlusion_eps: f64,
    pub cda: bool,
    pub cda_weight: f64,
    pub fd_weight: f64,
    pub min_component_area: usize,
    pub eval_scenes: usize,
    pub height: usize,
    pub width: usize,
    pub shapes_min: usize,
    pub shapes_max: usize,
    pub radius_min: usize,
    pub radius_max: usize,
    pub texture_sigma: f64,
    pub target_hue_degrees: f64,
    pub target_fog_alpha: f64,
    pub target_noise_sigma: f64,
}

mod mode_serde {
    use super::*;
    pub fn serialize<S: serde::Serializer>(m: &ConfidenceMode, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(mode_name(*m))
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<ConfidenceMode, D::Error> {
        let s = String::deserialize(d)?;
        parse_mode(&s).map_err(serde::de::Error::custom)
    }
}

mod direction_serde {
    use super::*;
    pub fn serialize<S: serde::Serializer>(m: &MixDirection, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(direction_name(*m))
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<MixDirection, D::Error> {
        let s = String::deserialize(d)?;
        MixDirection::from_str(&s).map_err(serde::de::Error::custom)
    }
}

pub fn direction_name(d: MixDirection) -> &'static str {
    match d {
        MixDirection::TargetToSource => "t2s",
        MixDirection::SourceToTarget => "s2t",
    }
}

fn mode_name(m: ConfidenceMode) -> &'static str {
    match m {
        ConfidenceMode::PerImage => "per_image",
        ConfidenceMode::PerPixel => "per_pixel",
    }
}

fn parse_mode(s: &str) -> Result<ConfidenceMode> {
    match s {
        "per_image" => Ok(ConfidenceMode::PerImage),
        "per_pixel" => Ok(ConfidenceMode::PerPixel),
        other => Err(Error::InvalidValue(format!("unknown confidence mode '{other}'"))),
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidValue(format!("bad value '{v}' for key '{key}'")))
}

/// Key/value pairs of a config text, sorted by key.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Format(format!("line {}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(out)
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::blank().with_text(DEFAULT_CONFIG).expect("bundled config is valid")
    }
}

impl TrainConfig {
    fn blank() -> Self {
        Self {
            seed: 0,
            iterations: 0,
            epochs: 1,
            learning_rate: 0.0,
            ema_alpha: 0.0,
            hidden_dim: 1,
            conf_threshold: 0.0,
            confidence_mode: ConfidenceMode::PerImage,
            imix: false,
            imix_start_fraction: 0.0,
            tau: 0.0,
            direction: MixDirection::TargetToSource,
            occlusion_eps: 0.0,
            cda: false,
            cda_weight: 0.0,
            fd_weight: 0.0,
            min_component_area: 1,
            eval_scenes: 1,
            height: 0,
            width: 0,
            shapes_min: 0,
            shapes_max: 0,
            radius_min: 0,
            radius_max: 0,
            texture_sigma: 0.0,
            target_hue_degrees: 0.0,
            target_fog_alpha: 0.0,
            target_noise_sigma: 0.0,
        }
    }

    /// Parses a config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        Self::default().with_text(text)
    }

    /// Applies the keys of `text` to `self`.
    pub fn with_text(mut self, text: &str) -> Result<Self> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "iterations" => self.iterations = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "ema_alpha" => self.ema_alpha = parse_value(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "conf_threshold" => self.conf_threshold = parse_value(key, v)?,
            "confidence_mode" => self.confidence_mode = parse_mode(v)?,
            "imix" => self.imix = parse_value(key, v)?,
            "imix_start_fraction" => self.imix_start_fraction = parse_value(key, v)?,
            "tau" => self.tau = parse_value(key, v)?,
            "direction" => self.direction = v.parse()?,
            "occlusion_eps" => self.occlusion_eps = parse_value(key, v)?,
            "cda" => self.cda = parse_value(key, v)?,
            "cda_weight" => self.cda_weight = parse_value(key, v)?,
            "fd_weight" => self.fd_weight = parse_value(key, v)?,
            "min_component_area" => self.min_component_area = parse_value(key, v)?,
            "eval_scenes" => self.eval_scenes = parse_value(key, v)?,
            "height" => self.height = parse_value(key, v)?,
            "width" => self.width = parse_value(key, v)?,
            "shapes_min" => self.shapes_min = parse_value(key, v)?,
            "shapes_max" => self.shapes_max = parse_value(key, v)?,
            "radius_min" => self.radius_min = parse_value(key, v)?,
            "radius_max" => self.radius_max = parse_value(key, v)?,
            "texture_sigma" => self.texture_sigma = parse_value(key, v)?,
            "target_hue_degrees" => self.target_hue_degrees = parse_value(key, v)?,
            "target_fog_alpha" => self.target_fog_alpha = parse_value(key, v)?,
            "target_noise_sigma" => self.target_noise_sigma = parse_value(key, v)?,
            other => return Err(Error::InvalidValue(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidValue(m));
        if !(0.0..=1.0).contains(&self.imix_start_fraction) {
            return bad(format!("imix_start_fraction {} outside [0,1]", self.imix_start_fraction));
        }
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return bad(format!("ema_alpha {} outside [0,1]", self.ema_alpha));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0,1]", self.tau));
        }
        if !(0.0..=1.0).contains(&self.occlusion_eps) {
            return bad(format!("occlusion_eps {} outside [0,1]", self.occlusion_eps));
        }
        if self.epochs == 0 || self.eval_scenes == 0 || self.hidden_dim == 0 {
            return bad("epochs, eval_scenes and hidden_dim must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be a non-negative number", self.learning_rate));
        }
        if self.cda_weight < 0.0 || self.fd_weight < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        self.source_spec().validate()
    }

    pub fn source_spec(&self) -> DomainSpec {
        DomainSpec {
            height: self.height,
            width: self.width,
            shapes_min: self.shapes_min,
            shapes_max: self.shapes_max,
            radius_min: self.radius_min,
            radius_max: self.radius_max,
            texture_sigma: self.texture_sigma,
            ..Default::default()
        }
    }

    pub fn target_spec(&self) -> DomainSpec {
        self.source_spec().shifted(PhotometricShift {
            hue_degrees: self.target_hue_degrees,
            fog_alpha: self.target_fog_alpha,
            fog_color: [180, 180, 180],
            noise_sigma: self.target_noise_sigma,
        })
    }

    /// Iteration from which the instance-mixing branch runs.
    pub fn imix_start_iteration(&self) -> usize {
        (self.imix_start_fraction * self.iterations as f64).floor() as usize
    }

    /// Canonical text form; parsing it yields `self` again.
    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}
