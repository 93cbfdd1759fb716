//! Flat `key = value` run configuration shared by the command-line tools.
//!
//! Blank lines and text after `#` are ignored. A key given twice keeps its
//! last value. Settings applied after the file (for example command-line
//! flags) override it.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::association::{AssignOrder, FusionWeights, MutualCheckStage, TrackerConfig, TrackerMode};
use crate::error::{Error, Result};
use crate::instance::{LossKind, MatchOptions, RoiConfig, TrainConfig};
use crate::mask::RoiAnchor;

/// Every tunable of a run. Paths are handled by the caller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: TrackerMode,
    pub tau_match: f64,
    pub theta: f64,
    pub mutual_check: bool,
    pub mutual_check_stage: MutualCheckStage,
    pub temporal: bool,
    pub memory_window: usize,
    pub w_instance: f64,
    pub w_pixel: f64,
    pub fusion_bias: f64,
    pub class_gated: bool,
    pub assign_order: AssignOrder,
    pub roi_height: usize,
    pub roi_width: usize,
    pub roi_anchor: RoiAnchor,
    pub d_hidden: usize,
    pub d_embed: usize,
    pub cosine: bool,
    pub loss: LossKind,
    pub lr: f64,
    pub epochs: usize,
    /// Zero means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrackerConfig::default();
        let r = RoiConfig::default();
        let tr = TrainConfig::default();
        Self {
            mode: t.mode,
            tau_match: t.tau_match,
            theta: t.theta,
            mutual_check: t.mutual_check,
            mutual_check_stage: t.mutual_check_stage,
            temporal: t.temporal,
            memory_window: t.memory_window,
            w_instance: t.fusion.w_instance,
            w_pixel: t.fusion.w_pixel,
            fusion_bias: t.fusion.bias,
            class_gated: t.class_gated,
            assign_order: t.assign_order,
            roi_height: r.height,
            roi_width: r.width,
            roi_anchor: r.anchor,
            d_hidden: tr.d_hidden,
            d_embed: tr.d_embed,
            cosine: tr.options.cosine,
            loss: tr.options.loss,
            lr: tr.lr,
            epochs: tr.epochs,
            batch_size: 0,
            seed: 0,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "mode",
    "tau_match",
    "theta",
    "mutual_check",
    "mutual_check_stage",
    "temporal",
    "memory_window",
    "w_instance",
    "w_pixel",
    "fusion_bias",
    "class_gated",
    "assign_order",
    "roi_height",
    "roi_width",
    "roi_anchor",
    "d_hidden",
    "d_embed",
    "cosine",
    "loss",
    "lr",
    "epochs",
    "batch_size",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key} = {value:?}: expected a boolean"))),
    }
}

fn parse_choice<T: Copy>(key: &str, value: &str, choices: &[(&str, T)]) -> Result<T> {
    choices
        .iter()
        .find(|(name, _)| *name == value)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
            Error::InvalidConfig(format!("{key} = {value:?}: expected one of {}", names.join(", ")))
        })
}

const STAGES: [(&str, MutualCheckStage); 2] = [
    ("after_assign", MutualCheckStage::AfterAssign),
    ("before_assign", MutualCheckStage::BeforeAssign),
];
const ORDERS: [(&str, AssignOrder); 2] = [
    ("best_score", AssignOrder::BestScore),
    ("row_index", AssignOrder::RowIndex),
];
const ANCHORS: [(&str, RoiAnchor); 2] = [("top_left", RoiAnchor::TopLeft), ("center", RoiAnchor::Center)];
const LOSSES: [(&str, LossKind); 2] = [("categorical", LossKind::Categorical), ("binary", LossKind::Binary)];

fn name_of<T: PartialEq + Copy>(v: T, choices: &[(&'static str, T)]) -> &'static str {
    choices.iter().find(|(_, c)| *c == v).map(|(n, _)| *n).unwrap_or("?")
}

impl RunConfig {
    /// Parses `text` on top of the defaults and validates the result.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_text(&text).map_err(|e| e.at(path))
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key from its textual value. Ranges are checked by
    /// [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.parse()?,
            "tau_match" => self.tau_match = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "mutual_check" => self.mutual_check = parse_bool(key, value)?,
            "mutual_check_stage" => self.mutual_check_stage = parse_choice(key, value, &STAGES)?,
            "temporal" => self.temporal = parse_bool(key, value)?,
            "memory_window" => self.memory_window = parse(key, value)?,
            "w_instance" => self.w_instance = parse(key, value)?,
            "w_pixel" => self.w_pixel = parse(key, value)?,
            "fusion_bias" => self.fusion_bias = parse(key, value)?,
            "class_gated" => self.class_gated = parse_bool(key, value)?,
            "assign_order" => self.assign_order = parse_choice(key, value, &ORDERS)?,
            "roi_height" => self.roi_height = parse(key, value)?,
            "roi_width" => self.roi_width = parse(key, value)?,
            "roi_anchor" => self.roi_anchor = parse_choice(key, value, &ANCHORS)?,
            "d_hidden" => self.d_hidden = parse(key, value)?,
            "d_embed" => self.d_embed = parse(key, value)?,
            "cosine" => self.cosine = parse_bool(key, value)?,
            "loss" => self.loss = parse_choice(key, value, &LOSSES)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (key, v) in [("tau_match", self.tau_match), ("theta", self.theta)] {
            if !(0.0..=1.1).contains(&v) {
                return bad(format!("{key} = {v} outside [0, 1.1]"));
            }
        }
        for (key, v) in [
            ("roi_height", self.roi_height),
            ("roi_width", self.roi_width),
            ("d_hidden", self.d_hidden),
            ("d_embed", self.d_embed),
        ] {
            if v < 1 {
                return bad(format!("{key} must be at least 1"));
            }
        }
        for (key, v) in [
            ("w_instance", self.w_instance),
            ("w_pixel", self.w_pixel),
            ("fusion_bias", self.fusion_bias),
        ] {
            if !v.is_finite() {
                return bad(format!("{key} must be finite"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr = {} must be positive", self.lr));
        }
        Ok(())
    }

    /// Effective value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let vals = [
            self.mode.name().to_string(),
            self.tau_match.to_string(),
            self.theta.to_string(),
            self.mutual_check.to_string(),
            name_of(self.mutual_check_stage, &STAGES).to_string(),
            self.temporal.to_string(),
            self.memory_window.to_string(),
            self.w_instance.to_string(),
            self.w_pixel.to_string(),
            self.fusion_bias.to_string(),
            self.class_gated.to_string(),
            name_of(self.assign_order, &ORDERS).to_string(),
            self.roi_height.to_string(),
            self.roi_width.to_string(),
            name_of(self.roi_anchor, &ANCHORS).to_string(),
            self.d_hidden.to_string(),
            self.d_embed.to_string(),
            self.cosine.to_string(),
            name_of(self.loss, &LOSSES).to_string(),
            self.lr.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.seed.to_string(),
        ];
        KEYS.into_iter().zip(vals).collect()
    }

    /// Renders the config in the file format; parsing it back is lossless.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            mode: self.mode,
            tau_match: self.tau_match,
            theta: self.theta,
            mutual_check: self.mutual_check,
            mutual_check_stage: self.mutual_check_stage,
            temporal: self.temporal,
            memory_window: self.memory_window,
            fusion: FusionWeights::new(self.w_instance, self.w_pixel, self.fusion_bias),
            class_gated: self.class_gated,
            assign_order: self.assign_order,
        }
    }

    pub fn roi(&self) -> RoiConfig {
        RoiConfig {
            height: self.roi_height,
            width: self.roi_width,
            anchor: self.roi_anchor,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            batch_size: (self.batch_size > 0).then_some(self.batch_size),
            d_hidden: self.d_hidden,
            d_embed: self.d_embed,
            options: MatchOptions {
                loss: self.loss,
                cosine: self.cosine,
            },
        }
    }
}
