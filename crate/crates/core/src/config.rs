//! Pipeline configuration: a flat JSON object of tunables.
//!
//! Unknown keys, ill-typed values and out-of-range values are rejected with
//! the offending key named.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::arrowhead::ArrowParams;
use crate::edgetrace::TraceParams;
use crate::labels::{LabelParams, LabelValue};
use crate::lines::HoughParams;
use crate::nodedetect::NodeParams;
use crate::raster::Binarization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinarizationMethod {
    Otsu,
    Fixed,
}

/// Clean-up applied to the binary image before detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denoise {
    None,
    Despeckle,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub binarization: BinarizationMethod,
    pub fixed_threshold: i64,
    pub invert: bool,
    pub denoise: Denoise,
    pub mask_dilation: i64,

    pub min_shape_area: f64,
    pub poly_epsilon: f64,
    pub theta_tol_deg: f64,
    pub circularity_min: f64,
    pub corner_max: f64,
    pub wavy_min: f64,
    pub gap_close: i64,

    pub arrow_area_min: f64,
    pub arrow_area_max: f64,
    pub solidity_min: f64,
    pub triangularity_min: f64,
    pub stroke_width: i64,
    pub target_tol: f64,
    pub open_arrowheads: bool,

    pub rho_res: f64,
    pub theta_res_deg: f64,
    pub votes_min: i64,
    pub min_line_length: f64,
    pub max_line_gap: i64,
    pub theta_merge_deg: f64,
    pub rho_merge: f64,
    pub coverage_min: f64,
    pub coverage_tol: f64,
    pub hough_seed: u64,

    pub join_eps: f64,
    pub start_tol: f64,
    pub theta_align_deg: f64,
    pub node_prox: f64,
    pub max_depth: i64,
    pub cap_width: f64,

    pub label_max_dist: f64,
    pub label_aliases: BTreeMap<String, LabelValue>,

    pub iou_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let n = NodeParams::default();
        let a = ArrowParams::default();
        let h = HoughParams::default();
        let t = TraceParams::default();
        PipelineConfig {
            binarization: BinarizationMethod::Otsu,
            fixed_threshold: 128,
            invert: false,
            denoise: Denoise::Despeckle,
            mask_dilation: 3,
            min_shape_area: n.min_shape_area,
            poly_epsilon: n.poly_epsilon,
            theta_tol_deg: n.theta_tol_deg,
            circularity_min: n.circularity_min,
            corner_max: n.corner_max,
            wavy_min: n.wavy_min,
            gap_close: n.gap_close as i64,
            arrow_area_min: a.area_min,
            arrow_area_max: a.area_max,
            solidity_min: a.solidity_min,
            triangularity_min: a.triangularity_min,
            stroke_width: a.stroke_width as i64,
            target_tol: a.target_tol,
            open_arrowheads: a.open_heads,
            rho_res: h.rho_res,
            theta_res_deg: h.theta_res_deg,
            votes_min: h.votes_min as i64,
            min_line_length: h.min_line_length,
            max_line_gap: h.max_line_gap as i64,
            theta_merge_deg: h.theta_merge_deg,
            rho_merge: h.rho_merge,
            coverage_min: h.coverage_min,
            coverage_tol: h.coverage_tol,
            hough_seed: h.seed,
            join_eps: t.join_eps,
            start_tol: t.start_tol,
            theta_align_deg: t.theta_align_deg,
            node_prox: t.node_prox,
            max_depth: t.max_depth as i64,
            cap_width: t.cap_width,
            label_max_dist: LabelParams::default().max_dist,
            label_aliases: BTreeMap::new(),
            iou_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config is not a JSON object: {0}")]
    NotAnObject(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {message}")]
    InvalidValue { key: String, message: String },
}

impl ConfigError {
    /// The config key the error is about, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) | ConfigError::InvalidValue { key: k, .. } => Some(k),
            _ => None,
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { key: key.to_string(), message: message.into() }
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(PipelineConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("config serializes to an object"),
    }
}

impl PipelineConfig {
    /// Defaults overlaid with each layer in turn (later layers win).
    pub fn from_layers(layers: &[Map<String, Value>]) -> Result<Self, ConfigError> {
        let keys = known_keys();
        let mut merged = match serde_json::to_value(PipelineConfig::default()) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!(),
        };
        for layer in layers {
            for (k, v) in layer {
                if !keys.contains(k) {
                    return Err(ConfigError::UnknownKey(k.clone()));
                }
                let mut probe = Map::new();
                probe.insert(k.clone(), v.clone());
                serde_json::from_value::<PipelineConfig>(Value::Object(probe)).map_err(|e| bad(k, e.to_string()))?;
                merged.insert(k.clone(), v.clone());
            }
        }
        let cfg: PipelineConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| ConfigError::NotAnObject(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_layer(text: &str) -> Result<Map<String, Value>, ConfigError> {
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(ConfigError::NotAnObject("top level must be an object".into())),
            Err(e) => Err(ConfigError::NotAnObject(e.to_string())),
        }
    }

    pub fn load_layer(path: &Path) -> Result<Map<String, Value>, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse_layer(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::from_layers(&[Self::parse_layer(text)?])
    }

    /// Parses a `key=value` override; the value is read as JSON when it
    /// parses, otherwise as a bare string.
    pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
        let (k, v) = s.split_once('=').ok_or_else(|| bad(s, "expected key=value"))?;
        let k = k.trim().to_string();
        let v = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
        Ok((k, v))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn range(key: &str, v: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v >= lo && v <= hi {
                Ok(())
            } else {
                Err(bad(key, format!("{v} is outside [{lo}, {hi}]")))
            }
        }
        fn positive(key: &str, v: f64, hi: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 && v <= hi {
                Ok(())
            } else {
                Err(bad(key, format!("{v} is outside (0, {hi}]")))
            }
        }
        range("fixed_threshold", self.fixed_threshold as f64, 0.0, 255.0)?;
        range("mask_dilation", self.mask_dilation as f64, 0.0, 50.0)?;
        positive("min_shape_area", self.min_shape_area, 1e8)?;
        positive("poly_epsilon", self.poly_epsilon, 0.5)?;
        range("theta_tol_deg", self.theta_tol_deg, 0.0, 45.0)?;
        range("circularity_min", self.circularity_min, 0.0, 1.0)?;
        range("corner_max", self.corner_max, 0.0, 1.0)?;
        range("wavy_min", self.wavy_min, 0.0, 1.0)?;
        range("gap_close", self.gap_close as f64, 0.0, 15.0)?;
        range("arrow_area_min", self.arrow_area_min, 0.0, 1e6)?;
        range("arrow_area_max", self.arrow_area_max, self.arrow_area_min, 1e6)?;
        range("solidity_min", self.solidity_min, 0.0, 1.0)?;
        range("triangularity_min", self.triangularity_min, 0.0, 1.0)?;
        range("stroke_width", self.stroke_width as f64, 1.0, 20.0)?;
        range("target_tol", self.target_tol, 0.0, 1000.0)?;
        positive("rho_res", self.rho_res, 10.0)?;
        positive("theta_res_deg", self.theta_res_deg, 45.0)?;
        range("votes_min", self.votes_min as f64, 1.0, 1e6)?;
        positive("min_line_length", self.min_line_length, 1e5)?;
        range("max_line_gap", self.max_line_gap as f64, 0.0, 100.0)?;
        range("theta_merge_deg", self.theta_merge_deg, 0.0, 45.0)?;
        range("rho_merge", self.rho_merge, 0.0, 50.0)?;
        range("coverage_min", self.coverage_min, 0.0, 1.0)?;
        range("coverage_tol", self.coverage_tol, 0.0, 10.0)?;
        range("join_eps", self.join_eps, 0.0, 100.0)?;
        range("start_tol", self.start_tol, 0.0, 100.0)?;
        range("theta_align_deg", self.theta_align_deg, 0.0, 90.0)?;
        range("node_prox", self.node_prox, 0.0, 200.0)?;
        range("max_depth", self.max_depth as f64, 1.0, 10000.0)?;
        range("cap_width", self.cap_width, 0.0, 100.0)?;
        range("label_max_dist", self.label_max_dist, 0.0, 1e5)?;
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(bad("iou_threshold", format!("{} is outside (0, 1)", self.iou_threshold)));
        }
        Ok(())
    }

    pub fn binarization(&self) -> Binarization {
        match self.binarization {
            BinarizationMethod::Otsu => Binarization::Otsu,
            BinarizationMethod::Fixed => Binarization::FixedThreshold(self.fixed_threshold as u8),
        }
    }

    pub fn node_params(&self) -> NodeParams {
        NodeParams {
            min_shape_area: self.min_shape_area,
            poly_epsilon: self.poly_epsilon,
            theta_tol_deg: self.theta_tol_deg,
            circularity_min: self.circularity_min,
            corner_max: self.corner_max,
            wavy_min: self.wavy_min,
            gap_close: self.gap_close as u32,
        }
    }

    pub fn arrow_params(&self) -> ArrowParams {
        ArrowParams {
            area_min: self.arrow_area_min,
            area_max: self.arrow_area_max,
            solidity_min: self.solidity_min,
            triangularity_min: self.triangularity_min,
            stroke_width: self.stroke_width as u32,
            target_tol: self.target_tol,
            open_heads: self.open_arrowheads,
            ..ArrowParams::default()
        }
    }

    pub fn hough_params(&self) -> HoughParams {
        HoughParams {
            rho_res: self.rho_res,
            theta_res_deg: self.theta_res_deg,
            votes_min: self.votes_min as u32,
            min_line_length: self.min_line_length,
            max_line_gap: self.max_line_gap as u32,
            theta_merge_deg: self.theta_merge_deg,
            rho_merge: self.rho_merge,
            coverage_min: self.coverage_min,
            coverage_tol: self.coverage_tol,
            seed: self.hough_seed,
        }
    }

    pub fn trace_params(&self) -> TraceParams {
        TraceParams {
            join_eps: self.join_eps,
            start_tol: self.start_tol,
            theta_align_deg: self.theta_align_deg,
            node_prox: self.node_prox,
            max_depth: self.max_depth as usize,
            target_tol: self.target_tol,
            cap_width: self.cap_width,
        }
    }

    pub fn label_params(&self) -> LabelParams {
        LabelParams { max_dist: self.label_max_dist, aliases: self.label_aliases.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn out_of_range_names_key() {
        let e = PipelineConfig::from_json(r#"{"theta_align_deg": 400}"#).unwrap_err();
        assert_eq!(e.key(), Some("theta_align_deg"));
        assert!(e.to_string().contains("theta_align_deg"));
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let e = PipelineConfig::from_json(r#"{"theta_allign_deg": 4}"#).unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("theta_allign_deg".into()));
        let e = PipelineConfig::from_json(r#"{"votes_min": "many"}"#).unwrap_err();
        assert_eq!(e.key(), Some("votes_min"));
        let e = PipelineConfig::from_json(r#"{"label_aliases": {"yes": "maybe"}}"#).unwrap_err();
        assert_eq!(e.key(), Some("label_aliases"));
    }

    #[test]
    fn later_layers_win() {
        let file = PipelineConfig::parse_layer(r#"{"join_eps": 6, "node_prox": 20}"#).unwrap();
        let (k, v) = PipelineConfig::parse_override("join_eps=9.5").unwrap();
        let mut flags = Map::new();
        flags.insert(k, v);
        let c = PipelineConfig::from_layers(&[file, flags]).unwrap();
        assert_eq!(c.join_eps, 9.5);
        assert_eq!(c.node_prox, 20.0);
    }

    #[test]
    fn aliases_and_binarization() {
        let c = PipelineConfig::from_json(r#"{"label_aliases": {"yes": "ja", "no": "nee"}, "binarization": "fixed", "fixed_threshold": 100}"#)
            .unwrap();
        assert_eq!(c.label_params().aliases["no"], LabelValue::Nee);
        assert_eq!(c.binarization(), Binarization::FixedThreshold(100));
        let (k, v) = PipelineConfig::parse_override("binarization=otsu").unwrap();
        assert_eq!((k.as_str(), v), ("binarization", Value::String("otsu".into())));
    }

    #[test]
    fn round_trips_through_json() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
