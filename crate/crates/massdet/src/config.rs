use std::path::Path;

use massdet_core::backbone::BackboneConfig;
use massdet_core::detector::DetectorConfig;
use massdet_core::evaluation::DEFAULT_THRESHOLD;
use massdet_core::imgproc::PreprocessConfig;
use massdet_core::model::ModelConfig;
use massdet_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// IoU threshold for the confusion metrics and ROC.
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_THRESHOLD }
    }
}

/// Every stage's settings in one JSON document. Missing keys take their
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub backbone: BackboneConfig,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::validation(format!("config {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model().validate().map_err(invalid)?;
        self.train.validate().map_err(invalid)?;
        let t = self.eval.iou_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(CliError::validation(format!("eval.iou_threshold must lie in (0, 1], got {t}")));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone.clone(),
            detector: self.detector.clone(),
        }
    }

    /// Preprocessing with the letterbox target pinned to the model input.
    pub fn model_preprocess(&self) -> PreprocessConfig {
        let (h, w) = self.backbone.input_size;
        PreprocessConfig {
            target: Some((w, h)),
            ..self.preprocess.clone()
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(PipelineConfig::from_json(r#"{"trian": {}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"train": {"epochz": 3}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"detector": {"head": {"hiden": 3}}}"#).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let mut c = PipelineConfig::default();
        c.train.epochs = 7;
        c.backbone.filters = vec![4, 4, 4, 4, 4];
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn inconsistent_stride_fails_validation() {
        let r = PipelineConfig::from_json(r#"{"detector": {"anchors": {"stride": 8}}}"#);
        assert!(matches!(r, Err(CliError::Validation(_))));
    }
}
