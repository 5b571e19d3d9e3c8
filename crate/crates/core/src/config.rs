use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::DEFAULT_S1_OVERLAP;
use crate::metrics::DEFAULT_STATIC_THRESH;
use crate::suppression::{DEFAULT_CROSS_NMS_IOU, DEFAULT_NMS_IOU};
use crate::temporal::{SmoothingConfig, DEFAULT_MAX_GAP};

/// Every tunable threshold of the post-processing chain.
///
/// Echoed verbatim into each session report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub nms_iou: f64,
    pub cross_nms_iou: f64,
    pub s1_overlap: f64,
    pub smoothing: SmoothingConfig,
    pub max_gap: usize,
    pub static_thresh: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            nms_iou: DEFAULT_NMS_IOU,
            cross_nms_iou: DEFAULT_CROSS_NMS_IOU,
            s1_overlap: DEFAULT_S1_OVERLAP,
            smoothing: SmoothingConfig::default(),
            max_gap: DEFAULT_MAX_GAP,
            static_thresh: DEFAULT_STATIC_THRESH,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("--nms-iou", self.nms_iou),
            ("--cross-nms-iou", self.cross_nms_iou),
            ("--s1-overlap", self.s1_overlap),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.static_thresh.is_nan() || self.static_thresh <= 0.0 {
            return Err(Error::Config(format!(
                "--static-thresh must be positive, got {}",
                self.static_thresh
            )));
        }
        self.smoothing.validate()
    }
}
