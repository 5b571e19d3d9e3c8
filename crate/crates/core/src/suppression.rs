//! Greedy non-maximum suppression.
//!
//! Two passes run per frame: [`standard_nms`] removes duplicates within a class, then
//! [`tool_nms`] removes tool boxes of *different* tool classes that claim the same area
//! in the localization channel. Hand boxes are exempt from the second pass, so a tool
//! held in a hand is never suppressed by the hand or vice versa.

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::model::{Channel, Detection};

pub const DEFAULT_NMS_IOU: f64 = 0.45;
pub const DEFAULT_CROSS_NMS_IOU: f64 = 0.5;

fn check_threshold(name: &str, thresh: f64) -> Result<()> {
    if (0.0..=1.0).contains(&thresh) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} {thresh} outside [0, 1]")))
    }
}

/// Indices sorted by confidence descending; equal confidences keep input order.
fn by_confidence(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Per-class greedy suppression over one frame and channel.
///
/// A detection survives iff its IoU with every already-kept detection of the same
/// class is below `iou_thresh`. Output is sorted by confidence, descending.
pub fn standard_nms(dets: &[Detection], iou_thresh: f64) -> Result<Vec<Detection>> {
    check_threshold("NMS IoU threshold", iou_thresh)?;
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for i in by_confidence(dets) {
        let d = &dets[i];
        let clear = kept
            .iter()
            .filter(|k| k.class == d.class)
            .all(|k| iou(&k.bbox, &d.bbox).value() < iou_thresh);
        if clear {
            kept.push(*d);
        }
    }
    Ok(kept)
}

/// Cross-class suppression among tool boxes of the localization channel.
pub fn tool_nms(dets: &[Detection], cross_thresh: f64) -> Result<Vec<Detection>> {
    check_threshold("cross-class NMS IoU threshold", cross_thresh)?;
    if let Some(d) = dets.iter().find(|d| d.channel() != Channel::Localization) {
        return Err(Error::Invalid(format!(
            "cross-class tool suppression expects localization detections, got `{}`",
            d.class
        )));
    }
    let is_tool = |d: &Detection| d.class.loc().is_some_and(|c| c.is_tool());
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len());
    for i in by_confidence(dets) {
        let d = &dets[i];
        let clear = !is_tool(d)
            || kept
                .iter()
                .filter(|k| is_tool(k))
                .all(|k| iou(&k.bbox, &d.bbox).value() < cross_thresh);
        if clear {
            kept.push(*d);
        }
    }
    Ok(kept)
}
