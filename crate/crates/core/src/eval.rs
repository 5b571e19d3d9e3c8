//! Detection and tool-usage scoring against ground truth.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::model::{Channel, DetClass, Detection, FrameGroup, Payload, Side, TimedEvent, UsageTimeline};

pub const DEFAULT_MATCH_IOU: f64 = 0.5;

/// All-point interpolated average precision of `dets` against `gts`.
///
/// Both slices should already hold a single class. Detections are ranked by confidence
/// (stable on ties); each claims the unclaimed ground-truth box on its frame with the
/// highest IoU, if that IoU reaches `match_iou`. Returns `None` when there is no ground
/// truth.
pub fn average_precision(dets: &[Detection], gts: &[Detection], match_iou: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let mut by_frame: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_frame.entry(g.frame).or_default().push(i);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));

    let mut claimed = vec![false; gts.len()];
    let mut tp = 0u64;
    // precision at each rank as the exact fraction (true positives, rank)
    let mut precision: Vec<(u64, u64)> = Vec::with_capacity(order.len());
    let mut is_tp = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for &g in by_frame.get(&d.frame).map(Vec::as_slice).unwrap_or_default() {
            if claimed[g] {
                continue;
            }
            let o = iou(&d.bbox, &gts[g].bbox).value();
            if best.is_none_or(|(_, bo)| o > bo) {
                best = Some((g, o));
            }
        }
        let hit = matches!(best, Some((_, o)) if o >= match_iou);
        if let (true, Some((g, _))) = (hit, best) {
            claimed[g] = true;
            tp += 1;
        }
        is_tp.push(hit);
        precision.push((tp, rank as u64 + 1));
    }
    // precision envelope, right to left
    for k in (0..precision.len().saturating_sub(1)).rev() {
        let ((a, b), (c, d)) = (precision[k], precision[k + 1]);
        if (c as u128) * (b as u128) > (a as u128) * (d as u128) {
            precision[k] = precision[k + 1];
        }
    }
    let mut sum = DoubleDouble::default();
    for (&(num, den), _) in precision.iter().zip(&is_tp).filter(|(_, hit)| **hit) {
        sum.add_quotient(num as f64, den as f64);
    }
    Some(sum.div(gts.len() as f64))
}

/// Unevaluated sum `hi + lo` carrying about twice the precision of an `f64`.
#[derive(Debug, Default, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    /// Adds `num / den` for integer-valued operands.
    fn add_quotient(&mut self, num: f64, den: f64) {
        let q = num / den;
        let q_lo = (-q).mul_add(den, num) / den;
        let s = self.hi + q;
        let v = s - self.hi;
        let err = (self.hi - (s - v)) + (q - v);
        self.hi = s;
        self.lo += err + q_lo;
    }

    fn div(self, den: f64) -> f64 {
        let h = self.hi / den;
        let r = ((-h).mul_add(den, self.hi) + self.lo) / den;
        h + r
    }
}

/// AP at IoU 0.5 for one class, filtering both inputs to that class.
pub fn ap50(dets: &[Detection], gts: &[Detection], class: DetClass) -> Option<f64> {
    let d: Vec<Detection> = dets.iter().filter(|d| d.class == class).copied().collect();
    let g: Vec<Detection> = gts.iter().filter(|d| d.class == class).copied().collect();
    average_precision(&d, &g, DEFAULT_MATCH_IOU)
}

/// Mean over the defined APs; an error when none is defined.
pub fn mean_ap(aps: impl IntoIterator<Item = Option<f64>>) -> Result<f64> {
    let defined: Vec<f64> = aps.into_iter().flatten().collect();
    if defined.is_empty() {
        return Err(Error::Undefined("mAP over classes with no ground truth".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: String,
    pub channel: Channel,
    pub ap: Option<f64>,
    pub ground_truth: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEval {
    pub per_class: Vec<ClassAp>,
    pub map_localization: Option<f64>,
    pub map_interaction: Option<f64>,
    pub map_all: Option<f64>,
}

/// Per-class AP and mAP over the localization, interaction and combined class sets.
pub fn detection_eval(dets: &[FrameGroup], gts: &[FrameGroup], match_iou: f64) -> DetectionEval {
    let flat = |gs: &[FrameGroup]| -> HashMap<DetClass, Vec<Detection>> {
        let mut m: HashMap<DetClass, Vec<Detection>> = HashMap::new();
        for d in gs.iter().flat_map(|g| &g.detections) {
            m.entry(d.class).or_default().push(*d);
        }
        m
    };
    let (dm, gm) = (flat(dets), flat(gts));
    let per_class: Vec<ClassAp> = DetClass::all()
        .map(|c| {
            let d = dm.get(&c).map(Vec::as_slice).unwrap_or_default();
            let g = gm.get(&c).map(Vec::as_slice).unwrap_or_default();
            ClassAp {
                class: c.name().to_string(),
                channel: c.channel(),
                ap: average_precision(d, g, match_iou),
                ground_truth: g.len(),
                detections: d.len(),
            }
        })
        .collect();
    let subset = |ch: Option<Channel>| {
        mean_ap(
            per_class
                .iter()
                .filter(|c| ch.is_none_or(|ch| c.channel == ch))
                .map(|c| c.ap),
        )
        .ok()
    };
    DetectionEval {
        map_localization: subset(Some(Channel::Localization)),
        map_interaction: subset(Some(Channel::Interaction)),
        map_all: subset(None),
        per_class,
    }
}

/// Frame-level usage categories: tools pooled over hands, empty hands per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageCategory {
    NeedleDriver,
    Forceps,
    Scissors,
    EmptyRightHand,
    EmptyLeftHand,
}

impl UsageCategory {
    pub const ALL: [UsageCategory; 5] = [
        UsageCategory::NeedleDriver,
        UsageCategory::Forceps,
        UsageCategory::Scissors,
        UsageCategory::EmptyRightHand,
        UsageCategory::EmptyLeftHand,
    ];

    pub fn of(payload: Payload, side: Side) -> Option<Self> {
        match (payload, side) {
            (Payload::NeedleDriver, _) => Some(UsageCategory::NeedleDriver),
            (Payload::Forceps, _) => Some(UsageCategory::Forceps),
            (Payload::Scissors, _) => Some(UsageCategory::Scissors),
            (Payload::Empty, Side::Right) => Some(UsageCategory::EmptyRightHand),
            (Payload::Empty, Side::Left) => Some(UsageCategory::EmptyLeftHand),
            (Payload::Absent, _) => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: UsageCategory,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// `None` when the category has neither ground truth nor predictions.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl CategoryMetrics {
    fn from_counts(category: UsageCategory, tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let defined = tp + fp + fn_ > 0;
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Self {
            category,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision: defined.then_some(p),
            recall: defined.then_some(r),
            f1: defined.then_some(f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageMetrics {
    pub per_category: Vec<CategoryMetrics>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub slots: u64,
}

/// Dense per-side ground-truth payloads for frames `0..frames`; uncovered frames are
/// Empty.
pub fn expand_events(events: &[TimedEvent], frames: u64) -> [Vec<Payload>; 2] {
    let mut out = [
        vec![Payload::Empty; frames as usize],
        vec![Payload::Empty; frames as usize],
    ];
    for e in events {
        let lane = &mut out[e.side().index()];
        for f in e.start..=e.end.min(frames.saturating_sub(1)) {
            lane[f as usize] = e.class.payload();
        }
    }
    out
}

/// Frame-level precision, recall, F1 and accuracy of a usage timeline.
///
/// The evaluation span runs from frame 0 to the later of the last predicted frame and
/// the last ground-truth event end. Slots with no prediction count as Absent, which is
/// wrong for every category.
pub fn usage_frame_metrics(
    predicted: &UsageTimeline,
    gt_events: &[TimedEvent],
    gt_fps: f64,
) -> Result<UsageMetrics> {
    if predicted.fps != gt_fps {
        return Err(Error::Invalid(format!(
            "timeline fps {} differs from ground-truth fps {}",
            predicted.fps, gt_fps
        )));
    }
    let frames = predicted
        .states
        .iter()
        .map(|s| s.frame + 1)
        .chain(gt_events.iter().map(|e| e.end + 1))
        .max()
        .unwrap_or(0);
    let gt = expand_events(gt_events, frames);
    let mut pred = [
        vec![Payload::Absent; frames as usize],
        vec![Payload::Absent; frames as usize],
    ];
    for s in &predicted.states {
        pred[s.side.index()][s.frame as usize] = s.payload;
    }

    let mut tp = [0u64; 5];
    let mut fp = [0u64; 5];
    let mut fn_ = [0u64; 5];
    let mut correct = 0u64;
    for side in Side::ALL {
        let i = side.index();
        for (&g, &p) in gt[i].iter().zip(&pred[i]) {
            let gc = UsageCategory::of(g, side);
            let pc = UsageCategory::of(p, side);
            if let Some(c) = gc.filter(|_| gc == pc) {
                correct += 1;
                tp[c.index()] += 1;
                continue;
            }
            if let Some(c) = gc {
                fn_[c.index()] += 1;
            }
            if let Some(c) = pc {
                fp[c.index()] += 1;
            }
        }
    }
    let per_category: Vec<CategoryMetrics> = UsageCategory::ALL
        .iter()
        .map(|c| CategoryMetrics::from_counts(*c, tp[c.index()], fp[c.index()], fn_[c.index()]))
        .collect();
    let mean = |get: fn(&CategoryMetrics) -> Option<f64>| {
        let v: Vec<f64> = per_category.iter().filter_map(get).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let slots = 2 * frames;
    Ok(UsageMetrics {
        mean_precision: mean(|c| c.precision),
        mean_recall: mean(|c| c.recall),
        mean_f1: mean(|c| c.f1),
        accuracy: (slots > 0).then(|| correct as f64 / slots as f64),
        slots,
        per_category,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub match_iou: f64,
    pub detection: Option<DetectionEval>,
    pub usage: Option<UsageMetrics>,
}
