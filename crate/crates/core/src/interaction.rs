//! Per-frame resolution of which tool each hand is using.
//!
//! The interaction channel should produce exactly one box per visible hand. When it
//! produces none for a hand that the localization channel sees, the tool is inferred
//! from hand/tool overlap ([`scenario1_fallback`]); when it produces several, the one
//! best supported by localization boxes wins ([`scenario2_select`]).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, overlap_over_min};
use crate::model::{BBox, Detection, Payload, Provenance, Side, UsageState};

pub const DEFAULT_S1_OVERLAP: f64 = 0.25;

/// Counts of how each (frame, side) slot was resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionCounts {
    pub direct: u64,
    pub scenario1: u64,
    pub scenario2: u64,
    pub absent: u64,
}

impl ResolutionCounts {
    pub fn record(&mut self, provenance: Provenance) {
        match provenance {
            Provenance::Direct => self.direct += 1,
            Provenance::Scenario1 => self.scenario1 += 1,
            Provenance::Scenario2 => self.scenario2 += 1,
            Provenance::Absent => self.absent += 1,
        }
    }

    pub fn add(&mut self, other: &ResolutionCounts) {
        self.direct += other.direct;
        self.scenario1 += other.scenario1;
        self.scenario2 += other.scenario2;
        self.absent += other.absent;
    }

    pub fn visible(&self) -> u64 {
        self.direct + self.scenario1 + self.scenario2
    }

    pub fn total(&self) -> u64 {
        self.visible() + self.absent
    }
}

/// Resolution result for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResolution {
    pub right: UsageState,
    pub left: UsageState,
}

impl FrameResolution {
    pub fn side(&self, side: Side) -> &UsageState {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }

    pub fn counts(&self) -> ResolutionCounts {
        let mut c = ResolutionCounts::default();
        c.record(self.right.provenance);
        c.record(self.left.provenance);
        c
    }
}

/// Orders by descending score, then descending confidence; earlier input wins a full tie.
fn better(score_a: f64, conf_a: f64, score_b: f64, conf_b: f64) -> bool {
    match score_a.total_cmp(&score_b) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => conf_a > conf_b,
    }
}

/// Highest-confidence localization box of a side's hand, first in input order on ties.
pub fn hand_box(loc_dets: &[Detection], side: Side) -> Option<&Detection> {
    let hand = side.hand_class();
    loc_dets
        .iter()
        .filter(|d| d.class.loc() == Some(hand))
        .fold(None, |best: Option<&Detection>, d| match best {
            Some(b) if b.confidence >= d.confidence => Some(b),
            _ => Some(d),
        })
}

/// Infers the payload of a hand that has no interaction box.
///
/// Scores every localization tool box by [`overlap_over_min`] against the hand box; the
/// best-scoring tool is the payload if its score reaches `min_overlap`, otherwise the
/// hand is empty. Non-tool entries in `tool_dets` are ignored. The returned box is the
/// hand box.
pub fn scenario1_fallback(
    hand: &BBox,
    tool_dets: &[Detection],
    min_overlap: f64,
) -> (Payload, BBox) {
    let mut best: Option<(f64, &Detection)> = None;
    for d in tool_dets {
        if d.class.loc().is_none_or(|c| c.is_hand()) {
            continue;
        }
        let s = overlap_over_min(hand, &d.bbox).value();
        if best.is_none_or(|(bs, bd)| better(s, d.confidence, bs, bd.confidence)) {
            best = Some((s, d));
        }
    }
    let payload = match best {
        Some((s, d)) if s >= min_overlap => d
            .class
            .loc()
            .and_then(|c| c.tool_payload())
            .unwrap_or(Payload::Empty),
        _ => Payload::Empty,
    };
    (payload, *hand)
}

/// Picks one of several interaction boxes for the same hand.
///
/// Each candidate is paired with every localization tool box (or, for an empty-hand
/// candidate, with the side's localization hand box) and scored by IoU; the candidate
/// of the best pair is returned. Panics if `candidates` is empty.
pub fn scenario2_select<'a>(
    candidates: &[&'a Detection],
    loc_dets: &[Detection],
    side: Side,
) -> &'a Detection {
    let hand = hand_box(loc_dets, side);
    let tools: Vec<&Detection> = loc_dets
        .iter()
        .filter(|d| d.class.loc().is_some_and(|c| c.is_tool()))
        .collect();

    let score = |c: &Detection| -> f64 {
        let is_empty = c.class.int().map(|k| k.payload()) == Some(Payload::Empty);
        if is_empty {
            hand.map_or(0.0, |h| iou(&c.bbox, &h.bbox).value())
        } else {
            tools
                .iter()
                .map(|t| iou(&c.bbox, &t.bbox).value())
                .fold(0.0, f64::max)
        }
    };

    let mut best = candidates[0];
    let mut best_score = score(best);
    for &c in &candidates[1..] {
        let s = score(c);
        if better(s, c.confidence, best_score, best.confidence) {
            best = c;
            best_score = s;
        }
    }
    best
}

fn resolve_side(
    frame: u64,
    side: Side,
    int_dets: &[Detection],
    loc_dets: &[Detection],
    s1_overlap: f64,
) -> UsageState {
    let candidates: Vec<&Detection> = int_dets
        .iter()
        .filter(|d| d.class.int().is_some_and(|c| c.side() == side))
        .collect();
    let payload_of = |d: &Detection| d.class.int().map_or(Payload::Empty, |c| c.payload());
    match candidates.len() {
        0 => match hand_box(loc_dets, side) {
            Some(hand) => {
                let (payload, bbox) = scenario1_fallback(&hand.bbox, loc_dets, s1_overlap);
                UsageState {
                    frame,
                    side,
                    payload,
                    bbox: Some(bbox),
                    provenance: Provenance::Scenario1,
                }
            }
            None => UsageState::absent(frame, side),
        },
        1 => UsageState {
            frame,
            side,
            payload: payload_of(candidates[0]),
            bbox: Some(candidates[0].bbox),
            provenance: Provenance::Direct,
        },
        _ => {
            let chosen = scenario2_select(&candidates, loc_dets, side);
            UsageState {
                frame,
                side,
                payload: payload_of(chosen),
                bbox: Some(chosen.bbox),
                provenance: Provenance::Scenario2,
            }
        }
    }
}

/// Resolves one usage state per hand for a frame of suppressed detections.
pub fn resolve_frame(
    frame: u64,
    int_dets: &[Detection],
    loc_dets: &[Detection],
    s1_overlap: f64,
) -> FrameResolution {
    FrameResolution {
        right: resolve_side(frame, Side::Right, int_dets, loc_dets, s1_overlap),
        left: resolve_side(frame, Side::Left, int_dets, loc_dets, s1_overlap),
    }
}
