//! Brute-force reference implementations used by tests.
//!
//! Everything here is written independently of the production code paths it is
//! compared against: different formulations, no shared helpers beyond the record types.

use crate::model::{BBox, Detection, Payload};

/// Plain IoU from corner coordinates.
pub fn iou_reference(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = (a.x, a.y, a.x + a.w, a.y + a.h);
    let (bx0, by0, bx1, by1) = (b.x, b.y, b.x + b.w, b.y + b.h);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// "Pick the best, discard what it covers, repeat" formulation of greedy NMS.
///
/// `conflicts(kept, other)` says whether `kept` is allowed to suppress `other`.
pub fn nms_reference(
    dets: &[Detection],
    thresh: f64,
    conflicts: impl Fn(&Detection, &Detection) -> bool,
) -> Vec<Detection> {
    let mut alive = vec![true; dets.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for (i, d) in dets.iter().enumerate() {
            if !alive[i] {
                continue;
            }
            match best {
                Some(b) if dets[b].confidence >= d.confidence => {}
                _ => best = Some(i),
            }
        }
        let Some(b) = best else { break };
        alive[b] = false;
        out.push(dets[b]);
        for (i, d) in dets.iter().enumerate() {
            if alive[i] && conflicts(&dets[b], d) && iou_reference(&dets[b].bbox, &d.bbox) >= thresh
            {
                alive[i] = false;
            }
        }
    }
    out
}

/// Average precision by direct enumeration of every cutoff of the ranked list.
///
/// Matching: detections in confidence order (stable), each claims the not-yet-claimed
/// ground-truth box on its frame with the highest IoU, if that IoU reaches `thresh`.
/// AP is the sum, over true positives, of `1/|gt|` times the best precision reached at
/// that rank or any later rank.
pub fn ap_reference(dets: &[Detection], gts: &[Detection], thresh: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let mut ranked: Vec<(usize, &Detection)> = dets.iter().enumerate().collect();
    // insertion sort keeps the tie order explicit
    for i in 1..ranked.len() {
        let mut j = i;
        while j > 0 && ranked[j - 1].1.confidence < ranked[j].1.confidence {
            ranked.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut claimed = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(ranked.len());
    for (_, d) in &ranked {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] || gt.frame != d.frame {
                continue;
            }
            let o = iou_reference(&d.bbox, &gt.bbox);
            if best.is_none_or(|(_, bo)| o > bo) {
                best = Some((g, o));
            }
        }
        match best {
            Some((g, o)) if o >= thresh => {
                claimed[g] = true;
                hits.push(true);
            }
            _ => hits.push(false),
        }
    }
    let n = hits.len();
    let precision_at = |k: usize| {
        let tp = hits[..=k].iter().filter(|h| **h).count();
        tp as f64 / (k + 1) as f64
    };
    let mut ap = 0.0;
    for (k, _) in hits.iter().enumerate().filter(|(_, h)| **h) {
        let best_later = (k..n).map(precision_at).fold(0.0, f64::max);
        ap += best_later / gts.len() as f64;
    }
    Some(ap)
}

/// Plurality payload among non-absent votes, `None` on a tie or no votes.
pub fn plurality(votes: &[Payload]) -> Option<Payload> {
    let mut best: Option<(Payload, usize)> = None;
    let mut tied = false;
    for p in Payload::VISIBLE {
        let n = votes.iter().filter(|v| **v == p).count();
        if n == 0 {
            continue;
        }
        match best {
            Some((_, bn)) if n < bn => {}
            Some((_, bn)) if n == bn => tied = true,
            _ => {
                best = Some((p, n));
                tied = false;
            }
        }
    }
    if tied {
        None
    } else {
        best.map(|(p, _)| p)
    }
}

/// Number of maximal runs of `true` that have a `false` on both sides.
pub fn enclosed_runs(moving: &[bool]) -> u64 {
    let mut count = 0;
    let mut i = 0;
    while i < moving.len() {
        if moving[i] {
            let start = i;
            while i < moving.len() && moving[i] {
                i += 1;
            }
            if start > 0 && i < moving.len() {
                count += 1;
            }
        } else {
            i += 1;
        }
    }
    count
}
