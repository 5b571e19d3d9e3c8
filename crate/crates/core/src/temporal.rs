//! Hand trajectories, hand speed, and majority-vote smoothing of usage decisions.
//!
//! Each operation exists in two forms: a batch function over a whole session
//! ([`build_trajectory`], [`velocity`], [`smooth_usage`]) and a streaming counterpart
//! ([`TrackStream`], [`UsageSmoother`]) that holds only a bounded look-behind/look-ahead
//! buffer. Both forms produce identical output.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center, Point};
use crate::interaction::hand_box;
use crate::model::{Detection, Payload, Side, UsageState};

pub const DEFAULT_SMOOTH_WINDOW: usize = 15;
pub const DEFAULT_FAST_GATE: f64 = 300.0;
pub const DEFAULT_MAX_GAP: usize = 15;

/// One frame of a hand trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub frame: u64,
    pub center: Option<Point>,
    /// The center was filled in across a short detection gap.
    pub interpolated: bool,
    /// Index of the maximal run of defined samples this frame belongs to.
    pub segment: Option<u32>,
}

/// Per-frame hand centers for one side, dense over the session.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub side: Side,
    pub samples: Vec<TrackSample>,
}

impl Trajectory {
    pub fn segment_count(&self) -> usize {
        self.samples
            .iter()
            .filter_map(|s| s.segment)
            .max()
            .map_or(0, |m| m as usize + 1)
    }
}

/// Hand speed on one frame, in pixels per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub frame: u64,
    /// `None` when the frame is outside any segment of length two or more.
    pub speed: Option<f64>,
}

/// Center of the side's highest-confidence hand box on each frame.
pub fn hand_centers<'a>(
    loc_frames: impl IntoIterator<Item = &'a [Detection]>,
    side: Side,
) -> Vec<Option<Point>> {
    loc_frames
        .into_iter()
        .map(|dets| hand_box(dets, side).map(|d| center(&d.bbox)))
        .collect()
}

/// Builds a trajectory from per-frame centers starting at `first_frame`.
///
/// Runs of missing centers of length `<= max_gap` that have a defined center on both
/// sides are filled by linear interpolation; longer or unbounded runs stay undefined
/// and split the trajectory into segments.
pub fn build_trajectory(
    side: Side,
    first_frame: u64,
    centers: &[Option<Point>],
    max_gap: usize,
) -> Trajectory {
    let n = centers.len();
    let mut filled: Vec<(Option<Point>, bool)> = centers.iter().map(|c| (*c, false)).collect();
    let mut i = 0;
    while i < n {
        if centers[i].is_some() {
            i += 1;
            continue;
        }
        let gap_start = i;
        while i < n && centers[i].is_none() {
            i += 1;
        }
        let gap_len = i - gap_start;
        if gap_start == 0 || i == n || gap_len > max_gap {
            continue;
        }
        let a = centers[gap_start - 1].unwrap();
        let b = centers[i].unwrap();
        let span = (gap_len + 1) as f64;
        for (k, slot) in filled[gap_start..i].iter_mut().enumerate() {
            *slot = (Some(a.lerp(b, (k + 1) as f64 / span)), true);
        }
    }

    let mut samples = Vec::with_capacity(n);
    let mut segment: Option<u32> = None;
    let mut next_segment = 0u32;
    for (k, (c, interpolated)) in filled.into_iter().enumerate() {
        let seg = match c {
            Some(_) => {
                if segment.is_none() {
                    segment = Some(next_segment);
                    next_segment += 1;
                }
                segment
            }
            None => {
                segment = None;
                None
            }
        };
        samples.push(TrackSample {
            frame: first_frame + k as u64,
            center: c,
            interpolated,
            segment: seg,
        });
    }
    Trajectory { side, samples }
}

fn speed_between(prev: Option<Point>, cur: Point, next: Option<Point>, fps: f64) -> Option<f64> {
    let (vx, vy) = match (prev, next) {
        (Some(p), Some(n)) => ((n.x - p.x) * fps / 2.0, (n.y - p.y) * fps / 2.0),
        (None, Some(n)) => ((n.x - cur.x) * fps, (n.y - cur.y) * fps),
        (Some(p), None) => ((cur.x - p.x) * fps, (cur.y - p.y) * fps),
        (None, None) => return None,
    };
    Some(vx.hypot(vy))
}

/// Hand speed by centered differences inside each segment and one-sided differences
/// at segment ends. Isolated samples have no speed.
pub fn velocity(traj: &Trajectory, fps: f64) -> Vec<VelocitySample> {
    let s = &traj.samples;
    (0..s.len())
        .map(|i| {
            let speed = s[i].center.and_then(|c| {
                let prev = if i > 0 { s[i - 1].center } else { None };
                let next = s.get(i + 1).and_then(|n| n.center);
                speed_between(prev, c, next, fps)
            });
            VelocitySample {
                frame: s[i].frame,
                speed,
            }
        })
        .collect()
}

/// Streaming trajectory builder and differentiator for one side.
///
/// Push one optional center per frame; finished `(sample, speed)` pairs come out in
/// frame order after at most `max_gap + 2` frames of delay.
#[derive(Debug, Clone)]
pub struct TrackStream {
    max_gap: usize,
    fps: f64,
    next_frame: Option<u64>,
    last_defined: Option<Point>,
    gap: Vec<u64>,
    filled: VecDeque<(u64, Option<Point>, bool)>,
    prev: Option<Point>,
    segment: Option<u32>,
    next_segment: u32,
}

impl TrackStream {
    pub fn new(max_gap: usize, fps: f64) -> Self {
        Self {
            max_gap,
            fps,
            next_frame: None,
            last_defined: None,
            gap: Vec::new(),
            filled: VecDeque::new(),
            prev: None,
            segment: None,
            next_segment: 0,
        }
    }

    pub fn push(
        &mut self,
        frame: u64,
        c: Option<Point>,
        out: &mut Vec<(TrackSample, Option<f64>)>,
    ) {
        debug_assert!(self.next_frame.is_none_or(|f| f == frame), "frames must be dense");
        self.next_frame = Some(frame + 1);
        match c {
            Some(p) => {
                if !self.gap.is_empty() {
                    let from = self.last_defined.expect("bounded gaps follow a defined sample");
                    let span = (self.gap.len() + 1) as f64;
                    for (k, f) in std::mem::take(&mut self.gap).into_iter().enumerate() {
                        self.filled
                            .push_back((f, Some(from.lerp(p, (k + 1) as f64 / span)), true));
                    }
                }
                self.filled.push_back((frame, Some(p), false));
                self.last_defined = Some(p);
            }
            None => {
                if self.last_defined.is_some() {
                    self.gap.push(frame);
                    if self.gap.len() > self.max_gap {
                        self.flush_gap();
                    }
                } else {
                    self.filled.push_back((frame, None, false));
                }
            }
        }
        self.drain(false, out);
    }

    pub fn finish(&mut self, out: &mut Vec<(TrackSample, Option<f64>)>) {
        self.flush_gap();
        self.drain(true, out);
    }

    fn flush_gap(&mut self) {
        for f in self.gap.drain(..) {
            self.filled.push_back((f, None, false));
        }
        self.last_defined = None;
    }

    fn drain(&mut self, last: bool, out: &mut Vec<(TrackSample, Option<f64>)>) {
        while let Some(&(frame, c, interpolated)) = self.filled.front() {
            let next = match self.filled.get(1) {
                Some(n) => n.1,
                None if last => None,
                None => break,
            };
            self.filled.pop_front();
            let seg = match c {
                Some(_) => {
                    if self.segment.is_none() {
                        self.segment = Some(self.next_segment);
                        self.next_segment += 1;
                    }
                    self.segment
                }
                None => {
                    self.segment = None;
                    None
                }
            };
            let speed = c.and_then(|p| speed_between(self.prev, p, next, self.fps));
            self.prev = c;
            out.push((
                TrackSample {
                    frame,
                    center: c,
                    interpolated,
                    segment: seg,
                },
                speed,
            ));
        }
    }
}

/// Placement of the voting window relative to the frame being decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowAlign {
    /// Equal look-behind and look-ahead; shrinks symmetrically at session edges.
    Centered,
    /// The current frame and the `window - 1` frames before it.
    Trailing,
}

impl std::str::FromStr for WindowAlign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(WindowAlign::Centered),
            "trailing" => Ok(WindowAlign::Trailing),
            _ => Err(Error::Config(format!(
                "unknown window alignment `{s}` (expected centered or trailing)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub window: usize,
    pub align: WindowAlign,
    /// Hand speed (px/s) above which the previous decision is held.
    pub fast_gate: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_SMOOTH_WINDOW,
            align: WindowAlign::Centered,
            fast_gate: DEFAULT_FAST_GATE,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("smoothing window must be at least 1".into()));
        }
        if self.fast_gate.is_nan() || self.fast_gate <= 0.0 {
            return Err(Error::Config(format!(
                "fast-motion gate must be positive, got {}",
                self.fast_gate
            )));
        }
        Ok(())
    }

    /// Frames (before, after) the decided frame.
    fn extents(&self) -> (usize, usize) {
        match self.align {
            WindowAlign::Centered => {
                let before = (self.window - 1) / 2;
                (before, self.window - 1 - before)
            }
            WindowAlign::Trailing => (self.window - 1, 0),
        }
    }
}

/// Decides one frame given the raw window, the frame's speed and the last decision.
fn decide<'a>(
    raw: &UsageState,
    window: impl Iterator<Item = &'a UsageState>,
    speed: Option<f64>,
    prev: Option<Payload>,
    fast_gate: f64,
) -> UsageState {
    if raw.is_absent() {
        return *raw;
    }
    if let (Some(p), Some(v)) = (prev, speed) {
        if v > fast_gate {
            return UsageState { payload: p, ..*raw };
        }
    }
    let mut counts = [0usize; 4];
    for s in window {
        if let Some(i) = s.payload.vote_index() {
            counts[i] += 1;
        }
    }
    let top = *counts.iter().max().unwrap();
    let leaders: Vec<usize> = (0..4).filter(|&i| counts[i] == top).collect();
    let payload = if top > 0 && leaders.len() == 1 {
        Payload::VISIBLE[leaders[0]]
    } else {
        prev.unwrap_or(raw.payload)
    };
    UsageState { payload, ..*raw }
}

/// Window bounds for frame `t` of `n` (or of an unbounded stream when `n` is `None`).
fn window_range(t: usize, n: Option<usize>, before: usize, after: usize, symmetric: bool) -> (usize, usize) {
    if symmetric {
        let k = n.map_or(t, |n| t.min(n - 1 - t));
        (t - before.min(k), t + after.min(k))
    } else {
        (t.saturating_sub(before), t)
    }
}

/// Majority-vote smoothing of one side's usage payloads.
///
/// For each non-absent frame: if the hand moves faster than `fast_gate`, the previous
/// decision is held; otherwise the payload is the strict plurality of the non-absent
/// raw payloads in the window. Ties keep the previous decision (or the raw payload
/// before any decision exists). Boxes, provenance and absent frames pass through.
pub fn smooth_usage(
    states: &[UsageState],
    speeds: &[Option<f64>],
    cfg: &SmoothingConfig,
) -> Result<Vec<UsageState>> {
    cfg.validate()?;
    if speeds.len() != states.len() {
        return Err(Error::Invalid(format!(
            "{} speed samples for {} usage states",
            speeds.len(),
            states.len()
        )));
    }
    let n = states.len();
    let (before, after) = cfg.extents();
    let symmetric = cfg.align == WindowAlign::Centered;
    let mut prev: Option<Payload> = None;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let (lo, hi) = window_range(t, Some(n), before, after, symmetric);
        let s = decide(&states[t], states[lo..=hi].iter(), speeds[t], prev, cfg.fast_gate);
        if !s.is_absent() {
            prev = Some(s.payload);
        }
        out.push(s);
    }
    Ok(out)
}

/// Streaming form of [`smooth_usage`] for one side.
#[derive(Debug, Clone)]
pub struct UsageSmoother {
    cfg: SmoothingConfig,
    before: usize,
    after: usize,
    buf: VecDeque<(UsageState, Option<f64>)>,
    /// Session index of `buf[0]`.
    base: usize,
    pushed: usize,
    next_emit: usize,
    prev: Option<Payload>,
}

impl UsageSmoother {
    pub fn new(cfg: SmoothingConfig) -> Result<Self> {
        cfg.validate()?;
        let (before, after) = cfg.extents();
        Ok(Self {
            cfg,
            before,
            after,
            buf: VecDeque::with_capacity(cfg.window + 1),
            base: 0,
            pushed: 0,
            next_emit: 0,
            prev: None,
        })
    }

    pub fn push(&mut self, state: UsageState, speed: Option<f64>, out: &mut Vec<UsageState>) {
        self.buf.push_back((state, speed));
        self.pushed += 1;
        self.emit(false, out);
    }

    pub fn finish(&mut self, out: &mut Vec<UsageState>) {
        self.emit(true, out);
    }

    fn emit(&mut self, last: bool, out: &mut Vec<UsageState>) {
        let symmetric = self.cfg.align == WindowAlign::Centered;
        while self.next_emit < self.pushed && (last || self.next_emit + self.after < self.pushed) {
            let t = self.next_emit;
            let n = if last { Some(self.pushed) } else { None };
            let (lo, hi) = window_range(t, n, self.before, self.after, symmetric);
            let (raw, speed) = self.buf[t - self.base];
            let window = self.buf.range(lo - self.base..=hi - self.base).map(|(s, _)| s);
            let s = decide(&raw, window, speed, self.prev, self.cfg.fast_gate);
            if !s.is_absent() {
                self.prev = Some(s.payload);
            }
            out.push(s);
            self.next_emit += 1;
            while self.base + self.before < self.next_emit {
                self.buf.pop_front();
                self.base += 1;
            }
        }
    }
}
