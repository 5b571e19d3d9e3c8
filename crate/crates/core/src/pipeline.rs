//! The full post-processing chain.
//!
//! Per frame: per-class NMS on both channels, cross-class tool NMS on the localization
//! channel, per-hand resolution, then trajectory tracking and majority smoothing, then
//! metrics. [`Pipeline`] runs the chain one frame at a time with bounded buffering;
//! [`run_batch`] computes the same outputs from whole-session stage functions.

use std::collections::VecDeque;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::center;
use crate::interaction::{hand_box, resolve_frame, ResolutionCounts};
use crate::metrics::{compute_report, MetricsAccumulator, SessionReport, SideFrame, SideSeries};
use crate::model::{
    BBox, Detection, FrameGroup, InteractionClass, LocClass, SessionMeta, Side,
    TimedEvent, UsageState, UsageTimeline,
};
use crate::suppression::{standard_nms, tool_nms};
use crate::temporal::{
    build_trajectory, hand_centers, smooth_usage, velocity, TrackSample, TrackStream,
    UsageSmoother,
};

/// One frame after both suppression passes.
#[derive(Debug, Clone, PartialEq)]
pub struct SuppressedFrame {
    pub frame: u64,
    pub loc: Vec<Detection>,
    pub int: Vec<Detection>,
}

pub fn suppress_frame(group: &FrameGroup, cfg: &PipelineConfig) -> Result<SuppressedFrame> {
    let (loc, int) = group.split_channels();
    let loc = tool_nms(&standard_nms(&loc, cfg.nms_iou)?, cfg.cross_nms_iou)?;
    let int = standard_nms(&int, cfg.nms_iou)?;
    Ok(SuppressedFrame {
        frame: group.frame,
        loc,
        int,
    })
}

/// Highest-confidence forceps box of the localization channel; first wins ties.
pub fn forceps_box(loc: &[Detection]) -> Option<BBox> {
    let mut best: Option<&Detection> = None;
    for d in loc.iter().filter(|d| d.class.loc() == Some(LocClass::Forceps)) {
        if best.is_none_or(|b| d.confidence > b.confidence) {
            best = Some(d);
        }
    }
    best.map(|d| d.bbox)
}

/// Collapses one side's per-frame states into maximal same-payload runs. Absent frames
/// end a run and produce no event.
pub fn events_from_states<'a>(states: impl IntoIterator<Item = &'a UsageState>) -> Vec<TimedEvent> {
    let mut b = EventBuilder::default();
    let mut out = Vec::new();
    for s in states {
        b.push(s, &mut out);
    }
    b.finish(&mut out);
    out
}

#[derive(Debug, Clone, Default)]
struct EventBuilder {
    open: Option<TimedEvent>,
}

impl EventBuilder {
    fn push(&mut self, s: &UsageState, out: &mut Vec<TimedEvent>) {
        let class = InteractionClass::new(s.payload, s.side);
        if let (Some(e), Some(c)) = (&mut self.open, class) {
            if e.class == c && e.end + 1 == s.frame {
                e.end = s.frame;
                return;
            }
        }
        self.finish(out);
        self.open = class.map(|class| TimedEvent {
            class,
            start: s.frame,
            end: s.frame,
        });
    }

    fn finish(&mut self, out: &mut Vec<TimedEvent>) {
        out.extend(self.open.take());
    }
}

/// Track samples, speeds and forceps box of one frame awaiting its smoothed states.
type ReadyFrame = ([TrackSample; 2], [Option<f64>; 2], Option<BBox>);

/// Streaming pipeline for one session.
///
/// Feed dense frame groups in order with [`Pipeline::push`]; smoothed states come out
/// in frame order (right hand first) after a delay of at most
/// `max_gap + 2 + window` frames.
pub struct Pipeline {
    cfg: PipelineConfig,
    next_frame: u64,
    tracks: [TrackStream; 2],
    track_out: [VecDeque<(TrackSample, Option<f64>)>; 2],
    raw: VecDeque<([UsageState; 2], Option<BBox>)>,
    smoothers: [UsageSmoother; 2],
    smooth_out: [VecDeque<UsageState>; 2],
    ready: VecDeque<ReadyFrame>,
    acc: MetricsAccumulator,
    builders: [EventBuilder; 2],
    events: [Vec<TimedEvent>; 2],
    track_buf: Vec<(TrackSample, Option<f64>)>,
    smooth_buf: Vec<UsageState>,
}

/// Events and report of a finished session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    /// Sorted by (side, start).
    pub events: Vec<TimedEvent>,
    pub report: SessionReport,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, meta: SessionMeta) -> Result<Self> {
        cfg.validate()?;
        meta.validate()?;
        let track = || TrackStream::new(cfg.max_gap, meta.fps);
        Ok(Self {
            cfg,
            next_frame: 0,
            tracks: [track(), track()],
            track_out: Default::default(),
            raw: VecDeque::new(),
            smoothers: [UsageSmoother::new(cfg.smoothing)?, UsageSmoother::new(cfg.smoothing)?],
            smooth_out: Default::default(),
            ready: VecDeque::new(),
            acc: MetricsAccumulator::new(meta.fps, cfg),
            builders: Default::default(),
            events: Default::default(),
            track_buf: Vec::new(),
            smooth_buf: Vec::new(),
        })
    }

    /// Frames currently held inside the pipeline.
    pub fn buffered_frames(&self) -> usize {
        self.raw.len() + self.ready.len()
    }

    pub fn push(&mut self, group: &FrameGroup, out: &mut Vec<UsageState>) -> Result<()> {
        if group.frame != self.next_frame {
            return Err(Error::Invalid(format!(
                "expected frame {}, got frame {}",
                self.next_frame, group.frame
            )));
        }
        self.next_frame += 1;
        let f = suppress_frame(group, &self.cfg)?;
        let res = resolve_frame(f.frame, &f.int, &f.loc, self.cfg.s1_overlap);
        for side in Side::ALL {
            let i = side.index();
            let c = hand_box(&f.loc, side).map(|d| center(&d.bbox));
            self.tracks[i].push(f.frame, c, &mut self.track_buf);
            self.track_out[i].extend(self.track_buf.drain(..));
        }
        self.raw.push_back(([res.right, res.left], forceps_box(&f.loc)));
        self.pump(out);
        Ok(())
    }

    pub fn finish(mut self, out: &mut Vec<UsageState>) -> SessionSummary {
        for i in 0..2 {
            self.tracks[i].finish(&mut self.track_buf);
            self.track_out[i].extend(self.track_buf.drain(..));
        }
        self.pump(out);
        for i in 0..2 {
            self.smoothers[i].finish(&mut self.smooth_buf);
            self.smooth_out[i].extend(self.smooth_buf.drain(..));
        }
        self.emit(out);
        let [mut right, mut left] = self.events;
        for (i, b) in self.builders.iter_mut().enumerate() {
            b.finish(if i == 0 { &mut right } else { &mut left });
        }
        right.extend(left);
        SessionSummary {
            events: right,
            report: self.acc.finish(),
        }
    }

    fn pump(&mut self, out: &mut Vec<UsageState>) {
        while !self.raw.is_empty() && self.track_out.iter().all(|q| !q.is_empty()) {
            let (states, fbox) = self.raw.pop_front().unwrap();
            let (rt, rs) = self.track_out[0].pop_front().unwrap();
            let (lt, ls) = self.track_out[1].pop_front().unwrap();
            for (i, speed) in [rs, ls].into_iter().enumerate() {
                self.smoothers[i].push(states[i], speed, &mut self.smooth_buf);
                self.smooth_out[i].extend(self.smooth_buf.drain(..));
            }
            self.ready.push_back(([rt, lt], [rs, ls], fbox));
        }
        self.emit(out);
    }

    fn emit(&mut self, out: &mut Vec<UsageState>) {
        while !self.ready.is_empty() && self.smooth_out.iter().all(|q| !q.is_empty()) {
            let (tracks, speeds, fbox) = self.ready.pop_front().unwrap();
            let r = self.smooth_out[0].pop_front().unwrap();
            let l = self.smooth_out[1].pop_front().unwrap();
            self.builders[0].push(&r, &mut self.events[0]);
            self.builders[1].push(&l, &mut self.events[1]);
            self.acc.push(
                SideFrame { state: &r, track: &tracks[0], speed: speeds[0] },
                SideFrame { state: &l, track: &tracks[1], speed: speeds[1] },
                fbox.as_ref(),
            );
            out.push(r);
            out.push(l);
        }
    }
}

/// Runs the streaming pipeline over `groups`, handing each smoothed state to `sink`.
pub fn run_streaming<I, F>(
    groups: I,
    cfg: PipelineConfig,
    meta: SessionMeta,
    mut sink: F,
) -> Result<SessionSummary>
where
    I: IntoIterator<Item = Result<FrameGroup>>,
    F: FnMut(&UsageState) -> Result<()>,
{
    let mut p = Pipeline::new(cfg, meta)?;
    let mut out = Vec::new();
    for g in groups {
        p.push(&g?, &mut out)?;
        for s in out.drain(..) {
            sink(&s)?;
        }
    }
    let summary = p.finish(&mut out);
    for s in &out {
        sink(s)?;
    }
    Ok(summary)
}

/// Whole-session outputs of the batch route.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub raw: UsageTimeline,
    pub timeline: UsageTimeline,
    pub events: Vec<TimedEvent>,
    pub report: SessionReport,
}

fn interleave(fps: f64, right: &[UsageState], left: &[UsageState]) -> UsageTimeline {
    UsageTimeline {
        fps,
        states: right.iter().zip(left).flat_map(|(r, l)| [*r, *l]).collect(),
    }
}

fn counts(states: &[UsageState]) -> ResolutionCounts {
    let mut c = ResolutionCounts::default();
    for s in states {
        c.record(s.provenance);
    }
    c
}

/// Computes the report for given per-side usage states, taking hand motion and
/// forceps boxes from the suppressed localization channel of `frames`.
pub fn report_for_usage(
    frames: &[SuppressedFrame],
    right: &[UsageState],
    left: &[UsageState],
    cfg: &PipelineConfig,
    meta: &SessionMeta,
) -> Result<SessionReport> {
    cfg.validate()?;
    meta.validate()?;
    if right.len() != frames.len() || left.len() != frames.len() {
        return Err(Error::Invalid(format!(
            "usage covers {}/{} frames but the detection stream has {}",
            right.len(),
            left.len(),
            frames.len()
        )));
    }
    let first = frames.first().map_or(0, |f| f.frame);
    let trajs = Side::ALL.map(|side| {
        let c = hand_centers(frames.iter().map(|f| f.loc.as_slice()), side);
        build_trajectory(side, first, &c, cfg.max_gap)
    });
    let vels = [velocity(&trajs[0], meta.fps), velocity(&trajs[1], meta.fps)];
    let boxes: Vec<Option<BBox>> = frames.iter().map(|f| forceps_box(&f.loc)).collect();
    compute_report(
        SideSeries { smoothed: right, trajectory: &trajs[0], velocity: &vels[0], counts: counts(right) },
        SideSeries { smoothed: left, trajectory: &trajs[1], velocity: &vels[1], counts: counts(left) },
        &boxes,
        meta.fps,
        cfg,
    )
}

/// Batch form of the pipeline over a whole session held in memory.
pub fn run_batch(groups: &[FrameGroup], cfg: &PipelineConfig, meta: &SessionMeta) -> Result<SessionOutput> {
    cfg.validate()?;
    meta.validate()?;
    for (i, g) in groups.iter().enumerate() {
        if g.frame != i as u64 {
            return Err(Error::Invalid(format!("expected frame {i}, got frame {}", g.frame)));
        }
    }
    let frames: Vec<SuppressedFrame> = groups
        .iter()
        .map(|g| suppress_frame(g, cfg))
        .collect::<Result<_>>()?;
    let resolved: Vec<_> = frames
        .iter()
        .map(|f| resolve_frame(f.frame, &f.int, &f.loc, cfg.s1_overlap))
        .collect();
    let raw_r: Vec<UsageState> = resolved.iter().map(|r| r.right).collect();
    let raw_l: Vec<UsageState> = resolved.iter().map(|r| r.left).collect();

    let trajs = Side::ALL.map(|side| {
        let c = hand_centers(frames.iter().map(|f| f.loc.as_slice()), side);
        build_trajectory(side, 0, &c, cfg.max_gap)
    });
    let speeds = |i: usize| -> Vec<Option<f64>> {
        velocity(&trajs[i], meta.fps).iter().map(|v| v.speed).collect()
    };
    let sm_r = smooth_usage(&raw_r, &speeds(0), &cfg.smoothing)?;
    let sm_l = smooth_usage(&raw_l, &speeds(1), &cfg.smoothing)?;

    let mut events = events_from_states(&sm_r);
    events.extend(events_from_states(&sm_l));
    let report = report_for_usage(&frames, &sm_r, &sm_l, cfg, meta)?;
    Ok(SessionOutput {
        raw: interleave(meta.fps, &raw_r, &raw_l),
        timeline: interleave(meta.fps, &sm_r, &sm_l),
        events,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetClass, Payload, Provenance};
    use crate::temporal::WindowAlign;
    use proptest::prelude::*;

    fn det(frame: u64, class: DetClass, x: f64, y: f64, w: f64, h: f64, conf: f64) -> Detection {
        Detection::new(frame, class, BBox::new(x, y, w, h).unwrap(), conf).unwrap()
    }

    fn st(frame: u64, side: Side, payload: Payload) -> UsageState {
        UsageState {
            frame,
            side,
            payload,
            bbox: Some(BBox::new(0.0, 0.0, 1.0, 1.0).unwrap()),
            provenance: Provenance::Direct,
        }
    }

    #[test]
    fn events_from_runs() {
        use Payload::*;
        let mut states: Vec<UsageState> = [Empty, Empty, Forceps, Forceps, Forceps, Empty]
            .iter()
            .enumerate()
            .map(|(i, p)| st(i as u64, Side::Left, *p))
            .collect();
        states.push(UsageState::absent(6, Side::Left));
        states.push(st(7, Side::Left, Empty));
        let ev = events_from_states(&states);
        let spans: Vec<_> = ev.iter().map(|e| (e.class, e.start, e.end)).collect();
        assert_eq!(
            spans,
            [
                (InteractionClass::EmptyLeft, 0, 1),
                (InteractionClass::ForcepsLeft, 2, 4),
                (InteractionClass::EmptyLeft, 5, 5),
                (InteractionClass::EmptyLeft, 7, 7),
            ]
        );
    }

    #[test]
    fn rejects_non_dense_frames() {
        let mut p = Pipeline::new(PipelineConfig::default(), SessionMeta::default()).unwrap();
        let mut out = Vec::new();
        p.push(&FrameGroup::new(0), &mut out).unwrap();
        assert!(p.push(&FrameGroup::new(2), &mut out).is_err());
    }

    #[test]
    fn forceps_box_prefers_confidence() {
        let f = DetClass::Loc(LocClass::Forceps);
        let a = det(0, f, 0.0, 0.0, 5.0, 5.0, 0.5);
        let b = det(0, f, 50.0, 0.0, 5.0, 5.0, 0.9);
        let c = det(0, f, 90.0, 0.0, 5.0, 5.0, 0.9);
        assert_eq!(forceps_box(&[a, b, c]), Some(b.bbox));
        assert_eq!(forceps_box(&[]), None);
    }

    /// Random sessions: hands drifting with gaps, tools near hands, noisy interaction boxes.
    fn arb_session() -> impl Strategy<Value = Vec<FrameGroup>> {
        let frame = (
            prop::option::weighted(0.85, (0.0..400.0f64, 0.0..300.0f64)),
            prop::option::weighted(0.85, (0.0..400.0f64, 0.0..300.0f64)),
            prop::collection::vec((0usize..3, 0.0..420.0f64, 0.0..320.0f64, 0.3..1.0f64), 0..3),
            prop::collection::vec((0usize..8, 0.0..420.0f64, 0.0..320.0f64, 0.3..1.0f64), 0..4),
        );
        prop::collection::vec(frame, 1..60).prop_map(|frames| {
            frames
                .into_iter()
                .enumerate()
                .map(|(i, (r, l, tools, ints))| {
                    let f = i as u64;
                    let mut g = FrameGroup::new(f);
                    if let Some((x, y)) = r {
                        g.detections.push(det(f, DetClass::Loc(LocClass::RightHand), x, y, 60.0, 60.0, 0.9));
                    }
                    if let Some((x, y)) = l {
                        g.detections.push(det(f, DetClass::Loc(LocClass::LeftHand), x, y, 60.0, 60.0, 0.9));
                    }
                    let tool_classes = [LocClass::NeedleDriver, LocClass::Forceps, LocClass::Scissors];
                    for (c, x, y, conf) in tools {
                        g.detections.push(det(f, DetClass::Loc(tool_classes[c]), x, y, 40.0, 25.0, conf));
                    }
                    for (c, x, y, conf) in ints {
                        g.detections.push(det(f, DetClass::Int(InteractionClass::ALL[c]), x, y, 80.0, 70.0, conf));
                    }
                    g
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn streaming_matches_batch(
            groups in arb_session(),
            window in 1usize..20,
            trailing in any::<bool>(),
            max_gap in 0usize..6,
        ) {
            let mut cfg = PipelineConfig { max_gap, ..Default::default() };
            cfg.smoothing.window = window;
            if trailing {
                cfg.smoothing.align = WindowAlign::Trailing;
            }
            let meta = SessionMeta::default();
            let batch = run_batch(&groups, &cfg, &meta).unwrap();
            let mut states = Vec::new();
            let summary = run_streaming(groups.iter().cloned().map(Ok), cfg, meta, |s| {
                states.push(*s);
                Ok(())
            })
            .unwrap();
            prop_assert_eq!(&states, &batch.timeline.states);
            prop_assert_eq!(&summary.events, &batch.events);
            let bad = summary.report.mismatches(&batch.report, 1e-9);
            prop_assert!(bad.is_empty(), "{:?}", bad);
        }

        #[test]
        fn streaming_buffer_is_bounded(groups in arb_session(), window in 1usize..20, max_gap in 0usize..6) {
            let mut cfg = PipelineConfig { max_gap, ..Default::default() };
            cfg.smoothing.window = window;
            let mut p = Pipeline::new(cfg, SessionMeta::default()).unwrap();
            let mut out = Vec::new();
            for g in &groups {
                p.push(g, &mut out).unwrap();
                prop_assert!(p.buffered_frames() <= max_gap + 2 + window);
            }
        }
    }
}
