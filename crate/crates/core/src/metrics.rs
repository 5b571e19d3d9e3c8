//! Motion metrics for one recorded session.
//!
//! The procedure spans from the first to the last frame on which either hand uses a
//! tool. Within that span we report its duration, each hand's 2D path length and
//! movement count, and the mean and standard deviation of the forceps box aspect ratio
//! while the forceps are in use.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::aspect_ratio;
use crate::interaction::ResolutionCounts;
use crate::model::{BBox, Payload, Side, UsageState};
use crate::temporal::{TrackSample, Trajectory, VelocitySample};

pub const DEFAULT_STATIC_THRESH: f64 = 25.0;

/// Inclusive frame span of the procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub start: u64,
    pub end: u64,
}

impl Bounds {
    pub fn contains(&self, frame: u64) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandMetrics {
    pub path_length_px: Option<f64>,
    pub movement_count: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frames: u64,
    pub right: ResolutionCounts,
    pub left: ResolutionCounts,
    /// Share of visible hand slots resolved by either fallback.
    pub fallback_rate: Option<f64>,
    pub scenario1_rate: Option<f64>,
    pub scenario2_rate: Option<f64>,
}

impl Diagnostics {
    pub fn new(frames: u64, right: ResolutionCounts, left: ResolutionCounts) -> Self {
        let mut all = right;
        all.add(&left);
        let visible = all.visible();
        let rate = |n: u64| (visible > 0).then(|| n as f64 / visible as f64);
        Self {
            frames,
            right,
            left,
            fallback_rate: rate(all.scenario1 + all.scenario2),
            scenario1_rate: rate(all.scenario1),
            scenario2_rate: rate(all.scenario2),
        }
    }
}

/// Motion metrics and pipeline diagnostics for one session.
///
/// `None` marks a metric that is unavailable (no procedure span, or no forceps usage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub fps: f64,
    pub start_frame: Option<u64>,
    pub end_frame: Option<u64>,
    pub duration_s: Option<f64>,
    pub right: HandMetrics,
    pub left: HandMetrics,
    pub forceps_ar_mean: Option<f64>,
    pub forceps_ar_std: Option<f64>,
    pub diagnostics: Diagnostics,
    pub config: PipelineConfig,
}

fn opt_close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

impl SessionReport {
    pub fn empty(fps: f64, config: PipelineConfig) -> Self {
        Self {
            fps,
            start_frame: None,
            end_frame: None,
            duration_s: None,
            right: HandMetrics::default(),
            left: HandMetrics::default(),
            forceps_ar_mean: None,
            forceps_ar_std: None,
            diagnostics: Diagnostics::new(0, Default::default(), Default::default()),
            config,
        }
    }

    pub fn hand(&self, side: Side) -> &HandMetrics {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }

    /// Field-by-field comparison: integers exactly, reals to within `tol`.
    pub fn approx_eq(&self, other: &SessionReport, tol: f64) -> bool {
        self.mismatches(other, tol).is_empty()
    }

    /// Names of the fields that differ beyond `tol`.
    pub fn mismatches(&self, other: &SessionReport, tol: f64) -> Vec<&'static str> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, name: &'static str| {
            if !ok {
                bad.push(name);
            }
        };
        check((self.fps - other.fps).abs() <= tol, "fps");
        check(self.start_frame == other.start_frame, "start_frame");
        check(self.end_frame == other.end_frame, "end_frame");
        check(opt_close(self.duration_s, other.duration_s, tol), "duration_s");
        check(
            opt_close(self.right.path_length_px, other.right.path_length_px, tol),
            "right.path_length_px",
        );
        check(
            self.right.movement_count == other.right.movement_count,
            "right.movement_count",
        );
        check(
            opt_close(self.left.path_length_px, other.left.path_length_px, tol),
            "left.path_length_px",
        );
        check(
            self.left.movement_count == other.left.movement_count,
            "left.movement_count",
        );
        check(opt_close(self.forceps_ar_mean, other.forceps_ar_mean, tol), "forceps_ar_mean");
        check(opt_close(self.forceps_ar_std, other.forceps_ar_std, tol), "forceps_ar_std");
        let (d, e) = (&self.diagnostics, &other.diagnostics);
        check(
            d.frames == e.frames && d.right == e.right && d.left == e.left,
            "diagnostics.counts",
        );
        check(
            opt_close(d.fallback_rate, e.fallback_rate, tol)
                && opt_close(d.scenario1_rate, e.scenario1_rate, tol)
                && opt_close(d.scenario2_rate, e.scenario2_rate, tol),
            "diagnostics.rates",
        );
        check(self.config == other.config, "config");
        bad
    }
}

/// First and last frame on which either hand uses a tool.
pub fn procedure_bounds(right: &[UsageState], left: &[UsageState]) -> Option<Bounds> {
    let tool_frames = right
        .iter()
        .chain(left)
        .filter(|s| s.payload.is_tool())
        .map(|s| s.frame);
    let (mut lo, mut hi) = (u64::MAX, None::<u64>);
    for f in tool_frames {
        lo = lo.min(f);
        hi = Some(hi.map_or(f, |h| h.max(f)));
    }
    hi.map(|end| Bounds { start: lo, end })
}

pub fn duration_seconds(bounds: Bounds, fps: f64) -> f64 {
    (bounds.end - bounds.start + 1) as f64 / fps
}

fn same_segment(a: &TrackSample, b: &TrackSample) -> bool {
    a.segment.is_some() && a.segment == b.segment
}

/// Sum of center-to-center distances over consecutive frames inside `bounds` that lie
/// in the same trajectory segment.
pub fn path_length(traj: &Trajectory, bounds: Bounds) -> f64 {
    traj.samples
        .windows(2)
        .filter(|w| bounds.contains(w[0].frame) && bounds.contains(w[1].frame))
        .filter(|w| same_segment(&w[0], &w[1]))
        .map(|w| w[0].center.unwrap().distance(w[1].center.unwrap()))
        .sum()
}

/// Half the number of times the speed crosses `static_thresh` inside `bounds`, rounded
/// down. A speed exactly at the threshold counts as static; only adjacent frames that
/// both have a speed are compared.
pub fn count_movements(
    velocities: &[VelocitySample],
    bounds: Bounds,
    static_thresh: f64,
) -> Result<u64> {
    if static_thresh.is_nan() || static_thresh <= 0.0 {
        return Err(Error::Config(format!(
            "static threshold must be positive, got {static_thresh}"
        )));
    }
    let crossings = velocities
        .windows(2)
        .filter(|w| bounds.contains(w[0].frame) && bounds.contains(w[1].frame))
        .filter_map(|w| Some((w[0].speed?, w[1].speed?)))
        .filter(|(a, b)| (*a > static_thresh) != (*b > static_thresh))
        .count() as u64;
    Ok(crossings / 2)
}

/// Mean and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripStats {
    pub mean: f64,
    pub std: f64,
    pub frames: u64,
}

/// Aspect-ratio statistics of the forceps box over frames where either hand holds the
/// forceps and the localization channel has a forceps box.
///
/// `forceps_boxes[i]` is the frame's highest-confidence forceps box and is aligned with
/// `right[i]` and `left[i]`.
pub fn forceps_grip_stats(
    right: &[UsageState],
    left: &[UsageState],
    forceps_boxes: &[Option<BBox>],
) -> Option<GripStats> {
    let ratios: Vec<f64> = right
        .iter()
        .zip(left)
        .zip(forceps_boxes)
        .filter(|((r, l), _)| r.payload == Payload::Forceps || l.payload == Payload::Forceps)
        .filter_map(|(_, b)| b.as_ref().map(aspect_ratio))
        .collect();
    if ratios.is_empty() {
        return None;
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Some(GripStats {
        mean,
        std: var.sqrt(),
        frames: ratios.len() as u64,
    })
}

/// Everything the report needs about one hand.
#[derive(Debug, Clone, Copy)]
pub struct SideSeries<'a> {
    pub smoothed: &'a [UsageState],
    pub trajectory: &'a Trajectory,
    pub velocity: &'a [VelocitySample],
    pub counts: ResolutionCounts,
}

/// Assembles the session report from whole-session stage outputs.
pub fn compute_report(
    right: SideSeries<'_>,
    left: SideSeries<'_>,
    forceps_boxes: &[Option<BBox>],
    fps: f64,
    config: &PipelineConfig,
) -> Result<SessionReport> {
    let frames = right.smoothed.len() as u64;
    let mut report = SessionReport::empty(fps, *config);
    report.diagnostics = Diagnostics::new(frames, right.counts, left.counts);
    let Some(bounds) = procedure_bounds(right.smoothed, left.smoothed) else {
        return Ok(report);
    };
    report.start_frame = Some(bounds.start);
    report.end_frame = Some(bounds.end);
    report.duration_s = Some(duration_seconds(bounds, fps));
    for (series, slot) in [(right, &mut report.right), (left, &mut report.left)] {
        slot.path_length_px = Some(path_length(series.trajectory, bounds));
        slot.movement_count = Some(count_movements(
            series.velocity,
            bounds,
            config.static_thresh,
        )?);
    }
    if let Some(g) = forceps_grip_stats(right.smoothed, left.smoothed, forceps_boxes) {
        report.forceps_ar_mean = Some(g.mean);
        report.forceps_ar_std = Some(g.std);
    }
    Ok(report)
}

#[derive(Debug, Clone, Default)]
struct SideAccumulator {
    prev: Option<(TrackSample, Option<f64>)>,
    path: f64,
    pending_path: f64,
    crossings: u64,
    pending_crossings: u64,
    counts: ResolutionCounts,
}

/// Streaming form of [`compute_report`]: constant memory, one frame at a time.
///
/// Contributions after the latest tool frame are held as pending and committed when
/// another tool frame arrives, so the procedure end never needs to be known upfront.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    fps: f64,
    config: PipelineConfig,
    frames: u64,
    bounds: Option<Bounds>,
    sides: [SideAccumulator; 2],
    grip_n: u64,
    grip_mean: f64,
    grip_m2: f64,
}

/// One frame of smoothed output for one hand.
#[derive(Debug, Clone, Copy)]
pub struct SideFrame<'a> {
    pub state: &'a UsageState,
    pub track: &'a TrackSample,
    pub speed: Option<f64>,
}

impl MetricsAccumulator {
    pub fn new(fps: f64, config: PipelineConfig) -> Self {
        Self {
            fps,
            config,
            frames: 0,
            bounds: None,
            sides: Default::default(),
            grip_n: 0,
            grip_mean: 0.0,
            grip_m2: 0.0,
        }
    }

    pub fn push(&mut self, right: SideFrame<'_>, left: SideFrame<'_>, forceps_box: Option<&BBox>) {
        let frame = right.state.frame;
        self.frames += 1;
        let started = self.bounds.is_some();
        let thresh = self.config.static_thresh;
        for (acc, cur) in self.sides.iter_mut().zip([right, left]) {
            acc.counts.record(cur.state.provenance);
            if let Some((prev, prev_speed)) = acc.prev {
                if started {
                    if same_segment(&prev, cur.track) {
                        acc.pending_path +=
                            prev.center.unwrap().distance(cur.track.center.unwrap());
                    }
                    if let (Some(a), Some(b)) = (prev_speed, cur.speed) {
                        if (a > thresh) != (b > thresh) {
                            acc.pending_crossings += 1;
                        }
                    }
                }
            }
            acc.prev = Some((*cur.track, cur.speed));
        }

        let uses_tool = right.state.payload.is_tool() || left.state.payload.is_tool();
        if uses_tool {
            match &mut self.bounds {
                Some(b) => b.end = frame,
                None => {
                    self.bounds = Some(Bounds {
                        start: frame,
                        end: frame,
                    })
                }
            }
            for acc in &mut self.sides {
                acc.path += std::mem::take(&mut acc.pending_path);
                acc.crossings += std::mem::take(&mut acc.pending_crossings);
            }
        }

        let forceps = right.state.payload == Payload::Forceps || left.state.payload == Payload::Forceps;
        if let (true, Some(b)) = (forceps, forceps_box) {
            let r = aspect_ratio(b);
            self.grip_n += 1;
            let delta = r - self.grip_mean;
            self.grip_mean += delta / self.grip_n as f64;
            self.grip_m2 += delta * (r - self.grip_mean);
        }
    }

    pub fn finish(self) -> SessionReport {
        let [r, l] = &self.sides;
        let mut report = SessionReport::empty(self.fps, self.config);
        report.diagnostics = Diagnostics::new(self.frames, r.counts, l.counts);
        if let Some(b) = self.bounds {
            report.start_frame = Some(b.start);
            report.end_frame = Some(b.end);
            report.duration_s = Some(duration_seconds(b, self.fps));
            report.right = HandMetrics {
                path_length_px: Some(r.path),
                movement_count: Some(r.crossings / 2),
            };
            report.left = HandMetrics {
                path_length_px: Some(l.path),
                movement_count: Some(l.crossings / 2),
            };
        }
        if self.grip_n > 0 {
            report.forceps_ar_mean = Some(self.grip_mean);
            report.forceps_ar_std = Some((self.grip_m2 / self.grip_n as f64).sqrt());
        }
        report
    }
}
