//! Seeded synthetic sessions with known ground truth.
//!
//! A session is a suturing script (needle driver and scissors in the right hand,
//! forceps in the left, with empty-hand gaps), smooth hand paths, rendered ground-truth
//! boxes for both channels, and a corrupted copy of those boxes standing in for network
//! output. The expected report is computed straight from the ground truth with its own
//! small implementation of the metric formulas.
//!
//! # Random numbers
//!
//! All randomness comes from ChaCha8 (`rand_chacha` 0.3) seeded with
//! `seed_from_u64(seed)`, one stream per purpose via `set_stream`: 1 script, 2 right-hand
//! motion, 3 left-hand motion, 4 grip angle, 5 corruption. A uniform is the top 53 bits
//! of `next_u64` times 2^-53; a normal is one Box-Muller cosine draw from two uniforms.
//! Every step consumes a fixed number of draws, so the two skill profiles and all noise
//! levels see the same underlying numbers.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::interaction::ResolutionCounts;
use crate::metrics::{Diagnostics, HandMetrics, SessionReport};
use crate::model::{
    BBox, DetClass, Detection, FrameGroup, InteractionClass, LocClass, Payload, SessionMeta,
    Side, TimedEvent,
};

const STREAM_SCRIPT: u64 = 1;
const STREAM_MOTION: [u64; 2] = [2, 3];
const STREAM_GRIP: u64 = 4;
const STREAM_CORRUPTION: u64 = 5;

const HAND_SIZE: f64 = 70.0;
const FORCEPS_LEN: f64 = 70.0;
const FORCEPS_THICK: f64 = 8.0;
const LEAD_IN: f64 = 30.0;
const TAIL: f64 = 30.0;

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64, stream: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        Rng(r)
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillProfile {
    Expert,
    Novice,
}

impl std::str::FromStr for SkillProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(SkillProfile::Expert),
            "novice" => Ok(SkillProfile::Novice),
            _ => Err(Error::Config(format!("unknown profile `{s}` (expected expert or novice)"))),
        }
    }
}

/// Numbers that distinguish the skill profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    /// Multiplier on every script duration.
    pub time_scale: f64,
    /// Multiplier on waypoint offsets from the hand's home position.
    pub spread: f64,
    /// Chance that a move goes through an extra stop.
    pub detour_p: f64,
    pub grip_mean_deg: f64,
    pub grip_sd_deg: f64,
    /// Amplitude of the within-event grip wobble.
    pub grip_wobble_deg: f64,
    pub tremor_px: f64,
}

impl SkillProfile {
    pub const ALL: [SkillProfile; 2] = [SkillProfile::Expert, SkillProfile::Novice];

    pub fn params(self) -> ProfileParams {
        match self {
            SkillProfile::Expert => ProfileParams {
                time_scale: 1.0,
                spread: 0.6,
                detour_p: 0.05,
                grip_mean_deg: 45.0,
                grip_sd_deg: 3.0,
                grip_wobble_deg: 0.5,
                tremor_px: 0.4,
            },
            SkillProfile::Novice => ProfileParams {
                time_scale: 1.6,
                spread: 1.0,
                detour_p: 0.5,
                grip_mean_deg: 20.0,
                grip_sd_deg: 12.0,
                grip_wobble_deg: 2.0,
                tremor_px: 0.8,
            },
        }
    }

    fn max_time_scale() -> f64 {
        SkillProfile::ALL
            .iter()
            .map(|p| p.params().time_scale)
            .fold(1.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-hand, per-frame chance of losing the interaction box.
    pub dropout_p: f64,
    /// Chance of an extra interaction box with another payload on the same hand.
    pub duplicate_p: f64,
    /// Chance that the interaction box reports a wrong payload.
    pub flip_p: f64,
    /// Standard deviation of the per-corner box noise, in pixels.
    pub jitter_px: f64,
    pub confidence: (f64, f64),
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            dropout_p: 0.0,
            duplicate_p: 0.0,
            flip_p: 0.0,
            jitter_px: 0.0,
            confidence: (0.6, 0.99),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: u64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub profile: SkillProfile,
    pub noise: NoiseConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 1800,
            fps: 30.0,
            width: 640,
            height: 480,
            profile: SkillProfile::Expert,
            noise: NoiseConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("--frames must be at least 1".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("frame size must be positive".into()));
        }
        let n = &self.noise;
        for (name, p) in [("--dropout", n.dropout_p), ("--duplicate", n.duplicate_p), ("--flip", n.flip_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        if !(n.jitter_px.is_finite() && n.jitter_px >= 0.0) {
            return Err(Error::Config(format!("--jitter must be >= 0, got {}", n.jitter_px)));
        }
        let (lo, hi) = n.confidence;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("confidence range [{lo}, {hi}] invalid")));
        }
        Ok(())
    }

    pub fn meta(&self) -> SessionMeta {
        SessionMeta {
            fps: self.fps,
            frame_width: self.width,
            frame_height: self.height,
        }
    }
}

/// Which slots were corrupted, as `(frame, side)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorruptionLog {
    pub dropped: Vec<(u64, Side)>,
    pub duplicated: Vec<(u64, Side)>,
    pub flipped: Vec<(u64, Side)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub meta: SessionMeta,
    /// Ground-truth usage events covering every frame of both hands.
    pub events: Vec<TimedEvent>,
    /// Ground-truth boxes, both channels, one group per frame.
    pub boxes: Vec<FrameGroup>,
    /// The corrupted detection stream.
    pub detections: Vec<FrameGroup>,
    pub expected: SessionReport,
    pub log: CorruptionLog,
}

impl Scenario {
    /// Ground-truth payload of one hand on every frame.
    pub fn usage(&self, side: Side) -> Vec<Payload> {
        let mut out = vec![Payload::Empty; self.boxes.len()];
        for e in self.events.iter().filter(|e| e.side() == side) {
            for f in e.start..=e.end {
                out[f as usize] = e.class.payload();
            }
        }
        out
    }
}

struct StitchDraw {
    driver: f64,
    left_gap: f64,
    forceps: f64,
    right_gap: f64,
    scissors: f64,
    after_scissors: f64,
}

impl StitchDraw {
    fn draw(rng: &mut Rng) -> Self {
        Self {
            driver: rng.range(60.0, 90.0),
            left_gap: rng.range(30.0, 40.0),
            forceps: rng.range(45.0, 70.0),
            right_gap: rng.range(30.0, 45.0),
            scissors: rng.range(30.0, 45.0),
            after_scissors: rng.range(30.0, 45.0),
        }
    }
}

fn scaled(base: f64, s: f64) -> u64 {
    (base * s).round() as u64
}

/// Frame layout of one stitch at time scale `s`.
struct StitchPlan {
    driver: u64,
    left_gap: u64,
    forceps: u64,
    core: u64,
    scissors: Option<(u64, u64)>,
}

impl StitchPlan {
    fn new(d: &StitchDraw, index: usize, s: f64) -> Self {
        let driver = scaled(d.driver, s);
        let left_gap = scaled(d.left_gap, s);
        let forceps = scaled(d.forceps, s);
        let core = (driver + scaled(d.right_gap, s)).max(left_gap + forceps + scaled(30.0, s));
        let scissors = (index % 3 == 2).then(|| (scaled(d.scissors, s), scaled(d.after_scissors, s)));
        Self { driver, left_gap, forceps, core, scissors }
    }

    fn len(&self) -> u64 {
        self.core + self.scissors.map_or(0, |(a, b)| a + b)
    }
}

/// Dense per-side payloads from the script, plus each forceps event's frame range.
fn build_script(cfg: &SynthConfig, s: f64) -> ([Vec<Payload>; 2], Vec<(u64, u64)>) {
    let n = cfg.frames;
    let s_max = SkillProfile::max_time_scale();
    let mut rng = Rng::new(cfg.seed, STREAM_SCRIPT);
    let mut draws = Vec::new();
    let mut used = scaled(LEAD_IN, s_max) + scaled(TAIL, s_max);
    loop {
        let d = StitchDraw::draw(&mut rng);
        let len = StitchPlan::new(&d, draws.len(), s_max).len();
        if used + len > n {
            break;
        }
        used += len;
        draws.push(d);
    }

    let mut usage = [vec![Payload::Empty; n as usize], vec![Payload::Empty; n as usize]];
    let mut forceps_events = Vec::new();
    let mut fill = |side: Side, from: u64, len: u64, p: Payload| {
        for f in from..from + len {
            usage[side.index()][f as usize] = p;
        }
    };
    let mut t = scaled(LEAD_IN, s);
    for (i, d) in draws.iter().enumerate() {
        let plan = StitchPlan::new(d, i, s);
        fill(Side::Right, t, plan.driver, Payload::NeedleDriver);
        fill(Side::Left, t + plan.left_gap, plan.forceps, Payload::Forceps);
        forceps_events.push((t + plan.left_gap, t + plan.left_gap + plan.forceps - 1));
        if let Some((sc, _)) = plan.scissors {
            fill(Side::Right, t + plan.core, sc, Payload::Scissors);
        }
        t += plan.len();
    }
    (usage, forceps_events)
}

fn run_length_events(usage: &[Vec<Payload>; 2]) -> Vec<TimedEvent> {
    let mut out = Vec::new();
    for side in Side::ALL {
        let lane = &usage[side.index()];
        let mut start = 0;
        for f in 1..=lane.len() {
            if f == lane.len() || lane[f] != lane[start] {
                let class = InteractionClass::new(lane[start], side).expect("script payloads are visible");
                out.push(TimedEvent { class, start: start as u64, end: f as u64 - 1 });
                start = f;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Move {
    t0: f64,
    t1: f64,
    from: (f64, f64),
    to: (f64, f64),
}

fn move_frames(unit_dist: f64, fps: f64) -> f64 {
    (0.4 + unit_dist / 150.0) * fps
}

/// Hand center on every frame: pauses and cosine-profile moves between waypoints
/// around `home`, plus a slow tremor.
fn hand_path(cfg: &SynthConfig, side: Side, home: (f64, f64), p: &ProfileParams) -> Vec<(f64, f64)> {
    let mut rng = Rng::new(cfg.seed, STREAM_MOTION[side.index()]);
    let fps = cfg.fps;
    let tremor_phase = (rng.range(0.0, 2.0 * PI), rng.range(0.0, 2.0 * PI));
    let at = |u: (f64, f64)| (home.0 + p.spread * u.0, home.1 + p.spread * u.1);
    let mut phi = rng.range(0.0, 2.0 * PI);
    let r0 = rng.range(60.0, 100.0);
    let mut cur = (r0 * phi.cos(), r0 * phi.sin());
    let origin = at(cur);
    let mut t = 0.0;
    let mut moves = Vec::new();
    let mut push = |t: &mut f64, a: (f64, f64), b: (f64, f64)| {
        let d = (b.0 - a.0).hypot(b.1 - a.1);
        let t1 = *t + move_frames(d, fps);
        moves.push(Move { t0: *t, t1, from: at(a), to: at(b) });
        *t = t1;
    };
    while t < cfg.frames as f64 {
        let turn = rng.range(-PI / 3.0, PI / 3.0);
        let r = rng.range(60.0, 100.0);
        let pause = rng.range(20.0, 40.0);
        let u_detour = rng.uniform();
        let r_detour = rng.range(30.0, 60.0);
        let detour_sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };

        t += pause;
        phi += PI + turn;
        let target = (r * phi.cos(), r * phi.sin());
        if u_detour < p.detour_p {
            let (dx, dy) = (target.0 - cur.0, target.1 - cur.1);
            let len = dx.hypot(dy);
            let mid = ((cur.0 + target.0) / 2.0, (cur.1 + target.1) / 2.0);
            let stop = (
                mid.0 - dy / len * r_detour * detour_sign,
                mid.1 + dx / len * r_detour * detour_sign,
            );
            push(&mut t, cur, stop);
            t += 0.4 * pause;
            push(&mut t, stop, target);
        } else {
            push(&mut t, cur, target);
        }
        cur = target;
    }

    let mut out = Vec::with_capacity(cfg.frames as usize);
    let mut k = 0;
    let mut pos = origin;
    for f in 0..cfg.frames {
        let tf = f as f64;
        while k < moves.len() && moves[k].t1 <= tf {
            pos = moves[k].to;
            k += 1;
        }
        let base = match moves.get(k) {
            Some(m) if m.t0 <= tf => {
                let tau = (tf - m.t0) / (m.t1 - m.t0);
                let w = (1.0 - (PI * tau).cos()) / 2.0;
                (m.from.0 + (m.to.0 - m.from.0) * w, m.from.1 + (m.to.1 - m.from.1) * w)
            }
            _ => pos,
        };
        let secs = tf / fps;
        out.push((
            base.0 + p.tremor_px * (2.0 * PI * 1.5 * secs + tremor_phase.0).sin(),
            base.1 + p.tremor_px * (2.0 * PI * 1.1 * secs + tremor_phase.1).sin(),
        ));
    }
    out
}

fn centered_box(c: (f64, f64), w: f64, h: f64) -> BBox {
    BBox::new(c.0 - w / 2.0, c.1 - h / 2.0, w, h).expect("synthetic boxes are positive")
}

fn union(a: &BBox, b: &BBox) -> BBox {
    let x = a.x.min(b.x);
    let y = a.y.min(b.y);
    BBox::new(x, y, a.right().max(b.right()) - x, a.bottom().max(b.bottom()) - y)
        .expect("union of positive boxes")
}

fn forceps_dims(theta_deg: f64) -> (f64, f64) {
    let t = theta_deg.to_radians();
    (
        FORCEPS_LEN * t.sin() + FORCEPS_THICK,
        FORCEPS_LEN * t.cos() + FORCEPS_THICK,
    )
}

struct Layout {
    sx: f64,
    sy: f64,
}

impl Layout {
    fn at(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.sx, y * self.sy)
    }

    fn home(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Right => self.at(480.0, 220.0),
            Side::Left => self.at(160.0, 220.0),
        }
    }

    fn tray(&self, tool: LocClass) -> BBox {
        match tool {
            LocClass::NeedleDriver => centered_box(self.at(250.0, 435.0), 64.0, 28.0),
            LocClass::Forceps => centered_box(self.at(320.0, 435.0), 20.0, 60.0),
            _ => centered_box(self.at(390.0, 435.0), 50.0, 30.0),
        }
    }
}

/// Clean boxes of one frame: five localization boxes then two interaction boxes.
fn render_frame(
    f: u64,
    hands: [(f64, f64); 2],
    usage: [Payload; 2],
    grip_deg: Option<f64>,
    layout: &Layout,
) -> Vec<Detection> {
    let hand_boxes = hands.map(|c| centered_box(c, HAND_SIZE, HAND_SIZE));
    let held = |tool: LocClass| -> Option<(Side, BBox)> {
        let payload = tool.tool_payload()?;
        let side = Side::ALL.into_iter().find(|s| usage[s.index()] == payload)?;
        let c = hands[side.index()];
        let b = match tool {
            LocClass::NeedleDriver => centered_box((c.0 - 20.0, c.1 - 25.0), 64.0, 28.0),
            LocClass::Scissors => centered_box((c.0 - 20.0, c.1 - 25.0), 50.0, 30.0),
            _ => {
                let (w, h) = forceps_dims(grip_deg.expect("forceps in use has a grip angle"));
                let dx = if side == Side::Left { 20.0 } else { -20.0 };
                centered_box((c.0 + dx, c.1 - 20.0), w, h)
            }
        };
        Some((side, b))
    };
    let mut out = Vec::with_capacity(7);
    let mut tool_in_hand: [Option<BBox>; 2] = [None, None];
    out.push(Detection { frame: f, class: DetClass::Loc(LocClass::RightHand), bbox: hand_boxes[0], confidence: 1.0 });
    out.push(Detection { frame: f, class: DetClass::Loc(LocClass::LeftHand), bbox: hand_boxes[1], confidence: 1.0 });
    for tool in [LocClass::NeedleDriver, LocClass::Forceps, LocClass::Scissors] {
        let bbox = match held(tool) {
            Some((side, b)) => {
                tool_in_hand[side.index()] = Some(b);
                b
            }
            None => layout.tray(tool),
        };
        out.push(Detection { frame: f, class: DetClass::Loc(tool), bbox, confidence: 1.0 });
    }
    for side in Side::ALL {
        let i = side.index();
        let bbox = tool_in_hand[i].map_or(hand_boxes[i], |t| union(&hand_boxes[i], &t));
        let class = InteractionClass::new(usage[i], side).expect("script payloads are visible");
        out.push(Detection { frame: f, class: DetClass::Int(class), bbox, confidence: 1.0 });
    }
    out
}

struct SlotDraw {
    drop: f64,
    dup: f64,
    flip: f64,
    flip_pick: usize,
    dup_pick: usize,
    dup_angle: f64,
}

struct BoxDraw {
    conf: f64,
    corners: [f64; 4],
}

fn others(p: Payload) -> Vec<Payload> {
    Payload::VISIBLE.into_iter().filter(|q| *q != p).collect()
}

fn jittered(b: &BBox, d: &BoxDraw, j: f64) -> BBox {
    if j == 0.0 {
        return *b;
    }
    let x0 = b.x + j * d.corners[0];
    let y0 = b.y + j * d.corners[1];
    let x1 = (b.right() + j * d.corners[2]).max(x0 + 1.0);
    let y1 = (b.bottom() + j * d.corners[3]).max(y0 + 1.0);
    BBox::new(x0, y0, x1 - x0, y1 - y0).expect("jittered box keeps positive size")
}

/// Turns one frame of clean boxes into detector-like output.
fn corrupt_frame(
    clean: &[Detection],
    rng: &mut Rng,
    noise: &NoiseConfig,
    log: &mut CorruptionLog,
) -> Vec<Detection> {
    let slots: [SlotDraw; 2] = std::array::from_fn(|_| SlotDraw {
        drop: rng.uniform(),
        dup: rng.uniform(),
        flip: rng.uniform(),
        flip_pick: rng.below(3),
        dup_pick: rng.below(3),
        dup_angle: rng.range(0.0, 2.0 * PI),
    });
    let boxes: [BoxDraw; 9] = std::array::from_fn(|_| BoxDraw {
        conf: rng.uniform(),
        corners: [rng.normal(), rng.normal(), rng.normal(), rng.normal()],
    });
    let (lo, hi) = noise.confidence;
    let emit = |d: &Detection, class: DetClass, bbox: BBox, k: usize| Detection {
        frame: d.frame,
        class,
        bbox: jittered(&bbox, &boxes[k], noise.jitter_px),
        confidence: lo + (hi - lo) * boxes[k].conf,
    };

    let mut out: Vec<Detection> = clean[..5].iter().enumerate().map(|(k, d)| emit(d, d.class, d.bbox, k)).collect();
    for (i, side) in Side::ALL.into_iter().enumerate() {
        let d = &clean[5 + i];
        let s = &slots[i];
        let frame = d.frame;
        if s.drop < noise.dropout_p {
            log.dropped.push((frame, side));
            continue;
        }
        let truth = d.class.int().expect("interaction record").payload();
        let payload = if s.flip < noise.flip_p {
            log.flipped.push((frame, side));
            others(truth)[s.flip_pick]
        } else {
            truth
        };
        let class = DetClass::Int(InteractionClass::new(payload, side).expect("visible payload"));
        out.push(emit(d, class, d.bbox, 5 + 2 * i));
        if s.dup < noise.duplicate_p {
            log.duplicated.push((frame, side));
            let dup_payload = others(payload)[s.dup_pick];
            let shift = 0.7 * d.bbox.w.max(d.bbox.h);
            let moved = BBox {
                x: d.bbox.x + shift * s.dup_angle.cos(),
                y: d.bbox.y + shift * s.dup_angle.sin(),
                ..d.bbox
            };
            let class = DetClass::Int(InteractionClass::new(dup_payload, side).expect("visible payload"));
            out.push(emit(d, class, moved, 6 + 2 * i));
        }
    }
    out
}

/// Generates ground truth, a corrupted detection stream and the expected report.
pub fn generate_scenario(cfg: &SynthConfig) -> Result<Scenario> {
    cfg.validate()?;
    let params = cfg.profile.params();
    let layout = Layout {
        sx: cfg.width as f64 / 640.0,
        sy: cfg.height as f64 / 480.0,
    };
    let (usage, forceps_events) = build_script(cfg, params.time_scale);
    let paths = Side::ALL.map(|side| hand_path(cfg, side, layout.home(side), &params));

    let mut grip_rng = Rng::new(cfg.seed, STREAM_GRIP);
    let mut grip = vec![None; cfg.frames as usize];
    for (start, end) in &forceps_events {
        let z = grip_rng.normal();
        let phase = grip_rng.range(0.0, 2.0 * PI);
        let base = (params.grip_mean_deg + params.grip_sd_deg * z).clamp(2.0, 88.0);
        for f in *start..=*end {
            let secs = (f - start) as f64 / cfg.fps;
            grip[f as usize] = Some(base + params.grip_wobble_deg * (2.0 * PI * 0.5 * secs + phase).sin());
        }
    }

    let mut corruption = Rng::new(cfg.seed, STREAM_CORRUPTION);
    let mut log = CorruptionLog::default();
    let mut boxes = Vec::with_capacity(cfg.frames as usize);
    let mut detections = Vec::with_capacity(cfg.frames as usize);
    for f in 0..cfg.frames {
        let i = f as usize;
        let clean = render_frame(
            f,
            [paths[0][i], paths[1][i]],
            [usage[0][i], usage[1][i]],
            grip[i],
            &layout,
        );
        let noisy = corrupt_frame(&clean, &mut corruption, &cfg.noise, &mut log);
        boxes.push(FrameGroup { frame: f, detections: clean });
        detections.push(FrameGroup { frame: f, detections: noisy });
    }

    let events = run_length_events(&usage);
    let expected = expected_report(&usage, &boxes, &log, cfg.fps, &PipelineConfig::default());
    Ok(Scenario {
        meta: cfg.meta(),
        events,
        boxes,
        detections,
        expected,
        log,
    })
}

/// The report implied by ground truth, computed directly from the clean boxes.
pub fn expected_report(
    usage: &[Vec<Payload>; 2],
    boxes: &[FrameGroup],
    log: &CorruptionLog,
    fps: f64,
    config: &PipelineConfig,
) -> SessionReport {
    let n = boxes.len();
    let find = |g: &FrameGroup, c: LocClass| {
        g.detections
            .iter()
            .find(|d| d.class == DetClass::Loc(c))
            .map(|d| d.bbox)
    };

    let mut counts = [ResolutionCounts::default(); 2];
    for side in Side::ALL {
        let s1 = log.dropped.iter().filter(|(_, s)| *s == side).count() as u64;
        let s2 = log.duplicated.iter().filter(|(_, s)| *s == side).count() as u64;
        counts[side.index()] = ResolutionCounts {
            direct: n as u64 - s1 - s2,
            scenario1: s1,
            scenario2: s2,
            absent: 0,
        };
    }
    let slots = 2 * n as u64;
    let rate = |k: u64| (slots > 0).then(|| k as f64 / slots as f64);
    let s1_all = counts[0].scenario1 + counts[1].scenario1;
    let s2_all = counts[0].scenario2 + counts[1].scenario2;
    let diagnostics = Diagnostics {
        frames: n as u64,
        right: counts[0],
        left: counts[1],
        fallback_rate: rate(s1_all + s2_all),
        scenario1_rate: rate(s1_all),
        scenario2_rate: rate(s2_all),
    };

    let mut report = SessionReport {
        fps,
        start_frame: None,
        end_frame: None,
        duration_s: None,
        right: HandMetrics::default(),
        left: HandMetrics::default(),
        forceps_ar_mean: None,
        forceps_ar_std: None,
        diagnostics,
        config: *config,
    };

    let tool_frames: Vec<usize> = (0..n)
        .filter(|&f| usage[0][f].is_tool() || usage[1][f].is_tool())
        .collect();
    if let (Some(&start), Some(&end)) = (tool_frames.first(), tool_frames.last()) {
        report.start_frame = Some(start as u64);
        report.end_frame = Some(end as u64);
        report.duration_s = Some((end - start + 1) as f64 / fps);
        for side in Side::ALL {
            let hand = side.hand_class();
            let c: Vec<(f64, f64)> = boxes
                .iter()
                .map(|g| {
                    let b = find(g, hand).expect("hands are always visible");
                    (b.x + b.w / 2.0, b.y + b.h / 2.0)
                })
                .collect();
            let mut path = 0.0;
            for f in start..end {
                path += (c[f + 1].0 - c[f].0).hypot(c[f + 1].1 - c[f].1);
            }
            let speed = |f: usize| -> f64 {
                let (dx, dy) = if n == 1 {
                    (0.0, 0.0)
                } else if f == 0 {
                    ((c[1].0 - c[0].0) * fps, (c[1].1 - c[0].1) * fps)
                } else if f == n - 1 {
                    ((c[f].0 - c[f - 1].0) * fps, (c[f].1 - c[f - 1].1) * fps)
                } else {
                    ((c[f + 1].0 - c[f - 1].0) * fps / 2.0, (c[f + 1].1 - c[f - 1].1) * fps / 2.0)
                };
                dx.hypot(dy)
            };
            let moving = |f: usize| speed(f) > config.static_thresh;
            let crossings = (start..end).filter(|&f| moving(f) != moving(f + 1)).count() as u64;
            let m = HandMetrics {
                path_length_px: Some(path),
                movement_count: Some(crossings / 2),
            };
            match side {
                Side::Right => report.right = m,
                Side::Left => report.left = m,
            }
        }
    }

    let ratios: Vec<f64> = (0..n)
        .filter(|&f| usage[0][f] == Payload::Forceps || usage[1][f] == Payload::Forceps)
        .filter_map(|f| find(&boxes[f], LocClass::Forceps))
        .map(|b| b.w / b.h)
        .collect();
    if !ratios.is_empty() {
        let k = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / k;
        let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / k;
        report.forceps_ar_mean = Some(mean);
        report.forceps_ar_std = Some(var.sqrt());
    }
    report
}
