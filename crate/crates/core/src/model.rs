//! Class taxonomies and record types shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle: top-left corner plus width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite coordinates and non-positive extents.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::Invalid(format!(
                "box coordinates must be finite: ({x}, {y}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::Invalid(format!(
                "box extent must be positive: w={w}, h={h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Right,
    Left,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Right, Side::Left];

    pub fn index(self) -> usize {
        match self {
            Side::Right => 0,
            Side::Left => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Right => "right",
            Side::Left => "left",
        }
    }

    pub fn hand_class(self) -> LocClass {
        match self {
            Side::Right => LocClass::RightHand,
            Side::Left => LocClass::LeftHand,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right" => Ok(Side::Right),
            "left" => Ok(Side::Left),
            _ => Err(Error::Invalid(format!("unknown side `{s}`"))),
        }
    }
}

/// What a hand is holding. `Absent` means the hand was not seen at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    NeedleDriver,
    Forceps,
    Scissors,
    Empty,
    Absent,
}

impl Payload {
    /// The payloads that can be voted on by smoothing, in a fixed order.
    pub const VISIBLE: [Payload; 4] = [
        Payload::NeedleDriver,
        Payload::Forceps,
        Payload::Scissors,
        Payload::Empty,
    ];

    pub fn is_tool(self) -> bool {
        matches!(
            self,
            Payload::NeedleDriver | Payload::Forceps | Payload::Scissors
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Payload::NeedleDriver => "needle_driver",
            Payload::Forceps => "forceps",
            Payload::Scissors => "scissors",
            Payload::Empty => "empty",
            Payload::Absent => "absent",
        }
    }

    pub(crate) fn vote_index(self) -> Option<usize> {
        match self {
            Payload::NeedleDriver => Some(0),
            Payload::Forceps => Some(1),
            Payload::Scissors => Some(2),
            Payload::Empty => Some(3),
            Payload::Absent => None,
        }
    }

    /// The localization class of a tool payload.
    pub fn tool_class(self) -> Option<LocClass> {
        match self {
            Payload::NeedleDriver => Some(LocClass::NeedleDriver),
            Payload::Forceps => Some(LocClass::Forceps),
            Payload::Scissors => Some(LocClass::Scissors),
            Payload::Empty | Payload::Absent => None,
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Payload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "needle_driver" => Ok(Payload::NeedleDriver),
            "forceps" => Ok(Payload::Forceps),
            "scissors" => Ok(Payload::Scissors),
            "empty" => Ok(Payload::Empty),
            "absent" => Ok(Payload::Absent),
            _ => Err(Error::Invalid(format!("unknown payload `{s}`"))),
        }
    }
}

/// Tool-localization classes: two hands and three tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocClass {
    RightHand,
    LeftHand,
    NeedleDriver,
    Forceps,
    Scissors,
}

impl LocClass {
    pub const ALL: [LocClass; 5] = [
        LocClass::RightHand,
        LocClass::LeftHand,
        LocClass::NeedleDriver,
        LocClass::Forceps,
        LocClass::Scissors,
    ];

    pub fn is_hand(self) -> bool {
        matches!(self, LocClass::RightHand | LocClass::LeftHand)
    }

    pub fn is_tool(self) -> bool {
        !self.is_hand()
    }

    pub fn hand_side(self) -> Option<Side> {
        match self {
            LocClass::RightHand => Some(Side::Right),
            LocClass::LeftHand => Some(Side::Left),
            _ => None,
        }
    }

    /// The payload a hand carries when holding this tool.
    pub fn tool_payload(self) -> Option<Payload> {
        match self {
            LocClass::NeedleDriver => Some(Payload::NeedleDriver),
            LocClass::Forceps => Some(Payload::Forceps),
            LocClass::Scissors => Some(Payload::Scissors),
            LocClass::RightHand | LocClass::LeftHand => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LocClass::RightHand => "right_hand",
            LocClass::LeftHand => "left_hand",
            LocClass::NeedleDriver => "needle_driver",
            LocClass::Forceps => "forceps",
            LocClass::Scissors => "scissors",
        }
    }
}

impl fmt::Display for LocClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LocClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LocClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown localization class `{s}`")))
    }
}

/// Hand-tool interaction classes: (payload, side) for the four visible payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionClass {
    ScissorsRight,
    ScissorsLeft,
    NeedleDriverRight,
    NeedleDriverLeft,
    ForcepsRight,
    ForcepsLeft,
    EmptyRight,
    EmptyLeft,
}

impl InteractionClass {
    pub const ALL: [InteractionClass; 8] = [
        InteractionClass::ScissorsRight,
        InteractionClass::ScissorsLeft,
        InteractionClass::NeedleDriverRight,
        InteractionClass::NeedleDriverLeft,
        InteractionClass::ForcepsRight,
        InteractionClass::ForcepsLeft,
        InteractionClass::EmptyRight,
        InteractionClass::EmptyLeft,
    ];

    /// Returns `None` for `Payload::Absent`, which has no interaction class.
    pub fn new(payload: Payload, side: Side) -> Option<Self> {
        use InteractionClass::*;
        Some(match (payload, side) {
            (Payload::Scissors, Side::Right) => ScissorsRight,
            (Payload::Scissors, Side::Left) => ScissorsLeft,
            (Payload::NeedleDriver, Side::Right) => NeedleDriverRight,
            (Payload::NeedleDriver, Side::Left) => NeedleDriverLeft,
            (Payload::Forceps, Side::Right) => ForcepsRight,
            (Payload::Forceps, Side::Left) => ForcepsLeft,
            (Payload::Empty, Side::Right) => EmptyRight,
            (Payload::Empty, Side::Left) => EmptyLeft,
            (Payload::Absent, _) => return None,
        })
    }

    pub fn side(self) -> Side {
        use InteractionClass::*;
        match self {
            ScissorsRight | NeedleDriverRight | ForcepsRight | EmptyRight => Side::Right,
            ScissorsLeft | NeedleDriverLeft | ForcepsLeft | EmptyLeft => Side::Left,
        }
    }

    pub fn payload(self) -> Payload {
        use InteractionClass::*;
        match self {
            ScissorsRight | ScissorsLeft => Payload::Scissors,
            NeedleDriverRight | NeedleDriverLeft => Payload::NeedleDriver,
            ForcepsRight | ForcepsLeft => Payload::Forceps,
            EmptyRight | EmptyLeft => Payload::Empty,
        }
    }

    pub fn name(self) -> &'static str {
        use InteractionClass::*;
        match self {
            ScissorsRight => "scissors_in_right_hand",
            ScissorsLeft => "scissors_in_left_hand",
            NeedleDriverRight => "needle_driver_in_right_hand",
            NeedleDriverLeft => "needle_driver_in_left_hand",
            ForcepsRight => "forceps_in_right_hand",
            ForcepsLeft => "forceps_in_left_hand",
            EmptyRight => "empty_right_hand",
            EmptyLeft => "empty_left_hand",
        }
    }

    fn variant_name(self) -> &'static str {
        use InteractionClass::*;
        match self {
            ScissorsRight => "ScissorsRight",
            ScissorsLeft => "ScissorsLeft",
            NeedleDriverRight => "NeedleDriverRight",
            NeedleDriverLeft => "NeedleDriverLeft",
            ForcepsRight => "ForcepsRight",
            ForcepsLeft => "ForcepsLeft",
            EmptyRight => "EmptyRight",
            EmptyLeft => "EmptyLeft",
        }
    }
}

impl fmt::Display for InteractionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InteractionClass {
    type Err = Error;

    /// Accepts the snake_case file names and, for hand-written label sheets,
    /// the CamelCase variant names.
    fn from_str(s: &str) -> Result<Self> {
        InteractionClass::ALL
            .into_iter()
            .find(|c| c.name() == s || c.variant_name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown interaction class `{s}`")))
    }
}

/// Which detection task a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Localization,
    Interaction,
}

impl Channel {
    pub fn token(self) -> &'static str {
        match self {
            Channel::Localization => "loc",
            Channel::Interaction => "int",
        }
    }
}

/// A detection class; the variant fixes the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetClass {
    Loc(LocClass),
    Int(InteractionClass),
}

impl DetClass {
    /// All 13 classes, localization first.
    pub fn all() -> impl Iterator<Item = DetClass> {
        LocClass::ALL
            .into_iter()
            .map(DetClass::Loc)
            .chain(InteractionClass::ALL.into_iter().map(DetClass::Int))
    }

    pub fn channel(self) -> Channel {
        match self {
            DetClass::Loc(_) => Channel::Localization,
            DetClass::Int(_) => Channel::Interaction,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetClass::Loc(c) => c.name(),
            DetClass::Int(c) => c.name(),
        }
    }

    pub fn loc(self) -> Option<LocClass> {
        match self {
            DetClass::Loc(c) => Some(c),
            DetClass::Int(_) => None,
        }
    }

    pub fn int(self) -> Option<InteractionClass> {
        match self {
            DetClass::Int(c) => Some(c),
            DetClass::Loc(_) => None,
        }
    }
}

impl fmt::Display for DetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One class-tagged, confidence-scored box on one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u64,
    pub class: DetClass,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(frame: u64, class: DetClass, bbox: BBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            frame,
            class,
            bbox,
            confidence,
        })
    }

    pub fn channel(&self) -> Channel {
        self.class.channel()
    }
}

/// All detections of one frame, in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameGroup {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

impl FrameGroup {
    pub fn new(frame: u64) -> Self {
        Self {
            frame,
            detections: Vec::new(),
        }
    }

    pub fn channel(&self, channel: Channel) -> impl Iterator<Item = &Detection> {
        self.detections
            .iter()
            .filter(move |d| d.channel() == channel)
    }

    pub fn split_channels(&self) -> (Vec<Detection>, Vec<Detection>) {
        self.detections
            .iter()
            .partition(|d| d.channel() == Channel::Localization)
    }
}

/// A usage interval `[start, end]` in frames, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub class: InteractionClass,
    pub start: u64,
    pub end: u64,
}

impl TimedEvent {
    pub fn new(class: InteractionClass, start: u64, end: u64) -> Result<Self> {
        if start > end {
            return Err(Error::Invalid(format!(
                "event {class} starts at {start} after its end {end}"
            )));
        }
        Ok(Self { class, start, end })
    }

    pub fn side(&self) -> Side {
        self.class.side()
    }

    pub fn frame_count(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

/// Per-session recording parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub fps: f64,
    pub frame_width: u32,
    pub frame_height: u32,
}

impl Default for SessionMeta {
    fn default() -> Self {
        Self {
            fps: 30.0,
            frame_width: 640,
            frame_height: 480,
        }
    }
}

impl SessionMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }
}

/// How a frame's usage decision was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Exactly one interaction box for the side.
    Direct,
    /// No interaction box; inferred from hand/tool overlap in the localization channel.
    Scenario1,
    /// Several interaction boxes; one picked by overlap with localization boxes.
    Scenario2,
    Absent,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Direct => "direct",
            Provenance::Scenario1 => "scenario1",
            Provenance::Scenario2 => "scenario2",
            Provenance::Absent => "absent",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Provenance::Direct),
            "scenario1" => Ok(Provenance::Scenario1),
            "scenario2" => Ok(Provenance::Scenario2),
            "absent" => Ok(Provenance::Absent),
            _ => Err(Error::Invalid(format!("unknown provenance `{s}`"))),
        }
    }
}

/// The resolved usage of one hand on one frame.
///
/// `payload == Absent` iff `provenance == Absent` iff `bbox.is_none()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsageState {
    pub frame: u64,
    pub side: Side,
    pub payload: Payload,
    pub bbox: Option<BBox>,
    pub provenance: Provenance,
}

impl UsageState {
    pub fn absent(frame: u64, side: Side) -> Self {
        Self {
            frame,
            side,
            payload: Payload::Absent,
            bbox: None,
            provenance: Provenance::Absent,
        }
    }

    pub fn is_absent(&self) -> bool {
        self.payload == Payload::Absent
    }
}

/// A dense per-frame, per-side usage timeline.
///
/// `states` is ordered by frame, with the right hand before the left hand on each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageTimeline {
    pub fps: f64,
    pub states: Vec<UsageState>,
}

impl UsageTimeline {
    pub fn side(&self, side: Side) -> impl Iterator<Item = &UsageState> {
        self.states.iter().filter(move |s| s.side == side)
    }

    pub fn frame_count(&self) -> usize {
        self.side(Side::Right).count()
    }
}
