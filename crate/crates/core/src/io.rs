//! Readers and writers for every external file format.
//!
//! Detection streams and box labels are whitespace-separated records
//! `frame channel class x y w h [conf]`; events and timelines are CSV; session metadata
//! is `key=value` lines; reports are JSON. Floats are written in Rust's shortest
//! round-trip form, so write-then-parse reproduces every value bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::metrics::SessionReport;
use crate::model::{
    BBox, DetClass, Detection, FrameGroup, InteractionClass, LocClass, Payload,
    Provenance, SessionMeta, Side, TimedEvent, UsageState, UsageTimeline,
};

pub const EVENT_HEADER: [&str; 3] = ["class", "start_frame", "end_frame"];
pub const TIMELINE_HEADER: [&str; 8] = ["frame", "side", "payload", "provenance", "x", "y", "w", "h"];

fn field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(line, format!("bad {name} `{raw}`")))
}

fn parse_class(line: usize, channel: &str, name: &str) -> Result<DetClass> {
    let by_loc = name.parse::<LocClass>().ok();
    let by_int = name.parse::<InteractionClass>().ok();
    match (channel, by_loc, by_int) {
        ("loc", Some(c), _) => Ok(DetClass::Loc(c)),
        ("int", _, Some(c)) => Ok(DetClass::Int(c)),
        ("loc" | "int", None, None) => Err(Error::parse(line, format!("unknown class `{name}`"))),
        ("loc" | "int", _, _) => Err(Error::parse(
            line,
            format!("class `{name}` does not belong to channel `{channel}`"),
        )),
        _ => Err(Error::parse(line, format!("unknown channel `{channel}`"))),
    }
}

fn parse_record(line: usize, text: &str, with_confidence: bool) -> Result<Detection> {
    let f: Vec<&str> = text.split_whitespace().collect();
    let expected = if with_confidence { "8" } else { "7 or 8" };
    let ok_len = if with_confidence {
        f.len() == 8
    } else {
        f.len() == 7 || f.len() == 8
    };
    if !ok_len {
        return Err(Error::parse(
            line,
            format!("expected {expected} fields, found {}", f.len()),
        ));
    }
    let frame: u64 = field(line, "frame", f[0])?;
    let class = parse_class(line, f[1], f[2])?;
    let nums: Vec<f64> = f[3..7]
        .iter()
        .zip(["x", "y", "w", "h"])
        .map(|(raw, name)| field(line, name, raw))
        .collect::<Result<_>>()?;
    let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3])
        .map_err(|e| Error::parse(line, e.to_string()))?;
    let confidence = if with_confidence {
        field(line, "confidence", f[7])?
    } else {
        1.0
    };
    Detection::new(frame, class, bbox, confidence).map_err(|e| Error::parse(line, e.to_string()))
}

/// Streaming reader of per-frame detection groups.
///
/// Yields one group per frame from 0 up to the last frame that has a record; frames
/// without records come out as empty groups. After the first error the reader is
/// exhausted.
pub struct DetectionReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    with_confidence: bool,
    group: FrameGroup,
    seen_any: bool,
    lookahead: Option<Detection>,
    done: bool,
}

impl<R: BufRead> DetectionReader<R> {
    pub fn new(source: R) -> Self {
        Self::with_mode(source, true)
    }

    /// Ground-truth box reader: the confidence column is optional and ignored.
    pub fn box_labels(source: R) -> Self {
        Self::with_mode(source, false)
    }

    fn with_mode(source: R, with_confidence: bool) -> Self {
        Self {
            lines: source.lines(),
            line_no: 0,
            with_confidence,
            group: FrameGroup::new(0),
            seen_any: false,
            lookahead: None,
            done: false,
        }
    }

    fn advance(&mut self) -> FrameGroup {
        let next = FrameGroup::new(self.group.frame + 1);
        std::mem::replace(&mut self.group, next)
    }

    fn next_record(&mut self) -> Option<Result<Detection>> {
        for line in self.lines.by_ref() {
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::parse(self.line_no, e.to_string()))),
            };
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            return Some(parse_record(self.line_no, text, self.with_confidence));
        }
        None
    }
}

impl<R: BufRead> Iterator for DetectionReader<R> {
    type Item = Result<FrameGroup>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            if let Some(d) = self.lookahead {
                if d.frame > self.group.frame {
                    return Some(Ok(self.advance()));
                }
                self.group.detections.push(d);
                self.lookahead = None;
            }
            match self.next_record() {
                None => {
                    self.done = true;
                    return self.seen_any.then(|| Ok(std::mem::take(&mut self.group)));
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(d)) => {
                    if self.seen_any && d.frame < self.group.frame {
                        self.done = true;
                        return Some(Err(Error::parse(
                            self.line_no,
                            format!("frame {} after frame {}", d.frame, self.group.frame),
                        )));
                    }
                    self.seen_any = true;
                    self.lookahead = Some(d);
                }
            }
        }
    }
}

pub fn parse_detection_stream(source: impl Read) -> Result<Vec<FrameGroup>> {
    DetectionReader::new(BufReader::new(source)).collect()
}

pub fn parse_box_labels(source: impl Read) -> Result<Vec<FrameGroup>> {
    DetectionReader::box_labels(BufReader::new(source)).collect()
}

fn csv_line(pos: Option<&csv::Position>) -> usize {
    pos.map_or(0, |p| p.line() as usize)
}

fn csv_error(e: csv::Error) -> Error {
    let line = csv_line(e.position());
    Error::parse(line, e.to_string())
}

/// Reads event labels, sorted by (side, start) with per-side overlaps rejected.
pub fn parse_event_labels(source: impl Read) -> Result<Vec<TimedEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(EVENT_HEADER) {
        return Err(Error::parse(
            1,
            format!("expected header `{}`", EVENT_HEADER.join(",")),
        ));
    }
    let mut events: Vec<(usize, TimedEvent)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = csv_line(rec.position());
        let class: InteractionClass = rec[0]
            .parse()
            .map_err(|e: Error| Error::parse(line, e.to_string()))?;
        let start = field(line, "start_frame", &rec[1])?;
        let end = field(line, "end_frame", &rec[2])?;
        let ev = TimedEvent::new(class, start, end).map_err(|e| Error::parse(line, e.to_string()))?;
        events.push((line, ev));
    }
    events.sort_by_key(|(_, e)| (e.side().index(), e.start));
    for w in events.windows(2) {
        let ((_, a), (line, b)) = (&w[0], &w[1]);
        if a.side() == b.side() && b.start <= a.end {
            return Err(Error::parse(
                *line,
                format!(
                    "{} [{}, {}] overlaps {} [{}, {}]",
                    b.class, b.start, b.end, a.class, a.start, a.end
                ),
            ));
        }
    }
    Ok(events.into_iter().map(|(_, e)| e).collect())
}

/// Reads `key=value` session metadata; missing keys keep their defaults.
pub fn parse_meta(source: impl Read) -> Result<SessionMeta> {
    let mut meta = SessionMeta::default();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::parse(n, e.to_string()))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::parse(n, format!("expected key=value, found `{text}`")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "fps" => meta.fps = field(n, k, v)?,
            "width" => meta.frame_width = field(n, k, v)?,
            "height" => meta.frame_height = field(n, k, v)?,
            _ => return Err(Error::parse(n, format!("unknown key `{k}`"))),
        }
    }
    meta.validate()?;
    Ok(meta)
}

pub fn write_meta(mut w: impl Write, meta: &SessionMeta) -> Result<()> {
    writeln!(
        w,
        "fps={}\nwidth={}\nheight={}",
        meta.fps, meta.frame_width, meta.frame_height
    )?;
    Ok(())
}

fn record_line(d: &Detection, with_confidence: bool) -> String {
    let b = &d.bbox;
    let mut s = format!(
        "{} {} {} {} {} {} {}",
        d.frame,
        d.channel().token(),
        d.class,
        b.x,
        b.y,
        b.w,
        b.h
    );
    if with_confidence {
        let _ = write!(s, " {}", d.confidence);
    }
    s
}

pub fn write_detections<'a>(
    mut w: impl Write,
    groups: impl IntoIterator<Item = &'a FrameGroup>,
) -> Result<()> {
    for g in groups {
        for d in &g.detections {
            writeln!(w, "{}", record_line(d, true))?;
        }
    }
    Ok(())
}

pub fn write_box_labels<'a>(
    mut w: impl Write,
    groups: impl IntoIterator<Item = &'a FrameGroup>,
) -> Result<()> {
    for g in groups {
        for d in &g.detections {
            writeln!(w, "{}", record_line(d, false))?;
        }
    }
    Ok(())
}

pub fn write_events(w: impl Write, events: &[TimedEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EVENT_HEADER).map_err(csv_error)?;
    for e in events {
        out.write_record([e.class.name(), &e.start.to_string(), &e.end.to_string()])
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Incremental timeline writer: a `# fps=` line, a CSV header, then one row per state.
pub struct TimelineWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> TimelineWriter<W> {
    pub fn new(mut w: W, fps: f64) -> Result<Self> {
        writeln!(w, "# fps={fps}")?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TIMELINE_HEADER).map_err(csv_error)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, s: &UsageState) -> Result<()> {
        let frame = s.frame.to_string();
        let b = s.bbox.map(|b| [b.x, b.y, b.w, b.h].map(|v| v.to_string()));
        let [x, y, bw, bh] = b.unwrap_or_default();
        self.out
            .write_record([
                frame.as_str(),
                s.side.name(),
                s.payload.name(),
                s.provenance.name(),
                &x,
                &y,
                &bw,
                &bh,
            ])
            .map_err(csv_error)
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out
            .into_inner()
            .map_err(|e| Error::Stream(e.into_error()))
    }
}

pub fn write_timeline(w: impl Write, timeline: &UsageTimeline) -> Result<()> {
    let mut tw = TimelineWriter::new(w, timeline.fps)?;
    for s in &timeline.states {
        tw.write(s)?;
    }
    tw.finish()?;
    Ok(())
}

pub fn parse_timeline(source: impl Read) -> Result<UsageTimeline> {
    let mut src = BufReader::new(source);
    let mut first = String::new();
    src.read_line(&mut first)?;
    let fps: f64 = first
        .trim()
        .strip_prefix("# fps=")
        .ok_or_else(|| Error::parse(1, "expected `# fps=` line"))
        .and_then(|v| field(1, "fps", v))?;
    let mut rdr = csv::Reader::from_reader(src);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(TIMELINE_HEADER) {
        return Err(Error::parse(2, "bad timeline header"));
    }
    let mut states = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = csv_line(rec.position()) + 1;
        let wrap = |e: Error| Error::parse(line, e.to_string());
        let frame = field(line, "frame", &rec[0])?;
        let side: Side = rec[1].parse().map_err(wrap)?;
        let payload: Payload = rec[2].parse().map_err(wrap)?;
        let provenance: Provenance = rec[3].parse().map_err(wrap)?;
        let bbox = if rec[4].is_empty() {
            None
        } else {
            let v: Vec<f64> = (4..8)
                .map(|i| field(line, TIMELINE_HEADER[i], &rec[i]))
                .collect::<Result<_>>()?;
            Some(BBox::new(v[0], v[1], v[2], v[3]).map_err(wrap)?)
        };
        if bbox.is_none() != (payload == Payload::Absent) {
            return Err(Error::parse(line, "box must be empty exactly when absent"));
        }
        states.push(UsageState {
            frame,
            side,
            payload,
            bbox,
            provenance,
        });
    }
    Ok(UsageTimeline { fps, states })
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json(mut w: impl Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Stream(e.into()))?;
    writeln!(w)?;
    Ok(())
}

pub fn write_report(w: impl Write, report: &SessionReport) -> Result<()> {
    write_json(w, report)
}

pub fn parse_report(source: impl Read) -> Result<SessionReport> {
    serde_json::from_reader(source).map_err(|e| Error::parse(e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use proptest::prelude::*;

    fn sizes(groups: &[FrameGroup]) -> Vec<usize> {
        groups.iter().map(|g| g.detections.len()).collect()
    }

    #[test]
    fn detection_stream_examples() {
        assert!(parse_detection_stream(&b""[..]).unwrap().is_empty());
        let src = "# header\n\
                   0 loc right_hand 10 10 50 50 0.9\n\
                   0 int empty_right_hand 10 10 50 50 0.8\n\
                   \n\
                   2 loc forceps 1 2 3 4 0.5\n";
        let g = parse_detection_stream(src.as_bytes()).unwrap();
        assert_eq!(sizes(&g), [2, 0, 1]);
        assert_eq!(g.iter().map(|g| g.frame).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(g[0].detections[1].class.name(), "empty_right_hand");
    }

    #[test]
    fn detection_stream_errors() {
        let err = |s: &str| parse_detection_stream(s.as_bytes()).unwrap_err().to_string();
        assert!(err("0 loc forceps 1 2 3 4 0.9\n0 loc forceps 1 2 3 4 1.3\n").starts_with("line 2:"));
        assert!(err("0 loc needle_driver_in_right_hand 1 2 3 4 0.9\n").contains("does not belong"));
        assert!(err("0 int forceps 1 2 3 4 0.9\n").contains("does not belong"));
        assert!(err("0 box forceps 1 2 3 4 0.9\n").contains("unknown channel"));
        assert!(err("0 loc tweezers 1 2 3 4 0.9\n").contains("unknown class"));
        assert!(err("3 loc forceps 1 2 3 4 0.9\n2 loc forceps 1 2 3 4 0.9\n").starts_with("line 2:"));
        assert!(err("0 loc forceps 1 2 0 4 0.9\n").starts_with("line 1:"));
        assert!(err("0 loc forceps 1 2 3 4\n").contains("expected 8 fields"));
        assert!(err("x loc forceps 1 2 3 4 0.5\n").contains("bad frame"));
    }

    #[test]
    fn box_label_examples() {
        assert!(parse_box_labels(&b""[..]).unwrap().is_empty());
        let src = "5 loc right_hand 0 0 10 10\n\
                   5 loc forceps 0 0 10 10 0.3\n\
                   5 int forceps_in_right_hand 0 0 10 10\n";
        let g = parse_box_labels(src.as_bytes()).unwrap();
        let last = g.last().unwrap();
        assert_eq!(last.frame, 5);
        let (l, i) = last.split_channels();
        assert_eq!((l.len(), i.len()), (2, 1));
        assert!(parse_box_labels("5 loc wrench 0 0 1 1\n".as_bytes()).is_err());
    }

    #[test]
    fn event_label_examples() {
        let ev = parse_event_labels("class,start_frame,end_frame\nNeedleDriverRight,0,100\n".as_bytes()).unwrap();
        assert_eq!(ev, [TimedEvent::new(InteractionClass::NeedleDriverRight, 0, 100).unwrap()]);

        let ev = parse_event_labels(
            "class,start_frame,end_frame\nempty_left_hand,51,80\nforceps_in_left_hand,0,50\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(ev.iter().map(|e| e.start).collect::<Vec<_>>(), [0, 51]);

        let err = parse_event_labels(
            "class,start_frame,end_frame\nForcepsLeft,0,50\nEmptyLeft,40,80\n".as_bytes(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("overlaps"));
        assert!(parse_event_labels("class,start_frame,end_frame\nForcepsLeft,9,3\n".as_bytes()).is_err());
        // different sides may overlap
        parse_event_labels("class,start_frame,end_frame\nForcepsLeft,0,50\nEmptyRight,0,50\n".as_bytes())
            .unwrap();
    }

    #[test]
    fn meta_examples() {
        let m = parse_meta("fps=25\nwidth=1280\nheight=720\n".as_bytes()).unwrap();
        assert_eq!((m.fps, m.frame_width, m.frame_height), (25.0, 1280, 720));
        assert!(parse_meta("fps=0\n".as_bytes()).unwrap_err().is_config());
        assert!(parse_meta("fps 30\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_meta(&mut buf, &m).unwrap();
        assert_eq!(parse_meta(&buf[..]).unwrap(), m);
    }

    #[test]
    fn empty_report_has_every_field() {
        let r = SessionReport::empty(30.0, PipelineConfig::default());
        let mut buf = Vec::new();
        write_report(&mut buf, &r).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for k in ["start_frame", "end_frame", "duration_s", "right", "left", "forceps_ar_mean", "forceps_ar_std", "diagnostics", "config"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["diagnostics"]["right"]["direct"], 0);
        assert_eq!(parse_report(&buf[..]).unwrap(), r);
    }

    #[test]
    fn timeline_row_count() {
        let states: Vec<_> = (0..10)
            .flat_map(|f| Side::ALL.map(|s| UsageState::absent(f, s)))
            .collect();
        let mut buf = Vec::new();
        write_timeline(&mut buf, &UsageTimeline { fps: 30.0, states }).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains(",right,")).count(), 10);
        assert_eq!(text.lines().filter(|l| l.contains(",left,")).count(), 10);
    }

    fn arb_bbox() -> impl Strategy<Value = BBox> {
        (-50.0..700.0f64, -50.0..500.0f64, 0.001..300.0f64, 0.001..300.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
    }

    fn arb_state() -> impl Strategy<Value = (Payload, Provenance, BBox)> {
        (
            prop::sample::select(Payload::VISIBLE.to_vec()),
            prop::sample::select(vec![Provenance::Direct, Provenance::Scenario1, Provenance::Scenario2]),
            arb_bbox(),
        )
    }

    proptest! {
        #[test]
        fn events_round_trip(raw in prop::collection::vec((0usize..8, 0u64..40), 0..20)) {
            let mut next = [0u64; 2];
            let mut events = Vec::new();
            for (c, len) in raw {
                let class = InteractionClass::ALL[c];
                let s = class.side().index();
                events.push(TimedEvent::new(class, next[s], next[s] + len).unwrap());
                next[s] += len + 1;
            }
            events.sort_by_key(|e| (e.side().index(), e.start));
            let mut buf = Vec::new();
            write_events(&mut buf, &events).unwrap();
            prop_assert_eq!(parse_event_labels(&buf[..]).unwrap(), events);
        }

        #[test]
        fn timeline_round_trip(
            rows in prop::collection::vec(prop::option::of(arb_state()), 0..30),
            fps in 1.0..120.0f64,
        ) {
            let states: Vec<_> = rows.iter().enumerate().map(|(i, r)| {
                let (frame, side) = ((i / 2) as u64, Side::ALL[i % 2]);
                match r {
                    None => UsageState::absent(frame, side),
                    Some((payload, provenance, b)) => UsageState {
                        frame, side, payload: *payload, bbox: Some(*b), provenance: *provenance,
                    },
                }
            }).collect();
            let t = UsageTimeline { fps, states };
            let mut buf = Vec::new();
            write_timeline(&mut buf, &t).unwrap();
            prop_assert_eq!(parse_timeline(&buf[..]).unwrap(), t);
        }

        #[test]
        fn detections_round_trip(
            raw in prop::collection::vec((0u64..4, 0usize..13, arb_bbox(), 0.0..=1.0f64), 0..40),
        ) {
            let classes: Vec<DetClass> = DetClass::all().collect();
            let mut dets: Vec<Detection> = raw.iter()
                .map(|(f, c, b, conf)| Detection::new(*f, classes[*c], *b, *conf).unwrap())
                .collect();
            dets.sort_by_key(|d| d.frame);
            let mut groups: Vec<FrameGroup> = Vec::new();
            if let Some(last) = dets.last() {
                groups = (0..=last.frame).map(FrameGroup::new).collect();
                for d in &dets {
                    groups[d.frame as usize].detections.push(*d);
                }
            }
            let mut buf = Vec::new();
            write_detections(&mut buf, &groups).unwrap();
            prop_assert_eq!(&parse_detection_stream(&buf[..]).unwrap(), &groups);

            let mut buf = Vec::new();
            write_box_labels(&mut buf, &groups).unwrap();
            let back = parse_box_labels(&buf[..]).unwrap();
            prop_assert_eq!(back.len(), groups.len());
            for (a, b) in back.iter().zip(&groups) {
                let strip = |g: &FrameGroup| g.detections.iter().map(|d| (d.class, d.bbox)).collect::<Vec<_>>();
                prop_assert_eq!(strip(a), strip(b));
            }
        }
    }
}
