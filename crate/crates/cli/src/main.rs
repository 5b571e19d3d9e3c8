use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tempfile::NamedTempFile;

use suturekit::config::PipelineConfig;
use suturekit::error::Error;
use suturekit::eval::{detection_eval, usage_frame_metrics, EvalReport, DEFAULT_MATCH_IOU};
use suturekit::io::{self, DetectionReader, TimelineWriter};
use suturekit::metrics::DEFAULT_STATIC_THRESH;
use suturekit::model::{FrameGroup, SessionMeta, Side, UsageState};
use suturekit::pipeline::{report_for_usage, run_streaming, suppress_frame};
use suturekit::suppression::{standard_nms, DEFAULT_CROSS_NMS_IOU, DEFAULT_NMS_IOU};
use suturekit::synth::{generate_scenario, NoiseConfig, SkillProfile, SynthConfig};
use suturekit::temporal::{
    SmoothingConfig, WindowAlign, DEFAULT_FAST_GATE, DEFAULT_MAX_GAP, DEFAULT_SMOOTH_WINDOW,
};

/// Post-processing, smoothing, motion metrics and evaluation for dual-channel surgical
/// tool detections.
#[derive(Parser)]
#[command(name = "suturekit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full chain on a detection stream; writes timeline.csv, events.csv and report.json.
    Run {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Score detections against box labels and/or a usage timeline against event labels.
    Eval {
        #[arg(long, requires = "boxes")]
        detections: Option<PathBuf>,
        #[arg(long, requires = "detections")]
        boxes: Option<PathBuf>,
        #[arg(long, requires_all = ["events", "meta"])]
        timeline: Option<PathBuf>,
        #[arg(long, requires = "timeline")]
        events: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MATCH_IOU)]
        match_iou: f64,
        /// Per-class NMS applied to detections before scoring.
        #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
        nms_iou: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the session report for a given usage timeline.
    Metrics {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        timeline: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Generate a synthetic session: detections.txt, boxes.txt, events.csv, meta.txt and
    /// expected_report.json.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1800)]
        frames: u64,
        #[arg(long, default_value = "expert")]
        profile: SkillProfile,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        #[arg(long, default_value_t = 0.0)]
        duplicate: f64,
        #[arg(long, default_value_t = 0.0)]
        flip: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0.6)]
        conf_min: f64,
        #[arg(long, default_value_t = 0.99)]
        conf_max: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    nms_iou: f64,
    #[arg(long, default_value_t = DEFAULT_CROSS_NMS_IOU)]
    cross_nms_iou: f64,
    /// Minimum hand/tool overlap for the no-interaction-box fallback.
    #[arg(long, default_value_t = suturekit::interaction::DEFAULT_S1_OVERLAP)]
    s1_overlap: f64,
    #[arg(long, default_value_t = DEFAULT_SMOOTH_WINDOW)]
    smooth_window: usize,
    #[arg(long, default_value = "centered")]
    smooth_align: WindowAlign,
    /// Hand speed (px/s) above which usage decisions are held.
    #[arg(long, default_value_t = DEFAULT_FAST_GATE)]
    fast_gate: f64,
    /// Longest run of missing hand boxes bridged by interpolation.
    #[arg(long, default_value_t = DEFAULT_MAX_GAP)]
    max_gap: usize,
    /// Hand speed (px/s) at or below which a hand counts as static.
    #[arg(long, default_value_t = DEFAULT_STATIC_THRESH)]
    static_thresh: f64,
    /// Overrides the fps from the metadata file.
    #[arg(long)]
    fps: Option<f64>,
}

impl PipelineArgs {
    fn config(&self) -> suturekit::error::Result<PipelineConfig> {
        let cfg = PipelineConfig {
            nms_iou: self.nms_iou,
            cross_nms_iou: self.cross_nms_iou,
            s1_overlap: self.s1_overlap,
            smoothing: SmoothingConfig {
                window: self.smooth_window,
                align: self.smooth_align,
                fast_gate: self.fast_gate,
            },
            max_gap: self.max_gap,
            static_thresh: self.static_thresh,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn meta(&self, path: &Path) -> Result<SessionMeta> {
        let mut meta = read_meta(path)?;
        if let Some(fps) = self.fps {
            meta.fps = fps;
            meta.validate()?;
        }
        Ok(meta)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufReader::new(f))
}

fn read_meta(path: &Path) -> Result<SessionMeta> {
    io::parse_meta(open(path)?).with_context(|| format!("{}", path.display()))
}

fn read_groups(path: &Path, boxes: bool) -> Result<Vec<FrameGroup>> {
    let r = open(path)?;
    let groups = if boxes {
        io::parse_box_labels(r)
    } else {
        io::parse_detection_stream(r)
    };
    groups.with_context(|| format!("{}", path.display()))
}

/// Output files staged next to their destinations and moved into place together.
struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn create(path: &Path) -> Result<NamedTempFile> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        NamedTempFile::new_in(dir).with_context(|| format!("creating {}", path.display()))
    }

    fn write(&mut self, path: PathBuf, f: impl FnOnce(&mut dyn Write) -> suturekit::error::Result<()>) -> Result<()> {
        let tmp = Self::create(&path)?;
        let mut w = BufWriter::new(tmp);
        f(&mut w).with_context(|| format!("writing {}", path.display()))?;
        let tmp = w.into_inner().map_err(|e| e.into_error())?;
        self.files.push((tmp, path));
        Ok(())
    }

    fn add(&mut self, tmp: NamedTempFile, path: PathBuf) {
        self.files.push((tmp, path));
    }

    fn commit(self) -> Result<()> {
        for (tmp, path) in self.files {
            tmp.persist(&path)
                .with_context(|| format!("moving output into {}", path.display()))?;
        }
        Ok(())
    }
}

fn run(detections: &Path, meta: &Path, out: &Path, args: &PipelineArgs) -> Result<()> {
    let cfg = args.config()?;
    let meta = args.meta(meta)?;
    let reader = DetectionReader::new(open(detections)?);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let timeline_path = out.join("timeline.csv");
    let tmp = Staged::create(&timeline_path)?;
    let mut tw = TimelineWriter::new(BufWriter::new(tmp), meta.fps)?;
    let summary = run_streaming(reader, cfg, meta, |s| tw.write(s))
        .with_context(|| format!("{}", detections.display()))?;
    let tmp = tw.finish()?.into_inner().map_err(|e| e.into_error())?;

    let mut staged = Staged::new();
    staged.add(tmp, timeline_path);
    staged.write(out.join("events.csv"), |w| io::write_events(w, &summary.events))?;
    staged.write(out.join("report.json"), |w| io::write_report(w, &summary.report))?;
    staged.commit()
}

fn split_sides(states: &[UsageState], frames: usize) -> Result<[Vec<UsageState>; 2]> {
    let mut sides: [Vec<UsageState>; 2] = Default::default();
    for s in states {
        let lane = &mut sides[s.side.index()];
        if s.frame != lane.len() as u64 {
            bail!(Error::Invalid(format!(
                "timeline {} hand: expected frame {}, got {}",
                s.side,
                lane.len(),
                s.frame
            )));
        }
        lane.push(*s);
    }
    for side in Side::ALL {
        let n = sides[side.index()].len();
        if n != frames {
            bail!(Error::Invalid(format!(
                "timeline has {n} {side}-hand frames, detection stream has {frames}"
            )));
        }
    }
    Ok(sides)
}

fn metrics(detections: &Path, meta: &Path, timeline: &Path, out: &Path, args: &PipelineArgs) -> Result<()> {
    let cfg = args.config()?;
    let meta = args.meta(meta)?;
    let groups = read_groups(detections, false)?;
    let timeline = io::parse_timeline(open(timeline)?).with_context(|| format!("{}", timeline.display()))?;
    let frames = groups
        .iter()
        .map(|g| suppress_frame(g, &cfg))
        .collect::<suturekit::error::Result<Vec<_>>>()?;
    let [right, left] = split_sides(&timeline.states, frames.len())?;
    let report = report_for_usage(&frames, &right, &left, &cfg, &meta)?;
    let mut staged = Staged::new();
    staged.write(out.to_path_buf(), |w| io::write_report(w, &report))?;
    staged.commit()
}

#[allow(clippy::too_many_arguments)]
fn eval(
    detections: Option<&Path>,
    boxes: Option<&Path>,
    timeline: Option<&Path>,
    events: Option<&Path>,
    meta: Option<&Path>,
    match_iou: f64,
    nms_iou: f64,
    out: &Path,
) -> Result<()> {
    for (name, v) in [("--match-iou", match_iou), ("--nms-iou", nms_iou)] {
        if !(0.0..=1.0).contains(&v) {
            bail!(Error::Config(format!("{name} {v} outside [0, 1]")));
        }
    }
    if detections.is_none() && timeline.is_none() {
        bail!(Error::Config(
            "nothing to evaluate: give --detections/--boxes and/or --timeline/--events".into()
        ));
    }
    let detection = match (detections, boxes) {
        (Some(d), Some(b)) => {
            let dets = read_groups(d, false)?
                .into_iter()
                .map(|g| {
                    Ok(FrameGroup {
                        frame: g.frame,
                        detections: standard_nms(&g.detections, nms_iou)?,
                    })
                })
                .collect::<suturekit::error::Result<Vec<_>>>()?;
            let gts = read_groups(b, true)?;
            Some(detection_eval(&dets, &gts, match_iou))
        }
        _ => None,
    };
    let usage = match (timeline, events, meta) {
        (Some(t), Some(e), Some(m)) => {
            let meta = read_meta(m)?;
            let tl = io::parse_timeline(open(t)?).with_context(|| format!("{}", t.display()))?;
            let ev = io::parse_event_labels(open(e)?).with_context(|| format!("{}", e.display()))?;
            Some(usage_frame_metrics(&tl, &ev, meta.fps)?)
        }
        _ => None,
    };
    let report = EvalReport {
        match_iou,
        detection,
        usage,
    };
    let mut staged = Staged::new();
    staged.write(out.to_path_buf(), |w| io::write_json(w, &report))?;
    staged.commit()
}

fn synth(cfg: SynthConfig, out_dir: &Path) -> Result<()> {
    let s = generate_scenario(&cfg)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut staged = Staged::new();
    staged.write(out_dir.join("detections.txt"), |w| io::write_detections(w, &s.detections))?;
    staged.write(out_dir.join("boxes.txt"), |w| io::write_box_labels(w, &s.boxes))?;
    staged.write(out_dir.join("events.csv"), |w| io::write_events(w, &s.events))?;
    staged.write(out_dir.join("meta.txt"), |w| io::write_meta(w, &s.meta))?;
    staged.write(out_dir.join("expected_report.json"), |w| io::write_report(w, &s.expected))?;
    staged.commit()
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { detections, meta, out, pipeline } => run(&detections, &meta, &out, &pipeline),
        Command::Eval { detections, boxes, timeline, events, meta, match_iou, nms_iou, out } => eval(
            detections.as_deref(),
            boxes.as_deref(),
            timeline.as_deref(),
            events.as_deref(),
            meta.as_deref(),
            match_iou,
            nms_iou,
            &out,
        ),
        Command::Metrics { detections, meta, timeline, out, pipeline } => {
            metrics(&detections, &meta, &timeline, &out, &pipeline)
        }
        Command::Synth {
            seed,
            frames,
            profile,
            fps,
            width,
            height,
            dropout,
            duplicate,
            flip,
            jitter,
            conf_min,
            conf_max,
            out_dir,
        } => {
            let cfg = SynthConfig {
                seed,
                frames,
                fps,
                width,
                height,
                profile,
                noise: NoiseConfig {
                    dropout_p: dropout,
                    duplicate_p: duplicate,
                    flip_p: flip,
                    jitter_px: jitter,
                    confidence: (conf_min, conf_max),
                },
            };
            synth(cfg, &out_dir)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_config() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
