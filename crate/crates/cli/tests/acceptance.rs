//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if any did.
//!
//! Run with `cargo test -p suturekit-cli --test acceptance -- --nocapture` to see the lines.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use suturekit::config::PipelineConfig;
use suturekit::eval::{ap50, usage_frame_metrics};
use suturekit::geometry::Point;
use suturekit::interaction::ResolutionCounts;
use suturekit::metrics::{compute_report, SideSeries};
use suturekit::model::{
    BBox, DetClass, Detection, InteractionClass, LocClass, Payload, Provenance, Side, UsageState,
};
use suturekit::oracles;
use suturekit::pipeline::run_batch;
use suturekit::suppression::{standard_nms, tool_nms};
use suturekit::synth::{generate_scenario, NoiseConfig, SkillProfile, SynthConfig};
use suturekit::temporal::{build_trajectory, velocity};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
}

fn random_box(rng: &mut Rng) -> BBox {
    BBox::new(rng.range(0.0, 60.0), rng.range(0.0, 60.0), rng.range(1.0, 40.0), rng.range(1.0, 40.0))
        .unwrap()
}

/// Confidences come from a small grid so ties are frequent.
fn random_conf(rng: &mut Rng) -> f64 {
    (1 + rng.below(10)) as f64 / 10.0
}

fn suppression_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(1);
    let same_class = |a: &Detection, b: &Detection| a.class == b.class;
    let both_tools = |a: &Detection, b: &Detection| {
        a.class.loc().is_some_and(|c| c.is_tool()) && b.class.loc().is_some_and(|c| c.is_tool())
    };
    for frame in 0..1000u64 {
        let n = rng.below(13);
        let thresh = [0.3, 0.45, 0.5, 0.7][rng.below(4)];
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let class = DetClass::Loc(LocClass::ALL[rng.below(LocClass::ALL.len())]);
                Detection::new(frame, class, random_box(&mut rng), random_conf(&mut rng)).unwrap()
            })
            .collect();
        let std_out = standard_nms(&dets, thresh).map_err(|e| e.to_string())?;
        if std_out != oracles::nms_reference(&dets, thresh, same_class) {
            return Err(format!("standard_nms differs from reference on frame {frame}"));
        }
        let tool_out = tool_nms(&std_out, thresh).map_err(|e| e.to_string())?;
        if tool_out != oracles::nms_reference(&std_out, thresh, both_tools) {
            return Err(format!("tool_nms differs from reference on frame {frame}"));
        }
    }
    let took = start.elapsed();
    if took >= Duration::from_secs(5) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("1000 frames in {took:?}"))
}

fn ap_oracle() -> Outcome {
    let mut rng = Rng::new(2);
    let class = DetClass::Int(InteractionClass::ForcepsLeft);
    let mut worst = 0.0f64;
    for instance in 0..500 {
        let frames = 1 + rng.below(4) as u64;
        let gts: Vec<Detection> = (0..1 + rng.below(10))
            .map(|_| Detection::new(rng.below(frames as usize) as u64, class, random_box(&mut rng), 1.0).unwrap())
            .collect();
        let dets: Vec<Detection> = (0..rng.below(21))
            .map(|_| {
                let f = rng.below(frames as usize) as u64;
                // half the detections are perturbed copies of a ground-truth box
                let bbox = if rng.unit() < 0.5 {
                    let g = gts[rng.below(gts.len())].bbox;
                    BBox::new(g.x + rng.range(-4.0, 4.0), g.y + rng.range(-4.0, 4.0), g.w, g.h).unwrap()
                } else {
                    random_box(&mut rng)
                };
                Detection::new(f, class, bbox, random_conf(&mut rng)).unwrap()
            })
            .collect();
        let got = ap50(&dets, &gts, class);
        let want = oracles::ap_reference(&dets, &gts, 0.5);
        match (got, want) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            _ => return Err(format!("instance {instance}: {got:?} vs {want:?}")),
        }
    }
    if worst > 1e-12 {
        return Err(format!("max deviation {worst:e}"));
    }

    let fc = DetClass::Loc(LocClass::Forceps);
    let d = |frame, x, conf| Detection::new(frame, fc, BBox::new(x, 0.0, 10.0, 10.0).unwrap(), conf).unwrap();
    let gts = [d(0, 0.0, 1.0), d(1, 0.0, 1.0)];
    let dets = [d(0, 0.0, 0.9), d(0, 500.0, 0.8), d(1, 1.0, 0.7)];
    let ap = ap50(&dets, &gts, fc);
    if ap != Some(5.0 / 6.0) {
        return Err(format!("worked example gave {ap:?}"));
    }
    Ok(format!("500 instances, max deviation {worst:e}; worked example 5/6"))
}

fn state(frame: u64, side: Side, payload: Payload) -> UsageState {
    if payload == Payload::Absent {
        return UsageState::absent(frame, side);
    }
    UsageState {
        frame,
        side,
        payload,
        bbox: Some(BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()),
        provenance: Provenance::Direct,
    }
}

fn runs(side: Side, segments: &[(Payload, usize)]) -> Vec<UsageState> {
    segments.iter()
        .flat_map(|(p, n)| std::iter::repeat_n(*p, *n))
        .enumerate()
        .map(|(i, p)| state(i as u64, side, p))
        .collect()
}

fn counts(states: &[UsageState]) -> ResolutionCounts {
    let mut c = ResolutionCounts::default();
    states.iter().for_each(|s| c.record(s.provenance));
    c
}

fn metric_fixtures() -> Outcome {
    use Payload::*;
    // right: needle driver on frames 3-8, one 3-4-5 step between frames 4 and 5
    // left: forceps on 12-16, a 10 px excursion on frame 13, boxes 10x10 then 20x10
    let right = runs(Side::Right, &[(Empty, 3), (NeedleDriver, 6), (Empty, 11)]);
    let left = runs(Side::Left, &[(Absent, 2), (Empty, 10), (Forceps, 5), (Empty, 3)]);
    let rc: Vec<_> = (0..20)
        .map(|f| Some(if f <= 4 { Point::new(100.0, 100.0) } else { Point::new(103.0, 104.0) }))
        .collect();
    let lc: Vec<_> = (0..20)
        .map(|f| match f {
            0 | 1 => None,
            13 => Some(Point::new(60.0, 200.0)),
            _ => Some(Point::new(50.0, 200.0)),
        })
        .collect();
    let mut boxes = vec![None; 20];
    for (f, w) in [(12, 10.0), (13, 10.0), (14, 20.0), (15, 20.0), (5, 100.0)] {
        boxes[f] = Some(BBox::new(0.0, 0.0, w, 10.0).unwrap());
    }
    let rt = build_trajectory(Side::Right, 0, &rc, 15);
    let lt = build_trajectory(Side::Left, 0, &lc, 15);
    let (rv, lv) = (velocity(&rt, 30.0), velocity(&lt, 30.0));
    let r = compute_report(
        SideSeries { smoothed: &right, trajectory: &rt, velocity: &rv, counts: counts(&right) },
        SideSeries { smoothed: &left, trajectory: &lt, velocity: &lv, counts: counts(&left) },
        &boxes,
        30.0,
        &PipelineConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let checks = [
        ("start", r.start_frame == Some(3)),
        ("end", r.end_frame == Some(16)),
        ("duration", r.duration_s == Some(14.0 / 30.0)),
        ("right path", r.right.path_length_px == Some(5.0)),
        ("right movements", r.right.movement_count == Some(1)),
        ("left path", r.left.path_length_px == Some(20.0)),
        ("left movements", r.left.movement_count == Some(2)),
        ("AR mean", r.forceps_ar_mean == Some(1.5)),
        ("AR std", r.forceps_ar_std == Some(0.5)),
    ];
    if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
        return Err(format!("{name} wrong in {r:?}"));
    }

    let pts: Vec<_> = [0.0, 3.0, 6.0].iter().map(|&x| Some(Point::new(x, 0.0))).collect();
    let v = velocity(&build_trajectory(Side::Right, 0, &pts, 15), 30.0);
    let mid = v[1].speed.ok_or("no speed at the middle sample")?;
    if (mid - 90.0).abs() > 1e-9 {
        return Err(format!("centered speed {mid}"));
    }
    Ok("20-frame fixture exact; centered speed 90 px/s".into())
}

fn synth(seed: u64, frames: u64, profile: SkillProfile, noise: NoiseConfig) -> SynthConfig {
    SynthConfig { seed, frames, profile, noise, ..SynthConfig::default() }
}

fn noiseless_identity() -> Outcome {
    let cfg = PipelineConfig::default();
    for seed in 0..5 {
        for profile in [SkillProfile::Expert, SkillProfile::Novice] {
            let sc = generate_scenario(&synth(seed, 3000, profile, NoiseConfig::default()))
                .map_err(|e| e.to_string())?;
            let out = run_batch(&sc.detections, &cfg, &sc.meta).map_err(|e| e.to_string())?;
            if out.events != sc.events {
                return Err(format!("seed {seed} {profile:?}: events differ"));
            }
            let bad = out.report.mismatches(&sc.expected, 1e-9);
            if !bad.is_empty() {
                return Err(format!("seed {seed} {profile:?}: report fields {bad:?} differ"));
            }
        }
    }
    Ok("5 seeds x 2 profiles, events exact, report within 1e-9".into())
}

fn smoothing_benefit() -> Outcome {
    let cfg = PipelineConfig::default();
    let noise = NoiseConfig { flip_p: 0.1, ..NoiseConfig::default() };
    let mut worst = 1.0f64;
    for seed in 0..10 {
        let sc = generate_scenario(&synth(100 + seed, 3000, SkillProfile::Expert, noise))
            .map_err(|e| e.to_string())?;
        let out = run_batch(&sc.detections, &cfg, &sc.meta).map_err(|e| e.to_string())?;
        let acc = |t| {
            usage_frame_metrics(t, &sc.events, sc.meta.fps)
                .map(|m| m.accuracy.unwrap_or(0.0))
                .map_err(|e| e.to_string())
        };
        let (raw, smooth) = (acc(&out.raw)?, acc(&out.timeline)?);
        if smooth <= raw || smooth < 0.97 {
            return Err(format!("seed {seed}: raw {raw:.4}, smoothed {smooth:.4}"));
        }
        worst = worst.min(smooth);
    }
    Ok(format!("10 seeds, smoothed accuracy >= {worst:.4} and above raw on each"))
}

fn fallback_rate() -> Outcome {
    let cfg = PipelineConfig::default();
    let noise = NoiseConfig { dropout_p: 0.04, ..NoiseConfig::default() };
    let (mut s1, mut visible, mut dropped, mut recovered) = (0u64, 0u64, 0u64, 0u64);
    let mut frames = 0u64;
    for seed in 0..4 {
        let sc = generate_scenario(&synth(200 + seed, 5400, SkillProfile::Expert, noise))
            .map_err(|e| e.to_string())?;
        frames += sc.boxes.len() as u64;
        let out = run_batch(&sc.detections, &cfg, &sc.meta).map_err(|e| e.to_string())?;
        let d = &out.report.diagnostics;
        s1 += d.right.scenario1 + d.left.scenario1;
        visible += d.right.visible() + d.left.visible();
        let truth = [sc.usage(Side::Right), sc.usage(Side::Left)];
        for &(frame, side) in &sc.log.dropped {
            dropped += 1;
            let raw = out.raw.states[2 * frame as usize + side.index()];
            if raw.provenance == Provenance::Scenario1 && raw.payload == truth[side.index()][frame as usize] {
                recovered += 1;
            }
        }
    }
    let rate = s1 as f64 / visible as f64;
    let share = recovered as f64 / dropped as f64;
    let detail = format!("{frames} frames, scenario-1 rate {rate:.4}, recovered {share:.4} of {dropped} drops");
    if frames < 20_000 || (rate - 0.04).abs() > 0.01 || share < 0.99 {
        return Err(detail);
    }
    Ok(detail)
}

fn skill_direction() -> Outcome {
    let cfg = PipelineConfig::default();
    for seed in 0..10 {
        let [e, n] = [SkillProfile::Expert, SkillProfile::Novice].map(|p| {
            generate_scenario(&synth(300 + seed, 5400, p, NoiseConfig::default()))
                .and_then(|sc| run_batch(&sc.detections, &cfg, &sc.meta))
                .map(|o| o.report)
        });
        let (e, n) = (e.map_err(|x| x.to_string())?, n.map_err(|x| x.to_string())?);
        let path = |r: &suturekit::metrics::SessionReport| {
            r.right.path_length_px.unwrap_or(0.0) + r.left.path_length_px.unwrap_or(0.0)
        };
        let moves = |r: &suturekit::metrics::SessionReport| {
            r.right.movement_count.unwrap_or(0) + r.left.movement_count.unwrap_or(0)
        };
        let checks = [
            ("duration", e.duration_s < n.duration_s),
            ("path", path(&e) < path(&n)),
            ("movements", moves(&e) < moves(&n)),
            ("AR std", e.forceps_ar_std < n.forceps_ar_std),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(format!("seed {seed}: expert {name} not below novice"));
        }
    }
    Ok("expert below novice on duration, path, movements and AR std for 10 seeds".into())
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_suturekit"))
}

fn call(cmd: &mut Command) -> Result<(), String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(())
}

fn synth_into(dir: &Path, seed: &str, frames: &str) -> Result<(), String> {
    call(bin().args(["synth", "--seed", seed, "--frames", frames, "--profile", "novice"]).args([
        "--dropout", "0.04", "--duplicate", "0.02", "--flip", "0.05", "--jitter", "1.5",
    ]).arg("--out-dir").arg(dir))
}

fn throughput() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("in");
    synth_into(&input, "7", "5400")?;
    let start = Instant::now();
    call(bin()
        .arg("run")
        .arg("--detections").arg(input.join("detections.txt"))
        .arg("--meta").arg(input.join("meta.txt"))
        .arg("--out").arg(tmp.path().join("out")))?;
    let took = start.elapsed();
    if took >= Duration::from_secs(5) {
        return Err(format!("run took {took:?}"));
    }
    Ok(format!("5400 frames in {took:?}"))
}

fn same_bytes(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for name in names {
        let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs between repeats"));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = tmp.path();
    for rep in ["a", "b"] {
        let dir = t.join(rep);
        synth_into(&dir.join("in"), "11", "1200")?;
        // both repeats read the same input so only the command under test varies
        let input = t.join("a/in");
        call(bin()
            .arg("run")
            .arg("--detections").arg(input.join("detections.txt"))
            .arg("--meta").arg(input.join("meta.txt"))
            .arg("--out").arg(dir.join("run")))?;
        call(bin()
            .arg("eval")
            .arg("--detections").arg(input.join("detections.txt"))
            .arg("--boxes").arg(input.join("boxes.txt"))
            .arg("--timeline").arg(t.join("a/run/timeline.csv"))
            .arg("--events").arg(input.join("events.csv"))
            .arg("--meta").arg(input.join("meta.txt"))
            .arg("--out").arg(dir.join("eval.json")))?;
    }
    same_bytes(
        &t.join("a/in"),
        &t.join("b/in"),
        &["detections.txt", "boxes.txt", "events.csv", "meta.txt", "expected_report.json"],
    )?;
    same_bytes(&t.join("a/run"), &t.join("b/run"), &["timeline.csv", "events.csv", "report.json"])?;
    same_bytes(&t.join("a"), &t.join("b"), &["eval.json"])?;
    Ok("synth, run and eval outputs byte-identical across repeats".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("1 suppression oracle", suppression_oracle),
        ("2 AP oracle", ap_oracle),
        ("3 metric fixtures", metric_fixtures),
        ("4 noiseless identity", noiseless_identity),
        ("5 smoothing benefit", smoothing_benefit),
        ("6 fallback rate", fallback_rate),
        ("7 expert/novice direction", skill_direction),
        ("8 throughput", throughput),
        ("9 determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                println!("FAIL  {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
