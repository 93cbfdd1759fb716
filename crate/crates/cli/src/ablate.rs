use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use hybridtrack::association::{track_sequence, TrackerConfig, TrackerMode};
use hybridtrack::config::RunConfig;
use hybridtrack::flow::FlowField;
use hybridtrack::instance::{train, InstanceTracker};
use hybridtrack::simulator::{count_id_switches, generate, preset, GeneratedSequence, PRESET_NAMES};
use hybridtrack::vpq::{vpq_report_multi, SequencePair, DEFAULT_WINDOWS};
use hybridtrack::{Error, Result};
use serde::Serialize;
use serde_json::Value;

use crate::commands::{add_flow_noise, load_tracker, synthetic_pairs};
use crate::output::{header, write_json, write_text};
use crate::ConfigArgs;

pub const THETA_SWEEP: [f64; 5] = [0.001, 0.005, 0.01, 0.015, 0.02];

#[derive(Args)]
pub struct AblateArgs {
    /// `trackers` (mode x mutual check x temporal grid on every preset),
    /// `theta` (rescue threshold sweep) or a preset name (grid on that preset).
    #[arg(long)]
    suite: String,
    /// Output directory for `ablation.json` and `ablation.txt`.
    #[arg(long)]
    out: PathBuf,
    /// Embedding head; trained on distinct-shape scenes when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Flow noise in pixels, so that the pixel tracker is not an oracle.
    #[arg(long, default_value_t = 1.5)]
    flow_noise: f64,
    /// Distinct-shape scenes used when training a head here.
    #[arg(long, default_value_t = 200)]
    train_scenes: u64,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Serialize)]
struct Row {
    mode: TrackerMode,
    mutual_check: bool,
    temporal: bool,
    theta: f64,
    vpq: Option<f64>,
    vpq_th: Option<f64>,
    vpq_st: Option<f64>,
    window_vpq: Vec<Option<f64>>,
    id_switches: usize,
}

struct Scene {
    seq: GeneratedSequence,
    flows: Vec<FlowField>,
}

fn grid(base: &TrackerConfig) -> Vec<TrackerConfig> {
    let mut out = Vec::new();
    for mode in [TrackerMode::Instance, TrackerMode::Pixel, TrackerMode::Hybrid] {
        for mutual_check in [false, true] {
            for temporal in [false, true] {
                out.push(TrackerConfig {
                    mode,
                    mutual_check,
                    temporal,
                    ..*base
                });
            }
        }
    }
    out
}

fn run(scenes: &[Scene], tc: &TrackerConfig, tracker: &InstanceTracker) -> Result<Row> {
    let mut outs = Vec::with_capacity(scenes.len());
    let mut id_switches = 0;
    for s in scenes {
        let video = track_sequence(&s.seq.frames, &s.flows, tc, Some(tracker))?;
        id_switches += count_id_switches(&video.frames, &s.seq.gt_frames)?;
        outs.push(video.frames);
    }
    let pairs: Vec<SequencePair> = outs
        .iter()
        .zip(scenes)
        .map(|(o, s)| SequencePair {
            pred: o,
            gt: &s.seq.gt_frames,
        })
        .collect();
    let report = vpq_report_multi(&pairs, &DEFAULT_WINDOWS)?;
    Ok(Row {
        mode: tc.mode,
        mutual_check: tc.mutual_check,
        temporal: tc.temporal,
        theta: tc.theta,
        vpq: report.vpq,
        vpq_th: report.vpq_th,
        vpq_st: report.vpq_st,
        window_vpq: report.windows.iter().map(|w| w.vpq).collect(),
        id_switches,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn table(rows: &[Row]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<8} {:<6} {:<8} {:>6}", "mode", "mutual", "temporal", "theta");
    for w in DEFAULT_WINDOWS {
        let _ = write!(out, " {:>7}", format!("k={}", 5 * (w - 1)));
    }
    let _ = writeln!(out, " {:>7} {:>8}", "VPQ", "switches");
    for r in rows {
        let _ = write!(
            out,
            "{:<8} {:<6} {:<8} {:>6}",
            r.mode.name(),
            on_off(r.mutual_check),
            on_off(r.temporal),
            r.theta
        );
        for v in &r.window_vpq {
            let _ = write!(out, " {:>7}", cell(*v));
        }
        let _ = writeln!(out, " {:>7} {:>8}", cell(r.vpq), r.id_switches);
    }
    out
}

fn embedding(a: &AblateArgs, cfg: &RunConfig) -> Result<(InstanceTracker, Value)> {
    if let Some(t) = load_tracker(a.checkpoint.as_deref(), cfg)? {
        let source = a.checkpoint.as_ref().map(|p| p.display().to_string());
        return Ok((t, source.into()));
    }
    let pairs = synthetic_pairs(a.train_scenes, cfg.seed, cfg)?;
    let params = train(&pairs, &cfg.train())?.params;
    let t = InstanceTracker::new(params, cfg.roi(), cfg.cosine)?;
    Ok((t, format!("trained on {} distinct-shape pairs", pairs.len()).into()))
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let presets: Vec<&str> = match a.suite.as_str() {
        "trackers" | "theta" => PRESET_NAMES.to_vec(),
        name if PRESET_NAMES.contains(&name) => vec![name],
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown suite {other:?}; expected trackers, theta or one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    if !(a.flow_noise.is_finite() && a.flow_noise >= 0.0) {
        return Err(Error::InvalidConfig(format!("--flow-noise {} must be >= 0", a.flow_noise)));
    }
    let (tracker, source) = embedding(a, &cfg)?;
    let scenes = presets
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let seq = generate(&preset(name, cfg.seed)?)?;
            let flows = add_flow_noise(&seq.flows, a.flow_noise, cfg.seed.wrapping_add(k as u64))?;
            Ok(Scene { seq, flows })
        })
        .collect::<Result<Vec<_>>>()?;

    let base = cfg.tracker();
    let configs: Vec<TrackerConfig> = if a.suite == "theta" {
        THETA_SWEEP
            .iter()
            .map(|&theta| TrackerConfig { theta, ..base })
            .collect()
    } else {
        grid(&base)
    };
    let rows = configs
        .iter()
        .map(|tc| run(&scenes, tc, &tracker))
        .collect::<Result<Vec<_>>>()?;

    let text = table(&rows);
    let mut h = header("ablate", Some(&cfg));
    h.insert("suite".into(), a.suite.clone().into());
    h.insert("presets".into(), presets.clone().into());
    h.insert("flow_noise".into(), a.flow_noise.into());
    h.insert("embedding".into(), source);
    h.insert("rows".into(), serde_json::to_value(&rows)?);
    write_json(&a.out.join("ablation.json"), &h)?;
    write_text(&a.out.join("ablation.txt"), &text)?;
    print!("{text}");
    Ok(())
}
