use std::path::{Path, PathBuf};

use clap::Args;
use hybridtrack::association::{track_sequence, Correlator, IdSource};
use hybridtrack::config::RunConfig;
use hybridtrack::flow::FlowField;
use hybridtrack::instance::{read_checkpoint, row_argmax_accuracy, train as train_head, write_checkpoint, InstanceTracker, TrainingPair};
use hybridtrack::mask::{extract_things, SegmentationMap};
use hybridtrack::sequence::{self, read_eval_frames, read_flows, read_frames, read_sequence, write_sequence, write_tracked};
use hybridtrack::simulator::{distinct_shapes, generate, preset, training_pairs, SceneSpec};
use hybridtrack::vpq::vpq_report;
use hybridtrack::{Error, Result};
use serde_json::Value;

use crate::output::{create_dir, header, write_json, write_text};
use crate::ConfigArgs;

#[derive(Args)]
pub struct SimulateArgs {
    /// Built-in scene name.
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    preset: Option<String>,
    /// JSON scene spec file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output sequence directory.
    #[arg(long)]
    out: PathBuf,
    /// Scene seed; overrides the spec file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Standard deviation of Gaussian noise added to the written flows, in pixels.
    #[arg(long, default_value_t = 0.0)]
    flow_noise: f64,
}

/// Noise seed of flow `t` for a run seeded with `seed`.
pub fn noise_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(t as u64)
}

pub fn add_flow_noise(flows: &[FlowField], sigma: f64, seed: u64) -> Result<Vec<FlowField>> {
    if sigma == 0.0 {
        return Ok(flows.to_vec());
    }
    flows
        .iter()
        .enumerate()
        .map(|(t, f)| f.with_gaussian_noise(sigma, noise_seed(seed, t)))
        .collect()
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let scene = match (&a.preset, &a.spec) {
        (Some(name), _) => preset(name, a.seed.unwrap_or(0))?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
            let mut spec: SceneSpec = serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            spec
        }
        (None, None) => return Err(Error::InvalidConfig("either --preset or --spec is required".into())),
    };
    if !(a.flow_noise.is_finite() && a.flow_noise >= 0.0) {
        return Err(Error::InvalidConfig(format!("--flow-noise {} must be >= 0", a.flow_noise)));
    }
    let mut seq = generate(&scene)?;
    seq.flows = add_flow_noise(&seq.flows, a.flow_noise, scene.seed)?;
    write_sequence(&a.out, &seq)?;
    write_json(&a.out.join("scene.json"), &scene)?;
    let mut h = header("simulate", None);
    h.insert("preset".into(), a.preset.clone().map_or(Value::Null, Value::from));
    h.insert("seed".into(), scene.seed.into());
    h.insert("flow_noise".into(), a.flow_noise.into());
    h.insert("frames".into(), seq.frames.len().into());
    write_json(&a.out.join("run.json"), &h)?;
    println!("wrote {} frames to {}", seq.frames.len(), a.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrackArgs {
    /// Directory of `.vpsg` frames, or a sequence directory holding `frames/`.
    #[arg(long)]
    frames: PathBuf,
    /// Directory of `.flo` fields, or a sequence directory holding `flows/`.
    #[arg(long)]
    flows: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Embedding head for instance and hybrid modes.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also write the forward correlation matrix of every frame pair as TSV.
    #[arg(long)]
    dump_matrices: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn sub_or_self(dir: &Path, sub: &str) -> PathBuf {
    let nested = dir.join(sub);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

pub fn load_tracker(checkpoint: Option<&Path>, cfg: &RunConfig) -> Result<Option<InstanceTracker>> {
    checkpoint
        .map(|p| InstanceTracker::new(read_checkpoint(p)?, cfg.roi(), cfg.cosine).map_err(|e| e.at(p)))
        .transpose()
}

pub fn track(a: &TrackArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let tracker = load_tracker(a.checkpoint.as_deref(), &cfg)?;
    let frames = read_frames(&sub_or_self(&a.frames, sequence::FRAMES_DIR))?;
    let flows = read_flows(&sub_or_self(&a.flows, sequence::FLOWS_DIR))?;
    let tc = cfg.tracker();
    let video = track_sequence(&frames, &flows, &tc, tracker.as_ref())?;
    write_tracked(&a.out, &video)?;
    if a.dump_matrices {
        dump_matrices(&a.out.join("matrices"), &video.frames, &flows, &cfg, tracker.as_ref())?;
    }
    let count = |s: IdSource| video.provenance.iter().filter(|p| p.source == s).count();
    let tracks = video.provenance.iter().map(|p| p.instance_id).max().unwrap_or(0);
    let mut h = header("track", Some(&cfg));
    h.insert("checkpoint".into(), a.checkpoint.as_ref().map_or(Value::Null, |p| p.display().to_string().into()));
    h.insert("frames".into(), video.frames.len().into());
    h.insert("tracks".into(), tracks.into());
    h.insert("matched".into(), count(IdSource::Match).into());
    h.insert("rescued".into(), count(IdSource::Rescue).into());
    h.insert("new".into(), count(IdSource::New).into());
    write_json(&a.out.join("run.json"), &h)?;
    println!(
        "tracked {} frames in {} mode: {} tracks, {} rescues",
        video.frames.len(),
        cfg.mode.name(),
        tracks,
        count(IdSource::Rescue)
    );
    Ok(())
}

fn dump_matrices(
    dir: &Path,
    frames: &[SegmentationMap],
    flows: &[FlowField],
    cfg: &RunConfig,
    tracker: Option<&InstanceTracker>,
) -> Result<()> {
    create_dir(dir)?;
    let correlator = Correlator::new(cfg.mode, tracker, cfg.tracker().fusion, cfg.class_gated)?;
    for t in 1..frames.len() {
        let prev = correlator.frame_state(t - 1, extract_things(&frames[t - 1]))?;
        let cur = correlator.frame_state(t, extract_things(&frames[t]))?;
        let m = correlator.forward(&prev, &cur, &[&flows[t - 1]])?;
        write_text(&dir.join(format!("{:06}.tsv", t - 1)), &m.to_tsv())?;
    }
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Simulator sequence directories with `gt_ids.json`.
    #[arg(long = "sequences", num_args = 1..)]
    sequences: Vec<PathBuf>,
    /// Also train on this many generated distinct-shape frame pairs.
    #[arg(long)]
    synthetic: Option<u64>,
    /// Where to write the trained head.
    #[arg(long)]
    checkpoint_out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

/// Frame pairs of `n` distinct-shape scenes, seeded from `seed`.
pub fn synthetic_pairs(n: u64, seed: u64, cfg: &RunConfig) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for k in 0..n {
        let seq = generate(&distinct_shapes(seed.wrapping_add(k)))?;
        out.extend(training_pairs(&seq, &cfg.roi())?);
    }
    Ok(out)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let mut pairs = Vec::new();
    for dir in &a.sequences {
        pairs.extend(training_pairs(&read_sequence(dir)?, &cfg.roi()).map_err(|e| e.at(dir))?);
    }
    if let Some(n) = a.synthetic {
        pairs.extend(synthetic_pairs(n, cfg.seed, &cfg)?);
    }
    pairs.retain(|p| !p.supervision.is_empty());
    if pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "no supervised frame pairs: pass --sequences or --synthetic".into(),
        ));
    }
    let tc = cfg.train();
    let outcome = train_head(&pairs, &tc)?;
    write_checkpoint(&outcome.params, &a.checkpoint_out)?;
    let accuracy = row_argmax_accuracy(&pairs, &outcome.params, tc.options)?;
    let mut h = header("train", Some(&cfg));
    h.insert("pairs".into(), pairs.len().into());
    h.insert("train_accuracy".into(), accuracy.into());
    h.insert("loss_trace".into(), outcome.loss_trace.clone().into());
    let mut report = a.checkpoint_out.clone().into_os_string();
    report.push(".json");
    write_json(Path::new(&report), &h)?;
    println!(
        "trained on {} pairs for {} epochs: loss {:.4}, train accuracy {:.3}",
        pairs.len(),
        tc.epochs,
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        accuracy
    );
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Predicted sequence directory (or a directory of `.vpsg` frames).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth sequence directory; `gt_ids.json` is applied when present.
    #[arg(long)]
    gt: PathBuf,
    /// Window lengths in evaluated frames; L corresponds to k = 5 (L - 1).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    windows: Vec<usize>,
    /// JSON report path; defaults to `<pred>/report.json`.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

fn eval_frames(dir: &Path) -> Result<Vec<SegmentationMap>> {
    if dir.join(sequence::FRAMES_DIR).is_dir() {
        read_eval_frames(dir)
    } else {
        read_frames(dir)
    }
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let pred = eval_frames(&a.pred)?;
    let gt = eval_frames(&a.gt)?;
    let report = vpq_report(&pred, &gt, &a.windows)?;
    let out = a.report_out.clone().unwrap_or_else(|| a.pred.join(sequence::REPORT_FILE));
    let mut h = header("evaluate", None);
    h.insert("pred".into(), a.pred.display().to_string().into());
    h.insert("gt".into(), a.gt.display().to_string().into());
    h.insert("windows".into(), a.windows.clone().into());
    h.insert("report".into(), serde_json::to_value(&report)?);
    write_json(&out, &h)?;
    let table = report.to_table();
    write_text(&out.with_extension("txt"), &table)?;
    print!("{table}");
    Ok(())
}
