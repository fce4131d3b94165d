use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use footprints::evalkit::{depth_eval, footprint_eval, freespace_eval, mean_depth, mean_seg, Aggregate};
use footprints::geometry::Pose;
use footprints::io::{write_flow, write_pfm, write_pgm, DatasetManifest, FrameEntry, FrameFiles};
use footprints::labelgen::{build_training_target, FlowEvidence, LabelParams};
use footprints::losses::{gradcheck, LossConfig};
use footprints::planner::{astar, evaluate_path, sample_episode, CostMap};
use footprints::predictors::{baseline_predict, load_prediction, BaselineInputs, BaselineKind, PredictionPaths};
use footprints::scene::{eval_region, ground_truth_flow, ground_truth_hidden, render_frame, synthesize_sequence, RegionMode, SynthConfig};
use footprints::FootprintFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::dataset::{open_data, SceneDir};
use crate::{EvalMode, LabelOverrides};

/// JSON lines to a file or stdout.
pub struct Lines(Box<dyn Write>);

impl Lines {
    pub fn to(path: Option<&Path>) -> Result<Self> {
        let sink: Box<dyn Write> = match path {
            Some(p) => {
                create_parent(p)?;
                Box::new(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?))
            }
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Self(sink))
    }

    pub fn emit(&mut self, value: &impl Serialize) -> Result<()> {
        serde_json::to_writer(&mut self.0, value)?;
        self.0.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.0.flush()?;
        Ok(())
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn synth(out: &Path, scenes: usize, frames: usize, seed: u64, config: Option<&Path>) -> Result<()> {
    if frames == 0 {
        bail!("--frames must be at least 1");
    }
    let cfg: SynthConfig = match config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..scenes).map(|_| rng.gen()).collect();
    let width = scenes.saturating_sub(1).to_string().len().max(3);
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &scene_seed)| write_scene(&out.join(format!("scene_{i:0width$}")), &cfg, frames, scene_seed))
        .collect::<Result<Vec<()>>>()?;
    eprintln!("wrote {scenes} scene(s) of {frames} frame(s) to {}", out.display());
    Ok(())
}

fn write_scene(dir: &Path, cfg: &SynthConfig, frames: usize, seed: u64) -> Result<()> {
    let seq = synthesize_sequence(cfg, frames, seed)?;
    let mut entries = Vec::with_capacity(frames);
    for (i, render) in seq.renders.iter().enumerate() {
        let id = format!("f{i:03}");
        let frame_dir = dir.join(&id);
        fs::create_dir_all(&frame_dir).with_context(|| format!("creating {}", frame_dir.display()))?;
        let rel = |name: &str| PathBuf::from(&id).join(name);
        let (gt_s, gt_d) = seq.ground_truth(i)?;
        write_pfm(&dir.join(rel("depth.pfm")), &render.depth)?;
        write_pgm(&dir.join(rel("seg.pgm")), &render.seg)?;
        write_pgm(&dir.join(rel("gt_s_star.pgm")), &gt_s)?;
        write_pfm(&dir.join(rel("gt_d_star.pfm")), &gt_d)?;
        let (flow, flow_valid) = if i + 1 < frames {
            let f = seq.flow(i)?;
            write_flow(&dir.join(rel("flow.pfm")), &f.flow)?;
            write_pgm(&dir.join(rel("flow_valid.pgm")), &f.valid)?;
            (Some(rel("flow.pfm")), Some(rel("flow_valid.pgm")))
        } else {
            (None, None)
        };
        entries.push(FrameEntry {
            id: id.clone(),
            frame_index: render.frame_index,
            intrinsics: render.camera.intrinsics,
            pose: render.camera.pose,
            files: FrameFiles {
                depth: rel("depth.pfm"),
                seg: rel("seg.pgm"),
                gt_s_star: rel("gt_s_star.pgm"),
                gt_d_star: rel("gt_d_star.pfm"),
                flow,
                flow_valid,
            },
        });
    }
    let manifest = DatasetManifest {
        seed,
        scene: seq.scene,
        synth: cfg.clone(),
        params: LabelParams::default(),
        frames: entries,
    };
    manifest.save(&dir.join(DatasetManifest::FILE_NAME))?;
    Ok(())
}

fn label_params(scene: &SceneDir, config: Option<&LabelParams>, o: &LabelOverrides) -> Result<LabelParams> {
    let mut p = config.copied().unwrap_or(scene.manifest.params);
    if let Some(v) = o.k {
        p.k = v;
    }
    if let Some(v) = o.sources {
        p.sources = v;
    }
    if let Some(v) = o.tau {
        p.tau = v;
    }
    if let Some(v) = o.ransac_iterations {
        p.ransac.iterations = v;
    }
    if let Some(v) = o.ransac_inlier_threshold {
        p.ransac.inlier_threshold = v;
    }
    if let Some(v) = o.splat_halfwidth {
        p.untraversable.splat_halfwidth = v;
    }
    if let Some(v) = o.min_component_px {
        p.untraversable.min_component_px = v;
    }
    if p.sources == 0 {
        bail!("at least one source frame is required");
    }
    Ok(p)
}

pub fn labels(data: &Path, out: &Path, config: Option<&Path>, overrides: &LabelOverrides, summary: Option<&Path>) -> Result<()> {
    let config: Option<LabelParams> = config.map(read_json).transpose()?;
    let scenes = open_data(data)?;
    let mut lines = Lines::to(summary)?;
    for scene in &scenes {
        let params = label_params(scene, config.as_ref(), overrides)?;
        let frames = &scene.manifest.frames;
        let renders = frames.iter().map(|f| scene.render(f)).collect::<Result<Vec<_>>>()?;
        let results: Vec<Result<serde_json::Value>> = (0..frames.len())
            .into_par_iter()
            .map(|i| {
                let frame = &frames[i];
                if i + params.sources >= frames.len() {
                    return Ok(json!({
                        "scene": scene.display_name(),
                        "frame": frame.id,
                        "skipped": format!("needs {} following frames, has {}", params.sources, frames.len() - 1 - i),
                    }));
                }
                let evidence = scene.flow(frame)?.map(|optical| FlowEvidence {
                    relative_pose: Pose::relative(&frame.pose, &frames[i + 1].pose),
                    optical,
                });
                let target = build_training_target(&renders[i], &renders[i + 1..=i + params.sources], &params, evidence.as_ref())?;
                let dir = scene.output_dir(out, frame);
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_pgm(&dir.join("traversable.pgm"), &target.traversable)?;
                write_pgm(&dir.join("untraversable.pgm"), &target.untraversable)?;
                write_pgm(&dir.join("moving_mask.pgm"), &target.moving_mask)?;
                write_pfm(&dir.join("hidden_depth.pfm"), &target.hidden_depth)?;
                Ok(json!({
                    "scene": scene.display_name(),
                    "frame": frame.id,
                    "traversable": target.traversable.count(),
                    "untraversable": target.untraversable.count(),
                    "unknown": target.unknown().count(),
                    "moving_masked": target.moving_mask.not().count(),
                    "labeled_depth": target.hidden_depth.support().count(),
                }))
            })
            .collect();
        for r in results {
            lines.emit(&r?)?;
        }
    }
    lines.finish()
}

fn write_prediction(dir: &Path, pred: &FootprintFrame) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = PredictionPaths::in_dir(dir);
    write_pfm(&paths.s, &pred.s)?;
    write_pfm(&paths.d, &pred.d)?;
    write_pfm(&paths.s_star, &pred.s_star)?;
    write_pfm(&paths.d_star, &pred.d_star)?;
    Ok(())
}

pub fn baseline(data: &Path, kind: BaselineKind, out: &Path) -> Result<()> {
    let scenes = open_data(data)?;
    for scene in &scenes {
        let params = scene.manifest.params;
        scene
            .manifest
            .frames
            .par_iter()
            .map(|frame| {
                let render = scene.render(frame)?;
                let gt = if kind == BaselineKind::GroundTruth {
                    Some(scene.ground_truth(frame)?)
                } else {
                    None
                };
                let inputs = BaselineInputs {
                    seg: &render.seg,
                    depth: &render.depth,
                    intrinsics: &frame.intrinsics,
                    ransac: params.ransac,
                    ground_truth: gt.as_ref().map(|(s, d)| (s, d)),
                };
                let pred = baseline_predict(kind, &inputs)?;
                write_prediction(&scene.output_dir(out, frame), &pred)
            })
            .collect::<Result<Vec<()>>>()?;
    }
    eprintln!("wrote {} predictions to {}", kind.name(), out.display());
    Ok(())
}

/// Recomputes ground truth from the scene description and writes it in the prediction layout.
pub fn oracle(data: &Path, frame_id: Option<&str>, out: &Path) -> Result<()> {
    let scenes = open_data(data)?;
    let mut written = 0;
    for scene in &scenes {
        let frames: Vec<&FrameEntry> = match frame_id {
            Some(id) => scene.manifest.frame(id).into_iter().collect(),
            None => scene.manifest.frames.iter().collect(),
        };
        for frame in frames {
            let camera = scene.camera(frame);
            let world = &scene.manifest.scene;
            let render = render_frame(world, &camera, frame.frame_index)?;
            let (s_star, d_star) = ground_truth_hidden(world, &camera, frame.frame_index)?;
            let pred = FootprintFrame::new(render.seg.to_prob(), render.depth.masked(&render.seg)?, s_star.to_prob(), d_star)?;
            let dir = scene.output_dir(out, frame);
            write_prediction(&dir, &pred)?;
            write_pgm(&dir.join("region_true_ground.pgm"), &eval_region(world, &camera, frame.frame_index, RegionMode::TrueGround)?)?;
            write_pgm(
                &dir.join("region_hull.pgm"),
                &eval_region(world, &camera, frame.frame_index, RegionMode::HullOfVisibleGround)?,
            )?;
            if let Some(next) = scene.manifest.frames.iter().find(|f| f.frame_index == frame.frame_index + 1) {
                let flow = ground_truth_flow(world, &camera, &scene.camera(next), frame.frame_index)?;
                write_flow(&dir.join("flow.pfm"), &flow.flow)?;
                write_pgm(&dir.join("flow_valid.pgm"), &flow.valid)?;
            }
            written += 1;
        }
    }
    if written == 0 {
        bail!("no frame {:?} in {}", frame_id.unwrap_or_default(), data.display());
    }
    eprintln!("wrote ground truth for {written} frame(s) to {}", out.display());
    Ok(())
}

struct Scored {
    scene: String,
    frame: String,
    outcome: std::result::Result<serde_json::Value, String>,
}

pub fn eval(data: &Path, pred: &Path, mode: EvalMode, region: RegionMode, threshold: f64, out: Option<&Path>) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        bail!("--threshold must lie in [0, 1]");
    }
    let scenes = open_data(data)?;
    let mut scored = Vec::new();
    for scene in &scenes {
        let batch: Vec<Scored> = scene
            .manifest
            .frames
            .par_iter()
            .map(|frame| -> Result<Scored> {
                let dir = scene.output_dir(pred, frame);
                let mut row = Scored {
                    scene: scene.display_name().to_string(),
                    frame: frame.id.clone(),
                    outcome: Err(String::new()),
                };
                if !dir.is_dir() {
                    row.outcome = Err("no prediction".into());
                    return Ok(row);
                }
                let p = load_prediction(&PredictionPaths::in_dir(&dir))?;
                let (gt_s, gt_d) = scene.ground_truth(frame)?;
                row.outcome = match mode {
                    EvalMode::Freespace => Ok(serde_json::to_value(freespace_eval(&p.s_star, &gt_s, threshold)?)?),
                    EvalMode::Footprint => {
                        let r = eval_region(&scene.manifest.scene, &scene.camera(frame), frame.frame_index, region)?;
                        Ok(serde_json::to_value(footprint_eval(&p.s_star, &gt_s, &r, threshold)?)?)
                    }
                    EvalMode::Depth => match depth_eval(&p.d_star, &gt_d) {
                        Ok(s) => Ok(serde_json::to_value(s)?),
                        Err(footprints::Error::NoValidPixels) => Err("no ground-truth hidden depth".into()),
                        Err(e) => return Err(e.into()),
                    },
                };
                Ok(row)
            })
            .collect::<Result<_>>()?;
        scored.extend(batch);
    }

    let mut lines = Lines::to(out)?;
    let mut excluded = Vec::new();
    let mut values = Vec::new();
    for row in scored {
        match row.outcome {
            Ok(scores) => {
                lines.emit(&json!({"scene": row.scene, "frame": row.frame, "mode": mode.name(), "scores": scores}))?;
                values.push(scores);
            }
            Err(reason) => {
                lines.emit(&json!({"scene": row.scene, "frame": row.frame, "mode": mode.name(), "excluded": reason}))?;
                excluded.push((format!("{}/{}", row.scene, row.frame), reason));
            }
        }
    }
    let images = values.len();
    let mean = match mode {
        EvalMode::Depth => {
            let s: Vec<_> = values.into_iter().map(serde_json::from_value).collect::<std::result::Result<_, _>>()?;
            serde_json::to_value(mean_depth(&s))?
        }
        _ => {
            let s: Vec<_> = values.into_iter().map(serde_json::from_value).collect::<std::result::Result<_, _>>()?;
            serde_json::to_value(mean_seg(&s))?
        }
    };
    let aggregate = Aggregate { mean, images, excluded };
    lines.emit(&json!({"mode": mode.name(), "aggregate": aggregate}))?;
    lines.finish()?;
    if images == 0 {
        bail!("no image could be scored");
    }
    Ok(())
}

#[derive(Serialize)]
struct EpisodeLine<'a> {
    episode: usize,
    scene: &'a str,
    frame: &'a str,
    start: [usize; 2],
    goal: [usize; 2],
    failed: bool,
    collision_fraction: f64,
    path_length: usize,
    total_cost: f64,
}

pub fn plan(data: &Path, pred: &Path, episodes: usize, seed: u64, eps_floor: f64, out: Option<&Path>) -> Result<()> {
    let scenes = open_data(data)?;
    let mut pool = Vec::new();
    for scene in &scenes {
        for frame in &scene.manifest.frames {
            if scene.output_dir(pred, frame).is_dir() {
                pool.push((scene, frame));
            }
        }
    }
    if pool.is_empty() {
        bail!("no predictions under {} match frames in {}", pred.display(), data.display());
    }
    let results: Vec<Result<serde_json::Value>> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let (scene, frame) = pool[e % pool.len()];
            let render = scene.render(frame)?;
            let (gt_s, _) = scene.ground_truth(frame)?;
            let episode_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(e as u64);
            let (start, goal) = match sample_episode(&render.seg, &gt_s, episode_seed)? {
                Ok(pair) => pair,
                Err(skip) => {
                    return Ok(json!({"episode": e, "scene": scene.display_name(), "frame": frame.id, "skipped": skip.to_string()}))
                }
            };
            let p = load_prediction(&PredictionPaths::in_dir(&scene.output_dir(pred, frame)))?;
            let costs = CostMap::from_s_star(&p.s_star, eps_floor)?;
            let Some(planned) = astar(&costs, start, goal)? else {
                bail!("no path on a fully connected grid");
            };
            let r = evaluate_path(planned, &gt_s)?;
            Ok(serde_json::to_value(EpisodeLine {
                episode: e,
                scene: scene.display_name(),
                frame: &frame.id,
                start: [start.0, start.1],
                goal: [goal.0, goal.1],
                failed: r.failed,
                collision_fraction: r.collision_fraction,
                path_length: r.path.len(),
                total_cost: r.total_cost,
            })?)
        })
        .collect();

    let mut lines = Lines::to(out)?;
    let (mut planned, mut skipped, mut failed, mut collisions) = (0usize, 0usize, 0usize, 0.0);
    for r in results {
        let v = r?;
        if v.get("skipped").is_some() {
            skipped += 1;
        } else {
            planned += 1;
            failed += usize::from(v["failed"].as_bool() == Some(true));
            collisions += v["collision_fraction"].as_f64().unwrap_or(0.0);
        }
        lines.emit(&v)?;
    }
    let n = planned.max(1) as f64;
    let (failed_rate, collision_rate) = (failed as f64 / n, collisions / n);
    lines.emit(&json!({"aggregate": {
        "episodes": planned,
        "skipped": skipped,
        "failed_paths": failed_rate,
        "collisions": collision_rate,
    }}))?;
    lines.finish()?;
    let label = pred.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let width = label.len().max(9);
    eprintln!("{:width$}  {:>12}  {:>10}", "predictor", "Failed paths", "Collisions");
    eprintln!("{label:width$}  {failed_rate:>12.3}  {collision_rate:>10.3}");
    eprintln!("({planned} episodes, {skipped} skipped)");
    if planned == 0 {
        bail!("every episode was skipped");
    }
    Ok(())
}

pub fn run_gradcheck(trials: usize, seed: u64, cfg: LossConfig, tolerance: f64) -> Result<()> {
    let report = gradcheck(trials, seed, &cfg)?;
    let max = report.max_rel_error();
    let pass = max < tolerance;
    let mut lines = Lines::to(None)?;
    lines.emit(&json!({"report": report, "max_rel_error": max, "tolerance": tolerance, "pass": pass}))?;
    lines.finish()?;
    if !pass {
        bail!("max relative error {max:e} is not below {tolerance:e}");
    }
    Ok(())
}
