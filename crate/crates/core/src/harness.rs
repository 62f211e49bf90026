//! Batch runners behind the command-line tool: simulated episode batches
//! with metrics output, image-directory processing, link-loopback drives,
//! and the embedded self-check suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{
    camera_to_robot, drop_up_axis, invert_intrinsics, pixel_to_camera, Calibration, PlanarPoint,
};
use crate::link::{FileTailTransport, MemoryTransport, Transport};
use crate::policy::{
    loopback_remote_policy, AstarPolicy, GreedyPolicy, ObservationPolicy, RandomPolicy, ZeroPolicy,
};
use crate::sim::{run_episode, EpisodeLog, FieldLayout, Policy, SimConfig};
use crate::vision::{detect_rings, ColorImage, DepthMap, HeuristicDetector, PipelineConfig};

/// Top-level tool configuration; every field has a default so the tool
/// runs without a config file. Command-line flags override file values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub sim_config: Option<PathBuf>,
    pub pipeline_config: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub policy: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub episodes: Option<u32>,
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Named policy selections accepted by the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Zero,
    Random,
    Greedy,
    Astar,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PolicyKind::Zero),
            "random" => Ok(PolicyKind::Random),
            "greedy" => Ok(PolicyKind::Greedy),
            "astar" => Ok(PolicyKind::Astar),
            other => Err(Error::InvalidConfig(format!(
                "unknown policy {other:?} (expected zero|random|greedy|astar)"
            ))),
        }
    }
}

impl PolicyKind {
    pub fn build(&self, seed: u64) -> Box<dyn Policy> {
        match self {
            PolicyKind::Zero => Box::new(ZeroPolicy),
            PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            PolicyKind::Greedy => Box::new(GreedyPolicy::default()),
            PolicyKind::Astar => Box::new(AstarPolicy::default()),
        }
    }

    /// Observation-only variant for the coprocessor side of the link.
    /// The grid planner needs privileged state and cannot run there.
    pub fn build_observation_policy(&self, seed: u64) -> Result<Box<dyn ObservationPolicy>> {
        match self {
            PolicyKind::Zero => Ok(Box::new(ZeroPolicy)),
            PolicyKind::Random => Ok(Box::new(RandomPolicy::new(seed))),
            PolicyKind::Greedy => Ok(Box::new(GreedyPolicy::default())),
            PolicyKind::Astar => Err(Error::InvalidConfig(
                "the astar policy needs privileged state and cannot run over the link".into(),
            )),
        }
    }
}

/// Header of the per-episode metrics table, also shown in `--help`.
pub const METRICS_HEADER: &str = "episode,steps,red_ring,red_pin,red_goal,red_position,red_total,red_rings,blue_ring,blue_pin,blue_goal,blue_position,blue_total,blue_rings";

fn metrics_row(episode: u32, log: &EpisodeLog) -> String {
    let t = &log.summary.totals;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        episode,
        log.summary.steps,
        t[0].ring,
        t[0].pin,
        t[0].goal,
        t[0].position,
        t[0].total,
        t[0].rings_collected,
        t[1].ring,
        t[1].pin,
        t[1].goal,
        t[1].position,
        t[1].total,
        t[1].rings_collected
    )
}

/// Outcome of a batch run.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub episodes: u32,
    pub mean_episode_reward: f64,
    pub mean_ring_reward: f64,
}

fn write_episode_files(out_dir: &Path, episode: u32, log: &EpisodeLog) -> Result<()> {
    let mut jsonl = std::io::BufWriter::new(fs::File::create(
        out_dir.join(format!("episode_{episode:04}.jsonl")),
    )?);
    log.write_jsonl(&mut jsonl)?;
    jsonl.flush()?;
    let mut csv = std::io::BufWriter::new(fs::File::create(
        out_dir.join(format!("episode_{episode:04}_steps.csv")),
    )?);
    log.write_step_csv(&mut csv)?;
    csv.flush()?;
    Ok(())
}

/// Run a batch of simulated episodes and write `metrics.csv` plus
/// per-episode logs. Episode `i` runs with seed `base_seed + i`.
pub fn run_sim_batch(
    cfg: &SimConfig,
    kind: PolicyKind,
    episodes: u32,
    out_dir: &Path,
) -> Result<BatchSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut metrics = std::io::BufWriter::new(fs::File::create(out_dir.join("metrics.csv"))?);
    writeln!(metrics, "{METRICS_HEADER}")?;

    let mut reward_sum = 0.0;
    let mut ring_sum = 0.0;
    for episode in 0..episodes {
        let mut episode_cfg = cfg.clone();
        episode_cfg.seed = cfg.seed.wrapping_add(episode as u64);
        let mut red = kind.build(episode_cfg.seed);
        let mut blue = kind.build(episode_cfg.seed.wrapping_add(0x5EED));
        let log = run_episode(&episode_cfg, red.as_mut(), blue.as_mut())?;
        writeln!(metrics, "{}", metrics_row(episode, &log))?;
        write_episode_files(out_dir, episode, &log)?;
        reward_sum += log.summary.totals[0].total + log.summary.totals[1].total;
        ring_sum += log.summary.totals[0].ring + log.summary.totals[1].ring;
    }
    metrics.flush()?;
    Ok(BatchSummary {
        episodes,
        mean_episode_reward: reward_sum / (2.0 * episodes as f64),
        mean_ring_reward: ring_sum / (2.0 * episodes as f64),
    })
}

/// Transport selection for the loopback drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Memory,
    Stdio,
    File,
}

impl std::str::FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory" => Ok(TransportKind::Memory),
            "stdio" => Ok(TransportKind::Stdio),
            "file" => Ok(TransportKind::File),
            other => Err(Error::InvalidConfig(format!(
                "unknown transport {other:?} (expected memory|stdio|file)"
            ))),
        }
    }
}

/// Run a batch with the red robot driven over the link: the simulation
/// side acts as the brain, the selected policy answers as the
/// coprocessor. `stdio` exercises the byte-stream bridge over an
/// in-process pipe pair; `file` exchanges packets through tail-read
/// text files in the output directory.
pub fn run_link_loopback(
    cfg: &SimConfig,
    kind: PolicyKind,
    transport: TransportKind,
    episodes: u32,
    out_dir: &Path,
) -> Result<BatchSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut metrics = std::io::BufWriter::new(fs::File::create(out_dir.join("metrics.csv"))?);
    writeln!(metrics, "{METRICS_HEADER}")?;

    let mut reward_sum = 0.0;
    let mut ring_sum = 0.0;
    for episode in 0..episodes {
        let mut episode_cfg = cfg.clone();
        episode_cfg.seed = cfg.seed.wrapping_add(episode as u64);
        let jetson_policy = kind.build_observation_policy(episode_cfg.seed)?;

        let mut red: Box<dyn Policy> = match transport {
            TransportKind::Memory => {
                let (brain_side, jetson_side) = MemoryTransport::pair();
                Box::new(loopback_remote_policy(brain_side, jetson_side, jetson_policy))
            }
            TransportKind::Stdio => {
                let (brain_side, jetson_side) = crate::link::byte_pipe_pair();
                Box::new(loopback_remote_policy(brain_side, jetson_side, jetson_policy))
            }
            TransportKind::File => {
                let b2j = out_dir.join(format!("link_{episode:04}_brain_to_jetson.txt"));
                let j2b = out_dir.join(format!("link_{episode:04}_jetson_to_brain.txt"));
                let _ = fs::remove_file(&b2j);
                let _ = fs::remove_file(&j2b);
                let brain_side = FileTailTransport::new(b2j.clone(), j2b.clone());
                let jetson_side = FileTailTransport::new(j2b, b2j);
                Box::new(loopback_remote_policy(brain_side, jetson_side, jetson_policy))
            }
        };
        let mut blue = kind.build(episode_cfg.seed.wrapping_add(0x5EED));
        let log = run_episode(&episode_cfg, red.as_mut(), blue.as_mut())?;
        writeln!(metrics, "{}", metrics_row(episode, &log))?;
        write_episode_files(out_dir, episode, &log)?;
        reward_sum += log.summary.totals[0].total + log.summary.totals[1].total;
        ring_sum += log.summary.totals[0].ring + log.summary.totals[1].ring;
    }
    metrics.flush()?;
    Ok(BatchSummary {
        episodes,
        mean_episode_reward: reward_sum / (2.0 * episodes as f64),
        mean_ring_reward: ring_sum / (2.0 * episodes as f64),
    })
}

/// Per-image output of the vision command.
#[derive(Debug, Serialize)]
pub struct ImageResult {
    pub image: String,
    pub candidates: usize,
    pub rejected: usize,
    pub dropped_no_depth: usize,
    pub detections: Vec<DetectionRecord>,
    /// True when no depth source was found for this image.
    pub missing_depth: bool,
    /// True when no calibration was supplied, so no positions.
    pub missing_calibration: bool,
}

#[derive(Debug, Serialize)]
pub struct DetectionRecord {
    pub u: f64,
    pub v: f64,
    pub score: f64,
    pub depth: Option<f64>,
    /// Robot-frame floor position, when depth and calibration allow it.
    pub position: Option<PlanarPoint>,
    pub distance: Option<f64>,
}

/// Find the depth source paired with an image: `<stem>.depth` first,
/// then `<stem>_depth.png`, in the depth directory (or next to the
/// image when none is given).
fn find_depth_for(image: &Path, depth_arg: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = depth_arg {
        if p.is_file() {
            return Some(p.to_path_buf());
        }
    }
    let stem = image.file_stem()?.to_string_lossy().into_owned();
    let dir = depth_arg
        .filter(|p| p.is_dir())
        .map(Path::to_path_buf)
        .or_else(|| image.parent().map(Path::to_path_buf))?;
    let raw = dir.join(format!("{stem}.depth"));
    if raw.is_file() {
        return Some(raw);
    }
    let png = dir.join(format!("{stem}_depth.png"));
    png.is_file().then_some(png)
}

/// Process one image through the pipeline, localizing detections when a
/// calibration is available. Detections come out sorted ascending by
/// robot-frame distance (pixel order when no positions exist).
pub fn process_image(
    image_path: &Path,
    pipeline: &PipelineConfig,
    calibration: Option<&Calibration>,
    depth_arg: Option<&Path>,
    debug_dir: Option<&Path>,
) -> Result<ImageResult> {
    let img = ColorImage::load(image_path)?;
    let depth_path = find_depth_for(image_path, depth_arg);
    let depth = match &depth_path {
        Some(p) => Some(DepthMap::load(p)?),
        None => None,
    };
    let detector = HeuristicDetector::from_config(pipeline);
    let report = detect_rings(&img, depth.as_ref(), pipeline, &detector)?;

    if let Some(dir) = debug_dir {
        fs::create_dir_all(dir)?;
        let stem = image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        let pre = crate::vision::preprocess(&img, pipeline)?;
        pre.mask.to_gray().save_png(&dir.join(format!("{stem}_step2_mask.png")))?;
        pre.blurred.save_png(&dir.join(format!("{stem}_step3_blur.png")))?;
        pre.masked.save_png(&dir.join(format!("{stem}_step4_masked.png")))?;
    }

    let chain = match calibration {
        Some(cal) => Some((invert_intrinsics(&cal.intrinsics()?)?, cal.mount()?)),
        None => None,
    };
    let mut detections: Vec<DetectionRecord> = report
        .accepted
        .iter()
        .map(|acc| {
            let (position, distance) = match (acc.detection, &chain) {
                (Some(det), Some((inv, mount))) => {
                    let cam = pixel_to_camera(&det, inv);
                    let pos = drop_up_axis(camera_to_robot(cam, mount));
                    let dist = pos.distance_to(&PlanarPoint::new(0.0, 0.0));
                    (Some(pos), Some(dist))
                }
                _ => (None, None),
            };
            DetectionRecord {
                u: acc.candidate.centroid_u,
                v: acc.candidate.centroid_v,
                score: acc.score,
                depth: acc.detection.map(|d| d.depth),
                position,
                distance,
            }
        })
        .collect();
    detections.sort_by(|a, b| match (a.distance, b.distance) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    Ok(ImageResult {
        image: image_path.to_string_lossy().into_owned(),
        candidates: report.candidates.len(),
        rejected: report.rejected_count,
        dropped_no_depth: report.dropped_no_depth,
        detections,
        missing_depth: depth.is_none(),
        missing_calibration: calibration.is_none(),
    })
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("png") | Some("ppm") | Some("PNG") | Some("PPM")
    )
}

/// Gather the images a vision run should process.
pub fn collect_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Error::InvalidConfig(format!("no such image path: {}", input.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| is_image_file(p))
        .collect();
    files.sort();
    Ok(files)
}

/// One self-check result line.
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Run the embedded invariant suite: projection round-trip, alliance
/// symmetry, and codec round-trip.
pub fn run_selfcheck() -> Vec<CheckResult> {
    use crate::geometry::{CameraIntrinsics, CameraMount, PixelDetection};
    use rand::Rng;

    let mut results = Vec::new();

    // Projection round-trip against the forward model.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0).unwrap();
        let inv = invert_intrinsics(&k).unwrap();
        let mount = CameraMount::new(0.35, 0.28, 0.1).unwrap();
        let mut worst: f64 = 0.0;
        let mut tried = 0;
        while tried < 200 {
            let gx = rng.random_range(-2.0..2.0);
            let gz = rng.random_range(0.3..4.0);
            // Forward model: level frame, tilt into the camera, project.
            let level = crate::geometry::Vec3::new(gx, mount.height, gz - mount.forward_offset);
            let cam = crate::geometry::rotate_about_x(level, mount.tilt);
            if cam.z <= 0.05 {
                continue;
            }
            let u = k.fx * cam.x / cam.z + k.cx;
            let v = k.fy * cam.y / cam.z + k.cy;
            if !(0.0..640.0).contains(&u) || !(0.0..480.0).contains(&v) {
                continue;
            }
            tried += 1;
            let det = PixelDetection::new(u, v, cam.z).unwrap();
            let got = drop_up_axis(camera_to_robot(pixel_to_camera(&det, &inv), &mount));
            let err = ((got.x - gx).powi(2) + (got.z - gz).powi(2)).sqrt()
                / (gx * gx + gz * gz).sqrt().max(1e-6);
            worst = worst.max(err);
        }
        results.push(CheckResult {
            name: "projection round-trip",
            passed: worst < 1e-9,
            detail: format!("worst relative error {worst:.3e} over {tried} points"),
        });
    }

    // Alliance symmetry of the observation builder.
    {
        let mut cfg = SimConfig {
            noise_fraction: 0.0,
            layout: FieldLayout::SeededRandom,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut worst: f64 = 0.0;
        for trial in 0..200 {
            cfg.seed = trial;
            let mut state = crate::sim::init_field(&cfg, cfg.layout).unwrap();
            let half = cfg.half_width() - cfg.robot_half_extent;
            for robot in state.robots.iter_mut() {
                robot.pose = crate::geometry::Pose2D::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                );
            }
            let rotated = state.rotated_half_turn();
            let mut noise_rng = ChaCha8Rng::seed_from_u64(0);
            let red = crate::sim::build_observation(&state, 0, &cfg, &mut noise_rng);
            let blue = crate::sim::build_observation(&rotated, 1, &cfg, &mut noise_rng);
            for i in 0..crate::sim::OBS_LEN {
                worst = worst.max((red.0[i] - blue.0[i]).abs());
            }
        }
        results.push(CheckResult {
            name: "alliance symmetry",
            passed: worst < 1e-12,
            detail: format!("worst elementwise difference {worst:.3e}"),
        });
    }

    // Codec round-trip on random packets.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut ok = true;
        for _ in 0..1000 {
            let b = crate::link::BrainPacket::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-3.15..3.15),
                rng.random_range(0.0..105.0),
                rng.random_range(0..1_000_000),
            )
            .unwrap();
            ok &= crate::link::decode_brain(&crate::link::encode_brain(&b))
                .map(|p| p == b)
                .unwrap_or(false);
            let j = crate::link::JetsonPacket::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(0..1_000_000),
            )
            .unwrap();
            ok &= crate::link::decode_jetson(&crate::link::encode_jetson(&j))
                .map(|p| p == j)
                .unwrap_or(false);
        }
        results.push(CheckResult {
            name: "codec round-trip",
            passed: ok,
            detail: "1000 random packets per direction".into(),
        });
    }

    results
}

/// True when every transport kind can push one line through. Used by the
/// loopback command's iterator accounting printout.
pub fn transport_smoke() -> Result<()> {
    let (mut a, mut b) = MemoryTransport::pair();
    a.send("ping\n")?;
    if b.receive(50)?.as_deref() != Some("ping\n") {
        return Err(Error::Transport("memory pair failed".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn sim_batch_writes_metrics_and_logs() {
        let dir = TempDir::new().unwrap();
        let cfg = SimConfig {
            episode_steps: 20,
            ..SimConfig::default()
        };
        let summary = run_sim_batch(&cfg, PolicyKind::Zero, 2, dir.path()).unwrap();
        assert_eq!(summary.episodes, 2);
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 3);
        assert!(metrics.starts_with("episode,steps,red_ring"));
        assert!(dir.path().join("episode_0000.jsonl").is_file());
        assert!(dir.path().join("episode_0001_steps.csv").is_file());
    }

    #[test]
    fn sim_batch_is_byte_deterministic() {
        let cfg = SimConfig {
            episode_steps: 30,
            seed: 7,
            layout: FieldLayout::SeededRandom,
            ..SimConfig::default()
        };
        let run = |dir: &Path| {
            run_sim_batch(&cfg, PolicyKind::Random, 2, dir).unwrap();
            fs::read(dir.join("metrics.csv")).unwrap()
        };
        let d1 = TempDir::new().unwrap();
        let d2 = TempDir::new().unwrap();
        assert_eq!(run(d1.path()), run(d2.path()));
    }

    #[test]
    fn loopback_matches_sim_run_totals() {
        let cfg = SimConfig {
            episode_steps: 60,
            seed: 3,
            layout: FieldLayout::SeededRandom,
            ..SimConfig::default()
        };
        let d1 = TempDir::new().unwrap();
        let d2 = TempDir::new().unwrap();
        run_sim_batch(&cfg, PolicyKind::Greedy, 1, d1.path()).unwrap();
        run_link_loopback(&cfg, PolicyKind::Greedy, TransportKind::Memory, 1, d2.path()).unwrap();
        let m1 = fs::read_to_string(d1.path().join("metrics.csv")).unwrap();
        let m2 = fs::read_to_string(d2.path().join("metrics.csv")).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn selfcheck_passes() {
        for check in run_selfcheck() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
