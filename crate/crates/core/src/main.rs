//! Command-line front-end: simulated episode batches, image processing,
//! link loopback drives, and the self-check suite.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use ringbot::error::Error;
use ringbot::geometry::Calibration;
use ringbot::harness::{
    self, HarnessConfig, PolicyKind, TransportKind, METRICS_HEADER,
};
use ringbot::sim::SimConfig;
use ringbot::vision::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "ringbot",
    about = "Desk-scale autonomy stack: game simulation, ring localization, link protocol",
    long_about = None,
    after_help = format!("metrics.csv columns: {METRICS_HEADER}\nExit status: 0 success, 1 config error, 2 runtime failure.")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonRunArgs {
    /// Harness config JSON with paths and defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; episode i runs with seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of episodes in the batch.
    #[arg(long)]
    episodes: Option<u32>,
    /// Controller for both robots: zero, random, greedy, or astar.
    #[arg(long)]
    policy: Option<String>,
    /// Output directory for metrics.csv and per-episode logs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulation commands.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Vision pipeline commands.
    #[command(subcommand)]
    Vision(VisionCommand),
    /// Data-link commands.
    #[command(subcommand)]
    Link(LinkCommand),
    /// Run the embedded invariant suite and report pass/fail.
    Selfcheck,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run a batch of episodes and write metrics and logs.
    Run(CommonRunArgs),
}

#[derive(Subcommand)]
enum VisionCommand {
    /// Process an image or a directory of images through the pipeline.
    Process {
        /// PNG or binary PPM image, or a directory of them.
        input: PathBuf,
        /// Harness config JSON with paths and defaults; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pipeline config JSON (HSV window, blur radius, thresholds).
        #[arg(long)]
        pipeline: Option<PathBuf>,
        /// Calibration JSON (intrinsics and mount) for localization.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Depth source: a file for a single image, or a directory
        /// searched for <stem>.depth / <stem>_depth.png.
        #[arg(long)]
        depth: Option<PathBuf>,
        /// Output directory for per-image JSON results.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the Step 2-4 intermediate images.
        #[arg(long)]
        debug_images: bool,
    },
}

#[derive(Subcommand)]
enum LinkCommand {
    /// Drive episodes with the red robot controlled over the link.
    Loopback {
        #[command(flatten)]
        run: CommonRunArgs,
        /// Wire the two endpoints through memory, stdio, or file.
        #[arg(long, default_value = "memory")]
        transport: String,
    },
}

fn exit_code_for(err: &Error) -> ExitCode {
    if err.is_config() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn load_harness_config(path: Option<&PathBuf>) -> Result<HarnessConfig, Error> {
    match path {
        Some(p) => HarnessConfig::load(p),
        None => Ok(HarnessConfig::default()),
    }
}

fn resolve_sim_config(hc: &HarnessConfig, seed: Option<u64>) -> Result<SimConfig, Error> {
    let mut cfg = match &hc.sim_config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed.or(hc.seed) {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run_sim(args: &CommonRunArgs) -> Result<(), Error> {
    let hc = load_harness_config(args.config.as_ref())?;
    let cfg = resolve_sim_config(&hc, args.seed)?;
    let policy: PolicyKind = args
        .policy
        .clone()
        .or(hc.policy.clone())
        .unwrap_or_else(|| "greedy".into())
        .parse()?;
    let episodes = args.episodes.or(hc.episodes).unwrap_or(1);
    let out = args
        .out
        .clone()
        .or(hc.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let summary = harness::run_sim_batch(&cfg, policy, episodes, &out)?;
    println!(
        "ran {} episode(s): mean episode reward {:.3}, mean ring reward {:.3}",
        summary.episodes, summary.mean_episode_reward, summary.mean_ring_reward
    );
    println!("wrote {}", out.join("metrics.csv").display());
    Ok(())
}

fn run_link(args: &CommonRunArgs, transport: &str) -> Result<(), Error> {
    let hc = load_harness_config(args.config.as_ref())?;
    let cfg = resolve_sim_config(&hc, args.seed)?;
    let policy: PolicyKind = args
        .policy
        .clone()
        .or(hc.policy.clone())
        .unwrap_or_else(|| "greedy".into())
        .parse()?;
    let transport: TransportKind = transport.parse()?;
    let episodes = args.episodes.or(hc.episodes).unwrap_or(1);
    let out = args
        .out
        .clone()
        .or(hc.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    harness::transport_smoke()?;
    let summary = harness::run_link_loopback(&cfg, policy, transport, episodes, &out)?;
    println!(
        "ran {} episode(s) over the link: mean episode reward {:.3}, mean ring reward {:.3}",
        summary.episodes, summary.mean_episode_reward, summary.mean_ring_reward
    );
    println!("wrote {}", out.join("metrics.csv").display());
    Ok(())
}

fn run_vision(
    input: &std::path::Path,
    config: Option<&PathBuf>,
    pipeline: Option<&PathBuf>,
    calibration: Option<&PathBuf>,
    depth: Option<&PathBuf>,
    out: Option<&PathBuf>,
    debug_images: bool,
) -> Result<(), Error> {
    let hc = load_harness_config(config)?;
    let pipeline_cfg = match pipeline.or(hc.pipeline_config.as_ref()) {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let cal = match calibration.or(hc.calibration.as_ref()) {
        Some(p) => Some(Calibration::load(p)?),
        None => None,
    };
    let out_dir = out
        .cloned()
        .or(hc.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)?;

    let images = harness::collect_images(input)?;
    if images.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no PNG or PPM images under {}",
            input.display()
        )));
    }
    let mut failures = 0usize;
    for image in &images {
        let debug_dir = debug_images.then_some(out_dir.as_path());
        match harness::process_image(
            image,
            &pipeline_cfg,
            cal.as_ref(),
            depth.map(|p| p.as_path()),
            debug_dir,
        ) {
            Ok(result) => {
                let stem = image
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "image".into());
                let path = out_dir.join(format!("{stem}.json"));
                std::fs::write(&path, serde_json::to_string_pretty(&result)?)?;
                println!(
                    "{}: {} candidate(s), {} detection(s){}{}",
                    image.display(),
                    result.candidates,
                    result.detections.len(),
                    if result.missing_depth { ", no depth" } else { "" },
                    if result.missing_calibration { ", no calibration" } else { "" },
                );
            }
            Err(e) => {
                // Per-file failures don't abort the batch.
                eprintln!("{}: error: {e}", image.display());
                failures += 1;
            }
        }
    }
    if failures == images.len() {
        return Err(Error::InvalidConfig("every input image failed".into()));
    }
    Ok(())
}

fn run_selfcheck() -> Result<(), Error> {
    let results = harness::run_selfcheck();
    let mut all_ok = true;
    for check in &results {
        println!(
            "{}: {} ({})",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
        all_ok &= check.passed;
    }
    if all_ok {
        Ok(())
    } else {
        Err(Error::InvalidState("self-check failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sim(SimCommand::Run(args)) => run_sim(args),
        Command::Vision(VisionCommand::Process {
            input,
            config,
            pipeline,
            calibration,
            depth,
            out,
            debug_images,
        }) => run_vision(
            input,
            config.as_ref(),
            pipeline.as_ref(),
            calibration.as_ref(),
            depth.as_ref(),
            out.as_ref(),
            *debug_images,
        ),
        Command::Link(LinkCommand::Loopback { run, transport }) => run_link(run, transport),
        Command::Selfcheck => run_selfcheck(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
