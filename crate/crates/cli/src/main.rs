//! `footprints`: synthesize scenes, build training labels, run baselines,
//! evaluate predictions and plan paths over them.

mod commands;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use footprints::losses::LossConfig;
use footprints::planner::DEFAULT_EPS_FLOOR;
use footprints::predictors::BaselineKind;
use footprints::scene::RegionMode;

#[derive(Parser)]
#[command(name = "footprints", version, about = "Hidden walkable-surface toolkit")]
struct Cli {
    /// Report errors on stderr as a JSON object.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random box scenes with renders, ground truth and a manifest per scene.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON generator settings; missing keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build training labels for every frame with enough following frames.
    Labels {
        /// A scene directory or a directory of scene directories.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON label parameters replacing the manifest's block.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: LabelOverrides,
        /// Write the per-frame summary here instead of stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write baseline predictions for every frame.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: BaselineKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth; one JSON line per image plus an aggregate.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Evaluation region for footprint mode.
        #[arg(long, value_enum, default_value_t = RegionArg::TrueGround)]
        region: RegionArg,
        #[arg(long, default_value_t = footprints::evalkit::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan A* paths from visible to hidden ground over predicted costs.
    Plan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EPS_FLOOR)]
        eps_floor: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic loss gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = LossConfig::default().lambda)]
        lambda: f64,
        #[arg(long, default_value_t = LossConfig::default().clamp_eps)]
        clamp_eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Recompute ground truth from the scene description, in the prediction layout.
    Oracle {
        #[arg(long)]
        data: PathBuf,
        /// Only this frame id; all frames when omitted.
        #[arg(long)]
        frame: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Default)]
pub struct LabelOverrides {
    /// Traversable when more than k warped sources agree.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of following frames used as sources.
    #[arg(long)]
    pub sources: Option<usize>,
    /// Flow disagreement (pixels) above which a pixel counts as moving.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub ransac_iterations: Option<usize>,
    /// Meters.
    #[arg(long)]
    pub ransac_inlier_threshold: Option<f64>,
    /// Meters.
    #[arg(long)]
    pub splat_halfwidth: Option<f64>,
    #[arg(long)]
    pub min_component_px: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EvalMode {
    Freespace,
    Footprint,
    Depth,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Freespace => "freespace",
            EvalMode::Footprint => "footprint",
            EvalMode::Depth => "depth",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionArg {
    FullImage,
    TrueGround,
    HullOfVisibleGround,
}

impl From<RegionArg> for RegionMode {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::FullImage => RegionMode::FullImage,
            RegionArg::TrueGround => RegionMode::TrueGround,
            RegionArg::HullOfVisibleGround => RegionMode::HullOfVisibleGround,
        }
    }
}

fn parse_kind(s: &str) -> Result<BaselineKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = BaselineKind::ALL.iter().map(|k| k.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth {
            out,
            scenes,
            frames,
            seed,
            config,
        } => commands::synth(&out, scenes, frames, seed, config.as_deref()),
        Command::Labels {
            data,
            out,
            config,
            overrides,
            summary,
        } => commands::labels(&data, &out, config.as_deref(), &overrides, summary.as_deref()),
        Command::Baseline { data, kind, out } => commands::baseline(&data, kind, &out),
        Command::Eval {
            data,
            pred,
            mode,
            region,
            threshold,
            out,
        } => commands::eval(&data, &pred, mode, region.into(), threshold, out.as_deref()),
        Command::Plan {
            data,
            pred,
            episodes,
            seed,
            eps_floor,
            out,
        } => commands::plan(&data, &pred, episodes, seed, eps_floor, out.as_deref()),
        Command::Gradcheck {
            trials,
            seed,
            lambda,
            clamp_eps,
            tolerance,
        } => commands::run_gradcheck(trials, seed, LossConfig { lambda, clamp_eps }, tolerance),
        Command::Oracle { data, frame, out } => commands::oracle(&data, frame.as_deref(), &out),
    }
}

fn report(json: bool, kind: &str, code: u8, message: &str) -> ExitCode {
    if json {
        let v = serde_json::json!({"error": {"kind": kind, "code": code, "message": message}});
        eprintln!("{v}");
    } else {
        eprintln!("{message}");
    }
    ExitCode::from(code)
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("FOOTPRINTS_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FOOTPRINTS_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let json = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return if json {
                report(true, "usage", 2, e.to_string().trim_end())
            } else {
                let _ = e.print();
                ExitCode::from(2)
            };
        }
    };
    if let Err(message) = configure_threads() {
        return report(cli.json, "usage", 2, &message);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(cli.json, "validation", 1, &format!("{e:#}")),
    }
}
