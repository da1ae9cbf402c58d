use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corrview::camera::Intrinsics;
use corrview::config::ExperimentConfig;
use corrview::correlation::{CorrelationConfig, SmoothingNorm};
use corrview::correction::run_depth_correction;
use corrview::filter::{FilterConfig, Mask};
use corrview::io;
use corrview::pipeline::{from_parts, match_pair};
use corrview::report::emit_trace;
use corrview::rig::{build_rig, CameraRig, DeltaAlpha, RigSpec};
use corrview::scene::{render_depth_opacity, synthesize_features, FeatureSpec, SdfScene};
use corrview::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "corrview", version, about = "Cross-view correspondence experiments on synthetic scenes")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "CORRVIEW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render depth, opacity and features for both view sets.
    Scene(SceneArgs),
    /// Correlate and filter every adjacent pair of a rendered scene.
    Match(MatchArgs),
    /// Run the depth-correction experiment.
    Correct(CorrectArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene JSON: `{"primitives": [...]}`.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated `key=value`: n, da, res, fov, radius, elev, az0.
    #[arg(long, default_value = "n=4,da=20")]
    rig: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Args)]
struct MatchArgs {
    /// Directory written by `scene`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Epipolar threshold in pixels, or `inf`.
    #[arg(long, default_value = "2")]
    tau_epi: String,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.99)]
    edge_threshold: f64,
    /// Treat every pixel as foreground.
    #[arg(long)]
    full_masks: bool,
    /// Also write each refined volume as a one-layer CVFS file.
    #[arg(long)]
    dump_volume: bool,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate the configuration and stop.
    #[arg(long)]
    dry_run: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Stalled { .. } => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn parse_rig(text: &str) -> Result<RigSpec> {
    let (mut n, mut da, mut res, mut fov) = (4usize, DeltaAlpha::Fixed(20.0), 32usize, 40.0);
    let (mut radius, mut elev, mut az0) = (2.5, 15.0, 0.0);
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("rig argument {part:?} is not key=value")))?;
        let bad = || Error::Config(format!("bad rig value {part:?}"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        match key.trim() {
            "n" => n = value.trim().parse().map_err(|_| bad())?,
            "da" => da = value.trim().parse().map_err(|_| bad())?,
            "res" => res = value.trim().parse().map_err(|_| bad())?,
            "fov" => fov = num(value)?,
            "radius" => radius = num(value)?,
            "elev" => elev = num(value)?,
            "az0" => az0 = num(value)?,
            other => return Err(Error::Config(format!("unknown rig key {other:?}"))),
        }
    }
    Ok(RigSpec {
        n,
        delta_alpha: da,
        radius,
        elevation: elev,
        first_azimuth: az0,
        intrinsics: Intrinsics::from_fov(res, res, fov),
    })
}

fn view_stem(set: usize, i: usize) -> String {
    format!("v{set}_{i}")
}

fn cmd_scene(args: &SceneArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let scene: SdfScene = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    scene.validate()?;
    let spec = parse_rig(&args.rig)?;
    let rig = build_rig(&spec, args.seed)?;
    let k = spec.intrinsics;
    let features = FeatureSpec::two_layer(k.width, k.height, args.noise, args.seed);
    io::create_dir(&args.out)?;
    io::write_json(&args.out.join("rig.json"), &rig)?;
    for (set, cams) in [(1, &rig.v1), (2, &rig.v2)] {
        for (i, cam) in cams.iter().enumerate() {
            let stem = view_stem(set, i);
            let (depth, opacity) = render_depth_opacity(&scene, cam)?;
            let stack = synthesize_features(cam, &depth, &features)?;
            io::write_depth_pfm(&args.out.join(format!("{stem}_depth.pfm")), &depth)?;
            io::write_opacity_pgm(&args.out.join(format!("{stem}_opacity.pgm")), &opacity)?;
            io::write_cvfs(&args.out.join(format!("{stem}_features.cvfs")), &stack)?;
        }
    }
    println!("wrote {} views to {}", 2 * rig.n, args.out.display());
    Ok(())
}

fn load_view(dir: &Path, rig: &CameraRig, set: usize, i: usize, filter: &FilterConfig, full: bool) -> Result<corrview::pipeline::ViewObservation> {
    let stem = view_stem(set, i);
    let cam = if set == 1 { &rig.v1[i] } else { &rig.v2[i] };
    let depth = io::read_depth_pfm(&dir.join(format!("{stem}_depth.pfm")))?;
    let opacity = io::read_opacity_pgm(&dir.join(format!("{stem}_opacity.pgm")))?;
    let features = io::read_cvfs(&dir.join(format!("{stem}_features.cvfs")))?;
    if (opacity.width, opacity.height) != (cam.width(), cam.height()) {
        return Err(Error::Format(format!("{stem}: opacity resolution differs from camera")));
    }
    let mut view = from_parts(cam.clone(), depth, opacity, features, filter)?;
    if full {
        view.mask = Mask::full(cam.width(), cam.height());
    }
    Ok(view)
}

fn cmd_match(args: &MatchArgs) -> Result<()> {
    let tau_epi = match args.tau_epi.as_str() {
        "inf" => f64::INFINITY,
        v => v
            .parse()
            .map_err(|_| Error::Config(format!("bad --tau-epi {v:?}")))?,
    };
    let filter = FilterConfig {
        tau_epi,
        opacity_edge_threshold: args.edge_threshold,
        ..Default::default()
    };
    filter.validate()?;
    let corr = CorrelationConfig {
        mutual_nn: true,
        k: args.k,
        smoothing: SmoothingNorm::default(),
    };
    let rig: CameraRig = io::read_json(&args.input.join("rig.json")).map_err(|e| match e {
        Error::Json(e) => Error::Format(format!("rig.json: {e}")),
        other => other,
    })?;
    io::create_dir(&args.out)?;
    let mut pairs = Vec::with_capacity(rig.n);
    for i in 0..rig.n {
        let src = load_view(&args.input, &rig, 1, i, &filter, args.full_masks)?;
        let dst = load_view(&args.input, &rig, 2, i, &filter, args.full_masks)?;
        let dims = |v: &corrview::pipeline::ViewObservation| -> Vec<(usize, usize)> {
            v.features.layers.iter().map(|l| (l.height, l.width)).collect()
        };
        if dims(&src) != dims(&dst) {
            return Err(Error::Format(format!("pair {i}: feature resolutions differ")));
        }
        let m = match_pair(&src, &dst, (i, rig.n + i), &corr, &filter)?;
        if args.dump_volume {
            let vol = corrview::correlation::correlate(&src.normalized, &dst.normalized)?;
            let refined = corrview::correlation::refine_volume(&vol, &corr)?;
            io::write_volume_cvfs(&args.out.join(format!("volume_pair{i}.cvfs")), &refined)?;
        }
        io::write_raw_field(&args.out.join(format!("raw_pair{i}.jsonl")), &m.raw_forward)?;
        io::write_correspondences(&args.out.join(format!("pair{i}.jsonl")), &m.forward.matches)?;
        io::write_correspondences(&args.out.join(format!("pair{i}_reverse.jsonl")), &m.backward.matches)?;
        pairs.push(json!({
            "pair": [i, rig.n + i],
            "forward": m.forward.counts,
            "backward": m.backward.counts,
        }));
    }
    let summary = json!({ "pairs": pairs, "tau_epi": args.tau_epi, "k": args.k });
    io::write_json(&args.out.join("summary.json"), &summary)?;
    println!("matched {} pairs into {}", rig.n, args.out.display());
    Ok(())
}

fn cmd_correct(args: &CorrectArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    if args.dry_run {
        println!("config ok: {} correspondence iterations of {}", cfg.schedule.corr_count(), cfg.schedule.total_iters);
        return Ok(());
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("corrview_out"));
    let problem = cfg.problem()?;
    let trace = run_depth_correction(&problem, &cfg.settings())?;
    emit_trace(&trace, &out, cfg.heatmap_clip)?;
    println!("MADE_reduction={:.4}", trace.made_reduction);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Scene(a) => cmd_scene(a),
        Command::Match(a) => cmd_match(a),
        Command::Correct(a) => cmd_correct(a),
        Command::Version => {
            println!("corrview {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Stalled { diagnostics, .. } = &e {
                if let Ok(dump) = serde_json::to_string_pretty(diagnostics.as_ref()) {
                    eprintln!("{dump}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
