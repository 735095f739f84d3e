use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spinsplat::harness::{run_blur_sweep, run_sweep, SweepConfig, SweepRow, FLAT_SPREAD_DB};
use spinsplat::io::{self, load_checkpoint, load_dataset, save_checkpoint, save_dataset, Checkpoint, Manifest};
use spinsplat::planner::{
    capture_time, coverage_stats, generate_schedule, sample_count, solve_budget, CameraRig, PlannerConfig, Sampling,
    Strategy,
};
use spinsplat::reference::{generate_dataset, SyntheticScene};
use spinsplat::relight::{combine_rotations, distill_sh, parse_angle, CombinationSpec, ThetaRange};
use spinsplat::scene::{CameraPose, EnvLight};
use spinsplat::train::{evaluate, log_csv, train, InitSource, Mode, TrainConfig, TrainedModel};

#[derive(Parser)]
#[command(name = "spinsplat", version, about = "Turntable capture planning and rotation-conditioned splatting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a capture schedule and report its time, frame count and coverage.
    Plan(PlanArgs),
    /// Render a planned schedule of the built-in scene into a dataset.
    Gen(GenArgs),
    /// Fit a model to a dataset.
    Train(TrainArgs),
    /// Render a checkpoint from the cameras of a manifest.
    Render(RenderArgs),
    /// Masked PSNR of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Freeze a conditional model at one light rotation into SH colors.
    Distill(DistillArgs),
    /// Render a weighted combination of light rotations.
    Combine(CombineArgs),
    /// Swing-angle sweep under a fixed capture-time budget.
    Sweep(SweepArgs),
    /// Swing-angle sweep repeated per light-smoothness level.
    BlurSweep(BlurSweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Static,
    Rotating,
    Swing,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Conditional,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Studio,
    Constant,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    /// Surface samples of the built-in scene when the dataset came from it,
    /// otherwise a random ball.
    Auto,
    Surface,
    Ball,
}

fn angle(s: &str) -> Result<f64, String> {
    parse_angle(s).map_err(|e| e.to_string())
}

fn angle_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| angle(t.trim())).collect()
}

fn beta(s: &str) -> Result<f64, String> {
    let b = match s.trim() {
        "inf" | "infinity" => f64::INFINITY,
        v => v.parse::<f64>().map_err(|e| format!("{v}: {e}"))?,
    };
    if b.is_nan() || b < 0.0 {
        return Err(format!("{s}: smoothness must be non-negative"));
    }
    Ok(b)
}

fn beta_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(beta).collect()
}

fn seed_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(',').map(|t| t.trim().parse::<u64>().map_err(|e| format!("{t}: {e}"))).collect()
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Swing angle, e.g. `0.2pi` (swing only).
    #[arg(long, value_parser = angle)]
    s: Option<f64>,
    /// Camera positions; solved from --budget when omitted.
    #[arg(long = "M")]
    cameras: Option<usize>,
    /// Frames per camera position.
    #[arg(long = "N")]
    frames: Option<usize>,
    /// Frames per radian of turntable travel (used when --N is absent).
    #[arg(long = "n")]
    density: Option<f64>,
    /// Capture-time budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Turntable speed in rad/s.
    #[arg(long = "v", default_value_t = 0.2 * PI / 3.15)]
    speed: f64,
    /// Pause between camera positions in seconds.
    #[arg(long = "m", default_value_t = 3.0)]
    pause: f64,
    /// Swing over [-s/2, s/2] instead of [0, s].
    #[arg(long)]
    centered: bool,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    /// Coverage histogram bins per axis.
    #[arg(long, default_value_t = 36)]
    bins: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Schedule written by `plan`.
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long, value_enum, default_value = "studio")]
    env: EnvArg,
    /// Attenuate light band l by exp(-β l (l + 1)); `inf` keeps only DC.
    #[arg(long, value_parser = beta)]
    blur: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "conditional")]
    mode: ModeArg,
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 2000)]
    gaussians: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    sh_degree: usize,
    #[arg(long, default_value_t = 0.2)]
    lambda_ssim: f64,
    #[arg(long, value_enum, default_value = "auto")]
    init: InitArg,
    /// Ball radius for random initialization.
    #[arg(long, default_value_t = 1.5)]
    init_radius: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest supplying the cameras.
    #[arg(long)]
    data: PathBuf,
    /// Light rotation; defaults to each entry's own.
    #[arg(long, value_parser = angle)]
    theta: Option<f64>,
    /// Render only this entry.
    #[arg(long)]
    entry: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Per-image CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = angle)]
    theta: f64,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Terms as `theta:r,g,b;theta:w`, e.g. `0:1;0.5pi:0.5,0.2,0.2`.
    #[arg(long)]
    spec: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    entry: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SweepShared {
    #[arg(long, value_parser = angle_list, default_value = "0,0.05pi,0.1pi,0.2pi,0.25pi,0.5pi,pi,2pi")]
    angles: std::vec::Vec<f64>,
    #[arg(long, default_value_t = 120.0)]
    budget: f64,
    #[arg(long = "v", default_value_t = 0.2 * PI / 3.15)]
    speed: f64,
    #[arg(long = "m", default_value_t = 3.0)]
    pause: f64,
    /// Frames per radian of travel.
    #[arg(long = "n", default_value_t = 7.0 / (0.2 * PI))]
    density: f64,
    /// Images per minute for the s = 0 row.
    #[arg(long, default_value_t = 25.0)]
    static_rate: f64,
    #[arg(long, default_value_t = 32)]
    res: u32,
    #[arg(long, default_value_t = 1500)]
    iterations: usize,
    #[arg(long, default_value_t = 800)]
    gaussians: usize,
    #[arg(long, value_parser = seed_list, default_value = "0")]
    seeds: std::vec::Vec<u64>,
    #[arg(long, default_value_t = 4)]
    test_cameras: usize,
    #[arg(long, default_value_t = 8)]
    test_thetas: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    shared: SweepShared,
}

#[derive(Args)]
struct BlurSweepArgs {
    #[command(flatten)]
    shared: SweepShared,
    /// Smoothness levels β; `inf` keeps only the DC band.
    #[arg(long, value_parser = beta_list, default_value = "0,0.05,inf")]
    betas: std::vec::Vec<f64>,
    /// PSNR spread in dB at or below which a level counts as flat.
    #[arg(long, default_value_t = FLAT_SPREAD_DB)]
    flat_spread: f64,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let strategy = match (a.strategy, a.s) {
        (StrategyArg::Static, _) => Strategy::Static,
        (StrategyArg::Rotating, _) => Strategy::Rotating,
        (StrategyArg::Swing, Some(s)) => Strategy::Swing(s),
        (StrategyArg::Swing, None) => bail!("swing needs --s"),
    };
    strategy.validate()?;
    let cameras = match (a.cameras, a.budget) {
        (Some(m), _) => m,
        (None, Some(b)) => solve_budget(b, strategy.swing_angle(), a.speed, a.pause)?,
        (None, None) => bail!("give --M or --budget"),
    };
    let sampling = match (a.frames, a.density, strategy) {
        (Some(n), _, _) => Sampling::Frames(n),
        (None, Some(d), _) => Sampling::Density(d),
        (None, None, Strategy::Static) => Sampling::Frames(1),
        (None, None, _) => Sampling::Density(7.0 / (0.2 * PI)),
    };
    let mut cfg = PlannerConfig::new(cameras, a.speed, a.pause, sampling);
    cfg.time_budget = a.budget;
    cfg.centered = a.centered;
    let t = capture_time(&cfg, strategy)?;
    let p = sample_count(&cfg, strategy);
    let rig = CameraRig::default().with_resolution(a.width, a.height);
    let schedule = generate_schedule(&cfg, strategy, &rig)?;
    let cov = coverage_stats(&schedule, a.bins, a.bins)?;

    std::fs::create_dir_all(&a.out)?;
    Manifest::from_schedule(&schedule).write(&a.out.join("schedule.json"))?;
    let rows: Vec<Vec<String>> = (0..a.bins)
        .flat_map(|v| (0..a.bins).map(move |th| (v, th)))
        .map(|(v, th)| vec![v.to_string(), th.to_string(), cov.count(v, th).to_string()])
        .collect();
    io::write_csv(&a.out.join("coverage.csv"), &["view_bin", "theta_bin", "count"], &rows)?;
    println!("T = {t:.3} s");
    println!("P = {p}");
    println!("M = {cameras}");
    println!(
        "coverage: {} of {} bins occupied, theta span {:.4} rad",
        cov.occupied,
        a.bins * a.bins,
        cov.theta_span
    );
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let manifest = Manifest::read(&a.schedule)?;
    let schedule = manifest.to_schedule()?;
    let mut env = match a.env {
        EnvArg::Studio => EnvLight::studio(),
        EnvArg::Constant => EnvLight::constant([1.0; 3]),
    };
    if let Some(beta) = a.blur {
        env = env.smoothed(beta);
    }
    let ds = generate_dataset(
        &SyntheticScene::tabletop(),
        &schedule,
        &env,
        (manifest.width, manifest.height),
    )?;
    let path = save_dataset(&a.out, &ds, manifest.pivot)?;
    println!("wrote {} frames to {}", ds.len(), path.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<(Checkpoint, TrainedModel)> {
    let c = load_checkpoint(path)?;
    let m = c.to_model()?;
    Ok((c, m))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let scene = SyntheticScene::tabletop();
    let init = match a.init {
        InitArg::Surface => InitSource::Surface(&scene),
        InitArg::Auto if ds.scene_hash == scene.hash() => InitSource::Surface(&scene),
        _ => InitSource::RandomBall { radius: a.init_radius },
    };
    let cfg = TrainConfig {
        iterations: a.iterations,
        gaussians: a.gaussians,
        seed: a.seed,
        hidden: a.hidden,
        sh_degree: a.sh_degree,
        lambda_ssim: a.lambda_ssim,
        ..TrainConfig::default()
    };
    let mode = match a.mode {
        ModeArg::Conditional => Mode::Conditional,
        ModeArg::Baseline => Mode::ShBaseline,
    };
    let model = train(&ds, init, &cfg, mode)?;
    std::fs::create_dir_all(&a.out)?;
    save_checkpoint(&a.out.join("checkpoint.json"), &Checkpoint::from_model(&model))?;
    write_text(&a.out.join("train_log.csv"), &log_csv(&model.log))?;
    if let Some(last) = model.log.last() {
        println!(
            "final loss {:.6} with {} Gaussians after {} iterations",
            last.loss, last.gaussians, a.iterations
        );
    }
    Ok(())
}

fn manifest_cameras(path: &Path) -> Result<Vec<(CameraPose, f64)>> {
    let schedule = Manifest::read(path)?.to_schedule()?;
    Ok(schedule
        .entries
        .into_iter()
        .map(|e| (e.object_frame_pose, e.light_rotation))
        .collect())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let (_, model) = load_model(&a.checkpoint)?;
    let cams = manifest_cameras(&a.data)?;
    let picked: Vec<usize> = match a.entry {
        Some(i) if i < cams.len() => vec![i],
        Some(i) => bail!("entry {i} out of range"),
        None => (0..cams.len()).collect(),
    };
    if let Some(t) = a.theta {
        if model.mode() == Mode::Conditional && !ThetaRange::from_angles(&model.trained_thetas).contains(t) {
            eprintln!("warning: extrapolation, theta {t} lies outside the trained range");
        }
    }
    std::fs::create_dir_all(&a.out)?;
    for i in picked {
        let (cam, own) = &cams[i];
        let img = model.render(cam, a.theta.unwrap_or(*own))?;
        io::write_png(&a.out.join(format!("render_{i:04}.png")), &img)?;
        io::write_pfm(&a.out.join(format!("render_{i:04}.pfm")), &img)?;
    }
    println!("rendered into {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (_, model) = load_model(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    let ev = evaluate(&model, &ds)?;
    if let Some(out) = &a.out {
        write_text(out, &ev.to_csv())?;
    }
    println!("mean PSNR {:.4} dB over {} images", ev.mean_psnr, ev.rows.len());
    Ok(())
}

fn cmd_distill(a: DistillArgs) -> Result<()> {
    let (_, model) = load_model(&a.checkpoint)?;
    if model.mode() != Mode::Conditional {
        bail!("distill needs a conditional checkpoint");
    }
    if !ThetaRange::from_angles(&model.trained_thetas).contains(a.theta) {
        eprintln!("warning: extrapolation, theta {} lies outside the trained range", a.theta);
    }
    let d = distill_sh(&model, a.theta, a.degree)?;
    let out = if a.out.extension().is_some() {
        a.out.clone()
    } else {
        std::fs::create_dir_all(&a.out)?;
        a.out.join("distilled.json")
    };
    save_checkpoint(&out, &Checkpoint::from_distilled(&model, &d))?;
    let rms = (d.residuals.iter().map(|r| r * r).sum::<f64>() / d.residuals.len().max(1) as f64).sqrt();
    println!("distilled degree {} at theta {}, rms residual {rms:.6}", a.degree, a.theta);
    Ok(())
}

fn cmd_combine(a: CombineArgs) -> Result<()> {
    let (_, model) = load_model(&a.checkpoint)?;
    let spec = CombinationSpec::parse(&a.spec)?;
    let cams = manifest_cameras(&a.data)?;
    let (cam, _) = cams
        .get(a.entry)
        .ok_or_else(|| anyhow::anyhow!("entry {} out of range", a.entry))?;
    let combined = combine_rotations(&model, &spec, cam)?;
    for w in &combined.warnings {
        eprintln!("warning: {w}");
    }
    let (png, pfm) = if a.out.extension().is_some() {
        (a.out.with_extension("png"), a.out.with_extension("pfm"))
    } else {
        std::fs::create_dir_all(&a.out)?;
        (a.out.join("combined.png"), a.out.join("combined.pfm"))
    };
    io::write_png(&png, &combined.image)?;
    io::write_pfm(&pfm, &combined.image)?;
    println!("wrote {}", png.display());
    Ok(())
}

fn sweep_config(a: &SweepShared) -> SweepConfig {
    let base = SweepConfig::default();
    SweepConfig {
        angles: a.angles.clone(),
        budget: a.budget,
        speed: a.speed,
        pause: a.pause,
        density: a.density,
        static_rate: a.static_rate,
        resolution: (a.res, a.res),
        train: TrainConfig {
            iterations: a.iterations,
            gaussians: a.gaussians,
            ..base.train.clone()
        },
        seeds: a.seeds.clone(),
        test_cameras: a.test_cameras,
        test_thetas: a.test_thetas,
        ..base
    }
}

fn print_row(r: &SweepRow) {
    match &r.error {
        None => println!(
            "s = {:.4}pi  M = {:3}  P = {:4}  static {:.3} dB  rotating {:.3} dB  ({:.1} s)",
            r.s / PI,
            r.cameras,
            r.samples,
            r.psnr_static,
            r.psnr_rotating,
            r.wall_time
        ),
        Some(e) => println!("s = {:.4}pi  failed: {e}", r.s / PI),
    }
}

fn fmt_best(s: Option<f64>) -> String {
    s.map_or("none".into(), |s| format!("{:.4}pi", s / PI))
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = sweep_config(&a.shared);
    let report = run_sweep(&cfg, print_row)?;
    write_text(&a.shared.out.join("sweep.csv"), &report.to_csv()?)?;
    println!(
        "best s: {} (static test), {} (rotating test)",
        fmt_best(report.argmax_static()),
        fmt_best(report.argmax_rotating())
    );
    Ok(())
}

fn cmd_blur_sweep(a: BlurSweepArgs) -> Result<()> {
    let cfg = sweep_config(&a.shared);
    let report = run_blur_sweep(&cfg, &a.betas, a.flat_spread, |beta, r| {
        print!("beta = {beta}  ");
        print_row(r)
    })?;
    for (i, level) in report.levels.iter().enumerate() {
        write_text(&a.shared.out.join(format!("sweep_level_{i}.csv")), &level.report.to_csv()?)?;
        println!(
            "beta = {}: best s {} (static), {} (rotating){}",
            level.beta,
            fmt_best(level.best_static),
            fmt_best(level.best_rotating),
            if level.flat { ", flat" } else { "" }
        );
    }
    write_text(&a.shared.out.join("blur_sweep.csv"), &report.to_csv()?)?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("SPINSPLAT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| anyhow::anyhow!("SPINSPLAT_THREADS={v} is not a count"))?;
    if n == 0 {
        bail!("SPINSPLAT_THREADS must be at least 1");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    if n == 1 {
        spinsplat::par::set_sequential(true);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Distill(a) => cmd_distill(a),
        Command::Combine(a) => cmd_combine(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::BlurSweep(a) => cmd_blur_sweep(a),
    }
}

/// 0 ok, 1 usage, 2 schema, 3 numeric.
fn exit_code(err: &anyhow::Error) -> u8 {
    use spinsplat::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::Schema(_) | E::Json(_) | E::Png(_)) => 2,
        Some(E::Divergence(_) | E::Singular(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
