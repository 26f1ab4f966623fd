//! Command-line surface: phantom generation, trace simulation,
//! reconstruction, image metrics, format conversion, and the sweep harness
//! that produces method-by-span result tables.

mod experiment;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pathis::error::Error;
use pathis::forward::ForwardOperator;
use pathis::geometry::{default_time_config, make_grid, make_sensor_arc, TimeConfig};
use pathis::image::SensorData;
use pathis::phantoms::{generate, from_file, PhantomKind, PhantomSpec};
use pathis::recon::{
    reconstruct_his, reconstruct_mb, reconstruct_ubp, time_reversal, write_train_log, GainMode,
    HisConfig, MbConfig,
};
use pathis::rng::Rng;
use pathis::wave::{fdtd_forward, FdtdConfig};
use pathis::{exec, io, metrics};

#[derive(Parser)]
#[command(name = "pathis", version, about = "Limited-view photoacoustic tomography toolkit")]
struct Cli {
    /// Zero every wall-time column in outputs so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads: 1 forces sequential loops, 0 or absent keeps the
    /// default pool. Results are identical for every setting.
    #[arg(long, global = true, env = "PATHIS_THREADS")]
    threads: Option<usize>,
    /// Seed for every stochastic choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural phantom image (.paf or .pgm by extension).
    Phantom(PhantomArgs),
    /// Record sensor traces from a phantom image.
    Simulate(SimulateArgs),
    /// Reconstruct an image from recorded traces.
    Recon(ReconArgs),
    /// Print "psnr_db,ssim" for two images as one CSV row on stdout.
    Metrics(MetricsArgs),
    /// Convert between .paf and .pgm image files.
    Convert(ConvertArgs),
    /// Run a phantom x method x span sweep described by a config file.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Geometric,
    Disks,
    Vascular,
}

impl From<KindArg> for PhantomKind {
    fn from(k: KindArg) -> PhantomKind {
        match k {
            KindArg::Geometric => PhantomKind::Geometric,
            KindArg::Disks => PhantomKind::Disks,
            KindArg::Vascular => PhantomKind::Vascular,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    /// Leapfrog wave simulation; discretization independent of the
    /// reconstruction operator.
    Fdtd,
    /// The analytic range operator itself (inverse crime; for diagnostics).
    Analytic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Ubp,
    Tr,
    Mb,
    His,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GainArg {
    Off,
    Auto,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    /// 64 px grid, 128 sensors, 2000 training epochs.
    Desk,
    /// 440 px grid, 512 sensors, 10000 training epochs.
    Paper,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Geometric)]
    kind: KindArg,
    /// Pixels per side.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Physical side length in meters.
    #[arg(long, default_value_t = 0.05)]
    extent: f64,
    /// Shape or branching count.
    #[arg(long, default_value_t = 3)]
    complexity: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Phantom image (.paf keeps its stored extent; .pgm uses --extent).
    #[arg(long)]
    phantom: PathBuf,
    /// Sensor count on the arc.
    #[arg(long, default_value_t = 128)]
    sensors: usize,
    /// Arc coverage in degrees, in (0, 360].
    #[arg(long, default_value_t = 360.0)]
    span: f64,
    /// Arc midpoint bearing in degrees, counterclockwise from +x.
    #[arg(long, default_value_t = 90.0)]
    center: f64,
    /// Sensor circle radius in meters.
    #[arg(long, default_value_t = 0.022)]
    radius: f64,
    /// Speed of sound in m/s.
    #[arg(long, default_value_t = 1500.0)]
    c: f64,
    #[arg(long, value_enum, default_value_t = SourceArg::Fdtd)]
    source: SourceArg,
    /// Gaussian noise level relative to the peak trace amplitude.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Extent in meters used when the phantom is a .pgm file.
    #[arg(long, default_value_t = 0.05)]
    extent: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconArgs {
    /// Recorded traces (.psd). The sensor count and time axis come from
    /// this file; the flags below describe the acquisition geometry.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    preset: PresetArg,
    /// Output grid side in pixels (preset default if omitted).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    extent: f64,
    #[arg(long, default_value_t = 0.022)]
    radius: f64,
    #[arg(long, default_value_t = 360.0)]
    span: f64,
    #[arg(long, default_value_t = 90.0)]
    center: f64,
    /// Training epochs (his).
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate (his).
    #[arg(long)]
    lr: Option<f64>,
    /// Fourier feature count (his).
    #[arg(long)]
    features: Option<usize>,
    /// Encoding frequency scale (his).
    #[arg(long)]
    sigma: Option<f64>,
    /// Residual gain handling (his); use auto for fdtd-sourced data.
    #[arg(long, value_enum, default_value_t = GainArg::Off)]
    gain: GainArg,
    /// TV weight (mb).
    #[arg(long)]
    lambda: Option<f64>,
    /// Iteration count (mb).
    #[arg(long)]
    iters: Option<usize>,
    /// Absorbing padding in cells (tr).
    #[arg(long)]
    pad: Option<usize>,
    /// Keep negative pixel values (ubp, tr).
    #[arg(long)]
    no_clip: bool,
    /// Per-epoch training log CSV (his).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Extent in meters assumed for .pgm inputs.
    #[arg(long, default_value_t = 0.05)]
    extent: f64,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Extent in meters assumed when the input is a .pgm file.
    #[arg(long, default_value_t = 0.05)]
    extent: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Sweep description file ("key = value" lines; see README).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reconstructions, logs, and CSV tables.
    #[arg(long)]
    out: PathBuf,
    /// Concurrent sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    exec::configure_threads(cli.threads.unwrap_or(0));
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Phantom(a) => cmd_phantom(a, cli.seed),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Recon(a) => cmd_recon(a, cli.seed, cli.deterministic),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Experiment(a) => {
            let cfg = experiment::ExperimentConfig::from_file(&a.config, cli.seed)?;
            experiment::run_experiment(&cfg, &a.out, a.jobs, cli.deterministic)
        }
    }
}

fn extension_of(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn write_image_by_extension(path: &Path, image: &pathis::image::Image) -> Result<(), Error> {
    match extension_of(path).as_str() {
        "pgm" => io::write_pgm(path, image),
        _ => io::write_image(path, image),
    }
}

fn cmd_phantom(a: PhantomArgs, seed: u64) -> Result<(), Error> {
    let spec = PhantomSpec {
        kind: a.kind.into(),
        n: a.n,
        extent_m: a.extent,
        seed,
        complexity: a.complexity,
    };
    let image = generate(&spec)?;
    write_image_by_extension(&a.out, &image)
}

fn add_trace_noise(y: &mut SensorData, level: f64, seed: u64) {
    if level <= 0.0 {
        return;
    }
    let peak = y.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sd = level * peak;
    let mut rng = Rng::new(seed);
    for v in y.values.iter_mut() {
        *v += sd * rng.next_normal();
    }
}

fn cmd_simulate(a: SimulateArgs, seed: u64) -> Result<(), Error> {
    let phantom = from_file(&a.phantom, a.extent)?;
    let sensors = make_sensor_arc(a.sensors, a.radius, a.span, a.center)?;
    let time = default_time_config(&phantom.grid, a.radius, a.c)?;
    let mut y = match a.source {
        SourceArg::Fdtd => {
            let cfg = FdtdConfig {
                c_mps: a.c,
                ..FdtdConfig::default()
            };
            fdtd_forward(&phantom, &sensors, &time, &cfg)?
        }
        SourceArg::Analytic => {
            let op = ForwardOperator::new(phantom.grid.clone(), sensors.clone(), time, a.c)?;
            op.forward(&phantom)?
        }
    };
    add_trace_noise(&mut y, a.noise, seed);
    io::write_sensor_data(&a.out, &y)
}

fn cmd_recon(a: ReconArgs, seed: u64, deterministic: bool) -> Result<(), Error> {
    let y = io::read_sensor_data(&a.data)?;
    let n = a.n.unwrap_or(match a.preset {
        PresetArg::Desk => 64,
        PresetArg::Paper => 440,
    });
    let grid = make_grid(n, a.extent)?;
    let sensors = make_sensor_arc(y.k, a.radius, a.span, a.center)?;
    // the data file fixes the time axis; geometry flags must describe the
    // acquisition that produced it
    let time = TimeConfig {
        dt_s: y.dt_s,
        m_samples: y.m,
    };
    let clip = !a.no_clip;
    let image = match a.method {
        MethodArg::Ubp => reconstruct_ubp(&y, &grid, &sensors, &time, clip)?,
        MethodArg::Tr => {
            let cfg = FdtdConfig {
                c_mps: y.c_mps,
                pad_cells: a.pad.unwrap_or(FdtdConfig::default().pad_cells),
                ..FdtdConfig::default()
            };
            time_reversal(&y, &grid, &sensors, &cfg, clip)?
        }
        MethodArg::Mb => {
            let op = ForwardOperator::new(grid, sensors, time, y.c_mps)?;
            let defaults = MbConfig::default();
            let cfg = MbConfig {
                lambda: a.lambda.unwrap_or(defaults.lambda),
                iters: a.iters.unwrap_or(defaults.iters),
                ..defaults
            };
            reconstruct_mb(&y, &op, &cfg)?.image
        }
        MethodArg::His => {
            let op = ForwardOperator::new(grid, sensors, time, y.c_mps)?;
            let defaults = HisConfig::default();
            // short desk runs use the faster schedule; paper scale keeps
            // the slower long-run rate
            let (preset_epochs, preset_lr) = match a.preset {
                PresetArg::Desk => (2000, 1e-3),
                PresetArg::Paper => (10000, defaults.lr),
            };
            let cfg = HisConfig {
                epochs: a.epochs.unwrap_or(preset_epochs),
                lr: a.lr.unwrap_or(preset_lr),
                l: a.features.unwrap_or(defaults.l),
                sigma: a.sigma.unwrap_or(defaults.sigma),
                seed,
                gain_mode: match a.gain {
                    GainArg::Off => GainMode::Off,
                    GainArg::Auto => GainMode::Auto,
                },
            };
            let (image, mut log) = reconstruct_his(&y, &op, &cfg)?;
            if let Some(path) = &a.log {
                if deterministic {
                    for s in log.seconds.iter_mut() {
                        *s = 0.0;
                    }
                }
                write_train_log(path, &log)?;
            }
            image
        }
    };
    write_image_by_extension(&a.out, &image)
}

fn cmd_metrics(a: MetricsArgs) -> Result<(), Error> {
    let ia = from_file(&a.a, a.extent)?;
    let ib = from_file(&a.b, a.extent)?;
    let psnr = metrics::psnr_db(&ia, &ib)?;
    let ssim = metrics::ssim(&ia, &ib)?;
    println!("psnr_db,ssim");
    println!("{psnr},{ssim}");
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> Result<(), Error> {
    let image = match extension_of(&a.input).as_str() {
        "paf" => io::read_image(&a.input)?,
        "pgm" => io::read_pgm(&a.input, a.extent)?,
        other => {
            return Err(Error::Parse(format!(
                "cannot read image extension '{other}' (expected paf or pgm)"
            )))
        }
    };
    write_image_by_extension(&a.out, &image)
}
