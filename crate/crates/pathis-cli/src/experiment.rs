//! Sweep harness: runs every phantom x method x span cell, writes one
//! reconstruction per cell plus aggregate `results.csv` / `timing.csv`
//! tables ordered (sample, method, span).
//!
//! Data is simulated once per (phantom, span) and shared by all methods.
//! With the default fdtd source, reconstruction inverts an operator whose
//! discretization differs from the simulator's, so the sweep never commits
//! the inverse crime of inverting its own forward model.

use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use pathis::error::{Error, Result};
use pathis::forward::ForwardOperator;
use pathis::geometry::{
    default_time_config, make_grid, make_sensor_arc, ImagingGrid, SensorArray, TimeConfig,
};
use pathis::image::{Image, SensorData};
use pathis::metrics::{psnr_db, ssim};
use pathis::phantoms::{generate, PhantomKind, PhantomSpec};
use pathis::recon::{
    reconstruct_his, reconstruct_mb, reconstruct_ubp, time_reversal, write_train_log, GainMode,
    HisConfig, MbConfig,
};
use pathis::io;
use pathis::rng::Rng;
use pathis::wave::{fdtd_forward, FdtdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ubp,
    Tr,
    Mb,
    His,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Ubp => "ubp",
            Method::Tr => "tr",
            Method::Mb => "mb",
            Method::His => "his",
        }
    }

    fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ubp" => Ok(Method::Ubp),
            "tr" => Ok(Method::Tr),
            "mb" => Ok(Method::Mb),
            "his" => Ok(Method::His),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Fdtd,
    Analytic,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub extent_m: f64,
    pub sensors: usize,
    pub radius_m: f64,
    pub center_deg: f64,
    pub c_mps: f64,
    pub spans_deg: Vec<f64>,
    pub methods: Vec<Method>,
    pub source: Source,
    pub seed: u64,
    /// Gaussian trace noise relative to the peak amplitude; 0 disables.
    pub noise: f64,
    pub phantoms: Vec<PhantomSpec>,
    pub his: HisConfig,
    /// None resolves to off: simulated amplitudes already sit in operator
    /// units, and auto gain can sign-lock on a bad early epoch.
    pub his_gain: Option<GainMode>,
    pub mb: MbConfig,
    pub fdtd: FdtdConfig,
    pub clip_negative: bool,
}

impl ExperimentConfig {
    fn with_preset(paper: bool, cli_seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            n: if paper { 440 } else { 64 },
            extent_m: 0.05,
            sensors: if paper { 512 } else { 128 },
            radius_m: 0.022,
            center_deg: 90.0,
            c_mps: 1500.0,
            spans_deg: vec![360.0, 180.0, 120.0, 90.0, 70.0],
            methods: vec![Method::Ubp, Method::Tr, Method::Mb, Method::His],
            source: Source::Fdtd,
            seed: cli_seed,
            noise: 0.0,
            phantoms: Vec::new(),
            his: HisConfig {
                epochs: if paper { 10000 } else { 2000 },
                // short desk runs need the faster schedule; the paper-scale
                // preset keeps the slower long-run rate
                lr: if paper { 1e-4 } else { 1e-3 },
                ..HisConfig::default()
            },
            his_gain: None,
            // eps well above the recon default so the TV term's Lipschitz
            // bound 8 lambda / eps does not collapse the step size
            mb: MbConfig {
                lambda: 1e-2,
                eps_tv: 1e-3,
                iters: 1000,
                ..MbConfig::default()
            },
            fdtd: FdtdConfig::default(),
            clip_negative: true,
        }
    }

    /// Parse a "key = value" file; '#' starts a comment, blank lines are
    /// skipped, `phantom` may repeat. Keys and accepted values are listed
    /// in the README.
    pub fn from_file(path: &Path, cli_seed: u64) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }

        let paper = pairs
            .iter()
            .filter(|(k, _)| k == "preset")
            .try_fold(false, |_, (_, v)| match v.as_str() {
                "desk" => Ok(false),
                "paper" => Ok(true),
                other => Err(Error::Parse(format!("unknown preset '{other}'"))),
            })?;
        let mut cfg = ExperimentConfig::with_preset(paper, cli_seed);

        for (key, value) in &pairs {
            cfg.apply(key, value)?;
        }
        if cfg.phantoms.is_empty() {
            return Err(Error::Config("config lists no phantoms".into()));
        }
        if cfg.methods.is_empty() {
            return Err(Error::Config("config lists no methods".into()));
        }
        if cfg.spans_deg.is_empty() {
            return Err(Error::Config("config lists no spans".into()));
        }
        for &s in &cfg.spans_deg {
            if !(s > 0.0 && s <= 360.0) {
                return Err(Error::Config(format!(
                    "span {s} degrees is outside (0, 360]"
                )));
            }
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Parse(format!("bad value '{value}' for {key}")))
        }
        match key {
            "preset" => {} // handled in the first pass
            "n" => self.n = num(key, value)?,
            "extent" => self.extent_m = num(key, value)?,
            "sensors" => self.sensors = num(key, value)?,
            "radius" => self.radius_m = num(key, value)?,
            "center" => self.center_deg = num(key, value)?,
            "c" => self.c_mps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "clip" => self.clip_negative = num(key, value)?,
            "spans" => {
                self.spans_deg = value
                    .split(',')
                    .map(|s| num("spans", s.trim()))
                    .collect::<Result<_>>()?;
            }
            "methods" => {
                self.methods = value.split(',').map(Method::parse).collect::<Result<_>>()?;
            }
            "source" => {
                self.source = match value {
                    "fdtd" => Source::Fdtd,
                    "analytic" => Source::Analytic,
                    other => return Err(Error::Parse(format!("unknown source '{other}'"))),
                };
            }
            "phantom" => {
                // "<kind> <seed> [complexity]"
                let mut parts = value.split_whitespace();
                let kind: PhantomKind = parts
                    .next()
                    .ok_or_else(|| Error::Parse("phantom needs a kind".into()))?
                    .parse()?;
                let seed = num("phantom seed", parts.next().unwrap_or("0"))?;
                let complexity = num("phantom complexity", parts.next().unwrap_or("3"))?;
                self.phantoms.push(PhantomSpec {
                    kind,
                    n: 0, // resolved against the grid when the sweep runs
                    extent_m: 0.0,
                    seed,
                    complexity,
                });
            }
            "his.epochs" => self.his.epochs = num(key, value)?,
            "his.lr" => self.his.lr = num(key, value)?,
            "his.l" => self.his.l = num(key, value)?,
            "his.sigma" => self.his.sigma = num(key, value)?,
            "his.gain" => {
                self.his_gain = Some(match value {
                    "off" => GainMode::Off,
                    "auto" => GainMode::Auto,
                    other => return Err(Error::Parse(format!("unknown gain '{other}'"))),
                });
            }
            "mb.lambda" => self.mb.lambda = num(key, value)?,
            "mb.eps" => self.mb.eps_tv = num(key, value)?,
            "mb.iters" => self.mb.iters = num(key, value)?,
            "mb.safety" => self.mb.step_safety = num(key, value)?,
            "tr.pad" => self.fdtd.pad_cells = num(key, value)?,
            "tr.sponge" => self.fdtd.sponge_cells = num(key, value)?,
            "tr.alpha" => self.fdtd.sponge_alpha = num(key, value)?,
            "tr.cfl" => self.fdtd.cfl = num(key, value)?,
            "tr.smooth" => self.fdtd.smooth_passes = num(key, value)?,
            other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    fn resolved_gain(&self) -> GainMode {
        self.his_gain.unwrap_or(GainMode::Off)
    }
}

// ---------- sweep execution ----------

struct Cell {
    sample: usize,
    method: Method,
    span_idx: usize,
}

struct CellOutcome {
    psnr: String,
    ssim: String,
    seconds: f64,
}

struct SweepContext<'a> {
    cfg: &'a ExperimentConfig,
    grid: ImagingGrid,
    time: TimeConfig,
    arcs: Vec<SensorArray>,
    phantoms: Vec<(String, Image)>,
    data: Vec<Vec<SensorData>>, // [sample][span]
    out_dir: &'a Path,
    deterministic: bool,
}

fn fmt_span(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{}", s as i64)
    } else {
        format!("{s}")
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    grid: &ImagingGrid,
    phantom: &Image,
    arc: &SensorArray,
    time: &TimeConfig,
    sample: usize,
    span_idx: usize,
) -> Result<SensorData> {
    let mut y = match cfg.source {
        Source::Fdtd => {
            let sim = FdtdConfig {
                c_mps: cfg.c_mps,
                ..cfg.fdtd
            };
            fdtd_forward(phantom, arc, time, &sim)?
        }
        Source::Analytic => {
            let op = ForwardOperator::new(grid.clone(), arc.clone(), time.clone(), cfg.c_mps)?;
            op.forward(phantom)?
        }
    };
    if cfg.noise > 0.0 {
        let peak = y.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sd = cfg.noise * peak;
        // one stream per (sample, span); splitmix scrambles linear seeds
        let mut rng = Rng::new(
            cfg.seed
                .wrapping_add(1_000_003u64.wrapping_mul(sample as u64))
                .wrapping_add(101 + span_idx as u64),
        );
        for v in y.values.iter_mut() {
            *v += sd * rng.next_normal();
        }
    }
    Ok(y)
}

fn run_cell(ctx: &SweepContext, cell: &Cell) -> CellOutcome {
    let cfg = ctx.cfg;
    let span = cfg.spans_deg[cell.span_idx];
    let arc = &ctx.arcs[cell.span_idx];
    let y = &ctx.data[cell.sample][cell.span_idx];
    let (sample_name, truth) = &ctx.phantoms[cell.sample];
    let stem = format!("{}_{}_{}", sample_name, cell.method.name(), fmt_span(span));

    let t0 = Instant::now();
    let outcome = (|| -> Result<Image> {
        match cell.method {
            Method::Ubp => {
                reconstruct_ubp(y, &ctx.grid, arc, &ctx.time, cfg.clip_negative)
            }
            Method::Tr => {
                let sim = FdtdConfig {
                    c_mps: cfg.c_mps,
                    ..cfg.fdtd
                };
                time_reversal(y, &ctx.grid, arc, &sim, cfg.clip_negative)
            }
            Method::Mb => {
                let op = ForwardOperator::new(
                    ctx.grid.clone(),
                    arc.clone(),
                    ctx.time.clone(),
                    cfg.c_mps,
                )?;
                Ok(reconstruct_mb(y, &op, &cfg.mb)?.image)
            }
            Method::His => {
                let op = ForwardOperator::new(
                    ctx.grid.clone(),
                    arc.clone(),
                    ctx.time.clone(),
                    cfg.c_mps,
                )?;
                let his = HisConfig {
                    seed: cfg.seed,
                    gain_mode: cfg.resolved_gain(),
                    ..cfg.his
                };
                let (image, mut log) = reconstruct_his(y, &op, &his)?;
                if ctx.deterministic {
                    for s in log.seconds.iter_mut() {
                        *s = 0.0;
                    }
                }
                write_train_log(&ctx.out_dir.join(format!("{stem}_log.csv")), &log)?;
                Ok(image)
            }
        }
    })()
    .and_then(|image| {
        io::write_image(&ctx.out_dir.join(format!("{stem}.paf")), &image)?;
        let p = psnr_db(&image, truth)?;
        let s = ssim(&image, truth)?;
        Ok((p, s))
    });
    let seconds = t0.elapsed().as_secs_f64();
    match outcome {
        Ok((p, s)) => CellOutcome {
            psnr: format!("{p}"),
            ssim: format!("{s}"),
            seconds,
        },
        Err(e) => {
            eprintln!("cell {stem} failed: {e}");
            CellOutcome {
                psnr: "error".into(),
                ssim: "error".into(),
                seconds,
            }
        }
    }
}

fn run_cells(ctx: &SweepContext, cells: &[Cell], jobs: usize) -> Vec<CellOutcome> {
    if jobs <= 1 {
        return cells.iter().map(|c| run_cell(ctx, c)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<CellOutcome>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let out = run_cell(ctx, &cells[i]);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("cell completed"))
        .collect()
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
    deterministic: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let grid = make_grid(cfg.n, cfg.extent_m)?;
    let time = default_time_config(&grid, cfg.radius_m, cfg.c_mps)?;
    let arcs: Vec<SensorArray> = cfg
        .spans_deg
        .iter()
        .map(|&s| make_sensor_arc(cfg.sensors, cfg.radius_m, s, cfg.center_deg))
        .collect::<Result<_>>()?;

    let mut phantoms = Vec::new();
    for (i, spec) in cfg.phantoms.iter().enumerate() {
        let resolved = PhantomSpec {
            n: cfg.n,
            extent_m: cfg.extent_m,
            ..*spec
        };
        let image = generate(&resolved)?;
        let name = format!("{}-{}", i, spec.kind);
        io::write_image(&out_dir.join(format!("{name}_truth.paf")), &image)?;
        phantoms.push((name, image));
    }

    let mut data = Vec::new();
    for (si, (_, phantom)) in phantoms.iter().enumerate() {
        let mut per_span = Vec::new();
        for (wi, arc) in arcs.iter().enumerate() {
            per_span.push(simulate(cfg, &grid, phantom, arc, &time, si, wi)?);
        }
        data.push(per_span);
    }

    let ctx = SweepContext {
        cfg,
        grid,
        time,
        arcs,
        phantoms,
        data,
        out_dir,
        deterministic,
    };

    let mut cells = Vec::new();
    for sample in 0..ctx.phantoms.len() {
        for &method in &cfg.methods {
            for span_idx in 0..cfg.spans_deg.len() {
                cells.push(Cell {
                    sample,
                    method,
                    span_idx,
                });
            }
        }
    }
    let outcomes = run_cells(&ctx, &cells, jobs);

    let mut results = std::io::BufWriter::new(std::fs::File::create(
        out_dir.join("results.csv"),
    )?);
    let mut timing = std::io::BufWriter::new(std::fs::File::create(
        out_dir.join("timing.csv"),
    )?);
    writeln!(results, "sample,method,span_deg,psnr_db,ssim")?;
    writeln!(timing, "sample,method,span_deg,seconds")?;
    for (cell, out) in cells.iter().zip(&outcomes) {
        let sample = &ctx.phantoms[cell.sample].0;
        let span = fmt_span(cfg.spans_deg[cell.span_idx]);
        writeln!(
            results,
            "{},{},{},{},{}",
            sample,
            cell.method.name(),
            span,
            out.psnr,
            out.ssim
        )?;
        let secs = if deterministic {
            "0".to_string()
        } else {
            format!("{}", out.seconds)
        };
        writeln!(timing, "{},{},{},{}", sample, cell.method.name(), span, secs)?;
    }
    results.flush()?;
    timing.flush()?;
    Ok(())
}

// ---------- tests ----------
