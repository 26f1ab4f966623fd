//! Reconstruction drivers: filtered back-projection, iterative model-based
//! with a smoothed total-variation prior, and self-supervised neural-field
//! training through the range operator. Time reversal is the fourth driver
//! and lives in `wave`; it is re-exported here.
//!
//! All drivers are deterministic given their config and seed. Orchestration
//! is single-threaded; parallelism comes from the operator and MLP kernels.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exec;
use crate::forward::{operator_norm_estimate, ForwardOperator};
use crate::geometry::{ImagingGrid, SensorArray, TimeConfig};
use crate::image::{Image, SensorData};
use crate::inr::{
    adam_step, mlp_backward, mlp_forward, AdamConfig, AdamState, FourierEncoding, MlpParams,
    TrainLog,
};
use crate::rng::Rng;

pub use crate::wave::time_reversal;

// pixels per parallel work unit in the back-projection gather
const PIXEL_CHUNK: usize = 1024;

// power-iteration budget for the model-based step size; the Rayleigh
// estimate is monotone from below, and the safety factor absorbs the gap
const NORM_ITERS: usize = 30;
const NORM_SEED: u64 = 0;

fn check_metadata(y: &SensorData, k: usize, time: &TimeConfig, c_mps: f64) -> Result<()> {
    if y.k != k || y.m != time.m_samples {
        return Err(Error::DimensionMismatch(format!(
            "sensor data is {} x {}, geometry expects {} x {}",
            y.k, y.m, k, time.m_samples
        )));
    }
    if y.dt_s != time.dt_s {
        return Err(Error::Config(format!(
            "data sampled at dt = {} s, geometry expects {} s",
            y.dt_s, time.dt_s
        )));
    }
    if y.c_mps != c_mps {
        return Err(Error::Config(format!(
            "data recorded at c = {} m/s, reconstruction assumes {} m/s",
            y.c_mps, c_mps
        )));
    }
    Ok(())
}

// ---------- universal back-projection ----------

/// Filtered back-projection: each trace is turned into
/// b[s] = 2 y[s] - 2 t_s dy/dt[s] and spread back over the sampling
/// circles. The derivative uses the forward module's stencil over t_s = s dt,
/// so dt cancels and b is computed sample-index-wise. Negative pixels are
/// clipped unless `clip_negative` is false.
pub fn reconstruct_ubp(
    y: &SensorData,
    grid: &ImagingGrid,
    sensors: &SensorArray,
    time: &TimeConfig,
    clip_negative: bool,
) -> Result<Image> {
    check_metadata(y, sensors.len(), time, y.c_mps)?;
    let m = y.m;
    let k = y.k;
    if m < 2 {
        return Err(Error::Config(format!(
            "back-projection needs at least 2 samples, got {m}"
        )));
    }

    let mut b = vec![0.0; k * m];
    exec::for_each_chunk_mut(&mut b, m, |sensor, row| {
        let t = y.trace(sensor);
        row[0] = 2.0 * t[0];
        for s in 1..m - 1 {
            row[s] = 2.0 * t[s] - s as f64 * (t[s + 1] - t[s - 1]);
        }
        row[m - 1] = 2.0 * t[m - 1] - 2.0 * (m - 1) as f64 * (t[m - 1] - t[m - 2]);
    });

    let mut img = Image::zeros(grid.clone());
    let n = grid.n;
    let h = grid.h_m;
    let half = (n - 1) as f64 / 2.0;
    let inv_cdt = 1.0 / (y.c_mps * y.dt_s);
    let inv_k = 1.0 / k as f64;
    let positions = &sensors.positions_m;
    let b = b.as_slice();
    exec::for_each_chunk_mut(&mut img.values, PIXEL_CHUNK, |ci, chunk| {
        let base = ci * PIXEL_CHUNK;
        for (o, out) in chunk.iter_mut().enumerate() {
            let j = base + o;
            let px = ((j % n) as f64 - half) * h;
            let py = ((j / n) as f64 - half) * h;
            let mut acc = 0.0;
            for (i, &(sx, sy)) in positions.iter().enumerate() {
                let dx = px - sx;
                let dy = py - sy;
                let u = (dx * dx + dy * dy).sqrt() * inv_cdt;
                let m0 = u as usize;
                if m0 + 1 < m {
                    let w = u - m0 as f64;
                    let row = &b[i * m..(i + 1) * m];
                    acc += (1.0 - w) * row[m0] + w * row[m0 + 1];
                }
            }
            acc *= inv_k;
            *out = if clip_negative && acc < 0.0 { 0.0 } else { acc };
        }
    });
    Ok(img)
}

// ---------- model-based iterative ----------

#[derive(Debug, Clone, Copy)]
pub struct MbConfig {
    /// Total-variation weight.
    pub lambda: f64,
    /// TV smoothing radius; keeps the prior differentiable at flat pixels.
    pub eps_tv: f64,
    pub iters: usize,
    /// Fraction of the inverse Lipschitz bound used as the step size.
    pub step_safety: f64,
}

impl Default for MbConfig {
    fn default() -> Self {
        MbConfig {
            lambda: 1e-3,
            eps_tv: 1e-6,
            iters: 200,
            step_safety: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MbResult {
    pub image: Image,
    /// ||Ax - y||^2 of every iterate; entry 0 is the zero start, so the
    /// length is iters + 1.
    pub fidelity: Vec<f64>,
}

/// Gradient of sum_j sqrt(dh^2 + dv^2 + eps^2) with forward differences
/// (zero difference at the far edges). Cheap relative to an operator
/// apply, so it runs sequentially.
fn tv_gradient(x: &[f64], n: usize, eps: f64) -> Vec<f64> {
    let mut rh = vec![0.0; n * n];
    let mut rv = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let j = iy * n + ix;
            let dh = if ix + 1 < n { x[j + 1] - x[j] } else { 0.0 };
            let dv = if iy + 1 < n { x[j + n] - x[j] } else { 0.0 };
            let s = (dh * dh + dv * dv + eps * eps).sqrt();
            rh[j] = dh / s;
            rv[j] = dv / s;
        }
    }
    let mut g = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let j = iy * n + ix;
            let mut v = -(rh[j] + rv[j]);
            if ix > 0 {
                v += rh[j - 1];
            }
            if iy > 0 {
                v += rv[j - n];
            }
            g[j] = v;
        }
    }
    g
}

/// Projected gradient descent on ||Ax - y||^2 + lambda TV_eps(x) from
/// x = 0, projecting onto the non-negative orthant each iteration. The
/// step is step_safety over the gradient's Lipschitz bound
/// 2 ||A||^2 + 8 lambda / eps, with ||A|| from seeded power iteration.
pub fn reconstruct_mb(y: &SensorData, op: &ForwardOperator, cfg: &MbConfig) -> Result<MbResult> {
    if cfg.lambda < 0.0 {
        return Err(Error::Config("TV weight must be non-negative".into()));
    }
    if cfg.iters == 0 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    if cfg.eps_tv <= 0.0 {
        return Err(Error::Config("TV smoothing must be positive".into()));
    }
    if cfg.step_safety <= 0.0 {
        return Err(Error::Config("step safety must be positive".into()));
    }
    check_metadata(y, op.sensors().len(), op.time(), op.c_mps())?;

    let est = operator_norm_estimate(op, NORM_ITERS, NORM_SEED)?;
    let lipschitz = 2.0 * est * est + 8.0 * cfg.lambda / cfg.eps_tv;
    if !lipschitz.is_finite() || lipschitz <= 0.0 {
        return Err(Error::Numeric(format!(
            "step-size bound {lipschitz} is unusable"
        )));
    }
    let eta = cfg.step_safety / lipschitz;

    let n = op.grid().n;
    let mut x = Image::zeros(op.grid().clone());
    let mut fidelity = Vec::with_capacity(cfg.iters + 1);
    let residual_fidelity = |r: &SensorData| r.values.iter().map(|v| v * v).sum::<f64>();
    for _ in 0..cfg.iters {
        let mut r = op.forward(&x)?;
        for (rv, yv) in r.values.iter_mut().zip(&y.values) {
            *rv -= yv;
        }
        let fid = residual_fidelity(&r);
        if !fid.is_finite() {
            return Err(Error::Numeric(format!("data fidelity became {fid}")));
        }
        fidelity.push(fid);
        for rv in r.values.iter_mut() {
            *rv *= 2.0;
        }
        let mut g = op.adjoint(&r)?;
        if cfg.lambda > 0.0 {
            let tvg = tv_gradient(&x.values, n, cfg.eps_tv);
            for (gv, tv) in g.values.iter_mut().zip(&tvg) {
                *gv += cfg.lambda * tv;
            }
        }
        for (xv, gv) in x.values.iter_mut().zip(&g.values) {
            *xv = (*xv - eta * *gv).max(0.0);
        }
    }
    let mut r = op.forward(&x)?;
    for (rv, yv) in r.values.iter_mut().zip(&y.values) {
        *rv -= yv;
    }
    fidelity.push(residual_fidelity(&r));
    Ok(MbResult {
        image: x,
        fidelity,
    })
}

// ---------- neural-field training ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// Residual is y_hat - y; matches data simulated in operator units.
    Off,
    /// Residual is alpha y_hat - y with the least-squares gain
    /// alpha = <y_hat, y> / <y_hat, y_hat> recomputed each epoch, for data
    /// whose amplitude units do not match the operator.
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct HisConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Fourier feature count; the MLP input width is 2l.
    pub l: usize,
    /// Frequency scale of the encoding.
    pub sigma: f64,
    pub seed: u64,
    pub gain_mode: GainMode,
}

impl Default for HisConfig {
    fn default() -> Self {
        HisConfig {
            epochs: 10000,
            lr: 1e-4,
            l: 128,
            sigma: 1.0,
            seed: 0,
            gain_mode: GainMode::Off,
        }
    }
}

/// Train a coordinate field f so that A f matches the measured traces in
/// mean square, full batch over all pixels. Encoding and weights are drawn
/// from one stream seeded with cfg.seed (encoding first), so a seed pins
/// the whole trajectory. Returns the image after the final update and the
/// per-epoch loss log.
pub fn reconstruct_his(
    y: &SensorData,
    op: &ForwardOperator,
    cfg: &HisConfig,
) -> Result<(Image, TrainLog)> {
    if cfg.epochs == 0 {
        return Err(Error::Config("training needs at least 1 epoch".into()));
    }
    if cfg.lr <= 0.0 {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    check_metadata(y, op.sensors().len(), op.time(), op.c_mps())?;
    let grid = op.grid().clone();
    let n = grid.n;

    // pixel centers normalized to [-1, 1]^2, in image storage order
    let mut coords = Vec::with_capacity(2 * n * n);
    for iy in 0..n {
        for ix in 0..n {
            let (cx, cy) = grid.normalized_center(ix, iy);
            coords.push(cx);
            coords.push(cy);
        }
    }
    let mut rng = Rng::new(cfg.seed);
    let enc = FourierEncoding::sample(cfg.l, cfg.sigma, &mut rng)?;
    let mut params = MlpParams::init_with(cfg.l, &mut rng)?;
    let features = enc.encode(&coords)?;

    let mut adam = AdamState::new(
        params.theta_len(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut log = TrainLog::default();
    let km = (y.k * y.m) as f64;
    let mut residual = y.clone();
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let (vals, cache) = mlp_forward(&params, &features)?;
        let field = Image {
            grid: grid.clone(),
            values: vals,
        };
        let pred = op.forward(&field)?;
        let alpha = match cfg.gain_mode {
            GainMode::Off => 1.0,
            GainMode::Auto => {
                let num: f64 = pred.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
                let den: f64 = pred.values.iter().map(|a| a * a).sum();
                if den == 0.0 {
                    1.0
                } else {
                    num / den
                }
            }
        };
        let mut loss = 0.0;
        for (rv, (pv, yv)) in residual
            .values
            .iter_mut()
            .zip(pred.values.iter().zip(&y.values))
        {
            *rv = alpha * pv - yv;
            loss += *rv * *rv;
        }
        loss /= km;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        // d loss / d field = A' (2 alpha r / km). The derivative through
        // alpha itself vanishes: alpha is the exact least-squares minimizer,
        // so d loss / d alpha = 0 at the point where it is evaluated.
        let scale = 2.0 * alpha / km;
        for rv in residual.values.iter_mut() {
            *rv *= scale;
        }
        let gimg = op.adjoint(&residual)?;
        let grads = mlp_backward(&params, &features, &cache, &gimg.values)?;
        adam_step(&mut adam, &mut params, &grads)?;
        log.loss.push(loss);
        log.seconds.push(t0.elapsed().as_secs_f64());
    }
    let (vals, _) = mlp_forward(&params, &features)?;
    Ok((
        Image {
            grid,
            values: vals,
        },
        log,
    ))
}

// ---------- training log output ----------

/// Write a log as CSV: header "epoch,loss,seconds", one row per epoch.
pub fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,loss,seconds")?;
    for (e, (loss, secs)) in log.loss.iter().zip(&log.seconds).enumerate() {
        writeln!(w, "{e},{loss},{secs}")?;
    }
    w.flush()?;
    Ok(())
}

// ---------- tests ----------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_time_config, make_grid, make_sensor_arc};
    use crate::wave::{fdtd_forward, FdtdConfig};

    const C: f64 = 1500.0;

    fn small_setup(n: usize, k: usize, span: f64) -> (ImagingGrid, SensorArray, TimeConfig) {
        let grid = make_grid(n, 0.05).unwrap();
        let sensors = make_sensor_arc(k, 0.022, span, 90.0).unwrap();
        let time = default_time_config(&grid, 0.022, C).unwrap();
        (grid, sensors, time)
    }

    fn random_data(sensors: &SensorArray, time: &TimeConfig, seed: u64) -> SensorData {
        let mut y = SensorData::zeros(sensors.len(), time.m_samples, time.dt_s, C);
        let mut rng = Rng::new(seed);
        for v in y.values.iter_mut() {
            *v = rng.range(-1.0, 1.0);
        }
        y
    }

    #[test]
    fn ubp_of_zero_data_is_the_zero_image() {
        let (grid, sensors, time) = small_setup(16, 8, 360.0);
        let y = SensorData::zeros(8, time.m_samples, time.dt_s, C);
        let img = reconstruct_ubp(&y, &grid, &sensors, &time, true).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ubp_is_linear_before_clipping() {
        let (grid, sensors, time) = small_setup(16, 8, 360.0);
        let y = random_data(&sensors, &time, 5);
        let mut y2 = y.clone();
        for v in y2.values.iter_mut() {
            *v *= 2.0; // power of two: scaling is exact in floating point
        }
        let a = reconstruct_ubp(&y, &grid, &sensors, &time, false).unwrap();
        let b = reconstruct_ubp(&y2, &grid, &sensors, &time, false).unwrap();
        for (av, bv) in a.values.iter().zip(&b.values) {
            assert_eq!(*bv, 2.0 * av);
        }
    }

    fn argmax_pixel(img: &Image, n: usize) -> (usize, usize) {
        let j = img
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        (j % n, j / n)
    }

    #[test]
    fn ubp_localizes_a_point_source_under_full_view() {
        let (grid, sensors, time) = small_setup(64, 128, 360.0);
        let op =
            ForwardOperator::new(grid.clone(), sensors.clone(), time.clone(), C).unwrap();
        let mut phantom = Image::zeros(grid.clone());
        let (ix, iy) = (40, 28);
        phantom.values[iy * 64 + ix] = 1.0;
        let y = op.forward(&phantom).unwrap();
        let img = reconstruct_ubp(&y, &grid, &sensors, &time, true).unwrap();
        let (mx, my) = argmax_pixel(&img, 64);
        assert!(
            mx.abs_diff(ix) <= 1 && my.abs_diff(iy) <= 1,
            "peak at ({mx}, {my}), source at ({ix}, {iy})"
        );
    }

    #[test]
    fn ubp_on_simulated_data_peaks_within_the_wavefront_ring() {
        // Simulated traces are N-waves: the filter term 2 t dy/dt is largest
        // at the descending zero crossing a few samples past arrival, so the
        // back-projection forms a ring a couple of pixels around the source
        // rather than a dot. Localization degrades to the ring radius.
        let (grid, sensors, time) = small_setup(64, 128, 360.0);
        let mut phantom = Image::zeros(grid.clone());
        let (ix, iy) = (40, 28);
        phantom.values[iy * 64 + ix] = 1.0;
        let y = fdtd_forward(&phantom, &sensors, &time, &FdtdConfig::default()).unwrap();
        let img = reconstruct_ubp(&y, &grid, &sensors, &time, true).unwrap();
        let (mx, my) = argmax_pixel(&img, 64);
        assert!(
            mx.abs_diff(ix) <= 3 && my.abs_diff(iy) <= 3,
            "peak at ({mx}, {my}), source at ({ix}, {iy})"
        );
    }

    #[test]
    fn ubp_rejects_mismatched_metadata() {
        let (grid, sensors, time) = small_setup(16, 8, 360.0);
        let y = SensorData::zeros(7, time.m_samples, time.dt_s, C);
        assert!(matches!(
            reconstruct_ubp(&y, &grid, &sensors, &time, true),
            Err(Error::DimensionMismatch(_))
        ));
        let y = SensorData::zeros(8, time.m_samples, time.dt_s * 2.0, C);
        assert!(matches!(
            reconstruct_ubp(&y, &grid, &sensors, &time, true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mb_defaults_are_the_documented_settings() {
        let cfg = MbConfig::default();
        assert_eq!(cfg.lambda, 1e-3);
        assert_eq!(cfg.eps_tv, 1e-6);
        assert_eq!(cfg.iters, 200);
        assert_eq!(cfg.step_safety, 0.9);
    }

    #[test]
    fn mb_of_zero_data_stays_at_zero() {
        let (grid, sensors, time) = small_setup(16, 8, 360.0);
        let op = ForwardOperator::new(grid, sensors, time, C).unwrap();
        let y = SensorData::zeros(8, op.time().m_samples, op.time().dt_s, C);
        let out = reconstruct_mb(&y, &op, &MbConfig::default()).unwrap();
        assert!(out.image.values.iter().all(|&v| v == 0.0));
        assert!(out.fidelity.iter().all(|&f| f == 0.0));
        assert_eq!(out.fidelity.len(), 201);
    }

    #[test]
    fn mb_without_prior_never_increases_fidelity() {
        let (grid, sensors, time) = small_setup(16, 16, 360.0);
        let op = ForwardOperator::new(grid.clone(), sensors, time, C).unwrap();
        // random non-negative target
        let mut x = Image::zeros(grid);
        let mut rng = Rng::new(2);
        for v in x.values.iter_mut() {
            *v = rng.range(0.0, 1.0);
        }
        let y = op.forward(&x).unwrap();
        let cfg = MbConfig {
            lambda: 0.0,
            ..MbConfig::default()
        };
        let out = reconstruct_mb(&y, &op, &cfg).unwrap();
        assert_eq!(out.fidelity.len(), cfg.iters + 1);
        for w in out.fidelity.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "fidelity rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn mb_without_prior_drops_fidelity_100x_when_run_to_convergence() {
        let (grid, sensors, time) = small_setup(16, 16, 360.0);
        let op = ForwardOperator::new(grid.clone(), sensors, time, C).unwrap();
        // smooth non-negative target, comfortably in range(A)
        let mut x = Image::zeros(grid);
        for iy in 0..16usize {
            for ix in 0..16usize {
                let dx = ix as f64 - 7.0;
                let dy = iy as f64 - 8.0;
                x.values[iy * 16 + ix] = (-(dx * dx + dy * dy) / 8.0).exp();
            }
        }
        let y = op.forward(&x).unwrap();
        let cfg = MbConfig {
            lambda: 0.0,
            iters: 1000,
            ..MbConfig::default()
        };
        let out = reconstruct_mb(&y, &op, &cfg).unwrap();
        let first = out.fidelity[0];
        let last = *out.fidelity.last().unwrap();
        assert!(
            last < first / 100.0,
            "fidelity only fell from {first} to {last}"
        );
    }

    #[test]
    fn mb_rejects_bad_config() {
        let (grid, sensors, time) = small_setup(16, 8, 360.0);
        let op = ForwardOperator::new(grid, sensors, time, C).unwrap();
        let y = SensorData::zeros(8, op.time().m_samples, op.time().dt_s, C);
        let bad = MbConfig {
            lambda: -1.0,
            ..MbConfig::default()
        };
        assert!(matches!(
            reconstruct_mb(&y, &op, &bad),
            Err(Error::Config(_))
        ));
        let bad = MbConfig {
            iters: 0,
            ..MbConfig::default()
        };
        assert!(matches!(
            reconstruct_mb(&y, &op, &bad),
            Err(Error::Config(_))
        ));
    }

    fn tiny_his_setup() -> (ForwardOperator, SensorData) {
        let (grid, sensors, time) = small_setup(16, 8, 360.0);
        let op = ForwardOperator::new(grid.clone(), sensors, time, C).unwrap();
        // target traces from a constant half-intensity image
        let mut x = Image::zeros(grid);
        for v in x.values.iter_mut() {
            *v = 0.5;
        }
        let y = op.forward(&x).unwrap();
        (op, y)
    }

    #[test]
    fn his_loss_decreases_over_fifty_epochs() {
        let (op, y) = tiny_his_setup();
        let cfg = HisConfig {
            epochs: 50,
            l: 16,
            seed: 3,
            ..HisConfig::default()
        };
        let (img, log) = reconstruct_his(&y, &op, &cfg).unwrap();
        assert_eq!(log.loss.len(), 50);
        assert!(log.loss.iter().all(|l| l.is_finite()));
        assert!(log.loss[49] < log.loss[0]);
        // window means: trailing 10% below leading 10%
        let lead: f64 = log.loss[..5].iter().sum::<f64>() / 5.0;
        let trail: f64 = log.loss[45..].iter().sum::<f64>() / 5.0;
        assert!(trail < lead, "trailing mean {trail} vs leading {lead}");
        assert!(img.values.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn his_matches_a_replayed_first_epoch() {
        let (op, y) = tiny_his_setup();
        let cfg = HisConfig {
            epochs: 1,
            l: 8,
            seed: 17,
            gain_mode: GainMode::Auto,
            ..HisConfig::default()
        };
        let (_, log) = reconstruct_his(&y, &op, &cfg).unwrap();

        // replay epoch 0 through the public pieces: same stream order
        let n = op.grid().n;
        let mut coords = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                coords.push(2.0 * ix as f64 / (n - 1) as f64 - 1.0);
                coords.push(2.0 * iy as f64 / (n - 1) as f64 - 1.0);
            }
        }
        let mut rng = Rng::new(17);
        let enc = FourierEncoding::sample(8, cfg.sigma, &mut rng).unwrap();
        let params = MlpParams::init_with(8, &mut rng).unwrap();
        let feats = enc.encode(&coords).unwrap();
        let (vals, _) = mlp_forward(&params, &feats).unwrap();
        let field = Image {
            grid: op.grid().clone(),
            values: vals,
        };
        let pred = op.forward(&field).unwrap();
        let num: f64 = pred.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
        let den: f64 = pred.values.iter().map(|a| a * a).sum();
        let alpha = num / den;
        let km = (y.k * y.m) as f64;
        let expected: f64 = pred
            .values
            .iter()
            .zip(&y.values)
            .map(|(p, v)| {
                let r = alpha * p - v;
                r * r
            })
            .sum::<f64>()
            / km;
        assert_eq!(log.loss[0], expected);
    }

    #[test]
    fn his_is_bitwise_reproducible_across_runs_and_execution_modes() {
        let (op, y) = tiny_his_setup();
        let cfg = HisConfig {
            epochs: 3,
            l: 8,
            seed: 9,
            ..HisConfig::default()
        };
        let (a, la) = reconstruct_his(&y, &op, &cfg).unwrap();
        let (b, lb) = reconstruct_his(&y, &op, &cfg).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(la.loss, lb.loss);
        exec::set_sequential(true);
        let (c, lc) = reconstruct_his(&y, &op, &cfg).unwrap();
        exec::set_sequential(false);
        assert_eq!(a.values, c.values);
        assert_eq!(la.loss, lc.loss);
    }

    #[test]
    fn his_defaults_echo_training_settings() {
        let cfg = HisConfig::default();
        assert_eq!(cfg.epochs, 10000);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.l, 128);
        assert_eq!(cfg.sigma, 1.0);
        assert_eq!(cfg.gain_mode, GainMode::Off);
    }

    #[test]
    fn his_reports_the_diverging_epoch() {
        let (op, mut y) = tiny_his_setup();
        y.values[0] = f64::INFINITY;
        let cfg = HisConfig {
            epochs: 5,
            l: 8,
            ..HisConfig::default()
        };
        match reconstruct_his(&y, &op, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn train_log_csv_has_header_and_one_row_per_epoch() {
        let log = TrainLog {
            loss: vec![0.5, 0.25, 0.125],
            seconds: vec![0.01, 0.01, 0.01],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_train_log(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "epoch,loss,seconds");
        assert_eq!(lines[2], "1,0.25,0.01");
    }
}

