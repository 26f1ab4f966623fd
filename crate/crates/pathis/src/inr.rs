//! Coordinate-based neural field: Fourier feature encoding, a 3-layer MLP
//! with exact manual backpropagation, and Adam.
//!
//! The field maps a normalized pixel coordinate in [-1, 1]^2 through
//! gamma(p) = [cos(2 pi B p); sin(2 pi B p)] into a 256-256-1 MLP with ReLU
//! hidden activations and a sigmoid output, so intensities live in (0, 1).
//! Training is full batch: the forward operator couples every pixel into
//! every residual sample, so per-epoch work is one forward/backward over
//! all n^2 coordinates.
//!
//! Concurrency: point-wise stages run over fixed-size point chunks with
//! disjoint outputs; weight-gradient reductions use one full-batch matrix
//! product each. Both give bitwise-identical results for any thread count.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::exec;
use crate::io::{check_magic, parse_field, read_f32_payload, read_line, write_f32_payload};
use crate::rng::Rng;

/// Width of both hidden layers.
pub const HIDDEN: usize = 256;

// points per parallel work unit; fixed so chunking never depends on threads
const POINT_CHUNK: usize = 512;

// ---------- Fourier feature encoding ----------

#[derive(Debug, Clone)]
pub struct FourierEncoding {
    /// Feature count L; the encoded dimension is 2L.
    pub l: usize,
    /// Gaussian scale the rows of `b` were sampled with. Only a record of
    /// how `b` was produced; not used after sampling and not stored in
    /// checkpoints.
    pub sigma: f64,
    /// L x 2 frequency matrix, row-major.
    pub b: Vec<f64>,
}

impl FourierEncoding {
    /// Sample B ~ N(0, sigma^2) continuing an existing RNG stream.
    pub fn sample(l: usize, sigma: f64, rng: &mut Rng) -> Result<Self> {
        if l == 0 {
            return Err(Error::Config("feature count l must be at least 1".into()));
        }
        let b = (0..2 * l).map(|_| sigma * rng.next_normal()).collect();
        Ok(FourierEncoding { l, sigma, b })
    }

    /// Sample B from a fresh stream seeded with `seed`.
    pub fn new(l: usize, sigma: f64, seed: u64) -> Result<Self> {
        FourierEncoding::sample(l, sigma, &mut Rng::new(seed))
    }

    /// Encode `n_pts` normalized (x, y) pairs into an n_pts x 2L row-major
    /// array: the cos block of all L rows, then the sin block.
    pub fn encode(&self, points: &[f64]) -> Result<Vec<f64>> {
        if points.len() % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "point buffer holds {} scalars, expected (x, y) pairs",
                points.len()
            )));
        }
        let n_pts = points.len() / 2;
        let l = self.l;
        let mut out = vec![0.0; n_pts * 2 * l];
        let b = &self.b;
        exec::for_each_chunk_mut(&mut out, POINT_CHUNK * 2 * l, |ci, chunk| {
            let p0 = ci * POINT_CHUNK;
            for (local, row) in chunk.chunks_mut(2 * l).enumerate() {
                let x = points[(p0 + local) * 2];
                let y = points[(p0 + local) * 2 + 1];
                for i in 0..l {
                    let arg = std::f64::consts::TAU * (b[2 * i] * x + b[2 * i + 1] * y);
                    row[i] = arg.cos();
                    row[l + i] = arg.sin();
                }
            }
        });
        Ok(out)
    }
}

// ---------- MLP parameters ----------

/// Parameters in declared order w1, b1, w2, b2, w3, b3; `theta_len` is
/// their concatenated length.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub l: usize,
    pub w1: Vec<f64>, // HIDDEN x 2L
    pub b1: Vec<f64>, // HIDDEN
    pub w2: Vec<f64>, // HIDDEN x HIDDEN
    pub b2: Vec<f64>, // HIDDEN
    pub w3: Vec<f64>, // 1 x HIDDEN
    pub b3: Vec<f64>, // 1
}

impl MlpParams {
    pub fn zeros(l: usize) -> Self {
        MlpParams {
            l,
            w1: vec![0.0; HIDDEN * 2 * l],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w3: vec![0.0; HIDDEN],
            b3: vec![0.0; 1],
        }
    }

    /// Uniform fan-in initialization U(+-sqrt(6/fan_in)), biases zero,
    /// weights drawn in layer order w1, w2, w3 from an existing stream.
    pub fn init_with(l: usize, rng: &mut Rng) -> Result<Self> {
        if l == 0 {
            return Err(Error::Config("feature count l must be at least 1".into()));
        }
        let mut p = MlpParams::zeros(l);
        let draw = |rng: &mut Rng, w: &mut [f64], fan_in: usize| {
            let s = (6.0 / fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.range(-s, s);
            }
        };
        draw(rng, &mut p.w1, 2 * l);
        draw(rng, &mut p.w2, HIDDEN);
        draw(rng, &mut p.w3, HIDDEN);
        Ok(p)
    }

    pub fn theta_len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }

    fn arrays(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    fn arrays_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }
}

pub fn init_mlp(l: usize, seed: u64) -> Result<MlpParams> {
    MlpParams::init_with(l, &mut Rng::new(seed))
}

// ---------- forward / backward ----------

/// Post-activation state kept for the backward pass. ReLU's derivative is
/// the indicator of a positive pre-activation, which equals the indicator
/// of a positive post-activation, so storing z1/z2 serves both the mask
/// and the weight-gradient products.
pub struct MlpCache {
    n_pts: usize,
    z1: Vec<f64>, // n_pts x HIDDEN
    z2: Vec<f64>, // n_pts x HIDDEN
    y: Vec<f64>,  // n_pts
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl MlpGrads {
    fn zeros(l: usize) -> Self {
        MlpGrads {
            w1: vec![0.0; HIDDEN * 2 * l],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w3: vec![0.0; HIDDEN],
            b3: vec![0.0; 1],
        }
    }

    fn arrays(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }
}

fn check_features(params: &MlpParams, features: &[f64]) -> Result<usize> {
    let f = 2 * params.l;
    if features.is_empty() || features.len() % f != 0 {
        return Err(Error::DimensionMismatch(format!(
            "feature buffer of {} scalars is not a multiple of the encoded width {}",
            features.len(),
            f
        )));
    }
    Ok(features.len() / f)
}

/// One dense layer over a range of points: out = act(x . w^T + bias), with
/// the matrix product delegated per point chunk so sequential and parallel
/// execution produce identical bits.
fn layer_forward(
    x: &[f64],
    in_dim: usize,
    w: &[f64],
    bias: &[f64],
    out_dim: usize,
    out: &mut [f64],
    relu: bool,
) {
    let wv = ArrayView2::from_shape((out_dim, in_dim), w).expect("weight shape");
    exec::for_each_chunk_mut(out, POINT_CHUNK * out_dim, |ci, chunk| {
        let rows = chunk.len() / out_dim;
        let p0 = ci * POINT_CHUNK;
        let xv = ArrayView2::from_shape((rows, in_dim), &x[p0 * in_dim..(p0 + rows) * in_dim])
            .expect("input shape");
        let mut ov = ArrayViewMut2::from_shape((rows, out_dim), chunk).expect("output shape");
        general_mat_mul(1.0, &xv, &wv.t(), 0.0, &mut ov);
        for row in chunk.chunks_mut(out_dim) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
                if relu && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    });
}

/// Forward pass: returns sigmoid outputs in (0, 1) and the cache for
/// `mlp_backward`.
pub fn mlp_forward(params: &MlpParams, features: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
    let n_pts = check_features(params, features)?;
    let f = 2 * params.l;
    let mut z1 = vec![0.0; n_pts * HIDDEN];
    layer_forward(features, f, &params.w1, &params.b1, HIDDEN, &mut z1, true);
    let mut z2 = vec![0.0; n_pts * HIDDEN];
    layer_forward(&z1, HIDDEN, &params.w2, &params.b2, HIDDEN, &mut z2, true);
    let mut y = vec![0.0; n_pts];
    {
        let w3 = &params.w3;
        let b3 = params.b3[0];
        let z2ref = &z2;
        exec::for_each_chunk_mut(&mut y, POINT_CHUNK, |ci, chunk| {
            let p0 = ci * POINT_CHUNK;
            for (local, out) in chunk.iter_mut().enumerate() {
                let row = &z2ref[(p0 + local) * HIDDEN..(p0 + local + 1) * HIDDEN];
                let a: f64 = row.iter().zip(w3).map(|(z, w)| z * w).sum::<f64>() + b3;
                *out = 1.0 / (1.0 + (-a).exp());
            }
        });
    }
    let cache = MlpCache {
        n_pts,
        z1,
        z2,
        y: y.clone(),
    };
    Ok((y, cache))
}

/// Column sums of an n_pts x dim matrix, accumulated in row order.
fn column_sums(m: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for row in m.chunks(dim) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// d_out^T . x as a single full-batch product (thread-count independent).
fn weight_grad(d: &[f64], x: &[f64], n_pts: usize, out_dim: usize, in_dim: usize) -> Vec<f64> {
    let mut g = vec![0.0; out_dim * in_dim];
    let dv = ArrayView2::from_shape((n_pts, out_dim), d).expect("delta shape");
    let xv = ArrayView2::from_shape((n_pts, in_dim), x).expect("input shape");
    let mut gv = ArrayViewMut2::from_shape((out_dim, in_dim), &mut g).expect("grad shape");
    general_mat_mul(1.0, &dv.t(), &xv, 0.0, &mut gv);
    g
}

/// Exact reverse-mode gradients of sum_p grad_out[p] * y[p] with respect to
/// every parameter. `features` must be the array the forward pass saw.
pub fn mlp_backward(
    params: &MlpParams,
    features: &[f64],
    cache: &MlpCache,
    grad_out: &[f64],
) -> Result<MlpGrads> {
    let n_pts = check_features(params, features)?;
    if n_pts != cache.n_pts || grad_out.len() != n_pts {
        return Err(Error::DimensionMismatch(format!(
            "backward saw {} points, cache holds {}, grad holds {}",
            n_pts,
            cache.n_pts,
            grad_out.len()
        )));
    }
    let f = 2 * params.l;
    let mut grads = MlpGrads::zeros(params.l);

    // output layer: d3 = grad_out * sigmoid'
    let mut d3 = vec![0.0; n_pts];
    {
        let y = &cache.y;
        exec::for_each_chunk_mut(&mut d3, POINT_CHUNK, |ci, chunk| {
            let p0 = ci * POINT_CHUNK;
            for (local, v) in chunk.iter_mut().enumerate() {
                let yy = y[p0 + local];
                *v = grad_out[p0 + local] * yy * (1.0 - yy);
            }
        });
    }
    grads.w3 = weight_grad(&d3, &cache.z2, n_pts, 1, HIDDEN);
    grads.b3[0] = d3.iter().sum();

    // hidden layer 2: d2 = (d3 outer w3) . relu'(z2)
    let mut d2 = vec![0.0; n_pts * HIDDEN];
    {
        let w3 = &params.w3;
        let z2 = &cache.z2;
        exec::for_each_chunk_mut(&mut d2, POINT_CHUNK * HIDDEN, |ci, chunk| {
            let p0 = ci * POINT_CHUNK;
            for (local, row) in chunk.chunks_mut(HIDDEN).enumerate() {
                let d = d3[p0 + local];
                let zrow = &z2[(p0 + local) * HIDDEN..(p0 + local + 1) * HIDDEN];
                for j in 0..HIDDEN {
                    row[j] = if zrow[j] > 0.0 { d * w3[j] } else { 0.0 };
                }
            }
        });
    }
    grads.w2 = weight_grad(&d2, &cache.z1, n_pts, HIDDEN, HIDDEN);
    grads.b2 = column_sums(&d2, HIDDEN);

    // hidden layer 1: d1 = (d2 . w2) . relu'(z1)
    let mut d1 = vec![0.0; n_pts * HIDDEN];
    {
        let w2v = ArrayView2::from_shape((HIDDEN, HIDDEN), &params.w2).expect("w2 shape");
        let d2ref = &d2;
        let z1 = &cache.z1;
        exec::for_each_chunk_mut(&mut d1, POINT_CHUNK * HIDDEN, |ci, chunk| {
            let rows = chunk.len() / HIDDEN;
            let p0 = ci * POINT_CHUNK;
            let dv = ArrayView2::from_shape((rows, HIDDEN), &d2ref[p0 * HIDDEN..(p0 + rows) * HIDDEN])
                .expect("d2 shape");
            let mut ov = ArrayViewMut2::from_shape((rows, HIDDEN), chunk).expect("d1 shape");
            general_mat_mul(1.0, &dv, &w2v, 0.0, &mut ov);
            for (local, row) in chunk.chunks_mut(HIDDEN).enumerate() {
                let zrow = &z1[(p0 + local) * HIDDEN..(p0 + local + 1) * HIDDEN];
                for j in 0..HIDDEN {
                    if zrow[j] <= 0.0 {
                        row[j] = 0.0;
                    }
                }
            }
        });
    }
    grads.w1 = weight_grad(&d1, features, n_pts, HIDDEN, f);
    grads.b1 = column_sums(&d1, HIDDEN);

    Ok(grads)
}

// ---------- Adam ----------

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates over the concatenated parameter
/// vector, in declared array order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(theta_len: usize, cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            m: vec![0.0; theta_len],
            v: vec![0.0; theta_len],
            t: 0,
        }
    }
}

/// One Adam update with bias correction, applied in place.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
    if state.m.len() != params.theta_len() {
        return Err(Error::DimensionMismatch(format!(
            "optimizer state holds {} moments for {} parameters",
            state.m.len(),
            params.theta_len()
        )));
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.cfg;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let mut offset = 0;
    let garrays = grads.arrays();
    for (ai, theta) in params.arrays_mut().into_iter().enumerate() {
        let g = garrays[ai];
        debug_assert_eq!(theta.len(), g.len());
        let m = &mut state.m[offset..offset + theta.len()];
        let v = &mut state.v[offset..offset + theta.len()];
        for i in 0..theta.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
        offset += theta.len();
    }
    Ok(())
}

// ---------- training log ----------

/// Per-epoch training record; both vectors have one entry per epoch run.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub loss: Vec<f64>,
    pub seconds: Vec<f64>,
}

// ---------- checkpoints ----------

const CHECKPOINT_MAGIC: &str = "PMW1";

/// Write encoding + parameters: magic line, feature count line, then B,
/// w1, b1, w2, b2, w3, b3 as little-endian f32.
pub fn save_checkpoint(path: &Path, enc: &FourierEncoding, params: &MlpParams) -> Result<()> {
    if enc.l != params.l {
        return Err(Error::DimensionMismatch(format!(
            "encoding has l={} but parameters have l={}",
            enc.l, params.l
        )));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    writeln!(w, "{}", enc.l)?;
    write_f32_payload(&mut w, &enc.b)?;
    for array in params.arrays() {
        write_f32_payload(&mut w, array)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back. The loaded encoding's `sigma` is set to 0
/// because the sampling scale is not stored (B itself is).
pub fn load_checkpoint(path: &Path) -> Result<(FourierEncoding, MlpParams)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    check_magic(&mut r, CHECKPOINT_MAGIC)?;
    let header = read_line(&mut r, "feature count")?;
    let l: usize = parse_field(Some(header.trim()), "feature count")?;
    if l == 0 {
        return Err(Error::Parse("feature count must be at least 1".into()));
    }
    let b = read_f32_payload(&mut r, 2 * l, "encoding matrix")?;
    let mut params = MlpParams::zeros(l);
    params.w1 = read_f32_payload(&mut r, HIDDEN * 2 * l, "layer 1 weights")?;
    params.b1 = read_f32_payload(&mut r, HIDDEN, "layer 1 biases")?;
    params.w2 = read_f32_payload(&mut r, HIDDEN * HIDDEN, "layer 2 weights")?;
    params.b2 = read_f32_payload(&mut r, HIDDEN, "layer 2 biases")?;
    params.w3 = read_f32_payload(&mut r, HIDDEN, "output weights")?;
    params.b3 = read_f32_payload(&mut r, 1, "output bias")?;
    Ok((FourierEncoding { l, sigma: 0.0, b }, params))
}

// ---------- tests ----------
