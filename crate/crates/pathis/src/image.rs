//! In-memory containers: an image on the imaging grid and a block of
//! recorded sensor traces.

use crate::error::{Error, Result};
use crate::geometry::ImagingGrid;

/// Scalar field on the imaging grid, row-major with index iy * n + ix.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: ImagingGrid,
    pub values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: ImagingGrid) -> Self {
        let n = grid.n_pixels();
        Image {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(grid: ImagingGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_pixels() {
            return Err(Error::DimensionMismatch(format!(
                "image needs {} values for an n = {} grid, got {}",
                grid.n_pixels(),
                grid.n,
                values.len()
            )));
        }
        Ok(Image { grid, values })
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let i = self.grid.index(ix, iy);
        self.values[i] = v;
    }

    /// (min, max) over all pixels.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Recorded pressure traces, one per sensor, on a shared time axis.
/// Storage is sensor-major: values[i * m + s] is sample s of sensor i.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorData {
    /// Number of sensors.
    pub k: usize,
    /// Samples per trace.
    pub m: usize,
    /// Sample interval in seconds.
    pub dt_s: f64,
    /// Sound speed the data was produced with, carried as metadata.
    pub c_mps: f64,
    pub values: Vec<f64>,
}

impl SensorData {
    pub fn zeros(k: usize, m: usize, dt_s: f64, c_mps: f64) -> Self {
        SensorData {
            k,
            m,
            dt_s,
            c_mps,
            values: vec![0.0; k * m],
        }
    }

    pub fn from_values(k: usize, m: usize, dt_s: f64, c_mps: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * m {
            return Err(Error::DimensionMismatch(format!(
                "sensor data needs {} values for k = {k}, m = {m}, got {}",
                k * m,
                values.len()
            )));
        }
        Ok(SensorData {
            k,
            m,
            dt_s,
            c_mps,
            values,
        })
    }

    pub fn trace(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn trace_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.m..(i + 1) * self.m]
    }
}
