//! Acquisition geometry: the square imaging grid, the circular sensor arc,
//! and the sampling clock that ties the two together.
//!
//! The grid is centered on the origin with pixel centers at
//! ((i - (n-1)/2) h, (j - (n-1)/2) h) for integer indices i (x) and j (y),
//! so the field of view spans extent_m in each direction. Sensors sit on a
//! circle of radius radius_m; an arc of span_deg degrees centered on
//! center_deg is divided into k equal cells with one sensor at each cell
//! center, which avoids a duplicated sensor when the arc closes at 360.

use crate::error::{Error, Result};

/// Square pixel grid, origin-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingGrid {
    /// Pixels per side.
    pub n: usize,
    /// Physical side length in meters.
    pub extent_m: f64,
    /// Pixel pitch in meters, extent_m / n.
    pub h_m: f64,
}

impl ImagingGrid {
    pub fn n_pixels(&self) -> usize {
        self.n * self.n
    }

    /// Row-major storage index of pixel (ix, iy).
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    /// Physical center of pixel (ix, iy) in meters.
    pub fn pixel_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let half = (self.n - 1) as f64 / 2.0;
        ((ix as f64 - half) * self.h_m, (iy as f64 - half) * self.h_m)
    }

    /// Pixel center mapped to the normalized square [-1, 1]^2.
    pub fn normalized_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let d = (self.n - 1) as f64;
        (2.0 * ix as f64 / d - 1.0, 2.0 * iy as f64 / d - 1.0)
    }

    /// Largest distance from the origin to any pixel center.
    pub fn max_pixel_radius_m(&self) -> f64 {
        let c = self.pixel_center(self.n - 1, self.n - 1);
        (c.0 * c.0 + c.1 * c.1).sqrt()
    }
}

/// Build an origin-centered grid of n x n pixels covering extent_m meters.
pub fn make_grid(n: usize, extent_m: f64) -> Result<ImagingGrid> {
    if n < 2 {
        return Err(Error::Config(format!("grid needs n >= 2, got {n}")));
    }
    if !(extent_m > 0.0) || !extent_m.is_finite() {
        return Err(Error::Config(format!(
            "grid extent must be positive and finite, got {extent_m}"
        )));
    }
    Ok(ImagingGrid {
        n,
        extent_m,
        h_m: extent_m / n as f64,
    })
}

/// Point detectors on a circular arc.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    /// Sensor positions in meters, in arc order.
    pub positions_m: Vec<(f64, f64)>,
    pub radius_m: f64,
    pub span_deg: f64,
    pub center_deg: f64,
}

impl SensorArray {
    pub fn len(&self) -> usize {
        self.positions_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_m.is_empty()
    }
}

/// Place k sensors at the cell centers of an arc of span_deg degrees
/// centered on center_deg, on a circle of radius_m meters.
pub fn make_sensor_arc(
    k: usize,
    radius_m: f64,
    span_deg: f64,
    center_deg: f64,
) -> Result<SensorArray> {
    if k < 1 {
        return Err(Error::Config("sensor arc needs k >= 1".into()));
    }
    if !(radius_m > 0.0) || !radius_m.is_finite() {
        return Err(Error::Config(format!(
            "sensor radius must be positive, got {radius_m}"
        )));
    }
    if !(span_deg > 0.0 && span_deg <= 360.0) {
        return Err(Error::Config(format!(
            "arc span must lie in (0, 360] degrees, got {span_deg}"
        )));
    }
    if !center_deg.is_finite() {
        return Err(Error::Config("arc center must be finite".into()));
    }
    let start = center_deg - span_deg / 2.0;
    let cell = span_deg / k as f64;
    let positions = (0..k)
        .map(|i| {
            let theta = (start + (i as f64 + 0.5) * cell).to_radians();
            (radius_m * theta.cos(), radius_m * theta.sin())
        })
        .collect();
    Ok(SensorArray {
        positions_m: positions,
        radius_m,
        span_deg,
        center_deg,
    })
}

/// Sampling clock shared by all sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    /// Sample interval in seconds.
    pub dt_s: f64,
    /// Samples per trace.
    pub m_samples: usize,
}

/// Time axis that resolves the grid and covers the farthest pixel.
///
/// The interval is h / (2 c), i.e. two samples per pixel transit, and the
/// trace is long enough for sound to travel from the sensor circle to the
/// far corner of the field of view with four samples of margin:
/// m = ceil((radius + sqrt(2)/2 extent) / (c dt)) + 4.
pub fn default_time_config(grid: &ImagingGrid, radius_m: f64, c_mps: f64) -> Result<TimeConfig> {
    if !(radius_m > 0.0) || !radius_m.is_finite() {
        return Err(Error::Config(format!(
            "sensor radius must be positive, got {radius_m}"
        )));
    }
    if !(c_mps > 0.0) || !c_mps.is_finite() {
        return Err(Error::Config(format!(
            "sound speed must be positive, got {c_mps}"
        )));
    }
    let dt_s = grid.h_m / (2.0 * c_mps);
    let reach_m = radius_m + std::f64::consts::FRAC_1_SQRT_2 * grid.extent_m;
    let m_samples = (reach_m / (c_mps * dt_s)).ceil() as usize + 4;
    Ok(TimeConfig { dt_s, m_samples })
}
