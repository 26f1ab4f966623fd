//! Seeded phantom generators and image-file ingestion.
//!
//! Three procedural families, increasing in structural complexity:
//! `geometric` (anti-aliased disks and rings), `disks` (filled disks only),
//! and `vascular` (a recursive bifurcating vessel tree rasterized as
//! capsules). All generators are pure functions of the spec: the same spec
//! always produces the bitwise-identical image.
//!
//! Shapes are composed with max() so values stay in [0, 1], edges get a
//! one-pixel linear anti-aliasing ramp, and a two-pixel border frame is
//! exactly zero by construction.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::make_grid;
use crate::image::Image;
use crate::io;
use crate::metrics::normalize01;
use crate::rng::Rng;

// ---------- spec ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Geometric,
    Disks,
    Vascular,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geometric" => Ok(PhantomKind::Geometric),
            "disks" => Ok(PhantomKind::Disks),
            "vascular" => Ok(PhantomKind::Vascular),
            other => Err(Error::Config(format!(
                "unknown phantom kind {other:?}; expected geometric, disks, or vascular"
            ))),
        }
    }
}

impl std::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhantomKind::Geometric => "geometric",
            PhantomKind::Disks => "disks",
            PhantomKind::Vascular => "vascular",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub n: usize,
    /// Physical side length stamped onto the produced image's grid; the
    /// pixel content itself is resolution-relative and does not depend on it.
    pub extent_m: f64,
    pub seed: u64,
    /// Shape count for disk families; recursion depth for the vessel tree.
    pub complexity: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            kind: PhantomKind::Geometric,
            n: 64,
            extent_m: 0.05,
            seed: 0,
            complexity: 3,
        }
    }
}

// ---------- rasterization primitives ----------
// All primitives work in pixel coordinates (pixel centers at integer
// points) and max-compose coverage in [0, 1] into the canvas.

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn bbox(n: usize, lo_x: f64, hi_x: f64, lo_y: f64, hi_y: f64) -> (usize, usize, usize, usize) {
    let lim = (n - 1) as f64;
    let x0 = lo_x.floor().clamp(0.0, lim) as usize;
    let x1 = hi_x.ceil().clamp(0.0, lim) as usize;
    let y0 = lo_y.floor().clamp(0.0, lim) as usize;
    let y1 = hi_y.ceil().clamp(0.0, lim) as usize;
    (x0, x1, y0, y1)
}

fn stamp_disk(canvas: &mut [f64], n: usize, cx: f64, cy: f64, r: f64) {
    let (x0, x1, y0, y1) = bbox(n, cx - r - 1.0, cx + r + 1.0, cy - r - 1.0, cy + r + 1.0);
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            let d = (ix as f64 - cx).hypot(iy as f64 - cy);
            let cov = clamp01(r + 0.5 - d);
            let cell = &mut canvas[iy * n + ix];
            *cell = cell.max(cov);
        }
    }
}

fn stamp_ring(canvas: &mut [f64], n: usize, cx: f64, cy: f64, r: f64, half_w: f64) {
    let reach = r + half_w + 1.0;
    let (x0, x1, y0, y1) = bbox(n, cx - reach, cx + reach, cy - reach, cy + reach);
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            let d = (ix as f64 - cx).hypot(iy as f64 - cy);
            let cov = clamp01(half_w + 0.5 - (d - r).abs());
            let cell = &mut canvas[iy * n + ix];
            *cell = cell.max(cov);
        }
    }
}

fn stamp_capsule(canvas: &mut [f64], n: usize, a: (f64, f64), b: (f64, f64), half_w: f64) {
    let reach = half_w + 1.0;
    let (x0, x1, y0, y1) = bbox(
        n,
        a.0.min(b.0) - reach,
        a.0.max(b.0) + reach,
        a.1.min(b.1) - reach,
        a.1.max(b.1) + reach,
    );
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            let (px, py) = (ix as f64 - a.0, iy as f64 - a.1);
            let t = if len2 > 0.0 {
                ((px * dx + py * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (px - t * dx).hypot(py - t * dy);
            let cov = clamp01(half_w + 0.5 - d);
            let cell = &mut canvas[iy * n + ix];
            *cell = cell.max(cov);
        }
    }
}

// ---------- families ----------

fn fill_geometric(canvas: &mut [f64], n: usize, complexity: usize, rng: &mut Rng, rings: bool) {
    let nf = n as f64;
    for s in 0..complexity {
        let r = (rng.range(0.05, 0.14) * nf).max(2.0);
        let ring = rings && s % 2 == 1;
        let half_w = if ring { (0.22 * r).max(1.0) } else { 0.0 };
        // keep the anti-aliased edge clear of the two-pixel border frame
        let margin = r + half_w + 3.0;
        let cx = rng.range(margin, nf - 1.0 - margin);
        let cy = rng.range(margin, nf - 1.0 - margin);
        if ring {
            stamp_ring(canvas, n, cx, cy, r, half_w);
        } else {
            stamp_disk(canvas, n, cx, cy, r);
        }
    }
}

fn fill_vascular(canvas: &mut [f64], n: usize, complexity: usize, rng: &mut Rng) {
    let nf = n as f64;
    let trunk_half_w = (nf / 40.0).max(1.5);
    let trunk_len = 0.28 * nf;
    let x0 = rng.range(0.35 * nf, 0.65 * nf);
    let y0 = rng.range(0.35 * nf, 0.65 * nf);
    let angle = rng.range(0.0, std::f64::consts::TAU);
    grow_branch(canvas, n, (x0, y0), angle, trunk_len, trunk_half_w, 0, complexity, rng);
}

/// Depth-first vessel growth. Children start at the parent's clamped
/// endpoint, so the rasterized tree is one connected component.
#[allow(clippy::too_many_arguments)]
fn grow_branch(
    canvas: &mut [f64],
    n: usize,
    start: (f64, f64),
    angle: f64,
    len: f64,
    half_w: f64,
    level: usize,
    depth: usize,
    rng: &mut Rng,
) {
    let nf = n as f64;
    // endpoints stay far enough inside that edge + ramp clears the border
    let clamp_box = |p: (f64, f64), hw: f64| {
        (
            p.0.clamp(3.0 + hw, nf - 4.0 - hw),
            p.1.clamp(3.0 + hw, nf - 4.0 - hw),
        )
    };
    let start = clamp_box(start, half_w);
    let tip = clamp_box(
        (start.0 + len * angle.cos(), start.1 + len * angle.sin()),
        half_w,
    );
    stamp_capsule(canvas, n, start, tip, half_w);
    if level + 1 >= depth {
        return;
    }
    let split = std::f64::consts::FRAC_PI_6; // nominal 30 degree bifurcation
    for sign in [1.0, -1.0] {
        let jitter = rng.range(-split, split);
        grow_branch(
            canvas,
            n,
            tip,
            angle + sign * split + jitter,
            len * 0.85,
            (half_w * 0.7).max(0.5),
            level + 1,
            depth,
            rng,
        );
    }
}

fn zero_border(canvas: &mut [f64], n: usize) {
    for iy in 0..n {
        for ix in 0..n {
            if ix < 2 || iy < 2 || ix >= n - 2 || iy >= n - 2 {
                canvas[iy * n + ix] = 0.0;
            }
        }
    }
}

// ---------- public API ----------

pub fn generate(spec: &PhantomSpec) -> Result<Image> {
    if spec.n < 16 {
        return Err(Error::Config(format!(
            "phantom grid must be at least 16 x 16, got {}",
            spec.n
        )));
    }
    if spec.complexity < 1 {
        return Err(Error::Config("phantom complexity must be at least 1".into()));
    }
    let grid = make_grid(spec.n, spec.extent_m)?;
    let mut rng = Rng::new(spec.seed);
    let mut canvas = vec![0.0; spec.n * spec.n];
    match spec.kind {
        PhantomKind::Geometric => fill_geometric(&mut canvas, spec.n, spec.complexity, &mut rng, true),
        PhantomKind::Disks => fill_geometric(&mut canvas, spec.n, spec.complexity, &mut rng, false),
        PhantomKind::Vascular => fill_vascular(&mut canvas, spec.n, spec.complexity, &mut rng),
    }
    zero_border(&mut canvas, spec.n);
    debug_assert!(canvas.iter().all(|v| (0.0..=1.0).contains(v)));
    Image::from_values(grid, canvas)
}

/// Load a phantom from a `.paf` image or a binary PGM (P5) file and min-max
/// rescale it to [0, 1] (a flat file maps to all zeros). PGM carries no
/// physical size, so `extent_m` supplies it; `.paf` keeps its stored extent.
pub fn from_file(path: &Path, extent_m: f64) -> Result<Image> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let image = match ext.as_deref() {
        Some("paf") => io::read_image(path)?,
        Some("pgm") => io::read_pgm(path, extent_m)?,
        _ => {
            return Err(Error::Parse(format!(
                "unsupported phantom file {:?}; expected .paf or .pgm",
                path
            )))
        }
    };
    let values = normalize01(&image.values);
    Image::from_values(image.grid, values)
}

// ---------- tests ----------

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [PhantomKind; 3] = [
        PhantomKind::Geometric,
        PhantomKind::Disks,
        PhantomKind::Vascular,
    ];

    fn spec(kind: PhantomKind, n: usize, seed: u64, complexity: usize) -> PhantomSpec {
        PhantomSpec {
            kind,
            n,
            extent_m: 0.05,
            seed,
            complexity,
        }
    }

    #[test]
    fn same_spec_generates_bitwise_identical_images() {
        for kind in KINDS {
            let s = spec(kind, 64, 11, 4);
            let a = generate(&s).unwrap();
            let b = generate(&s).unwrap();
            assert_eq!(a.values, b.values, "{kind} not deterministic");
        }
    }

    #[test]
    fn values_stay_in_unit_range_with_zero_border_frame() {
        for kind in KINDS {
            for seed in [0, 1, 2, 3] {
                let img = generate(&spec(kind, 48, seed, 5)).unwrap();
                assert!(img.values.iter().all(|v| (0.0..=1.0).contains(v)));
                let n = img.grid.n;
                for iy in 0..n {
                    for ix in 0..n {
                        if ix < 2 || iy < 2 || ix >= n - 2 || iy >= n - 2 {
                            assert_eq!(img.values[iy * n + ix], 0.0, "{kind} border at ({ix},{iy})");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn generated_phantoms_reach_full_intensity() {
        // every family starts with a thick enough primitive that at least
        // one pixel is fully covered, so min-max reload is the identity
        for kind in KINDS {
            let img = generate(&spec(kind, 64, 9, 3)).unwrap();
            let (lo, hi) = img.min_max();
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0, "{kind} peak {hi}");
        }
    }

    #[test]
    fn vascular_foreground_fraction_is_plausible() {
        let img = generate(&spec(PhantomKind::Vascular, 128, 7, 5)).unwrap();
        let fg = img.values.iter().filter(|&&v| v > 0.1).count();
        let frac = fg as f64 / img.values.len() as f64;
        assert!(
            (0.01..=0.30).contains(&frac),
            "foreground fraction {frac:.4}"
        );
    }

    #[test]
    fn distinct_seeds_differ_in_at_least_one_percent_of_pixels() {
        for kind in KINDS {
            let a = generate(&spec(kind, 64, 100, 4)).unwrap();
            let b = generate(&spec(kind, 64, 101, 4)).unwrap();
            let differing = a
                .values
                .iter()
                .zip(&b.values)
                .filter(|(x, y)| x != y)
                .count();
            assert!(
                differing * 100 >= a.values.len(),
                "{kind}: only {differing} pixels differ"
            );
        }
    }

    #[test]
    fn vascular_tree_is_one_connected_component() {
        for seed in [1, 2, 3, 7] {
            let img = generate(&spec(PhantomKind::Vascular, 128, seed, 5)).unwrap();
            let n = img.grid.n;
            let fg: Vec<bool> = img.values.iter().map(|&v| v > 0.1).collect();
            let total = fg.iter().filter(|&&b| b).count();
            assert!(total > 0);
            // flood fill with 8-connectivity from the first foreground pixel
            let start = fg.iter().position(|&b| b).unwrap();
            let mut seen = vec![false; n * n];
            let mut stack = vec![start];
            seen[start] = true;
            let mut reached = 0usize;
            while let Some(p) = stack.pop() {
                reached += 1;
                let (ix, iy) = (p % n, p / n);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                        if jx < 0 || jy < 0 || jx >= n as i64 || jy >= n as i64 {
                            continue;
                        }
                        let q = jy as usize * n + jx as usize;
                        if fg[q] && !seen[q] {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
            assert_eq!(reached, total, "seed {seed}: disconnected tree");
        }
    }

    #[test]
    fn rejects_undersized_grid_and_zero_complexity() {
        let mut s = spec(PhantomKind::Geometric, 15, 0, 3);
        assert!(matches!(generate(&s), Err(Error::Config(_))));
        s.n = 16;
        s.complexity = 0;
        assert!(matches!(generate(&s), Err(Error::Config(_))));
    }

    #[test]
    fn kind_parses_from_cli_names() {
        for (name, kind) in [
            ("geometric", PhantomKind::Geometric),
            ("disks", PhantomKind::Disks),
            ("VASCULAR", PhantomKind::Vascular),
        ] {
            assert_eq!(name.parse::<PhantomKind>().unwrap(), kind);
        }
        assert!(matches!(
            "blob".parse::<PhantomKind>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn from_file_reads_paf_without_distortion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.paf");
        let img = generate(&spec(PhantomKind::Geometric, 32, 5, 2)).unwrap();
        io::write_image(&path, &img).unwrap();
        let direct = io::read_image(&path).unwrap();
        let loaded = from_file(&path, 0.0).unwrap();
        // generated phantoms span [0, 1] exactly, so min-max is the identity
        assert_eq!(loaded.values, direct.values);
        assert_eq!(loaded.grid.extent_m, img.grid.extent_m);
    }

    #[test]
    fn from_file_rescales_pgm_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\xff\x80\x40").unwrap();
        let img = from_file(&path, 0.05).unwrap();
        assert_eq!(img.grid.n, 2);
        assert_eq!(img.grid.extent_m, 0.05);
        assert_eq!(img.values[0], 0.0);
        assert_eq!(img.values[1], 1.0);
        assert!((img.values[2] - 128.0 / 255.0).abs() < 1e-12);
        assert!((img.values[3] - 64.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn from_file_maps_flat_input_to_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.pgm");
        std::fs::write(&path, b"P5\n3 3\n255\n\x77\x77\x77\x77\x77\x77\x77\x77\x77").unwrap();
        let img = from_file(&path, 0.05).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_file_rejects_unknown_extension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        std::fs::write(&path, b"nope").unwrap();
        assert!(matches!(from_file(&path, 0.05), Err(Error::Parse(_))));
    }
}
