//! Image quality metrics.
//!
//! Both metrics first min-max normalize each input independently to [0, 1]
//! (a flat image maps to all zeros), which makes them invariant to affine
//! rescaling and lets reconstructions with arbitrary amplitude units be
//! compared against ground truth.
//!
//! PSNR is 10 log10(1 / MSE) on the normalized pair, capped at 99 dB so
//! identical images do not produce an infinity. SSIM follows the standard
//! windowed formulation: an 11 x 11 Gaussian window with sigma 1.5,
//! stability constants C1 = 0.01^2 and C2 = 0.03^2 for a dynamic range of
//! 1, averaged over valid (fully interior) window positions only.

use crate::error::{Error, Result};
use crate::image::Image;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PSNR_CAP_DB: f64 = 99.0;

/// Min-max normalization to [0, 1]; flat inputs map to all zeros.
pub fn normalize01(values: &[f64]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    let s = 1.0 / (hi - lo);
    values.iter().map(|&v| (v - lo) * s).collect()
}

fn check_same_shape(a: &Image, b: &Image) -> Result<usize> {
    if a.grid.n != b.grid.n {
        return Err(Error::DimensionMismatch(format!(
            "metric operands are {0} x {0} and {1} x {1}",
            a.grid.n, b.grid.n
        )));
    }
    Ok(a.grid.n)
}

/// Peak signal-to-noise ratio in dB between independently normalized images.
pub fn psnr_db(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let an = normalize01(&a.values);
    let bn = normalize01(&b.values);
    let mse = an
        .iter()
        .zip(&bn)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / an.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian window; the 2-D window is its outer product.
fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW - 1) as f64 / 2.0;
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *wi = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        sum += *wi;
    }
    for wi in w.iter_mut() {
        *wi /= sum;
    }
    w
}

/// Valid-mode separable convolution with the window: filters rows then
/// columns, shrinking n to n - WINDOW + 1 in each direction.
fn filter_valid(src: &[f64], n: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let out_n = n - WINDOW + 1;
    let mut rows = vec![0.0; n * out_n]; // n rows, out_n columns
    for r in 0..n {
        for c in 0..out_n {
            let mut acc = 0.0;
            for (t, &wt) in w.iter().enumerate() {
                acc += wt * src[r * n + c + t];
            }
            rows[r * out_n + c] = acc;
        }
    }
    let mut out = vec![0.0; out_n * out_n];
    for r in 0..out_n {
        for c in 0..out_n {
            let mut acc = 0.0;
            for (t, &wt) in w.iter().enumerate() {
                acc += wt * rows[(r + t) * out_n + c];
            }
            out[r * out_n + c] = acc;
        }
    }
    out
}

/// Mean structural similarity between independently normalized images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let n = check_same_shape(a, b)?;
    if n < WINDOW {
        return Err(Error::Config(format!(
            "SSIM needs images of at least {WINDOW} x {WINDOW}, got {n} x {n}"
        )));
    }
    let an = normalize01(&a.values);
    let bn = normalize01(&b.values);
    let ab: Vec<f64> = an.iter().zip(&bn).map(|(x, y)| x * y).collect();
    let aa: Vec<f64> = an.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = bn.iter().map(|x| x * x).collect();

    let w = gaussian_window();
    let mu_a = filter_valid(&an, n, &w);
    let mu_b = filter_valid(&bn, n, &w);
    let e_ab = filter_valid(&ab, n, &w);
    let e_aa = filter_valid(&aa, n, &w);
    let e_bb = filter_valid(&bb, n, &w);

    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(sum / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;
    use crate::rng::Rng;

    fn random_image(n: usize, rng: &mut Rng) -> Image {
        let grid = make_grid(n, 0.05).unwrap();
        let values = (0..n * n).map(|_| rng.range(-3.0, 5.0)).collect();
        Image::from_values(grid, values).unwrap()
    }

    // Direct evaluation of the windowed SSIM formula: explicit 2-D window,
    // one double loop per window position. Independent of the separable
    // implementation above.
    fn ssim_direct(a: &Image, b: &Image) -> f64 {
        let n = a.grid.n;
        let an = normalize01(&a.values);
        let bn = normalize01(&b.values);
        let mut w2 = [[0.0; WINDOW]; WINDOW];
        let c = (WINDOW - 1) as f64 / 2.0;
        let mut total = 0.0;
        for (u, row) in w2.iter_mut().enumerate() {
            for (v, x) in row.iter_mut().enumerate() {
                let du = u as f64 - c;
                let dv = v as f64 - c;
                *x = (-(du * du + dv * dv) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
                total += *x;
            }
        }
        for row in w2.iter_mut() {
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let c1 = K1 * K1;
        let c2 = K2 * K2;
        let out_n = n - WINDOW + 1;
        let mut sum = 0.0;
        for r in 0..out_n {
            for col in 0..out_n {
                let (mut ma, mut mb, mut eaa, mut ebb, mut eab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (u, row) in w2.iter().enumerate() {
                    for (v, &wt) in row.iter().enumerate() {
                        let x = an[(r + u) * n + col + v];
                        let y = bn[(r + u) * n + col + v];
                        ma += wt * x;
                        mb += wt * y;
                        eaa += wt * x * x;
                        ebb += wt * y * y;
                        eab += wt * x * y;
                    }
                }
                let va = eaa - ma * ma;
                let vb = ebb - mb * mb;
                let cov = eab - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        sum / (out_n * out_n) as f64
    }

    #[test]
    fn psnr_of_identical_images_is_capped() {
        let mut rng = Rng::new(1);
        let a = random_image(16, &mut rng);
        assert_eq!(psnr_db(&a, &a).unwrap(), 99.0);
    }

    #[test]
    fn psnr_of_flat_images_uses_zero_convention() {
        let grid = make_grid(16, 0.05).unwrap();
        let flat = Image::from_values(grid.clone(), vec![3.0; 256]).unwrap();
        let also_flat = Image::from_values(grid, vec![-1.0; 256]).unwrap();
        // both normalize to all zeros, so they compare as identical
        assert_eq!(psnr_db(&flat, &also_flat).unwrap(), 99.0);
    }

    #[test]
    fn one_percent_flipped_pixels_gives_twenty_db() {
        // checkerboard of {0, 1} stays {0, 1} after normalization; flipping
        // exactly 1% of pixels makes MSE = 0.01 and PSNR = 20 dB
        let n = 20; // 400 pixels, 4 flips
        let grid = make_grid(n, 0.05).unwrap();
        let a: Vec<f64> = (0..n * n).map(|i| ((i / n + i % n) % 2) as f64).collect();
        let mut b = a.clone();
        for j in [7, 133, 250, 391] {
            b[j] = 1.0 - b[j];
        }
        let a = Image::from_values(grid.clone(), a).unwrap();
        let b = Image::from_values(grid, b).unwrap();
        let p = psnr_db(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-12, "psnr {p}");
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = Rng::new(2);
        let a = random_image(24, &mut rng);
        let b = random_image(24, &mut rng);
        assert_eq!(psnr_db(&a, &b).unwrap(), psnr_db(&b, &a).unwrap());
        let d = (ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs();
        assert!(d < 1e-12);
    }

    #[test]
    fn metrics_ignore_affine_rescaling() {
        let mut rng = Rng::new(3);
        let a = random_image(24, &mut rng);
        let b = random_image(24, &mut rng);
        let mut a2 = a.clone();
        for v in a2.values.iter_mut() {
            *v = 2.5 * *v + 11.0;
        }
        let mut b2 = b.clone();
        for v in b2.values.iter_mut() {
            *v = 0.125 * *v - 4.0;
        }
        assert!((psnr_db(&a, &b).unwrap() - psnr_db(&a2, &b2).unwrap()).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&a2, &b2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let mut rng = Rng::new(4);
        let a = random_image(16, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_penalizes_inversion() {
        let mut rng = Rng::new(5);
        let a = random_image(32, &mut rng);
        let mut inv = a.clone();
        for v in inv.values.iter_mut() {
            *v = -*v;
        }
        let s = ssim(&a, &inv).unwrap();
        assert!(s < 1.0 - 1e-6, "inverted image scored {s}");
    }

    #[test]
    fn ssim_stays_in_range() {
        let mut rng = Rng::new(6);
        for _ in 0..10 {
            let a = random_image(16, &mut rng);
            let b = random_image(16, &mut rng);
            let s = ssim(&a, &b).unwrap();
            assert!((-1.0..=1.0).contains(&s), "ssim {s}");
        }
    }

    #[test]
    fn ssim_matches_direct_window_evaluation() {
        let mut rng = Rng::new(7);
        for _ in 0..5 {
            let a = random_image(20, &mut rng);
            let b = random_image(20, &mut rng);
            let fast = ssim(&a, &b).unwrap();
            let direct = ssim_direct(&a, &b);
            assert!(
                (fast - direct).abs() < 1e-10,
                "separable {fast} vs direct {direct}"
            );
        }
    }

    #[test]
    fn ssim_rejects_images_smaller_than_the_window() {
        let mut rng = Rng::new(8);
        let a = random_image(10, &mut rng);
        let b = random_image(10, &mut rng);
        assert!(matches!(ssim(&a, &b), Err(Error::Config(_))));
    }

    #[test]
    fn metrics_reject_mismatched_shapes() {
        let mut rng = Rng::new(9);
        let a = random_image(16, &mut rng);
        let b = random_image(17, &mut rng);
        assert!(matches!(psnr_db(&a, &b), Err(Error::DimensionMismatch(_))));
        assert!(matches!(ssim(&a, &b), Err(Error::DimensionMismatch(_))));
    }
}
