//! Desk-computable evaluation metrics: identity similarity between
//! parameter vectors, PSNR, and Gaussian-windowed SSIM.

use crate::error::{Error, Result};
use crate::parallel;
use crate::pixmap::GrayMap;
use crate::protodb;

/// Metric values for one comparison; absent entries were not requested
/// or not computable from the provided inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub id_similarity: Option<f64>,
    /// `f64::INFINITY` when the images are identical.
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
}

impl MetricReport {
    /// Machine-parsable key-value block, one metric per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(v) = self.id_similarity {
            out.push_str(&format!("id_similarity = {v:.6}\n"));
        }
        if let Some(v) = self.psnr_db {
            out.push_str(&format!("psnr = {v:.6}\n"));
        }
        if let Some(v) = self.ssim {
            out.push_str(&format!("ssim = {v:.6}\n"));
        }
        out
    }
}

/// Cosine similarity between two identity coefficient vectors.
pub fn id_similarity(alpha_a: &[f64], alpha_b: &[f64]) -> Result<f64> {
    protodb::cosine_similarity(alpha_a, alpha_b)
}

/// Peak signal-to-noise ratio in dB over flat sample arrays:
/// `10 * log10(max_value^2 / MSE)`. Identical inputs report infinity.
pub fn psnr(a: &[f64], b: &[f64], max_value: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "psnr operand".into(),
            expected: a.len(),
            actual: b.len(),
        });
    }
    if !(max_value > 0.0 && max_value.is_finite()) {
        return Err(Error::OutOfRange {
            what: "psnr max_value".into(),
            min: f64::MIN_POSITIVE,
            max: f64::INFINITY,
            value: max_value,
        });
    }
    if a.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "psnr operand".into(),
            expected: 1,
            actual: 0,
        });
    }
    let mse: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / mse).log10())
}

/// SSIM parameters: window size and Gaussian sigma, stabilizer factors
/// `k1`/`k2`, and the sample dynamic range `L` (1.0 for images scaled
/// to `[0, 1]`, 255.0 for 8-bit samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window - 1) as f64 / 2.0;
    let mut kernel: Vec<f64> = (0..window)
        .map(|k| {
            let d = k as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }
    kernel
}

/// Valid-mode separable filter; output is (w-K+1) x (h-K+1).
fn filter_valid(pixels: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let out_w = width - k + 1;
    let out_h = height - k + 1;
    let mut horiz = vec![0.0; out_w * height];
    parallel::for_each_chunk_mut(&mut horiz, out_w, |offset, row| {
        let y = offset / out_w;
        let src = &pixels[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            *out = kernel.iter().enumerate().map(|(i, w)| w * src[x + i]).sum();
        }
    });
    let mut out = vec![0.0; out_w * out_h];
    parallel::for_each_chunk_mut(&mut out, out_w, |offset, row| {
        let y = offset / out_w;
        for (x, out) in row.iter_mut().enumerate() {
            *out = kernel
                .iter()
                .enumerate()
                .map(|(i, w)| w * horiz[(y + i) * out_w + x])
                .sum();
        }
    });
    out
}

/// Mean local SSIM between two grayscale images of equal size.
///
/// Local statistics are Gaussian-weighted over a sliding window
/// (valid mode), combined with the standard stabilizers
/// `C1 = (k1 L)^2`, `C2 = (k2 L)^2`.
pub fn ssim(a: &GrayMap, b: &GrayMap, cfg: &SsimConfig) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            what: "ssim operand height x width".into(),
            expected: a.width() * a.height(),
            actual: b.width() * b.height(),
        });
    }
    if a.width() < cfg.window || a.height() < cfg.window {
        return Err(Error::WindowTooSmall {
            window: cfg.window,
            width: a.width(),
            height: a.height(),
        });
    }
    let (w, h) = (a.width(), a.height());
    let kernel = gaussian_kernel(cfg.window, cfg.sigma);

    let ap = a.pixels();
    let bp = b.pixels();
    let sq_a: Vec<f64> = ap.iter().map(|x| x * x).collect();
    let sq_b: Vec<f64> = bp.iter().map(|x| x * x).collect();
    let ab: Vec<f64> = ap.iter().zip(bp).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(ap, w, h, &kernel);
    let mu_b = filter_valid(bp, w, h, &kernel);
    let e_aa = filter_valid(&sq_a, w, h, &kernel);
    let e_bb = filter_valid(&sq_b, w, h, &kernel);
    let e_ab = filter_valid(&ab, w, h, &kernel);

    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let value = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        total += value;
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gray(seed: u64, w: usize, h: usize) -> GrayMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayMap::from_pixels(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn id_similarity_of_identical_vectors_is_one() {
        let v = vec![0.4; 80];
        assert_eq!(id_similarity(&v, &v).unwrap(), 1.0);
    }

    #[test]
    fn id_similarity_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let a: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Power-of-two scaling is exact in binary floating point, so
        // the invariance holds bitwise.
        for c in [2.0, 0.5, 1024.0] {
            let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
            assert_eq!(
                id_similarity(&a, &scaled).unwrap().to_bits(),
                id_similarity(&a, &a).unwrap().to_bits()
            );
        }
        assert_abs_diff_eq!(id_similarity(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn id_similarity_matches_hand_computation() {
        let mut a = vec![0.0; 80];
        let mut b = vec![0.0; 80];
        a[0] = 1.0;
        a[1] = 1.0;
        b[0] = 1.0;
        assert_abs_diff_eq!(
            id_similarity(&a, &b).unwrap(),
            0.7071,
            epsilon = 1e-4
        );
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let a = vec![0.5; 64];
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_of_unit_difference_matches_analytic_value() {
        let a = vec![100.0; 256];
        let b = vec![101.0; 256];
        let got = psnr(&a, &b, 255.0).unwrap();
        assert_abs_diff_eq!(got, 48.1308, epsilon = 1e-3);
    }

    #[test]
    fn psnr_of_full_range_difference_is_zero() {
        let a = vec![0.0; 256];
        let b = vec![255.0; 256];
        assert_abs_diff_eq!(psnr(&a, &b, 255.0).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn psnr_rejects_length_mismatch() {
        assert!(matches!(
            psnr(&[0.0; 4], &[0.0; 5], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn psnr_decreases_monotonically_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let base: Vec<f64> = (0..1024).map(|_| rng.random_range(0.0..1.0)).collect();
        let noise: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for amplitude in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let noisy: Vec<f64> = base
                .iter()
                .zip(&noise)
                .map(|(x, n)| x + amplitude * n)
                .collect();
            let v = psnr(&base, &noisy, 1.0).unwrap();
            assert!(v < last, "psnr must fall as noise grows");
            last = v;
        }
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let img = random_gray(63, 48, 40);
        let got = ssim(&img, &img, &SsimConfig::default()).unwrap();
        assert_abs_diff_eq!(got, 1.0, epsilon = 1e-9);
    }

    fn checkerboard(size: usize, cell: usize) -> GrayMap {
        GrayMap::from_fn(size, size, |x, y| {
            if ((x / cell) + (y / cell)) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Direct evaluation of the SSIM definition: an explicit window
    /// loop with 2D Gaussian weights, no separable filtering.
    fn ssim_oracle(a: &GrayMap, b: &GrayMap, cfg: &SsimConfig) -> f64 {
        let k = cfg.window;
        let half = (k - 1) as f64 / 2.0;
        let mut weights = vec![0.0; k * k];
        let mut total = 0.0;
        for j in 0..k {
            for i in 0..k {
                let dx = i as f64 - half;
                let dy = j as f64 - half;
                let w = (-(dx * dx + dy * dy) / (2.0 * cfg.sigma * cfg.sigma)).exp();
                weights[j * k + i] = w;
                total += w;
            }
        }
        for w in &mut weights {
            *w /= total;
        }
        let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
        let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=(a.height() - k) {
            for x0 in 0..=(a.width() - k) {
                let mut ma = 0.0;
                let mut mb = 0.0;
                let mut eaa = 0.0;
                let mut ebb = 0.0;
                let mut eab = 0.0;
                for j in 0..k {
                    for i in 0..k {
                        let w = weights[j * k + i];
                        let pa = a.get(x0 + i, y0 + j);
                        let pb = b.get(x0 + i, y0 + j);
                        ma += w * pa;
                        mb += w * pb;
                        eaa += w * pa * pa;
                        ebb += w * pb * pb;
                        eab += w * pa * pb;
                    }
                }
                let va = eaa - ma * ma;
                let vb = ebb - mb * mb;
                let cov = eab - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        sum / count as f64
    }

    #[test]
    fn complemented_checkerboard_scores_below_point_one() {
        let a = checkerboard(32, 4);
        let b = GrayMap::from_pixels(
            32,
            32,
            a.pixels().iter().map(|v| 1.0 - v).collect(),
        )
        .unwrap();
        let cfg = SsimConfig::default();
        let got = ssim(&a, &b, &cfg).unwrap();
        let want = ssim_oracle(&a, &b, &cfg);
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        assert!(got < 0.1, "anti-correlated structure scored {got}");
    }

    #[test]
    fn ssim_matches_direct_oracle_on_random_images() {
        let a = random_gray(64, 24, 20);
        let b = random_gray(65, 24, 20);
        let cfg = SsimConfig::default();
        let got = ssim(&a, &b, &cfg).unwrap();
        let want = ssim_oracle(&a, &b, &cfg);
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn constant_images_reduce_to_the_luminance_term() {
        let a = GrayMap::from_fn(16, 16, |_, _| 0.25);
        let b = GrayMap::from_fn(16, 16, |_, _| 0.75);
        let cfg = SsimConfig::default();
        let got = ssim(&a, &b, &cfg).unwrap();
        let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
        let want = (2.0 * 0.25 * 0.75 + c1) / (0.25f64.powi(2) + 0.75f64.powi(2) + c1);
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images_and_size_mismatch() {
        let a = random_gray(66, 8, 8);
        assert!(matches!(
            ssim(&a, &a, &SsimConfig::default()),
            Err(Error::WindowTooSmall { .. })
        ));
        let b = random_gray(67, 16, 16);
        let c = random_gray(68, 16, 12);
        assert!(matches!(
            ssim(&b, &c, &SsimConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn report_text_includes_only_present_metrics() {
        let report = MetricReport {
            id_similarity: Some(1.0),
            psnr_db: Some(f64::INFINITY),
            ssim: None,
        };
        let text = report.to_text();
        assert!(text.contains("id_similarity = 1.000000"));
        assert!(text.contains("psnr = inf"));
        assert!(!text.contains("ssim"));
    }

    proptest! {
        /// SSIM is symmetric and bounded for images in [0, 1].
        #[test]
        fn ssim_is_symmetric_and_bounded(seed_a in 0u64..300, seed_b in 300u64..600) {
            let a = random_gray(seed_a, 16, 16);
            let b = random_gray(seed_b, 16, 16);
            let cfg = SsimConfig::default();
            let ab = ssim(&a, &b, &cfg).unwrap();
            let ba = ssim(&b, &a, &cfg).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
