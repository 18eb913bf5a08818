//! PSNR and SSIM on `[C, H, W]` or `[1, C, H, W]` images.

use std::fmt;

use serde::Serialize;

use crate::error::{config_err, Result};
use crate::numerics::{Scalar, Tensor};

fn check_pair<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return config_err(format!("image shapes differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// `10 log10(peak² / MSE)`, accumulated in f64. Identical inputs give `+inf`.
pub fn psnr<T: Scalar>(reference: &Tensor<T>, test: &Tensor<T>, peak: f64) -> Result<f64> {
    check_pair(reference, test)?;
    if !(peak > 0.0) {
        return config_err(format!("peak {peak} must be positive"));
    }
    let se: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            d * d
        })
        .sum();
    let mse = se / reference.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SsimWindow {
    /// 11x11 Gaussian, σ = 1.5.
    #[default]
    Gaussian11,
    /// 8x8 box.
    Uniform8,
}

impl SsimWindow {
    /// Normalized 1-D taps; the 2-D window is their outer product.
    pub fn taps(self) -> Vec<f64> {
        let raw: Vec<f64> = match self {
            SsimWindow::Gaussian11 => (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect(),
            SsimWindow::Uniform8 => vec![1.0; 8],
        };
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// BT.601 luma for 3-channel images; single-channel images pass through.
pub fn luma<T: Scalar>(image: &Tensor<T>) -> Result<(Vec<f64>, usize, usize)> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] | [1, c, h, w] => (c, h, w),
        _ => return config_err(format!("expected [C,H,W] or [1,C,H,W], got {:?}", image.shape())),
    };
    let d = image.data();
    let hw = h * w;
    let y = match c {
        1 => d.iter().map(|v| v.to_f64_lossy()).collect(),
        3 => (0..hw)
            .map(|i| {
                0.299 * d[i].to_f64_lossy() + 0.587 * d[hw + i].to_f64_lossy() + 0.114 * d[2 * hw + i].to_f64_lossy()
            })
            .collect(),
        _ => return config_err(format!("SSIM needs 1 or 3 channels, got {c}")),
    };
    Ok((y, h, w))
}

/// Valid-region separable filter.
fn filter(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(j, t)| t * x[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(j, t)| t * rows[(r + j) * ow + c]).sum();
        }
    }
    out
}

/// Mean of the local SSIM map over all fully covered window positions.
pub fn ssim<T: Scalar>(reference: &Tensor<T>, test: &Tensor<T>, peak: f64, window: SsimWindow) -> Result<f64> {
    check_pair(reference, test)?;
    let (x, h, w) = luma(reference)?;
    let (y, _, _) = luma(test)?;
    let taps = window.taps();
    if h < taps.len() || w < taps.len() {
        return config_err(format!("image {h}x{w} is smaller than the {0}x{0} SSIM window", taps.len()));
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filter(&x, h, w, &taps);
    let my = filter(&y, h, w, &taps);
    let exx = filter(&prod(&x, &x), h, w, &taps);
    let eyy = filter(&prod(&y, &y), h, w, &taps);
    let exy = filter(&prod(&x, &y), h, w, &taps);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let sxx = exx[i] - a * a;
            let syy = eyy[i] - b * b;
            let sxy = exy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * sxy + c2)) / ((a * a + b * b + c1) * (sxx + syy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
}

impl MetricReport {
    pub fn push(&mut self, name: impl Into<String>, psnr_db: f64, ssim: f64) {
        self.images.push(ImageMetrics { name: name.into(), psnr_db, ssim });
    }

    pub fn mean_psnr(&self) -> f64 {
        self.images.iter().map(|m| m.psnr_db).sum::<f64>() / self.images.len() as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.images.iter().map(|m| m.ssim).sum::<f64>() / self.images.len() as f64
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.images.iter().map(|m| m.name.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<width$}  {:>9}  {:>7}", "image", "psnr_db", "ssim")?;
        for m in &self.images {
            writeln!(f, "{:<width$}  {:>9.4}  {:>7.5}", m.name, m.psnr_db, m.ssim)?;
        }
        write!(f, "{:<width$}  {:>9.4}  {:>7.5}", "mean", self.mean_psnr(), self.mean_ssim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::SeededStream;

    fn rand_img(seed: u64, shape: &[usize]) -> Tensor<f64> {
        let mut s = SeededStream::new(seed, 1);
        Tensor::from_fn(shape, |_| s.uniform_open0())
    }

    #[test]
    fn psnr_examples() {
        let a = rand_img(1, &[3, 8, 8]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 16.0 / 255.0);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-9);
        assert!(psnr(&a, &rand_img(1, &[3, 8, 9]), 1.0).is_err());
    }

    #[test]
    fn ssim_constant_images_are_luminance_only() {
        let a = Tensor::<f64>::full(&[1, 16, 16], 0.5);
        let b = Tensor::<f64>::full(&[1, 16, 16], 0.25);
        let c1 = 1e-4;
        let want = (2.0 * 0.5 * 0.25 + c1) / (0.25 + 0.0625 + c1);
        for w in [SsimWindow::Gaussian11, SsimWindow::Uniform8] {
            assert!((ssim(&a, &b, 1.0, w).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_self_is_one_and_symmetric() {
        let a = rand_img(2, &[3, 20, 24]);
        let b = rand_img(3, &[3, 20, 24]);
        assert_eq!(ssim(&a, &a, 1.0, SsimWindow::Gaussian11).unwrap(), 1.0);
        let ab = ssim(&a, &b, 1.0, SsimWindow::Gaussian11).unwrap();
        let ba = ssim(&b, &a, 1.0, SsimWindow::Gaussian11).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ssim(&Tensor::<f64>::zeros(&[1, 10, 12]), &Tensor::zeros(&[1, 10, 12]), 1.0, SsimWindow::Gaussian11).is_err());
    }

    #[test]
    fn psnr_falls_with_sigma() {
        let clean = rand_img(4, &[1, 3, 32, 32]);
        let mut last = f64::INFINITY;
        for s in [5.0, 15.0, 25.0, 50.0] {
            let noisy = crate::noise::apply_noise(&clean, &crate::noise::NoiseSpec::awgn(s / 255.0, 1), 0).unwrap();
            let p = psnr(&clean, &noisy, 1.0).unwrap();
            assert!(p < last);
            let clamped = noisy.clamp(0.0, 1.0);
            assert!(psnr(&clean, &clamped, 1.0).unwrap() >= p);
            last = p;
        }
    }

    #[test]
    fn report_means() {
        let mut r = MetricReport::default();
        r.push("a", 30.0, 0.9);
        r.push("b", 20.0, 0.7);
        assert_eq!(r.mean_psnr(), 25.0);
        assert!((r.mean_ssim() - 0.8).abs() < 1e-15);
        assert!(r.to_string().contains("mean"));
    }
}
