//! Image quality metrics: MSE, PSNR, SSIM.
//!
//! Values are clamped to [0, 1] before comparison; metrics are intended to
//! run on linear-float images, never on quantized 8-bit output.

use alloc::vec::Vec;

use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

fn assert_same_size(a: &Image, b: &Image) {
    assert!(
        a.width == b.width && a.height == b.height,
        "image dimension mismatch: {}x{} vs {}x{}",
        a.width,
        a.height,
        b.width,
        b.height
    );
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

pub fn mse(a: &Image, b: &Image) -> f64 {
    assert_same_size(a, b);
    let mut acc = 0.0;
    for (pa, pb) in a.pixels().iter().zip(b.pixels()) {
        for ch in 0..3 {
            let d = clamp01(pa[ch]) - clamp01(pb[ch]);
            acc += d * d;
        }
    }
    acc / (a.pixels().len() * 3) as f64
}

/// PSNR in dB for unit dynamic range, capped at 100 dB for near-identical
/// images.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    let m = mse(a, b);
    if m < 1e-10 {
        100.0
    } else {
        -10.0 * libm::log10(m)
    }
}

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn ssim_terms(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean structural similarity with the original constants: 11x11 Gaussian
/// window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1. Windows are
/// evaluated where they fit entirely; images smaller than the window fall
/// back to whole-image statistics.
pub fn ssim(a: &Image, b: &Image) -> f64 {
    assert_same_size(a, b);
    let w = a.width as usize;
    let h = a.height as usize;
    let mut total = 0.0;
    for ch in 0..3 {
        let pa: Vec<f64> = a.pixels().iter().map(|p| clamp01(p[ch])).collect();
        let pb: Vec<f64> = b.pixels().iter().map(|p| clamp01(p[ch])).collect();
        total += ssim_channel(&pa, &pb, w, h);
    }
    total / 3.0
}

fn ssim_channel(pa: &[f64], pb: &[f64], w: usize, h: usize) -> f64 {
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        // whole-image statistics, uniform weights
        let n = (w * h) as f64;
        let mu_a = pa.iter().sum::<f64>() / n;
        let mu_b = pb.iter().sum::<f64>() / n;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        let mut cov = 0.0;
        for (x, y) in pa.iter().zip(pb) {
            var_a += (x - mu_a) * (x - mu_a);
            var_b += (y - mu_b) * (y - mu_b);
            cov += (x - mu_a) * (y - mu_b);
        }
        return ssim_terms(mu_a, mu_b, var_a / n, var_b / n, cov / n);
    }
    let win = gaussian_window();
    let half = SSIM_WINDOW / 2;
    let mut acc = 0.0;
    let mut count = 0usize;
    for cy in half..h - half {
        for cx in half..w - half {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let weight = win[dy] * win[dx];
                    let idx = (cy + dy - half) * w + (cx + dx - half);
                    let va = pa[idx];
                    let vb = pb[idx];
                    mu_a += weight * va;
                    mu_b += weight * vb;
                    saa += weight * va * va;
                    sbb += weight * vb * vb;
                    sab += weight * va * vb;
                }
            }
            let var_a = saa - mu_a * mu_a;
            let var_b = sbb - mu_b * mu_b;
            let cov = sab - mu_a * mu_b;
            acc += ssim_terms(mu_a, mu_b, var_a, var_b, cov);
            count += 1;
        }
    }
    acc / count as f64
}

pub fn report(a: &Image, b: &Image) -> MetricReport {
    MetricReport { mse: mse(a, b), psnr: psnr(a, b), ssim: ssim(a, b) }
}
