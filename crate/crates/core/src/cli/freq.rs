//! Spectral peak picking and least-squares sinusoid fitting.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ChoreoError, Result};

/// Minimum series length accepted by [`freq_extract`].
pub const MIN_SAMPLES: usize = 1 << 12;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Peak {
    pub frequency: f64,
    pub amplitude: f64,
}

/// Dominant frequencies of a uniformly sampled series, strongest first.
///
/// The mean is removed, a Hann window applied, and each local maximum of
/// the magnitude spectrum refined by a parabola through the log-magnitudes
/// of its three bins. Peaks weaker than 5% of the strongest are dropped,
/// which keeps Hann side lobes out of the list.
pub fn freq_extract(series: &[f64], rate: f64, top_k: usize) -> Result<Vec<Peak>> {
    if series.len() < MIN_SAMPLES {
        return Err(ChoreoError::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            series.len()
        )));
    }
    if !(rate > 0.0) {
        return Err(ChoreoError::InvalidInput("sample rate must be positive".into()));
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let scale = series.iter().fold(mean.abs(), |m, x| m.max(x.abs())).max(1e-300);
    let spread = series.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * scale.max(1.0) {
        return Ok(Vec::new());
    }
    let window: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let wsum: f64 = window.iter().sum();
    let mut buf: Vec<Complex<f64>> =
        series.iter().zip(&window).map(|(x, w)| Complex::new((x - mean) * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mag: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
    let top = mag[1..].iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(Vec::new());
    }
    let mut peaks = Vec::new();
    for k in 1..half {
        if mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] && mag[k] >= 0.05 * top {
            let (a, b, c) = (mag[k - 1].max(1e-300).ln(), mag[k].ln(), mag[k + 1].max(1e-300).ln());
            let den = a - 2.0 * b + c;
            let off = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            let peak_log = b - 0.25 * (a - c) * off;
            peaks.push(Peak {
                frequency: (k as f64 + off) * rate / n as f64,
                amplitude: 2.0 * peak_log.exp() / wsum,
            });
        }
    }
    peaks.sort_by(|x, y| y.amplitude.partial_cmp(&x.amplitude).unwrap());
    peaks.truncate(top_k);
    Ok(peaks)
}

/// Result of [`fit_sinusoid`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SineFit {
    pub frequency: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Residual of the best `c + A cos(2 pi f t) + B sin(2 pi f t)` at fixed `f`.
fn project(t: &[f64], x: &[f64], f: f64) -> (f64, [f64; 3]) {
    let w = 2.0 * PI * f;
    let mut g = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (&ti, &xi) in t.iter().zip(x) {
        let b = [1.0, (w * ti).cos(), (w * ti).sin()];
        for i in 0..3 {
            r[i] += b[i] * xi;
            for j in 0..3 {
                g[i][j] += b[i] * b[j];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| g[i][j]);
    let coef = m
        .lu()
        .solve(&nalgebra::Vector3::new(r[0], r[1], r[2]))
        .map(|v| [v[0], v[1], v[2]])
        .unwrap_or([0.0; 3]);
    let mut ss = 0.0;
    for (&ti, &xi) in t.iter().zip(x) {
        let e = xi - coef[0] - coef[1] * (w * ti).cos() - coef[2] * (w * ti).sin();
        ss += e * e;
    }
    (ss, coef)
}

/// Least-squares single-tone fit over `[f_lo, f_hi]`.
///
/// Resolves frequencies from records holding only a few cycles, where FFT
/// bins are too coarse. A dense scan locates the global minimum of the
/// projected residual, then golden-section search refines it.
pub fn fit_sinusoid(t: &[f64], x: &[f64], f_lo: f64, f_hi: f64) -> Result<SineFit> {
    if t.len() != x.len() || t.len() < 8 {
        return Err(ChoreoError::InvalidInput("need at least 8 paired samples".into()));
    }
    if !(f_lo > 0.0 && f_hi > f_lo) {
        return Err(ChoreoError::InvalidInput("need 0 < f_lo < f_hi".into()));
    }
    let scan = 2000;
    let step = (f_hi - f_lo) / scan as f64;
    let mut best = (f64::INFINITY, f_lo);
    for k in 0..=scan {
        let f = f_lo + k as f64 * step;
        let (ss, _) = project(t, x, f);
        if ss < best.0 {
            best = (ss, f);
        }
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = ((best.1 - step).max(f_lo * 0.5), best.1 + step);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (project(t, x, c).0, project(t, x, d).0);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = project(t, x, c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = project(t, x, d).0;
        }
    }
    let f = 0.5 * (a + b);
    let (ss, coef) = project(t, x, f);
    Ok(SineFit {
        frequency: f,
        amplitude: coef[1].hypot(coef[2]),
        offset: coef[0],
        rms: (ss / t.len() as f64).sqrt(),
    })
}
