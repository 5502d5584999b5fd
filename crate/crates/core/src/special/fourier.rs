//! Unitary Fourier transform of uniformly sampled wave functions.
//!
//! Convention, fixed crate-wide:
//! `ψ̃(p) = (2πħ)^{-1/2} ∫ ψ(z) exp(-i p z / ħ) dz`, so that
//! `∫|ψ̃|² dp = ∫|ψ|² dz`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Smallest accepted sample count.
pub const MIN_SAMPLES: usize = 1 << 10;
/// Boundary samples must stay below this fraction of the peak magnitude.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Complex function tabulated on `start + k * step`, `k = 0..values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    pub start: f64,
    pub step: f64,
    pub values: Vec<Complex64>,
}

impl Tabulated {
    pub fn abscissa(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    /// `∫|f|²` by the rectangle rule, exact for band-limited samples.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.step
    }
}

/// Forward transform of samples `ψ(z0 + j dz)`.
pub fn fourier_transform_tabulated(samples: &[Complex64], z0: f64, dz: f64, hbar: f64) -> Result<Tabulated> {
    fourier_transform_padded(samples, z0, dz, hbar, samples.len())
}

/// Forward transform with the samples zero-padded to `fft_len` points, which
/// refines the momentum step to `2πħ / (fft_len dz)`.
pub fn fourier_transform_padded(
    samples: &[Complex64],
    z0: f64,
    dz: f64,
    hbar: f64,
    fft_len: usize,
) -> Result<Tabulated> {
    check_input(samples, dz, hbar)?;
    if fft_len < samples.len() {
        return Err(Error::Config(format!(
            "padded length {fft_len} shorter than {} samples",
            samples.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    buf[..samples.len()].copy_from_slice(samples);
    FftPlanner::new().plan_fft_forward(fft_len).process(&mut buf);

    let n = fft_len;
    let dp = 2.0 * PI * hbar / (n as f64 * dz);
    let half = n / 2;
    let first = -(half as isize) as f64;
    let scale = dz / (2.0 * PI * hbar).sqrt();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        // ascending momenta: indices half..n hold the negative frequencies
        let src = (i + n - half) % n;
        let p = (first + i as f64) * dp;
        let shift = Complex64::from_polar(1.0, -p * z0 / hbar);
        values.push(buf[src] * scale * shift);
    }
    Ok(Tabulated {
        start: first * dp,
        step: dp,
        values,
    })
}

/// Inverse of [`fourier_transform_tabulated`], returning samples on `z0 + j dz`.
pub fn inverse_fourier_transform(spectrum: &Tabulated, z0: f64, hbar: f64) -> Result<Vec<Complex64>> {
    let n = spectrum.values.len();
    if n < 2 {
        return Err(Error::Config("spectrum needs at least two samples".into()));
    }
    let dp = spectrum.step;
    let half = n / 2;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let p = spectrum.abscissa(i);
        let unshift = Complex64::from_polar(1.0, p * z0 / hbar);
        buf[(i + n - half) % n] = spectrum.values[i] * unshift;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = dp / (2.0 * PI * hbar).sqrt();
    Ok(buf.iter().map(|v| v * scale).collect())
}

fn check_input(samples: &[Complex64], dz: f64, hbar: f64) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Config(format!(
            "{} samples given, at least {MIN_SAMPLES} required",
            samples.len()
        )));
    }
    if !(dz > 0.0) || !(hbar > 0.0) {
        return Err(Error::Domain("sample step and ħ must be positive".into()));
    }
    let peak = samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(());
    }
    let edge = samples[0].norm().max(samples[samples.len() - 1].norm());
    let ratio = edge / peak;
    if ratio > BOUNDARY_TOLERANCE {
        return Err(Error::Aliasing { ratio });
    }
    Ok(())
}
