//! Gravitational quantum states: Airy eigenbasis, projection of the initial
//! Gaussian, and momentum-space eigenfunctions.
//!
//! Momentum-space tables are kept dimensionless. With `κ = p_z / p_g` and
//! `u = z / ℓ_g`, the n-th eigenfunction `ψ_n(u) = Θ(u) Ai(u - λ_n) / Ai'(-λ_n)`
//! has transform `F_n(κ)`, and the physical amplitude is
//! `ψ̃_n(p_z) = p_g^{-1/2} F_n(p_z / p_g)`. The table therefore does not depend
//! on `g` and is shared by every acceleration in a likelihood scan.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{InitialWavePacket, PhysicalContext};
use crate::special::airy::airy_unchecked;
use crate::special::{airy_zeros, fourier_transform_padded, AiryZeroTable};

/// Number of states kept below the absorber.
pub const DEFAULT_STATE_COUNT: usize = 100;

/// Sampling parameters for the momentum-space eigenfunction table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenGridSpec {
    /// position samples on `[0, extent_factor · λ_{n_max}]` (units of ℓ_g)
    pub z_samples: usize,
    pub extent_factor: f64,
    /// zero-padded transform length; sets the momentum step
    pub fft_len: usize,
    /// half-width of the stored momentum window (units of p_g)
    pub kappa_max: f64,
}

impl Default for EigenGridSpec {
    fn default() -> Self {
        Self {
            z_samples: 1 << 14,
            extent_factor: 1.5,
            fft_len: 1 << 19,
            kappa_max: 48.0,
        }
    }
}

/// Dimensionless `F_n(κ)` for `n = 1..=n_states` on a uniform κ window.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTable {
    pub(crate) spec: EigenGridSpec,
    pub(crate) zeros: AiryZeroTable,
    pub(crate) kappa_start: f64,
    pub(crate) kappa_step: f64,
    pub(crate) n_kappa: usize,
    /// node-major: `values[k * n_states + (n - 1)]`
    pub(crate) values: Vec<Complex64>,
    /// `∫|F_n|² dκ` over the full transform grid
    pub(crate) full_norms: Vec<f64>,
    /// per cell and state, the largest `|F_n|` on the interpolation stencil
    #[doc(hidden)]
    pub(crate) bounds: std::sync::OnceLock<Vec<f64>>,
}

impl EigenTable {
    pub fn build(n_states: usize, spec: EigenGridSpec) -> Result<Self> {
        let zeros = airy_zeros(n_states)?;
        let top = zeros.get(n_states);
        // small bases still need the classically forbidden tail of the top state
        let extent = (spec.extent_factor * top).max(top + 16.0);
        let dz = extent / spec.z_samples as f64;

        let transforms: Vec<(Vec<Complex64>, f64, f64, f64)> = (1..=n_states)
            .into_par_iter()
            .map(|n| {
                let lambda = zeros.get(n);
                let (_, slope) = airy_unchecked(-lambda);
                let samples: Vec<Complex64> = (0..spec.z_samples)
                    .map(|j| {
                        // the mirror node is a zero by definition; Ai(-λ_n) only vanishes to ~1e-13
                        if j == 0 {
                            return Complex64::new(0.0, 0.0);
                        }
                        let u = j as f64 * dz;
                        Complex64::new(airy_unchecked(u - lambda).0 / slope, 0.0)
                    })
                    .collect();
                let tab = fourier_transform_padded(&samples, 0.0, dz, 1.0, spec.fft_len)?;
                let full = tab.norm_sqr();
                let lo = ((-spec.kappa_max - tab.start) / tab.step).ceil() as usize;
                let hi = ((spec.kappa_max - tab.start) / tab.step).floor() as usize;
                let window = tab.values[lo..=hi].to_vec();
                Ok((window, tab.abscissa(lo), tab.step, full))
            })
            .collect::<Result<_>>()?;

        let n_kappa = transforms[0].0.len();
        let kappa_start = transforms[0].1;
        let kappa_step = transforms[0].2;
        let mut values = vec![Complex64::new(0.0, 0.0); n_kappa * n_states];
        for (n, (window, ..)) in transforms.iter().enumerate() {
            for (k, v) in window.iter().enumerate() {
                values[k * n_states + n] = *v;
            }
        }
        let full_norms = transforms.iter().map(|t| t.3).collect();
        Ok(Self {
            spec,
            zeros,
            kappa_start,
            kappa_step,
            n_kappa,
            values,
            full_norms,
            bounds: std::sync::OnceLock::new(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.zeros.len()
    }

    pub fn zeros(&self) -> &AiryZeroTable {
        &self.zeros
    }

    pub fn spec(&self) -> &EigenGridSpec {
        &self.spec
    }

    pub fn kappa_len(&self) -> usize {
        self.n_kappa
    }

    pub fn kappa_step(&self) -> f64 {
        self.kappa_step
    }

    pub fn kappa(&self, k: usize) -> f64 {
        self.kappa_start + k as f64 * self.kappa_step
    }

    /// Half-width of the window where interpolation is available.
    pub fn kappa_limit(&self) -> f64 {
        (-self.kappa_start).min(self.kappa(self.n_kappa - 1)) - 2.0 * self.kappa_step
    }

    /// `∫|F_n|² dκ` over the full transform grid.
    pub fn full_norm(&self, n: usize) -> f64 {
        self.full_norms[n - 1]
    }

    /// All states at node `k`.
    pub fn node(&self, k: usize) -> &[Complex64] {
        let n = self.n_states();
        &self.values[k * n..(k + 1) * n]
    }

    /// `Σ_n w_n F_n(κ_k)` at node `k`.
    pub fn combine_node(&self, k: usize, weights: &[Complex64]) -> Complex64 {
        self.node(k)
            .iter()
            .zip(weights)
            .fold(Complex64::new(0.0, 0.0), |acc, (f, w)| acc + f * w)
    }

    /// Index of the node at or below `kappa` and the cubic Lagrange weights
    /// for nodes `i-1..=i+2`; `None` when the stencil leaves the window.
    fn stencil(&self, kappa: f64) -> Option<(usize, [f64; 4])> {
        let s = (kappa - self.kappa_start) / self.kappa_step;
        if !s.is_finite() || s < 1.0 {
            return None;
        }
        let i = s.floor() as usize;
        if i + 2 >= self.n_kappa {
            return None;
        }
        let u = s - i as f64;
        let w = [
            -u * (u - 1.0) * (u - 2.0) / 6.0,
            (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
            -(u + 1.0) * u * (u - 2.0) / 2.0,
            (u + 1.0) * u * (u - 1.0) / 6.0,
        ];
        Some((i, w))
    }

    /// `Σ_n w_n F_n(κ)` by cubic interpolation; `None` outside the window.
    pub fn combine(&self, kappa: f64, weights: &[Complex64]) -> Option<Complex64> {
        let (i, l) = self.stencil(kappa)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, lj) in l.iter().enumerate() {
            acc += self.combine_node(i + j - 1, weights) * lj;
        }
        Some(acc)
    }

    /// Cell `[κ_i, κ_{i+1})` containing `kappa`, if interpolation is available there.
    pub fn cell(&self, kappa: f64) -> Option<usize> {
        self.stencil(kappa).map(|(i, _)| i)
    }

    /// `max_{j ∈ i-1..=i+2} |F_n(κ_j)|` for cell `i`, laid out like the node
    /// values. Cells without a full stencil hold zeros.
    pub fn cell_bounds(&self) -> &[f64] {
        self.bounds.get_or_init(|| {
            let n = self.n_states();
            let mut out = vec![0.0; self.n_kappa * n];
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                if i < 1 || i + 2 >= self.n_kappa {
                    return;
                }
                for j in i - 1..=i + 2 {
                    for (b, v) in row.iter_mut().zip(self.node(j)) {
                        *b = f64::max(*b, v.norm());
                    }
                }
            });
            out
        })
    }

    /// `F_n(κ)` for one 1-based state index.
    pub fn state(&self, n: usize, kappa: f64) -> Option<Complex64> {
        let (i, l) = self.stencil(kappa)?;
        let idx = n - 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, lj) in l.iter().enumerate() {
            acc += self.node(i + j - 1)[idx] * lj;
        }
        Some(acc)
    }
}

/// Analytic projection coefficients of the Gaussian packet on the first
/// `n_max` states:
///
/// `c_n = (ζ/ℓ)^{1/2} (8π)^{1/4} / Ai'(-λ_n) · Ai(h/ℓ - λ_n + ζ⁴/ℓ⁴)
///        · exp[(ζ/ℓ)² (h/ℓ - λ_n + (2/3) ζ⁴/ℓ⁴)]`
///
/// It is the exact overlap with a Gaussian on the whole line, so it holds as
/// long as the packet does not reach the mirror.
pub fn project_coefficients(wp: &InitialWavePacket, ctx: &PhysicalContext, n_max: usize) -> Result<Vec<Complex64>> {
    let zeros = airy_zeros(n_max)?;
    project_on_zeros(wp, ctx, &zeros)
}

pub fn project_on_zeros(wp: &InitialWavePacket, ctx: &PhysicalContext, zeros: &AiryZeroTable) -> Result<Vec<Complex64>> {
    wp.validate()?;
    if wp.projection_warning() {
        log::warn!(
            "ζ/h = {:.3} exceeds {}; analytic projection coefficients may be inaccurate",
            wp.width / wp.height,
            crate::physics::PROJECTION_VALIDITY_RATIO
        );
    }
    let l = ctx.length_scale;
    let s = wp.width / l;
    let s2 = s * s;
    let s4 = s2 * s2;
    let h = wp.height / l;
    let pref = s.sqrt() * (8.0 * PI).powf(0.25);
    Ok(zeros
        .as_slice()
        .iter()
        .map(|&lambda| {
            let (_, slope) = airy_unchecked(-lambda);
            let (ai, _) = airy_unchecked(h - lambda + s4);
            let c = pref / slope * ai * (s2 * (h - lambda + 2.0 / 3.0 * s4)).exp();
            Complex64::new(c, 0.0)
        })
        .collect())
}

/// Eigenbasis of the bouncer at one acceleration: coefficients of the initial
/// packet plus the shared momentum table.
#[derive(Debug, Clone)]
pub struct GqsBasis {
    pub ctx: PhysicalContext,
    pub packet: InitialWavePacket,
    table: Arc<EigenTable>,
    coeffs: Vec<Complex64>,
    surviving_norm: f64,
}

impl GqsBasis {
    pub fn new(ctx: PhysicalContext, packet: InitialWavePacket, table: Arc<EigenTable>) -> Result<Self> {
        let coeffs = project_on_zeros(&packet, &ctx, table.zeros())?;
        let surviving_norm = coeffs.iter().map(|c| c.norm_sqr()).sum();
        Ok(Self {
            ctx,
            packet,
            table,
            coeffs,
            surviving_norm,
        })
    }

    /// Basis with explicit coefficients (used to isolate single states).
    pub fn with_coefficients(
        ctx: PhysicalContext,
        packet: InitialWavePacket,
        table: Arc<EigenTable>,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        if coeffs.len() != table.n_states() {
            return Err(Error::Config(format!(
                "{} coefficients for {} states",
                coeffs.len(),
                table.n_states()
            )));
        }
        let surviving_norm = coeffs.iter().map(|c| c.norm_sqr()).sum();
        Ok(Self {
            ctx,
            packet,
            table,
            coeffs,
            surviving_norm,
        })
    }

    /// The same packet and table at another acceleration.
    pub fn at_g(&self, g: f64) -> Result<Self> {
        Self::new(self.ctx.with_g(g)?, self.packet, Arc::clone(&self.table))
    }

    pub fn table(&self) -> &Arc<EigenTable> {
        &self.table
    }

    pub fn n_states(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `Σ |c_n|²`, the fraction of atoms passing below the absorber.
    pub fn surviving_norm(&self) -> f64 {
        self.surviving_norm
    }

    /// Writes `c_n exp(-i λ_n t / t_g)` into `out`.
    pub fn phased_into(&self, t: f64, out: &mut Vec<Complex64>) {
        let theta = t / self.ctx.time_scale;
        out.clear();
        out.extend(
            self.coeffs
                .iter()
                .zip(self.table.zeros().as_slice())
                .map(|(c, &lambda)| c * Complex64::from_polar(1.0, -lambda * theta)),
        );
    }

    /// Dimensionless amplitude `Σ c_n e^{-iλ_n t/t_g} F_n(κ)`.
    pub fn amplitude_dimensionless(&self, t: f64, kappa: f64, scratch: &mut Vec<Complex64>) -> Option<Complex64> {
        self.phased_into(t, scratch);
        self.table.combine(kappa, scratch)
    }

    /// `Π_t(p_z)` in 1/(kg·m/s); zero outside the tabulated window.
    pub fn momentum_density_at(&self, t: f64, p_z: f64, scratch: &mut Vec<Complex64>) -> f64 {
        let kappa = p_z / self.ctx.momentum_scale;
        self.amplitude_dimensionless(t, kappa, scratch)
            .map_or(0.0, |a| a.norm_sqr() / self.ctx.momentum_scale)
    }
}
