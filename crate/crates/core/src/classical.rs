//! Classical timing baseline: atoms released at rest from a Gaussian trap
//! state fall a height `H`, and only the arrival time is recorded.
//!
//! With initial height `z₀` and vertical velocity `v₀`, the arrival time solves
//! `z₀ + v₀ T − g T²/2 = −H`. Integrating the Gaussian initial conditions
//! against that constraint leaves one integral over `z₀`:
//!
//! `p_g(T) = ∫ dz₀ N(z₀; ζ) N(v₀(T, z₀); σ_v) |g/2 + (H + z₀)/T²|`,
//! with `v₀ = (g T²/2 − H − z₀)/T`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{FisherOptions, FisherReport, ScanOptions, StatisticalModel};
use crate::physics::{PhysicalContext, HBAR};
use crate::sampling::{stream_rng, Event, EventSet, BLOCK_SIZE};

/// Standardized abscissae `s_j ∈ [-8, 8]` with trapezoid weights `φ(s_j) Δs`.
/// For a Gaussian weight this rule converges geometrically in `1/Δs`.
fn gaussian_rule() -> &'static [(f64, f64)] {
    static RULE: std::sync::OnceLock<Vec<(f64, f64)>> = std::sync::OnceLock::new();
    RULE.get_or_init(|| {
        let step = 0.25;
        let n = (16.0 / step) as usize;
        (0..=n)
            .map(|j| {
                let s = -8.0 + j as f64 * step;
                (s, step * (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalConfig {
    /// initial position dispersion `ζ` (m)
    pub width: f64,
    /// fall height `H` (m)
    pub fall_height: f64,
    pub mass: f64,
}

impl ClassicalConfig {
    pub fn new(width: f64, fall_height: f64, mass: f64) -> Result<Self> {
        let c = Self {
            width,
            fall_height,
            mass,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("width", self.width), ("fall height", self.fall_height), ("mass", self.mass)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("classical {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `ħ / (2 m ζ)`
    pub fn velocity_dispersion(&self) -> f64 {
        HBAR / (2.0 * self.mass * self.width)
    }
}

/// Arrival-time density for explicit position and velocity dispersions.
pub fn arrival_time_density(time: f64, g: f64, fall_height: f64, z_sd: f64, v_sd: f64) -> f64 {
    if !(time > 0.0) {
        return 0.0;
    }
    let norm = 1.0 / (v_sd * (2.0 * std::f64::consts::PI).sqrt());
    gaussian_rule()
        .iter()
        .map(|&(s, w)| {
            let z0 = z_sd * s;
            let v0 = (0.5 * g * time * time - fall_height - z0) / time;
            let u = v0 / v_sd;
            w * norm * (-0.5 * u * u).exp() * (0.5 * g + (fall_height + z0) / (time * time)).abs()
        })
        .sum()
}

/// Arrival-time density of the minimal-uncertainty release.
pub fn classical_fall_density(cfg: &ClassicalConfig, ctx: &PhysicalContext, time: f64) -> f64 {
    arrival_time_density(time, ctx.g, cfg.fall_height, cfg.width, cfg.velocity_dispersion())
}

/// Exact fall time for one initial condition.
pub fn fall_time(z0: f64, v0: f64, g: f64, fall_height: f64) -> f64 {
    (v0 + (v0 * v0 + 2.0 * g * (fall_height + z0)).sqrt()) / g
}

/// The classical timing experiment as a statistical model in `g`.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalModel {
    pub cfg: ClassicalConfig,
    pub g0: f64,
    ln_floor: f64,
}

impl ClassicalModel {
    pub fn new(cfg: ClassicalConfig, g0: f64, density_floor: f64) -> Result<Self> {
        cfg.validate()?;
        if !(g0 > 0.0) || !(density_floor > 0.0) {
            return Err(Error::Config("g0 and the density floor must be positive".into()));
        }
        Ok(Self {
            cfg,
            g0,
            ln_floor: density_floor.ln(),
        })
    }

    pub fn density(&self, time: f64, g: f64) -> f64 {
        arrival_time_density(time, g, self.cfg.fall_height, self.cfg.width, self.cfg.velocity_dispersion())
    }

    /// Scan window suited to percent-level timing resolution.
    pub fn default_scan() -> ScanOptions {
        ScanOptions {
            initial_half_width: 5e-3,
            max_half_width: 0.25,
            ..ScanOptions::default()
        }
    }

    /// Arrival-time range holding essentially all the mass at `g`.
    pub fn time_range(&self, g: f64) -> (f64, f64) {
        let v = 12.0 * self.cfg.velocity_dispersion();
        let h = self.cfg.fall_height;
        let lo = fall_time(0.0, -v, g, h);
        let hi = fall_time(0.0, v, g, h);
        (lo, hi)
    }
}

impl StatisticalModel for ClassicalModel {
    fn mode(&self) -> &'static str {
        "classical"
    }

    fn reference_g(&self) -> f64 {
        self.g0
    }

    fn ln_densities(&self, events: &[Event], g: f64) -> Result<(Vec<f64>, usize)> {
        if !(g > 0.0) {
            return Err(Error::Domain(format!("g = {g} must be positive")));
        }
        let mut floored = 0;
        let v = events
            .iter()
            .map(|e| {
                let p = self.density(e.t, g);
                let l = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
                if l < self.ln_floor {
                    floored += 1;
                    self.ln_floor
                } else {
                    l
                }
            })
            .collect();
        Ok((v, floored))
    }

    fn sample(&self, g: f64, n: usize, seed: u64) -> Result<EventSet> {
        if n == 0 {
            return Err(Error::Config("at least one event must be requested".into()));
        }
        let (z_sd, v_sd, h) = (self.cfg.width, self.cfg.velocity_dispersion(), self.cfg.fall_height);
        let blocks = n.div_ceil(BLOCK_SIZE);
        let events: Vec<Event> = (0..blocks)
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = stream_rng(seed, b as u64);
                let count = BLOCK_SIZE.min(n - b * BLOCK_SIZE);
                (0..count)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let v: f64 = StandardNormal.sample(&mut rng);
                        Event {
                            x: 0.0,
                            t: fall_time(z_sd * z, v_sd * v, g, h),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(EventSet::new(events, g, seed))
    }

    /// `∫ (∂_g p)² / p dT` by the trapezoid rule over the arrival-time range.
    fn fisher(&self, g: f64, opts: &FisherOptions) -> Result<FisherReport> {
        let h = opts.delta * g;
        let (lo, hi) = self.time_range(g);
        let n = opts.samples.max(2000);
        let dt = (hi - lo) / (n - 1) as f64;
        let mut acc = [0.0; 3];
        for k in 0..n {
            let t = lo + k as f64 * dt;
            let p0 = self.density(t, g);
            if p0 <= 0.0 {
                continue;
            }
            let (pp, pm) = (self.density(t, g + h), self.density(t, g - h));
            let (pp2, pm2) = (self.density(t, g + 0.5 * h), self.density(t, g - 0.5 * h));
            let w = if k == 0 || k + 1 == n { 0.5 * dt } else { dt };
            let d1 = (pp - pm) / (2.0 * h);
            let d1h = (pp2 - pm2) / h;
            let d2 = (pp - 2.0 * p0 + pm) / (h * h);
            acc[0] += w * d1 * d1 / p0;
            acc[1] += w * d1h * d1h / p0;
            acc[2] += w * (d1 * d1 / p0 - d2);
        }
        if (acc[0] - acc[1]).abs() > 0.1 * acc[0].abs().max(acc[1].abs()) {
            return Err(Error::StepSize {
                coarse: acc[0],
                fine: acc[1],
            });
        }
        Ok(FisherReport {
            g,
            delta: opts.delta,
            samples: n,
            score: acc[0],
            score_half_step: acc[1],
            curvature: acc[2],
            score_error: 0.0,
            curvature_error: 0.0,
        })
    }
}
