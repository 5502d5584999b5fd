//! From the mirror edge to the detection plate.
//!
//! An atom with horizontal momentum `p_x` leaves the mirror (length `d`) at
//! `t = m d / p_x` with vertical momentum `p_z`, then falls a height `H` in
//! `τ̄ + p_z/(m g)` with `τ̄ = √(2H/g)`. The detector coordinates are
//!
//! `X = d + p_x τ̄ / m`, `T = t + τ̄ + p_z / (m g)`,
//!
//! and their inverse is the anamorphosis below. The map
//! `(p_x, p_z) → (X, T)` has Jacobian determinant `τ̄ / (m² g)`, so the
//! plate density is `|J(X,T)| = (g m² / τ̄) |φ̃(p_x)|² Π_t(p_z)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gqs::{momentum_density, GqsBasis, MomentumDensity};
use crate::grid::{Grid2, UniformGrid};
use crate::physics::{InitialWavePacket, PhysicalContext};

/// Ratio `H / h` below which the macroscopic fall approximation is refused.
pub const MACROSCOPIC_FALL_RATIO: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    /// mirror length `d` (m)
    pub mirror_length: f64,
    /// free-fall height `H` (m)
    pub fall_height: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            mirror_length: 0.05,
            fall_height: 0.3,
        }
    }
}

impl Geometry {
    pub fn new(mirror_length: f64, fall_height: f64) -> Result<Self> {
        let g = Self {
            mirror_length,
            fall_height,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mirror_length > 0.0) || !(self.fall_height > 0.0) || !self.mirror_length.is_finite() || !self.fall_height.is_finite() {
            return Err(Error::Config(format!(
                "geometry needs d > 0 and H > 0 (d = {}, H = {})",
                self.mirror_length, self.fall_height
            )));
        }
        Ok(())
    }

    /// Refuses packets whose height is not negligible against the fall.
    pub fn check_packet(&self, wp: &InitialWavePacket) -> Result<()> {
        if self.fall_height <= MACROSCOPIC_FALL_RATIO * wp.height {
            return Err(Error::Config(format!(
                "fall height {} m is not macroscopic compared with h = {} m",
                self.fall_height, wp.height
            )));
        }
        Ok(())
    }

    /// `τ̄ = √(2H/g)`
    pub fn mean_fall_time(&self, g: f64) -> f64 {
        (2.0 * self.fall_height / g).sqrt()
    }
}

/// State of an atom at the mirror end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorExit {
    /// time spent above the mirror (s)
    pub t: f64,
    pub p_x: f64,
    pub p_z: f64,
}

/// `(X, T) ↦ (t, p_x, p_z)`.
pub fn anamorphosis(x: f64, time: f64, geom: &Geometry, ctx: &PhysicalContext) -> Result<MirrorExit> {
    let dx = x - geom.mirror_length;
    if !(dx > 0.0) || !time.is_finite() {
        return Err(Error::Domain(format!(
            "event at X = {x} m, T = {time} s is not beyond the mirror end d = {} m",
            geom.mirror_length
        )));
    }
    let tau = geom.mean_fall_time(ctx.g);
    let t = tau * geom.mirror_length / dx;
    Ok(MirrorExit {
        t,
        p_x: ctx.mass * dx / tau,
        p_z: ctx.mass * ctx.g * (time - tau - t),
    })
}

/// Classical fall from the mirror end: `(p_x, p_z) ↦ (X, T)`, with the exit
/// time implied by `p_x`.
pub fn free_fall(p_x: f64, p_z: f64, geom: &Geometry, ctx: &PhysicalContext) -> Result<(f64, f64)> {
    if !(p_x > 0.0) || !p_z.is_finite() {
        return Err(Error::Domain(format!("atom with p_x = {p_x} never leaves the mirror")));
    }
    let tau = geom.mean_fall_time(ctx.g);
    let t = ctx.mass * geom.mirror_length / p_x;
    Ok((
        geom.mirror_length + p_x * tau / ctx.mass,
        t + tau + p_z / (ctx.mass * ctx.g),
    ))
}

/// Inverse of the anamorphosis on the `(t, p_z)` chart.
pub fn mirror_to_plate(t: f64, p_z: f64, geom: &Geometry, ctx: &PhysicalContext) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("exit time {t} s must be positive")));
    }
    let tau = geom.mean_fall_time(ctx.g);
    Ok((
        geom.mirror_length * (1.0 + tau / t),
        t + tau + p_z / (ctx.mass * ctx.g),
    ))
}

/// `|φ̃(p_x)|²`: Gaussian centred on `m v0` with dispersion `ħ/(2ζ)`.
pub fn horizontal_weight(p_x: f64, wp: &InitialWavePacket, ctx: &PhysicalContext) -> f64 {
    let sigma = wp.momentum_dispersion(ctx.hbar);
    let u = (p_x - ctx.mass * wp.kick_velocity) / sigma;
    (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

/// Accepted positions on the plate, as distances beyond the mirror end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XWindow {
    pub near: f64,
    pub far: f64,
}

impl Default for XWindow {
    fn default() -> Self {
        Self { near: 1e-3, far: 0.4 }
    }
}

impl XWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0) || !(self.far > self.near) || !self.far.is_finite() {
            return Err(Error::Config(format!(
                "X window needs 0 < near < far (near = {}, far = {})",
                self.near, self.far
            )));
        }
        Ok(())
    }
}

/// The normalized plate density at one acceleration, evaluated pointwise from
/// the eigenbasis.
///
/// Events are restricted to the X window; `T` is unrestricted. The
/// normalization is `Σ|c_n|² · Φ_x`, where `Φ_x` is the Gaussian `p_x` mass
/// landing inside the window.
#[derive(Debug, Clone)]
pub struct DetectionModel {
    basis: GqsBasis,
    geom: Geometry,
    window: XWindow,
    tau: f64,
    px_mean: f64,
    px_sigma: f64,
    px_bounds: (f64, f64),
    x_mass: f64,
}

impl DetectionModel {
    pub fn new(basis: GqsBasis, geom: Geometry, window: XWindow) -> Result<Self> {
        geom.validate()?;
        window.validate()?;
        geom.check_packet(&basis.packet)?;
        let ctx = basis.ctx;
        let tau = geom.mean_fall_time(ctx.g);
        let px_mean = ctx.mass * basis.packet.kick_velocity;
        let px_sigma = basis.packet.momentum_dispersion(ctx.hbar);
        let px_bounds = (ctx.mass * window.near / tau, ctx.mass * window.far / tau);
        let x_mass = normal_cdf((px_bounds.1 - px_mean) / px_sigma) - normal_cdf((px_bounds.0 - px_mean) / px_sigma);
        if !(x_mass > 1e-12) {
            return Err(Error::Config(format!(
                "no atoms reach the X window (mass {x_mass:e}); check v0 and the window"
            )));
        }
        if !(basis.surviving_norm() > 0.0) {
            return Err(Error::Config("no population below the absorber".into()));
        }
        Ok(Self {
            basis,
            geom,
            window,
            tau,
            px_mean,
            px_sigma,
            px_bounds,
            x_mass,
        })
    }

    /// Same packet, geometry and window at another acceleration.
    pub fn at_g(&self, g: f64) -> Result<Self> {
        Self::new(self.basis.at_g(g)?, self.geom, self.window)
    }

    pub fn g(&self) -> f64 {
        self.basis.ctx.g
    }

    pub fn ctx(&self) -> &PhysicalContext {
        &self.basis.ctx
    }

    pub fn basis(&self) -> &GqsBasis {
        &self.basis
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn window(&self) -> &XWindow {
        &self.window
    }

    pub fn mean_fall_time(&self) -> f64 {
        self.tau
    }

    /// `p_x` range landing in the X window.
    pub fn px_bounds(&self) -> (f64, f64) {
        self.px_bounds
    }

    /// Mean and dispersion of the horizontal momentum.
    pub fn px_distribution(&self) -> (f64, f64) {
        (self.px_mean, self.px_sigma)
    }

    /// `Φ_x`, the horizontal mass inside the window.
    pub fn x_window_mass(&self) -> f64 {
        self.x_mass
    }

    /// `Σ|c_n|² Φ_x`: the integral of `|J|` over the window.
    pub fn expected_mass(&self) -> f64 {
        self.basis.surviving_norm() * self.x_mass
    }

    pub fn x_range(&self) -> (f64, f64) {
        let d = self.geom.mirror_length;
        (d + self.window.near, d + self.window.far)
    }

    pub fn contains_x(&self, x: f64) -> bool {
        let (lo, hi) = self.x_range();
        x >= lo && x <= hi
    }

    /// Jacobian prefactor `g m² / τ̄`.
    pub fn jacobian(&self) -> f64 {
        let ctx = &self.basis.ctx;
        ctx.g * ctx.mass * ctx.mass / self.tau
    }

    /// `|J(X,T)|` before renormalization; zero for `X ≤ d`.
    pub fn raw_density(&self, x: f64, time: f64, scratch: &mut Vec<Complex64>) -> f64 {
        let dx = x - self.geom.mirror_length;
        if !(dx > 0.0) || !time.is_finite() {
            return 0.0;
        }
        let ctx = &self.basis.ctx;
        let t = self.tau * self.geom.mirror_length / dx;
        let p_x = ctx.mass * dx / self.tau;
        let p_z = ctx.mass * ctx.g * (time - self.tau - t);
        let u = (p_x - self.px_mean) / self.px_sigma;
        let w = (-0.5 * u * u).exp() / (self.px_sigma * (2.0 * std::f64::consts::PI).sqrt());
        if w == 0.0 {
            return 0.0;
        }
        self.jacobian() * w * self.basis.momentum_density_at(t, p_z, scratch)
    }

    /// Normalized density; zero outside the X window.
    pub fn density(&self, x: f64, time: f64, scratch: &mut Vec<Complex64>) -> f64 {
        if !self.contains_x(x) {
            return 0.0;
        }
        self.raw_density(x, time, scratch) / self.expected_mass()
    }

    /// Normalized density along `times` at a fixed position, sharing the
    /// phase factors of the exit time.
    pub fn density_profile(&self, x: f64, times: &[f64], scratch: &mut Vec<Complex64>, out: &mut Vec<f64>) {
        out.clear();
        let dx = x - self.geom.mirror_length;
        if !self.contains_x(x) || !(dx > 0.0) {
            out.resize(times.len(), 0.0);
            return;
        }
        let ctx = &self.basis.ctx;
        let t = self.tau * self.geom.mirror_length / dx;
        let p_x = ctx.mass * dx / self.tau;
        let u = (p_x - self.px_mean) / self.px_sigma;
        let w = (-0.5 * u * u).exp() / (self.px_sigma * (2.0 * std::f64::consts::PI).sqrt());
        let pref = self.jacobian() * w / (self.expected_mass() * ctx.momentum_scale);
        self.basis.phased_into(t, scratch);
        let table = self.basis.table();
        let to_kappa = ctx.mass * ctx.g / ctx.momentum_scale;
        out.extend(times.iter().map(|&time| {
            let kappa = to_kappa * (time - self.tau - t);
            table.combine(kappa, scratch).map_or(0.0, |a| pref * a.norm_sqr())
        }));
    }

    /// Vertical momentum window `±K p_g` holding all but `tail` of the mass of
    /// `Π_t` for exit times across the X window, checked on a handful of times.
    pub fn momentum_extent(&self, t_range: (f64, f64), tail: f64) -> f64 {
        let table = self.basis.table();
        let limit = table.kappa_limit();
        let mut scratch = Vec::new();
        let mut worst: f64 = 0.0;
        let samples = 24;
        for i in 0..samples {
            let t = t_range.0 + (t_range.1 - t_range.0) * i as f64 / (samples - 1) as f64;
            self.basis.phased_into(t, &mut scratch);
            let dens: Vec<f64> = (0..table.kappa_len())
                .map(|k| table.combine_node(k, &scratch).norm_sqr())
                .collect();
            let total: f64 = dens.iter().sum();
            // grow a symmetric window from the centre until the tail is small enough
            let centre = dens.len() / 2;
            let mut inside = dens[centre];
            let mut half = 0;
            while half + 1 < centre && (total - inside) > tail * total {
                half += 1;
                inside += dens[centre - half] + dens[centre + half];
            }
            worst = worst.max(half as f64 * table.kappa_step());
        }
        worst.min(limit)
    }

    /// Rectangular `(X, T)` bounds holding all but about `tail` of the mass.
    pub fn auto_window(&self, tail: f64) -> Result<((f64, f64), (f64, f64))> {
        let ctx = &self.basis.ctx;
        let (lo, hi) = self.px_bounds;
        // invert the truncated Gaussian CDF by bisection on each side
        let cdf = |p: f64| normal_cdf((p - self.px_mean) / self.px_sigma);
        let (c_lo, c_hi) = (cdf(lo), cdf(hi));
        let quantile = |q: f64| {
            let target = c_lo + q * (c_hi - c_lo);
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if cdf(m) < target {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let p_lo = quantile(0.25 * tail);
        let p_hi = quantile(1.0 - 0.25 * tail);
        let d = self.geom.mirror_length;
        let x_range = (d + p_lo * self.tau / ctx.mass, d + p_hi * self.tau / ctx.mass);
        let t_range = (ctx.mass * d / p_hi, ctx.mass * d / p_lo);
        let kappa = self.momentum_extent(t_range, 0.5 * tail);
        let dt = kappa * ctx.momentum_scale / (ctx.mass * ctx.g);
        let time_range = (t_range.0 + self.tau - dt, t_range.1 + self.tau + dt);
        Ok((x_range, time_range))
    }
}

/// `|J(X,T)|` on a rectangular grid, renormalized to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionDensity {
    /// rows are positions `X` (m), columns arrival times `T` (s)
    pub grid: Grid2,
    /// `∫∫|J| dX dT` over the grid before renormalization
    pub raw_mass: f64,
    /// factor applied to reach unit mass (`1 / raw_mass`)
    pub renormalization: f64,
    /// `Σ|c_n|²` of the underlying state
    pub surviving_norm: f64,
    pub g: f64,
    pub geometry: Geometry,
}

impl DetectionDensity {
    fn from_raw(grid: Grid2, surviving_norm: f64, g: f64, geometry: Geometry) -> Result<Self> {
        let raw_mass = grid.integral();
        if !(raw_mass > 0.0) || !raw_mass.is_finite() {
            return Err(Error::Unnormalized { mass: raw_mass });
        }
        let mut grid = grid;
        grid.scale(raw_mass.recip());
        Ok(Self {
            grid,
            raw_mass,
            renormalization: raw_mass.recip(),
            surviving_norm,
            g,
            geometry,
        })
    }

    pub fn x_grid(&self) -> &UniformGrid {
        &self.grid.rows
    }

    pub fn t_grid(&self) -> &UniformGrid {
        &self.grid.cols
    }

    pub fn mass(&self) -> f64 {
        self.grid.integral()
    }
}

/// `|J|` from a tabulated `Π_t(p_z)` with bilinear interpolation. The time
/// axis must cover the image of the plate grid; momenta off the `p_z` axis
/// count as zero.
pub fn detection_density(
    md: &MomentumDensity,
    wp: &InitialWavePacket,
    geom: &Geometry,
    ctx: &PhysicalContext,
    x_grid: UniformGrid,
    t_grid: UniformGrid,
) -> Result<DetectionDensity> {
    geom.validate()?;
    if x_grid.start <= geom.mirror_length {
        return Err(Error::Domain(format!(
            "X grid starts at {} m, not beyond the mirror end",
            x_grid.start
        )));
    }
    let corners = [
        (x_grid.start, t_grid.start),
        (x_grid.start, t_grid.end()),
        (x_grid.end(), t_grid.start),
        (x_grid.end(), t_grid.end()),
    ];
    let mut uncovered = Vec::new();
    for &(x, time) in &corners {
        let e = anamorphosis(x, time, geom, ctx)?;
        if !md.t_grid().contains(e.t) {
            uncovered.push((x, time));
        }
    }
    if !uncovered.is_empty() {
        return Err(Error::Extent { corners: uncovered });
    }
    let tau = geom.mean_fall_time(ctx.g);
    let pref = ctx.g * ctx.mass * ctx.mass / tau;
    let grid = Grid2::from_fn(x_grid, t_grid, |x, time| {
        let e = anamorphosis(x, time, geom, ctx).expect("grid lies beyond the mirror");
        pref * horizontal_weight(e.p_x, wp, ctx) * md.value(e.t, e.p_z).unwrap_or(0.0)
    });
    let norm: f64 = md
        .norms()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    DetectionDensity::from_raw(grid, norm, ctx.g, *geom)
}

/// `|J|` evaluated exactly from the eigenbasis on a grid.
pub fn exact_detection_density(model: &DetectionModel, x_grid: UniformGrid, t_grid: UniformGrid) -> Result<DetectionDensity> {
    if x_grid.start <= model.geometry().mirror_length {
        return Err(Error::Domain(format!(
            "X grid starts at {} m, not beyond the mirror end",
            x_grid.start
        )));
    }
    let values: Vec<f64> = (0..x_grid.len)
        .into_par_iter()
        .map_init(Vec::new, |scratch, r| {
            let x = x_grid.point(r);
            t_grid
                .points()
                .map(|time| model.raw_density(x, time, scratch))
                .collect::<Vec<_>>()
        })
        .flatten_iter()
        .collect();
    let grid = Grid2 {
        rows: x_grid,
        cols: t_grid,
        values,
    };
    DetectionDensity::from_raw(grid, model.basis().surviving_norm(), model.g(), *model.geometry())
}

/// `(t, p_z)` axes covering the anamorphosis image of an `(X, T)` rectangle,
/// with `|p_z|` capped at `p_limit`.
pub fn momentum_grid_for(
    geom: &Geometry,
    ctx: &PhysicalContext,
    x_grid: &UniformGrid,
    t_grid: &UniformGrid,
    dt: f64,
    dp: f64,
    p_limit: f64,
) -> Result<(UniformGrid, UniformGrid)> {
    let mut t_lo = f64::INFINITY;
    let mut t_hi = f64::NEG_INFINITY;
    let mut p_lo = f64::INFINITY;
    let mut p_hi = f64::NEG_INFINITY;
    for x in [x_grid.start, x_grid.end()] {
        for time in [t_grid.start, t_grid.end()] {
            let e = anamorphosis(x, time, geom, ctx)?;
            t_lo = t_lo.min(e.t);
            t_hi = t_hi.max(e.t);
            p_lo = p_lo.min(e.p_z);
            p_hi = p_hi.max(e.p_z);
        }
    }
    let p_lo = (p_lo - dp).max(-p_limit);
    let p_hi = (p_hi + dp).min(p_limit);
    if !(p_hi > p_lo) {
        return Err(Error::Extent {
            corners: vec![(x_grid.start, t_grid.start), (x_grid.end(), t_grid.end())],
        });
    }
    Ok((
        UniformGrid::with_max_step(t_lo - dt, t_hi + dt, dt)?,
        UniformGrid::with_max_step(p_lo, p_hi, dp)?,
    ))
}

/// Largest momentum grid built by [`refined_detection_density`].
pub const MAX_MOMENTUM_CELLS: f64 = 1e8;

/// Result of [`refined_detection_density`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub density: DetectionDensity,
    /// final `(t, p_z)` steps in units of `t_g` and `p_g`
    pub t_step: f64,
    pub p_step: f64,
    /// L1 distance between successive refinements
    pub changes: Vec<f64>,
    /// false when the momentum-cell budget stopped refinement before `tol`
    pub converged: bool,
}

/// Tabulated-`Π` plate density, halving the `(t, p_z)` steps until the L1
/// change drops below `tol`. Stops early, unconverged, when the next level
/// would exceed the momentum-cell budget.
pub fn refined_detection_density(
    basis: &GqsBasis,
    geom: &Geometry,
    x_grid: UniformGrid,
    t_grid: UniformGrid,
    tol: f64,
    max_halvings: usize,
) -> Result<Refinement> {
    let ctx = basis.ctx;
    let p_limit = basis.table().kappa_limit() * ctx.momentum_scale;
    let mut dt = 0.1 * ctx.time_scale;
    let mut dp = ctx.momentum_scale / 8.0;
    let grids = |dt: f64, dp: f64| -> Result<(UniformGrid, UniformGrid, bool)> {
        let (tg, pg) = momentum_grid_for(geom, &ctx, &x_grid, &t_grid, dt, dp, p_limit)?;
        let fits = tg.len as f64 * pg.len as f64 <= MAX_MOMENTUM_CELLS;
        Ok((tg, pg, fits))
    };
    let build = |tg: UniformGrid, pg: UniformGrid| -> Result<DetectionDensity> {
        let md = momentum_density(basis, tg, pg)?;
        detection_density(&md, &basis.packet, geom, &ctx, x_grid, t_grid)
    };
    let (tg, pg, fits) = grids(dt, dp)?;
    if !fits {
        return Err(Error::Consistency(format!(
            "plate window needs a {}×{} momentum grid, above the {MAX_MOMENTUM_CELLS:e} cell budget",
            tg.len, pg.len
        )));
    }
    let mut current = build(tg, pg)?;
    let mut changes = Vec::new();
    for _ in 0..max_halvings {
        let (tg, pg, fits) = grids(0.5 * dt, 0.5 * dp)?;
        if !fits {
            log::warn!(
                "refinement stopped: a {}×{} momentum grid exceeds the {MAX_MOMENTUM_CELLS:e} cell budget (last L1 change {:.3e}, target {tol:.1e})",
                tg.len,
                pg.len,
                changes.last().copied().unwrap_or(f64::NAN)
            );
            return Ok(Refinement {
                density: current,
                t_step: dt / ctx.time_scale,
                p_step: dp / ctx.momentum_scale,
                changes,
                converged: false,
            });
        }
        dt *= 0.5;
        dp *= 0.5;
        let next = build(tg, pg)?;
        let change = next.grid.l1_distance(&current.grid);
        log::info!("refinement dt = {:.4} t_g, dp = {:.4} p_g: L1 change {change:.3e}", dt / ctx.time_scale, dp / ctx.momentum_scale);
        changes.push(change);
        current = next;
        if change < tol {
            return Ok(Refinement {
                density: current,
                t_step: dt / ctx.time_scale,
                p_step: dp / ctx.momentum_scale,
                changes,
                converged: true,
            });
        }
    }
    Err(Error::Consistency(format!(
        "plate density still changing after {max_halvings} refinements (last L1 change {:.3e})",
        changes.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Which chart a polyline is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    /// `(X, T)` on the detection plate
    Plate,
    /// `(t, p_z)` at the mirror end
    Mirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub chart: Chart,
    pub points: Vec<(f64, f64)>,
}

/// Maps each line into the other chart.
pub fn fringe_grid_check(geom: &Geometry, ctx: &PhysicalContext, lines: &[Polyline]) -> Result<Vec<Polyline>> {
    lines
        .iter()
        .map(|line| {
            let points = line
                .points
                .iter()
                .map(|&(a, b)| match line.chart {
                    Chart::Plate => anamorphosis(a, b, geom, ctx).map(|e| (e.t, e.p_z)),
                    Chart::Mirror => mirror_to_plate(a, b, geom, ctx),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Polyline {
                chart: match line.chart {
                    Chart::Plate => Chart::Mirror,
                    Chart::Mirror => Chart::Plate,
                },
                points,
            })
        })
        .collect()
}
