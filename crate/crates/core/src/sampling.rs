//! Synthetic detection events.
//!
//! Two samplers are provided. [`sample_events`] inverts the CDF of a gridded
//! plate density (bilinear between nodes). [`transport_oracle_sample`] draws
//! the mirror-exit variables instead and lets the atoms fall; it needs no
//! `(X, T)` grid and reproduces the pointwise density exactly, which is what
//! ensembles use.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::detector::{DetectionDensity, DetectionModel};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;

/// Name recorded in event metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.3); stream k draws events [4096k, 4096(k+1))";
/// Events drawn from one PRNG stream.
pub const BLOCK_SIZE: usize = 4096;
/// Stream offset reserved for detector blur.
const BLUR_STREAM: u64 = 1 << 40;

/// One annihilation on the plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// position (m)
    #[serde(rename = "X_m")]
    pub x: f64,
    /// arrival time (s)
    #[serde(rename = "T_s")]
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub events: Vec<Event>,
    pub g_true: f64,
    pub seed: u64,
    pub n: usize,
    pub rng: String,
}

impl EventSet {
    pub fn new(events: Vec<Event>, g_true: f64, seed: u64) -> Self {
        Self {
            n: events.len(),
            events,
            g_true,
            seed,
            rng: RNG_ALGORITHM.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent per-draw seed derived from a master seed (SplitMix64 step).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_blocks<F>(n: usize, seed: u64, draw: F) -> Result<Vec<Event>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Event> + Sync,
{
    let blocks = n.div_ceil(BLOCK_SIZE);
    let parts: Vec<Vec<Event>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let count = BLOCK_SIZE.min(n - b * BLOCK_SIZE);
            (0..count).map(|_| draw(&mut rng)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Position of `target` inside a cell of width `h` whose density rises
/// linearly from `a` to `b`, where `target ≤ (a + b) h / 2`.
fn invert_linear_cell(a: f64, b: f64, h: f64, target: f64) -> f64 {
    let disc = (a * a + 2.0 * (b - a) * target / h).max(0.0);
    let denom = a + disc.sqrt();
    if denom <= 0.0 {
        return 0.5 * h;
    }
    (2.0 * target / denom).clamp(0.0, h)
}

/// Cumulative trapezoid masses of a piecewise-linear density.
fn cumulative(values: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * step;
        out.push(acc);
    }
    out
}

/// Draws `n` events from a gridded plate density: inverse CDF of the X
/// marginal, then of the conditional T profile, both exact for the bilinear
/// interpolant of the grid.
pub fn sample_events(dd: &DetectionDensity, n: usize, seed: u64) -> Result<EventSet> {
    if n == 0 {
        return Err(Error::Config("at least one event must be requested".into()));
    }
    let mass = dd.mass();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Unnormalized { mass });
    }
    let xg = *dd.x_grid();
    let tg = *dd.t_grid();
    let rows: Vec<Vec<f64>> = (0..xg.len).map(|r| cumulative(dd.grid.row(r), tg.step)).collect();
    let marginal: Vec<f64> = rows.iter().map(|c| *c.last().unwrap()).collect();
    let x_cdf = cumulative(&marginal, xg.step);
    let total = *x_cdf.last().unwrap();

    let events = draw_blocks(n, seed, |rng| {
        let target = rng.gen::<f64>() * total;
        let i = x_cdf.partition_point(|c| *c <= target).clamp(1, xg.len - 1) - 1;
        let s = invert_linear_cell(marginal[i], marginal[i + 1], xg.step, target - x_cdf[i]);
        let u = s / xg.step;
        let x = xg.point(i) + s;

        let (lo, hi) = (&rows[i], &rows[i + 1]);
        let blend = |k: usize| (1.0 - u) * lo[k] + u * hi[k];
        let row_total = blend(tg.len - 1);
        let target = rng.gen::<f64>() * row_total;
        // binary search on the blended cumulative
        let (mut a, mut b) = (0usize, tg.len - 1);
        while b - a > 1 {
            let m = (a + b) / 2;
            if blend(m) <= target {
                a = m;
            } else {
                b = m;
            }
        }
        let fa = (1.0 - u) * dd.grid.get(i, a) + u * dd.grid.get(i + 1, a);
        let fb = (1.0 - u) * dd.grid.get(i, a + 1) + u * dd.grid.get(i + 1, a + 1);
        let s = invert_linear_cell(fa, fb, tg.step, target - blend(a));
        Ok(Event { x, t: tg.point(a) + s })
    })?;
    Ok(EventSet::new(events, dd.g, seed))
}

/// Envelope for rejection sampling of `Π_t` on the table cells:
/// `(1.25 Σ_n |c_n| max_stencil |F_n|)²` bounds the interpolated density
/// at every time, since the cubic Lagrange weights have absolute sum ≤ 1.25.
struct MomentumEnvelope {
    first: usize,
    cells: Vec<f64>,
    cdf: Vec<f64>,
}

impl MomentumEnvelope {
    fn new(model: &DetectionModel) -> Self {
        let basis = model.basis();
        let table = basis.table();
        let bounds = table.cell_bounds();
        let ns = table.n_states();
        let mags: Vec<f64> = basis.coefficients().iter().map(|c| c.norm()).collect();
        let limit = table.kappa_limit();
        let first = table.cell(-limit).expect("window start is interpolable");
        let last = table.cell(limit - table.kappa_step()).expect("window end is interpolable");
        let cells: Vec<f64> = (first..=last)
            .map(|i| {
                let s: f64 = bounds[i * ns..(i + 1) * ns].iter().zip(&mags).map(|(b, c)| b * c).sum();
                (1.25 * s).powi(2)
            })
            .collect();
        let mut cdf = Vec::with_capacity(cells.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for c in &cells {
            acc += c;
            cdf.push(acc);
        }
        Self { first, cells, cdf }
    }

    /// Dimensionless vertical momentum drawn from `|Σ w_n F_n|²`.
    fn draw(&self, model: &DetectionModel, weights: &[Complex64], rng: &mut ChaCha8Rng) -> Result<f64> {
        let table = model.basis().table();
        let total = *self.cdf.last().unwrap();
        for _ in 0..100_000 {
            let target = rng.gen::<f64>() * total;
            let j = self.cdf.partition_point(|c| *c <= target).clamp(1, self.cells.len()) - 1;
            let cell = self.first + j;
            let kappa = table.kappa(cell) + rng.gen::<f64>() * table.kappa_step();
            let value = table.combine(kappa, weights).map_or(0.0, |a| a.norm_sqr());
            if rng.gen::<f64>() * self.cells[j] < value {
                return Ok(kappa);
            }
        }
        Err(Error::Consistency("rejection sampler of the momentum density stalled".into()))
    }
}

/// Draws `(p_x, p_z)` at the mirror end and transports them to the plate.
///
/// `p_x` follows the Gaussian truncated to the X window; `p_z` follows
/// `Π_t` at the implied exit time within the tabulated momentum window.
pub fn transport_oracle_sample(model: &DetectionModel, n: usize, seed: u64) -> Result<EventSet> {
    if n == 0 {
        return Err(Error::Config("at least one event must be requested".into()));
    }
    let envelope = MomentumEnvelope::new(model);
    let ctx = *model.ctx();
    let geom = *model.geometry();
    let (mean, sigma) = model.px_distribution();
    let (lo, hi) = model.px_bounds();
    let tau = model.mean_fall_time();
    let d = geom.mirror_length;
    let events = draw_blocks(n, seed, |rng| {
        let p_x = loop {
            let z: f64 = StandardNormal.sample(rng);
            let p = mean + sigma * z;
            if p >= lo && p <= hi {
                break p;
            }
        };
        let t = ctx.mass * d / p_x;
        let mut w = Vec::with_capacity(model.basis().n_states());
        model.basis().phased_into(t, &mut w);
        let kappa = envelope.draw(model, &w, rng)?;
        let p_z = kappa * ctx.momentum_scale;
        Ok(Event {
            x: d + p_x * tau / ctx.mass,
            t: t + tau + p_z / (ctx.mass * ctx.g),
        })
    })?;
    Ok(EventSet::new(events, ctx.g, seed))
}

/// Detector resolution used by the optional blur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blur {
    pub sigma_x: f64,
    pub sigma_t: f64,
}

impl Default for Blur {
    fn default() -> Self {
        Self {
            sigma_x: 1e-4,
            sigma_t: 1e-7,
        }
    }
}

/// Adds independent Gaussian noise to every event. Events pushed onto or
/// before the mirror end are redrawn.
pub fn apply_blur(set: &EventSet, blur: Blur, mirror_length: f64) -> EventSet {
    let blocks: Vec<Vec<Event>> = set
        .events
        .par_chunks(BLOCK_SIZE)
        .enumerate()
        .map(|(b, chunk)| {
            let mut rng = stream_rng(set.seed, BLUR_STREAM + b as u64);
            chunk
                .iter()
                .map(|e| {
                    let x = loop {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let x = e.x + blur.sigma_x * z;
                        if x > mirror_length {
                            break x;
                        }
                    };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    Event {
                        x,
                        t: e.t + blur.sigma_t * z,
                    }
                })
                .collect()
        })
        .collect();
    EventSet {
        events: blocks.into_iter().flatten().collect(),
        ..set.clone()
    }
}

/// Outcome of a chi-square test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi_square_p(statistic: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof.max(1) as f64).expect("positive degrees of freedom");
    dist.sf(statistic)
}

fn quantile_edges(mut v: Vec<f64>, bins: usize) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..bins).map(|k| v[k * v.len() / bins]).collect();
    edges.dedup();
    edges
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|e| *e <= x)
}

/// Binned two-sample homogeneity test on a `bins × bins` grid whose edges are
/// quantiles of the pooled marginals.
pub fn two_sample_chi_square(a: &[Event], b: &[Event], bins: usize) -> ChiSquareTest {
    let pooled = || a.iter().chain(b.iter());
    let ex = quantile_edges(pooled().map(|e| e.x).collect(), bins);
    let et = quantile_edges(pooled().map(|e| e.t).collect(), bins);
    let cols = et.len() + 1;
    let cells = (ex.len() + 1) * cols;
    let count = |set: &[Event]| {
        let mut c = vec![0.0; cells];
        for e in set {
            c[bin_of(&ex, e.x) * cols + bin_of(&et, e.t)] += 1.0;
        }
        c
    };
    let (ca, cb) = (count(a), count(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    let mut used = 0usize;
    for (x, y) in ca.iter().zip(&cb) {
        if x + y > 0.0 {
            stat += (ka * x - kb * y).powi(2) / (x + y);
            used += 1;
        }
    }
    let dof = used.saturating_sub(1);
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value: chi_square_p(stat, dof),
    }
}

/// Goodness of fit of events against the bilinear interpolant of a gridded
/// density, on blocks of `block × block` grid cells. Blocks expecting fewer
/// than five events are pooled into one bin.
pub fn grid_goodness_of_fit(dd: &DetectionDensity, events: &[Event], block: usize) -> ChiSquareTest {
    let xg: UniformGrid = *dd.x_grid();
    let tg: UniformGrid = *dd.t_grid();
    let br = (xg.len - 1).div_ceil(block);
    let bc = (tg.len - 1).div_ceil(block);
    let mut expected = vec![0.0; br * bc];
    for r in 0..xg.len - 1 {
        for c in 0..tg.len - 1 {
            let m = 0.25 * (dd.grid.get(r, c) + dd.grid.get(r + 1, c) + dd.grid.get(r, c + 1) + dd.grid.get(r + 1, c + 1)) * xg.step * tg.step;
            expected[(r / block) * bc + c / block] += m;
        }
    }
    let mut observed = vec![0.0; br * bc];
    for e in events {
        if let (Some((r, _)), Some((c, _))) = (xg.locate(e.x), tg.locate(e.t)) {
            observed[(r / block) * bc + c / block] += 1.0;
        }
    }
    let n = events.len() as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut pool_e, mut pool_o) = (0.0, 0.0);
    for (e, o) in expected.iter().zip(&observed) {
        let e = e * n;
        if e < 5.0 {
            pool_e += e;
            pool_o += o;
        } else {
            stat += (o - e).powi(2) / e;
            bins += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        bins += 1;
    }
    let dof = bins.saturating_sub(1);
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value: chi_square_p(stat, dof),
    }
}
