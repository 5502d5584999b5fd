//! Maximum-likelihood estimation of `g`, Fisher information and repeated
//! experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use statrs::distribution::{ContinuousCDF, Normal};

use crate::detector::DetectionModel;
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, transport_oracle_sample, Event, EventSet};

/// Default floor applied to `P_g` before taking the logarithm.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-30;

/// A family of event densities indexed by `g` that can also be sampled.
pub trait StatisticalModel: Sync {
    /// Label written into reports (`"quantum"` or `"classical"`).
    fn mode(&self) -> &'static str;

    fn reference_g(&self) -> f64;

    /// `ln P_g` for each event, floored; also returns the number of floored events.
    fn ln_densities(&self, events: &[Event], g: f64) -> Result<(Vec<f64>, usize)>;

    /// `n` independent events drawn at `g`.
    fn sample(&self, g: f64, n: usize, seed: u64) -> Result<EventSet>;

    /// Per-event Fisher information at `g`. The default is a plain Monte
    /// Carlo average over events drawn at `g`.
    fn fisher(&self, g: f64, opts: &FisherOptions) -> Result<FisherReport> {
        fisher_information(self, g, opts.samples, opts.seed, opts.delta)
    }

    /// `Σ_i ln P_g(X_i, T_i)`.
    fn log_likelihood(&self, events: &[Event], g: f64) -> Result<LogLikelihood> {
        let (v, floored) = self.ln_densities(events, g)?;
        Ok(LogLikelihood {
            value: v.iter().sum(),
            floored,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    /// events whose density fell below the floor
    pub floored: usize,
}

/// The quantum plate density as a function of `g`.
#[derive(Debug, Clone)]
pub struct QuantumModel {
    reference: DetectionModel,
    ln_floor: f64,
}

impl QuantumModel {
    pub fn new(reference: DetectionModel, density_floor: f64) -> Result<Self> {
        if !(density_floor > 0.0) {
            return Err(Error::Config(format!("density floor must be positive, got {density_floor}")));
        }
        Ok(Self {
            reference,
            ln_floor: density_floor.ln(),
        })
    }

    pub fn reference(&self) -> &DetectionModel {
        &self.reference
    }

    pub fn at(&self, g: f64) -> Result<DetectionModel> {
        if g == self.reference.g() {
            Ok(self.reference.clone())
        } else {
            self.reference.at_g(g)
        }
    }
}

const CHUNK: usize = 256;

impl StatisticalModel for QuantumModel {
    fn mode(&self) -> &'static str {
        "quantum"
    }

    fn reference_g(&self) -> f64 {
        self.reference.g()
    }

    fn ln_densities(&self, events: &[Event], g: f64) -> Result<(Vec<f64>, usize)> {
        let model = self.at(g)?;
        let parts: Vec<(Vec<f64>, usize)> = events
            .par_chunks(CHUNK)
            .map_init(Vec::new, |scratch, chunk| {
                let mut floored = 0;
                let v = chunk
                    .iter()
                    .map(|e| {
                        let p = model.density(e.x, e.t, scratch);
                        let l = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
                        if l < self.ln_floor {
                            floored += 1;
                            self.ln_floor
                        } else {
                            l
                        }
                    })
                    .collect();
                (v, floored)
            })
            .collect();
        let floored = parts.iter().map(|p| p.1).sum();
        if floored > 0 {
            log::debug!("{floored} events floored at g = {g}");
        }
        Ok((parts.into_iter().flat_map(|p| p.0).collect(), floored))
    }

    fn sample(&self, g: f64, n: usize, seed: u64) -> Result<EventSet> {
        transport_oracle_sample(&self.at(g)?, n, seed)
    }

    /// `I = ∫∫ (∂_g P)² / P dX dT`: stratified sampling of `X` from the
    /// horizontal distribution, trapezoid quadrature in `T` at each `X`.
    /// Finite differences act on `P` itself, which stays smooth through the
    /// fringe minima where `ln P` does not.
    fn fisher(&self, g: f64, opts: &FisherOptions) -> Result<FisherReport> {
        let h = opts.delta * g;
        let steps = [0.0, h, -h, 0.5 * h, -0.5 * h];
        let models = steps.iter().map(|s| self.at(g + s)).collect::<Result<Vec<_>>>()?;
        let base = &models[0];
        let ctx = *base.ctx();
        let (lo, hi) = base.px_bounds();
        let (mean, sigma) = base.px_distribution();
        let tau = base.mean_fall_time();
        let d = base.geometry().mirror_length;
        let normal = Normal::new(mean, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let (c_lo, c_hi) = (normal.cdf(lo), normal.cdf(hi));
        let kappa = base.momentum_extent((ctx.mass * d / hi, ctx.mass * d / lo), opts.tail);
        let dt = opts.kappa_step * ctx.momentum_scale / (ctx.mass * ctx.g);
        let half = kappa * ctx.momentum_scale / (ctx.mass * ctx.g);
        let n_t = (2.0 * half / dt).ceil() as usize + 1;
        let n = opts.samples;
        let jitter = {
            use rand::Rng;
            let mut rng = crate::sampling::stream_rng(opts.seed, 0);
            (0..n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()
        };
        let terms: Vec<[f64; 3]> = (0..n)
            .into_par_iter()
            .map_init(
                || (Vec::new(), vec![Vec::new(); 5], Vec::new()),
                |(scratch, profiles, times), i| {
                    let u = (i as f64 + jitter[i]) / n as f64;
                    let p_x = normal.inverse_cdf(c_lo + u * (c_hi - c_lo)).clamp(lo, hi);
                    let x = d + p_x * tau / ctx.mass;
                    // sampling density of X
                    let z = (p_x - mean) / sigma;
                    let q = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()) * ctx.mass / tau / (c_hi - c_lo);
                    let centre = ctx.mass * d / p_x + tau;
                    times.clear();
                    times.extend((0..n_t).map(|k| centre - half + k as f64 * dt));
                    for (m, out) in models.iter().zip(profiles.iter_mut()) {
                        m.density_profile(x, times, scratch, out);
                    }
                    let [p0, pp, pm, pp2, pm2] = [&profiles[0], &profiles[1], &profiles[2], &profiles[3], &profiles[4]];
                    let mut acc = [0.0; 3];
                    for k in 0..n_t {
                        if p0[k] <= 0.0 {
                            continue;
                        }
                        let w = if k == 0 || k + 1 == n_t { 0.5 * dt } else { dt };
                        let d1 = (pp[k] - pm[k]) / (2.0 * h);
                        let d1_half = (pp2[k] - pm2[k]) / h;
                        let d2 = (pp[k] - 2.0 * p0[k] + pm[k]) / (h * h);
                        acc[0] += w * d1 * d1 / p0[k];
                        acc[1] += w * d1_half * d1_half / p0[k];
                        acc[2] += w * (d1 * d1 / p0[k] - d2);
                    }
                    [acc[0] / q, acc[1] / q, acc[2] / q]
                },
            )
            .collect();
        let col = |j: usize| terms.iter().map(|t| t[j]).collect::<Vec<_>>();
        let (score, score_error) = mean_and_error(&col(0));
        let (score_half, _) = mean_and_error(&col(1));
        let (curvature, curvature_error) = mean_and_error(&col(2));
        if (score - score_half).abs() > 0.1 * score.abs().max(score_half.abs()) {
            return Err(Error::StepSize {
                coarse: score,
                fine: score_half,
            });
        }
        Ok(FisherReport {
            g,
            delta: opts.delta,
            samples: n,
            score,
            score_half_step: score_half,
            curvature,
            score_error,
            curvature_error,
        })
    }
}

/// Settings of the Fisher-information estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherOptions {
    /// relative finite-difference step in `g`
    pub delta: f64,
    /// Monte Carlo samples (strata in `X` for the quantum model)
    pub samples: usize,
    pub seed: u64,
    /// quadrature step along `T`, in units of `p_g / (m g)`
    pub kappa_step: f64,
    /// vertical-momentum mass left outside the `T` quadrature
    pub tail: f64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        Self {
            delta: 1e-5,
            samples: 1000,
            seed: 1,
            kappa_step: 0.02,
            tail: 1e-6,
        }
    }
}

/// Least-squares parabola `ln L ≈ -a g² + b g + c` and the estimate it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `b / (2a)`, computed about the best scan point to avoid cancellation
    pub g_hat: f64,
    /// `1 / √(2a)`
    pub sigma_hat: f64,
    pub points_used: usize,
}

/// Fits the points with `loglik ≥ max − drop`.
pub fn quadratic_fit(g: &[f64], loglik: &[f64], drop: f64) -> Result<QuadraticFit> {
    if g.len() != loglik.len() || g.is_empty() {
        return Err(Error::Config("scan needs matching, non-empty g and log-likelihood lists".into()));
    }
    let (imax, lmax) = loglik
        .iter()
        .cloned()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty");
    let sel: Vec<(f64, f64)> = g
        .iter()
        .zip(loglik)
        .filter(|(_, l)| **l >= lmax - drop)
        .map(|(x, l)| (*x, *l))
        .collect();
    if sel.len() < 5 {
        return Err(Error::Consistency(format!(
            "only {} scan points within {drop} of the maximum; at least 5 are needed",
            sel.len()
        )));
    }
    let gc = g[imax];
    let s = sel.iter().map(|(x, _)| (x - gc).abs()).fold(0.0, f64::max);
    if s == 0.0 {
        return Err(Error::Consistency("scan points are not distinct".into()));
    }
    // normal equations for l = A u² + B u + C in u = (g - gc)/s
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for &(x, l) in &sel {
        let u = (x - gc) / s;
        let basis = [u * u, u, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            r[i] += basis[i] * l;
        }
    }
    let [big_a, big_b, big_c] = solve3(m, r).ok_or_else(|| Error::Consistency("degenerate quadratic fit".into()))?;
    let a = -big_a / (s * s);
    if !(a > 0.0) {
        return Err(Error::NonConcave { a });
    }
    let b = -2.0 * big_a * gc / (s * s) + big_b / s;
    let c = big_a * gc * gc / (s * s) - big_b * gc / s + big_c;
    Ok(QuadraticFit {
        a,
        b,
        c,
        g_hat: gc - big_b * s / (2.0 * big_a),
        sigma_hat: (2.0 * a).sqrt().recip(),
        points_used: sel.len(),
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

/// Likelihood scan settings; half-widths are relative to the reference `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanOptions {
    pub initial_half_width: f64,
    pub points: usize,
    pub max_half_width: f64,
    /// points in each refinement pass around the coarse maximum
    pub fine_points: usize,
    /// fit window below the maximum
    pub fit_drop: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            initial_half_width: 5e-5,
            points: 11,
            max_half_width: 1e-3,
            fine_points: 15,
            fit_drop: 2.0,
        }
    }
}

impl ScanOptions {
    pub fn validate(&self) -> Result<()> {
        if self.points < 5 || self.fine_points < 5 {
            return Err(Error::Config("scans need at least 5 points".into()));
        }
        if !(self.initial_half_width > 0.0) || !(self.max_half_width >= self.initial_half_width) {
            return Err(Error::Config("scan half-widths must satisfy 0 < initial ≤ max".into()));
        }
        if !(self.fit_drop > 0.0) {
            return Err(Error::Config("fit window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodScan {
    pub g_values: Vec<f64>,
    pub loglik: Vec<f64>,
    pub fit: QuadraticFit,
    /// largest number of floored events at any scan point
    pub floored: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Scans `ln L(g)` around the reference value, widening the bracket until the
/// maximum is interior, then resolves the peak and fits a parabola.
pub fn scan_likelihood(model: &dyn StatisticalModel, events: &[Event], opts: &ScanOptions) -> Result<LikelihoodScan> {
    opts.validate()?;
    if events.is_empty() {
        return Err(Error::Config("cannot estimate g from an empty event set".into()));
    }
    let g0 = model.reference_g();
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut floored = 0;
    let mut eval = |g: f64, points: &mut Vec<(f64, f64)>| -> Result<f64> {
        if let Some(p) = points.iter().find(|p| p.0 == g) {
            return Ok(p.1);
        }
        let l = model.log_likelihood(events, g)?;
        floored = floored.max(l.floored);
        points.push((g, l.value));
        Ok(l.value)
    };

    let mut hw = opts.initial_half_width * g0;
    let max_hw = opts.max_half_width * g0 * (1.0 + 1e-12);
    let (mut best, mut step);
    loop {
        let grid: Vec<f64> = linspace(g0 - hw, g0 + hw, opts.points).collect();
        let mut vals = Vec::with_capacity(grid.len());
        for &g in &grid {
            vals.push(eval(g, &mut points)?);
        }
        let imax = argmax(&vals);
        step = grid[1] - grid[0];
        best = grid[imax];
        if imax > 0 && imax + 1 < grid.len() {
            break;
        }
        if 2.0 * hw > max_hw {
            return Err(Error::Consistency(format!(
                "likelihood maximum lies outside g0 (1 ± {})",
                opts.max_half_width
            )));
        }
        hw *= 2.0;
    }

    // width estimate from the three points around the coarse maximum
    let mut width = {
        let l = |g: f64| points.iter().find(|p| (p.0 - g).abs() < 1e-3 * step).map(|p| p.1);
        match (l(best - step), l(best), l(best + step)) {
            (Some(a), Some(b), Some(c)) if a + c - 2.0 * b < 0.0 => (step * step / (2.0 * b - a - c)).sqrt(),
            _ => 0.5 * step,
        }
    };
    let mut centre = best;
    for _ in 0..4 {
        let half = (3.0 * width).min(4.0 * step);
        for g in linspace(centre - half, centre + half, opts.fine_points) {
            eval(g, &mut points)?;
        }
        points.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (gs, ls): (Vec<f64>, Vec<f64>) = points.iter().cloned().unzip();
        match quadratic_fit(&gs, &ls, opts.fit_drop) {
            Ok(fit) if fit.points_used >= 5 && fit.g_hat > gs[0] && fit.g_hat < gs[gs.len() - 1] => {
                return Ok(LikelihoodScan {
                    g_values: gs,
                    loglik: ls,
                    fit,
                    floored,
                });
            }
            Ok(fit) => {
                centre = fit.g_hat.clamp(gs[0], gs[gs.len() - 1]);
                width = fit.sigma_hat;
            }
            Err(_) => {
                centre = gs[argmax(&ls)];
                width *= 0.5;
            }
        }
    }
    let (gs, ls): (Vec<f64>, Vec<f64>) = points.iter().cloned().unzip();
    let fit = quadratic_fit(&gs, &ls, opts.fit_drop)?;
    Ok(LikelihoodScan {
        g_values: gs,
        loglik: ls,
        fit,
        floored,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("non-empty")
}

/// Result of one estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mode: String,
    pub g_hat: f64,
    pub sigma_hat: f64,
    pub n_events: usize,
    /// per-event Fisher information (1/(m/s²)²)
    pub fisher_info: Option<f64>,
    /// `1 / (N I)`
    pub cr_bound: Option<f64>,
    pub floored_events: usize,
    pub scan: LikelihoodScan,
}

pub fn estimate(model: &dyn StatisticalModel, events: &[Event], opts: &ScanOptions) -> Result<EstimateReport> {
    let scan = scan_likelihood(model, events, opts)?;
    Ok(EstimateReport {
        mode: model.mode().to_string(),
        g_hat: scan.fit.g_hat,
        sigma_hat: scan.fit.sigma_hat,
        n_events: events.len(),
        fisher_info: None,
        cr_bound: None,
        floored_events: scan.floored,
        scan,
    })
}

impl EstimateReport {
    pub fn with_fisher(mut self, info: f64) -> Self {
        self.fisher_info = Some(info);
        self.cr_bound = Some(1.0 / (self.n_events as f64 * info));
        self
    }
}

/// Monte Carlo Fisher information per event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub g: f64,
    /// relative finite-difference step
    pub delta: f64,
    pub samples: usize,
    /// `E[(∂_g ln P)²]` with step `δ`
    pub score: f64,
    /// the same with step `δ/2`
    pub score_half_step: f64,
    /// `E[-∂²_g ln P]` with step `δ`
    pub curvature: f64,
    /// standard errors of the two expectations
    pub score_error: f64,
    pub curvature_error: f64,
}

impl FisherReport {
    /// `√(1/(N I))`
    pub fn cramer_rao(&self, n_events: usize) -> f64 {
        (1.0 / (n_events as f64 * self.score)).sqrt()
    }
}

fn mean_and_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Estimates `I(g)` from `samples` events drawn at `g`, by central finite
/// differences of `ln P` with relative steps `δ` and `δ/2`.
///
/// Fails with [`Error::StepSize`] when the two steps disagree by more than 10%.
pub fn fisher_information<M: StatisticalModel + ?Sized>(model: &M, g: f64, samples: usize, seed: u64, delta: f64) -> Result<FisherReport> {
    if samples < 2 || !(delta > 0.0) {
        return Err(Error::Config("Fisher estimate needs ≥ 2 samples and δ > 0".into()));
    }
    let events = model.sample(g, samples, seed)?.events;
    let h = delta * g;
    let at = |x: f64| model.ln_densities(&events, x).map(|v| v.0);
    let l0 = at(g)?;
    let (lp, lm) = (at(g + h)?, at(g - h)?);
    let (lp2, lm2) = (at(g + 0.5 * h)?, at(g - 0.5 * h)?);
    let score: Vec<f64> = lp.iter().zip(&lm).map(|(p, m)| ((p - m) / (2.0 * h)).powi(2)).collect();
    let score_half: Vec<f64> = lp2.iter().zip(&lm2).map(|(p, m)| ((p - m) / h).powi(2)).collect();
    let curv: Vec<f64> = lp
        .iter()
        .zip(&lm)
        .zip(&l0)
        .map(|((p, m), c)| -(p - 2.0 * c + m) / (h * h))
        .collect();
    let (s, se) = mean_and_error(&score);
    let (s2, _) = mean_and_error(&score_half);
    let (c, ce) = mean_and_error(&curv);
    if (s - s2).abs() > 0.1 * s.abs().max(s2.abs()) {
        return Err(Error::StepSize { coarse: s, fine: s2 });
    }
    Ok(FisherReport {
        g,
        delta,
        samples,
        score: s,
        score_half_step: s2,
        curvature: c,
        score_error: se,
        curvature_error: ce,
    })
}

/// Histogram of `(ĝ − g0)/g0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Freedman–Diaconis bin width `2 IQR n^{-1/3}`.
    pub fn freedman_diaconis(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Self {
                edges: vec![],
                counts: vec![],
            };
        }
        let (lo, hi) = (v[0], v[n - 1]);
        let q = |p: f64| {
            let pos = p * (n - 1) as f64;
            let i = pos.floor() as usize;
            let f = pos - i as f64;
            if i + 1 < n {
                v[i] * (1.0 - f) + v[i + 1] * f
            } else {
                v[i]
            }
        };
        let width = 2.0 * (q(0.75) - q(0.25)) * (n as f64).powf(-1.0 / 3.0);
        let bins = if width > 0.0 && hi > lo {
            (((hi - lo) / width).ceil() as usize).clamp(1, 10_000)
        } else {
            1
        };
        let span = if hi > lo { hi - lo } else { lo.abs().max(1e-300) * 1e-9 };
        let start = if hi > lo { lo } else { lo - 0.5 * span };
        let w = span / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| start + w * i as f64).collect();
        let mut counts = vec![0; bins];
        for x in &v {
            let i = (((x - start) / w).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn centres(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Gaussian `A exp(-(x-μ)²/(2s²))` fitted to histogram counts by
/// Levenberg–Marquardt; returns `(A, μ, s)`.
pub fn fit_gaussian(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() < 3 {
        return None;
    }
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mu0 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / total;
    let var0 = x.iter().zip(y).map(|(a, b)| (a - mu0).powi(2) * b).sum::<f64>() / total;
    if !(var0 > 0.0) {
        return None;
    }
    let mut p = [y.iter().cloned().fold(0.0, f64::max), mu0, var0.sqrt()];
    let resid = |p: &[f64; 3]| -> f64 {
        x.iter()
            .zip(y)
            .map(|(a, b)| (b - p[0] * (-(a - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp()).powi(2))
            .sum()
    };
    let mut cost = resid(&p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (a, b) in x.iter().zip(y) {
            let d = a - p[1];
            let e = (-d * d / (2.0 * p[2] * p[2])).exp();
            let f = p[0] * e;
            let j = [e, f * d / (p[2] * p[2]), f * d * d / p[2].powi(3)];
            let r = b - f;
            for i in 0..3 {
                for k in 0..3 {
                    jtj[i][k] += j[i] * j[k];
                }
                jtr[i] += j[i] * r;
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for (i, row) in m.iter_mut().enumerate() {
                row[i] *= 1.0 + lambda;
            }
            let Some(step) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs()];
            let c = resid(&trial);
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    return Some((p[0], p[1], p[2]));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p[2] > 0.0 && p.iter().all(|v| v.is_finite())).then_some((p[0], p[1], p[2]))
}

/// Outcome of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawOutcome {
    pub index: usize,
    pub seed: u64,
    pub g_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub floored_events: usize,
    pub error: Option<String>,
}

/// Samples `n_events` at the reference `g` and estimates it.
pub fn run_draw(model: &dyn StatisticalModel, n_events: usize, index: usize, seed: u64, opts: &ScanOptions) -> DrawOutcome {
    let result = model
        .sample(model.reference_g(), n_events, seed)
        .and_then(|set| estimate(model, &set.events, opts));
    match result {
        Ok(r) => DrawOutcome {
            index,
            seed,
            g_hat: Some(r.g_hat),
            sigma_hat: Some(r.sigma_hat),
            floored_events: r.floored_events,
            error: None,
        },
        Err(e) => DrawOutcome {
            index,
            seed,
            g_hat: None,
            sigma_hat: None,
            floored_events: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Statistics of an ensemble of repeated experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub mode: String,
    pub g0: f64,
    pub n_events: usize,
    pub draws: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub g_hats: Vec<f64>,
    pub sigma_hats: Vec<f64>,
    /// dispersion of ĝ from the Gaussian fit to the histogram
    pub sigma_g: f64,
    /// raw sample standard deviation of ĝ
    pub sigma_g_raw: f64,
    pub mean_g_hat: f64,
    pub mean_sigma_hat: f64,
    /// standard deviation of σ̂_g over its mean
    pub sigma_hat_dispersion: f64,
    pub histogram: Histogram,
    pub outcomes: Vec<DrawOutcome>,
}

/// Seeds of the draws of an ensemble.
pub fn ensemble_seeds(master: u64, draws: usize) -> Vec<u64> {
    (0..draws as u64).map(|i| derive_seed(master, i)).collect()
}

/// Runs one experiment per seed, in parallel, and summarizes them.
pub fn ensemble_with_seeds(model: &dyn StatisticalModel, n_events: usize, seeds: &[u64], opts: &ScanOptions) -> Result<EnsembleResult> {
    if seeds.len() < 2 {
        return Err(Error::Config("an ensemble needs at least 2 draws".into()));
    }
    let outcomes: Vec<DrawOutcome> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| run_draw(model, n_events, i, s, opts))
        .collect();
    summarize_ensemble(model.mode(), model.reference_g(), n_events, outcomes)
}

pub fn ensemble_run(model: &dyn StatisticalModel, n_events: usize, draws: usize, seed: u64, opts: &ScanOptions) -> Result<EnsembleResult> {
    ensemble_with_seeds(model, n_events, &ensemble_seeds(seed, draws), opts)
}

/// Aggregates draw outcomes (sorted by index).
pub fn summarize_ensemble(mode: &str, g0: f64, n_events: usize, mut outcomes: Vec<DrawOutcome>) -> Result<EnsembleResult> {
    outcomes.sort_by_key(|o| o.index);
    let ok: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| Some((o.g_hat?, o.sigma_hat?))).collect();
    let failures = outcomes.len() - ok.len();
    for o in outcomes.iter().filter(|o| o.error.is_some()) {
        log::warn!("draw {} failed: {}", o.index, o.error.as_deref().unwrap_or(""));
    }
    if ok.len() < 2 {
        return Err(Error::Consistency(format!(
            "only {} of {} draws produced an estimate",
            ok.len(),
            outcomes.len()
        )));
    }
    let g_hats: Vec<f64> = ok.iter().map(|p| p.0).collect();
    let sigma_hats: Vec<f64> = ok.iter().map(|p| p.1).collect();
    let n = g_hats.len() as f64;
    let mean_g = g_hats.iter().sum::<f64>() / n;
    let raw = (g_hats.iter().map(|g| (g - mean_g).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mean_s = sigma_hats.iter().sum::<f64>() / n;
    let sd_s = (sigma_hats.iter().map(|s| (s - mean_s).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

    let rel: Vec<f64> = g_hats.iter().map(|g| (g - g0) / g0).collect();
    let histogram = Histogram::freedman_diaconis(&rel);
    let counts: Vec<f64> = histogram.counts.iter().map(|c| *c as f64).collect();
    let sigma_g = if raw == 0.0 {
        0.0
    } else {
        match fit_gaussian(&histogram.centres(), &counts) {
            Some((_, _, s)) => s * g0,
            None => {
                log::warn!("Gaussian fit to the ĝ histogram failed; using the raw dispersion");
                raw
            }
        }
    };
    Ok(EnsembleResult {
        mode: mode.to_string(),
        g0,
        n_events,
        draws: outcomes.len(),
        failures,
        failure_rate: failures as f64 / outcomes.len() as f64,
        g_hats,
        sigma_hats,
        sigma_g,
        sigma_g_raw: raw,
        mean_g_hat: mean_g,
        mean_sigma_hat: mean_s,
        sigma_hat_dispersion: if mean_s > 0.0 { sd_s / mean_s } else { 0.0 },
        histogram,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Events are plain numbers `x ~ N(g, 1)` stored in `X`.
    struct GaussianToy;

    impl StatisticalModel for GaussianToy {
        fn mode(&self) -> &'static str {
            "toy"
        }
        fn reference_g(&self) -> f64 {
            10.0
        }
        fn ln_densities(&self, events: &[Event], g: f64) -> Result<(Vec<f64>, usize)> {
            let c = -0.5 * (2.0 * std::f64::consts::PI).ln();
            Ok((events.iter().map(|e| c - 0.5 * (e.x - g).powi(2)).collect(), 0))
        }
        fn sample(&self, g: f64, n: usize, seed: u64) -> Result<EventSet> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ev = (0..n)
                .map(|_| Event {
                    x: g + rng.sample::<f64, _>(StandardNormal),
                    t: 0.0,
                })
                .collect();
            Ok(EventSet::new(ev, g, seed))
        }
    }

    fn toy_opts() -> ScanOptions {
        ScanOptions {
            initial_half_width: 0.002,
            max_half_width: 0.5,
            ..ScanOptions::default()
        }
    }

    #[test]
    fn exact_parabola_is_recovered() {
        let (a, b, c) = (3.0, 4.2, -1.5);
        let g: Vec<f64> = (0..9).map(|i| 0.5 + 0.05 * i as f64).collect();
        let l: Vec<f64> = g.iter().map(|x| -a * x * x + b * x + c).collect();
        let fit = quadratic_fit(&g, &l, 10.0).unwrap();
        assert!((fit.a - a).abs() < 1e-12 * a);
        assert!((fit.b - b).abs() < 1e-12 * b);
        assert!((fit.c - c).abs() < 1e-12 * c.abs());
        assert!((fit.g_hat - b / (2.0 * a)).abs() < 1e-12);
        assert!((fit.sigma_hat - (2.0 * a).sqrt().recip()).abs() < 1e-12);
    }

    #[test]
    fn convex_scan_is_rejected() {
        let g: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let l: Vec<f64> = g.iter().map(|x| 0.01 * (x - 3.0).powi(2)).collect();
        assert!(matches!(quadratic_fit(&g, &l, 2.0), Err(Error::NonConcave { .. })));
    }

    #[test]
    fn too_narrow_peak_needs_more_points() {
        let g: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let l: Vec<f64> = g.iter().map(|x| -50.0 * (x - 3.0).powi(2)).collect();
        assert!(quadratic_fit(&g, &l, 2.0).is_err());
    }

    #[test]
    fn toy_estimate_matches_the_sample_mean() {
        let set = GaussianToy.sample(10.0, 400, 1).unwrap();
        let mean = set.events.iter().map(|e| e.x).sum::<f64>() / 400.0;
        let r = estimate(&GaussianToy, &set.events, &toy_opts()).unwrap();
        assert!((r.g_hat - mean).abs() < 1e-9, "{} vs {mean}", r.g_hat);
        assert!((r.sigma_hat - 0.05).abs() < 1e-9);
        assert!(r.scan.fit.points_used >= 5);
    }

    #[test]
    fn empty_and_duplicated_events() {
        let m = GaussianToy;
        assert_eq!(m.log_likelihood(&[], 10.0).unwrap().value, 0.0);
        let e = Event { x: 10.3, t: 0.0 };
        let one = m.log_likelihood(&[e], 10.1).unwrap().value;
        let two = m.log_likelihood(&[e, e], 10.1).unwrap().value;
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn toy_fisher_information_is_one() {
        let f = fisher_information(&GaussianToy, 10.0, 20_000, 3, 1e-3).unwrap();
        assert!((f.score - 1.0).abs() < 0.05, "{f:?}");
        assert!((f.curvature - 1.0).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn toy_ensemble_follows_the_cramer_rao_bound() {
        let r = ensemble_run(&GaussianToy, 100, 400, 9, &toy_opts()).unwrap();
        assert_eq!(r.failures, 0);
        assert_eq!(r.histogram.total(), 400);
        assert!((r.sigma_g - 0.1).abs() < 0.015, "{}", r.sigma_g);
        assert!((r.sigma_g_raw - 0.1).abs() < 0.015);
        assert!((r.mean_sigma_hat - 0.1).abs() < 1e-9);
        assert!((r.mean_g_hat - 10.0).abs() < 3.0 * r.sigma_g_raw / 20.0);
    }

    #[test]
    fn identical_seeds_give_zero_spread() {
        let r = ensemble_with_seeds(&GaussianToy, 50, &[4, 4], &toy_opts()).unwrap();
        assert_eq!(r.sigma_g, 0.0);
        assert_eq!(r.sigma_g_raw, 0.0);
        assert_eq!(r.histogram.total(), 2);
    }

    #[test]
    fn gaussian_fit_recovers_parameters() {
        let x: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 7.0 * (-(v - 0.3f64).powi(2) / (2.0 * 0.4 * 0.4)).exp()).collect();
        let (a, m, s) = fit_gaussian(&x, &y).unwrap();
        assert!((a - 7.0).abs() < 1e-6 && (m - 0.3).abs() < 1e-6 && (s - 0.4).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn likelihood_ignores_event_order(seed in 0u64..1000, g in 9.5f64..10.5) {
            let mut ev = GaussianToy.sample(10.0, 50, seed).unwrap().events;
            let a = GaussianToy.log_likelihood(&ev, g).unwrap().value;
            ev.reverse();
            let b = GaussianToy.log_likelihood(&ev, g).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9 * a.abs());
        }

        #[test]
        fn parabola_fit_is_exact(a in 0.1f64..100.0, centre in -3.0f64..3.0, c in -5.0f64..5.0) {
            let g: Vec<f64> = (0..11).map(|i| centre - 0.1 + 0.02 * i as f64).collect();
            let l: Vec<f64> = g.iter().map(|x| -a * (x - centre).powi(2) + c).collect();
            let fit = quadratic_fit(&g, &l, 1e9).unwrap();
            prop_assert!((fit.g_hat - centre).abs() < 1e-9);
            prop_assert!((fit.a - a).abs() < 1e-8 * a);
        }
    }
}
