//! Momentum-space densities at the end of the mirror.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::{EigenTable, GqsBasis};
use crate::error::{Error, Result};
use crate::grid::{Grid2, UniformGrid};
use crate::physics::PhysicalContext;

/// `ψ̃_n(p_z)` on a physical momentum grid.
pub fn eigen_momentum(table: &EigenTable, n: usize, ctx: &PhysicalContext, p_grid: &UniformGrid) -> Result<Vec<Complex64>> {
    if n == 0 || n > table.n_states() {
        return Err(Error::Config(format!("state {n} outside 1..={}", table.n_states())));
    }
    let pg = ctx.momentum_scale;
    if p_grid.step >= pg / 8.0 {
        return Err(Error::Config(format!(
            "momentum step {:.3} p_g does not resolve the eigenfunctions (needs < p_g/8)",
            p_grid.step / pg
        )));
    }
    let scale = pg.sqrt().recip();
    p_grid
        .points()
        .map(|p| {
            table
                .state(n, p / pg)
                .map(|v| v * scale)
                .ok_or_else(|| Error::Domain(format!("p_z = {:.2} p_g lies outside the eigenfunction table", p / pg)))
        })
        .collect()
}

/// `π_{n,m}(p_z) = ψ̃_n(p_z) ψ̃_m(p_z)*`.
pub fn cross_density(table: &EigenTable, n: usize, m: usize, ctx: &PhysicalContext, p_grid: &UniformGrid) -> Result<Vec<Complex64>> {
    let a = eigen_momentum(table, n, ctx, p_grid)?;
    let b = eigen_momentum(table, m, ctx, p_grid)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x * y.conj()).collect())
}

/// `Π_t(p_z)` on a rectangular `(t, p_z)` grid; rows are times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumDensity {
    pub grid: Grid2,
}

impl MomentumDensity {
    pub fn t_grid(&self) -> &UniformGrid {
        &self.grid.rows
    }

    pub fn p_grid(&self) -> &UniformGrid {
        &self.grid.cols
    }

    /// `∫ Π_t dp_z` for every row.
    pub fn norms(&self) -> Vec<f64> {
        (0..self.grid.rows.len)
            .map(|r| self.grid.cols.trapezoid(self.grid.row(r)))
            .collect()
    }

    pub fn value(&self, t: f64, p_z: f64) -> Option<f64> {
        self.grid.bilinear(t, p_z)
    }
}

/// Evaluates `Π_t(p_z) = |Σ_n c_n ψ̃_n(p_z) e^{-iλ_n t/t_g}|²` on the grid;
/// zero outside the table window.
pub fn momentum_density(basis: &GqsBasis, t_grid: UniformGrid, p_grid: UniformGrid) -> Result<MomentumDensity> {
    let pg = basis.ctx.momentum_scale;
    let table = basis.table();
    let mut values = vec![0.0; t_grid.len * p_grid.len];
    values
        .par_chunks_mut(p_grid.len)
        .enumerate()
        .for_each_init(Vec::new, |scratch, (r, row)| {
            basis.phased_into(t_grid.point(r), scratch);
            for (v, p) in row.iter_mut().zip(p_grid.points()) {
                *v = table.combine(p / pg, scratch).unwrap_or_default().norm_sqr() / pg;
            }
        });
    if let Some(v) = values.iter().find(|v| **v < -1e-10 || !v.is_finite()) {
        return Err(Error::Consistency(format!("momentum density value {v}")));
    }
    Ok(MomentumDensity {
        grid: Grid2 {
            rows: t_grid,
            cols: p_grid,
            values,
        },
    })
}

/// Default momentum axis: `±12 p_g` with step `p_g / 16`.
pub fn default_p_grid(ctx: &PhysicalContext) -> Result<UniformGrid> {
    let pg = ctx.momentum_scale;
    UniformGrid::new(-12.0 * pg, 12.0 * pg, 385)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gqs::basis::tests::small_table;
    use crate::physics::{make_context, InitialWavePacket, HYDROGEN_MASS, STANDARD_G};
    use std::sync::Arc;

    fn ctx() -> PhysicalContext {
        make_context(HYDROGEN_MASS, STANDARD_G).unwrap()
    }

    fn count_maxima(v: &[f64], floor: f64) -> usize {
        v.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2] && w[1] > floor).count()
    }

    #[test]
    fn diagonal_densities_have_n_bumps() {
        let t = small_table();
        let c = ctx();
        let pg = c.momentum_scale;
        let grid = UniformGrid::new(-10.0 * pg, 10.0 * pg, 4001).unwrap();
        for n in 1..=6 {
            let d = cross_density(&t, n, n, &c, &grid).unwrap();
            let re: Vec<f64> = d.iter().map(|v| v.re).collect();
            assert!(d.iter().all(|v| v.im.abs() < 1e-30 && v.re >= 0.0));
            let peak = re.iter().cloned().fold(0.0, f64::max);
            assert_eq!(count_maxima(&re, 1e-3 * peak), n, "n={n}");
        }
    }

    #[test]
    fn off_diagonal_terms_are_complex_and_hermitian() {
        let t = small_table();
        let c = ctx();
        let grid = default_p_grid(&c).unwrap();
        let a = cross_density(&t, 1, 2, &c, &grid).unwrap();
        let b = cross_density(&t, 2, 1, &c, &grid).unwrap();
        assert!(a.iter().any(|v| v.im.abs() > 1e-3 * v.norm().max(1e-40)));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y.conj()).norm() <= 1e-12 * x.norm().max(1e-40));
        }
    }

    #[test]
    fn coarse_momentum_grid_is_rejected() {
        let t = small_table();
        let c = ctx();
        let pg = c.momentum_scale;
        let grid = UniformGrid::new(-5.0 * pg, 5.0 * pg, 21).unwrap();
        assert!(eigen_momentum(&t, 1, &c, &grid).is_err());
    }

    #[test]
    fn single_state_density_is_stationary() {
        let t = small_table();
        let c = ctx();
        let wp = InitialWavePacket::new(10e-6, 0.5e-6, 0.25).unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); t.n_states()];
        coeffs[0] = Complex64::new(0.6, 0.0);
        let basis = GqsBasis::with_coefficients(c, wp, Arc::clone(&t), coeffs).unwrap();
        let tg = UniformGrid::new(0.0, 40.0 * c.time_scale, 7).unwrap();
        let d = momentum_density(&basis, tg, default_p_grid(&c).unwrap()).unwrap();
        let psi1 = eigen_momentum(&t, 1, &c, d.p_grid()).unwrap();
        for r in 0..tg.len {
            for (v, f) in d.grid.row(r).iter().zip(&psi1) {
                assert!((v - 0.36 * f.norm_sqr()).abs() < 1e-12 * (0.36 * f.norm_sqr()).max(1e-20 / c.momentum_scale));
            }
        }
    }

    #[test]
    fn two_state_trace_oscillates_at_the_level_spacing() {
        let t = small_table();
        let c = ctx();
        let wp = InitialWavePacket::new(10e-6, 0.5e-6, 0.25).unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); t.n_states()];
        coeffs[0] = Complex64::new(0.7, 0.0);
        coeffs[2] = Complex64::new(0.5, 0.0);
        let basis = GqsBasis::with_coefficients(c, wp, Arc::clone(&t), coeffs).unwrap();
        let omega = (t.zeros().get(3) - t.zeros().get(1)) / c.time_scale;
        let period = 2.0 * std::f64::consts::PI / omega;
        let mut s = Vec::new();
        let p = 0.7 * c.momentum_scale;
        let at = |time: f64, s: &mut Vec<Complex64>| basis.momentum_density_at(time, p, s);
        let base = at(0.3, &mut s);
        assert!((at(0.3 + period, &mut s) - base).abs() < 1e-9 * base);
        assert!((at(0.3 + 0.5 * period, &mut s) - base).abs() > 1e-3 * base);
    }
}
