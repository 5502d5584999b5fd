//! Uniform 1-D axes and rectangular 2-D grids of real samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    /// `len` points from `start` to `end` inclusive.
    pub fn new(start: f64, end: f64, len: usize) -> Result<Self> {
        if len < 2 || !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Config(format!(
                "grid [{start}, {end}] with {len} points is degenerate"
            )));
        }
        Ok(Self {
            start,
            step: (end - start) / (len - 1) as f64,
            len,
        })
    }

    /// Smallest grid covering `[start, end]` with spacing at most `max_step`.
    pub fn with_max_step(start: f64, end: f64, max_step: f64) -> Result<Self> {
        let cells = ((end - start) / max_step).ceil().max(1.0) as usize;
        Self::new(start, end, cells + 1)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.point(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x <= self.end()
    }

    /// Cell index and fractional offset of `x`, if inside the grid.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !self.contains(x) {
            return None;
        }
        let s = (x - self.start) / self.step;
        let i = (s.floor() as usize).min(self.len - 2);
        Some((i, s - i as f64))
    }

    /// Composite trapezoid rule for samples on this grid.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len);
        let inner: f64 = values[1..self.len - 1].iter().sum();
        (inner + 0.5 * (values[0] + values[self.len - 1])) * self.step
    }
}

/// Real samples on `rows × cols`, row-major (`values[r * cols.len + c]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub rows: UniformGrid,
    pub cols: UniformGrid,
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn from_fn(rows: UniformGrid, cols: UniformGrid, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        use rayon::prelude::*;
        let values = (0..rows.len)
            .into_par_iter()
            .flat_map_iter(|r| {
                let y = rows.point(r);
                (0..cols.len).map(move |c| (y, cols.point(c)))
            })
            .map(|(y, x)| f(y, x))
            .collect();
        Self { rows, cols, values }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols.len + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols.len..(r + 1) * self.cols.len]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows.len).map(|r| self.get(r, c)).collect()
    }

    /// Trapezoid integral over both axes.
    pub fn integral(&self) -> f64 {
        let row_integrals: Vec<f64> = (0..self.rows.len).map(|r| self.cols.trapezoid(self.row(r))).collect();
        self.rows.trapezoid(&row_integrals)
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn bilinear(&self, row_coord: f64, col_coord: f64) -> Option<f64> {
        let (r, u) = self.rows.locate(row_coord)?;
        let (c, v) = self.cols.locate(col_coord)?;
        let a = self.get(r, c);
        let b = self.get(r, c + 1);
        let d = self.get(r + 1, c);
        let e = self.get(r + 1, c + 1);
        Some((1.0 - u) * ((1.0 - v) * a + v * b) + u * ((1.0 - v) * d + v * e))
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `Σ|a - b| dA` between two grids on the same axes.
    pub fn l1_distance(&self, other: &Grid2) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.rows.step
            * self.cols.step
    }
}
