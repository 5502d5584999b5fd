use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::airy::airy_unchecked;
use crate::error::{Error, Result};

/// Largest supported zero count.
pub const MAX_ZEROS: usize = 10_000;
/// Newton step at which a zero counts as polished.
pub const ZERO_TOLERANCE: f64 = 1e-13;

/// Positive numbers `λ_n` with `Ai(-λ_n) = 0`, in increasing order (`n` from 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiryZeroTable {
    zeros: Vec<f64>,
}

impl AiryZeroTable {
    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    /// `λ_n` for 1-based `n`.
    pub fn get(&self, n: usize) -> f64 {
        self.zeros[n - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.zeros
    }
}

/// Leading asymptotic estimate `(3π(4n-1)/8)^{2/3}` of the n-th zero.
pub fn zero_seed(n: usize) -> f64 {
    (3.0 * PI * (4.0 * n as f64 - 1.0) / 8.0).powf(2.0 / 3.0)
}

/// First `n_max` zeros of `Ai(-λ)`, each Newton-polished from its asymptotic seed.
pub fn airy_zeros(n_max: usize) -> Result<AiryZeroTable> {
    if n_max == 0 || n_max > MAX_ZEROS {
        return Err(Error::Config(format!(
            "zero count {n_max} outside 1..={MAX_ZEROS}"
        )));
    }
    let zeros = (1..=n_max).map(polish).collect::<Result<Vec<_>>>()?;
    Ok(AiryZeroTable { zeros })
}

fn polish(n: usize) -> Result<f64> {
    let mut lambda = zero_seed(n);
    for _ in 0..60 {
        let (ai, aip) = airy_unchecked(-lambda);
        // d/dλ Ai(-λ) = -Ai'(-λ)
        let step = ai / aip;
        lambda += step;
        if step.abs() <= ZERO_TOLERANCE * lambda.max(1.0) {
            return Ok(lambda);
        }
    }
    Err(Error::Consistency(format!("Newton iteration for zero {n} did not converge")))
}
