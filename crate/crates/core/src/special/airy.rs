//! Airy function of the first kind and its derivative on the real line.
//!
//! Evaluation combines three representations:
//!
//! * on `[-10, 12]`, a Taylor expansion of the Airy equation `y'' = x y`
//!   about the nearest node of a table spaced `0.25` apart. The node at the
//!   origin carries the Maclaurin values `Ai(0)`, `Ai'(0)`; negative nodes are
//!   filled by stepping outward from the origin and positive nodes by stepping
//!   inward from `x = 12`, where the exponential asymptotic series is accurate
//!   to machine precision. Stepping inward keeps `Ai` the dominant solution, so
//!   the recessive decay is resolved to full relative precision.
//! * for `x > 12`, the exponentially small asymptotic series;
//! * for `x < -10`, the oscillatory asymptotic series.
//!
//! Both asymptotic series are summed up to their smallest term, which is
//! below `1e-17` relative at the switchover points.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// `Ai(0) = 3^{-2/3} / Γ(2/3)`.
pub const AI_0: f64 = 0.355_028_053_887_817_24;
/// `Ai'(0) = -3^{-1/3} / Γ(1/3)`.
pub const AIP_0: f64 = -0.258_819_403_792_806_8;

const NODE_STEP: f64 = 0.25;
const NODE_MIN: f64 = -10.0;
const NODE_MAX: f64 = 12.0;
const TAYLOR_EPS: f64 = 1e-18;
const MAX_TAYLOR_TERMS: usize = 80;

/// `Ai(x)`.
pub fn airy_ai(x: f64) -> Result<f64> {
    airy(x).map(|(ai, _)| ai)
}

/// `Ai'(x)`.
pub fn airy_ai_prime(x: f64) -> Result<f64> {
    airy(x).map(|(_, aip)| aip)
}

/// `(Ai(x), Ai'(x))` in one evaluation.
pub fn airy(x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("Airy function argument {x} is not finite")));
    }
    Ok(airy_unchecked(x))
}

pub(crate) fn airy_unchecked(x: f64) -> (f64, f64) {
    if x > NODE_MAX {
        asymptotic_positive(x)
    } else if x < NODE_MIN {
        asymptotic_negative(-x)
    } else {
        nodes().eval(x)
    }
}

struct NodeTable {
    values: Vec<(f64, f64)>,
}

impl NodeTable {
    fn build() -> Self {
        let count = ((NODE_MAX - NODE_MIN) / NODE_STEP).round() as usize + 1;
        let origin = (-NODE_MIN / NODE_STEP).round() as usize;
        let mut values = vec![(0.0, 0.0); count];

        values[origin] = (AI_0, AIP_0);
        for i in (0..origin).rev() {
            let (y, dy) = values[i + 1];
            values[i] = taylor(node_x(i + 1), y, dy, -NODE_STEP);
        }

        let last = count - 1;
        values[last] = asymptotic_positive(NODE_MAX);
        for i in (origin + 1..last).rev() {
            let (y, dy) = values[i + 1];
            values[i] = taylor(node_x(i + 1), y, dy, -NODE_STEP);
        }
        Self { values }
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let i = ((x - NODE_MIN) / NODE_STEP).round() as usize;
        let i = i.min(self.values.len() - 1);
        let x0 = node_x(i);
        let (y, dy) = self.values[i];
        taylor(x0, y, dy, x - x0)
    }
}

fn node_x(i: usize) -> f64 {
    NODE_MIN + i as f64 * NODE_STEP
}

fn nodes() -> &'static NodeTable {
    static TABLE: OnceLock<NodeTable> = OnceLock::new();
    TABLE.get_or_init(NodeTable::build)
}

/// Solution of `y'' = x y` at `x0 + s` from `(y, y')` at `x0`.
fn taylor(x0: f64, y0: f64, dy0: f64, s: f64) -> (f64, f64) {
    // a_{j+2} (j+2)(j+1) = x0 a_j + a_{j-1}
    let mut a_prev = 0.0; // a_{j-1}
    let mut a = y0; // a_j
    let mut a_next = dy0; // a_{j+1}
    let mut sp = 1.0; // s^j
    let mut y = 0.0;
    let mut dy = 0.0;
    let mut quiet = 0;
    for j in 0..MAX_TAYLOR_TERMS {
        let term = a * sp;
        y += term;
        // derivative term j a_j s^{j-1}, accumulated as (j+1) a_{j+1} s^j
        let dterm = (j + 1) as f64 * a_next * sp;
        dy += dterm;
        let jf = j as f64;
        let a_next2 = (x0 * a + a_prev) / ((jf + 2.0) * (jf + 1.0));
        a_prev = a;
        a = a_next;
        a_next = a_next2;
        sp *= s;
        let scale = y.abs().max(dy.abs()).max(f64::MIN_POSITIVE);
        if term.abs() <= TAYLOR_EPS * scale && dterm.abs() <= TAYLOR_EPS * scale {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    (y, dy)
}

/// Coefficients `u_k` of the Airy asymptotic expansions.
fn u_coefficients() -> &'static [f64] {
    static U: OnceLock<Vec<f64>> = OnceLock::new();
    U.get_or_init(|| {
        let mut u = vec![1.0];
        for k in 1..120usize {
            let kf = k as f64;
            let prev = u[k - 1];
            let next = prev * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
                / ((2.0 * kf - 1.0) * 216.0 * kf);
            if !next.is_finite() {
                break;
            }
            u.push(next);
        }
        u
    })
}

fn v_coefficient(u: &[f64], k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        let kf = k as f64;
        -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u[k]
    }
}

/// Sum of `sign(k) c_k / zeta^k` for `k = start, start + stride, ...`,
/// truncated at the smallest term.
fn optimal_sum(coef: impl Fn(usize) -> f64, inv_zeta: f64, start: usize, stride: usize, alternate: bool, len: usize) -> f64 {
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    let mut idx = 0usize;
    let mut k = start;
    while k < len {
        let mag = coef(k) * inv_zeta.powi(k as i32);
        if mag.abs() > last {
            break;
        }
        let sign = if alternate && idx % 2 == 1 { -1.0 } else { 1.0 };
        sum += sign * mag;
        last = mag.abs();
        if last < 1e-18 * sum.abs() {
            break;
        }
        idx += 1;
        k += stride;
    }
    sum
}

fn asymptotic_positive(x: f64) -> (f64, f64) {
    let u = u_coefficients();
    let zeta = 2.0 / 3.0 * x * x.sqrt();
    let inv = 1.0 / zeta;
    let sa = optimal_sum(|k| if k % 2 == 0 { u[k] } else { -u[k] }, inv, 0, 1, false, u.len());
    let sb = optimal_sum(|k| {
        let v = v_coefficient(u, k);
        if k % 2 == 0 { v } else { -v }
    }, inv, 0, 1, false, u.len());
    let pref = (-zeta).exp() / (2.0 * PI.sqrt());
    let x4 = x.sqrt().sqrt();
    (pref / x4 * sa, -pref * x4 * sb)
}

fn asymptotic_negative(z: f64) -> (f64, f64) {
    let u = u_coefficients();
    let zeta = 2.0 / 3.0 * z * z.sqrt();
    let inv = 1.0 / zeta;
    let n = u.len();
    let u_even = optimal_sum(|k| u[k], inv, 0, 2, true, n);
    let u_odd = optimal_sum(|k| u[k], inv, 1, 2, true, n);
    let v_even = optimal_sum(|k| v_coefficient(u, k), inv, 0, 2, true, n);
    let v_odd = optimal_sum(|k| v_coefficient(u, k), inv, 1, 2, true, n);
    let phase = zeta - FRAC_PI_4;
    let (s, c) = phase.sin_cos();
    let z4 = z.sqrt().sqrt();
    let rsp = 1.0 / PI.sqrt();
    let ai = rsp / z4 * (c * u_even + s * u_odd);
    let aip = rsp * z4 * (s * v_even - c * v_odd);
    (ai, aip)
}
