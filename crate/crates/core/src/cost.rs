//! Combined cost `Q = BC + ξ·BM` of classic Quicksort, where `BC` counts
//! executed bytecodes and `ξ` is the price of one branch miss in bytecode
//! units. All quantities are leading coefficients of `n ln n`.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::analysis::{a_cqs, continuous_entropy, discrete_entropy, LimitRatios};
use crate::error::{param, Error, Result};
use crate::oracles::find_root;
use crate::predictor::{miss_rate_unchecked, Scheme};
use crate::sorting::{Algorithm, SamplingParam};

/// Linear bytecode coefficient of one classic partitioning step:
/// `6 + 18 (t1+1)(t2+1) / ((k+1)(k+2))`.
pub fn bytecode_coefficient_cqs(t: &SamplingParam) -> Result<f64> {
    t.expect_algorithm(Algorithm::Cqs)?;
    let (t1, t2) = (t.parts()[0] as f64, t.parts()[1] as f64);
    let k = t.k() as f64;
    Ok(6.0 + 18.0 * (t1 + 1.0) * (t2 + 1.0) / ((k + 1.0) * (k + 2.0)))
}

/// `k → ∞` form of [`bytecode_coefficient_cqs`]: `6 + 18 τ1 τ2`.
pub fn bytecode_coefficient_limit(tau: &LimitRatios) -> Result<f64> {
    if tau.s() != 2 {
        return Err(param("bytecode model is defined for classic Quicksort only"));
    }
    Ok(6.0 + 18.0 * tau.parts()[0] * tau.parts()[1])
}

fn check_xi(xi: f64) -> Result<()> {
    if xi >= 0.0 && xi.is_finite() {
        Ok(())
    } else {
        Err(param(format!("branch-miss cost must be finite and non-negative, got {xi}")))
    }
}

/// `q_ξ(t) = (BC(t) + ξ a_CQS(t)) / H(t)`.
pub fn q_finite(xi: f64, scheme: Scheme, t: &SamplingParam) -> Result<f64> {
    check_xi(xi)?;
    Ok((bytecode_coefficient_cqs(t)? + xi * a_cqs(scheme, t)?) / discrete_entropy(t))
}

/// `q_ξ(τ) = (6 + 18 τ1 τ2 + ξ f(τ1)) / H*(τ)`.
pub fn q_limit(xi: f64, scheme: Scheme, tau: &LimitRatios) -> Result<f64> {
    check_xi(xi)?;
    let h = continuous_entropy(tau);
    if h <= 0.0 {
        return Err(Error::Domain("q is unbounded at a degenerate split".into()));
    }
    Ok((bytecode_coefficient_limit(tau)? + xi * miss_rate_unchecked(scheme, tau.parts()[0])) / h)
}

/// [`q_limit`] along `τ = (x, 1 − x)` for `x ∈ (0, 1)`, without validation.
#[inline]
fn q_line(xi: f64, scheme: Scheme, x: f64) -> f64 {
    let y = 1.0 - x;
    let h = -x * x.ln() - y * y.ln();
    (6.0 + 18.0 * x * y + xi * miss_rate_unchecked(scheme, x)) / h
}

/// Closed-form threshold above which the median stops being optimal.
pub fn xi_critical_closed(scheme: Scheme) -> f64 {
    let num = 7.0 - 6.0 * LN_2;
    match scheme {
        Scheme::OneBit => 3.0 * num / (2.0 * LN_2 - 1.0),
        Scheme::TwoBitSc => 3.0 * num / (4.0 * LN_2 - 1.0),
        Scheme::TwoBitFc => 9.0 * num / (10.0 * LN_2 - 3.0),
    }
}

/// Five-point central second difference of `q_ξ` at `τ = 1/2`.
fn curvature_at_half(xi: f64, scheme: Scheme) -> f64 {
    let h = 1e-3;
    let q = |d: f64| q_line(xi, scheme, 0.5 + d);
    (-q(2.0 * h) + 16.0 * q(h) - 30.0 * q(0.0) + 16.0 * q(-h) - q(-2.0 * h)) / (12.0 * h * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiCritical {
    pub scheme: Scheme,
    pub closed_form: f64,
    /// Root of the numerically differentiated curvature at `τ = 1/2`.
    pub numeric: f64,
}

impl XiCritical {
    pub fn abs_diff(&self) -> f64 {
        (self.closed_form - self.numeric).abs()
    }
}

pub fn xi_critical(scheme: Scheme) -> Result<XiCritical> {
    let numeric = find_root(|xi| curvature_at_half(xi, scheme), 0.0, 1e3, 1e-10)?;
    Ok(XiCritical { scheme, closed_form: xi_critical_closed(scheme), numeric })
}

const TAU_GRID: usize = 2000;
const DERIV_STEP: f64 = 1e-6;
const TAU_TOL: f64 = 1e-8;

fn dq(xi: f64, scheme: Scheme, x: f64) -> f64 {
    (q_line(xi, scheme, x + DERIV_STEP) - q_line(xi, scheme, x - DERIV_STEP)) / (2.0 * DERIV_STEP)
}

/// Optimal pivot position `τ*(ξ) ∈ (0, 1/2]` in the limit `k → ∞`.
///
/// Returns 1/2 up to the critical threshold; above it the left minimizer,
/// located on a grid and refined as a root of the numeric derivative.
pub fn tau_star(xi: f64, scheme: Scheme) -> Result<f64> {
    check_xi(xi)?;
    if xi <= xi_critical_closed(scheme) {
        return Ok(0.5);
    }
    let step = 0.5 / TAU_GRID as f64;
    let (best, _) = (1..=TAU_GRID)
        .map(|i| (i, q_line(xi, scheme, i as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (i, q)| if q < acc.1 { (i, q) } else { acc });
    let lo = ((best - 1) as f64 * step).max(DERIV_STEP * 2.0);
    let hi = if best == TAU_GRID { 0.5 - 1e-9 } else { (best + 1) as f64 * step };
    match find_root(|x| dq(xi, scheme, x), lo, hi, TAU_TOL) {
        Ok(x) => Ok(x),
        // Flat to working precision right at the threshold: golden-section
        // on q itself.
        Err(Error::Bracket { .. }) => Ok(golden_min(|x| q_line(xi, scheme, x), lo, hi, TAU_TOL)),
        Err(e) => Err(e),
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Sampling parameter with sample size `k` minimizing `q_ξ(t)`.
///
/// Ties (relative difference ≤ 1e−12) go to the more balanced `t`, then to
/// the smaller `t1`.
pub fn t_star_finite(xi: f64, scheme: Scheme, k: usize) -> Result<SamplingParam> {
    check_xi(xi)?;
    if k == 0 {
        return Err(param("sample size must be at least 1"));
    }
    let k = u32::try_from(k).map_err(|_| param("sample size too large"))?;
    let mut best: Option<(SamplingParam, f64)> = None;
    for t1 in 0..k {
        let t = SamplingParam::classic(t1, k - 1 - t1);
        let q = q_finite(xi, scheme, &t)?;
        let better = match best {
            None => true,
            Some((bt, bq)) => {
                let tol = 1e-12 * bq.abs();
                if q < bq - tol {
                    true
                } else if q <= bq + tol {
                    imbalance(&t) < imbalance(&bt)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((t, q));
        }
    }
    Ok(best.expect("k >= 1 candidates").0)
}

fn imbalance(t: &SamplingParam) -> u32 {
    t.parts()[0].abs_diff(t.parts()[1])
}
