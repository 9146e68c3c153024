//! Leading-term constants for the expected number of branch misses.
//!
//! With pivot sampling parameter `t`, both Quicksort variants incur
//! `E[BM_n] ~ (a / H(t)) n ln n`, where `H(t)` is the discrete entropy of the
//! sampling scheme and the toll coefficient `a` is an expectation over the
//! Dirichlet(`t + 1`) distributed spacings `D` cut out by the pivots. For the
//! three predictor schemes those expectations reduce to the building block
//!
//! ```text
//! g(x, y) = E[f(X1)],  (X1, X2) ~ Dirichlet(x, y)
//! ```
//!
//! which is rational for the 1-bit predictor and a combination of the
//! geometric Beta integrals `J_1`, `J_2` for the 2-bit predictors.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::predictor::{miss_rate_unchecked, Scheme};
use crate::sorting::{Algorithm, SamplingParam, SiteId};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// `H_n = 1 + 1/2 + … + 1/n`, with `H_0 = 0`.
pub fn harmonic(n: u64) -> f64 {
    // Summed smallest terms first.
    (1..=n).rev().map(|i| 1.0 / i as f64).sum()
}

/// Discrete entropy `H(t) = Σ (t_l + 1)/(k + 1) · (H_{k+1} − H_{t_l+1})`.
pub fn discrete_entropy(t: &SamplingParam) -> f64 {
    let k1 = t.k() as u64 + 1;
    let hk = harmonic(k1);
    t.parts()
        .iter()
        .map(|&tl| {
            let tl1 = tl as u64 + 1;
            tl1 as f64 / k1 as f64 * (hk - harmonic(tl1))
        })
        .sum()
}

/// Limit ratios `τ = lim t / k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRatios(Vec<f64>);

impl LimitRatios {
    pub fn new(tau: &[f64]) -> Result<Self> {
        if !(2..=3).contains(&tau.len()) {
            return Err(param(format!("limit ratios need 2 or 3 components, got {}", tau.len())));
        }
        if tau.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(param(format!("limit ratios must lie in [0, 1]: {tau:?}")));
        }
        let sum: f64 = tau.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(param(format!("limit ratios must sum to 1, got {sum}")));
        }
        Ok(LimitRatios(tau.to_vec()))
    }

    /// `(τ, 1 − τ)`.
    pub fn classic(tau1: f64) -> Result<Self> {
        Self::new(&[tau1, 1.0 - tau1])
    }

    pub fn parts(&self) -> &[f64] {
        &self.0
    }

    pub fn s(&self) -> usize {
        self.0.len()
    }

    pub fn algorithm(&self) -> Algorithm {
        if self.s() == 2 {
            Algorithm::Cqs
        } else {
            Algorithm::Yqs
        }
    }
}

impl std::str::FromStr for LimitRatios {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts = trimmed
            .split(',')
            .map(|x| parse_ratio(x.trim()))
            .collect::<Result<Vec<_>>>()?;
        LimitRatios::new(&parts)
    }
}

/// Accepts decimals and simple fractions such as `1/3`.
fn parse_ratio(s: &str) -> Result<f64> {
    let bad = |e: &dyn std::fmt::Display| param(format!("bad ratio '{s}': {e}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| bad(&e))?;
            let d: f64 = d.trim().parse().map_err(|e| bad(&e))?;
            Ok(n / d)
        }
        None => s.parse().map_err(|e| bad(&e)),
    }
}

/// Shannon entropy (base e) `H* = −Σ τ_l ln τ_l`, with `0 ln 0 = 0`.
pub fn continuous_entropy(tau: &LimitRatios) -> f64 {
    tau.parts().iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Beta function for positive integer arguments, `(a−1)!(b−1)!/(a+b−1)!`,
/// evaluated as a running product to stay finite for large arguments.
pub fn beta_int(a: u32, b: u32) -> f64 {
    assert!(a >= 1 && b >= 1, "beta_int needs positive arguments");
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    // B(a, b) = 1/large · Π_{i=1}^{small-1} i/(large + i)
    let mut v = 1.0 / large as f64;
    for i in 1..small {
        v *= i as f64 / (large + i) as f64;
    }
    v
}

/// Rising factorial `x (x+1) … (x+n−1)` as an exact integer product.
pub fn rising(x: u64, n: u32) -> u128 {
    (0..n as u64).map(|i| (x + i) as u128).product()
}

fn rho1(d: u32) -> f64 {
    let sign = if (d / 3) % 2 == 0 { 1.0 } else { -1.0 };
    let base = match d % 3 {
        0 => 2.0 * PI / (3.0 * SQRT3),
        1 => PI / (3.0 * SQRT3),
        _ => 1.0 - PI / (3.0 * SQRT3),
    };
    sign * base
}

fn rho2(d: u32) -> f64 {
    let base = match d % 4 {
        0 => PI,
        1 => PI / 2.0,
        2 => 1.0,
        _ => 1.5 - PI / 4.0,
    };
    (-0.25f64).powi((d / 4) as i32) * base
}

/// Closed form of `∫_0^1 x^a (1−x)^b / (1/c − x(1−x)) dx` for `c ∈ {1, 2}`.
///
/// The integral is symmetric in `a` and `b`; the formula is applied with
/// `a ≥ b` after swapping. Empty sums contribute zero.
pub fn geo_integral_closed(c: u32, a: u32, b: u32) -> Result<f64> {
    let (a, b) = if a >= b { (a, b) } else { (b, a) };
    let d = a - b;
    let beta_terms = |weight: &dyn Fn(u32) -> f64| -> f64 {
        (0..b).map(|i| weight(i) * beta_int(a - i, b - i)).sum::<f64>()
    };
    match c {
        1 => {
            let mut v = -beta_terms(&|_| 1.0);
            for i in 1..=d / 3 {
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                let r = (d - 3 * i) as f64;
                v += sign * (1.0 / (r + 2.0) + 1.0 / (r + 1.0));
            }
            Ok(v + rho1(d))
        }
        2 => {
            let mut v = -beta_terms(&|i| 0.5f64.powi(i as i32));
            let scale = 0.5f64.powi(b as i32);
            let mut tail = 0.0;
            for i in 1..=d / 4 {
                let r = (d - 4 * i) as f64;
                tail += (-0.25f64).powi(i as i32 - 1) * (1.0 / (r + 3.0) + 1.0 / (r + 2.0) + 0.5 / (r + 1.0));
            }
            v += scale * tail;
            Ok(v + scale * rho2(d))
        }
        _ => Err(param(format!("geometric Beta integrals are defined for c = 1, 2; got {c}"))),
    }
}

/// Largest `a + b` for which [`geo_dirichlet_exp`] divides the closed form
/// by `B(a, b)`. Beyond it the closed form loses digits to cancellation
/// (its value is of the order of `B(a, b)` while its terms are of order 1)
/// and the positive series of [`geo_dirichlet_series`] is used instead.
pub const CLOSED_FORM_MAX_SUM: u32 = 12;

/// Normalized geometric Beta integral
/// `J_c(a, b) = 1/B(a, b) ∫ x^a (1−x)^b / (1/c − x(1−x)) dx`.
pub fn geo_dirichlet_exp(c: u32, a: u32, b: u32) -> Result<f64> {
    if a == 0 || b == 0 {
        return Err(param(format!("J_c(a, b) needs a, b >= 1; got ({a}, {b})")));
    }
    if a + b <= CLOSED_FORM_MAX_SUM {
        Ok(geo_integral_closed(c, a, b)? / beta_int(a, b))
    } else {
        geo_dirichlet_series(c, a, b)
    }
}

/// `J_c(a, b)` from the expansion `1/(1/c − u) = c Σ (c u)^j`, valid since
/// `c x(1−x) ≤ 1/2`:
/// `J_c(a, b) = c Σ_j c^j B(a+j+1, b+j+1) / B(a, b)`.
/// All terms are positive and shrink at least by `c/4` per step.
pub fn geo_dirichlet_series(c: u32, a: u32, b: u32) -> Result<f64> {
    if !(1..=2).contains(&c) {
        return Err(param(format!("geometric Beta integrals are defined for c = 1, 2; got {c}")));
    }
    if a == 0 || b == 0 {
        return Err(param(format!("J_c(a, b) needs a, b >= 1; got ({a}, {b})")));
    }
    let (a, b, c) = (a as f64, b as f64, c as f64);
    let mut r = a * b / ((a + b) * (a + b + 1.0));
    let mut sum = 0.0;
    let mut weight = c;
    for j in 0..10_000 {
        let term = weight * r;
        sum += term;
        if term < 1e-17 * sum {
            return Ok(sum);
        }
        let j = j as f64;
        r *= (a + j + 1.0) * (b + j + 1.0) / ((a + b + 2.0 * j + 2.0) * (a + b + 2.0 * j + 3.0));
        weight *= c;
    }
    Err(Error::Numeric("geometric Beta series did not converge".into()))
}

/// `g(x, y) = E[f(X1)]` for `(X1, X2) ~ Dirichlet(x, y)`.
pub fn g(scheme: Scheme, x: u32, y: u32) -> Result<f64> {
    if x == 0 || y == 0 {
        return Err(param(format!("g needs x, y >= 1; got ({x}, {y})")));
    }
    let one_bit = 2.0 * x as f64 * y as f64 / rising((x + y) as u64, 2) as f64;
    Ok(match scheme {
        Scheme::OneBit => one_bit,
        Scheme::TwoBitSc => 0.5 * geo_dirichlet_exp(2, x, y)?,
        Scheme::TwoBitFc => one_bit * geo_dirichlet_exp(1, x + 1, y + 1)? + geo_dirichlet_exp(1, x, y)?,
    })
}

/// Toll coefficient of classic Quicksort: `g(t1 + 1, t2 + 1)`.
pub fn a_cqs(scheme: Scheme, t: &SamplingParam) -> Result<f64> {
    t.expect_algorithm(Algorithm::Cqs)?;
    g(scheme, t.parts()[0] + 1, t.parts()[1] + 1)
}

/// Per-site toll contributions of Yaroslavskiy's partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualSiteTolls {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
}

impl DualSiteTolls {
    pub fn total(&self) -> f64 {
        self.y1 + self.y2 + self.y3 + self.y4
    }

    pub fn get(&self, site: SiteId) -> Option<f64> {
        match site {
            SiteId::Y1 => Some(self.y1),
            SiteId::Y2 => Some(self.y2),
            SiteId::Y3 => Some(self.y3),
            SiteId::Y4 => Some(self.y4),
            _ => None,
        }
    }
}

/// Toll coefficient of Yaroslavskiy's Quicksort, split by comparison site.
pub fn a_yqs_sites(scheme: Scheme, t: &SamplingParam) -> Result<DualSiteTolls> {
    t.expect_algorithm(Algorithm::Yqs)?;
    let [t1, t2, t3] = [t.parts()[0] + 1, t.parts()[1] + 1, t.parts()[2] + 1];
    let k1 = (t1 + t2 + t3) as u64;
    let k1f = k1 as f64;
    let k2 = rising(k1, 2) as f64;
    let w2 = |num: u128| num as f64 / k2;
    let (u1, u2, u3) = (t1 as u128, t2 as u128, t3 as u128);
    let g = |x: u32, y: u32| g(scheme, x, y);

    let y1 = t1 as f64 / k1f * g(t1 + 1, t2 + t3)? + t2 as f64 / k1f * g(t1, t2 + t3 + 1)?;
    let y2 = w2(u1 * u2) * g(t2 + 1, t3)?
        + w2(u1 * u3) * g(t2, t3 + 1)?
        + w2(rising(t2 as u64, 2)) * g(t2 + 2, t3)?
        + w2(u2 * u3) * g(t2 + 1, t3 + 1)?;
    let y3 = t3 as f64 / k1f * g(t1 + t2, t3 + 1)?;
    let y4 = w2(u1 * u3) * g(t1 + 1, t2)? + w2(u2 * u3) * g(t1, t2 + 1)?;
    Ok(DualSiteTolls { y1, y2, y3, y4 })
}

pub fn a_yqs(scheme: Scheme, t: &SamplingParam) -> Result<f64> {
    Ok(a_yqs_sites(scheme, t)?.total())
}

/// `a*_CQS = f(τ1)`.
pub fn a_star_cqs(scheme: Scheme, tau: &LimitRatios) -> Result<f64> {
    if tau.s() != 2 {
        return Err(param("classic limit constant needs two ratios"));
    }
    Ok(miss_rate_unchecked(scheme, tau.parts()[0]))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Limit per-site contributions for Yaroslavskiy's Quicksort.
///
/// The arguments of `f` at sites Y2 and Y4 are the conditional ratios
/// `τ2/(τ2+τ3)` and `τ1/(τ1+τ2)` (the limits of the branch probabilities
/// at those sites); `0/0` is taken as 0.
pub fn a_star_yqs_sites(scheme: Scheme, tau: &LimitRatios) -> Result<DualSiteTolls> {
    if tau.s() != 3 {
        return Err(param("dual-pivot limit constant needs three ratios"));
    }
    let [t1, t2, t3] = [tau.parts()[0], tau.parts()[1], tau.parts()[2]];
    let f = |p: f64| miss_rate_unchecked(scheme, p.clamp(0.0, 1.0));
    Ok(DualSiteTolls {
        y1: (t1 + t2) * f(t2 + t3),
        y2: (t1 + t2) * (t2 + t3) * f(ratio(t2, t2 + t3)),
        y3: t3 * f(t1 + t2),
        y4: t3 * (t1 + t2) * f(ratio(t1, t1 + t2)),
    })
}

pub fn a_star_yqs(scheme: Scheme, tau: &LimitRatios) -> Result<f64> {
    Ok(a_star_yqs_sites(scheme, tau)?.total())
}

/// Transfer of a linear partitioning toll `a·n` to the `n ln n` coefficient.
pub fn leading_coefficient(a: f64, entropy: f64) -> Result<f64> {
    if entropy <= 0.0 || !entropy.is_finite() {
        return Err(Error::Domain(format!("entropy must be positive, got {entropy}")));
    }
    Ok(a / entropy)
}

/// Parameters an analytical coefficient was computed for.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CoefficientParams {
    Finite(SamplingParam),
    Limit(LimitRatios),
}

impl std::fmt::Display for CoefficientParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoefficientParams::Finite(t) => write!(f, "{t}"),
            CoefficientParams::Limit(tau) => {
                f.write_str("(")?;
                for (i, x) in tau.parts().iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub algorithm: Algorithm,
    pub scheme: Scheme,
    pub params: CoefficientParams,
    /// Toll coefficient.
    pub a: f64,
    /// Discrete or limit entropy.
    pub entropy: f64,
    /// `a / H`, the coefficient of `n ln n`.
    pub coefficient: f64,
    /// Per-site split of `a` (dual-pivot only).
    pub sites: Option<DualSiteTolls>,
}

/// Full analytical report for a finite sampling parameter.
pub fn analyze(scheme: Scheme, t: &SamplingParam) -> Result<CoefficientReport> {
    let entropy = discrete_entropy(t);
    let (a, sites) = match t.algorithm() {
        Algorithm::Cqs => (a_cqs(scheme, t)?, None),
        Algorithm::Yqs => {
            let s = a_yqs_sites(scheme, t)?;
            (s.total(), Some(s))
        }
    };
    Ok(CoefficientReport {
        algorithm: t.algorithm(),
        scheme,
        params: CoefficientParams::Finite(*t),
        a,
        entropy,
        coefficient: leading_coefficient(a, entropy)?,
        sites,
    })
}

/// Full analytical report in the `k → ∞` limit.
pub fn analyze_limit(scheme: Scheme, tau: &LimitRatios) -> Result<CoefficientReport> {
    let entropy = continuous_entropy(tau);
    let (a, sites) = match tau.algorithm() {
        Algorithm::Cqs => (a_star_cqs(scheme, tau)?, None),
        Algorithm::Yqs => {
            let s = a_star_yqs_sites(scheme, tau)?;
            (s.total(), Some(s))
        }
    };
    Ok(CoefficientReport {
        algorithm: tau.algorithm(),
        scheme,
        params: CoefficientParams::Limit(tau.clone()),
        a,
        entropy,
        coefficient: leading_coefficient(a, entropy)?,
        sites,
    })
}
