//! Self-checks of the closed forms against the numerical oracles and the
//! reference coefficient table. Used by the `verify` command.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::analysis::{g, geo_integral_closed};
use crate::cost::{tau_star, xi_critical};
use crate::error::Result;
use crate::experiment::{run_simulation, table_rows, ExperimentConfig};
use crate::oracles::{mc_expectation, quadrature, steady_state_miss_rate_numeric, DirichletParams, QUAD_TOL};
use crate::par::Execution;
use crate::predictor::{miss_rate_unchecked, ResetPolicy, Scheme};
use crate::rng;
use crate::sorting::{Algorithm, SamplingParam};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateResult {
    pub gate: String,
    pub passed: bool,
    pub detail: String,
}

impl GateResult {
    fn new(gate: &str, passed: bool, detail: String) -> Self {
        GateResult { gate: gate.to_string(), passed, detail }
    }
}

/// Reference value of one table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceCell {
    pub block: &'static str,
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    pub value: f64,
    /// Exact closed form (checked to 1e−9) or a 5-decimal rounding.
    pub exact: bool,
}

/// The 30 reference coefficients, in the order of [`table_rows`].
pub fn reference_table() -> Vec<ReferenceCell> {
    let s3 = 3f64.sqrt();
    let ln3 = 3f64.ln();
    let lim_half = 1.0 / (2.0 * LN_2);
    use Algorithm::{Cqs, Yqs};
    use Scheme::{OneBit, TwoBitFc, TwoBitSc};
    let cells: [(&str, Scheme, f64, f64, bool); 15] = [
        ("no-sampling", OneBit, 2.0 / 3.0, 101.0 / 150.0, true),
        ("no-sampling", TwoBitSc, PI / 2.0 - 1.0, 31.0 * PI / 40.0 - 37.0 / 20.0, true),
        ("no-sampling", TwoBitFc, 4.0 * PI / s3 - 20.0 / 3.0, 49.0 * PI / (5.0 * s3) - 1288.0 / 75.0, true),
        ("k5-median", OneBit, 180.0 / 259.0, 274.0 / 399.0, true),
        ("k5-median", TwoBitSc, 225.0 * PI / 74.0 - 330.0 / 37.0, 785.0 * PI / 532.0 - 535.0 / 133.0, true),
        (
            "k5-median",
            TwoBitFc,
            1200.0 * PI * s3 / 37.0 - 45540.0 / 259.0,
            1280.0 * PI * s3 / 133.0 - 20644.0 / 399.0,
            true,
        ),
        ("k5-skewed", OneBit, 600.0 / 959.0, 4070.0 / 6419.0, true),
        ("k5-skewed", TwoBitSc, 420.0 / 137.0 - 225.0 * PI / 274.0, 3135.0 / 917.0 - 3405.0 * PI / 3668.0, true),
        (
            "k5-skewed",
            TwoBitFc,
            23340.0 / 959.0 - 600.0 * PI * s3 / 137.0,
            335500.0 / 6419.0 - 8720.0 * PI * s3 / 917.0,
            true,
        ),
        ("limit-balanced", OneBit, lim_half, 7.0 / (9.0 * ln3), true),
        ("limit-balanced", TwoBitSc, lim_half, 11.0 / (15.0 * ln3), true),
        ("limit-balanced", TwoBitFc, lim_half, 47.0 / (63.0 * ln3), true),
        ("limit-skewed", OneBit, 0.55370, 0.55987, false),
        ("limit-skewed", TwoBitSc, 0.33762, 0.34509, false),
        ("limit-skewed", TwoBitFc, 0.35900, 0.36746, false),
    ];
    cells
        .iter()
        .flat_map(|&(block, scheme, c, y, exact)| {
            [
                ReferenceCell { block, scheme, algorithm: Cqs, value: c, exact },
                ReferenceCell { block, scheme, algorithm: Yqs, value: y, exact },
            ]
        })
        .collect()
}

/// Analytical table against the reference values.
pub fn gate_table() -> Result<GateResult> {
    let rows = table_rows()?;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (row, cell) in rows.iter().zip(reference_table()) {
        let ok = if cell.exact {
            let err = (row.coefficient - cell.value).abs();
            worst = worst.max(err);
            err <= 1e-9
        } else {
            (row.coefficient * 1e5).round() / 1e5 == cell.value
        };
        if !ok || row.block != cell.block || row.scheme != cell.scheme || row.algorithm != cell.algorithm {
            failures.push(format!("{}/{}/{}: {} vs {}", row.block, row.scheme, row.algorithm, row.coefficient, cell.value));
        }
    }
    let detail = if failures.is_empty() {
        format!("30 cells, max exact-cell error {worst:.2e}")
    } else {
        failures.join("; ")
    };
    Ok(GateResult::new("table", failures.is_empty() && rows.len() == 30, detail))
}

/// Closed-form miss rates against the stationary laws of the predictor chains.
pub fn gate_predictors() -> Result<GateResult> {
    let mut worst: f64 = 0.0;
    for s in Scheme::ALL {
        for i in 1..=99 {
            let p = i as f64 / 100.0;
            worst = worst.max((steady_state_miss_rate_numeric(s, p)? - miss_rate_unchecked(s, p)).abs());
        }
    }
    Ok(GateResult::new("predictor-chains", worst <= 1e-10, format!("max error {worst:.2e} over 3 x 99 points")))
}

/// Geometric Beta integrals against adaptive quadrature.
pub fn gate_geo_integrals() -> Result<GateResult> {
    let mut worst: f64 = 0.0;
    for c in [1u32, 2] {
        let inv = 1.0 / c as f64;
        for a in 0..=20i32 {
            for b in 0..=a {
                let num = quadrature(|x| x.powi(a) * (1.0 - x).powi(b) / (inv - x * (1.0 - x)), QUAD_TOL)?;
                worst = worst.max((geo_integral_closed(c, a as u32, b as u32)? - num).abs());
            }
        }
    }
    Ok(GateResult::new("geometric-beta", worst <= 1e-8, format!("max error {worst:.2e} over 462 integrals")))
}

/// Critical thresholds and the optimal skew.
pub fn gate_cost() -> Result<Vec<GateResult>> {
    let mut out = Vec::new();
    for s in Scheme::ALL {
        let x = xi_critical(s)?;
        out.push(GateResult::new(
            &format!("xi-critical-{s}"),
            x.abs_diff() <= 1e-6,
            format!("closed {:.10}, numeric {:.10}", x.closed_form, x.numeric),
        ));
    }
    let t = tau_star(73.0, Scheme::TwoBitFc)?;
    out.push(GateResult::new("tau-star-73-2bit-fc", (t - 0.1).abs() <= 0.01, format!("tau* = {t:.6}")));
    let mut monotone = true;
    for s in Scheme::ALL {
        let mut prev = f64::INFINITY;
        for xi in 0..=200 {
            let v = tau_star(xi as f64, s)?;
            monotone &= v <= prev;
            prev = v;
        }
    }
    out.push(GateResult::new("tau-star-monotone", monotone, "xi = 0..200, all schemes".into()));
    Ok(out)
}

fn sigma_gate(name: &str, est: f64, target: f64, se: f64) -> GateResult {
    let z = if se > 0.0 { (est - target).abs() / se } else { f64::INFINITY };
    GateResult::new(name, (est - target).abs() <= 3.0 * se, format!("{est:.6} vs {target:.6}, {z:.2} sigma"))
}

/// Monte Carlo checks of the Dirichlet lemmas and of `g`.
pub fn gate_dirichlet(samples: u64, seed: u64) -> Result<Vec<GateResult>> {
    let d = |a: &[u32]| DirichletParams::new(a);
    let sub = |i: u64| rng::substream_seed(seed, i);
    let mut out = Vec::new();

    // E[X1 X2 h(X)] at α = (2, 3) equals α1 α2 / (A (A + 1)) E[h] at α + (1, 1).
    let lhs = mc_expectation(&d(&[2, 3])?, |x| x[0] * x[1] * x[0], samples, sub(0))?;
    let rhs = mc_expectation(&d(&[3, 4])?, |x| x[0], samples, sub(1))?;
    let w = 6.0 / 30.0;
    let se = (lhs.std_error.powi(2) + (w * rhs.std_error).powi(2)).sqrt();
    out.push(sigma_gate("powers-to-parameters", lhs.mean, w * rhs.mean, se));

    // X1 + X2 at α = (1, 2, 3) is distributed as Beta(3, 3).
    let agg = mc_expectation(&d(&[1, 2, 3])?, |x| x[0] + x[1], samples, sub(2))?;
    let direct = mc_expectation(&d(&[3, 3])?, |x| x[0], samples, sub(3))?;
    let se = (agg.std_error.powi(2) + direct.std_error.powi(2)).sqrt();
    out.push(sigma_gate("aggregation-mean", agg.mean, direct.mean, se));
    let agg_var = mc_expectation(&d(&[1, 2, 3])?, |x| (x[0] + x[1] - 0.5).powi(2), samples, sub(4))?;
    let direct_var = mc_expectation(&d(&[3, 3])?, |x| (x[0] - 0.5).powi(2), samples, sub(5))?;
    let se = (agg_var.std_error.powi(2) + direct_var.std_error.powi(2)).sqrt();
    out.push(sigma_gate("aggregation-variance", agg_var.mean, direct_var.mean, se));

    // X1 / (X1 + X2) at α = (2, 3, 4) is Beta(2, 3).
    let zoom = mc_expectation(&d(&[2, 3, 4])?, |x| x[0] / (x[0] + x[1]), samples, sub(6))?;
    out.push(sigma_gate("zoom", zoom.mean, 0.4, zoom.std_error));

    let mut idx = 7;
    let mut bad = Vec::new();
    let mut worst_z: f64 = 0.0;
    for s in Scheme::ALL {
        for x in 1..=4u32 {
            for y in 1..=4u32 {
                let e = mc_expectation(&d(&[x, y])?, |v| miss_rate_unchecked(s, v[0]), samples, sub(idx))?;
                idx += 1;
                let target = g(s, x, y)?;
                let z = (e.mean - target).abs() / e.std_error;
                worst_z = worst_z.max(z);
                if z > 3.0 {
                    bad.push(format!("{s} ({x},{y}): {z:.2} sigma"));
                }
            }
        }
    }
    let detail = if bad.is_empty() { format!("48 cells, worst {worst_z:.2} sigma") } else { bad.join("; ") };
    out.push(GateResult::new("g-monte-carlo", bad.is_empty(), detail));
    Ok(out)
}

/// The simulated configurations checked by [`gate_simulation`]: classic and
/// dual-pivot without sampling and with the two k = 5 samplings under 1-bit
/// prediction, plus two 2-bit saturating-counter cases.
pub fn simulation_cases() -> Vec<(SamplingParam, Scheme)> {
    vec![
        (SamplingParam::classic(0, 0), Scheme::OneBit),
        (SamplingParam::classic(2, 2), Scheme::OneBit),
        (SamplingParam::classic(4, 0), Scheme::OneBit),
        (SamplingParam::dual(0, 0, 0), Scheme::OneBit),
        (SamplingParam::dual(1, 1, 1), Scheme::OneBit),
        (SamplingParam::dual(0, 3, 0), Scheme::OneBit),
        (SamplingParam::classic(0, 0), Scheme::TwoBitSc),
        (SamplingParam::dual(0, 3, 0), Scheme::TwoBitSc),
    ]
}

/// Simulation against theory. The coefficient of `n ln n` is fitted over
/// `sizes` (separating the linear term) and must be within `tol` relative.
pub fn gate_simulation(sizes: &[usize], trials: usize, policy: ResetPolicy, tol: f64, seed: u64) -> Result<Vec<GateResult>> {
    let mut out = Vec::new();
    for (i, (t, scheme)) in simulation_cases().into_iter().enumerate() {
        let mut cfg = ExperimentConfig::new(t, scheme, sizes.to_vec(), trials, rng::substream_seed(seed, i as u64));
        cfg.policy = policy;
        cfg.execution = Execution::Parallel;
        let rep = run_simulation(&cfg)?;
        let (value, dev) = match (rep.fitted, rep.fitted_deviation) {
            (Some(f), Some(d)) => (f, d),
            _ => (rep.measured, rep.relative_deviation),
        };
        out.push(GateResult::new(
            &format!("simulate-{}-{}-{}", t.algorithm(), t, scheme),
            dev <= tol,
            format!(
                "measured {value:.5} vs {:.5} ({:.2}%), raw ratio at n = {}: {:.5}",
                rep.analytic.coefficient,
                100.0 * dev,
                sizes.iter().max().unwrap_or(&0),
                rep.measured
            ),
        ));
    }
    Ok(out)
}

/// All fast gates (no sorting simulation).
pub fn run_fast_gates(mc_samples: u64, seed: u64) -> Result<Vec<GateResult>> {
    let mut out = vec![gate_table()?, gate_predictors()?, gate_geo_integrals()?];
    out.extend(gate_cost()?);
    out.extend(gate_dirichlet(mc_samples, seed)?);
    Ok(out)
}
