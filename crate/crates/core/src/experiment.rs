//! Seeded simulation runs and the data behind tables and sweeps.

use serde::Serialize;

use crate::analysis::{analyze, analyze_limit, CoefficientReport, LimitRatios};
use crate::cost::{q_limit, tau_star, xi_critical, XiCritical};
use crate::error::{param, Error, Result};
use crate::par::{self, Execution};
use crate::predictor::{PredictorTable, ResetPolicy, Scheme};
use crate::rng::{self, PRNG_NAME};
use crate::sorting::{default_cutoff, quicksort, Algorithm, SamplingParam, SiteId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub t: SamplingParam,
    /// Insertionsort cutoff.
    pub w: usize,
    pub scheme: Scheme,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub policy: ResetPolicy,
    #[serde(skip)]
    pub execution: Execution,
}

impl ExperimentConfig {
    /// Config with the default cutoff, persistent predictors and parallel execution.
    pub fn new(t: SamplingParam, scheme: Scheme, sizes: Vec<usize>, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            algorithm: t.algorithm(),
            t,
            w: default_cutoff(&t),
            scheme,
            sizes,
            trials,
            seed,
            policy: ResetPolicy::Persistent,
            execution: Execution::Parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.t.expect_algorithm(self.algorithm)?;
        if self.w < self.t.k() {
            return Err(param(format!("cutoff w = {} is below the sample size k = {}", self.w, self.t.k())));
        }
        if self.sizes.is_empty() {
            return Err(param("at least one size is required"));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 2) {
            return Err(param(format!("sizes must be at least 2, got {n}")));
        }
        if self.sizes.iter().any(|&n| n > u32::MAX as usize) {
            return Err(param("sizes must fit the u32 key space"));
        }
        if self.trials == 0 {
            return Err(param("trials must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one sorted permutation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    /// Seed of the trial's random stream.
    pub seed: u64,
    pub branch_misses: u64,
    /// Misses per site, indexed by [`SiteId::index`].
    pub site_misses: [u64; SiteId::COUNT],
    /// Key comparisons inside partitioning.
    pub comparisons: u64,
    pub swaps: u64,
    pub partitioning_calls: u64,
}

/// Aggregates over the trials of one input size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub trials: usize,
    pub mean_branch_misses: f64,
    /// Mean misses divided by `n ln n`.
    pub bm_coefficient: f64,
    /// Standard error of `bm_coefficient`.
    pub bm_std_error: f64,
    pub site_coefficients: [f64; SiteId::COUNT],
    pub comparison_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub prng: &'static str,
    pub config: ExperimentConfig,
    pub analytic: CoefficientReport,
    pub trials: Vec<TrialRecord>,
    pub sizes: Vec<SizeSummary>,
    /// `bm_coefficient` at the largest size.
    pub measured: f64,
    /// `|measured − analytic| / analytic`.
    pub relative_deviation: f64,
    /// Coefficient of `n ln n` from [`fit_coefficient`] over all sizes, if
    /// at least two distinct sizes were run.
    pub fitted: Option<f64>,
    pub fitted_deviation: Option<f64>,
}

fn nlnn(n: usize) -> f64 {
    n as f64 * (n as f64).ln()
}

fn run_trial(config: &ExperimentConfig, n: usize, trial: usize, seed: u64) -> Result<TrialRecord> {
    let mut r = rng::stream(seed);
    let mut keys = rng::random_permutation(&mut r, n);
    let mut table = PredictorTable::new(config.scheme, config.policy);
    let stats = quicksort(&mut keys, &config.t, config.w, config.algorithm, &mut table)?;
    debug_assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    let mut site_misses = [0u64; SiteId::COUNT];
    for s in SiteId::ALL {
        site_misses[s.index()] = table.site(s).misses;
    }
    Ok(TrialRecord {
        n,
        trial,
        seed,
        branch_misses: table.total_misses(),
        site_misses,
        comparisons: stats.total_comparisons(),
        swaps: stats.swaps,
        partitioning_calls: stats.partitioning_calls,
    })
}

/// Sorts `trials` random permutations for every size and counts branch misses.
///
/// Work item `i` (sizes outer, trials inner) uses the substream
/// [`rng::substream_seed`]`(seed, i)`, so results do not depend on the execution mode.
pub fn run_simulation(config: &ExperimentConfig) -> Result<SimulationReport> {
    config.validate()?;
    let items: Vec<(usize, usize, u64)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |trial| (n, trial)))
        .enumerate()
        .map(|(i, (n, trial))| (n, trial, rng::substream_seed(config.seed, i as u64)))
        .collect();
    let trials = par::map(config.execution, items, |(n, trial, seed)| run_trial(config, n, trial, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let sizes: Vec<SizeSummary> = config
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| summarize(n, &trials[i * config.trials..(i + 1) * config.trials]))
        .collect();

    let analytic = analyze(config.scheme, &config.t)?;
    let largest = sizes.iter().max_by_key(|s| s.n).expect("validated non-empty");
    let measured = largest.bm_coefficient;
    let rel = |x: f64| (x - analytic.coefficient).abs() / analytic.coefficient;

    let points: Vec<(f64, f64)> = sizes.iter().map(|s| (s.n as f64, s.mean_branch_misses)).collect();
    let fitted = match fit_coefficient(&points) {
        Ok(fit) => Some(fit.c),
        Err(Error::Numeric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SimulationReport {
        prng: PRNG_NAME,
        config: config.clone(),
        relative_deviation: rel(measured),
        fitted_deviation: fitted.map(rel),
        analytic,
        trials,
        sizes,
        measured,
        fitted,
    })
}

fn summarize(n: usize, trials: &[TrialRecord]) -> SizeSummary {
    let count = trials.len() as f64;
    let scale = nlnn(n);
    let coeffs: Vec<f64> = trials.iter().map(|t| t.branch_misses as f64 / scale).collect();
    let mean = coeffs.iter().sum::<f64>() / count;
    let var = if trials.len() > 1 {
        coeffs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let mut site_coefficients = [0.0; SiteId::COUNT];
    for (i, c) in site_coefficients.iter_mut().enumerate() {
        *c = trials.iter().map(|t| t.site_misses[i] as f64).sum::<f64>() / count / scale;
    }
    SizeSummary {
        n,
        trials: trials.len(),
        mean_branch_misses: trials.iter().map(|t| t.branch_misses as f64).sum::<f64>() / count,
        bm_coefficient: mean,
        bm_std_error: (var / count).sqrt(),
        site_coefficients,
        comparison_coefficient: trials.iter().map(|t| t.comparisons as f64).sum::<f64>() / count / scale,
    }
}

/// Least-squares fit of `y ≈ c n ln n + d n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub c: f64,
    pub d: f64,
}

/// Fits `y = c n ln n + d n` by regressing `y / n` on `ln n`, which weights
/// every size equally.
pub fn fit_coefficient(points: &[(f64, f64)]) -> Result<Fit> {
    if points.iter().any(|&(n, _)| !(n > 1.0)) {
        return Err(param("fit sizes must exceed 1"));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(n, y)| y / n).collect();
    let m = points.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if points.is_empty() || sxx <= 1e-12 * (1.0 + mx * mx) {
        return Err(Error::Numeric("fit needs at least two distinct sizes".into()));
    }
    let c = sxy / sxx;
    Ok(Fit { c, d: my - c * mx })
}

/// [`Fit`] together with the standard error of `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitEstimate {
    pub c: f64,
    pub d: f64,
    pub std_error: f64,
}

/// [`fit_coefficient`] on per-trial observations: `samples` holds, for each
/// size `n`, the observed `y` of every trial (at least two per size). The
/// standard error propagates the per-size sample variances of `y / n`
/// through the regression weights.
pub fn fit_trials(samples: &[(usize, Vec<f64>)]) -> Result<FitEstimate> {
    if samples.iter().any(|(_, ys)| ys.len() < 2) {
        return Err(param("every size needs at least two trials"));
    }
    let points: Vec<(f64, f64)> = samples
        .iter()
        .map(|(n, ys)| (*n as f64, ys.iter().sum::<f64>() / ys.len() as f64))
        .collect();
    let fit = fit_coefficient(&points)?;
    let xs: Vec<f64> = points.iter().map(|&(n, _)| n.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let var: f64 = samples
        .iter()
        .zip(&xs)
        .map(|((n, ys), x)| {
            let m = ys.len() as f64;
            let scaled = ys.iter().map(|y| y / *n as f64);
            let mean = scaled.clone().sum::<f64>() / m;
            let s2 = scaled.map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            ((x - mx) / sxx).powi(2) * s2 / m
        })
        .sum();
    Ok(FitEstimate { c: fit.c, d: fit.d, std_error: var.sqrt() })
}

/// Rows of the leading-coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableBlock {
    NoSampling,
    K5Median,
    K5Skewed,
    LimitBalanced,
    LimitSkewed,
}

impl TableBlock {
    pub const ALL: [TableBlock; 5] = [
        TableBlock::NoSampling,
        TableBlock::K5Median,
        TableBlock::K5Skewed,
        TableBlock::LimitBalanced,
        TableBlock::LimitSkewed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TableBlock::NoSampling => "no-sampling",
            TableBlock::K5Median => "k5-median",
            TableBlock::K5Skewed => "k5-skewed",
            TableBlock::LimitBalanced => "limit-balanced",
            TableBlock::LimitSkewed => "limit-skewed",
        }
    }

    pub fn report(self, scheme: Scheme, algorithm: Algorithm) -> Result<CoefficientReport> {
        let finite = |c: SamplingParam, d: SamplingParam| match algorithm {
            Algorithm::Cqs => analyze(scheme, &c),
            Algorithm::Yqs => analyze(scheme, &d),
        };
        let limit = |c: &[f64], d: &[f64]| match algorithm {
            Algorithm::Cqs => analyze_limit(scheme, &LimitRatios::new(c)?),
            Algorithm::Yqs => analyze_limit(scheme, &LimitRatios::new(d)?),
        };
        let third = 1.0 / 3.0;
        match self {
            TableBlock::NoSampling => finite(SamplingParam::classic(0, 0), SamplingParam::dual(0, 0, 0)),
            TableBlock::K5Median => finite(SamplingParam::classic(2, 2), SamplingParam::dual(1, 1, 1)),
            TableBlock::K5Skewed => finite(SamplingParam::classic(4, 0), SamplingParam::dual(0, 3, 0)),
            TableBlock::LimitBalanced => limit(&[0.5, 0.5], &[third, third, 1.0 - 2.0 * third]),
            TableBlock::LimitSkewed => limit(&[0.1, 0.9], &[0.1, 0.8, 0.1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub block: &'static str,
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    pub coefficient: f64,
}

/// All 30 table cells: blocks × schemes × algorithms, in that nesting order.
pub fn table_rows() -> Result<Vec<TableRow>> {
    let mut rows = Vec::with_capacity(30);
    for block in TableBlock::ALL {
        for scheme in Scheme::ALL {
            for algorithm in [Algorithm::Cqs, Algorithm::Yqs] {
                rows.push(TableRow {
                    block: block.label(),
                    scheme,
                    algorithm,
                    coefficient: block.report(scheme, algorithm)?.coefficient,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: u32,
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    pub params: String,
    pub k: usize,
    pub coefficient: f64,
}

/// Symmetric sampling of growing size: classic `(3t+2, 3t+2)` and
/// dual-pivot `(2t+1, 2t+1, 2t+1)`, both with `k = 6t + 5`.
pub fn sweep_sym(t_max: u32, schemes: &[Scheme]) -> Result<Vec<SweepRow>> {
    sweep(t_max, schemes, |t| {
        (SamplingParam::classic(3 * t + 2, 3 * t + 2), SamplingParam::dual(2 * t + 1, 2 * t + 1, 2 * t + 1))
    })
}

/// Extremely skewed sampling: classic `(0, 6t+4)`, dual-pivot `(0, 6t+3, 0)`.
pub fn sweep_skew(t_max: u32, schemes: &[Scheme]) -> Result<Vec<SweepRow>> {
    sweep(t_max, schemes, |t| (SamplingParam::classic(0, 6 * t + 4), SamplingParam::dual(0, 6 * t + 3, 0)))
}

fn sweep<F: Fn(u32) -> (SamplingParam, SamplingParam)>(t_max: u32, schemes: &[Scheme], params: F) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for t in 0..=t_max {
        let (c, d) = params(t);
        for &scheme in schemes {
            for p in [c, d] {
                rows.push(SweepRow {
                    t,
                    scheme,
                    algorithm: p.algorithm(),
                    params: p.to_string(),
                    k: p.k(),
                    coefficient: analyze(scheme, &p)?.coefficient,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QPlotRow {
    pub xi: f64,
    pub scheme: Scheme,
    pub tau: f64,
    pub q: f64,
}

/// `q_ξ((τ, 1−τ))` for every `ξ` and scheme on `τ = i/steps`, `0 < i < steps`.
pub fn qplot(xis: &[f64], schemes: &[Scheme], steps: usize) -> Result<Vec<QPlotRow>> {
    if steps < 2 {
        return Err(param("qplot needs at least 2 steps"));
    }
    let mut rows = Vec::new();
    for &xi in xis {
        for &scheme in schemes {
            for i in 1..steps {
                let tau = i as f64 / steps as f64;
                let q = q_limit(xi, scheme, &LimitRatios::classic(tau)?)?;
                rows.push(QPlotRow { xi, scheme, tau, q });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauStarRow {
    pub xi: f64,
    pub scheme: Scheme,
    pub tau_star: f64,
}

/// `τ*(ξ)` on `ξ = 0, step, 2 step, …, ≤ xi_max`.
pub fn tau_star_curve(xi_max: f64, step: f64, schemes: &[Scheme]) -> Result<Vec<TauStarRow>> {
    if !(step > 0.0) || !(xi_max >= 0.0) {
        return Err(param("tau-star grid needs a positive step and non-negative maximum"));
    }
    let count = (xi_max / step + 1e-9).floor() as usize;
    let mut rows = Vec::new();
    for &scheme in schemes {
        for i in 0..=count {
            let xi = i as f64 * step;
            rows.push(TauStarRow { xi, scheme, tau_star: tau_star(xi, scheme)? });
        }
    }
    Ok(rows)
}

pub fn xi_critical_rows(schemes: &[Scheme]) -> Result<Vec<XiCritical>> {
    schemes.iter().map(|&s| xi_critical(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fit_examples() {
        let ns: [f64; 3] = [1e3, 1e4, 1e5];
        let exact: Vec<(f64, f64)> = ns.iter().map(|&n| (n, 0.5 * n * n.ln())).collect();
        assert_abs_diff_eq!(fit_coefficient(&exact).unwrap().c, 0.5, epsilon = 1e-9);
        let shifted: Vec<(f64, f64)> = ns.iter().map(|&n| (n, 0.5 * n * n.ln() + 3.0 * n)).collect();
        let f = fit_coefficient(&shifted).unwrap();
        assert_abs_diff_eq!(f.c, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(f.d, 3.0, epsilon = 1e-8);
        assert!(matches!(fit_coefficient(&[(1e3, 1.0), (1e3, 2.0)]), Err(Error::Numeric(_))));
        assert!(fit_coefficient(&[]).is_err());
    }

    #[test]
    fn fit_trials_error_matches_spread() {
        // y = 0.5 n ln n + n (1 + e) with e = ±0.1: the slope error comes
        // only from the scatter of e.
        let ns = [1_000usize, 10_000, 100_000];
        let samples: Vec<(usize, Vec<f64>)> = ns
            .iter()
            .map(|&n| {
                let nf = n as f64;
                (n, vec![0.5 * nf * nf.ln() + 0.9 * nf, 0.5 * nf * nf.ln() + 1.1 * nf])
            })
            .collect();
        let f = fit_trials(&samples).unwrap();
        assert_abs_diff_eq!(f.c, 0.5, epsilon = 1e-9);
        // Per-size variance of the mean is 0.02 / 2; weights are ±1/(2 ln 10).
        let want = (2.0 * 0.01 / (2.0 * 10f64.ln()).powi(2)).sqrt();
        assert_abs_diff_eq!(f.std_error, want, epsilon = 1e-12);
        assert!(fit_trials(&[(10, vec![1.0]), (100, vec![2.0, 3.0])]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(SamplingParam::classic(0, 0), Scheme::OneBit, vec![100], 2, 1);
        assert!(c.validate().is_ok());
        c.sizes = vec![1];
        assert!(c.validate().is_err());
        c.sizes = vec![100];
        c.trials = 0;
        assert!(c.validate().is_err());
        c.trials = 1;
        c.algorithm = Algorithm::Yqs;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new(SamplingParam::classic(5, 5), Scheme::OneBit, vec![100], 1, 1);
        c.w = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn simulation_is_reproducible_and_mode_independent() {
        let mut c = ExperimentConfig::new(SamplingParam::dual(1, 1, 1), Scheme::TwoBitFc, vec![500, 2000], 6, 99);
        c.execution = Execution::Sequential;
        let a = run_simulation(&c).unwrap();
        c.execution = Execution::Parallel;
        let b = run_simulation(&c).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.sizes, b.sizes);
        assert_eq!(a.trials.len(), 12);
        for t in &a.trials {
            assert_eq!(t.site_misses.iter().sum::<u64>(), t.branch_misses);
        }
        assert!(a.fitted.is_some());
        c.seed = 100;
        assert_ne!(run_simulation(&c).unwrap().trials, a.trials);
    }

    #[test]
    fn table_has_thirty_rows() {
        let rows = table_rows().unwrap();
        assert_eq!(rows.len(), 30);
        assert_eq!(rows[0].block, "no-sampling");
        assert_abs_diff_eq!(rows[0].coefficient, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn sweeps() {
        let rows = sweep_sym(3, &[Scheme::OneBit]).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[2].params, "(5,5)");
        assert_eq!(rows[3].params, "(3,3,3)");
        assert!(rows.iter().all(|r| r.k == 6 * r.t as usize + 5));
        let rows = sweep_skew(1, &[Scheme::TwoBitSc]).unwrap();
        assert_eq!(rows[1].params, "(0,3,0)");
        assert_eq!(rows[2].params, "(0,10)");
        assert_eq!(qplot(&[0.0, 5.0], &Scheme::ALL, 10).unwrap().len(), 2 * 3 * 9);
        let curve = tau_star_curve(10.0, 5.0, &[Scheme::OneBit]).unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve.iter().all(|r| r.tau_star == 0.5));
    }
}
