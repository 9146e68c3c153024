//! Independent numerical machinery used to check the closed forms:
//! adaptive quadrature, predictor Markov chains, Dirichlet Monte Carlo and
//! bracketed root finding.

use nalgebra::{DMatrix, DVector};
use rand_core::RngCore;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::par::{self, Execution};
use crate::predictor::Scheme;
use crate::rng;

/// Default absolute tolerance of [`quadrature`].
pub const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_DEPTH: u32 = 50;

/// Adaptive Simpson integration of `f` over `[0, 1]`.
pub fn quadrature<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    integrate(&f, 0.0, 1.0, tol)
}

/// Adaptive Simpson integration over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(param(format!("quadrature tolerance must be positive, got {tol}")));
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Numeric(format!("non-finite integrand near x = {m}")));
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!("adaptive Simpson hit the depth limit on [{a}, {b}]")));
    }
    Ok(simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// Row-stochastic transition matrix of a predictor automaton driven by an
/// i.i.d. branch taken with probability `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(param("transition matrix must be square and non-empty"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(param(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(param(format!("row {i} sums to {sum}")));
            }
        }
        Ok(TransitionMatrix { m: DMatrix::from_fn(n, n, |i, j| rows[i][j]) })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.m.row(i).iter().copied().collect()
    }

    /// `π M` for a row vector `π`.
    pub fn apply_left(&self, pi: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(pi);
        (self.m.transpose() * v).iter().copied().collect()
    }
}

/// Transition matrix of `scheme` under taken-probability `p`. States are
/// numbered as in [`crate::predictor::PredictorState`], shifted to 0-based rows.
pub fn transition_matrix(scheme: Scheme, p: f64) -> Result<TransitionMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("branch probability {p} outside [0, 1]")));
    }
    let q = 1.0 - p;
    let rows = match scheme {
        Scheme::OneBit => vec![vec![p, q], vec![p, q]],
        Scheme::TwoBitSc => vec![
            vec![p, q, 0.0, 0.0],
            vec![p, 0.0, q, 0.0],
            vec![0.0, p, 0.0, q],
            vec![0.0, 0.0, p, q],
        ],
        Scheme::TwoBitFc => vec![
            vec![p, q, 0.0, 0.0],
            vec![p, 0.0, 0.0, q],
            vec![p, 0.0, 0.0, q],
            vec![0.0, 0.0, p, q],
        ],
    };
    TransitionMatrix::new(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stationary {
    pub pi: Vec<f64>,
    /// Set when the chain is reducible and `pi` is the limit reached from
    /// the start state rather than a unique stationary law.
    pub reducible: bool,
}

impl TransitionMatrix {
    /// Whether every state reaches every other along positive entries.
    pub fn is_irreducible(&self) -> bool {
        let n = self.dim();
        (0..n).all(|s| {
            let mut seen = vec![false; n];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if self.m[(i, j)] > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.iter().all(|&x| x)
        })
    }
}

/// Solves `π M = π`, `Σ π = 1` by LU decomposition.
///
/// For a reducible chain the distribution is the limit reached by power
/// iteration from `start`, and the result is flagged.
pub fn stationary_distribution(m: &TransitionMatrix, start: usize) -> Result<Stationary> {
    let n = m.dim();
    if start >= n {
        return Err(param(format!("start state {start} out of range for {n} states")));
    }
    if m.is_irreducible() {
        // (M^T − I) π = 0 with the last equation replaced by normalization.
        let mut a = m.m.transpose() - DMatrix::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular stationary system".into()))?;
        return Ok(Stationary { pi: pi.iter().copied().collect(), reducible: false });
    }
    let mut pi = vec![0.0; n];
    pi[start] = 1.0;
    for _ in 0..10_000 {
        let next = m.apply_left(&pi);
        let diff = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        pi = next;
        if diff <= 1e-15 {
            return Ok(Stationary { pi, reducible: true });
        }
    }
    Err(Error::Numeric("power iteration did not converge".into()))
}

/// Probability of a miss in each state: states predicting taken miss with
/// probability `1 − p`, the others with probability `p`.
pub fn miss_vector(scheme: Scheme, p: f64) -> Vec<f64> {
    match scheme {
        Scheme::OneBit => vec![1.0 - p, p],
        _ => vec![1.0 - p, 1.0 - p, p, p],
    }
}

/// Miss rate from the stationary law of the predictor chain.
pub fn steady_state_miss_rate_numeric(scheme: Scheme, p: f64) -> Result<f64> {
    let m = transition_matrix(scheme, p)?;
    let start = scheme.initial_state().index() as usize - 1;
    let st = stationary_distribution(&m, start)?;
    Ok(st.pi.iter().zip(miss_vector(scheme, p)).map(|(a, b)| a * b).sum())
}

/// Integer Dirichlet parameters `α`, all at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirichletParams(Vec<u32>);

impl DirichletParams {
    pub fn new(alpha: &[u32]) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(param("Dirichlet parameters need at least two components"));
        }
        if alpha.contains(&0) {
            return Err(param(format!("Dirichlet parameters must be >= 1: {alpha:?}")));
        }
        Ok(DirichletParams(alpha.to_vec()))
    }

    pub fn alpha(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Number of uniforms per draw, `Σα − 1`.
    pub fn uniforms(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum::<usize>() - 1
    }
}

/// One draw from Dirichlet(`α`) as spacings of sorted uniforms.
///
/// With `Σα − 1` sorted uniforms `V_(1) < … `, the cut points are
/// `V_(α1)`, `V_(α1+α2)`, …; the lengths of the `d` intervals they induce
/// on `[0, 1]` are the components.
pub fn dirichlet_sample<R: RngCore + ?Sized>(alpha: &DirichletParams, rng: &mut R) -> Vec<f64> {
    let mut scratch = Vec::with_capacity(alpha.uniforms());
    let mut out = vec![0.0; alpha.dim()];
    dirichlet_sample_into(alpha, rng, &mut scratch, &mut out);
    out
}

/// [`dirichlet_sample`] into caller-provided buffers.
pub fn dirichlet_sample_into<R: RngCore + ?Sized>(
    alpha: &DirichletParams,
    rng: &mut R,
    scratch: &mut Vec<f64>,
    out: &mut [f64],
) {
    scratch.clear();
    scratch.extend((0..alpha.uniforms()).map(|_| rng::uniform(rng)));
    scratch.sort_unstable_by(f64::total_cmp);
    let mut prev = 0.0;
    let mut pos = 0usize;
    let last = alpha.dim() - 1;
    for (j, &a) in alpha.alpha()[..last].iter().enumerate() {
        pos += a as usize;
        let cut = scratch[pos - 1];
        out[j] = cut - prev;
        prev = cut;
    }
    out[last] = 1.0 - prev;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl McEstimate {
    /// `|mean − target| ≤ sigmas · std_error`.
    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.std_error
    }
}

/// Samples per Monte Carlo work chunk; chunk `i` draws from substream `i`.
pub const MC_CHUNK: u64 = 1 << 16;

/// Mean and standard error of `f(X)` for `X ~ Dirichlet(α)`.
pub fn mc_expectation<F>(alpha: &DirichletParams, f: F, samples: u64, seed: u64) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    mc_expectation_with(Execution::Parallel, alpha, f, samples, seed)
}

/// [`mc_expectation`] with an explicit execution mode. Both modes return
/// bit-identical results.
pub fn mc_expectation_with<F>(
    mode: Execution,
    alpha: &DirichletParams,
    f: F,
    samples: u64,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if samples == 0 {
        return Err(param("Monte Carlo needs at least one sample"));
    }
    let chunks: Vec<(u64, u64)> = (0..samples.div_ceil(MC_CHUNK))
        .map(|i| (i, MC_CHUNK.min(samples - i * MC_CHUNK)))
        .collect();
    let parts = par::map(mode, chunks, |(idx, count)| {
        let mut r = rng::substream(seed, idx);
        let mut scratch = Vec::with_capacity(alpha.uniforms());
        let mut x = vec![0.0; alpha.dim()];
        // Welford within the chunk.
        let (mut mean, mut m2) = (0.0, 0.0);
        for i in 0..count {
            dirichlet_sample_into(alpha, &mut r, &mut scratch, &mut x);
            let y = f(&x);
            let d = y - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (y - mean);
        }
        (count, mean, m2)
    });
    // Chan et al. pairwise combination, in chunk order.
    let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
    for (nb, mb, m2b) in parts {
        let tot = n + nb;
        let d = mb - mean;
        mean += d * nb as f64 / tot as f64;
        m2 += m2b + d * d * n as f64 * nb as f64 / tot as f64;
        n = tot;
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    Ok(McEstimate { mean, std_error: (var / n as f64).sqrt(), samples: n })
}

/// Root of `f` in `[lo, hi]` to absolute tolerance `tol`.
///
/// Secant steps are taken while they stay inside the bracket and shrink it
/// quickly; otherwise the bracket is bisected.
pub fn find_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo <= hi) || !(tol > 0.0) {
        return Err(param(format!("bad root-finding input: [{lo}, {hi}], tol {tol}")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi });
    }
    for iter in 0..400 {
        if b - a <= tol {
            break;
        }
        let secant = b - fb * (b - a) / (fb - fa);
        // Force a bisection every third step so the bracket always shrinks.
        let x = if iter % 3 != 2 && secant > a && secant < b { secant } else { 0.5 * (a + b) };
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    if b - a > tol {
        return Err(Error::Numeric(format!("root finding stalled on [{a}, {b}]")));
    }
    // Endpoint with the smaller residual.
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{miss_rate_unchecked, update, Outcome, PredictorState};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn quadrature_examples() {
        assert_abs_diff_eq!(quadrature(|_| 1.0, QUAD_TOL).unwrap(), 1.0, epsilon = 1e-14);
        let sqrt3 = 3f64.sqrt();
        let v = quadrature(|x| 1.0 / (1.0 - x * (1.0 - x)), QUAD_TOL).unwrap();
        assert_abs_diff_eq!(v, 2.0 * PI / (3.0 * sqrt3), epsilon = 1e-10);
        let v = quadrature(|x| 1.0 / (0.5 - x * (1.0 - x)), QUAD_TOL).unwrap();
        assert_abs_diff_eq!(v, PI, epsilon = 1e-10);
        assert!(quadrature(|x| 1.0 / x, QUAD_TOL).is_err());
    }

    #[test]
    fn matrix_examples() {
        let m = transition_matrix(Scheme::TwoBitSc, 0.5).unwrap();
        assert_eq!(m.row(0), vec![0.5, 0.5, 0.0, 0.0]);
        let m = transition_matrix(Scheme::TwoBitFc, 0.5).unwrap();
        assert_eq!(m.row(3), vec![0.0, 0.0, 0.5, 0.5]);
        let m = transition_matrix(Scheme::OneBit, 0.0).unwrap();
        assert_eq!(m.row(0), vec![0.0, 1.0]);
        assert_eq!(m.row(1), vec![0.0, 1.0]);
        assert!(TransitionMatrix::new(&[vec![0.5, 0.6], vec![1.0, 0.0]]).is_err());
    }

    /// The automaton table must induce exactly the matrices above.
    #[test]
    fn matrices_match_automata() {
        let p = 0.3;
        for s in Scheme::ALL {
            let m = transition_matrix(s, p).unwrap();
            let n = s.num_states();
            for i in 1..=n {
                let st = PredictorState::new(s, i).unwrap();
                let mut row = vec![0.0; n as usize];
                let (_, t) = update(s, st, Outcome::Taken).unwrap();
                let (_, nt) = update(s, st, Outcome::NotTaken).unwrap();
                row[t.index() as usize - 1] += p;
                row[nt.index() as usize - 1] += 1.0 - p;
                for (j, v) in row.iter().enumerate() {
                    assert_abs_diff_eq!(m.get(i as usize - 1, j), *v, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn stationary_examples() {
        let st = stationary_distribution(&transition_matrix(Scheme::TwoBitSc, 0.5).unwrap(), 2).unwrap();
        for x in st.pi {
            assert_abs_diff_eq!(x, 0.25, epsilon = 1e-14);
        }
        let st = stationary_distribution(&transition_matrix(Scheme::TwoBitFc, 0.5).unwrap(), 2).unwrap();
        for (x, y) in st.pi.iter().zip([1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
        }
        let st = stationary_distribution(&transition_matrix(Scheme::OneBit, 0.3).unwrap(), 1).unwrap();
        assert_abs_diff_eq!(st.pi[0], 0.3, epsilon = 1e-15);
        assert!(!st.reducible);
    }

    #[test]
    fn reducible_chains_are_flagged() {
        let st = stationary_distribution(&transition_matrix(Scheme::TwoBitSc, 0.0).unwrap(), 2).unwrap();
        assert!(st.reducible);
        assert_abs_diff_eq!(st.pi[3], 1.0, epsilon = 1e-15);
        assert_eq!(steady_state_miss_rate_numeric(Scheme::TwoBitFc, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn numeric_miss_rates() {
        assert_abs_diff_eq!(steady_state_miss_rate_numeric(Scheme::TwoBitSc, 0.5).unwrap(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(steady_state_miss_rate_numeric(Scheme::OneBit, 0.3).unwrap(), 0.42, epsilon = 1e-14);
        let want = (2.0 * (3.0f64 / 16.0).powi(2) + 3.0 / 16.0) / (13.0 / 16.0);
        assert_abs_diff_eq!(steady_state_miss_rate_numeric(Scheme::TwoBitFc, 0.25).unwrap(), want, epsilon = 1e-14);
        assert_abs_diff_eq!(want, 0.31731, epsilon = 1e-5);
        for s in Scheme::ALL {
            assert_abs_diff_eq!(
                steady_state_miss_rate_numeric(s, 0.37).unwrap(),
                miss_rate_unchecked(s, 0.37),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn dirichlet_shapes() {
        let mut r = rng::stream(5);
        let a = DirichletParams::new(&[1, 1]).unwrap();
        let x = dirichlet_sample(&a, &mut r);
        assert_abs_diff_eq!(x[0] + x[1], 1.0, epsilon = 1e-15);
        let a = DirichletParams::new(&[2, 3, 1]).unwrap();
        for _ in 0..100 {
            let x = dirichlet_sample(&a, &mut r);
            assert_eq!(x.len(), 3);
            assert!(x.iter().all(|&v| v >= 0.0));
            assert_abs_diff_eq!(x.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(DirichletParams::new(&[0, 1]).is_err());
        assert!(DirichletParams::new(&[3]).is_err());
    }

    /// With α = (1, 1) the first component is the single uniform itself.
    #[test]
    fn dirichlet_uniform_case() {
        let a = DirichletParams::new(&[1, 1]).unwrap();
        let mut r1 = rng::stream(9);
        let mut r2 = rng::stream(9);
        for _ in 0..10 {
            let x = dirichlet_sample(&a, &mut r1);
            assert_eq!(x[0], rng::uniform(&mut r2));
        }
    }

    #[test]
    fn mc_examples() {
        let a = DirichletParams::new(&[1, 1]).unwrap();
        let e = mc_expectation(&a, |x| x[0], 200_000, 1).unwrap();
        assert!(e.within(0.5, 3.0), "{e:?}");
        let e = mc_expectation(&a, |x| 2.0 * x[0] * x[1], 200_000, 2).unwrap();
        assert!(e.within(1.0 / 3.0, 3.0), "{e:?}");
        assert!(mc_expectation(&a, |x| x[0], 0, 1).is_err());
    }

    #[test]
    fn mc_is_mode_independent() {
        let a = DirichletParams::new(&[2, 3]).unwrap();
        let s = mc_expectation_with(Execution::Sequential, &a, |x| x[0], 300_000, 4).unwrap();
        let p = mc_expectation_with(Execution::Parallel, &a, |x| x[0], 300_000, 4).unwrap();
        assert_eq!(s, p);
        assert_eq!(s.samples, 300_000);
    }

    #[test]
    fn roots() {
        assert_abs_diff_eq!(find_root(|x| x * x - 0.25, 0.0, 1.0, 1e-12).unwrap(), 0.5, epsilon = 1e-12);
        let r = find_root(|p| miss_rate_unchecked(Scheme::OneBit, p) - 0.18, 0.0, 0.5, 1e-12).unwrap();
        assert_abs_diff_eq!(r, 0.1, epsilon = 1e-12);
        assert!(matches!(find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9), Err(Error::Bracket { .. })));
        // Strongly curved function where plain secant steps crawl.
        let r = find_root(|x: f64| x.powi(9) - 1e-9, 0.0, 4.0, 1e-12).unwrap();
        assert_abs_diff_eq!(r, 0.1, epsilon = 1e-11);
    }
}
