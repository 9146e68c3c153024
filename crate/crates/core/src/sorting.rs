//! Generalized classic (crossing-pointer) and Yaroslavskiy dual-pivot
//! Quicksort with pivot sampling, an Insertionsort cutoff, and a branch
//! event hook at every key-comparison site of the partitioning loops.
//!
//! # Branch direction convention
//!
//! | site | code                                   | event is *taken* iff      | taken probability given pivots |
//! |------|----------------------------------------|---------------------------|--------------------------------|
//! | C1   | `do k++ while A[k] < p`                | `A[k] < p` (loop repeats) | D1                             |
//! | C2   | `do g-- while A[g] > p`                | `A[g] > p` (loop repeats) | D2                             |
//! | Y1   | `if A[k] < p`                          | `A[k] >= p`               | D2 + D3                        |
//! | Y2   | `if A[k] >= q`                         | `A[k] < q`                | D2 / (D2 + D3)                 |
//! | Y3   | `while A[g] > q && k < g`              | `A[g] <= q`               | D1 + D2                        |
//! | Y4   | `if A[g] >= p`                         | `A[g] < p`                | D1 / (D1 + D2)                 |
//!
//! Loop back-edges are taken when the loop continues; the `if` sites of the
//! dual-pivot loop are taken when control jumps over the then-branch. All
//! three predictor automata are symmetric in taken/not-taken, so the
//! convention only fixes which probability is reported, not the miss counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::predictor::Outcome;

/// Conventional Insertionsort threshold used when none is given.
pub const DEFAULT_CUTOFF: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Classic single-pivot Quicksort with crossing-pointer partitioning.
    Cqs,
    /// Yaroslavskiy's dual-pivot Quicksort.
    Yqs,
}

impl Algorithm {
    pub fn partitions(self) -> usize {
        match self {
            Algorithm::Cqs => 2,
            Algorithm::Yqs => 3,
        }
    }

    pub fn sites(self) -> &'static [SiteId] {
        match self {
            Algorithm::Cqs => &SiteId::CLASSIC,
            Algorithm::Yqs => &SiteId::DUAL,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Cqs => "cqs",
            Algorithm::Yqs => "yqs",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cqs" | "classic" => Ok(Algorithm::Cqs),
            "yqs" | "yaroslavskiy" | "dual" => Ok(Algorithm::Yqs),
            other => Err(param(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Pivot sampling parameter `t`: the pivots are the order statistics of a
/// sample of size `k = t1 + … + ts + (s - 1)` that leave `t_i` sample
/// elements in partition `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SamplingParam {
    parts: [u32; 3],
    len: u8,
}

impl SamplingParam {
    pub fn new(t: &[u32]) -> Result<Self> {
        match *t {
            [a, b] => Ok(Self::classic(a, b)),
            [a, b, c] => Ok(Self::dual(a, b, c)),
            _ => Err(param(format!(
                "sampling parameter needs 2 or 3 components, got {}",
                t.len()
            ))),
        }
    }

    pub fn classic(t1: u32, t2: u32) -> Self {
        SamplingParam { parts: [t1, t2, 0], len: 2 }
    }

    pub fn dual(t1: u32, t2: u32, t3: u32) -> Self {
        SamplingParam { parts: [t1, t2, t3], len: 3 }
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts[..self.len as usize]
    }

    /// Number of partitions `s`.
    pub fn s(&self) -> usize {
        self.len as usize
    }

    /// Sample size `k`.
    pub fn k(&self) -> usize {
        self.parts().iter().map(|&t| t as usize).sum::<usize>() + self.s() - 1
    }

    pub fn algorithm(&self) -> Algorithm {
        if self.len == 2 {
            Algorithm::Cqs
        } else {
            Algorithm::Yqs
        }
    }

    pub fn expect_algorithm(&self, algorithm: Algorithm) -> Result<()> {
        if self.algorithm() == algorithm {
            Ok(())
        } else {
            Err(param(format!(
                "{algorithm} needs a sampling parameter with {} components, got {self}",
                algorithm.partitions()
            )))
        }
    }
}

impl fmt::Display for SamplingParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, t) in self.parts().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for SamplingParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts = trimmed
            .split(',')
            .map(|x| x.trim().parse::<u32>().map_err(|e| param(format!("bad component '{x}' in '{s}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        SamplingParam::new(&parts)
    }
}

impl Serialize for SamplingParam {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.parts().serialize(serializer)
    }
}

/// Key-comparison sites of the two partitioning loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SiteId {
    C1,
    C2,
    Y1,
    Y2,
    Y3,
    Y4,
}

impl SiteId {
    pub const COUNT: usize = 6;
    pub const ALL: [SiteId; 6] = [SiteId::C1, SiteId::C2, SiteId::Y1, SiteId::Y2, SiteId::Y3, SiteId::Y4];
    pub const CLASSIC: [SiteId; 2] = [SiteId::C1, SiteId::C2];
    pub const DUAL: [SiteId; 4] = [SiteId::Y1, SiteId::Y2, SiteId::Y3, SiteId::Y4];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            SiteId::C1 => "c1",
            SiteId::C2 => "c2",
            SiteId::Y1 => "y1",
            SiteId::Y2 => "y2",
            SiteId::Y3 => "y3",
            SiteId::Y4 => "y4",
        }
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Receives one event per evaluated key comparison, in execution order.
pub trait BranchSink {
    fn record(&mut self, site: SiteId, outcome: Outcome);

    /// Called once before each partitioning step.
    fn begin_partition(&mut self) {}
}

impl<S: BranchSink + ?Sized> BranchSink for &mut S {
    #[inline]
    fn record(&mut self, site: SiteId, outcome: Outcome) {
        (**self).record(site, outcome)
    }

    #[inline]
    fn begin_partition(&mut self) {
        (**self).begin_partition()
    }
}

/// Discards all events.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl BranchSink for NullSink {
    #[inline]
    fn record(&mut self, _: SiteId, _: Outcome) {}
}

/// Keeps every event; meant for tests and small inputs.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub events: Vec<(SiteId, Outcome)>,
    pub partitions: usize,
}

impl BranchSink for EventLog {
    fn record(&mut self, site: SiteId, outcome: Outcome) {
        self.events.push((site, outcome));
    }

    fn begin_partition(&mut self) {
        self.partitions += 1;
    }
}

/// Adapts a closure into a sink.
pub struct FnSink<F>(pub F);

impl<F: FnMut(SiteId, Outcome)> BranchSink for FnSink<F> {
    #[inline]
    fn record(&mut self, site: SiteId, outcome: Outcome) {
        (self.0)(site, outcome)
    }
}

/// Counters collected by one sort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SortStats {
    pub comparisons: [u64; SiteId::COUNT],
    pub taken: [u64; SiteId::COUNT],
    pub swaps: u64,
    pub partitioning_calls: u64,
    pub insertion_sort_calls: u64,
}

impl SortStats {
    pub fn comparisons_at(&self, site: SiteId) -> u64 {
        self.comparisons[site.index()]
    }

    pub fn taken_at(&self, site: SiteId) -> u64 {
        self.taken[site.index()]
    }

    /// Key comparisons made by partitioning loops (sample sorting and
    /// Insertionsort are not instrumented).
    pub fn total_comparisons(&self) -> u64 {
        self.comparisons.iter().sum()
    }
}

/// Forwards events while counting them.
struct Recorder<'a, S> {
    inner: &'a mut S,
    stats: SortStats,
}

impl<S: BranchSink> BranchSink for Recorder<'_, S> {
    #[inline]
    fn record(&mut self, site: SiteId, outcome: Outcome) {
        let i = site.index();
        self.stats.comparisons[i] += 1;
        self.stats.taken[i] += outcome.is_taken() as u64;
        self.inner.record(site, outcome);
    }

    #[inline]
    fn begin_partition(&mut self) {
        self.inner.begin_partition();
    }
}

/// Straight insertion sort; emits no branch events.
pub fn insertion_sort<T: PartialOrd + Copy>(a: &mut [T]) {
    for i in 1..a.len() {
        let x = a[i];
        let mut j = i;
        while j > 0 && x < a[j - 1] {
            a[j] = a[j - 1];
            j -= 1;
        }
        a[j] = x;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pivots<T> {
    Single(T),
    /// `(p, q)` with `p <= q`.
    Dual(T, T),
}

/// Picks the pivot order statistics from an (unsorted) sample of size `k(t)`.
pub fn select_pivots<T: PartialOrd + Copy>(sample: &[T], t: &SamplingParam) -> Result<Pivots<T>> {
    if sample.len() != t.k() {
        return Err(param(format!(
            "sample has {} elements but t = {t} needs k = {}",
            sample.len(),
            t.k()
        )));
    }
    let mut sorted = sample.to_vec();
    insertion_sort(&mut sorted);
    let p = t.parts();
    Ok(match t.algorithm() {
        Algorithm::Cqs => Pivots::Single(sorted[p[0] as usize]),
        Algorithm::Yqs => Pivots::Dual(sorted[p[0] as usize], sorted[(p[0] + p[1] + 1) as usize]),
    })
}

/// Crossing-pointer partitioning of `a[left..=right]` around `p`.
///
/// `a[right]` must not be smaller than `p` (it stops the ascending scan);
/// in the sort it holds the pivot itself. Position `left - 1` acts as a
/// `-inf` sentinel for the descending scan: reaching it is reported as one
/// not-taken C2 event, exactly as the comparison against a physical
/// sentinel would be. Returns `i_p` with `a[j] <= p` for `left <= j < i_p`
/// and `a[j] >= p` for `i_p <= j <= right`.
pub fn partition_classic<T, S>(a: &mut [T], left: usize, right: usize, p: T, sink: &mut S) -> Result<usize>
where
    T: PartialOrd + Copy,
    S: BranchSink,
{
    if left > right || right >= a.len() {
        return Err(param(format!("invalid bounds [{left}, {right}] for length {}", a.len())));
    }
    if a[right] < p {
        return Err(param("a[right] must not be smaller than the pivot"));
    }
    let mut swaps = 0;
    Ok(classic_pass(a, left, right, p, sink, &mut swaps))
}

#[inline]
fn classic_pass<T, S>(a: &mut [T], left: usize, right: usize, p: T, sink: &mut S, swaps: &mut u64) -> usize
where
    T: PartialOrd + Copy,
    S: BranchSink,
{
    let lower = left as isize;
    let mut k = lower - 1;
    let mut g = right as isize;
    loop {
        loop {
            k += 1;
            let less = a[k as usize] < p;
            sink.record(SiteId::C1, Outcome::from_taken(less));
            if !less {
                break;
            }
        }
        loop {
            g -= 1;
            let greater = g >= lower && a[g as usize] > p;
            sink.record(SiteId::C2, Outcome::from_taken(greater));
            if !greater {
                break;
            }
        }
        if g > k {
            a.swap(k as usize, g as usize);
            *swaps += 1;
        } else {
            return k as usize;
        }
    }
}

/// Boundaries produced by dual-pivot partitioning of `a[left..=right]`:
/// `a[left..small_end]` holds elements `< p`, `a[small_end..large_start]`
/// elements in `[p, q]`, and `a[large_start..=right]` elements `>= q`.
/// In the usual index notation `i_p = small_end - 1` and `i_q = large_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DualSplit {
    pub small_end: usize,
    pub large_start: usize,
}

/// Yaroslavskiy's partitioning of `a[left..=right]` around `p <= q`.
pub fn partition_yaroslavskiy<T, S>(
    a: &mut [T],
    left: usize,
    right: usize,
    p: T,
    q: T,
    sink: &mut S,
) -> Result<DualSplit>
where
    T: PartialOrd + Copy,
    S: BranchSink,
{
    if left > right || right >= a.len() {
        return Err(param(format!("invalid bounds [{left}, {right}] for length {}", a.len())));
    }
    if p > q {
        return Err(param("dual-pivot partitioning needs p <= q"));
    }
    let mut swaps = 0;
    Ok(yaroslavskiy_pass(a, left, right, p, q, sink, &mut swaps))
}

#[inline]
fn yaroslavskiy_pass<T, S>(a: &mut [T], left: usize, right: usize, p: T, q: T, sink: &mut S, swaps: &mut u64) -> DualSplit
where
    T: PartialOrd + Copy,
    S: BranchSink,
{
    let mut l = left;
    let mut k = left as isize;
    let mut g = right as isize;
    while k <= g {
        let ku = k as usize;
        let small = a[ku] < p;
        sink.record(SiteId::Y1, Outcome::from_taken(!small));
        if small {
            a.swap(ku, l);
            *swaps += 1;
            l += 1;
        } else {
            let large = a[ku] >= q;
            sink.record(SiteId::Y2, Outcome::from_taken(!large));
            if large {
                loop {
                    let beyond = a[g as usize] > q;
                    sink.record(SiteId::Y3, Outcome::from_taken(!beyond));
                    if !(beyond && k < g) {
                        break;
                    }
                    g -= 1;
                }
                let gu = g as usize;
                let not_small = a[gu] >= p;
                sink.record(SiteId::Y4, Outcome::from_taken(!not_small));
                a.swap(ku, gu);
                *swaps += 1;
                if !not_small {
                    a.swap(ku, l);
                    *swaps += 1;
                    l += 1;
                }
                g -= 1;
            }
        }
        k += 1;
    }
    DualSplit { small_end: l, large_start: (g + 1) as usize }
}

/// Sorts `a` with generalized Quicksort.
///
/// The sample is the first `k(t)` elements of each subarray; it is sorted
/// without emitting events, the pivots are taken from it, and only the
/// remaining ordinary elements are partitioned. Sample elements are then
/// moved into their partitions before recursing. Subarrays with at most `w`
/// elements go to Insertionsort.
pub fn quicksort<T, S>(a: &mut [T], t: &SamplingParam, w: usize, algorithm: Algorithm, sink: &mut S) -> Result<SortStats>
where
    T: PartialOrd + Copy,
    S: BranchSink,
{
    t.expect_algorithm(algorithm)?;
    if w < t.k() {
        return Err(param(format!("cutoff w = {w} is below the sample size k = {}", t.k())));
    }
    let mut rec = Recorder { inner: sink, stats: SortStats::default() };
    let mut swaps = 0u64;
    let mut stack: Vec<(usize, usize)> = vec![(0, a.len())];
    while let Some((lo, hi)) = stack.pop() {
        let m = hi - lo;
        if m <= w {
            if m > 0 {
                insertion_sort(&mut a[lo..hi]);
                rec.stats.insertion_sort_calls += 1;
            }
            continue;
        }
        rec.begin_partition();
        rec.stats.partitioning_calls += 1;
        match algorithm {
            Algorithm::Cqs => {
                let mid = classic_step(a, lo, hi, t, &mut rec, &mut swaps);
                push_ordered(&mut stack, &[(lo, mid), (mid + 1, hi)]);
            }
            Algorithm::Yqs => {
                let (pp, qp) = dual_step(a, lo, hi, t, &mut rec, &mut swaps);
                push_ordered(&mut stack, &[(lo, pp), (pp + 1, qp), (qp + 1, hi)]);
            }
        }
    }
    rec.stats.swaps = swaps;
    Ok(rec.stats)
}

/// Pushes ranges largest first so the smallest is processed next.
fn push_ordered(stack: &mut Vec<(usize, usize)>, ranges: &[(usize, usize)]) {
    let mut r = ranges.to_vec();
    r.sort_by_key(|&(lo, hi)| std::cmp::Reverse(hi - lo));
    stack.extend(r.into_iter().filter(|&(lo, hi)| hi > lo));
}

/// One classic partitioning step on `a[lo..hi]`; returns the pivot's final index.
fn classic_step<T, S>(a: &mut [T], lo: usize, hi: usize, t: &SamplingParam, sink: &mut S, swaps: &mut u64) -> usize
where
    T: PartialOrd + Copy,
    S: BranchSink,
{
    let (t1, t2) = (t.parts()[0] as usize, t.parts()[1] as usize);
    let k = t.k();
    insertion_sort(&mut a[lo..lo + k]);
    // Layout after sorting the sample: [small samples | P | large samples | ordinary].
    // Move [P | large samples] behind the ordinary elements.
    let ordinary = hi - lo - k;
    let block = t2 + 1;
    if ordinary >= block {
        for i in 0..block {
            a.swap(lo + t1 + i, hi - block + i);
        }
    } else {
        a[lo + t1..hi].rotate_left(block);
    }
    let left = lo + t1;
    let right = hi - block;
    let p = a[right];
    let ip = classic_pass(a, left, right, p, sink, swaps);
    a.swap(ip, right);
    ip
}

/// One dual-pivot partitioning step on `a[lo..hi]`; returns the final
/// indices of the two pivots.
fn dual_step<T, S>(a: &mut [T], lo: usize, hi: usize, t: &SamplingParam, sink: &mut S, swaps: &mut u64) -> (usize, usize)
where
    T: PartialOrd + Copy,
    S: BranchSink,
{
    let (t1, t2, t3) = (t.parts()[0] as usize, t.parts()[1] as usize, t.parts()[2] as usize);
    let k = t.k();
    insertion_sort(&mut a[lo..lo + k]);
    let p = a[lo + t1];
    let q = a[lo + t1 + t2 + 1];
    let split = yaroslavskiy_pass(a, lo + k, hi - 1, p, q, sink, swaps);
    let n_small = split.small_end - (lo + k);
    let n_mid = split.large_start - split.small_end;
    // [S1 P S2 Q S3 | X Y Z] -> [S1 X P S2 Y Q Z S3]
    a[lo + t1..split.small_end].rotate_right(n_small);
    let p_pos = lo + t1 + n_small;
    let q_from = p_pos + 1 + t2;
    a[q_from..split.large_start].rotate_right(n_mid);
    let q_pos = q_from + n_mid;
    a[q_pos + 1..hi].rotate_left(t3);
    (p_pos, q_pos)
}

/// Default cutoff `max(k, 16)`.
pub fn default_cutoff(t: &SamplingParam) -> usize {
    t.k().max(DEFAULT_CUTOFF)
}
