//! Local branch predictors: 1-bit, 2-bit saturating counter and 2-bit
//! flip-on-consecutive.
//!
//! State numbering for the 2-bit automata follows the usual drawing order:
//! states 1 and 2 predict *taken*, states 3 and 4 predict *not taken*.
//! The 1-bit predictor has state 1 (last outcome taken) and state 2 (last
//! outcome not taken).
//!
//! | scheme | on taken      | on not taken  |
//! |--------|---------------|---------------|
//! | 2-bit sc | 1→1 2→1 3→2 4→3 | 1→2 2→3 3→4 4→4 |
//! | 2-bit fc | 1→1 2→1 3→1 4→3 | 1→2 2→4 3→4 4→4 |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sorting::{BranchSink, SiteId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Taken,
    NotTaken,
}

impl Outcome {
    #[inline]
    pub fn from_taken(taken: bool) -> Self {
        if taken {
            Outcome::Taken
        } else {
            Outcome::NotTaken
        }
    }

    #[inline]
    pub fn is_taken(self) -> bool {
        self == Outcome::Taken
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "1bit")]
    OneBit,
    #[serde(rename = "2bit-sc")]
    TwoBitSc,
    #[serde(rename = "2bit-fc")]
    TwoBitFc,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::OneBit, Scheme::TwoBitSc, Scheme::TwoBitFc];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::OneBit => "1bit",
            Scheme::TwoBitSc => "2bit-sc",
            Scheme::TwoBitFc => "2bit-fc",
        }
    }

    pub fn num_states(self) -> u8 {
        match self {
            Scheme::OneBit => 2,
            Scheme::TwoBitSc | Scheme::TwoBitFc => 4,
        }
    }

    /// Power-on state: weakly not-taken (3) for 2-bit schemes, not-taken for 1-bit.
    pub fn initial_state(self) -> PredictorState {
        match self {
            Scheme::OneBit => PredictorState(2),
            Scheme::TwoBitSc | Scheme::TwoBitFc => PredictorState(3),
        }
    }

    /// Next-state table indexed by `[state - 1][taken as usize]`.
    #[inline]
    fn transitions(self) -> &'static [[u8; 2]; 4] {
        // [next on not-taken, next on taken]
        const ONE_BIT: [[u8; 2]; 4] = [[2, 1], [2, 1], [0, 0], [0, 0]];
        const SC: [[u8; 2]; 4] = [[2, 1], [3, 1], [4, 2], [4, 3]];
        const FC: [[u8; 2]; 4] = [[2, 1], [4, 1], [4, 1], [4, 3]];
        match self {
            Scheme::OneBit => &ONE_BIT,
            Scheme::TwoBitSc => &SC,
            Scheme::TwoBitFc => &FC,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "1bit" | "1-bit" | "onebit" => Ok(Scheme::OneBit),
            "2bit-sc" | "2-bit-sc" | "sc" | "twobitsc" => Ok(Scheme::TwoBitSc),
            "2bit-fc" | "2-bit-fc" | "fc" | "twobitfc" => Ok(Scheme::TwoBitFc),
            other => Err(Error::Parameter(format!("unknown predictor scheme '{other}'"))),
        }
    }
}

/// 1-based automaton state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictorState(u8);

impl PredictorState {
    pub fn new(scheme: Scheme, index: u8) -> Result<Self> {
        if (1..=scheme.num_states()).contains(&index) {
            Ok(PredictorState(index))
        } else {
            Err(Error::Parameter(format!(
                "state {index} out of range 1..={} for {scheme}",
                scheme.num_states()
            )))
        }
    }

    /// 1-bit state that replays `last`.
    pub fn one_bit(last: Outcome) -> Self {
        PredictorState(if last.is_taken() { 1 } else { 2 })
    }

    pub fn index(self) -> u8 {
        self.0
    }

    fn check(self, scheme: Scheme) -> Result<Self> {
        PredictorState::new(scheme, self.0)
    }
}

#[inline]
fn predict_for(scheme: Scheme, state: u8) -> Outcome {
    match scheme {
        Scheme::OneBit => Outcome::from_taken(state == 1),
        Scheme::TwoBitSc | Scheme::TwoBitFc => Outcome::from_taken(state <= 2),
    }
}

#[inline]
fn step(scheme: Scheme, state: u8, outcome: Outcome) -> (bool, u8) {
    let miss = predict_for(scheme, state) != outcome;
    let next = scheme.transitions()[(state - 1) as usize][outcome.is_taken() as usize];
    (miss, next)
}

pub fn predict(scheme: Scheme, state: PredictorState) -> Result<Outcome> {
    let state = state.check(scheme)?;
    Ok(predict_for(scheme, state.0))
}

/// Feeds one outcome to the automaton; returns whether it was mispredicted
/// and the successor state.
pub fn update(scheme: Scheme, state: PredictorState, outcome: Outcome) -> Result<(bool, PredictorState)> {
    let state = state.check(scheme)?;
    let (miss, next) = step(scheme, state.0, outcome);
    Ok((miss, PredictorState(next)))
}

/// Steady-state miss rate of `scheme` on an i.i.d. branch taken with probability `p`.
pub fn miss_rate(scheme: Scheme, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("branch probability {p} outside [0, 1]")));
    }
    Ok(miss_rate_unchecked(scheme, p))
}

/// [`miss_rate`] without the domain check, for inner loops over valid grids.
#[inline]
pub fn miss_rate_unchecked(scheme: Scheme, p: f64) -> f64 {
    let q = p * (1.0 - p);
    match scheme {
        Scheme::OneBit => 2.0 * q,
        Scheme::TwoBitSc => q / (1.0 - 2.0 * q),
        Scheme::TwoBitFc => (2.0 * q * q + q) / (1.0 - q),
    }
}

/// Drives one predictor through `count` i.i.d. Bernoulli(`p`) outcomes and
/// returns the empirical miss rate.
pub fn simulate_iid_stream(scheme: Scheme, p: f64, count: u64, seed: u64) -> Result<f64> {
    if count == 0 {
        return Err(Error::Parameter("stream length must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("branch probability {p} outside [0, 1]")));
    }
    let mut rng = rng::stream(seed);
    let mut state = scheme.initial_state().0;
    let mut misses = 0u64;
    for _ in 0..count {
        let outcome = Outcome::from_taken(rng::uniform(&mut rng) < p);
        let (miss, next) = step(scheme, state, outcome);
        misses += miss as u64;
        state = next;
    }
    Ok(misses as f64 / count as f64)
}

/// When predictor state is discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetPolicy {
    /// One state per site for the whole sort.
    #[default]
    Persistent,
    /// Every site returns to its initial state when a partitioning step begins.
    PerPartition,
}

impl FromStr for ResetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "persistent" => Ok(ResetPolicy::Persistent),
            "per-partition" | "per_partition" | "partition" => Ok(ResetPolicy::PerPartition),
            other => Err(Error::Parameter(format!("unknown predictor policy '{other}'"))),
        }
    }
}

impl fmt::Display for ResetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResetPolicy::Persistent => "persistent",
            ResetPolicy::PerPartition => "per-partition",
        })
    }
}

/// Counters for one comparison site.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteStats {
    pub executions: u64,
    pub taken: u64,
    pub misses: u64,
}

/// One independent predictor per comparison site, acting as a [`BranchSink`].
#[derive(Debug, Clone)]
pub struct PredictorTable {
    scheme: Scheme,
    policy: ResetPolicy,
    initial: u8,
    states: [u8; SiteId::COUNT],
    stats: [SiteStats; SiteId::COUNT],
}

impl PredictorTable {
    pub fn new(scheme: Scheme, policy: ResetPolicy) -> Self {
        Self::with_initial_state(scheme, policy, scheme.initial_state())
            .expect("default initial state is valid")
    }

    pub fn with_initial_state(scheme: Scheme, policy: ResetPolicy, initial: PredictorState) -> Result<Self> {
        let initial = initial.check(scheme)?.0;
        Ok(PredictorTable {
            scheme,
            policy,
            initial,
            states: [initial; SiteId::COUNT],
            stats: [SiteStats::default(); SiteId::COUNT],
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn policy(&self) -> ResetPolicy {
        self.policy
    }

    pub fn state(&self, site: SiteId) -> PredictorState {
        PredictorState(self.states[site.index()])
    }

    pub fn site(&self, site: SiteId) -> SiteStats {
        self.stats[site.index()]
    }

    pub fn total_misses(&self) -> u64 {
        self.stats.iter().map(|s| s.misses).sum()
    }

    pub fn reset_states(&mut self) {
        self.states = [self.initial; SiteId::COUNT];
    }
}

impl BranchSink for PredictorTable {
    #[inline]
    fn record(&mut self, site: SiteId, outcome: Outcome) {
        let i = site.index();
        let (miss, next) = step(self.scheme, self.states[i], outcome);
        self.states[i] = next;
        let s = &mut self.stats[i];
        s.executions += 1;
        s.taken += outcome.is_taken() as u64;
        s.misses += miss as u64;
    }

    #[inline]
    fn begin_partition(&mut self) {
        if self.policy == ResetPolicy::PerPartition {
            self.reset_states();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn st(scheme: Scheme, i: u8) -> PredictorState {
        PredictorState::new(scheme, i).unwrap()
    }

    #[test]
    fn predictions() {
        assert_eq!(predict(Scheme::TwoBitSc, st(Scheme::TwoBitSc, 1)).unwrap(), Outcome::Taken);
        assert_eq!(predict(Scheme::TwoBitFc, st(Scheme::TwoBitFc, 4)).unwrap(), Outcome::NotTaken);
        let last = PredictorState::one_bit(Outcome::NotTaken);
        assert_eq!(predict(Scheme::OneBit, last).unwrap(), Outcome::NotTaken);
        assert!(PredictorState::new(Scheme::OneBit, 3).is_err());
        assert!(PredictorState::new(Scheme::TwoBitSc, 0).is_err());
    }

    #[test]
    fn transitions_follow_automata() {
        let (miss, next) = update(Scheme::TwoBitSc, st(Scheme::TwoBitSc, 2), Outcome::NotTaken).unwrap();
        assert!(miss);
        assert_eq!(next.index(), 3);
        let (miss, next) = update(Scheme::TwoBitFc, st(Scheme::TwoBitFc, 2), Outcome::NotTaken).unwrap();
        assert!(miss);
        assert_eq!(next.index(), 4);
        let (miss, next) = update(Scheme::TwoBitFc, st(Scheme::TwoBitFc, 3), Outcome::Taken).unwrap();
        assert!(miss);
        assert_eq!(next.index(), 1);
        let taken = PredictorState::one_bit(Outcome::Taken);
        let (miss, next) = update(Scheme::OneBit, taken, Outcome::Taken).unwrap();
        assert!(!miss);
        assert_eq!(next, taken);
    }

    #[test]
    fn saturating_counter_saturates() {
        let s = Scheme::TwoBitSc;
        assert_eq!(update(s, st(s, 1), Outcome::Taken).unwrap(), (false, st(s, 1)));
        assert_eq!(update(s, st(s, 4), Outcome::NotTaken).unwrap(), (false, st(s, 4)));
        assert_eq!(update(s, st(s, 4), Outcome::Taken).unwrap(), (true, st(s, 3)));
    }

    #[test]
    fn closed_forms_at_anchor_points() {
        assert_abs_diff_eq!(miss_rate(Scheme::OneBit, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(miss_rate(Scheme::TwoBitSc, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(miss_rate(Scheme::OneBit, 0.1).unwrap(), 0.18, epsilon = 1e-15);
        assert_abs_diff_eq!(miss_rate(Scheme::TwoBitFc, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(miss_rate(Scheme::OneBit, 1.5), Err(Error::Domain(_))));
        assert!(miss_rate(Scheme::OneBit, -0.1).is_err());
    }

    #[test]
    fn one_bit_misses_exactly_on_changes() {
        for bits in 0u32..(1 << 10) {
            let outcomes: Vec<Outcome> = (0..10).map(|i| Outcome::from_taken(bits >> i & 1 == 1)).collect();
            let mut state = PredictorState::one_bit(outcomes[0]);
            for w in outcomes.windows(2) {
                let (miss, next) = update(Scheme::OneBit, state, w[1]).unwrap();
                assert_eq!(miss, w[0] != w[1]);
                state = next;
            }
        }
    }

    #[test]
    fn constant_stream_only_transient_misses() {
        for scheme in Scheme::ALL {
            let rate = simulate_iid_stream(scheme, 0.0, 100_000, 9).unwrap();
            assert!(rate <= 2.0 / 100_000.0);
            let rate = simulate_iid_stream(scheme, 1.0, 100_000, 9).unwrap();
            assert!(rate <= 2.0 / 100_000.0);
        }
    }

    #[test]
    fn iid_streams_match_closed_forms() {
        let r = simulate_iid_stream(Scheme::OneBit, 0.5, 1_000_000, 1).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 0.005);
        let r = simulate_iid_stream(Scheme::TwoBitSc, 0.3, 1_000_000, 1).unwrap();
        assert_abs_diff_eq!(r, 0.21 / 0.58, epsilon = 0.005);
        assert!(simulate_iid_stream(Scheme::OneBit, 0.5, 0, 1).is_err());
    }

    #[test]
    fn table_resets_per_partition() {
        let mut t = PredictorTable::new(Scheme::TwoBitSc, ResetPolicy::PerPartition);
        t.record(SiteId::C1, Outcome::Taken);
        assert_eq!(t.state(SiteId::C1).index(), 2);
        assert_eq!(t.state(SiteId::C2).index(), 3);
        t.begin_partition();
        assert_eq!(t.state(SiteId::C1).index(), 3);
        let mut p = PredictorTable::new(Scheme::TwoBitSc, ResetPolicy::Persistent);
        p.record(SiteId::C1, Outcome::Taken);
        p.begin_partition();
        assert_eq!(p.state(SiteId::C1).index(), 2);
        assert_eq!(p.site(SiteId::C1), SiteStats { executions: 1, taken: 1, misses: 1 });
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
        }
        assert!("3bit".parse::<Scheme>().is_err());
    }
}
