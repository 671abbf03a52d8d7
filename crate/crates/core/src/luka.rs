//! Lukasiewicz path, weak ascending ladder machinery and the discrete snake
//! decomposition.
//!
//! The walk `S(n) = Σ_{i<n}(|P_i| - 1)` is skip-free descending. Its weak
//! ascending ladder epochs `T(k+1) = inf{ℓ > T(k): S(ℓ) ≥ S(T(k))}` carry the
//! genealogy; the overshoots `Z({k}) = S(T(k)) - S(T(k-1))` select which atom
//! of the ladder stick contributes the chronological age
//! `R({k}) = A_{Z({k})}(P_{T(k)-1})`. Everything here works on a finite
//! window, and "unresolved beyond the horizon" is a first-class result state
//! rather than a silent infinity: censoring by data exhaustion must stay
//! distinguishable from the probabilistic `T(k) = ∞`.

use crate::measure::{reach_inverse_step, WeightedMeasure};
use crate::rng::RngStream;
use crate::stick::{OffspringLaw, Stick, StickLaw, SUPPORT_MASS_TOL};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LadderError {
    #[error("quantity unresolved within the observation window")]
    Censored,
    #[error("index {index} is a weak record time")]
    RecordTime { index: usize },
    #[error("index {index} out of range (walk length {len})")]
    OutOfRange { index: usize, len: usize },
}

// ---------------------------------------------------------------------------
// Path
// ---------------------------------------------------------------------------

/// The walk `S(0..=n)`; increments are `|P_k| - 1 ≥ -1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LukaPath {
    values: Vec<i64>,
}

/// `S(n) = Σ_{i=0}^{n-1} (|P_i| - 1)` as prefix sums.
pub fn lukasiewicz(sticks: &[Stick]) -> LukaPath {
    let mut values = Vec::with_capacity(sticks.len() + 1);
    let mut s = 0i64;
    values.push(s);
    for stick in sticks {
        s += stick.offspring_count() as i64 - 1;
        values.push(s);
    }
    LukaPath { values }
}

impl LukaPath {
    pub fn from_values(values: Vec<i64>) -> Self {
        assert!(!values.is_empty() && values[0] == 0);
        for w in values.windows(2) {
            assert!(w[1] - w[0] >= -1, "increment below -1");
        }
        LukaPath { values }
    }

    /// Number of increments (= stick count).
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, n: usize) -> i64 {
        self.values[n]
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    /// `X(m) = sup_{0..m} S - S(m)`, zero exactly at weak record times.
    pub fn reflected_gap(&self, m: usize) -> i64 {
        assert!(m < self.values.len(), "index {m} out of range");
        let max = self.values[..=m].iter().max().copied().unwrap();
        max - self.values[m]
    }
}

// ---------------------------------------------------------------------------
// Ladder epochs
// ---------------------------------------------------------------------------

/// Weak ascending ladder epochs of a finite window, with `T(0) = 0`.
/// Epochs beyond the horizon are unresolved, not infinite.
#[derive(Clone, Debug)]
pub struct Ladder {
    /// `T(k)` for `k = 0..=resolved`.
    epochs: Vec<usize>,
    /// `S(T(k))`, the cumulative ladder height.
    heights: Vec<i64>,
    horizon: usize,
}

pub fn ladder_times(path: &LukaPath) -> Ladder {
    let mut epochs = vec![0usize];
    let mut heights = vec![0i64];
    let mut record = 0i64;
    for n in 1..path.values.len() {
        let v = path.values[n];
        if v >= record {
            epochs.push(n);
            heights.push(v);
            record = v;
        }
    }
    Ladder {
        epochs,
        heights,
        horizon: path.steps(),
    }
}

impl Ladder {
    /// Largest resolved ladder index.
    pub fn resolved(&self) -> usize {
        self.epochs.len() - 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `T(k)`, `None` when unresolved within the window.
    pub fn epoch(&self, k: usize) -> Option<usize> {
        self.epochs.get(k).copied()
    }

    pub fn epochs(&self) -> &[usize] {
        &self.epochs
    }

    /// `S(T(k))`: cumulative overshoots, so `Z({k}) = height(k) - height(k-1)`.
    pub fn height(&self, k: usize) -> i64 {
        self.heights[k]
    }

    pub fn is_weak_record(&self, n: usize) -> bool {
        self.epochs.binary_search(&n).is_ok()
    }

    /// `T̃⁻¹(n) = max{k : T(k) ≤ n}`; defined for any `n ≤ horizon`.
    pub fn tilde_inverse(&self, n: usize) -> usize {
        assert!(n <= self.horizon);
        self.epochs.partition_point(|&t| t <= n) - 1
    }

    /// `T⁻¹(n) = min{k : T(k) ≥ n}`; `Censored` when no resolved epoch
    /// reaches `n`.
    pub fn inverse(&self, n: usize) -> Result<usize, LadderError> {
        let k = self.epochs.partition_point(|&t| t < n);
        if k < self.epochs.len() {
            Ok(k)
        } else {
            Err(LadderError::Censored)
        }
    }

    /// Both inverses of `T` at `n`: `(T̃⁻¹(n), T⁻¹(n))`. They agree exactly
    /// at weak record times and differ by one elsewhere.
    pub fn inverses(&self, n: usize) -> Result<(usize, usize), LadderError> {
        Ok((self.tilde_inverse(n), self.inverse(n)?))
    }
}

// ---------------------------------------------------------------------------
// Ladder triple
// ---------------------------------------------------------------------------

/// Aligned `(T(k), Z({k}), R({k}))` over the resolved ladder epochs `k ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderTriple {
    pub epochs: Vec<usize>,
    pub overshoots: Vec<u64>,
    pub ages: Vec<f64>,
}

/// Scans the sticks once, recording at each weak record the overshoot and
/// the begetting age `A_{Z({k})}(P_{T(k)-1})`.
pub fn ladder_triple(sticks: &[Stick]) -> LadderTriple {
    let mut epochs = Vec::new();
    let mut overshoots = Vec::new();
    let mut ages = Vec::new();
    let mut s = 0i64;
    let mut record = 0i64;
    for (n, stick) in sticks.iter().enumerate() {
        s += stick.offspring_count() as i64 - 1;
        if s >= record {
            let z = (s - record) as u64;
            epochs.push(n + 1);
            overshoots.push(z);
            ages.push(
                stick
                    .atoms
                    .atom_rank(z)
                    .expect("overshoot exceeds ladder stick atom count"),
            );
            record = s;
        }
    }
    LadderTriple {
        epochs,
        overshoots,
        ages,
    }
}

impl LadderTriple {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `R` as the measure `Σ_k R({k}) ε_k`.
    pub fn age_measure(&self) -> WeightedMeasure {
        WeightedMeasure::from_atoms(
            self.ages
                .iter()
                .enumerate()
                .map(|(i, &r)| ((i + 1) as f64, r))
                .collect(),
        )
    }

    /// Cumulative `R(k) = Σ_{j ≤ k} R({j})`, summed bottom-up.
    pub fn age_cumulative(&self, k: usize) -> f64 {
        self.ages[..k].iter().sum()
    }
}

/// Reversed prefix `(ω_{n-k-1}, k = 0..n-1)`: composing any functional with
/// this realises the dual `Ŵⁿ`.
pub fn dual_prefix(sticks: &[Stick], n: usize) -> Vec<Stick> {
    assert!(n <= sticks.len(), "prefix length {n} out of range");
    sticks[..n].iter().rev().cloned().collect()
}

// ---------------------------------------------------------------------------
// Step laws and first-passage machinery
// ---------------------------------------------------------------------------

/// Pmf of the walk increment `|P*| - 1` on `{-1, 0, 1, ...}`:
/// `probs[i] = P(step = i - 1)`. Heavy tails are truncated at the
/// `1 - SUPPORT_MASS_TOL` quantile and the dropped mass is tracked.
#[derive(Clone, Debug)]
pub struct StepLaw {
    probs: Vec<f64>,
    truncated_mass: f64,
}

impl StepLaw {
    pub fn from_offspring(law: &OffspringLaw) -> Self {
        let kmax = law.truncation_point(SUPPORT_MASS_TOL);
        let probs: Vec<f64> = (0..=kmax).map(|k| law.pmf(k)).collect();
        let total: f64 = probs.iter().sum();
        StepLaw {
            probs,
            truncated_mass: (1.0 - total).max(0.0),
        }
    }

    /// Offspring pmf given directly (exact, no truncation).
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "step pmf sums to {total}");
        StepLaw {
            probs,
            truncated_mass: 0.0,
        }
    }

    /// `P(step = s)` for `s ≥ -1`.
    pub fn prob(&self, s: i64) -> f64 {
        if s < -1 {
            return 0.0;
        }
        self.probs.get((s + 1) as usize).copied().unwrap_or(0.0)
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn max_step(&self) -> i64 {
        self.probs.len() as i64 - 2
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as f64 - 1.0) * p)
            .sum()
    }
}

/// Distribution of `S(t)`, advanced one convolution step at a time. Mass
/// below `TRIM` per side is dropped and tracked, which keeps the support
/// window `O(√t)` wide for centred walks.
#[derive(Clone, Debug)]
pub struct WalkDistribution {
    step: StepLaw,
    probs: Vec<f64>,
    min_pos: i64,
    t: usize,
    dropped: f64,
}

const TRIM: f64 = 1e-24;

impl WalkDistribution {
    pub fn new(step: StepLaw) -> Self {
        WalkDistribution {
            step,
            probs: vec![1.0],
            min_pos: 0,
            t: 0,
            dropped: 0.0,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dropped_mass(&self) -> f64 {
        self.dropped
    }

    pub fn advance(&mut self) {
        let slen = self.step.probs.len();
        let mut out = vec![0.0f64; self.probs.len() + slen - 1];
        for (j, &pj) in self.probs.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            for (i, &si) in self.step.probs.iter().enumerate() {
                out[j + i] += pj * si;
            }
        }
        self.min_pos -= 1;
        self.t += 1;
        // trim negligible tails, tracking what was dropped
        let mut lo = 0usize;
        let mut acc = 0.0;
        while lo < out.len() && acc + out[lo] < TRIM {
            acc += out[lo];
            lo += 1;
        }
        self.dropped += acc;
        let mut hi = out.len();
        let mut acc = 0.0;
        while hi > lo && acc + out[hi - 1] < TRIM {
            acc += out[hi - 1];
            hi -= 1;
        }
        self.dropped += acc;
        self.min_pos += lo as i64;
        out.truncate(hi);
        out.drain(..lo);
        self.probs = out;
    }

    /// `P(S(t) = pos)`.
    pub fn prob_at(&self, pos: i64) -> f64 {
        let idx = pos - self.min_pos;
        if idx < 0 {
            return 0.0;
        }
        self.probs.get(idx as usize).copied().unwrap_or(0.0)
    }
}

/// `P(τ⁻_x = t)` by Kemperman's formula `(x/t)·P(S(t) = -x)` for the
/// skip-free descending walk; 0 when infeasible.
pub fn hitting_time_pmf(step: &StepLaw, x: u64, t: u64) -> f64 {
    assert!(x >= 1 && t >= 1);
    let mut walk = WalkDistribution::new(step.clone());
    for _ in 0..t {
        walk.advance();
    }
    x as f64 / t as f64 * walk.prob_at(-(x as i64))
}

/// First-passage pmf by direct dynamic programming with an absorbing barrier
/// at `-x`: the independent cross-check for Kemperman's formula. Returns
/// `P(τ⁻_x = t)` for `t = 0..=t_max`.
pub fn first_passage_dp(step: &StepLaw, x: u64, t_max: usize) -> Vec<f64> {
    let x = x as i64;
    let mut pmf = vec![0.0; t_max + 1];
    if x == 0 {
        pmf[0] = 1.0;
        return pmf;
    }
    // alive[i] = P(S(t) = i - x + 1, τ > t): positions > -x
    let mut alive = vec![0.0f64; x as usize];
    alive[(x - 1) as usize] = 1.0; // S(0) = 0
    for t in 1..=t_max {
        let slen = step.probs.len();
        let mut next = vec![0.0f64; alive.len() + slen - 1];
        let mut absorbed = 0.0;
        for (j, &pj) in alive.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            for (i, &si) in step.probs.iter().enumerate() {
                if si == 0.0 {
                    continue;
                }
                if j + i == 0 {
                    absorbed += pj * si; // lands exactly on -x
                } else {
                    next[j + i - 1] += pj * si;
                }
            }
        }
        pmf[t] = absorbed;
        alive = next;
    }
    pmf
}

/// `P(τ⁻_x ≥ m)` for `x = 0..=x_max`, via one convolution pass and
/// Kemperman's formula accumulated over `t < m`.
pub fn first_passage_survival(step: &StepLaw, x_max: u64, m: usize) -> Vec<f64> {
    let mut consumed = vec![0.0f64; (x_max + 1) as usize];
    let mut walk = WalkDistribution::new(step.clone());
    for t in 1..m {
        walk.advance();
        for x in 1..=x_max {
            consumed[x as usize] += x as f64 / t as f64 * walk.prob_at(-(x as i64));
        }
    }
    let mut out = vec![0.0f64; (x_max + 1) as usize];
    for x in 1..=x_max as usize {
        out[x] = (1.0 - consumed[x]).clamp(0.0, 1.0);
    }
    // τ⁻_0 = 0, so it never survives to m ≥ 1
    out[0] = if m == 0 { 1.0 } else { 0.0 };
    out
}

// ---------------------------------------------------------------------------
// Joint ladder law
// ---------------------------------------------------------------------------

/// Semi-analytic estimate of `P(T(1) = t, Z(1) = z, r_test(R(1)))`:
/// exact first-passage laws for the walk part, Monte Carlo over conditional
/// ladder sticks for the age part.
#[derive(Clone, Debug)]
pub struct JointLawEstimate {
    pub probability: f64,
    pub stderr: f64,
    /// Offspring mass beyond the truncated support, an upper bound on the
    /// omitted part of the x-sum.
    pub truncated_mass: f64,
}

pub fn ladder_joint_pmf<F: Fn(f64) -> bool>(
    law: &StickLaw,
    t: u64,
    z: u64,
    r_test: F,
    mc: usize,
    rng: &mut RngStream,
) -> JointLawEstimate {
    assert!(t >= 1 && mc >= 1);
    let offspring = law.offspring();
    let step = StepLaw::from_offspring(&offspring);
    let mut walk = WalkDistribution::new(step);
    for _ in 0..t.saturating_sub(1) {
        walk.advance();
    }
    let x_max = (offspring.truncation_point(SUPPORT_MASS_TOL) + 1).saturating_sub(z);
    let mut probability = 0.0;
    let mut variance = 0.0;
    for x in 1..=x_max {
        // P(τ⁻_{x-1} = t-1), with τ⁻_0 = 0 handled separately
        let tau = if t == 1 {
            if x == 1 {
                1.0
            } else {
                0.0
            }
        } else if x == 1 {
            0.0
        } else {
            (x - 1) as f64 / (t - 1) as f64 * walk.prob_at(-((x - 1) as i64))
        };
        if tau == 0.0 {
            continue;
        }
        let n = x + z;
        let weight = offspring.pmf(n) * tau;
        if weight == 0.0 {
            continue;
        }
        // fraction of conditional ladder sticks whose selected atom passes
        let mut hits = 0usize;
        for _ in 0..mc {
            let atoms = law.sample_atoms_given_count(n, rng);
            if r_test(atoms.atom_rank(z).expect("rank z < n")) {
                hits += 1;
            }
        }
        let frac = hits as f64 / mc as f64;
        probability += weight * frac;
        variance += weight * weight * frac * (1.0 - frac) / mc as f64;
    }
    JointLawEstimate {
        probability,
        stderr: variance.sqrt(),
        truncated_mass: offspring.tail(offspring.truncation_point(SUPPORT_MASS_TOL)),
    }
}

/// One simulated first-ladder-epoch record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LadderSample {
    /// `T(1)`.
    pub t: u64,
    /// Overshoot `Z(1) = S(T(1))`.
    pub z: u64,
    /// Offspring count of the ladder stick `|P_{T(1)-1}|`.
    pub xi: u64,
    /// `R(1) = A_{Z(1)}(P_{T(1)-1})`.
    pub age: f64,
}

/// Simulates the walk to its first weak ascending ladder epoch, drawing only
/// offspring counts along the way and the ladder stick's atoms at the end.
/// `T(1)` has infinite mean, so a step cap keeps pathological excursions
/// bounded; `None` reports the censoring.
pub fn sample_ladder_epoch(
    law: &StickLaw,
    sampler: &crate::stick::StickSampler,
    cap: usize,
    rng: &mut RngStream,
) -> Option<LadderSample> {
    let mut s = 0i64;
    for t in 1..=cap {
        let xi = sampler.sample_offspring(rng);
        s += xi as i64 - 1;
        if s >= 0 {
            let z = s as u64;
            let atoms = law.sample_atoms_given_count(xi, rng);
            let age = atoms.atom_rank(z).expect("overshoot below offspring count");
            return Some(LadderSample {
                t: t as u64,
                z,
                xi,
                age,
            });
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Ladder functionals and the snake decomposition
// ---------------------------------------------------------------------------

/// `W = Σ_k Z(θ_{T(k)}(ω)) ε_{k+1}` evaluated over the epochs whose segment
/// `[T(k), T(k+1))` closes inside the window. The functional receives
/// exactly that segment, which enforces the measurability requirement
/// (nothing past the shifted sequence's first ladder epoch is visible).
#[derive(Clone, Debug)]
pub struct LadderFunctional {
    pub measure: WeightedMeasure,
    /// Sticks past the last closed segment exist, so later epochs may be
    /// missing from the measure.
    pub truncated: bool,
}

pub fn ladder_functional<F: Fn(&[Stick]) -> f64>(sticks: &[Stick], z_fn: F) -> LadderFunctional {
    let ladder = ladder_times(&lukasiewicz(sticks));
    let mut atoms = Vec::new();
    for k in 0..ladder.resolved() {
        let start = ladder.epoch(k).unwrap();
        let end = ladder.epoch(k + 1).unwrap();
        atoms.push(((k + 1) as f64, z_fn(&sticks[start..end])));
    }
    let truncated = ladder.epoch(ladder.resolved()).unwrap() < sticks.len();
    LadderFunctional {
        measure: WeightedMeasure::from_atoms(atoms),
        truncated,
    }
}

/// Prebuilt segment functionals of `m F_{<T(1)}` type.
pub mod functionals {
    use crate::stick::Stick;

    /// `Z = T(1)`: the epoch length, reproducing `T` as a measure.
    pub fn epoch_length(segment: &[Stick]) -> f64 {
        segment.len() as f64
    }

    /// `Z = A_{S(T(1))}(P_{T(1)-1})`: the begetting age at the record,
    /// reproducing `R`.
    pub fn record_age(segment: &[Stick]) -> f64 {
        let z: i64 = segment
            .iter()
            .map(|s| s.offspring_count() as i64 - 1)
            .sum();
        debug_assert!(z >= 0);
        segment
            .last()
            .expect("nonempty segment")
            .atoms
            .atom_rank(z as u64)
            .expect("overshoot in range")
    }

    /// `Z ≡ 1`: the counting measure on resolved epochs.
    pub fn unit(_segment: &[Stick]) -> f64 {
        1.0
    }
}

/// Both sides of the snake-like identity at a non-record index `m`, plus the
/// discrete valley-exit relations. Each field pair comes from independent
/// evaluations of the two sides; callers assert equality.
#[derive(Clone, Debug)]
pub struct SnakeDecomposition {
    /// `Θ_{T⁻¹(m)}(W)`.
    pub shifted_original: WeightedMeasure,
    /// `Θ_{(Z^m)⁻¹∘X(m)}(W^m)`.
    pub shifted_restarted: WeightedMeasure,
    /// `W` over its resolved epochs.
    pub original: WeightedMeasure,
    /// `[W, Θ_{(Z^m)⁻¹∘X(m)}(W^m)]_{T̃⁻¹(m)+1}`.
    pub spliced: WeightedMeasure,
    /// `T(T⁻¹(m)) - m`: time to exit the valley, original side.
    pub valley_exit_original: usize,
    /// `T^m((Z^m)⁻¹∘X(m))`: the same exit seen from the shifted side.
    pub valley_exit_restarted: usize,
    /// `ΔT(T⁻¹(m))` against `T^m((Z^m)⁻¹∘X(m)) + (m - T(T̃⁻¹(m)))`.
    pub t_jump: (usize, usize),
    /// `ΔZ(T⁻¹(m))` against the exit overshoot `Z^m((Z^m)⁻¹∘X(m)) - X(m)`.
    pub z_jump: (i64, i64),
}

pub fn snake_decompose<F: Fn(&[Stick]) -> f64>(
    sticks: &[Stick],
    m: usize,
    z_fn: F,
) -> Result<SnakeDecomposition, LadderError> {
    if m >= sticks.len() {
        return Err(LadderError::OutOfRange {
            index: m,
            len: sticks.len(),
        });
    }
    let path = lukasiewicz(sticks);
    let ladder = ladder_times(&path);
    if ladder.is_weak_record(m) {
        return Err(LadderError::RecordTime { index: m });
    }
    let t_inv = ladder.inverse(m)?;
    let t_tilde = ladder.tilde_inverse(m);
    debug_assert_eq!(t_inv, t_tilde + 1);
    let gap = path.reflected_gap(m); // X(m) > 0 off records

    let shifted = &sticks[m..];
    let shifted_ladder = ladder_times(&lukasiewicz(shifted));
    // (Z^m)⁻¹ ∘ X(m): ladder steps needed to *reach* level X(m). A strict
    // right-continuous inverse would overshoot whenever the shifted walk
    // creeps onto the level exactly; reaching is what exiting the valley
    // means, and is what makes the identities exact at finite n.
    let heights: Vec<f64> = (0..=shifted_ladder.resolved())
        .map(|k| shifted_ladder.height(k) as f64)
        .collect();
    let k_star = reach_inverse_step(&heights, gap as f64).ok_or(LadderError::Censored)?;
    let exit_restarted = shifted_ladder.epoch(k_star).unwrap();

    let w = ladder_functional(sticks, &z_fn);
    let w_shifted = ladder_functional(shifted, &z_fn);

    let shifted_original = w.measure.shift(t_inv as f64);
    let shifted_restarted = w_shifted.measure.shift(k_star as f64);
    let spliced = w.measure.concat(
        &shifted_restarted,
        (t_tilde + 1) as f64,
        crate::measure::StopMode::Closed,
    );

    let t_exit = ladder.epoch(t_inv).unwrap();
    let t_jump_lhs = t_exit - ladder.epoch(t_inv - 1).unwrap();
    let t_jump_rhs = exit_restarted + (m - ladder.epoch(t_tilde).unwrap());
    let z_jump_lhs = ladder.height(t_inv) - ladder.height(t_inv - 1);
    let z_jump_rhs = shifted_ladder.height(k_star) - gap;

    Ok(SnakeDecomposition {
        shifted_original,
        shifted_restarted,
        original: w.measure,
        spliced,
        valley_exit_original: t_exit - m,
        valley_exit_restarted: exit_restarted,
        t_jump: (t_jump_lhs, t_jump_rhs),
        z_jump: (z_jump_lhs, z_jump_rhs),
    })
}
