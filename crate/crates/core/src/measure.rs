//! Finite weighted atomic measures on `[0, ∞)`.
//!
//! A measure is identified with its càdlàg cumulative function
//! `x ↦ ν[0, x]`, which is what the shift, stop, concatenation and reversal
//! operators below act on. Positions are compared exactly (no epsilon): every
//! construction in this crate only copies, adds and subtracts previously
//! stored values, so exact comparison is both safe and the only way to keep
//! the finite-`n` identities machine-checkable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("atom rank {rank} out of range for measure of mass {mass}")]
    RankOutOfRange { rank: u64, mass: u64 },
}

/// Which endpoint a stopping operator keeps: `ν|_h` (closed) keeps atoms at
/// positions `≤ h`, `ν|_{h-}` (open) keeps positions `< h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopMode {
    Closed,
    Open,
}

/// Finite atomic measure: positions strictly increasing, weights strictly
/// positive. The empty list is the zero measure **z**.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightedMeasure {
    atoms: Vec<(f64, f64)>,
}

impl<'de> Deserialize<'de> for WeightedMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = Vec::<(f64, f64)>::deserialize(de)?;
        for &(p, w) in &raw {
            if !(p >= 0.0) || !(w > 0.0) {
                return Err(serde::de::Error::custom(format!(
                    "invalid atom ({p}, {w}): need position >= 0 and weight > 0"
                )));
            }
        }
        Ok(WeightedMeasure::from_atoms(raw))
    }
}

impl WeightedMeasure {
    pub fn zero() -> Self {
        WeightedMeasure { atoms: Vec::new() }
    }

    /// `w · ε_x`.
    pub fn dirac(position: f64, weight: f64) -> Self {
        debug_assert!(position >= 0.0 && weight >= 0.0);
        if weight == 0.0 {
            return Self::zero();
        }
        WeightedMeasure {
            atoms: vec![(position, weight)],
        }
    }

    /// Builds from arbitrary (position, weight) pairs: sorts by position,
    /// merges equal positions by summing weights, drops zero weights.
    /// Negative weights are a programming error.
    pub fn from_atoms(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|&(_, w)| w != 0.0);
        for &(p, w) in &raw {
            assert!(w > 0.0, "negative weight {w} at position {p}");
            assert!(p >= 0.0, "negative position {p}");
        }
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN position"));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (p, w) in raw {
            match atoms.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => atoms.push((p, w)),
            }
        }
        WeightedMeasure { atoms }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `|ν| = ν[0, ∞)`. Summed in ascending position order, so two measures
    /// holding bit-identical atoms report bit-identical masses.
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, w)| w).sum()
    }

    /// `π(ν)`, the supremum of the support, with `π(z) = 0`.
    pub fn support_sup(&self) -> f64 {
        self.atoms.last().map_or(0.0, |&(p, _)| p)
    }

    /// `ν[0, x]` (cumulative function); 0 for `x < 0`.
    pub fn cumulative(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|&&(p, _)| p <= x)
            .map(|&(_, w)| w)
            .sum()
    }

    /// `ν({x})`.
    pub fn atom_at(&self, x: f64) -> f64 {
        match self.atoms.binary_search_by(|&(p, _)| p.partial_cmp(&x).unwrap()) {
            Ok(i) => self.atoms[i].1,
            Err(_) => 0.0,
        }
    }

    /// `Θ_h(ν)(x) = ν((h, x+h] ∩ ℝ₊)`. For `h ≥ 0` this keeps atoms strictly
    /// above `h`, repositioned to `p − h`; for `h < 0` it translates all
    /// atoms up by `−h`.
    pub fn shift(&self, h: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .filter(|&&(p, _)| p > h)
            .map(|&(p, w)| (p - h, w))
            .collect();
        WeightedMeasure { atoms }
    }

    /// `ν|_h` (closed) or `ν|_{h-}` (open).
    pub fn stop(&self, h: f64, mode: StopMode) -> Self {
        let keep = |p: f64| match mode {
            StopMode::Closed => p <= h,
            StopMode::Open => p < h,
        };
        WeightedMeasure {
            atoms: self.atoms.iter().copied().filter(|&(p, _)| keep(p)).collect(),
        }
    }

    /// Pointwise sum of measures.
    pub fn add(&self, other: &Self) -> Self {
        let mut raw = self.atoms.clone();
        raw.extend_from_slice(&other.atoms);
        Self::from_atoms(raw)
    }

    /// `[ν, ν']_h = ν|_h + Θ_{−h}(ν')` (and the open variant `[ν, ν']_{h-}`).
    pub fn concat(&self, other: &Self, h: f64, mode: StopMode) -> Self {
        debug_assert!(h >= 0.0);
        self.stop(h, mode).add(&other.shift(-h))
    }

    /// Reversed measure `ℒ(ν)(x) = ν[π(ν) − x, π(ν)]`: the atom at position
    /// `p` moves to `π(ν) − p`, so the top atom lands at the origin. A
    /// measure supported on `{0}` is its own reversal.
    pub fn reverse(&self) -> Self {
        let top = self.support_sup();
        WeightedMeasure {
            atoms: self.atoms.iter().rev().map(|&(p, w)| (top - p, w)).collect(),
        }
    }

    /// Scales positions by `pos_scale` and weights by `weight_scale`
    /// (both > 0); used by the scaled process views.
    pub fn rescale(&self, pos_scale: f64, weight_scale: f64) -> Self {
        debug_assert!(pos_scale > 0.0 && weight_scale > 0.0);
        WeightedMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|&(p, w)| (p * pos_scale, w * weight_scale))
                .collect(),
        }
    }

    /// `inf{x ≥ 0 : ν[0, x] > t}`, or `None` when the total mass never
    /// exceeds `t` (the paper's `inf ∅ = +∞`).
    pub fn right_inverse(&self, t: f64) -> Option<f64> {
        let mut acc = 0.0;
        for &(p, w) in &self.atoms {
            acc += w;
            if acc > t {
                return Some(p);
            }
        }
        None
    }
}

/// Measure with integer multiplicities, the shape of offspring measures.
/// `atom_rank` indexes the bottom-to-top expansion `a(1) ≤ … ≤ a(|ν|)`
/// without materialising it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitAtomMeasure {
    atoms: Vec<(f64, u64)>,
}

impl UnitAtomMeasure {
    pub fn zero() -> Self {
        UnitAtomMeasure { atoms: Vec::new() }
    }

    pub fn from_positions(mut positions: Vec<f64>) -> Self {
        positions.sort_by(|a, b| a.partial_cmp(b).expect("NaN position"));
        let mut atoms: Vec<(f64, u64)> = Vec::new();
        for p in positions {
            assert!(p >= 0.0, "negative position {p}");
            match atoms.last_mut() {
                Some(last) if last.0 == p => last.1 += 1,
                _ => atoms.push((p, 1)),
            }
        }
        UnitAtomMeasure { atoms }
    }

    pub fn from_multiplicities(raw: Vec<(f64, u64)>) -> Self {
        let mut raw: Vec<(f64, u64)> = raw.into_iter().filter(|&(_, m)| m > 0).collect();
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN position"));
        let mut atoms: Vec<(f64, u64)> = Vec::new();
        for (p, m) in raw {
            assert!(p >= 0.0, "negative position {p}");
            match atoms.last_mut() {
                Some(last) if last.0 == p => last.1 += m,
                _ => atoms.push((p, m)),
            }
        }
        UnitAtomMeasure { atoms }
    }

    pub fn atoms(&self) -> &[(f64, u64)] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total multiplicity `|ν|`.
    pub fn mass(&self) -> u64 {
        self.atoms.iter().map(|&(_, m)| m).sum()
    }

    pub fn support_sup(&self) -> f64 {
        self.atoms.last().map_or(0.0, |&(p, _)| p)
    }

    pub fn min_position(&self) -> Option<f64> {
        self.atoms.first().map(|&(p, _)| p)
    }

    /// `A_k(ν)`: position of the `(k+1)`st atom from the bottom.
    pub fn atom_rank(&self, k: u64) -> Result<f64, MeasureError> {
        let mut seen = 0u64;
        for &(p, m) in &self.atoms {
            seen += m;
            if seen > k {
                return Ok(p);
            }
        }
        Err(MeasureError::RankOutOfRange {
            rank: k,
            mass: self.mass(),
        })
    }

    pub fn to_weighted(&self) -> WeightedMeasure {
        WeightedMeasure::from_atoms(self.atoms.iter().map(|&(p, m)| (p, m as f64)).collect())
    }
}

/// `f⁻¹(t) = inf{s ≥ 0 : f(s) > t}` for the step function `f(s) = vals[⌊s⌋]`
/// (`vals` non-decreasing). `None` means the window never exceeds `t`.
pub fn right_inverse_step(vals: &[f64], t: f64) -> Option<usize> {
    // vals is sorted, so partition_point gives the first index with val > t.
    let idx = vals.partition_point(|&v| v <= t);
    (idx < vals.len()).then_some(idx)
}

/// `min{s ≥ 0 : vals[s] ≥ t}` — the "reach" inverse used when counting the
/// ladder steps needed to weakly exceed a level.
pub fn reach_inverse_step(vals: &[f64], t: f64) -> Option<usize> {
    let idx = vals.partition_point(|&v| v < t);
    (idx < vals.len()).then_some(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Offspring measure of the fifth stick in the running worked example:
    /// atoms at 1, 2.5, 3.5.
    fn p5() -> WeightedMeasure {
        WeightedMeasure::from_atoms(vec![(1.0, 1.0), (2.5, 1.0), (3.5, 1.0)])
    }

    fn p5_unit() -> UnitAtomMeasure {
        UnitAtomMeasure::from_positions(vec![1.0, 2.5, 3.5])
    }

    #[test]
    fn mass_examples() {
        assert_eq!(p5().mass(), 3.0);
        assert_eq!(WeightedMeasure::zero().mass(), 0.0);
        let spine = WeightedMeasure::from_atoms(vec![(0.0, 0.5), (1.0, 2.5)]);
        assert_eq!(spine.mass(), 3.0);
    }

    #[test]
    fn support_sup_examples() {
        assert_eq!(p5().support_sup(), 3.5);
        assert_eq!(WeightedMeasure::zero().support_sup(), 0.0);
        let w0 = WeightedMeasure::from_atoms(vec![(0.5, 1.0), (1.5, 1.0)]);
        assert_eq!(w0.support_sup(), 1.5);
    }

    #[test]
    fn shift_examples() {
        let shifted = p5().shift(1.0);
        assert_eq!(shifted.atoms(), &[(1.5, 1.0), (2.5, 1.0)]);

        // shift by 0 keeps only positions > 0
        let with_origin = WeightedMeasure::from_atoms(vec![(0.0, 2.0), (1.0, 1.0)]);
        assert_eq!(with_origin.shift(0.0).atoms(), &[(1.0, 1.0)]);

        // negative h translates upward
        let e1 = WeightedMeasure::dirac(1.0, 1.0);
        assert_eq!(e1.shift(-2.0).atoms(), &[(3.0, 1.0)]);
    }

    #[test]
    fn stop_examples() {
        assert_eq!(
            p5().stop(2.5, StopMode::Closed).atoms(),
            &[(1.0, 1.0), (2.5, 1.0)]
        );
        assert_eq!(p5().stop(2.5, StopMode::Open).atoms(), &[(1.0, 1.0)]);
        let full = p5().stop(p5().support_sup(), StopMode::Closed);
        assert_eq!(full, p5());
        // negative stop level empties the measure
        assert!(p5().stop(-1.0, StopMode::Closed).is_zero());
    }

    #[test]
    fn concat_examples() {
        let e1 = WeightedMeasure::dirac(1.0, 1.0);
        let joined = e1.concat(&e1, 2.0, StopMode::Closed);
        assert_eq!(joined.atoms(), &[(1.0, 1.0), (3.0, 1.0)]);

        let trimmed = p5().concat(&WeightedMeasure::zero(), 2.5, StopMode::Open);
        assert_eq!(trimmed.atoms(), &[(1.0, 1.0)]);
    }

    #[test]
    fn reverse_examples() {
        let rev = p5().reverse();
        assert_eq!(rev.atoms(), &[(0.0, 1.0), (1.0, 1.0), (2.5, 1.0)]);

        let ec = WeightedMeasure::dirac(4.25, 2.0);
        assert_eq!(ec.reverse().atoms(), &[(0.0, 2.0)]);

        // support_sup = 0 collapses to mass·ε₀
        let origin = WeightedMeasure::dirac(0.0, 3.0);
        assert_eq!(origin.reverse().atoms(), &[(0.0, 3.0)]);
    }

    #[test]
    fn atom_rank_examples() {
        assert_eq!(p5_unit().atom_rank(1), Ok(2.5));
        let p0 = UnitAtomMeasure::from_positions(vec![0.5, 1.5]);
        assert_eq!(p0.atom_rank(0), Ok(0.5));
        assert_eq!(
            p5_unit().atom_rank(3),
            Err(MeasureError::RankOutOfRange { rank: 3, mass: 3 })
        );
    }

    #[test]
    fn atom_rank_with_multiplicities() {
        let nu = UnitAtomMeasure::from_multiplicities(vec![(1.0, 2), (2.0, 3)]);
        assert_eq!(nu.mass(), 5);
        assert_eq!(nu.atom_rank(0), Ok(1.0));
        assert_eq!(nu.atom_rank(1), Ok(1.0));
        assert_eq!(nu.atom_rank(2), Ok(2.0));
        assert_eq!(nu.atom_rank(4), Ok(2.0));
        assert!(nu.atom_rank(5).is_err());
    }

    #[test]
    fn right_inverse_examples() {
        // cumulative lives of the worked example
        let v = [2.0, 3.5, 5.0, 6.0, 8.0, 12.0, 14.0, 15.0, 16.0, 17.0];
        assert_eq!(right_inverse_step(&v, 4.0), Some(2));
        assert_eq!(right_inverse_step(&v, 3.5), Some(2)); // strict inequality
        assert_eq!(right_inverse_step(&v, 1.0), Some(0)); // below f(0)
        assert_eq!(right_inverse_step(&v, 17.0), None); // censored
    }

    #[test]
    fn strict_inverse_skips_flat_jump_value() {
        // jump at index 2: f(1) = 1, f(2) = 4
        let vals = [0.0, 1.0, 4.0, 4.0, 9.0];
        assert!(right_inverse_step(&vals, 1.0).unwrap() > 1);
        assert_eq!(reach_inverse_step(&vals, 4.0), Some(2));
        assert_eq!(reach_inverse_step(&vals, 4.5), Some(4));
    }

    #[test]
    fn measure_right_inverse() {
        let nu = WeightedMeasure::from_atoms(vec![(1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(nu.right_inverse(0.5), Some(1.0));
        assert_eq!(nu.right_inverse(1.0), Some(2.0));
        assert_eq!(nu.right_inverse(3.0), None);
    }

    #[test]
    fn equal_positions_merge() {
        let nu = WeightedMeasure::from_atoms(vec![(1.0, 0.5), (1.0, 0.25), (0.5, 1.0)]);
        assert_eq!(nu.atoms(), &[(0.5, 1.0), (1.0, 0.75)]);
    }

    #[test]
    fn serde_round_trip_is_position_sorted() {
        let nu = p5();
        let json = serde_json::to_string(&nu).unwrap();
        assert_eq!(json, "[[1.0,1.0],[2.5,1.0],[3.5,1.0]]");
        let back: WeightedMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, nu);
        assert!(serde_json::from_str::<WeightedMeasure>("[[1.0,-2.0]]").is_err());
    }

    fn arb_measure() -> impl Strategy<Value = WeightedMeasure> {
        proptest::collection::vec(
            (
                (0u32..400).prop_map(|p| p as f64 * 0.25),
                (1u32..16).prop_map(|w| w as f64 * 0.5),
            ),
            0..24,
        )
        .prop_map(WeightedMeasure::from_atoms)
    }

    proptest! {
        #[test]
        fn concat_of_shift_recovers(nu in arb_measure(), h in (0u32..64).prop_map(|h| h as f64 * 0.5)) {
            let rebuilt = nu.concat(&nu.shift(h), h, StopMode::Closed);
            prop_assert_eq!(rebuilt, nu);
        }

        #[test]
        fn closed_concat_is_open_plus_boundary_atom(
            nu in arb_measure(),
            other in arb_measure(),
            h in (0u32..64).prop_map(|h| h as f64 * 0.5),
        ) {
            let closed = nu.concat(&other, h, StopMode::Closed);
            let open = nu.concat(&other, h, StopMode::Open);
            let boundary = WeightedMeasure::dirac(h, nu.atom_at(h));
            prop_assert_eq!(closed, open.add(&boundary));
        }

        #[test]
        fn stop_and_shift_split_mass(nu in arb_measure(), h in (0u32..64).prop_map(|h| h as f64 * 0.5)) {
            let total = nu.stop(h, StopMode::Closed).mass() + nu.shift(h).mass();
            prop_assert!((total - nu.mass()).abs() < 1e-9);
        }

        #[test]
        fn reverse_preserves_mass_and_tops_origin(nu in arb_measure()) {
            let rev = nu.reverse();
            prop_assert_eq!(rev.mass(), nu.mass());
            if !nu.is_zero() {
                prop_assert_eq!(rev.atoms()[0].0, 0.0);
                prop_assert_eq!(rev.atoms()[0].1, nu.atoms().last().unwrap().1);
            }
        }
    }
}
