//! Sequential construction of the chronological forest and its coding
//! processes.
//!
//! Sticks are consumed in lexicographic order; each new individual grafts
//! onto the highest remaining stub of the exploration stack's top entry
//! (edges grow to the right, so the top entry's stubs always sit above every
//! stub further down). The stack construction is the production path and
//! runs in amortized O(atoms + sticks); the dual-ladder `spine_oracle`
//! recomputes the same quantities from scratch through the time-reversal
//! identities and exists to prove the two agree exactly.

use crate::measure::{right_inverse_step, WeightedMeasure};
use crate::stick::Stick;
use crate::luka::{dual_prefix, ladder_triple};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("time {t} beyond the observation window (total life {total})")]
    BeyondWindow { t: f64, total: f64 },
    #[error("individual {index} out of range ({len} individuals)")]
    OutOfRange { index: usize, len: usize },
}

/// Per-individual coding data for one finite window of sticks.
///
/// Spines are reconstructed on demand from the parent chain and the stored
/// begetting ages, so memory stays linear in the number of individuals.
#[derive(Clone, Debug)]
pub struct ForestCoding {
    parents: Vec<Option<usize>>,
    trees: Vec<usize>,
    depths: Vec<u32>,
    births: Vec<f64>,
    beget_ages: Vec<f64>,
    lives: Vec<f64>,
    renewal: Vec<f64>,
}

struct StackEntry {
    individual: usize,
    /// Cursor into the stick's atom list, consumed from the top down.
    atom_idx: usize,
    remaining_mult: u64,
}

/// Builds the forest by the exploration-stack recurrence.
pub fn build_forest(sticks: &[Stick]) -> ForestCoding {
    let n = sticks.len();
    let mut coding = ForestCoding {
        parents: Vec::with_capacity(n),
        trees: Vec::with_capacity(n),
        depths: Vec::with_capacity(n),
        births: Vec::with_capacity(n),
        beget_ages: Vec::with_capacity(n),
        lives: Vec::with_capacity(n),
        renewal: Vec::with_capacity(n),
    };
    let mut stack: Vec<StackEntry> = Vec::new();
    let mut tree = 0usize;
    let mut total_life = 0.0f64;

    for (idx, stick) in sticks.iter().enumerate() {
        // drop exhausted entries, then graft onto the top one
        while stack
            .last()
            .is_some_and(|e| e.remaining_mult == 0)
        {
            stack.pop();
        }
        match stack.last_mut() {
            None => {
                if idx > 0 {
                    tree += 1;
                }
                coding.parents.push(None);
                coding.trees.push(tree);
                coding.depths.push(0);
                coding.births.push(0.0);
                coding.beget_ages.push(0.0);
            }
            Some(entry) => {
                let parent = entry.individual;
                let age = sticks[parent].atoms.atoms()[entry.atom_idx].0;
                entry.remaining_mult -= 1;
                if entry.remaining_mult == 0 && entry.atom_idx > 0 {
                    entry.atom_idx -= 1;
                    entry.remaining_mult = sticks[parent].atoms.atoms()[entry.atom_idx].1;
                }
                coding.parents.push(Some(parent));
                coding.trees.push(tree);
                coding.depths.push(coding.depths[parent] + 1);
                coding.births.push(coding.births[parent] + age);
                coding.beget_ages.push(age);
            }
        }
        let atoms = stick.atoms.atoms();
        if !atoms.is_empty() {
            stack.push(StackEntry {
                individual: idx,
                atom_idx: atoms.len() - 1,
                remaining_mult: atoms[atoms.len() - 1].1,
            });
        }
        coding.lives.push(stick.v);
        total_life += stick.v;
        coding.renewal.push(total_life);
    }
    coding
}

impl ForestCoding {
    pub fn len(&self) -> usize {
        self.lives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lives.is_empty()
    }

    /// Parent index, `None` for roots.
    pub fn parent(&self, n: usize) -> Option<usize> {
        self.parents[n]
    }

    pub fn tree(&self, n: usize) -> usize {
        self.trees[n]
    }

    /// Genealogical height (number of ancestors).
    pub fn depth(&self, n: usize) -> u32 {
        self.depths[n]
    }

    /// Chronological height: the date of birth.
    pub fn birth(&self, n: usize) -> f64 {
        self.births[n]
    }

    pub fn life(&self, n: usize) -> f64 {
        self.lives[n]
    }

    pub fn death(&self, n: usize) -> f64 {
        self.births[n] + self.lives[n]
    }

    /// Age of the parent when begetting `n` (0 for roots).
    pub fn beget_age(&self, n: usize) -> f64 {
        self.beget_ages[n]
    }

    /// The spine `Π(n)`: one atom per ancestor, the atom at position `d`
    /// carrying the age at which the depth-`d` ancestor begot the next
    /// individual on the ancestral line. Roots have the zero measure.
    pub fn spine(&self, n: usize) -> WeightedMeasure {
        let mut atoms = Vec::with_capacity(self.depths[n] as usize);
        let mut child = n;
        while let Some(p) = self.parents[child] {
            atoms.push((self.depths[p] as f64, self.beget_ages[child]));
            child = p;
        }
        atoms.reverse();
        WeightedMeasure::from_atoms(atoms)
    }

    /// `V(n) = V_0 + ... + V_n`.
    pub fn renewal_value(&self, n: usize) -> f64 {
        self.renewal[n]
    }

    /// Left limit `V(n-)`, i.e. the cumulative life before individual `n`.
    pub fn renewal_left(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.renewal[n - 1]
        }
    }

    /// `V⁻¹(t) = inf{s : V(s) > t}`, `None` once `t` exhausts the window.
    pub fn renewal_inverse(&self, t: f64) -> Option<usize> {
        right_inverse_step(&self.renewal, t)
    }

    pub fn total_life(&self) -> f64 {
        self.renewal.last().copied().unwrap_or(0.0)
    }

    /// Two-coordinate contour at time `t`: the birth height of the visited
    /// individual and the particle's offset along its edge.
    pub fn contour(&self, t: f64) -> Result<(f64, f64), ForestError> {
        let n = self
            .renewal_inverse(t)
            .ok_or(ForestError::BeyondWindow {
                t,
                total: self.total_life(),
            })?;
        Ok((self.births[n], t - self.renewal_left(n)))
    }
}

/// Most recent common ancestor via parent pointers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MrcaOutcome {
    Common { ancestor: usize, depth: u32 },
    DifferentTrees,
}

pub fn mrca(coding: &ForestCoding, m: usize, n: usize) -> MrcaOutcome {
    if coding.trees[m] != coding.trees[n] {
        return MrcaOutcome::DifferentTrees;
    }
    let (mut a, mut b) = (m, n);
    while coding.depths[a] > coding.depths[b] {
        a = coding.parents[a].expect("depth > 0 implies a parent");
    }
    while coding.depths[b] > coding.depths[a] {
        b = coding.parents[b].expect("depth > 0 implies a parent");
    }
    while a != b {
        a = coding.parents[a].expect("same tree implies common ancestor");
        b = coding.parents[b].expect("same tree implies common ancestor");
    }
    MrcaOutcome::Common {
        ancestor: a,
        depth: coding.depths[a],
    }
}

/// Recomputes `(H_gen(n), H_chrono(n), Π(n))` from scratch on the reversed
/// prefix: the number of dual ladder epochs, the reversed stopped age
/// measure and its mass. O(n) per call.
pub fn spine_oracle(sticks: &[Stick], n: usize) -> (u32, f64, WeightedMeasure) {
    let dual = dual_prefix(sticks, n);
    let triple = ladder_triple(&dual);
    let height = triple.len() as u32;
    // Π(n) = L(R̂|_{H(n)}): the k-th dual age lands at position H(n) - k
    let spine = triple.age_measure().reverse();
    let birth = spine.mass();
    (height, birth, spine)
}

/// Chronological height `H(n)` alone, by a constant-memory dual scan;
/// summed root-first to match the incremental construction bit for bit.
pub fn birth_time_via_dual(sticks: &[Stick], n: usize) -> f64 {
    assert!(n <= sticks.len());
    let mut ages: Vec<f64> = Vec::new();
    let mut s = 0i64;
    let mut record = 0i64;
    for stick in sticks[..n].iter().rev() {
        s += stick.offspring_count() as i64 - 1;
        if s >= record {
            let z = (s - record) as u64;
            ages.push(stick.atoms.atom_rank(z).expect("overshoot in range"));
            record = s;
        }
    }
    ages.iter().rev().sum()
}

// ---------------------------------------------------------------------------
// Geometry export
// ---------------------------------------------------------------------------

/// Plain-data geometry of the forest: one vertical segment per individual,
/// dashed attachment links, and the height/contour polylines.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestGeometry {
    /// `(x, y_bottom, y_top)` per individual, x = lexicographic index.
    pub segments: Vec<(f64, f64, f64)>,
    /// `(x_parent, x_child, y)` attachment links.
    pub links: Vec<(f64, f64, f64)>,
    /// Step plot of `H_chrono(n)` against `n`.
    pub height_polyline: Vec<(f64, f64)>,
    /// Vertices of the classical contour `C*(t) + X(t)` against `t`,
    /// including both the peak and the drop at each jump instant.
    pub contour_polyline: Vec<(f64, f64)>,
}

pub fn export_geometry(coding: &ForestCoding) -> ForestGeometry {
    let n = coding.len();
    let mut segments = Vec::with_capacity(n);
    let mut links = Vec::new();
    let mut height_polyline = Vec::with_capacity(2 * n);
    let mut contour_polyline = Vec::with_capacity(2 * n + 1);
    if n > 0 {
        contour_polyline.push((0.0, 0.0));
    }
    for i in 0..n {
        let x = i as f64;
        segments.push((x, coding.birth(i), coding.death(i)));
        if let Some(p) = coding.parent(i) {
            links.push((p as f64, x, coding.birth(i)));
        }
        height_polyline.push((x, coding.birth(i)));
        height_polyline.push((x + 1.0, coding.birth(i)));
        // the exploration particle climbs this edge during
        // [V(i-1), V(i)], then drops to the next birth height
        contour_polyline.push((coding.renewal_value(i), coding.death(i)));
        let next = if i + 1 < n { coding.birth(i + 1) } else { 0.0 };
        contour_polyline.push((coding.renewal_value(i), next));
    }
    ForestGeometry {
        segments,
        links,
        height_polyline,
        contour_polyline,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::stick::{
        reduce_genealogical, sample_sequence, worked_example_sticks, AgeFractionLaw, LifeLaw,
        OffspringLaw, StickLaw,
    };

    fn worked_coding() -> ForestCoding {
        build_forest(&worked_example_sticks())
    }

    #[test]
    fn worked_example_births() {
        let coding = worked_coding();
        let expect = [0.0, 1.5, 2.7, 3.6, 2.0, 0.5, 4.0, 3.0, 1.5, 2.5];
        for (n, &h) in expect.iter().enumerate() {
            assert_eq!(coding.birth(n), h, "individual {n}");
        }
    }

    #[test]
    fn worked_example_depths() {
        let coding = worked_coding();
        let expect = [0, 1, 2, 3, 2, 1, 2, 2, 2, 3];
        for (n, &d) in expect.iter().enumerate() {
            assert_eq!(coding.depth(n), d, "individual {n}");
        }
    }

    #[test]
    fn worked_example_parents_and_tree() {
        let coding = worked_coding();
        let parents = [
            None,
            Some(0),
            Some(1),
            Some(2),
            Some(1),
            Some(0),
            Some(5),
            Some(5),
            Some(5),
            Some(8),
        ];
        for (n, &p) in parents.iter().enumerate() {
            assert_eq!(coding.parent(n), p, "individual {n}");
            assert_eq!(coding.tree(n), 0);
        }
    }

    #[test]
    fn worked_example_spines() {
        let coding = worked_coding();
        let pi7 = coding.spine(7);
        assert_eq!(pi7.atoms(), &[(0.0, 0.5), (1.0, 2.5)]);
        assert_eq!(pi7.mass(), 3.0);

        let pi9 = coding.spine(9);
        assert_eq!(pi9.atoms(), &[(0.0, 0.5), (1.0, 1.0), (2.0, 1.0)]);
        assert_eq!(pi9.mass(), 2.5);

        assert!(coding.spine(0).is_zero());
    }

    #[test]
    fn worked_example_renewal() {
        let coding = worked_coding();
        let expect = [2.0, 3.5, 5.0, 6.0, 8.0, 12.0, 14.0, 15.0, 16.0, 17.0];
        for (n, &v) in expect.iter().enumerate() {
            assert_eq!(coding.renewal_value(n), v);
        }
        assert_eq!(coding.renewal_inverse(4.0), Some(2));
        assert_eq!(coding.renewal_inverse(3.5), Some(2));
        assert_eq!(coding.renewal_inverse(17.0), None); // window exhausted
    }

    #[test]
    fn worked_example_contour() {
        let coding = worked_coding();
        assert_eq!(coding.contour(4.0), Ok((2.7, 0.5)));
        assert_eq!(coding.contour(0.0), Ok((0.0, 0.0)));
        // exact jump instant: right-continuity puts us on individual 2
        assert_eq!(coding.contour(3.5), Ok((2.7, 0.0)));
        assert!(matches!(
            coding.contour(17.0),
            Err(ForestError::BeyondWindow { .. })
        ));
    }

    #[test]
    fn worked_example_mrca() {
        let coding = worked_coding();
        assert_eq!(
            mrca(&coding, 6, 7),
            MrcaOutcome::Common {
                ancestor: 5,
                depth: 1
            }
        );
        assert_eq!(
            mrca(&coding, 2, 2),
            MrcaOutcome::Common {
                ancestor: 2,
                depth: 2
            }
        );
        assert_eq!(
            mrca(&coding, 1, 5),
            MrcaOutcome::Common {
                ancestor: 0,
                depth: 0
            }
        );
        // the formula H(mu) = min H over {m..n} - 1{mu != m}
        let depths: Vec<u32> = (0..coding.len()).map(|i| coding.depth(i)).collect();
        for m in 0..coding.len() {
            for n in m..coding.len() {
                if let MrcaOutcome::Common { ancestor, depth } = mrca(&coding, m, n) {
                    let min = *depths[m..=n].iter().min().unwrap();
                    let expect = min - u32::from(ancestor != m);
                    assert_eq!(depth, expect, "({m},{n})");
                }
            }
        }
    }

    #[test]
    fn spine_oracle_matches_worked_example() {
        let sticks = worked_example_sticks();
        let (h, b, pi) = spine_oracle(&sticks, 7);
        assert_eq!(h, 2);
        assert_eq!(b, 3.0);
        assert_eq!(pi.atoms(), &[(0.0, 0.5), (1.0, 2.5)]);

        let (h0, b0, pi0) = spine_oracle(&sticks, 0);
        assert_eq!((h0, b0), (0, 0.0));
        assert!(pi0.is_zero());

        let (h9, b9, pi9) = spine_oracle(&sticks, 9);
        assert_eq!(h9, 3);
        assert_eq!(b9, 2.5);
        assert_eq!(pi9.atoms(), &[(0.0, 0.5), (1.0, 1.0), (2.0, 1.0)]);
    }

    fn random_laws() -> Vec<StickLaw> {
        vec![
            StickLaw::BellmanHarris {
                offspring: OffspringLaw::Binary,
                life: LifeLaw::Pareto { alpha: 0.5 },
            },
            StickLaw::ExtendedBh {
                offspring: OffspringLaw::Geometric,
                life: LifeLaw::Pareto { alpha: 0.5 },
                age_fraction: AgeFractionLaw::Uniform,
            },
            StickLaw::FiniteVarianceHeavyAge {
                offspring: OffspringLaw::Geometric,
                age_tail: 0.6,
                life_tail: 0.5,
            },
            StickLaw::StableOffspring {
                gamma: 1.5,
                c: 0.5,
                life_tail: 0.5,
            },
        ]
    }

    #[test]
    fn construction_matches_oracle_on_random_forests() {
        for (li, law) in random_laws().iter().enumerate() {
            for trial in 0..6 {
                let mut rng = RngStream::new(90 + li as u64, trial);
                let len = 64 + (rng.next_u64() % 300) as usize;
                let sticks = sample_sequence(law, len, &mut rng);
                let coding = build_forest(&sticks);
                for n in 0..len {
                    let (h, b, pi) = spine_oracle(&sticks, n);
                    assert_eq!(coding.depth(n), h, "law {li} trial {trial} n {n}");
                    assert_eq!(coding.birth(n), b, "law {li} trial {trial} n {n}");
                    assert_eq!(coding.spine(n), pi, "law {li} trial {trial} n {n}");
                    assert_eq!(coding.birth(n), pi.mass());
                    assert_eq!(birth_time_via_dual(&sticks, n), b);
                }
            }
        }
    }

    #[test]
    fn genealogical_reduction_identity() {
        for law in random_laws() {
            let sticks = sample_sequence(&law, 400, &mut RngStream::new(17, 3));
            let coding = build_forest(&sticks);
            let reduced = build_forest(&reduce_genealogical(&sticks));
            for n in 0..sticks.len() {
                assert_eq!(reduced.birth(n), coding.depth(n) as f64);
                assert_eq!(reduced.depth(n), coding.depth(n));
            }
        }
    }

    #[test]
    fn spine_prefix_property() {
        use crate::measure::StopMode;
        let law = StickLaw::ExtendedBh {
            offspring: OffspringLaw::Geometric,
            life: LifeLaw::Pareto { alpha: 0.5 },
            age_fraction: AgeFractionLaw::Uniform,
        };
        let sticks = sample_sequence(&law, 500, &mut RngStream::new(23, 0));
        let coding = build_forest(&sticks);
        let mut rng = RngStream::new(23, 1);
        let mut pairs = 0;
        while pairs < 300 {
            let m = (rng.next_u64() % 500) as usize;
            let n = (rng.next_u64() % 500) as usize;
            let (m, n) = (m.min(n), m.max(n));
            if let MrcaOutcome::Common { depth, .. } = mrca(&coding, m, n) {
                let h = depth as f64 - 1.0;
                assert_eq!(
                    coding.spine(n).stop(h, StopMode::Closed),
                    coding.spine(m).stop(h, StopMode::Closed),
                    "({m},{n})"
                );
                pairs += 1;
            }
        }
    }

    #[test]
    fn contour_consistency_at_jumps() {
        let law = StickLaw::FiniteVarianceHeavyAge {
            offspring: OffspringLaw::Geometric,
            age_tail: 0.6,
            life_tail: 0.5,
        };
        let sticks = sample_sequence(&law, 300, &mut RngStream::new(31, 0));
        let coding = build_forest(&sticks);
        for n in 0..coding.len() - 1 {
            // right-continuity: at the jump instant V(n) the particle starts
            // the next individual's edge
            let (c_star, x) = coding.contour(coding.renewal_value(n)).unwrap();
            assert_eq!(c_star, coding.birth(n + 1));
            assert_eq!(x, 0.0);
        }
        // the offset never exceeds the edge being visited
        let mut rng = RngStream::new(31, 1);
        for _ in 0..2000 {
            let t = rng.next_f64() * coding.total_life() * 0.999;
            let n = coding.renewal_inverse(t).unwrap();
            let (_, x) = coding.contour(t).unwrap();
            assert!(x >= 0.0 && x < coding.life(n));
        }
    }

    #[test]
    fn geometry_worked_example() {
        let coding = worked_coding();
        let geo = export_geometry(&coding);
        assert_eq!(geo.segments.len(), 10);
        assert_eq!(geo.segments[5], (5.0, 0.5, 4.5));
        assert!(geo.contour_polyline.contains(&(0.0, 0.0)));
        assert!(geo.contour_polyline.contains(&(2.0, 2.0)));
        assert!(geo.contour_polyline.contains(&(3.5, 2.7)));

        let empty = export_geometry(&build_forest(&[]));
        assert!(empty.segments.is_empty() && empty.contour_polyline.is_empty());
    }

    /// CPU time of the calling thread, immune to the other test threads.
    fn thread_cpu_seconds() -> f64 {
        let mut ts = libc::timespec {
            tv_sec: 0,
            tv_nsec: 0,
        };
        unsafe {
            libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts);
        }
        ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
    }

    #[test]
    fn construction_is_amortized_linear() {
        let law = StickLaw::ExtendedBh {
            offspring: OffspringLaw::Geometric,
            life: LifeLaw::Pareto { alpha: 0.5 },
            age_fraction: AgeFractionLaw::Uniform,
        };
        // sizes past cache saturation, so the comparison sees algorithmic
        // growth rather than the memory hierarchy
        let small = sample_sequence(&law, 100_000, &mut RngStream::new(41, 0));
        let large = sample_sequence(&law, 400_000, &mut RngStream::new(41, 1));
        std::hint::black_box(build_forest(&small));
        std::hint::black_box(build_forest(&large));
        // interleave the two sizes and keep the per-size minimum, so load
        // spikes from the other test threads cannot skew one side only
        let mut small_time = f64::INFINITY;
        let mut large_time = f64::INFINITY;
        for _ in 0..8 {
            let t0 = thread_cpu_seconds();
            std::hint::black_box(build_forest(&small));
            let t1 = thread_cpu_seconds();
            std::hint::black_box(build_forest(&large));
            let t2 = thread_cpu_seconds();
            small_time = small_time.min(t1 - t0);
            large_time = large_time.min(t2 - t1);
        }
        let small_time = small_time.max(1e-3);
        // 4x the input: linear predicts 4x the time, quadratic 16x
        assert!(
            large_time < small_time * 10.0,
            "4x input took {large_time}s vs {small_time}s"
        );
    }
}
