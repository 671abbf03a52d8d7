//! Simulation and verification laboratory for chronological ("stick")
//! forests.
//!
//! A stick is a pair `(V, P)`: a life length and the point measure of ages
//! at which an individual begets children. An i.i.d. sequence of sticks
//! encodes a planar forest by grafting each new stick onto the highest
//! available stub. This crate builds those forests, computes every coding
//! process attached to them (Lukasiewicz path, ladder triple, genealogical
//! and chronological heights, spine, renewal and contour processes), checks
//! the exact finite-`n` identities relating them, and runs the scaling-limit
//! experiments (stable marginals, asymptotic-independence conditions,
//! Bellman–Harris universality) at desk scale.

pub mod forest;
pub mod luka;
pub mod measure;
pub mod numeric;
pub mod rng;
pub mod scaling;
pub mod stats;
pub mod stick;

pub use measure::{StopMode, UnitAtomMeasure, WeightedMeasure};
pub use rng::RngStream;
pub use stick::{Stick, StickLaw};
