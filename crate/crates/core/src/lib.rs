//! Linear algebra over `F_p`, truncated log polynomial rings, Higgs and flat
//! modules with their intersection complexes, the inverse Cartier transform
//! and the periodic-flow checks built on them.

#![allow(clippy::needless_range_loop)]

pub mod cartier;
pub mod complexes;
pub mod flows;
pub mod fplin;
pub mod modcx;
pub mod trunc_ring;

pub use cartier::{CartierError, CechDatum, LiftingDatum};
pub use complexes::{BasedComplex, ComplexError, FilteredComplex, FiltrationMode};
pub use flows::{FlowError, PeriodicWitness};
pub use fplin::{FieldSpec, LinAlgError, Matrix, SparseMatrix, SparseVec, Subspace};
pub use modcx::{Filtration, FlatModule, GradedHiggs, HiggsModule, LinearModule, ModError};
pub use trunc_ring::{RingElement, RingError, RingPair, TruncRing};
