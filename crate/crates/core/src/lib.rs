//! Exact chain-level computations for Koszul-Tate resolutions, Chevalley-Eilenberg
//! algebras of algebroids, de Rham complexes, deformation retracts and BV charges.

pub mod algebroid;
pub mod bv;
pub mod critical_locus;
pub mod derham;
pub mod derivation;
pub mod error;
pub mod gca;
pub mod homology;
pub mod linalg;
pub mod parse;
pub mod pipeline;

pub use derivation::{Derivation, SquareZero};
pub use error::{Error, Result};
pub use gca::{Algebra, Element, GenKind, Generator, Monomial, Q};
pub use homology::{DgaPresentation, Provenance, TruncationBounds};
