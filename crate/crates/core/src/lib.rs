//! Exact simulation of rank-one cutting-and-stacking transformations and of
//! their products.
//!
//! The space is the union of all columns `C_n`; a level of `C_n` is a
//! [`Cell`], finite unions of cells are [`CellSet`]s, and `T` acts exactly on
//! them. Every measure is an exact rational.

pub mod cell;
pub mod harness;
pub mod lemma;
pub mod oracle;
pub mod point;
pub mod product;
pub mod ratio;
pub mod rule;

pub use cell::{Ancestry, Cell, CellError, CellSet};
pub use lemma::{CrescentPiece, CrescentReport, DoubleApprox, LemmaError, Placement};
pub use oracle::{build_embedding, check_equivalence, Embedding, EmbeddingTable, EquivalenceReport, OracleError};
pub use point::{PointAddress, PointError};
pub use product::{ExponentVector, ProductError, RectSet, Rectangle};
pub use rule::{validate_rule, Layout, Rule, RuleError, RuleSpec, Segment, PAPER_PRESET};
