//! Stratified gradient sampling (SGS) for objectives that are smooth on the cells
//! of a stratification, with a persistent-homology backend for losses defined on
//! barcodes of lower-star filtrations.
//!
//! Module map:
//! - [`complex`]: simplicial complexes, filters, lower-star orders.
//! - [`persistence`]: ordinary and extended barcodes with vertex attribution.
//! - [`metrics`]: diagram distances, total persistence and barcode losses.
//! - [`strata`]: the permutation stratification and its Cayley-graph oracle.
//! - [`optim`]: SGS, its Lipschitz variant, min-norm point and baselines.
//! - [`objectives`]: ready-made stratified objectives.

pub mod complex;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod persistence;
pub mod strata;

pub use complex::{Direction, FilterVector, SimplicialComplex};
pub use persistence::{Barcode, Interval, IntervalKind, PersistenceMode};
