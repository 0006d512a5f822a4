//! Vector-field machinery, null-frame decomposition and particle-in-cell
//! dynamics for the relativistic Vlasov-Maxwell system with non-zero total
//! charge.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod operators;

pub use error::{Error, Result};
