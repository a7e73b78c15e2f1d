//! Ridge-type shrinkage, pretest and Stein estimators for partitioned linear
//! models, with the non-central F machinery behind their exact risks and a
//! penalized-regression baseline.

pub mod cv;
pub mod data;
pub mod error;
pub mod experiments;
pub mod hd;
pub mod ld;
pub mod linalg;
pub mod ncf;
pub mod penalized;
pub mod quad;
pub mod shrinkage;
pub mod theory;

pub use error::{Error, Result};
