//! Probabilistic record linkage of historical birth records into a
//! genealogical network, plus the homogamy analysis built on top of it.

pub mod candidates;
pub mod collective;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod homogamy;
pub mod learner;
pub mod pipeline;
pub mod probmodel;
pub mod records;
pub mod synthgen;

pub use error::{Error, Result};
pub use records::{RecordIx, Role};
