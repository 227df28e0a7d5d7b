//! A desk-scale laboratory for multilingual machine translation.

pub mod corpus;
pub mod datafilter;
pub mod error;
pub mod eval;
pub mod harness;
pub mod model;
pub mod objectives;
pub mod sampler;
pub mod selftrain;
pub mod tokenizer;
pub mod train;
pub mod util;

pub use error::{Error, Result};
