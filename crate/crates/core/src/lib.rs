#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diffmath;
pub mod encoders;
pub mod error;
pub mod features;
pub mod objectives;
pub mod oracle;
pub mod seed;
pub mod tgraph;
pub mod trainer;

mod binio;

pub use error::{Error, Result};
