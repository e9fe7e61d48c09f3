pub mod annostats;
pub mod corpus;
pub mod error;
pub mod evalmetrics;
pub mod helpfulness;
pub mod rhs;
pub mod sentiment;
pub mod textvec;

pub use error::{Error, Result};
