pub mod corpus;
pub mod embedding;
pub mod error;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;

pub use error::{Error, Result};
