pub mod belief;
pub mod error;
pub mod filter;
pub mod jumps;
pub mod models;
pub mod query;
pub mod scenario;
pub mod sde;

pub use error::{Error, Result};
