//! Dynamic network loading and dynamic Wardrop equilibrium.

pub mod arc;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod loading;
pub mod measure;
pub mod network;
pub mod oracle;

pub use error::{Error, Result};
