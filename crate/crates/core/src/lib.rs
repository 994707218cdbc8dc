pub mod analysis;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod estimators;
pub mod inference;
pub mod panel;
pub mod pipeline;
pub mod simplex;
pub mod staggered;

pub use error::{Error, Result};
