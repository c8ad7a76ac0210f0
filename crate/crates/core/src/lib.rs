pub mod analytical;
pub mod error;
mod interp;
pub mod model;
pub mod montecarlo;
pub mod quad;
pub mod special_fn;

pub use error::{Error, Result};
