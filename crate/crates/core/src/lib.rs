pub mod counterexample;
pub mod error;
pub mod matrix;
pub mod model;
pub mod operator_space;
pub mod random;
pub mod sdp;
pub mod similarity;

pub use error::{Error, Result};
pub use matrix::{assemble_block, c64, cr, ComplexMatrix, C64};

/// Library version, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
