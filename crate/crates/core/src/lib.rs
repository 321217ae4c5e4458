pub mod error;
pub mod geometry;
pub mod grid;
pub mod image_io;
pub mod par;
pub mod raster;

pub use error::{Error, Result};
pub use grid::{Grid, LatentGrid};
pub use par::Execution;
pub mod denoiser;
pub mod pipeline;
pub mod schedule;
pub mod selfcheck;
pub mod uvdiff;
