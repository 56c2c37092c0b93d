pub mod anatomy;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod losses;
pub mod measurement;
pub mod metrics;
pub mod phantom;
pub mod preprocess;
pub mod report;
pub mod staging;

pub use error::{Error, Result};
