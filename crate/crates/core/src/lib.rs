pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod objective;
pub mod pca;
pub mod policy;
pub mod temporal;
pub mod trainer;

pub use error::{Error, Result};

/// Worker threads for parallel sections: `METRA_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("METRA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
