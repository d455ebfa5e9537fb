//! Block execution.
//!
//! Expectations are split into a fixed list of blocks whose partial results
//! are merged in block order, so the numeric result never depends on how
//! blocks are scheduled. A [`BlockRunner`] only decides *where* blocks run.

use alloc::vec::Vec;

use crate::error::Result;

pub type BlockJob<'a> = dyn Fn(usize) -> Result<Vec<f64>> + Sync + 'a;

pub trait BlockRunner: Sync {
    /// Evaluates `job(0..count)` and returns the results in index order.
    fn run_blocks(&self, count: usize, job: &BlockJob<'_>) -> Vec<Result<Vec<f64>>>;
}

/// Runs every block on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BlockRunner for Sequential {
    fn run_blocks(&self, count: usize, job: &BlockJob<'_>) -> Vec<Result<Vec<f64>>> {
        (0..count).map(job).collect()
    }
}

pub static SEQUENTIAL: Sequential = Sequential;
