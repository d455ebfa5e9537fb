//! Thread-pool block runner.

use netimmse_core::exec::{BlockJob, BlockRunner};
use netimmse_core::Result;
use rayon::prelude::*;

/// Runs blocks on a dedicated rayon pool; results come back in block order.
pub struct PoolRunner {
    pool: rayon::ThreadPool,
}

impl PoolRunner {
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl BlockRunner for PoolRunner {
    fn run_blocks(&self, count: usize, job: &BlockJob<'_>) -> Vec<Result<Vec<f64>>> {
        self.pool.install(|| (0..count).into_par_iter().map(job).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use netimmse_core::exec::SEQUENTIAL;

    #[test]
    fn order_matches_sequential() {
        let job = |b: usize| -> Result<Vec<f64>> { Ok(vec![b as f64 * 0.1, (b * b) as f64]) };
        let pool = PoolRunner::new(4).unwrap();
        let a = pool.run_blocks(100, &job);
        let b = SEQUENTIAL.run_blocks(100, &job);
        assert_eq!(a, b);
    }
}
