//! Per-path fBm sampling. Path `p` depends only on `(seed, p)`, so batches can
//! be produced in parallel and in any order.

use fhjm_core::fbm::{brownian_path_increments, CholeskySampler, PolygonalWeights, VolterraWeights};
use fhjm_core::{FbmMethod, FbmPathSet, HurstParam, TimeGrid};
use rayon::prelude::*;

use crate::config::MonteCarloConfig;
use crate::error::{numerics, CliError};

/// Paths handed to a worker at once.
pub const BATCH: usize = 1024;

enum Sampler {
    Cholesky(CholeskySampler),
    Volterra(VolterraWeights),
    Polygonal(PolygonalWeights),
}

pub struct PathSource {
    grid: TimeGrid,
    dims: usize,
    seed: u64,
    method: FbmMethod,
    jitter: Option<f64>,
    sampler: Sampler,
}

impl PathSource {
    pub fn new(grid: TimeGrid, h: HurstParam, dims: usize, mc: &MonteCarloConfig) -> Result<Self, CliError> {
        let mut jitter = None;
        let sampler = match mc.method {
            FbmMethod::Cholesky => {
                let s = CholeskySampler::new(grid, h).map_err(numerics)?;
                jitter = s.jitter();
                Sampler::Cholesky(s)
            }
            FbmMethod::Volterra => Sampler::Volterra(VolterraWeights::new(grid, h)),
            FbmMethod::Polygonal => {
                Sampler::Polygonal(PolygonalWeights::new(grid, h, mc.coarse_factor.unwrap_or(1)).map_err(numerics)?)
            }
        };
        Ok(Self {
            grid,
            dims,
            seed: mc.seed,
            method: mc.method,
            jitter,
            sampler,
        })
    }

    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    /// `d x (n+1)` block of path `p`.
    pub fn block(&self, p: u64) -> Vec<f64> {
        let n = self.grid.n_steps();
        match &self.sampler {
            Sampler::Cholesky(s) => s.sample_path(self.dims, self.seed, p),
            Sampler::Volterra(w) => {
                let incr = brownian_path_increments(&self.grid, self.dims, self.seed, p);
                incr.chunks(n).flat_map(|c| w.apply(c)).collect()
            }
            Sampler::Polygonal(w) => {
                let incr = brownian_path_increments(&self.grid, self.dims, self.seed, p);
                incr.chunks(n).flat_map(|c| w.apply(c)).collect()
            }
        }
    }

    /// A one-path set holding `block`, for the per-path core routines.
    pub fn single(&self, block: Vec<f64>) -> Result<FbmPathSet, CliError> {
        FbmPathSet::from_paths(self.grid, self.dims, vec![block], self.seed, self.method, self.jitter).map_err(numerics)
    }

    /// Runs `f` on every path of `0..n_paths` in parallel batches and hands the
    /// results to `sink` in path order.
    pub fn for_each_ordered<T, F, S>(&self, n_paths: usize, f: F, mut sink: S) -> Result<(), CliError>
    where
        T: Send,
        F: Fn(u64, Vec<f64>) -> Result<T, CliError> + Sync,
        S: FnMut(u64, T) -> Result<(), CliError>,
    {
        let mut start = 0usize;
        while start < n_paths {
            let end = (start + BATCH).min(n_paths);
            let out: Vec<Result<T, CliError>> = (start..end)
                .into_par_iter()
                .map(|p| f(p as u64, self.block(p as u64)))
                .collect();
            for (p, r) in (start..end).zip(out) {
                sink(p as u64, r?)?;
            }
            start = end;
        }
        Ok(())
    }
}
