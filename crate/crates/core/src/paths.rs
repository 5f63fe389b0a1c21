//! Sampled Brownian path bundles for the Monte Carlo backend.
//!
//! Increments are drawn from a ChaCha20 stream (a counter-based generator, so
//! bundles are reproducible bit-for-bit across platforms from the seed alone)
//! pushed through the standard-normal sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// A bundle of `n_paths` sampled Brownian paths on a grid.
#[derive(Debug, Clone)]
pub struct PathBundle {
    grid: TimeGrid,
    dim: usize,
    n_paths: usize,
    seed: u64,
    /// `[path][step][coord]`, flattened.
    increments: Vec<f64>,
    /// Cumulative states `[path][grid point][coord]`, flattened; `B_0 = 0`.
    states: Vec<f64>,
}

/// Draws a seeded bundle of Gaussian increments with variance `dt`.
pub fn sample_paths(grid: TimeGrid, dim: usize, n_paths: usize, seed: u64) -> Result<PathBundle> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let n = grid.n_steps();
    let scale = grid.dt().sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut increments = Vec::with_capacity(n_paths * n * dim);
    let mut states = vec![0.0; n_paths * (n + 1) * dim];
    for path in 0..n_paths {
        for step in 0..n {
            for coord in 0..dim {
                let g: f64 = StandardNormal.sample(&mut rng);
                let db = g * scale;
                increments.push(db);
                let idx = (path * (n + 1) + step + 1) * dim + coord;
                let prev = states[(path * (n + 1) + step) * dim + coord];
                states[idx] = prev + db;
            }
        }
    }
    Ok(PathBundle {
        grid,
        dim,
        n_paths,
        seed,
        increments,
        states,
    })
}

impl PathBundle {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment `dB` of `path` over `[t_step, t_{step+1}]`.
    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let n = self.grid.n_steps();
        let idx = (path * n + step) * self.dim;
        &self.increments[idx..idx + self.dim]
    }

    /// Brownian state of `path` at grid point `k`.
    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let idx = (path * (self.grid.n_steps() + 1) + k) * self.dim;
        &self.states[idx..idx + self.dim]
    }

    /// Exact equality of the raw increment arrays.
    pub fn bitwise_eq(&self, other: &PathBundle) -> bool {
        self.increments.len() == other.increments.len()
            && self
                .increments
                .iter()
                .zip(&other.increments)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
