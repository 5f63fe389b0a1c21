//! Path-functional evaluation on the lattice.
//!
//! Expectations of nonlinear path functionals (running suprema, hitting
//! times) are not nodewise sums, so they are computed by visiting lattice
//! paths: exhaustively when the path count is small, otherwise by seeded
//! sampling under the lattice measure.  Linear functionals stay exact
//! nodewise sums and do not come through here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::lattice::BrownianLattice;

/// How paths are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathIteration {
    /// All `2^(d n)` paths with their exact weights.
    Enumerate,
    /// Seeded random walks under the lattice measure, weight `1/count`.
    Sample { count: usize, seed: u64 },
}

/// Enumerates exactly when the full path count stays at or below `2^18`.
pub fn auto_mode(lattice: &BrownianLattice) -> PathIteration {
    let bits = lattice.dim() * lattice.n_steps();
    if bits <= 18 {
        PathIteration::Enumerate
    } else {
        PathIteration::Sample {
            count: 8192,
            seed: 0x5eed_0001,
        }
    }
}

/// Calls `visit(nodes, weight)` per path, where `nodes[k]` is the node index
/// at step `k` (length `n_steps + 1`).
pub fn for_each_path(
    lattice: &BrownianLattice,
    mode: PathIteration,
    mut visit: impl FnMut(&[usize], f64),
) {
    let n = lattice.n_steps();
    let branches = lattice.branch_count();
    let mut nodes = vec![0usize; n + 1];
    match mode {
        PathIteration::Enumerate => {
            let total: u64 = (branches as u64).pow(n as u32);
            let weight = (1.0 / branches as f64).powi(n as i32);
            for code in 0..total {
                let mut c = code;
                let mut node = 0usize;
                nodes[0] = 0;
                for (k, slot) in nodes.iter_mut().enumerate().skip(1) {
                    let ups = (c % branches as u64) as usize;
                    c /= branches as u64;
                    node = lattice.child_index(k - 1, node, ups);
                    *slot = node;
                }
                visit(&nodes, weight);
            }
        }
        PathIteration::Sample { count, seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let weight = 1.0 / count as f64;
            for _ in 0..count {
                let mut node = 0usize;
                nodes[0] = 0;
                for k in 1..=n {
                    let ups: usize = rng.random_range(0..branches);
                    node = lattice.child_index(k - 1, node, ups);
                    nodes[k] = node;
                }
                visit(&nodes, weight);
            }
        }
    }
}

/// `E[(sup_k |v(k, node_k)|)^beta]` along paths.
pub fn expected_sup_pow(
    lattice: &BrownianLattice,
    mode: PathIteration,
    beta: f64,
    v: impl Fn(usize, usize) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for_each_path(lattice, mode, |nodes, w| {
        let mut m = 0.0f64;
        for (k, &node) in nodes.iter().enumerate() {
            m = m.max(v(k, node).abs());
        }
        acc += w * m.powf(beta);
    });
    acc
}

/// `E[(sum_k q(k, node_k) dt)^(beta/2)]` over the step layers `0..n`, for a
/// nonnegative quadratic integrand `q` (e.g. `|Z|^2`).
pub fn expected_quadratic_pow(
    lattice: &BrownianLattice,
    mode: PathIteration,
    beta: f64,
    q: impl Fn(usize, usize) -> f64,
) -> f64 {
    let dt = lattice.grid().dt();
    let n = lattice.n_steps();
    let mut acc = 0.0;
    for_each_path(lattice, mode, |nodes, w| {
        let mut s = 0.0;
        for (k, &node) in nodes.iter().enumerate().take(n) {
            s += q(k, node) * dt;
        }
        acc += w * s.powf(beta / 2.0);
    });
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::process::NodeProcess;

    fn lat(n: usize) -> BrownianLattice {
        BrownianLattice::build(TimeGrid::new(1.0, n).unwrap(), 1).unwrap()
    }

    #[test]
    fn enumeration_weights_sum_to_one() {
        for d in 1..=2usize {
            let lattice =
                BrownianLattice::build(TimeGrid::new(1.0, 4).unwrap(), d).unwrap();
            let mut total = 0.0;
            for_each_path(&lattice, PathIteration::Enumerate, |_, w| total += w);
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_visit_distribution_matches_node_weights() {
        let lattice = lat(6);
        let mut mass = vec![0.0; lattice.node_count(6)];
        for_each_path(&lattice, PathIteration::Enumerate, |nodes, w| {
            mass[nodes[6]] += w;
        });
        let weights = lattice.weights(6);
        for (a, b) in mass.iter().zip(&weights) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_sup_enumeration() {
        // |B| on the unit one-step grid: sup over each path is 1
        let lattice = lat(1);
        let y = NodeProcess::from_fn(&lattice, |_, _, s| s[0]);
        let v = expected_sup_pow(&lattice, PathIteration::Enumerate, 0.5, |k, node| {
            y.at(k, node)
        });
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible_and_close_to_enumeration() {
        let lattice = lat(10);
        let y = NodeProcess::from_fn(&lattice, |_, _, s| s[0]);
        let exact = expected_sup_pow(&lattice, PathIteration::Enumerate, 0.5, |k, n| {
            y.at(k, n)
        });
        let mode = PathIteration::Sample {
            count: 20_000,
            seed: 7,
        };
        let est = expected_sup_pow(&lattice, mode, 0.5, |k, n| y.at(k, n));
        let est2 = expected_sup_pow(&lattice, mode, 0.5, |k, n| y.at(k, n));
        assert_eq!(est.to_bits(), est2.to_bits());
        assert!((est - exact).abs() < 0.03, "{est} vs {exact}");
    }
}
