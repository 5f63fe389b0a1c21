//! Recombining binomial model of d-dimensional Brownian motion.
//!
//! Each coordinate moves by `±sqrt(dt)` with probability `1/2` per step, so
//! per-step increments have mean zero and variance `dt` exactly under the node
//! weights.  For `d = 1` step `k` carries `k + 1` nodes; for `d = 2` the
//! lattice is the coordinate product with `(k + 1)^2` nodes.  Binomial
//! branching keeps the martingale representation exact per node in one
//! dimension, which is what makes the flat-off and comparison checks sharp.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::process::{NodeProcess, VectorNodeProcess};

/// Largest supported lattice dimension; higher dimensions go through the
/// Monte Carlo backend instead.
pub const MAX_LATTICE_DIM: usize = 2;

/// Recombining lattice over a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct BrownianLattice {
    grid: TimeGrid,
    dim: usize,
    sqrt_dt: f64,
}

impl BrownianLattice {
    pub fn build(grid: TimeGrid, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_LATTICE_DIM {
            return Err(Error::DimensionTooLarge {
                dim,
                max: MAX_LATTICE_DIM,
            });
        }
        Ok(Self {
            grid,
            dim,
            sqrt_dt: grid.dt().sqrt(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    /// Number of nodes at step `k`: `(k + 1)^d`.
    pub fn node_count(&self, step: usize) -> usize {
        (step + 1).pow(self.dim as u32)
    }

    /// Per-coordinate up-move counts encoded in a node index.
    fn split_index(&self, step: usize, node: usize) -> [usize; MAX_LATTICE_DIM] {
        let base = step + 1;
        match self.dim {
            1 => [node, 0],
            _ => [node / base, node % base],
        }
    }

    /// Brownian state at a node, written into `buf`; returns the valid slice.
    pub fn state<'a>(&self, step: usize, node: usize, buf: &'a mut [f64; 2]) -> &'a [f64] {
        let ups = self.split_index(step, node);
        for c in 0..self.dim {
            buf[c] = (2.0 * ups[c] as f64 - step as f64) * self.sqrt_dt;
        }
        &buf[..self.dim]
    }

    /// Probability weight of a node at step `k` (product of binomial weights).
    pub fn node_weight(&self, step: usize, node: usize) -> f64 {
        let ups = self.split_index(step, node);
        let mut w = 1.0;
        for c in 0..self.dim {
            w *= binomial_weight(step, ups[c]);
        }
        w
    }

    /// Weight vector for a whole step, in node order.
    pub fn weights(&self, step: usize) -> Vec<f64> {
        let one_d = binomial_weights(step);
        match self.dim {
            1 => one_d,
            _ => {
                let mut out = Vec::with_capacity((step + 1) * (step + 1));
                for a in &one_d {
                    for b in &one_d {
                        out.push(a * b);
                    }
                }
                out
            }
        }
    }

    /// Child index reached from `(step, node)` by the move mask `ups`
    /// (bit `c` set = up-move in coordinate `c`).
    pub fn child_index(&self, step: usize, node: usize, ups: usize) -> usize {
        let parts = self.split_index(step, node);
        let base = step + 2;
        match self.dim {
            1 => parts[0] + (ups & 1),
            _ => (parts[0] + (ups & 1)) * base + (parts[1] + ((ups >> 1) & 1)),
        }
    }

    /// Number of branches out of every node: `2^d`.
    pub fn branch_count(&self) -> usize {
        1 << self.dim
    }

    /// Visits every child of `(step, node)` with its branch probability and
    /// Brownian increment.
    pub fn for_each_child(
        &self,
        step: usize,
        node: usize,
        mut visit: impl FnMut(usize, f64, &[f64]),
    ) {
        let ups = self.split_index(step, node);
        let child_base = step + 2;
        match self.dim {
            1 => {
                let d = self.sqrt_dt;
                visit(ups[0], 0.5, &[-d]);
                visit(ups[0] + 1, 0.5, &[d]);
            }
            _ => {
                let d = self.sqrt_dt;
                for u0 in 0..2usize {
                    for u1 in 0..2usize {
                        let child = (ups[0] + u0) * child_base + (ups[1] + u1);
                        let inc = [
                            if u0 == 1 { d } else { -d },
                            if u1 == 1 { d } else { -d },
                        ];
                        visit(child, 0.25, &inc);
                    }
                }
            }
        }
    }

    fn check_next(&self, next: &NodeProcess, step: usize) -> Result<()> {
        if step >= self.n_steps() {
            return Err(Error::StepOutOfRange {
                step,
                n_steps: self.n_steps(),
            });
        }
        let want = self.node_count(step + 1);
        let got = next.step_values(step + 1).len();
        if got != want {
            return Err(Error::ShapeMismatch {
                expected: want,
                got,
            });
        }
        for (node, v) in next.step_values(step + 1).iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    step: step + 1,
                    node,
                });
            }
        }
        Ok(())
    }

    /// One-step conditional expectation: averages the children of each
    /// step-`k` node.  Linear in `next`.
    pub fn conditional_expectation(&self, next: &NodeProcess, step: usize) -> Result<Vec<f64>> {
        self.check_next(next, step)?;
        let vals = next.step_values(step + 1);
        let mut out = vec![0.0; self.node_count(step)];
        for (node, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            self.for_each_child(step, node, |child, p, _| {
                acc += p * vals[child];
            });
            *slot = acc;
        }
        Ok(out)
    }

    /// Discrete martingale coefficient `Z_k := E[next * dB | node] / dt`.
    ///
    /// For `d = 1` this is `(v_up - v_down) / (2 sqrt(dt))` and the branch
    /// values are reproduced exactly by `E[next] + Z * dB`.
    pub fn martingale_coefficient(&self, next: &NodeProcess, step: usize) -> Result<Vec<f64>> {
        self.check_next(next, step)?;
        let vals = next.step_values(step + 1);
        let dt = self.grid.dt();
        let d = self.dim;
        let mut out = vec![0.0; self.node_count(step) * d];
        for node in 0..self.node_count(step) {
            let slot = &mut out[node * d..(node + 1) * d];
            self.for_each_child(step, node, |child, p, inc| {
                for (c, z) in slot.iter_mut().enumerate() {
                    *z += p * vals[child] * inc[c] / dt;
                }
            });
        }
        Ok(out)
    }

    /// Conditional expectation packaged as a step assignment of a process.
    pub fn conditional_expectation_process(
        &self,
        next: &NodeProcess,
        step: usize,
    ) -> Result<NodeProcess> {
        let mut p = NodeProcess::zeros_on(self);
        let vals = self.conditional_expectation(next, step)?;
        p.set_step(step, vals);
        // carry the source layer so the result is inspectable on both steps
        p.set_step(step + 1, next.step_values(step + 1).to_vec());
        Ok(p)
    }

    /// Martingale coefficients packaged as a vector-valued process layer.
    pub fn martingale_coefficient_process(
        &self,
        next: &NodeProcess,
        step: usize,
    ) -> Result<VectorNodeProcess> {
        let mut p = VectorNodeProcess::zeros_on(self);
        let vals = self.martingale_coefficient(next, step)?;
        p.set_step(step, vals);
        Ok(p)
    }
}

/// Binomial weights `C(k, j) 2^{-k}` computed by the multiplicative
/// recurrence; `w_0 = 2^{-k}` is exactly representable.
pub fn binomial_weights(step: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(step + 1);
    let mut cur = 0.5f64.powi(step as i32);
    w.push(cur);
    for j in 1..=step {
        cur *= (step - j + 1) as f64 / j as f64;
        w.push(cur);
    }
    w
}

fn binomial_weight(step: usize, j: usize) -> f64 {
    let mut cur = 0.5f64.powi(step as i32);
    for i in 1..=j {
        cur *= (step - i + 1) as f64 / i as f64;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_lattice(n: usize, d: usize) -> BrownianLattice {
        BrownianLattice::build(TimeGrid::new(1.0, n).unwrap(), d).unwrap()
    }

    #[test]
    fn one_step_is_a_coin_flip() {
        let lat = unit_lattice(1, 1);
        assert_eq!(lat.node_count(1), 2);
        let mut buf = [0.0; 2];
        assert_eq!(lat.state(1, 0, &mut buf), &[-1.0]);
        assert_eq!(lat.state(1, 1, &mut buf), &[1.0]);
        assert_eq!(lat.weights(1), vec![0.5, 0.5]);
    }

    #[test]
    fn two_step_recombination() {
        let lat = unit_lattice(2, 1);
        let mut buf = [0.0; 2];
        let s = 2.0 * 0.5f64.sqrt();
        let states: Vec<f64> = (0..3).map(|j| lat.state(2, j, &mut buf)[0]).collect();
        assert!((states[0] + s).abs() < 1e-15);
        assert!(states[1].abs() < 1e-15);
        assert!((states[2] - s).abs() < 1e-15);
        assert_eq!(lat.weights(2), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn rejects_large_dimension() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        assert!(matches!(
            BrownianLattice::build(grid, 3),
            Err(Error::DimensionTooLarge { .. })
        ));
        assert!(matches!(
            BrownianLattice::build(grid, 0),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn weights_sum_to_one_and_center() {
        for d in 1..=2 {
            let lat = unit_lattice(17, d);
            for k in 0..=17 {
                let w = lat.weights(k);
                let total: f64 = w.iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "step {k} total {total}");
                let mut buf = [0.0; 2];
                let mut mean = [0.0; 2];
                for (node, wi) in w.iter().enumerate() {
                    let s = lat.state(k, node, &mut buf);
                    for c in 0..d {
                        mean[c] += wi * s[c];
                    }
                }
                for c in 0..d {
                    assert!(mean[c].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn increments_have_mean_zero_variance_dt() {
        for d in 1..=2 {
            let lat = unit_lattice(9, d);
            let dt = lat.grid().dt();
            for k in 0..9 {
                for node in 0..lat.node_count(k) {
                    let mut mean = [0.0; 2];
                    let mut var = [0.0; 2];
                    let mut ptot = 0.0;
                    lat.for_each_child(k, node, |_, p, inc| {
                        ptot += p;
                        for c in 0..d {
                            mean[c] += p * inc[c];
                            var[c] += p * inc[c] * inc[c];
                        }
                    });
                    assert!((ptot - 1.0).abs() < 1e-15);
                    for c in 0..d {
                        assert!(mean[c].abs() < 1e-15);
                        assert!((var[c] - dt).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn state_is_sum_of_increments_along_paths() {
        // recombination consistency: walk a few explicit paths
        let lat = unit_lattice(6, 1);
        let mut buf = [0.0; 2];
        for mask in 0u32..64 {
            let mut node = 0usize;
            let mut acc = 0.0;
            for k in 0..6 {
                let up = (mask >> k) & 1 == 1;
                let mut next = node;
                let mut inc_taken = 0.0;
                lat.for_each_child(k, node, |child, _, inc| {
                    let is_up = inc[0] > 0.0;
                    if is_up == up {
                        next = child;
                        inc_taken = inc[0];
                    }
                });
                acc += inc_taken;
                node = next;
            }
            let s = lat.state(6, node, &mut buf)[0];
            assert!((s - acc).abs() < 1e-12);
        }
    }
}
