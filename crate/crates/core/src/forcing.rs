//! Terminal data and finite-variation forcing terms.

use crate::error::{Error, Result};
use crate::generator::expr::{Expr, ExprCtx};
use crate::grid::TimeGrid;
use crate::lattice::BrownianLattice;

/// Terminal condition `ξ`, one value per terminal node.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCondition {
    values: Vec<f64>,
}

impl TerminalCondition {
    pub fn from_values(lattice: &BrownianLattice, values: Vec<f64>) -> Result<Self> {
        let want = lattice.node_count(lattice.n_steps());
        if values.len() != want {
            return Err(Error::ShapeMismatch {
                expected: want,
                got: values.len(),
            });
        }
        for (node, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    step: lattice.n_steps(),
                    node,
                });
            }
        }
        Ok(Self { values })
    }

    pub fn from_fn(lattice: &BrownianLattice, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let n = lattice.n_steps();
        let mut buf = [0.0; 2];
        let values = (0..lattice.node_count(n))
            .map(|node| f(lattice.state(n, node, &mut buf)))
            .collect();
        Self { values }
    }

    pub fn from_expr(lattice: &BrownianLattice, expr: &Expr) -> Self {
        let t = lattice.grid().horizon();
        Self::from_fn(lattice, |state| expr.eval(&ExprCtx::data(t, state)))
    }

    pub fn constant(lattice: &BrownianLattice, c: f64) -> Self {
        Self::from_fn(lattice, |_| c)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Expected absolute terminal value under the lattice measure.
    pub fn mean_abs(&self, lattice: &BrownianLattice) -> f64 {
        let w = lattice.weights(lattice.n_steps());
        w.iter().zip(&self.values).map(|(w, v)| w * v.abs()).sum()
    }
}

/// Finite-variation forcing `V`: signed increments `ΔV_k` applied at the
/// left endpoint of each step, with the positive/negative split available
/// per entry (`ΔV = ΔV⁺ − ΔV⁻`, `min(ΔV⁺, ΔV⁻) = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingTerm {
    data: ForcingData,
}

#[derive(Debug, Clone, PartialEq)]
enum ForcingData {
    Zero(usize),
    PerStep(Vec<f64>),
    PerNode(Vec<Vec<f64>>),
}

impl ForcingTerm {
    pub fn zero(n_steps: usize) -> Self {
        Self {
            data: ForcingData::Zero(n_steps),
        }
    }

    pub fn per_step(deltas: Vec<f64>) -> Self {
        Self {
            data: ForcingData::PerStep(deltas),
        }
    }

    pub fn per_node(deltas: Vec<Vec<f64>>) -> Self {
        Self {
            data: ForcingData::PerNode(deltas),
        }
    }

    /// Deterministic forcing from a cumulative path `t -> V(t)`:
    /// `ΔV_k = V(t_{k+1}) - V(t_k)`.
    pub fn from_cumulative(grid: &TimeGrid, v: impl Fn(f64) -> f64) -> Self {
        let deltas = (0..grid.n_steps())
            .map(|k| v(grid.t(k + 1)) - v(grid.t(k)))
            .collect();
        Self::per_step(deltas)
    }

    pub fn n_steps(&self) -> usize {
        match &self.data {
            ForcingData::Zero(n) => *n,
            ForcingData::PerStep(d) => d.len(),
            ForcingData::PerNode(d) => d.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.data, ForcingData::Zero(_))
    }

    pub fn delta(&self, step: usize, loc: usize) -> f64 {
        match &self.data {
            ForcingData::Zero(_) => 0.0,
            ForcingData::PerStep(d) => d[step],
            ForcingData::PerNode(d) => d[step][loc],
        }
    }

    pub fn delta_pos(&self, step: usize, loc: usize) -> f64 {
        self.delta(step, loc).max(0.0)
    }

    pub fn delta_neg(&self, step: usize, loc: usize) -> f64 {
        (-self.delta(step, loc)).max(0.0)
    }

    /// Total variation `Σ (ΔV⁺ + ΔV⁻)`; exact for deterministic forcing,
    /// an upper bound (stepwise worst node) for node-indexed forcing.
    pub fn total_variation(&self) -> f64 {
        match &self.data {
            ForcingData::Zero(_) => 0.0,
            ForcingData::PerStep(d) => d.iter().map(|x| x.abs()).sum(),
            ForcingData::PerNode(d) => d
                .iter()
                .map(|layer| layer.iter().fold(0.0f64, |m, x| m.max(x.abs())))
                .sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    #[test]
    fn split_has_disjoint_support_and_total_variation_adds() {
        let f = ForcingTerm::per_step(vec![0.5, -0.25, 0.0, 1.0]);
        let mut tv = 0.0;
        for k in 0..4 {
            let (p, n) = (f.delta_pos(k, 0), f.delta_neg(k, 0));
            assert!(p >= 0.0 && n >= 0.0);
            assert_eq!(p.min(n), 0.0);
            assert_eq!(p - n, f.delta(k, 0));
            tv += p + n;
        }
        assert_eq!(tv, f.total_variation());
        assert_eq!(tv, 1.75);
    }

    #[test]
    fn cumulative_forcing_telescopes() {
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let f = ForcingTerm::from_cumulative(&grid, |t| 0.3 * t * t);
        let total: f64 = (0..8).map(|k| f.delta(k, 0)).sum();
        assert!((total - 0.3 * 4.0).abs() < 1e-14);
    }
}
