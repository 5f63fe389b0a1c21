//! Node-indexed processes, adapted scalar coefficients and barrier wrappers.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::BrownianLattice;

/// Where a driver or coefficient is being evaluated.
///
/// `loc` is a node index on the lattice backend and a path index on the Monte
/// Carlo backend; node-backed data is only meaningful on its own lattice.
#[derive(Debug, Clone, Copy)]
pub struct EvalPoint<'a> {
    pub step: usize,
    pub loc: usize,
    pub t: f64,
    pub state: &'a [f64],
}

impl<'a> EvalPoint<'a> {
    /// Detached probe point, for function-backed data only.
    pub fn probe(t: f64, state: &'a [f64]) -> Self {
        Self {
            step: 0,
            loc: 0,
            t,
            state,
        }
    }
}

/// Scalar adapted process sampled on every lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProcess {
    values: Vec<Vec<f64>>,
}

impl NodeProcess {
    pub fn zeros_on(lattice: &BrownianLattice) -> Self {
        let n = lattice.n_steps();
        Self {
            values: (0..=n).map(|k| vec![0.0; lattice.node_count(k)]).collect(),
        }
    }

    pub fn from_fn(
        lattice: &BrownianLattice,
        mut f: impl FnMut(usize, f64, &[f64]) -> f64,
    ) -> Self {
        let n = lattice.n_steps();
        let mut values = Vec::with_capacity(n + 1);
        let mut buf = [0.0; 2];
        for k in 0..=n {
            let t = lattice.grid().t(k);
            let mut layer = Vec::with_capacity(lattice.node_count(k));
            for node in 0..lattice.node_count(k) {
                let s = lattice.state(k, node, &mut buf);
                layer.push(f(k, t, s));
            }
            values.push(layer);
        }
        Self { values }
    }

    pub fn constant(lattice: &BrownianLattice, c: f64) -> Self {
        Self::from_fn(lattice, |_, _, _| c)
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step_values(&self, step: usize) -> &[f64] {
        &self.values[step]
    }

    pub fn step_values_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.values[step]
    }

    pub fn set_step(&mut self, step: usize, vals: Vec<f64>) {
        self.values[step] = vals;
    }

    pub fn at(&self, step: usize, node: usize) -> f64 {
        self.values[step][node]
    }

    /// Largest absolute nodewise difference against another process.
    pub fn sup_distance(&self, other: &NodeProcess) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    /// First node where `self < other - tol`, if any.
    pub fn first_below(&self, other: &NodeProcess, tol: f64) -> Option<(usize, usize, f64)> {
        for (k, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            for (node, (x, y)) in a.iter().zip(b).enumerate() {
                if *x < *y - tol {
                    return Some((k, node, y - x));
                }
            }
        }
        None
    }
}

/// Vector-valued process (`d` entries per node), used for `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorNodeProcess {
    dim: usize,
    values: Vec<Vec<f64>>,
}

impl VectorNodeProcess {
    pub fn zeros_on(lattice: &BrownianLattice) -> Self {
        let n = lattice.n_steps();
        let d = lattice.dim();
        Self {
            dim: d,
            values: (0..=n)
                .map(|k| vec![0.0; lattice.node_count(k) * d])
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set_step(&mut self, step: usize, vals: Vec<f64>) {
        self.values[step] = vals;
    }

    pub fn step_values(&self, step: usize) -> &[f64] {
        &self.values[step]
    }

    pub fn at(&self, step: usize, node: usize) -> &[f64] {
        &self.values[step][node * self.dim..(node + 1) * self.dim]
    }

    pub fn sup_distance(&self, other: &VectorNodeProcess) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Scalar coefficient process consumable by drivers on either backend.
#[derive(Clone)]
pub enum ProcessSpec {
    Constant(f64),
    /// Function of `(t, state)`.
    Fn(Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>),
    /// Data sampled on lattice nodes; valid only on the owning lattice.
    Node(Arc<NodeProcess>),
}

impl ProcessSpec {
    pub fn from_fn(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ProcessSpec::Fn(Arc::new(f))
    }

    pub fn at(&self, p: &EvalPoint) -> f64 {
        match self {
            ProcessSpec::Constant(c) => *c,
            ProcessSpec::Fn(f) => f(p.t, p.state),
            ProcessSpec::Node(np) => np.at(p.step, p.loc),
        }
    }
}

impl fmt::Debug for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessSpec::Constant(c) => write!(f, "Constant({c})"),
            ProcessSpec::Fn(_) => write!(f, "Fn(..)"),
            ProcessSpec::Node(_) => write!(f, "Node(..)"),
        }
    }
}

/// One barrier: either absent (the `±∞` sentinel, an explicit marker) or a
/// finite process.
#[derive(Debug, Clone, Default)]
pub enum Obstacle {
    #[default]
    Absent,
    Present(ProcessSpec),
}

impl Obstacle {
    pub fn present(spec: ProcessSpec) -> Self {
        Obstacle::Present(spec)
    }

    pub fn constant(c: f64) -> Self {
        Obstacle::Present(ProcessSpec::Constant(c))
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, Obstacle::Absent)
    }

    pub fn value_at(&self, p: &EvalPoint) -> Option<f64> {
        match self {
            Obstacle::Absent => None,
            Obstacle::Present(spec) => Some(spec.at(p)),
        }
    }
}

/// Lower/upper barrier pair with the ordering invariant `L <= U`.
#[derive(Debug, Clone, Default)]
pub struct BarrierPair {
    pub lower: Obstacle,
    pub upper: Obstacle,
}

impl BarrierPair {
    pub fn new(lower: Obstacle, upper: Obstacle) -> Self {
        Self { lower, upper }
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Checks `L <= U` on every node of the lattice; reports the first
    /// crossing.
    pub fn validate_on(&self, lattice: &BrownianLattice) -> Result<()> {
        let (Obstacle::Present(l), Obstacle::Present(u)) = (&self.lower, &self.upper) else {
            return Ok(());
        };
        let mut buf = [0.0; 2];
        for k in 0..=lattice.n_steps() {
            let t = lattice.grid().t(k);
            for node in 0..lattice.node_count(k) {
                let state = lattice.state(k, node, &mut buf);
                let p = EvalPoint {
                    step: k,
                    loc: node,
                    t,
                    state,
                };
                let (lv, uv) = (l.at(&p), u.at(&p));
                if lv > uv {
                    return Err(Error::CrossedBarriers {
                        step: k,
                        node,
                        lower: lv,
                        upper: uv,
                    });
                }
            }
        }
        Ok(())
    }

    /// Terminal-consistency diagnostic: nodes where `ξ` escapes `[L_T, U_T]`.
    ///
    /// Barriers constrain the solution strictly before the horizon (the
    /// terminal layer is pinned to `ξ`), so inconsistency is reported, not
    /// rejected.
    pub fn terminal_inconsistencies(
        &self,
        lattice: &BrownianLattice,
        xi: &[f64],
    ) -> Vec<(usize, f64, f64)> {
        let n = lattice.n_steps();
        let t = lattice.grid().horizon();
        let mut buf = [0.0; 2];
        let mut out = Vec::new();
        for (node, &x) in xi.iter().enumerate() {
            let state = lattice.state(n, node, &mut buf);
            let p = EvalPoint {
                step: n,
                loc: node,
                t,
                state,
            };
            if let Some(lv) = self.lower.value_at(&p) {
                if x < lv {
                    out.push((node, x, lv));
                    continue;
                }
            }
            if let Some(uv) = self.upper.value_at(&p) {
                if x > uv {
                    out.push((node, x, uv));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn lat(n: usize) -> BrownianLattice {
        BrownianLattice::build(TimeGrid::new(1.0, n).unwrap(), 1).unwrap()
    }

    #[test]
    fn node_process_covers_every_node() {
        let lattice = lat(5);
        let p = NodeProcess::from_fn(&lattice, |k, _, s| k as f64 + s[0]);
        for k in 0..=5 {
            assert_eq!(p.step_values(k).len(), lattice.node_count(k));
        }
    }

    #[test]
    fn crossed_barriers_are_reported_with_node() {
        let lattice = lat(3);
        let pair = BarrierPair::new(Obstacle::constant(1.0), Obstacle::constant(0.0));
        match pair.validate_on(&lattice) {
            Err(Error::CrossedBarriers { lower, upper, .. }) => {
                assert_eq!(lower, 1.0);
                assert_eq!(upper, 0.0);
            }
            other => panic!("expected crossing, got {other:?}"),
        }
    }

    #[test]
    fn terminal_inconsistency_is_a_diagnostic() {
        let lattice = lat(2);
        let pair = BarrierPair::new(Obstacle::constant(0.5), Obstacle::Absent);
        // xi = B_T^2 dips below L at the middle terminal node
        let xi: Vec<f64> = {
            let mut buf = [0.0; 2];
            (0..lattice.node_count(2))
                .map(|j| {
                    let s = lattice.state(2, j, &mut buf)[0];
                    s * s
                })
                .collect()
        };
        let bad = pair.terminal_inconsistencies(&lattice, &xi);
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].0, 1);
        assert!(pair.validate_on(&lattice).is_ok());
    }
}
