//! Independent dynamic-programming oracles for the driver-free problems.
//!
//! These recursions share no code with the reflected solvers: the averaging
//! loop is written out by hand so the oracle stays an independent check of
//! the engine's fixed-point and projection machinery.

use crate::error::Result;
use crate::forcing::TerminalCondition;
use crate::lattice::BrownianLattice;
use crate::process::{BarrierPair, EvalPoint, NodeProcess, Obstacle};

fn barrier_value(
    lattice: &BrownianLattice,
    obstacle: &Obstacle,
    step: usize,
    node: usize,
) -> Option<f64> {
    let mut buf = [0.0; 2];
    let state = lattice.state(step, node, &mut buf);
    let p = EvalPoint {
        step,
        loc: node,
        t: lattice.grid().t(step),
        state,
    };
    obstacle.value_at(&p)
}

/// Optimal-stopping value: `Y_k = max(L_k, E[Y_{k+1}])`, `Y_N = ξ`.
pub fn snell_oracle(
    lattice: &BrownianLattice,
    xi: &TerminalCondition,
    lower: &Obstacle,
) -> Result<NodeProcess> {
    let n = lattice.n_steps();
    let mut y = NodeProcess::zeros_on(lattice);
    y.set_step(n, xi.values().to_vec());
    for step in (0..n).rev() {
        let next = y.step_values(step + 1).to_vec();
        let mut layer = Vec::with_capacity(lattice.node_count(step));
        for node in 0..lattice.node_count(step) {
            let mut e = 0.0;
            lattice.for_each_child(step, node, |child, p, _| {
                e += p * next[child];
            });
            let v = match barrier_value(lattice, lower, step, node) {
                Some(l) => e.max(l),
                None => e,
            };
            layer.push(v);
        }
        y.set_step(step, layer);
    }
    Ok(y)
}

/// Two-player stopping value: `Y_k = clamp(E[Y_{k+1}], L_k, U_k)`, `Y_N = ξ`.
pub fn dynkin_oracle(
    lattice: &BrownianLattice,
    xi: &TerminalCondition,
    barriers: &BarrierPair,
) -> Result<NodeProcess> {
    barriers.validate_on(lattice)?;
    let n = lattice.n_steps();
    let mut y = NodeProcess::zeros_on(lattice);
    y.set_step(n, xi.values().to_vec());
    for step in (0..n).rev() {
        let next = y.step_values(step + 1).to_vec();
        let mut layer = Vec::with_capacity(lattice.node_count(step));
        for node in 0..lattice.node_count(step) {
            let mut e = 0.0;
            lattice.for_each_child(step, node, |child, p, _| {
                e += p * next[child];
            });
            let mut v = e;
            if let Some(l) = barrier_value(lattice, &barriers.lower, step, node) {
                v = v.max(l);
            }
            if let Some(u) = barrier_value(lattice, &barriers.upper, step, node) {
                v = v.min(u);
            }
            layer.push(v);
        }
        y.set_step(step, layer);
    }
    Ok(y)
}
