//! Direct schemes for one- and two-barrier reflected equations.
//!
//! Per node the unconstrained implicit value `ŷ` is computed first, then the
//! projection assigns exactly one of the increasing increments:
//! `ŷ < L` gives `Y = L, dK = L - ŷ`; `ŷ > U` gives `Y = U, dA = ŷ - U`.
//! Clamping after the solve makes the flat-off products and the mutual
//! singularity `min(dK, dA) = 0` hold nodewise by construction.  Barriers
//! constrain the steps strictly before the horizon; the terminal layer is
//! pinned to `ξ`, and terminal inconsistency (`ξ` outside `[L_T, U_T]`) is
//! recorded as a warning, not rejected.

use crate::bsde::{
    backward_step, check_shapes, contraction_precheck, solve_bsde, NumericsConfig,
    SolveDiagnostics,
};
use crate::error::Result;
use crate::forcing::{ForcingTerm, TerminalCondition};
use crate::generator::GeneratorSpec;
use crate::lattice::BrownianLattice;
use crate::process::{BarrierPair, EvalPoint, NodeProcess, Obstacle, VectorNodeProcess};

/// Adapted quadruple `(Y, Z, K, A)`: `dk`/`da` hold the per-node increments
/// of the increasing processes (`K_0 = A_0 = 0`), and `gdt` the generator
/// increment actually applied, so
/// `Y_k = E[Y_{k+1}] + gdt_k + dV_k + dK_k - dA_k` holds exactly.
#[derive(Debug, Clone)]
pub struct SolutionQuadruple {
    pub y: NodeProcess,
    pub z: VectorNodeProcess,
    pub dk: NodeProcess,
    pub da: NodeProcess,
    pub gdt: NodeProcess,
    pub diagnostics: SolveDiagnostics,
}

impl SolutionQuadruple {
    pub fn root_value(&self) -> f64 {
        self.y.at(0, 0)
    }

    fn increment_mean_curve(lattice: &BrownianLattice, inc: &NodeProcess) -> Vec<f64> {
        let n = lattice.n_steps();
        let mut curve = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        curve.push(0.0);
        for k in 0..n {
            let w = lattice.weights(k);
            acc += w
                .iter()
                .zip(inc.step_values(k))
                .map(|(w, d)| w * d)
                .sum::<f64>();
            curve.push(acc);
        }
        curve
    }

    /// Expected cumulative `K` curve, `E[K_{t_k}]` for `k = 0..=N`.
    pub fn k_mean_curve(&self, lattice: &BrownianLattice) -> Vec<f64> {
        Self::increment_mean_curve(lattice, &self.dk)
    }

    /// Expected cumulative `A` curve.
    pub fn a_mean_curve(&self, lattice: &BrownianLattice) -> Vec<f64> {
        Self::increment_mean_curve(lattice, &self.da)
    }

    pub fn k_terminal_mean(&self, lattice: &BrownianLattice) -> f64 {
        *self.k_mean_curve(lattice).last().unwrap()
    }

    pub fn a_terminal_mean(&self, lattice: &BrownianLattice) -> f64 {
        *self.a_mean_curve(lattice).last().unwrap()
    }

    fn from_pair(pair: crate::bsde::SolutionPair, lattice: &BrownianLattice) -> Self {
        Self {
            y: pair.y,
            z: pair.z,
            gdt: pair.gdt,
            dk: NodeProcess::zeros_on(lattice),
            da: NodeProcess::zeros_on(lattice),
            diagnostics: pair.diagnostics,
        }
    }
}

/// Flat-off and mutual-singularity diagnostics of a quadruple.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FlatOffReport {
    /// `E[Σ (Y - L) dK]`
    pub kl: f64,
    /// `E[Σ (U - Y) dA]`
    pub ua: f64,
    /// Nodes with `min(dK, dA) > 0`.
    pub ortho_violations: usize,
}

/// Evaluates the flat-off products and orthogonality of a quadruple against
/// its barriers.
pub fn flat_off_report(
    lattice: &BrownianLattice,
    q: &SolutionQuadruple,
    barriers: &BarrierPair,
) -> FlatOffReport {
    let n = lattice.n_steps();
    let mut kl = 0.0;
    let mut ua = 0.0;
    let mut ortho = 0usize;
    let mut buf = [0.0; 2];
    for k in 0..n {
        let w = lattice.weights(k);
        for node in 0..lattice.node_count(k) {
            let state = lattice.state(k, node, &mut buf);
            let p = EvalPoint {
                step: k,
                loc: node,
                t: lattice.grid().t(k),
                state,
            };
            let dk = q.dk.at(k, node);
            let da = q.da.at(k, node);
            if dk.min(da) > 0.0 {
                ortho += 1;
            }
            if let Some(l) = barriers.lower.value_at(&p) {
                kl += w[node] * (q.y.at(k, node) - l) * dk;
            }
            if let Some(u) = barriers.upper.value_at(&p) {
                ua += w[node] * (u - q.y.at(k, node)) * da;
            }
        }
    }
    FlatOffReport {
        kl,
        ua,
        ortho_violations: ortho,
    }
}

fn barrier_layer(
    lattice: &BrownianLattice,
    obstacle: &Obstacle,
    step: usize,
) -> Option<Vec<f64>> {
    match obstacle {
        Obstacle::Absent => None,
        Obstacle::Present(spec) => {
            let mut buf = [0.0; 2];
            let t = lattice.grid().t(step);
            Some(
                (0..lattice.node_count(step))
                    .map(|node| {
                        let state = lattice.state(step, node, &mut buf);
                        spec.at(&EvalPoint {
                            step,
                            loc: node,
                            t,
                            state,
                        })
                    })
                    .collect(),
            )
        }
    }
}

fn terminal_warning(
    lattice: &BrownianLattice,
    barriers: &BarrierPair,
    xi: &TerminalCondition,
    diagnostics: &mut SolveDiagnostics,
) {
    let bad = barriers.terminal_inconsistencies(lattice, xi.values());
    if !bad.is_empty() {
        diagnostics.warnings.push(format!(
            "terminal data escapes the barrier band at {} node(s); first at node {} \
             (xi = {}, barrier = {})",
            bad.len(),
            bad[0].0,
            bad[0].1,
            bad[0].2
        ));
    }
}

/// Shared backward loop: solve unconstrained, then project onto the band.
fn solve_reflected(
    lattice: &BrownianLattice,
    xi: &TerminalCondition,
    g: &GeneratorSpec,
    v: &ForcingTerm,
    barriers: &BarrierPair,
    cfg: &NumericsConfig,
) -> Result<SolutionQuadruple> {
    check_shapes(lattice, xi, v)?;
    contraction_precheck(g, lattice, cfg)?;
    barriers.validate_on(lattice)?;

    let n = lattice.n_steps();
    let mut y = NodeProcess::zeros_on(lattice);
    let mut z = VectorNodeProcess::zeros_on(lattice);
    let mut dk = NodeProcess::zeros_on(lattice);
    let mut da = NodeProcess::zeros_on(lattice);
    let mut gdt = NodeProcess::zeros_on(lattice);
    let mut diagnostics = SolveDiagnostics::default();
    terminal_warning(lattice, barriers, xi, &mut diagnostics);

    y.set_step(n, xi.values().to_vec());
    for step in (0..n).rev() {
        let (mut ys, gdts, zs, outcomes) = backward_step(lattice, g, v, &y, step, cfg)?;
        let lower = barrier_layer(lattice, &barriers.lower, step);
        let upper = barrier_layer(lattice, &barriers.upper, step);
        let mut dks = vec![0.0; ys.len()];
        let mut das = vec![0.0; ys.len()];
        for node in 0..ys.len() {
            let unconstrained = ys[node];
            if let Some(l) = lower.as_ref().map(|l| l[node]) {
                if unconstrained < l {
                    ys[node] = l;
                    dks[node] = l - unconstrained;
                    continue;
                }
            }
            if let Some(u) = upper.as_ref().map(|u| u[node]) {
                if unconstrained > u {
                    ys[node] = u;
                    das[node] = unconstrained - u;
                }
            }
        }
        y.set_step(step, ys);
        dk.set_step(step, dks);
        da.set_step(step, das);
        gdt.set_step(step, gdts);
        z.set_step(step, zs);
        diagnostics.absorb_step(step, &outcomes);
    }
    Ok(SolutionQuadruple {
        y,
        z,
        dk,
        da,
        gdt,
        diagnostics,
    })
}

/// Lower-reflected equation: direct scheme, `A == 0`.
pub fn solve_rbsde_lower(
    lattice: &BrownianLattice,
    xi: &TerminalCondition,
    g: &GeneratorSpec,
    v: &ForcingTerm,
    lower: &Obstacle,
    cfg: &NumericsConfig,
) -> Result<SolutionQuadruple> {
    if lower.is_absent() {
        return Ok(SolutionQuadruple::from_pair(
            solve_bsde(lattice, xi, g, v, cfg)?,
            lattice,
        ));
    }
    let barriers = BarrierPair::new(lower.clone(), Obstacle::Absent);
    solve_reflected(lattice, xi, g, v, &barriers, cfg)
}

/// Upper-reflected equation: direct scheme, `K == 0`.
pub fn solve_rbsde_upper(
    lattice: &BrownianLattice,
    xi: &TerminalCondition,
    g: &GeneratorSpec,
    v: &ForcingTerm,
    upper: &Obstacle,
    cfg: &NumericsConfig,
) -> Result<SolutionQuadruple> {
    if upper.is_absent() {
        return Ok(SolutionQuadruple::from_pair(
            solve_bsde(lattice, xi, g, v, cfg)?,
            lattice,
        ));
    }
    let barriers = BarrierPair::new(Obstacle::Absent, upper.clone());
    solve_reflected(lattice, xi, g, v, &barriers, cfg)
}

/// Two-barrier equation: direct scheme with nodewise-exact orthogonality.
pub fn solve_drbsde(
    lattice: &BrownianLattice,
    xi: &TerminalCondition,
    g: &GeneratorSpec,
    v: &ForcingTerm,
    barriers: &BarrierPair,
    cfg: &NumericsConfig,
) -> Result<SolutionQuadruple> {
    match (&barriers.lower, &barriers.upper) {
        (Obstacle::Absent, Obstacle::Absent) => Ok(SolutionQuadruple::from_pair(
            solve_bsde(lattice, xi, g, v, cfg)?,
            lattice,
        )),
        _ => solve_reflected(lattice, xi, g, v, barriers, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::oracle::{dynkin_oracle, snell_oracle};

    fn lat(n: usize) -> BrownianLattice {
        BrownianLattice::build(TimeGrid::new(1.0, n).unwrap(), 1).unwrap()
    }

    fn cfg() -> NumericsConfig {
        NumericsConfig::default()
    }

    #[test]
    fn absent_barrier_is_plain_bsde() {
        let lattice = lat(6);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0]);
        let plain = solve_bsde(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(6),
            &cfg(),
        )
        .unwrap();
        let refl = solve_rbsde_lower(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(6),
            &Obstacle::Absent,
            &cfg(),
        )
        .unwrap();
        assert_eq!(refl.y.sup_distance(&plain.y), 0.0);
        assert_eq!(refl.k_terminal_mean(&lattice), 0.0);
    }

    #[test]
    fn two_step_snell_instance() {
        // xi = B_T^2, L = 1/2, unit two-step grid: hand DP gives Y_0 = 1
        let lattice = lat(2);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0]);
        let lower = Obstacle::constant(0.5);
        let q = solve_rbsde_lower(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(2),
            &lower,
            &cfg(),
        )
        .unwrap();
        assert!((q.root_value() - 1.0).abs() < 1e-12);
        let oracle = snell_oracle(&lattice, &xi, &lower).unwrap();
        assert!(q.y.sup_distance(&oracle) <= 1e-10);
        // terminal inconsistency (xi dips under L at the middle node) is a
        // warning, not an error
        assert!(!q.diagnostics.warnings.is_empty());
    }

    #[test]
    fn two_step_dynkin_cap() {
        let lattice = lat(2);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0]);
        let pair = BarrierPair::new(Obstacle::Absent, Obstacle::constant(0.75));
        let q = solve_rbsde_upper(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(2),
            &pair.upper,
            &cfg(),
        )
        .unwrap();
        assert_eq!(q.root_value(), 0.75);
        let oracle = dynkin_oracle(&lattice, &xi, &pair).unwrap();
        assert!(q.y.sup_distance(&oracle) <= 1e-10);
    }

    #[test]
    fn unbinding_barrier_keeps_k_zero() {
        let lattice = lat(8);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0] + 2.0);
        let q = solve_rbsde_lower(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(8),
            &Obstacle::constant(1.0),
            &cfg(),
        )
        .unwrap();
        assert_eq!(q.k_terminal_mean(&lattice), 0.0);
        let plain = solve_bsde(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(8),
            &cfg(),
        )
        .unwrap();
        assert_eq!(q.y.sup_distance(&plain.y), 0.0);
    }

    #[test]
    fn negate_and_flip_duality() {
        // upper solve equals the negated lower solve of the mirrored data
        let lattice = lat(10);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0] - 1.0);
        let mut g = GeneratorSpec::from_tyz("ay+bz", |_, y, z| 0.4 * y + 0.2 * z);
        g.params.linear_bound = Some(0.4);
        let v = ForcingTerm::per_step((0..10).map(|k| 0.01 * k as f64).collect());
        let u = Obstacle::constant(0.6);
        let up = solve_rbsde_upper(&lattice, &xi, &g, &v, &u, &cfg()).unwrap();

        let xi_neg = TerminalCondition::from_values(
            &lattice,
            xi.values().iter().map(|x| -x).collect(),
        )
        .unwrap();
        let mut g_tilde = GeneratorSpec::from_tyz("mirror", |_, y, z| 0.4 * y + 0.2 * z);
        g_tilde.params.linear_bound = Some(0.4);
        let v_neg = ForcingTerm::per_step((0..10).map(|k| -0.01 * k as f64).collect());
        let low = solve_rbsde_lower(
            &lattice,
            &xi_neg,
            &g_tilde,
            &v_neg,
            &Obstacle::constant(-0.6),
            &cfg(),
        )
        .unwrap();

        for step in 0..=10 {
            for node in 0..lattice.node_count(step) {
                assert!(
                    (up.y.at(step, node) + low.y.at(step, node)).abs() < 1e-11,
                    "step {step} node {node}"
                );
            }
        }
        // K and A swap under the flip
        assert!(
            (up.a_terminal_mean(&lattice) - low.k_terminal_mean(&lattice)).abs() < 1e-11
        );
    }

    #[test]
    fn pinched_barriers_absorb_drift_orthogonally() {
        let lattice = lat(5);
        let xi = TerminalCondition::constant(&lattice, 0.3);
        let pair = BarrierPair::new(Obstacle::constant(0.3), Obstacle::constant(0.3));
        let mut g = GeneratorSpec::from_tyz("drift", |t, _, _| (8.0 * t).sin());
        g.params.linear_bound = Some(0.0);
        let q = solve_drbsde(
            &lattice,
            &xi,
            &g,
            &ForcingTerm::zero(5),
            &pair,
            &cfg(),
        )
        .unwrap();
        for step in 0..5 {
            for node in 0..lattice.node_count(step) {
                assert_eq!(q.y.at(step, node), 0.3);
                assert_eq!(q.dk.at(step, node).min(q.da.at(step, node)), 0.0);
                assert!((q.z.at(step, node)[0]).abs() < 1e-12);
            }
        }
        let report = flat_off_report(&lattice, &q, &pair);
        assert_eq!(report.ortho_violations, 0);
        assert_eq!(report.kl, 0.0);
        assert_eq!(report.ua, 0.0);
    }

    #[test]
    fn direct_scheme_flat_off_is_exact() {
        let lattice = lat(16);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0]);
        let pair = BarrierPair::new(Obstacle::constant(-0.4), Obstacle::constant(0.4));
        let q = solve_drbsde(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(16),
            &pair,
            &cfg(),
        )
        .unwrap();
        let report = flat_off_report(&lattice, &q, &pair);
        assert_eq!(report.kl, 0.0);
        assert_eq!(report.ua, 0.0);
        assert_eq!(report.ortho_violations, 0);
        // both barriers actually bind on this instance
        assert!(q.k_terminal_mean(&lattice) > 0.0);
        assert!(q.a_terminal_mean(&lattice) > 0.0);
    }

    #[test]
    fn crossed_barriers_are_rejected_with_location() {
        let lattice = lat(4);
        let xi = TerminalCondition::constant(&lattice, 0.0);
        let pair = BarrierPair::new(Obstacle::constant(1.0), Obstacle::constant(-1.0));
        let err = solve_drbsde(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(4),
            &pair,
            &cfg(),
        )
        .unwrap_err();
        assert!(matches!(err, crate::error::Error::CrossedBarriers { .. }));
    }
}
