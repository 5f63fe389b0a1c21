//! Barrier penalization of drivers.
//!
//! `penalize_lower` adds `n (y - L_t)^-`, `penalize_upper` subtracts
//! `n (y - U_t)^+`, and `penalize_double` applies both.  Penalized drivers
//! are nondecreasing (lower) resp. nonincreasing (upper) in `n` pointwise,
//! and the declared contraction bound grows by `n`.

use crate::generator::GeneratorSpec;
use crate::process::{BarrierPair, Obstacle};

fn bump_linear_bound(g: &mut GeneratorSpec, n: f64) {
    g.params.linear_bound = g.params.linear_bound.map(|a| a + n);
}

/// `g + n (y - L)^-`; returns `g` unchanged when the barrier is absent.
pub fn penalize_lower(g: &GeneratorSpec, lower: &Obstacle, n: f64) -> GeneratorSpec {
    let Obstacle::Present(spec) = lower else {
        return g.clone();
    };
    let inner = g.eval_fn();
    let barrier = spec.clone();
    let mut out = GeneratorSpec::new(format!("{}+{}(y-L)^-", g.name, n), move |p, y, z| {
        let l = barrier.at(p);
        inner(p, y, z) + n * (l - y).max(0.0)
    });
    out.classes = g.classes.clone();
    out.params = g.params.clone();
    bump_linear_bound(&mut out, n);
    out
}

/// `g - n (y - U)^+`; returns `g` unchanged when the barrier is absent.
pub fn penalize_upper(g: &GeneratorSpec, upper: &Obstacle, n: f64) -> GeneratorSpec {
    let Obstacle::Present(spec) = upper else {
        return g.clone();
    };
    let inner = g.eval_fn();
    let barrier = spec.clone();
    let mut out = GeneratorSpec::new(format!("{}-{}(y-U)^+", g.name, n), move |p, y, z| {
        let u = barrier.at(p);
        inner(p, y, z) - n * (y - u).max(0.0)
    });
    out.classes = g.classes.clone();
    out.params = g.params.clone();
    bump_linear_bound(&mut out, n);
    out
}

/// `g + n (y - L)^- - n (y - U)^+`; equals `g` on `[L, U]`.
///
/// The pair's `L <= U` invariant is validated where the pair is built
/// (solvers re-check it on their lattice before running).
pub fn penalize_double(g: &GeneratorSpec, barriers: &BarrierPair, n: f64) -> GeneratorSpec {
    let lower = penalize_lower(g, &barriers.lower, n);
    penalize_upper(&lower, &barriers.upper, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{EvalPoint, ProcessSpec};

    fn zero() -> GeneratorSpec {
        GeneratorSpec::zero()
    }

    fn probe() -> [f64; 1] {
        [0.0]
    }

    #[test]
    fn zero_level_is_identity() {
        let g = GeneratorSpec::from_tyz("g", |t, y, z| t + y - z);
        let l = Obstacle::constant(1.0);
        let p0 = probe();
        let p = EvalPoint::probe(0.3, &p0);
        let gp = penalize_lower(&g, &l, 0.0);
        for y in [-2.0, 0.0, 2.0] {
            assert_eq!(gp.eval_at(&p, y, &[0.5]), g.eval_at(&p, y, &[0.5]));
        }
    }

    #[test]
    fn lower_penalty_values() {
        let l = Obstacle::constant(1.0);
        let p0 = probe();
        let p = EvalPoint::probe(0.0, &p0);
        let g5 = penalize_lower(&zero(), &l, 5.0);
        assert_eq!(g5.eval_at(&p, 0.0, &[0.0]), 5.0); // 5 * (0 - 1)^-
        assert_eq!(g5.eval_at(&p, 2.0, &[0.0]), 0.0); // above the barrier
    }

    #[test]
    fn upper_penalty_values() {
        let u = Obstacle::constant(1.0);
        let p0 = probe();
        let p = EvalPoint::probe(0.0, &p0);
        let g2 = penalize_upper(&zero(), &u, 2.0);
        assert_eq!(g2.eval_at(&p, 3.0, &[0.0]), -4.0);
        assert_eq!(g2.eval_at(&p, 0.0, &[0.0]), 0.0);
    }

    #[test]
    fn double_penalty_values_and_identity_inside() {
        let pair = BarrierPair::new(Obstacle::constant(0.0), Obstacle::constant(1.0));
        let p0 = probe();
        let p = EvalPoint::probe(0.0, &p0);
        let g3 = penalize_double(&zero(), &pair, 3.0);
        assert_eq!(g3.eval_at(&p, -1.0, &[0.0]), 3.0);
        assert_eq!(g3.eval_at(&p, 2.0, &[0.0]), -3.0);
        assert_eq!(g3.eval_at(&p, 0.5, &[0.0]), 0.0);
    }

    #[test]
    fn monotone_in_level() {
        let l = Obstacle::present(ProcessSpec::from_fn(|t, s| 0.5 + 0.1 * t + 0.2 * s[0]));
        let u = Obstacle::constant(2.0);
        let base = GeneratorSpec::from_tyz("b", |_, y, _| -y);
        let state = [0.4];
        let p = EvalPoint::probe(0.7, &state);
        for y in [-1.0, 0.0, 0.6, 3.0] {
            let mut prev_l = f64::NEG_INFINITY;
            let mut prev_u = f64::INFINITY;
            for n in [0.0, 1.0, 2.0, 8.0, 64.0] {
                let vl = penalize_lower(&base, &l, n).eval_at(&p, y, &[0.0]);
                let vu = penalize_upper(&base, &u, n).eval_at(&p, y, &[0.0]);
                assert!(vl >= prev_l);
                assert!(vu <= prev_u);
                prev_l = vl;
                prev_u = vu;
            }
        }
    }

    #[test]
    fn absent_barrier_returns_generator_unchanged() {
        let g = GeneratorSpec::from_tyz("g", |_, y, _| y.sin());
        let out = penalize_lower(&g, &Obstacle::Absent, 10.0);
        let p0 = probe();
        let p = EvalPoint::probe(0.0, &p0);
        assert_eq!(out.eval_at(&p, -5.0, &[0.0]), g.eval_at(&p, -5.0, &[0.0]));
    }
}
