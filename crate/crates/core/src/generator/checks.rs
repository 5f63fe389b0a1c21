//! Sampling-based validators for the assumption classes.
//!
//! Each check evaluates its defining inequality on a deterministic probe set
//! (low-discrepancy Weyl points plus adversarial corners) and reports the
//! worst violation with a re-checkable witness.  A `Pass` therefore means "no
//! violation found on the probe set"; the checks are one-sided.

use crate::error::{Error, Result};
use crate::generator::{AssumptionClass, GeneratorSpec};
use crate::process::EvalPoint;

/// Probe-set configuration shared by the validators.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub t_max: f64,
    pub t_samples: usize,
    pub state_abs: f64,
    pub state_samples: usize,
    pub y_abs: f64,
    pub y_samples: usize,
    pub z_abs: f64,
    pub z_samples: usize,
    /// Violations below this are ignored (floating slack).
    pub tolerance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            t_samples: 4,
            state_abs: 1.5,
            state_samples: 4,
            y_abs: 3.0,
            y_samples: 18,
            z_abs: 4.0,
            z_samples: 18,
            tolerance: 1e-9,
        }
    }
}

/// Fractional-part sequence `frac(n * alpha)`, one irrational per axis.
fn weyl(n: usize, alpha: f64) -> f64 {
    (n as f64 * alpha).fract()
}

/// Symmetric probe values in `[-r, r]`: corners near zero (down to the 1e-12
/// floor where the catalog moduli are non-Lipschitz) plus Weyl fill.
fn axis_probes(r: f64, count: usize, alpha: f64) -> Vec<f64> {
    let mut xs = vec![
        0.0, 1e-12, -1e-12, 1e-6, -1e-6, 1e-3, -1e-3, 0.1, -0.1, 1.0, -1.0, r, -r,
    ];
    xs.retain(|x| x.abs() <= r + 1e-15);
    for i in 0..count {
        xs.push((2.0 * weyl(i + 1, alpha) - 1.0) * r);
    }
    xs
}

fn t_probes(cfg: &SamplerConfig) -> Vec<f64> {
    let mut ts = vec![0.0, 1e-9, cfg.t_max];
    for i in 0..cfg.t_samples {
        ts.push(weyl(i + 1, 0.754_877_666_246_693) * cfg.t_max);
    }
    ts
}

fn state_probes(cfg: &SamplerConfig) -> Vec<f64> {
    let mut ss = vec![0.0, cfg.state_abs, -cfg.state_abs];
    for i in 0..cfg.state_samples {
        ss.push((2.0 * weyl(i + 1, 0.569_840_290_998_053_3) - 1.0) * cfg.state_abs);
    }
    ss
}

/// Verdict of a validator run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Point at which a violation was observed, with enough data to re-check it.
#[derive(Debug, Clone)]
pub struct Witness {
    pub t: f64,
    pub state: Vec<f64>,
    pub y1: f64,
    pub y2: Option<f64>,
    pub z1: Vec<f64>,
    pub z2: Option<Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

impl Witness {
    pub fn violation(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Result of one assumption-class check.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub class: AssumptionClass,
    pub verdict: Verdict,
    pub worst_violation: f64,
    pub witness: Option<Witness>,
    pub samples: usize,
}

struct Tracker {
    worst: f64,
    witness: Option<Witness>,
    samples: usize,
}

impl Tracker {
    fn new() -> Self {
        Self {
            worst: f64::NEG_INFINITY,
            witness: None,
            samples: 0,
        }
    }

    fn offer(&mut self, violation: f64, make: impl FnOnce() -> Witness) {
        self.samples += 1;
        if violation > self.worst {
            self.worst = violation;
            self.witness = Some(make());
        }
    }

    fn finish(self, class: AssumptionClass, tolerance: f64) -> AssumptionReport {
        let fail = self.worst > tolerance;
        AssumptionReport {
            class,
            verdict: if fail { Verdict::Fail } else { Verdict::Pass },
            worst_violation: self.worst.max(0.0),
            witness: if fail { self.witness } else { None },
            samples: self.samples,
        }
    }
}

/// Checks the one-sided Osgood condition
/// `(g(t,y1,z) - g(t,y2,z)) sgn(y1 - y2) <= rho(|y1 - y2|)`.
pub fn check_one_sided_osgood(g: &GeneratorSpec, cfg: &SamplerConfig) -> Result<AssumptionReport> {
    let rho = g
        .params
        .rho
        .clone()
        .ok_or(Error::MissingParameter("rho"))?;
    let mut tr = Tracker::new();
    let ys = axis_probes(cfg.y_abs, cfg.y_samples, 0.618_033_988_749_894_9);
    let zs = axis_probes(cfg.z_abs, cfg.z_samples, 0.414_213_562_373_095_1);
    for &t in &t_probes(cfg) {
        for &s in &state_probes(cfg) {
            let state = [s];
            let p = EvalPoint::probe(t, &state);
            for &z in &zs {
                let zv = [z];
                for &y1 in &ys {
                    for &y2 in &ys {
                        if y1 == y2 {
                            continue;
                        }
                        let lhs = (g.eval_at(&p, y1, &zv) - g.eval_at(&p, y2, &zv))
                            * (y1 - y2).signum();
                        let rhs = rho((y1 - y2).abs());
                        tr.offer(lhs - rhs, || Witness {
                            t,
                            state: state.to_vec(),
                            y1,
                            y2: Some(y2),
                            z1: zv.to_vec(),
                            z2: None,
                            lhs,
                            rhs,
                        });
                    }
                }
            }
        }
    }
    Ok(tr.finish(AssumptionClass::OsgoodInY, cfg.tolerance))
}

/// Checks uniform continuity in `z`:
/// `|g(t,y,z1) - g(t,y,z2)| <= phi(|z1 - z2|)`.
pub fn check_z_uniform_continuity(
    g: &GeneratorSpec,
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    let phi = g
        .params
        .phi
        .clone()
        .ok_or(Error::MissingParameter("phi"))?;
    let mut tr = Tracker::new();
    let ys = axis_probes(cfg.y_abs, cfg.y_samples / 2, 0.618_033_988_749_894_9);
    let zs = axis_probes(cfg.z_abs, cfg.z_samples, 0.414_213_562_373_095_1);
    for &t in &t_probes(cfg) {
        for &s in &state_probes(cfg) {
            let state = [s];
            let p = EvalPoint::probe(t, &state);
            for &y in &ys {
                for &z1 in &zs {
                    for &z2 in &zs {
                        if z1 == z2 {
                            continue;
                        }
                        let lhs =
                            (g.eval_at(&p, y, &[z1]) - g.eval_at(&p, y, &[z2])).abs();
                        let rhs = phi((z1 - z2).abs());
                        tr.offer(lhs - rhs, || Witness {
                            t,
                            state: state.to_vec(),
                            y1: y,
                            y2: None,
                            z1: vec![z1],
                            z2: Some(vec![z2]),
                            lhs,
                            rhs,
                        });
                    }
                }
            }
        }
    }
    Ok(tr.finish(AssumptionClass::UniformlyContinuousInZ, cfg.tolerance))
}

/// Which sub-linear growth inequality to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SublinearVariant {
    /// `|g(t,y,z) - g(t,y,0)| <= gamma (f_t + |y| + |z|)^alpha`
    Strong,
    /// `|g(t,y,z) - g(t,y,0)| <= f_t + mu |y| + lambda |z|^alpha`
    Plain,
    /// `|g(t,y,z)| <= f~_t + mu~ |y| + lambda~ |z|^alpha~`
    Linear,
}

impl SublinearVariant {
    fn class(self) -> AssumptionClass {
        match self {
            SublinearVariant::Strong => AssumptionClass::StrongSublinearInZ,
            SublinearVariant::Plain => AssumptionClass::SublinearInZ,
            SublinearVariant::Linear => AssumptionClass::LinearGrowth,
        }
    }
}

/// Checks the requested sub-linear growth inequality on the probe set.
pub fn check_sublinear_z_growth(
    g: &GeneratorSpec,
    variant: SublinearVariant,
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    let p = &g.params;
    enum Bound {
        Strong { gamma: f64, alpha: f64 },
        Plain { mu: f64, lambda: f64, alpha: f64 },
        Linear { mu: f64, lambda: f64, alpha: f64 },
    }
    let (bound, coeff) = match variant {
        SublinearVariant::Strong => (
            Bound::Strong {
                gamma: p.gamma.ok_or(Error::MissingParameter("gamma"))?,
                alpha: p.alpha.ok_or(Error::MissingParameter("alpha"))?,
            },
            p.f.clone(),
        ),
        SublinearVariant::Plain => (
            Bound::Plain {
                mu: p.mu.ok_or(Error::MissingParameter("mu"))?,
                lambda: p.lambda.ok_or(Error::MissingParameter("lambda"))?,
                alpha: p.alpha.ok_or(Error::MissingParameter("alpha"))?,
            },
            p.f.clone(),
        ),
        SublinearVariant::Linear => (
            Bound::Linear {
                mu: p.mu_tilde.ok_or(Error::MissingParameter("mu_tilde"))?,
                lambda: p
                    .lambda_tilde
                    .ok_or(Error::MissingParameter("lambda_tilde"))?,
                alpha: p
                    .alpha_tilde
                    .ok_or(Error::MissingParameter("alpha_tilde"))?,
            },
            p.f_tilde.clone(),
        ),
    };
    let mut tr = Tracker::new();
    let ys = axis_probes(cfg.y_abs, cfg.y_samples, 0.618_033_988_749_894_9);
    let zs = axis_probes(cfg.z_abs, cfg.z_samples, 0.414_213_562_373_095_1);
    for &t in &t_probes(cfg) {
        for &s in &state_probes(cfg) {
            let state = [s];
            let pt = EvalPoint::probe(t, &state);
            let fv = coeff.as_ref().map(|f| f(t, &state)).unwrap_or(0.0);
            for &y in &ys {
                let g_y0 = g.eval_at(&pt, y, &[0.0]);
                for &z in &zs {
                    let g_yz = g.eval_at(&pt, y, &[z]);
                    let (lhs, rhs) = match &bound {
                        Bound::Strong { gamma, alpha } => (
                            (g_yz - g_y0).abs(),
                            gamma * (fv + y.abs() + z.abs()).powf(*alpha),
                        ),
                        Bound::Plain { mu, lambda, alpha } => (
                            (g_yz - g_y0).abs(),
                            fv + mu * y.abs() + lambda * z.abs().powf(*alpha),
                        ),
                        Bound::Linear { mu, lambda, alpha } => (
                            g_yz.abs(),
                            fv + mu * y.abs() + lambda * z.abs().powf(*alpha),
                        ),
                    };
                    tr.offer(lhs - rhs, || Witness {
                        t,
                        state: state.to_vec(),
                        y1: y,
                        y2: None,
                        z1: vec![z],
                        z2: None,
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }
    Ok(tr.finish(variant.class(), cfg.tolerance))
}

/// Checks the general-growth envelope of the `psi` field:
/// `|g(t,y,0) - g(t,0,0)| <= psi_t(|y|)`.
pub fn check_general_growth(g: &GeneratorSpec, cfg: &SamplerConfig) -> Result<AssumptionReport> {
    let psi = g
        .params
        .psi
        .clone()
        .ok_or(Error::MissingParameter("psi"))?;
    let mut tr = Tracker::new();
    let ys = axis_probes(cfg.y_abs, cfg.y_samples, 0.618_033_988_749_894_9);
    for &t in &t_probes(cfg) {
        for &s in &state_probes(cfg) {
            let state = [s];
            let pt = EvalPoint::probe(t, &state);
            let origin = g.eval_at(&pt, 0.0, &[0.0]);
            for &y in &ys {
                let lhs = (g.eval_at(&pt, y, &[0.0]) - origin).abs();
                let rhs = psi(t, &state, y.abs());
                tr.offer(lhs - rhs, || Witness {
                    t,
                    state: state.to_vec(),
                    y1: y,
                    y2: None,
                    z1: vec![0.0],
                    z2: None,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(tr.finish(AssumptionClass::GeneralGrowthInY, cfg.tolerance))
}

/// Checks the combined growth envelope of (`envelope`, `f`, `lambda`,
/// `alpha`): `|g(t,y,z)| <= f_t + envelope_t(|y|) + lambda |z|^alpha`.
///
/// The pathwise integrability half of the assumption is a statement about
/// the continuous filtration; on a finite grid every envelope sum is finite,
/// so it is recorded as vacuously satisfied rather than tested.
pub fn check_growth_envelope(g: &GeneratorSpec, cfg: &SamplerConfig) -> Result<AssumptionReport> {
    let env = g
        .params
        .envelope
        .clone()
        .ok_or(Error::MissingParameter("envelope"))?;
    let f = g.params.f.clone();
    let lambda = g.params.lambda.ok_or(Error::MissingParameter("lambda"))?;
    let alpha = g.params.alpha.ok_or(Error::MissingParameter("alpha"))?;
    let mut tr = Tracker::new();
    let ys = axis_probes(cfg.y_abs, cfg.y_samples, 0.618_033_988_749_894_9);
    let zs = axis_probes(cfg.z_abs, cfg.z_samples, 0.414_213_562_373_095_1);
    for &t in &t_probes(cfg) {
        for &s in &state_probes(cfg) {
            let state = [s];
            let pt = EvalPoint::probe(t, &state);
            let fv = f.as_ref().map(|f| f(t, &state)).unwrap_or(0.0);
            for &y in &ys {
                for &z in &zs {
                    let lhs = g.eval_at(&pt, y, &[z]).abs();
                    let rhs = fv + env(t, &state, y.abs()) + lambda * z.abs().powf(alpha);
                    tr.offer(lhs - rhs, || Witness {
                        t,
                        state: state.to_vec(),
                        y1: y,
                        y2: None,
                        z1: vec![z],
                        z2: None,
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }
    Ok(tr.finish(AssumptionClass::GrowthEnvelope, cfg.tolerance))
}

/// Re-evaluates a witness against the generator, returning the violation of
/// the inequality it was recorded for.  Used by the soundness tests.
pub fn recheck_witness(
    g: &GeneratorSpec,
    report: &AssumptionReport,
) -> Option<f64> {
    let w = report.witness.as_ref()?;
    let p = EvalPoint::probe(w.t, &w.state);
    let lhs = match report.class {
        AssumptionClass::OsgoodInY => {
            let y2 = w.y2?;
            (g.eval_at(&p, w.y1, &w.z1) - g.eval_at(&p, y2, &w.z1)) * (w.y1 - y2).signum()
        }
        AssumptionClass::UniformlyContinuousInZ => {
            let z2 = w.z2.as_ref()?;
            (g.eval_at(&p, w.y1, &w.z1) - g.eval_at(&p, w.y1, z2)).abs()
        }
        AssumptionClass::StrongSublinearInZ | AssumptionClass::SublinearInZ => {
            (g.eval_at(&p, w.y1, &w.z1) - g.eval_at(&p, w.y1, &[0.0])).abs()
        }
        AssumptionClass::LinearGrowth => g.eval_at(&p, w.y1, &w.z1).abs(),
        _ => g.eval_at(&p, w.y1, &w.z1).abs(),
    };
    Some(lhs - w.rhs)
}
