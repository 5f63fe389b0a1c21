//! Bundled example drivers with their declared classes and parameters.
//!
//! The catalog carries one driver built around the `-x ln x` Osgood modulus
//! (`ex7.1`), a split pair whose first piece has general growth in `y`
//! (`ex7.2.g1/g2`), and a split pair built around the iterated-logarithm
//! modulus `x |ln x| ln|ln x|` (`ex7.3.g1/g2`).  Combined entries `ex7.2`
//! and `ex7.3` carry the splits for the convolution schemes.

use std::sync::Arc;

use crate::generator::{
    AssumptionClass, GeneratorParams, GeneratorSpec, ModulusFn, SplitGenerator,
};

/// Cut-over point of the catalog moduli; below it they follow their singular
/// branch, above it the tangent continuation.  `exp(-3)` keeps both moduli
/// nondecreasing and concave.
pub const MODULUS_DELTA: f64 = 0.049_787_068_367_863_944; // e^{-3}

fn norm(s: &[f64]) -> f64 {
    s.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `exp` with the argument capped at 700: evaluations beyond double range
/// keep their sign and magnitude ordering instead of overflowing into
/// `inf * 0 = NaN` inside the root finders.
fn exp_capped(x: f64) -> f64 {
    x.min(700.0).exp()
}

/// `h(x) = -x ln x` below `delta`, tangent continuation above, `0` at `0`.
pub fn osgood_modulus(delta: f64) -> ModulusFn {
    let slope = -delta.ln() - 1.0;
    let at_delta = -delta * delta.ln();
    Arc::new(move |x: f64| {
        if x <= 0.0 {
            0.0
        } else if x <= delta {
            -x * x.ln()
        } else {
            slope * (x - delta) + at_delta
        }
    })
}

/// `h̄(x) = x |ln x| ln|ln x|` below `delta`, tangent continuation above.
pub fn iterated_log_modulus(delta: f64) -> ModulusFn {
    let l = -delta.ln();
    let slope = l.ln() * (l - 1.0) - 1.0;
    let at_delta = delta * l * l.ln();
    Arc::new(move |x: f64| {
        if x <= 0.0 {
            0.0
        } else if x <= delta {
            let lx = -x.ln();
            x * lx * lx.ln()
        } else {
            slope * (x - delta) + at_delta
        }
    })
}

/// One catalog row.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub generator: GeneratorSpec,
    /// Present on combined entries consumed by the convolution schemes.
    pub split: Option<SplitGenerator>,
}

fn ex71() -> GeneratorSpec {
    let h = osgood_modulus(MODULUS_DELTA);
    let h_eval = Arc::clone(&h);
    let h_delta = h(MODULUS_DELTA);
    let h_slope = -MODULUS_DELTA.ln() - 1.0;
    let mut g = GeneratorSpec::new("ex7.1", move |p, y, z| {
        let b2 = norm(p.state).powi(2);
        let zn = norm(z);
        let singular = if p.t > 0.0 { 1.0 / p.t.sqrt() } else { 0.0 };
        h_eval(y.abs()) + exp_capped(-y * b2) + exp_capped(-y).min(1.0) * (zn.sqrt() + zn.cbrt())
            + singular
    });
    g.classes = [
        AssumptionClass::OsgoodInY,
        AssumptionClass::DriverIntegrableAtOrigin,
        AssumptionClass::GeneralGrowthInY,
        AssumptionClass::UniformlyContinuousInZ,
        AssumptionClass::StrongSublinearInZ,
    ]
    .into_iter()
    .collect();
    g.params = GeneratorParams {
        rho: Some(h),
        phi: Some(Arc::new(|x: f64| x.sqrt() + x.cbrt())),
        gamma: Some(2.0),
        alpha: Some(0.5),
        f: Some(Arc::new(|_, _| 1.0)),
        psi: Some(Arc::new(move |_t, state, r| {
            let b2 = norm(state).powi(2);
            h_delta + h_slope * r + exp_capped(r * b2) + 1.0
        })),
        linear_bound: Some(2.0),
        ..GeneratorParams::default()
    };
    g
}

fn ex72_g1() -> GeneratorSpec {
    let h = osgood_modulus(MODULUS_DELTA);
    let h_eval = Arc::clone(&h);
    let h_delta = h(MODULUS_DELTA);
    let h_slope = -MODULUS_DELTA.ln() - 1.0;
    let mut g = GeneratorSpec::new("ex7.2.g1", move |p, y, z| {
        let b4 = norm(p.state).powi(4);
        let zn = norm(z);
        let singular = if p.t > 0.0 { p.t.powf(-1.0 / 3.0) } else { 0.0 };
        h_eval(y.abs()) - y.powi(3) * exp_capped(b4) - exp_capped(y) * zn.sin().powi(2)
            + zn.sqrt() * zn.cos()
            + singular
    });
    g.classes = [
        AssumptionClass::OsgoodInY,
        AssumptionClass::GrowthEnvelope,
    ]
    .into_iter()
    .collect();
    g.params = GeneratorParams {
        rho: Some(h),
        f: Some(Arc::new(move |t, _| {
            let singular = if t > 0.0 { t.powf(-1.0 / 3.0) } else { 0.0 };
            1.0 + singular + h_delta
        })),
        envelope: Some(Arc::new(move |_t, state, r| {
            let b4 = norm(state).powi(4);
            h_slope * r + r.powi(3) * exp_capped(b4) + exp_capped(r) - 1.0
        })),
        lambda: Some(1.0),
        alpha: Some(0.5),
        linear_bound: Some(2.0),
        ..GeneratorParams::default()
    };
    g
}

fn ex72_g2() -> GeneratorSpec {
    let mut g = GeneratorSpec::new("ex7.2.g2", move |p, y, z| {
        let b = norm(p.state);
        let zn = norm(z);
        y.abs().cbrt() + y * y.cos() + (y.abs() * zn).powf(0.25) + b
    });
    g.classes = [AssumptionClass::LinearGrowth].into_iter().collect();
    g.params = GeneratorParams {
        f_tilde: Some(Arc::new(|_, state| norm(state) + 2.0)),
        mu_tilde: Some(3.0),
        lambda_tilde: Some(1.0),
        alpha_tilde: Some(0.5),
        ..GeneratorParams::default()
    };
    g
}

fn ex73_g1() -> GeneratorSpec {
    let hbar = iterated_log_modulus(MODULUS_DELTA);
    let hbar_eval = Arc::clone(&hbar);
    let l = -MODULUS_DELTA.ln();
    let hbar_delta = MODULUS_DELTA * l * l.ln();
    let hbar_slope = l.ln() * (l - 1.0) - 1.0;
    let mut g = GeneratorSpec::new("ex7.3.g1", move |p, y, z| {
        let b3 = norm(p.state).powi(3);
        let zn = norm(z);
        let singular = if p.t > 0.0 { p.t.powf(-0.25) } else { 0.0 };
        hbar_eval(y.abs()) - exp_capped(y * b3) + exp_capped(-y).min(1.0) * zn.sqrt() * zn.cos()
            + singular
    });
    g.classes = [
        AssumptionClass::OsgoodInY,
        AssumptionClass::DriverIntegrableAtOrigin,
        AssumptionClass::GeneralGrowthInY,
        AssumptionClass::SublinearInZ,
    ]
    .into_iter()
    .collect();
    g.params = GeneratorParams {
        rho: Some(hbar),
        psi: Some(Arc::new(move |_t, state, r| {
            let b3 = norm(state).powi(3);
            hbar_delta + hbar_slope * r + exp_capped(r * b3) + 1.0
        })),
        f: Some(Arc::new(|_, _| 0.0)),
        mu: Some(0.0),
        lambda: Some(1.0),
        alpha: Some(0.5),
        linear_bound: Some(hbar_delta.max(hbar_slope)),
        ..GeneratorParams::default()
    };
    g
}

fn ex73_g2() -> GeneratorSpec {
    let mut g = GeneratorSpec::new("ex7.3.g2", move |p, y, z| {
        let b = norm(p.state);
        let zn = norm(z);
        y * zn.cos() + zn.cbrt() * y.sin() + (1.0 + y.abs() + zn).sqrt() + b * b
    });
    g.classes = [AssumptionClass::LinearGrowth].into_iter().collect();
    g.params = GeneratorParams {
        f_tilde: Some(Arc::new(|_, state| norm(state).powi(2) + 2.0)),
        mu_tilde: Some(2.0),
        lambda_tilde: Some(2.0),
        alpha_tilde: Some(0.5),
        ..GeneratorParams::default()
    };
    g
}

/// All bundled drivers, combined entries last.
pub fn catalog() -> Vec<CatalogEntry> {
    let e71 = ex71();
    let e72g1 = ex72_g1();
    let e72g2 = ex72_g2();
    let e73g1 = ex73_g1();
    let e73g2 = ex73_g2();
    let e72 = GeneratorSpec::sum("ex7.2", &e72g1, &e72g2);
    let e73 = GeneratorSpec::sum("ex7.3", &e73g1, &e73g2);
    vec![
        CatalogEntry {
            id: "ex7.1",
            generator: e71,
            split: None,
        },
        CatalogEntry {
            id: "ex7.2.g1",
            generator: e72g1.clone(),
            split: None,
        },
        CatalogEntry {
            id: "ex7.2.g2",
            generator: e72g2.clone(),
            split: None,
        },
        CatalogEntry {
            id: "ex7.2",
            generator: e72,
            split: Some(SplitGenerator {
                g1: e72g1,
                g2: Some(e72g2),
            }),
        },
        CatalogEntry {
            id: "ex7.3.g1",
            generator: e73g1.clone(),
            split: None,
        },
        CatalogEntry {
            id: "ex7.3.g2",
            generator: e73g2.clone(),
            split: None,
        },
        CatalogEntry {
            id: "ex7.3",
            generator: e73,
            split: Some(SplitGenerator {
                g1: e73g1,
                g2: Some(e73g2),
            }),
        },
    ]
}

/// Looks up an entry by id.
pub fn find(id: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.id == id)
}
