//! Drivers `g(t, state, y, z)` with declared assumption classes, numeric
//! class validators, penalization and convolution regularizers, and the
//! bundled example catalog.

pub mod catalog;
pub mod checks;
pub mod convolve;
pub mod expr;
pub mod penalize;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::process::EvalPoint;

/// Driver evaluation: `(point, y, z) -> g`.
pub type DriverFn = Arc<dyn Fn(&EvalPoint, f64, &[f64]) -> f64 + Send + Sync>;
/// Scalar modulus `x -> rho(x)` on the nonnegative axis.
pub type ModulusFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Nonnegative coefficient process `(t, state) -> f64`.
pub type CoefficientFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Growth envelope `(t, state, r) -> f64`.
pub type EnvelopeFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;

/// Assumption classes a driver can declare.  The short codes are the ones
/// used on the command line and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssumptionClass {
    /// One-sided Osgood condition in `y` ("H1i").
    OsgoodInY,
    /// `g(., 0, 0)` integrable ("H1ii").
    DriverIntegrableAtOrigin,
    /// General growth in `y` via the envelope `psi` ("H1iii").
    GeneralGrowthInY,
    /// Uniform continuity in `z` ("H2i").
    UniformlyContinuousInZ,
    /// Stronger sub-linear growth in `z` ("H2ii").
    StrongSublinearInZ,
    /// Sub-linear growth in `z` with linear `y` coefficient ("H2'").
    SublinearInZ,
    /// General growth in `y` plus sub-linear growth in `z` ("HH").
    GrowthEnvelope,
    /// Linear growth in `y` and sub-linear growth in `z` ("AA").
    LinearGrowth,
}

impl AssumptionClass {
    pub const ALL: [AssumptionClass; 8] = [
        AssumptionClass::OsgoodInY,
        AssumptionClass::DriverIntegrableAtOrigin,
        AssumptionClass::GeneralGrowthInY,
        AssumptionClass::UniformlyContinuousInZ,
        AssumptionClass::StrongSublinearInZ,
        AssumptionClass::SublinearInZ,
        AssumptionClass::GrowthEnvelope,
        AssumptionClass::LinearGrowth,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AssumptionClass::OsgoodInY => "H1i",
            AssumptionClass::DriverIntegrableAtOrigin => "H1ii",
            AssumptionClass::GeneralGrowthInY => "H1iii",
            AssumptionClass::UniformlyContinuousInZ => "H2i",
            AssumptionClass::StrongSublinearInZ => "H2ii",
            AssumptionClass::SublinearInZ => "H2'",
            AssumptionClass::GrowthEnvelope => "HH",
            AssumptionClass::LinearGrowth => "AA",
        }
    }
}

impl fmt::Display for AssumptionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AssumptionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H1i" => Ok(AssumptionClass::OsgoodInY),
            "H1ii" => Ok(AssumptionClass::DriverIntegrableAtOrigin),
            "H1iii" => Ok(AssumptionClass::GeneralGrowthInY),
            "H2i" => Ok(AssumptionClass::UniformlyContinuousInZ),
            "H2ii" => Ok(AssumptionClass::StrongSublinearInZ),
            "H2'" | "H2prime" => Ok(AssumptionClass::SublinearInZ),
            "HH" => Ok(AssumptionClass::GrowthEnvelope),
            "AA" => Ok(AssumptionClass::LinearGrowth),
            other => Err(Error::InvalidArgument(format!(
                "unknown assumption class `{other}`"
            ))),
        }
    }
}

/// Expands the composite spellings "H1" and "H2" into their parts.
pub fn parse_class_list(items: &[String]) -> Result<BTreeSet<AssumptionClass>> {
    let mut set = BTreeSet::new();
    for item in items {
        match item.as_str() {
            "H1" => {
                set.insert(AssumptionClass::OsgoodInY);
                set.insert(AssumptionClass::DriverIntegrableAtOrigin);
                set.insert(AssumptionClass::GeneralGrowthInY);
            }
            "H2" => {
                set.insert(AssumptionClass::UniformlyContinuousInZ);
                set.insert(AssumptionClass::StrongSublinearInZ);
            }
            other => {
                set.insert(other.parse()?);
            }
        }
    }
    Ok(set)
}

/// Declared structural parameters of a driver.
///
/// Every field is optional; validators and solvers demand exactly the ones
/// the requested operation needs.
#[derive(Clone, Default)]
pub struct GeneratorParams {
    /// Osgood modulus `rho` (nondecreasing, concave, `rho(0) = 0`).
    pub rho: Option<ModulusFn>,
    /// Continuity modulus `phi` in `z` (nondecreasing, `phi(0) = 0`).
    pub phi: Option<ModulusFn>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub mu_tilde: Option<f64>,
    pub lambda_tilde: Option<f64>,
    pub alpha_tilde: Option<f64>,
    /// Nonnegative coefficient `f` entering the sub-linear growth bounds.
    pub f: Option<CoefficientFn>,
    /// Nonnegative coefficient for the linear-growth bound.
    pub f_tilde: Option<CoefficientFn>,
    /// Growth envelope `psi_t(r) = sup_{|y|<=r} |g(.,y,0) - g(.,0,0)|`.
    pub psi: Option<EnvelopeFn>,
    /// Envelope `phi_t(omega, r)` of the combined growth bound.
    pub envelope: Option<EnvelopeFn>,
    /// Linear bound `A` with `rho(x) <= A(x+1)` and `phi(x) <= A(x+1)`;
    /// drives the implicit-step contraction check.
    pub linear_bound: Option<f64>,
}

impl fmt::Debug for GeneratorParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorParams")
            .field("rho", &self.rho.is_some())
            .field("phi", &self.phi.is_some())
            .field("gamma", &self.gamma)
            .field("alpha", &self.alpha)
            .field("mu", &self.mu)
            .field("lambda", &self.lambda)
            .field("mu_tilde", &self.mu_tilde)
            .field("lambda_tilde", &self.lambda_tilde)
            .field("alpha_tilde", &self.alpha_tilde)
            .field("linear_bound", &self.linear_bound)
            .finish()
    }
}

/// An evaluatable driver plus its declared classes and parameters.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub name: String,
    eval: DriverFn,
    pub classes: BTreeSet<AssumptionClass>,
    pub params: GeneratorParams,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("classes", &self.classes)
            .field("params", &self.params)
            .finish()
    }
}

impl GeneratorSpec {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&EvalPoint, f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            classes: BTreeSet::new(),
            params: GeneratorParams::default(),
        }
    }

    /// Driver depending on `(t, y, z)` only, with `z` read as its first
    /// coordinate (scalar convention for `d = 1`).
    pub fn from_tyz(
        name: impl Into<String>,
        f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, move |p, y, z| {
            f(p.t, y, z.first().copied().unwrap_or(0.0))
        })
    }

    pub fn zero() -> Self {
        let mut g = Self::new("0", |_, _, _| 0.0);
        g.params.linear_bound = Some(0.0);
        g.classes = AssumptionClass::ALL.into_iter().collect();
        g
    }

    pub fn with_classes(mut self, classes: impl IntoIterator<Item = AssumptionClass>) -> Self {
        self.classes = classes.into_iter().collect();
        self
    }

    pub fn with_params(mut self, params: GeneratorParams) -> Self {
        self.params = params;
        self
    }

    pub fn declares(&self, class: AssumptionClass) -> bool {
        self.classes.contains(&class)
    }

    pub fn eval_at(&self, p: &EvalPoint, y: f64, z: &[f64]) -> f64 {
        (self.eval)(p, y, z)
    }

    pub fn eval_fn(&self) -> DriverFn {
        Arc::clone(&self.eval)
    }

    /// Convenience evaluation at a detached probe point with scalar `z`.
    pub fn eval_probe(&self, t: f64, state: &[f64], y: f64, z: f64) -> f64 {
        let p = EvalPoint::probe(t, state);
        self.eval_at(&p, y, &[z])
    }

    /// Pointwise sum of two drivers; the linear bound adds, the remaining
    /// parameters are taken from `self` where both declare one.
    pub fn sum(name: impl Into<String>, a: &GeneratorSpec, b: &GeneratorSpec) -> GeneratorSpec {
        let fa = a.eval_fn();
        let fb = b.eval_fn();
        let mut g = GeneratorSpec::new(name, move |p, y, z| fa(p, y, z) + fb(p, y, z));
        g.classes = a.classes.intersection(&b.classes).copied().collect();
        g.params = a.params.clone();
        g.params.linear_bound = match (a.params.linear_bound, b.params.linear_bound) {
            (Some(x), Some(y)) => Some(x + y),
            _ => None,
        };
        g
    }

    /// Cheap structural validation of the declared moduli.
    ///
    /// Hard violations (a decreasing or non-vanishing `rho`) are errors;
    /// soft findings (`alpha = 1`, admitted for closed-form testing only)
    /// come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if let Some(rho) = &self.params.rho {
            check_modulus("rho", rho, true)?;
        }
        if let Some(phi) = &self.params.phi {
            check_modulus("phi", phi, false)?;
        }
        for (name, v) in [
            ("alpha", self.params.alpha),
            ("alpha_tilde", self.params.alpha_tilde),
        ] {
            if let Some(a) = v {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::InvalidModulus {
                        name: "alpha",
                        detail: format!("{name} = {a} outside (0, 1]"),
                    });
                }
                if a == 1.0 {
                    warnings.push(format!(
                        "{name} = 1 admitted for closed-form testing only"
                    ));
                }
            }
        }
        Ok(warnings)
    }
}

/// Additive split `g = g1 + g2` consumed by the convolution schemes: `g1`
/// carries the Osgood/continuity structure, `g2` (optional) the linear-growth
/// remainder.
#[derive(Debug, Clone)]
pub struct SplitGenerator {
    pub g1: GeneratorSpec,
    pub g2: Option<GeneratorSpec>,
}

impl SplitGenerator {
    /// Combined driver `g1 + g2`.
    pub fn combined(&self) -> GeneratorSpec {
        match &self.g2 {
            Some(g2) => GeneratorSpec::sum(format!("{}+{}", self.g1.name, g2.name), &self.g1, g2),
            None => self.g1.clone(),
        }
    }

    /// Validates the declared classes against what the schemes require:
    /// `g1` must declare Osgood-in-y together with either the growth
    /// envelope or the sub-linear route, `g2` linear growth.
    pub fn validate_for_scheme(&self) -> Result<()> {
        let g1 = &self.g1;
        let osgood = g1.declares(AssumptionClass::OsgoodInY);
        let route_hh = g1.declares(AssumptionClass::GrowthEnvelope);
        let route_h2p = g1.declares(AssumptionClass::SublinearInZ)
            && g1.declares(AssumptionClass::DriverIntegrableAtOrigin)
            && g1.declares(AssumptionClass::GeneralGrowthInY);
        if !(osgood && (route_hh || route_h2p)) {
            return Err(Error::InvalidSplit(format!(
                "g1 `{}` must declare H1i together with HH, or H1 with H2'",
                g1.name
            )));
        }
        if let Some(g2) = &self.g2 {
            if !g2.declares(AssumptionClass::LinearGrowth) {
                return Err(Error::InvalidSplit(format!(
                    "g2 `{}` must declare AA",
                    g2.name
                )));
            }
        }
        Ok(())
    }
}

/// Grid check of a modulus: `m(0) = 0`, nondecreasing, and (for `rho`)
/// midpoint-concave, sampled down to the 1e-12 floor where the catalog
/// moduli are non-Lipschitz.
fn check_modulus(name: &'static str, m: &ModulusFn, require_concave: bool) -> Result<()> {
    let at_zero = m(0.0);
    if at_zero.abs() > 1e-12 {
        return Err(Error::InvalidModulus {
            name,
            detail: format!("m(0) = {at_zero}, expected 0"),
        });
    }
    let mut xs: Vec<f64> = Vec::new();
    let mut x = 1e-12;
    while x < 8.0 {
        xs.push(x);
        x *= 4.0;
    }
    xs.push(8.0);
    let mut prev = 0.0;
    let mut prev_x = 0.0;
    for &x in &xs {
        let v = m(x);
        if !v.is_finite() {
            return Err(Error::InvalidModulus {
                name,
                detail: format!("m({x}) not finite"),
            });
        }
        if v < prev - 1e-12 {
            return Err(Error::InvalidModulus {
                name,
                detail: format!("decreasing between {prev_x} and {x}"),
            });
        }
        prev = v;
        prev_x = x;
    }
    if require_concave {
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let chord = 0.5 * (m(a) + m(b));
            if m(mid) < chord - 1e-9 * (1.0 + chord.abs()) {
                return Err(Error::InvalidModulus {
                    name,
                    detail: format!("not concave on [{a}, {b}]"),
                });
            }
        }
    }
    Ok(())
}
