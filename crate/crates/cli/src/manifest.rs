//! Declarative experiment manifests (TOML) and their validation into
//! ready-to-run plans.
//!
//! One grammar covers all user-supplied functions: terminal data, barriers
//! and forcing are expressions over `t` and `state`; drivers additionally
//! read `y`, `z` and `znorm`; moduli are expressions in `x`.

use std::collections::BTreeSet;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rbsde_core::generator::catalog;
use rbsde_core::generator::expr::{Expr, ExprCtx};
use rbsde_core::generator::{parse_class_list, GeneratorParams};
use rbsde_core::*;

/// Manifest schema version understood by this build.
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub version: u32,
    pub model: ModelBlock,
    pub data: DataBlock,
    pub generator: GeneratorDef,
    pub scheme: SchemeBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerics: Option<NumericsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<ChecksBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub d: usize,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBlock {
    pub xi: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<String>,
}

/// A driver definition: a catalog id or an expression with declared classes
/// and parameters.  `g1`/`g2` carry the split for the convolution schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GeneratorDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_tilde: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<Box<GeneratorDef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<Box<GeneratorDef>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeBlock {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NumericsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotone_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksBlock {
    pub y0: f64,
    #[serde(default = "default_y0_tol")]
    pub y0_tol: f64,
}

fn default_y0_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

// ---------------------------------------------------------------------------
// validated plan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenalizationVariant {
    Lower,
    Upper,
    ViaUpperRbsde,
    ViaLowerRbsde,
    ViaBsde,
    Triple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatteryKind {
    Comparison,
    Uniqueness,
    Approximation,
}

#[derive(Debug, Clone)]
pub enum SchemePlan {
    Direct,
    Penalization {
        variant: PenalizationVariant,
        schedule: Vec<f64>,
    },
    Convolution {
        direction: Extremal,
        schedule: Vec<f64>,
    },
    Battery {
        kind: BatteryKind,
        cases: usize,
        seed: u64,
        schedule: Option<Vec<f64>>,
        direction: Extremal,
    },
}

/// Everything `run` needs, with the model objects constructed and checked.
#[derive(Debug)]
pub struct RunPlan {
    pub manifest: ExperimentManifest,
    pub lattice: Option<BrownianLattice>,
    pub xi_lattice: Option<TerminalCondition>,
    pub mc: Option<(TimeGrid, usize, u64)>,
    pub xi_expr: Expr,
    pub forcing: ForcingTerm,
    pub barriers: BarrierPair,
    pub generator: GeneratorSpec,
    pub split: Option<SplitGenerator>,
    pub scheme: SchemePlan,
    pub numerics: NumericsConfig,
    pub beta: f64,
    pub warnings: Vec<String>,
}

fn parse_data_expr(src: &str, what: &str) -> Result<Expr> {
    let e = Expr::parse(src).with_context(|| format!("in the `{what}` expression"))?;
    if e.uses_solution_vars() {
        bail!("the `{what}` expression must not reference y or z");
    }
    Ok(e)
}

fn modulus_from_expr(src: &str, what: &str) -> Result<generator::ModulusFn> {
    let e = Expr::parse(src).with_context(|| format!("in the `{what}` modulus"))?;
    if e.uses_solution_vars() {
        bail!("the `{what}` modulus must be a function of x only");
    }
    Ok(Arc::new(move |x: f64| {
        e.eval(&ExprCtx {
            t: 0.0,
            state: &[],
            y: 0.0,
            z: &[],
            x,
        })
    }))
}

fn coefficient_from_expr(src: &str, what: &str) -> Result<generator::CoefficientFn> {
    let e = parse_data_expr(src, what)?;
    Ok(Arc::new(move |t: f64, state: &[f64]| {
        e.eval(&ExprCtx::data(t, state))
    }))
}

/// Builds one driver from its definition.
pub fn build_generator(def: &GeneratorDef) -> Result<(GeneratorSpec, Option<SplitGenerator>)> {
    if let Some(id) = &def.catalog {
        let entry = catalog::find(id)
            .with_context(|| format!("unknown catalog id `{id}`"))?;
        return Ok((entry.generator, entry.split));
    }
    let Some(src) = &def.expression else {
        bail!("generator needs either `catalog` or `expression`");
    };
    let expr = Expr::parse(src).context("in the generator expression")?;
    let mut g = GeneratorSpec::new(src.clone(), move |p: &EvalPoint, y: f64, z: &[f64]| {
        expr.eval(&ExprCtx {
            t: p.t,
            state: p.state,
            y,
            z,
            x: 0.0,
        })
    });
    if let Some(classes) = &def.classes {
        g.classes = parse_class_list(classes)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?
            .into_iter()
            .collect::<BTreeSet<_>>();
    }
    let mut params = GeneratorParams::default();
    if let Some(s) = &def.rho {
        params.rho = Some(modulus_from_expr(s, "rho")?);
    }
    if let Some(s) = &def.phi {
        params.phi = Some(modulus_from_expr(s, "phi")?);
    }
    if let Some(s) = &def.f {
        params.f = Some(coefficient_from_expr(s, "f")?);
    }
    if let Some(s) = &def.f_tilde {
        params.f_tilde = Some(coefficient_from_expr(s, "f_tilde")?);
    }
    params.gamma = def.gamma;
    params.alpha = def.alpha;
    params.mu = def.mu;
    params.lambda = def.lambda;
    params.mu_tilde = def.mu_tilde;
    params.lambda_tilde = def.lambda_tilde;
    params.alpha_tilde = def.alpha_tilde;
    params.linear_bound = def.linear_bound;
    g.params = params;
    g.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;

    // explicit split pieces override a catalog-provided split
    let split = match (&def.g1, &def.g2) {
        (Some(g1), g2) => {
            let (g1, _) = build_generator(g1)?;
            let g2 = match g2 {
                Some(d) => Some(build_generator(d)?.0),
                None => None,
            };
            Some(SplitGenerator { g1, g2 })
        }
        _ => None,
    };
    Ok((g, split))
}

fn obstacle_from(src: &Option<String>, what: &str) -> Result<(Obstacle, Option<Expr>)> {
    match src.as_deref() {
        None | Some("none") => Ok((Obstacle::Absent, None)),
        Some(text) => {
            let e = parse_data_expr(text, what)?;
            let e2 = e.clone();
            Ok((
                Obstacle::present(ProcessSpec::from_fn(move |t, state| {
                    e2.eval(&ExprCtx::data(t, state))
                })),
                Some(e),
            ))
        }
    }
}

impl ExperimentManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: ExperimentManifest = toml::from_str(text).context("manifest parse error")?;
        Ok(m)
    }

    /// Canonical serialized form: parse -> serialize -> parse is identity.
    pub fn canonical(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    /// Validates the manifest and constructs the run plan.
    pub fn plan(&self) -> Result<RunPlan> {
        if self.version != MANIFEST_VERSION {
            bail!(
                "manifest version {} unsupported (this build reads version {MANIFEST_VERSION})",
                self.version
            );
        }
        let mut warnings = Vec::new();
        let grid = TimeGrid::new(self.model.horizon, self.model.n_steps)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;

        let xi_expr = parse_data_expr(&self.data.xi, "xi")?;
        let v_expr = match self.data.v.as_deref() {
            None | Some("none") => None,
            Some(text) => Some(parse_data_expr(text, "v")?),
        };
        let forcing = match &v_expr {
            None => ForcingTerm::zero(self.model.n_steps),
            Some(e) => {
                // deterministic cumulative forcing V(t)
                let e = e.clone();
                ForcingTerm::from_cumulative(&grid, move |t| e.eval(&ExprCtx::data(t, &[0.0])))
            }
        };
        if let Some(e) = &v_expr {
            if e.uses(rbsde_core::generator::expr::Var::State) {
                warnings.push(
                    "state-dependent forcing is applied through its deterministic part only"
                        .to_string(),
                );
            }
        }

        let (lower, _) = obstacle_from(&self.data.lower, "lower")?;
        let (upper, _) = obstacle_from(&self.data.upper, "upper")?;
        let barriers = BarrierPair::new(lower, upper);

        let (generator, catalog_split) = build_generator(&self.generator)?;
        let split = match (&self.generator.g1, catalog_split) {
            (Some(_), _) => {
                let (g1, _) = build_generator(self.generator.g1.as_ref().unwrap())?;
                let g2 = match &self.generator.g2 {
                    Some(d) => Some(build_generator(d)?.0),
                    None => None,
                };
                Some(SplitGenerator { g1, g2 })
            }
            (None, s) => s,
        };

        // scheme
        let schedule_required = |name: &str| -> Result<Vec<f64>> {
            let s = self
                .scheme
                .schedule
                .clone()
                .with_context(|| format!("scheme `{name}` needs a schedule"))?;
            if s.is_empty() {
                bail!("schedule must be non-empty");
            }
            for w in s.windows(2) {
                if w[1] <= w[0] {
                    bail!("schedule must be strictly increasing ({} after {})", w[1], w[0]);
                }
            }
            Ok(s)
        };
        let direction = match self.scheme.direction.as_deref() {
            None | Some("minimal") => Extremal::Minimal,
            Some("maximal") => Extremal::Maximal,
            Some(other) => bail!("unknown direction `{other}` (minimal | maximal)"),
        };
        let scheme = match self.scheme.kind.as_str() {
            "direct" => SchemePlan::Direct,
            "penalization" => {
                let schedule = schedule_required("penalization")?;
                let variant = match (
                    self.scheme.variant.as_deref(),
                    barriers.lower.is_absent(),
                    barriers.upper.is_absent(),
                ) {
                    (None, false, true) => PenalizationVariant::Lower,
                    (None, true, false) => PenalizationVariant::Upper,
                    (Some("via_upper_rbsde"), _, _) => PenalizationVariant::ViaUpperRbsde,
                    (Some("via_lower_rbsde"), _, _) => PenalizationVariant::ViaLowerRbsde,
                    (Some("via_bsde"), _, _) => PenalizationVariant::ViaBsde,
                    (Some("triple"), _, _) => PenalizationVariant::Triple,
                    (None, false, false) => bail!(
                        "two barriers present: pick a variant \
                         (via_upper_rbsde | via_lower_rbsde | via_bsde | triple)"
                    ),
                    (None, true, true) => bail!("penalization needs at least one barrier"),
                    (Some(other), _, _) => bail!("unknown penalization variant `{other}`"),
                };
                SchemePlan::Penalization { variant, schedule }
            }
            "convolution" => {
                if split.is_none() {
                    bail!("convolution scheme needs a split generator (g1 [+ g2])");
                }
                SchemePlan::Convolution {
                    direction,
                    schedule: schedule_required("convolution")?,
                }
            }
            "battery" => {
                let kind = match self.scheme.battery.as_deref() {
                    Some("comparison") => BatteryKind::Comparison,
                    Some("uniqueness") => BatteryKind::Uniqueness,
                    Some("approximation") => BatteryKind::Approximation,
                    Some(other) => bail!("unknown battery `{other}`"),
                    None => bail!("battery scheme needs a `battery` id"),
                };
                if kind == BatteryKind::Approximation && split.is_none() {
                    bail!("approximation battery needs a split generator");
                }
                SchemePlan::Battery {
                    kind,
                    cases: self.scheme.cases.unwrap_or(50),
                    seed: self.scheme.battery_seed.unwrap_or(1),
                    schedule: self.scheme.schedule.clone(),
                    direction,
                }
            }
            other => bail!("unknown scheme kind `{other}`"),
        };

        // numerics
        let mut numerics = NumericsConfig::default();
        if let Some(n) = &self.numerics {
            if let Some(tol) = n.fp_tol {
                numerics.fp_tol = tol;
            }
            if let Some(it) = n.max_iters {
                numerics.max_picard = it;
            }
            if let Some(tol) = n.monotone_tol {
                numerics.monotone_tol = tol;
            }
        }
        let beta = self
            .numerics
            .as_ref()
            .and_then(|n| n.beta)
            .unwrap_or(0.5);
        if !(beta > 0.0 && beta < 1.0) {
            bail!("beta must lie in (0, 1), got {beta}");
        }

        // backend
        match self.model.backend.as_str() {
            "lattice" => {
                let lattice = BrownianLattice::build(grid, self.model.d)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                barriers
                    .validate_on(&lattice)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                let xi = TerminalCondition::from_expr(&lattice, &xi_expr);
                let bad = barriers.terminal_inconsistencies(&lattice, xi.values());
                if !bad.is_empty() {
                    warnings.push(format!(
                        "terminal data escapes the barrier band at {} node(s); \
                         barriers constrain the interior steps only",
                        bad.len()
                    ));
                }
                Ok(RunPlan {
                    manifest: self.clone(),
                    lattice: Some(lattice),
                    xi_lattice: Some(xi),
                    mc: None,
                    xi_expr,
                    forcing,
                    barriers,
                    generator,
                    split,
                    scheme,
                    numerics,
                    beta,
                    warnings,
                })
            }
            "mc" => {
                let paths = self
                    .model
                    .paths
                    .context("mc backend needs `paths`")?;
                let seed = self
                    .model
                    .seed
                    .context("mc backend needs an explicit `seed` (no ambient entropy)")?;
                if !barriers.lower.is_absent() || !barriers.upper.is_absent() {
                    bail!("barriers are lattice-only; the mc backend solves plain equations");
                }
                if !matches!(scheme, SchemePlan::Direct) {
                    bail!("the mc backend supports the direct scheme only");
                }
                Ok(RunPlan {
                    manifest: self.clone(),
                    lattice: None,
                    xi_lattice: None,
                    mc: Some((grid, paths, seed)),
                    xi_expr,
                    forcing,
                    barriers,
                    generator,
                    split,
                    scheme,
                    numerics,
                    beta,
                    warnings,
                })
            }
            other => bail!("unknown backend `{other}` (lattice | mc)"),
        }
    }
}
