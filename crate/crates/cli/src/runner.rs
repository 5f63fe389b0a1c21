//! Executes a validated plan, collecting scalars, tables and assertion
//! outcomes into a reproducible run record.
//!
//! Scalar results and tables are digested over their exact bit patterns, so
//! re-running an identical manifest on the lattice backend reproduces the
//! digests verbatim; wall-clock time stays outside the digest.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use rbsde_core::analysis::approximation::approximation_battery;
use rbsde_core::analysis::comparison::{generate_comparison_cases, run_comparison_battery};
use rbsde_core::analysis::mokobodzki::{mokobodzki_check, WitnessStrategy};
use rbsde_core::analysis::norms::{estimate_norms, StoppingFamilyConfig};
use rbsde_core::analysis::uniqueness::uniqueness_probe;
use rbsde_core::generator::checks::Verdict;
use rbsde_core::*;

use crate::manifest::{
    BatteryKind, ExperimentManifest, PenalizationVariant, RunPlan, SchemePlan,
};

/// Output schema version: column names and order are stable per version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub inputs_digest: String,
    pub scalars: BTreeMap<String, f64>,
    pub scalar_digest: String,
    pub assertions: Vec<AssertionOutcome>,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
    /// Excluded from every digest.
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn failed_assertions(&self) -> usize {
        self.assertions.iter().filter(|a| !a.passed).count()
    }
}

/// Exit-code contract: zero iff no assertion failed.
pub fn exit_code(record: &RunRecord) -> i32 {
    if record.failed_assertions() == 0 {
        0
    } else {
        1
    }
}

fn hex(data: &[u8]) -> String {
    data.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha(text: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(text);
    hex(&h.finalize())
}

fn digest_results(scalars: &BTreeMap<String, f64>, tables: &[Table]) -> String {
    let mut h = Sha256::new();
    h.update(SCHEMA_VERSION.to_le_bytes());
    for (k, v) in scalars {
        h.update(k.as_bytes());
        h.update(v.to_bits().to_le_bytes());
    }
    for t in tables {
        h.update(t.name.as_bytes());
        for c in &t.columns {
            h.update(c.as_bytes());
        }
        for row in &t.rows {
            for v in row {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    hex(&h.finalize())
}

struct Collector {
    scalars: BTreeMap<String, f64>,
    assertions: Vec<AssertionOutcome>,
    tables: Vec<Table>,
    warnings: Vec<String>,
}

impl Collector {
    fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    fn assert(&mut self, name: &str, passed: bool, detail: String) {
        self.assertions.push(AssertionOutcome {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn solution_table(lattice: &BrownianLattice, q: &SolutionQuadruple) -> Table {
    let n = lattice.n_steps();
    let mut rows = Vec::with_capacity(n + 1);
    for step in 0..=n {
        let w = lattice.weights(step);
        let ys = q.y.step_values(step);
        let mut mean = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (wi, yi) in w.iter().zip(ys) {
            mean += wi * yi;
            lo = lo.min(*yi);
            hi = hi.max(*yi);
        }
        let (dk_mean, da_mean) = if step < n {
            let dk = w
                .iter()
                .zip(q.dk.step_values(step))
                .map(|(w, v)| w * v)
                .sum();
            let da = w
                .iter()
                .zip(q.da.step_values(step))
                .map(|(w, v)| w * v)
                .sum();
            (dk, da)
        } else {
            (0.0, 0.0)
        };
        rows.push(vec![
            step as f64,
            lattice.grid().t(step),
            mean,
            lo,
            hi,
            dk_mean,
            da_mean,
        ]);
    }
    Table {
        name: "solution".into(),
        columns: ["step", "t", "y_mean", "y_min", "y_max", "dk_mean", "da_mean"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    }
}

fn ladder_table(name: &str, lattice: &BrownianLattice, ladder: &PenalizationLadder) -> Table {
    let rows = ladder
        .entries
        .iter()
        .map(|e| {
            vec![
                e.n,
                e.solution.root_value(),
                e.solution.k_terminal_mean(lattice),
                e.solution.a_terminal_mean(lattice),
                e.gap_y_sup,
                e.gap_y_sbeta,
                e.gap_z_mbeta,
                e.gap_k_sup,
                e.gap_a_sup,
            ]
        })
        .collect();
    Table {
        name: name.into(),
        columns: [
            "n",
            "y0",
            "k_t_mean",
            "a_t_mean",
            "gap_y_sup",
            "gap_y_sbeta",
            "gap_z_mbeta",
            "gap_k_sup",
            "gap_a_sup",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows,
    }
}

fn run_direct_lattice(plan: &RunPlan, col: &mut Collector) -> Result<()> {
    let lattice = plan.lattice.as_ref().unwrap();
    let xi = plan.xi_lattice.as_ref().unwrap();
    let q = solve_drbsde(
        lattice,
        xi,
        &plan.generator,
        &plan.forcing,
        &plan.barriers,
        &plan.numerics,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    col.scalar("y0", q.root_value());
    col.scalar("k_t_mean", q.k_terminal_mean(lattice));
    col.scalar("a_t_mean", q.a_terminal_mean(lattice));
    col.scalar("fp_max_residual", q.diagnostics.max_residual);

    let reflected =
        !plan.barriers.lower.is_absent() || !plan.barriers.upper.is_absent();
    if reflected {
        let report = flat_off_report(lattice, &q, &plan.barriers);
        col.scalar("flat_kl", report.kl);
        col.scalar("flat_ua", report.ua);
        col.scalar("ortho_violations", report.ortho_violations as f64);
        col.assert(
            "flat_off_exact",
            report.kl == 0.0 && report.ua == 0.0,
            format!("kl = {:.3e}, ua = {:.3e}", report.kl, report.ua),
        );
        col.assert(
            "orthogonality",
            report.ortho_violations == 0,
            format!("{} node(s) with min(dK, dA) > 0", report.ortho_violations),
        );
        let witness = mokobodzki_check(
            lattice,
            &plan.generator,
            &plan.barriers,
            WitnessStrategy::UseSolution(&q),
            &plan.forcing,
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        col.scalar("witness_residual", witness.decomposition_residual);
        col.scalar("witness_g_norm", witness.g_at_x_norm);
        col.scalar("witness_c_variation", witness.c_variation);
        col.assert(
            "barrier_compatibility_closure",
            witness.sandwich_ok && witness.decomposition_residual <= 1e-10,
            format!(
                "sandwich {} residual {:.3e}",
                witness.sandwich_ok, witness.decomposition_residual
            ),
        );
    }

    let norms = estimate_norms(
        lattice,
        &q.y,
        Some(&q.z),
        None,
        plan.beta,
        None,
        &StoppingFamilyConfig::default(),
    );
    col.scalar("s_beta", norms.s_beta);
    col.scalar("m_beta", norms.m_beta);
    col.scalar("xi_mean_abs", xi.mean_abs(lattice));
    col.tables.push(Table {
        name: "classd".into(),
        columns: ["c", "tail_expectation"].iter().map(|s| s.to_string()).collect(),
        rows: norms.classd_curve.iter().map(|(c, v)| vec![*c, *v]).collect(),
    });

    col.tables.push(solution_table(lattice, &q));
    Ok(())
}

fn run_penalization(
    plan: &RunPlan,
    variant: PenalizationVariant,
    schedule: &[f64],
    col: &mut Collector,
) -> Result<()> {
    let lattice = plan.lattice.as_ref().unwrap();
    let xi = plan.xi_lattice.as_ref().unwrap();
    let g = &plan.generator;
    let v = &plan.forcing;
    let cfg = &plan.numerics;
    let beta = plan.beta;

    let push_ladder = |name: &str, ladder: &PenalizationLadder, col: &mut Collector| {
        col.tables.push(ladder_table(name, lattice, ladder));
        col.assert(
            &format!("{name}_monotone"),
            ladder.monotone_violations == 0,
            format!("{} violation(s)", ladder.monotone_violations),
        );
        col.assert(
            &format!("{name}_tail_gaps_nonincreasing"),
            ladder.tail_gaps_nonincreasing,
            "gap norms over the last three levels".into(),
        );
    };

    match variant {
        PenalizationVariant::Lower => {
            let ladder = penalization_ladder_lower(
                lattice,
                xi,
                g,
                v,
                &plan.barriers.lower,
                schedule,
                cfg,
                beta,
            )
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            col.scalar("y0", ladder.limit().root_value());
            col.scalar("gap_y_sup", ladder.entries.last().unwrap().gap_y_sup);
            col.scalar(
                "full_sequence_converged",
                ladder.full_sequence_converged as u8 as f64,
            );
            push_ladder("ladder", &ladder, col);
        }
        PenalizationVariant::Upper => {
            let ladder = penalization_ladder_upper(
                lattice,
                xi,
                g,
                v,
                &plan.barriers.upper,
                schedule,
                cfg,
                beta,
            )
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            col.scalar("y0", ladder.limit().root_value());
            col.scalar("gap_y_sup", ladder.entries.last().unwrap().gap_y_sup);
            push_ladder("ladder", &ladder, col);
        }
        PenalizationVariant::ViaUpperRbsde
        | PenalizationVariant::ViaLowerRbsde
        | PenalizationVariant::ViaBsde => {
            let lv = match variant {
                PenalizationVariant::ViaUpperRbsde => LadderVariant::DoubleViaUpperRbsde,
                PenalizationVariant::ViaLowerRbsde => LadderVariant::DoubleViaLowerRbsde,
                _ => LadderVariant::DoubleViaBsde,
            };
            let ladder = penalization_ladder_double(
                lattice,
                xi,
                g,
                v,
                &plan.barriers,
                schedule,
                lv,
                cfg,
                beta,
            )
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            col.scalar("y0", ladder.limit().root_value());
            col.scalar("gap_y_sup", ladder.entries.last().unwrap().gap_y_sup);
            push_ladder("ladder", &ladder, col);
        }
        PenalizationVariant::Triple => {
            let study = triple_penalization_study(
                lattice,
                xi,
                g,
                v,
                &plan.barriers,
                schedule,
                cfg,
                beta,
            )
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            col.scalar("y0", study.via_bsde.direct.root_value());
            col.scalar("root_gap_via_upper", study.root_gaps[0]);
            col.scalar("root_gap_via_bsde", study.root_gaps[1]);
            col.scalar("root_gap_via_lower", study.root_gaps[2]);
            col.scalar("sandwich_violations", study.sandwich_violations as f64);
            col.assert(
                "sandwich",
                study.sandwich_violations == 0,
                format!("{} node(s) violate the variant sandwich", study.sandwich_violations),
            );
            push_ladder("ladder_via_upper", &study.via_upper, col);
            push_ladder("ladder_via_bsde", &study.via_bsde, col);
            push_ladder("ladder_via_lower", &study.via_lower, col);
        }
    }
    Ok(())
}

fn run_convolution(
    plan: &RunPlan,
    direction: Extremal,
    schedule: &[f64],
    col: &mut Collector,
) -> Result<()> {
    let lattice = plan.lattice.as_ref().unwrap();
    let xi = plan.xi_lattice.as_ref().unwrap();
    let split = plan.split.as_ref().unwrap();
    let ladder = solve_extremal_via_convolution(
        lattice,
        xi,
        split,
        &plan.forcing,
        schedule,
        direction,
        &plan.numerics,
        None,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    col.scalar("y0", ladder.limit().root_value());
    col.scalar("final_gap", ladder.final_gap());
    col.assert("schedule_monotone", true, "asserted during the run".into());
    let rows = ladder
        .entries
        .iter()
        .map(|e| vec![e.n, e.solution.root_value(), e.cauchy_gap])
        .collect();
    col.tables.push(Table {
        name: "schedule".into(),
        columns: ["n", "y0", "cauchy_gap"].iter().map(|s| s.to_string()).collect(),
        rows,
    });
    Ok(())
}

fn run_battery(
    plan: &RunPlan,
    kind: BatteryKind,
    cases: usize,
    seed: u64,
    schedule: Option<&[f64]>,
    direction: Extremal,
    col: &mut Collector,
) -> Result<()> {
    match kind {
        BatteryKind::Comparison => {
            let list = generate_comparison_cases(cases, seed);
            let report = run_comparison_battery(&list, &plan.numerics)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            col.scalar("lipschitz_cases", report.lipschitz_cases as f64);
            col.scalar("lipschitz_ordered", report.lipschitz_ordered as f64);
            col.scalar("equal_barrier_cases", report.equal_barrier_cases as f64);
            col.scalar(
                "equal_barrier_increments_ordered",
                report.equal_barrier_increments_ordered as f64,
            );
            col.scalar("osgood_cases", report.osgood_cases as f64);
            col.scalar(
                "osgood_confirmed_violations",
                report.osgood_confirmed_violations as f64,
            );
            col.assert(
                "lipschitz_ordering",
                report.lipschitz_ordered == report.lipschitz_cases,
                format!("{}/{}", report.lipschitz_ordered, report.lipschitz_cases),
            );
            col.assert(
                "increment_ordering",
                report.equal_barrier_increments_ordered == report.equal_barrier_cases,
                format!(
                    "{}/{}",
                    report.equal_barrier_increments_ordered, report.equal_barrier_cases
                ),
            );
            col.assert(
                "osgood_no_confirmed_violation",
                report.osgood_confirmed_violations == 0,
                format!("{} confirmed", report.osgood_confirmed_violations),
            );
            let rows = report
                .outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    vec![
                        i as f64,
                        match o.verdict {
                            Verdict::Pass => 0.0,
                            Verdict::Fail => 1.0,
                            Verdict::Inconclusive => 2.0,
                        },
                        o.margin,
                        o.increments_ok.map(|b| b as u8 as f64).unwrap_or(-1.0),
                    ]
                })
                .collect();
            col.tables.push(Table {
                name: "cases".into(),
                columns: ["case", "verdict", "margin", "increments_ok"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                rows,
            });
        }
        BatteryKind::Uniqueness => {
            let lattice = plan.lattice.as_ref().unwrap();
            let xi = plan.xi_lattice.as_ref().unwrap();
            let report = uniqueness_probe(
                lattice,
                xi,
                &plan.generator,
                &plan.forcing,
                &plan.barriers,
                schedule,
                &plan.numerics,
                2e-2,
            )
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            col.scalar("rerun_max_dev", report.rerun_max_dev);
            if let Some(dev) = report.ladder_dev {
                col.scalar("ladder_dev", dev);
            }
            col.assert(
                "uniqueness_agreement",
                report.verdict != Verdict::Fail,
                report.detail.clone(),
            );
        }
        BatteryKind::Approximation => {
            let lattice = plan.lattice.as_ref().unwrap();
            let xi = plan.xi_lattice.as_ref().unwrap();
            let split = plan.split.as_ref().unwrap();
            let schedule =
                schedule.context("approximation battery needs a schedule")?;
            let report = approximation_battery(
                lattice,
                xi,
                split,
                &plan.forcing,
                &plan.barriers,
                schedule,
                direction,
                &plan.numerics,
            )
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            col.assert("y_monotone", report.y_monotone_ok, String::new());
            col.assert(
                "k_increments_monotone",
                report.k_increments_monotone_ok,
                String::new(),
            );
            col.assert(
                "a_increments_monotone",
                report.a_increments_monotone_ok,
                String::new(),
            );
            col.assert(
                "tail_gaps_nonincreasing",
                report.tail_gaps_nonincreasing,
                String::new(),
            );
            let rows = report
                .entries
                .iter()
                .map(|e| {
                    vec![
                        e.n,
                        e.y0,
                        e.k_terminal_mean,
                        e.a_terminal_mean,
                        e.gap_y,
                        e.gap_k,
                        e.gap_a,
                    ]
                })
                .collect();
            col.tables.push(Table {
                name: "approximation".into(),
                columns: ["n", "y0", "k_mean", "a_mean", "gap_y", "gap_k", "gap_a"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                rows,
            });
        }
    }
    Ok(())
}

fn run_mc(plan: &RunPlan, col: &mut Collector) -> Result<()> {
    let (grid, paths, seed) = plan.mc.unwrap();
    let bundle = sample_paths(grid, plan.manifest.model.d, paths, seed)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let n = grid.n_steps();
    let xi: Vec<f64> = (0..paths)
        .map(|p| {
            let state = bundle.state(p, n);
            plan.xi_expr.eval(&rbsde_core::generator::expr::ExprCtx::data(
                grid.horizon(),
                state,
            ))
        })
        .collect();
    // heavy-tailed terminal data is accepted; stability is reported, not
    // asserted
    let mean_abs: f64 = xi.iter().map(|v| v.abs()).sum::<f64>() / paths as f64;
    let mut cfg = plan.numerics.clone();
    cfg.contraction = ContractionPolicy::BisectionFallback;
    let sol = solve_bsde_mc(
        &bundle,
        &xi,
        &plan.generator,
        &plan.forcing,
        &RegressionConfig::default(),
        &cfg,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    col.scalar("y0", sol.y0);
    col.scalar("std_error", sol.std_error);
    col.scalar("max_condition", sol.max_condition);
    col.scalar("xi_mean_abs", mean_abs);
    col.scalar("fp_max_residual", sol.diagnostics.max_residual);
    Ok(())
}

/// Runs a plan and assembles the record.  When `out_dir` is given the record
/// and every table are written beneath it.
pub fn run_plan(plan: &RunPlan, out_dir: Option<&Path>) -> Result<RunRecord> {
    let start = Instant::now();
    let mut col = Collector {
        scalars: BTreeMap::new(),
        assertions: Vec::new(),
        tables: Vec::new(),
        warnings: plan.warnings.clone(),
    };

    match &plan.scheme {
        SchemePlan::Direct => {
            if plan.mc.is_some() {
                run_mc(plan, &mut col)?;
            } else {
                run_direct_lattice(plan, &mut col)?;
            }
        }
        SchemePlan::Penalization { variant, schedule } => {
            run_penalization(plan, *variant, schedule, &mut col)?;
        }
        SchemePlan::Convolution {
            direction,
            schedule,
        } => {
            run_convolution(plan, *direction, schedule, &mut col)?;
        }
        SchemePlan::Battery {
            kind,
            cases,
            seed,
            schedule,
            direction,
        } => {
            run_battery(
                plan,
                *kind,
                *cases,
                *seed,
                schedule.as_deref(),
                *direction,
                &mut col,
            )?;
        }
    }

    // optional regression pin
    if let Some(checks) = &plan.manifest.checks {
        let y0 = col.scalars.get("y0").copied().unwrap_or(f64::NAN);
        let passed = (y0 - checks.y0).abs() <= checks.y0_tol;
        col.assert(
            "y0_check",
            passed,
            format!(
                "y0 = {y0}, expected {} within {}",
                checks.y0, checks.y0_tol
            ),
        );
    }

    let canonical = plan.manifest.canonical();
    let manifest_hash = sha(canonical.as_bytes());
    let inputs_digest = {
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        if let Some(xi) = &plan.xi_lattice {
            for v in xi.values() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        if let Some((_, paths, seed)) = plan.mc {
            h.update(paths.to_le_bytes());
            h.update(seed.to_le_bytes());
        }
        hex(&h.finalize())
    };
    let scalar_digest = digest_results(&col.scalars, &col.tables);

    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        manifest_hash,
        inputs_digest,
        scalars: col.scalars,
        scalar_digest,
        assertions: col.assertions,
        tables: col.tables,
        warnings: col.warnings,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let formats: Vec<String> = plan
            .manifest
            .outputs
            .as_ref()
            .and_then(|o| o.formats.clone())
            .unwrap_or_else(|| vec!["csv".into(), "json".into()]);
        if formats.iter().any(|f| f == "json") {
            std::fs::write(
                dir.join("record.json"),
                serde_json::to_string_pretty(&record)?,
            )?;
        }
        if formats.iter().any(|f| f == "csv") {
            for table in &record.tables {
                std::fs::write(dir.join(format!("{}.csv", table.name)), table.to_csv())?;
            }
        }
    }
    Ok(record)
}

/// Parses, validates and runs a manifest text.
pub fn run_manifest_text(text: &str, out_dir: Option<&Path>) -> Result<RunRecord> {
    let manifest = ExperimentManifest::parse(text)?;
    let plan = manifest.plan()?;
    run_plan(&plan, out_dir)
}
