//! Built-in verification suites: each criterion runs at its pinned tolerance
//! and reports one pass/fail line with the measured values.

use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use rbsde_core::analysis::comparison::{generate_comparison_cases, run_comparison_battery};
use rbsde_core::analysis::mokobodzki::{mokobodzki_check, WitnessStrategy};
use rbsde_core::generator::convolve::{inf_convolve_z, SearchConfig};
use rbsde_core::*;

use crate::runner::{exit_code, run_manifest_text};

/// One verified criterion.
#[derive(Debug)]
pub struct CriterionOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub measured: String,
    pub wall: Duration,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:<12} ({}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.measured
        )
    }
}

fn outcome(
    id: &'static str,
    title: &'static str,
    started: Instant,
    passed: bool,
    measured: String,
) -> CriterionOutcome {
    CriterionOutcome {
        id,
        title,
        passed,
        measured,
        wall: started.elapsed(),
    }
}

fn unit_lattice(n: usize) -> BrownianLattice {
    BrownianLattice::build(TimeGrid::new(1.0, n).unwrap(), 1).unwrap()
}

/// 1: terminal variance is exact on the lattice for any step count, fast at
/// 512 steps.
pub fn criterion_martingale() -> CriterionOutcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for n in [1usize, 7, 32, 512] {
        let lattice = unit_lattice(n);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0]);
        let sol = solve_bsde(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(n),
            &NumericsConfig::default(),
        )
        .unwrap();
        worst = worst.max((sol.root_value() - 1.0).abs());
    }
    let t512 = {
        let lattice = unit_lattice(512);
        let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0]);
        let t0 = Instant::now();
        let _ = solve_bsde(
            &lattice,
            &xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(512),
            &NumericsConfig::default(),
        )
        .unwrap();
        t0.elapsed()
    };
    let passed = worst <= 1e-12 && t512 < Duration::from_secs(1);
    outcome(
        "martingale",
        "terminal variance exact",
        started,
        passed,
        format!("|Y0 - 1| <= {worst:.3e} (tol 1e-12), 512 steps in {t512:?} (< 1 s)"),
    )
}

/// 2: linear-driver closed form with first-order convergence.
pub fn criterion_linear() -> CriterionOutcome {
    let started = Instant::now();
    let err = |n: usize| {
        let lattice = unit_lattice(n);
        let xi = TerminalCondition::constant(&lattice, 1.0);
        let mut g = GeneratorSpec::from_tyz("ay", |_, y, _| 0.5 * y);
        g.params.linear_bound = Some(0.5);
        let sol = solve_bsde(
            &lattice,
            &xi,
            &g,
            &ForcingTerm::zero(n),
            &NumericsConfig::default(),
        )
        .unwrap();
        (sol.root_value() - 0.5f64.exp()).abs()
    };
    let (e512, e1024) = (err(512), err(1024));
    let ratio = e512 / e1024;
    let passed = e512 <= 5e-3 && e1024 < e512 && (1.7..=2.3).contains(&ratio);
    outcome(
        "linear",
        "closed form e^{1/2}",
        started,
        passed,
        format!("err(512) = {e512:.3e} (tol 5e-3), err(1024) = {e1024:.3e}, ratio = {ratio:.3}"),
    )
}

pub(crate) struct FuzzInstance {
    pub lattice: BrownianLattice,
    pub xi: TerminalCondition,
    pub lower: Obstacle,
    pub upper: Obstacle,
}

pub(crate) fn fuzz_instance(rng: &mut ChaCha20Rng, with_upper: bool) -> FuzzInstance {
    let n = rng.random_range(2usize..=64);
    let horizon = [0.5, 1.0, 2.0][rng.random_range(0..3usize)];
    let lattice = BrownianLattice::build(TimeGrid::new(horizon, n).unwrap(), 1).unwrap();
    let kind: u8 = rng.random_range(0..3);
    let (a, b, c): (f64, f64, f64) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.7..0.7),
        rng.random_range(-0.5..0.5),
    );
    let xi = TerminalCondition::from_fn(&lattice, |s| match kind {
        0 => a * s[0] * s[0] + b * s[0] + c,
        1 => a * s[0].abs() + b,
        _ => a * (1.3 * s[0]).cos() + b * s[0],
    });
    let l0: f64 = rng.random_range(-0.8..0.4);
    let slope: f64 = rng.random_range(-0.3..0.3);
    let lower = Obstacle::present(ProcessSpec::from_fn(move |t, s| l0 + slope * (s[0] + t)));
    let band: f64 = rng.random_range(0.4..1.5);
    let upper = if with_upper {
        Obstacle::present(ProcessSpec::from_fn(move |t, s| {
            l0 + slope * (s[0] + t) + band
        }))
    } else {
        Obstacle::Absent
    };
    FuzzInstance {
        lattice,
        xi,
        lower,
        upper,
    }
}

/// 3: 100-case fuzz equality of the lower-barrier direct scheme against the
/// optimal-stopping recursion.
pub fn criterion_snell() -> CriterionOutcome {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0xa11ce);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let inst = fuzz_instance(&mut rng, false);
        let n = inst.lattice.n_steps();
        let q = solve_rbsde_lower(
            &inst.lattice,
            &inst.xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(n),
            &inst.lower,
            &NumericsConfig::default(),
        )
        .unwrap();
        let oracle = snell_oracle(&inst.lattice, &inst.xi, &inst.lower).unwrap();
        worst = worst.max(q.y.sup_distance(&oracle));
    }
    outcome(
        "snell",
        "stopping-oracle equality",
        started,
        worst <= 1e-10,
        format!("worst nodewise gap {worst:.3e} over 100 cases (tol 1e-10)"),
    )
}

/// 4: same for the two-barrier scheme, plus exact orthogonality and exact
/// flat-off products.
pub fn criterion_dynkin() -> CriterionOutcome {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0xd1_4a11);
    let mut worst = 0.0f64;
    let mut ortho = 0usize;
    let mut flat = 0usize;
    for _ in 0..100 {
        let inst = fuzz_instance(&mut rng, true);
        let n = inst.lattice.n_steps();
        let barriers = BarrierPair::new(inst.lower.clone(), inst.upper.clone());
        let q = solve_drbsde(
            &inst.lattice,
            &inst.xi,
            &GeneratorSpec::zero(),
            &ForcingTerm::zero(n),
            &barriers,
            &NumericsConfig::default(),
        )
        .unwrap();
        let oracle = dynkin_oracle(&inst.lattice, &inst.xi, &barriers).unwrap();
        worst = worst.max(q.y.sup_distance(&oracle));
        for step in 0..n {
            for node in 0..inst.lattice.node_count(step) {
                if q.dk.at(step, node).min(q.da.at(step, node)) != 0.0 {
                    ortho += 1;
                }
            }
        }
        let report = flat_off_report(&inst.lattice, &q, &barriers);
        if report.kl != 0.0 || report.ua != 0.0 {
            flat += 1;
        }
    }
    let passed = worst <= 1e-10 && ortho == 0 && flat == 0;
    outcome(
        "dynkin",
        "game-oracle equality",
        started,
        passed,
        format!(
            "worst gap {worst:.3e} (tol 1e-10), orthogonality violations {ortho}, \
             inexact flat-off products {flat}"
        ),
    )
}

/// 5: penalization convergence on the binding instance at the pinned levels.
pub fn criterion_penalization() -> CriterionOutcome {
    let started = Instant::now();
    let lattice = unit_lattice(32);
    let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0]);
    let lower = Obstacle::constant(0.5);
    let ladder = penalization_ladder_lower(
        &lattice,
        &xi,
        &GeneratorSpec::zero(),
        &ForcingTerm::zero(32),
        &lower,
        &[1.0, 4.0, 16.0, 64.0, 256.0, 1024.0],
        &NumericsConfig::default(),
        0.5,
    )
    .unwrap();
    let last = ladder.entries.last().unwrap();
    let wall = started.elapsed();
    let passed = ladder.monotone_violations == 0
        && last.gap_y_sup <= 1e-2
        && last.gap_k_sup <= 5e-2
        && wall < Duration::from_secs(10);
    outcome(
        "penalization",
        "ladder convergence",
        started,
        passed,
        format!(
            "monotone violations {}, sup-node gap {:.6} (tol 1e-2), K gap {:.6} (tol 5e-2), {wall:?}",
            ladder.monotone_violations, last.gap_y_sup, last.gap_k_sup
        ),
    )
}

/// 6: the three two-barrier penalization families agree with the direct
/// scheme at the root and sandwich each other nodewise.
pub fn criterion_triple() -> CriterionOutcome {
    let started = Instant::now();
    let lattice = unit_lattice(32);
    let xi = TerminalCondition::from_fn(&lattice, |s| s[0].clamp(-0.6, 0.6));
    let barriers = BarrierPair::new(Obstacle::constant(-0.6), Obstacle::constant(0.6));
    let mut g = GeneratorSpec::from_tyz("lin", |_, y, z| -0.5 * y + 0.25 * z);
    g.params.linear_bound = Some(0.5);
    let study = triple_penalization_study(
        &lattice,
        &xi,
        &g,
        &ForcingTerm::zero(32),
        &barriers,
        &[1.0, 4.0, 16.0, 64.0, 256.0, 1024.0],
        &NumericsConfig::default(),
        0.5,
    )
    .unwrap();
    let worst_root = study
        .root_gaps
        .iter()
        .fold(0.0f64, |m, g| m.max(*g));
    let passed = worst_root <= 2e-2 && study.sandwich_violations == 0;
    outcome(
        "triple",
        "two-barrier variant agreement",
        started,
        passed,
        format!(
            "worst root gap {worst_root:.3e} (tol 2e-2), sandwich violations {}",
            study.sandwich_violations
        ),
    )
}

/// 7: randomized ordered-data comparison battery.
pub fn criterion_comparison() -> CriterionOutcome {
    let started = Instant::now();
    let cases = generate_comparison_cases(200, 0xc0817a);
    let report = run_comparison_battery(&cases, &NumericsConfig::default()).unwrap();
    let passed = report.lipschitz_ordered == report.lipschitz_cases
        && report.equal_barrier_increments_ordered == report.equal_barrier_cases
        && report.osgood_confirmed_violations == 0;
    outcome(
        "comparison",
        "ordered data, ordered solutions",
        started,
        passed,
        format!(
            "ordering {}/{}, increments {}/{}, osgood confirmed violations {}",
            report.lipschitz_ordered,
            report.lipschitz_cases,
            report.equal_barrier_increments_ordered,
            report.equal_barrier_cases,
            report.osgood_confirmed_violations
        ),
    )
}

/// 8: convolution regularizer against its closed forms and monotonicity.
pub fn criterion_convolution() -> CriterionOutcome {
    let started = Instant::now();
    // Moreau case, exponent 1, constant 4
    let square = GeneratorSpec::from_tyz("z^2", |_, _, z| z * z);
    let conv = inf_convolve_z(&square, 3.0, 0.5, 1.0, &SearchConfig::default()).unwrap();
    let mut worst = 0.0f64;
    for (z, want) in [(0.0, 0.0), (1.0, 1.0), (3.0, 8.0)] {
        worst = worst.max((conv.eval_probe(0.0, &[0.0], 0.0, z) - want).abs());
    }

    // Hölder fixed point: exact reproduction at every probe
    let root = GeneratorSpec::from_tyz("sqrt", |_, _, z| z.abs().sqrt());
    let mut fixed_exact = true;
    for n in [0.0, 4.0, 64.0] {
        let c = inf_convolve_z(&root, n, 0.5, 0.5, &SearchConfig::default()).unwrap();
        for z in [0.0, 0.4, 1.0, 2.7] {
            if c.eval_probe(0.0, &[0.0], 0.0, z) != z.abs().sqrt() {
                fixed_exact = false;
            }
        }
    }

    // monotonicity in the level over a shared candidate box
    let wavy = GeneratorSpec::from_tyz("wavy", |_, _, z| (2.0 * z).sin() + 0.1 * z * z);
    let locked = SearchConfig::schedule_locked(1.0 + 2.0 * 0.5);
    let mut monotone = true;
    for z in [0.0, 0.7, -1.3, 3.0] {
        let mut prev = f64::NEG_INFINITY;
        let mut n = 1.0;
        while n <= 256.0 {
            let c = inf_convolve_z(&wavy, n, 0.5, 0.5, &locked).unwrap();
            let v = c.eval_probe(0.0, &[0.0], 0.0, z);
            if v < prev - 1e-12 {
                monotone = false;
            }
            prev = v;
            n *= 2.0;
        }
    }

    let passed = worst <= 1e-3 && fixed_exact && monotone;
    outcome(
        "convolution",
        "regularizer oracle",
        started,
        passed,
        format!(
            "Moreau probe error {worst:.3e} (tol 1e-3), fixed point exact {fixed_exact}, \
             monotone {monotone}"
        ),
    )
}

/// 9: every successful reflected solve certifies its own barrier
/// compatibility: sandwich plus exact decomposition closure.
pub fn criterion_mokobodzki() -> CriterionOutcome {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x3031);
    let mut closures = 0usize;
    let mut total = 0usize;
    let mut worst_residual = 0.0f64;
    for case in 0..100 {
        let with_upper = case % 2 == 0;
        let inst = fuzz_instance(&mut rng, with_upper);
        let n = inst.lattice.n_steps();
        let barriers = BarrierPair::new(inst.lower.clone(), inst.upper.clone());
        let v = ForcingTerm::zero(n);
        let q = solve_drbsde(
            &inst.lattice,
            &inst.xi,
            &GeneratorSpec::zero(),
            &v,
            &barriers,
            &NumericsConfig::default(),
        )
        .unwrap();
        let w = mokobodzki_check(
            &inst.lattice,
            &GeneratorSpec::zero(),
            &barriers,
            WitnessStrategy::UseSolution(&q),
            &v,
        )
        .unwrap();
        total += 1;
        worst_residual = worst_residual.max(w.decomposition_residual);
        if w.sandwich_ok && w.decomposition_residual <= 1e-10 && w.g_at_x_norm.is_finite() {
            closures += 1;
        }
    }
    outcome(
        "mokobodzki",
        "necessity closure",
        started,
        closures == total,
        format!("{closures}/{total} closures, worst residual {worst_residual:.3e} (tol 1e-10)"),
    )
}

/// 10: Monte Carlo backend against the lattice on the cubic-drift instance,
/// bit-for-bit reproducible under the seed.
pub fn criterion_montecarlo() -> CriterionOutcome {
    let started = Instant::now();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let g = GeneratorSpec::from_tyz("cube", |_, y, _| -y.powi(3) + 1.0);
    let run = || {
        let bundle = sample_paths(grid, 1, 100_000, 4242).unwrap();
        let xi: Vec<f64> = (0..100_000)
            .map(|p| {
                let s = bundle.state(p, 64)[0];
                s * s
            })
            .collect();
        solve_bsde_mc(
            &bundle,
            &xi,
            &g,
            &ForcingTerm::zero(64),
            &RegressionConfig::default(),
            &NumericsConfig::penalized(),
        )
        .unwrap()
    };
    let first = run();
    let second = run();
    let lattice = unit_lattice(64);
    let xi = TerminalCondition::from_fn(&lattice, |s| s[0] * s[0]);
    let reference = solve_bsde(
        &lattice,
        &xi,
        &g,
        &ForcingTerm::zero(64),
        &NumericsConfig::penalized(),
    )
    .unwrap()
    .root_value();
    let gap = (first.y0 - reference).abs();
    let reproducible = first.y0.to_bits() == second.y0.to_bits();
    let wall = started.elapsed();
    let passed = gap <= 2e-2 && reproducible && wall < Duration::from_secs(60);
    outcome(
        "montecarlo",
        "cross-validation",
        started,
        passed,
        format!(
            "|mc - lattice| = {gap:.3e} (tol 2e-2), bitwise reproducible {reproducible}, {wall:?}"
        ),
    )
}

/// 11: record digests reproduce under reruns; an injected failing check
/// yields a nonzero exit code.
pub fn criterion_determinism() -> CriterionOutcome {
    let started = Instant::now();
    let bundled = [
        include_str!("../manifests/snell_penalization.toml"),
        include_str!("../manifests/dynkin_triple.toml"),
        include_str!("../manifests/linear_driver.toml"),
        include_str!("../manifests/ex71_drbsde.toml"),
    ];
    let mut reproducible = true;
    let mut clean = true;
    for text in bundled {
        let a = run_manifest_text(text, None).unwrap();
        let b = run_manifest_text(text, None).unwrap();
        if a.scalar_digest != b.scalar_digest || a.inputs_digest != b.inputs_digest {
            reproducible = false;
        }
        if exit_code(&a) != 0 {
            clean = false;
        }
    }
    let failing = run_manifest_text(include_str!("../manifests/failing_check.toml"), None)
        .unwrap();
    let fails = exit_code(&failing) != 0 && failing.failed_assertions() > 0;
    let passed = reproducible && clean && fails;
    outcome(
        "determinism",
        "digests and exit codes",
        started,
        passed,
        format!(
            "digests reproduce {reproducible}, bundled manifests exit clean {clean}, \
             injected failure exits nonzero {fails}"
        ),
    )
}

/// The core suite: `(id, runner)` in criterion order.
pub const CORE_SUITE: [(&str, fn() -> CriterionOutcome); 11] = [
    ("martingale", criterion_martingale),
    ("linear", criterion_linear),
    ("snell", criterion_snell),
    ("dynkin", criterion_dynkin),
    ("penalization", criterion_penalization),
    ("triple", criterion_triple),
    ("comparison", criterion_comparison),
    ("convolution", criterion_convolution),
    ("mokobodzki", criterion_mokobodzki),
    ("montecarlo", criterion_montecarlo),
    ("determinism", criterion_determinism),
];

/// Runs every criterion whose id contains `filter` (all when absent).
pub fn run_suite(suite: &str, filter: Option<&str>) -> Result<Vec<CriterionOutcome>> {
    if suite != "core" {
        bail!("unknown suite `{suite}`; available suites: core");
    }
    let mut out = Vec::new();
    for (id, f) in CORE_SUITE {
        if let Some(needle) = filter {
            if !id.contains(needle) {
                continue;
            }
        }
        out.push(f());
    }
    Ok(out)
}
