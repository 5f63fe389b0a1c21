//! Command-line entry point: `run` executes a manifest, `verify` runs the
//! built-in criterion suites, `catalog` lists the bundled drivers.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use rbsde_cli::manifest::ExperimentManifest;
use rbsde_cli::runner::{exit_code, run_plan};
use rbsde_cli::suites;
use rbsde_core::generator::catalog;

#[derive(Parser)]
#[command(name = "rbsde", version, about = "Reflected-BSDE laboratory")]
struct Cli {
    /// Output directory (defaults to $RBSDE_OUT_DIR, then ./rbsde-out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads for node-parallel solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Norm exponent in (0, 1) overriding the manifest value.
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Fixed-point tolerance overriding the manifest value.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment manifest.
    Run {
        /// Path to the manifest (TOML).
        file: PathBuf,
    },
    /// Run a verification suite and print one line per criterion.
    Verify {
        /// Suite id (`core`).
        suite: String,
        /// Only run criteria whose id contains this substring.
        #[arg(long)]
        only: Option<String>,
    },
    /// List the bundled drivers, optionally filtered by id substring.
    Catalog { filter: Option<String> },
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("RBSDE_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("rbsde-out"))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // ignore the error when a pool already exists (tests, reruns)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    match &cli.command {
        Command::Run { file } => {
            let text = std::fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            let mut manifest = ExperimentManifest::parse(&text)?;
            if let Some(beta) = cli.beta {
                manifest.numerics.get_or_insert_with(Default::default).beta = Some(beta);
            }
            if let Some(tol) = cli.tol {
                manifest
                    .numerics
                    .get_or_insert_with(Default::default)
                    .fp_tol = Some(tol);
            }
            let plan = manifest.plan()?;
            let stem = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let base = cli.out_dir.clone().unwrap_or_else(default_out_dir);
            let dir = base.join(stem);
            let record = run_plan(&plan, Some(&dir))?;
            for w in &record.warnings {
                eprintln!("warning: {w}");
            }
            for a in &record.assertions {
                eprintln!(
                    "{} {} {}",
                    if a.passed { "ok  " } else { "FAIL" },
                    a.name,
                    a.detail
                );
            }
            println!("record: {}", dir.join("record.json").display());
            println!("scalar digest: {}", record.scalar_digest);
            if let Some(y0) = record.scalars.get("y0") {
                println!("y0 = {y0}");
            }
            Ok(ExitCode::from(exit_code(&record) as u8))
        }
        Command::Verify { suite, only } => {
            let outcomes = suites::run_suite(suite, only.as_deref())?;
            let mut failed = 0;
            for o in &outcomes {
                println!("{}", o.line());
                if !o.passed {
                    failed += 1;
                }
            }
            println!(
                "{} criteria, {} failed",
                outcomes.len(),
                failed
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Catalog { filter } => {
            let entries = catalog::catalog();
            let mut shown = 0;
            println!("{:<10} {:<28} parameters", "id", "classes");
            for e in entries {
                if let Some(f) = filter {
                    if !e.id.contains(f.as_str()) {
                        continue;
                    }
                }
                shown += 1;
                let classes: Vec<String> =
                    e.generator.classes.iter().map(|c| c.to_string()).collect();
                let p = &e.generator.params;
                let mut params = Vec::new();
                if p.rho.is_some() {
                    params.push("rho".to_string());
                }
                if p.phi.is_some() {
                    params.push("phi".to_string());
                }
                for (name, v) in [
                    ("gamma", p.gamma),
                    ("alpha", p.alpha),
                    ("mu", p.mu),
                    ("lambda", p.lambda),
                    ("mu~", p.mu_tilde),
                    ("lambda~", p.lambda_tilde),
                    ("alpha~", p.alpha_tilde),
                ] {
                    if let Some(v) = v {
                        params.push(format!("{name}={v}"));
                    }
                }
                println!(
                    "{:<10} {:<28} {}",
                    e.id,
                    classes.join(","),
                    params.join(" ")
                );
            }
            if shown == 0 {
                println!("(no catalog entries match the filter)");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
