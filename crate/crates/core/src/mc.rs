//! Least-squares Monte Carlo backend for dimensions beyond the lattice.
//!
//! Conditional expectations are replaced by polynomial regression on the
//! Brownian state (all monomials of bounded total degree); the martingale
//! coefficient is regressed from `Y_{k+1} dB / dt`; the implicit `y`-solve
//! per path reuses the lattice node solver.  All reductions run in a fixed
//! order, so a seed pins the result bit-for-bit.
//!
//! The standard error comes from disjoint path batches solved end to end:
//! the terminal layers after regression smoothing carry almost no cross-path
//! variance, so resampling them would understate the uncertainty badly.

use nalgebra::{DMatrix, DVector};

use crate::bsde::{implicit_node_solve, NumericsConfig, SolveDiagnostics};
use crate::error::{Error, Result};
use crate::forcing::ForcingTerm;
use crate::generator::GeneratorSpec;
use crate::paths::PathBundle;
use crate::process::EvalPoint;

/// Regression configuration.
#[derive(Debug, Clone)]
pub struct RegressionConfig {
    /// Total polynomial degree of the basis.
    pub degree: usize,
    /// Disjoint path batches behind the reported standard error
    /// (0 disables the error estimate).
    pub error_batches: usize,
    /// Condition-number ceiling of the normal equations.
    pub max_condition: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            error_batches: 32,
            max_condition: 1e12,
        }
    }
}

/// Monte Carlo solve summary.
#[derive(Debug, Clone)]
pub struct McSolution {
    pub y0: f64,
    /// Batch-resampled standard error of the root value.
    pub std_error: f64,
    /// Worst condition number met across the backward sweep.
    pub max_condition: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Multi-indices of total degree `<= degree` over `dim` variables.
fn multi_indices(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, degree: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if dim == 0 {
            out.push(prefix.clone());
            return;
        }
        for d in 0..=degree {
            prefix.push(d);
            rec(dim - 1, degree - d, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, degree, &mut Vec::new(), &mut out);
    out
}

fn basis_row(indices: &[Vec<usize>], state: &[f64], row: &mut [f64]) {
    for (j, idx) in indices.iter().enumerate() {
        let mut v = 1.0;
        for (c, &p) in idx.iter().enumerate() {
            for _ in 0..p {
                v *= state[c];
            }
        }
        row[j] = v;
    }
}

/// Solves the normal equations, reporting the condition number of the Gram
/// matrix.
fn regress(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    step: usize,
    max_condition: f64,
) -> Result<(DVector<f64>, f64)> {
    let eig = gram.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &v in eig.eigenvalues.iter() {
        let a = v.abs();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !cond.is_finite() || cond > max_condition {
        return Err(Error::SingularRegression { step, cond });
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(Error::SingularRegression { step, cond })?;
    Ok((chol.solve(rhs), cond))
}

/// One full backward induction over the paths listed in `sel`.
fn backward_root(
    bundle: &PathBundle,
    xi: &[f64],
    g: &GeneratorSpec,
    v: &ForcingTerm,
    indices: &[Vec<usize>],
    max_condition: f64,
    cfg: &NumericsConfig,
    sel: &[usize],
    diagnostics: Option<&mut SolveDiagnostics>,
) -> Result<(f64, f64)> {
    let m = sel.len();
    let n = bundle.grid().n_steps();
    let d = bundle.dim();
    let dt = bundle.grid().dt();
    let b = indices.len();

    let mut diag_local = SolveDiagnostics::default();
    let mut max_cond: f64 = 0.0;
    let mut y: Vec<f64> = sel.iter().map(|&p| xi[p]).collect();
    let mut row = vec![0.0; b];
    let mut cont = vec![0.0; m];
    let mut zhat = vec![0.0; m * d];

    for step in (1..n).rev() {
        let mut gram = DMatrix::<f64>::zeros(b, b);
        let mut rhs_y = DVector::<f64>::zeros(b);
        let mut rhs_z = vec![DVector::<f64>::zeros(b); d];
        for (i, &path) in sel.iter().enumerate() {
            basis_row(indices, bundle.state(path, step), &mut row);
            let db = bundle.increment(path, step);
            for a in 0..b {
                rhs_y[a] += row[a] * y[i];
                for (c, rz) in rhs_z.iter_mut().enumerate() {
                    rz[a] += row[a] * y[i] * db[c] / dt;
                }
                for bb in 0..b {
                    gram[(a, bb)] += row[a] * row[bb];
                }
            }
        }
        let (beta_y, cond) = regress(&gram, &rhs_y, step, max_condition)?;
        max_cond = max_cond.max(cond);
        let mut beta_z = Vec::with_capacity(d);
        for rz in &rhs_z {
            let (bz, _) = regress(&gram, rz, step, max_condition)?;
            beta_z.push(bz);
        }

        for (i, &path) in sel.iter().enumerate() {
            basis_row(indices, bundle.state(path, step), &mut row);
            let mut c = 0.0;
            for a in 0..b {
                c += row[a] * beta_y[a];
            }
            cont[i] = c;
            for (ci, bz) in beta_z.iter().enumerate() {
                let mut zv = 0.0;
                for a in 0..b {
                    zv += row[a] * bz[a];
                }
                zhat[i * d + ci] = zv;
            }
        }

        // per-path implicit solves are independent writes, so the parallel
        // sweep stays deterministic
        let t = bundle.grid().t(step);
        let dv = v.delta(step, 0);
        let solved: Result<Vec<(f64, f64, u32, bool)>> = {
            use rayon::prelude::*;
            sel.par_iter()
                .enumerate()
                .map(|(i, &path)| {
                    let state = bundle.state(path, step);
                    let point = EvalPoint {
                        step,
                        loc: path,
                        t,
                        state,
                    };
                    let z = &zhat[i * d..(i + 1) * d];
                    implicit_node_solve(g, &point, cont[i] + dv, z, dt, cfg)
                })
                .collect()
        };
        for (i, (yv, residual, iterations, bisected)) in solved?.into_iter().enumerate() {
            y[i] = yv;
            diag_local.max_residual = diag_local.max_residual.max(residual);
            diag_local.picard_iterations += iterations as u64;
            diag_local.bisection_fallbacks += bisected as u64;
        }
    }

    // step 0: all paths share B_0 = 0, the regression degenerates to means
    let mut mean_y = 0.0;
    let mut mean_z = vec![0.0; d];
    for (i, &path) in sel.iter().enumerate() {
        mean_y += y[i];
        let db = bundle.increment(path, 0);
        for c in 0..d {
            mean_z[c] += y[i] * db[c] / dt;
        }
    }
    mean_y /= m as f64;
    for zc in &mut mean_z {
        *zc /= m as f64;
    }
    let state = vec![0.0; d];
    let point = EvalPoint {
        step: 0,
        loc: 0,
        t: 0.0,
        state: &state,
    };
    let (y0, residual, iterations, bisected) =
        implicit_node_solve(g, &point, mean_y + v.delta(0, 0), &mean_z, dt, cfg)?;
    diag_local.max_residual = diag_local.max_residual.max(residual);
    diag_local.picard_iterations += iterations as u64;
    diag_local.bisection_fallbacks += bisected as u64;
    if let Some(d) = diagnostics {
        *d = diag_local;
    }
    Ok((y0, max_cond))
}

/// Backward least-squares solve of `BSDE(ξ, g + dV)` on a path bundle.
///
/// `xi` holds one terminal value per path; `v` must be deterministic
/// (zero or per-step).
pub fn solve_bsde_mc(
    bundle: &PathBundle,
    xi: &[f64],
    g: &GeneratorSpec,
    v: &ForcingTerm,
    reg: &RegressionConfig,
    cfg: &NumericsConfig,
) -> Result<McSolution> {
    let m = bundle.n_paths();
    let n = bundle.grid().n_steps();
    if xi.len() != m {
        return Err(Error::ShapeMismatch {
            expected: m,
            got: xi.len(),
        });
    }
    if v.n_steps() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: v.n_steps(),
        });
    }

    let indices = multi_indices(bundle.dim(), reg.degree);
    let b = indices.len();
    if m <= b * 4 {
        return Err(Error::InvalidArgument(format!(
            "need well over {b} paths for a degree-{} basis, got {m}",
            reg.degree
        )));
    }

    let all: Vec<usize> = (0..m).collect();
    let mut diagnostics = SolveDiagnostics::default();
    let (y0, max_condition) = backward_root(
        bundle,
        xi,
        g,
        v,
        &indices,
        reg.max_condition,
        cfg,
        &all,
        Some(&mut diagnostics),
    )?;

    let mut std_error = 0.0;
    let batches = reg.error_batches;
    if batches >= 2 && m / batches > b * 4 {
        let mut roots = Vec::with_capacity(batches);
        for j in 0..batches {
            let lo = j * m / batches;
            let hi = (j + 1) * m / batches;
            let sel: Vec<usize> = (lo..hi).collect();
            let (r, _) = backward_root(
                bundle,
                xi,
                g,
                v,
                &indices,
                reg.max_condition,
                cfg,
                &sel,
                None,
            )?;
            roots.push(r);
        }
        let mean: f64 = roots.iter().sum::<f64>() / batches as f64;
        let var: f64 = roots.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
            / (batches - 1) as f64;
        // spread of independent batch estimators, scaled to the full run
        std_error = (var / batches as f64).sqrt();
    }

    Ok(McSolution {
        y0,
        std_error,
        max_condition,
        diagnostics,
    })
}
