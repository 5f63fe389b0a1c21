//! Inf- and sup-convolution regularizers in `z` and in `(y, z)`.
//!
//! `inf_convolve_z` builds `g_n(t,y,z) = inf_u [ g(t,y,u) + (n+2λ)|u-z|^α ]`,
//! the Hölder-in-`z` minorant increasing to `g` as `n` grows; the sup variant
//! is the mirrored majorant.  `inf_convolve_yz` penalizes shifts in both
//! arguments with `(n+2μ~)|u-y| + (n+2λ~)|v-z|^α~`.
//!
//! Minimization is a derivative-free scan over a bounded candidate box
//! centred at the probe: the box radius is chosen from the penalty constant
//! so the bracket at the box edge clears the centre value whenever the
//! driver's declared growth holds, a uniform grid (2^9+1 points per axis by
//! default, always containing the probe itself) locates the minimum, one
//! golden-section pass refines it, and the box doubles if the scan ends on
//! the boundary.  Pinning `box_penalty_override` freezes the candidate set,
//! so a whole schedule of levels is evaluated on one set of points and
//! inherits exact pointwise monotonicity in `n`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generator::{AssumptionClass, GeneratorSpec};
use crate::process::EvalPoint;

/// Candidate-box configuration for the convolution scans.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Grid points per axis for the one-dimensional scan.
    pub points_per_axis: usize,
    /// Grid points per axis for the joint `(u, v)` scan.
    pub joint_points_per_axis: usize,
    /// Golden-section iterations of the refinement pass.
    pub golden_iters: usize,
    /// Boundary-hit expansions of the box (ignored when the box is pinned).
    pub max_expansions: usize,
    /// Pin the box radius to this penalty constant instead of the entry's
    /// own, freezing the candidate set across a schedule.
    pub box_penalty_override: Option<f64>,
    /// Enable the golden-section refinement.
    pub refine: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            points_per_axis: 513,
            joint_points_per_axis: 129,
            golden_iters: 40,
            max_expansions: 6,
            box_penalty_override: None,
            refine: true,
        }
    }
}

impl SearchConfig {
    /// Coarser, frozen-box configuration for solver schedules: one candidate
    /// set for every `n`, no value-dependent refinement.
    pub fn schedule_locked(reference_penalty: f64) -> Self {
        Self {
            points_per_axis: 129,
            joint_points_per_axis: 33,
            golden_iters: 0,
            max_expansions: 0,
            box_penalty_override: Some(reference_penalty),
            refine: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points_per_axis < 3 || self.joint_points_per_axis < 3 {
            return Err(Error::EmptySearchDomain(
                "need at least 3 candidate points per axis".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Hull {
    Inf,
    Sup,
}

impl Hull {
    /// Sign applied to the inner driver so both hulls share one minimizer.
    fn sign(self) -> f64 {
        match self {
            Hull::Inf => 1.0,
            Hull::Sup => -1.0,
        }
    }
}

fn box_radius(base_abs: f64, c: f64, alpha: f64, scale: f64) -> f64 {
    let r = ((2.0 * (base_abs + 1.0)) / c.max(1e-12)).powf(1.0 / alpha);
    (r + 2.0 * (1.0 + scale)).min(1e6)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// One-dimensional scan of `bracket` over `[center-R, center+R]`, with the
/// probe itself always a candidate.
fn scan_1d(
    bracket: &dyn Fn(f64) -> f64,
    center: f64,
    radius: f64,
    cfg: &SearchConfig,
    points: usize,
) -> f64 {
    let mut radius = radius;
    let expansions = if cfg.box_penalty_override.is_some() {
        0
    } else {
        cfg.max_expansions
    };
    let mut attempt = 0;
    loop {
        let mut best_v = bracket(center);
        let mut best_i = usize::MAX; // sentinel: probe point
        let step = 2.0 * radius / (points - 1) as f64;
        for i in 0..points {
            let u = center - radius + step * i as f64;
            let v = bracket(u);
            if v < best_v {
                best_v = v;
                best_i = i;
            }
        }
        let on_boundary = best_i == 0 || best_i == points - 1;
        if on_boundary && attempt < expansions {
            attempt += 1;
            radius *= 2.0;
            continue;
        }
        if cfg.refine && best_i != usize::MAX {
            let u = center - radius + step * best_i as f64;
            let (_, v) = golden_min(bracket, u - step, u + step, cfg.golden_iters);
            return best_v.min(v);
        }
        return best_v;
    }
}

/// Joint scan over `(a, b)` boxes; refinement alternates one golden pass per
/// axis.
fn scan_2d(
    bracket: &dyn Fn(f64, f64) -> f64,
    center: (f64, f64),
    radii: (f64, f64),
    cfg: &SearchConfig,
) -> f64 {
    let points = cfg.joint_points_per_axis;
    let mut radii = radii;
    let expansions = if cfg.box_penalty_override.is_some() {
        0
    } else {
        cfg.max_expansions
    };
    let mut attempt = 0;
    loop {
        let step_a = 2.0 * radii.0 / (points - 1) as f64;
        let step_b = 2.0 * radii.1 / (points - 1) as f64;
        let mut best_v = bracket(center.0, center.1);
        let mut best = (usize::MAX, usize::MAX);
        for i in 0..points {
            let a = center.0 - radii.0 + step_a * i as f64;
            for j in 0..points {
                let b = center.1 - radii.1 + step_b * j as f64;
                let v = bracket(a, b);
                if v < best_v {
                    best_v = v;
                    best = (i, j);
                }
            }
        }
        let on_boundary = best.0 == 0
            || best.0 == points - 1
            || best.1 == 0
            || best.1 == points - 1;
        if best.0 != usize::MAX && on_boundary && attempt < expansions {
            attempt += 1;
            radii = (radii.0 * 2.0, radii.1 * 2.0);
            continue;
        }
        if cfg.refine && best.0 != usize::MAX {
            let mut a = center.0 - radii.0 + step_a * best.0 as f64;
            let mut b = center.1 - radii.1 + step_b * best.1 as f64;
            for _ in 0..2 {
                let (na, _) =
                    golden_min(|x| bracket(x, b), a - step_a, a + step_a, cfg.golden_iters);
                a = na;
                let (nb, _) =
                    golden_min(|x| bracket(a, x), b - step_b, b + step_b, cfg.golden_iters);
                b = nb;
            }
            return best_v.min(bracket(a, b));
        }
        return best_v;
    }
}

fn convolve_z(
    g: &GeneratorSpec,
    n: f64,
    lambda: f64,
    alpha: f64,
    cfg: &SearchConfig,
    hull: Hull,
) -> Result<GeneratorSpec> {
    cfg.validate()?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidModulus {
            name: "alpha",
            detail: format!("alpha = {alpha} outside (0, 1]"),
        });
    }
    let c = n + 2.0 * lambda;
    if c <= 0.0 {
        return Err(Error::EmptySearchDomain(format!(
            "penalty constant n + 2*lambda = {c} must be positive"
        )));
    }
    let inner = g.eval_fn();
    let sign = hull.sign();
    let cfg = cfg.clone();
    let tag = match hull {
        Hull::Inf => "inf",
        Hull::Sup => "sup",
    };
    let eval = move |p: &EvalPoint, y: f64, z: &[f64]| -> f64 {
        let box_c = cfg.box_penalty_override.unwrap_or(c);
        match z.len() {
            1 => {
                let z0 = z[0];
                let base_abs = inner(p, y, z).abs();
                let radius = box_radius(base_abs, box_c, alpha, z0.abs());
                let bracket =
                    |u: f64| sign * inner(p, y, &[u]) + c * (u - z0).abs().powf(alpha);
                sign * scan_1d(&bracket, z0, radius, &cfg, cfg.points_per_axis)
            }
            2 => {
                let base_abs = inner(p, y, z).abs();
                let scale = (z[0] * z[0] + z[1] * z[1]).sqrt();
                let radius = box_radius(base_abs, box_c, alpha, scale);
                let bracket = |u0: f64, u1: f64| {
                    let du = ((u0 - z[0]).powi(2) + (u1 - z[1]).powi(2)).sqrt();
                    sign * inner(p, y, &[u0, u1]) + c * du.powf(alpha)
                };
                sign * scan_2d(&bracket, (z[0], z[1]), (radius, radius), &cfg)
            }
            d => panic!("z-convolution supports dim 1 or 2, got {d}"),
        }
    };
    let mut out = GeneratorSpec::new(format!("{tag}conv_z[{};{}]({})", n, lambda, g.name), eval);
    out.classes = g.classes.clone();
    out.classes.insert(AssumptionClass::UniformlyContinuousInZ);
    out.classes.insert(AssumptionClass::StrongSublinearInZ);
    out.params = g.params.clone();
    out.params.phi = Some(Arc::new(move |x: f64| c * x.powf(alpha)));
    out.params.gamma = Some(c);
    out.params.alpha = Some(alpha);
    out.params.f = Some(Arc::new(|_, _| 0.0));
    out.params.linear_bound = Some(g.params.linear_bound.unwrap_or(0.0).max(c));
    Ok(out)
}

/// `inf_u [ g(t,y,u) + (n+2λ)|u-z|^α ]`
pub fn inf_convolve_z(
    g: &GeneratorSpec,
    n: f64,
    lambda: f64,
    alpha: f64,
    cfg: &SearchConfig,
) -> Result<GeneratorSpec> {
    convolve_z(g, n, lambda, alpha, cfg, Hull::Inf)
}

/// `sup_u [ g(t,y,u) - (n+2λ)|u-z|^α ]`
pub fn sup_convolve_z(
    g: &GeneratorSpec,
    n: f64,
    lambda: f64,
    alpha: f64,
    cfg: &SearchConfig,
) -> Result<GeneratorSpec> {
    convolve_z(g, n, lambda, alpha, cfg, Hull::Sup)
}

fn convolve_yz(
    g: &GeneratorSpec,
    n: f64,
    mu_tilde: f64,
    lambda_tilde: f64,
    alpha_tilde: f64,
    cfg: &SearchConfig,
    hull: Hull,
) -> Result<GeneratorSpec> {
    cfg.validate()?;
    if !(alpha_tilde > 0.0 && alpha_tilde <= 1.0) {
        return Err(Error::InvalidModulus {
            name: "alpha",
            detail: format!("alpha~ = {alpha_tilde} outside (0, 1]"),
        });
    }
    let cy = n + 2.0 * mu_tilde;
    let cz = n + 2.0 * lambda_tilde;
    if cy <= 0.0 || cz <= 0.0 {
        return Err(Error::EmptySearchDomain(format!(
            "penalty constants ({cy}, {cz}) must be positive"
        )));
    }
    let inner = g.eval_fn();
    let sign = hull.sign();
    let cfg = cfg.clone();
    let tag = match hull {
        Hull::Inf => "inf",
        Hull::Sup => "sup",
    };
    let eval = move |p: &EvalPoint, y: f64, z: &[f64]| -> f64 {
        assert_eq!(
            z.len(),
            1,
            "joint (y,z)-convolution supports scalar z only"
        );
        let z0 = z[0];
        let base_abs = inner(p, y, z).abs();
        let (box_cy, box_cz) = match cfg.box_penalty_override {
            Some(c) => (c, c),
            None => (cy, cz),
        };
        let ry = box_radius(base_abs, box_cy, 1.0, y.abs());
        let rz = box_radius(base_abs, box_cz, alpha_tilde, z0.abs());
        let bracket = |u: f64, v: f64| {
            sign * inner(p, u, &[v])
                + cy * (u - y).abs()
                + cz * (v - z0).abs().powf(alpha_tilde)
        };
        sign * scan_2d(&bracket, (y, z0), (ry, rz), &cfg)
    };
    let mut out = GeneratorSpec::new(
        format!("{tag}conv_yz[{};{};{}]({})", n, mu_tilde, lambda_tilde, g.name),
        eval,
    );
    out.classes = g.classes.clone();
    out.classes.insert(AssumptionClass::OsgoodInY);
    out.classes.insert(AssumptionClass::UniformlyContinuousInZ);
    out.classes.insert(AssumptionClass::StrongSublinearInZ);
    out.params = g.params.clone();
    out.params.rho = Some(Arc::new(move |x: f64| cy * x));
    out.params.phi = Some(Arc::new(move |x: f64| cz * x.powf(alpha_tilde)));
    out.params.gamma = Some(cz);
    out.params.alpha = Some(alpha_tilde);
    out.params.f = Some(Arc::new(|_, _| 0.0));
    out.params.linear_bound = Some(g.params.linear_bound.unwrap_or(0.0).max(cy).max(cz));
    Ok(out)
}

/// `inf_{(u,v)} [ g(t,u,v) + (n+2μ~)|u-y| + (n+2λ~)|v-z|^α~ ]`
pub fn inf_convolve_yz(
    g: &GeneratorSpec,
    n: f64,
    mu_tilde: f64,
    lambda_tilde: f64,
    alpha_tilde: f64,
    cfg: &SearchConfig,
) -> Result<GeneratorSpec> {
    convolve_yz(g, n, mu_tilde, lambda_tilde, alpha_tilde, cfg, Hull::Inf)
}

/// `sup_{(u,v)} [ g(t,u,v) - (n+2μ~)|u-y| - (n+2λ~)|v-z|^α~ ]`
pub fn sup_convolve_yz(
    g: &GeneratorSpec,
    n: f64,
    mu_tilde: f64,
    lambda_tilde: f64,
    alpha_tilde: f64,
    cfg: &SearchConfig,
) -> Result<GeneratorSpec> {
    convolve_yz(g, n, mu_tilde, lambda_tilde, alpha_tilde, cfg, Hull::Sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(g: &GeneratorSpec, z: f64) -> f64 {
        g.eval_probe(0.0, &[0.0], 0.0, z)
    }

    /// Dense 1-D reference minimizer, independent of the scan machinery.
    fn brute_inf(g: impl Fn(f64) -> f64, c: f64, alpha: f64, z: f64) -> f64 {
        let mut best = f64::INFINITY;
        let lo = z - 50.0;
        let hi = z + 50.0;
        let m = 2_000_000;
        for i in 0..=m {
            let u = lo + (hi - lo) * i as f64 / m as f64;
            let v = g(u) + c * (u - z).abs().powf(alpha);
            if v < best {
                best = v;
            }
        }
        best
    }

    #[test]
    fn moreau_square_matches_closed_form_and_brute_force() {
        // alpha = 1, constant 4: min(z^2, 4|z| - 4) for |z| > 2
        let g = GeneratorSpec::from_tyz("z^2", |_, _, z| z * z);
        let conv = inf_convolve_z(&g, 3.0, 0.5, 1.0, &SearchConfig::default()).unwrap();
        for (z, want) in [(0.0, 0.0), (1.0, 1.0), (3.0, 8.0)] {
            let got = probe(&conv, z);
            assert!((got - want).abs() < 1e-3, "z = {z}: {got} vs {want}");
            let brute = brute_inf(|u| u * u, 4.0, 1.0, z);
            assert!((got - brute).abs() < 1e-3, "z = {z}: {got} vs brute {brute}");
        }
    }

    #[test]
    fn holder_driver_is_a_fixed_point() {
        // sqrt|z| is 1-Hölder(1/2); penalty constant >= 1 dominates exactly
        let g = GeneratorSpec::from_tyz("sqrt", |_, _, z| z.abs().sqrt());
        for n in [0.0, 1.0, 8.0] {
            let conv = inf_convolve_z(&g, n, 0.5, 0.5, &SearchConfig::default()).unwrap();
            for z in [0.0, 0.3, 1.0, 2.5] {
                assert_eq!(probe(&conv, z), z.abs().sqrt(), "n = {n}, z = {z}");
            }
        }
    }

    #[test]
    fn inf_hull_below_sup_hull_above_and_monotone() {
        let g = GeneratorSpec::from_tyz("cosh-ish", |_, _, z| z * z / (1.0 + z.abs()) + z.sin());
        let locked = SearchConfig::schedule_locked(1.0 + 2.0 * 0.5);
        let mut prev_inf = f64::NEG_INFINITY;
        let mut prev_sup = f64::INFINITY;
        let z = 2.0;
        for n in [1.0, 2.0, 4.0, 8.0, 32.0, 128.0] {
            let lo = inf_convolve_z(&g, n, 0.5, 0.5, &locked).unwrap();
            let hi = sup_convolve_z(&g, n, 0.5, 0.5, &locked).unwrap();
            let (vl, vh) = (probe(&lo, z), probe(&hi, z));
            let direct = probe(&g, z);
            assert!(vl <= direct + 1e-12);
            assert!(vh >= direct - 1e-12);
            assert!(vl >= prev_inf - 1e-12, "inf hull must increase in n");
            assert!(vh <= prev_sup + 1e-12, "sup hull must decrease in n");
            prev_inf = vl;
            prev_sup = vh;
        }
        // convergence upward to g at the fixed probe
        let tight = inf_convolve_z(&g, 4096.0, 0.5, 0.5, &SearchConfig::default()).unwrap();
        assert!((probe(&tight, z) - probe(&g, z)).abs() < 1e-3);
    }

    #[test]
    fn joint_convolution_square_in_y() {
        // g(y) = y^2, y-penalty constant n + 2μ~ = 4, z-part free
        let g = GeneratorSpec::new("y^2", |_, y, _| y * y);
        let conv = inf_convolve_yz(&g, 2.0, 1.0, 1.0, 0.5, &SearchConfig::default()).unwrap();
        let got = conv.eval_probe(0.0, &[0.0], 3.0, 0.0);
        assert!((got - 8.0).abs() < 2e-3, "got {got}");
        let inside = conv.eval_probe(0.0, &[0.0], 1.0, 0.0);
        assert!((inside - 1.0).abs() < 2e-3, "got {inside}");
    }

    #[test]
    fn joint_convolution_monotone_to_direct() {
        let g = GeneratorSpec::new("mix", |_, y, z| {
            y.abs().sqrt() + z.first().copied().unwrap_or(0.0).abs().powf(0.75)
        });
        let locked = SearchConfig::schedule_locked(1.0);
        let mut prev = f64::NEG_INFINITY;
        for n in [1.0, 4.0, 16.0, 64.0, 256.0] {
            let conv = inf_convolve_yz(&g, n, 0.0, 0.0, 0.5, &locked).unwrap();
            let v = conv.eval_probe(0.2, &[0.0], 1.3, 0.7);
            assert!(v <= g.eval_probe(0.2, &[0.0], 1.3, 0.7) + 1e-12);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let g = GeneratorSpec::zero();
        assert!(inf_convolve_z(&g, 1.0, 0.5, 1.5, &SearchConfig::default()).is_err());
        assert!(inf_convolve_z(&g, -2.0, 0.5, 0.5, &SearchConfig::default()).is_err());
        let bad = SearchConfig {
            points_per_axis: 2,
            ..SearchConfig::default()
        };
        assert!(inf_convolve_z(&g, 1.0, 0.5, 0.5, &bad).is_err());
    }
}
