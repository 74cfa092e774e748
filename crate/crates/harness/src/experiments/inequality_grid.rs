use rand::Rng;

use treecast_core::rng::{stream, Purpose};
use treecast_core::Spin;

use super::{label, point};
use crate::config::ExperimentConfig;
use crate::engine::{par_map, trial_seed};
use crate::error::Result;
use crate::output::{Check, Report};
use crate::population::{run_population, PopulationParams};
use crate::stats::{MeanCi, Status};

/// Relative slack for floating-point comparisons on the grids.
pub const GRID_RTOL: f64 = 1e-12;
/// Finite-difference step and agreement tolerance for the derivative grid.
pub const FD_STEP: f64 = 1e-5;
pub const FD_RTOL: f64 = 1e-6;
pub const SMALL4_EPSILONS: [f64; 3] = [0.01, 0.05, 0.1];
/// `(b, eps, k)` points of the expectation check, all with `eps* = 1/2`.
pub const TERM_DER_POINTS: [(usize, f64, usize); 3] = [(64, 0.5, 2), (64, 0.8, 2), (32, 0.9, 3)];
pub const EPS_STAR: f64 = 0.5;

/// `|1/(1+x) - 1/(1+y)| <= |x^p - y^p| / p`.
pub fn small1_holds(x: f64, y: f64, p: f64) -> bool {
    let lhs = (1.0 / (1.0 + x) - 1.0 / (1.0 + y)).abs();
    let rhs = (x.powf(p) - y.powf(p)).abs() / p;
    lhs <= rhs * (1.0 + GRID_RTOL)
}

/// `sqrt((1-x)/(1+x)) <= 1 - x + 3x^2/5`.
pub fn small3_holds(x: f64) -> bool {
    let f = ((1.0 - x) / (1.0 + x)).sqrt();
    f <= (1.0 - x + 0.6 * x * x) * (1.0 + GRID_RTOL)
}

/// Largest multiple of `step` below 1 such that the inequality holds on the
/// whole symmetric interval.
pub fn small3_radius(step: f64) -> f64 {
    let mut r = 0.0;
    let mut i = 1u64;
    loop {
        let x = i as f64 * step;
        if x >= 1.0 || !(small3_holds(x) && small3_holds(-x)) {
            return r;
        }
        r = x;
        i += 1;
    }
}

/// `d/dx sqrt((1 - eps u)/(1 + eps u))` at `u = x + a`.
pub fn derivative_kernel(eps: f64, u: f64) -> f64 {
    -eps / ((1.0 - eps * u).sqrt() * (1.0 + eps * u).powf(1.5))
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> + Clone {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let mut report = Report::default();
    let p = point(cfg, 0, 0, f64::NAN, "none", "grid");

    let xs = grid(0.0, 10.0, 0.01);
    let small1_points = xs.clone().count().pow(2);
    let small1_bad = xs
        .clone()
        .flat_map(|x| xs.clone().map(move |y| (x, y)))
        .filter(|&(x, y)| !small1_holds(x, y, 0.5))
        .count();
    report.rows.push(p.exact("small1_points", small1_points as f64));
    report.rows.push(p.exact("small1_violations", small1_bad as f64));
    report.checks.push(Check::new(
        "small1_grid",
        Status::from_bool(small1_bad == 0),
        format!("{small1_bad} violations over {small1_points} points, p = 1/2"),
    ));

    let small3_bad = grid(-0.1, 0.1, 1e-4).filter(|&x| !small3_holds(x)).count();
    let radius = small3_radius(1e-4);
    report.rows.push(p.exact("small3_violations", small3_bad as f64));
    report.rows.push(p.exact("small3_validity_radius", radius));
    report.checks.push(Check::new(
        "small3_grid",
        Status::from_bool(small3_bad == 0),
        format!("{small3_bad} violations on |x| <= 0.1; holds up to |x| = {radius}"),
    ));

    let mut small4_bad = 0;
    for eps in SMALL4_EPSILONS {
        let pe = point(cfg, 0, 0, eps, "none", "grid");
        let mut kappa: f64 = 0.0;
        let mut worst_ratio: f64 = 0.0;
        for x in grid(-2.0, 2.0, 0.01) {
            for a in grid(-2.0, 2.0, 0.01) {
                let f = |x: f64| ((1.0 - eps * (x + a)) / (1.0 + eps * (x + a))).sqrt();
                let fd = (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP);
                let d = derivative_kernel(eps, x + a);
                if !d.is_finite() || (fd - d).abs() > FD_RTOL * d.abs() {
                    small4_bad += 1;
                }
                kappa = kappa.max(d.abs());
                // closed form with a factor 4 in the denominator
                let u = eps * (x + a);
                let quarter = eps * 2.0 / (4.0 * (1.0 - u).sqrt() * (1.0 + u).powf(1.5));
                worst_ratio = worst_ratio.max(quarter / d.abs());
            }
        }
        report.rows.push(pe.exact("small4_kappa", kappa));
        report.rows.push(pe.exact("small4_factor4_over_exact", worst_ratio));
    }
    report.checks.push(Check::new(
        "small4_grid",
        Status::from_bool(small4_bad == 0),
        format!("{small4_bad} grid points where the derivative is not finite or disagrees with finite differences"),
    ));

    for (b, eps, k) in TERM_DER_POINTS {
        let nu = EPS_STAR * EPS_STAR * (1.0 - eps).powf(0.25) / (8.0 * 2f64.powf(0.25));
        let params = PopulationParams {
            arity: b,
            depth: k,
            epsilon: eps,
            rho: 0.0,
            target: Spin::Minus,
            population: cfg.population.unwrap_or_else(|| PopulationParams::default_population(b, cfg.trials)),
            root_samples: cfg.trials,
            seed: trial_seed(cfg.seed, &cfg.id, &[b as u64, k as u64, eps.to_bits()], 0),
        };
        let roots = run_population(&params, workers)?.root;
        let spin_seed = trial_seed(cfg.seed, &cfg.id, &[b as u64, k as u64, eps.to_bits()], 1);
        let vals = par_map(workers, roots.len(), |i| {
            let same = stream(spin_seed, Purpose::Trial, i as u64).random::<f64>() < 0.5 * (1.0 + eps);
            let x = roots[i].clean().bias();
            let x = if same { x } else { -x };
            let y = (x - nu).clamp(-1.0, 1.0);
            Ok(((1.0 - eps * y) / (1.0 + eps * y)).sqrt())
        })?;
        let m = MeanCi::from_samples(&vals);
        let pe = point(cfg, b, k, eps, "none", "population");
        report.rows.push(pe.row("term_der_expectation", m));
        report.rows.push(pe.exact("term_der_nu", nu));
        let status = if m.ci_high < 1.0 {
            Status::Pass
        } else if m.ci_low >= 1.0 {
            Status::Fail
        } else {
            Status::Inconclusive
        };
        report.checks.push(Check::new(
            &format!("term_der_b{b}_eps{}_k{k}", label(eps)),
            status,
            format!("E sqrt((1-eps Y)/(1+eps Y)) = {:.5} [{:.5}, {:.5}] with shift {nu:.5}", m.mean, m.ci_low, m.ci_high),
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_cases() {
        assert!(small1_holds(3.0, 3.0, 0.5));
        assert!(small3_holds(0.0));
        assert!(!small3_holds(-0.5));
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let (eps, u) = (0.1, -4.0);
        let f = |u: f64| ((1.0 - eps * u) / (1.0 + eps * u)).sqrt();
        let fd = (f(u + 1e-6) - f(u - 1e-6)) / 2e-6;
        assert!((fd - derivative_kernel(eps, u)).abs() < 1e-8);
    }
}
