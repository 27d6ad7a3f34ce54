//! Self-check suites comparing closed forms against brute-force references
//! and exact identities. Each check reports pass/fail with the worst error
//! seen.

use rand::Rng;
use serde::Serialize;

use crate::bounds::{rate_denominator, ProblemParams};
use crate::empirical::{max_sat_exact, min_unsat_scan, sample_formula, sample_rng, weighted_sum_x, Model};
use crate::moments::{
    clause_weight_z, log_f0, log_first_moment, log_pair_weight_f, pair_weight_f, FMode, OverlapPoint, WeightPair,
};
use crate::oracle::{clause_weight_z_enumerated, f0_polynomial, pair_weight_f_enumerated, weighted_sum_x_naive};
use crate::tuning::{tilted_clause_moments, tuned_weights, RESIDUAL_TOL};

const SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracles,
    Identities,
    Appendix,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Oracles, Suite::Identities, Suite::Appendix];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Oracles => "oracles",
            Suite::Identities => "identities",
            Suite::Appendix => "appendix",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Worst error (or violation count) observed.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

fn check(suite: Suite, name: &'static str, worst: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        suite: suite.name(),
        name,
        passed: worst <= tolerance,
        worst,
        tolerance,
        detail,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn run_suite(suite: Suite) -> Vec<CheckResult> {
    match suite {
        Suite::Oracles => oracles(),
        Suite::Identities => identities(),
        Suite::Appendix => appendix(),
    }
}

fn random_weights(rng: &mut impl Rng, count: usize, min_gamma: f64) -> Vec<WeightPair> {
    (0..count)
        .map(|_| {
            let g = rng.random_range(min_gamma..=1.0);
            let e = rng.random_range(0.01..=1.0);
            WeightPair::new(g, e).expect("sampled inside the valid box")
        })
        .collect()
}

fn oracles() -> Vec<CheckResult> {
    let s = Suite::Oracles;
    let mut rng = sample_rng(SEED, 0);
    let mut out = Vec::new();

    let mut worst_z: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    let n = 6;
    for k in 2..=4u32 {
        for w in random_weights(&mut rng, 20, 0.3) {
            worst_z = worst_z.max(rel_err(clause_weight_z(k, &w), clause_weight_z_enumerated(k, &w)));
            let u0 = rng.random_range(0.0..0.25) / 2f64.powi(k as i32);
            for z in 0..=n {
                let pt = OverlapPoint::new(z as f64 / n as f64, w).expect("alpha in [0, 1]");
                let closed = pair_weight_f(k, u0, &pt, FMode::Auto).unwrap_or(f64::NAN);
                let brute = pair_weight_f_enumerated(k, n, z, &w, u0).unwrap_or(f64::NAN);
                let e = rel_err(closed, brute);
                worst_f = worst_f.max(if e.is_nan() { f64::INFINITY } else { e });
            }
        }
    }
    out.push(check(s, "clause_weight_z_vs_enumeration", worst_z, 1e-12, "k in {2,3,4}, 20 random (gamma, eta) each".into()));
    out.push(check(s, "pair_weight_f_vs_enumeration", worst_f, 1e-12, "all (2n)^k clauses, n = 6, z = 0..6".into()));

    let mut worst_x: f64 = 0.0;
    let mut sat_mismatch = 0.0;
    for i in 0..8 {
        let mut r = sample_rng(SEED, 100 + i);
        let f = sample_formula(8, 10 + 5 * i as usize, 3, Model::Iid, &mut r).expect("valid sizes");
        let w = random_weights(&mut r, 1, 0.5)[0];
        let u0 = 0.0625;
        worst_x = worst_x.max(rel_err(
            weighted_sum_x(&f, &w, u0).unwrap_or(f64::NAN),
            weighted_sum_x_naive(&f, &w, u0).unwrap_or(f64::NAN),
        ));
        let exact = max_sat_exact(&f).map(|x| x.1).unwrap_or(usize::MAX);
        let scan = min_unsat_scan(&f).map(|u| f.m() - u).unwrap_or(0);
        if exact != scan {
            sat_mismatch += 1.0;
        }
    }
    out.push(check(s, "weighted_sum_x_vs_naive", worst_x, 1e-12, "Gray-code scan vs per-assignment evaluation, n = 8".into()));
    out.push(check(s, "max_sat_branch_and_bound_vs_scan", sat_mismatch, 0.0, "mismatching formulas out of 8".into()));
    out
}

fn identities() -> Vec<CheckResult> {
    let s = Suite::Identities;
    let mut worst_res: f64 = 0.0;
    let mut worst_tilt: f64 = 0.0;
    let mut failures = 0.0;
    let mut where_worst = String::new();
    for k in 3..=30u32 {
        for i in 1..=10 {
            let params = ProblemParams::new(k, i as f64 / 10.0).expect("valid grid");
            match tuned_weights(&params) {
                Ok(t) => {
                    worst_res = worst_res.max(t.residual1).max(t.residual2);
                    let m = tilted_clause_moments(&params, &t);
                    let e = m.mean_h.abs().max((m.mean_u - params.u0()).abs());
                    if e > worst_tilt {
                        worst_tilt = e;
                        where_worst = format!("k = {k}, p = {}", params.p());
                    }
                }
                Err(_) => failures += 1.0,
            }
        }
    }
    vec![
        check(s, "tuning_solves", failures, 0.0, "tuning failures on k = 3..30, p = 0.1..1.0".into()),
        check(s, "tuning_residuals", worst_res, RESIDUAL_TOL, "both tuning equations".into()),
        check(s, "tilted_moments_centered", worst_tilt, 1e-10, format!("max |E H|, |E U - u0|; worst at {where_worst}")),
    ]
}

fn appendix() -> Vec<CheckResult> {
    let s = Suite::Appendix;
    let mut rng = sample_rng(SEED, 1);
    let mut out = Vec::new();

    let mut worst_dual: f64 = 0.0;
    for k in 2..=12u32 {
        for w in random_weights(&mut rng, 10, 0.6) {
            let u0 = rng.random_range(0.0..0.2);
            for i in 0..=50 {
                let pt = OverlapPoint::new(i as f64 / 50.0, w).expect("alpha in [0, 1]");
                let d = log_pair_weight_f(k, u0, &pt, FMode::Direct);
                let b = log_pair_weight_f(k, u0, &pt, FMode::Binomial);
                let e = match (d, b) {
                    (Ok(d), Ok(b)) => rel_err(d.exp(), b.exp()),
                    _ => f64::INFINITY,
                };
                worst_dual = worst_dual.max(e);
            }
        }
    }
    out.push(check(s, "pair_kernel_direct_vs_binomial", worst_dual, 1e-10, "k = 2..12, gamma >= 0.6, 51 overlaps".into()));

    let mut worst_half: f64 = 0.0;
    let mut worst_poly: f64 = 0.0;
    let mut worst_sq: f64 = 0.0;
    for k in 3..=12u32 {
        for i in 1..=10 {
            let params = ProblemParams::new(k, i as f64 / 10.0).expect("valid grid");
            let Ok(t) = tuned_weights(&params) else {
                worst_half = f64::INFINITY;
                continue;
            };
            let e = t.eps0;
            let closed = 4.0 * (1.0 - e).powi(2) * (2.0 - e).powi(2 * k as i32 - 2);
            let lf0 = |a: f64| log_f0(&t, a).map(f64::exp).unwrap_or(f64::NAN);
            worst_half = worst_half.max(rel_err(lf0(0.5), closed));
            if i < 10 {
                for j in 0..=20 {
                    let x = -0.5 + j as f64 / 20.0;
                    worst_poly = worst_poly.max(rel_err(lf0(0.5 + x), f0_polynomial(k, e, x)));
                }
                let first = log_first_moment(1, &params, 1.0, &t.floor()).unwrap_or(f64::NAN) - std::f64::consts::LN_2;
                let half = log_pair_weight_f(k, params.u0(), &OverlapPoint { alpha: 0.5, weights: t.floor() }, FMode::Auto)
                    .unwrap_or(f64::NAN);
                worst_sq = worst_sq.max(rel_err(half.exp(), (2.0 * first).exp()));
            }
        }
    }
    out.push(check(s, "f0_half_closed_form", worst_half, 1e-10, "f0(1/2) = 4 (1 - eps0)^2 (2 - eps0)^(2k - 2)".into()));
    out.push(check(s, "f0_polynomial_form", worst_poly, 1e-10, "explicit polynomial in x = alpha - 1/2".into()));
    out.push(check(s, "f_half_is_squared_first_moment", worst_sq, 1e-12, "f(1/2) = (eta^-u0 Z)^2".into()));

    let mut violations = 0.0;
    for k in 2..=12u32 {
        let w = random_weights(&mut rng, 1, 0.3)[0];
        let w = WeightPair::new(w.gamma().min(0.999), w.eta().min(0.999)).expect("valid");
        for i in 1..=1000 {
            let x = 0.5 * i as f64 / 1000.0;
            let up = pair_weight_f(k, 0.0, &OverlapPoint { alpha: 0.5 + x, weights: w }, FMode::Auto);
            let down = pair_weight_f(k, 0.0, &OverlapPoint { alpha: 0.5 - x, weights: w }, FMode::Auto);
            match (up, down) {
                (Ok(u), Ok(d)) if u > d => {}
                _ => violations += 1.0,
            }
        }
    }
    out.push(check(s, "symmetric_dominance", violations, 0.0, "f(1/2 + x) > f(1/2 - x), 1000-point grid, k = 2..12".into()));

    let mut sandwich = 0.0;
    for i in 0..=1000 {
        let y = i as f64 / 1000.0;
        let mid = rate_denominator(y);
        let d = (1.0 - y) * (1.0 - y);
        if !(d / 2.0 <= mid + 1e-15 && mid <= d + 1e-15) {
            sandwich += 1.0;
        }
    }
    out.push(check(s, "rate_denominator_sandwich", sandwich, 0.0, "(1-y)^2/2 <= 1 - y + y ln y <= (1-y)^2 on 1001 points".into()));
    out
}
