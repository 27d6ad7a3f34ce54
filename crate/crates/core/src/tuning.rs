//! Weight tuning: the pair `(gamma0, eta0)` under which a clause drawn from
//! the tilted law has mean-zero literal imbalance `H` and mean `u0`
//! unsatisfied indicator `U`.
//!
//! Writing `eps0 = 1 - gamma0^2`, the tuning system collapses to the scalar
//! equation `psi(eps0) = 1 - q / 2^(k-1)` with
//! `psi(t) = sum_{j=1}^{k-1} (2 - t)^-j`, which is increasing on `[0, 1]`.
//! We bisect on that equation in a rearranged form that stays accurate when
//! `eps0` is of order `2^-k`.

use serde::Serialize;

use crate::bounds::{pow2, ProblemParams};
use crate::error::{invalid, Error, Result};
use crate::moments::{binomial, clause_weight_z, WeightPair};

/// Absolute tolerance required of both tuning residuals.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// `psi(t) = sum_{j=1}^{k-1} (2 - t)^-j` on `[0, 1]`.
pub fn psi_eval(k: u32, t: f64) -> Result<f64> {
    if k < 2 {
        return Err(invalid("k >= 2 required"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("0 <= t <= 1 required (got t = {t})")));
    }
    let base = 1.0 / (2.0 - t);
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 1..k {
        term *= base;
        sum += term;
    }
    Ok(sum)
}

/// `(psi(t) - target) (1 - t)`, which has the sign of `psi(t) - target` on
/// `[0, 1)` and is computed without cancellation for tiny `t`.
fn scaled_residual(k: u32, q: f64, t: f64) -> f64 {
    let p = 1.0 - q;
    let s = pow2(1 - k as i32);
    let excess = (-(k as f64 - 1.0) * (-t / 2.0).ln_1p()).exp_m1();
    t * (1.0 - q * s) - s * (excess + p)
}

/// Solves `psi(eps0) = 1 - q / 2^(k-1)` by bisection on `[0, 1]`.
pub fn solve_epsilon0(k: u32, q: f64) -> Result<f64> {
    if k < 2 {
        return Err(invalid("k >= 2 required"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("0 <= q <= 1 required (got q = {q})")));
    }
    let target = 1.0 - q * pow2(1 - k as i32);
    let (lo_psi, hi_psi) = (psi_eval(k, 0.0)?, psi_eval(k, 1.0)?);
    if target < lo_psi - 1e-15 || target > hi_psi + 1e-15 {
        return Err(invalid(format!(
            "psi target {target} outside [psi(0), psi(1)] = [{lo_psi}, {hi_psi}] for k = {k}"
        )));
    }
    if k == 2 && q == 0.0 {
        // psi(t) = 1/(2 - t) = 1 forces t = 1
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if scaled_residual(k, q, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps0 = 0.5 * (lo + hi);
    let gap = (psi_eval(k, eps0)? - target).abs();
    if gap > 1e-12 {
        return Err(Error::Numeric(format!("psi equation residual {gap:e} at k = {k}, q = {q}")));
    }
    Ok(eps0)
}

/// Solution of the tuning system, with the residuals of both equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TunedWeights {
    pub k: u32,
    pub u0: f64,
    pub eps0: f64,
    pub gamma0: f64,
    pub eta0: f64,
    /// `1 - eta0`, kept separately for precision at large `k`.
    pub zeta0: f64,
    pub residual1: f64,
    pub residual2: f64,
}

impl TunedWeights {
    /// The pair `(gamma0, eta0)`.
    pub fn floor(&self) -> WeightPair {
        WeightPair::from_complements(self.eps0, self.zeta0)
            .expect("tuned weights are validated at construction")
    }

    /// The pair `(sqrt gamma0, sqrt eta0)` used near the overlap extremes.
    pub fn sqrt_floor(&self) -> WeightPair {
        self.floor().sqrt()
    }
}

pub fn tuned_weights(params: &ProblemParams) -> Result<TunedWeights> {
    let k = params.k();
    let q = params.q();
    if k == 2 && q == 0.0 {
        return Err(Error::Degenerate(
            "(k = 2, p = 1) forces gamma0 = 0; this pair is excluded".into(),
        ));
    }
    let eps0 = solve_epsilon0(k, q)?;
    if eps0 >= 1.0 {
        return Err(Error::Degenerate(format!("gamma0 = 0 at k = {k}, p = {}", params.p())));
    }
    let zeta0 = if q == 0.0 {
        1.0
    } else {
        eps0 * (2.0 - eps0).powi(k as i32 - 1)
    };
    let eta0 = 1.0 - zeta0;
    let gamma0 = (1.0 - eps0).sqrt();
    let u0 = params.u0();

    // The H-centering equation reduces to the psi equation; the U equation
    // is checked through the closed-form tilted mean.
    let residual1 = (psi_eval(k, eps0)? - (1.0 - q * pow2(1 - k as i32))).abs();
    let residual2 = (u0 - eta0 / ((2.0 - eps0).powi(k as i32) - zeta0)).abs();
    if !(residual1 <= RESIDUAL_TOL && residual2 <= RESIDUAL_TOL) {
        return Err(Error::Numeric(format!(
            "tuning residuals ({residual1:e}, {residual2:e}) exceed {RESIDUAL_TOL:e}"
        )));
    }
    Ok(TunedWeights {
        k,
        u0,
        eps0,
        gamma0,
        eta0,
        zeta0,
        residual1,
        residual2,
    })
}

/// Law of the number `j` of literals unsatisfied by a fixed assignment when
/// clauses are reweighted by `gamma^H eta^U`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedClauseLaw {
    pub probs: Vec<f64>,
}

impl TiltedClauseLaw {
    pub fn new(k: u32, w: &WeightPair) -> Self {
        // C(k,j) 2^-k gamma^(k-2j) eta^[j=k], with the common gamma^k 2^-k dropped
        let inv_g2 = 1.0 / (1.0 - w.eps());
        let mut raw: Vec<f64> = (0..=k)
            .map(|j| binomial(k, j) * inv_g2.powi(j as i32))
            .collect();
        raw[k as usize] *= w.eta();
        let total: f64 = raw.iter().sum();
        Self {
            probs: raw.into_iter().map(|x| x / total).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedMoments {
    /// `E[H]` summed over the tilted law.
    pub mean_h: f64,
    /// `E[U]` summed over the tilted law.
    pub mean_u: f64,
    /// `E[H]` from the closed form in terms of `Z(gamma, eta)`.
    pub mean_h_closed: f64,
    /// `E[U]` from the closed form in terms of `Z(gamma, eta)`.
    pub mean_u_closed: f64,
    pub law: TiltedClauseLaw,
}

pub fn tilted_clause_moments(params: &ProblemParams, w: &TunedWeights) -> TiltedMoments {
    let k = params.k();
    let pair = w.floor();
    let law = TiltedClauseLaw::new(k, &pair);
    let kf = k as f64;
    let mean_h = law
        .probs
        .iter()
        .enumerate()
        .map(|(j, p)| p * (kf - 2.0 * j as f64))
        .sum();
    let mean_u = law.probs[k as usize];

    let (g, eta) = (pair.gamma(), pair.eta());
    let z = clause_weight_z(k, &pair);
    let two_g_pow = (2.0 * g).powi(-(k as i32));
    let h_numer = 0.5 * kf * (g - 1.0 / g) * ((g + 1.0 / g) / 2.0).powi(k as i32 - 1)
        + kf * two_g_pow * pair.zeta();
    let mean_h_closed = h_numer / z;
    let mean_u_closed = two_g_pow * eta / z;
    TiltedMoments {
        mean_h,
        mean_u,
        mean_h_closed,
        mean_u_closed,
        law,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psi_values() {
        assert_eq!(psi_eval(3, 0.0).unwrap(), 0.75);
        assert_eq!(psi_eval(2, 1.0).unwrap(), 1.0);
        assert_eq!(psi_eval(7, 1.0).unwrap(), 6.0);
        // w + w^2 = 0.875 with w = 1/(2 - t)
        let w = (-1.0 + 4.5f64.sqrt()) / 2.0;
        let t = 2.0 - 1.0 / w;
        assert_relative_eq!(psi_eval(3, t).unwrap(), 0.875, max_relative = 1e-14);
        assert!(psi_eval(3, 1.5).is_err());
    }

    #[test]
    fn psi_matches_closed_form() {
        for k in 2..12u32 {
            for i in 0..20 {
                let t = i as f64 / 20.0;
                let c = ((2.0 - t).powi(k as i32 - 1) - 1.0) / ((1.0 - t) * (2.0 - t).powi(k as i32 - 1));
                assert_relative_eq!(psi_eval(k, t).unwrap(), c, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn psi_increasing() {
        for k in 2..40u32 {
            let mut last = -1.0;
            for i in 0..=200 {
                let v = psi_eval(k, i as f64 / 200.0).unwrap();
                assert!(v > last);
                last = v;
            }
        }
    }

    #[test]
    fn psi_sandwich_large_k() {
        for k in [64u32, 80, 100] {
            let kf = k as f64;
            let s = pow2(1 - k as i32);
            for i in 0..=50 {
                let t = i as f64 / 50.0 / (2.0 * kf);
                let base = 1.0 - s + t - (kf + 1.0) * t / pow2(k as i32);
                let v = psi_eval(k, t).unwrap();
                assert!(base + t * t / 2.0 <= v + 1e-15 && v <= base + 2.0 * t * t + 1e-15);
            }
        }
    }

    #[test]
    fn epsilon0_closed_forms() {
        let w = (-1.0 + 4.5f64.sqrt()) / 2.0;
        assert_relative_eq!(solve_epsilon0(3, 0.5).unwrap(), 2.0 - 1.0 / w, max_relative = 1e-13);
        assert_relative_eq!(solve_epsilon0(3, 0.5).unwrap(), 0.21638837510877567, max_relative = 1e-13);
        // gamma0^2 = (sqrt 5 - 1)/2
        let g2 = (5f64.sqrt() - 1.0) / 2.0;
        assert_relative_eq!(solve_epsilon0(3, 0.0).unwrap(), 1.0 - g2, max_relative = 1e-13);
        assert_eq!(solve_epsilon0(2, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn tuned_k3() {
        let params = ProblemParams::new(3, 0.5).unwrap();
        let w = tuned_weights(&params).unwrap();
        assert_relative_eq!(w.gamma0, 0.88521840519231429, max_relative = 1e-12);
        assert_relative_eq!(w.eta0, 0.31161006120673050, max_relative = 1e-12);
        assert!(w.residual1 <= RESIDUAL_TOL && w.residual2 <= RESIDUAL_TOL);
        let g2 = w.gamma0 * w.gamma0;
        assert_relative_eq!(w.eta0 / ((1.0 + g2).powi(3) - (1.0 - w.eta0)), 0.0625, max_relative = 1e-12);

        let w = tuned_weights(&ProblemParams::new(3, 1.0).unwrap()).unwrap();
        assert_eq!(w.eta0, 0.0);
        assert_relative_eq!(w.gamma0 * w.gamma0, 0.6180339887498949, max_relative = 1e-13);
    }

    #[test]
    fn degenerate_pair_rejected() {
        let err = tuned_weights(&ProblemParams::new(2, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        assert!(err.to_string().contains("k = 2, p = 1"));
        assert!(tuned_weights(&ProblemParams::new(2, 0.9).unwrap()).is_ok());
    }

    #[test]
    fn residuals_over_grid() {
        for k in 2..=30u32 {
            for i in 1..=10 {
                let p = i as f64 / 10.0;
                if k == 2 && i == 10 {
                    continue;
                }
                let params = ProblemParams::new(k, p).unwrap();
                let w = tuned_weights(&params).unwrap();
                assert!(w.residual1 <= RESIDUAL_TOL && w.residual2 <= RESIDUAL_TOL, "k={k} p={p}");
                assert_relative_eq!(w.gamma0, (1.0 - w.eps0).sqrt());
                let m = tilted_clause_moments(&params, &w);
                assert!(m.mean_h.abs() <= 1e-10, "k={k} p={p} {}", m.mean_h);
                assert!((m.mean_u - params.u0()).abs() <= 1e-10);
                assert!(m.mean_h_closed.abs() <= 1e-10, "k={k} p={p} {}", m.mean_h_closed);
                assert!((m.mean_u_closed - params.u0()).abs() <= 1e-10);
                let s: f64 = m.law.probs.iter().sum();
                assert!((s - 1.0).abs() <= 1e-12 && m.law.probs.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn tilted_k3() {
        let params = ProblemParams::new(3, 0.5).unwrap();
        let w = tuned_weights(&params).unwrap();
        let m = tilted_clause_moments(&params, &w);
        assert!(m.mean_h.abs() < 1e-12);
        assert_relative_eq!(m.mean_u, 0.0625, max_relative = 1e-12);

        let params = ProblemParams::new(3, 1.0).unwrap();
        let m = tilted_clause_moments(&params, &tuned_weights(&params).unwrap());
        assert_eq!(m.mean_u, 0.0);
    }

    #[test]
    fn fact1_bounds_large_k() {
        for k in [30u32, 35, 40] {
            let kf = k as f64;
            let two_k = pow2(k as i32);
            for i in 0..10 {
                let y = i as f64 / 10.0;
                let w = tuned_weights(&ProblemParams::from_q(k, y).unwrap()).unwrap();
                let hi = 2.0 * (1.0 - y) / (two_k - kf - 1.0);
                let lo = hi - 4.0 * kf * (1.0 - y).powi(2) / (two_k * two_k);
                assert!(lo <= w.eps0 && w.eps0 <= hi, "k={k} y={y} eps0={:e}", w.eps0);
                let z = y.min(y - (kf + 1.0) * (1.0 - y) / (two_k - kf - 1.0) + 4.0 * kf * (1.0 - y).powi(2) / two_k);
                assert!(w.eta0 <= z, "k={k} y={y}");
            }
        }
    }
}
