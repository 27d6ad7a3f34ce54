//! Brute-force reference implementations used to cross-check the closed
//! forms. Everything here enumerates the underlying probability space
//! directly and is only meant for small sizes.

use crate::empirical::{evaluate_assignment, Assignment, Formula};
use crate::error::{invalid, Result};
use crate::moments::WeightPair;

fn weight_power(w: &WeightPair, h: i64, u: u32) -> f64 {
    let eta_part = if u == 0 { 1.0 } else { w.eta().powi(u as i32) };
    w.gamma().powi(h as i32) * eta_part
}

/// `E[gamma^H eta^U]` for one clause under a fixed assignment, averaging
/// over all `2^k` truth patterns of its literals.
pub fn clause_weight_z_enumerated(k: u32, w: &WeightPair) -> f64 {
    let total: f64 = (0u32..1 << k)
        .map(|mask| {
            let trues = mask.count_ones() as i64;
            let h = 2 * trues - k as i64;
            weight_power(w, h, u32::from(trues == 0))
        })
        .sum();
    total / 2f64.powi(k as i32)
}

/// The pair kernel by enumeration of all `(2n)^k` clauses, for `sigma`
/// all-true and `tau` agreeing with it on the first `z` variables.
pub fn pair_weight_f_enumerated(k: u32, n: usize, z: usize, w: &WeightPair, u0: f64) -> Result<f64> {
    if z > n || n == 0 {
        return Err(invalid("0 <= z <= n and n >= 1 required"));
    }
    let lits = 2 * n;
    let count = lits.pow(k);
    let mut total = 0.0;
    for code in 0..count {
        let (mut rest, mut hs, mut ht, mut ts, mut tt) = (code, 0i64, 0i64, 0u32, 0u32);
        for _ in 0..k {
            let lit = rest % lits;
            rest /= lits;
            let (var, positive) = (lit / 2, lit % 2 == 0);
            let under_sigma = positive;
            let under_tau = positive == (var < z);
            hs += if under_sigma { 1 } else { -1 };
            ht += if under_tau { 1 } else { -1 };
            ts += u32::from(under_sigma);
            tt += u32::from(under_tau);
        }
        let u = u32::from(ts == 0) + u32::from(tt == 0);
        total += weight_power(w, hs + ht, u);
    }
    let avg = total / count as f64;
    let pre = if u0 == 0.0 { 1.0 } else { w.eta().powf(-2.0 * u0) };
    Ok(pre * avg)
}

/// The normalized kernel `f0(1/2 + x)` at the tuned weights as an explicit
/// polynomial in `x`.
pub fn f0_polynomial(k: u32, eps0: f64, x: f64) -> f64 {
    let (e, two_e) = (eps0, 2.0 - eps0);
    let ki = k as i32;
    (2.0 * x * e * e + two_e * two_e).powi(ki) - 2.0 * e * two_e.powi(ki - 1) * (two_e + 2.0 * x * e).powi(ki)
        + e * e * two_e.powi(2 * ki - 2) * (1.0 + 2.0 * x).powi(ki)
}

/// `X` by evaluating every assignment independently.
pub fn weighted_sum_x_naive(f: &Formula, w: &WeightPair, u0: f64) -> Result<f64> {
    let n = f.n();
    let m = f.m() as f64;
    let mut total = 0.0;
    for mask in 0u64..1 << n {
        let a = Assignment::new((0..n).map(|i| mask >> i & 1 == 1).collect());
        let e = evaluate_assignment(f, &a)?;
        let eta_part = if e.u as f64 == u0 * m { 1.0 } else { w.eta().powf(e.u as f64 - u0 * m) };
        total += w.gamma().powi(e.h as i32) * eta_part;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{clause_weight_z, pair_weight_f, FMode, OverlapPoint};
    use approx::assert_relative_eq;

    #[test]
    fn enumerated_z_matches_closed_form() {
        for k in 2..=6 {
            let w = WeightPair::new(0.83, 0.27).unwrap();
            assert_relative_eq!(clause_weight_z_enumerated(k, &w), clause_weight_z(k, &w), max_relative = 1e-13);
        }
    }

    #[test]
    fn enumerated_pair_kernel_matches() {
        let w = WeightPair::new(0.9, 0.4).unwrap();
        for z in 0..=4 {
            let e = pair_weight_f_enumerated(3, 4, z, &w, 0.05).unwrap();
            let pt = OverlapPoint::new(z as f64 / 4.0, w).unwrap();
            assert_relative_eq!(e, pair_weight_f(3, 0.05, &pt, FMode::Auto).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn polynomial_at_half() {
        let e: f64 = 0.2;
        let closed = 4.0 * (1.0 - e).powi(2) * (2.0 - e).powi(4);
        assert_relative_eq!(f0_polynomial(3, e, 0.0), closed, max_relative = 1e-14);
    }
}
