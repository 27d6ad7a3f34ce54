//! Closed-form density bounds for p-satisfiability of random k-CNF.
//!
//! All densities are in clauses per variable and all logarithms are
//! natural.

use serde::Serialize;
use std::f64::consts::{LN_2, PI};

use crate::error::{invalid, Result};

/// Largest clause width accepted anywhere in the crate.
pub const MAX_K: u32 = 200;

/// The validated pair `(k, p)`; `q = 1 - p` and `u0 = q 2^-k` are always
/// recomputed from `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemParams {
    k: u32,
    p: f64,
}

impl ProblemParams {
    pub fn new(k: u32, p: f64) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!("k >= 2 required (got k = {k})")));
        }
        if k > MAX_K {
            return Err(invalid(format!("k <= {MAX_K} required (got k = {k})")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid(format!("0 < p <= 1 required (got p = {p})")));
        }
        Ok(Self { k, p })
    }

    /// Builds parameters from `q = 1 - p`.
    pub fn from_q(k: u32, q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(invalid(format!("0 <= q < 1 required (got q = {q})")));
        }
        Self::new(k, 1.0 - q)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// Target fraction of unsatisfied clauses, `(1 - p) 2^-k`.
    pub fn u0(&self) -> f64 {
        self.q() * pow2(-(self.k as i32))
    }
}

pub(crate) fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// `q ln q` with the removable singularity at 0 filled in.
pub fn xlnx(q: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else {
        q * q.ln()
    }
}

/// `1 - q + q ln q`, evaluated as `p + (1-p) ln1p(-p)` to keep precision for
/// small `p`.
pub fn rate_denominator(q: f64) -> f64 {
    if q == 0.0 {
        return 1.0;
    }
    let p = 1.0 - q;
    p + q * (-p).ln_1p()
}

/// First-moment threshold `T_k(p) = 2^k ln 2 / (p + (1-p) ln(1-p))`,
/// continuous at `p = 1` where it equals `2^k ln 2`.
pub fn threshold_t(params: &ProblemParams) -> f64 {
    let num = pow2(params.k as i32) * LN_2;
    if params.p == 1.0 {
        num
    } else {
        num / rate_denominator(params.q())
    }
}

/// The sharper first-moment bound obtained with the optimal clause weight
/// `eta = q (2^k - 1) / (2^k - q)`.
pub fn lemma2_upper(params: &ProblemParams) -> f64 {
    let two_k = pow2(params.k as i32);
    let q = params.q();
    // ln((2^k - 1)/(2^k - q)) = ln1p(-p / (2^k - q))
    let log_ratio = (-params.p / (two_k - q)).ln_1p();
    two_k * LN_2 / (xlnx(q) - (two_k - q) * log_ratio)
}

/// Rate `phi(q) = (1 - sqrt q)^2 / (1 - q + q ln q)` and the relative gap
/// `delta = 20 k 2^(-k phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaRate {
    pub phi: f64,
    pub delta: f64,
}

pub fn delta_rate(params: &ProblemParams) -> Result<DeltaRate> {
    let q = params.q();
    if q >= 1.0 {
        return Err(invalid("q < 1 required: the rate denominator vanishes at q = 1"));
    }
    let k = params.k as f64;
    let phi = (1.0 - q.sqrt()).powi(2) / rate_denominator(q);
    let delta = 20.0 * k * 2f64.powf(-k * phi);
    Ok(DeltaRate { phi, delta })
}

/// The lower-bound target `t_k`, or a vacuous marker when `delta >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LowerTarget {
    Density { value: f64, delta: f64 },
    Vacuous { delta: f64 },
}

impl LowerTarget {
    pub fn value(&self) -> Option<f64> {
        match self {
            LowerTarget::Density { value, .. } => Some(*value),
            LowerTarget::Vacuous { .. } => None,
        }
    }
}

pub fn t_lower(params: &ProblemParams) -> Result<LowerTarget> {
    let DeltaRate { delta, .. } = delta_rate(params)?;
    if delta >= 1.0 {
        Ok(LowerTarget::Vacuous { delta })
    } else {
        Ok(LowerTarget::Density {
            value: threshold_t(params) * (1.0 - delta),
            delta,
        })
    }
}

/// Leading-order terms of the earlier algorithmic lower bound and
/// first-moment upper bound, both scaling as `p^-2`. The lower bound's
/// `O(1/p)` correction has no published constant and is omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CghsBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn cghs_bounds(params: &ProblemParams) -> Result<CghsBounds> {
    let p = params.p;
    if p >= 1.0 {
        return Err(invalid("p < 1 required for the small-p comparison bounds"));
    }
    let k = params.k as f64;
    let two_k = pow2(params.k as i32);
    let lower = k * 4.0 * two_k / (PI * (k + 1.0).powi(2)) / (p * p);
    let upper = 2.0 * (two_k - 1.0) * LN_2 / (p * p);
    Ok(CghsBounds { lower, upper })
}

/// Every analytic quantity for one `(k, p)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityBounds {
    pub t_big: f64,
    pub upper: f64,
    pub t_small: Option<LowerTarget>,
    pub phi: Option<f64>,
    pub delta: Option<f64>,
    pub cghs_lower: Option<f64>,
    pub cghs_upper: Option<f64>,
}

pub fn density_bounds(params: &ProblemParams) -> DensityBounds {
    let rate = delta_rate(params).ok();
    let cghs = cghs_bounds(params).ok();
    DensityBounds {
        t_big: threshold_t(params),
        upper: lemma2_upper(params),
        t_small: t_lower(params).ok(),
        phi: rate.map(|r| r.phi),
        delta: rate.map(|r| r.delta),
        cghs_lower: cghs.map(|c| c.lower),
        cghs_upper: cghs.map(|c| c.upper),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pp(k: u32, p: f64) -> ProblemParams {
        ProblemParams::new(k, p).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(1, 0.5).is_err());
        assert!(ProblemParams::new(3, 0.0).is_err());
        assert!(ProblemParams::new(3, 1.5).is_err());
        assert!(ProblemParams::new(3, f64::NAN).is_err());
        let p = pp(3, 0.5);
        assert_eq!(p.q(), 0.5);
        assert_eq!(p.u0(), 0.0625);
        assert_eq!(pp(3, 1.0).u0(), 0.0);
        assert!(pp(12, 0.05).u0() < pow2(-12));
    }

    #[test]
    fn threshold_values() {
        assert_relative_eq!(threshold_t(&pp(3, 1.0)), 8.0 * LN_2, max_relative = 1e-15);
        // high-precision reference: 36.142261652334871273...
        assert_relative_eq!(threshold_t(&pp(3, 0.5)), 36.142261652334871, max_relative = 1e-13);
    }

    #[test]
    fn threshold_small_p_asymptote() {
        let p = 1e-3;
        let ratio = threshold_t(&pp(3, p)) * p * p / (16.0 * LN_2);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn lemma2_values() {
        assert_relative_eq!(lemma2_upper(&pp(3, 1.0)), LN_2 / -(7f64 / 8.0).ln(), max_relative = 1e-14);
        assert_relative_eq!(lemma2_upper(&pp(3, 1.0)), 5.190893069684431, max_relative = 1e-13);
        assert_relative_eq!(lemma2_upper(&pp(3, 0.5)), 32.452050359265929, max_relative = 1e-12);
    }

    #[test]
    fn rate_values() {
        let r = delta_rate(&ProblemParams::from_q(5, 0.0).unwrap()).unwrap();
        assert_eq!(r.phi, 1.0);
        let r = delta_rate(&ProblemParams::from_q(10, 0.5).unwrap()).unwrap();
        assert_relative_eq!(r.phi, 0.55913735962047292, max_relative = 1e-12);
        assert_relative_eq!(r.delta, 4.1481917769017231, max_relative = 1e-12);
        let r = delta_rate(&ProblemParams::from_q(60, 0.5).unwrap()).unwrap();
        assert_relative_eq!(r.delta, 9.553317895128190e-8, max_relative = 1e-10);
        let r = delta_rate(&ProblemParams::from_q(4, 0.999).unwrap()).unwrap();
        assert!(r.phi > 0.5 && r.phi - 0.5 < 0.01, "{}", r.phi);
    }

    #[test]
    fn lower_target() {
        let v = t_lower(&ProblemParams::from_q(10, 0.5).unwrap()).unwrap();
        assert!(matches!(v, LowerTarget::Vacuous { .. }));
        assert_eq!(v.value(), None);
        let params = ProblemParams::from_q(30, 0.5).unwrap();
        let t = t_lower(&params).unwrap().value().unwrap();
        assert!(t > 0.0 && t < threshold_t(&params));
        assert_relative_eq!(t, 4824962781.8712543, max_relative = 1e-11);

        let mut last = 0.0;
        for k in [30, 40, 50, 60] {
            let params = ProblemParams::from_q(k, 0.5).unwrap();
            let ratio = t_lower(&params).unwrap().value().unwrap() / threshold_t(&params);
            assert!(ratio > last && ratio < 1.0);
            last = ratio;
        }
        assert!(last > 1.0 - 1e-6);
    }

    #[test]
    fn cghs_values() {
        let c = cghs_bounds(&pp(3, 0.5)).unwrap();
        assert_relative_eq!(c.lower, 7.6394372684109761, max_relative = 1e-13);
        assert_relative_eq!(c.upper, 38.816242111356937, max_relative = 1e-13);
        assert!(cghs_bounds(&pp(3, 1.0)).is_err());

        let ratio = |k: u32| {
            let c = cghs_bounds(&pp(k, 0.1)).unwrap();
            c.upper / c.lower
        };
        let k = 10.0f64;
        let closed = PI * (k + 1.0).powi(2) * 2.0 * (1024.0 - 1.0) * LN_2 / (k * 4096.0);
        assert_relative_eq!(ratio(10), closed, max_relative = 1e-12);
        assert!(ratio(12) > ratio(10) && ratio(10) > ratio(6));
    }

    #[test]
    fn rate_denominator_sandwich_on_grid() {
        for i in 0..=1000 {
            let y = i as f64 / 1000.0;
            let mid = rate_denominator(y);
            let d = (1.0 - y).powi(2);
            assert!(d / 2.0 <= mid + 1e-15 && mid <= d + 1e-15, "y = {y}");
        }
    }

    #[test]
    fn threshold_decreasing_in_p() {
        for k in 2..=12 {
            let mut last = f64::INFINITY;
            for i in 1..=20 {
                let t = threshold_t(&pp(k, i as f64 * 0.05));
                assert!(t < last);
                last = t;
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn lemma2_below_threshold(k in 2u32..=12, i in 1u32..=20) {
            let params = pp(k, i as f64 * 0.05);
            let up = lemma2_upper(&params);
            let t = threshold_t(&params);
            proptest::prop_assert!(up <= t);
            if params.p() < 1.0 {
                proptest::prop_assert!(up < t);
            }
        }
    }
}
