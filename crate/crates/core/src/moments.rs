//! First- and second-moment kernels of the weighted assignment count
//! `X = sum_sigma gamma^H(sigma) eta^(U(sigma) - u0 m)`.
//!
//! Weights are carried together with their complements `eps = 1 - gamma^2`
//! and `zeta = 1 - eta`. At large `k` the tuned weights sit within `2^-k` of
//! one, and every kernel below is evaluated as "one plus a small excess" so
//! that the excess keeps full relative precision. All kernels are returned
//! in the log domain (nats).

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::LN_2;

use crate::bounds::{pow2, xlnx, ProblemParams};
use crate::error::{invalid, Error, Result};
use crate::tuning::TunedWeights;

/// `C(k, j)` as a float; exact for the widths used here.
pub fn binomial(k: u32, j: u32) -> f64 {
    if j > k {
        return 0.0;
    }
    let j = j.min(k - j);
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// A literal weight `gamma` in `(0, 1]` and a clause weight `eta` in
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightPair {
    gamma: f64,
    eta: f64,
    eps: f64,
    zeta: f64,
}

impl WeightPair {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid(format!("0 < gamma <= 1 required (got {gamma})")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("0 <= eta <= 1 required (got {eta})")));
        }
        Ok(Self {
            gamma,
            eta,
            eps: (1.0 - gamma) * (1.0 + gamma),
            zeta: 1.0 - eta,
        })
    }

    /// Builds the pair from `eps = 1 - gamma^2` and `zeta = 1 - eta`.
    pub fn from_complements(eps: f64, zeta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(invalid(format!("0 <= 1 - gamma^2 < 1 required (got {eps})")));
        }
        if !(0.0..=1.0).contains(&zeta) {
            return Err(invalid(format!("0 <= 1 - eta <= 1 required (got {zeta})")));
        }
        Ok(Self {
            gamma: (1.0 - eps).sqrt(),
            eta: 1.0 - zeta,
            eps,
            zeta,
        })
    }

    /// `(sqrt gamma, sqrt eta)` with complements computed without
    /// cancellation.
    pub fn sqrt(&self) -> Self {
        let eta_root = self.eta.sqrt();
        Self {
            gamma: self.gamma.sqrt(),
            eta: eta_root,
            eps: self.eps / (1.0 + self.gamma),
            zeta: self.zeta / (1.0 + eta_root),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `1 - gamma^2`.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `1 - eta`.
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// True when both weights are at least those of `floor`.
    pub fn respects_floor(&self, floor: &TunedWeights) -> bool {
        self.eps <= floor.eps0 && self.zeta <= floor.zeta0
    }
}

/// An overlap fraction `alpha` with the weights used at that overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapPoint {
    pub alpha: f64,
    pub weights: WeightPair,
}

impl OverlapPoint {
    pub fn new(alpha: f64, weights: WeightPair) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("0 <= alpha <= 1 required (got {alpha})")));
        }
        Ok(Self { alpha, weights })
    }
}

/// Piecewise-constant weight schedule over `(1/2, 1]`, extended to all of
/// `[0, 1]` by nearest grid point and mirror symmetry about `1/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    grid: Vec<OverlapPoint>,
    floor: TunedWeights,
}

impl Schedule {
    pub fn new(grid: Vec<OverlapPoint>, floor: TunedWeights) -> Result<Self> {
        if grid.is_empty() {
            return Err(invalid("schedule grid must be nonempty"));
        }
        for (i, pt) in grid.iter().enumerate() {
            if !(pt.alpha > 0.5 && pt.alpha <= 1.0) {
                return Err(invalid(format!("schedule alpha {} outside (1/2, 1]", pt.alpha)));
            }
            if i > 0 && pt.alpha <= grid[i - 1].alpha {
                return Err(invalid("schedule grid must be strictly increasing"));
            }
            if !pt.weights.respects_floor(&floor) {
                return Err(invalid(format!(
                    "weights at alpha {} fall below the (gamma0, eta0) floor",
                    pt.alpha
                )));
            }
        }
        Ok(Self { grid, floor })
    }

    pub fn grid(&self) -> &[OverlapPoint] {
        &self.grid
    }

    pub fn floor(&self) -> &TunedWeights {
        &self.floor
    }

    pub fn weights_at(&self, alpha: f64) -> WeightPair {
        let a = if alpha < 0.5 { 1.0 - alpha } else { alpha };
        if a == 0.5 {
            return self.floor.floor();
        }
        let idx = self.grid.partition_point(|pt| pt.alpha < a);
        let pick = if idx == 0 {
            0
        } else if idx == self.grid.len() {
            idx - 1
        } else if a - self.grid[idx - 1].alpha <= self.grid[idx].alpha - a {
            idx - 1
        } else {
            idx
        };
        self.grid[pick].weights
    }
}

/// Per-clause weight `Z(gamma, eta) = E[gamma^H eta^U]` over a uniformly
/// random clause.
pub fn clause_weight_z(k: u32, w: &WeightPair) -> f64 {
    let g = w.gamma;
    ((g + 1.0 / g) / 2.0).powi(k as i32) - (2.0 * g).powi(-(k as i32)) * w.zeta
}

/// `ln Z(gamma, eta)`, accurate when `Z` is within `2^-k` of one.
pub fn log_clause_weight_z(k: u32, w: &WeightPair) -> Result<f64> {
    let kf = k as f64;
    let excess = (kf * (-w.eps / 2.0).ln_1p()).exp_m1() - w.zeta * pow2(-(k as i32));
    if !(excess > -1.0) {
        return Err(Error::Numeric(format!("Z(gamma, eta) <= 0 for {w:?}")));
    }
    Ok(-0.5 * kf * (-w.eps).ln_1p() + excess.ln_1p())
}

/// `-u0 ln eta`, zero when `u0 = 0`.
fn neg_u0_log_eta(u0: f64, w: &WeightPair) -> Result<f64> {
    if u0 == 0.0 {
        Ok(0.0)
    } else if w.eta > 0.0 {
        Ok(-u0 * (-w.zeta).ln_1p())
    } else {
        Err(invalid("eta > 0 required when u0 > 0"))
    }
}

/// `ln E[X] = n ln 2 + r n (ln Z - u0 ln eta)`.
pub fn log_first_moment(n: u64, params: &ProblemParams, r: f64, w: &WeightPair) -> Result<f64> {
    let z = clause_weight_z(params.k(), w);
    if !(z > 0.0) {
        return Err(Error::Numeric(format!("Z(gamma, eta) = {z} <= 0")));
    }
    let nf = n as f64;
    let per_clause = log_clause_weight_z(params.k(), w)? + neg_u0_log_eta(params.u0(), w)?;
    Ok(nf * LN_2 + r * nf * per_clause)
}

/// Evaluation route for the pair kernel `f(alpha, gamma, eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FMode {
    /// The three-term bracket in `alpha`.
    Direct,
    /// The sum of squares in `x = alpha - 1/2`.
    Binomial,
    /// Binomial for `alpha >= 1/2`, direct below.
    Auto,
}

/// Terms of the sum-of-squares form: returns `(S - 1, dS/dx)` where
/// `gamma^2k f = eta^-2u0 S`.
fn binomial_parts(k: u32, x: f64, w: &WeightPair) -> (f64, f64) {
    let kf = k as f64;
    let half_eps = w.eps / 2.0;
    let log_b = (-half_eps).ln_1p();
    let shift = w.zeta * pow2(-(k as i32));
    let a0_excess = (kf * log_b).exp_m1() - shift;
    let mut s_excess = a0_excess * (a0_excess + 2.0);
    let mut ds = 0.0;
    if half_eps > 0.0 {
        let ratio = half_eps / (1.0 - half_eps);
        let mut prod = (kf * log_b).exp(); // c^j b^(k-j)
        let mut two_x_pow = 1.0; // (2x)^(j-1)
        let mut choose = 1.0;
        for j in 1..=k {
            prod *= ratio;
            choose *= (k - j + 1) as f64 / j as f64;
            let a = prod - shift;
            let sq = a * a;
            ds += choose * 2.0 * j as f64 * two_x_pow * sq;
            two_x_pow *= 2.0 * x;
            s_excess += choose * two_x_pow * sq;
        }
    } else {
        // eps = 0: every a_j with j >= 1 equals -zeta 2^-k
        let sq = shift * shift;
        let mut choose = 1.0;
        let mut two_x_pow = 1.0;
        for j in 1..=k {
            choose *= (k - j + 1) as f64 / j as f64;
            ds += choose * 2.0 * j as f64 * two_x_pow * sq;
            two_x_pow *= 2.0 * x;
            s_excess += choose * two_x_pow * sq;
        }
    }
    (s_excess, ds)
}

fn direct_excess(k: u32, alpha: f64, w: &WeightPair) -> f64 {
    let kf = k as f64;
    let g2 = 1.0 - w.eps;
    let t1_excess = (kf * (alpha * w.eps * w.eps / (2.0 * g2)).ln_1p()).exp_m1();
    let scale = pow2(-(k as i32));
    let t2 = scale * (kf * (alpha * w.eps / g2).ln_1p()).exp();
    let t3 = if alpha == 0.0 {
        0.0
    } else {
        scale * (kf * (alpha.ln() - (-w.eps).ln_1p())).exp()
    };
    t1_excess - 2.0 * w.zeta * t2 + w.zeta * w.zeta * t3
}

/// `ln f(alpha, gamma, eta)`, the per-clause pair kernel for two assignments
/// agreeing on a fraction `alpha` of variables.
pub fn log_pair_weight_f(k: u32, u0: f64, pt: &OverlapPoint, mode: FMode) -> Result<f64> {
    let w = &pt.weights;
    let pre = 2.0 * neg_u0_log_eta(u0, w)?;
    let mode = match mode {
        FMode::Auto if pt.alpha >= 0.5 => FMode::Binomial,
        FMode::Auto => FMode::Direct,
        m => m,
    };
    let (excess, normal) = match mode {
        FMode::Binomial => {
            let (s_excess, _) = binomial_parts(k, pt.alpha - 0.5, w);
            (s_excess, -(k as f64) * (-w.eps).ln_1p())
        }
        _ => (direct_excess(k, pt.alpha, w), 0.0),
    };
    if !(excess > -1.0) {
        return Err(Error::Numeric(format!(
            "f(alpha = {}, gamma = {}, eta = {}) <= 0",
            pt.alpha, w.gamma, w.eta
        )));
    }
    Ok(pre + normal + excess.ln_1p())
}

pub fn pair_weight_f(k: u32, u0: f64, pt: &OverlapPoint, mode: FMode) -> Result<f64> {
    Ok(log_pair_weight_f(k, u0, pt, mode)?.exp())
}

/// `d ln f / d alpha` at fixed weights.
pub fn dlog_f_dalpha(k: u32, pt: &OverlapPoint) -> f64 {
    let (s_excess, ds) = binomial_parts(k, pt.alpha - 0.5, &pt.weights);
    ds / (1.0 + s_excess)
}

/// Binary entropy `-a ln a - (1-a) ln(1-a)` in nats.
pub fn entropy(alpha: f64) -> f64 {
    -xlnx(alpha) - xlnx(1.0 - alpha)
}

/// `ln g_r = r ln f - alpha ln alpha - (1 - alpha) ln(1 - alpha)`.
pub fn log_g(r: f64, pt: &OverlapPoint, k: u32, u0: f64) -> Result<f64> {
    let lf = log_pair_weight_f(k, u0, pt, FMode::Auto)?;
    Ok(log_g_from_log_f(r, lf, pt.alpha))
}

/// Same arithmetic as [`log_g`] given a precomputed `ln f`.
pub fn log_g_from_log_f(r: f64, log_f: f64, alpha: f64) -> f64 {
    r * log_f + entropy(alpha)
}

/// Half-width `3 ln k / k` of the outer region of the two-branch weight
/// choice.
pub fn outer_width(k: u32) -> f64 {
    3.0 * (k as f64).ln() / k as f64
}

/// `ln G_r(alpha)`: tuned weights on `[c, 1 - c]` with `c = 3 ln k / k`,
/// square-rooted tuned weights outside.
pub fn capital_g(r: f64, alpha: f64, params: &ProblemParams, tuned: &TunedWeights) -> Result<f64> {
    let k = params.k();
    if k <= 16 {
        return Err(invalid(format!(
            "k >= 17 required: G_r interval empty (3 ln k / k >= 1/2 at k = {k})"
        )));
    }
    let c = outer_width(k);
    let w = if alpha >= c && alpha <= 1.0 - c {
        tuned.floor()
    } else {
        tuned.sqrt_floor()
    };
    log_g(r, &OverlapPoint::new(alpha, w)?, k, params.u0())
}

/// `d ln g_r / d alpha = r f'/f + ln((1 - alpha)/alpha)` at fixed weights.
pub fn dlog_g_dalpha(r: f64, pt: &OverlapPoint, k: u32) -> Result<f64> {
    if !(pt.alpha > 0.0 && pt.alpha < 1.0) {
        return Err(invalid("0 < alpha < 1 required for the alpha-derivative"));
    }
    Ok(r * dlog_f_dalpha(k, pt) + ((1.0 - pt.alpha) / pt.alpha).ln())
}

/// Weights used for each overlap class of the pair sum.
#[derive(Debug, Clone, Copy)]
pub enum PairWeights<'a> {
    Constant(WeightPair),
    Schedule(&'a Schedule),
}

impl PairWeights<'_> {
    fn at(&self, alpha: f64) -> WeightPair {
        match self {
            PairWeights::Constant(w) => *w,
            PairWeights::Schedule(s) => s.weights_at(alpha),
        }
    }
}

pub fn ln_binomial(n: u64, z: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(z as f64 + 1.0) - ln_gamma((n - z) as f64 + 1.0)
}

/// `ln[2^n sum_z C(n,z) f(z/n, gamma(z), eta(z))^m]`.
///
/// Terms are evaluated in parallel and combined in index order, so the
/// result does not depend on the thread count.
pub fn log_second_moment_sum(n: u64, m: u64, k: u32, u0: f64, weights: PairWeights<'_>) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n >= 1 required"));
    }
    let terms: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|z| {
            let alpha = z as f64 / n as f64;
            let pt = OverlapPoint::new(alpha, weights.at(alpha))?;
            let lf = log_pair_weight_f(k, u0, &pt, FMode::Auto)?;
            Ok(ln_binomial(n, z) + m as f64 * lf)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(n as f64 * LN_2 + log_sum_exp(&terms))
}

/// Log-sum-exp with a fixed left-to-right accumulation order.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// The normalized kernel `f0(alpha) = 4^k gamma0^2k eta0^(2 u0) f(alpha,
/// gamma0, eta0)`, in log form.
pub fn log_f0(tuned: &TunedWeights, alpha: f64) -> Result<f64> {
    let k = tuned.k;
    let w = tuned.floor();
    let lf = log_pair_weight_f(k, tuned.u0, &OverlapPoint::new(alpha, w)?, FMode::Auto)?;
    let log_eta = if tuned.u0 == 0.0 { 0.0 } else { 2.0 * tuned.u0 * w.eta().ln() };
    Ok(2.0 * k as f64 * LN_2 + k as f64 * (1.0 - w.eps()).ln() + log_eta + lf)
}
