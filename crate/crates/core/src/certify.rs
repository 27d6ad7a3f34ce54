//! Numerical certification of the overlap dominance condition.
//!
//! For a density `r` the certifier checks that
//! `ln g_r(alpha) = r ln f(alpha, gamma(alpha), eta(alpha)) + H(alpha)` stays
//! below its value at `alpha = 1/2` (with the tuned weights) for every
//! `alpha` in `(1/2, 1]`, using a piecewise-constant weight schedule chosen
//! on a grid. Values between grid points are covered by a sampled derivative
//! bound.
//!
//! Near `alpha = 1/2` the margin vanishes quadratically, so no fixed room can
//! hold there. The maximal run of grid points next to `1/2` that miss the
//! room (the peak zone) is instead switched to the tuned weights and
//! certified by showing `ln g_r` is strictly decreasing across the zone.
//!
//! Since the optimal weights at a fixed `alpha` minimize `ln f` alone, they do
//! not depend on `r`. A [`Profile`] holds everything that is independent of
//! `r`, so that bisection over the density only redoes cheap arithmetic.

use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::LN_2;

use crate::bounds::{cghs_bounds, lemma2_upper, t_lower, threshold_t, ProblemParams};
use crate::error::{invalid, Error, Result};
use crate::moments::{
    capital_g, dlog_f_dalpha, entropy, log_g_from_log_f, log_pair_weight_f, outer_width, FMode,
    OverlapPoint, Schedule, WeightPair,
};
use crate::tuning::{tuned_weights, TunedWeights};

/// Step of the finite-difference curvature check at `alpha = 1/2`.
const CURVATURE_STEP: f64 = 1e-3;
/// Number of points used by [`proposition_check`].
pub const PROPOSITION_GRID: usize = 100_000;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyConfig {
    pub grid_points: usize,
    /// Absolute log-domain margin required at every regular grid point.
    pub room: f64,
    /// Multiplier applied to the largest sampled `|d ln g / d alpha|` on each
    /// grid segment.
    pub deriv_safety: f64,
    /// Derivative samples per grid point.
    pub refine_factor: usize,
    /// Relative tolerance of the bisection over `r`.
    pub r_tolerance: f64,
    /// Width constant of the truncation window on `U`.
    pub window_a: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            grid_points: 10_000,
            room: 1e-4,
            deriv_safety: 2.0,
            refine_factor: 10,
            r_tolerance: 1e-4,
            window_a: 3.0,
        }
    }
}

impl CertifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 100 {
            return Err(invalid(format!("grid_points >= 100 required (got {})", self.grid_points)));
        }
        if self.refine_factor == 0 {
            return Err(invalid("refine_factor >= 1 required"));
        }
        for (name, v) in [
            ("room", self.room),
            ("deriv_safety", self.deriv_safety),
            ("r_tolerance", self.r_tolerance),
            ("window_A", self.window_a),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive (got {v})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Certified,
    Failed,
    Degenerate,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Certified => "certified",
            Status::Failed => "failed",
            Status::Degenerate => "degenerate",
        }
    }
}

/// Golden-section minimization of `f` on `[lo, hi]`, returning the best
/// point evaluated (endpoints included).
fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    let mut best = (lo, f(lo));
    let f_hi = f(hi);
    if f_hi < best.1 {
        best = (hi, f_hi);
    }
    let tol = rel_tol * (hi - lo);
    if tol <= 0.0 {
        return best;
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Weights minimizing `ln f(alpha, ., .)` over the box above the tuned floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointChoice {
    pub weights: WeightPair,
    pub log_f: f64,
}

/// Coordinate sweeps: at least `MIN_SWEEPS`, then until a sweep improves
/// `ln f` by less than `SWEEP_TOL` relative.
const MIN_SWEEPS: usize = 3;
const MAX_SWEEPS: usize = 200;
const SWEEP_TOL: f64 = 1e-9;
const LINE_TOL: f64 = 1e-6;

fn optimize_log_f(alpha: f64, params: &ProblemParams, tuned: &TunedWeights) -> PointChoice {
    let (k, u0) = (params.k(), params.u0());
    let objective = |eps: f64, zeta: f64| -> f64 {
        WeightPair::from_complements(eps, zeta)
            .and_then(|w| OverlapPoint::new(alpha, w))
            .and_then(|pt| log_pair_weight_f(k, u0, &pt, FMode::Auto))
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    };
    let floor = tuned.floor();
    let root = tuned.sqrt_floor();
    let mut best: Option<(f64, f64, f64)> = None;
    for seed in [floor, root] {
        let (mut eps, mut zeta) = (seed.eps(), seed.zeta());
        let mut val = objective(eps, zeta);
        for sweep in 0..MAX_SWEEPS {
            let before = val;
            let (x, fx) = golden_min(|e| objective(e, zeta), 0.0, tuned.eps0, LINE_TOL);
            if fx < val {
                eps = x;
                val = fx;
            }
            let (y, fy) = golden_min(|z| objective(eps, z), 0.0, tuned.zeta0, LINE_TOL);
            if fy < val {
                zeta = y;
                val = fy;
            }
            if sweep + 1 >= MIN_SWEEPS && before - val <= SWEEP_TOL * val.abs() {
                break;
            }
        }
        if best.is_none_or(|b| val < b.2) {
            best = Some((eps, zeta, val));
        }
    }
    let (eps, zeta, log_f) = best.expect("two seeds evaluated");
    PointChoice {
        weights: WeightPair::from_complements(eps, zeta).expect("search stays inside the box"),
        log_f,
    }
}

/// Weights approximately minimizing `ln g_r(alpha, gamma, eta)` subject to
/// `gamma >= gamma0`, `eta >= eta0`, with the resulting `ln g_r`.
pub fn optimize_point(alpha: f64, r: f64, params: &ProblemParams, tuned: &TunedWeights) -> Result<(WeightPair, f64)> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(invalid(format!("alpha in (1/2, 1] required (got {alpha})")));
    }
    let choice = optimize_log_f(alpha, params, tuned);
    Ok((choice.weights, log_g_from_log_f(r, choice.log_f, alpha)))
}

#[derive(Debug, Clone, Copy)]
struct DerivSample {
    dlog_f: f64,
    dlog_f_floor: f64,
    d_entropy: f64,
}

/// The `r`-independent part of a certification: grid, optimized weights and
/// derivative samples.
#[derive(Debug, Clone)]
pub struct Profile {
    params: ProblemParams,
    tuned: TunedWeights,
    config: CertifyConfig,
    step: f64,
    alphas: Vec<f64>,
    choices: Vec<PointChoice>,
    floor_log_f: Vec<f64>,
    entropies: Vec<f64>,
    radius: Vec<f64>,
    samples: Vec<DerivSample>,
    log_f_half: f64,
    curv_log_f: f64,
    curv_entropy: f64,
}

/// Outcome of checking one density against a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub target: f64,
    /// Largest of the per-segment derivative bounds.
    pub derivative_bound: f64,
    /// Number of leading grid points handled by the peak zone.
    pub zone_len: usize,
    pub zone_max_derivative: Option<f64>,
    pub half_curvature: f64,
    pub margins: Vec<f64>,
    pub failure: Option<String>,
}

impl Profile {
    pub fn build(params: &ProblemParams, config: &CertifyConfig) -> Result<Self> {
        config.validate()?;
        let tuned = tuned_weights(params)?;
        let (k, u0) = (params.k(), params.u0());
        let n = config.grid_points;
        let step = 0.5 / n as f64;
        let alphas: Vec<f64> = (1..=n).map(|i| 0.5 + i as f64 * step).collect();
        let floor = tuned.floor();

        let per_point: Vec<(PointChoice, f64, f64, Vec<DerivSample>)> = alphas
            .par_iter()
            .enumerate()
            .map(|(i, &alpha)| {
                let choice = optimize_log_f(alpha, params, &tuned);
                let floor_lf = log_pair_weight_f(k, u0, &OverlapPoint::new(alpha, floor)?, FMode::Auto)?;
                let lo = if i == 0 { 0.5 } else { alpha - step / 2.0 };
                let hi = (alpha + step / 2.0).min(1.0);
                let width = (hi - lo) / config.refine_factor as f64;
                let samples = (0..config.refine_factor)
                    .map(|s| {
                        let a = lo + (s as f64 + 0.5) * width;
                        DerivSample {
                            dlog_f: dlog_f_dalpha(k, &OverlapPoint { alpha: a, weights: choice.weights }),
                            dlog_f_floor: dlog_f_dalpha(k, &OverlapPoint { alpha: a, weights: floor }),
                            d_entropy: ((1.0 - a) / a).ln(),
                        }
                    })
                    .collect();
                Ok((choice, floor_lf, (alpha - lo).max(hi - alpha), samples))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut choices = Vec::with_capacity(n);
        let mut floor_log_f = Vec::with_capacity(n);
        let mut radius = Vec::with_capacity(n);
        let mut samples = Vec::with_capacity(n * config.refine_factor);
        for (c, fl, rad, s) in per_point {
            choices.push(c);
            floor_log_f.push(fl);
            radius.push(rad);
            samples.extend(s);
        }
        let entropies = alphas.iter().map(|&a| entropy(a)).collect();
        let lf = |a: f64| log_pair_weight_f(k, u0, &OverlapPoint::new(a, floor)?, FMode::Auto);
        let log_f_half = lf(0.5)?;
        let d2 = CURVATURE_STEP * CURVATURE_STEP;
        let curv_log_f = (lf(0.5 + CURVATURE_STEP)? - 2.0 * log_f_half + lf(0.5 - CURVATURE_STEP)?) / d2;
        let curv_entropy =
            (entropy(0.5 + CURVATURE_STEP) - 2.0 * LN_2 + entropy(0.5 - CURVATURE_STEP)) / d2;
        Ok(Self {
            params: *params,
            tuned,
            config: *config,
            step,
            alphas,
            choices,
            floor_log_f,
            entropies,
            radius,
            samples,
            log_f_half,
            curv_log_f,
            curv_entropy,
        })
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn tuned(&self) -> &TunedWeights {
        &self.tuned
    }

    pub fn config(&self) -> &CertifyConfig {
        &self.config
    }

    /// `ln f(1/2, gamma0, eta0)`.
    pub fn log_f_half(&self) -> f64 {
        self.log_f_half
    }

    /// Largest density at which grid point `i` alone still lies below the
    /// target, `(ln 2 - H) / (ln f* - ln f(1/2))`; infinite if it always does.
    pub fn point_limit(&self, i: usize) -> f64 {
        let gap = self.choices[i].log_f - self.log_f_half;
        if gap <= 0.0 {
            f64::INFINITY
        } else {
            (LN_2 - self.entropies[i]) / gap
        }
    }

    pub fn verdict(&self, r: f64) -> Verdict {
        let n = self.alphas.len();
        let rf = self.config.refine_factor;
        let target = log_g_from_log_f(r, self.log_f_half, 0.5);
        let margins: Vec<f64> = (0..n)
            .map(|i| target - log_g_from_log_f(r, self.choices[i].log_f, self.alphas[i]))
            .collect();
        let local_bounds: Vec<f64> = self
            .samples
            .chunks(rf)
            .map(|seg| {
                self.config.deriv_safety
                    * seg.iter().map(|s| (r * s.dlog_f + s.d_entropy).abs()).fold(0.0, f64::max)
            })
            .collect();
        let derivative_bound = local_bounds.iter().cloned().fold(0.0, f64::max);
        let regular_ok = |i: usize| {
            margins[i] >= self.config.room && margins[i] - local_bounds[i] * self.radius[i] > 0.0
        };
        let zone_len = (0..n).take_while(|&i| !regular_ok(i)).count();
        let half_curvature = r * self.curv_log_f + self.curv_entropy;

        let mut failure = None;
        let mut zone_max_derivative = None;
        if zone_len > 0 {
            let zone_max = self.samples[..zone_len * rf]
                .iter()
                .map(|s| r * s.dlog_f_floor + s.d_entropy)
                .fold(f64::NEG_INFINITY, f64::max);
            zone_max_derivative = Some(zone_max);
            if !(zone_max < 0.0) {
                failure = Some(format!(
                    "ln g_r is not decreasing across the peak zone ending at alpha = {}",
                    self.alphas[zone_len - 1]
                ));
            }
        }
        if failure.is_none() {
            if let Some(i) = (zone_len..n).find(|&i| !regular_ok(i)) {
                failure = Some(format!(
                    "margin {:e} at alpha = {} misses room or derivative coverage",
                    margins[i], self.alphas[i]
                ));
            }
        }
        if failure.is_none() && !(half_curvature < 0.0) {
            failure = Some(format!("curvature at alpha = 1/2 is {half_curvature:e}, not negative"));
        }
        if failure.is_none() {
            if let Some(i) = margins.iter().position(|m| !m.is_finite()) {
                failure = Some(format!("non-finite evaluation at alpha = {}", self.alphas[i]));
            }
        }
        Verdict {
            status: if failure.is_none() { Status::Certified } else { Status::Failed },
            target,
            derivative_bound,
            zone_len,
            zone_max_derivative,
            half_curvature,
            margins,
            failure,
        }
    }

    pub fn is_certified(&self, r: f64) -> bool {
        self.verdict(r).status == Status::Certified
    }

    /// Full certificate for density `r`.
    pub fn certificate(&self, r: f64) -> Certificate {
        let v = self.verdict(r);
        let floor = self.tuned.floor();
        let points: Vec<CertPoint> = (0..self.alphas.len())
            .map(|i| {
                let in_zone = i < v.zone_len;
                let (w, lf) = if in_zone {
                    (floor, self.floor_log_f[i])
                } else {
                    (self.choices[i].weights, self.choices[i].log_f)
                };
                let log_g = log_g_from_log_f(r, lf, self.alphas[i]);
                CertPoint {
                    alpha: self.alphas[i],
                    gamma: w.gamma(),
                    eta: w.eta(),
                    log_g,
                    margin: v.target - log_g,
                    one_minus_gamma_sq: w.eps(),
                    one_minus_eta: w.zeta(),
                    peak_zone: in_zone,
                }
            })
            .collect();
        let worst_margin = points.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
        let worst_regular_margin = points
            .iter()
            .filter(|p| !p.peak_zone)
            .map(|p| p.margin)
            .fold(f64::INFINITY, f64::min);
        Certificate {
            k: self.params.k(),
            p: self.params.p(),
            r,
            status: v.status,
            label: "numerically certified",
            target_log_g: Some(v.target),
            room: self.config.room,
            derivative_bound: Some(v.derivative_bound),
            grid_points: self.config.grid_points,
            grid_step: self.step,
            window_a: self.config.window_a,
            gamma0: Some(self.tuned.gamma0),
            eta0: Some(self.tuned.eta0),
            peak_zone: Some(PeakZone {
                points: v.zone_len,
                end_alpha: if v.zone_len > 0 { Some(self.alphas[v.zone_len - 1]) } else { None },
                max_derivative: v.zone_max_derivative,
            }),
            points,
            worst_margin: Some(worst_margin),
            worst_regular_margin: worst_regular_margin.is_finite().then_some(worst_regular_margin),
            half_curvature: Some(v.half_curvature),
            symmetry: SYMMETRY_NOTE,
            config: self.config,
            failure: v.failure,
            seed_info: None,
        }
    }

    /// Schedule of the chosen weights, with the peak zone at `r` switched to
    /// the tuned floor.
    pub fn schedule(&self, r: f64) -> Result<Schedule> {
        let zone = self.verdict(r).zone_len;
        let grid = self
            .alphas
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let w = if i < zone { self.tuned.floor() } else { self.choices[i].weights };
                OverlapPoint::new(a, w)
            })
            .collect::<Result<Vec<_>>>()?;
        Schedule::new(grid, self.tuned)
    }
}

const SYMMETRY_NOTE: &str =
    "alpha < 1/2 uses the mirrored weights of 1 - alpha and is dominated by the (1/2, 1] check";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertPoint {
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub log_g: f64,
    pub margin: f64,
    pub one_minus_gamma_sq: f64,
    pub one_minus_eta: f64,
    pub peak_zone: bool,
}

impl CertPoint {
    pub fn weights(&self) -> WeightPair {
        WeightPair::from_complements(self.one_minus_gamma_sq, self.one_minus_eta)
            .expect("certificate weights are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakZone {
    pub points: usize,
    pub end_alpha: Option<f64>,
    pub max_derivative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub k: u32,
    pub p: f64,
    pub r: f64,
    pub status: Status,
    pub label: &'static str,
    pub target_log_g: Option<f64>,
    pub room: f64,
    pub derivative_bound: Option<f64>,
    pub grid_points: usize,
    pub grid_step: f64,
    #[serde(rename = "window_A")]
    pub window_a: f64,
    pub gamma0: Option<f64>,
    pub eta0: Option<f64>,
    pub peak_zone: Option<PeakZone>,
    pub points: Vec<CertPoint>,
    pub worst_margin: Option<f64>,
    pub worst_regular_margin: Option<f64>,
    pub half_curvature: Option<f64>,
    pub symmetry: &'static str,
    pub config: CertifyConfig,
    pub failure: Option<String>,
    pub seed_info: Option<()>,
}

impl Certificate {
    fn degenerate(params: &ProblemParams, r: f64, config: &CertifyConfig, why: String) -> Self {
        Self {
            k: params.k(),
            p: params.p(),
            r,
            status: Status::Degenerate,
            label: "numerically certified",
            target_log_g: None,
            room: config.room,
            derivative_bound: None,
            grid_points: config.grid_points,
            grid_step: 0.5 / config.grid_points as f64,
            window_a: config.window_a,
            gamma0: None,
            eta0: None,
            peak_zone: None,
            points: Vec::new(),
            worst_margin: None,
            worst_regular_margin: None,
            half_curvature: None,
            symmetry: SYMMETRY_NOTE,
            config: *config,
            failure: Some(why),
            seed_info: None,
        }
    }
}

/// Checks the dominance condition at density `r`.
pub fn certify_density(params: &ProblemParams, r: f64, config: &CertifyConfig) -> Result<Certificate> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("r > 0 required (got {r})")));
    }
    config.validate()?;
    match Profile::build(params, config) {
        Ok(profile) => Ok(profile.certificate(r)),
        Err(Error::Degenerate(why)) => Ok(Certificate::degenerate(params, r, config, why)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensitySearch {
    pub r_low: f64,
    /// Smallest density found to fail.
    pub r_failed: f64,
    pub monotone_probe_ok: bool,
    pub probes: Vec<(f64, bool)>,
    pub certificate: Certificate,
}

/// Largest density certified by bisection, from a precomputed profile.
pub fn max_certified_density_with(profile: &Profile) -> Result<DensitySearch> {
    let params = *profile.params();
    let upper = lemma2_upper(&params);
    let mut starts = Vec::new();
    if let Ok(c) = cghs_bounds(&params) {
        starts.push(c.lower);
    }
    starts.push(1.0);
    let mut lo = starts.into_iter().find(|&r| r < upper && profile.is_certified(r));
    if lo.is_none() {
        let mut r = upper / 2.0;
        while r > 1e-6 {
            if profile.is_certified(r) {
                lo = Some(r);
                break;
            }
            r /= 2.0;
        }
    }
    let mut lo = lo.ok_or_else(|| {
        Error::Numeric(format!(
            "no certifiable density found for k = {}, p = {}",
            params.k(),
            params.p()
        ))
    })?;
    let mut hi = upper;
    let tol = profile.config().r_tolerance;
    while (hi - lo) > tol * lo {
        let mid = 0.5 * (lo + hi);
        if profile.is_certified(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let probes: Vec<(f64, bool)> = (1..=5)
        .map(|j| {
            let r = lo * j as f64 / 5.0;
            (r, profile.is_certified(r))
        })
        .collect();
    let monotone_probe_ok = probes.iter().all(|p| p.1);
    if !monotone_probe_ok {
        let first_bad = probes.iter().position(|p| !p.1).unwrap_or(probes.len());
        hi = probes[first_bad].0;
        lo = match probes[..first_bad].last() {
            Some(p) => p.0,
            None => {
                return Err(Error::Numeric(format!(
                    "certification is not monotone in r below {lo} for k = {}, p = {}",
                    params.k(),
                    params.p()
                )))
            }
        };
    }
    Ok(DensitySearch {
        r_low: lo,
        r_failed: hi,
        monotone_probe_ok,
        probes,
        certificate: profile.certificate(lo),
    })
}

pub fn max_certified_density(params: &ProblemParams, config: &CertifyConfig) -> Result<DensitySearch> {
    max_certified_density_with(&Profile::build(params, config)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropositionReport {
    pub k: u32,
    pub p: f64,
    pub r: f64,
    pub second_derivative: f64,
    pub curvature_negative: bool,
    pub dominated: bool,
    /// Largest `G(alpha) - G(1/2)` over the grid, and where it occurs.
    pub worst_gap: f64,
    pub worst_alpha: f64,
    pub decreasing: bool,
    pub first_increase_alpha: Option<f64>,
}

impl PropositionReport {
    pub fn all_pass(&self) -> bool {
        self.curvature_negative && self.dominated && self.decreasing
    }
}

/// Evaluates `ln G_r` on a grid of `(0, 1]` and reports negative curvature at
/// `1/2`, strict dominance by `1/2`, and decrease on `[1/2, 1 - 3 ln k / k]`.
pub fn proposition_check(params: &ProblemParams, r: f64) -> Result<PropositionReport> {
    if params.k() <= 16 {
        return Err(invalid(format!(
            "k >= 17 required: G_r interval empty at k = {}",
            params.k()
        )));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("r > 0 required (got {r})")));
    }
    let tuned = tuned_weights(params)?;
    let g = |a: f64| capital_g(r, a, params, &tuned);
    let n = PROPOSITION_GRID;
    let half_index = n / 2;
    let values: Vec<f64> = (1..=n)
        .into_par_iter()
        .map(|i| g(i as f64 / n as f64))
        .collect::<Result<Vec<_>>>()?;
    let g_half = g(0.5)?;
    let d = CURVATURE_STEP;
    let second_derivative = (g(0.5 + d)? - 2.0 * g_half + g(0.5 - d)?) / (d * d);

    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_alpha = f64::NAN;
    for (i, v) in values.iter().enumerate() {
        if i + 1 == half_index {
            continue;
        }
        let gap = v - g_half;
        if !(gap <= worst_gap) {
            worst_gap = gap;
            worst_alpha = (i + 1) as f64 / n as f64;
        }
    }
    let stop = 1.0 - outer_width(params.k());
    let mut first_increase_alpha = None;
    let mut prev = g_half;
    for i in half_index + 1..=n {
        let a = i as f64 / n as f64;
        if a > stop {
            break;
        }
        let v = values[i - 1];
        if !(v < prev) {
            first_increase_alpha = Some(a);
            break;
        }
        prev = v;
    }
    Ok(PropositionReport {
        k: params.k(),
        p: params.p(),
        r,
        second_derivative,
        curvature_negative: second_derivative < 0.0,
        dominated: worst_gap < 0.0,
        worst_gap,
        worst_alpha,
        decreasing: first_increase_alpha.is_none(),
        first_increase_alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub q: f64,
    pub p: f64,
    pub t_big: f64,
    pub upper_lemma2: f64,
    pub t_small: Option<f64>,
    pub certified_lower: Option<f64>,
    pub cghs_lower: Option<f64>,
    pub cghs_upper: Option<f64>,
    pub gamma0: Option<f64>,
    pub eta0: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    pub k: u32,
    pub rows: Vec<CurveRow>,
}

/// `n` equally spaced values `q = i / n`, `i = 0..n`.
pub fn default_q_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

pub fn curve_row(k: u32, q: f64, config: &CertifyConfig) -> Result<CurveRow> {
    let params = ProblemParams::from_q(k, q)?;
    let cghs = cghs_bounds(&params).ok();
    let mut row = CurveRow {
        q,
        p: params.p(),
        t_big: threshold_t(&params),
        upper_lemma2: lemma2_upper(&params),
        t_small: t_lower(&params).ok().and_then(|t| t.value()),
        certified_lower: None,
        cghs_lower: cghs.map(|c| c.lower),
        cghs_upper: cghs.map(|c| c.upper),
        gamma0: None,
        eta0: None,
        status: String::new(),
    };
    match Profile::build(&params, config) {
        Ok(profile) => {
            row.gamma0 = Some(profile.tuned().gamma0);
            row.eta0 = Some(profile.tuned().eta0);
            match max_certified_density_with(&profile) {
                Ok(s) => {
                    row.certified_lower = Some(s.r_low);
                    row.status = if s.monotone_probe_ok { "certified" } else { "certified_probe_downgraded" }.into();
                }
                Err(_) => row.status = "failed".into(),
            }
        }
        Err(Error::Degenerate(_)) => row.status = "degenerate".into(),
        Err(e @ Error::InvalidParameter(_)) => return Err(e),
        Err(_) => row.status = "failed".into(),
    }
    Ok(row)
}

/// Analytic bounds and the certified lower bound across a grid of `q`.
/// Failures are recorded per row.
pub fn bound_curve(k: u32, q_grid: &[f64], config: &CertifyConfig) -> Result<BoundCurve> {
    if k < 2 {
        return Err(invalid(format!("k >= 2 required (got k = {k})")));
    }
    config.validate()?;
    let rows = q_grid
        .iter()
        .map(|&q| curve_row(k, q, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundCurve { k, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::log_g;

    fn small() -> CertifyConfig {
        CertifyConfig { grid_points: 400, ..CertifyConfig::default() }
    }

    fn k3() -> ProblemParams {
        ProblemParams::new(3, 0.5).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(CertifyConfig::default().validate().is_ok());
        assert!(CertifyConfig { grid_points: 99, ..Default::default() }.validate().is_err());
        assert!(CertifyConfig { room: 0.0, ..Default::default() }.validate().is_err());
        assert!(CertifyConfig { refine_factor: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn golden_section_finds_minimum() {
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-8 && fx < 1e-15);
        let (x, _) = golden_min(|x| x, 0.0, 1.0, 1e-6);
        assert_eq!(x, 0.0);
    }

    #[test]
    fn optimizer_near_half_returns_floor() {
        let params = k3();
        let t = tuned_weights(&params).unwrap();
        let (w, lg) = optimize_point(0.5 + 1e-9, 10.0, &params, &t).unwrap();
        assert!((w.gamma() - t.gamma0).abs() < 1e-4 && (w.eta() - t.eta0).abs() < 1e-4);
        let target = log_g(10.0, &OverlapPoint::new(0.5, t.floor()).unwrap(), 3, params.u0()).unwrap();
        assert!((lg - target).abs() < 1e-6);
        assert!(optimize_point(0.5, 10.0, &params, &t).is_err());
    }

    #[test]
    fn optimizer_improves_on_seed_at_full_overlap() {
        let params = ProblemParams::new(20, 0.5).unwrap();
        let t = tuned_weights(&params).unwrap();
        let (_, lg) = optimize_point(1.0, 0.5, &params, &t).unwrap();
        let seed = log_g(0.5, &OverlapPoint::new(1.0, t.floor()).unwrap(), 20, params.u0()).unwrap();
        assert!(lg <= seed);
    }

    #[test]
    fn optimizer_matches_grid_scan() {
        let params = k3();
        let t = tuned_weights(&params).unwrap();
        let (r, alpha) = (10.0, 0.9);
        let (_, lg) = optimize_point(alpha, r, &params, &t).unwrap();
        let n = 600;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let w = WeightPair::from_complements(t.eps0 * i as f64 / n as f64, t.zeta0 * j as f64 / n as f64).unwrap();
                best = best.min(log_g(r, &OverlapPoint::new(alpha, w).unwrap(), 3, params.u0()).unwrap());
            }
        }
        assert!((lg - best).abs() <= 1e-6 || lg < best, "{lg} vs {best}");
        let target = log_g(r, &OverlapPoint::new(0.5, t.floor()).unwrap(), 3, params.u0()).unwrap();
        assert!(lg < target);
    }

    #[test]
    fn certifies_k3_at_ten_and_fails_at_forty() {
        let c = certify_density(&k3(), 10.0, &small()).unwrap();
        assert_eq!(c.status, Status::Certified, "{:?}", c.failure);
        assert!(c.half_curvature.unwrap() < 0.0);
        let c = certify_density(&k3(), 40.0, &small()).unwrap();
        assert_eq!(c.status, Status::Failed);
    }

    #[test]
    fn degenerate_pair_reports_degenerate() {
        let c = certify_density(&ProblemParams::new(2, 1.0).unwrap(), 1.0, &small()).unwrap();
        assert_eq!(c.status, Status::Degenerate);
        assert!(c.points.is_empty());
    }

    #[test]
    fn certificates_replay_and_respect_floor() {
        let params = k3();
        let c = certify_density(&params, 10.0, &small()).unwrap();
        let t = tuned_weights(&params).unwrap();
        for pt in &c.points {
            let w = pt.weights();
            assert!(w.eps() <= t.eps0 && w.zeta() <= t.zeta0);
            assert!(pt.gamma >= t.gamma0 && pt.eta >= t.eta0);
            let replay = log_g(10.0, &OverlapPoint::new(pt.alpha, w).unwrap(), 3, params.u0()).unwrap();
            assert!((replay - pt.log_g).abs() <= 1e-12, "alpha {}", pt.alpha);
        }
    }

    #[test]
    fn max_density_k3_in_expected_window() {
        let params = k3();
        let s = max_certified_density(&params, &small()).unwrap();
        let upper = lemma2_upper(&params);
        assert!(s.r_low > 10.0 && s.r_low < upper);
        assert!(s.r_low > cghs_bounds(&params).unwrap().lower);
        assert!(s.r_low <= 20.27);
        assert!(s.monotone_probe_ok);
        assert_eq!(s.certificate.status, Status::Certified);
    }

    #[test]
    fn max_density_k3_satisfiable_regime() {
        let s = max_certified_density(&ProblemParams::new(3, 1.0).unwrap(), &small()).unwrap();
        assert!(s.r_low > 2.5);
    }

    #[test]
    fn max_density_non_increasing_in_p() {
        let mut prev = f64::INFINITY;
        for p in [0.2, 0.4, 0.6, 0.8, 1.0] {
            let r = max_certified_density(&ProblemParams::new(3, p).unwrap(), &small()).unwrap().r_low;
            assert!(r <= prev * (1.0 + 1e-3), "p = {p}: {r} > {prev}");
            prev = r;
        }
    }

    #[test]
    fn proposition_small_r_passes() {
        let rep = proposition_check(&ProblemParams::new(20, 0.5).unwrap(), 1.0).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn proposition_k17_weight_switch_sits_at_half() {
        // 3 ln 17 / 17 is just below 1/2, so the square-rooted weights take
        // over immediately next to the peak and lift G there
        let rep = proposition_check(&ProblemParams::new(17, 0.5).unwrap(), 1.0).unwrap();
        assert!(rep.curvature_negative && rep.decreasing);
        assert!(!rep.dominated);
    }

    #[test]
    fn proposition_above_threshold_not_dominated() {
        let params = ProblemParams::new(20, 0.5).unwrap();
        let rep = proposition_check(&params, 2.0 * threshold_t(&params)).unwrap();
        assert!(!rep.dominated);
    }

    #[test]
    fn proposition_rejects_small_k() {
        assert!(proposition_check(&ProblemParams::new(16, 0.5).unwrap(), 1.0).is_err());
    }

    #[test]
    fn capital_g_symmetry_dominance() {
        for k in [17, 20, 30] {
            let params = ProblemParams::new(k, 0.5).unwrap();
            let t = tuned_weights(&params).unwrap();
            let r = t_lower(&params).unwrap().value().unwrap();
            for i in 1..500 {
                let x = i as f64 / 1000.0;
                let up = capital_g(r, 0.5 + x, &params, &t).unwrap();
                let down = capital_g(r, 0.5 - x, &params, &t).unwrap();
                assert!(up > down, "k={k} x={x}");
            }
        }
    }

    #[test]
    fn curve_rows_respect_ordering() {
        let curve = bound_curve(3, &[0.0, 0.5, 0.9], &small()).unwrap();
        for row in &curve.rows {
            assert!(row.upper_lemma2 <= row.t_big);
            if let Some(c) = row.certified_lower {
                assert!(c < row.upper_lemma2);
            }
        }
        let deg = bound_curve(2, &[0.0], &small()).unwrap();
        assert_eq!(deg.rows[0].status, "degenerate");
    }
}
