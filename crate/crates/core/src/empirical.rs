//! Random k-CNF sampling, exhaustive evaluation of the weighted count `X`,
//! exact and local-search MAX-SAT, and the Monte Carlo experiments built on
//! them.
//!
//! Every experiment draws sample `i` from its own ChaCha8 stream
//! (`seed_from_u64(seed)` with stream `i`), so results do not depend on how
//! samples are spread across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

use crate::bounds::ProblemParams;
use crate::error::{invalid, Error, Result};
use crate::moments::{log_first_moment, log_second_moment_sum, PairWeights, WeightPair};

/// Largest `n` accepted by the exhaustive routines.
pub const MAX_EXHAUSTIVE_N: usize = 25;
/// Largest `n` accepted by [`estimate_moments`].
pub const MAX_MOMENT_N: usize = 20;
pub const GENERATOR: &str = "ChaCha8Rng";
pub const DEFAULT_NOISE: f64 = 0.3;
/// Local-search restarts happen every `RESTART_FACTOR * n` flips.
pub const DEFAULT_RESTART_FACTOR: usize = 100;

/// Random number generator for sample `index` of a run seeded by `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `km` independent uniform literals.
    Iid,
    /// `k` distinct variables per clause.
    Proper,
    /// Independent literals, but no clause repeated.
    NoReplacement,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(Model::Iid),
            "proper" => Ok(Model::Proper),
            "no_replacement" | "no-replacement" => Ok(Model::NoReplacement),
            _ => Err(invalid(format!("unknown model '{s}' (expected iid, proper or no_replacement)"))),
        }
    }
}

/// A k-CNF formula over variables `1..=n`; literal `v` is `x_v`, `-v` is its
/// negation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Formula {
    n: usize,
    k: usize,
    model: Model,
    literals: Vec<i32>,
}

impl Formula {
    pub fn new(n: usize, k: usize, clauses: &[Vec<i32>], model: Model) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k >= 1 required"));
        }
        let mut literals = Vec::with_capacity(clauses.len() * k);
        for c in clauses {
            if c.len() != k {
                return Err(invalid(format!("clause {c:?} does not have {k} literals")));
            }
            for &l in c {
                if l == 0 || l.unsigned_abs() as usize > n {
                    return Err(invalid(format!("literal {l} outside 1..={n}")));
                }
            }
            literals.extend_from_slice(c);
        }
        Ok(Self { n, k, model, literals })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.literals.len() / self.k
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn clause(&self, i: usize) -> &[i32] {
        &self.literals[i * self.k..(i + 1) * self.k]
    }

    pub fn clauses(&self) -> impl Iterator<Item = &[i32]> {
        self.literals.chunks(self.k)
    }

    /// True if the clause repeats a variable.
    pub fn is_improper(&self, i: usize) -> bool {
        let c = self.clause(i);
        (0..c.len()).any(|a| (a + 1..c.len()).any(|b| c[a].abs() == c[b].abs()))
    }

    /// DIMACS CNF text.
    pub fn to_dimacs(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "c {line}");
            }
        }
        let _ = writeln!(out, "p cnf {} {}", self.n, self.m());
        for c in self.clauses() {
            for l in c {
                let _ = write!(out, "{l} ");
            }
            out.push_str("0\n");
        }
        out
    }

    /// `occurrences[v]` lists `(clause, positive)` for every occurrence of
    /// variable `v + 1`.
    fn occurrences(&self) -> Vec<Vec<(u32, bool)>> {
        let mut occ = vec![Vec::new(); self.n];
        for (ci, c) in self.clauses().enumerate() {
            for &l in c {
                occ[l.unsigned_abs() as usize - 1].push((ci as u32, l > 0));
            }
        }
        occ
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub bits: Vec<bool>,
}

impl Assignment {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    fn literal_true(&self, l: i32) -> bool {
        self.bits[l.unsigned_abs() as usize - 1] == (l > 0)
    }
}

fn random_literal(n: usize, rng: &mut impl Rng) -> i32 {
    let v = rng.random_range(1..=n) as i32;
    if rng.random::<bool>() {
        v
    } else {
        -v
    }
}

pub fn sample_formula(n: usize, m: usize, k: usize, model: Model, rng: &mut impl Rng) -> Result<Formula> {
    if k == 0 {
        return Err(invalid("k >= 1 required"));
    }
    if m > 0 && n == 0 {
        return Err(invalid("n >= 1 required for a nonempty formula"));
    }
    if model == Model::Proper && n < k {
        return Err(invalid(format!("proper model needs n >= k (got n = {n}, k = {k})")));
    }
    let mut literals = Vec::with_capacity(m * k);
    match model {
        Model::Iid => {
            for _ in 0..m * k {
                literals.push(random_literal(n, rng));
            }
        }
        Model::Proper => {
            for _ in 0..m {
                let start = literals.len();
                while literals.len() < start + k {
                    let l = random_literal(n, rng);
                    if literals[start..].iter().all(|x: &i32| x.abs() != l.abs()) {
                        literals.push(l);
                    }
                }
            }
        }
        Model::NoReplacement => {
            // clauses are identified as multisets of literals
            let distinct = crate::moments::binomial((2 * n + k - 1) as u32, k as u32);
            if (m as f64) > distinct {
                return Err(invalid(format!("cannot draw {m} distinct clauses from {distinct} possible")));
            }
            let mut seen = std::collections::HashSet::with_capacity(m);
            while literals.len() < m * k {
                let mut c: Vec<i32> = (0..k).map(|_| random_literal(n, rng)).collect();
                let shown = c.clone();
                c.sort_unstable();
                if seen.insert(c) {
                    literals.extend_from_slice(&shown);
                }
            }
        }
    }
    Ok(Formula { n, k, model, literals })
}

/// Literal imbalance `H`, unsatisfied clauses `U` and satisfied clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Evaluation {
    pub h: i64,
    pub u: usize,
    pub sat: usize,
}

pub fn evaluate_assignment(f: &Formula, a: &Assignment) -> Result<Evaluation> {
    if a.len() != f.n {
        return Err(invalid(format!("assignment has {} bits, formula has {} variables", a.len(), f.n)));
    }
    let mut h = 0i64;
    let mut u = 0;
    for c in f.clauses() {
        let trues = c.iter().filter(|&&l| a.literal_true(l)).count();
        h += 2 * trues as i64 - f.k as i64;
        if trues == 0 {
            u += 1;
        }
    }
    Ok(Evaluation { h, u, sat: f.m() - u })
}

/// Enumerates all `2^n` assignments in Gray-code order, calling `visit` with
/// the number of satisfied literal occurrences and `U` for each.
fn gray_scan(f: &Formula, mut visit: impl FnMut(usize, usize)) {
    let occ = f.occurrences();
    let m = f.m();
    // all-false start: a literal is true iff it is negative
    let mut trues = vec![0u32; m];
    let mut sat_occ = 0usize;
    for (ci, c) in f.clauses().enumerate() {
        for &l in c {
            if l < 0 {
                trues[ci] += 1;
                sat_occ += 1;
            }
        }
    }
    let mut unsat = trues.iter().filter(|&&t| t == 0).count();
    let mut bits = vec![false; f.n];
    visit(sat_occ, unsat);
    for step in 1u64..(1u64 << f.n) {
        let v = step.trailing_zeros() as usize;
        bits[v] = !bits[v];
        for &(ci, pos) in &occ[v] {
            let t = &mut trues[ci as usize];
            if pos == bits[v] {
                if *t == 0 {
                    unsat -= 1;
                }
                *t += 1;
                sat_occ += 1;
            } else {
                *t -= 1;
                sat_occ -= 1;
                if *t == 0 {
                    unsat += 1;
                }
            }
        }
        visit(sat_occ, unsat);
    }
}

fn check_exhaustive(n: usize) -> Result<()> {
    if n > MAX_EXHAUSTIVE_N {
        return Err(Error::Budget(format!(
            "n = {n} exceeds the exhaustive limit {MAX_EXHAUSTIVE_N}"
        )));
    }
    Ok(())
}

/// `X = sum_sigma gamma^H eta^(U - u0 m)` as `scale * exp(log_scale)`.
fn scaled_weighted_sum(f: &Formula, w: &WeightPair, u0: f64) -> Result<(f64, f64)> {
    check_exhaustive(f.n)?;
    let m = f.m();
    let km = (f.k * m) as i64;
    let ln_g = w.gamma().ln();
    let ln_eta = if w.eta() > 0.0 { (-w.zeta()).ln_1p() } else { f64::NEG_INFINITY };
    let shift = u0 * m as f64;
    let offset = if shift == 0.0 {
        0.0
    } else if w.eta() > 0.0 {
        -shift * ln_eta
    } else {
        return Err(invalid("eta > 0 required when u0 m > 0"));
    };
    let h_table: Vec<f64> = (0..=f.k * m).map(|s| (2 * s as i64 - km) as f64 * ln_g).collect();
    let u_table: Vec<f64> = (0..=m)
        .map(|u| if u == 0 { 0.0 } else { u as f64 * ln_eta })
        .collect();
    let mut top = f64::NEG_INFINITY;
    let mut acc = 0.0;
    gray_scan(f, |s, u| {
        let t = h_table[s] + u_table[u];
        if t == f64::NEG_INFINITY {
            return;
        }
        if t > top {
            acc = acc * (top - t).exp() + 1.0;
            top = t;
        } else {
            acc += (t - top).exp();
        }
    });
    Ok((acc, top + offset))
}

/// `ln X` for `X = sum_sigma gamma^H eta^(U - u0 m)`, exact over all `2^n`
/// assignments. `0^0 = 1`.
pub fn log_weighted_sum_x(f: &Formula, w: &WeightPair, u0: f64) -> Result<f64> {
    let (scale, log_scale) = scaled_weighted_sum(f, w, u0)?;
    Ok(scale.ln() + log_scale)
}

pub fn weighted_sum_x(f: &Formula, w: &WeightPair, u0: f64) -> Result<f64> {
    let (scale, log_scale) = scaled_weighted_sum(f, w, u0)?;
    Ok(scale * log_scale.exp())
}

/// Minimum of `U` over all assignments by exhaustive Gray-code scan.
pub fn min_unsat_scan(f: &Formula) -> Result<usize> {
    check_exhaustive(f.n)?;
    let mut best = usize::MAX;
    gray_scan(f, |_, u| best = best.min(u));
    Ok(best)
}

/// Depth-first branch and bound over assignments, counting clauses whose
/// literals are all assigned false.
struct Search<'a> {
    occ: &'a [Vec<(u32, bool)>],
    order: Vec<usize>,
    free: Vec<u32>,
    trues: Vec<u32>,
    bits: Vec<bool>,
    falsified: usize,
    /// Only assignments with fewer than `bound` unsatisfied clauses are kept.
    bound: usize,
    best: Option<Vec<bool>>,
    stop_at_first: bool,
}

impl Search<'_> {
    fn assign(&mut self, v: usize, value: bool) {
        self.bits[v] = value;
        for &(ci, pos) in &self.occ[v] {
            let ci = ci as usize;
            self.free[ci] -= 1;
            if pos == value {
                self.trues[ci] += 1;
            } else if self.trues[ci] == 0 && self.free[ci] == 0 {
                self.falsified += 1;
            }
        }
    }

    fn unassign(&mut self, v: usize, value: bool) {
        for &(ci, pos) in &self.occ[v] {
            let ci = ci as usize;
            if pos == value {
                self.trues[ci] -= 1;
            } else if self.trues[ci] == 0 && self.free[ci] == 0 {
                self.falsified -= 1;
            }
            self.free[ci] += 1;
        }
    }

    fn run(&mut self, depth: usize) -> bool {
        if self.falsified >= self.bound {
            return false;
        }
        if depth == self.order.len() {
            self.bound = self.falsified;
            self.best = Some(self.bits.clone());
            return self.stop_at_first;
        }
        let v = self.order[depth];
        let positives = self.occ[v].iter().filter(|o| o.1).count();
        let first = 2 * positives >= self.occ[v].len();
        for value in [first, !first] {
            self.assign(v, value);
            let done = self.run(depth + 1);
            self.unassign(v, value);
            if done {
                return true;
            }
        }
        false
    }
}

/// Finds an assignment with fewer than `bound` unsatisfied clauses, the
/// fewest possible unless `stop_at_first`.
fn branch_and_bound(f: &Formula, bound: usize, stop_at_first: bool) -> Option<(Vec<bool>, usize)> {
    let occ = f.occurrences();
    let mut order: Vec<usize> = (0..f.n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(occ[v].len()));
    let mut search = Search {
        occ: &occ,
        order,
        free: vec![f.k as u32; f.m()],
        trues: vec![0; f.m()],
        bits: vec![false; f.n],
        falsified: 0,
        bound,
        best: None,
        stop_at_first,
    };
    search.run(0);
    let bound = search.bound;
    search.best.map(|b| (b, bound))
}

/// Exact MAX-SAT: an assignment satisfying the most clauses and that count.
pub fn max_sat_exact(f: &Formula) -> Result<(Assignment, usize)> {
    check_exhaustive(f.n)?;
    let (bits, u) = branch_and_bound(f, f.m() + 1, false).expect("some assignment has U <= m");
    Ok((Assignment::new(bits), f.m() - u))
}

/// Whether some assignment leaves at most `max_unsat` clauses unsatisfied.
pub fn exists_within_exact(f: &Formula, max_unsat: usize) -> Result<bool> {
    check_exhaustive(f.n)?;
    Ok(branch_and_bound(f, max_unsat + 1, true).is_some())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalSearchConfig {
    pub steps: u64,
    pub noise: f64,
    /// Restart from a fresh random assignment every `restart_factor * n`
    /// flips.
    pub restart_factor: usize,
}

impl LocalSearchConfig {
    pub fn with_steps(steps: u64) -> Self {
        Self {
            steps,
            noise: DEFAULT_NOISE,
            restart_factor: DEFAULT_RESTART_FACTOR,
        }
    }
}

struct LocalState<'a> {
    f: &'a Formula,
    occ: Vec<Vec<(u32, bool)>>,
    bits: Vec<bool>,
    trues: Vec<u32>,
    unsat: Vec<u32>,
    slot: Vec<usize>,
}

const NO_SLOT: usize = usize::MAX;

impl<'a> LocalState<'a> {
    fn new(f: &'a Formula) -> Self {
        Self {
            f,
            occ: f.occurrences(),
            bits: vec![false; f.n],
            trues: vec![0; f.m()],
            unsat: Vec::new(),
            slot: vec![NO_SLOT; f.m()],
        }
    }

    fn randomize(&mut self, rng: &mut impl Rng) {
        for b in self.bits.iter_mut() {
            *b = rng.random();
        }
        self.unsat.clear();
        for ci in 0..self.f.m() {
            let t = self.f.clause(ci).iter().filter(|&&l| self.bits[l.unsigned_abs() as usize - 1] == (l > 0)).count();
            self.trues[ci] = t as u32;
            self.slot[ci] = NO_SLOT;
            if t == 0 {
                self.slot[ci] = self.unsat.len();
                self.unsat.push(ci as u32);
            }
        }
    }

    fn mark_unsat(&mut self, ci: usize) {
        self.slot[ci] = self.unsat.len();
        self.unsat.push(ci as u32);
    }

    fn mark_sat(&mut self, ci: usize) {
        let s = self.slot[ci];
        let last = *self.unsat.last().expect("clause is listed") as usize;
        self.unsat.swap_remove(s);
        if last != ci {
            self.slot[last] = s;
        }
        self.slot[ci] = NO_SLOT;
    }

    fn flip(&mut self, v: usize) {
        self.bits[v] = !self.bits[v];
        let value = self.bits[v];
        for i in 0..self.occ[v].len() {
            let (ci, pos) = self.occ[v][i];
            let ci = ci as usize;
            if pos == value {
                if self.trues[ci] == 0 {
                    self.mark_sat(ci);
                }
                self.trues[ci] += 1;
            } else {
                self.trues[ci] -= 1;
                if self.trues[ci] == 0 {
                    self.mark_unsat(ci);
                }
            }
        }
    }

    /// Clauses that flipping `v` would leave with no true literal.
    fn break_count(&self, v: usize) -> usize {
        let value = self.bits[v];
        let var = v as i32 + 1;
        let mut broken = 0;
        let mut last = u32::MAX;
        for &(ci, pos) in &self.occ[v] {
            // occurrences of one clause are adjacent; count each clause once
            if pos != value || ci == last {
                continue;
            }
            last = ci;
            let own = self
                .f
                .clause(ci as usize)
                .iter()
                .filter(|&&l| l.abs() == var && (l > 0) == value)
                .count() as u32;
            if self.trues[ci as usize] == own {
                broken += 1;
            }
        }
        broken
    }
}

/// WalkSAT-style local search returning the best assignment seen.
///
/// The random stream consumed up to step `t` does not depend on
/// `config.steps`, so a larger budget never returns a worse result.
pub fn max_sat_local(f: &Formula, config: &LocalSearchConfig, rng: &mut impl Rng) -> Result<(Assignment, usize)> {
    if config.steps == 0 {
        return Err(invalid("steps >= 1 required"));
    }
    if !(0.0..=1.0).contains(&config.noise) {
        return Err(invalid("noise must lie in [0, 1]"));
    }
    let mut st = LocalState::new(f);
    st.randomize(rng);
    let mut best_u = st.unsat.len();
    let mut best_bits = st.bits.clone();
    let restart = (config.restart_factor * f.n).max(1) as u64;
    for step in 1..=config.steps {
        if best_u == 0 {
            break;
        }
        if step % restart == 0 {
            st.randomize(rng);
        } else if !st.unsat.is_empty() {
            let ci = st.unsat[rng.random_range(0..st.unsat.len())] as usize;
            let clause = f.clause(ci);
            let v = if rng.random::<f64>() < config.noise {
                clause[rng.random_range(0..clause.len())].unsigned_abs() as usize - 1
            } else {
                let mut pick = clause[0].unsigned_abs() as usize - 1;
                let mut fewest = usize::MAX;
                for &l in clause {
                    let v = l.unsigned_abs() as usize - 1;
                    let b = st.break_count(v);
                    if b < fewest {
                        fewest = b;
                        pick = v;
                    }
                }
                pick
            };
            st.flip(v);
        }
        if st.unsat.len() < best_u {
            best_u = st.unsat.len();
            best_bits.clone_from(&st.bits);
        }
    }
    Ok((Assignment::new(best_bits), f.m() - best_u))
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    if values.is_empty() {
        return Summary { mean: f64::NAN, stderr: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Summary { mean, stderr: (var / n).sqrt() }
}

/// Per-sample values of a stochastic experiment with their summary and the
/// seed that reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentStats {
    pub generator: &'static str,
    pub seed: u64,
    pub samples: usize,
    pub summary: Summary,
    pub values: Vec<f64>,
}

impl ExperimentStats {
    fn new(seed: u64, values: Vec<f64>) -> Self {
        Self {
            generator: GENERATOR,
            seed,
            samples: values.len(),
            summary: summarize(&values),
            values,
        }
    }
}

fn par_samples<T: Send>(samples: usize, seed: u64, job: impl Fn(&mut ChaCha8Rng) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| job(&mut sample_rng(seed, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub n: usize,
    pub m: usize,
    pub k: u32,
    pub p: f64,
    pub gamma: f64,
    pub eta: f64,
    pub generator: &'static str,
    pub seed: u64,
    pub samples: usize,
    pub mean_x: f64,
    pub stderr_x: f64,
    pub mean_x2: f64,
    pub stderr_x2: f64,
    pub expected_x: f64,
    pub expected_x2: f64,
    pub z_score_x: f64,
    pub z_score_x2: f64,
}

/// Monte Carlo estimates of `E[X]` and `E[X^2]` over iid-model formulas,
/// alongside the analytic values.
pub fn estimate_moments(n: usize, m: usize, params: &ProblemParams, w: &WeightPair, samples: usize, seed: u64) -> Result<MomentReport> {
    if n == 0 || n > MAX_MOMENT_N {
        return Err(Error::Budget(format!("1 <= n <= {MAX_MOMENT_N} required (got {n})")));
    }
    if samples == 0 {
        return Err(invalid("samples >= 1 required"));
    }
    let k = params.k();
    let u0 = params.u0();
    let xs = par_samples(samples, seed, |rng| {
        let f = sample_formula(n, m, k as usize, Model::Iid, rng)?;
        weighted_sum_x(&f, w, u0)
    })?;
    let x2: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let s1 = summarize(&xs);
    let s2 = summarize(&x2);
    let expected_x = (log_first_moment(n as u64, params, m as f64 / n as f64, w)?).exp();
    let expected_x2 = log_second_moment_sum(n as u64, m as u64, k, u0, PairWeights::Constant(*w))?.exp();
    let z = |s: Summary, e: f64| if s.stderr > 0.0 { (s.mean - e) / s.stderr } else if s.mean == e { 0.0 } else { f64::INFINITY };
    Ok(MomentReport {
        n,
        m,
        k,
        p: params.p(),
        gamma: w.gamma(),
        eta: w.eta(),
        generator: GENERATOR,
        seed,
        samples,
        mean_x: s1.mean,
        stderr_x: s1.stderr,
        mean_x2: s2.mean,
        stderr_x2: s2.stderr,
        expected_x,
        expected_x2,
        z_score_x: z(s1, expected_x),
        z_score_x2: z(s2, expected_x2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solver {
    Exact,
    Local(LocalSearchConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsatReport {
    pub n: usize,
    pub m: usize,
    pub r: f64,
    pub k: u32,
    pub p: f64,
    /// Largest number of unsatisfied clauses allowed, `floor(u0 m + 1e-9)`.
    pub max_unsat: usize,
    pub solver: Solver,
    pub frequency: f64,
    /// True when the solver can miss good assignments, making `frequency`
    /// a lower bound.
    pub lower_bound_only: bool,
    pub stats: ExperimentStats,
}

/// Fraction of sampled formulas that are p-satisfiable.
pub fn psat_frequency(n: usize, r: f64, params: &ProblemParams, samples: usize, solver: Solver, seed: u64) -> Result<PsatReport> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!("r >= 0 required (got {r})")));
    }
    if samples == 0 {
        return Err(invalid("samples >= 1 required"));
    }
    if n == 0 {
        return Err(invalid("n >= 1 required"));
    }
    if solver == Solver::Exact {
        check_exhaustive(n)?;
    }
    let m = (r * n as f64).round() as usize;
    let max_unsat = (params.u0() * m as f64 + 1e-9).floor() as usize;
    let k = params.k() as usize;
    let hits = par_samples(samples, seed, |rng| {
        let f = sample_formula(n, m, k, Model::Iid, rng)?;
        let ok = match solver {
            Solver::Exact => exists_within_exact(&f, max_unsat)?,
            Solver::Local(cfg) => f.m() - max_sat_local(&f, &cfg, rng)?.1 <= max_unsat,
        };
        Ok(if ok { 1.0 } else { 0.0 })
    })?;
    let stats = ExperimentStats::new(seed, hits);
    Ok(PsatReport {
        n,
        m,
        r,
        k: params.k(),
        p: params.p(),
        max_unsat,
        solver,
        frequency: stats.summary.mean,
        lower_bound_only: matches!(solver, Solver::Local(_)),
        stats,
    })
}

/// Exact maximum satisfied-clause counts `s_k(n, m)` of sampled formulas.
pub fn sample_max_sat(n: usize, m: usize, k: usize, samples: usize, seed: u64) -> Result<ExperimentStats> {
    check_exhaustive(n)?;
    let values = par_samples(samples, seed, |rng| {
        let f = sample_formula(n, m, k, Model::Iid, rng)?;
        Ok(max_sat_exact(&f)?.1 as f64)
    })?;
    Ok(ExperimentStats::new(seed, values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
    /// Four standard errors of the empirical tail frequency.
    pub slack: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub mean: f64,
    pub tails: Vec<TailRow>,
    pub stats: ExperimentStats,
}

/// Empirical tails `Pr[|s_k - mean| > t]` against `2 exp(-2 t^2 / m)`.
pub fn concentration_check(n: usize, m: usize, k: usize, samples: usize, t_values: &[f64], seed: u64) -> Result<ConcentrationReport> {
    if samples == 0 {
        return Err(invalid("samples >= 1 required"));
    }
    let stats = sample_max_sat(n, m, k, samples, seed)?;
    Ok(concentration_from(n, m, k, t_values, stats))
}

fn concentration_from(n: usize, m: usize, k: usize, t_values: &[f64], stats: ExperimentStats) -> ConcentrationReport {
    let mean = stats.summary.mean;
    let count = stats.values.len() as f64;
    let tails = t_values
        .iter()
        .map(|&t| {
            let empirical = stats.values.iter().filter(|&&s| (s - mean).abs() > t).count() as f64 / count;
            let bound = if m == 0 { 2.0 } else { 2.0 * (-2.0 * t * t / m as f64).exp() };
            let slack = 4.0 * (empirical * (1.0 - empirical) / count).sqrt().max(1.0 / count);
            TailRow {
                t,
                empirical,
                bound,
                slack,
                violated: empirical > bound + slack,
            }
        })
        .collect();
    ConcentrationReport { n, m, k, mean, tails, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuning::tuned_weights;
    use approx::assert_relative_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        sample_rng(seed, 0)
    }

    fn wp(g: f64, e: f64) -> WeightPair {
        WeightPair::new(g, e).unwrap()
    }

    #[test]
    fn empty_formula() {
        let f = sample_formula(5, 0, 3, Model::Iid, &mut rng(1)).unwrap();
        assert_eq!(f.m(), 0);
        let a = Assignment::new(vec![true; 5]);
        assert_eq!(evaluate_assignment(&f, &a).unwrap(), Evaluation { h: 0, u: 0, sat: 0 });
        assert_eq!(max_sat_exact(&f).unwrap().1, 0);
        assert_relative_eq!(weighted_sum_x(&f, &wp(0.7, 0.3), 0.1).unwrap(), 32.0, max_relative = 1e-14);
    }

    #[test]
    fn hand_checked_clauses() {
        let f = Formula::new(1, 3, &[vec![1, 1, 1]], Model::Iid).unwrap();
        let e = evaluate_assignment(&f, &Assignment::new(vec![true])).unwrap();
        assert_eq!((e.h, e.u), (3, 0));
        let (g, eta, u0): (f64, f64, f64) = (0.8, 0.4, 0.1);
        let expect = g.powi(3) * eta.powf(-u0) + g.powi(-3) * eta.powf(1.0 - u0);
        assert_relative_eq!(weighted_sum_x(&f, &wp(g, eta), u0).unwrap(), expect, max_relative = 1e-13);

        let f = Formula::new(1, 3, &[vec![1, 1, 1], vec![-1, -1, -1]], Model::Iid).unwrap();
        assert_eq!(max_sat_exact(&f).unwrap().1, 1);
        assert!(Formula::new(2, 3, &[vec![1, 3, 1]], Model::Iid).is_err());
    }

    #[test]
    fn weighted_sum_unit_weights_counts_assignments() {
        let f = sample_formula(9, 30, 3, Model::Iid, &mut rng(2)).unwrap();
        assert_relative_eq!(weighted_sum_x(&f, &wp(1.0, 1.0), 0.05).unwrap(), 512.0, max_relative = 1e-13);
        let big = sample_formula(26, 3, 3, Model::Iid, &mut rng(2)).unwrap();
        assert!(matches!(weighted_sum_x(&big, &wp(1.0, 1.0), 0.0), Err(Error::Budget(_))));
    }

    #[test]
    fn weighted_sum_matches_direct_enumeration() {
        let f = sample_formula(7, 20, 3, Model::Iid, &mut rng(3)).unwrap();
        let (g, eta, u0): (f64, f64, f64) = (0.85, 0.3, 0.0625);
        let mut direct = 0.0;
        for mask in 0u32..128 {
            let a = Assignment::new((0..7).map(|i| mask >> i & 1 == 1).collect());
            let e = evaluate_assignment(&f, &a).unwrap();
            direct += g.powi(e.h as i32) * eta.powf(e.u as f64 - u0 * 20.0);
        }
        assert_relative_eq!(weighted_sum_x(&f, &wp(g, eta), u0).unwrap(), direct, max_relative = 1e-12);
        // eta = 0 keeps only assignments with U = 0
        let mut sat_only = 0.0;
        for mask in 0u32..128 {
            let a = Assignment::new((0..7).map(|i| mask >> i & 1 == 1).collect());
            let e = evaluate_assignment(&f, &a).unwrap();
            if e.u == 0 {
                sat_only += g.powi(e.h as i32);
            }
        }
        assert_relative_eq!(weighted_sum_x(&f, &wp(g, 0.0), 0.0).unwrap(), sat_only, max_relative = 1e-12);
        assert!(weighted_sum_x(&f, &wp(g, 0.0), 0.1).is_err());
    }

    #[test]
    fn imbalance_double_entry() {
        let mut r = rng(4);
        for _ in 0..20 {
            let f = sample_formula(8, 25, 3, Model::Iid, &mut r).unwrap();
            let a = Assignment::new((0..8).map(|_| r.random()).collect());
            let e = evaluate_assignment(&f, &a).unwrap();
            let false_occ: i64 = f.clauses().flatten().filter(|&&l| !a.literal_true(l)).count() as i64;
            assert_eq!(e.h, (3 * 25) as i64 - 2 * false_occ);
            assert!(e.h.abs() <= 75);
        }
    }

    #[test]
    fn models_respect_their_invariants() {
        let mut r = rng(5);
        let f = sample_formula(6, 200, 3, Model::Proper, &mut r).unwrap();
        assert!((0..f.m()).all(|i| !f.is_improper(i)));
        let f = sample_formula(6, 60, 2, Model::NoReplacement, &mut r).unwrap();
        let mut seen = std::collections::HashSet::new();
        for c in f.clauses() {
            let mut c = c.to_vec();
            c.sort_unstable();
            assert!(seen.insert(c));
        }
        assert!(sample_formula(2, 5, 3, Model::Proper, &mut r).is_err());
        assert!(sample_formula(1, 20, 2, Model::NoReplacement, &mut r).is_err());
    }

    #[test]
    fn improper_fraction_below_k2_over_n() {
        let f = sample_formula(100, 10_000, 3, Model::Iid, &mut rng(6)).unwrap();
        let frac = (0..f.m()).filter(|&i| f.is_improper(i)).count() as f64 / f.m() as f64;
        assert!(frac <= 9.0 / 100.0, "{frac}");
    }

    #[test]
    fn literal_uniformity() {
        let (n, trials) = (10, 20_000);
        let hits = (0..trials)
            .filter(|&s| sample_formula(n, 1, 3, Model::Iid, &mut sample_rng(s, 0)).unwrap().clause(0)[0] == -4)
            .count() as f64;
        let p = 1.0 / (2.0 * n as f64);
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits / trials as f64 - p).abs() <= 4.0 * se);
    }

    #[test]
    fn unsatisfied_literal_count_is_binomial() {
        // for a fixed assignment the number of false literals in an iid clause
        // is Binomial(k, 1/2)
        let f = sample_formula(10, 40_000, 3, Model::Iid, &mut rng(7)).unwrap();
        let a = Assignment::new(vec![true; 10]);
        let mut counts = [0usize; 4];
        for c in f.clauses() {
            counts[c.iter().filter(|&&l| !a.literal_true(l)).count()] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            let p = crate::moments::binomial(3, j as u32) / 8.0;
            let se = (p * (1.0 - p) / 40_000.0).sqrt();
            assert!((c as f64 / 40_000.0 - p).abs() <= 4.0 * se, "j={j}");
        }
    }

    #[test]
    fn exact_solver_matches_scan() {
        let mut r = rng(8);
        for m in [10, 40, 90] {
            for _ in 0..10 {
                let f = sample_formula(10, m, 3, Model::Iid, &mut r).unwrap();
                let (a, s) = max_sat_exact(&f).unwrap();
                assert_eq!(s, m - min_unsat_scan(&f).unwrap());
                assert_eq!(evaluate_assignment(&f, &a).unwrap().sat, s);
                let u = m - s;
                assert!(exists_within_exact(&f, u).unwrap());
                if u > 0 {
                    assert!(!exists_within_exact(&f, u - 1).unwrap());
                }
            }
        }
    }

    #[test]
    fn proper_formulas_meet_averaging_bound() {
        for seed in 0..100 {
            let f = sample_formula(12, 40, 3, Model::Proper, &mut rng(seed)).unwrap();
            assert!(max_sat_exact(&f).unwrap().1 >= 35);
        }
    }

    #[test]
    fn local_search_never_beats_exact() {
        let cfg = LocalSearchConfig::with_steps(2_000);
        for seed in 0..50 {
            let f = sample_formula(15, 90, 3, Model::Iid, &mut rng(seed)).unwrap();
            let exact = max_sat_exact(&f).unwrap().1;
            let (a, s) = max_sat_local(&f, &cfg, &mut rng(seed + 1000)).unwrap();
            assert!(s <= exact);
            assert_eq!(evaluate_assignment(&f, &a).unwrap().sat, s);
        }
    }

    #[test]
    fn local_search_monotone_in_budget() {
        let f = sample_formula(40, 200, 3, Model::Iid, &mut rng(9)).unwrap();
        let mut prev = 0;
        for steps in [10, 20, 40, 80, 160, 320, 640] {
            let s = max_sat_local(&f, &LocalSearchConfig::with_steps(steps), &mut rng(10)).unwrap().1;
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn local_search_solves_planted_instances() {
        let (n, m) = (50, 100);
        let mut solved = 0;
        for seed in 0..50 {
            let mut r = rng(seed);
            let planted: Vec<bool> = (0..n).map(|_| r.random()).collect();
            let a = Assignment::new(planted);
            let mut clauses = Vec::new();
            while clauses.len() < m {
                let c: Vec<i32> = (0..3).map(|_| random_literal(n, &mut r)).collect();
                if c.iter().any(|&l| a.literal_true(l)) {
                    clauses.push(c);
                }
            }
            let f = Formula::new(n, 3, &clauses, Model::Iid).unwrap();
            if max_sat_local(&f, &LocalSearchConfig::with_steps(100_000), &mut r).unwrap().1 == m {
                solved += 1;
            }
        }
        assert!(solved >= 45, "{solved}");
    }

    #[test]
    fn moments_unit_weights_are_exact() {
        let params = ProblemParams::new(3, 0.5).unwrap();
        let rep = estimate_moments(6, 12, &params, &wp(1.0, 1.0), 50, 3).unwrap();
        assert_eq!(rep.mean_x, 64.0);
        assert_eq!(rep.stderr_x, 0.0);
        assert_relative_eq!(rep.expected_x, 64.0, max_relative = 1e-12);
        assert_relative_eq!(rep.expected_x2, 4096.0, max_relative = 1e-12);
    }

    #[test]
    fn first_moment_monte_carlo_small() {
        let params = ProblemParams::new(3, 0.5).unwrap();
        let t = tuned_weights(&params).unwrap();
        let rep = estimate_moments(8, 16, &params, &t.floor(), 4000, 11).unwrap();
        assert!(rep.z_score_x.abs() <= 4.0, "{rep:?}");
        assert!(rep.z_score_x2.abs() <= 4.0, "{rep:?}");
    }

    #[test]
    fn psat_empty_formula_is_satisfiable() {
        let params = ProblemParams::new(3, 0.5).unwrap();
        let rep = psat_frequency(10, 0.0, &params, 5, Solver::Exact, 1).unwrap();
        assert_eq!(rep.m, 0);
        assert_eq!(rep.frequency, 1.0);
    }

    #[test]
    fn concentration_trivial_and_nested() {
        let rep = concentration_check(10, 30, 3, 200, &[0.0, 1.0, 2.0, 4.0, 8.0], 5).unwrap();
        assert_eq!(rep.tails[0].bound, 2.0);
        assert!(!rep.tails[0].violated);
        for w in rep.tails.windows(2) {
            assert!(w[1].empirical <= w[0].empirical);
        }
    }

    #[test]
    fn experiments_independent_of_thread_count() {
        let params = ProblemParams::new(3, 0.5).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| psat_frequency(12, 5.0, &params, 40, Solver::Exact, 99).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn dimacs_export() {
        let f = Formula::new(3, 2, &[vec![1, -2], vec![3, 3]], Model::Iid).unwrap();
        assert_eq!(f.to_dimacs(Some("seed 1")), "c seed 1\np cnf 3 2\n1 -2 0\n3 3 0\n");
    }
}
