//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error (including flag values outside their
//! documented range), 2 domain error, 3 numeric failure. A `verify` run that
//! completes with failing checks also exits 3.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::{density_bounds, LowerTarget, ProblemParams};
use crate::certify::{bound_curve, certify_density, max_certified_density, BoundCurve, CertifyConfig};
use crate::empirical::{
    concentration_check, estimate_moments, psat_frequency, sample_formula, sample_max_sat, sample_rng,
    LocalSearchConfig, Model, Solver, DEFAULT_NOISE, DEFAULT_RESTART_FACTOR, GENERATOR,
};
use crate::error::Error;
use crate::moments::WeightPair;
use crate::tuning::tuned_weights;
use crate::verify::{run_suite, Suite};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "PSAT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "psat", version, about = "Density bounds and experiments for p-satisfiability of random k-CNF")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form density bounds and the tuned weights for one (k, p).
    Bounds(BoundsArgs),
    /// Check the overlap dominance condition at one density and print the
    /// certificate.
    Certify(CertifyArgs),
    /// Largest density that certifies, found by bisection.
    Maxdensity(MaxDensityArgs),
    /// Bounds and certified lower bound across a grid of q = 1 - p.
    Curve(CurveArgs),
    /// Run the built-in identity and brute-force oracle checks.
    Verify(VerifyArgs),
    /// Monte Carlo experiments on sampled formulas.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Format {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Clause width (k >= 2).
    #[arg(long)]
    pub k: u32,
    /// Satisfaction excess p in (0, 1]; at most (1 - p) 2^-k m clauses may be
    /// unsatisfied.
    #[arg(long)]
    pub p: f64,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Grid points on (1/2, 1].
    #[arg(long = "grid", default_value_t = 10_000)]
    pub grid_points: usize,
    /// Required log-domain margin (nats) at regular grid points.
    #[arg(long, default_value_t = 1e-4)]
    pub room: f64,
    /// Safety multiplier on sampled derivative bounds.
    #[arg(long, default_value_t = 2.0)]
    pub deriv_safety: f64,
    /// Derivative samples per grid point.
    #[arg(long, default_value_t = 10)]
    pub refine_factor: usize,
    /// Relative tolerance of the bisection over r.
    #[arg(long, default_value_t = 1e-4)]
    pub r_tolerance: f64,
    /// Truncation window constant A.
    #[arg(long = "window-a", default_value_t = 3.0)]
    pub window_a: f64,
}

impl ConfigArgs {
    fn config(&self) -> CertifyConfig {
        CertifyConfig {
            grid_points: self.grid_points,
            room: self.room,
            deriv_safety: self.deriv_safety,
            refine_factor: self.refine_factor,
            r_tolerance: self.r_tolerance,
            window_a: self.window_a,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write machine output here instead of stdout; the run manifest goes to
    /// FILE.manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Clause density.
    #[arg(long)]
    pub r: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct MaxDensityArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub k: u32,
    #[arg(long, default_value_t = 0.0)]
    pub q_min: f64,
    #[arg(long, default_value_t = 0.99)]
    pub q_max: f64,
    /// Number of equally spaced q values, endpoints included.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write a gnuplot script plotting the curve file.
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SuiteArg {
    Oracles,
    Identities,
    Appendix,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(subcommand)]
    pub kind: ExperimentKind,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    /// Number of sampled formulas.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Master seed; sample i uses ChaCha8 stream i of this seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write each sampled formula as DIMACS CNF into this directory.
    #[arg(long)]
    pub dimacs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SolverArg {
    Exact,
    Local,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Exact branch and bound (n <= 25) or local search (a lower bound).
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    pub solver: SolverArg,
    /// Local-search flip budget.
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    /// Local-search noise probability.
    #[arg(long, default_value_t = DEFAULT_NOISE)]
    pub noise: f64,
    /// Local search restarts every restart_factor * n flips.
    #[arg(long, default_value_t = DEFAULT_RESTART_FACTOR)]
    pub restart_factor: usize,
}

impl SolverArgs {
    fn solver(&self) -> Solver {
        match self.solver {
            SolverArg::Exact => Solver::Exact,
            SolverArg::Local => Solver::Local(LocalSearchConfig {
                steps: self.steps,
                noise: self.noise,
                restart_factor: self.restart_factor,
            }),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum ExperimentKind {
    /// Sampled E[X] and E[X^2] against their analytic values.
    Moments {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Literal weight; defaults to the tuned gamma0.
        #[arg(long)]
        gamma: Option<f64>,
        /// Clause weight; defaults to the tuned eta0.
        #[arg(long)]
        eta: Option<f64>,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fraction of formulas with an assignment leaving at most
    /// floor(u0 m + 1e-9) clauses unsatisfied, m = round(r n).
    Psat {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Empirical tails of the maximum satisfied-clause count.
    Concentration {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Deviations t (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "5,10")]
        t: Vec<f64>,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact maximum satisfied-clause counts of sampled formulas.
    Maxsat {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sample one formula and print it as DIMACS CNF.
    Sample {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// iid, proper or no_replacement.
        #[arg(long, default_value = "iid")]
        model: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 1, message: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::Degenerate(_) | Error::Budget(_) => 2,
            Error::Numeric(_) => 3,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 2, message: format!("i/o error: {e}") }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Provenance written next to every machine-readable output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub parameters: Value,
    pub threads: usize,
    pub seed: Option<u64>,
    pub generator: Option<&'static str>,
    pub status: String,
    pub wall_clock_seconds: f64,
}

struct Outcome {
    body: String,
    machine: bool,
    status: String,
    seed: Option<u64>,
    code: i32,
}

fn params(p: &ProblemArgs) -> CliResult<ProblemParams> {
    ProblemParams::new(p.k, p.p).map_err(|e| Failure::usage(usage_text(&e)))
}

fn usage_text(e: &Error) -> String {
    match e {
        Error::InvalidParameter(m) => m.clone(),
        other => other.to_string(),
    }
}

fn validate_config(c: &ConfigArgs) -> CliResult<CertifyConfig> {
    let cfg = c.config();
    cfg.validate().map_err(|e| Failure::usage(usage_text(&e)))?;
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

/// `x` with `digits` significant digits, `%g` style.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new leading digit
        let carried = s.trim_start_matches('-').split('.').next().map(str::len).unwrap_or(0);
        if carried > digits {
            return fmt_sig_sci(x, digits);
        }
        trim(s)
    } else {
        fmt_sig_sci(x, digits)
    }
}

fn fmt_sig_sci(x: f64, digits: usize) -> String {
    let s = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = s.split_once('e').expect("scientific format");
    let mant = if mant.contains('.') {
        mant.trim_end_matches('0').trim_end_matches('.')
    } else {
        mant
    };
    let e: i32 = exp.parse().expect("exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

fn opt_sig(x: Option<f64>) -> String {
    x.map(|v| fmt_sig(v, 6)).unwrap_or_else(|| "NA".into())
}

pub fn curve_csv(curve: &BoundCurve) -> String {
    let mut out = String::from("k,q,p,T_k,upper_lemma2,t_k,certified_lower,cghs_lower,cghs_upper,gamma0,eta0,status\n");
    for row in &curve.rows {
        let t_k = match row.t_small {
            Some(v) => fmt_sig(v, 6),
            None => "vacuous".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            curve.k,
            fmt_sig(row.q, 6),
            fmt_sig(row.p, 6),
            fmt_sig(row.t_big, 6),
            fmt_sig(row.upper_lemma2, 6),
            t_k,
            opt_sig(row.certified_lower),
            opt_sig(row.cghs_lower),
            opt_sig(row.cghs_upper),
            opt_sig(row.gamma0),
            opt_sig(row.eta0),
            row.status
        );
    }
    out
}

pub fn gnuplot_script(csv_path: &Path, k: u32) -> String {
    let csv = csv_path.display();
    format!(
        "set datafile separator ','\n\
         set datafile missing 'NA'\n\
         set key top left\n\
         set logscale y\n\
         set xlabel 'q = 1 - p'\n\
         set ylabel 'clause density r'\n\
         set title 'Density bounds, k = {k}'\n\
         plot '{csv}' every ::1 using 2:5 with lines title 'first-moment upper bound', \\\n\
         \x20    '{csv}' every ::1 using 2:7 with linespoints title 'certified lower bound', \\\n\
         \x20    '{csv}' every ::1 using 2:4 with lines dashtype 2 title 'T_k'\n"
    )
}

fn bounds_cmd(a: &BoundsArgs) -> CliResult<Outcome> {
    let params = params(&a.problem)?;
    let b = density_bounds(&params);
    let tuned = tuned_weights(&params);
    let body = match a.format {
        Format::Json => {
            let tuning = match &tuned {
                Ok(t) => serde_json::to_value(t).expect("serializable"),
                Err(e) => json!({ "error": e.to_string() }),
            };
            to_json(&json!({ "k": params.k(), "p": params.p(), "q": params.q(), "u0": params.u0(), "bounds": b, "tuning": tuning }))
        }
        Format::Human | Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "k = {}, p = {}, q = {}, u0 = {}", params.k(), params.p(), params.q(), fmt_sig(params.u0(), 6));
            let _ = writeln!(s, "first-moment scale T_k      {}", fmt_sig(b.t_big, 6));
            let _ = writeln!(s, "first-moment upper bound    {}", fmt_sig(b.upper, 6));
            match b.t_small {
                Some(LowerTarget::Density { value, delta }) => {
                    let _ = writeln!(s, "lower target t_k            {} (delta = {})", fmt_sig(value, 6), fmt_sig(delta, 6));
                }
                Some(LowerTarget::Vacuous { delta }) => {
                    let _ = writeln!(s, "lower target t_k            vacuous (delta = {})", fmt_sig(delta, 6));
                }
                None => {
                    let _ = writeln!(s, "lower target t_k            NA");
                }
            }
            let _ = writeln!(s, "small-p lower (leading)     {}", opt_sig(b.cghs_lower));
            let _ = writeln!(s, "small-p upper (leading)     {}", opt_sig(b.cghs_upper));
            match &tuned {
                Ok(t) => {
                    let _ = writeln!(s, "gamma0 = {}, eta0 = {}", fmt_sig(t.gamma0, 10), fmt_sig(t.eta0, 10));
                    let _ = writeln!(s, "tuning residuals {:e}, {:e}", t.residual1, t.residual2);
                }
                Err(e) => {
                    let _ = writeln!(s, "tuning: {e}");
                }
            }
            s
        }
    };
    Ok(Outcome { body, machine: a.format != Format::Human, status: "ok".into(), seed: None, code: 0 })
}

fn certify_cmd(a: &CertifyArgs) -> CliResult<Outcome> {
    let params = params(&a.problem)?;
    let cfg = validate_config(&a.config)?;
    if !(a.r > 0.0 && a.r.is_finite()) {
        return Err(Failure::usage(format!("r > 0 required (got {})", a.r)));
    }
    let cert = certify_density(&params, a.r, &cfg)?;
    let status = cert.status.as_str().to_string();
    let body = match a.format {
        Format::Human => {
            let mut s = String::new();
            let _ = writeln!(s, "k = {}, p = {}, r = {}: {}", cert.k, cert.p, cert.r, status);
            if let Some(t) = cert.target_log_g {
                let _ = writeln!(s, "target ln g = {t}, worst margin = {:?}, curvature = {:?}", cert.worst_margin, cert.half_curvature);
            }
            if let Some(f) = &cert.failure {
                let _ = writeln!(s, "{f}");
            }
            s
        }
        _ => to_json(&cert),
    };
    Ok(Outcome { body, machine: a.format != Format::Human, status, seed: None, code: 0 })
}

fn maxdensity_cmd(a: &MaxDensityArgs) -> CliResult<Outcome> {
    let params = params(&a.problem)?;
    let cfg = validate_config(&a.config)?;
    let s = max_certified_density(&params, &cfg)?;
    let body = match a.format {
        Format::Human => format!(
            "k = {}, p = {}: certified r_low = {} (first failing r = {}, monotone probe {})\n",
            params.k(),
            params.p(),
            fmt_sig(s.r_low, 6),
            fmt_sig(s.r_failed, 6),
            if s.monotone_probe_ok { "ok" } else { "failed, result downgraded" }
        ),
        _ => to_json(&s),
    };
    Ok(Outcome { body, machine: a.format != Format::Human, status: "certified".into(), seed: None, code: 0 })
}

fn curve_cmd(a: &CurveArgs) -> CliResult<Outcome> {
    if a.k < 2 {
        return Err(Failure::usage(format!("k >= 2 required (got k = {})", a.k)));
    }
    if !(0.0 <= a.q_min && a.q_min <= a.q_max && a.q_max < 1.0) {
        return Err(Failure::usage("0 <= q-min <= q-max < 1 required"));
    }
    if a.points == 0 || (a.points == 1 && a.q_min != a.q_max) {
        return Err(Failure::usage("points >= 1 required (exactly 1 only when q-min = q-max)"));
    }
    let cfg = validate_config(&a.config)?;
    let q_grid: Vec<f64> = if a.points == 1 {
        vec![a.q_min]
    } else {
        (0..a.points)
            .map(|i| a.q_min + (a.q_max - a.q_min) * i as f64 / (a.points - 1) as f64)
            .collect()
    };
    let curve = bound_curve(a.k, &q_grid, &cfg)?;
    if let Some(script) = &a.gnuplot {
        let csv = a.output.out.clone().unwrap_or_else(|| PathBuf::from("curve.csv"));
        std::fs::write(script, gnuplot_script(&csv, a.k))?;
    }
    let body = match a.format {
        Format::Json => to_json(&curve),
        _ => curve_csv(&curve),
    };
    Ok(Outcome { body, machine: true, status: "ok".into(), seed: None, code: 0 })
}

fn verify_cmd(a: &VerifyArgs) -> CliResult<Outcome> {
    let suites: Vec<Suite> = match a.suite {
        SuiteArg::Oracles => vec![Suite::Oracles],
        SuiteArg::Identities => vec![Suite::Identities],
        SuiteArg::Appendix => vec![Suite::Appendix],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let results: Vec<_> = suites.into_iter().flat_map(run_suite).collect();
    let all = results.iter().all(|r| r.passed);
    let body = match a.format {
        Format::Human => {
            let mut s = String::new();
            for r in &results {
                let _ = writeln!(
                    s,
                    "{} {}/{}: worst {:e} (tolerance {:e}) - {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.suite,
                    r.name,
                    r.worst,
                    r.tolerance,
                    r.detail
                );
            }
            s
        }
        _ => to_json(&results),
    };
    Ok(Outcome {
        body,
        machine: a.format != Format::Human,
        status: if all { "pass" } else { "fail" }.into(),
        seed: None,
        code: if all { 0 } else { 3 },
    })
}

fn export_dimacs(dir: &Path, n: usize, m: usize, k: usize, s: &SamplingArgs) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    for i in 0..s.samples {
        let f = sample_formula(n, m, k, Model::Iid, &mut sample_rng(s.seed, i as u64))?;
        let comment = format!("seed {} stream {i} generator {GENERATOR}", s.seed);
        std::fs::write(dir.join(format!("sample_{i:05}.cnf")), f.to_dimacs(Some(&comment)))?;
    }
    Ok(())
}

fn check_samples(s: &SamplingArgs) -> CliResult<()> {
    if s.samples == 0 {
        return Err(Failure::usage("samples >= 1 required"));
    }
    Ok(())
}

fn experiment_cmd(kind: &ExperimentKind) -> CliResult<Outcome> {
    let done = |body: String, seed: u64| Outcome { body, machine: true, status: "ok".into(), seed: Some(seed), code: 0 };
    match kind {
        ExperimentKind::Moments { problem, n, m, gamma, eta, sampling, .. } => {
            let params = params(problem)?;
            check_samples(sampling)?;
            let w = match (gamma, eta) {
                (None, None) => tuned_weights(&params)?.floor(),
                (Some(g), Some(e)) => WeightPair::new(*g, *e).map_err(|e| Failure::usage(usage_text(&e)))?,
                _ => return Err(Failure::usage("give both --gamma and --eta, or neither")),
            };
            let rep = estimate_moments(*n, *m, &params, &w, sampling.samples, sampling.seed)?;
            if let Some(dir) = &sampling.dimacs {
                export_dimacs(dir, *n, *m, params.k() as usize, sampling)?;
            }
            Ok(done(to_json(&rep), sampling.seed))
        }
        ExperimentKind::Psat { problem, n, r, solver, sampling, .. } => {
            let params = params(problem)?;
            check_samples(sampling)?;
            if !(*r >= 0.0 && r.is_finite()) {
                return Err(Failure::usage(format!("r >= 0 required (got {r})")));
            }
            if solver.solver == SolverArg::Local && (solver.steps == 0 || !(0.0..=1.0).contains(&solver.noise)) {
                return Err(Failure::usage("steps >= 1 and 0 <= noise <= 1 required"));
            }
            let rep = psat_frequency(*n, *r, &params, sampling.samples, solver.solver(), sampling.seed)?;
            if let Some(dir) = &sampling.dimacs {
                export_dimacs(dir, *n, rep.m, params.k() as usize, sampling)?;
            }
            Ok(done(to_json(&rep), sampling.seed))
        }
        ExperimentKind::Concentration { k, n, m, t, sampling, .. } => {
            if *k < 2 {
                return Err(Failure::usage(format!("k >= 2 required (got k = {k})")));
            }
            check_samples(sampling)?;
            if t.iter().any(|x| !(*x >= 0.0)) {
                return Err(Failure::usage("t values must be >= 0"));
            }
            let rep = concentration_check(*n, *m, *k as usize, sampling.samples, t, sampling.seed)?;
            if let Some(dir) = &sampling.dimacs {
                export_dimacs(dir, *n, *m, *k as usize, sampling)?;
            }
            Ok(done(to_json(&rep), sampling.seed))
        }
        ExperimentKind::Maxsat { k, n, m, sampling, .. } => {
            if *k < 2 {
                return Err(Failure::usage(format!("k >= 2 required (got k = {k})")));
            }
            check_samples(sampling)?;
            let stats = sample_max_sat(*n, *m, *k as usize, sampling.samples, sampling.seed)?;
            if let Some(dir) = &sampling.dimacs {
                export_dimacs(dir, *n, *m, *k as usize, sampling)?;
            }
            Ok(done(to_json(&json!({ "n": n, "m": m, "k": k, "s_k": stats })), sampling.seed))
        }
        ExperimentKind::Sample { k, n, m, model, seed, .. } => {
            if *k < 2 {
                return Err(Failure::usage(format!("k >= 2 required (got k = {k})")));
            }
            let model: Model = model.parse().map_err(|e: Error| Failure::usage(usage_text(&e)))?;
            let f = sample_formula(*n, *m, *k as usize, model, &mut sample_rng(*seed, 0))?;
            let comment = format!("seed {seed} stream 0 generator {GENERATOR} model {model:?}");
            Ok(done(f.to_dimacs(Some(&comment)), *seed))
        }
    }
}

fn output_of(cmd: &Command) -> Option<&Path> {
    let out = match cmd {
        Command::Bounds(a) => &a.output,
        Command::Certify(a) => &a.output,
        Command::Maxdensity(a) => &a.output,
        Command::Curve(a) => &a.output,
        Command::Verify(a) => &a.output,
        Command::Experiment(e) => match &e.kind {
            ExperimentKind::Moments { output, .. }
            | ExperimentKind::Psat { output, .. }
            | ExperimentKind::Concentration { output, .. }
            | ExperimentKind::Maxsat { output, .. }
            | ExperimentKind::Sample { output, .. } => output,
        },
    };
    out.out.as_deref()
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Bounds(_) => "bounds",
        Command::Certify(_) => "certify",
        Command::Maxdensity(_) => "maxdensity",
        Command::Curve(_) => "curve",
        Command::Verify(_) => "verify",
        Command::Experiment(e) => match e.kind {
            ExperimentKind::Moments { .. } => "experiment moments",
            ExperimentKind::Psat { .. } => "experiment psat",
            ExperimentKind::Concentration { .. } => "experiment concentration",
            ExperimentKind::Maxsat { .. } => "experiment maxsat",
            ExperimentKind::Sample { .. } => "experiment sample",
        },
    }
}

fn execute(cmd: &Command) -> CliResult<Outcome> {
    match cmd {
        Command::Bounds(a) => bounds_cmd(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Maxdensity(a) => maxdensity_cmd(a),
        Command::Curve(a) => curve_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Experiment(e) => experiment_cmd(&e.kind),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    let echo: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let (outcome, code) = match execute(&cli.command) {
        Ok(o) => {
            let code = o.code;
            (o, code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    let out_path = output_of(&cli.command);
    let written = match out_path {
        Some(p) => std::fs::write(p, &outcome.body),
        None => std::io::stdout().write_all(outcome.body.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return 2;
    }
    if outcome.machine {
        let manifest = RunManifest {
            tool: "psat",
            version: env!("CARGO_PKG_VERSION"),
            command: command_name(&cli.command).into(),
            parameters: json!(echo),
            threads: rayon::current_num_threads(),
            seed: outcome.seed,
            generator: outcome.seed.map(|_| GENERATOR),
            status: outcome.status.clone(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        let text = to_json(&manifest);
        match out_path {
            Some(p) => {
                let mut name = p.as_os_str().to_owned();
                name.push(".manifest.json");
                if let Err(e) = std::fs::write(PathBuf::from(name), text) {
                    eprintln!("error: cannot write manifest: {e}");
                    return 2;
                }
            }
            None => eprint!("{text}"),
        }
    }
    code
}

/// Thread count from [`THREADS_ENV`], if set.
pub fn threads_from_env() -> std::result::Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer (got '{v}')")),
        },
        Err(_) => Ok(None),
    }
}
