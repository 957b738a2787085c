//! Monte-Carlo campaigns over a grid of scaled magnitudes, aggregation against the
//! predictors, and CSV plumbing.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instance_gen::{generate_instance, generate_surrogate_draw};
use crate::predictor_general::{predict, ModelConfig};
use crate::predictor_signed::{feasibility_breaking_point, predict_signed};
use crate::socp::{signed_feasible, solve_socp, solve_socp_signed, SocpStatus, DEFAULT_TOL};
use crate::surrogate::{detect_unbounded, solve_surrogate_general, solve_surrogate_signed, SurrogateStatus};

pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_N_SOCP: usize = 400;
pub const DEFAULT_N_SURROGATE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Socp,
    Surrogate,
    Both,
    Theory,
    FeasibilityScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Socp,
    Surrogate,
    Theory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Optimal,
    Bounded,
    Infeasible,
    Unbounded,
    ConvergenceFailure,
}

impl TrialStatus {
    pub fn is_success(self) -> bool {
        matches!(self, TrialStatus::Optimal | TrialStatus::Bounded)
    }
}

macro_rules! text_enum {
    ($ty:ty { $($var:ident => $s:literal),* $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$var => $s),* })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$var),)*
                    other => Err(Error::Argument(format!("unknown {} `{other}`", stringify!($ty)))),
                }
            }
        }
    };
}

text_enum!(Mode { Socp => "socp", Surrogate => "surrogate", Both => "both", Theory => "theory", FeasibilityScan => "feasibility-scan" });
text_enum!(Source { Socp => "socp", Surrogate => "surrogate", Theory => "theory" });
text_enum!(TrialStatus {
    Optimal => "optimal",
    Bounded => "bounded",
    Infeasible => "infeasible",
    Unbounded => "unbounded",
    ConvergenceFailure => "convergence_failure",
});

/// How the solver radius is chosen; values are per `sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusMode {
    Optimal,
    Fixed(f64),
}

impl FromStr for RadiusMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "opt" {
            return Ok(RadiusMode::Optimal);
        }
        let value = s
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Argument(format!("radius mode `{s}` is neither `opt` nor `fixed:V`")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Argument(format!("fixed radius must be positive, got {value}")));
        }
        Ok(RadiusMode::Fixed(value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub mode: Mode,
    /// `x_mag_sc` is taken from `x_grid`; the rest is shared by every grid point.
    pub cfg: ModelConfig,
    pub x_grid: Vec<f64>,
    pub n_socp: usize,
    pub n_surrogate: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub signed: bool,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub output: Option<PathBuf>,
}

impl CampaignSpec {
    pub fn new(mode: Mode, cfg: ModelConfig, x_grid: Vec<f64>, signed: bool) -> Self {
        CampaignSpec {
            mode,
            cfg,
            x_grid,
            n_socp: DEFAULT_N_SOCP,
            n_surrogate: DEFAULT_N_SURROGATE,
            trials: DEFAULT_TRIALS,
            base_seed: 0,
            signed,
            threads: 0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.x_grid.is_empty() || self.x_grid.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Config("x_mag grid must be nonempty with positive entries".into()));
        }
        if self.mode == Mode::FeasibilityScan && !self.signed {
            return Err(Error::Config("feasibility scans are defined for the signed problem".into()));
        }
        self.cfg.validate(self.signed)?;
        for (n, used) in [
            (self.n_socp, matches!(self.mode, Mode::Socp | Mode::Both)),
            (self.n_surrogate, matches!(self.mode, Mode::Surrogate | Mode::Both | Mode::FeasibilityScan)),
        ] {
            if used {
                let (m, k) = self.dims(n);
                if !(k <= m && m < n && m > 0) {
                    return Err(Error::Config(format!("n = {n} gives m = {m}, k = {k}")));
                }
            }
        }
        Ok(())
    }

    /// `(m, k)` for a problem of size `n`.
    pub fn dims(&self, n: usize) -> (usize, usize) {
        let n = n as f64;
        ((self.cfg.alpha * n).round() as usize, (self.cfg.beta_w * n).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub x_mag_sc: f64,
    pub trial: usize,
    pub source: Source,
    pub seed: u64,
    pub w_over_sigma: Option<f64>,
    pub obj_per_sqrt_n: Option<f64>,
    pub status: TrialStatus,
    pub nu: Option<f64>,
    pub c1: Option<usize>,
    pub c2: Option<usize>,
    pub c3: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub x_mag_sc: f64,
    pub source: Source,
    pub mean_w_over_sigma: f64,
    pub std_w: f64,
    pub mean_obj_per_sqrt_n: f64,
    pub std_obj: f64,
    pub success_count: usize,
    pub trials: usize,
    pub theory_w: f64,
    pub theory_obj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityRow {
    pub x_mag_sc: f64,
    /// Fraction of feasible signed SOCP instances; NaN when none were run.
    pub p_socp_plus: f64,
    /// Fraction of bounded signed surrogate draws.
    pub p_prim_plus: f64,
    pub x_break_sc: f64,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn trial_seed(base_seed: u64, grid_index: usize, trial: usize, source: Source) -> u64 {
    let mut h = splitmix64(base_seed);
    for part in [grid_index as u64, trial as u64, source as u64] {
        h = splitmix64(h ^ part);
    }
    h
}

fn sources(mode: Mode) -> &'static [Source] {
    match mode {
        Mode::Socp => &[Source::Socp],
        Mode::Surrogate => &[Source::Surrogate],
        Mode::Both => &[Source::Socp, Source::Surrogate],
        Mode::Theory | Mode::FeasibilityScan => &[],
    }
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn run_trial(spec: &CampaignSpec, x_sc: f64, trial: usize, source: Source, seed: u64) -> TrialRecord {
    let sigma = spec.cfg.sigma;
    let mut rec = TrialRecord {
        x_mag_sc: x_sc,
        trial,
        source,
        seed,
        w_over_sigma: None,
        obj_per_sqrt_n: None,
        status: TrialStatus::ConvergenceFailure,
        nu: None,
        c1: None,
        c2: None,
        c3: None,
    };
    match source {
        Source::Socp => {
            let n = spec.n_socp;
            let (m, k) = spec.dims(n);
            let root = (n as f64).sqrt();
            let solved = generate_instance(n, m, k, sigma, x_sc / root, seed).and_then(|inst| {
                let r = spec.cfg.r_sc * root;
                if spec.signed {
                    solve_socp_signed(&inst, r, DEFAULT_TOL)
                } else {
                    solve_socp(&inst, r, DEFAULT_TOL)
                }
            });
            if let Ok(sol) = solved {
                rec.status = match sol.status {
                    SocpStatus::Optimal => TrialStatus::Optimal,
                    SocpStatus::Infeasible => TrialStatus::Infeasible,
                };
                if sol.status == SocpStatus::Optimal {
                    rec.w_over_sigma = Some(sol.w_norm / sigma);
                    rec.obj_per_sqrt_n = Some(sol.f_obj / root);
                }
            }
        }
        Source::Surrogate => {
            let n = spec.n_surrogate;
            let (m, k) = spec.dims(n);
            let root = (n as f64).sqrt();
            let solved = generate_surrogate_draw(n, k, m, seed).and_then(|draw| {
                let r = spec.cfg.r_sc * root;
                if spec.signed {
                    solve_surrogate_signed(&draw, sigma, x_sc / root, r)
                } else {
                    solve_surrogate_general(&draw, sigma, x_sc / root, r)
                }
            });
            if let Ok(sol) = solved {
                match sol.status {
                    SurrogateStatus::Bounded => {
                        rec.status = TrialStatus::Bounded;
                        rec.w_over_sigma = Some(sol.w_norm / sigma);
                        rec.obj_per_sqrt_n = Some(sol.xi / root);
                        rec.nu = Some(sol.nu);
                        rec.c1 = Some(sol.c1);
                        rec.c2 = Some(sol.c2);
                        rec.c3 = sol.c3;
                    }
                    SurrogateStatus::Unbounded => rec.status = TrialStatus::Unbounded,
                }
            }
        }
        Source::Theory => unreachable!("theory rows are not trials"),
    }
    rec
}

/// `(w / sigma, xi / sqrt(n))` limits at one grid point; NaN where the prediction fails
/// or the signed problem is infeasible.
pub fn theory_point(cfg: &ModelConfig, signed: bool) -> (f64, f64) {
    if signed {
        match predict_signed(cfg) {
            Ok(p) if p.feasible => (p.e_w_over_sigma, p.e_xi_per_sqrt_n),
            _ => (f64::NAN, f64::NAN),
        }
    } else {
        predict(cfg).map_or((f64::NAN, f64::NAN), |p| (p.e_w_over_sigma, p.e_xi_per_sqrt_n))
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per grid point and source, means and sample standard deviations over the successful
/// trials, joined with the predictor limits.
pub fn aggregate(spec: &CampaignSpec, records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &x in &spec.x_grid {
        let (theory_w, theory_obj) = theory_point(&spec.cfg.with_x(x), spec.signed);
        if spec.mode == Mode::Theory {
            let ok = theory_w.is_finite();
            rows.push(AggregateRow {
                x_mag_sc: x,
                source: Source::Theory,
                mean_w_over_sigma: theory_w,
                std_w: 0.0,
                mean_obj_per_sqrt_n: theory_obj,
                std_obj: 0.0,
                success_count: if ok { spec.trials } else { 0 },
                trials: spec.trials,
                theory_w,
                theory_obj,
            });
            continue;
        }
        for &source in sources(spec.mode) {
            let group: Vec<&TrialRecord> = records.iter().filter(|r| r.x_mag_sc == x && r.source == source).collect();
            let ok: Vec<&&TrialRecord> = group.iter().filter(|r| r.status.is_success()).collect();
            let w: Vec<f64> = ok.iter().filter_map(|r| r.w_over_sigma).collect();
            let obj: Vec<f64> = ok.iter().filter_map(|r| r.obj_per_sqrt_n).collect();
            let (mean_w, std_w) = mean_std(&w);
            let (mean_obj, std_obj) = mean_std(&obj);
            rows.push(AggregateRow {
                x_mag_sc: x,
                source,
                mean_w_over_sigma: mean_w,
                std_w,
                mean_obj_per_sqrt_n: mean_obj,
                std_obj,
                success_count: ok.len(),
                trials: group.len(),
                theory_w,
                theory_obj,
            });
        }
    }
    rows
}

/// Runs every `(grid point, trial, engine)` job; trial failures are recorded, never
/// propagated. Records come back ordered by grid index, then trial, then engine.
pub fn run_campaign(spec: &CampaignSpec) -> Result<(Vec<TrialRecord>, Vec<AggregateRow>)> {
    spec.validate()?;
    if spec.mode == Mode::FeasibilityScan {
        return Err(Error::Config("use feasibility_scan for feasibility-scan campaigns".into()));
    }
    let jobs: Vec<(usize, usize, Source)> = (0..spec.x_grid.len())
        .flat_map(|g| (0..spec.trials).flat_map(move |t| sources(spec.mode).iter().map(move |&s| (g, t, s))))
        .collect();
    let records = in_pool(spec.threads, || {
        jobs.par_iter()
            .map(|&(g, t, s)| run_trial(spec, spec.x_grid[g], t, s, trial_seed(spec.base_seed, g, t, s)))
            .collect::<Vec<_>>()
    })?;
    let rows = aggregate(spec, &records);
    Ok((records, rows))
}

/// Feasibility fractions of the signed problem across the grid, with the predicted
/// breaking point repeated on every row. `n_socp = 0` skips the SOCP side.
pub fn feasibility_scan(spec: &CampaignSpec) -> Result<Vec<FeasibilityRow>> {
    let scan = CampaignSpec { mode: Mode::FeasibilityScan, ..spec.clone() };
    scan.validate()?;
    let cfg = scan.cfg;
    let x_break = feasibility_breaking_point(cfg.alpha, cfg.beta_w, cfg.sigma, cfg.r_sc)?.map_or(0.0, |p| p.x_break_sc);
    let jobs: Vec<(usize, usize)> = (0..scan.x_grid.len()).flat_map(|g| (0..scan.trials).map(move |t| (g, t))).collect();
    let outcomes = in_pool(scan.threads, || {
        jobs.par_iter()
            .map(|&(g, t)| {
                let x = scan.x_grid[g];
                let socp = (scan.n_socp > 0).then(|| {
                    let n = scan.n_socp;
                    let (m, k) = scan.dims(n);
                    let root = (n as f64).sqrt();
                    let seed = trial_seed(scan.base_seed, g, t, Source::Socp);
                    generate_instance(n, m, k, cfg.sigma, x / root, seed).is_ok_and(|inst| signed_feasible(&inst, cfg.r_sc * root))
                });
                let n = scan.n_surrogate;
                let (m, k) = scan.dims(n);
                let root = (n as f64).sqrt();
                let seed = trial_seed(scan.base_seed, g, t, Source::Surrogate);
                let prim = generate_surrogate_draw(n, k, m, seed).is_ok_and(|draw| {
                    detect_unbounded(&draw, cfg.sigma, x / root, cfg.r_sc * root).status == SurrogateStatus::Bounded
                });
                (socp, prim)
            })
            .collect::<Vec<_>>()
    })?;
    let trials = scan.trials as f64;
    Ok(scan
        .x_grid
        .iter()
        .enumerate()
        .map(|(g, &x)| {
            let chunk = &outcomes[g * scan.trials..(g + 1) * scan.trials];
            let p_socp = if scan.n_socp > 0 {
                chunk.iter().filter(|o| o.0 == Some(true)).count() as f64 / trials
            } else {
                f64::NAN
            };
            let p_prim = chunk.iter().filter(|o| o.1).count() as f64 / trials;
            FeasibilityRow { x_mag_sc: x, p_socp_plus: p_socp, p_prim_plus: p_prim, x_break_sc: x_break }
        })
        .collect())
}

/// Seventeen significant digits; `NaN`/`inf` spelled so that `f64::from_str` reads them back.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn fmt_opt_float(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_float)
}

fn parse<T: FromStr>(field: &str, column: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Argument(format!("column {column}: cannot parse `{field}`")))
}

fn parse_opt<T: FromStr>(field: &str, column: &str) -> Result<Option<T>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse(field, column).map(Some)
    }
}

/// A row type with a fixed CSV schema.
pub trait CsvTable: Sized {
    const HEADER: &'static [&'static str];
    fn to_fields(&self) -> Vec<String>;
    fn from_fields(fields: &[&str]) -> Result<Self>;
}

impl CsvTable for TrialRecord {
    const HEADER: &'static [&'static str] =
        &["x_mag_sc", "trial", "source", "seed", "w_over_sigma", "obj_per_sqrt_n", "status", "nu", "c1", "c2", "c3"];

    fn to_fields(&self) -> Vec<String> {
        vec![
            fmt_float(self.x_mag_sc),
            self.trial.to_string(),
            self.source.to_string(),
            self.seed.to_string(),
            fmt_opt_float(self.w_over_sigma),
            fmt_opt_float(self.obj_per_sqrt_n),
            self.status.to_string(),
            fmt_opt_float(self.nu),
            fmt_opt(self.c1),
            fmt_opt(self.c2),
            fmt_opt(self.c3),
        ]
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        Ok(TrialRecord {
            x_mag_sc: parse(f[0], "x_mag_sc")?,
            trial: parse(f[1], "trial")?,
            source: f[2].parse()?,
            seed: parse(f[3], "seed")?,
            w_over_sigma: parse_opt(f[4], "w_over_sigma")?,
            obj_per_sqrt_n: parse_opt(f[5], "obj_per_sqrt_n")?,
            status: f[6].parse()?,
            nu: parse_opt(f[7], "nu")?,
            c1: parse_opt(f[8], "c1")?,
            c2: parse_opt(f[9], "c2")?,
            c3: parse_opt(f[10], "c3")?,
        })
    }
}

impl CsvTable for AggregateRow {
    const HEADER: &'static [&'static str] = &[
        "x_mag_sc",
        "source",
        "mean_w_over_sigma",
        "std_w",
        "mean_obj_per_sqrt_n",
        "std_obj",
        "success_count",
        "trials",
        "theory_w",
        "theory_obj",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            fmt_float(self.x_mag_sc),
            self.source.to_string(),
            fmt_float(self.mean_w_over_sigma),
            fmt_float(self.std_w),
            fmt_float(self.mean_obj_per_sqrt_n),
            fmt_float(self.std_obj),
            self.success_count.to_string(),
            self.trials.to_string(),
            fmt_float(self.theory_w),
            fmt_float(self.theory_obj),
        ]
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        Ok(AggregateRow {
            x_mag_sc: parse(f[0], "x_mag_sc")?,
            source: f[1].parse()?,
            mean_w_over_sigma: parse(f[2], "mean_w_over_sigma")?,
            std_w: parse(f[3], "std_w")?,
            mean_obj_per_sqrt_n: parse(f[4], "mean_obj_per_sqrt_n")?,
            std_obj: parse(f[5], "std_obj")?,
            success_count: parse(f[6], "success_count")?,
            trials: parse(f[7], "trials")?,
            theory_w: parse(f[8], "theory_w")?,
            theory_obj: parse(f[9], "theory_obj")?,
        })
    }
}

impl CsvTable for FeasibilityRow {
    const HEADER: &'static [&'static str] = &["x_mag_sc", "p_socp_plus", "p_prim_plus", "x_break_sc"];

    fn to_fields(&self) -> Vec<String> {
        [self.x_mag_sc, self.p_socp_plus, self.p_prim_plus, self.x_break_sc].map(fmt_float).to_vec()
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        Ok(FeasibilityRow {
            x_mag_sc: parse(f[0], "x_mag_sc")?,
            p_socp_plus: parse(f[1], "p_socp_plus")?,
            p_prim_plus: parse(f[2], "p_prim_plus")?,
            x_break_sc: parse(f[3], "x_break_sc")?,
        })
    }
}

/// Predictor output at one grid point. Signed rows leave `theta3` as NaN and report
/// feasibility; general rows are always feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub x_mag_sc: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub e_nu: f64,
    pub e_w_over_sigma: f64,
    pub e_xi_per_sqrt_n: f64,
    pub residual: f64,
}

impl PredictionRow {
    fn failed(x_mag_sc: f64) -> Self {
        let nan = f64::NAN;
        PredictionRow { x_mag_sc, theta1: nan, theta2: nan, theta3: nan, e_nu: nan, e_w_over_sigma: nan, e_xi_per_sqrt_n: nan, residual: nan }
    }
}

/// Predictions along a grid. Points whose solve does not converge come back as NaN rows
/// and are counted; any other error aborts.
pub fn prediction_table(cfg: &ModelConfig, grid: &[f64], signed: bool) -> Result<(Vec<PredictionRow>, usize)> {
    let mut rows = Vec::with_capacity(grid.len());
    let mut failures = 0;
    for &x in grid {
        let c = cfg.with_x(x);
        let row = if signed {
            predict_signed(&c).map(|p| PredictionRow {
                x_mag_sc: x,
                theta1: p.theta_hat.theta1p,
                theta2: p.theta_hat.theta2p,
                theta3: f64::NAN,
                e_nu: p.e_nu,
                e_w_over_sigma: p.e_w_over_sigma,
                e_xi_per_sqrt_n: p.e_xi_per_sqrt_n,
                residual: p.residual,
            })
        } else {
            predict(&c).map(|p| PredictionRow {
                x_mag_sc: x,
                theta1: p.theta_hat.theta1,
                theta2: p.theta_hat.theta2,
                theta3: p.theta_hat.theta3,
                e_nu: p.e_nu,
                e_w_over_sigma: p.e_w_over_sigma,
                e_xi_per_sqrt_n: p.e_xi_per_sqrt_n,
                residual: p.residual,
            })
        };
        match row {
            Ok(r) => rows.push(r),
            Err(e) if e.is_convergence() => {
                failures += 1;
                rows.push(PredictionRow::failed(x));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((rows, failures))
}

impl CsvTable for PredictionRow {
    const HEADER: &'static [&'static str] =
        &["x_mag_sc", "theta1", "theta2", "theta3", "E_nu", "E_w_over_sigma", "E_xi_per_sqrt_n", "residual"];

    fn to_fields(&self) -> Vec<String> {
        [self.x_mag_sc, self.theta1, self.theta2, self.theta3, self.e_nu, self.e_w_over_sigma, self.e_xi_per_sqrt_n, self.residual]
            .map(fmt_float)
            .to_vec()
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        let v = |i: usize| parse::<f64>(f[i], PredictionRow::HEADER[i]);
        Ok(PredictionRow {
            x_mag_sc: v(0)?,
            theta1: v(1)?,
            theta2: v(2)?,
            theta3: v(3)?,
            e_nu: v(4)?,
            e_w_over_sigma: v(5)?,
            e_xi_per_sqrt_n: v(6)?,
            residual: v(7)?,
        })
    }
}

/// A point on a fundamental characterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub alpha_w: f64,
    pub beta_w: f64,
}

impl CsvTable for CurveRow {
    const HEADER: &'static [&'static str] = &["alpha_w", "beta_w"];

    fn to_fields(&self) -> Vec<String> {
        vec![fmt_float(self.alpha_w), fmt_float(self.beta_w)]
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        Ok(CurveRow { alpha_w: parse(f[0], "alpha_w")?, beta_w: parse(f[1], "beta_w")? })
    }
}

/// Signed breaking point for one design; `x_break_sc = 0` and NaN fractions when the
/// problem stays feasible for every magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakRow {
    pub alpha: f64,
    pub rho: f64,
    pub beta_w: f64,
    pub r_sc: f64,
    pub x_break_sc: f64,
    pub theta1_feas: f64,
    pub theta2_feas: f64,
}

impl CsvTable for BreakRow {
    const HEADER: &'static [&'static str] = &["alpha", "rho", "beta_w", "r_sc", "x_break_sc", "theta1_feas", "theta2_feas"];

    fn to_fields(&self) -> Vec<String> {
        [self.alpha, self.rho, self.beta_w, self.r_sc, self.x_break_sc, self.theta1_feas, self.theta2_feas].map(fmt_float).to_vec()
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        let v = |i: usize| parse::<f64>(f[i], BreakRow::HEADER[i]);
        Ok(BreakRow {
            alpha: v(0)?,
            rho: v(1)?,
            beta_w: v(2)?,
            r_sc: v(3)?,
            x_break_sc: v(4)?,
            theta1_feas: v(5)?,
            theta2_feas: v(6)?,
        })
    }
}

pub fn break_row(cfg: &ModelConfig, rho: f64) -> Result<BreakRow> {
    let point = feasibility_breaking_point(cfg.alpha, cfg.beta_w, cfg.sigma, cfg.r_sc)?;
    Ok(BreakRow {
        alpha: cfg.alpha,
        rho,
        beta_w: cfg.beta_w,
        r_sc: cfg.r_sc,
        x_break_sc: point.map_or(0.0, |p| p.x_break_sc),
        theta1_feas: point.map_or(f64::NAN, |p| p.theta1_feas),
        theta2_feas: point.map_or(f64::NAN, |p| p.theta2_feas),
    })
}

/// One line per surrogate trial in the `surrogate` subcommand's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTrialRow(pub TrialRecord);

impl CsvTable for SurrogateTrialRow {
    const HEADER: &'static [&'static str] =
        &["x_mag_sc", "trial", "xi_per_sqrt_n", "w_over_sigma", "nu", "c1", "c2", "c3", "status"];

    fn to_fields(&self) -> Vec<String> {
        let r = &self.0;
        vec![
            fmt_float(r.x_mag_sc),
            r.trial.to_string(),
            fmt_opt_float(r.obj_per_sqrt_n),
            fmt_opt_float(r.w_over_sigma),
            fmt_opt_float(r.nu),
            fmt_opt(r.c1),
            fmt_opt(r.c2),
            fmt_opt(r.c3),
            r.status.to_string(),
        ]
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        Ok(SurrogateTrialRow(TrialRecord {
            x_mag_sc: parse(f[0], "x_mag_sc")?,
            trial: parse(f[1], "trial")?,
            source: Source::Surrogate,
            seed: 0,
            obj_per_sqrt_n: parse_opt(f[2], "xi_per_sqrt_n")?,
            w_over_sigma: parse_opt(f[3], "w_over_sigma")?,
            nu: parse_opt(f[4], "nu")?,
            c1: parse_opt(f[5], "c1")?,
            c2: parse_opt(f[6], "c2")?,
            c3: parse_opt(f[7], "c3")?,
            status: f[8].parse()?,
        }))
    }
}

pub fn write_csv<T: CsvTable, W: Write>(rows: &[T], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(T::HEADER)?;
    for row in rows {
        w.write_record(row.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: CsvTable, R: Read>(input: R) -> std::result::Result<Vec<T>, csv::Error> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(T::HEADER.iter().copied()) {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("unexpected header {header:?}")).into());
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(T::from_fields(&fields).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?);
    }
    Ok(rows)
}

pub fn export_csv<T: CsvTable>(rows: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    write_csv(rows, file).map_err(|source| Error::Csv { path: path.to_owned(), source })
}

pub fn import_csv<T: CsvTable>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    read_csv(file).map_err(|source| Error::Csv { path: path.to_owned(), source })
}

/// `LO:HI:STEP` (inclusive of `HI` up to rounding) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Argument(format!("cannot parse grid `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step): (f64, f64, f64) =
                (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?, step.trim().parse().map_err(|_| bad())?);
            if !(step > 0.0 && hi >= lo) {
                return Err(bad());
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| lo + i as f64 * step).collect()
        }
        [list] => list.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

/// `key = value` lines; blank lines and `#` comments are skipped. Keys keep their order
/// so that later entries win when applied in sequence.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{raw}`", lineno + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        out.push((key.replace('_', "-"), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_curves::design_from_rho;
    use proptest::prelude::*;

    fn spec(mode: Mode, signed: bool) -> CampaignSpec {
        let design = design_from_rho(0.5, 2.0, 1.0, signed).unwrap();
        let mut s = CampaignSpec::new(mode, ModelConfig::from_design(&design, 1.0, 1.0), vec![1.0, 2.0], signed);
        s.trials = 3;
        s.n_socp = 60;
        s.n_surrogate = 80;
        s.base_seed = 11;
        s
    }

    #[test]
    fn theory_mode_reproduces_predictor() {
        let mut s = spec(Mode::Theory, false);
        s.trials = 1;
        let (records, rows) = run_campaign(&s).unwrap();
        assert!(records.is_empty());
        for row in rows {
            let p = predict(&s.cfg.with_x(row.x_mag_sc)).unwrap();
            assert_eq!(row.mean_w_over_sigma, p.e_w_over_sigma);
            assert_eq!(row.mean_obj_per_sqrt_n, p.e_xi_per_sqrt_n);
            assert_eq!(row.success_count, 1);
        }
    }

    #[test]
    fn campaign_is_ordered_and_deterministic() {
        let s = spec(Mode::Both, false);
        let (a, rows) = run_campaign(&s).unwrap();
        let (b, _) = run_campaign(&CampaignSpec { threads: 1, ..s.clone() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 3 * 2);
        let keys: Vec<(usize, usize)> =
            a.iter().map(|r| (s.x_grid.iter().position(|&x| x == r.x_mag_sc).unwrap(), r.trial)).collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.success_count <= r.trials));
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for g in 0..20 {
            for t in 0..300 {
                for s in [Source::Socp, Source::Surrogate] {
                    assert!(seen.insert(trial_seed(7, g, t, s)));
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_and_recompute() {
        let dir = std::env::temp_dir().join(format!("socp-phase-exp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let s = spec(Mode::Both, false);
        let (records, rows) = run_campaign(&s).unwrap();
        let rp = dir.join("records.csv");
        let ap = dir.join("aggregates.csv");
        export_csv(&records, &rp).unwrap();
        export_csv(&rows, &ap).unwrap();
        let back: Vec<TrialRecord> = import_csv(&rp).unwrap();
        assert_eq!(back, records);
        let back_rows: Vec<AggregateRow> = import_csv(&ap).unwrap();
        assert_eq!(aggregate(&s, &back), back_rows);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn prediction_table_round_trips() {
        let s = spec(Mode::Theory, false);
        let (rows, failures) = prediction_table(&s.cfg, &[0.5, 1.0, 4.0], false).unwrap();
        assert_eq!(failures, 0);
        assert_eq!(rows[1].e_w_over_sigma, predict(&s.cfg.with_x(1.0)).unwrap().e_w_over_sigma);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back: Vec<PredictionRow> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let (signed, _) = prediction_table(&spec(Mode::Theory, true).cfg, &[1.0], true).unwrap();
        assert!(signed[0].theta3.is_nan() && signed[0].e_w_over_sigma.is_finite());
    }

    #[test]
    fn break_rows_round_trip() {
        let design = design_from_rho(0.7, 3.0, 1.0, true).unwrap();
        let row = break_row(&ModelConfig::from_design(&design, 1.0, 1.0), 3.0).unwrap();
        assert!((row.x_break_sc - 1.70813).abs() < 1e-4);
        let low = design_from_rho(0.4, 2.0, 1.0, true).unwrap();
        assert_eq!(break_row(&ModelConfig::from_design(&low, 1.0, 1.0), 2.0).unwrap().x_break_sc, 0.0);
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        assert_eq!(read_csv::<BreakRow, _>(buf.as_slice()).unwrap(), vec![row]);
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv::<AggregateRow, _>(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", AggregateRow::HEADER.join(",")));
    }

    #[test]
    fn csv_columns_match_schema() {
        let s = spec(Mode::Surrogate, true);
        let (records, rows) = run_campaign(&s).unwrap();
        assert!(records.iter().all(|r| r.to_fields().len() == TrialRecord::HEADER.len()));
        assert!(rows.iter().all(|r| r.to_fields().len() == AggregateRow::HEADER.len()));
        let sur: Vec<SurrogateTrialRow> = records.into_iter().map(SurrogateTrialRow).collect();
        assert!(sur.iter().all(|r| r.to_fields().len() == 9));
    }

    #[test]
    fn io_errors_name_the_path() {
        let path = Path::new("/nonexistent-dir/out.csv");
        let err = export_csv::<AggregateRow>(&[], path).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
    }

    #[test]
    fn feasibility_far_above_break_is_one() {
        let design = design_from_rho(0.7, 2.0, 1.0, true).unwrap();
        let mut s = CampaignSpec::new(Mode::FeasibilityScan, ModelConfig::from_design(&design, 1.0, 1.0), vec![20.0], true);
        s.trials = 10;
        s.n_socp = 400;
        s.n_surrogate = 1000;
        let rows = feasibility_scan(&s).unwrap();
        assert_eq!(rows[0].p_socp_plus, 1.0);
        assert_eq!(rows[0].p_prim_plus, 1.0);
        assert!((rows[0].x_break_sc - 0.646).abs() < 1e-3);
    }

    #[test]
    fn grid_and_config_parsing() {
        assert_eq!(parse_grid("0.5:2:0.5").unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("1, 3").unwrap(), vec![1.0, 3.0]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("a").is_err());
        let kv = parse_config("# c\nalpha = 0.5\n\nbeta_w=0.1 # x\n").unwrap();
        assert_eq!(kv, vec![("alpha".into(), "0.5".into()), ("beta-w".into(), "0.1".into())]);
        assert!(parse_config("alpha").is_err());
        assert_eq!("opt".parse::<RadiusMode>().unwrap(), RadiusMode::Optimal);
        assert_eq!("fixed:0.3".parse::<RadiusMode>().unwrap(), RadiusMode::Fixed(0.3));
        assert!("fixed:-1".parse::<RadiusMode>().is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(Mode::Socp, false);
        s.trials = 0;
        assert!(run_campaign(&s).is_err());
        let mut s = spec(Mode::Socp, false);
        s.x_grid.clear();
        assert!(run_campaign(&s).is_err());
        assert!(feasibility_scan(&spec(Mode::Socp, false)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn float_format_round_trips(v in any::<f64>()) {
            let back: f64 = fmt_float(v).parse().unwrap();
            prop_assert!(back == v || (v.is_nan() && back.is_nan()));
        }
    }
}
