//! Concentration points of the SOCP error norm and objective when the signs of the
//! nonzero entries are unknown.
//!
//! The breakpoint equations are solved in erfinv coordinates `e_i` rather than in the
//! fractions `theta_i` directly: each `theta_i` is an `erf`/`erfc` of `e_i`, which keeps
//! every iterate inside its interval and resolves fractions that sit exponentially close
//! to a block boundary.

use crate::error::{Error, Result};
use crate::gaussian_order_stats::{
    limit_normsq_lower_block, limit_normsq_upper_block, limit_normsq_zero_block, limit_sums,
    ThetaGeneral, FRAC_1_SQRT_2PI,
};
use crate::numerics::{erf, erfc, scan_root, solve_system, SolverSettings};
use crate::phase_curves::{fundamental_beta, RhoDesign};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// Entries of `e` at this magnitude behave as the erfinv(±1) limits.
pub(crate) const FAR: f64 = 40.0;
const CONTINUATION_STEPS: usize = 8;
const NEWTON: SolverSettings = SolverSettings { abs_tol: 1e-12, rel_tol: 1e-10, max_iter: 100 };
/// Largest residual accepted on a returned prediction.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// One prediction point. `x_mag_sc` and `r_sc` are the limits of `x_mag / sqrt(n)` and
/// `r / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub alpha: f64,
    pub beta_w: f64,
    pub sigma: f64,
    pub x_mag_sc: f64,
    pub r_sc: f64,
}

impl ModelConfig {
    /// Uses the design's sparsity and optimal radius.
    pub fn from_design(design: &RhoDesign, sigma: f64, x_mag_sc: f64) -> Self {
        ModelConfig { alpha: design.alpha, beta_w: design.beta_w, sigma, x_mag_sc, r_sc: design.r_opt_sc }
    }

    pub fn with_x(self, x_mag_sc: f64) -> Self {
        ModelConfig { x_mag_sc, ..self }
    }

    /// Checks ranges and that `(alpha, beta_w)` lies strictly below the characterization.
    pub fn validate(&self, signed: bool) -> Result<()> {
        let finite = [self.alpha, self.beta_w, self.sigma, self.x_mag_sc, self.r_sc].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("non-finite model parameter".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if !(self.beta_w > 0.0 && self.beta_w < self.alpha) {
            return Err(Error::Config(format!("beta_w = {} outside (0, alpha)", self.beta_w)));
        }
        if !(self.sigma > 0.0) || !(self.r_sc > 0.0) || self.x_mag_sc < 0.0 {
            return Err(Error::Config("need sigma > 0, r_sc > 0 and x_mag_sc >= 0".into()));
        }
        let limit = fundamental_beta(self.alpha, signed)?;
        if self.beta_w >= limit {
            return Err(Error::Config(format!(
                "beta_w = {} is not below the characterization ({limit}) at alpha = {}",
                self.beta_w, self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarFunctions {
    pub s: f64,
    pub d: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralPrediction {
    pub theta_hat: ThetaGeneral,
    pub e_nu: f64,
    pub e_w_over_sigma: f64,
    pub e_xi_per_sqrt_n: f64,
    pub residual: f64,
}

/// Minus-branch root of `q N^2 + 2 p N + c = 0`, written as `c / (-p + sqrt(p^2 - c q))`
/// so that it stays finite when `q` vanishes.
pub(crate) fn minus_root(p: f64, q: f64, c: f64) -> Option<f64> {
    let disc = p * p - c * q;
    if !(disc >= 0.0) {
        return None;
    }
    let den = -p + disc.sqrt();
    (den > 0.0).then(|| c / den)
}

/// `S`, `D` and the effective radius `R` at the given fractions.
pub fn block_functions(theta: ThetaGeneral, cfg: &ModelConfig) -> Result<(f64, f64, f64)> {
    let b = cfg.beta_w;
    let sums = limit_sums(theta, b)?;
    let s = sums.s_zero + sums.s_upper - sums.s_lower;
    let d = limit_normsq_zero_block(theta.theta1, b)?
        + limit_normsq_upper_block(theta.theta2, b)?
        + limit_normsq_lower_block(theta.theta3, b)?;
    Ok((s, d, cfg.r_sc - cfg.x_mag_sc * sums.s_middle))
}

/// `S`, `D`, `R`, `A`, `B`, `N` at the given fractions.
pub fn scalar_functions(theta: ThetaGeneral, cfg: &ModelConfig) -> Result<ScalarFunctions> {
    let (s, d, r) = block_functions(theta, cfg)?;
    if !(r > 0.0) {
        return Err(Error::Config(format!("effective radius {r} is not positive")));
    }
    let mid = 1.0 - theta.theta2 - theta.theta3;
    let c = (cfg.sigma * cfg.sigma + mid * cfg.x_mag_sc * cfg.x_mag_sc).sqrt();
    let a = c * (cfg.alpha - d) / r;
    let bb = c * s / r;
    let count = theta.theta1 + theta.theta2 + theta.theta3 - 1.0;
    let n = minus_root(a * bb - s, a * a - cfg.alpha + d, bb * bb + count)
        .ok_or_else(|| Error::NoSolution("negative discriminant for N".into()))?;
    Ok(ScalarFunctions { s, d, r, a, b: bb, n })
}

/// Everything the residuals and the outputs need at one point in erfinv coordinates.
#[derive(Debug, Clone, Copy)]
struct State {
    n: f64,
    q: f64,
    c: f64,
    s: f64,
    d: f64,
    r: f64,
    count: f64,
    mid: f64,
    theta: [f64; 3],
}

fn evaluate(e: &[f64], cfg: &ModelConfig, x: f64) -> Option<State> {
    let (e1, e2, e3) = (e[0], e[1], e[2]);
    let b = cfg.beta_w;
    let t1 = 1.0 - (1.0 - b) * erf(e1);
    let om2 = b * erfc(-e2) / 2.0;
    let t3 = b * erfc(e3) / 2.0;
    let mid = om2 - t3;
    let (x1, x2, x3) = ((-e1 * e1).exp(), (-e2 * e2).exp(), (-e3 * e3).exp());
    let k = b * FRAC_1_SQRT_2PI;
    let s = (1.0 - b) * 2.0 * FRAC_1_SQRT_2PI * x1 + k * x2 + k * x3;
    let d = (1.0 - b) * FRAC_1_SQRT_2PI * 2.0 * SQRT_2 * e1 * x1 + t1 - b
        + k * SQRT_2 * e2 * x2 + b - om2
        + k * SQRT_2 * e3 * x3 + t3;
    let r = cfg.r_sc - x * (k * x3 - k * x2);
    if !(r > 0.0) {
        return None;
    }
    let c = (cfg.sigma * cfg.sigma + mid * x * x).sqrt();
    let a = c * (cfg.alpha - d) / r;
    let bb = c * s / r;
    let count = t1 - mid;
    let n = minus_root(a * bb - s, a * a - cfg.alpha + d, bb * bb + count)?;
    let q2 = n * n * (cfg.alpha - d) + 2.0 * n * s - count;
    if !(q2 >= 0.0) {
        return None;
    }
    Some(State { n, q: q2.sqrt(), c, s, d, r, count, mid, theta: [t1, 1.0 - om2, t3] })
}

fn residuals(e: &[f64], cfg: &ModelConfig, x: f64) -> Vec<f64> {
    match evaluate(e, cfg, x) {
        Some(st) => {
            let coupling = x * st.q / st.c;
            vec![
                st.n * SQRT_2 * e[1] + coupling - 1.0,
                st.n * SQRT_2 * e[2] - coupling - 1.0,
                SQRT_2 * e[0] * st.n - 1.0,
            ]
        }
        None => vec![f64::NAN; 3],
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Tracks a root of `res(., x)` from `x_start` (where `e` already solves it) down to
/// `x_end` in geometric steps, halving a step in log-space whenever Newton fails.
pub(crate) fn continue_down(
    res: impl Fn(&[f64], f64) -> Vec<f64>,
    mut e: Vec<f64>,
    x_start: f64,
    x_end: f64,
) -> Result<Vec<f64>> {
    let ratio = (x_end / x_start).powf(1.0 / CONTINUATION_STEPS as f64);
    let mut cur = x_start;
    let mut halvings = 0;
    for step in 1..=CONTINUATION_STEPS {
        let target = if step == CONTINUATION_STEPS { x_end } else { x_start * ratio.powi(step as i32) };
        let mut next = target;
        while cur != target {
            match solve_system(|v| res(v, next), &e, NEWTON) {
                Ok(sol) => {
                    e = sol;
                    cur = next;
                    next = target;
                }
                Err(err) => {
                    halvings += 1;
                    if halvings > 60 {
                        return Err(err);
                    }
                    next = (cur * next).sqrt();
                }
            }
        }
    }
    Ok(e)
}

/// Solves for `e1` in `sqrt(2) e1 N - 1 = 0` with the other coordinates held by `rest`.
pub(crate) fn solve_first_coordinate(h: impl Fn(f64) -> f64) -> Result<f64> {
    scan_root(h, 1e-3, 6.0, 600, SolverSettings { abs_tol: 1e-15, rel_tol: 1e-15, max_iter: 200 })
}

fn start_point(cfg: &ModelConfig, x_big: f64) -> Result<Vec<f64>> {
    let at = |e1: f64| evaluate(&[e1, -FAR, FAR], cfg, 0.0);
    let e1 = solve_first_coordinate(|t| at(t).map_or(f64::NAN, |st| SQRT_2 * t * st.n - 1.0))?;
    let st = at(e1).ok_or_else(|| Error::NoSolution("large-x start point".into()))?;
    let shift = x_big * st.q / cfg.sigma;
    Ok(vec![e1, (1.0 - shift) / (SQRT_2 * st.n), (1.0 + shift) / (SQRT_2 * st.n)])
}

fn solve_coordinates(cfg: &ModelConfig) -> Result<Vec<f64>> {
    cfg.validate(false)?;
    let x = cfg.x_mag_sc;
    if x < 1e-12 {
        // Without the coupling term all three quantiles equal 1/N.
        let at = |t: f64| evaluate(&[t, t, t], cfg, 0.0);
        let t = solve_first_coordinate(|t| at(t).map_or(f64::NAN, |st| SQRT_2 * t * st.n - 1.0))?;
        return Ok(vec![t, t, t]);
    }
    let x_big = x.max(FAR * cfg.sigma.max(cfg.r_sc));
    let e0 = start_point(cfg, x_big)?;
    let e = solve_system(|v| residuals(v, cfg, x_big), &e0, NEWTON)?;
    if x_big == x {
        return Ok(e);
    }
    continue_down(|v, xx| residuals(v, cfg, xx), e, x_big, x)
}

fn finish(e: &[f64], cfg: &ModelConfig) -> Result<(State, f64)> {
    let x = cfg.x_mag_sc;
    let st = evaluate(e, cfg, x).ok_or_else(|| Error::NoSolution("solution left the domain".into()))?;
    let residual = max_abs(&residuals(e, cfg, x));
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::Convergence { what: "solve_theta", residual, best: e.to_vec() });
    }
    Ok((st, residual))
}

fn theta_of(st: &State) -> ThetaGeneral {
    ThetaGeneral { theta1: st.theta[0], theta2: st.theta[1], theta3: st.theta[2] }
}

/// Breakpoint fractions solving the three concentration equations.
pub fn solve_theta(cfg: &ModelConfig) -> Result<ThetaGeneral> {
    if zero_is_optimal(cfg) {
        return Ok(predict(cfg)?.theta_hat);
    }
    let e = solve_coordinates(cfg)?;
    Ok(theta_of(&finish(&e, cfg)?.0))
}

/// True when the radius reaches the limit of `‖y‖ / sqrt(n)`, so `x = 0` is optimal.
pub(crate) fn zero_is_optimal(cfg: &ModelConfig) -> bool {
    let x = cfg.x_mag_sc;
    cfg.r_sc * cfg.r_sc >= cfg.alpha * (cfg.sigma * cfg.sigma + cfg.beta_w * x * x)
}

pub fn predict(cfg: &ModelConfig) -> Result<GeneralPrediction> {
    if zero_is_optimal(cfg) {
        cfg.validate(false)?;
        let x = cfg.x_mag_sc;
        let theta_hat = ThetaGeneral { theta1: cfg.beta_w, theta2: 1.0 - cfg.beta_w, theta3: 0.0 };
        return Ok(GeneralPrediction {
            theta_hat,
            e_nu: 0.0,
            e_w_over_sigma: cfg.beta_w.sqrt() * x / cfg.sigma,
            e_xi_per_sqrt_n: -cfg.beta_w * x,
            residual: 0.0,
        });
    }
    let e = solve_coordinates(cfg)?;
    let (st, residual) = finish(&e, cfg)?;
    let x = cfg.x_mag_sc;
    let n = st.n;
    let x2s = x * x / (cfg.sigma * cfg.sigma);
    let w2 = n * n * (cfg.alpha * st.mid * x2s + st.d) - 2.0 * n * st.s + st.count;
    // the sparse-block multiplier sum per n is mid + 2 theta3
    let xi = st.c * st.q - n * st.r - x * (st.mid + 2.0 * st.theta[2]);
    Ok(GeneralPrediction {
        theta_hat: theta_of(&st),
        e_nu: n,
        e_w_over_sigma: w2.max(0.0).sqrt() / st.q,
        e_xi_per_sqrt_n: xi,
        residual,
    })
}
