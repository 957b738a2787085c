//! Concentration points for the nonnegativity-constrained problem and the magnitude
//! below which that problem becomes infeasible.

use crate::error::{Error, Result};
use crate::gaussian_order_stats::{signed_limits, ThetaSigned, FRAC_1_SQRT_2PI};
use crate::numerics::{erfc, find_root, solve_system, Bracket, SolverSettings};
use crate::predictor_general::{
    continue_down, minus_root, solve_first_coordinate, zero_is_optimal, ModelConfig, ScalarFunctions, FAR,
    RESIDUAL_TOL,
};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const NEWTON: SolverSettings = SolverSettings { abs_tol: 1e-12, rel_tol: 1e-10, max_iter: 100 };
const ROOT: SolverSettings = SolverSettings { abs_tol: 1e-14, rel_tol: 1e-14, max_iter: 300 };
const X_MIN: f64 = 1e-4;
const X_MAX_START: f64 = 8.0;
const X_MAX_DOUBLINGS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedPrediction {
    pub theta_hat: ThetaSigned,
    pub e_nu: f64,
    pub e_w_over_sigma: f64,
    pub e_xi_per_sqrt_n: f64,
    pub residual: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityPoint {
    pub x_break_sc: f64,
    pub theta2_feas: f64,
    pub theta1_feas: f64,
}

pub fn scalar_functions_signed(theta: ThetaSigned, cfg: &ModelConfig) -> Result<ScalarFunctions> {
    let (s, d, r) = block_functions_signed(theta, cfg)?;
    if !(r > 0.0) {
        return Err(Error::Config(format!("effective radius {r} is not positive")));
    }
    let c = (cfg.sigma * cfg.sigma + (1.0 - theta.theta2p) * cfg.x_mag_sc * cfg.x_mag_sc).sqrt();
    let a = c * (cfg.alpha - d) / r;
    let bb = c * s / r;
    let count = theta.theta1p + theta.theta2p - 1.0;
    let n = minus_root(a * bb - s, a * a - cfg.alpha + d, bb * bb + count)
        .ok_or_else(|| Error::NoSolution("negative discriminant for N".into()))?;
    Ok(ScalarFunctions { s, d, r, a, b: bb, n })
}

/// `S`, `D` and `R` at the given fractions.
pub fn block_functions_signed(theta: ThetaSigned, cfg: &ModelConfig) -> Result<(f64, f64, f64)> {
    let l = signed_limits(theta, cfg.beta_w)?;
    Ok((l.s_zero + l.s_upper, l.normsq_zero + l.normsq_upper, cfg.r_sc - cfg.x_mag_sc * l.s_tail))
}

#[derive(Debug, Clone, Copy)]
struct State {
    n: f64,
    q: f64,
    c: f64,
    s: f64,
    d: f64,
    r: f64,
    count: f64,
    om2: f64,
    theta: [f64; 2],
}

fn evaluate(e: &[f64], cfg: &ModelConfig, x: f64) -> Option<State> {
    let (e1, e2) = (e[0], e[1]);
    let b = cfg.beta_w;
    let t1 = 1.0 - (1.0 - b) * erfc(-e1) / 2.0;
    let om2 = b * erfc(-e2) / 2.0;
    let (x1, x2) = ((-e1 * e1).exp(), (-e2 * e2).exp());
    let k0 = (1.0 - b) * FRAC_1_SQRT_2PI;
    let k = b * FRAC_1_SQRT_2PI;
    let s = k0 * x1 + k * x2;
    let d = k0 * SQRT_2 * e1 * x1 + t1 - b + k * SQRT_2 * e2 * x2 + b - om2;
    let r = cfg.r_sc + x * k * x2;
    let c = (cfg.sigma * cfg.sigma + om2 * x * x).sqrt();
    let a = c * (cfg.alpha - d) / r;
    let bb = c * s / r;
    let count = t1 - om2;
    let n = minus_root(a * bb - s, a * a - cfg.alpha + d, bb * bb + count)?;
    let q2 = n * n * (cfg.alpha - d) + 2.0 * n * s - count;
    if !(q2 >= 0.0) {
        return None;
    }
    Some(State { n, q: q2.sqrt(), c, s, d, r, count, om2, theta: [t1, 1.0 - om2] })
}

fn residuals(e: &[f64], cfg: &ModelConfig, x: f64) -> Vec<f64> {
    match evaluate(e, cfg, x) {
        Some(st) => vec![st.n * SQRT_2 * e[1] + x * st.q / st.c - 1.0, SQRT_2 * e[0] * st.n - 1.0],
        None => vec![f64::NAN; 2],
    }
}

fn solve_coordinates(cfg: &ModelConfig) -> Result<Vec<f64>> {
    let x = cfg.x_mag_sc;
    if x < 1e-12 {
        let at = |t: f64| evaluate(&[t, t], cfg, 0.0);
        let t = solve_first_coordinate(|t| at(t).map_or(f64::NAN, |st| SQRT_2 * t * st.n - 1.0))?;
        return Ok(vec![t, t]);
    }
    let x_big = x.max(FAR * cfg.sigma.max(cfg.r_sc));
    let at = |e1: f64| evaluate(&[e1, -FAR], cfg, 0.0);
    let e1 = solve_first_coordinate(|t| at(t).map_or(f64::NAN, |st| SQRT_2 * t * st.n - 1.0))?;
    let st = at(e1).ok_or_else(|| Error::NoSolution("large-x start point".into()))?;
    let e0 = vec![e1, (1.0 - x_big * st.q / cfg.sigma) / (SQRT_2 * st.n)];
    let e = solve_system(|v| residuals(v, cfg, x_big), &e0, NEWTON)?;
    if x_big == x {
        return Ok(e);
    }
    continue_down(|v, xx| residuals(v, cfg, xx), e, x_big, x)
}

/// Fails with [`Error::Infeasible`] when `x_mag_sc` is at or below the breaking point.
fn check_feasible(cfg: &ModelConfig) -> Result<()> {
    if let Some(fp) = feasibility_breaking_point(cfg.alpha, cfg.beta_w, cfg.sigma, cfg.r_sc)? {
        if cfg.x_mag_sc <= fp.x_break_sc {
            return Err(Error::Infeasible(format!(
                "x_mag_sc = {} is not above the breaking point {}",
                cfg.x_mag_sc, fp.x_break_sc
            )));
        }
    }
    Ok(())
}

fn solve_state(cfg: &ModelConfig) -> Result<(State, f64)> {
    check_feasible(cfg)?;
    let e = solve_coordinates(cfg)?;
    let x = cfg.x_mag_sc;
    let st = evaluate(&e, cfg, x).ok_or_else(|| Error::NoSolution("solution left the domain".into()))?;
    let residual = residuals(&e, cfg, x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::Convergence { what: "solve_theta_signed", residual, best: e });
    }
    Ok((st, residual))
}

fn zero_solution(cfg: &ModelConfig) -> SignedPrediction {
    let x = cfg.x_mag_sc;
    SignedPrediction {
        theta_hat: ThetaSigned { theta1p: cfg.beta_w, theta2p: 1.0 - cfg.beta_w },
        e_nu: 0.0,
        e_w_over_sigma: cfg.beta_w.sqrt() * x / cfg.sigma,
        e_xi_per_sqrt_n: -cfg.beta_w * x,
        residual: 0.0,
        feasible: true,
    }
}

pub fn solve_theta_signed(cfg: &ModelConfig) -> Result<ThetaSigned> {
    cfg.validate(true)?;
    if zero_is_optimal(cfg) {
        return Ok(zero_solution(cfg).theta_hat);
    }
    let (st, _) = solve_state(cfg)?;
    Ok(ThetaSigned { theta1p: st.theta[0], theta2p: st.theta[1] })
}

/// Below the breaking point the returned prediction has `feasible = false`, an infinite
/// `e_nu`, NaN error and objective, and the fractions at the breaking point.
pub fn predict_signed(cfg: &ModelConfig) -> Result<SignedPrediction> {
    cfg.validate(true)?;
    if zero_is_optimal(cfg) {
        return Ok(zero_solution(cfg));
    }
    let (st, residual) = match solve_state(cfg) {
        Err(Error::Infeasible(_)) => {
            let fp = feasibility_breaking_point(cfg.alpha, cfg.beta_w, cfg.sigma, cfg.r_sc)?
                .expect("infeasible only below a breaking point");
            return Ok(SignedPrediction {
                theta_hat: ThetaSigned { theta1p: fp.theta1_feas, theta2p: fp.theta2_feas },
                e_nu: f64::INFINITY,
                e_w_over_sigma: f64::NAN,
                e_xi_per_sqrt_n: f64::NAN,
                residual: f64::NAN,
                feasible: false,
            });
        }
        other => other?,
    };
    let x = cfg.x_mag_sc;
    let n = st.n;
    let x2s = x * x / (cfg.sigma * cfg.sigma);
    let w2 = n * n * (cfg.alpha * st.om2 * x2s + st.d) - 2.0 * n * st.s + st.count;
    Ok(SignedPrediction {
        theta_hat: ThetaSigned { theta1p: st.theta[0], theta2p: st.theta[1] },
        e_nu: n,
        e_w_over_sigma: w2.max(0.0).sqrt() / st.q,
        e_xi_per_sqrt_n: st.c * st.q - n * st.r - x * st.om2,
        residual,
        feasible: true,
    })
}

/// The erfinv coordinate of `theta2` on the feasibility boundary at magnitude `x`,
/// with the zero-block quantile pinned at zero.
fn boundary_coordinate(alpha: f64, beta: f64, sigma: f64, x: f64) -> Result<f64> {
    let k = beta * FRAC_1_SQRT_2PI;
    let om2 = |e2: f64| beta * erfc(-e2) / 2.0;
    let d = |e2: f64| (1.0 - beta) / 2.0 + k * SQRT_2 * e2 * (-e2 * e2).exp() + beta - om2(e2);
    // D decreases in e2; keep alpha - D >= 0
    let lo = if d(-FAR) < alpha {
        -FAR
    } else {
        let f = |e2: f64| d(e2) - alpha;
        find_root(f, Bracket::new(f, -FAR, FAR)?, ROOT)?
    };
    let g = |e2: f64| SQRT_2 * e2 + x * (alpha - d(e2)).max(0.0).sqrt() / (sigma * sigma + om2(e2) * x * x).sqrt();
    find_root(g, Bracket::new(g, lo, FAR)?, ROOT)
}

fn boundary_excess(alpha: f64, beta: f64, sigma: f64, r: f64, x: f64) -> Result<(f64, f64)> {
    let e2 = boundary_coordinate(alpha, beta, sigma, x)?;
    let om2 = beta * erfc(-e2) / 2.0;
    let r_eff = r + x * beta * FRAC_1_SQRT_2PI * (-e2 * e2).exp();
    Ok((-(sigma * sigma + om2 * x * x) * SQRT_2 * e2 / x - r_eff, 1.0 - om2))
}

/// The magnitude below which the nonnegative program is infeasible, or `None` when it is
/// feasible for every magnitude.
pub fn feasibility_breaking_point(alpha: f64, beta_w_plus: f64, sigma: f64, r_sc: f64) -> Result<Option<FeasibilityPoint>> {
    if !(alpha > 0.0 && alpha < 1.0 && beta_w_plus > 0.0 && beta_w_plus < 1.0 && sigma > 0.0 && r_sc > 0.0) {
        return Err(Error::Config("feasibility needs alpha, beta_w in (0, 1) and sigma, r_sc > 0".into()));
    }
    if r_sc > sigma * alpha.sqrt() || alpha <= 0.5 {
        return Ok(None);
    }
    let excess = |x: f64| boundary_excess(alpha, beta_w_plus, sigma, r_sc, x).map(|v| v.0);
    if excess(X_MIN)? <= 0.0 {
        return Ok(None);
    }
    let mut hi = X_MAX_START;
    let mut doublings = 0;
    while excess(hi)? > 0.0 {
        if doublings == X_MAX_DOUBLINGS {
            return Ok(None);
        }
        hi *= 2.0;
        doublings += 1;
    }
    let f = |x: f64| excess(x).unwrap_or(f64::NAN);
    let x_break_sc = find_root(f, Bracket::new(f, X_MIN, hi)?, ROOT)?;
    let (_, theta2_feas) = boundary_excess(alpha, beta_w_plus, sigma, r_sc, x_break_sc)?;
    Ok(Some(FeasibilityPoint { x_break_sc, theta2_feas, theta1_feas: (1.0 + beta_w_plus) / 2.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_curves::design_from_rho;

    fn cfg(alpha: f64, rho: f64, x: f64) -> ModelConfig {
        ModelConfig::from_design(&design_from_rho(alpha, rho, 1.0, true).unwrap(), 1.0, x)
    }

    fn breaking(alpha: f64, rho: f64) -> Option<FeasibilityPoint> {
        let c = cfg(alpha, rho, 0.0);
        feasibility_breaking_point(c.alpha, c.beta_w, c.sigma, c.r_sc).unwrap()
    }

    #[test]
    fn trivial_scalar_functions() {
        let c = ModelConfig { alpha: 0.5, beta_w: 0.2, sigma: 1.0, x_mag_sc: 0.0, r_sc: 0.3 };
        let (s, d, r) = block_functions_signed(ThetaSigned { theta1p: 1.0, theta2p: 1.0 }, &c).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        // the whole zero block of -h sums to zero in the limit
        assert_eq!(s, 0.0);
        assert_eq!(r, 0.3);
        let (s, _, _) = block_functions_signed(ThetaSigned { theta1p: 0.6, theta2p: 1.0 }, &c).unwrap();
        assert!((s - 0.8 * FRAC_1_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn n_solves_its_quadratic() {
        let c = cfg(0.5, 2.0, 1.0);
        let theta = ThetaSigned { theta1p: 0.7, theta2p: 0.95 };
        let f = scalar_functions_signed(theta, &c).unwrap();
        let count = theta.theta1p + theta.theta2p - 1.0;
        let lhs = (f.a * f.n + f.b).powi(2);
        let rhs = c.alpha * f.n * f.n - f.d * f.n * f.n + 2.0 * f.s * f.n - count;
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn residual_small_at_x3() {
        let p = predict_signed(&cfg(0.5, 2.0, 3.0)).unwrap();
        assert!(p.feasible && p.residual <= 1e-8);
    }

    #[test]
    fn large_magnitude_recovers_rho() {
        for (alpha, rho) in [(0.5, 2.0), (0.5, 3.0), (0.7, 2.0), (0.7, 3.0)] {
            let p = predict_signed(&cfg(alpha, rho, 50.0)).unwrap();
            assert!((p.e_w_over_sigma / rho - 1.0).abs() < 0.02, "{alpha} {rho}: {}", p.e_w_over_sigma);
        }
    }

    #[test]
    fn theta_path_agrees_with_coordinate_path() {
        let c = cfg(0.7, 2.0, 2.0);
        let p = predict_signed(&c).unwrap();
        let f = scalar_functions_signed(p.theta_hat, &c).unwrap();
        assert!((f.n - p.e_nu).abs() < 1e-8 * p.e_nu.max(1.0));
    }

    #[test]
    fn breaking_points() {
        let b3 = breaking(0.7, 3.0).unwrap();
        assert!((b3.x_break_sc - 1.7).abs() <= 0.1, "{}", b3.x_break_sc);
        let b2 = breaking(0.7, 2.0).unwrap();
        assert!((b2.x_break_sc - 0.65).abs() <= 0.05, "{}", b2.x_break_sc);
        assert!(breaking(0.5, 2.0).is_none());
        assert!(breaking(0.5, 3.0).is_none());
    }

    #[test]
    fn breaking_point_pins_the_zero_block_quantile() {
        let c = cfg(0.7, 3.0, 0.0);
        let fp = breaking(0.7, 3.0).unwrap();
        assert_eq!(fp.theta1_feas, (1.0 + c.beta_w) / 2.0);
        let theta = ThetaSigned { theta1p: fp.theta1_feas, theta2p: fp.theta2_feas };
        assert!(signed_limits(theta, c.beta_w).unwrap().f_plus.abs() < 1e-15);
        let (xi, _) = boundary_excess(c.alpha, c.beta_w, c.sigma, c.r_sc, fp.x_break_sc).unwrap();
        assert!(xi.abs() <= 1e-8);
    }

    #[test]
    fn infeasible_and_feasible_examples() {
        let p = predict_signed(&cfg(0.7, 3.0, 1.5)).unwrap();
        assert!(!p.feasible);
        assert!(matches!(solve_theta_signed(&cfg(0.7, 3.0, 1.5)), Err(Error::Infeasible(_))));
        let p = predict_signed(&cfg(0.7, 2.0, 1.0)).unwrap();
        assert!(p.feasible && p.e_w_over_sigma.is_finite());
    }

    #[test]
    fn converges_just_above_the_breaking_point() {
        for rho in [2.0, 3.0] {
            let x = 1.05 * breaking(0.7, rho).unwrap().x_break_sc;
            let p = predict_signed(&cfg(0.7, rho, x)).unwrap();
            assert!(p.feasible && p.residual <= 1e-8);
        }
    }

    #[test]
    fn objective_decreases_in_radius() {
        let base = cfg(0.5, 2.0, 1.0);
        let xis: Vec<f64> = [0.05, 0.2, 0.6]
            .iter()
            .map(|f| predict_signed(&ModelConfig { r_sc: (f * 0.5f64).sqrt(), ..base }).unwrap().e_xi_per_sqrt_n)
            .collect();
        assert!(xis[0] > xis[1] && xis[1] > xis[2], "{xis:?}");
    }

    #[test]
    fn breaking_point_shrinks_with_radius() {
        let c = cfg(0.7, 3.0, 0.0);
        let top = c.sigma * c.alpha.sqrt();
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let r = 0.05 + (top - 0.05) * i as f64 / 10.0;
            let x = feasibility_breaking_point(c.alpha, c.beta_w, c.sigma, r)
                .unwrap()
                .map_or(0.0, |fp| fp.x_break_sc);
            assert!(x <= prev, "r={r}");
            prev = x;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn homogeneous_in_sigma_x_and_r(x in 0.3f64..5.0, ci in 0usize..3, alpha_idx in 0usize..2) {
                let scale = [0.5, 2.0, 10.0][ci];
                let alpha = [0.5, 0.7][alpha_idx];
                let base = cfg(alpha, 2.0, x);
                let scaled = ModelConfig {
                    sigma: scale * base.sigma,
                    x_mag_sc: scale * base.x_mag_sc,
                    r_sc: scale * base.r_sc,
                    ..base
                };
                let p = predict_signed(&base).unwrap();
                let q = predict_signed(&scaled).unwrap();
                prop_assert_eq!(p.feasible, q.feasible);
                if p.feasible {
                    prop_assert!((p.e_w_over_sigma - q.e_w_over_sigma).abs() < 1e-7);
                    prop_assert!((scale * p.e_xi_per_sqrt_n - q.e_xi_per_sqrt_n).abs() < 1e-7 * scale);
                    prop_assert!(p.e_nu >= 0.0);
                }
            }
        }
    }
}
