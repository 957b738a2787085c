//! Weak-threshold characterizations of noiseless l1 recovery and the rho design map.

use crate::error::{Error, Result};
use crate::numerics::{erfinv, find_root, Bracket, SolverSettings};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_2PI: f64 = crate::gaussian_order_stats::FRAC_1_SQRT_2PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub alpha_w: f64,
    pub beta_w: f64,
}

/// Parameters derived from a target worst-case error ratio `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoDesign {
    pub alpha: f64,
    pub rho: f64,
    pub signed: bool,
    pub alpha_w: f64,
    pub beta_w: f64,
    /// Radius per sqrt(n), already multiplied by sigma.
    pub r_opt_sc: f64,
}

/// Residual of the characterization at `(alpha_w, beta_w)`; zero on the curve,
/// positive below it.
pub fn characterization_residual(alpha_w: f64, beta_w: f64, signed: bool) -> Result<f64> {
    if signed {
        let t = erfinv(2.0 * (1.0 - alpha_w) / (1.0 - beta_w) - 1.0)?;
        Ok((1.0 - beta_w) * FRAC_1_SQRT_2PI * (-t * t).exp() / alpha_w - SQRT_2 * t)
    } else {
        let t = erfinv((1.0 - alpha_w) / (1.0 - beta_w))?;
        Ok((1.0 - beta_w) * 2.0 * FRAC_1_SQRT_2PI * (-t * t).exp() / alpha_w - SQRT_2 * t)
    }
}

/// The sparsity fraction on the characterization for a given undersampling `alpha_w`.
pub fn fundamental_beta(alpha_w: f64, signed: bool) -> Result<f64> {
    if !(alpha_w > 0.0 && alpha_w < 1.0) {
        return Err(Error::Domain { what: "alpha_w", value: alpha_w });
    }
    let f = |b: f64| characterization_residual(alpha_w, b, signed).unwrap_or(f64::NAN);
    let settings = SolverSettings { abs_tol: 1e-14, rel_tol: 1e-15, max_iter: 400 };
    let bracket = Bracket::new(f, 1e-9, alpha_w - 1e-9)?;
    find_root(f, bracket, settings)
}

pub fn design_from_rho(alpha: f64, rho: f64, sigma: f64, signed: bool) -> Result<RhoDesign> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain { what: "alpha", value: alpha });
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain { what: "rho", value: rho });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain { what: "sigma", value: sigma });
    }
    let rho2 = rho * rho;
    let alpha_w = rho2 * alpha / (1.0 + rho2);
    Ok(RhoDesign {
        alpha,
        rho,
        signed,
        alpha_w,
        beta_w: fundamental_beta(alpha_w, signed)?,
        r_opt_sc: sigma * (alpha / (1.0 + rho2)).sqrt(),
    })
}

/// The characterization sampled at `points` evenly spaced interior values of `alpha_w`.
pub fn tabulate(signed: bool, points: usize) -> Result<Vec<CurvePoint>> {
    if points == 0 {
        return Err(Error::Argument("curve needs at least one point".into()));
    }
    (1..=points)
        .map(|i| {
            let alpha_w = i as f64 / (points + 1) as f64;
            Ok(CurvePoint { alpha_w, beta_w: fundamental_beta(alpha_w, signed)? })
        })
        .collect()
}
