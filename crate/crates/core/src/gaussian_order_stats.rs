//! Large-n limits of partial norms and partial sums of sorted standard normal vectors.
//!
//! The general sort places the magnitudes of the first `n - k` entries in increasing order
//! and the negated last `k` entries in decreasing order. The signed sort replaces the
//! magnitudes with negated values. Breakpoint fractions `theta` mark where each block is cut.

use crate::error::{Error, Result};
use crate::numerics::erfinv;

pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SLACK: f64 = 1e-12;
const EDGE: f64 = 1e-15;

/// Breakpoint fractions for the general (sign-unknown) problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaGeneral {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

/// Breakpoint fractions for the signed problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSigned {
    pub theta1p: f64,
    pub theta2p: f64,
}

impl ThetaGeneral {
    pub fn validate(&self, beta_w: f64) -> Result<()> {
        check_beta(beta_w)?;
        in_range("theta1", self.theta1, beta_w, 1.0)?;
        in_range("theta2", self.theta2, 1.0 - beta_w, 1.0)?;
        in_range("theta3", self.theta3, 0.0, beta_w)?;
        let count = self.theta1 + self.theta2 + self.theta3 - 1.0;
        if count < -SLACK {
            return Err(Error::Domain { what: "theta1 + theta2 + theta3 - 1", value: count });
        }
        Ok(())
    }
}

impl ThetaSigned {
    pub fn validate(&self, beta_w_plus: f64) -> Result<()> {
        check_beta(beta_w_plus)?;
        in_range("theta1p", self.theta1p, beta_w_plus, 1.0)?;
        in_range("theta2p", self.theta2p, 1.0 - beta_w_plus, 1.0)?;
        let count = self.theta1p + self.theta2p - 1.0;
        if count < -SLACK {
            return Err(Error::Domain { what: "theta1p + theta2p - 1", value: count });
        }
        Ok(())
    }
}

fn check_beta(beta_w: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta_w) {
        return Err(Error::Domain { what: "beta_w", value: beta_w });
    }
    Ok(())
}

fn in_range(what: &'static str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if !(v >= lo - SLACK && v <= hi + SLACK) {
        return Err(Error::Domain { what, value: v });
    }
    Ok(())
}

/// `t = erfinv(p)` together with `e^{-t^2}`. At `p = ±1` the exponential is exactly zero
/// and `t` is infinite; callers only ever use `t` multiplied by the exponential.
#[derive(Debug, Clone, Copy)]
struct Tail {
    t: f64,
    e: f64,
}

impl Tail {
    fn at(p: f64) -> Result<Tail> {
        let p = p.clamp(-1.0, 1.0);
        if p >= 1.0 - EDGE {
            return Ok(Tail { t: f64::INFINITY, e: 0.0 });
        }
        if p <= -1.0 + EDGE {
            return Ok(Tail { t: f64::NEG_INFINITY, e: 0.0 });
        }
        let t = erfinv(p)?;
        Ok(Tail { t, e: (-t * t).exp() })
    }

    /// `sqrt(2) t e^{-t^2}`, zero in both limits.
    fn moment(&self) -> f64 {
        if self.e == 0.0 {
            0.0
        } else {
            SQRT_2 * self.t * self.e
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Limit of `‖h̄_{c1+1:n-k}‖² / n` for the general sort, with `c1 = (1 - theta1) n`.
pub fn limit_normsq_zero_block(theta1: f64, beta_w: f64) -> Result<f64> {
    check_beta(beta_w)?;
    in_range("theta1", theta1, beta_w, 1.0)?;
    let tail = Tail::at(ratio(1.0 - theta1, 1.0 - beta_w))?;
    Ok(((1.0 - beta_w) * FRAC_1_SQRT_2PI * 2.0 * tail.moment() + theta1 - beta_w).max(0.0))
}

/// Limit of `‖h̄_{n-k+1:c2}‖² / n`, with `c2 = theta2 n`.
pub fn limit_normsq_upper_block(theta2: f64, beta_w: f64) -> Result<f64> {
    check_beta(beta_w)?;
    in_range("theta2", theta2, 1.0 - beta_w, 1.0)?;
    let tail = Tail::at(ratio(2.0 * (1.0 - theta2), beta_w) - 1.0)?;
    Ok((beta_w * FRAC_1_SQRT_2PI * tail.moment() + theta2 - 1.0 + beta_w).max(0.0))
}

/// Limit of `‖h̄_{n-c3+1:n}‖² / n`, with `c3 = theta3 n`.
pub fn limit_normsq_lower_block(theta3: f64, beta_w: f64) -> Result<f64> {
    check_beta(beta_w)?;
    in_range("theta3", theta3, 0.0, beta_w)?;
    let tail = Tail::at(ratio(2.0 * (beta_w - theta3), beta_w) - 1.0)?;
    Ok((beta_w * FRAC_1_SQRT_2PI * tail.moment() + theta3).max(0.0))
}

/// Limits of the partial sums of `h̄` over the four blocks, divided by `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSums {
    pub s_zero: f64,
    pub s_upper: f64,
    pub s_lower: f64,
    pub s_middle: f64,
}

pub fn limit_sums(theta: ThetaGeneral, beta_w: f64) -> Result<BlockSums> {
    theta.validate(beta_w)?;
    let e1 = Tail::at(ratio(1.0 - theta.theta1, 1.0 - beta_w))?;
    let e2 = Tail::at(ratio(2.0 * (1.0 - theta.theta2), beta_w) - 1.0)?;
    let e3 = Tail::at(ratio(2.0 * (beta_w - theta.theta3), beta_w) - 1.0)?;
    let s_zero = (1.0 - beta_w) * 2.0 * FRAC_1_SQRT_2PI * e1.e;
    let s_upper = beta_w * FRAC_1_SQRT_2PI * e2.e;
    let s_lower = -beta_w * FRAC_1_SQRT_2PI * e3.e;
    Ok(BlockSums { s_zero, s_upper, s_lower, s_middle: -s_lower - s_upper })
}

/// Scaled breakpoint quantiles `F`, `G`, `H`. Boundary values give infinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub f: f64,
    pub g: f64,
    pub h: f64,
}

pub fn quantiles(theta: ThetaGeneral, beta_w: f64) -> Result<Quantiles> {
    theta.validate(beta_w)?;
    let f = SQRT_2 * Tail::at(ratio(1.0 - theta.theta1, 1.0 - beta_w))?.t;
    let g = SQRT_2 * Tail::at(ratio(2.0 * (1.0 - theta.theta2), beta_w) - 1.0)?.t;
    let h = SQRT_2 * Tail::at(ratio(2.0 * (beta_w - theta.theta3), beta_w) - 1.0)?.t;
    Ok(Quantiles { f, g, h })
}

/// Signed-sort limits: block norms, block sums and the two quantiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLimits {
    pub normsq_zero: f64,
    pub normsq_upper: f64,
    pub s_zero: f64,
    pub s_upper: f64,
    pub s_tail: f64,
    pub f_plus: f64,
    pub g_plus: f64,
}

pub fn signed_limits(theta: ThetaSigned, beta_w_plus: f64) -> Result<SignedLimits> {
    theta.validate(beta_w_plus)?;
    let b = beta_w_plus;
    let e1 = Tail::at(ratio(2.0 * (1.0 - theta.theta1p), 1.0 - b) - 1.0)?;
    let e2 = Tail::at(ratio(2.0 * (1.0 - theta.theta2p), b) - 1.0)?;
    Ok(SignedLimits {
        normsq_zero: ((1.0 - b) * FRAC_1_SQRT_2PI * e1.moment() + theta.theta1p - b).max(0.0),
        normsq_upper: (b * FRAC_1_SQRT_2PI * e2.moment() + theta.theta2p - 1.0 + b).max(0.0),
        s_zero: (1.0 - b) * FRAC_1_SQRT_2PI * e1.e,
        s_upper: b * FRAC_1_SQRT_2PI * e2.e,
        s_tail: -b * FRAC_1_SQRT_2PI * e2.e,
        f_plus: SQRT_2 * e1.t,
        g_plus: SQRT_2 * e2.t,
    })
}
