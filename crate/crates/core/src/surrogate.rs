//! Per-draw solutions of the random surrogate programs
//!
//! ```text
//! max_{nu >= 0, lambda}  sigma sqrt(‖g‖² nu² - ‖nu h̄ - 1 + lambda‖²) - x_mag sum_sparse lambda - nu r
//! ```
//!
//! with `lambda` in `[0, 1]` on the zero block and `[0, 2]` on the sparse block (general),
//! or `lambda >= 0` everywhere (signed).
//!
//! Writing `u = nu h̄ - 1 + lambda`, the inner maximization over `lambda` is a projection:
//! zero-block entries are `max(nu h̄ - 1, 0)` and sparse entries are `-tau` clipped to the
//! box, where `tau = (x_mag / sigma) sqrt(‖g‖² nu² - ‖u‖²)` is the unique root of a monotone
//! scalar equation. The outer objective is concave in `nu`, so its derivative (available
//! by the envelope theorem) is bisected. The bisection result fixes the breakpoints
//! `c1, c2, c3`, and on that partition `nu` has a closed form which is used to polish it.

use crate::error::{Error, Result};
use crate::instance_gen::SurrogateDraw;
use crate::numerics::{find_root, Bracket, SolverSettings};
use crate::predictor_general::minus_root;

const NU_CAP: f64 = 1e9;
const INNER: SolverSettings = SolverSettings { abs_tol: 0.0, rel_tol: 1e-15, max_iter: 300 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateStatus {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSolution {
    pub nu: f64,
    pub lambda: Vec<f64>,
    pub xi: f64,
    pub w_norm: f64,
    pub c1: usize,
    pub c2: usize,
    /// Not used by the signed program.
    pub c3: Option<usize>,
    pub status: SurrogateStatus,
    /// Largest projected-gradient entry of the objective at the returned point.
    pub kkt_residual: f64,
}

impl SurrogateSolution {
    fn unbounded(n: usize) -> Self {
        SurrogateSolution {
            nu: f64::INFINITY,
            lambda: vec![f64::NAN; n],
            xi: f64::INFINITY,
            w_norm: f64::NAN,
            c1: 0,
            c2: 0,
            c3: None,
            status: SurrogateStatus::Unbounded,
            kkt_residual: f64::NAN,
        }
    }
}

/// Outcome of the ray test for the signed program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCheck {
    pub status: SurrogateStatus,
    /// Growth rate of the objective along the recession direction; `-inf` when no ray
    /// stays inside the square-root domain.
    pub value: f64,
    /// `a² - ‖g‖² + d` on the ray's breakpoints; nonnegative whenever the program is unbounded.
    pub curvature: f64,
}

/// Breakpoints of the sorted vector. Zero block: `[0, c1)` has `u = 0`, the rest
/// `u = nu h̄ - 1`. Sparse block: `[nz, c2)` at `lambda = 0`, `[n - c3, n)` at the upper
/// bound, the middle at `u = -tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Partition {
    c1: usize,
    c2: usize,
    c3: usize,
}

struct Problem<'a> {
    hb: &'a [f64],
    nz: usize,
    g2: f64,
    sigma: f64,
    x: f64,
    r: f64,
    ub: f64,
}

impl<'a> Problem<'a> {
    fn new(draw: &'a SurrogateDraw, signed: bool, sigma: f64, x_mag: f64, r: f64) -> Result<Self> {
        if !(sigma > 0.0 && x_mag >= 0.0 && r > 0.0) || !(sigma.is_finite() && x_mag.is_finite() && r.is_finite()) {
            return Err(Error::Argument("surrogate needs sigma > 0, x_mag >= 0 and r > 0".into()));
        }
        let hb = draw.sorted(signed);
        Ok(Problem {
            hb,
            nz: hb.len() - draw.k,
            g2: draw.g.iter().map(|v| v * v).sum(),
            sigma,
            x: x_mag,
            r,
            ub: if signed { f64::INFINITY } else { 2.0 },
        })
    }

    #[inline]
    fn u(&self, i: usize, nu: f64, tau: f64) -> f64 {
        let base = nu * self.hb[i] - 1.0;
        if i < self.nz {
            base.max(0.0)
        } else {
            (-tau).max(base).min(base + self.ub)
        }
    }

    /// `‖u‖²` and `u·h̄`.
    fn moments(&self, nu: f64, tau: f64) -> (f64, f64) {
        let mut sq = 0.0;
        let mut dot = 0.0;
        for i in 0..self.hb.len() {
            let u = self.u(i, nu, tau);
            sq += u * u;
            dot += u * self.hb[i];
        }
        (sq, dot)
    }

    /// Root of `tau = (x / sigma) sqrt(‖g‖² nu² - ‖u(tau)‖²)`, or `None` when `nu` is
    /// outside the square-root domain even at `tau = 0`.
    fn tau(&self, nu: f64) -> Option<f64> {
        let cap = self.g2 * nu * nu;
        if cap - self.moments(nu, 0.0).0 < 0.0 {
            return None;
        }
        if self.x == 0.0 {
            return Some(0.0);
        }
        let k = self.x / self.sigma;
        let phi = |t: f64| t - k * (cap - self.moments(nu, t).0).max(0.0).sqrt();
        let hi = k * cap.sqrt();
        let f_lo = phi(0.0);
        if f_lo >= 0.0 {
            return Some(0.0);
        }
        let bracket = Bracket { lo: 0.0, hi, f_lo, f_hi: phi(hi) };
        find_root(phi, bracket, INNER).ok()
    }

    /// Derivative of the concave outer objective; `±inf` outside the domain, pointing
    /// back towards it.
    fn slope(&self, nu: f64) -> f64 {
        match self.tau(nu) {
            None => {
                let (sq, dot) = self.moments(nu, 0.0);
                if self.g2.sqrt() - dot / sq.sqrt() > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
            Some(tau) => {
                let (sq, dot) = self.moments(nu, tau);
                let q = self.g2 * nu * nu - sq;
                if q <= 0.0 {
                    return f64::INFINITY;
                }
                self.sigma * (self.g2 * nu - dot) / q.sqrt() - self.r
            }
        }
    }

    fn partition(&self, nu: f64, tau: f64) -> Partition {
        let n = self.hb.len();
        let c1 = (0..self.nz).filter(|&i| nu * self.hb[i] - 1.0 <= 0.0).count();
        let c2 = self.nz + (self.nz..n).filter(|&i| nu * self.hb[i] - 1.0 > -tau).count();
        let c3 = (self.nz..n).filter(|&i| nu * self.hb[i] - 1.0 + self.ub < -tau).count();
        Partition { c1, c2, c3 }
    }

    /// Coefficients of the affine part `P(nu) = d nu² - 2 s nu + K` and the tau-block data.
    fn partition_sums(&self, p: Partition) -> (f64, f64, f64, f64, f64) {
        let n = self.hb.len();
        let (mut d, mut s, mut count) = (0.0, 0.0, 0.0);
        let mut add = |h: f64, offset: f64| {
            d += h * h;
            s -= offset * h;
            count += offset * offset;
        };
        for i in p.c1..self.nz {
            add(self.hb[i], -1.0);
        }
        for i in self.nz..p.c2 {
            add(self.hb[i], -1.0);
        }
        for i in n - p.c3..n {
            add(self.hb[i], self.ub - 1.0);
        }
        let mid = (n - p.c3).saturating_sub(p.c2) as f64;
        let mid_sum: f64 = self.hb[p.c2..n - p.c3].iter().sum();
        (d, s, count, mid, mid_sum)
    }

    /// Optimal `nu` over the given partition, and the objective and error norm there.
    fn closed_form(&self, p: Partition) -> Option<(f64, f64, f64)> {
        let (d, s, count, mid, mid_sum) = self.partition_sums(p);
        let c = (self.sigma * self.sigma + mid * self.x * self.x).sqrt();
        let r_dep = self.r - self.x * mid_sum;
        if !(r_dep > 0.0) {
            return None;
        }
        let a = c * (self.g2 - d) / r_dep;
        let b = c * s / r_dep;
        let nu = minus_root(a * b - s, a * a - self.g2 + d, b * b + count)?;
        let (xi, w) = self.closed_form_at(p, nu)?;
        Some((nu, xi, w))
    }

    fn closed_form_at(&self, p: Partition, nu: f64) -> Option<(f64, f64)> {
        let (d, s, count, mid, mid_sum) = self.partition_sums(p);
        let c = (self.sigma * self.sigma + mid * self.x * self.x).sqrt();
        let affine = nu * nu * d - 2.0 * nu * s + count;
        let w2 = self.g2 * nu * nu - affine;
        if !(w2 > 0.0) {
            return None;
        }
        let big_w = w2.sqrt();
        let tau = self.x * big_w / c;
        let xi = c * big_w - nu * (self.r - self.x * mid_sum) - self.x * (2.0 * p.c3 as f64 + mid);
        let w = c * (affine + mid * tau * tau).sqrt() / big_w;
        Some((xi, w))
    }

    fn assemble(&self, nu: f64, signed: bool) -> Result<SurrogateSolution> {
        let tau = self.tau(nu).ok_or_else(|| Error::NoSolution("optimal nu outside the domain".into()))?;
        let n = self.hb.len();
        let u: Vec<f64> = (0..n).map(|i| self.u(i, nu, tau)).collect();
        let sq: f64 = u.iter().map(|v| v * v).sum();
        let q = self.g2 * nu * nu - sq;
        if !(q > 0.0) {
            return Err(Error::NoSolution("square-root argument vanished at the optimum".into()));
        }
        let root = q.sqrt();
        let mut lambda = Vec::with_capacity(n);
        let mut kkt = 0.0f64;
        for i in 0..n {
            let upper = if i < self.nz { if signed { f64::INFINITY } else { 1.0 } } else { self.ub };
            let base = nu * self.hb[i] - 1.0;
            let l = if i < self.nz { -base } else { -tau - base }.clamp(0.0, upper);
            let grad = -self.sigma * u[i] / root - if i < self.nz { 0.0 } else { self.x };
            let violation = if l <= 0.0 {
                grad.max(0.0)
            } else if l >= upper {
                (-grad).max(0.0)
            } else {
                grad.abs()
            };
            kkt = kkt.max(violation);
            lambda.push(l);
        }
        let dot: f64 = u.iter().zip(self.hb).map(|(a, b)| a * b).sum();
        let dnu = self.sigma * (self.g2 * nu - dot) / root - self.r;
        kkt = kkt.max(dnu.abs() / (self.sigma * self.g2.sqrt() + self.r));
        let sparse_sum: f64 = lambda[self.nz..].iter().sum();
        let p = self.partition(nu, tau);
        Ok(SurrogateSolution {
            nu,
            xi: self.sigma * root - self.x * sparse_sum - nu * self.r,
            w_norm: self.sigma * sq.sqrt() / root,
            lambda,
            c1: p.c1,
            c2: p.c2,
            c3: (!signed).then_some(p.c3),
            status: SurrogateStatus::Bounded,
            kkt_residual: kkt,
        })
    }

    fn solve(&self, signed: bool) -> Result<SurrogateSolution> {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.slope(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > NU_CAP {
                return Ok(SurrogateSolution::unbounded(self.hb.len()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let nu_b = 0.5 * (lo + hi);
        let mut best = self.assemble(nu_b, signed)?;
        // polish on the identified partition when it reproduces itself
        if let Some(tau) = self.tau(nu_b) {
            let p = self.partition(nu_b, tau);
            if let Some((nu_c, _, _)) = self.closed_form(p) {
                let same = self.tau(nu_c).map(|t| self.partition(nu_c, t)) == Some(p);
                if same && (nu_c - nu_b).abs() <= 1e-6 * (1.0 + nu_b) {
                    if let Ok(sol) = self.assemble(nu_c, signed) {
                        if sol.xi >= best.xi - 1e-12 * (1.0 + best.xi.abs()) {
                            best = sol;
                        }
                    }
                }
            }
        }
        Ok(best)
    }
}

pub fn solve_surrogate_general(draw: &SurrogateDraw, sigma: f64, x_mag: f64, r: f64) -> Result<SurrogateSolution> {
    Problem::new(draw, false, sigma, x_mag, r)?.solve(false)
}

/// Returns an `Unbounded` solution, without error, when the ray test fires.
pub fn solve_surrogate_signed(draw: &SurrogateDraw, sigma: f64, x_mag: f64, r: f64) -> Result<SurrogateSolution> {
    let check = detect_unbounded(draw, sigma, x_mag, r);
    if check.status == SurrogateStatus::Unbounded {
        return Ok(SurrogateSolution::unbounded(draw.n()));
    }
    Problem::new(draw, true, sigma, x_mag, r)?.solve(true)
}

/// Objective growth along `nu -> inf` for the signed program. Along the ray the inner
/// problem becomes `min ‖v‖` with `v = max(h̄, 0)` on the zero block and `max(h̄, -t)`
/// on the sparse block, `t = (x / sigma) sqrt(‖g‖² - ‖v‖²)`.
pub fn detect_unbounded(draw: &SurrogateDraw, sigma: f64, x_mag: f64, r: f64) -> RayCheck {
    let hb = &draw.h_bar_plus;
    let nz = hb.len() - draw.k;
    let g2: f64 = draw.g.iter().map(|v| v * v).sum();
    let v = |i: usize, t: f64| if i < nz { hb[i].max(0.0) } else { hb[i].max(-t) };
    let norm2 = |t: f64| (0..hb.len()).map(|i| v(i, t).powi(2)).sum::<f64>();
    let bounded = RayCheck { status: SurrogateStatus::Bounded, value: f64::NEG_INFINITY, curvature: f64::NAN };
    if norm2(0.0) > g2 || !(sigma > 0.0) {
        return bounded;
    }
    let k = x_mag / sigma;
    let t = if x_mag > 0.0 {
        let phi = |t: f64| t - k * (g2 - norm2(t)).max(0.0).sqrt();
        let hi = k * g2.sqrt();
        let bracket = Bracket { lo: 0.0, hi, f_lo: phi(0.0), f_hi: phi(hi) };
        if bracket.f_lo >= 0.0 {
            0.0
        } else {
            match find_root(phi, bracket, INNER) {
                Ok(t) => t,
                Err(_) => return bounded,
            }
        }
    } else {
        0.0
    };
    let mu_sum: f64 = (nz..hb.len()).map(|i| v(i, t) - hb[i]).sum();
    let value = sigma * (g2 - norm2(t)).max(0.0).sqrt() - x_mag * mu_sum - r;

    // Remark-style curvature on the ray's partition
    let (mut d, mut mid, mut mid_sum) = (0.0, 0.0, 0.0);
    for (i, &h) in hb.iter().enumerate() {
        if i < nz {
            if h > 0.0 {
                d += h * h;
            }
        } else if h >= -t {
            d += h * h;
        } else {
            mid += 1.0;
            mid_sum += h;
        }
    }
    let c = (sigma * sigma + mid * x_mag * x_mag).sqrt();
    let a = c * (g2 - d) / (r - x_mag * mid_sum);
    let curvature = a * a - g2 + d;
    let status = if value > 0.0 { SurrogateStatus::Unbounded } else { SurrogateStatus::Bounded };
    RayCheck { status, value, curvature }
}

/// Objective and error norm recomputed from the breakpoints and `nu` alone.
pub fn closed_form_objective(
    draw: &SurrogateDraw,
    signed: bool,
    sigma: f64,
    x_mag: f64,
    r: f64,
    sol: &SurrogateSolution,
) -> Result<(f64, f64)> {
    let prob = Problem::new(draw, signed, sigma, x_mag, r)?;
    let p = Partition { c1: sol.c1, c2: sol.c2, c3: sol.c3.unwrap_or(0) };
    prob.closed_form_at(p, sol.nu).ok_or_else(|| Error::NoSolution("closed form outside its domain".into()))
}

/// Objective evaluated directly at `(nu, lambda)`; `-inf` outside the square-root domain.
pub fn objective(draw: &SurrogateDraw, signed: bool, sigma: f64, x_mag: f64, r: f64, nu: f64, lambda: &[f64]) -> f64 {
    let hb = draw.sorted(signed);
    let nz = hb.len() - draw.k;
    let g2: f64 = draw.g.iter().map(|v| v * v).sum();
    let sq: f64 = hb.iter().zip(lambda).map(|(h, l)| (nu * h - 1.0 + l).powi(2)).sum();
    let q = g2 * nu * nu - sq;
    if q < 0.0 {
        return f64::NEG_INFINITY;
    }
    sigma * q.sqrt() - x_mag * lambda[nz..].iter().sum::<f64>() - nu * r
}
