//! `min ‖x‖₁` subject to `‖y - A x‖₂ <= r`, optionally with `x >= 0`.
//!
//! The solver works on `B = A / sqrt(n)` and `z = sqrt(n) x` so that `BᵀB` has unit-order
//! spectrum. ADMM splits `z = q` (ℓ1 prox) and `B z = s` (ball projection), with the
//! `z` step solved through a Cholesky factor of `I + BBᵀ`. Every so often the current
//! support is handed to an active-set polish that solves the KKT system exactly on that
//! support; a polished point comes with a dual certificate, so the gap is reported
//! directly rather than estimated.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::instance_gen::Instance;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 50_000;
const RELAX: f64 = 1.6;
const POLISH_EVERY: usize = 20;
const PHASE1_MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocpSolution {
    pub x_hat: DVector<f64>,
    /// `‖x_hat‖₁ - ‖x̃‖₁`.
    pub f_obj: f64,
    /// `‖x_hat - x̃‖₂`.
    pub w_norm: f64,
    pub status: SocpStatus,
    /// Certified duality gap in the units of `‖x‖₁`.
    pub gap: f64,
}

struct Scaled {
    b: DMatrix<f64>,
    y: DVector<f64>,
    r: f64,
    root_n: f64,
    signed: bool,
}

impl Scaled {
    fn new(inst: &Instance, r: f64, signed: bool) -> Self {
        let root_n = (inst.n as f64).sqrt();
        Scaled { b: &inst.a / root_n, y: inst.y.clone(), r, root_n, signed }
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.b * z
    }

    /// Lower bound on `min ‖z‖₁` from any multiplier `mu`, after rescaling it into the
    /// dual feasible set.
    fn dual_value(&self, mu: &DVector<f64>) -> f64 {
        let bt = self.b.tr_mul(mu);
        let worst = if self.signed { bt.max() } else { bt.amax() };
        let scale = worst.max(1.0);
        (mu.dot(&self.y) - self.r * mu.norm()) / scale
    }

    fn l1(&self, z: &DVector<f64>) -> f64 {
        z.iter().map(|v| v.abs()).sum()
    }

    fn finish(&self, inst: &Instance, z: &DVector<f64>, dual: f64) -> SocpSolution {
        let x_hat = z / self.root_n;
        let l1 = self.l1(z) / self.root_n;
        SocpSolution {
            f_obj: l1 - inst.x_tilde_l1(),
            w_norm: (&x_hat - &inst.x_tilde).norm(),
            gap: (l1 - dual / self.root_n).max(0.0),
            x_hat,
            status: SocpStatus::Optimal,
        }
    }

    fn infeasible(&self, z: &DVector<f64>) -> SocpSolution {
        SocpSolution {
            x_hat: z / self.root_n,
            f_obj: f64::NAN,
            w_norm: f64::NAN,
            status: SocpStatus::Infeasible,
            gap: f64::NAN,
        }
    }

    fn feasible(&self, z: &DVector<f64>) -> bool {
        self.residual(z).norm() <= self.r + 1e-6 * (1.0 + self.r)
    }

    /// Factor of the Gram matrix of the columns in `support`, and those columns.
    fn least_squares(&self, support: &[usize]) -> Option<(Cholesky<f64, Dyn>, DMatrix<f64>)> {
        if support.is_empty() || support.len() > self.b.nrows() {
            return None;
        }
        let bs = self.b.select_columns(support);
        let chol = Cholesky::new(bs.tr_mul(&bs))?;
        Some((chol, bs))
    }

    /// Exact minimizer of `‖z‖₁` restricted to a support and sign pattern, repaired by
    /// adding the worst dual violator or dropping sign flips until the KKT conditions
    /// hold. Returns the point and its multiplier.
    fn polish(&self, mut support: Vec<usize>, mut signs: Vec<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.b.ncols();
        for _ in 0..50 {
            let (chol, bs) = self.least_squares(&support)?;
            let x_ls = chol.solve(&bs.tr_mul(&self.y));
            let v = chol.solve(&DVector::from_column_slice(&signs));
            let res_ls = &self.y - &bs * &x_ls;
            let av = &bs * &v;
            let slack = self.r * self.r - res_ls.norm_squared();
            if !(slack > 0.0) || av.norm() == 0.0 {
                return None;
            }
            let t = slack.sqrt() / av.norm();
            let xs = &x_ls - &v * t;
            let flipped: Vec<usize> = (0..support.len()).filter(|&i| !(xs[i] * signs[i] > 0.0)).collect();
            if !flipped.is_empty() {
                for &i in flipped.iter().rev() {
                    support.remove(i);
                    signs.remove(i);
                }
                continue;
            }
            let res = &res_ls + &av * t;
            let corr = self.b.tr_mul(&res) / t;
            let mut in_support = vec![false; n];
            support.iter().for_each(|&j| in_support[j] = true);
            let worst = (0..n)
                .filter(|&j| !in_support[j])
                .map(|j| (j, if self.signed { corr[j] } else { corr[j].abs() }))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((j, c)) = worst {
                if c > 1.0 + 1e-9 {
                    support.push(j);
                    signs.push(corr[j].signum());
                    continue;
                }
            }
            let mut z = DVector::zeros(n);
            for (i, &j) in support.iter().enumerate() {
                z[j] = xs[i];
            }
            return Some((z, res / t));
        }
        None
    }

    /// Nonnegative least squares by restarted FISTA with periodic exact polishing of
    /// the support. `Ok(z)` with `‖y - B z‖ <= r` when such a point exists.
    fn phase_one(&self) -> std::result::Result<DVector<f64>, DVector<f64>> {
        let n = self.b.ncols();
        let lip = 1.05 * spectral_norm_sq(&self.b);
        let stat_tol = 1e-8 * (1.0 + self.b.tr_mul(&self.y).amax());
        let mut z = DVector::zeros(n);
        let mut w = z.clone();
        let mut t = 1.0f64;
        for it in 0..PHASE1_MAX_ITER {
            let grad = self.b.tr_mul(&(&self.b * &w - &self.y));
            let z_new = (&w - grad / lip).map(|v| v.max(0.0));
            let res = self.residual(&z_new);
            if res.norm() <= self.r {
                return Ok(z_new);
            }
            let g = -self.b.tr_mul(&res);
            let stationarity = z_new.iter().zip(g.iter()).map(|(&zi, &gi)| if zi > 0.0 { gi.abs() } else { (-gi).max(0.0) }).fold(0.0, f64::max);
            if stationarity <= stat_tol {
                return if res.norm() > self.r * (1.0 + 1e-6) { Err(z_new) } else { Ok(z_new) };
            }
            if it % 50 == 49 {
                let support: Vec<usize> = (0..n).filter(|&j| z_new[j] > 0.0).collect();
                if let Some((chol, bs)) = self.least_squares(&support) {
                    let xs = chol.solve(&bs.tr_mul(&self.y));
                    if xs.iter().all(|&v| v > 0.0) {
                        let mut zp = DVector::zeros(n);
                        support.iter().enumerate().for_each(|(i, &j)| zp[j] = xs[i]);
                        let rp = self.residual(&zp);
                        if rp.norm() <= self.r {
                            return Ok(zp);
                        }
                        let gp = self.b.tr_mul(&rp);
                        if gp.max() <= 1e-12 * (1.0 + gp.amax()) && rp.norm() > self.r * (1.0 + 1e-6) {
                            return Err(zp);
                        }
                    }
                }
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let step = &z_new - &z;
            if (&w - &z_new).dot(&step) > 0.0 {
                t = 1.0;
                w = z_new.clone();
            } else {
                w = &z_new + step * ((t - 1.0) / t_next);
                t = t_next;
            }
            z = z_new;
        }
        Ok(z)
    }

    fn solve(&self, inst: &Instance, tol: f64) -> Result<SocpSolution> {
        let (m, n) = self.b.shape();
        let target = |obj: f64| tol * (1.0 + obj / self.root_n);
        let gram = DMatrix::identity(m, m) + &self.b * self.b.transpose();
        let chol = Cholesky::new(gram).ok_or_else(|| Error::NoSolution("I + BBᵀ not positive definite".into()))?;

        let mut rho = 1.0;
        let mut z = DVector::zeros(n);
        let mut q = DVector::<f64>::zeros(n);
        let mut s = self.y.clone();
        let mut u1 = DVector::<f64>::zeros(n);
        let mut u2 = DVector::<f64>::zeros(m);
        let mut last_support: Vec<usize> = Vec::new();
        let mut stable = 0usize;
        let mut best_gap = f64::INFINITY;

        for it in 0..MAX_ITER {
            let rhs = (&q - &u1) + self.b.tr_mul(&(&s - &u2));
            let w = chol.solve(&(&self.b * &rhs));
            z = &rhs - self.b.tr_mul(&w);
            let bz = w;
            let zh = &z * RELAX + &q * (1.0 - RELAX);
            let bzh = &bz * RELAX + &s * (1.0 - RELAX);

            let q_old = q.clone();
            let s_old = s.clone();
            let kappa = 1.0 / rho;
            q = (&zh + &u1).map(|v| {
                if self.signed {
                    (v - kappa).max(0.0)
                } else {
                    v.signum() * (v.abs() - kappa).max(0.0)
                }
            });
            let mut sv = &bzh + &u2 - &self.y;
            let norm = sv.norm();
            if norm > self.r {
                sv *= self.r / norm;
            }
            s = &self.y + sv;
            u1 += &zh - &q;
            u2 += &bzh - &s;

            let support: Vec<usize> = (0..n).filter(|&j| q[j] != 0.0).collect();
            if support == last_support {
                stable += 1;
            } else {
                stable = 0;
                last_support = support;
            }

            if it % POLISH_EVERY == POLISH_EVERY - 1 {
                let prim = ((&z - &q).norm_squared() + (&bz - &s).norm_squared()).sqrt();
                let dual = rho * (&q - &q_old + self.b.tr_mul(&(&s - &s_old))).norm();
                let mu = &u2 * (-rho);
                let obj = self.l1(&q);
                let gap = obj - self.dual_value(&mu);
                best_gap = best_gap.min(gap / self.root_n);
                if gap <= target(obj) * self.root_n && self.feasible(&q) {
                    return Ok(self.finish(inst, &q, self.dual_value(&mu)));
                }
                if stable >= POLISH_EVERY / 2 && !last_support.is_empty() {
                    let signs: Vec<f64> = last_support.iter().map(|&j| q[j].signum()).collect();
                    if let Some((zp, mu)) = self.polish(last_support.clone(), signs) {
                        let obj = self.l1(&zp);
                        let dual = self.dual_value(&mu);
                        if obj - dual <= target(obj) * self.root_n && self.feasible(&zp) {
                            return Ok(self.finish(inst, &zp, dual));
                        }
                    }
                }
                if prim > 10.0 * dual {
                    rho *= 2.0;
                    u1 /= 2.0;
                    u2 /= 2.0;
                } else if dual > 10.0 * prim {
                    rho /= 2.0;
                    u1 *= 2.0;
                    u2 *= 2.0;
                }
            }
        }
        Err(Error::Convergence { what: "socp admm", residual: best_gap, best: (z / self.root_n).as_slice().to_vec() })
    }
}

/// Largest eigenvalue of `BᵀB` by power iteration.
fn spectral_norm_sq(b: &DMatrix<f64>) -> f64 {
    let n = b.ncols();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    v.normalize_mut();
    let mut est = 0.0;
    for _ in 0..100 {
        let w = b.tr_mul(&(b * &v));
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        if (next - est).abs() <= 1e-6 * next {
            return next;
        }
        est = next;
    }
    est
}

fn check_args(inst: &Instance, r: f64, tol: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Argument(format!("radius must be positive, got {r}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    if inst.a.shape() != (inst.m, inst.n) || inst.y.len() != inst.m {
        return Err(Error::Argument("instance dimensions are inconsistent".into()));
    }
    Ok(())
}

fn zero_solution(inst: &Instance) -> SocpSolution {
    SocpSolution {
        x_hat: DVector::zeros(inst.n),
        f_obj: -inst.x_tilde_l1(),
        w_norm: inst.x_tilde.norm(),
        status: SocpStatus::Optimal,
        gap: 0.0,
    }
}

pub fn solve_socp(inst: &Instance, r: f64, tol: f64) -> Result<SocpSolution> {
    check_args(inst, r, tol)?;
    if r >= inst.y.norm() {
        return Ok(zero_solution(inst));
    }
    Scaled::new(inst, r, false).solve(inst, tol)
}

/// `Infeasible` when no nonnegative point reaches the ball.
pub fn solve_socp_signed(inst: &Instance, r: f64, tol: f64) -> Result<SocpSolution> {
    check_args(inst, r, tol)?;
    if r >= inst.y.norm() {
        return Ok(zero_solution(inst));
    }
    let prob = Scaled::new(inst, r, true);
    if let Err(z) = prob.phase_one() {
        return Ok(prob.infeasible(&z));
    }
    prob.solve(inst, tol)
}

/// Whether some `x >= 0` satisfies `‖y - A x‖₂ <= r`.
pub fn signed_feasible(inst: &Instance, r: f64) -> bool {
    r >= inst.y.norm() || Scaled::new(inst, r, true).phase_one().is_ok()
}
