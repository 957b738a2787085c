//! Generic solvers used as references; none of them touch the library's algorithms.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socp_phase::instance_gen::{Instance, SurrogateDraw};

/// `erf` by cumulative Simpson integration of `2/sqrt(pi) exp(-s^2)` along a uniform grid.
pub struct ErfTable {
    pub step: f64,
    pub values: Vec<f64>,
}

impl ErfTable {
    pub fn new(t_max: f64, points: usize) -> Self {
        let step = t_max / points as f64;
        let dens = |s: f64| 2.0 / std::f64::consts::PI.sqrt() * (-s * s).exp();
        let mut values = Vec::with_capacity(points + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for i in 0..points {
            let a = i as f64 * step;
            acc += step / 6.0 * (dens(a) + 4.0 * dens(a + 0.5 * step) + dens(a + step));
            values.push(acc);
        }
        ErfTable { step, values }
    }
}

/// Characterization point found by a sign-change scan in the erfinv variable `t`:
/// general `erf(t) a sqrt(pi) t e^{t²} = 1 - a`, signed `(1 + erf(t)) a sqrt(pi) t e^{t²} = 1 - a`,
/// with `1 - beta = c a sqrt(pi) t e^{t²}` (`c = 1` general, `2` signed).
pub fn scan_characterization(alpha_w: f64, signed: bool, table: &ErfTable) -> f64 {
    let sp = std::f64::consts::PI.sqrt();
    let g = |i: usize| {
        let t = i as f64 * table.step;
        let e = table.values[i];
        let lhs = if signed { 1.0 + e } else { e };
        lhs * alpha_w * sp * t * (t * t).exp() - (1.0 - alpha_w)
    };
    let mut prev = g(1);
    for i in 2..table.values.len() {
        let cur = g(i);
        if prev < 0.0 && cur >= 0.0 {
            let frac = prev / (prev - cur);
            let t = ((i - 1) as f64 + frac) * table.step;
            let c = if signed { 2.0 } else { 1.0 };
            return 1.0 - c * alpha_w * sp * t * (t * t).exp();
        }
        prev = cur;
    }
    f64::NAN
}

/// Exact minimizer of `‖x‖₁` (optionally `x >= 0`) over `‖y - A x‖ <= r`, found by a
/// restarted subgradient method on an exact penalty, then an active-set KKT solve.
/// Returns `(objective, kkt certified)`.
pub fn socp_oracle(inst: &Instance, r: f64, signed: bool, seed: u64) -> (f64, bool) {
    let (a, y) = (&inst.a, &inst.y);
    let n = inst.n;
    if y.norm() <= r {
        return (0.0, true);
    }
    let penalty = 50.0 * (1.0 + a.norm());
    let f = |x: &DVector<f64>| x.iter().map(|v| v.abs()).sum::<f64>() + penalty * ((y - a * x).norm() - r).max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = DVector::zeros(n);
    let mut best_f = f(&best);
    for restart in 0..5 {
        let mut x = if restart == 0 {
            a.clone().pseudo_inverse(1e-12).unwrap() * y
        } else {
            DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
        };
        if signed {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        for it in 0..20_000 {
            let res = y - a * &x;
            let mut g = x.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
            if res.norm() > r {
                g -= a.tr_mul(&res) * (penalty / res.norm());
            }
            let step = 0.5 / (1.0 + it as f64).sqrt() / g.norm().max(1e-12);
            x -= g * step;
            if signed {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let fx = f(&x);
            if fx < best_f {
                best_f = fx;
                best = x.clone();
            }
        }
    }
    let scale = best.amax();
    let support: Vec<usize> = (0..n).filter(|&j| best[j].abs() > 1e-2 * scale).collect();
    let signs: Vec<f64> = support.iter().map(|&j| best[j].signum()).collect();
    match active_set(a, y, r, support, signs, signed) {
        Some(x) => (x.iter().map(|v| v.abs()).sum(), true),
        None => (best.iter().map(|v| v.abs()).sum(), false),
    }
}

/// On support `S` with signs `s`: `x_S = (A_SᵀA_S)⁻¹(A_Sᵀy - t s)` with `t` making the
/// constraint active; sign flips are dropped and dual violators added until KKT holds.
fn active_set(a: &DMatrix<f64>, y: &DVector<f64>, r: f64, mut s: Vec<usize>, mut signs: Vec<f64>, signed: bool) -> Option<DVector<f64>> {
    let n = a.ncols();
    for _ in 0..200 {
        if s.is_empty() {
            let corr = a.tr_mul(y);
            let j = (0..n).max_by(|&i, &k| {
                let (ci, ck) = if signed { (corr[i], corr[k]) } else { (corr[i].abs(), corr[k].abs()) };
                ci.total_cmp(&ck)
            })?;
            s.push(j);
            signs.push(corr[j].signum());
        }
        let asub = a.select_columns(&s);
        let gram = (asub.transpose() * &asub).try_inverse()?;
        let x_ls = &gram * asub.tr_mul(y);
        let v = &gram * DVector::from_column_slice(&signs);
        let r_ls = y - &asub * &x_ls;
        let av = &asub * &v;
        let slack = r * r - r_ls.norm_squared();
        if slack <= 0.0 {
            return None;
        }
        let t = slack.sqrt() / av.norm();
        let xs = &x_ls - &v * t;
        if let Some(i) = (0..s.len()).find(|&i| xs[i] * signs[i] <= 0.0) {
            s.remove(i);
            signs.remove(i);
            continue;
        }
        let res = &r_ls + &av * t;
        let corr = a.tr_mul(&res) / t;
        let viol = (0..n)
            .filter(|j| !s.contains(j))
            .map(|j| (j, if signed { corr[j] } else { corr[j].abs() }))
            .filter(|&(_, c)| c > 1.0 + 1e-10)
            .max_by(|p, q| p.1.total_cmp(&q.1));
        if let Some((j, _)) = viol {
            s.push(j);
            signs.push(corr[j].signum());
            continue;
        }
        let mut x = DVector::zeros(n);
        s.iter().zip(xs.iter()).for_each(|(&j, &v)| x[j] = v);
        return Some(x);
    }
    None
}

/// Surrogate objective at `(nu, lambda)`; `-inf` outside the square-root domain.
pub fn surrogate_objective(hb: &[f64], nz: usize, g2: f64, sigma: f64, x: f64, r: f64, nu: f64, lam: &[f64]) -> f64 {
    let sq: f64 = hb.iter().zip(lam).map(|(h, l)| (nu * h - 1.0 + l).powi(2)).sum();
    let q = g2 * nu * nu - sq;
    if q < 0.0 {
        return f64::NEG_INFINITY;
    }
    sigma * q.sqrt() - x * lam[nz..].iter().sum::<f64>() - nu * r
}

/// Best value of accelerated projected gradient ascent over `(nu, lambda)` from `starts`
/// random feasible points.
pub fn surrogate_oracle(draw: &SurrogateDraw, signed: bool, sigma: f64, x: f64, r: f64, starts: usize, seed: u64) -> f64 {
    let hb = draw.sorted(signed).to_vec();
    let n = hb.len();
    let nz = n - draw.k;
    let g2: f64 = draw.g.iter().map(|v| v * v).sum();
    let upper: Vec<f64> = (0..n)
        .map(|i| if signed { f64::INFINITY } else if i < nz { 1.0 } else { 2.0 })
        .collect();
    let obj = |p: &[f64]| surrogate_objective(&hb, nz, g2, sigma, x, r, p[0], &p[1..]);
    let grad = |p: &[f64]| -> Vec<f64> {
        let nu = p[0];
        let u: Vec<f64> = (0..n).map(|i| nu * hb[i] - 1.0 + p[1 + i]).collect();
        let q = (g2 * nu * nu - u.iter().map(|v| v * v).sum::<f64>()).max(1e-300);
        let root = q.sqrt();
        let mut g = Vec::with_capacity(n + 1);
        g.push(sigma * (g2 * nu - u.iter().zip(&hb).map(|(a, b)| a * b).sum::<f64>()) / root - r);
        for i in 0..n {
            g.push(-sigma * u[i] / root - if i < nz { 0.0 } else { x });
        }
        g
    };
    let project = |p: &mut [f64]| {
        p[0] = p[0].max(0.0);
        for i in 0..n {
            p[1 + i] = p[1 + i].clamp(0.0, upper[i]);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    let mut found = 0;
    let mut tries = 0;
    while found < starts && tries < 100 * starts {
        tries += 1;
        let nu = rng.random_range(0.05..4.0);
        let mut p: Vec<f64> = std::iter::once(nu)
            .chain((0..n).map(|i| (1.0 - nu * hb[i] + rng.random_range(-0.3..0.3)).clamp(0.0, upper[i].min(5.0))))
            .collect();
        project(&mut p);
        if !obj(&p).is_finite() {
            continue;
        }
        found += 1;
        let mut fp = obj(&p);
        let mut prev = p.clone();
        let mut t = 1.0f64;
        let mut step = 1.0;
        for _ in 0..20_000 {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mut w: Vec<f64> = p.iter().zip(&prev).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
            project(&mut w);
            let mut fw = obj(&w);
            if !fw.is_finite() {
                w = p.clone();
                fw = fp;
            }
            let gw = grad(&w);
            let next = loop {
                let mut cand: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a + step * g).collect();
                project(&mut cand);
                let fc = obj(&cand);
                let d: Vec<f64> = cand.iter().zip(&w).map(|(a, b)| a - b).collect();
                let lin: f64 = d.iter().zip(&gw).map(|(a, b)| a * b).sum();
                let quad: f64 = d.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
                if fc.is_finite() && fc >= fw + lin - quad {
                    break (cand, fc, quad * 2.0 * step);
                }
                step *= 0.5;
                if step < 1e-14 {
                    break (w.clone(), fw, 0.0);
                }
            };
            let (cand, fc, moved) = next;
            if fc < fp {
                // restart the momentum when it stops paying
                t = 1.0;
                prev = p.clone();
            } else {
                prev = std::mem::replace(&mut p, cand);
                fp = fc;
                t = t_next;
            }
            step *= 1.5;
            if moved < 1e-26 {
                break;
            }
        }
        best = best.max(fp);
    }
    best
}

/// Largest growth rate of the signed objective along `nu -> inf`: the maximum over
/// `mu >= 0` of `sigma sqrt(‖g‖² - ‖h̄⁺ + mu‖²) - x sum_sparse mu - r`, by projected gradient.
pub fn ray_oracle(draw: &SurrogateDraw, sigma: f64, x: f64, r: f64) -> f64 {
    let hb = &draw.h_bar_plus;
    let n = hb.len();
    let nz = n - draw.k;
    let g2: f64 = draw.g.iter().map(|v| v * v).sum();
    let value = |mu: &[f64]| {
        let sq: f64 = hb.iter().zip(mu).map(|(h, m)| (h + m).powi(2)).sum();
        if sq > g2 {
            f64::NEG_INFINITY
        } else {
            sigma * (g2 - sq).sqrt() - x * mu[nz..].iter().sum::<f64>() - r
        }
    };
    // the smallest reachable norm puts mu = max(-h̄⁺, 0); start there
    let mut mu: Vec<f64> = hb.iter().map(|h| (-h).max(0.0)).collect();
    let mut f = value(&mu);
    if !f.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut step = 0.1;
    for _ in 0..50_000 {
        let sq: f64 = hb.iter().zip(&mu).map(|(h, m)| (h + m).powi(2)).sum();
        let root = (g2 - sq).max(1e-300).sqrt();
        let grad: Vec<f64> = (0..n).map(|i| -sigma * (hb[i] + mu[i]) / root - if i < nz { 0.0 } else { x }).collect();
        let cand: Vec<f64> = mu.iter().zip(&grad).map(|(m, g)| (m + step * g).max(0.0)).collect();
        let fc = value(&cand);
        if fc > f {
            let moved: f64 = cand.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum();
            mu = cand;
            f = fc;
            step *= 1.2;
            if moved < 1e-28 {
                break;
            }
        } else {
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
    }
    f
}
