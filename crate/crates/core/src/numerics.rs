//! Special functions and small root finders.

use crate::error::{Error, Result};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// A sign-changing interval for a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    /// Evaluates `f` at both ends and checks for a sign change.
    pub fn new(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Self> {
        let b = Bracket { lo, hi, f_lo: f(lo), f_hi: f(hi) };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let opposite = (self.f_lo <= 0.0 && self.f_hi >= 0.0) || (self.f_lo >= 0.0 && self.f_hi <= 0.0);
        if !(self.lo < self.hi) || !opposite || self.f_lo.is_nan() || self.f_hi.is_nan() {
            return Err(Error::Bracket { lo: self.lo, hi: self.hi, f_lo: self.f_lo, f_hi: self.f_hi });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { abs_tol: 1e-12, rel_tol: 1e-10, max_iter: 200 }
    }
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let v = if ax <= 2.0 {
        erf_series(ax)
    } else if ax >= 6.5 {
        1.0
    } else {
        1.0 - erfc_cf(ax)
    };
    v.copysign(x)
}

/// Complementary error function with relative accuracy in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 1.5 {
        1.0 - erf_series(x)
    } else if x > 27.3 {
        0.0
    } else {
        erfc_cf(x)
    }
}

// erf(x) = 2/sqrt(pi) e^{-x^2} sum_n (2x^2)^n x / (1*3*...*(2n+1)); every term is positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > 1e-17 * sum {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

// Continued fraction erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0.
fn erfc_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for j in 1..400 {
        let a = 0.5 * j as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
}

/// Inverse error function on (-1, 1).
///
/// A single-precision rational guess is polished with two Newton steps. For `|p| > 0.5` the
/// steps run on `ln erfc` instead, so the small complement `1 - |p|` keeps its relative
/// accuracy, and continue until the step is negligible since the guess degrades far out.
pub fn erfinv(p: f64) -> Result<f64> {
    if !(p.abs() < 1.0) {
        return Err(Error::Domain { what: "erfinv", value: p });
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let a = p.abs();
    let mut y = erfinv_guess(a);
    if a < 0.5 {
        for _ in 0..2 {
            y -= (erf(y) - a) / (FRAC_2_SQRT_PI * (-y * y).exp());
        }
    } else {
        let lq = (1.0 - a).ln();
        for _ in 0..50 {
            let c = erfc(y);
            let step = (c.ln() - lq) * c / (FRAC_2_SQRT_PI * (-y * y).exp());
            y += step;
            if step.abs() <= 4.0 * f64::EPSILON * y {
                break;
            }
        }
    }
    Ok(y.copysign(p))
}

// Giles' single-precision approximation, good to about 1e-7 relative.
fn erfinv_guess(x: f64) -> f64 {
    let mut w = -((1.0 - x) * (1.0 + x)).ln();
    let p = if w < 5.0 {
        w -= 2.5;
        let mut p = 2.810_226_36e-08;
        p = 3.432_739_39e-07 + p * w;
        p = -3.523_387_7e-06 + p * w;
        p = -4.391_506_54e-06 + p * w;
        p = 0.000_218_580_87 + p * w;
        p = -0.001_253_725_03 + p * w;
        p = -0.004_177_681_64 + p * w;
        p = 0.246_640_727 + p * w;
        1.501_409_41 + p * w
    } else {
        w = w.sqrt() - 3.0;
        let mut p = -0.000_200_214_257;
        p = 0.000_100_950_558 + p * w;
        p = 0.001_349_343_22 + p * w;
        p = -0.003_673_428_44 + p * w;
        p = 0.005_739_507_73 + p * w;
        p = -0.007_622_461_3 + p * w;
        p = 0.009_438_870_47 + p * w;
        p = 1.001_674_06 + p * w;
        2.832_976_82 + p * w
    };
    p * x
}

/// Brent's method. The iterate never leaves the bracket.
pub fn find_root(f: impl Fn(f64) -> f64, bracket: Bracket, settings: SolverSettings) -> Result<f64> {
    bracket.validate()?;
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let (mut fa, mut fb) = (bracket.f_lo, bracket.f_hi);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..settings.max_iter {
        if fb.abs() <= settings.abs_tol {
            return Ok(b);
        }
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * settings.rel_tol * b.abs().max(f64::MIN_POSITIVE);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::Convergence { what: "find_root", residual: f64::NAN, best: vec![a] });
        }
    }
    Err(Error::Convergence { what: "find_root", residual: fb.abs(), best: vec![b] })
}

/// Damped Newton for small systems (dimension at most 3) with a forward-difference
/// Jacobian and step halving on the max-norm of the residual.
pub fn solve_system(f: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64], settings: SolverSettings) -> Result<Vec<f64>> {
    let d = x0.len();
    if d == 0 || d > 3 {
        return Err(Error::Argument(format!("solve_system supports 1 to 3 unknowns, got {d}")));
    }
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) });
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut nf = norm(&fx);
    if !nf.is_finite() {
        return Err(Error::Convergence { what: "solve_system", residual: nf, best: x });
    }
    for _ in 0..settings.max_iter {
        if nf <= settings.abs_tol {
            return Ok(x);
        }
        let mut jac = [[0.0; 3]; 3];
        for j in 0..d {
            let h = (1e-7 * x[j].abs()).max(1e-7);
            let mut xp = x.clone();
            xp[j] += h;
            let fp = f(&xp);
            for i in 0..d {
                jac[i][j] = (fp[i] - fx[i]) / h;
            }
        }
        let rhs: Vec<f64> = fx.iter().map(|v| -v).collect();
        let Some(step) = solve_dense(&jac, &rhs, d) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let xn: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let fnew = f(&xn);
            let nn = norm(&fnew);
            if nn.is_finite() && nn < nf {
                x = xn;
                fx = fnew;
                nf = nn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if nf <= settings.abs_tol {
        Ok(x)
    } else {
        Err(Error::Convergence { what: "solve_system", residual: nf, best: x })
    }
}

fn solve_dense(a: &[[f64; 3]; 3], b: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut m = *a;
    let mut r = [0.0; 3];
    r[..d].copy_from_slice(&b[..d]);
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 || !m[piv][col].is_finite() {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..d {
            let factor = m[row][col] / m[col][col];
            for k in col..d {
                m[row][k] -= factor * m[col][k];
            }
            r[row] -= factor * r[col];
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|k| m[row][k] * x[k]).sum();
        x[row] = (r[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Finds the first sign change of `f` on a uniform grid over `[lo, hi]`, skipping
/// non-finite values, and refines it with Brent's method.
pub fn scan_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize, settings: SolverSettings) -> Result<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..points {
        let x = lo + step * i as f64;
        let fx = f(x);
        if !fx.is_finite() {
            prev = None;
            continue;
        }
        if let Some((xp, fp)) = prev {
            if (fp <= 0.0) != (fx <= 0.0) || fx == 0.0 {
                let b = Bracket { lo: xp, hi: x, f_lo: fp, f_hi: fx };
                return find_root(&f, b, settings);
            }
        }
        prev = Some((x, fx));
    }
    Err(Error::NoSolution(format!("no sign change on [{lo}, {hi}]")))
}
