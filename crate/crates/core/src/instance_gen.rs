//! Seeded random instances of the noisy system and of the surrogate data.
//!
//! Normals come from ChaCha8 64-bit words mapped to uniforms on (0, 1) and pushed through
//! the AS241 (PPND16) normal quantile, so a seed reproduces the same draw on every platform.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Standard normal quantile, Wichura's AS241 (PPND16), relative accuracy about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r + 6.726_577_092_700_87e4) * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r + 3.930_789_580_009_271e4) * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Stream of standard normals from a seed.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_normal(&mut self) -> f64 {
        // top 53 bits, shifted to the midpoint of their cell so 0 and 1 never occur
        let bits = self.rng.next_u64() >> 11;
        normal_quantile((bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64))
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = self.next_normal());
    }

    pub fn vector(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_normal()).collect()
    }
}

/// One draw of `y = A x̃ + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub a: DMatrix<f64>,
    pub v: DVector<f64>,
    pub x_tilde: DVector<f64>,
    pub y: DVector<f64>,
    pub x_mag: f64,
    pub seed: u64,
}

impl Instance {
    pub fn x_tilde_l1(&self) -> f64 {
        self.x_tilde.iter().map(|v| v.abs()).sum()
    }
}

/// Where the `k` nonzeros of `x̃` go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Support {
    /// Indices `n - k .. n`.
    #[default]
    Tail,
    /// A seeded uniformly random subset; useful only as a location-invariance check.
    Random,
}

/// `A` is filled row by row, then `v`, from one stream.
pub fn generate_instance(n: usize, m: usize, k: usize, sigma: f64, x_mag: f64, seed: u64) -> Result<Instance> {
    generate_instance_with_support(n, m, k, sigma, x_mag, seed, Support::Tail)
}

pub fn generate_instance_with_support(
    n: usize,
    m: usize,
    k: usize,
    sigma: f64,
    x_mag: f64,
    seed: u64,
    support: Support,
) -> Result<Instance> {
    if !(k <= m && m < n && m > 0) {
        return Err(Error::Argument(format!("need 0 <= k <= m < n, got n={n} m={m} k={k}")));
    }
    if !(sigma >= 0.0 && x_mag > 0.0 && sigma.is_finite() && x_mag.is_finite()) {
        return Err(Error::Argument("need sigma >= 0 and x_mag > 0".into()));
    }
    let mut stream = NormalStream::new(seed);
    let mut a = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = stream.next_normal();
        }
    }
    let v = DVector::from_iterator(m, (0..m).map(|_| sigma * stream.next_normal()));
    let mut x_tilde = DVector::zeros(n);
    match support {
        Support::Tail => x_tilde.rows_mut(n - k, k).fill(x_mag),
        Support::Random => {
            // partial Fisher-Yates on the stream's words
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = i + (stream.rng.next_u64() % (n - i) as u64) as usize;
                idx.swap(i, j);
                x_tilde[idx[i]] = x_mag;
            }
        }
    }
    let y = &a * &x_tilde + &v;
    Ok(Instance { n, m, k, a, v, x_tilde, y, x_mag, seed })
}

/// One draw of the surrogate data with both sorts of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateDraw {
    pub k: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// Magnitudes of `h[..n-k]` increasing, then `-h[n-k..]` decreasing.
    pub h_bar: Vec<f64>,
    /// `-h[..n-k]` increasing, then `-h[n-k..]` decreasing.
    pub h_bar_plus: Vec<f64>,
    pub seed: u64,
}

impl SurrogateDraw {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn from_parts(g: Vec<f64>, h: Vec<f64>, k: usize, seed: u64) -> Result<Self> {
        let n = h.len();
        if k > n {
            return Err(Error::Argument(format!("k = {k} exceeds n = {n}")));
        }
        let nz = n - k;
        let mut sparse: Vec<f64> = h[nz..].iter().map(|v| -v).collect();
        sparse.sort_by(|a, b| b.total_cmp(a));
        let mut zero: Vec<f64> = h[..nz].iter().map(|v| v.abs()).collect();
        zero.sort_by(f64::total_cmp);
        let mut zero_plus: Vec<f64> = h[..nz].iter().map(|v| -v).collect();
        zero_plus.sort_by(f64::total_cmp);
        let h_bar = zero.into_iter().chain(sparse.iter().copied()).collect();
        let h_bar_plus = zero_plus.into_iter().chain(sparse).collect();
        Ok(SurrogateDraw { k, g, h, h_bar, h_bar_plus, seed })
    }

    /// The sorted vector the given variant works with.
    pub fn sorted(&self, signed: bool) -> &[f64] {
        if signed {
            &self.h_bar_plus
        } else {
            &self.h_bar
        }
    }
}

/// Draws `g` (length `m`) then `h` (length `n`) from one stream. Both sorts are always
/// produced, so the same draw can feed either variant.
pub fn generate_surrogate_draw(n: usize, k: usize, m: usize, seed: u64) -> Result<SurrogateDraw> {
    if k > n || m == 0 {
        return Err(Error::Argument(format!("need 0 <= k <= n and m > 0, got n={n} m={m} k={k}")));
    }
    let mut stream = NormalStream::new(seed);
    let g = stream.vector(m);
    let h = stream.vector(n);
    SurrogateDraw::from_parts(g, h, k, seed)
}
