//! Random streams, the few distributions the engine needs, and order-statistic
//! summaries.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A per-replicate random stream.
///
/// Backed by ChaCha8 with the replicate index as the 64-bit stream selector,
/// so stream `i` of a master seed is fully determined by `(master_seed, i)`
/// and never depends on which other streams were consumed.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    stream_id: u64,
}

impl RngStream {
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        self.uniform() < p
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Index drawn from a discrete distribution given by `probs`.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding slack: fall back to the last category with positive mass
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Stream for replicate `replicate_index` under `master_seed`.
pub fn derive_stream(master_seed: u64, replicate_index: u64) -> RngStream {
    let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
    inner.set_stream(replicate_index);
    inner.set_word_pos(0);
    RngStream {
        inner,
        stream_id: replicate_index,
    }
}

/// One draw from a bivariate normal via the Cholesky factor of the 2x2
/// covariance matrix.
pub fn sample_normal_pair(
    rng: &mut RngStream,
    mean1: f64,
    mean2: f64,
    sd1: f64,
    sd2: f64,
    rho: f64,
) -> Result<(f64, f64)> {
    if !(sd1 > 0.0 && sd1.is_finite()) || !(sd2 > 0.0 && sd2.is_finite()) {
        return Err(Error::Parameter(format!(
            "standard deviations must be positive, got ({sd1}, {sd2})"
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!("correlation {rho} outside [-1, 1]")));
    }
    let z1 = rng.standard_normal();
    let z2 = rng.standard_normal();
    let x = mean1 + sd1 * z1;
    let y = mean2 + sd2 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
    Ok((x, y))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn stirling_tail(z: f64) -> f64 {
    let z2 = z * z;
    1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2)
}

/// ln B(a, b). When one argument is large the gamma-ratio is taken from a
/// Stirling difference to avoid cancelling two huge log-gammas.
fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, big) = if a < b { (a, b) } else { (b, a) };
    if big < 1.0e3 {
        return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    }
    let ratio = -(big - 0.5) * (small / big).ln_1p() - small * (big + small).ln()
        + small
        + (stirling_tail(big) - stirling_tail(big + small));
    ln_gamma(small) + ratio
}

const CF_EPS: f64 = 1.0e-15;
const CF_TINY: f64 = 1.0e-300;
const CF_MAX_ITER: usize = 20_000;

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`. `one_minus_x` is passed
/// separately so callers can supply it without cancellation.
fn reg_inc_beta(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * one_minus_x.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, one_minus_x) / b
    }
}

/// Regularized incomplete beta function `I_x(a, b)` for `x` in `[0, 1]`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Parameter(format!(
            "incomplete beta shape parameters must be positive, got ({a}, {b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("x = {x} outside [0, 1]")));
    }
    Ok(reg_inc_beta(a, b, x, 1.0 - x))
}

/// `P(T <= t)` for a Student t variable with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: u64) -> Result<f64> {
    if df < 1 {
        return Err(Error::Parameter("t distribution needs df >= 1".into()));
    }
    if t.is_nan() {
        return Err(Error::Parameter("t statistic is NaN".into()));
    }
    if t == f64::INFINITY {
        return Ok(1.0);
    }
    if t == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let nu = df as f64;
    let t2 = t * t;
    let denom = nu + t2;
    // two-sided tail P(|T| > |t|) = I_{nu/(nu+t^2)}(nu/2, 1/2)
    let tail = reg_inc_beta(0.5 * nu, 0.5, nu / denom, t2 / denom);
    let half = 0.5 * tail;
    Ok(if t > 0.0 { 1.0 - half } else { half })
}

/// Median and quartiles of a sample.
///
/// Quantiles use linear interpolation between order statistics: for
/// probability `p` and sorted values `v[0..n]`, `h = (n - 1) p` and the
/// quantile is `v[floor h] + (h - floor h) (v[floor h + 1] - v[floor h])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n: usize,
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Parameter("cannot summarize an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parameter("sample contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
        n: sorted.len(),
    })
}
