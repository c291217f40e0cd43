//! Pólya–Gamma sampling for real-valued shape.
//!
//! `PG(1, c)` is drawn exactly with Devroye's alternating-series rejection
//! sampler. Integer shapes are sums of independent `PG(1, c)` draws. A
//! fractional remainder `f` is drawn from the truncated infinite-convolution
//! representation
//!
//! ```text
//! ω = 1/(2π²) · Σ_{k≥1} g_k / ((k − ½)² + c²/(4π²)),   g_k ~ Gamma(f, 1)
//! ```
//!
//! keeping the first `truncation` terms and adding the expectation of the
//! discarded tail so the first moment is exact.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Default number of retained terms in the series representation.
pub const DEFAULT_TRUNCATION: usize = 200;

/// Shapes below this use a moment-matched gamma draw.
const TINY_SHAPE: f64 = 1e-6;

/// Break point between the exponential and inverse-Gaussian proposals.
const TRUNC: f64 = 0.64;

/// Parameters of `PG(b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    pub b: f64,
    pub c: f64,
}

impl PgParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("PG shape must be positive, got {b}")));
        }
        if !c.is_finite() {
            return Err(Error::Domain(format!("PG tilt must be finite, got {c}")));
        }
        Ok(Self { b, c })
    }
}

/// Mean of `PG(b, c)`: `b/(2c)·tanh(c/2)`, with limit `b/4` at `c = 0`.
pub fn pg_mean(params: PgParams) -> f64 {
    let c = params.c.abs();
    if c < 1e-8 {
        params.b / 4.0
    } else {
        params.b / (2.0 * c) * (c / 2.0).tanh()
    }
}

/// Variance of `PG(b, c)`: `b/(4c³)·(sinh c − c)·sech²(c/2)`, limit `b/24`.
pub fn pg_variance(params: PgParams) -> f64 {
    let c = params.c.abs();
    if c < 0.05 {
        let c2 = c * c;
        params.b
            * (1.0 / 24.0 - c2 / 120.0 + 17.0 * c2 * c2 / 13440.0 - 31.0 * c2 * c2 * c2 / 181440.0)
    } else {
        // (sinh c − c)·sech²(c/2) rewritten to avoid overflow
        let sech = 1.0 / (c / 2.0).cosh();
        params.b / (4.0 * c * c * c) * (2.0 * (c / 2.0).tanh() - c * sech * sech)
    }
}

/// Stateless PG sampler with a configurable series truncation.
#[derive(Debug, Clone, Copy)]
pub struct PgSampler {
    truncation: usize,
}

impl Default for PgSampler {
    fn default() -> Self {
        Self {
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

impl PgSampler {
    pub fn with_truncation(truncation: usize) -> Self {
        Self {
            truncation: truncation.max(1),
        }
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Draws from `PG(b, c)`. Inputs are assumed valid; see [`sample_pg`].
    pub fn draw<R: Rng + ?Sized>(&self, b: f64, c: f64, rng: &mut R) -> f64 {
        debug_assert!(b > 0.0);
        if b < TINY_SHAPE {
            return moment_matched_gamma(b, c, rng);
        }
        let whole = b.floor();
        let frac = b - whole;
        let mut total = 0.0;
        for _ in 0..whole as u64 {
            total += draw_pg1(c, rng);
        }
        if frac > 1e-12 {
            total += self.draw_series(frac, c, rng);
        }
        total.max(f64::MIN_POSITIVE)
    }

    fn draw_series<R: Rng + ?Sized>(&self, f: f64, c: f64, rng: &mut R) -> f64 {
        let gamma = Gamma::new(f, 1.0).expect("positive shape");
        let shift = c * c / (4.0 * PI * PI);
        let mut acc = 0.0;
        let mut kept_mean = 0.0;
        for k in 1..=self.truncation {
            let half = k as f64 - 0.5;
            let inv = 1.0 / (half * half + shift);
            acc += gamma.sample(rng) * inv;
            kept_mean += inv;
        }
        let scale = 1.0 / (2.0 * PI * PI);
        let tail = (pg_mean(PgParams { b: f, c }) - f * scale * kept_mean).max(0.0);
        scale * acc + tail
    }
}

/// Draws from `PG(b, c)` with the default truncation.
pub fn sample_pg<R: Rng + ?Sized>(params: PgParams, rng: &mut R) -> Result<f64> {
    if !(params.b > 0.0) {
        return Err(Error::Domain(format!(
            "PG shape must be positive, got {}",
            params.b
        )));
    }
    Ok(PgSampler::default().draw(params.b, params.c, rng))
}

fn moment_matched_gamma<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> f64 {
    let p = PgParams { b, c };
    let mean = pg_mean(p);
    let var = pg_variance(p);
    let shape = mean * mean / var;
    let scale = var / mean;
    let draw = Gamma::new(shape, scale)
        .map(|g| g.sample(rng))
        .unwrap_or(mean);
    draw.max(f64::MIN_POSITIVE)
}

/// Exact `PG(1, c)` draw via `J*(1, c/2) / 4`.
fn draw_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = c.abs() * 0.5;
    let fz = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = texpon_mass(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        // alternating series acceptance
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0usize;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Piecewise coefficient `a_n(x)` of the `J*(1)` density series.
fn series_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let half = n as f64 + 0.5;
        let expnt = -1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * half * half / x;
        expnt.exp()
    } else {
        0.0
    }
}

/// Probability that the proposal comes from the truncated exponential piece.
fn texpon_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let root = (1.0 / t).sqrt();
    let b = root * (t * z - 1.0);
    let a = -root * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let qdivp = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + qdivp)
}

fn log_norm_cdf(x: f64) -> f64 {
    if x < -30.0 {
        // Mills-ratio asymptote
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln()
    } else {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    }
}

/// Inverse-Gaussian(1/z, 1) truncated to `(0, TRUNC]`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    let mut x = t + 1.0;
    if 1.0 / t > z {
        let mut alpha = 0.0;
        while rng.random::<f64>() > alpha {
            let mut e1: f64 = Exp1.sample(rng);
            let mut e2: f64 = Exp1.sample(rng);
            while e1 * e1 > 2.0 * e2 / t {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
            }
            let d = 1.0 + e1 * t;
            x = t / (d * d);
            alpha = (-0.5 * z * z * x).exp();
        }
    } else {
        let mu = 1.0 / z;
        while x > t {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let half_mu = 0.5 * mu;
            let mu_y = mu * y;
            x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
        }
    }
    x
}
