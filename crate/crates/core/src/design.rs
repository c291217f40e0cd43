//! Informative PPS design: size measures, inclusion probabilities,
//! systematic sampling, weight scaling and the direct (Hájek) comparator.

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data_model::UnitRecord;
use crate::error::{Error, Result};

/// Size-measure inflation applied to poor units (`M = pwgtp·(1 + 5·poor)`).
pub const DEFAULT_POVERTY_MULTIPLIER: f64 = 5.0;

/// Units with π at or above this are treated as certainty selections.
const CERTAINTY: f64 = 1.0 - 1e-12;

/// A fixed-size sample drawn from a population frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSample {
    /// Population indices, in population order.
    pub indices: Vec<usize>,
    pub pi: Vec<f64>,
    pub weights: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

impl DesignSample {
    pub fn from_probabilities(indices: Vec<usize>, pi_all: &[f64]) -> Result<Self> {
        let pi: Vec<f64> = indices.iter().map(|&i| pi_all[i]).collect();
        let weights: Vec<f64> = pi.iter().map(|p| 1.0 / p).collect();
        let scaled_weights = scale_weights(&weights)?;
        Ok(Self {
            indices,
            pi,
            weights,
            scaled_weights,
        })
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }
}

/// `M_i = pwgtp_i · (1 + multiplier · poor_i)`.
pub fn size_measure(pwgtp: &[f64], poor: &[u32], multiplier: f64) -> Result<Vec<f64>> {
    if pwgtp.len() != poor.len() {
        return Err(Error::LengthMismatch {
            expected: pwgtp.len(),
            got: poor.len(),
        });
    }
    pwgtp
        .iter()
        .zip(poor)
        .map(|(&w, &p)| {
            if !(w > 0.0) {
                return Err(Error::Domain(format!(
                    "size weight must be positive, got {w}"
                )));
            }
            Ok(w * (1.0 + multiplier * f64::from(p.min(1))))
        })
        .collect()
}

/// `π_i = n·M_i / ΣM`, clamping units above 1 to certainty and spreading the
/// remaining sample size over the rest until no probability exceeds 1.
pub fn inclusion_probabilities(m: &[f64], n: usize) -> Result<Vec<f64>> {
    let big_n = m.len();
    if n > big_n {
        return Err(Error::SampleTooLarge {
            n,
            population: big_n,
        });
    }
    if let Some(bad) = m.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "size measure must be positive, got {bad}"
        )));
    }
    let mut pi = vec![0.0; big_n];
    let mut certain = vec![false; big_n];
    loop {
        let n_certain = certain.iter().filter(|c| **c).count();
        let remaining = (n - n_certain) as f64;
        let mass: f64 = m
            .iter()
            .zip(&certain)
            .filter(|(_, c)| !**c)
            .map(|(v, _)| v)
            .sum();
        let mut changed = false;
        for i in 0..big_n {
            if certain[i] {
                pi[i] = 1.0;
                continue;
            }
            pi[i] = if mass > 0.0 {
                remaining * m[i] / mass
            } else {
                0.0
            };
            if pi[i] >= 1.0 {
                certain[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(pi)
}

/// Systematic PPS draw with a single uniform start, traversing units in the given order.
pub fn systematic_pps_sample<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let order: Vec<usize> = (0..pi.len()).collect();
    systematic_in_order(pi, &order, rng)
}

/// Like [`systematic_pps_sample`], but traverses units in a random order.
pub fn systematic_pps_sample_shuffled<R: Rng + ?Sized>(
    pi: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.shuffle(rng);
    let mut s = systematic_in_order(pi, &order, rng)?;
    s.sort_unstable();
    Ok(s)
}

fn systematic_in_order<R: Rng + ?Sized>(
    pi: &[f64],
    order: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let total: f64 = pi.iter().sum();
    let n = total.round();
    if (total - n).abs() > 1e-9 * n.max(1.0) || pi.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p))
    {
        return Err(Error::ProbabilitySum { sum: total });
    }
    let n = n as usize;
    let mut selected: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| pi[i] >= CERTAINTY)
        .collect();
    let rest: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| pi[i] < CERTAINTY)
        .collect();
    let n_rest = n - selected.len();
    if n_rest > 0 {
        let rest_total: f64 = rest.iter().map(|&i| pi[i]).sum();
        let rescale = n_rest as f64 / rest_total;
        let u: f64 = rng.random();
        // F(c) counts the points u, u+1, … lying at or below c
        let count = |c: f64| -> i64 {
            if c < u {
                0
            } else {
                (c - u).floor() as i64 + 1
            }
        };
        let mut cum = 0.0;
        let mut before = count(0.0);
        for (k, &i) in rest.iter().enumerate() {
            cum = if k + 1 == rest.len() {
                n_rest as f64
            } else {
                cum + pi[i] * rescale
            };
            let after = count(cum);
            if after > before {
                selected.push(i);
            }
            before = after;
        }
    }
    selected.sort_unstable();
    debug_assert_eq!(selected.len(), n);
    Ok(selected)
}

/// `w̃_i = n·w_i / Σw`.
pub fn scale_weights(w: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::Empty("weights"));
    }
    if let Some(bad) = w.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("weight must be positive, got {bad}")));
    }
    let n = w.len() as f64;
    let total: f64 = w.iter().sum();
    Ok(w.iter().map(|v| n * v / total).collect())
}

/// Which response a direct estimate targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimand {
    GaussianMean,
    BinomialRate,
}

impl Estimand {
    pub fn value(&self, u: &UnitRecord) -> f64 {
        match self {
            Estimand::GaussianMean => u.z1,
            Estimand::BinomialRate => f64::from(u.z2) / f64::from(u.trials),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Estimand::GaussianMean => "gaussian",
            Estimand::BinomialRate => "bernoulli",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(Estimand::GaussianMean),
            "bernoulli" | "binomial" => Some(Estimand::BinomialRate),
            _ => None,
        }
    }
}

/// Per-area weighted mean `Σw y / Σw`; `None` for areas without sampled units.
pub fn ht_area_estimates(sample: &[UnitRecord], estimand: Estimand, r: usize) -> Vec<Option<f64>> {
    let mut num = vec![0.0; r];
    let mut den = vec![0.0; r];
    for u in sample {
        num[u.area_id] += u.weight * estimand.value(u);
        den[u.area_id] += u.weight;
    }
    num.iter()
        .zip(&den)
        .map(|(a, b)| (*b > 0.0).then(|| a / b))
        .collect()
}

/// Normal-approximation interval around the weighted mean with the
/// linearized ratio variance `n_k/(n_k − 1) · Σ w_i²(y_i − ŷ)² / (Σw)²`.
/// `None` for areas with fewer than two sampled units.
pub fn ht_interval(
    sample: &[UnitRecord],
    estimand: Estimand,
    r: usize,
    alpha: f64,
) -> Vec<Option<(f64, f64)>> {
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let est = ht_area_estimates(sample, estimand, r);
    let mut count = vec![0usize; r];
    let mut wsum = vec![0.0; r];
    let mut ss = vec![0.0; r];
    for u in sample {
        let Some(mean) = est[u.area_id] else { continue };
        let e = u.weight * (estimand.value(u) - mean);
        count[u.area_id] += 1;
        wsum[u.area_id] += u.weight;
        ss[u.area_id] += e * e;
    }
    (0..r)
        .map(|k| {
            if count[k] < 2 {
                return None;
            }
            let nk = count[k] as f64;
            let var = nk / (nk - 1.0) * ss[k] / (wsum[k] * wsum[k]);
            let mean = est[k]?;
            let half = z * var.sqrt();
            Some((mean - half, mean + half))
        })
        .collect()
}
