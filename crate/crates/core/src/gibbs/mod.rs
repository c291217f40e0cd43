//! Pseudo-likelihood Gibbs samplers.
//!
//! Three samplers share the data container [`FitData`] and the precision-form
//! normal kernel [`sample_gaussian_precision`]:
//!
//! * [`GaussianSampler`]: `Z₁ = Xβ₁ + ΦU + ε`, weighted by `w̃`.
//! * [`BinomialSampler`]: `logit p = Xβ₂ + ΦU` with Pólya–Gamma augmentation,
//!   `b_i = w̃_i n_i`, `κ_i = w̃_i (Z₂ᵢ − n_i/2)`.
//! * [`MultitypeSampler`]: both responses linked by a shared area effect `η`
//!   (scaled by `τ₁` in the Gaussian block) plus a binomial-only effect `ζ`.
//!
//! Every unit-to-area product `ΦᵀDΦ`, `ΦᵀDv` is computed by aggregating to
//! areas first, since `φ_i` is the basis row of the unit's area.

mod binomial;
mod chain;
mod gaussian;
mod multitype;

pub use binomial::{fit_binomial_univariate, BinomialSampler, BinomialState};
pub use chain::{ChainDraws, ModelChain, ModelKind};
pub use gaussian::{fit_gaussian_univariate, GaussianSampler, GaussianState};
pub use multitype::{fit_multitype, MultitypeSampler, MultitypeState};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::data_model::UnitRecord;
use crate::design::scale_weights;
use crate::error::{Error, Result};
use crate::pg::DEFAULT_TRUNCATION;
use crate::spatial_basis::BasisMatrix;

/// Random stream used by every sampler in the crate.
pub type SaeRng = Xoshiro256PlusPlus;

/// Floor applied to `ω_i` before forming `z_i = κ_i / ω_i`.
pub const OMEGA_FLOOR: f64 = 1e-12;

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    /// Prior standard deviation of every regression coefficient.
    pub sigma_beta: f64,
    pub a_eps: f64,
    pub b_eps: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a_zeta: f64,
    pub b_zeta: f64,
    pub a_u: f64,
    pub b_u: f64,
    /// Fixed prior variance of `τ₁`.
    pub sigma_tau2: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            sigma_beta: 1000.0,
            a_eps: 0.1,
            b_eps: 0.1,
            a_eta: 0.1,
            b_eta: 0.1,
            a_zeta: 0.1,
            b_zeta: 0.1,
            a_u: 0.1,
            b_u: 0.1,
            sigma_tau2: 1.0,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("sigma_beta", self.sigma_beta),
            ("a_eps", self.a_eps),
            ("b_eps", self.b_eps),
            ("a_eta", self.a_eta),
            ("b_eta", self.b_eta),
            ("a_zeta", self.a_zeta),
            ("b_zeta", self.b_zeta),
            ("a_u", self.a_u),
            ("b_u", self.b_u),
            ("sigma_tau2", self.sigma_tau2),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "prior {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn beta_precision(&self) -> f64 {
        1.0 / (self.sigma_beta * self.sigma_beta)
    }
}

/// Iteration counts, seed and PG truncation for one chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcSettings {
    pub n_iter: usize,
    pub n_burn: usize,
    pub seed: u64,
    pub pg_truncation: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            n_iter: 2000,
            n_burn: 1000,
            seed: 1,
            pg_truncation: DEFAULT_TRUNCATION,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(Error::IterationCounts {
                n_iter: self.n_iter,
                n_burn: self.n_burn,
            });
        }
        Ok(())
    }
}

/// Design matrices, responses and scaled weights for one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    /// `r × q` basis; `φ_i` is row `area[i]`.
    pub basis: DMatrix<f64>,
    pub area: Vec<usize>,
    pub z1: DVector<f64>,
    /// Binomial successes.
    pub z2: DVector<f64>,
    pub trials: DVector<f64>,
    /// Scaled weights `w̃`.
    pub w: DVector<f64>,
}

impl FitData {
    /// Builds fit inputs from units, scaling their design weights to sum to `n`.
    pub fn from_units(units: &[UnitRecord], basis: &BasisMatrix) -> Result<Self> {
        let w: Vec<f64> = units.iter().map(|u| u.weight).collect();
        let scaled = if units.is_empty() {
            Vec::new()
        } else {
            scale_weights(&w)?
        };
        Self::with_scaled_weights(units, basis, &scaled)
    }

    pub fn with_scaled_weights(
        units: &[UnitRecord],
        basis: &BasisMatrix,
        scaled: &[f64],
    ) -> Result<Self> {
        if scaled.len() != units.len() {
            return Err(Error::LengthMismatch {
                expected: units.len(),
                got: scaled.len(),
            });
        }
        for u in units {
            u.validate()?;
        }
        let (x1, x2, _) =
            crate::data_model::build_design_matrices(units, &BasisMatrix::empty(basis.r()))?;
        let area: Vec<usize> = units.iter().map(|u| u.area_id).collect();
        if let Some(&bad) = area.iter().find(|&&a| a >= basis.r()) {
            return Err(Error::UnknownArea(bad.to_string()));
        }
        Ok(Self {
            x1,
            x2,
            basis: basis.b.clone(),
            area,
            z1: DVector::from_iterator(units.len(), units.iter().map(|u| u.z1)),
            z2: DVector::from_iterator(units.len(), units.iter().map(|u| f64::from(u.z2))),
            trials: DVector::from_iterator(units.len(), units.iter().map(|u| f64::from(u.trials))),
            w: DVector::from_column_slice(scaled),
        })
    }

    pub fn n(&self) -> usize {
        self.area.len()
    }

    pub fn p1(&self) -> usize {
        self.x1.ncols()
    }

    pub fn p2(&self) -> usize {
        self.x2.ncols()
    }

    pub fn q(&self) -> usize {
        self.basis.ncols()
    }

    pub fn r(&self) -> usize {
        self.basis.nrows()
    }

    /// Dense `n × q` matrix of unit design vectors.
    pub fn phi(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.q(), |i, j| self.basis[(self.area[i], j)])
    }

    /// `b_i = w̃_i n_i`.
    pub fn pg_shape(&self) -> DVector<f64> {
        self.w.component_mul(&self.trials)
    }

    /// `κ_i = w̃_i (Z₂ᵢ − n_i/2)`.
    pub fn kappa(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| {
            self.w[i] * (self.z2[i] - 0.5 * self.trials[i])
        })
    }

    fn area_totals(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut s = DVector::zeros(self.r());
        for (i, &a) in self.area.iter().enumerate() {
            s[a] += v[i];
        }
        s
    }

    /// `Φᵀ v`.
    pub fn phi_t(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(&self.area_totals(v))
    }

    /// `Φᵀ diag(d) Φ`.
    pub fn phi_t_diag_phi(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let s = self.area_totals(d);
        let mut scaled = self.basis.clone();
        for (k, mut row) in scaled.row_iter_mut().enumerate() {
            row *= s[k];
        }
        self.basis.tr_mul(&scaled)
    }

    /// `Φ c`, one entry per unit.
    pub fn phi_times(&self, coef: &DVector<f64>) -> DVector<f64> {
        if self.q() == 0 {
            return DVector::zeros(self.n());
        }
        let by_area = &self.basis * coef;
        DVector::from_fn(self.n(), |i, _| by_area[self.area[i]])
    }
}

/// `Xᵀ diag(d) X` without forming the diagonal matrix.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut xd = x.clone();
    for (i, mut row) in xd.row_iter_mut().enumerate() {
        row *= d[i];
    }
    x.tr_mul(&xd)
}

/// Full-conditional normal law in information form: precision `Q`, shift `h`,
/// mean `Q⁻¹h`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalConditional {
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl NormalConditional {
    pub fn mean(&self) -> Result<DVector<f64>> {
        if self.shift.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let chol = self
            .precision
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(chol.solve(&self.shift))
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let chol = self
            .precision
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(chol.inverse())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        sample_gaussian_precision(&self.precision, &self.shift, rng)
    }
}

/// Inverse-gamma full conditional (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaConditional {
    pub shape: f64,
    pub rate: f64,
}

impl InvGammaConditional {
    pub fn mean(&self) -> f64 {
        self.rate / (self.shape - 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_inv_gamma(self.shape, self.rate, rng)
    }
}

/// Draws from `N(Q⁻¹h, Q⁻¹)` via the Cholesky factor `Q = LLᵀ`:
/// `x = Q⁻¹h + L⁻ᵀ z` with `z` standard normal.
pub fn sample_gaussian_precision<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    shift: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let dim = shift.len();
    if precision.nrows() != dim || precision.ncols() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: precision.nrows(),
        });
    }
    if dim == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = precision
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    if l.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let mean = chol.solve(shift);
    let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let noise = l
        .tr_solve_lower_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(mean + noise)
}

/// `1 / Gamma(shape, scale = 1/rate)`.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate)
        .expect("positive inverse-gamma parameters")
        .sample(rng);
    1.0 / g.max(f64::MIN_POSITIVE)
}

/// Weighted log pseudo-likelihood `Σ w̃_i log f(Z_i | θ)` of a model state.
pub trait PseudoLikelihood {
    fn log_pseudo_likelihood(&self, data: &FitData) -> f64;
}

impl PseudoLikelihood for GaussianState {
    fn log_pseudo_likelihood(&self, data: &FitData) -> f64 {
        GaussianState::log_pseudo_likelihood(self, data)
    }
}

impl PseudoLikelihood for BinomialState {
    fn log_pseudo_likelihood(&self, data: &FitData) -> f64 {
        BinomialState::log_pseudo_likelihood(self, data)
    }
}

impl PseudoLikelihood for MultitypeState {
    fn log_pseudo_likelihood(&self, data: &FitData) -> f64 {
        MultitypeState::log_pseudo_likelihood(self, data)
    }
}

/// Diagnostic evaluation of the weighted log pseudo-likelihood.
pub fn pseudo_likelihood_check<S: PseudoLikelihood>(state: &S, data: &FitData) -> f64 {
    state.log_pseudo_likelihood(data)
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weighted Gaussian log-density contribution `Σ w̃_i log N(z_i | μ_i, σ²)`.
pub(crate) fn gaussian_log_pl(
    w: &DVector<f64>,
    z: &DVector<f64>,
    mu: &DVector<f64>,
    sigma2: f64,
) -> f64 {
    let c = -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    (0..z.len())
        .map(|i| {
            let r = z[i] - mu[i];
            w[i] * (c - 0.5 * r * r / sigma2)
        })
        .sum()
}

/// Weighted binomial log-mass `Σ w̃_i log Bin(y_i | n_i, logit⁻¹ ψ_i)`.
pub(crate) fn binomial_log_pl(data: &FitData, psi: &DVector<f64>) -> f64 {
    (0..data.n())
        .map(|i| {
            let (y, n) = (data.z2[i], data.trials[i]);
            let log1pexp = if psi[i] > 0.0 {
                psi[i] + (-psi[i]).exp().ln_1p()
            } else {
                psi[i].exp().ln_1p()
            };
            let ln_choose = statrs::function::factorial::ln_binomial(n as u64, y as u64);
            data.w[i] * (ln_choose + y * psi[i] - n * log1pexp)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn precision_kernel_identity() {
        let mut rng = SaeRng::seed_from_u64(1);
        let q = DMatrix::<f64>::identity(2, 2);
        let h = DVector::zeros(2);
        let n = 100_000;
        let mut sum = DVector::<f64>::zeros(2);
        let mut outer = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = sample_gaussian_precision(&q, &h, &mut rng).unwrap();
            sum += &x;
            outer += &x * x.transpose();
        }
        let mean = sum / n as f64;
        let cov = outer / n as f64 - &mean * mean.transpose();
        let se = (1.0 / n as f64).sqrt();
        for i in 0..2 {
            assert!(mean[i].abs() < 4.0 * se);
            // Var of a sample variance ≈ 2/n
            assert!((cov[(i, i)] - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
        }
        assert!(cov[(0, 1)].abs() < 4.0 * se);
    }

    #[test]
    fn precision_kernel_scalar() {
        let mut rng = SaeRng::seed_from_u64(2);
        let q = DMatrix::from_element(1, 1, 4.0);
        let h = DVector::from_element(1, 8.0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_gaussian_precision(&q, &h, &mut rng).unwrap()[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 2.0).abs() < 4.0 * (0.25 / n as f64).sqrt());
        assert!((var - 0.25).abs() < 4.0 * 0.25 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn precision_kernel_rejects_singular() {
        let mut rng = SaeRng::seed_from_u64(3);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let h = DVector::zeros(2);
        assert!(matches!(
            sample_gaussian_precision(&q, &h, &mut rng),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn aggregated_products_match_dense() {
        let basis = DMatrix::from_row_slice(3, 2, &[0.5, 0.1, -0.3, 0.8, 0.2, 0.2]);
        let data = FitData {
            x1: DMatrix::from_element(5, 1, 1.0),
            x2: DMatrix::from_element(5, 1, 1.0),
            basis,
            area: vec![0, 2, 2, 1, 0],
            z1: DVector::zeros(5),
            z2: DVector::zeros(5),
            trials: DVector::from_element(5, 1.0),
            w: DVector::from_element(5, 1.0),
        };
        let phi = data.phi();
        let d = DVector::from_vec(vec![0.3, 1.2, 0.7, 2.0, 0.1]);
        let dense = phi.transpose() * DMatrix::from_diagonal(&d) * &phi;
        assert!((data.phi_t_diag_phi(&d) - dense).abs().max() < 1e-14);
        assert!((data.phi_t(&d) - phi.transpose() * &d).abs().max() < 1e-14);
        let c = DVector::from_vec(vec![1.5, -0.5]);
        assert!((data.phi_times(&c) - &phi * &c).abs().max() < 1e-14);
    }
}
