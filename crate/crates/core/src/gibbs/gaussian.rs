use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;

use super::{
    gaussian_log_pl, weighted_gram, ChainDraws, FitData, InvGammaConditional, McmcSettings,
    ModelChain, NormalConditional, Priors, SaeRng,
};
use crate::error::Result;

/// One draw of the univariate Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub beta: DVector<f64>,
    pub u: DVector<f64>,
    pub sigma2: f64,
    pub sigma_u2: f64,
}

impl GaussianState {
    pub fn initial(p: usize, q: usize) -> Self {
        Self {
            beta: DVector::zeros(p),
            u: DVector::zeros(q),
            sigma2: 1.0,
            sigma_u2: 1.0,
        }
    }

    pub fn mean_vector(&self, data: &FitData) -> DVector<f64> {
        &data.x1 * &self.beta + data.phi_times(&self.u)
    }

    /// `Σ w̃_i log N(Z₁ᵢ | x_iᵀβ + φ_iᵀU, σ²)`.
    pub fn log_pseudo_likelihood(&self, data: &FitData) -> f64 {
        gaussian_log_pl(&data.w, &data.z1, &self.mean_vector(data), self.sigma2)
    }
}

/// Gibbs sampler for `Z₁ = Xβ + ΦU + ε` under weights `w̃`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    data: FitData,
    priors: Priors,
    pub state: GaussianState,
}

impl GaussianSampler {
    pub fn new(data: FitData, priors: Priors) -> Result<Self> {
        priors.validate()?;
        let state = GaussianState::initial(data.p1(), data.q());
        Ok(Self {
            data,
            priors,
            state,
        })
    }

    pub fn data(&self) -> &FitData {
        &self.data
    }

    fn unit_precision(&self) -> DVector<f64> {
        &self.data.w / self.state.sigma2
    }

    pub fn beta_conditional(&self) -> NormalConditional {
        let d = self.unit_precision();
        let mut precision = weighted_gram(&self.data.x1, &d);
        for j in 0..precision.nrows() {
            precision[(j, j)] += self.priors.beta_precision();
        }
        let resid = &self.data.z1 - self.data.phi_times(&self.state.u);
        let shift = self.data.x1.tr_mul(&d.component_mul(&resid));
        NormalConditional { precision, shift }
    }

    pub fn u_conditional(&self) -> NormalConditional {
        let q = self.data.q();
        let d = self.unit_precision();
        let precision =
            self.data.phi_t_diag_phi(&d) + DMatrix::identity(q, q) / self.state.sigma_u2;
        let resid = &self.data.z1 - &self.data.x1 * &self.state.beta;
        let shift = self.data.phi_t(&d.component_mul(&resid));
        NormalConditional { precision, shift }
    }

    pub fn sigma2_conditional(&self) -> InvGammaConditional {
        let resid = &self.data.z1 - self.state.mean_vector(&self.data);
        let ss: f64 = (0..self.data.n())
            .map(|i| self.data.w[i] * resid[i] * resid[i])
            .sum();
        InvGammaConditional {
            shape: self.priors.a_eps + 0.5 * self.data.w.sum(),
            rate: self.priors.b_eps + 0.5 * ss,
        }
    }

    pub fn sigma_u2_conditional(&self) -> InvGammaConditional {
        InvGammaConditional {
            shape: self.priors.a_u + 0.5 * self.data.q() as f64,
            rate: self.priors.b_u + 0.5 * self.state.u.norm_squared(),
        }
    }

    pub fn update_beta(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.state.beta = self.beta_conditional().sample(rng)?;
        Ok(())
    }

    pub fn update_u(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.state.u = self.u_conditional().sample(rng)?;
        Ok(())
    }

    pub fn update_sigma2(&mut self, rng: &mut SaeRng) {
        self.state.sigma2 = self.sigma2_conditional().sample(rng);
    }

    pub fn update_sigma_u2(&mut self, rng: &mut SaeRng) {
        self.state.sigma_u2 = self.sigma_u2_conditional().sample(rng);
    }

    /// One sweep: β, U, σ², σ_u².
    pub fn sweep(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.update_beta(rng)?;
        self.update_u(rng)?;
        self.update_sigma2(rng);
        self.update_sigma_u2(rng);
        Ok(())
    }
}

/// Runs the univariate Gaussian sampler and keeps the post-burn-in draws.
pub fn fit_gaussian_univariate(
    data: &FitData,
    priors: &Priors,
    settings: &McmcSettings,
) -> Result<ModelChain> {
    settings.validate()?;
    let mut rng = SaeRng::seed_from_u64(settings.seed);
    let mut sampler = GaussianSampler::new(data.clone(), priors.clone())?;
    let mut draws = Vec::with_capacity(settings.n_iter - settings.n_burn);
    for it in 0..settings.n_iter {
        sampler.sweep(&mut rng)?;
        if it >= settings.n_burn {
            draws.push(sampler.state.clone());
        }
    }
    Ok(ModelChain::new(ChainDraws::Gaussian(draws), settings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_unit(z: f64) -> FitData {
        FitData {
            x1: DMatrix::from_element(1, 1, 1.0),
            x2: DMatrix::from_element(1, 1, 1.0),
            basis: DMatrix::zeros(1, 0),
            area: vec![0],
            z1: DVector::from_element(1, z),
            z2: DVector::zeros(1),
            trials: DVector::from_element(1, 1.0),
            w: DVector::from_element(1, 1.0),
        }
    }

    #[test]
    fn single_unit_beta_conditional() {
        let priors = Priors::default();
        let sampler = GaussianSampler::new(one_unit(0.7), priors.clone()).unwrap();
        let cond = sampler.beta_conditional();
        let v = 1.0 / (1.0 + 1.0 / (priors.sigma_beta * priors.sigma_beta));
        assert!((cond.mean().unwrap()[0] - v * 0.7).abs() < 1e-14);
        assert!((cond.covariance().unwrap()[(0, 0)] - v).abs() < 1e-14);
    }

    #[test]
    fn zero_data_concentrates_near_zero() {
        let mut data = one_unit(0.0);
        data.x1 = DMatrix::from_element(5, 1, 1.0);
        data.x2 = data.x1.clone();
        data.area = vec![0; 5];
        data.z1 = DVector::zeros(5);
        data.z2 = DVector::zeros(5);
        data.trials = DVector::from_element(5, 1.0);
        data.w = DVector::from_element(5, 1.0);
        let priors = Priors {
            sigma_beta: 0.01,
            ..Priors::default()
        };
        let settings = McmcSettings {
            n_iter: 400,
            n_burn: 100,
            seed: 9,
            ..Default::default()
        };
        let chain = fit_gaussian_univariate(&data, &priors, &settings).unwrap();
        let ChainDraws::Gaussian(draws) = &chain.draws else {
            panic!()
        };
        assert_eq!(draws.len(), 300);
        let mean = draws.iter().map(|s| s.beta[0]).sum::<f64>() / 300.0;
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn deterministic_chain() {
        let data = one_unit(0.3);
        let settings = McmcSettings {
            n_iter: 50,
            n_burn: 10,
            seed: 4,
            ..Default::default()
        };
        let a = fit_gaussian_univariate(&data, &Priors::default(), &settings).unwrap();
        let b = fit_gaussian_univariate(&data, &Priors::default(), &settings).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_pl_examples() {
        let mut data = one_unit(0.4);
        let state = GaussianState {
            beta: DVector::from_element(1, 0.4),
            u: DVector::zeros(0),
            sigma2: 1.0 / (2.0 * std::f64::consts::PI),
            sigma_u2: 1.0,
        };
        // z = μ and 2πσ² = 1 → log-density 0
        assert!(state.log_pseudo_likelihood(&data).abs() < 1e-15);
        let off = GaussianState {
            beta: DVector::from_element(1, 0.0),
            ..state.clone()
        };
        let single = off.log_pseudo_likelihood(&data);
        // −½ r²/σ² with r = 0.4
        assert!((single + 0.5 * 0.16 * 2.0 * std::f64::consts::PI).abs() < 1e-12);
        data.w *= 2.0;
        assert!((off.log_pseudo_likelihood(&data) - 2.0 * single).abs() < 1e-12);
        data.w *= 0.0;
        assert_eq!(off.log_pseudo_likelihood(&data), 0.0);
    }
}
