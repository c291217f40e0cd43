use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;

use super::{
    binomial_log_pl, weighted_gram, ChainDraws, FitData, InvGammaConditional, McmcSettings,
    ModelChain, NormalConditional, Priors, SaeRng, OMEGA_FLOOR,
};
use crate::error::Result;
use crate::pg::PgSampler;

/// One draw of the univariate binomial model. The Pólya–Gamma auxiliaries
/// live in the sampler, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialState {
    pub beta: DVector<f64>,
    pub u: DVector<f64>,
    pub sigma_u2: f64,
}

impl BinomialState {
    pub fn initial(p: usize, q: usize) -> Self {
        Self {
            beta: DVector::zeros(p),
            u: DVector::zeros(q),
            sigma_u2: 1.0,
        }
    }

    pub fn linear_predictor(&self, data: &FitData) -> DVector<f64> {
        &data.x2 * &self.beta + data.phi_times(&self.u)
    }

    pub fn log_pseudo_likelihood(&self, data: &FitData) -> f64 {
        binomial_log_pl(data, &self.linear_predictor(data))
    }
}

/// Pólya–Gamma Gibbs sampler for `logit p = Xβ + ΦU`.
#[derive(Debug, Clone)]
pub struct BinomialSampler {
    data: FitData,
    priors: Priors,
    pg: PgSampler,
    shape: DVector<f64>,
    kappa: DVector<f64>,
    pub omega: DVector<f64>,
    pub state: BinomialState,
}

impl BinomialSampler {
    /// Starts from the default state with `ω_i ~ PG(b_i, 0)`.
    pub fn new(data: FitData, priors: Priors, pg: PgSampler, rng: &mut SaeRng) -> Result<Self> {
        priors.validate()?;
        let shape = data.pg_shape();
        let kappa = data.kappa();
        let omega = shape.map(|b| pg.draw(b, 0.0, rng));
        let state = BinomialState::initial(data.p2(), data.q());
        Ok(Self {
            data,
            priors,
            pg,
            shape,
            kappa,
            omega,
            state,
        })
    }

    pub fn data(&self) -> &FitData {
        &self.data
    }

    /// Working response `z_i = κ_i / ω_i`.
    pub fn working_response(&self) -> DVector<f64> {
        self.kappa
            .zip_map(&self.omega, |k, w| k / w.max(OMEGA_FLOOR))
    }

    pub fn beta_conditional(&self) -> NormalConditional {
        let mut precision = weighted_gram(&self.data.x2, &self.omega);
        for j in 0..precision.nrows() {
            precision[(j, j)] += self.priors.beta_precision();
        }
        let resid = self.working_response() - self.data.phi_times(&self.state.u);
        let shift = self.data.x2.tr_mul(&self.omega.component_mul(&resid));
        NormalConditional { precision, shift }
    }

    pub fn u_conditional(&self) -> NormalConditional {
        let q = self.data.q();
        let precision =
            self.data.phi_t_diag_phi(&self.omega) + DMatrix::identity(q, q) / self.state.sigma_u2;
        let resid = self.working_response() - &self.data.x2 * &self.state.beta;
        let shift = self.data.phi_t(&self.omega.component_mul(&resid));
        NormalConditional { precision, shift }
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

    pub fn update_sigma_u2(&mut self, rng: &mut SaeRng) {
        self.state.sigma_u2 = self.sigma_u2_conditional().sample(rng);
    }

    /// `ω_i ~ PG(b_i, ψ_i)`.
    pub fn update_omega(&mut self, rng: &mut SaeRng) -> Result<()> {
        let psi = self.state.linear_predictor(&self.data);
        for i in 0..self.data.n() {
            self.omega[i] = self.pg.draw(self.shape[i], psi[i], rng);
        }
        Ok(())
    }

    /// One sweep: β, U, σ_u², ω.
    pub fn sweep(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.update_beta(rng)?;
        self.update_u(rng)?;
        self.update_sigma_u2(rng);
        self.update_omega(rng)
    }
}

/// Runs the univariate binomial sampler and keeps the post-burn-in draws.
pub fn fit_binomial_univariate(
    data: &FitData,
    priors: &Priors,
    settings: &McmcSettings,
) -> Result<ModelChain> {
    settings.validate()?;
    let mut rng = SaeRng::seed_from_u64(settings.seed);
    let pg = PgSampler::with_truncation(settings.pg_truncation);
    let mut sampler = BinomialSampler::new(data.clone(), priors.clone(), pg, &mut rng)?;
    let mut draws = Vec::with_capacity(settings.n_iter - settings.n_burn);
    for it in 0..settings.n_iter {
        sampler.sweep(&mut rng)?;
        if it >= settings.n_burn {
            draws.push(sampler.state.clone());
        }
    }
    Ok(ModelChain::new(ChainDraws::Binomial(draws), settings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli(successes: &[f64], w: &[f64]) -> FitData {
        let n = successes.len();
        FitData {
            x1: DMatrix::from_element(n, 1, 1.0),
            x2: DMatrix::from_element(n, 1, 1.0),
            basis: DMatrix::zeros(1, 0),
            area: vec![0; n],
            z1: DVector::zeros(n),
            z2: DVector::from_column_slice(successes),
            trials: DVector::from_element(n, 1.0),
            w: DVector::from_column_slice(w),
        }
    }

    #[test]
    fn bernoulli_shape_and_kappa() {
        let data = bernoulli(&[1.0, 0.0], &[0.6, 1.4]);
        assert_eq!(data.pg_shape().as_slice(), &[0.6, 1.4]);
        assert_eq!(data.kappa().as_slice(), &[0.6 * 0.5, 1.4 * -0.5]);
    }

    #[test]
    fn all_successes_push_intercept_up() {
        let data = bernoulli(&[1.0; 10], &[1.0; 10]);
        let priors = Priors {
            sigma_beta: 10.0,
            ..Priors::default()
        };
        let settings = McmcSettings {
            n_iter: 600,
            n_burn: 100,
            seed: 5,
            pg_truncation: 50,
        };
        let chain = fit_binomial_univariate(&data, &priors, &settings).unwrap();
        let ChainDraws::Binomial(draws) = &chain.draws else {
            panic!()
        };
        let mean = draws.iter().map(|s| s.beta[0]).sum::<f64>() / draws.len() as f64;
        assert!(mean > 0.0);
    }

    #[test]
    fn working_response_floors_omega() {
        let data = bernoulli(&[1.0], &[1.0]);
        let mut rng = SaeRng::seed_from_u64(1);
        let mut sampler =
            BinomialSampler::new(data, Priors::default(), PgSampler::default(), &mut rng).unwrap();
        sampler.omega[0] = 0.0;
        assert_eq!(sampler.working_response()[0], 0.5 / OMEGA_FLOOR);
    }
}
