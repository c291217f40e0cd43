use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::{
    binomial_log_pl, gaussian_log_pl, logistic, sample_inv_gamma, weighted_gram, ChainDraws,
    FitData, InvGammaConditional, McmcSettings, ModelChain, NormalConditional, Priors, SaeRng,
    OMEGA_FLOOR,
};
use crate::error::Result;
use crate::pg::PgSampler;

/// One draw of the joint model (without the Pólya–Gamma auxiliaries).
#[derive(Debug, Clone, PartialEq)]
pub struct MultitypeState {
    pub beta1: DVector<f64>,
    pub beta2: DVector<f64>,
    pub eta: DVector<f64>,
    pub zeta: DVector<f64>,
    pub tau1: f64,
    pub sigma2: f64,
    pub sigma_eta2: f64,
    pub sigma_zeta2: f64,
}

impl MultitypeState {
    pub fn initial(p1: usize, p2: usize, q: usize) -> Self {
        Self {
            beta1: DVector::zeros(p1),
            beta2: DVector::zeros(p2),
            eta: DVector::zeros(q),
            zeta: DVector::zeros(q),
            tau1: 1.0,
            sigma2: 1.0,
            sigma_eta2: 1.0,
            sigma_zeta2: 1.0,
        }
    }

    /// Draws every parameter from its prior. Needs proper inverse-gamma priors
    /// (any positive shape works for sampling; moments need shape > 2).
    pub fn draw_prior<R: Rng + ?Sized>(
        priors: &Priors,
        p1: usize,
        p2: usize,
        q: usize,
        rng: &mut R,
    ) -> Self {
        let sigma_eta2 = sample_inv_gamma(priors.a_eta, priors.b_eta, rng);
        let sigma_zeta2 = sample_inv_gamma(priors.a_zeta, priors.b_zeta, rng);
        let sigma2 = sample_inv_gamma(priors.a_eps, priors.b_eps, rng);
        let mut normal = |sd: f64, len: usize| {
            DVector::from_fn(len, |_, _| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                sd * z
            })
        };
        let beta1 = normal(priors.sigma_beta, p1);
        let beta2 = normal(priors.sigma_beta, p2);
        let eta = normal(sigma_eta2.sqrt(), q);
        let zeta = normal(sigma_zeta2.sqrt(), q);
        let tau1 = normal(priors.sigma_tau2.sqrt(), 1)[0];
        Self {
            beta1,
            beta2,
            eta,
            zeta,
            tau1,
            sigma2,
            sigma_eta2,
            sigma_zeta2,
        }
    }

    pub fn gaussian_mean(&self, data: &FitData) -> DVector<f64> {
        &data.x1 * &self.beta1 + data.phi_times(&self.eta) * self.tau1
    }

    /// `ψ = X₂β₂ + Φη + Φζ`.
    pub fn linear_predictor(&self, data: &FitData) -> DVector<f64> {
        &data.x2 * &self.beta2 + data.phi_times(&(&self.eta + &self.zeta))
    }

    /// Joint log pseudo-likelihood of both responses.
    pub fn log_pseudo_likelihood(&self, data: &FitData) -> f64 {
        gaussian_log_pl(&data.w, &data.z1, &self.gaussian_mean(data), self.sigma2)
            + binomial_log_pl(data, &self.linear_predictor(data))
    }

    /// Replaces both responses in `data` with draws from the model at this state.
    pub fn simulate_responses<R: Rng + ?Sized>(&self, data: &mut FitData, rng: &mut R) {
        let mu = self.gaussian_mean(data);
        let psi = self.linear_predictor(data);
        let sd = self.sigma2.sqrt();
        for i in 0..data.n() {
            let e: f64 = StandardNormal.sample(rng);
            data.z1[i] = mu[i] + sd * e;
            let trials = data.trials[i] as u64;
            data.z2[i] = Binomial::new(trials, logistic(psi[i]))
                .expect("valid binomial probability")
                .sample(rng) as f64;
        }
    }
}

/// Gibbs sampler for the joint Gaussian–binomial model.
#[derive(Debug, Clone)]
pub struct MultitypeSampler {
    data: FitData,
    priors: Priors,
    pg: PgSampler,
    shape: DVector<f64>,
    kappa: DVector<f64>,
    pub omega: DVector<f64>,
    pub state: MultitypeState,
}

impl MultitypeSampler {
    /// Starts from the default state with `ω_i ~ PG(b_i, 0)`.
    pub fn new(data: FitData, priors: Priors, pg: PgSampler, rng: &mut SaeRng) -> Result<Self> {
        priors.validate()?;
        let state = MultitypeState::initial(data.p1(), data.p2(), data.q());
        let shape = data.pg_shape();
        let kappa = data.kappa();
        let mut sampler = Self {
            omega: DVector::zeros(data.n()),
            data,
            priors,
            pg,
            shape,
            kappa,
            state,
        };
        for i in 0..sampler.data.n() {
            sampler.omega[i] = sampler.pg.draw(sampler.shape[i], 0.0, rng);
        }
        Ok(sampler)
    }

    pub fn data(&self) -> &FitData {
        &self.data
    }

    /// Swaps in new responses (same design) and refreshes `κ`.
    pub fn set_responses(&mut self, z1: DVector<f64>, z2: DVector<f64>) {
        self.data.z1 = z1;
        self.data.z2 = z2;
        self.kappa = self.data.kappa();
    }

    /// `z_i = κ_i / ω_i`.
    pub fn working_response(&self) -> DVector<f64> {
        self.kappa
            .zip_map(&self.omega, |k, w| k / w.max(OMEGA_FLOOR))
    }

    fn gaussian_precision(&self) -> DVector<f64> {
        &self.data.w / self.state.sigma2
    }

    pub fn beta1_conditional(&self) -> NormalConditional {
        let d = self.gaussian_precision();
        let mut precision = weighted_gram(&self.data.x1, &d);
        for j in 0..precision.nrows() {
            precision[(j, j)] += self.priors.beta_precision();
        }
        let resid = &self.data.z1 - self.data.phi_times(&self.state.eta) * self.state.tau1;
        let shift = self.data.x1.tr_mul(&d.component_mul(&resid));
        NormalConditional { precision, shift }
    }

    pub fn beta2_conditional(&self) -> NormalConditional {
        let mut precision = weighted_gram(&self.data.x2, &self.omega);
        for j in 0..precision.nrows() {
            precision[(j, j)] += self.priors.beta_precision();
        }
        let effect = self.data.phi_times(&(&self.state.eta + &self.state.zeta));
        let resid = self.working_response() - effect;
        let shift = self.data.x2.tr_mul(&self.omega.component_mul(&resid));
        NormalConditional { precision, shift }
    }

    /// Precision `τ₁²Q_G + Q_B + σ_η⁻²I`, with `Q_G = Φᵀ(W/σ²)Φ`, `Q_B = ΦᵀΩΦ`.
    pub fn eta_conditional(&self) -> NormalConditional {
        let q = self.data.q();
        let s = &self.state;
        let q_g = self.data.phi_t_diag_phi(&self.gaussian_precision());
        let q_b = self.data.phi_t_diag_phi(&self.omega);
        let precision = q_g * (s.tau1 * s.tau1) + q_b + DMatrix::identity(q, q) / s.sigma_eta2;

        let gauss_resid = &self.data.z1 - &self.data.x1 * &s.beta1;
        let binom_offset = &self.data.x2 * &s.beta2 + self.data.phi_times(&s.zeta);
        let shift = self.data.phi_t(&self.data.w.component_mul(&gauss_resid)) * (s.tau1 / s.sigma2)
            + self.data.phi_t(&self.kappa)
            - self.data.phi_t(&self.omega.component_mul(&binom_offset));
        NormalConditional { precision, shift }
    }

    pub fn zeta_conditional(&self) -> NormalConditional {
        let q = self.data.q();
        let s = &self.state;
        let precision =
            self.data.phi_t_diag_phi(&self.omega) + DMatrix::identity(q, q) / s.sigma_zeta2;
        let resid =
            self.working_response() - &self.data.x2 * &s.beta2 - self.data.phi_times(&s.eta);
        let shift = self.data.phi_t(&self.omega.component_mul(&resid));
        NormalConditional { precision, shift }
    }

    /// Scalar regression of `Z₁ − X₁β₁` on `Φη`.
    pub fn tau1_conditional(&self) -> NormalConditional {
        let d = self.gaussian_precision();
        let s = &self.state;
        let effect = self.data.phi_times(&s.eta);
        let resid = &self.data.z1 - &self.data.x1 * &s.beta1;
        let dv = d.component_mul(&effect);
        let precision = effect.dot(&dv) + 1.0 / self.priors.sigma_tau2;
        NormalConditional {
            precision: DMatrix::from_element(1, 1, precision),
            shift: DVector::from_element(1, dv.dot(&resid)),
        }
    }

    pub fn sigma2_conditional(&self) -> InvGammaConditional {
        let s = &self.state;
        let resid = &self.data.z1 - &self.data.x1 * &s.beta1 - self.data.phi_times(&s.eta) * s.tau1;
        let ss: f64 = (0..self.data.n())
            .map(|i| self.data.w[i] * resid[i] * resid[i])
            .sum();
        InvGammaConditional {
            shape: self.priors.a_eps + 0.5 * self.data.w.sum(),
            rate: self.priors.b_eps + 0.5 * ss,
        }
    }

    pub fn sigma_eta2_conditional(&self) -> InvGammaConditional {
        InvGammaConditional {
            shape: self.priors.a_eta + 0.5 * self.data.q() as f64,
            rate: self.priors.b_eta + 0.5 * self.state.eta.norm_squared(),
        }
    }

    pub fn sigma_zeta2_conditional(&self) -> InvGammaConditional {
        InvGammaConditional {
            shape: self.priors.a_zeta + 0.5 * self.data.q() as f64,
            rate: self.priors.b_zeta + 0.5 * self.state.zeta.norm_squared(),
        }
    }

    pub fn update_beta1(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.state.beta1 = self.beta1_conditional().sample(rng)?;
        Ok(())
    }

    pub fn update_beta2(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.state.beta2 = self.beta2_conditional().sample(rng)?;
        Ok(())
    }

    pub fn update_eta(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.state.eta = self.eta_conditional().sample(rng)?;
        Ok(())
    }

    pub fn update_zeta(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.state.zeta = self.zeta_conditional().sample(rng)?;
        Ok(())
    }

    pub fn update_tau1(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.state.tau1 = self.tau1_conditional().sample(rng)?[0];
        Ok(())
    }

    pub fn update_sigma2(&mut self, rng: &mut SaeRng) {
        self.state.sigma2 = self.sigma2_conditional().sample(rng);
    }

    pub fn update_sigma_eta2(&mut self, rng: &mut SaeRng) {
        self.state.sigma_eta2 = self.sigma_eta2_conditional().sample(rng);
    }

    pub fn update_sigma_zeta2(&mut self, rng: &mut SaeRng) {
        self.state.sigma_zeta2 = self.sigma_zeta2_conditional().sample(rng);
    }

    /// `ω_i ~ PG(b_i, ψ_i)`.
    pub fn update_omega(&mut self, rng: &mut SaeRng) -> Result<()> {
        let psi = self.state.linear_predictor(&self.data);
        for i in 0..self.data.n() {
            self.omega[i] = self.pg.draw(self.shape[i], psi[i], rng);
        }
        Ok(())
    }

    /// One sweep: β₁, β₂, η, ζ, τ₁, σ², σ_η², σ_ζ², ω.
    pub fn sweep(&mut self, rng: &mut SaeRng) -> Result<()> {
        self.update_beta1(rng)?;
        self.update_beta2(rng)?;
        self.update_eta(rng)?;
        self.update_zeta(rng)?;
        self.update_tau1(rng)?;
        self.update_sigma2(rng);
        self.update_sigma_eta2(rng);
        self.update_sigma_zeta2(rng);
        self.update_omega(rng)
    }
}

/// Runs the joint sampler and keeps the post-burn-in draws.
pub fn fit_multitype(
    data: &FitData,
    priors: &Priors,
    settings: &McmcSettings,
) -> Result<ModelChain> {
    settings.validate()?;
    let mut rng = SaeRng::seed_from_u64(settings.seed);
    let pg = PgSampler::with_truncation(settings.pg_truncation);
    let mut sampler = MultitypeSampler::new(data.clone(), priors.clone(), pg, &mut rng)?;
    let mut draws = Vec::with_capacity(settings.n_iter - settings.n_burn);
    for it in 0..settings.n_iter {
        sampler.sweep(&mut rng)?;
        if it >= settings.n_burn {
            draws.push(sampler.state.clone());
        }
    }
    Ok(ModelChain::new(ChainDraws::Multitype(draws), settings))
}
