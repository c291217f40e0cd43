//! Shared fixtures and independent oracles for the integration and acceptance tests.
#![allow(dead_code)]

pub mod oracles;

use mtsae::data_model::AreaSet;
use mtsae::gibbs::{FitData, MultitypeSampler, MultitypeState, Priors, SaeRng};
use mtsae::pg::PgSampler;
use mtsae::spatial_basis::{adjacency_eigenbasis, DEFAULT_EIGEN_TOL};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

/// Small dense fixture: `n` units spread over 4 areas with a 3-column basis
/// that is deliberately not orthonormal.
pub fn small_fixture(n: usize, trials: f64) -> FitData {
    let basis = DMatrix::from_row_slice(
        4,
        3,
        &[
            0.6, 0.2, -0.1, 0.3, -0.7, 0.4, 0.5, 0.4, 0.9, -0.2, 0.1, 0.3,
        ],
    );
    FitData {
        x1: DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => (i as f64 * 0.37).sin(),
            _ => (i % 3) as f64 * 0.5,
        }),
        x2: DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i % 2) as f64 }),
        basis,
        area: (0..n).map(|i| (i * 3) % 4).collect(),
        z1: DVector::from_fn(n, |i, _| 0.3 + 0.15 * (i as f64 * 1.3).cos()),
        z2: DVector::from_fn(n, |i, _| ((i * 7) % 3) as f64 % (trials + 1.0)),
        trials: DVector::from_element(n, trials),
        w: DVector::from_fn(n, |i, _| 0.4 + 0.13 * i as f64),
    }
}

/// A sampler placed at an arbitrary non-default state with fixed `ω`.
pub fn frozen_multitype(data: FitData, priors: Priors) -> MultitypeSampler {
    let mut rng = SaeRng::seed_from_u64(0);
    let n = data.n();
    let mut s = MultitypeSampler::new(data, priors, PgSampler::default(), &mut rng).unwrap();
    s.state = MultitypeState {
        beta1: DVector::from_vec(vec![0.2, -0.4, 0.1]),
        beta2: DVector::from_vec(vec![-0.3, 0.8]),
        eta: DVector::from_vec(vec![0.5, -0.25, 0.1]),
        zeta: DVector::from_vec(vec![-0.2, 0.3, 0.05]),
        tau1: 0.7,
        sigma2: 0.09,
        sigma_eta2: 0.8,
        sigma_zeta2: 1.3,
    };
    s.omega = DVector::from_fn(n, |i, _| 0.15 + 0.05 * ((i * 5) % 7) as f64);
    s
}

/// Dense evaluation of `(Q⁻¹h, Q⁻¹)` by general matrix inversion.
pub fn dense_moments(
    precision: &DMatrix<f64>,
    shift: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let cov = precision.clone().try_inverse().expect("invertible");
    (&cov * shift, cov)
}

pub fn max_abs_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn max_abs_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Dense oracle of every normal block of the joint model at a frozen state.
pub struct JointOracle {
    pub beta1: (DVector<f64>, DMatrix<f64>),
    pub beta2: (DVector<f64>, DMatrix<f64>),
    pub eta: (DVector<f64>, DMatrix<f64>),
    pub zeta: (DVector<f64>, DMatrix<f64>),
    pub tau1: (f64, f64),
    /// Inverse-gamma (shape, rate) of σ².
    pub sigma2: (f64, f64),
}

pub fn joint_oracle(
    data: &FitData,
    state: &MultitypeState,
    omega: &DVector<f64>,
    priors: &Priors,
) -> JointOracle {
    let n = data.n();
    let q = data.q();
    let phi = DMatrix::from_fn(n, q, |i, j| data.basis[(data.area[i], j)]);
    let w = DMatrix::from_diagonal(&data.w);
    let d = &w / state.sigma2;
    let om = DMatrix::from_diagonal(omega);
    let kappa = DVector::from_fn(n, |i, _| data.w[i] * (data.z2[i] - data.trials[i] / 2.0));
    let z = DVector::from_fn(n, |i, _| kappa[i] / omega[i]);
    let sb = 1.0 / (priors.sigma_beta * priors.sigma_beta);

    let p1 = data.x1.ncols();
    let q1 = data.x1.transpose() * &d * &data.x1 + DMatrix::identity(p1, p1) * sb;
    let h1 = data.x1.transpose() * &d * (&data.z1 - &phi * &state.eta * state.tau1);

    let p2 = data.x2.ncols();
    let q2 = data.x2.transpose() * &om * &data.x2 + DMatrix::identity(p2, p2) * sb;
    let h2 = data.x2.transpose() * &om * (&z - &phi * &state.eta - &phi * &state.zeta);

    let q_g = phi.transpose() * (&w / state.sigma2) * &phi;
    let q_b = phi.transpose() * &om * &phi;
    let qe = &q_g * (state.tau1 * state.tau1) + &q_b + DMatrix::identity(q, q) / state.sigma_eta2;
    let he =
        phi.transpose() * &w * (&data.z1 - &data.x1 * &state.beta1) * (state.tau1 / state.sigma2)
            + phi.transpose() * &kappa
            - phi.transpose() * &om * (&data.x2 * &state.beta2 + &phi * &state.zeta);

    let qz = &q_b + DMatrix::identity(q, q) / state.sigma_zeta2;
    let hz = phi.transpose() * &om * (&z - &data.x2 * &state.beta2 - &phi * &state.eta);

    let v = &phi * &state.eta;
    let qt = (v.transpose() * &d * &v)[(0, 0)] + 1.0 / priors.sigma_tau2;
    let ht = (v.transpose() * &d * (&data.z1 - &data.x1 * &state.beta1))[(0, 0)];

    let resid = &data.z1 - &data.x1 * &state.beta1 - &v * state.tau1;
    let rate = priors.b_eps + 0.5 * (resid.transpose() * &w * &resid)[(0, 0)];
    let shape = priors.a_eps + 0.5 * data.w.sum();

    JointOracle {
        beta1: dense_moments(&q1, &h1),
        beta2: dense_moments(&q2, &h2),
        eta: dense_moments(&qe, &he),
        zeta: dense_moments(&qz, &hz),
        tau1: (ht / qt, 1.0 / qt),
        sigma2: (shape, rate),
    }
}

/// Standard error of a mean from a correlated series, by non-overlapping batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Proper priors so that every monitored moment exists.
pub fn geweke_priors() -> Priors {
    Priors {
        sigma_beta: 1.0,
        a_eps: 3.0,
        b_eps: 2.0,
        a_eta: 3.0,
        b_eta: 2.0,
        a_zeta: 3.0,
        b_zeta: 2.0,
        a_u: 3.0,
        b_u: 2.0,
        sigma_tau2: 1.0,
    }
}

/// Twenty units with intercepts only, two trials each, unit weights, on a
/// four-area path graph (two positive eigenvalues, so `q = 2`).
pub fn geweke_data() -> FitData {
    let areas = AreaSet::from_edge_list_str("0 1\n1 2\n2 3\n").unwrap();
    let basis = adjacency_eigenbasis(&areas.adjacency, DEFAULT_EIGEN_TOL).unwrap();
    assert_eq!(basis.q(), 2);
    let n = 20;
    FitData {
        x1: DMatrix::from_element(n, 1, 1.0),
        x2: DMatrix::from_element(n, 1, 1.0),
        basis: basis.b,
        area: (0..n).map(|i| i % 4).collect(),
        z1: DVector::zeros(n),
        z2: DVector::zeros(n),
        trials: DVector::from_element(n, 2.0),
        w: DVector::from_element(n, 1.0),
    }
}

pub const GEWEKE_NAMES: [&str; 9] = [
    "beta1",
    "beta2",
    "tau1",
    "sigma2",
    "sigma_eta2",
    "sigma_zeta2",
    "beta1^2",
    "beta2^2",
    "tau1^2",
];

fn geweke_stats(s: &MultitypeState) -> [f64; 9] {
    [
        s.beta1[0],
        s.beta2[0],
        s.tau1,
        s.sigma2,
        s.sigma_eta2,
        s.sigma_zeta2,
        s.beta1[0] * s.beta1[0],
        s.beta2[0] * s.beta2[0],
        s.tau1 * s.tau1,
    ]
}

/// Geweke joint-distribution test. Returns one z-score per monitored moment.
pub fn geweke_z_scores(sweeps: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let priors = geweke_priors();
    let template = geweke_data();
    let (p1, p2, q) = (template.p1(), template.p2(), template.q());
    let mut rng = SaeRng::seed_from_u64(seed);

    // marginal-conditional: independent prior draws
    let mut marginal: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); GEWEKE_NAMES.len()];
    for _ in 0..sweeps {
        let s = MultitypeState::draw_prior(&priors, p1, p2, q, &mut rng);
        for (k, v) in geweke_stats(&s).into_iter().enumerate() {
            marginal[k].push(v);
        }
    }

    // successive-conditional: Gibbs sweep, then fresh data given the new state
    let start = MultitypeState::draw_prior(&priors, p1, p2, q, &mut rng);
    let mut data = template.clone();
    start.simulate_responses(&mut data, &mut rng);
    let mut sampler = MultitypeSampler::new(data, priors, PgSampler::default(), &mut rng).unwrap();
    sampler.state = start;
    sampler.update_omega(&mut rng).unwrap();
    let mut successive: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); GEWEKE_NAMES.len()];
    for _ in 0..sweeps {
        sampler.sweep(&mut rng).unwrap();
        let mut data = sampler.data().clone();
        sampler.state.simulate_responses(&mut data, &mut rng);
        sampler.set_responses(data.z1, data.z2);
        sampler.update_omega(&mut rng).unwrap();
        for (k, v) in geweke_stats(&sampler.state).into_iter().enumerate() {
            successive[k].push(v);
        }
    }

    GEWEKE_NAMES
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            let se_m2 = sample_variance(&marginal[k]) / sweeps as f64;
            let se_s = batch_means_se(&successive[k], 50);
            let z = (mean(&marginal[k]) - mean(&successive[k])) / (se_m2 + se_s * se_s).sqrt();
            (name, z)
        })
        .collect()
}

/// Uniform in `[lo, hi)` helper for fixture generation.
pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
