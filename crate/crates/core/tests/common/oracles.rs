//! Checks shared by the integration tests and the acceptance binary.
//! Each returns labelled deviations so callers can apply their own tolerance.

use mtsae::gibbs::{
    BinomialSampler, GaussianSampler, GaussianState, InvGammaConditional, MultitypeSampler,
    NormalConditional, Priors, SaeRng,
};
use mtsae::pg::PgSampler;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;

use super::*;

pub fn oracle_priors() -> Priors {
    Priors {
        sigma_beta: 2.0,
        sigma_tau2: 1.7,
        a_eta: 3.0,
        a_zeta: 3.0,
        a_u: 3.0,
        b_u: 0.4,
        ..Priors::default()
    }
}

fn normal_error(cond: &NormalConditional, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let m = cond.mean().unwrap();
    let c = cond.covariance().unwrap();
    max_abs_diff_vec(&m, mean).max(max_abs_diff_mat(&c, cov))
}

fn ig_error(cond: &InvGammaConditional, shape: f64, rate: f64) -> f64 {
    (cond.shape - shape).abs().max((cond.rate - rate).abs())
}

/// Univariate Gaussian sampler on a 2-column fixture at a fixed state.
pub fn gaussian_fixture() -> GaussianSampler {
    let mut data = small_fixture(6, 1.0);
    data.x1 = data.x1.columns(0, 2).into_owned();
    data.basis = data.basis.columns(0, 2).into_owned();
    let mut sampler = GaussianSampler::new(data, oracle_priors()).unwrap();
    sampler.state = GaussianState {
        beta: DVector::from_vec(vec![0.1, 0.3]),
        u: DVector::from_vec(vec![-0.4, 0.2]),
        sigma2: 0.2,
        sigma_u2: 0.6,
    };
    sampler
}

/// Univariate binomial sampler on a 2-column fixture with fixed `ω`.
pub fn binomial_fixture() -> BinomialSampler {
    let mut data = small_fixture(6, 1.0);
    data.basis = data.basis.columns(0, 2).into_owned();
    let mut rng = SaeRng::seed_from_u64(3);
    let mut sampler =
        BinomialSampler::new(data, oracle_priors(), PgSampler::default(), &mut rng).unwrap();
    sampler.state.beta = DVector::from_vec(vec![0.4, -0.6]);
    sampler.state.u = DVector::from_vec(vec![0.3, 0.1]);
    sampler.state.sigma_u2 = 0.5;
    sampler.omega = DVector::from_fn(6, |i, _| 0.2 + 0.03 * i as f64);
    sampler
}

pub fn multitype_fixture(trials: f64) -> MultitypeSampler {
    frozen_multitype(small_fixture(8, trials), oracle_priors())
}

/// Maximum absolute deviation of every full conditional from a dense
/// hand-formula oracle, per block.
pub fn conditional_errors() -> Vec<(String, f64)> {
    let p = oracle_priors();
    let sb = 1.0 / (p.sigma_beta * p.sigma_beta);
    let mut out = Vec::new();

    for trials in [1.0, 3.0] {
        let s = multitype_fixture(trials);
        let o = joint_oracle(s.data(), &s.state, &s.omega, &p);
        let tag = |name: &str| format!("multitype[{trials}] {name}");
        out.push((
            tag("beta1"),
            normal_error(&s.beta1_conditional(), &o.beta1.0, &o.beta1.1),
        ));
        out.push((
            tag("beta2"),
            normal_error(&s.beta2_conditional(), &o.beta2.0, &o.beta2.1),
        ));
        out.push((
            tag("eta"),
            normal_error(&s.eta_conditional(), &o.eta.0, &o.eta.1),
        ));
        out.push((
            tag("zeta"),
            normal_error(&s.zeta_conditional(), &o.zeta.0, &o.zeta.1),
        ));
        let tau = s.tau1_conditional();
        let tau_err = (tau.mean().unwrap()[0] - o.tau1.0)
            .abs()
            .max((tau.covariance().unwrap()[(0, 0)] - o.tau1.1).abs());
        out.push((tag("tau1"), tau_err));
        out.push((
            tag("sigma2"),
            ig_error(&s.sigma2_conditional(), o.sigma2.0, o.sigma2.1),
        ));
        let q = s.data().q() as f64;
        out.push((
            tag("sigma_eta2"),
            ig_error(
                &s.sigma_eta2_conditional(),
                p.a_eta + q / 2.0,
                p.b_eta + 0.5 * s.state.eta.norm_squared(),
            ),
        ));
        out.push((
            tag("sigma_zeta2"),
            ig_error(
                &s.sigma_zeta2_conditional(),
                p.a_zeta + q / 2.0,
                p.b_zeta + 0.5 * s.state.zeta.norm_squared(),
            ),
        ));
    }

    let g = gaussian_fixture();
    let data = g.data();
    let n = data.n();
    let phi = DMatrix::from_fn(n, 2, |i, j| data.basis[(data.area[i], j)]);
    let w = DMatrix::from_diagonal(&data.w);
    let d = &w / g.state.sigma2;
    let qb = data.x1.transpose() * &d * &data.x1 + DMatrix::identity(2, 2) * sb;
    let hb = data.x1.transpose() * &d * (&data.z1 - &phi * &g.state.u);
    let (mb, cb) = dense_moments(&qb, &hb);
    out.push((
        "gaussian beta".into(),
        normal_error(&g.beta_conditional(), &mb, &cb),
    ));
    let qu = phi.transpose() * &d * &phi + DMatrix::identity(2, 2) / g.state.sigma_u2;
    let hu = phi.transpose() * &d * (&data.z1 - &data.x1 * &g.state.beta);
    let (mu, cu) = dense_moments(&qu, &hu);
    out.push((
        "gaussian u".into(),
        normal_error(&g.u_conditional(), &mu, &cu),
    ));
    let resid = &data.z1 - &data.x1 * &g.state.beta - &phi * &g.state.u;
    let rate = p.b_eps + 0.5 * (resid.transpose() * &w * &resid)[(0, 0)];
    out.push((
        "gaussian sigma2".into(),
        ig_error(&g.sigma2_conditional(), p.a_eps + 0.5 * data.w.sum(), rate),
    ));
    out.push((
        "gaussian sigma_u2".into(),
        ig_error(
            &g.sigma_u2_conditional(),
            p.a_u + 1.0,
            p.b_u + 0.5 * g.state.u.norm_squared(),
        ),
    ));

    let b = binomial_fixture();
    let data = b.data();
    let n = data.n();
    let phi = DMatrix::from_fn(n, 2, |i, j| data.basis[(data.area[i], j)]);
    let om = DMatrix::from_diagonal(&b.omega);
    // Bernoulli: κ_i = w̃_i (Z₂ᵢ − ½)
    let z = DVector::from_fn(n, |i, _| data.w[i] * (data.z2[i] - 0.5) / b.omega[i]);
    let qb = data.x2.transpose() * &om * &data.x2 + DMatrix::identity(2, 2) * sb;
    let hb = data.x2.transpose() * &om * (&z - &phi * &b.state.u);
    let (mb, cb) = dense_moments(&qb, &hb);
    out.push((
        "binomial beta".into(),
        normal_error(&b.beta_conditional(), &mb, &cb),
    ));
    let qu = phi.transpose() * &om * &phi + DMatrix::identity(2, 2) / b.state.sigma_u2;
    let hu = phi.transpose() * &om * (&z - &data.x2 * &b.state.beta);
    let (mu, cu) = dense_moments(&qu, &hu);
    out.push((
        "binomial u".into(),
        normal_error(&b.u_conditional(), &mu, &cu),
    ));
    out.push((
        "binomial sigma_u2".into(),
        ig_error(
            &b.sigma_u2_conditional(),
            p.a_u + 1.0,
            p.b_u + 0.5 * b.state.u.norm_squared(),
        ),
    ));
    out
}

/// z-score of the empirical mean of repeated draws against the
/// inverse-gamma mean `b / (a − 1)`, with standard deviation `mean / √(a − 2)`.
fn ig_mean_z(xs: &[f64], shape: f64, rate: f64) -> f64 {
    let target = rate / (shape - 1.0);
    let se = target / (shape - 2.0).sqrt() / (xs.len() as f64).sqrt();
    (mean(xs) - target) / se
}

/// Repeated draws of each variance component from a frozen state, scored
/// against hand-computed inverse-gamma parameters.
pub fn variance_component_z(draws: usize, seed: u64) -> Vec<(String, f64)> {
    let p = oracle_priors();
    let mut rng = SaeRng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut s = multitype_fixture(1.0);
    let frozen = s.state.clone();
    let o = joint_oracle(s.data(), &frozen, &s.omega, &p);
    let q = s.data().q() as f64;
    let mut collect = |f: &mut dyn FnMut(&mut SaeRng) -> f64| {
        (0..draws).map(|_| f(&mut rng)).collect::<Vec<f64>>()
    };
    let xs = collect(&mut |r| {
        s.update_sigma2(r);
        std::mem::replace(&mut s.state.sigma2, frozen.sigma2)
    });
    out.push((
        "multitype sigma2".into(),
        ig_mean_z(&xs, o.sigma2.0, o.sigma2.1),
    ));
    let xs = collect(&mut |r| {
        s.update_sigma_eta2(r);
        std::mem::replace(&mut s.state.sigma_eta2, frozen.sigma_eta2)
    });
    out.push((
        "multitype sigma_eta2".into(),
        ig_mean_z(
            &xs,
            p.a_eta + q / 2.0,
            p.b_eta + 0.5 * frozen.eta.norm_squared(),
        ),
    ));
    let xs = collect(&mut |r| {
        s.update_sigma_zeta2(r);
        std::mem::replace(&mut s.state.sigma_zeta2, frozen.sigma_zeta2)
    });
    out.push((
        "multitype sigma_zeta2".into(),
        ig_mean_z(
            &xs,
            p.a_zeta + q / 2.0,
            p.b_zeta + 0.5 * frozen.zeta.norm_squared(),
        ),
    ));

    let mut g = gaussian_fixture();
    let gs = g.state.clone();
    let (shape, rate) = {
        let c = g.sigma2_conditional();
        (c.shape, c.rate)
    };
    // the shape/rate themselves are checked against the oracle in `conditional_errors`
    let xs = collect(&mut |r| {
        g.update_sigma2(r);
        std::mem::replace(&mut g.state.sigma2, gs.sigma2)
    });
    out.push(("gaussian sigma2".into(), ig_mean_z(&xs, shape, rate)));
    let xs = collect(&mut |r| {
        g.update_sigma_u2(r);
        std::mem::replace(&mut g.state.sigma_u2, gs.sigma_u2)
    });
    out.push((
        "gaussian sigma_u2".into(),
        ig_mean_z(&xs, p.a_u + 1.0, p.b_u + 0.5 * gs.u.norm_squared()),
    ));

    let mut b = binomial_fixture();
    let bs = b.state.clone();
    let xs = collect(&mut |r| {
        b.update_sigma_u2(r);
        std::mem::replace(&mut b.state.sigma_u2, bs.sigma_u2)
    });
    out.push((
        "binomial sigma_u2".into(),
        ig_mean_z(&xs, p.a_u + 1.0, p.b_u + 0.5 * bs.u.norm_squared()),
    ));
    out
}
