//! Logistic regression with independent N(0, 10²) coefficient priors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::{Dataset, PriorFraction};
use crate::rng::{domain, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub prior_sd: f64,
}

impl Default for LogisticModel {
    fn default() -> Self {
        LogisticModel { prior_sd: 10.0 }
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    /// theta = (beta0, beta1..betap); log likelihood plus `1/m` of the full
    /// normal log prior (constants included so subset posteriors telescope).
    pub fn log_posterior(&self, theta: &[f64], x: &DMatrix<f64>, y: &[u8], fraction: PriorFraction) -> f64 {
        let mut ll = 0.0;
        for (r, &yr) in y.iter().enumerate() {
            let eta = theta[0] + x.row(r).iter().zip(&theta[1..]).map(|(xi, b)| xi * b).sum::<f64>();
            ll += yr as f64 * eta - softplus(eta);
        }
        let tau2 = self.prior_sd * self.prior_sd;
        let log_norm = -(self.prior_sd.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let prior: f64 = theta.iter().map(|b| log_norm - 0.5 * b * b / tau2).sum();
        ll + fraction.value() * prior
    }

    /// Analytic gradient and Hessian of the subset log posterior.
    pub fn grad_hess(
        &self,
        theta: &[f64],
        x: &DMatrix<f64>,
        y: &[u8],
        fraction: PriorFraction,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let d = theta.len();
        let tau2 = self.prior_sd * self.prior_sd;
        let mut grad = DVector::from_fn(d, |j, _| -fraction.value() * theta[j] / tau2);
        let mut hess = DMatrix::from_diagonal_element(d, d, -fraction.value() / tau2);
        let mut xt = DVector::zeros(d);
        for (r, &yr) in y.iter().enumerate() {
            xt[0] = 1.0;
            for (j, v) in x.row(r).iter().enumerate() {
                xt[j + 1] = *v;
            }
            let eta = xt.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            let p = sigmoid(eta);
            grad.axpy(yr as f64 - p, &xt, 1.0);
            hess.syger(-(p * (1.0 - p)), &xt, &xt, 1.0);
        }
        for i in 0..d {
            for j in (i + 1)..d {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        (grad, hess)
    }
}

/// Synthetic logistic data: predictors N(0, Σ) with unit variance and
/// pairwise correlation `rho`; intercept 1; slope i is 0 for i < 10 and
/// `(-1)^{u_i}(1 + |N(0,1)|)` with `P(u_i = 1) = 0.6` for i >= 10.
pub fn generate_logistic(n: usize, p: usize, rho: f64, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    if n == 0 || p == 0 {
        return Err(Error::Config("generate_logistic needs n >= 1 and p >= 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("rho must lie in [0,1), got {rho}")));
    }
    let mut rng = stream(seed, &[domain::GENERATE]);
    let mut beta = vec![0.0; p + 1];
    beta[0] = 1.0;
    for (i, b) in beta.iter_mut().enumerate().skip(1) {
        if i >= 10 {
            let u = rng.random::<f64>() < 0.6;
            let z: f64 = rng.sample(StandardNormal);
            let sign = if u { -1.0 } else { 1.0 };
            *b = sign * (1.0 + z.abs());
        }
    }
    let shared = rho.sqrt();
    let own = (1.0 - rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let z0: f64 = rng.sample(StandardNormal);
        let mut eta = beta[0];
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            let v = own * z + shared * z0;
            x[(r, j)] = v;
            eta += beta[j + 1] * v;
        }
        y.push(if rng.random::<f64>() < sigmoid(eta) { 1 } else { 0 });
    }
    Ok((Dataset::Logistic { x, y }, beta))
}
