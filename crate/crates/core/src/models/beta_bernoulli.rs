//! Bernoulli likelihood with a Beta(0.01, 0.01) prior; every subset
//! posterior and the full posterior are analytic Betas, making this the
//! conjugate oracle for the combination methods.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::{Dataset, PriorFraction};
use crate::rng::{domain, stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaBernoulliModel {
    pub a: f64,
    pub b: f64,
}

impl Default for BetaBernoulliModel {
    fn default() -> Self {
        BetaBernoulliModel { a: 0.01, b: 0.01 }
    }
}

impl BetaBernoulliModel {
    /// Fractionated conjugate update: the subset posterior is
    /// `Beta(a', b')` with `a' = (a-1)/m + 1 + s` and
    /// `b' = (b-1)/m + 1 + (n-s)`.
    ///
    /// The `(a-1)/m + 1` form is what makes the subset posteriors
    /// multiply back to the full `Beta(a+s, b+n-s)`: the exponents
    /// `a'_i - 1` sum to `a - 1 + s_total` across subsets.
    pub fn posterior_params(&self, s: f64, n: f64, fraction: PriorFraction) -> Result<(f64, f64)> {
        if !(0.0..=n).contains(&s) {
            return Err(Error::Config(format!("need 0 <= s <= n, got s={s}, n={n}")));
        }
        let a1 = (self.a - 1.0) * fraction.value() + 1.0 + s;
        let b1 = (self.b - 1.0) * fraction.value() + 1.0 + (n - s);
        if a1 <= 0.0 || b1 <= 0.0 {
            return Err(Error::Config(format!(
                "fractionated Beta parameters must be positive, got ({a1}, {b1})"
            )));
        }
        Ok((a1, b1))
    }

    /// Full-data posterior `Beta(a + s, b + n - s)`.
    pub fn analytic_posterior(&self, s: f64, n: f64) -> (f64, f64) {
        (self.a + s, self.b + n - s)
    }

    /// Unnormalized subset log posterior on (0,1).
    pub fn log_posterior(&self, theta: f64, s: f64, n: f64, fraction: PriorFraction) -> f64 {
        if !(0.0..=1.0).contains(&theta) || theta == 0.0 || theta == 1.0 {
            return f64::NEG_INFINITY;
        }
        let f = fraction.value();
        let a1 = (self.a - 1.0) * f + s;
        let b1 = (self.b - 1.0) * f + (n - s);
        a1 * theta.ln() + b1 * (1.0 - theta).ln()
    }

    pub fn grad_hess(
        &self,
        theta: f64,
        s: f64,
        n: f64,
        fraction: PriorFraction,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Chain(format!("theta {theta} outside (0,1)")));
        }
        let f = fraction.value();
        let a1 = (self.a - 1.0) * f + s;
        let b1 = (self.b - 1.0) * f + (n - s);
        let grad = a1 / theta - b1 / (1.0 - theta);
        let hess = -a1 / (theta * theta) - b1 / ((1.0 - theta) * (1.0 - theta));
        Ok((
            DVector::from_vec(vec![grad]),
            DMatrix::from_vec(1, 1, vec![hess]),
        ))
    }
}

/// `n` i.i.d. Bernoulli(`prob`) trials.
pub fn generate_bernoulli(n: usize, prob: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Config(format!("prob must lie in [0,1], got {prob}")));
    }
    if n == 0 {
        return Err(Error::Config("generate_bernoulli needs n >= 1".into()));
    }
    let mut rng = stream(seed, &[domain::GENERATE]);
    let y = (0..n).map(|_| if rng.random::<f64>() < prob { 1 } else { 0 }).collect();
    Ok(Dataset::Bernoulli { y })
}
