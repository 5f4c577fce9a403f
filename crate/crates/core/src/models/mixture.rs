//! Three-component Gaussian location mixture with fixed component sd.
//!
//! Component means get independent N(2, 3²) priors and the weights a
//! Dirichlet(1,1,1) prior; the Gibbs sweep never applies label-switching
//! moves, so modes are explored only through the sampler's own dynamics.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::models::{Dataset, PriorFraction};
use crate::rng::{domain, stream, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureModel {
    pub n_components: usize,
    pub component_sd: f64,
    pub mean_prior_mean: f64,
    pub mean_prior_sd: f64,
    pub weight_prior: Vec<f64>,
}

impl Default for MixtureModel {
    fn default() -> Self {
        MixtureModel {
            n_components: 3,
            component_sd: 0.5,
            mean_prior_mean: 2.0,
            mean_prior_sd: 3.0,
            weight_prior: vec![1.0, 1.0, 1.0],
        }
    }
}

/// Gibbs state: component means, weights, and per-observation allocations.
#[derive(Clone, Debug)]
pub struct MixtureState {
    pub means: Vec<f64>,
    pub weights: Vec<f64>,
    pub alloc: Vec<usize>,
}

impl MixtureModel {
    /// Empirical-quantile starting means (stable label order).
    pub fn quantile_means(&self, xs: &[f64]) -> Vec<f64> {
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = self.n_components;
        (1..=k)
            .map(|j| {
                let q = j as f64 / (k as f64 + 1.0);
                sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)]
            })
            .collect()
    }

    pub fn init_state(&self, xs: &[f64]) -> MixtureState {
        MixtureState {
            means: self.quantile_means(xs),
            weights: vec![1.0 / self.n_components as f64; self.n_components],
            alloc: vec![0; xs.len()],
        }
    }

    /// Starting means drawn as random data points (one per component), used
    /// by the sequential sampler's replicas to diversify mode labelings.
    pub fn init_state_random(&self, xs: &[f64], rng: &mut Stream) -> MixtureState {
        let means = (0..self.n_components)
            .map(|_| xs[rng.random_range(0..xs.len())])
            .collect();
        MixtureState {
            means,
            weights: vec![1.0 / self.n_components as f64; self.n_components],
            alloc: vec![0; xs.len()],
        }
    }

    /// Draw weights from the fractionated Dirichlet full conditional with
    /// parameters `fraction*(alpha_j - 1) + 1 + count_j`.
    pub fn dirichlet_weights(&self, counts: &[usize], fraction: PriorFraction, rng: &mut Stream) -> Vec<f64> {
        let mut g = Vec::with_capacity(counts.len());
        for (j, &c) in counts.iter().enumerate() {
            let shape = fraction.value() * (self.weight_prior[j] - 1.0) + 1.0 + c as f64;
            let gamma = Gamma::new(shape, 1.0).expect("positive Dirichlet shape");
            g.push(gamma.sample(rng));
        }
        let total: f64 = g.iter().sum();
        g.iter().map(|v| v / total).collect()
    }

    /// One Gibbs sweep: allocations, weights, then each unfrozen mean from
    /// its normal full conditional. `tether` adds a Gaussian likelihood
    /// term `N(anchor_j, tether_var_j)` on mean `j`; `frozen` masks means
    /// that must stay fixed (their allocations still participate).
    pub fn gibbs_sweep(
        &self,
        state: &mut MixtureState,
        xs: &[f64],
        fraction: PriorFraction,
        tether: Option<(&[f64], &[f64])>,
        frozen: Option<&[bool]>,
        rng: &mut Stream,
    ) {
        let k = self.n_components;
        let sd = self.component_sd;
        let var = sd * sd;

        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0; k];
        let mut logits = vec![0.0; k];
        for (t, &x) in xs.iter().enumerate() {
            for j in 0..k {
                let d = x - state.means[j];
                logits[j] = state.weights[j].max(1e-300).ln() - 0.5 * d * d / var;
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut cum = 0.0;
            let mut probs = vec![0.0; k];
            for j in 0..k {
                cum += (logits[j] - mx).exp();
                probs[j] = cum;
            }
            let u: f64 = rng.random::<f64>() * cum;
            let mut pick = k - 1;
            for (j, c) in probs.iter().enumerate() {
                if u <= *c {
                    pick = j;
                    break;
                }
            }
            state.alloc[t] = pick;
            counts[pick] += 1;
            sums[pick] += x;
        }

        state.weights = self.dirichlet_weights(&counts, fraction, rng);

        let prior_prec = fraction.value() / (self.mean_prior_sd * self.mean_prior_sd);
        let prior_num = prior_prec * self.mean_prior_mean;
        for j in 0..k {
            if frozen.map(|f| f[j]).unwrap_or(false) {
                continue;
            }
            let mut prec = prior_prec + counts[j] as f64 / var;
            let mut num = prior_num + sums[j] / var;
            if let Some((anchor, tvar)) = tether {
                prec += 1.0 / tvar[j];
                num += anchor[j] / tvar[j];
            }
            let post_mean = num / prec;
            let z: f64 = rng.sample(StandardNormal);
            state.means[j] = post_mean + z / prec.sqrt();
        }
    }

    /// Profile log posterior over means with weights fixed at the
    /// Dirichlet(1,1,1) prior mean (equal); used for diagnostics only, the
    /// sampler itself is the Gibbs sweep over the full state.
    pub fn log_posterior(&self, means: &[f64], xs: &[f64], fraction: PriorFraction) -> f64 {
        let k = self.n_components as f64;
        let var = self.component_sd * self.component_sd;
        let log_norm = -(self.component_sd.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut ll = 0.0;
        for &x in xs {
            let mut mx = f64::NEG_INFINITY;
            let terms: Vec<f64> = means
                .iter()
                .map(|mu| {
                    let d = x - mu;
                    let t = -(k.ln()) + log_norm - 0.5 * d * d / var;
                    if t > mx {
                        mx = t;
                    }
                    t
                })
                .collect();
            ll += mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
        }
        let prior_var = self.mean_prior_sd * self.mean_prior_sd;
        let prior_norm = -(self.mean_prior_sd.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mean_prior: f64 = means
            .iter()
            .map(|mu| prior_norm - 0.5 * (mu - self.mean_prior_mean) * (mu - self.mean_prior_mean) / prior_var)
            .sum();
        let weight_prior_const = statrs::function::gamma::ln_gamma(self.weight_prior.iter().sum::<f64>())
            - self.weight_prior.iter().map(|a| statrs::function::gamma::ln_gamma(*a)).sum::<f64>();
        ll + fraction.value() * (mean_prior + weight_prior_const)
    }
}

/// i.i.d. draws from ½N(0, 0.5²) + ¼N(2, 0.5²) + ¼N(4, 0.5²).
pub fn generate_mixture(n: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, &[domain::GENERATE]);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mu = if u < 0.5 {
            0.0
        } else if u < 0.75 {
            2.0
        } else {
            4.0
        };
        let z: f64 = rng.sample(StandardNormal);
        x.push(mu + 0.5 * z);
    }
    Dataset::Mixture { x }
}

/// Validate that a config-supplied mixture model is usable.
pub fn validate(model: &MixtureModel) -> Result<()> {
    if model.n_components == 0 || model.weight_prior.len() != model.n_components {
        return Err(Error::Config("mixture weight prior must match component count".into()));
    }
    if !(model.component_sd > 0.0 && model.mean_prior_sd > 0.0) {
        return Err(Error::Config("mixture scale parameters must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GridDensity;
    use approx::assert_relative_eq;

    fn xs(data: &Dataset) -> &[f64] {
        match data {
            Dataset::Mixture { x } => x,
            _ => unreachable!(),
        }
    }

    #[test]
    fn generator_moments_and_modes() {
        let data = generate_mixture(10_000, 42);
        let x = xs(&data);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        // Analytic mean 0*1/2 + 2*1/4 + 4*1/4 = 1.5; sd of the mixture is
        // sqrt(E X^2 - 2.25) = sqrt(5.25 + 0.25 - 2.25).
        let sd = (3.25f64).sqrt();
        assert!((mean - 1.5).abs() < 3.0 * sd / (x.len() as f64).sqrt());
        assert!(x.iter().cloned().fold(f64::INFINITY, f64::min) > -4.0);
        assert!(x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) < 8.0);
        let kde = GridDensity::from_samples(x, None, 1001).unwrap();
        let peaks = kde.local_maxima(0.15);
        assert_eq!(peaks.len(), 3, "peaks at {peaks:?}");
        for (peak, truth) in peaks.iter().zip([0.0, 2.0, 4.0]) {
            assert!((peak - truth).abs() < 0.35, "peak {peak} vs {truth}");
        }
    }

    #[test]
    fn weights_conditional_matches_dirichlet_moments() {
        let model = MixtureModel::default();
        let mut rng = stream(3, &[1]);
        let counts = [500usize, 250, 250];
        let mut acc = [0.0; 3];
        let reps = 2000;
        for _ in 0..reps {
            let w = model.dirichlet_weights(&counts, PriorFraction::whole(), &mut rng);
            for j in 0..3 {
                acc[j] += w[j];
            }
        }
        for (j, target) in [0.5, 0.25, 0.25].iter().enumerate() {
            let mean = acc[j] / reps as f64;
            assert!((mean - target).abs() < 0.05, "weight {j}: {mean}");
        }
    }

    #[test]
    fn concentrated_data_pins_the_busy_component() {
        let model = MixtureModel::default();
        let data = Dataset::Mixture { x: vec![0.0; 1000] };
        let x = xs(&data);
        let mut state = model.init_state(x);
        let mut rng = stream(7, &[2]);
        let mut busy_mean = 0.0;
        let sweeps = 200;
        for s in 0..(100 + sweeps) {
            model.gibbs_sweep(&mut state, x, PriorFraction::whole(), None, None, &mut rng);
            if s >= 100 {
                let busy = (0..3).max_by_key(|j| state.alloc.iter().filter(|a| *a == j).count()).unwrap();
                busy_mean += state.means[busy];
            }
        }
        busy_mean /= sweeps as f64;
        assert!(busy_mean.abs() < 0.1, "busy component mean {busy_mean}");
    }

    #[test]
    fn tiny_tether_dominates_the_conditional() {
        let model = MixtureModel::default();
        let data = generate_mixture(300, 11);
        let x = xs(&data);
        let mut state = model.init_state(x);
        let mut rng = stream(9, &[3]);
        let anchor = [-5.0, 1.0, 9.0];
        let tvar = [1e-8, 1e-8, 1e-8];
        for _ in 0..5 {
            model.gibbs_sweep(&mut state, x, PriorFraction::whole(), Some((&anchor, &tvar)), None, &mut rng);
        }
        for j in 0..3 {
            assert!(
                (state.means[j] - anchor[j]).abs() < 3.0 * tvar[j].sqrt() + 1e-3,
                "mean {j} = {} anchored at {}",
                state.means[j],
                anchor[j]
            );
        }
    }

    #[test]
    fn frozen_means_never_move() {
        let model = MixtureModel::default();
        let data = generate_mixture(200, 13);
        let x = xs(&data);
        let mut state = model.init_state(x);
        state.means[0] = -7.5;
        let mut rng = stream(4, &[8]);
        for _ in 0..10 {
            model.gibbs_sweep(
                &mut state,
                x,
                PriorFraction::new(5).unwrap(),
                None,
                Some(&[true, false, false]),
                &mut rng,
            );
        }
        assert_eq!(state.means[0], -7.5);
    }

    #[test]
    fn profile_posterior_prefers_true_means() {
        let model = MixtureModel::default();
        let data = generate_mixture(2000, 17);
        let x = xs(&data);
        let good = model.log_posterior(&[0.0, 2.0, 4.0], x, PriorFraction::whole());
        let bad = model.log_posterior(&[1.0, 1.0, 1.0], x, PriorFraction::whole());
        assert!(good > bad + 100.0);
    }

    #[test]
    fn quantile_means_are_sorted() {
        let model = MixtureModel::default();
        let data = generate_mixture(500, 23);
        let m = model.quantile_means(xs(&data));
        assert!(m.windows(2).all(|w| w[0] <= w[1]));
        assert_relative_eq!(m.len() as f64, 3.0, epsilon = 0.0);
    }
}
