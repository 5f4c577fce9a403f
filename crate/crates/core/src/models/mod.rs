//! Benchmark models: targets, fractionated priors, and data generators.
//!
//! Each subset works with the fractionated prior `p_i ∝ p^{1/m}`, so the
//! product of subset posteriors is proportional to the full posterior.

pub mod beta_bernoulli;
pub mod logistic;
pub mod mixture;
pub mod toy;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use beta_bernoulli::{generate_bernoulli, BetaBernoulliModel};
pub use logistic::{generate_logistic, LogisticModel};
pub use mixture::{generate_mixture, MixtureModel, MixtureState};
pub use toy::{toy_density, ToyBimodal, ToyPart};

use crate::error::{Error, Result};

/// Prior fractionation denominator: subset priors are `p^{1/m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorFraction {
    m: u32,
}

impl PriorFraction {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("prior fraction denominator must be >= 1".into()));
        }
        Ok(PriorFraction { m: m as u32 })
    }

    /// The unfractionated prior (m = 1).
    pub fn whole() -> Self {
        PriorFraction { m: 1 }
    }

    pub fn m(&self) -> usize {
        self.m as usize
    }

    /// The exponent 1/m applied to the prior density.
    pub fn value(&self) -> f64 {
        1.0 / self.m as f64
    }
}

/// Observations, tagged by the model schema that consumes them.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    /// Binary responses with standardized predictors.
    Logistic { x: DMatrix<f64>, y: Vec<u8> },
    /// Univariate mixture observations.
    Mixture { x: Vec<f64> },
    /// Bernoulli trials.
    Bernoulli { y: Vec<u8> },
    /// Toy pseudo-observations: each row names one of the two analytic
    /// subset densities.
    Toy { parts: Vec<u8> },
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Logistic { y, .. } => y.len(),
            Dataset::Mixture { x } => x.len(),
            Dataset::Bernoulli { y } => y.len(),
            Dataset::Toy { parts } => parts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schema(&self) -> &'static str {
        match self {
            Dataset::Logistic { .. } => "logistic",
            Dataset::Mixture { .. } => "mixture",
            Dataset::Bernoulli { .. } => "bernoulli",
            Dataset::Toy { .. } => "toy",
        }
    }

    /// Extract the rows at `idx` (order preserved).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        match self {
            Dataset::Logistic { x, y } => {
                let mut xs = DMatrix::zeros(idx.len(), x.ncols());
                let mut ys = Vec::with_capacity(idx.len());
                for (r, &i) in idx.iter().enumerate() {
                    xs.set_row(r, &x.row(i));
                    ys.push(y[i]);
                }
                Dataset::Logistic { x: xs, y: ys }
            }
            Dataset::Mixture { x } => Dataset::Mixture {
                x: idx.iter().map(|&i| x[i]).collect(),
            },
            Dataset::Bernoulli { y } => Dataset::Bernoulli {
                y: idx.iter().map(|&i| y[i]).collect(),
            },
            Dataset::Toy { parts } => Dataset::Toy {
                parts: idx.iter().map(|&i| parts[i]).collect(),
            },
        }
    }

    /// Write the dataset as headed CSV (`y,x1..xp` / `x` / `y` / `part`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        match self {
            Dataset::Logistic { x, y } => {
                let mut header = vec!["y".to_string()];
                header.extend((1..=x.ncols()).map(|j| format!("x{j}")));
                w.write_record(&header)?;
                for (r, yi) in y.iter().enumerate() {
                    let mut rec = vec![yi.to_string()];
                    rec.extend(x.row(r).iter().map(|v| v.to_string()));
                    w.write_record(&rec)?;
                }
            }
            Dataset::Mixture { x } => {
                w.write_record(["x"])?;
                for v in x {
                    w.write_record([v.to_string()])?;
                }
            }
            Dataset::Bernoulli { y } => {
                w.write_record(["y"])?;
                for v in y {
                    w.write_record([v.to_string()])?;
                }
            }
            Dataset::Toy { parts } => {
                w.write_record(["part"])?;
                for v in parts {
                    w.write_record([v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read a dataset written by [`Dataset::write_csv`].
    pub fn read_csv(path: &Path, schema: &str) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        match schema {
            "logistic" => {
                let p = headers.len().saturating_sub(1);
                if p == 0 || &headers[0] != "y" {
                    return Err(Error::Config(format!(
                        "logistic csv needs header y,x1..xp, got {headers:?}"
                    )));
                }
                let mut rows: Vec<Vec<f64>> = Vec::new();
                let mut y = Vec::new();
                for rec in r.records() {
                    let rec = rec?;
                    y.push(parse_binary(&rec[0])?);
                    let row: Vec<f64> = rec
                        .iter()
                        .skip(1)
                        .map(|v| v.parse::<f64>().map_err(|e| Error::Config(format!("bad value {v}: {e}"))))
                        .collect::<Result<_>>()?;
                    if row.len() != p {
                        return Err(Error::Config("ragged logistic csv row".into()));
                    }
                    rows.push(row);
                }
                let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
                Ok(Dataset::Logistic {
                    x: DMatrix::from_row_slice(y.len(), p, &flat),
                    y,
                })
            }
            "mixture" => {
                let mut x = Vec::new();
                for rec in r.records() {
                    let rec = rec?;
                    x.push(
                        rec[0]
                            .parse::<f64>()
                            .map_err(|e| Error::Config(format!("bad value {}: {e}", &rec[0])))?,
                    );
                }
                Ok(Dataset::Mixture { x })
            }
            "bernoulli" => {
                let mut y = Vec::new();
                for rec in r.records() {
                    let rec = rec?;
                    y.push(parse_binary(&rec[0])?);
                }
                Ok(Dataset::Bernoulli { y })
            }
            "toy" => {
                let mut parts = Vec::new();
                for rec in r.records() {
                    let rec = rec?;
                    let v: u8 = rec[0]
                        .parse()
                        .map_err(|e| Error::Config(format!("bad part {}: {e}", &rec[0])))?;
                    if v != 1 && v != 2 {
                        return Err(Error::Config(format!("toy part must be 1 or 2, got {v}")));
                    }
                    parts.push(v);
                }
                Ok(Dataset::Toy { parts })
            }
            other => Err(Error::Config(format!("unknown dataset schema {other}"))),
        }
    }
}

fn parse_binary(v: &str) -> Result<u8> {
    match v {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Config(format!("binary column must be 0/1, got {other}"))),
    }
}

/// The model zoo.
#[derive(Clone, Debug)]
pub enum ModelKind {
    Logistic(LogisticModel),
    Mixture(MixtureModel),
    BetaBernoulli(BetaBernoulliModel),
    Toy(ToyBimodal),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logistic(_) => "logistic",
            ModelKind::Mixture(_) => "mixture",
            ModelKind::BetaBernoulli(_) => "beta_bernoulli",
            ModelKind::Toy(_) => "toy_bimodal",
        }
    }

    fn check_schema(&self, data: &Dataset) -> Result<()> {
        let ok = matches!(
            (self, data),
            (ModelKind::Logistic(_), Dataset::Logistic { .. })
                | (ModelKind::Mixture(_), Dataset::Mixture { .. })
                | (ModelKind::BetaBernoulli(_), Dataset::Bernoulli { .. })
                | (ModelKind::Toy(_), Dataset::Toy { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "model {} cannot consume dataset schema {}",
                self.name(),
                data.schema()
            )))
        }
    }

    /// Parameter dimension for this model on this dataset.
    pub fn dim(&self, data: &Dataset) -> usize {
        match (self, data) {
            (ModelKind::Logistic(_), Dataset::Logistic { x, .. }) => x.ncols() + 1,
            (ModelKind::Mixture(m), _) => m.n_components,
            (ModelKind::BetaBernoulli(_), _) => 1,
            (ModelKind::Toy(_), _) => 1,
            (ModelKind::Logistic(_), _) => 0,
        }
    }

    pub fn param_names(&self, data: &Dataset) -> Vec<String> {
        match self {
            ModelKind::Logistic(_) => {
                let p = self.dim(data) - 1;
                let mut names = vec!["beta0".to_string()];
                names.extend((1..=p).map(|j| format!("beta{j}")));
                names
            }
            ModelKind::Mixture(m) => (1..=m.n_components).map(|j| format!("mu{j}")).collect(),
            ModelKind::BetaBernoulli(_) => vec!["theta".to_string()],
            ModelKind::Toy(_) => vec!["theta".to_string()],
        }
    }

    /// Subset log posterior: data log likelihood plus `1/m` of the log
    /// prior, up to a constant fixed per (model, fraction).
    pub fn log_posterior(&self, theta: &[f64], data: &Dataset, fraction: PriorFraction) -> Result<f64> {
        self.check_schema(data)?;
        Ok(match (self, data) {
            (ModelKind::Logistic(m), Dataset::Logistic { x, y }) => m.log_posterior(theta, x, y, fraction),
            (ModelKind::Mixture(m), Dataset::Mixture { x }) => m.log_posterior(theta, x, fraction),
            (ModelKind::BetaBernoulli(m), Dataset::Bernoulli { y }) => {
                let s: f64 = y.iter().map(|&v| v as f64).sum();
                m.log_posterior(theta[0], s, y.len() as f64, fraction)
            }
            (ModelKind::Toy(m), Dataset::Toy { parts }) => m.log_posterior(theta[0], parts),
            _ => unreachable!(),
        })
    }

    /// Analytic gradient and Hessian of the subset log posterior, for the
    /// models that expose them (logistic, Beta-Bernoulli).
    pub fn grad_hess(
        &self,
        theta: &[f64],
        data: &Dataset,
        fraction: PriorFraction,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_schema(data)?;
        match (self, data) {
            (ModelKind::Logistic(m), Dataset::Logistic { x, y }) => Ok(m.grad_hess(theta, x, y, fraction)),
            (ModelKind::BetaBernoulli(m), Dataset::Bernoulli { y }) => {
                let s: f64 = y.iter().map(|&v| v as f64).sum();
                m.grad_hess(theta[0], s, y.len() as f64, fraction)
            }
            _ => Err(Error::Chain(format!(
                "model {} has no differentiable log posterior",
                self.name()
            ))),
        }
    }

    pub fn supports_laplace(&self) -> bool {
        matches!(self, ModelKind::Logistic(_) | ModelKind::BetaBernoulli(_))
    }

    /// Whether subset chains use the model's Gibbs sweep instead of
    /// random-walk Metropolis.
    pub fn uses_gibbs(&self) -> bool {
        matches!(self, ModelKind::Mixture(_))
    }

    /// A stable, always-interior starting point.
    pub fn default_init(&self, data: &Dataset, _fraction: PriorFraction) -> Vec<f64> {
        match (self, data) {
            (ModelKind::Logistic(_), Dataset::Logistic { x, .. }) => vec![0.0; x.ncols() + 1],
            (ModelKind::Mixture(m), Dataset::Mixture { x }) => m.quantile_means(x),
            (ModelKind::BetaBernoulli(_), Dataset::Bernoulli { y }) => {
                let s: f64 = y.iter().map(|&v| v as f64).sum();
                vec![(s + 1.0) / (y.len() as f64 + 2.0)]
            }
            (ModelKind::Toy(_), _) => vec![toy::MOMENT_MATCHED_MEAN],
            _ => vec![0.0; self.dim(data)],
        }
    }
}

/// A subset posterior with precomputed sufficient statistics, cheap to
/// evaluate inside hot sampling loops.
pub struct SubsetPosterior<'a> {
    model: &'a ModelKind,
    data: &'a Dataset,
    fraction: PriorFraction,
    stats: CachedStats,
}

enum CachedStats {
    Bernoulli { s: f64, n: f64 },
    None,
}

impl<'a> SubsetPosterior<'a> {
    pub fn new(model: &'a ModelKind, data: &'a Dataset, fraction: PriorFraction) -> Result<Self> {
        model.check_schema(data)?;
        let stats = match data {
            Dataset::Bernoulli { y } => CachedStats::Bernoulli {
                s: y.iter().map(|&v| v as f64).sum(),
                n: y.len() as f64,
            },
            _ => CachedStats::None,
        };
        Ok(SubsetPosterior { model, data, fraction, stats })
    }

    pub fn dim(&self) -> usize {
        self.model.dim(self.data)
    }

    pub fn model(&self) -> &ModelKind {
        self.model
    }

    pub fn fraction(&self) -> PriorFraction {
        self.fraction
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match (&self.stats, self.model) {
            (CachedStats::Bernoulli { s, n }, ModelKind::BetaBernoulli(m)) => {
                m.log_posterior(theta[0], *s, *n, self.fraction)
            }
            _ => self
                .model
                .log_posterior(theta, self.data, self.fraction)
                .unwrap_or(f64::NEG_INFINITY),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tiny_logistic() -> (ModelKind, Dataset) {
        let (data, _) = generate_logistic(40, 3, 0.0, 11).unwrap();
        (ModelKind::Logistic(LogisticModel::default()), data)
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let model = ModelKind::BetaBernoulli(BetaBernoulliModel::default());
        let data = Dataset::Mixture { x: vec![0.0, 1.0] };
        assert!(model.log_posterior(&[0.5], &data, PriorFraction::whole()).is_err());
    }

    #[test]
    fn logistic_at_zero_is_n_log_half_plus_prior() {
        let (model, data) = tiny_logistic();
        let frac = PriorFraction::new(4).unwrap();
        let theta = vec![0.0; 4];
        let lp = model.log_posterior(&theta, &data, frac).unwrap();
        let tau: f64 = 10.0;
        let prior0 = 4.0 * (-(tau.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(lp, 40.0 * 0.5f64.ln() + frac.value() * prior0, epsilon = 1e-10);
    }

    #[test]
    fn csv_round_trip_all_schemas() {
        let dir = tempfile::tempdir().unwrap();
        let (logistic, _) = generate_logistic(25, 2, 0.0, 3).unwrap();
        let sets = vec![
            logistic,
            generate_mixture(30, 4),
            generate_bernoulli(30, 0.3, 5).unwrap(),
            Dataset::Toy { parts: vec![1, 2] },
        ];
        for d in sets {
            let path = dir.path().join(format!("{}.csv", d.schema()));
            d.write_csv(&path).unwrap();
            let back = Dataset::read_csv(&path, d.schema()).unwrap();
            match (&d, &back) {
                (Dataset::Logistic { x: a, y: ya }, Dataset::Logistic { x: b, y: yb }) => {
                    assert_eq!(ya, yb);
                    assert_relative_eq!((a - b).abs().max(), 0.0, epsilon = 1e-14);
                }
                _ => assert_eq!(d, back),
            }
        }
    }

    #[test]
    fn subset_preserves_rows() {
        let data = generate_mixture(10, 9);
        let sub = data.subset(&[0, 3, 7]);
        match (&data, &sub) {
            (Dataset::Mixture { x }, Dataset::Mixture { x: s }) => {
                assert_eq!(s, &vec![x[0], x[3], x[7]]);
            }
            _ => unreachable!(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fractionated_posteriors_telescope(
            m in 1usize..6,
            t0 in -1.5f64..1.5,
            t1 in -1.5f64..1.5,
        ) {
            // Sum over a partition of subset log posteriors equals the
            // full-data log posterior, both up to the same constant.
            let (model, data) = tiny_logistic();
            let frac = PriorFraction::new(m).unwrap();
            let n = data.len();
            let theta = vec![t0, t1, 0.3, -0.2];
            let full = model.log_posterior(&theta, &data, PriorFraction::whole()).unwrap();
            let mut acc = 0.0;
            for i in 0..m {
                let idx: Vec<usize> = (0..n).filter(|r| r % m == i).collect();
                let sub = data.subset(&idx);
                acc += model.log_posterior(&theta, &sub, frac).unwrap();
            }
            prop_assert!((acc - full).abs() < 1e-8, "telescoping off by {}", acc - full);
        }

        #[test]
        fn beta_posterior_telescopes(m in 1usize..8, theta in 0.05f64..0.95) {
            let model = ModelKind::BetaBernoulli(BetaBernoulliModel::default());
            let data = generate_bernoulli(64, 0.4, 17).unwrap();
            let frac = PriorFraction::new(m).unwrap();
            let full = model.log_posterior(&[theta], &data, PriorFraction::whole()).unwrap();
            let mut acc = 0.0;
            for i in 0..m {
                let idx: Vec<usize> = (0..64).filter(|r| r % m == i).collect();
                acc += model.log_posterior(&[theta], &data.subset(&idx), frac).unwrap();
            }
            prop_assert!((acc - full).abs() < 1e-8);
        }
    }

    #[test]
    fn cached_stats_match_direct_evaluation() {
        let model = ModelKind::BetaBernoulli(BetaBernoulliModel::default());
        let data = generate_bernoulli(100, 0.2, 8).unwrap();
        let frac = PriorFraction::new(5).unwrap();
        let post = SubsetPosterior::new(&model, &data, frac).unwrap();
        for theta in [0.05, 0.2, 0.7] {
            assert_relative_eq!(
                post.log_density(&[theta]),
                model.log_posterior(&[theta], &data, frac).unwrap(),
                epsilon = 1e-12
            );
        }
    }
}
