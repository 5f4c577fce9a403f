//! Experiment configuration: a single TOML document describing the model,
//! data generator, partition, chains, reference, methods, and evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Logistic,
    Mixture,
    BetaBernoulli,
    ToyBimodal,
}

impl ModelTag {
    pub fn to_model(self) -> ModelKind {
        match self {
            ModelTag::Logistic => ModelKind::Logistic(Default::default()),
            ModelTag::Mixture => ModelKind::Mixture(Default::default()),
            ModelTag::BetaBernoulli => ModelKind::BetaBernoulli(Default::default()),
            ModelTag::ToyBimodal => ModelKind::Toy(Default::default()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelTag::Logistic => "logistic",
            ModelTag::Mixture => "mixture",
            ModelTag::BetaBernoulli => "beta_bernoulli",
            ModelTag::ToyBimodal => "toy_bimodal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub model: ModelTag,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_one")]
    pub replicates: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
    /// Logistic predictor count (intercept excluded).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
    /// Bernoulli success probability.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prob: Option<f64>,
    /// Pre-existing dataset CSV; mutually exclusive with generator fields.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub m: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { m: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burnin: usize,
    #[serde(default = "default_one")]
    pub thin: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings { iterations: 6000, burnin: 1000, thin: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Long single chain on the full data.
    Chain {
        iterations: usize,
        burnin: usize,
        #[serde(default = "default_one")]
        thin: usize,
    },
    /// Closed-form posterior (Beta-Bernoulli and the toy model only).
    Analytic {},
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Average,
    Weighted,
    Kernel {
        #[serde(default = "default_grid")]
        grid_points: usize,
    },
    Refinement {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_inner")]
        inner_iterations: usize,
    },
    Rejection {
        target_acceptance: f64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        max_proposals: Option<usize>,
    },
    Pairwise {
        target_acceptance: f64,
        #[serde(default = "default_min_draws")]
        min_draws: usize,
    },
    Sequential {
        n0: usize,
        replicas: usize,
        #[serde(default = "default_grid")]
        grid_points: usize,
    },
    Laplace {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        n_draws: Option<usize>,
    },
}

impl MethodConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            MethodConfig::Average => "average",
            MethodConfig::Weighted => "weighted",
            MethodConfig::Kernel { .. } => "kernel",
            MethodConfig::Refinement { .. } => "refinement",
            MethodConfig::Rejection { .. } => "rejection",
            MethodConfig::Pairwise { .. } => "pairwise",
            MethodConfig::Sequential { .. } => "sequential",
            MethodConfig::Laplace { .. } => "laplace",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { grid_points: default_grid() }
    }
}

fn default_one() -> usize {
    1
}
fn default_grid() -> usize {
    512
}
fn default_steps() -> usize {
    10
}
fn default_inner() -> usize {
    100
}
fn default_min_draws() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub chain: ChainSettings,
    pub reference: ReferenceConfig,
    #[serde(rename = "methods", default)]
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.partition.m == 0 {
            return Err(Error::Config("partition m must be at least 1".into()));
        }
        if self.chain.burnin >= self.chain.iterations {
            return Err(Error::Config(format!(
                "chain burnin {} must be below iterations {}",
                self.chain.burnin, self.chain.iterations
            )));
        }
        if self.chain.thin == 0 {
            return Err(Error::Config("chain thin must be at least 1".into()));
        }
        self.validate_data()?;
        if let ReferenceConfig::Chain { iterations, burnin, thin } = &self.reference {
            if burnin >= iterations {
                return Err(Error::Config(format!(
                    "reference burnin {burnin} must be below iterations {iterations}"
                )));
            }
            if *thin == 0 {
                return Err(Error::Config("reference thin must be at least 1".into()));
            }
        }
        if matches!(self.reference, ReferenceConfig::Analytic {})
            && !matches!(self.experiment.model, ModelTag::BetaBernoulli | ModelTag::ToyBimodal)
        {
            return Err(Error::Config(format!(
                "analytic reference is not available for model {}",
                self.experiment.model.name()
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for method in &self.methods {
            if !seen.insert(method.tag()) {
                return Err(Error::Config(format!(
                    "method {} listed more than once",
                    method.tag()
                )));
            }
            self.validate_method(method)?;
        }
        if self.evaluate.grid_points < 16 {
            return Err(Error::Config("evaluate grid too coarse".into()));
        }
        Ok(())
    }

    fn validate_data(&self) -> Result<()> {
        let d = &self.data;
        if d.path.is_some() {
            if d.n.is_some() || d.p.is_some() || d.rho.is_some() || d.prob.is_some() {
                return Err(Error::Config(
                    "data.path is mutually exclusive with generator fields".into(),
                ));
            }
            return Ok(());
        }
        match self.experiment.model {
            ModelTag::Logistic => {
                if d.n.is_none() || d.p.is_none() {
                    return Err(Error::Config("logistic data needs n and p".into()));
                }
            }
            ModelTag::Mixture => {
                if d.n.is_none() {
                    return Err(Error::Config("mixture data needs n".into()));
                }
            }
            ModelTag::BetaBernoulli => {
                let prob = d
                    .prob
                    .ok_or_else(|| Error::Config("beta_bernoulli data needs prob".into()))?;
                if d.n.is_none() {
                    return Err(Error::Config("beta_bernoulli data needs n".into()));
                }
                if !(prob > 0.0 && prob < 1.0) {
                    return Err(Error::Config(format!("prob must be in (0,1), got {prob}")));
                }
            }
            ModelTag::ToyBimodal => {}
        }
        Ok(())
    }

    fn validate_method(&self, method: &MethodConfig) -> Result<()> {
        match method {
            MethodConfig::Kernel { grid_points } | MethodConfig::Sequential { grid_points, .. }
                if *grid_points < 16 =>
            {
                Err(Error::Config(format!("{} grid too coarse", method.tag())))
            }
            MethodConfig::Rejection { target_acceptance, .. }
            | MethodConfig::Pairwise { target_acceptance, .. }
                if !(*target_acceptance > 0.0 && *target_acceptance < 1.0) =>
            {
                Err(Error::Config(format!(
                    "{} target acceptance must be in (0,1), got {target_acceptance}",
                    method.tag()
                )))
            }
            MethodConfig::Refinement { steps, inner_iterations } => {
                if *steps == 0 || *inner_iterations == 0 {
                    Err(Error::Config("refinement needs positive steps and inner iterations".into()))
                } else {
                    Ok(())
                }
            }
            MethodConfig::Sequential { n0, replicas, .. } => {
                if *n0 < 50 {
                    Err(Error::Config(format!("sequential N0 must be at least 50, got {n0}")))
                } else if *replicas == 0 {
                    Err(Error::Config("sequential needs at least one replica".into()))
                } else {
                    Ok(())
                }
            }
            MethodConfig::Laplace { .. }
                if !self.experiment.model.to_model().supports_laplace() =>
            {
                Err(Error::Config(format!(
                    "laplace baseline is not available for model {}",
                    self.experiment.model.name()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[experiment]
model = "beta_bernoulli"
seed = 42
replicates = 2

[data]
n = 10000
prob = 0.1

[partition]
m = 20

[chain]
iterations = 4000
burnin = 1000

[reference]
kind = "analytic"

[[methods]]
name = "average"

[[methods]]
name = "refinement"
steps = 10

[[methods]]
name = "rejection"
target_acceptance = 0.1

[evaluate]
grid_points = 512
"#;

    #[test]
    fn sample_config_parses_with_defaults() {
        let config = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(config.partition.m, 20);
        assert_eq!(config.chain.thin, 1);
        assert_eq!(config.methods.len(), 3);
        match &config.methods[1] {
            MethodConfig::Refinement { steps, inner_iterations } => {
                assert_eq!(*steps, 10);
                assert_eq!(*inner_iterations, 100);
            }
            other => panic!("unexpected method {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_stable() {
        let config = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let text = config.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = SAMPLE.replace("[data]\nn = 10000", "[data]\nn = 10000\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn duplicate_methods_are_rejected() {
        let text = format!("{SAMPLE}\n[[methods]]\nname = \"average\"\n");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("more than once"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn analytic_reference_requires_conjugate_model() {
        let text = SAMPLE
            .replace("model = \"beta_bernoulli\"", "model = \"logistic\"")
            .replace("[data]\nn = 10000\nprob = 0.1", "[data]\nn = 100\np = 3");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("analytic"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn generator_and_path_are_exclusive() {
        let text = SAMPLE.replace("[data]\nn = 10000", "[data]\npath = \"d.csv\"\nn = 10000");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn invalid_targets_are_rejected() {
        let text = SAMPLE.replace("target_acceptance = 0.1", "target_acceptance = 1.5");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }
}
