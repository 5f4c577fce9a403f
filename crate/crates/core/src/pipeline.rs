//! Staged experiment runs on disk: generate, run, combine, evaluate, and
//! the full pipeline, all driven by one TOML config and recorded in a
//! hashed reproducibility manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.toml                     canonical config echo
//! data.csv                        dataset
//! truth.json                      generating parameter (empty for file data)
//! subsets/subset_<id>.{csv,json}  per-subset draws and moments
//! reference.{csv,json}            full-data chain (chain reference only)
//! combined/<method>.{csv,json}    combined draws and diagnostics
//! metrics/<method>.json           per-method metric report
//! metrics/summary.csv             one row per method
//! densities/<method>_<param>.csv  grid densities for plotting
//! manifest.json                   stage status and file hashes
//! ```
//!
//! Replicated runs place each replicate under `rep_<k>` (seed offset by
//! `k`) and aggregate the per-replicate summaries into `aggregate.csv`.
//! Wall-clock times live only in manifests, so re-running a config yields
//! byte-identical files everywhere else.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::combine::{
    self, CombineResult, Diagnostics, KdeRule, RejectionConfig, SequentialConfig,
};
use crate::config::{ExperimentConfig, MethodConfig, ModelTag, ReferenceConfig};
use crate::engine::{self, ChainConfig, DrawMatrix, DrawMeta, SubsetRun, WorkerPool};
use crate::error::{Error, Result};
use crate::kernel::{GridDensity, KernelSpec};
use crate::metrics::{evaluate_result, AnalyticDensity, MetricReport, ReferenceSide};
use crate::models::{
    generate_bernoulli, generate_logistic, generate_mixture, toy, toy_density, Dataset,
    ModelKind, PriorFraction, ToyBimodal,
};

/// The generating parameter, written next to the dataset. `theta` is empty
/// when no single true value exists (toy model, file-backed data).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthRecord {
    pub model: String,
    pub theta: Vec<f64>,
}

impl TruthRecord {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: String,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Stage ledger plus a content hash of every output file. Wall-clock times
/// are confined to this file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(config_sha256: String, master_seed: u64) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256,
            master_seed,
            stages: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn complete(&self, stages: &[String]) -> bool {
        stages
            .iter()
            .all(|s| self.stages.get(s).is_some_and(|r| r.status == "ok"))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn hash_tree(root: &Path, prefix: &Path, files: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        let name = path.file_name().map(|n| n.to_string_lossy().to_string());
        let rel = match name {
            Some(n) => prefix.join(n),
            None => continue,
        };
        if path.is_dir() {
            hash_tree(&path, &rel, files)?;
        } else if path.file_name().is_some_and(|n| n != "manifest.json") {
            files.insert(rel.to_string_lossy().to_string(), sha256_file(&path)?);
        }
    }
    Ok(())
}

fn schema_name(model: ModelTag) -> &'static str {
    match model {
        ModelTag::Logistic => "logistic",
        ModelTag::Mixture => "mixture",
        ModelTag::BetaBernoulli => "bernoulli",
        ModelTag::ToyBimodal => "toy",
    }
}

/// A validated config bound to an output directory and a worker pool. Every
/// CLI subcommand maps onto one of the stage methods.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub force: bool,
    pool: WorkerPool,
}

impl RunContext {
    /// Bind a config, applying CLI overrides. The seed override replaces
    /// the config seed; the directory override wins over
    /// `experiment.out_dir`; one of the two must name a directory.
    pub fn new(
        mut config: ExperimentConfig,
        out_override: Option<PathBuf>,
        workers: usize,
        seed_override: Option<u64>,
        force: bool,
    ) -> Result<Self> {
        if let Some(seed) = seed_override {
            config.experiment.seed = seed;
        }
        let out_dir = out_override
            .or_else(|| config.experiment.out_dir.clone())
            .ok_or_else(|| {
                Error::Config("no output directory: set --out or experiment.out_dir".into())
            })?;
        config.validate()?;
        let pool = WorkerPool::new(workers)?;
        Ok(RunContext { config, out_dir, workers, force, pool })
    }

    pub fn seed(&self) -> u64 {
        self.config.experiment.seed
    }

    fn model(&self) -> ModelKind {
        self.config.experiment.model.to_model()
    }

    fn data_path(&self) -> PathBuf {
        self.out_dir.join("data.csv")
    }

    fn truth_path(&self) -> PathBuf {
        self.out_dir.join("truth.json")
    }

    fn subset_csv(&self, id: usize) -> PathBuf {
        self.out_dir.join("subsets").join(format!("subset_{id}.csv"))
    }

    fn subset_json(&self, id: usize) -> PathBuf {
        self.out_dir.join("subsets").join(format!("subset_{id}.json"))
    }

    fn reference_csv(&self) -> PathBuf {
        self.out_dir.join("reference.csv")
    }

    fn combined_csv(&self, tag: &str) -> PathBuf {
        self.out_dir.join("combined").join(format!("{tag}.csv"))
    }

    fn combined_json(&self, tag: &str) -> PathBuf {
        self.out_dir.join("combined").join(format!("{tag}.json"))
    }

    fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }

    /// Config echo with the output directory stripped, so the same
    /// experiment hashes identically wherever it lands on disk.
    fn canonical_config(&self) -> Result<String> {
        let mut echo = self.config.clone();
        echo.experiment.out_dir = None;
        echo.to_toml_string()
    }

    fn config_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_config()?.as_bytes()))
    }

    fn required_stages(&self) -> Vec<String> {
        let reps = self.config.experiment.replicates;
        if reps <= 1 {
            ["generate", "run", "combine", "evaluate"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            let mut stages: Vec<String> = (0..reps).map(|k| format!("rep_{k}")).collect();
            stages.push("aggregate".to_string());
            stages
        }
    }

    fn load_data(&self) -> Result<Dataset> {
        let path = self.data_path();
        if !path.exists() {
            return Err(Error::Config(format!(
                "no dataset at {}: run the generate stage first",
                path.display()
            )));
        }
        Dataset::read_csv(&path, schema_name(self.config.experiment.model))
    }

    fn load_runs(&self) -> Result<Vec<SubsetRun>> {
        let m = self.config.partition.m;
        (1..=m)
            .map(|id| {
                let json = self.subset_json(id);
                if !json.exists() {
                    return Err(Error::Config(format!(
                        "no subset run at {}: run the run stage first",
                        json.display()
                    )));
                }
                SubsetRun::read(&json, &self.subset_csv(id))
            })
            .collect()
    }

    /// Load an existing manifest if it matches this config, start a fresh
    /// one otherwise. A mismatched directory is refused without `force`.
    fn open_manifest(&self) -> Result<RunManifest> {
        let hash = self.config_hash()?;
        let path = self.manifest_path();
        if path.exists() {
            let existing = RunManifest::load(&path)?;
            if existing.config_sha256 == hash {
                return Ok(existing);
            }
            if !self.force {
                return Err(Error::Config(format!(
                    "{} holds a run with a different config; pass --force to replace it",
                    self.out_dir.display()
                )));
            }
        }
        Ok(RunManifest::new(hash, self.seed()))
    }

    /// Run one stage body, recording status, wall time, and the refreshed
    /// file inventory in the manifest. Failures are recorded before the
    /// error propagates; partial outputs stay on disk.
    fn run_stage(&self, name: &str, body: impl FnOnce() -> Result<()>) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join("config.toml"), self.canonical_config()?)?;
        let mut manifest = self.open_manifest()?;
        let start = Instant::now();
        let outcome = body();
        let record = StageRecord {
            status: if outcome.is_ok() { "ok" } else { "failed" }.to_string(),
            wall_ms: start.elapsed().as_millis() as u64,
            error: outcome.as_ref().err().map(|e| e.to_string()),
        };
        manifest.stages.insert(name.to_string(), record);
        manifest.files.clear();
        hash_tree(&self.out_dir, Path::new(""), &mut manifest.files)?;
        manifest.write(&self.manifest_path())?;
        outcome
    }

    pub fn generate(&self) -> Result<()> {
        self.run_stage("generate", || self.stage_generate())
    }

    pub fn run(&self) -> Result<()> {
        self.run_stage("run", || self.stage_run())
    }

    pub fn combine(&self) -> Result<()> {
        self.run_stage("combine", || self.stage_combine())
    }

    pub fn evaluate(&self) -> Result<()> {
        self.run_stage("evaluate", || self.stage_evaluate())
    }

    /// Generate, run, combine, and evaluate, replicated when configured.
    /// Returns `false` when a completed run with this config is already in
    /// place and `force` is off.
    pub fn pipeline(&self) -> Result<bool> {
        let hash = self.config_hash()?;
        if !self.force {
            if let Ok(manifest) = RunManifest::load(&self.manifest_path()) {
                if manifest.config_sha256 == hash && manifest.complete(&self.required_stages()) {
                    return Ok(false);
                }
            }
        }
        let reps = self.config.experiment.replicates;
        if reps <= 1 {
            self.generate()?;
            self.run()?;
            self.combine()?;
            self.evaluate()?;
            return Ok(true);
        }
        let base_seed = self.seed();
        for k in 0..reps {
            let mut sub = self.config.clone();
            sub.experiment.seed = base_seed + k as u64;
            sub.experiment.replicates = 1;
            sub.experiment.out_dir = None;
            let rep = RunContext::new(
                sub,
                Some(self.out_dir.join(format!("rep_{k}"))),
                self.workers,
                None,
                self.force,
            )?;
            self.run_stage(&format!("rep_{k}"), || rep.pipeline().map(|_| ()))?;
        }
        self.run_stage("aggregate", || self.stage_aggregate(reps))?;
        Ok(true)
    }

    fn stage_generate(&self) -> Result<()> {
        let exp = &self.config.experiment;
        let d = &self.config.data;
        let (data, theta) = if let Some(path) = &d.path {
            (Dataset::read_csv(path, schema_name(exp.model))?, Vec::new())
        } else {
            match exp.model {
                ModelTag::Logistic => {
                    let (data, beta) = generate_logistic(
                        d.n.unwrap_or(0),
                        d.p.unwrap_or(0),
                        d.rho.unwrap_or(0.0),
                        exp.seed,
                    )?;
                    (data, beta)
                }
                ModelTag::Mixture => {
                    (generate_mixture(d.n.unwrap_or(0), exp.seed), vec![0.0, 2.0, 4.0])
                }
                ModelTag::BetaBernoulli => {
                    let prob = d.prob.unwrap_or(0.5);
                    (generate_bernoulli(d.n.unwrap_or(0), prob, exp.seed)?, vec![prob])
                }
                ModelTag::ToyBimodal => (ToyBimodal::dataset(), Vec::new()),
            }
        };
        data.write_csv(&self.data_path())?;
        let truth = TruthRecord { model: exp.model.name().to_string(), theta };
        truth.write(&self.truth_path())
    }

    fn stage_run(&self) -> Result<()> {
        let data = self.load_data()?;
        let model = self.model();
        let m = self.config.partition.m;
        let part = engine::partition(&data, m, self.seed())?;
        let fraction = PriorFraction::new(m)?;
        let cs = &self.config.chain;
        let chain = ChainConfig::new(cs.iterations, cs.burnin, cs.thin, self.seed());
        let runs = engine::run_all_subsets(&model, &data, &part, fraction, &chain, &self.pool)?;
        std::fs::create_dir_all(self.out_dir.join("subsets"))?;
        for run in &runs {
            run.draws.write_csv(&self.subset_csv(run.subset_id))?;
            run.write_json(&self.subset_json(run.subset_id))?;
        }
        if let ReferenceConfig::Chain { iterations, burnin, thin } = self.config.reference {
            let rc = ChainConfig::new(iterations, burnin, thin, self.seed());
            let reference = engine::run_reference_chain(&model, &data, &rc)?;
            reference.draws.write_csv(&self.reference_csv())?;
            reference.write_json(&self.out_dir.join("reference.json"))?;
        }
        Ok(())
    }

    fn stage_combine(&self) -> Result<()> {
        let data = self.load_data()?;
        let model = self.model();
        let runs = self.load_runs()?;
        let m = self.config.partition.m;
        let part = engine::partition(&data, m, self.seed())?;
        let fraction = PriorFraction::new(m)?;
        let spec = KernelSpec::gaussian();
        std::fs::create_dir_all(self.out_dir.join("combined"))?;
        for method in &self.config.methods {
            let tag = method.tag();
            let result = self
                .dispatch_method(method, &model, &data, &part, fraction, &runs, &spec)
                .map_err(|e| match e {
                    Error::Combine(msg) => Error::Combine(format!("method {tag}: {msg}")),
                    other => Error::Combine(format!("method {tag}: {other}")),
                })?;
            result.write_csv(&self.combined_csv(tag))?;
            result.write_diagnostics(&self.combined_json(tag))?;
        }
        Ok(())
    }

    fn dispatch_method(
        &self,
        method: &MethodConfig,
        model: &ModelKind,
        data: &Dataset,
        part: &engine::Partition,
        fraction: PriorFraction,
        runs: &[SubsetRun],
        spec: &KernelSpec,
    ) -> Result<CombineResult> {
        let seed = self.seed();
        match method {
            MethodConfig::Average => combine::combine_simple_average(runs),
            MethodConfig::Weighted => combine::combine_weighted_average(runs),
            MethodConfig::Kernel { grid_points } => {
                combine::combine_kernel_marginal(runs, *grid_points, seed)
            }
            MethodConfig::Refinement { steps, inner_iterations } => combine::refine_subsets(
                model,
                data,
                part,
                fraction,
                runs,
                *steps,
                *inner_iterations,
                &self.pool,
                seed,
            ),
            MethodConfig::Rejection { target_acceptance, max_proposals } => {
                let mut cfg = RejectionConfig::with_target(*target_acceptance, seed);
                if let Some(cap) = max_proposals {
                    cfg.max_proposals = *cap;
                }
                combine::weierstrass_reject(runs, &cfg, spec)
            }
            MethodConfig::Pairwise { target_acceptance, min_draws } => {
                let mut cfg = RejectionConfig::with_target(*target_acceptance, seed);
                cfg.min_draws = *min_draws;
                combine::pairwise_combine(runs, &cfg, spec)
            }
            MethodConfig::Sequential { n0, replicas, grid_points } => {
                let cfg = SequentialConfig {
                    n0: *n0,
                    n_replicas: *replicas,
                    grid_points: *grid_points,
                    kde_rule: KdeRule::Silverman,
                    seed,
                };
                combine::sequential_reject(model, data, part, fraction, &cfg, &self.pool)
            }
            MethodConfig::Laplace { n_draws } => {
                let n = n_draws.unwrap_or_else(|| runs[0].draws.n_draws());
                combine::laplace_baseline(model, data, n, seed)
            }
        }
    }

    /// The analytic reference marginals for conjugate models.
    fn analytic_reference(&self) -> Result<Vec<AnalyticDensity>> {
        match self.config.experiment.model {
            ModelTag::BetaBernoulli => {
                let data = self.load_data()?;
                let Dataset::Bernoulli { y } = &data else {
                    return Err(Error::Config("beta_bernoulli needs bernoulli data".into()));
                };
                let s: f64 = y.iter().map(|&v| v as f64).sum();
                let n = y.len() as f64;
                let prior = crate::models::BetaBernoulliModel::default();
                Ok(vec![AnalyticDensity::beta(prior.a + s, prior.b + n - s)?])
            }
            ModelTag::ToyBimodal => Ok(vec![AnalyticDensity::from_fn(
                |t| toy_density(toy::ToyPart::P12, t),
                toy::MOMENT_MATCHED_MEAN,
                toy::MOMENT_MATCHED_VAR.sqrt(),
                (f64::NEG_INFINITY, f64::INFINITY),
            )]),
            other => Err(Error::Config(format!(
                "analytic reference is not available for model {}",
                other.name()
            ))),
        }
    }

    fn stage_evaluate(&self) -> Result<()> {
        let model = self.model();
        let grid_points = self.config.evaluate.grid_points;
        let reference_draws = match self.config.reference {
            ReferenceConfig::Chain { .. } => {
                let path = self.reference_csv();
                if !path.exists() {
                    return Err(Error::MissingReference(format!(
                        "no reference draws at {}: run the run stage first",
                        path.display()
                    )));
                }
                let meta = DrawMeta::new(model.name(), "0", String::new());
                Some(DrawMatrix::read_csv(&path, meta)?)
            }
            ReferenceConfig::Analytic {} => None,
        };
        let analytic = match reference_draws {
            None => Some(self.analytic_reference()?),
            Some(_) => None,
        };
        let truth = TruthRecord::read(&self.truth_path())
            .ok()
            .filter(|t| !t.theta.is_empty());

        let metrics_dir = self.out_dir.join("metrics");
        let densities_dir = self.out_dir.join("densities");
        std::fs::create_dir_all(&metrics_dir)?;
        std::fs::create_dir_all(&densities_dir)?;

        let mut reports: Vec<MetricReport> = Vec::new();
        let mut param_names: Vec<String> = Vec::new();
        for method in &self.config.methods {
            let tag = method.tag();
            let csv = self.combined_csv(tag);
            if !csv.exists() {
                return Err(Error::Config(format!(
                    "no combined draws at {}: run the combine stage first",
                    csv.display()
                )));
            }
            let diagnostics = match std::fs::File::open(self.combined_json(tag)) {
                Ok(file) => serde_json::from_reader(file)?,
                Err(_) => Diagnostics::for_method(tag),
            };
            let meta = DrawMeta::new(model.name(), "combined", String::new());
            let result = CombineResult::read_csv(&csv, meta, diagnostics)?;
            if param_names.is_empty() {
                param_names = result.draws.names.clone();
            }
            let p = result.draws.dim();
            let truth_slice = truth
                .as_ref()
                .map(|t| t.theta.as_slice())
                .filter(|t| t.len() == p);
            let mask: Option<Vec<bool>> = truth_slice
                .map(|t| t.iter().map(|&v| v == 0.0).collect::<Vec<bool>>())
                .filter(|m| m.iter().any(|&z| z));
            let side = match (&reference_draws, &analytic) {
                (Some(draws), _) => ReferenceSide::Draws(draws),
                (None, Some(dens)) => ReferenceSide::Analytic(dens),
                (None, None) => unreachable!("one reference side is always set"),
            };
            let report = evaluate_result(
                tag,
                &result,
                &side,
                truth_slice,
                mask.as_deref(),
                grid_points,
            )?;
            report.write_json(&metrics_dir.join(format!("{tag}.json")))?;
            for (j, name) in result.draws.names.iter().enumerate() {
                let col = result.draws.column(j);
                let density =
                    GridDensity::from_samples(&col, result.weights.as_deref(), grid_points)?;
                write_density_csv(&densities_dir.join(format!("{tag}_{name}.csv")), &density)?;
            }
            reports.push(report);
        }

        match (&reference_draws, &analytic) {
            (Some(draws), _) => {
                for (j, name) in draws.names.iter().enumerate() {
                    let col = draws.column(j);
                    let density = GridDensity::from_samples(&col, None, grid_points)?;
                    write_density_csv(
                        &densities_dir.join(format!("reference_{name}.csv")),
                        &density,
                    )?;
                }
            }
            (None, Some(dens)) => {
                for (j, d) in dens.iter().enumerate() {
                    let fallback = format!("theta{}", j + 1);
                    let name = param_names.get(j).map(String::as_str).unwrap_or(&fallback);
                    let lo = (d.mean - 8.0 * d.sd).max(d.support.0);
                    let hi = (d.mean + 8.0 * d.sd).min(d.support.1);
                    let density = GridDensity::from_fn(lo, hi, grid_points, |t| d.pdf(t))?;
                    write_density_csv(
                        &densities_dir.join(format!("reference_{name}.csv")),
                        &density,
                    )?;
                }
            }
            (None, None) => {}
        }

        write_summary_csv(&metrics_dir.join("summary.csv"), &reports)
    }

    /// Mean and standard deviation of every summary metric across the
    /// replicate directories, in long form.
    fn stage_aggregate(&self, reps: usize) -> Result<()> {
        let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        let mut method_order: Vec<String> = Vec::new();
        let mut metric_order: Vec<String> = Vec::new();
        for k in 0..reps {
            let path = self
                .out_dir
                .join(format!("rep_{k}"))
                .join("metrics")
                .join("summary.csv");
            let mut reader = csv::Reader::from_path(&path)
                .map_err(|e| Error::Config(format!("replicate {k} summary: {e}")))?;
            let headers = reader.headers()?.clone();
            for record in reader.records() {
                let record = record?;
                let method = record[0].to_string();
                if !method_order.contains(&method) {
                    method_order.push(method.clone());
                }
                for (j, header) in headers.iter().enumerate().skip(1) {
                    let raw = &record[j];
                    if raw.is_empty() {
                        continue;
                    }
                    let value: f64 = raw
                        .parse()
                        .map_err(|e| Error::Config(format!("bad summary value {raw}: {e}")))?;
                    if !metric_order.contains(&header.to_string()) {
                        metric_order.push(header.to_string());
                    }
                    cells
                        .entry((method.clone(), header.to_string()))
                        .or_default()
                        .push(value);
                }
            }
        }
        let mut writer = csv::Writer::from_path(self.out_dir.join("aggregate.csv"))?;
        writer.write_record(["method", "metric", "mean", "sd", "replicates"])?;
        for method in &method_order {
            for metric in &metric_order {
                let Some(values) = cells.get(&(method.clone(), metric.clone())) else {
                    continue;
                };
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let sd = if values.len() > 1 {
                    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
                        .sqrt()
                } else {
                    0.0
                };
                writer.write_record([
                    method.as_str(),
                    metric.as_str(),
                    &mean.to_string(),
                    &sd.to_string(),
                    &values.len().to_string(),
                ])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

fn write_density_csv(path: &Path, density: &GridDensity) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["theta", "density"])?;
    for (x, v) in density.grid().iter().zip(density.values()) {
        writer.write_record([x.to_string(), v.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_summary_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "method",
        "tv_mean",
        "tv_nonzero_mean",
        "tv_zero_mean",
        "kl",
        "error_ratio",
        "ess",
    ])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        writer.write_record([
            r.method.clone(),
            r.tv_mean.to_string(),
            cell(r.tv_nonzero_mean),
            cell(r.tv_zero_mean),
            cell(r.kl),
            cell(r.error_ratio),
            cell(r.ess),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
