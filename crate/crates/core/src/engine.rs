//! Subset chain engine: balanced partitioning, adaptive random-walk
//! Metropolis, Laplace approximation, tethered conditional chains, and a
//! deterministic worker pool.
//!
//! Every operation derives its randomness from explicit seeds through
//! [`crate::rng::stream`], so outputs are identical for any worker count.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Bandwidth;
use crate::linalg;
use crate::models::{Dataset, MixtureState, ModelKind, PriorFraction, SubsetPosterior};
use crate::rng::{self, domain, Stream};

/// Rayon pool wrapper; `workers = 0` means all available cores.
pub struct WorkerPool {
    pool: rayon::ThreadPool,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if workers > 0 {
            builder = builder.num_threads(workers);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(WorkerPool { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        self.pool.install(op)
    }
}

/// A balanced random split of row indices into subsets `1..=m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<u32>,
    pub m: usize,
    pub seed: u64,
}

/// Uniformly random balanced split, deterministic given `seed`. Subset
/// sizes differ by at most one.
pub fn partition(data: &Dataset, m: usize, seed: u64) -> Result<Partition> {
    let n = data.len();
    if m == 0 || m > n {
        return Err(Error::Config(format!(
            "cannot split {n} rows into {m} non-empty subsets"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[domain::PARTITION]));
    let mut assignment = vec![0u32; n];
    for (k, &row) in order.iter().enumerate() {
        assignment[row] = (k % m) as u32 + 1;
    }
    Ok(Partition { assignment, m, seed })
}

impl Partition {
    /// Row indices of subset `id` (ids are 1-based), in data order.
    pub fn subset_indices(&self, id: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a as usize == id)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.m];
        for &a in &self.assignment {
            sizes[a as usize - 1] += 1;
        }
        sizes
    }
}

/// Provenance attached to a draw matrix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub model: String,
    /// Subset id as text, or "combined".
    pub source: String,
    pub lineage: String,
}

impl DrawMeta {
    pub fn new(model: &str, source: &str, lineage: String) -> Self {
        DrawMeta {
            model: model.to_string(),
            source: source.to_string(),
            lineage,
        }
    }
}

/// Retained draws, one row per draw, one named column per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawMatrix {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    pub meta: DrawMeta,
}

impl DrawMatrix {
    pub fn new(names: Vec<String>, values: DMatrix<f64>, meta: DrawMeta) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Numeric("draw matrix needs at least one draw".into()));
        }
        if names.len() != values.ncols() {
            return Err(Error::Numeric(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("draw matrix has non-finite entries".into()));
        }
        Ok(DrawMatrix { names, values, meta })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], meta: DrawMeta) -> Result<Self> {
        let p = names.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Numeric("ragged draw rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        DrawMatrix::new(names, DMatrix::from_row_slice(rows.len(), p, &flat), meta)
    }

    pub fn n_draws(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().cloned().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().cloned().collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        linalg::col_means(&self.values)
    }

    pub fn mean_cov(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        linalg::sample_mean_cov(&self.values)
    }

    /// Write as CSV with header `draw_index,<param names>`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["draw_index".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_draws() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, meta: DrawMeta) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.is_empty() || &headers[0] != "draw_index" {
            return Err(Error::Config(format!(
                "draw csv must start with draw_index, got {headers:?}"
            )));
        }
        let names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad draw value {v}: {e}")))
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        DrawMatrix::from_rows(names, &rows, meta)
    }
}

/// How a chain picks its starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    Point(Vec<f64>),
    /// Start at the Laplace mode (errors if the model has none).
    LaplaceMode,
    /// The model's always-interior default.
    ModelDefault,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proposal {
    AdaptiveRw,
    Gibbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: InitStrategy,
    pub proposal: Proposal,
    pub adapt_target: f64,
}

impl ChainConfig {
    pub fn new(iterations: usize, burnin: usize, thin: usize, seed: u64) -> Self {
        ChainConfig {
            iterations,
            burnin,
            thin,
            seed,
            init: InitStrategy::ModelDefault,
            proposal: Proposal::AdaptiveRw,
            adapt_target: 0.30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.iterations {
            return Err(Error::Config(format!(
                "burnin {} must be below iterations {}",
                self.burnin, self.iterations
            )));
        }
        if self.thin == 0 || (self.iterations - self.burnin) % self.thin != 0 {
            return Err(Error::Config(format!(
                "thin {} must divide the retained range {}",
                self.thin,
                self.iterations - self.burnin
            )));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::Config(format!(
                "adapt target must lie in (0,1), got {}",
                self.adapt_target
            )));
        }
        Ok(())
    }
}

/// Gaussian approximation at the posterior mode; `cov` is the inverse
/// Hessian of the negative log posterior, `log_det` its log determinant.
#[derive(Clone, Debug)]
pub struct LaplaceApprox {
    pub mode: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_det: f64,
}

impl LaplaceApprox {
    pub fn sample(&self, n: usize, rng: &mut Stream) -> Result<DMatrix<f64>> {
        let chol = linalg::cholesky_spd(&self.cov)?;
        let p = self.mode.len();
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let x = linalg::sample_mvn(&self.mode, &chol, rng);
            for j in 0..p {
                out[(i, j)] = x[j];
            }
        }
        Ok(out)
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Damped Newton ascent on a log density with analytic gradient/Hessian.
/// Convergence is gradient norm at most `tol * (1 + |log density|)`.
/// Returns the mode and the negated Hessian there.
pub fn damped_newton(
    lp: &dyn Fn(&[f64]) -> f64,
    grad_hess: &dyn Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>,
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut x = DVector::from_column_slice(init);
    let mut fx = lp(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::Chain("non-finite log posterior at initial point".into()));
    }
    for _ in 0..max_iter {
        let (g, h) = grad_hess(x.as_slice())?;
        if g.norm() <= tol * (1.0 + fx.abs()) {
            return Ok((x, symmetrize(&(-h))));
        }
        let neg_h = symmetrize(&(-h));
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            // Indefinite curvature away from the mode: take a scaled
            // gradient step instead.
            None => &g / (1.0 + g.norm()),
        };
        let mut lambda = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &x + &step * lambda;
            let fc = lp(cand.as_slice());
            if fc.is_finite() && fc >= fx {
                x = cand;
                fx = fc;
                moved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let (g, h) = grad_hess(x.as_slice())?;
    if g.norm() <= tol * (1.0 + fx.abs()) {
        return Ok((x, symmetrize(&(-h))));
    }
    Err(Error::Chain(format!(
        "Newton did not converge: gradient norm {:.3e}",
        g.norm()
    )))
}

/// Laplace approximation of a (fractionated) subset posterior.
pub fn laplace(model: &ModelKind, data: &Dataset, fraction: PriorFraction) -> Result<LaplaceApprox> {
    if !model.supports_laplace() {
        return Err(Error::Chain(format!(
            "model {} has no Laplace approximation",
            model.name()
        )));
    }
    let init = model.default_init(data, fraction);
    let lp = |t: &[f64]| model.log_posterior(t, data, fraction).unwrap_or(f64::NEG_INFINITY);
    let gh = |t: &[f64]| model.grad_hess(t, data, fraction);
    let (mode, neg_h) = damped_newton(&lp, &gh, &init, 1e-6, 200)?;
    let chol = neg_h
        .cholesky()
        .ok_or_else(|| Error::Chain("indefinite Hessian at the mode".into()))?;
    let log_det = -2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(LaplaceApprox {
        mode,
        cov: chol.inverse(),
        log_det,
    })
}

/// Raw chain output before packaging into a [`SubsetRun`].
pub struct ChainOutput {
    pub draws: DMatrix<f64>,
    pub acceptance_rate: f64,
    pub final_state: Vec<f64>,
}

/// Adaptive random-walk Metropolis: proposal `N(0, s^2 Sigma)` with `s`
/// steered toward `adapt_target` by Robbins-Monro on `log s` and `Sigma`
/// replaced by the running empirical covariance during burn-in. Adaptation
/// freezes after burn-in; draws are the thinned post-burn-in states.
pub fn adaptive_metropolis(
    logf: impl Fn(&[f64]) -> f64,
    init: &[f64],
    config: &ChainConfig,
    sigma0: Option<DMatrix<f64>>,
    rng: &mut Stream,
) -> Result<ChainOutput> {
    config.validate()?;
    let p = init.len();
    if p == 0 {
        return Err(Error::Chain("empty parameter vector".into()));
    }
    let mut x = DVector::from_column_slice(init);
    let mut fx = logf(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::Chain("non-finite log posterior at initial point".into()));
    }
    let sigma = sigma0.unwrap_or_else(|| DMatrix::identity(p, p));
    let mut chol_l = linalg::cholesky_spd(&sigma)?.l();
    let mut log_s = (2.38 / (p as f64).sqrt()).ln();

    let mut count = 0usize;
    let mut mean = x.clone();
    let mut m2: DMatrix<f64> = DMatrix::zeros(p, p);

    let retained = (config.iterations - config.burnin) / config.thin;
    let mut draws = DMatrix::zeros(retained, p);
    let mut kept = 0usize;
    let mut accepted_post = 0usize;
    let mut z = DVector::zeros(p);

    for i in 1..=config.iterations {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let prop = &x + &chol_l * &z * log_s.exp();
        let fp = logf(prop.as_slice());
        let ratio = fp - fx;
        let alpha = if ratio >= 0.0 { 1.0 } else { ratio.exp() };
        let accept = rng.random::<f64>() < alpha;
        if accept {
            x = prop;
            fx = fp;
        }
        if i <= config.burnin {
            log_s += (i as f64).powf(-0.6) * (alpha - config.adapt_target);
            count += 1;
            let d1 = &x - &mean;
            mean += &d1 / count as f64;
            let d2 = &x - &mean;
            m2.ger(1.0, &d1, &d2, 1.0);
            let warm = count >= 10.max(2 * p);
            if warm && (i % 25 == 0 || i == config.burnin) {
                let emp = &m2 / (count - 1) as f64;
                if emp.diagonal().sum() > 0.0 {
                    chol_l = linalg::cholesky_spd(&emp)?.l();
                }
            }
        } else {
            if accept {
                accepted_post += 1;
            }
            let k = i - config.burnin;
            if k % config.thin == 0 {
                for j in 0..p {
                    draws[(kept, j)] = x[j];
                }
                kept += 1;
            }
        }
    }
    Ok(ChainOutput {
        draws,
        acceptance_rate: accepted_post as f64 / (config.iterations - config.burnin) as f64,
        final_state: x.as_slice().to_vec(),
    })
}

/// One subset's chain output with its moments and Laplace approximation.
#[derive(Clone, Debug)]
pub struct SubsetRun {
    pub subset_id: usize,
    pub n_obs: usize,
    pub draws: DrawMatrix,
    pub laplace: Option<LaplaceApprox>,
    pub sample_mean: DVector<f64>,
    pub sample_cov: DMatrix<f64>,
    /// Whether the sample covariance needed a ridge to factor.
    pub cov_repaired: bool,
    pub acceptance_rate: f64,
}

impl SubsetRun {
    pub fn from_draws(
        subset_id: usize,
        n_obs: usize,
        draws: DrawMatrix,
        laplace: Option<LaplaceApprox>,
        acceptance_rate: f64,
    ) -> Result<Self> {
        let (sample_mean, mut sample_cov) = draws.mean_cov()?;
        let mut cov_repaired = false;
        if sample_cov.clone().cholesky().is_none() {
            let p = sample_cov.nrows();
            let scale = (sample_cov.diagonal().sum() / p as f64).abs().max(1e-12);
            sample_cov += DMatrix::identity(p, p) * (linalg::SPD_RIDGE * scale);
            cov_repaired = true;
        }
        Ok(SubsetRun {
            subset_id,
            n_obs,
            draws,
            laplace,
            sample_mean,
            sample_cov,
            cov_repaired,
            acceptance_rate,
        })
    }

    pub fn dim(&self) -> usize {
        self.draws.dim()
    }

    /// Sidecar JSON manifest (moments row-major; draws live in the CSV).
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let rec = SubsetRunRecord::from_run(self);
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, &rec)?;
        Ok(())
    }

    pub fn read(json_path: &Path, csv_path: &Path) -> Result<Self> {
        let file = std::fs::File::open(json_path)?;
        let rec: SubsetRunRecord = serde_json::from_reader(file)?;
        rec.into_run(csv_path)
    }
}

#[derive(Serialize, Deserialize)]
struct LaplaceRecord {
    mode: Vec<f64>,
    cov: Vec<f64>,
    log_det: f64,
}

#[derive(Serialize, Deserialize)]
struct SubsetRunRecord {
    subset_id: usize,
    n_obs: usize,
    model: String,
    lineage: String,
    names: Vec<String>,
    acceptance_rate: f64,
    sample_mean: Vec<f64>,
    sample_cov: Vec<f64>,
    cov_repaired: bool,
    laplace: Option<LaplaceRecord>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major(flat: &[f64], p: usize) -> Result<DMatrix<f64>> {
    if flat.len() != p * p {
        return Err(Error::Config(format!(
            "expected {p}x{p} row-major matrix, got {} entries",
            flat.len()
        )));
    }
    Ok(DMatrix::from_row_slice(p, p, flat))
}

impl SubsetRunRecord {
    fn from_run(run: &SubsetRun) -> Self {
        SubsetRunRecord {
            subset_id: run.subset_id,
            n_obs: run.n_obs,
            model: run.draws.meta.model.clone(),
            lineage: run.draws.meta.lineage.clone(),
            names: run.draws.names.clone(),
            acceptance_rate: run.acceptance_rate,
            sample_mean: run.sample_mean.as_slice().to_vec(),
            sample_cov: row_major(&run.sample_cov),
            cov_repaired: run.cov_repaired,
            laplace: run.laplace.as_ref().map(|l| LaplaceRecord {
                mode: l.mode.as_slice().to_vec(),
                cov: row_major(&l.cov),
                log_det: l.log_det,
            }),
        }
    }

    fn into_run(self, csv_path: &Path) -> Result<SubsetRun> {
        let meta = DrawMeta::new(&self.model, &self.subset_id.to_string(), self.lineage);
        let draws = DrawMatrix::read_csv(csv_path, meta)?;
        let p = draws.dim();
        let laplace = match self.laplace {
            Some(l) => Some(LaplaceApprox {
                mode: DVector::from_vec(l.mode),
                cov: from_row_major(&l.cov, p)?,
                log_det: l.log_det,
            }),
            None => None,
        };
        Ok(SubsetRun {
            subset_id: self.subset_id,
            n_obs: self.n_obs,
            draws,
            laplace,
            sample_mean: DVector::from_vec(self.sample_mean),
            sample_cov: from_row_major(&self.sample_cov, p)?,
            cov_repaired: self.cov_repaired,
            acceptance_rate: self.acceptance_rate,
        })
    }
}

fn resolve_init(
    model: &ModelKind,
    data: &Dataset,
    fraction: PriorFraction,
    init: &InitStrategy,
    lap: Option<&LaplaceApprox>,
) -> Result<Vec<f64>> {
    match init {
        InitStrategy::Point(v) => {
            if v.len() != model.dim(data) {
                return Err(Error::Config(format!(
                    "initial point has {} coordinates, model needs {}",
                    v.len(),
                    model.dim(data)
                )));
            }
            Ok(v.clone())
        }
        InitStrategy::LaplaceMode => lap
            .map(|l| l.mode.as_slice().to_vec())
            .ok_or_else(|| Error::Chain(format!("Laplace init unavailable for {}", model.name()))),
        InitStrategy::ModelDefault => Ok(model.default_init(data, fraction)),
    }
}

fn run_chain_at(
    model: &ModelKind,
    subset: &Dataset,
    fraction: PriorFraction,
    config: &ChainConfig,
    subset_id: usize,
) -> Result<SubsetRun> {
    config.validate()?;
    let path = [domain::CHAIN, subset_id as u64];
    let mut rng = rng::stream(config.seed, &path);
    let meta = DrawMeta::new(
        model.name(),
        &subset_id.to_string(),
        rng::lineage(config.seed, &path),
    );
    let names = model.param_names(subset);

    if model.uses_gibbs() || config.proposal == Proposal::Gibbs {
        let (mixture, xs) = match (model, subset) {
            (ModelKind::Mixture(m), Dataset::Mixture { x }) => (m, x),
            _ => {
                return Err(Error::Chain(format!(
                    "Gibbs proposal is only available for the mixture model, not {}",
                    model.name()
                )))
            }
        };
        let init = resolve_init(model, subset, fraction, &config.init, None)?;
        let mut state = MixtureState {
            means: init,
            weights: vec![1.0 / mixture.n_components as f64; mixture.n_components],
            alloc: vec![0; xs.len()],
        };
        let retained = (config.iterations - config.burnin) / config.thin;
        let mut rows = Vec::with_capacity(retained);
        for i in 1..=config.iterations {
            mixture.gibbs_sweep(&mut state, xs, fraction, None, None, &mut rng);
            if i > config.burnin && (i - config.burnin) % config.thin == 0 {
                rows.push(state.means.clone());
            }
        }
        let draws = DrawMatrix::from_rows(names, &rows, meta)?;
        return SubsetRun::from_draws(subset_id, subset.len(), draws, None, 1.0);
    }

    let lap = if model.supports_laplace() {
        laplace(model, subset, fraction).ok()
    } else {
        None
    };
    let init = resolve_init(model, subset, fraction, &config.init, lap.as_ref())?;
    let post = SubsetPosterior::new(model, subset, fraction)?;
    let out = adaptive_metropolis(
        |t| post.log_density(t),
        &init,
        config,
        lap.as_ref().map(|l| l.cov.clone()),
        &mut rng,
    )?;
    let draws = DrawMatrix::new(names, out.draws, meta)?;
    SubsetRun::from_draws(subset_id, subset.len(), draws, lap, out.acceptance_rate)
}

/// Run one subset chain (adaptive Metropolis, or Gibbs for the mixture).
pub fn run_chain(
    model: &ModelKind,
    subset: &Dataset,
    fraction: PriorFraction,
    config: &ChainConfig,
) -> Result<SubsetRun> {
    run_chain_at(model, subset, fraction, config, 1)
}

/// Full-data chain on stream `(seed, [chain domain, 0])`. Subset ids start
/// at 1, so reference draws never share a stream with subset draws.
pub fn run_reference_chain(
    model: &ModelKind,
    data: &Dataset,
    config: &ChainConfig,
) -> Result<SubsetRun> {
    run_chain_at(model, data, PriorFraction::whole(), config, 0)
}

/// Run every subset chain on the pool. Each subset gets the stream
/// `(config.seed, [chain domain, subset id])`, so results do not depend on
/// the worker count.
pub fn run_all_subsets(
    model: &ModelKind,
    data: &Dataset,
    part: &Partition,
    fraction: PriorFraction,
    config: &ChainConfig,
    pool: &WorkerPool,
) -> Result<Vec<SubsetRun>> {
    config.validate()?;
    pool.install(|| {
        (1..=part.m)
            .into_par_iter()
            .map(|id| {
                let idx = part.subset_indices(id);
                let sub = data.subset(&idx);
                run_chain_at(model, &sub, fraction, config, id)
                    .map_err(|e| Error::Chain(format!("subset {id}: {e}")))
            })
            .collect()
    })
}

/// Fixed-proposal Metropolis on `logf(t) - (t - anchor)' P (t - anchor)/2`.
/// `precision = None` drops the tether term entirely. Returns the final
/// state and the number of accepted moves.
pub fn tethered_metropolis(
    logf: impl Fn(&[f64]) -> f64,
    anchor: &[f64],
    precision: Option<&DMatrix<f64>>,
    prop_chol: &DMatrix<f64>,
    iterations: usize,
    init: &[f64],
    rng: &mut Stream,
) -> Result<(Vec<f64>, usize)> {
    let p = init.len();
    let a = DVector::from_column_slice(anchor);
    let tether = |t: &DVector<f64>| match precision {
        Some(prec) => {
            let d = t - &a;
            -0.5 * (prec * &d).dot(&d)
        }
        None => 0.0,
    };
    let mut x = DVector::from_column_slice(init);
    let mut fx = logf(x.as_slice()) + tether(&x);
    if !fx.is_finite() {
        return Err(Error::Chain("non-finite tethered target at initial point".into()));
    }
    let mut accepted = 0usize;
    let mut z = DVector::zeros(p);
    for _ in 0..iterations {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let prop = &x + prop_chol * &z;
        let fp = logf(prop.as_slice()) + tether(&prop);
        let ratio = fp - fx;
        let alpha = if ratio >= 0.0 { 1.0 } else { ratio.exp() };
        if rng.random::<f64>() < alpha {
            x = prop;
            fx = fp;
            accepted += 1;
        }
    }
    Ok((x.as_slice().to_vec(), accepted))
}

/// Proposal covariance for a tethered chain: the harmonic combination of
/// the tether and a rough posterior scale, times `2.38^2 / p`.
pub fn tether_proposal_cov(
    tether_cov: &DMatrix<f64>,
    rough_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = tether_cov.nrows();
    let prec = linalg::spd_inverse(tether_cov)? + linalg::spd_inverse(rough_cov)?;
    Ok(linalg::spd_inverse(&prec)? * (2.38 * 2.38 / p as f64))
}

/// Run a fresh tethered conditional chain and return its final state. The
/// target is the subset posterior times a Gaussian tether `N(anchor, H)`;
/// the mixture model uses tethered Gibbs sweeps instead of Metropolis.
pub fn tethered_chain(
    model: &ModelKind,
    subset: &Dataset,
    fraction: PriorFraction,
    anchor: &[f64],
    h: &Bandwidth,
    iterations: usize,
    init: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let p = anchor.len();
    if iterations == 0 {
        return Err(Error::Config("tethered chain needs at least one iteration".into()));
    }
    let h_cov = h.to_cov(p)?;
    let mut rng = rng::stream(seed, &[domain::TETHER]);

    if let (ModelKind::Mixture(m), Dataset::Mixture { x }) = (model, subset) {
        let tether_vars: Vec<f64> = h_cov.diagonal().iter().cloned().collect();
        let mut state = MixtureState {
            means: init.to_vec(),
            weights: vec![1.0 / m.n_components as f64; m.n_components],
            alloc: vec![0; x.len()],
        };
        for _ in 0..iterations {
            m.gibbs_sweep(&mut state, x, fraction, Some((anchor, &tether_vars)), None, &mut rng);
        }
        return Ok(state.means);
    }

    let rough = if model.supports_laplace() {
        laplace(model, subset, fraction).map(|l| l.cov).ok()
    } else {
        None
    };
    let rough = rough.unwrap_or_else(|| DMatrix::identity(p, p));
    let prop = tether_proposal_cov(&h_cov, &rough)?;
    let prop_chol = linalg::cholesky_spd(&prop)?.l();
    let precision = linalg::spd_inverse(&h_cov)?;
    let post = SubsetPosterior::new(model, subset, fraction)?;
    let (state, _) = tethered_metropolis(
        |t| post.log_density(t),
        anchor,
        Some(&precision),
        &prop_chol,
        iterations,
        init,
        &mut rng,
    )?;
    Ok(state)
}

/// Kolmogorov-Smirnov statistic between a sample and an analytic CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        sup = sup.max((f - lo).abs()).max((f - hi).abs());
    }
    sup
}
