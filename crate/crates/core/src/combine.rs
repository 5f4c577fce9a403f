//! Combination strategies: averaging baselines, the marginal kernel
//! product, Weierstrass refinement, Weierstrass rejection with its pairwise
//! tree, sequential rejection with importance weights, and the full-data
//! Laplace baseline.
//!
//! All combiners are deterministic functions of their inputs and seeds; the
//! worker pool only changes scheduling, never output bytes.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    self, adaptive_metropolis, tether_proposal_cov, tethered_metropolis, ChainConfig, DrawMatrix,
    DrawMeta, Partition, SubsetRun, WorkerPool,
};
use crate::error::{Error, Result};
use crate::kernel::{
    fukunaga_bandwidth, linspace, silverman_bandwidth, trapezoid, Bandwidth, BandwidthSchedule,
    GridDensity, KernelSpec, INV_SQRT_2PI,
};
use crate::linalg;
use crate::models::{mixture, toy, Dataset, MixtureState, ModelKind, PriorFraction};
use crate::rng::{self, domain, Stream};

/// Per-method diagnostics serialized next to combined draws.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub proposals: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accepted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_level_acceptance: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_level_draws: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth_multiplier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub achieved_acceptance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub saturated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aborted_replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub schedule_multipliers: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub step_means: Option<Vec<Vec<f64>>>,
}

impl Diagnostics {
    pub fn for_method(method: &str) -> Self {
        Diagnostics {
            method: method.to_string(),
            ..Diagnostics::default()
        }
    }
}

/// Output of any combiner: draws, optional self-normalized weights, and
/// method diagnostics.
#[derive(Clone, Debug)]
pub struct CombineResult {
    pub draws: DrawMatrix,
    pub weights: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl CombineResult {
    pub fn new(draws: DrawMatrix, weights: Option<Vec<f64>>, diagnostics: Diagnostics) -> Result<Self> {
        if let Some(w) = &weights {
            if w.len() != draws.n_draws() {
                return Err(Error::Combine(format!(
                    "{} weights for {} draws",
                    w.len(),
                    draws.n_draws()
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::Combine("weights must be positive and finite".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::Combine(format!("weights sum to {total}, not 1")));
            }
        }
        Ok(CombineResult { draws, weights, diagnostics })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.n_draws()
    }

    /// Effective sample size `1 / sum w^2` (the draw count when unweighted).
    pub fn ess(&self) -> f64 {
        match &self.weights {
            Some(w) => 1.0 / w.iter().map(|x| x * x).sum::<f64>(),
            None => self.n_draws() as f64,
        }
    }

    /// Weighted per-coordinate means.
    pub fn mean(&self) -> DVector<f64> {
        match &self.weights {
            None => self.draws.mean(),
            Some(w) => {
                let p = self.draws.dim();
                let mut mean = DVector::zeros(p);
                for k in 0..self.n_draws() {
                    for j in 0..p {
                        mean[j] += w[k] * self.draws.values[(k, j)];
                    }
                }
                mean
            }
        }
    }

    /// CSV with header `draw_index,weight,<param names>`; the weight column
    /// is `1/n` when the result is unweighted.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["draw_index".to_string(), "weight".to_string()];
        header.extend(self.draws.names.iter().cloned());
        w.write_record(&header)?;
        let n = self.n_draws();
        let uniform = 1.0 / n as f64;
        for i in 0..n {
            let wi = self.weights.as_ref().map_or(uniform, |ws| ws[i]);
            let mut rec = vec![i.to_string(), wi.to_string()];
            rec.extend(self.draws.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, meta: DrawMeta, diagnostics: Diagnostics) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "draw_index" || &headers[1] != "weight" {
            return Err(Error::Config(format!(
                "combined csv must start with draw_index,weight, got {headers:?}"
            )));
        }
        let names: Vec<String> = headers.iter().skip(2).map(|s| s.to_string()).collect();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            weights.push(
                rec[1]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad weight {}: {e}", &rec[1])))?,
            );
            rows.push(
                rec.iter()
                    .skip(2)
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|e| Error::Config(format!("bad draw value {v}: {e}")))
                    })
                    .collect::<Result<_>>()?,
            );
        }
        let draws = DrawMatrix::from_rows(names, &rows, meta)?;
        let spread = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let weights = if spread.abs() <= 1e-15 { None } else { Some(weights) };
        CombineResult::new(draws, weights, diagnostics)
    }

    pub fn write_diagnostics(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, &self.diagnostics)?;
        Ok(())
    }
}

/// Bandwidth policy for the rejection samplers.
#[derive(Clone, Debug)]
pub enum BandwidthChoice {
    /// Calibrate a common multiplier on Silverman scales to hit this rate.
    TargetAcceptance(f64),
    /// One bandwidth per subset, used as given.
    Explicit(Vec<Bandwidth>),
}

#[derive(Clone, Debug)]
pub struct RejectionConfig {
    pub bandwidth: BandwidthChoice,
    pub max_proposals: usize,
    /// Minimum accepted draws per pairwise merge.
    pub min_draws: usize,
    pub seed: u64,
}

impl RejectionConfig {
    pub fn with_target(target_acceptance: f64, seed: u64) -> Self {
        RejectionConfig {
            bandwidth: BandwidthChoice::TargetAcceptance(target_acceptance),
            max_proposals: usize::MAX,
            min_draws: 200,
            seed,
        }
    }

    pub fn with_bandwidths(per_subset: Vec<Bandwidth>, seed: u64) -> Self {
        RejectionConfig {
            bandwidth: BandwidthChoice::Explicit(per_subset),
            max_proposals: usize::MAX,
            min_draws: 200,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.bandwidth {
            BandwidthChoice::TargetAcceptance(t) => {
                if !(*t > 0.0 && *t < 1.0) {
                    return Err(Error::Config(format!(
                        "target acceptance must lie in (0,1), got {t}"
                    )));
                }
            }
            BandwidthChoice::Explicit(b) => {
                if b.is_empty() {
                    return Err(Error::Config("explicit bandwidth list is empty".into()));
                }
            }
        }
        if self.max_proposals == 0 {
            return Err(Error::Config("max_proposals must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeRule {
    #[default]
    Silverman,
}

#[derive(Clone, Debug)]
pub struct SequentialConfig {
    /// Retained draws per coordinate per subset.
    pub n0: usize,
    pub n_replicas: usize,
    pub grid_points: usize,
    pub kde_rule: KdeRule,
    pub seed: u64,
}

impl SequentialConfig {
    pub fn new(n0: usize, n_replicas: usize, seed: u64) -> Self {
        SequentialConfig {
            n0,
            n_replicas,
            grid_points: 512,
            kde_rule: KdeRule::Silverman,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n0 < 50 {
            return Err(Error::Config(format!("N0 must be at least 50, got {}", self.n0)));
        }
        if self.n_replicas == 0 {
            return Err(Error::Config("need at least one replica".into()));
        }
        if self.grid_points < 16 {
            return Err(Error::Config("grid too coarse for quadrature".into()));
        }
        Ok(())
    }
}

fn check_equal_draws(runs: &[SubsetRun]) -> Result<(usize, usize)> {
    if runs.is_empty() {
        return Err(Error::Combine("no subset runs to combine".into()));
    }
    let n = runs[0].draws.n_draws();
    let p = runs[0].dim();
    for r in runs {
        if r.draws.n_draws() != n || r.dim() != p {
            return Err(Error::Combine(format!(
                "subset {} has {} draws of dim {}, expected {n} of dim {p}",
                r.subset_id,
                r.draws.n_draws(),
                r.dim()
            )));
        }
    }
    Ok((n, p))
}

fn combined_meta(runs: &[SubsetRun]) -> DrawMeta {
    DrawMeta::new(&runs[0].draws.meta.model, "combined", runs[0].draws.meta.lineage.clone())
}

/// Iteration-wise mean of the subset draws.
pub fn combine_simple_average(runs: &[SubsetRun]) -> Result<CombineResult> {
    let (n, p) = check_equal_draws(runs)?;
    let m = runs.len() as f64;
    let mut values = DMatrix::zeros(n, p);
    for r in runs {
        values += &r.draws.values;
    }
    values /= m;
    let draws = DrawMatrix::new(runs[0].draws.names.clone(), values, combined_meta(runs))?;
    CombineResult::new(draws, None, Diagnostics::for_method("average"))
}

/// Iteration-wise precision-weighted average: subset `i` gets the matrix
/// weight `(sum_k Cov_k^{-1})^{-1} Cov_i^{-1}`.
pub fn combine_weighted_average(runs: &[SubsetRun]) -> Result<CombineResult> {
    let (n, p) = check_equal_draws(runs)?;
    let precisions: Vec<DMatrix<f64>> = runs
        .iter()
        .map(|r| linalg::spd_inverse(&r.sample_cov))
        .collect::<Result<_>>()?;
    let total: DMatrix<f64> = precisions.iter().fold(DMatrix::zeros(p, p), |acc, m| acc + m);
    let chol = linalg::cholesky_spd(&total)?;
    let mut values = DMatrix::zeros(n, p);
    for k in 0..n {
        let mut acc = DVector::zeros(p);
        for (r, prec) in runs.iter().zip(&precisions) {
            acc += prec * r.draws.values.row(k).transpose();
        }
        let out = chol.solve(&acc);
        for j in 0..p {
            values[(k, j)] = out[j];
        }
    }
    let draws = DrawMatrix::new(runs[0].draws.names.clone(), values, combined_meta(runs))?;
    CombineResult::new(draws, None, Diagnostics::for_method("weighted"))
}

/// Log of a Gaussian KDE with Silverman bandwidth, evaluated on a grid.
/// Values that underflow to zero come back as negative infinity.
fn log_kde(grid: &[f64], samples: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples, None)?;
    if grid.len() >= 2 && samples.len() * grid.len() > 1 << 24 {
        let dx = grid[1] - grid[0];
        let refine = ((16.0 * dx / h).ceil() as usize).max(1);
        if refine <= 32 {
            return Ok(log_kde_binned(grid, samples, h, refine));
        }
    }
    let norm = INV_SQRT_2PI / (h * samples.len() as f64);
    Ok(grid
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for s in samples {
                let u = (x - s) / h;
                acc += (-0.5 * u * u).exp();
            }
            (acc * norm).ln()
        })
        .collect())
}

/// Same estimate through linear binning on a refined copy of the grid, for
/// large sample-by-grid products. The refinement keeps the cell width under
/// a sixteenth of the bandwidth and the kernel is truncated at eight
/// bandwidths, both well below Monte Carlo resolution. The grid must be
/// uniform, which `combine_kernel_marginal` guarantees via `linspace`.
fn log_kde_binned(grid: &[f64], samples: &[f64], h: f64, refine: usize) -> Vec<f64> {
    let dxi = (grid[1] - grid[0]) / refine as f64;
    let reach = (8.0 * h / dxi).ceil() as usize;
    // Pad by one kernel reach so samples beyond the grid still bin at their
    // true offset; anything farther cannot contribute above the truncation.
    let lo = grid[0] - reach as f64 * dxi;
    let n_int = (grid.len() - 1) * refine + 1 + 2 * reach;
    let mut bins = vec![0.0f64; n_int];
    for &s in samples {
        let pos = (s - lo) / dxi;
        if !(0.0..=(n_int - 2) as f64).contains(&pos) {
            continue;
        }
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        bins[i] += 1.0 - w;
        bins[i + 1] += w;
    }
    let norm = INV_SQRT_2PI / (h * samples.len() as f64);
    grid.iter()
        .enumerate()
        .map(|(g, &x)| {
            let center = g * refine + reach;
            let first = center - reach;
            let mut acc = 0.0;
            for (j, b) in bins[first..=center + reach].iter().enumerate() {
                let u = (x - (lo + (first + j) as f64 * dxi)) / h;
                acc += b * (-0.5 * u * u).exp();
            }
            (acc * norm).ln()
        })
        .collect()
}

/// Per-coordinate kernel product: KDE each subset's marginal on a shared
/// grid, multiply in log space, renormalize, and inverse-CDF sample each
/// coordinate independently.
pub fn combine_kernel_marginal(
    runs: &[SubsetRun],
    grid_points: usize,
    seed: u64,
) -> Result<CombineResult> {
    if runs.is_empty() {
        return Err(Error::Combine("no subset runs to combine".into()));
    }
    let p = runs[0].dim();
    let n_out = runs.iter().map(|r| r.draws.n_draws()).min().unwrap();
    let mut values = DMatrix::zeros(n_out, p);
    for j in 0..p {
        let columns: Vec<Vec<f64>> = runs.iter().map(|r| r.draws.column(j)).collect();
        let pooled: Vec<f64> = columns.iter().flatten().cloned().collect();
        let pooled_sd = {
            let n = pooled.len() as f64;
            let mean = pooled.iter().sum::<f64>() / n;
            (pooled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * pooled_sd;
        let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * pooled_sd;
        let grid = linspace(lo, hi, grid_points);
        let mut log_sum = vec![0.0f64; grid.len()];
        for col in &columns {
            for (acc, v) in log_sum.iter_mut().zip(log_kde(&grid, col)?) {
                *acc += v;
            }
        }
        let max_log = log_sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max_log.is_finite() || max_log < -700.0 {
            return Err(Error::Disconnected(format!(
                "coordinate {j}: subset marginals share no mass (peak log density {max_log})"
            )));
        }
        let density = GridDensity::new(grid, log_sum.iter().map(|l| (l - max_log).exp()).collect())?;
        let mut stream = rng::stream(seed, &[domain::KERNEL_MARGINAL, j as u64]);
        for (k, v) in density.sample(n_out, &mut stream).into_iter().enumerate() {
            values[(k, j)] = v;
        }
    }
    let draws = DrawMatrix::new(runs[0].draws.names.clone(), values, combined_meta(runs))?;
    CombineResult::new(draws, None, Diagnostics::for_method("kernel"))
}

/// Bandwidths produced by [`calibrate_bandwidth`].
#[derive(Clone, Debug)]
pub struct CalibratedBandwidth {
    pub per_subset: Vec<Bandwidth>,
    /// Common multiplier applied to the Silverman scales.
    pub multiplier: f64,
    /// Expected acceptance on the pilot tuples at the returned multiplier.
    pub achieved: f64,
    /// True when the lower bracket edge already meets the target.
    pub saturated: bool,
}

const CALIBRATE_LO: f64 = 1e-6;
const CALIBRATE_HI: f64 = 1e3;
const PILOT_TUPLES: usize = 2000;

struct Pilot {
    /// `s0[k][i]`: kernel-distance sum for tuple `k` with donor `i`, in
    /// Silverman units.
    s0: Vec<Vec<f64>>,
}

impl Pilot {
    fn build(columns: &[DMatrix<f64>], scales: &[Vec<f64>]) -> Self {
        let m = columns.len();
        let p = columns[0].ncols();
        let n = columns.iter().map(|c| c.nrows()).min().unwrap();
        let take = n.min(PILOT_TUPLES);
        let stride = (n / take).max(1);
        let mut s0 = Vec::with_capacity(take);
        for t in 0..take {
            let k = (t * stride).min(n - 1);
            let mut per_donor = vec![0.0; m];
            for (i, donor_s0) in per_donor.iter_mut().enumerate() {
                let mut acc = 0.0;
                for l in 0..m {
                    if l == i {
                        continue;
                    }
                    for j in 0..p {
                        let d = (columns[l][(k, j)] - columns[i][(k, j)]) / scales[l][j];
                        acc += d * d;
                    }
                }
                *donor_s0 = acc;
            }
            s0.push(per_donor);
        }
        Pilot { s0 }
    }

    /// Expected acceptance at multiplier `lambda`, averaged over pilot
    /// tuples and uniform donor choice.
    fn acceptance(&self, lambda: f64) -> f64 {
        let inv = 1.0 / (2.0 * lambda * lambda);
        let mut acc = 0.0;
        for per_donor in &self.s0 {
            let mut row = 0.0;
            for s in per_donor {
                row += (-s * inv).exp();
            }
            acc += row / per_donor.len() as f64;
        }
        acc / self.s0.len() as f64
    }
}

fn silverman_scales(columns: &[DMatrix<f64>]) -> Result<Vec<Vec<f64>>> {
    columns
        .iter()
        .map(|c| {
            (0..c.ncols())
                .map(|j| {
                    let col: Vec<f64> = c.column(j).iter().cloned().collect();
                    silverman_bandwidth(&col, None)
                })
                .collect()
        })
        .collect()
}

fn calibrate_columns(
    columns: &[DMatrix<f64>],
    target: f64,
    _spec: &KernelSpec,
) -> Result<CalibratedBandwidth> {
    let scales = silverman_scales(columns)?;
    let pilot = Pilot::build(columns, &scales);
    let to_bandwidths = |lambda: f64| -> Result<Vec<Bandwidth>> {
        scales
            .iter()
            .map(|per_coord| {
                Bandwidth::diagonal(per_coord.iter().map(|s| (lambda * s) * (lambda * s)).collect())
            })
            .collect()
    };
    let (mut lo, mut hi) = (CALIBRATE_LO, CALIBRATE_HI);
    let ar_lo = pilot.acceptance(lo);
    if ar_lo >= target {
        return Ok(CalibratedBandwidth {
            per_subset: to_bandwidths(lo)?,
            multiplier: lo,
            achieved: ar_lo,
            saturated: true,
        });
    }
    if pilot.acceptance(hi) < target {
        return Err(Error::Combine(format!(
            "acceptance target {target} unreachable: pilot acceptance at multiplier {hi} is {}",
            pilot.acceptance(hi)
        )));
    }
    let mut mid = (lo * hi).sqrt();
    for _ in 0..40 {
        mid = (lo * hi).sqrt();
        let ar = pilot.acceptance(mid);
        if (ar - target).abs() <= 0.1 * target {
            break;
        }
        if ar < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CalibratedBandwidth {
        per_subset: to_bandwidths(mid)?,
        multiplier: mid,
        achieved: pilot.acceptance(mid),
        saturated: false,
    })
}

/// Find the common multiplier on per-subset per-coordinate Silverman scales
/// whose expected rejection acceptance over a pilot subsample matches
/// `target` within 10% relative (geometric bisection, at most 40 steps).
pub fn calibrate_bandwidth(
    runs: &[SubsetRun],
    target: f64,
    spec: &KernelSpec,
) -> Result<CalibratedBandwidth> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!(
            "target acceptance must lie in (0,1), got {target}"
        )));
    }
    check_equal_draws(runs)?;
    let columns: Vec<DMatrix<f64>> = runs.iter().map(|r| r.draws.values.clone()).collect();
    calibrate_columns(&columns, target, spec)
}

struct RejectScan {
    rows: Vec<Vec<f64>>,
    proposals: usize,
}

/// One pass of the rejection test over aligned draw tuples: donor uniform,
/// acceptance `log u < sum_{l != donor} sum_j (log K(d/h) - log sup K)`.
fn reject_scan(
    columns: &[&DMatrix<f64>],
    sds: &[Vec<f64>],
    spec: &KernelSpec,
    max_proposals: usize,
    rng: &mut Stream,
) -> RejectScan {
    let m = columns.len();
    let n = columns.iter().map(|c| c.nrows()).min().unwrap();
    let p = columns[0].ncols();
    let cap = n.min(max_proposals);
    let mut rows = Vec::new();
    for k in 0..cap {
        let donor = rng.random_range(0..m);
        let mut log_acc = 0.0;
        for (l, col) in columns.iter().enumerate() {
            if l == donor {
                continue;
            }
            for j in 0..p {
                let d = (col[(k, j)] - columns[donor][(k, j)]) / sds[l][j];
                log_acc += spec.log_ratio_to_sup(d);
            }
        }
        let u: f64 = rng.random();
        if u.ln() < log_acc {
            rows.push((0..p).map(|j| columns[donor][(k, j)]).collect());
        }
    }
    RejectScan { rows, proposals: cap }
}

fn resolve_bandwidth_sds(
    columns: &[DMatrix<f64>],
    config: &RejectionConfig,
    spec: &KernelSpec,
) -> Result<(Vec<Vec<f64>>, Diagnostics)> {
    let p = columns[0].ncols();
    let mut diag = Diagnostics::for_method("rejection");
    let sds = match &config.bandwidth {
        BandwidthChoice::Explicit(bws) => {
            if bws.len() != columns.len() {
                return Err(Error::Config(format!(
                    "{} explicit bandwidths for {} subsets",
                    bws.len(),
                    columns.len()
                )));
            }
            bws.iter().map(|b| b.per_coord_sd(p)).collect::<Result<Vec<_>>>()?
        }
        BandwidthChoice::TargetAcceptance(target) => {
            let cal = calibrate_columns(columns, *target, spec)?;
            diag.bandwidth_multiplier = Some(cal.multiplier);
            diag.achieved_acceptance = Some(cal.achieved);
            diag.saturated = Some(cal.saturated);
            cal.per_subset
                .iter()
                .map(|b| b.per_coord_sd(p))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok((sds, diag))
}

/// Weierstrass rejection across aligned subset draws. With a single subset
/// the acceptance product is empty and every draw is accepted.
pub fn weierstrass_reject(
    runs: &[SubsetRun],
    config: &RejectionConfig,
    spec: &KernelSpec,
) -> Result<CombineResult> {
    config.validate()?;
    check_equal_draws(runs)?;
    let columns: Vec<DMatrix<f64>> = runs.iter().map(|r| r.draws.values.clone()).collect();
    let (sds, mut diag) = resolve_bandwidth_sds(&columns, config, spec)?;
    let mut stream = rng::stream(config.seed, &[domain::REJECT, 0, 0]);
    let refs: Vec<&DMatrix<f64>> = columns.iter().collect();
    let scan = reject_scan(&refs, &sds, spec, config.max_proposals, &mut stream);
    if scan.rows.is_empty() {
        return Err(Error::Starvation { accepted: 0, minimum: 1 });
    }
    diag.acceptance_rate = Some(scan.rows.len() as f64 / scan.proposals as f64);
    diag.proposals = Some(scan.proposals);
    diag.accepted = Some(scan.rows.len());
    let draws = DrawMatrix::from_rows(runs[0].draws.names.clone(), &scan.rows, combined_meta(runs))?;
    CombineResult::new(draws, None, diag)
}

/// Balanced pairwise rejection tree: adjacent nodes merge per level, an odd
/// leftover is promoted unchanged, and each merge re-derives bandwidths
/// from the pair (recalibrating when a target acceptance is configured).
pub fn pairwise_combine(
    runs: &[SubsetRun],
    config: &RejectionConfig,
    spec: &KernelSpec,
) -> Result<CombineResult> {
    config.validate()?;
    if runs.len() < 2 {
        return Err(Error::Combine(format!(
            "pairwise combination needs at least 2 subsets, got {}",
            runs.len()
        )));
    }
    check_equal_draws(runs)?;
    if matches!(config.bandwidth, BandwidthChoice::Explicit(_)) && runs.len() > 2 {
        return Err(Error::Config(
            "explicit bandwidths only apply to a single pairwise level; use a target acceptance"
                .into(),
        ));
    }
    let mut nodes: Vec<DMatrix<f64>> = runs.iter().map(|r| r.draws.values.clone()).collect();
    let mut per_level_acceptance = Vec::new();
    let mut per_level_draws = Vec::new();
    let mut level = 0u64;
    while nodes.len() > 1 {
        let mut next = Vec::with_capacity(nodes.len().div_ceil(2));
        let mut level_accepted = 0usize;
        let mut level_proposals = 0usize;
        let mut pairs = nodes.chunks(2);
        let mut pair_idx = 0u64;
        for chunk in &mut pairs {
            if chunk.len() == 1 {
                next.push(chunk[0].clone());
                continue;
            }
            let n = chunk[0].nrows().min(chunk[1].nrows());
            let a = chunk[0].rows(0, n).into_owned();
            let b = chunk[1].rows(0, n).into_owned();
            let pair = vec![a, b];
            let (sds, _) = resolve_bandwidth_sds(&pair, config, spec)?;
            let mut stream = rng::stream(config.seed, &[domain::REJECT, level, pair_idx]);
            let refs: Vec<&DMatrix<f64>> = pair.iter().collect();
            let scan = reject_scan(&refs, &sds, spec, config.max_proposals, &mut stream);
            if scan.rows.len() < config.min_draws {
                return Err(Error::Combine(format!(
                    "pairwise level {level} pair {pair_idx} starved: {} accepted draws, minimum {}",
                    scan.rows.len(),
                    config.min_draws
                )));
            }
            level_accepted += scan.rows.len();
            level_proposals += scan.proposals;
            let p = runs[0].dim();
            let flat: Vec<f64> = scan.rows.iter().flatten().cloned().collect();
            next.push(DMatrix::from_row_slice(scan.rows.len(), p, &flat));
            pair_idx += 1;
        }
        if level_proposals > 0 {
            per_level_acceptance.push(level_accepted as f64 / level_proposals as f64);
            per_level_draws.push(next.iter().map(|n| n.nrows()).min().unwrap_or(0));
        }
        nodes = next;
        level += 1;
    }
    let final_draws = nodes.pop().unwrap();
    let mut diag = Diagnostics::for_method("pairwise");
    diag.per_level_acceptance = Some(per_level_acceptance);
    diag.per_level_draws = Some(per_level_draws);
    if let BandwidthChoice::TargetAcceptance(t) = config.bandwidth {
        diag.achieved_acceptance = Some(t);
    }
    let draws = DrawMatrix::new(runs[0].draws.names.clone(), final_draws, combined_meta(runs))?;
    CombineResult::new(draws, None, diag)
}

/// Per-step working matrices shared by every draw's tether update.
pub struct TetherStep {
    pub bandwidth: Bandwidth,
    pub cov: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub prop_chol: DMatrix<f64>,
}

/// A subset posterior as seen by the refinement sampler: given the current
/// anchor and the step's tether, produce an updated auxiliary draw.
pub trait RefineTarget: Sync + Send {
    fn dim(&self) -> usize;

    /// Rough covariance used to size Metropolis proposals.
    fn rough_cov(&self) -> DMatrix<f64>;

    fn tether_draw(
        &self,
        anchor: &[f64],
        step: &TetherStep,
        inner_iterations: usize,
        warm: &[f64],
        rng: &mut Stream,
    ) -> Result<Vec<f64>>;
}

/// Generic Metropolis target over a model's subset posterior.
pub struct ChainTarget {
    model: ModelKind,
    data: Dataset,
    fraction: PriorFraction,
    rough: DMatrix<f64>,
    bernoulli_stats: Option<(f64, f64)>,
}

impl ChainTarget {
    pub fn new(model: ModelKind, data: Dataset, fraction: PriorFraction) -> Result<Self> {
        let p = model.dim(&data);
        let rough = if model.supports_laplace() {
            engine::laplace(&model, &data, fraction)
                .map(|l| l.cov)
                .unwrap_or_else(|_| DMatrix::identity(p, p))
        } else {
            DMatrix::identity(p, p)
        };
        Ok(Self::with_rough(model, data, fraction, rough))
    }

    pub fn with_rough(
        model: ModelKind,
        data: Dataset,
        fraction: PriorFraction,
        rough: DMatrix<f64>,
    ) -> Self {
        let bernoulli_stats = match &data {
            Dataset::Bernoulli { y } => {
                Some((y.iter().map(|&v| v as f64).sum(), y.len() as f64))
            }
            _ => None,
        };
        ChainTarget { model, data, fraction, rough, bernoulli_stats }
    }

    fn log_density(&self, t: &[f64]) -> f64 {
        match (&self.model, &self.bernoulli_stats) {
            (ModelKind::BetaBernoulli(m), Some((s, n))) => {
                m.log_posterior(t[0], *s, *n, self.fraction)
            }
            _ => self
                .model
                .log_posterior(t, &self.data, self.fraction)
                .unwrap_or(f64::NEG_INFINITY),
        }
    }
}

impl RefineTarget for ChainTarget {
    fn dim(&self) -> usize {
        self.model.dim(&self.data)
    }

    fn rough_cov(&self) -> DMatrix<f64> {
        self.rough.clone()
    }

    fn tether_draw(
        &self,
        anchor: &[f64],
        step: &TetherStep,
        inner_iterations: usize,
        warm: &[f64],
        rng: &mut Stream,
    ) -> Result<Vec<f64>> {
        let start = if self.log_density(warm).is_finite() { warm } else { anchor };
        let (state, _) = tethered_metropolis(
            |t| self.log_density(t),
            anchor,
            Some(&step.precision),
            &step.prop_chol,
            inner_iterations,
            start,
            rng,
        )?;
        Ok(state)
    }
}

/// Tethered Gibbs target for the mixture model.
pub struct MixtureTarget {
    model: mixture::MixtureModel,
    xs: Vec<f64>,
    fraction: PriorFraction,
}

impl MixtureTarget {
    pub fn new(model: mixture::MixtureModel, xs: Vec<f64>, fraction: PriorFraction) -> Self {
        MixtureTarget { model, xs, fraction }
    }
}

impl RefineTarget for MixtureTarget {
    fn dim(&self) -> usize {
        self.model.n_components
    }

    fn rough_cov(&self) -> DMatrix<f64> {
        DMatrix::identity(self.model.n_components, self.model.n_components)
    }

    fn tether_draw(
        &self,
        anchor: &[f64],
        step: &TetherStep,
        inner_iterations: usize,
        warm: &[f64],
        rng: &mut Stream,
    ) -> Result<Vec<f64>> {
        let vars: Vec<f64> = step.cov.diagonal().iter().cloned().collect();
        let mut state = MixtureState {
            means: warm.to_vec(),
            weights: vec![1.0 / self.dim() as f64; self.dim()],
            alloc: vec![0; self.xs.len()],
        };
        for _ in 0..inner_iterations {
            self.model
                .gibbs_sweep(&mut state, &self.xs, self.fraction, Some((anchor, &vars)), None, rng);
        }
        Ok(state.means)
    }
}

/// Exact conjugate draws for a toy analytic subset density.
pub struct ToyTarget {
    part: toy::ToyPart,
}

impl ToyTarget {
    pub fn new(part: toy::ToyPart) -> Self {
        ToyTarget { part }
    }
}

impl RefineTarget for ToyTarget {
    fn dim(&self) -> usize {
        1
    }

    fn rough_cov(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn tether_draw(
        &self,
        anchor: &[f64],
        step: &TetherStep,
        _inner_iterations: usize,
        _warm: &[f64],
        rng: &mut Stream,
    ) -> Result<Vec<f64>> {
        Ok(vec![toy::tethered_conjugate_draw(
            self.part,
            anchor[0],
            step.cov[(0, 0)],
            rng,
        )])
    }
}

/// Exact conjugate draws for a Gaussian subset posterior `N(mean, cov)`.
pub struct GaussianTarget {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let precision = linalg::spd_inverse(&cov)?;
        Ok(GaussianTarget { mean, cov, precision })
    }
}

impl RefineTarget for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn rough_cov(&self) -> DMatrix<f64> {
        self.cov.clone()
    }

    fn tether_draw(
        &self,
        anchor: &[f64],
        step: &TetherStep,
        _inner_iterations: usize,
        _warm: &[f64],
        rng: &mut Stream,
    ) -> Result<Vec<f64>> {
        let a = DVector::from_column_slice(anchor);
        let q = &self.precision + &step.precision;
        let cov = linalg::spd_inverse(&q)?;
        let mean = &cov * (&self.precision * &self.mean + &step.precision * a);
        let chol = linalg::cholesky_spd(&cov)?;
        Ok(linalg::sample_mvn(&mean, &chol, rng).as_slice().to_vec())
    }
}

fn build_targets(
    model: &ModelKind,
    data: &Dataset,
    part: &Partition,
    fraction: PriorFraction,
    rough: Option<&[DMatrix<f64>]>,
) -> Result<Vec<Box<dyn RefineTarget>>> {
    let mut targets: Vec<Box<dyn RefineTarget>> = Vec::with_capacity(part.m);
    for id in 1..=part.m {
        let sub = data.subset(&part.subset_indices(id));
        let target: Box<dyn RefineTarget> = match (model, &sub) {
            (ModelKind::Mixture(m), Dataset::Mixture { x }) => {
                Box::new(MixtureTarget::new(m.clone(), x.clone(), fraction))
            }
            (ModelKind::Toy(_), Dataset::Toy { parts }) if parts.len() == 1 => {
                let which = if parts[0] == 1 { toy::ToyPart::P1 } else { toy::ToyPart::P2 };
                Box::new(ToyTarget::new(which))
            }
            _ => match rough.and_then(|r| r.get(id - 1)) {
                Some(cov) => Box::new(ChainTarget::with_rough(
                    model.clone(),
                    sub,
                    fraction,
                    cov.clone(),
                )),
                None => Box::new(ChainTarget::new(model.clone(), sub, fraction)?),
            },
        };
        targets.push(target);
    }
    Ok(targets)
}

/// Weierstrass refinement over explicit subset targets. Each step `s` uses
/// the per-subset tether `H_i = multiplier_s * H0`; every draw updates all
/// auxiliary variables (warm-started tethered chains) and then redraws
/// theta from the Gaussian conditional, which for equal bandwidths is
/// `N(mean(t_i), H_i / m)`.
pub fn refine_with_targets(
    targets: &[Box<dyn RefineTarget>],
    init_draws: &DrawMatrix,
    schedule: &BandwidthSchedule,
    inner_iterations: usize,
    pool: &WorkerPool,
    seed: u64,
) -> Result<CombineResult> {
    if targets.is_empty() {
        return Err(Error::Combine("refinement needs at least one subset target".into()));
    }
    let p = targets[0].dim();
    if targets.iter().any(|t| t.dim() != p) || init_draws.dim() != p {
        return Err(Error::Combine("target and draw dimensions disagree".into()));
    }
    let m = targets.len();
    let n = init_draws.n_draws();

    struct DrawState {
        theta: Vec<f64>,
        warm: Vec<Vec<f64>>,
    }
    let mut states: Vec<DrawState> = (0..n)
        .map(|k| {
            let theta = init_draws.row(k);
            DrawState { warm: vec![theta.clone(); m], theta }
        })
        .collect();

    let mut step_means: Vec<Vec<f64>> = Vec::with_capacity(schedule.len());
    for s in 0..schedule.len() {
        let bandwidth = schedule.step(s)?;
        let cov = bandwidth.to_cov(p)?;
        let precision = linalg::spd_inverse(&cov)?;
        let theta_chol = linalg::cholesky_spd(&(&cov / m as f64))?.l();
        let steps: Vec<TetherStep> = targets
            .iter()
            .map(|t| {
                let prop = tether_proposal_cov(&cov, &t.rough_cov())?;
                Ok(TetherStep {
                    bandwidth: bandwidth.clone(),
                    cov: cov.clone(),
                    precision: precision.clone(),
                    prop_chol: linalg::cholesky_spd(&prop)?.l(),
                })
            })
            .collect::<Result<_>>()?;

        pool.install(|| {
            states.par_iter_mut().enumerate().try_for_each(|(k, state)| -> Result<()> {
                let mut mean = vec![0.0; p];
                for (i, target) in targets.iter().enumerate() {
                    let mut rng =
                        rng::stream(seed, &[domain::TETHER, s as u64, i as u64, k as u64]);
                    let t = target
                        .tether_draw(&state.theta, &steps[i], inner_iterations, &state.warm[i], &mut rng)
                        .map_err(|e| {
                            Error::Combine(format!("step {s} subset {i} draw {k}: {e}"))
                        })?;
                    for j in 0..p {
                        mean[j] += t[j] / m as f64;
                    }
                    state.warm[i] = t;
                }
                let mut rng = rng::stream(seed, &[domain::REFINE_THETA, s as u64, k as u64]);
                let mut z = DVector::zeros(p);
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let noise = &theta_chol * z;
                for j in 0..p {
                    state.theta[j] = mean[j] + noise[j];
                }
                Ok(())
            })
        })?;

        let mut mean_after = vec![0.0; p];
        for state in &states {
            for j in 0..p {
                mean_after[j] += state.theta[j] / n as f64;
            }
        }
        step_means.push(mean_after);
    }

    let rows: Vec<Vec<f64>> = states.into_iter().map(|s| s.theta).collect();
    let meta = DrawMeta::new(
        &init_draws.meta.model,
        "combined",
        rng::lineage(seed, &[domain::REFINE_THETA]),
    );
    let draws = DrawMatrix::from_rows(init_draws.names.clone(), &rows, meta)?;
    let mut diag = Diagnostics::for_method("refinement");
    diag.schedule_multipliers = Some(schedule.multipliers().to_vec());
    diag.step_means = Some(step_means);
    CombineResult::new(draws, None, diag)
}

/// Weierstrass refinement for a model over a partitioned dataset.
pub fn weierstrass_refine(
    model: &ModelKind,
    data: &Dataset,
    part: &Partition,
    fraction: PriorFraction,
    init_draws: &DrawMatrix,
    schedule: &BandwidthSchedule,
    inner_iterations: usize,
    pool: &WorkerPool,
    seed: u64,
) -> Result<CombineResult> {
    let targets = build_targets(model, data, part, fraction, None)?;
    refine_with_targets(&targets, init_draws, schedule, inner_iterations, pool, seed)
}

/// Refinement with everything derived from finished subset runs: the initial
/// draws are sampled from the full-data Laplace approximation, whose
/// covariance also feeds the rule-of-thumb base bandwidth, and the schedule
/// is the annealed `m..1/m` ladder. When no interior mode exists the initial
/// draws fall back to the weighted average and the bandwidth to the
/// precision-weighted combined covariance of the subset draws.
pub fn refine_subsets(
    model: &ModelKind,
    data: &Dataset,
    part: &Partition,
    fraction: PriorFraction,
    runs: &[SubsetRun],
    steps: usize,
    inner_iterations: usize,
    pool: &WorkerPool,
    seed: u64,
) -> Result<CombineResult> {
    let (n, p) = check_equal_draws(runs)?;
    let (init, sigma_hat) = match engine::laplace(model, data, PriorFraction::whole()) {
        Ok(lap) => {
            let mut stream = rng::stream(seed, &[domain::REFINE_INIT]);
            let values = lap.sample(n, &mut stream)?;
            let meta = DrawMeta::new(
                model.name(),
                "combined",
                rng::lineage(seed, &[domain::REFINE_INIT]),
            );
            let cov = lap.cov.clone();
            (DrawMatrix::new(model.param_names(data), values, meta)?, cov)
        }
        Err(_) => {
            let total = runs
                .iter()
                .map(|r| linalg::spd_inverse(&r.sample_cov))
                .try_fold(DMatrix::zeros(p, p), |acc, prec| prec.map(|m| acc + m))?;
            (combine_weighted_average(runs)?.draws, linalg::spd_inverse(&total)?)
        }
    };
    let h0 = fukunaga_bandwidth(p, n, &sigma_hat)?;
    let schedule = BandwidthSchedule::refinement(h0, part.m, steps)?;
    let rough: Vec<DMatrix<f64>> = runs.iter().map(|r| r.sample_cov.clone()).collect();
    let targets = build_targets(model, data, part, fraction, Some(&rough))?;
    refine_with_targets(&targets, &init, &schedule, inner_iterations, pool, seed)
}

/// Normalizing constant of a product of conditional subset densities:
/// per-subset Gaussian KDEs on a shared grid spanning the pooled draws plus
/// three pooled standard deviations, multiplied in log space and integrated
/// by the trapezoid rule.
pub fn conditional_weight(lists: &[Vec<f64>], grid_points: usize) -> Result<f64> {
    if lists.is_empty() || lists.iter().any(|l| l.len() < 2) {
        return Err(Error::Combine("conditional weight needs draws from every subset".into()));
    }
    let pooled: Vec<f64> = lists.iter().flatten().cloned().collect();
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let sd = (pooled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(Error::Disconnected("all conditional draws are identical".into()));
    }
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * sd;
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * sd;
    let grid = linspace(lo, hi, grid_points);
    let mut log_sum = vec![0.0f64; grid.len()];
    for list in lists {
        for (acc, v) in log_sum.iter_mut().zip(log_kde(&grid, list)?) {
            *acc += v;
        }
    }
    let max_log = log_sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max_log.is_finite() {
        return Err(Error::Disconnected(
            "conditional subset densities share no mass on the pooled grid".into(),
        ));
    }
    let shifted: Vec<f64> = log_sum.iter().map(|l| (l - max_log).exp()).collect();
    let c = trapezoid(&grid, &shifted) * max_log.exp();
    if !(c.is_finite() && c > 1e-300) {
        return Err(Error::Disconnected(format!(
            "conditional weight underflowed: {c}"
        )));
    }
    Ok(c)
}

fn sequential_block_draws(
    model: &ModelKind,
    subset: &Dataset,
    fraction: PriorFraction,
    prefix: &[f64],
    n0: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    let p = model.dim(subset);
    let j = prefix.len();
    let burnin = (n0 / 2).max(100);

    if let (ModelKind::Mixture(m), Dataset::Mixture { x }) = (model, subset) {
        let mut means = model.default_init(subset, fraction);
        means[..j].copy_from_slice(prefix);
        let frozen: Vec<bool> = (0..p).map(|c| c < j).collect();
        let mut state = MixtureState {
            means,
            weights: vec![1.0 / m.n_components as f64; m.n_components],
            alloc: vec![0; x.len()],
        };
        let mut out = Vec::with_capacity(n0);
        for i in 1..=(burnin + n0) {
            m.gibbs_sweep(&mut state, x, fraction, None, Some(&frozen), rng);
            if i > burnin {
                out.push(state.means[j]);
            }
        }
        return Ok(out);
    }

    let default = model.default_init(subset, fraction);
    let block_init = default[j..].to_vec();
    let prefix_owned = prefix.to_vec();
    let model_ref = model;
    let logf = move |block: &[f64]| {
        let mut full = Vec::with_capacity(p);
        full.extend_from_slice(&prefix_owned);
        full.extend_from_slice(block);
        model_ref
            .log_posterior(&full, subset, fraction)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let config = ChainConfig::new(burnin + n0, burnin, 1, 0);
    let out = adaptive_metropolis(logf, &block_init, &config, None, rng)?;
    Ok(out.draws.column(0).iter().cloned().collect())
}

/// Sequential rejection: each replica builds one combined draw coordinate
/// by coordinate (subset conditional chains, a one-dimensional rejection
/// scan with bandwidth `sqrt(m) h_j`, and a conditional-weight factor); the
/// replicas' draws carry self-normalized importance weights.
pub fn sequential_reject(
    model: &ModelKind,
    data: &Dataset,
    part: &Partition,
    fraction: PriorFraction,
    config: &SequentialConfig,
    pool: &WorkerPool,
) -> Result<CombineResult> {
    config.validate()?;
    let p = model.dim(data);
    let m = part.m;
    let subsets: Vec<Dataset> = (1..=m).map(|id| data.subset(&part.subset_indices(id))).collect();

    type Replica = Option<(Vec<f64>, f64, Vec<f64>)>;
    let replicas: Vec<Replica> = pool.install(|| {
        (0..config.n_replicas)
            .into_par_iter()
            .map(|r| -> Result<Replica> {
                let mut theta = vec![0.0; p];
                let mut log_weight = 0.0;
                let mut c_values = Vec::with_capacity(p);
                for j in 0..p {
                    let mut lists = Vec::with_capacity(m);
                    for (i, sub) in subsets.iter().enumerate() {
                        let mut rng = rng::stream(
                            config.seed,
                            &[domain::SEQUENTIAL, r as u64, j as u64 + 1, i as u64 + 1],
                        );
                        lists.push(sequential_block_draws(
                            model,
                            sub,
                            fraction,
                            &theta[..j],
                            config.n0,
                            &mut rng,
                        )?);
                    }
                    let c = match conditional_weight(&lists, config.grid_points) {
                        Ok(c) => c,
                        Err(Error::Disconnected(_)) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    c_values.push(c);
                    log_weight += c.ln();

                    let h_j = lists
                        .iter()
                        .map(|l| silverman_bandwidth(l, None))
                        .try_fold(0.0, |acc, h| h.map(|v| acc + v))?
                        / m as f64;
                    let h = (m as f64).sqrt() * h_j;
                    let mut rng = rng::stream(
                        config.seed,
                        &[domain::SEQUENTIAL, r as u64, j as u64 + 1, 0],
                    );
                    let mut chosen = None;
                    for k in 0..config.n0 {
                        let donor = rng.random_range(0..m);
                        let mut log_acc = 0.0;
                        for (l, list) in lists.iter().enumerate() {
                            if l == donor {
                                continue;
                            }
                            let d = (list[k] - lists[donor][k]) / h;
                            log_acc -= 0.5 * d * d;
                        }
                        let u: f64 = rng.random();
                        if u.ln() < log_acc {
                            chosen = Some(lists[donor][k]);
                            break;
                        }
                    }
                    match chosen {
                        Some(v) => theta[j] = v,
                        None => return Ok(None),
                    }
                }
                Ok(Some((theta, log_weight, c_values)))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let aborted = replicas.iter().filter(|r| r.is_none()).count();
    let completed: Vec<(Vec<f64>, f64, Vec<f64>)> = replicas.into_iter().flatten().collect();
    if completed.is_empty() {
        return Err(Error::Starvation { accepted: 0, minimum: 1 });
    }

    let max_log = completed
        .iter()
        .map(|(_, lw, _)| *lw)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = completed.iter().map(|(_, lw, _)| (lw - max_log).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let mut c_mean = vec![0.0; p];
    for (_, _, cs) in &completed {
        for (acc, c) in c_mean.iter_mut().zip(cs) {
            *acc += c / completed.len() as f64;
        }
    }
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let rows: Vec<Vec<f64>> = completed.into_iter().map(|(t, _, _)| t).collect();
    let meta = DrawMeta::new(
        model.name(),
        "combined",
        rng::lineage(config.seed, &[domain::SEQUENTIAL]),
    );
    let draws = DrawMatrix::from_rows(model.param_names(data), &rows, meta)?;
    let mut diag = Diagnostics::for_method("sequential");
    diag.c_values = Some(c_mean);
    diag.ess = Some(ess);
    diag.aborted_replicas = Some(aborted);
    CombineResult::new(draws, Some(weights), diag)
}

/// Full-data Laplace approximation sampled as a baseline combiner.
pub fn laplace_baseline(
    model: &ModelKind,
    data: &Dataset,
    n_draws: usize,
    seed: u64,
) -> Result<CombineResult> {
    if n_draws == 0 {
        return Err(Error::Combine("laplace baseline needs at least one draw".into()));
    }
    let lap = engine::laplace(model, data, PriorFraction::whole())?;
    let mut stream = rng::stream(seed, &[domain::LAPLACE_DRAWS]);
    let values = lap.sample(n_draws, &mut stream)?;
    let meta = DrawMeta::new(
        model.name(),
        "combined",
        rng::lineage(seed, &[domain::LAPLACE_DRAWS]),
    );
    let draws = DrawMatrix::new(model.param_names(data), values, meta)?;
    CombineResult::new(draws, None, Diagnostics::for_method("laplace"))
}
