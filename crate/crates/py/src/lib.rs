//! Python bindings over plain lists: kernel primitives, bandwidth
//! schedules, density diagnostics, and the draw-matrix combiners. Draw
//! matrices cross the boundary as lists of rows; subset collections as
//! lists of draw matrices.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::Rng;

use weierstrass_mcmc::combine::{
    self, RefineTarget, RejectionConfig, ToyTarget,
};
use weierstrass_mcmc::engine::{DrawMatrix, DrawMeta, SubsetRun, WorkerPool};
use weierstrass_mcmc::kernel::{
    self, Bandwidth, BandwidthSchedule, GridDensity, KernelSpec,
};
use weierstrass_mcmc::metrics::{self, DensitySide};
use weierstrass_mcmc::models::{toy, BetaBernoulliModel, PriorFraction, ToyPart};
use weierstrass_mcmc::rng;

fn err(e: weierstrass_mcmc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("draw matrix must be non-empty"));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("draw matrix rows are ragged"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), p, &flat))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn subset_runs(subsets: &[Vec<Vec<f64>>]) -> PyResult<Vec<SubsetRun>> {
    subsets
        .iter()
        .enumerate()
        .map(|(i, rows)| {
            let values = matrix(rows)?;
            let names = (1..=values.ncols()).map(|j| format!("theta{j}")).collect();
            let meta = DrawMeta::new("external", &(i + 1).to_string(), String::new());
            let draws = DrawMatrix::new(names, values, meta).map_err(err)?;
            let n = draws.n_draws();
            SubsetRun::from_draws(i + 1, n, draws, None, 1.0).map_err(err)
        })
        .collect()
}

fn toy_part(which: &str) -> PyResult<ToyPart> {
    match which {
        "p1" => Ok(ToyPart::P1),
        "p2" => Ok(ToyPart::P2),
        "p12" => Ok(ToyPart::P12),
        other => Err(PyValueError::new_err(format!(
            "unknown toy density {other:?}; use p1, p2, or p12"
        ))),
    }
}

/// Gaussian smoothing kernel value at `u`.
#[pyfunction]
fn kernel_eval(u: f64) -> f64 {
    KernelSpec::gaussian().eval(u)
}

/// Transform bias bound `M2 * kappa2 * h^2 / 2` for the Gaussian kernel.
#[pyfunction]
fn bias_bound(m2: f64, h: f64) -> f64 {
    KernelSpec::gaussian().bias_bound(m2, h)
}

/// Weierstrass transform of a tabulated density; returns the transformed
/// values on the same grid.
#[pyfunction]
fn weierstrass_transform(grid: Vec<f64>, values: Vec<f64>, h: f64) -> PyResult<Vec<f64>> {
    let f = GridDensity::new(grid, values).map_err(err)?;
    let g = kernel::weierstrass_transform(&f, &KernelSpec::gaussian(), h).map_err(err)?;
    Ok(g.values().to_vec())
}

/// Annealing multipliers for the refinement schedule (start `m`, end `1/m`).
#[pyfunction]
fn refinement_multipliers(m: usize, steps: usize) -> PyResult<Vec<f64>> {
    kernel::refinement_multipliers(m, steps).map_err(err)
}

/// Rule-of-thumb kernel covariance for an `n`-draw sample with the given
/// sample covariance.
#[pyfunction]
fn fukunaga_bandwidth(n_draws: usize, cov: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let sigma = matrix(&cov)?;
    let p = sigma.nrows();
    let bandwidth = kernel::fukunaga_bandwidth(p, n_draws, &sigma).map_err(err)?;
    Ok(to_rows(&bandwidth.to_cov(p).map_err(err)?))
}

/// Mean and covariance of the Gaussian conditional of the refinement
/// sweep, given per-subset tether points and scalar bandwidths (standard
/// deviations).
#[pyfunction]
fn conditional_gaussian(
    tethers: Vec<Vec<f64>>,
    sds: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let points: Vec<DVector<f64>> = tethers
        .iter()
        .map(|t| DVector::from_column_slice(t))
        .collect();
    let bandwidths: Vec<Bandwidth> = sds
        .iter()
        .map(|&h| Bandwidth::scalar(h).map_err(err))
        .collect::<PyResult<_>>()?;
    let (mean, cov) = kernel::conditional_gaussian(&points, &bandwidths).map_err(err)?;
    Ok((mean.iter().copied().collect(), to_rows(&cov)))
}

/// Exact bimodal toy density (`p1`, `p2`, or the product `p12`).
#[pyfunction]
fn toy_density(which: &str, theta: f64) -> PyResult<f64> {
    Ok(toy::toy_density(toy_part(which)?, theta))
}

/// Total variation distance between two empirical samples on a shared
/// Gaussian-KDE grid.
#[pyfunction]
#[pyo3(signature = (xs, ys, grid_points = 512))]
fn tv_distance(xs: Vec<f64>, ys: Vec<f64>, grid_points: usize) -> PyResult<f64> {
    metrics::tv_distance(
        &DensitySide::Sample { values: &xs, weights: None },
        &DensitySide::Sample { values: &ys, weights: None },
        grid_points,
    )
    .map_err(err)
}

/// Gaussian KL divergence between the moments of two draw matrices.
#[pyfunction]
fn gaussian_kl(approx: Vec<Vec<f64>>, reference: Vec<Vec<f64>>) -> PyResult<f64> {
    let runs = subset_runs(&[approx, reference])?;
    metrics::gaussian_kl(&runs[0].draws, None, &runs[1].draws).map_err(err)
}

/// Draw-by-draw simple average of aligned subset draw matrices.
#[pyfunction]
fn combine_average(subsets: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let runs = subset_runs(&subsets)?;
    let result = combine::combine_simple_average(&runs).map_err(err)?;
    Ok(to_rows(&result.draws.values))
}

/// Precision-weighted average of aligned subset draw matrices.
#[pyfunction]
fn combine_weighted(subsets: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let runs = subset_runs(&subsets)?;
    let result = combine::combine_weighted_average(&runs).map_err(err)?;
    Ok(to_rows(&result.draws.values))
}

/// Weierstrass rejection sampler on subset draw matrices at a target
/// acceptance rate. Returns the accepted draws and the achieved rate.
#[pyfunction]
fn weierstrass_reject(
    subsets: Vec<Vec<Vec<f64>>>,
    target_acceptance: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let runs = subset_runs(&subsets)?;
    let config = RejectionConfig::with_target(target_acceptance, seed);
    let result =
        combine::weierstrass_reject(&runs, &config, &KernelSpec::gaussian()).map_err(err)?;
    let rate = result.diagnostics.acceptance_rate.unwrap_or(f64::NAN);
    Ok((to_rows(&result.draws.values), rate))
}

/// Refinement demo on the analytic bimodal toy: `n_draws` chains annealed
/// through `steps` geometric bandwidth steps (`0.8^s`), starting from the
/// moment-matched Gaussian.
#[pyfunction]
fn refine_toy(n_draws: usize, steps: usize, seed: u64) -> PyResult<Vec<f64>> {
    let targets: Vec<Box<dyn RefineTarget>> = vec![
        Box::new(ToyTarget::new(ToyPart::P1)),
        Box::new(ToyTarget::new(ToyPart::P2)),
    ];
    let mut stream = rng::stream(seed, &[rng::domain::GENERATE]);
    let sd = toy::MOMENT_MATCHED_VAR.sqrt();
    let rows: Vec<Vec<f64>> = (0..n_draws)
        .map(|_| {
            let z: f64 = stream.sample(rand_distr::StandardNormal);
            vec![toy::MOMENT_MATCHED_MEAN + sd * z]
        })
        .collect();
    let meta = DrawMeta::new("toy_bimodal", "init", rng::lineage(seed, &[rng::domain::GENERATE]));
    let init = DrawMatrix::from_rows(vec!["theta".to_string()], &rows, meta).map_err(err)?;
    let schedule = BandwidthSchedule::geometric_sd(0.8, 0.8, steps).map_err(err)?;
    let pool = WorkerPool::new(1).map_err(err)?;
    let result =
        combine::refine_with_targets(&targets, &init, &schedule, 1, &pool, seed).map_err(err)?;
    Ok(result.draws.column(0))
}

/// Beta-Bernoulli model with a fractionated `Beta(a, b)` prior.
#[pyclass]
struct BetaBernoulli {
    inner: BetaBernoulliModel,
}

#[pymethods]
impl BetaBernoulli {
    #[new]
    #[pyo3(signature = (a = 0.01, b = 0.01))]
    fn new(a: f64, b: f64) -> Self {
        BetaBernoulli { inner: BetaBernoulliModel { a, b } }
    }

    /// Log subset posterior at `theta` given `successes` of `n` trials,
    /// under a prior fractionated over `m` subsets.
    #[pyo3(signature = (theta, successes, n, m = 1))]
    fn log_posterior(&self, theta: f64, successes: f64, n: f64, m: usize) -> PyResult<f64> {
        let fraction = PriorFraction::new(m).map_err(err)?;
        Ok(self.inner.log_posterior(theta, successes, n, fraction))
    }

    /// Parameters of the analytic full-data posterior `Beta(a + s, b + n - s)`.
    fn posterior_params(&self, successes: f64, n: f64) -> (f64, f64) {
        (self.inner.a + successes, self.inner.b + n - successes)
    }
}

#[pymodule]
fn weierstrass_mcmc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kernel_eval, m)?)?;
    m.add_function(wrap_pyfunction!(bias_bound, m)?)?;
    m.add_function(wrap_pyfunction!(weierstrass_transform, m)?)?;
    m.add_function(wrap_pyfunction!(refinement_multipliers, m)?)?;
    m.add_function(wrap_pyfunction!(fukunaga_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(toy_density, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_kl, m)?)?;
    m.add_function(wrap_pyfunction!(combine_average, m)?)?;
    m.add_function(wrap_pyfunction!(combine_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(weierstrass_reject, m)?)?;
    m.add_function(wrap_pyfunction!(refine_toy, m)?)?;
    m.add_class::<BetaBernoulli>()?;
    Ok(())
}
