//! Smoothing kernels, bandwidths, grid densities, and the Weierstrass
//! transform.
//!
//! The transform of a density `f` is `(W_h f)(x) = \int K_h(x - t) f(t) dt`
//! with `K_h(u) = K(u/h)/h`. For the Gaussian kernel (order 2, second
//! moment 1, sup value `(2 pi)^{-1/2}`), `W_h` widens `f` by `h^2` in
//! variance and the pointwise bias obeys `|W_h f - f| <= M2 * h^2 / 2`
//! where `M2` bounds the second derivative of `f`.
//!
//! Bandwidth units: a `Scalar` bandwidth is a kernel *standard deviation*;
//! `Diagonal` entries and `Full` matrices are *covariances*. Schedule
//! multipliers scale covariances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Stream;

/// `1 / sqrt(2 pi)`.
pub const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Smoothing kernel. Only the Gaussian kernel is implemented; it is the
/// kernel all samplers in this crate are derived for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelSpec {
    #[default]
    Gaussian,
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        KernelSpec::Gaussian
    }

    /// `K(u)` at unit bandwidth.
    pub fn eval(&self, u: f64) -> f64 {
        INV_SQRT_2PI * (-0.5 * u * u).exp()
    }

    /// `log K(u)`.
    pub fn log_eval(&self, u: f64) -> f64 {
        INV_SQRT_2PI.ln() - 0.5 * u * u
    }

    /// Sup value `c = sup_u K(u)`.
    pub fn sup_value(&self) -> f64 {
        INV_SQRT_2PI
    }

    /// `log K(u) - log c`, the rejection sampler's per-pair log acceptance
    /// contribution.
    pub fn log_ratio_to_sup(&self, u: f64) -> f64 {
        -0.5 * u * u
    }

    /// Kernel order (first non-vanishing moment).
    pub fn order(&self) -> u32 {
        2
    }

    /// Second moment `kappa_2 = \int u^2 K(u) du`.
    pub fn second_moment(&self) -> f64 {
        1.0
    }

    /// Pointwise transform-bias bound `M2 * kappa_2 * h^2 / 2` for a density
    /// with `|f''| <= M2`.
    pub fn bias_bound(&self, m2: f64, h: f64) -> f64 {
        0.5 * m2 * self.second_moment() * h * h
    }
}

/// Per-subset smoothing bandwidth.
///
/// `Scalar(h)` is a standard deviation (covariance `h^2 I`); `Diagonal`
/// holds per-coordinate variances; `Full` holds a covariance matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

impl Bandwidth {
    pub fn scalar(h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Config(format!("bandwidth must be finite and positive, got {h}")));
        }
        Ok(Bandwidth::Scalar(h))
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("diagonal bandwidth needs positive finite variances".into()));
        }
        Ok(Bandwidth::Diagonal(variances))
    }

    pub fn full(cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::Config("full bandwidth must be square".into()));
        }
        let sym_err = (&cov - cov.transpose()).abs().max();
        if sym_err > 1e-8 * (1.0 + cov.abs().max()) {
            return Err(Error::Config("full bandwidth must be symmetric".into()));
        }
        linalg::cholesky_spd(&cov)
            .map_err(|_| Error::Config("full bandwidth must be positive definite".into()))?;
        Ok(Bandwidth::Full(cov))
    }

    /// Covariance matrix of the scaled kernel in dimension `p`.
    pub fn to_cov(&self, p: usize) -> Result<DMatrix<f64>> {
        match self {
            Bandwidth::Scalar(h) => Ok(DMatrix::identity(p, p) * (h * h)),
            Bandwidth::Diagonal(v) => {
                if v.len() != p {
                    return Err(Error::Config(format!(
                        "diagonal bandwidth has {} entries, dimension is {p}",
                        v.len()
                    )));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_vec(v.clone())))
            }
            Bandwidth::Full(m) => {
                if m.nrows() != p {
                    return Err(Error::Config(format!(
                        "full bandwidth is {}x{}, dimension is {p}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok(m.clone())
            }
        }
    }

    /// Per-coordinate standard deviations (square roots of the covariance
    /// diagonal).
    pub fn per_coord_sd(&self, p: usize) -> Result<Vec<f64>> {
        Ok(self.to_cov(p)?.diagonal().iter().map(|v| v.sqrt()).collect())
    }

    /// Scale the covariance by `c` (a `Scalar` standard deviation scales by
    /// `sqrt(c)`).
    pub fn scale_cov(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("covariance scale must be positive, got {c}")));
        }
        Ok(match self {
            Bandwidth::Scalar(h) => Bandwidth::Scalar(h * c.sqrt()),
            Bandwidth::Diagonal(v) => Bandwidth::Diagonal(v.iter().map(|x| x * c).collect()),
            Bandwidth::Full(m) => Bandwidth::Full(m * c),
        })
    }
}

/// Annealing schedule for the refinement sampler: per-subset tether
/// covariance at step `s` is `multipliers[s] * base`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandwidthSchedule {
    base: Bandwidth,
    multipliers: Vec<f64>,
}

/// Covariance multipliers for an `steps`-step refinement run on `m`
/// subsets: the first ~30% of steps at `m`, the middle ~50% at `1`, the
/// final ~20% (at least one step) at `1/m`.
pub fn refinement_multipliers(m: usize, steps: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Config("schedule needs at least one subset".into()));
    }
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    let first = (0.3 * steps as f64).floor() as usize;
    let last = ((0.2 * steps as f64).floor() as usize).max(1);
    let middle = steps - first - last;
    let mf = m as f64;
    let mut out = Vec::with_capacity(steps);
    out.extend(std::iter::repeat(mf).take(first));
    out.extend(std::iter::repeat(1.0).take(middle));
    out.extend(std::iter::repeat(1.0 / mf).take(last));
    Ok(out)
}

impl BandwidthSchedule {
    pub fn new(base: Bandwidth, multipliers: Vec<f64>) -> Result<Self> {
        if multipliers.is_empty() {
            return Err(Error::Config("schedule needs at least one multiplier".into()));
        }
        if multipliers.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config("schedule multipliers must be positive".into()));
        }
        if multipliers.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            return Err(Error::Config("schedule multipliers must be non-increasing".into()));
        }
        Ok(BandwidthSchedule { base, multipliers })
    }

    /// The annealed refinement schedule (`m`, `1`, `1/m` blocks).
    pub fn refinement(base: Bandwidth, m: usize, steps: usize) -> Result<Self> {
        BandwidthSchedule::new(base, refinement_multipliers(m, steps)?)
    }

    /// Geometric decay in standard-deviation units: step `s` uses bandwidth
    /// sd `ratio^s * base_sd` (covariance multiplier `ratio^{2s}`).
    pub fn geometric_sd(base_sd: f64, ratio: f64, steps: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Config(format!("geometric ratio must be in (0,1], got {ratio}")));
        }
        let multipliers = (0..steps).map(|s| ratio.powi(2 * s as i32)).collect();
        BandwidthSchedule::new(Bandwidth::scalar(base_sd)?, multipliers)
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn base(&self) -> &Bandwidth {
        &self.base
    }

    /// Per-subset tether bandwidth at step `s`.
    pub fn step(&self, s: usize) -> Result<Bandwidth> {
        let c = *self
            .multipliers
            .get(s)
            .ok_or_else(|| Error::Config(format!("schedule has {} steps, asked for {s}", self.len())))?;
        self.base.scale_cov(c)
    }
}

/// The annealed refinement schedule as a free function.
pub fn refinement_schedule(h0: Bandwidth, m: usize, steps: usize) -> Result<BandwidthSchedule> {
    BandwidthSchedule::refinement(h0, m, steps)
}

/// Mean and covariance of the Gaussian conditional used by the refinement
/// sampler's theta update: precision is the sum of tether precisions, mean
/// is the precision-weighted tether average.
pub fn conditional_gaussian(
    tethers: &[DVector<f64>],
    bandwidths: &[Bandwidth],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if tethers.is_empty() || tethers.len() != bandwidths.len() {
        return Err(Error::Config(format!(
            "conditional_gaussian needs matching tether/bandwidth lists, got {} and {}",
            tethers.len(),
            bandwidths.len()
        )));
    }
    let p = tethers[0].len();
    let mut precision = DMatrix::zeros(p, p);
    let mut weighted = DVector::zeros(p);
    for (t, h) in tethers.iter().zip(bandwidths) {
        if t.len() != p {
            return Err(Error::Config("tether dimensions disagree".into()));
        }
        let pi = linalg::spd_inverse(&h.to_cov(p)?)?;
        weighted += &pi * t;
        precision += pi;
    }
    let cov = linalg::spd_inverse(&precision)?;
    let mean = &cov * weighted;
    Ok((mean, cov))
}

/// Rule-of-thumb kernel covariance for an `n`-draw, `p`-dimensional sample
/// with covariance `sigma`:
/// `H0 = ((p + 2) / 4)^{-2/(p+4)} n^{-2/(p+4)} sigma`.
pub fn fukunaga_bandwidth(p: usize, n_draws: usize, sigma: &DMatrix<f64>) -> Result<Bandwidth> {
    if p == 0 || sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::Config(format!(
            "fukunaga_bandwidth: sigma must be {p}x{p}, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if n_draws < 2 {
        return Err(Error::Config("fukunaga_bandwidth needs at least 2 draws".into()));
    }
    let expo = -2.0 / (p as f64 + 4.0);
    let factor = ((p as f64 + 2.0) / 4.0).powf(expo) * (n_draws as f64).powf(expo);
    Bandwidth::full(sigma * factor)
}

/// A density tabulated on a strictly increasing grid, normalized to unit
/// trapezoid mass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::Config(format!(
                "grid density needs matching grid/value lengths >= 2, got {} and {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("grid must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Numeric("density values must be finite and non-negative".into()));
        }
        let mut out = GridDensity { grid, values };
        let mass = out.trapezoid();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Numeric("density has no mass on the grid".into()));
        }
        for v in &mut out.values {
            *v /= mass;
        }
        Ok(out)
    }

    /// Tabulate `f` on `n` equally spaced points over `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(hi > lo) || n < 2 {
            return Err(Error::Config("from_fn needs hi > lo and n >= 2".into()));
        }
        let grid = linspace(lo, hi, n);
        let values = grid.iter().map(|&x| f(x)).collect();
        GridDensity::new(grid, values)
    }

    /// Gaussian KDE of a (possibly weighted) sample with the Silverman
    /// bandwidth, on an automatic grid spanning the sample range plus 4
    /// weighted standard deviations on each side.
    pub fn from_samples(samples: &[f64], weights: Option<&[f64]>, grid_points: usize) -> Result<Self> {
        let (_, sd) = weighted_sd(samples, weights)?;
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * sd;
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * sd;
        GridDensity::from_samples_on(&linspace(lo, hi, grid_points), samples, weights)
    }

    /// Gaussian KDE evaluated on a caller-supplied grid.
    pub fn from_samples_on(grid: &[f64], samples: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        let h = silverman_bandwidth(samples, weights)?;
        let wsum: f64 = match weights {
            Some(w) => w.iter().sum(),
            None => samples.len() as f64,
        };
        let values: Vec<f64> = grid
            .iter()
            .map(|&x| {
                let mut acc = 0.0;
                match weights {
                    Some(w) => {
                        for (s, wk) in samples.iter().zip(w) {
                            let u = (x - s) / h;
                            acc += wk * (-0.5 * u * u).exp();
                        }
                    }
                    None => {
                        for s in samples {
                            let u = (x - s) / h;
                            acc += (-0.5 * u * u).exp();
                        }
                    }
                }
                acc * INV_SQRT_2PI / (h * wsum)
            })
            .collect();
        GridDensity::new(grid.to_vec(), values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Trapezoid-rule integral of the tabulated values.
    pub fn trapezoid(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    pub fn mean(&self) -> f64 {
        let weighted: Vec<f64> = self.grid.iter().zip(&self.values).map(|(x, v)| x * v).collect();
        trapezoid(&self.grid, &weighted)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let weighted: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(x, v)| (x - mu) * (x - mu) * v)
            .collect();
        trapezoid(&self.grid, &weighted)
    }

    /// Total variation distance to `other` (requires an identical grid).
    pub fn tv(&self, other: &GridDensity) -> Result<f64> {
        self.check_same_grid(other)?;
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(0.5 * trapezoid(&self.grid, &diff))
    }

    /// Pointwise sup distance to `other` (requires an identical grid).
    pub fn sup_diff(&self, other: &GridDensity) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn check_same_grid(&self, other: &GridDensity) -> Result<()> {
        let ok = self.len() == other.len()
            && (self.grid[0] - other.grid[0]).abs() <= 1e-12 * (1.0 + self.grid[0].abs())
            && (self.grid[self.len() - 1] - other.grid[other.len() - 1]).abs()
                <= 1e-12 * (1.0 + self.grid[self.len() - 1].abs());
        if ok {
            Ok(())
        } else {
            Err(Error::Config("grid densities are tabulated on different grids".into()))
        }
    }

    /// Grid locations of interior local maxima with value at least
    /// `floor_frac` times the global maximum.
    pub fn local_maxima(&self, floor_frac: f64) -> Vec<f64> {
        let peak = self.values.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        for i in 1..self.len() - 1 {
            if self.values[i] > self.values[i - 1]
                && self.values[i] >= self.values[i + 1]
                && self.values[i] >= floor_frac * peak
            {
                out.push(self.grid[i]);
            }
        }
        out
    }

    /// Draw `n` samples by inverse-CDF with linear interpolation.
    pub fn sample(&self, n: usize, rng: &mut Stream) -> Vec<f64> {
        let g = &self.grid;
        let v = &self.values;
        let mut cum = Vec::with_capacity(g.len());
        cum.push(0.0);
        for i in 1..g.len() {
            let seg = 0.5 * (v[i] + v[i - 1]) * (g[i] - g[i - 1]);
            cum.push(cum[i - 1] + seg);
        }
        let total = *cum.last().unwrap();
        (0..n)
            .map(|_| {
                let u: f64 = rand::Rng::random::<f64>(rng) * total;
                let idx = match cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                    Ok(i) => i.min(g.len() - 2),
                    Err(i) => i.saturating_sub(1).min(g.len() - 2),
                };
                let seg = cum[idx + 1] - cum[idx];
                let t = if seg > 0.0 { (u - cum[idx]) / seg } else { 0.5 };
                g[idx] + t * (g[idx + 1] - g[idx])
            })
            .collect()
    }
}

/// Weierstrass transform `W_h f` of a tabulated density, by direct
/// quadrature of the convolution on the same grid. Errors if more than
/// `1e-4` of the transformed mass falls outside the grid.
pub fn weierstrass_transform(f: &GridDensity, spec: &KernelSpec, h: f64) -> Result<GridDensity> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("transform bandwidth must be positive, got {h}")));
    }
    let g = f.grid();
    let v = f.values();
    let n = g.len();
    let w = trapezoid_weights(g);
    let min_dx = g.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    if h < 0.5 * min_dx {
        return Err(Error::Numeric(format!(
            "transform bandwidth {h} is below the grid resolution {min_dx}"
        )));
    }
    let mut out = vec![0.0; n];
    for (i, oi) in out.iter_mut().enumerate() {
        let xi = g[i];
        let mut acc = 0.0;
        for j in 0..n {
            acc += w[j] * v[j] * spec.eval((xi - g[j]) / h);
        }
        *oi = acc / h;
    }
    let mass = trapezoid(g, &out);
    let lost = 1.0 - mass;
    if lost > 1e-4 {
        return Err(Error::GridTooNarrow { lost });
    }
    GridDensity::new(g.to_vec(), out)
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Trapezoid-rule integral of `values` over `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    }
    acc
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let dx = grid[i] - grid[i - 1];
        w[i - 1] += 0.5 * dx;
        w[i] += 0.5 * dx;
    }
    w
}

/// Silverman rule-of-thumb bandwidth `1.06 sd n_eff^{-1/5}` for a possibly
/// weighted sample; `n_eff = (sum w)^2 / sum w^2`.
pub fn silverman_bandwidth(samples: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    let (n_eff, sd) = weighted_sd(samples, weights)?;
    if sd == 0.0 {
        return Err(Error::Numeric("degenerate sample: zero standard deviation".into()));
    }
    Ok(1.06 * sd * n_eff.powf(-0.2))
}

/// Effective sample size and weighted standard deviation.
fn weighted_sd(samples: &[f64], weights: Option<&[f64]>) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Numeric(format!(
            "need at least 2 samples for a bandwidth, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite sample values".into()));
    }
    match weights {
        None => {
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            Ok((n, var.max(0.0).sqrt()))
        }
        Some(w) => {
            if w.len() != samples.len() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Numeric("weights must be non-negative and match samples".into()));
            }
            let ws: f64 = w.iter().sum();
            if ws <= 0.0 {
                return Err(Error::Numeric("weights sum to zero".into()));
            }
            let w2: f64 = w.iter().map(|x| x * x).sum();
            let n_eff = ws * ws / w2;
            let mean = samples.iter().zip(w).map(|(x, wk)| x * wk).sum::<f64>() / ws;
            let biased = samples
                .iter()
                .zip(w)
                .map(|(x, wk)| wk * (x - mean) * (x - mean))
                .sum::<f64>()
                / ws;
            // Bessel correction in effective-sample-size form, so uniform
            // weights reproduce the unweighted n-1 estimate exactly.
            let denom = (1.0 - w2 / (ws * ws)).max(f64::EPSILON);
            Ok((n_eff, (biased / denom).max(0.0).sqrt()))
        }
    }
}
