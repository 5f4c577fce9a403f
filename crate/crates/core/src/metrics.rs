//! Comparison metrics: per-coordinate total-variation distance on KDE
//! grids, Gaussian-approximation KL divergence, the estimation-error
//! ratio, and verification of the transform bias bound.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous};

use crate::combine::CombineResult;
use crate::engine::DrawMatrix;
use crate::error::{Error, Result};
use crate::kernel::{linspace, weierstrass_transform, GridDensity, KernelSpec};
use crate::linalg;

/// A closed-form 1-D density with enough shape information to size grids.
pub struct AnalyticDensity {
    pdf: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub mean: f64,
    pub sd: f64,
    pub support: (f64, f64),
}

impl AnalyticDensity {
    pub fn from_fn(
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        mean: f64,
        sd: f64,
        support: (f64, f64),
    ) -> Self {
        AnalyticDensity { pdf: Box::new(pdf), mean, sd, support }
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::Config(format!("normal sd must be positive, got {sd}")));
        }
        let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
        Ok(Self::from_fn(
            move |x| {
                let z = (x - mean) / sd;
                norm * (-0.5 * z * z).exp()
            },
            mean,
            sd,
            (f64::NEG_INFINITY, f64::INFINITY),
        ))
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        let dist =
            Beta::new(a, b).map_err(|e| Error::Config(format!("beta({a},{b}): {e}")))?;
        let mean = a / (a + b);
        let var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
        Ok(Self::from_fn(move |x| dist.pdf(x), mean, var.sqrt(), (0.0, 1.0)))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (self.pdf)(x)
    }
}

/// One side of a total-variation comparison.
pub enum DensitySide<'a> {
    Sample { values: &'a [f64], weights: Option<&'a [f64]> },
    Analytic(&'a AnalyticDensity),
}

fn weighted_moments(values: &[f64], weights: Option<&[f64]>) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Numeric("empty sample in tv_distance".into()));
    }
    match weights {
        None => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            Ok((mean, var.max(0.0).sqrt()))
        }
        Some(w) => {
            if w.len() != values.len() {
                return Err(Error::Numeric("weights do not match sample length".into()));
            }
            let total: f64 = w.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::Numeric("weights do not sum to a positive number".into()));
            }
            let mean: f64 = values.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / total;
            let var: f64 = values
                .iter()
                .zip(w)
                .map(|(v, wi)| wi * (v - mean) * (v - mean))
                .sum::<f64>()
                / total;
            Ok((mean, var.max(0.0).sqrt()))
        }
    }
}

enum SideShape {
    PointMass(f64),
    Spread { lo: f64, hi: f64 },
}

fn side_shape(side: &DensitySide) -> Result<SideShape> {
    match side {
        DensitySide::Sample { values, weights } => {
            if values.is_empty() {
                return Err(Error::Numeric("empty sample in tv_distance".into()));
            }
            // All values equal (or all weight on one value) is a point mass.
            if values.iter().all(|v| *v == values[0]) {
                return Ok(SideShape::PointMass(values[0]));
            }
            let (mean, sd) = weighted_moments(values, *weights)?;
            if sd == 0.0 {
                return Ok(SideShape::PointMass(mean));
            }
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok(SideShape::Spread { lo: min - 4.0 * sd, hi: max + 4.0 * sd })
        }
        DensitySide::Analytic(a) => Ok(SideShape::Spread {
            lo: (a.mean - 8.0 * a.sd).max(a.support.0),
            hi: (a.mean + 8.0 * a.sd).min(a.support.1),
        }),
    }
}

fn side_density(side: &DensitySide, grid: &[f64]) -> Result<GridDensity> {
    match side {
        DensitySide::Sample { values, weights } => {
            GridDensity::from_samples_on(grid, values, *weights)
        }
        DensitySide::Analytic(a) => {
            GridDensity::new(grid.to_vec(), grid.iter().map(|&x| a.pdf(x)).collect())
        }
    }
}

/// Total-variation distance between two densities rendered on a shared
/// grid, `0.5 * integral |p - q|`. A zero-variance sample is treated as a
/// point mass: distance 1 against anything except an identical point mass.
pub fn tv_distance(a: &DensitySide, b: &DensitySide, grid_points: usize) -> Result<f64> {
    if grid_points < 16 {
        return Err(Error::Config("tv grid too coarse".into()));
    }
    let sa = side_shape(a)?;
    let sb = side_shape(b)?;
    let (lo, hi) = match (&sa, &sb) {
        (SideShape::PointMass(x), SideShape::PointMass(y)) => {
            return Ok(if x == y { 0.0 } else { 1.0 });
        }
        (SideShape::PointMass(_), _) | (_, SideShape::PointMass(_)) => return Ok(1.0),
        (SideShape::Spread { lo: la, hi: ha }, SideShape::Spread { lo: lb, hi: hb }) => {
            (la.min(*lb), ha.max(*hb))
        }
    };
    let grid = linspace(lo, hi, grid_points);
    let da = side_density(a, &grid)?;
    let db = side_density(b, &grid)?;
    da.tv(&db)
}

/// KL divergence between the Gaussian moment matches of the two sides,
/// `0.5 (tr(S^-1 S_hat) + d' S^-1 d - p - log |S_hat|/|S|)` with the
/// reference moments `(u, S)` and the approximation moments `(u_hat,
/// S_hat)`. Tiny negative round-off is clamped to zero.
pub fn gaussian_kl_moments(
    approx_mean: &DVector<f64>,
    approx_cov: &DMatrix<f64>,
    ref_mean: &DVector<f64>,
    ref_cov: &DMatrix<f64>,
) -> Result<f64> {
    let p = ref_mean.len();
    if approx_mean.len() != p || approx_cov.nrows() != p || ref_cov.nrows() != p {
        return Err(Error::Numeric("kl: dimension mismatch".into()));
    }
    let prec = linalg::spd_inverse(ref_cov)?;
    let d = ref_mean - approx_mean;
    let trace = (&prec * approx_cov).trace();
    let quad = (d.transpose() * &prec * &d)[(0, 0)];
    let log_det = linalg::spd_log_det(approx_cov)? - linalg::spd_log_det(ref_cov)?;
    let kl = 0.5 * (trace + quad - p as f64 - log_det);
    if kl < -1e-8 {
        return Err(Error::Numeric(format!("kl came out negative: {kl}")));
    }
    Ok(kl.max(0.0))
}

/// Gaussian KL from weighted approximation draws against reference draws.
pub fn gaussian_kl(
    approx: &DrawMatrix,
    approx_weights: Option<&[f64]>,
    reference: &DrawMatrix,
) -> Result<f64> {
    let (am, ac) = match approx_weights {
        Some(w) => linalg::weighted_mean_cov(&approx.values, w)?,
        None => linalg::sample_mean_cov(&approx.values)?,
    };
    let (rm, rc) = linalg::sample_mean_cov(&reference.values)?;
    gaussian_kl_moments(&am, &ac, &rm, &rc)
}

/// `||approx - truth|| / ||reference - truth||` in the Euclidean norm.
pub fn error_ratio(
    approx_mean: &[f64],
    reference_mean: &[f64],
    true_theta: &[f64],
) -> Result<f64> {
    if approx_mean.len() != true_theta.len() || reference_mean.len() != true_theta.len() {
        return Err(Error::Numeric("error_ratio: dimension mismatch".into()));
    }
    let norm = |a: &[f64]| -> f64 {
        a.iter()
            .zip(true_theta)
            .map(|(x, t)| (x - t) * (x - t))
            .sum::<f64>()
            .sqrt()
    };
    let denom = norm(reference_mean);
    if denom == 0.0 {
        return Err(Error::Numeric(
            "error_ratio: reference mean equals the true parameter".into(),
        ));
    }
    Ok(norm(approx_mean) / denom)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformBoundReport {
    pub h: f64,
    pub observed: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Check the smoothing bias bound `sup |W_h f - f| <= M2 kappa2 h^2 / 2`
/// for each bandwidth; `h = 0` is the identity transform.
pub fn verify_transform_bound(
    f: &GridDensity,
    m2: f64,
    spec: &KernelSpec,
    h_list: &[f64],
) -> Result<Vec<TransformBoundReport>> {
    h_list
        .iter()
        .map(|&h| {
            let observed = if h == 0.0 {
                0.0
            } else {
                weierstrass_transform(f, spec, h)?.sup_diff(f)?
            };
            let bound = spec.bias_bound(m2, h);
            Ok(TransformBoundReport { h, observed, bound, holds: observed <= bound })
        })
        .collect()
}

/// Reference marginals to score a combined result against.
pub enum ReferenceSide<'a> {
    Draws(&'a DrawMatrix),
    /// One analytic marginal per coordinate.
    Analytic(&'a [AnalyticDensity]),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub per_coord_tv: Vec<f64>,
    pub tv_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tv_nonzero_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tv_zero_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ess: Option<f64>,
}

impl MetricReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }
}

/// Score a combined result coordinate by coordinate against a reference,
/// optionally splitting the TV average by a zero-coefficient mask and
/// adding the error ratio when the true parameter is known.
pub fn evaluate_result(
    method: &str,
    approx: &CombineResult,
    reference: &ReferenceSide,
    truth: Option<&[f64]>,
    zero_mask: Option<&[bool]>,
    grid_points: usize,
) -> Result<MetricReport> {
    let p = approx.draws.dim();
    let weights = approx.weights.as_deref();
    let mut per_coord_tv = Vec::with_capacity(p);
    for j in 0..p {
        let col = approx.draws.column(j);
        let a = DensitySide::Sample { values: &col, weights };
        let tv = match reference {
            ReferenceSide::Draws(r) => {
                if r.dim() != p {
                    return Err(Error::Numeric("reference dimension mismatch".into()));
                }
                let rc = r.column(j);
                tv_distance(&a, &DensitySide::Sample { values: &rc, weights: None }, grid_points)?
            }
            ReferenceSide::Analytic(ds) => {
                if ds.len() != p {
                    return Err(Error::Numeric("reference dimension mismatch".into()));
                }
                tv_distance(&a, &DensitySide::Analytic(&ds[j]), grid_points)?
            }
        };
        per_coord_tv.push(tv);
    }
    let tv_mean = per_coord_tv.iter().sum::<f64>() / p as f64;
    let (tv_nonzero_mean, tv_zero_mean) = match zero_mask {
        Some(mask) if mask.len() == p => {
            let split = |want: bool| {
                let vals: Vec<f64> = per_coord_tv
                    .iter()
                    .zip(mask)
                    .filter(|(_, &z)| z == want)
                    .map(|(tv, _)| *tv)
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            (split(false), split(true))
        }
        Some(_) => return Err(Error::Numeric("zero mask length mismatch".into())),
        None => (None, None),
    };

    let kl = match reference {
        ReferenceSide::Draws(r) => Some(gaussian_kl(&approx.draws, weights, r)?),
        ReferenceSide::Analytic(ds) => {
            let (am, ac) = match weights {
                Some(w) => linalg::weighted_mean_cov(&approx.draws.values, w)?,
                None => linalg::sample_mean_cov(&approx.draws.values)?,
            };
            let rm = DVector::from_iterator(p, ds.iter().map(|d| d.mean));
            let rc = DMatrix::from_diagonal(&DVector::from_iterator(
                p,
                ds.iter().map(|d| d.sd * d.sd),
            ));
            Some(gaussian_kl_moments(&am, &ac, &rm, &rc)?)
        }
    };

    let error_ratio = match truth {
        Some(t) => {
            let ref_mean: Vec<f64> = match reference {
                ReferenceSide::Draws(r) => r.mean().iter().cloned().collect(),
                ReferenceSide::Analytic(ds) => ds.iter().map(|d| d.mean).collect(),
            };
            let approx_mean: Vec<f64> = approx.mean().iter().cloned().collect();
            Some(self::error_ratio(&approx_mean, &ref_mean, t)?)
        }
        None => None,
    };

    Ok(MetricReport {
        method: method.to_string(),
        per_coord_tv,
        tv_mean,
        tv_nonzero_mean,
        tv_zero_mean,
        kl,
        error_ratio,
        ess: Some(approx.ess()),
    })
}
