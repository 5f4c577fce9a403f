//! Analytic bimodal toy: two fixed two-component normal mixtures standing
//! in for subset posteriors, with a closed-form product density.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::Stream;

/// Which analytic density to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyPart {
    P1,
    P2,
    P12,
}

/// Mean of the product density (used for moment-matched initialization).
pub const MOMENT_MATCHED_MEAN: f64 = -0.25;
/// Variance of the product density: within-mode 0.125 plus between-mode
/// (1.25)².
pub const MOMENT_MATCHED_VAR: f64 = 1.6875;

/// (weight, mean, variance) components of each density. The product
/// density keeps only the two aligned cross terms; the misaligned ones
/// carry under 1% of the mass and are dropped from the closed form.
fn components(which: ToyPart) -> &'static [(f64, f64, f64)] {
    match which {
        ToyPart::P1 => &[(0.5, -1.7, 0.25), (0.5, 0.8, 0.25)],
        ToyPart::P2 => &[(0.5, -1.3, 0.25), (0.5, 1.2, 0.25)],
        ToyPart::P12 => &[(0.5, -1.5, 0.125), (0.5, 1.0, 0.125)],
    }
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-0.5 * (x - mean) * (x - mean) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Exact mixture density value.
pub fn toy_density(which: ToyPart, theta: f64) -> f64 {
    components(which)
        .iter()
        .map(|&(w, mu, var)| w * normal_pdf(theta, mu, var))
        .sum()
}

/// Exact draw from `N(theta; anchor, tether_var) * p_part(theta)`: the
/// tethered conditional of a normal mixture is again a normal mixture with
/// conjugately updated components.
pub fn tethered_conjugate_draw(which: ToyPart, anchor: f64, tether_var: f64, rng: &mut Stream) -> f64 {
    let comps = components(which);
    let mut log_w = Vec::with_capacity(comps.len());
    let mut post = Vec::with_capacity(comps.len());
    for &(w, mu, var) in comps {
        let total = var + tether_var;
        let lw = w.ln() - 0.5 * (anchor - mu) * (anchor - mu) / total - 0.5 * total.ln();
        let prec = 1.0 / var + 1.0 / tether_var;
        let mean = (mu / var + anchor / tether_var) / prec;
        log_w.push(lw);
        post.push((mean, 1.0 / prec));
    }
    let mx = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|l| (l - mx).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = comps.len() - 1;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u <= acc {
            pick = j;
            break;
        }
    }
    let (mean, var) = post[pick];
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// The toy "model": pseudo-observations name subset densities; the log
/// posterior of a subset is the sum of its parts' log densities. There is
/// no separate prior to fractionate (the parts are already posteriors).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ToyBimodal;

impl ToyBimodal {
    pub fn log_posterior(&self, theta: f64, parts: &[u8]) -> f64 {
        parts
            .iter()
            .map(|&p| {
                let which = if p == 1 { ToyPart::P1 } else { ToyPart::P2 };
                toy_density(which, theta).max(1e-300).ln()
            })
            .sum()
    }

    /// The canonical two-row dataset: one pseudo-observation per subset
    /// density.
    pub fn dataset() -> crate::models::Dataset {
        crate::models::Dataset::Toy { parts: vec![1, 2] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{linspace, trapezoid, GridDensity};
    use approx::assert_relative_eq;

    #[test]
    fn product_density_value_at_left_mode() {
        // ½ N(-1.5; -1.5, 0.125) = 0.5 / sqrt(2π·0.125) = 0.5642; the far
        // component contributes under 1e-11 here.
        let v = toy_density(ToyPart::P12, -1.5);
        assert_relative_eq!(
            v,
            0.5 / (2.0 * std::f64::consts::PI * 0.125).sqrt(),
            max_relative = 1e-9
        );
        assert!((v - 0.5642).abs() < 1e-3);
    }

    #[test]
    fn parts_integrate_to_one() {
        let grid = linspace(-6.0, 6.0, 4001);
        for which in [ToyPart::P1, ToyPart::P2, ToyPart::P12] {
            let vals: Vec<f64> = grid.iter().map(|&x| toy_density(which, x)).collect();
            assert_relative_eq!(trapezoid(&grid, &vals), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn renormalized_product_matches_p12_closely() {
        let f = GridDensity::from_fn(-6.0, 6.0, 2401, |x| {
            toy_density(ToyPart::P1, x) * toy_density(ToyPart::P2, x)
        })
        .unwrap();
        let p12 = GridDensity::from_fn(-6.0, 6.0, 2401, |x| toy_density(ToyPart::P12, x)).unwrap();
        let tv = f.tv(&p12).unwrap();
        assert!(tv <= 0.01, "tv = {tv}");
    }

    #[test]
    fn moment_constants_match_p12() {
        let p12 = GridDensity::from_fn(-8.0, 8.0, 4001, |x| toy_density(ToyPart::P12, x)).unwrap();
        assert_relative_eq!(p12.mean(), MOMENT_MATCHED_MEAN, epsilon = 1e-9);
        assert_relative_eq!(p12.variance(), MOMENT_MATCHED_VAR, epsilon = 1e-9);
    }

    #[test]
    fn loose_tether_recovers_the_part_density() {
        let mut rng = crate::rng::stream(2, &[31]);
        let n = 60_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| tethered_conjugate_draw(ToyPart::P1, 0.0, 1e8, &mut rng))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // p1 mean = ½(-1.7 + 0.8) = -0.45.
        assert!((mean + 0.45).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn tight_tether_pins_the_draw() {
        let mut rng = crate::rng::stream(2, &[32]);
        for _ in 0..100 {
            let d = tethered_conjugate_draw(ToyPart::P2, 0.4, 1e-9, &mut rng);
            assert!((d - 0.4).abs() < 1e-3);
        }
    }

    #[test]
    fn tethered_draw_matches_grid_conditional_moments() {
        // Against a brute-force grid rendering of N(t; a, v) p1(t).
        let anchor = 0.2;
        let tether_var = 0.6;
        let f = GridDensity::from_fn(-6.0, 6.0, 4001, |t| {
            (-0.5 * (t - anchor) * (t - anchor) / tether_var).exp() * toy_density(ToyPart::P1, t)
        })
        .unwrap();
        let mut rng = crate::rng::stream(6, &[33]);
        let n = 120_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| tethered_conjugate_draw(ToyPart::P1, anchor, tether_var, &mut rng))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        assert_relative_eq!(mean, f.mean(), epsilon = 0.01);
        assert_relative_eq!(var, f.variance(), epsilon = 0.02);
    }
}
