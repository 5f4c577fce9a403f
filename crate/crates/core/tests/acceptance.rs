//! Acceptance gate. Each test covers one release criterion and prints a
//! single diagnostic line with every measured quantity, so a red run can be
//! triaged from the log alone. The tests share a mutex: wall budgets are
//! meant for an unloaded machine, not for whatever cargo happens to
//! schedule alongside.

use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, PoisonError};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use weierstrass_mcmc::combine::{
    combine_kernel_marginal, combine_simple_average, combine_weighted_average, pairwise_combine,
    refine_subsets, refine_with_targets, sequential_reject, weierstrass_reject, CombineResult,
    GaussianTarget, RefineTarget, RejectionConfig, SequentialConfig, ToyTarget,
};
use weierstrass_mcmc::config::ExperimentConfig;
use weierstrass_mcmc::engine::{
    self, partition, run_all_subsets, run_reference_chain, ChainConfig, DrawMatrix, SubsetRun,
    WorkerPool,
};
use weierstrass_mcmc::kernel::{
    fukunaga_bandwidth, Bandwidth, BandwidthSchedule, GridDensity, KernelSpec,
};
use weierstrass_mcmc::linalg;
use weierstrass_mcmc::metrics::{
    gaussian_kl, tv_distance, verify_transform_bound, AnalyticDensity, DensitySide,
};
use weierstrass_mcmc::models::{
    generate_bernoulli, generate_logistic, generate_mixture, toy_density, BetaBernoulliModel,
    Dataset, LogisticModel, MixtureModel, ModelKind, PriorFraction, ToyPart,
};
use weierstrass_mcmc::pipeline::RunContext;
use weierstrass_mcmc::rng::{self, domain};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(PoisonError::into_inner)
}

/// Collects clause outcomes for one criterion and emits the summary line.
struct Criterion {
    index: usize,
    label: &'static str,
    clauses: Vec<(bool, String)>,
    start: Instant,
}

impl Criterion {
    fn new(index: usize, label: &'static str) -> Self {
        Criterion { index, label, clauses: Vec::new(), start: Instant::now() }
    }

    fn clause(&mut self, ok: bool, detail: String) {
        let mark = if ok { "ok" } else { "FAIL" };
        self.clauses.push((ok, format!("{detail} {mark}")));
    }

    /// Wall-clock clause; `budget_secs = None` records the time without
    /// asserting on it.
    fn finish(mut self, budget_secs: Option<f64>) {
        let wall = self.start.elapsed().as_secs_f64();
        match budget_secs {
            Some(b) => self.clause(wall <= b, format!("wall={wall:.1}s<={b:.0}s")),
            None => self.clauses.push((true, format!("wall={wall:.1}s"))),
        }
        let ok = self.clauses.iter().all(|(c, _)| *c);
        let details: Vec<&str> = self.clauses.iter().map(|(_, d)| d.as_str()).collect();
        let joined = details.join("; ");
        let status = if ok { "PASS" } else { "FAIL" };
        eprintln!("criterion {} ({}): {status} [{joined}]", self.index, self.label);
        assert!(ok, "criterion {} ({}) failed: {joined}", self.index, self.label);
    }
}

fn tv_vs_analytic(result: &CombineResult, target: &AnalyticDensity, grid: usize) -> f64 {
    let col = result.draws.column(0);
    tv_distance(
        &DensitySide::Sample { values: &col, weights: result.weights.as_deref() },
        &DensitySide::Analytic(target),
        grid,
    )
    .expect("tv")
}

fn successes(data: &Dataset) -> f64 {
    match data {
        Dataset::Bernoulli { y } => y.iter().map(|&v| v as f64).sum(),
        _ => panic!("expected bernoulli data"),
    }
}

fn conjugate_posterior(data: &Dataset) -> AnalyticDensity {
    let model = BetaBernoulliModel::default();
    let s = successes(data);
    let n = data.len() as f64;
    AnalyticDensity::beta(model.a + s, model.b + n - s).expect("beta")
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn criterion_01_transform_bias_bound() {
    let _g = gate();
    let mut c = Criterion::new(1, "transform bias bound");
    let spec = KernelSpec::gaussian();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let phi = GridDensity::from_fn(-9.0, 9.0, 4001, |x| norm * (-0.5 * x * x).exp()).unwrap();
    // sup |phi''| is attained at the origin.
    let m2 = norm;
    let reports = verify_transform_bound(&phi, m2, &spec, &[0.4, 0.2, 0.1]).unwrap();
    for r in &reports {
        c.clause(
            r.holds,
            format!("h={}: sup_err={:.6}<=bound={:.6}", r.h, r.observed, r.bound),
        );
    }
    for w in reports.windows(2) {
        let ratio = w[0].observed / w[1].observed;
        c.clause(
            (3.5..=4.5).contains(&ratio),
            format!("h={}->{} err_ratio={ratio:.2} in [3.5,4.5]", w[0].h, w[1].h),
        );
    }
    c.finish(Some(5.0));
}

#[test]
fn criterion_02_conjugate_recombination() {
    let _g = gate();
    let mut c = Criterion::new(2, "conjugate recombination");
    let seed = 20260815;
    let m = 20;
    let data = generate_bernoulli(10_000, 0.1, seed).unwrap();
    let model = ModelKind::BetaBernoulli(BetaBernoulliModel::default());
    let part = partition(&data, m, seed).unwrap();
    let fraction = PriorFraction::new(m).unwrap();
    let pool = WorkerPool::new(0).unwrap();
    let chain = ChainConfig::new(6000, 1000, 1, seed);
    let runs = run_all_subsets(&model, &data, &part, fraction, &chain, &pool).unwrap();
    let posterior = conjugate_posterior(&data);

    let refined =
        refine_subsets(&model, &data, &part, fraction, &runs, 10, 100, &pool, seed).unwrap();
    let tv_refined = tv_vs_analytic(&refined, &posterior, 512);
    c.clause(tv_refined <= 0.10, format!("tv_refinement={tv_refined:.3}<=0.10"));

    let spec = KernelSpec::gaussian();
    let rejected =
        weierstrass_reject(&runs, &RejectionConfig::with_target(0.1, seed), &spec).unwrap();
    let tv_rejected = tv_vs_analytic(&rejected, &posterior, 512);
    let ar = rejected.diagnostics.acceptance_rate.unwrap_or(f64::NAN);
    c.clause(
        tv_rejected <= 0.15,
        format!("tv_rejection={tv_rejected:.3}<=0.15 (acceptance={ar:.3})"),
    );

    let weighted = combine_weighted_average(&runs).unwrap();
    let tv_weighted = tv_vs_analytic(&weighted, &posterior, 512);
    c.clause(tv_weighted <= 0.15, format!("tv_weighted={tv_weighted:.3}<=0.15"));
    c.finish(Some(120.0));
}

#[test]
fn criterion_03_rare_event_recombination() {
    let _g = gate();
    let mut c = Criterion::new(3, "rare event recombination");
    let seed = 20260816;
    let m = 20;
    let data = generate_bernoulli(10_000, 0.001, seed).unwrap();
    let model = ModelKind::BetaBernoulli(BetaBernoulliModel::default());
    let part = partition(&data, m, seed).unwrap();
    let fraction = PriorFraction::new(m).unwrap();
    let pool = WorkerPool::new(0).unwrap();
    // Two million draws per subset: the subset posteriors pile against zero,
    // and Silverman bandwidths only reach the scale those spikes need once
    // the subset samples are this large. The same length keeps the pairwise
    // tree's deepest merges out of starvation.
    let chain = ChainConfig::new(2_050_000, 50_000, 1, seed);
    let runs = run_all_subsets(&model, &data, &part, fraction, &chain, &pool).unwrap();
    let posterior = conjugate_posterior(&data);
    let spec = KernelSpec::gaussian();

    // Per-merge acceptance sits at the bottom of its U-curve: lower targets
    // starve the late merges, higher ones over-smooth the midpoints.
    let pairwise =
        pairwise_combine(&runs, &RejectionConfig::with_target(0.35, seed), &spec).unwrap();
    let tv_pairwise = tv_vs_analytic(&pairwise, &posterior, 512);
    let kept = pairwise.draws.n_draws();
    c.clause(
        tv_pairwise <= 0.20,
        format!("tv_rejection_pairwise={tv_pairwise:.3}<=0.20 (kept={kept})"),
    );

    let kernel = combine_kernel_marginal(&runs, 1024, seed).unwrap();
    let tv_kernel = tv_vs_analytic(&kernel, &posterior, 512);
    c.clause(tv_kernel <= 0.20, format!("tv_kernel={tv_kernel:.3}<=0.20"));

    let simple = combine_simple_average(&runs).unwrap();
    let tv_simple = tv_vs_analytic(&simple, &posterior, 512);
    c.clause(tv_simple >= 0.5, format!("tv_average={tv_simple:.3}>=0.5"));

    // Partition-based Laplace: Gaussian product of the per-subset
    // approximations. Subsets without an observed success have no interior
    // mode, so their approximations are missing and the product degrades.
    let laps: Vec<_> = runs.iter().filter_map(|r| r.laplace.as_ref()).collect();
    let precision: f64 = laps.iter().map(|l| 1.0 / l.cov[(0, 0)]).sum();
    let mu = laps.iter().map(|l| l.mode[0] / l.cov[(0, 0)]).sum::<f64>() / precision;
    let lap_density = AnalyticDensity::normal(mu, precision.sqrt().recip()).unwrap();
    let tv_laplace = tv_distance(
        &DensitySide::Analytic(&lap_density),
        &DensitySide::Analytic(&posterior),
        4096,
    )
    .unwrap();
    c.clause(
        tv_laplace >= 0.5,
        format!("tv_laplace={tv_laplace:.3}>=0.5 (subset_laplaces={}/{m})", laps.len()),
    );
    c.finish(Some(120.0));
}

fn toy_product_density() -> AnalyticDensity {
    AnalyticDensity::from_fn(
        |t| toy_density(ToyPart::P12, t),
        weierstrass_mcmc::models::toy::MOMENT_MATCHED_MEAN,
        weierstrass_mcmc::models::toy::MOMENT_MATCHED_VAR.sqrt(),
        (f64::NEG_INFINITY, f64::INFINITY),
    )
}

/// Two-subset toy refinement from a moment-matched Gaussian start, with the
/// bandwidth sd shrinking by 0.8 per step.
fn toy_refined_draws(steps: usize) -> Vec<f64> {
    let seed = 20260817;
    let targets: Vec<Box<dyn RefineTarget>> = vec![
        Box::new(ToyTarget::new(ToyPart::P1)),
        Box::new(ToyTarget::new(ToyPart::P2)),
    ];
    let mean = weierstrass_mcmc::models::toy::MOMENT_MATCHED_MEAN;
    let sd = weierstrass_mcmc::models::toy::MOMENT_MATCHED_VAR.sqrt();
    let mut stream = rng::stream(seed, &[domain::GENERATE, 1]);
    let rows: Vec<Vec<f64>> = (0..2000)
        .map(|_| {
            let z: f64 = stream.sample(StandardNormal);
            vec![mean + sd * z]
        })
        .collect();
    let meta = engine::DrawMeta::new("toy_bimodal", "init", rng::lineage(seed, &[1]));
    let init = DrawMatrix::from_rows(vec!["theta".into()], &rows, meta).unwrap();
    let schedule = BandwidthSchedule::geometric_sd(0.8, 0.8, steps).unwrap();
    let pool = WorkerPool::new(0).unwrap();
    let out = refine_with_targets(&targets, &init, &schedule, 1, &pool, seed).unwrap();
    out.draws.column(0)
}

#[test]
fn criterion_04_toy_refinement() {
    let _g = gate();
    let mut c = Criterion::new(4, "toy refinement");
    let draws = toy_refined_draws(10);
    let product = toy_product_density();
    let tv = tv_distance(
        &DensitySide::Sample { values: &draws, weights: None },
        &DensitySide::Analytic(&product),
        512,
    )
    .unwrap();
    c.clause(tv <= 0.15, format!("tv={tv:.3}<=0.15"));

    let kde = GridDensity::from_samples(&draws, None, 512).unwrap();
    let modes = kde.local_maxima(0.1);
    c.clause(modes.len() == 2, format!("modes={modes:.3?} count=2"));
    if modes.len() == 2 {
        c.clause((modes[0] + 1.5).abs() <= 0.3, format!("mode1={:.3} near -1.5", modes[0]));
        c.clause((modes[1] - 1.0).abs() <= 0.3, format!("mode2={:.3} near 1.0", modes[1]));
    }
    c.finish(Some(60.0));
}

#[test]
fn criterion_05_refinement_contraction() {
    let _g = gate();
    let mut c = Criterion::new(5, "refinement contraction");
    let product = toy_product_density();
    let tvs: Vec<f64> = (1..=10)
        .map(|k| {
            let draws = toy_refined_draws(k);
            tv_distance(
                &DensitySide::Sample { values: &draws, weights: None },
                &DensitySide::Analytic(&product),
                512,
            )
            .unwrap()
        })
        .collect();
    let max_rise = tvs.windows(2).map(|w| w[1] - w[0]).fold(f64::MIN, f64::max);
    c.clause(
        tvs[9] < tvs[0] - 0.1,
        format!("tv_step10={:.3}<tv_step1={:.3}-0.1", tvs[9], tvs[0]),
    );
    c.clause(max_rise <= 0.02, format!("max_step_rise={max_rise:.3}<=0.02"));
    c.finish(None);
}

#[test]
fn criterion_06_acceptance_rate_scaling() {
    let _g = gate();
    let mut c = Criterion::new(6, "acceptance rate scaling");
    let seed = 20260818;
    let spec = KernelSpec::gaussian();
    let n = 200_000;
    let hs = [0.05, 0.1, 0.2, 0.3];
    for m in [2usize, 3] {
        let runs: Vec<SubsetRun> = (0..m)
            .map(|i| {
                let tag = (10 * m + i) as u64;
                let mut stream = rng::stream(seed, &[domain::GENERATE, tag]);
                let values =
                    DMatrix::from_fn(n, 1, |_, _| stream.sample::<f64, _>(StandardNormal));
                let meta =
                    engine::DrawMeta::new("gaussian", "subset", rng::lineage(seed, &[tag]));
                let dm = DrawMatrix::new(vec!["theta".into()], values, meta).unwrap();
                SubsetRun::from_draws(i + 1, n, dm, None, 1.0).unwrap()
            })
            .collect();
        let mut log_h = Vec::new();
        let mut log_ar = Vec::new();
        for &h in &hs {
            let config = RejectionConfig::with_bandwidths(
                vec![Bandwidth::scalar(h).unwrap(); m],
                seed,
            );
            let out = weierstrass_reject(&runs, &config, &spec).unwrap();
            let ar = out.diagnostics.acceptance_rate.unwrap();
            log_h.push(h.ln());
            log_ar.push(ar.ln());
        }
        let slope = ls_slope(&log_h, &log_ar);
        let expect = (m - 1) as f64;
        c.clause(
            (slope - expect).abs() <= 0.3,
            format!("m={m}: slope={slope:.3} within {expect}+-0.3"),
        );
    }
    c.finish(Some(30.0));
}

#[test]
fn criterion_07_gaussian_product_moments() {
    let _g = gate();
    let mut c = Criterion::new(7, "gaussian product moments");
    let seed = 20260819;
    let p = 3;
    let m = 5;
    let n = 4000;
    let corr = DMatrix::from_fn(p, p, |i, j| 0.3f64.powi((i as i32 - j as i32).abs()));
    let mut means = Vec::new();
    let mut covs = Vec::new();
    for i in 0..m {
        let t = i as f64 - 2.0;
        means.push(DVector::from_vec(vec![0.5 * t, -0.4 * t, 0.3 * t]));
        let d = DVector::from_vec(vec![
            1.0 + 0.1 * i as f64,
            0.8 + 0.05 * i as f64,
            1.2 - 0.05 * i as f64,
        ]);
        let dm = DMatrix::from_diagonal(&d);
        covs.push(&dm * &corr * &dm);
    }
    let mut prec_sum = DMatrix::zeros(p, p);
    let mut weighted_mean = DVector::zeros(p);
    for (mu, cov) in means.iter().zip(&covs) {
        let prec = linalg::spd_inverse(cov).unwrap();
        weighted_mean += &prec * mu;
        prec_sum += prec;
    }
    let product_cov = linalg::spd_inverse(&prec_sum).unwrap();
    let product_mean = &product_cov * weighted_mean;

    let runs: Vec<SubsetRun> = (0..m)
        .map(|i| {
            let chol = linalg::cholesky_spd(&covs[i]).unwrap();
            let mut stream = rng::stream(seed, &[domain::GENERATE, i as u64 + 1]);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| linalg::sample_mvn(&means[i], &chol, &mut stream).iter().cloned().collect())
                .collect();
            let names = vec!["t1".into(), "t2".into(), "t3".into()];
            let meta = engine::DrawMeta::new("gaussian", "subset", String::new());
            let dm = DrawMatrix::from_rows(names, &rows, meta).unwrap();
            SubsetRun::from_draws(i + 1, n, dm, None, 1.0).unwrap()
        })
        .collect();

    let zscores = |draws: &DrawMatrix| -> (f64, f64) {
        let (mean, cov) = draws.mean_cov().unwrap();
        let mut zm = 0.0f64;
        let mut zv = 0.0f64;
        for j in 0..p {
            let v = product_cov[(j, j)];
            let se_mean = (v / n as f64).sqrt();
            let se_var = v * (2.0 / (n as f64 - 1.0)).sqrt();
            zm = zm.max((mean[j] - product_mean[j]).abs() / se_mean);
            zv = zv.max((cov[(j, j)] - v).abs() / se_var);
        }
        (zm, zv)
    };

    let weighted = combine_weighted_average(&runs).unwrap();
    let (zm, zv) = zscores(&weighted.draws);
    c.clause(zm <= 3.0, format!("weighted max_mean_z={zm:.2}<=3"));
    c.clause(zv <= 3.0, format!("weighted max_var_z={zv:.2}<=3"));

    let mut prec_hat = DMatrix::zeros(p, p);
    for r in &runs {
        prec_hat += linalg::spd_inverse(&r.sample_cov).unwrap();
    }
    let cov_hat = linalg::spd_inverse(&prec_hat).unwrap();
    let h0 = fukunaga_bandwidth(p, n, &cov_hat).unwrap();
    let schedule = BandwidthSchedule::new(h0, vec![1.0; 5]).unwrap();
    let targets: Vec<Box<dyn RefineTarget>> = means
        .iter()
        .zip(&covs)
        .map(|(mu, cov)| {
            Box::new(GaussianTarget::new(mu.clone(), cov.clone()).unwrap())
                as Box<dyn RefineTarget>
        })
        .collect();
    let pool = WorkerPool::new(0).unwrap();
    let refined =
        refine_with_targets(&targets, &weighted.draws, &schedule, 1, &pool, seed).unwrap();
    let (zm, zv) = zscores(&refined.draws);
    c.clause(zm <= 3.0, format!("refinement max_mean_z={zm:.2}<=3"));
    c.clause(zv <= 3.0, format!("refinement max_var_z={zv:.2}<=3"));
    c.finish(None);
}

fn mean_tv_draws(a: &DrawMatrix, b: &DrawMatrix) -> f64 {
    let p = a.dim();
    let mut acc = 0.0;
    for j in 0..p {
        let ca = a.column(j);
        let cb = b.column(j);
        acc += tv_distance(
            &DensitySide::Sample { values: &ca, weights: None },
            &DensitySide::Sample { values: &cb, weights: None },
            512,
        )
        .unwrap();
    }
    acc / p as f64
}

#[test]
fn criterion_08_logistic_recombination() {
    let _g = gate();
    let mut c = Criterion::new(8, "logistic recombination");
    let seed = 20260820;
    let m = 10;
    let (data, _beta) = generate_logistic(5000, 5, 0.0, seed).unwrap();
    let model = ModelKind::Logistic(LogisticModel::default());
    let part = partition(&data, m, seed).unwrap();
    let fraction = PriorFraction::new(m).unwrap();
    let pool = WorkerPool::new(0).unwrap();
    let chain = ChainConfig::new(8000, 2000, 2, seed);
    let runs = run_all_subsets(&model, &data, &part, fraction, &chain, &pool).unwrap();
    let reference =
        run_reference_chain(&model, &data, &ChainConfig::new(200_000, 50_000, 30, seed)).unwrap();

    let refined =
        refine_subsets(&model, &data, &part, fraction, &runs, 10, 60, &pool, seed).unwrap();
    let simple = combine_simple_average(&runs).unwrap();

    let tv_refined = mean_tv_draws(&refined.draws, &reference.draws);
    let tv_simple = mean_tv_draws(&simple.draws, &reference.draws);
    let kl_refined = gaussian_kl(&refined.draws, None, &reference.draws).unwrap();
    let kl_simple = gaussian_kl(&simple.draws, None, &reference.draws).unwrap();

    c.clause(tv_refined <= 0.15, format!("tv_refinement={tv_refined:.3}<=0.15"));
    c.clause(
        tv_refined < tv_simple,
        format!("tv_refinement={tv_refined:.3}<tv_average={tv_simple:.3}"),
    );
    c.clause(
        kl_refined < kl_simple,
        format!("kl_refinement={kl_refined:.4}<kl_average={kl_simple:.4}"),
    );
    c.finish(Some(600.0));
}

#[test]
fn criterion_09_mixture_mode_recovery() {
    let _g = gate();
    let mut c = Criterion::new(9, "mixture mode recovery");
    let seed = 20260821;
    let m = 5;
    let data = generate_mixture(2000, seed);
    let model = ModelKind::Mixture(MixtureModel::default());
    let part = partition(&data, m, seed).unwrap();
    let fraction = PriorFraction::new(m).unwrap();
    let pool = WorkerPool::new(0).unwrap();
    let config = SequentialConfig::new(500, 200, seed);
    let result = sequential_reject(&model, &data, &part, fraction, &config, &pool).unwrap();
    let weights = result.weights.clone().expect("sequential weights");
    let ess = result.diagnostics.ess.unwrap_or(f64::NAN);

    let mut modes = Vec::new();
    for j in 0..result.draws.dim() {
        let col = result.draws.column(j);
        let kde = GridDensity::from_samples(&col, Some(&weights), 512).unwrap();
        modes.extend(kde.local_maxima(0.05));
    }
    for target in [0.0, 2.0, 4.0] {
        let nearest = modes
            .iter()
            .map(|&x| (x - target).abs())
            .fold(f64::INFINITY, f64::min);
        c.clause(
            nearest <= 0.25,
            format!("mode near {target}: dist={nearest:.3}<=0.25 (ess={ess:.0})"),
        );
    }
    c.finish(Some(600.0));
}

fn collect_files(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) {
    let dir = root.join(rel);
    let mut entries: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap()).collect();
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let sub = rel.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            collect_files(root, &sub, out);
        } else if entry.file_name() != "manifest.json" {
            out.push(sub);
        }
    }
}

#[test]
fn criterion_10_worker_determinism() {
    let _g = gate();
    let mut c = Criterion::new(10, "worker determinism");
    let toml = r#"
[experiment]
model = "beta_bernoulli"
seed = 20260815
replicates = 1

[data]
n = 10000
prob = 0.1

[partition]
m = 20

[chain]
iterations = 6000
burnin = 1000
thin = 1

[reference]
kind = "analytic"

[[methods]]
name = "weighted"

[[methods]]
name = "refinement"
steps = 10
inner_iterations = 100

[[methods]]
name = "rejection"
target_acceptance = 0.1

[evaluate]
grid_points = 512
"#;
    let config = ExperimentConfig::from_toml_str(toml).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    RunContext::new(config.clone(), Some(dir_a.path().to_path_buf()), 1, None, false)
        .unwrap()
        .pipeline()
        .unwrap();
    RunContext::new(config, Some(dir_b.path().to_path_buf()), 8, None, false)
        .unwrap()
        .pipeline()
        .unwrap();

    let mut files_a = Vec::new();
    let mut files_b = Vec::new();
    collect_files(dir_a.path(), Path::new(""), &mut files_a);
    collect_files(dir_b.path(), Path::new(""), &mut files_b);
    c.clause(
        files_a == files_b,
        format!("file sets match ({} vs {})", files_a.len(), files_b.len()),
    );
    let mut diffs = Vec::new();
    for rel in &files_a {
        let a = std::fs::read(dir_a.path().join(rel)).unwrap();
        let b = std::fs::read(dir_b.path().join(rel)).ok();
        if Some(a) != b {
            diffs.push(rel.display().to_string());
        }
    }
    c.clause(
        diffs.is_empty() && files_a.len() >= 20,
        format!("byte-identical files={} diffs={diffs:?}", files_a.len()),
    );
    c.finish(None);
}
