//! Interval coverage, χ² quantiles, and the per-scenario simulation loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::adjust::{self, HessianSource, ReplicateConfig};
use crate::designs::{self, Scenario, ScenarioConfig};
use crate::linalg::{self, Matrix};
use crate::math;
use crate::model::{self, ParamVector};
use crate::rng::{self, Purpose};
use crate::sampler::{self, DrawsMatrix, FitStatus, PriorSpec, SamplerConfig};
use crate::{Error, Result};

/// Smallest number of draws accepted for quantile intervals.
pub const MIN_DRAWS: usize = 100;
/// Fraction of failed realizations tolerated before a run is invalid.
pub const FAILURE_CAP: f64 = 0.05;

/// Equal-tailed marginal intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Whether each interval contains the truth, once one is supplied.
    pub covered: Option<Vec<bool>>,
}

impl IntervalReport {
    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    pub fn with_truth(mut self, truth: &[f64]) -> Result<Self> {
        if truth.len() != self.lower.len() {
            return Err(Error::shape("truth and interval dimensions differ"));
        }
        self.covered = Some(
            truth
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(t, (l, u))| l <= t && t <= u)
                .collect(),
        );
        Ok(self)
    }
}

/// Linear-interpolation quantile of ascending `sorted` (the usual "type 7").
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = math::floor(h) as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("level must lie in (0, 1), got {level}")))
    }
}

/// Per-parameter `((1−level)/2, 1−(1−level)/2)` quantile intervals.
pub fn marginal_interval(draws: &DrawsMatrix, level: f64) -> Result<IntervalReport> {
    check_level(level)?;
    if draws.len() < MIN_DRAWS {
        return Err(Error::shape(format!(
            "need at least {MIN_DRAWS} draws for quantile intervals, got {}",
            draws.len()
        )));
    }
    let tail = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(draws.dim());
    let mut upper = Vec::with_capacity(draws.dim());
    for j in 0..draws.dim() {
        let mut col = draws.matrix().column(j);
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, tail));
        upper.push(quantile_sorted(&col, 1.0 - tail));
    }
    Ok(IntervalReport {
        level,
        lower,
        upper,
        covered: None,
    })
}

/// `(θ̄ − point)ᵀ Σ̂⁻¹ (θ̄ − point)` with `θ̄`, `Σ̂` the draws' mean and covariance.
pub fn mahalanobis(draws: &DrawsMatrix, point: &[f64]) -> Result<f64> {
    if point.len() != draws.dim() {
        return Err(Error::shape("point and draws dimensions differ"));
    }
    let r = linalg::cholesky(&draws.covariance()).map_err(|_| Error::SingularCovariance)?;
    let diff: Vec<f64> = draws.mean().iter().zip(point).map(|(m, p)| m - p).collect();
    // solve Rᵀ z = diff by forward substitution; distance is |z|²
    let d = diff.len();
    let mut z = vec![0.0; d];
    for i in 0..d {
        let mut acc = diff[i];
        for k in 0..i {
            acc -= r[(k, i)] * z[k];
        }
        z[i] = acc / r[(i, i)];
    }
    Ok(z.iter().map(|v| v * v).sum())
}

/// Whether `truth` lies inside the draws' `level` Mahalanobis ellipsoid.
pub fn joint_covered(draws: &DrawsMatrix, truth: &ParamVector, level: f64) -> Result<bool> {
    check_level(level)?;
    let threshold = chi2_quantile(draws.dim(), level)?;
    Ok(mahalanobis(draws, truth.as_slice())? <= threshold)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefactor = -x + a * math::ln(x) - math::lgamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum * math::exp(log_prefactor)).min(1.0)
    } else {
        // Lentz continued fraction for the upper tail
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        (1.0 - math::exp(log_prefactor) * h).max(0.0)
    }
}

/// χ² distribution function.
pub fn chi2_cdf(df: usize, x: f64) -> f64 {
    regularized_gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Quantile of the χ² distribution with `df` degrees of freedom.
pub fn chi2_quantile(df: usize, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("χ² needs at least one degree of freedom".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    if df == 2 {
        return Ok(-2.0 * math::ln_1p(-p));
    }
    let mut lo = 0.0;
    let mut hi = df as f64;
    while chi2_cdf(df, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(df, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `k` boundary points of the `level` ellipse of a bivariate normal with
/// the given mean and covariance.
pub fn ellipse_points(mean: &[f64], cov: &Matrix, level: f64, k: usize) -> Result<Vec<[f64; 2]>> {
    if mean.len() != 2 || cov.rows() != 2 || !cov.is_square() {
        return Err(Error::shape("ellipses need a 2-vector mean and 2×2 covariance"));
    }
    let r = linalg::cholesky(cov).map_err(|_| Error::SingularCovariance)?;
    let radius = math::sqrt(chi2_quantile(2, level)?);
    Ok((0..k)
        .map(|i| {
            let t = 2.0 * core::f64::consts::PI * i as f64 / k as f64;
            let (u0, u1) = (radius * math::cos(t), radius * math::sin(t));
            // row vector u times upper R has covariance RᵀR
            [
                mean[0] + u0 * r[(0, 0)],
                mean[1] + u0 * r[(0, 1)] + u1 * r[(1, 1)],
            ]
        })
        .collect())
}

/// Area of the `level` ellipse of a bivariate covariance.
pub fn ellipse_area(cov: &Matrix, level: f64) -> Result<f64> {
    if cov.rows() != 2 || !cov.is_square() {
        return Err(Error::shape("ellipse area needs a 2×2 covariance"));
    }
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    if det <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    Ok(core::f64::consts::PI * chi2_quantile(2, level)? * math::sqrt(det))
}

/// Everything needed to run one scenario's Monte Carlo study.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scenario: ScenarioConfig,
    pub sampler: SamplerConfig,
    /// Prior standard deviation on every coefficient (mean zero).
    pub prior_sd: f64,
    pub level: f64,
    pub hessian: HessianSource,
}

impl SimulationConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        SimulationConfig {
            scenario,
            sampler: SamplerConfig::default(),
            prior_sd: 5.0,
            level: 0.9,
            hessian: HessianSource::default(),
        }
    }

    pub fn reference(scenario: Scenario) -> Self {
        SimulationConfig::new(ScenarioConfig::reference(scenario))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.sampler.validate()?;
        check_level(self.level).map_err(|_| Error::config(format!("level {} not in (0, 1)", self.level)))?;
        if !(self.prior_sd.is_finite() && self.prior_sd > 0.0) {
            return Err(Error::config("prior_sd must be positive"));
        }
        if self.sampler.n_draws * self.sampler.n_chains < MIN_DRAWS {
            return Err(Error::config(format!("need at least {MIN_DRAWS} posterior draws in total")));
        }
        Ok(())
    }
}

/// Result of one population/sample/fit/adjust cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationOutcome {
    pub index: usize,
    pub truth: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub unadjusted: IntervalReport,
    pub adjusted: IntervalReport,
    pub joint_unadjusted: bool,
    pub joint_adjusted: bool,
    pub deff_theta: Vec<f64>,
    pub deff_y: f64,
    pub status: FitStatus,
}

/// Run realization `index`; every random stream is keyed by
/// `(cfg.scenario.seed, purpose, index)`, so results do not depend on the
/// order in which realizations execute.
pub fn run_realization(cfg: &SimulationConfig, index: usize) -> Result<RealizationOutcome> {
    realization_draws(cfg, index).map(|r| r.outcome)
}

/// A realization's outcome together with its unadjusted and adjusted draws.
#[derive(Debug, Clone)]
pub struct RealizationDraws {
    pub outcome: RealizationOutcome,
    pub unadjusted: DrawsMatrix,
    pub adjusted: DrawsMatrix,
}

/// [`run_realization`], keeping the draws.
pub fn realization_draws(cfg: &SimulationConfig, index: usize) -> Result<RealizationDraws> {
    cfg.validate()?;
    realization_inner(cfg, index).map_err(|e| Error::Realization {
        index,
        source: alloc::boxed::Box::new(e),
    })
}

fn realization_inner(cfg: &SimulationConfig, index: usize) -> Result<RealizationDraws> {
    let seed = cfg.scenario.seed;
    let i = index as u64;
    let pop = designs::generate_population(&cfg.scenario, &mut rng::stream(seed, Purpose::Population, i))?;
    let truth = pop.census_fit()?;
    let drawn = designs::draw_sample(&pop, &cfg.scenario, &mut rng::stream(seed, Purpose::Design, i))?;
    let sample = drawn.sample;

    let w = model::normalize_weights(sample.weight(), sample.len())?;
    let prior = PriorSpec::isotropic(sample.dim(), cfg.prior_sd)?;
    let sampler_cfg = SamplerConfig {
        seed: rng::child_seed(seed, Purpose::Chain, i),
        ..cfg.sampler.clone()
    };
    let post = sampler::sample_pseudo_posterior(&sample, &w, &prior, &sampler_cfg)?;
    let theta_bar = ParamVector::new(post.draws.mean())?;

    let rep_cfg = ReplicateConfig {
        replicates: cfg.scenario.replicates,
        seed: rng::child_seed(seed, Purpose::Replicate, i),
        hessian: cfg.hessian,
    };
    let est = adjust::estimate_hj(&sample, &theta_bar, &rep_cfg)?;
    let adjusted = adjust::adjust_draws(&post.draws, &est)?;

    let outcome = RealizationOutcome {
        index,
        posterior_mean: theta_bar.as_slice().to_vec(),
        unadjusted: marginal_interval(&post.draws, cfg.level)?.with_truth(truth.as_slice())?,
        adjusted: marginal_interval(&adjusted, cfg.level)?.with_truth(truth.as_slice())?,
        joint_unadjusted: joint_covered(&post.draws, &truth, cfg.level)?,
        joint_adjusted: joint_covered(&adjusted, &truth, cfg.level)?,
        deff_theta: adjust::deff_params(&est),
        deff_y: adjust::deff_mean(&sample)?,
        truth: truth.into_inner(),
        status: post.status,
    };
    Ok(RealizationDraws {
        outcome,
        unadjusted: post.draws,
        adjusted,
    })
}

/// One row of the coverage / width / design-effect table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub scenario: Scenario,
    /// Realizations attempted.
    pub realizations: usize,
    /// Realizations excluded after a numerical or data failure.
    pub failed: usize,
    /// Included realizations whose sampler diagnostics were not clean.
    pub flagged: usize,
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub coverage_unadjusted: Vec<f64>,
    pub coverage_adjusted: Vec<f64>,
    pub joint_unadjusted: f64,
    pub joint_adjusted: f64,
    pub width_unadjusted: Vec<f64>,
    pub width_adjusted: Vec<f64>,
    /// Mean over realizations of adjusted/unadjusted width.
    pub width_ratio: Vec<f64>,
    pub deff_theta: Vec<f64>,
    pub deff_y: f64,
}

impl SimulationSummary {
    /// Realizations that entered the averages.
    pub fn used(&self) -> usize {
        self.realizations - self.failed
    }

    /// Monte Carlo standard error `√(p(1−p)/M)` of a coverage estimate.
    pub fn coverage_se(&self, p: f64) -> f64 {
        math::sqrt(p * (1.0 - p) / self.used() as f64)
    }

    /// `|DEFF_θ0 − DEFF_y| / DEFF_y` from the realization-averaged effects.
    pub fn intercept_deff_gap(&self) -> f64 {
        (self.deff_theta[0] - self.deff_y).abs() / self.deff_y
    }
}

fn column_mean<F: Fn(&RealizationOutcome) -> f64>(rows: &[RealizationOutcome], f: F) -> f64 {
    rows.iter().map(f).sum::<f64>() / rows.len() as f64
}

fn flag(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

/// Aggregate per-realization results in index order. Configuration errors
/// abort; other failures are excluded and counted, up to [`FAILURE_CAP`].
pub fn summarize(cfg: &SimulationConfig, results: Vec<Result<RealizationOutcome>>) -> Result<SimulationSummary> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => {
                let root = match &e {
                    Error::Realization { source, .. } => source.as_ref(),
                    other => other,
                };
                if matches!(root, Error::Config(_)) {
                    return Err(e);
                }
                failed += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    if failed as f64 > FAILURE_CAP * total as f64 || ok.is_empty() {
        return Err(Error::TooManyFailures { failed, total });
    }
    ok.sort_by_key(|o| o.index);
    let d = ok[0].truth.len();
    let per_param = |f: &dyn Fn(&RealizationOutcome, usize) -> f64| -> Vec<f64> {
        (0..d).map(|j| column_mean(&ok, |o| f(o, j))).collect()
    };
    let covered = |r: &IntervalReport, j: usize| flag(r.covered.as_ref().is_some_and(|c| c[j]));

    Ok(SimulationSummary {
        scenario: cfg.scenario.scenario,
        realizations: total,
        failed,
        flagged: ok.iter().filter(|o| o.status != FitStatus::Ok).count(),
        sample_size: cfg.scenario.sample_size,
        replicates: cfg.scenario.replicates,
        seed: cfg.scenario.seed,
        level: cfg.level,
        coverage_unadjusted: per_param(&|o, j| covered(&o.unadjusted, j)),
        coverage_adjusted: per_param(&|o, j| covered(&o.adjusted, j)),
        joint_unadjusted: column_mean(&ok, |o| flag(o.joint_unadjusted)),
        joint_adjusted: column_mean(&ok, |o| flag(o.joint_adjusted)),
        width_unadjusted: per_param(&|o, j| o.unadjusted.widths()[j]),
        width_adjusted: per_param(&|o, j| o.adjusted.widths()[j]),
        width_ratio: per_param(&|o, j| o.adjusted.widths()[j] / o.unadjusted.widths()[j]),
        deff_theta: per_param(&|o, j| o.deff_theta[j]),
        deff_y: column_mean(&ok, |o| o.deff_y),
    })
}

/// Run every realization serially and summarize.
pub fn run_scenario(cfg: &SimulationConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let results = (0..cfg.scenario.realizations).map(|i| run_realization(cfg, i)).collect();
    summarize(cfg, results)
}
