//! MCMC for the pseudo-posterior `π(θ) · exp(Σ w*_i log p(y_i | θ))`.
//!
//! Two kernels:
//!
//! * Hamiltonian leapfrog with a fixed integration time, dual-averaging
//!   step-size adaptation and a diagonal metric estimated mid-warmup.
//! * Adaptive random-walk Metropolis targeting 0.234 acceptance, with the
//!   proposal covariance learned during warmup.
//!
//! Chains are independent. Each owns a stream derived from `(seed, chain)`,
//! so they may be run in any order or in parallel.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{self, Matrix};
use crate::math;
use crate::model::{self, NormalizedWeights, SurveySample};
use crate::rng::{self, Purpose, StreamRng};
use crate::{Error, Result};

/// Independent Gaussian prior on each coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl PriorSpec {
    pub fn gaussian(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.len() != sd.len() {
            return Err(Error::shape("prior mean and sd lengths differ"));
        }
        if mean.is_empty() {
            return Err(Error::EmptyInput);
        }
        if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("prior sd must be positive and finite"));
        }
        Ok(PriorSpec { mean, sd })
    }

    /// `N(0, sd²)` on each of `d` coefficients.
    pub fn isotropic(d: usize, sd: f64) -> Result<Self> {
        PriorSpec::gaussian(vec![0.0; d], vec![sd; d])
    }

    /// Weakly informative default, `N(0, 5²)` per coefficient.
    pub fn weakly_informative(d: usize) -> Self {
        PriorSpec {
            mean: vec![0.0; d],
            sd: vec![5.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }

    /// Log density up to a constant; adds its gradient into `grad`.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for ((g, t), (m, s)) in grad.iter_mut().zip(theta).zip(self.mean.iter().zip(&self.sd)) {
            let z = (t - m) / s;
            lp -= 0.5 * z * z;
            *g -= z / s;
        }
        lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Hamiltonian,
    AdaptiveRandomWalk,
}

impl core::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hamiltonian" | "hmc" => Ok(Algorithm::Hamiltonian),
            "adaptive_random_walk" | "rwm" | "random_walk" => Ok(Algorithm::AdaptiveRandomWalk),
            other => Err(Error::config(format!(
                "unknown sampler algorithm '{other}' (expected hamiltonian or adaptive_random_walk)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Total post-warmup draws across all chains.
    pub n_draws: usize,
    /// Warmup iterations per chain.
    pub n_warmup: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Initial leapfrog step size, refined during warmup.
    pub step_size: f64,
    pub algorithm: Algorithm,
    /// Leapfrog integration time in metric-whitened units.
    pub path_length: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_draws: 2000,
            n_warmup: 1000,
            n_chains: 4,
            seed: 0,
            step_size: 0.1,
            algorithm: Algorithm::Hamiltonian,
            path_length: 1.5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 100 {
            return Err(Error::config("at least 100 draws are required"));
        }
        if self.n_warmup < 100 {
            return Err(Error::config("at least 100 warmup iterations are required"));
        }
        if self.n_chains < 2 {
            return Err(Error::config("at least two chains are required"));
        }
        if self.n_chains > self.n_draws {
            return Err(Error::config("more chains than draws"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config("step size must be positive"));
        }
        if !(self.path_length.is_finite() && self.path_length > 0.0) {
            return Err(Error::config("path length must be positive"));
        }
        Ok(())
    }

    /// Post-warmup draws kept by `chain`; the remainder of an uneven split
    /// goes to the lowest-numbered chains.
    pub fn draws_for_chain(&self, chain: usize) -> usize {
        self.n_draws / self.n_chains + usize::from(chain < self.n_draws % self.n_chains)
    }
}

/// Posterior draws, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsMatrix {
    draws: Matrix,
    names: Vec<String>,
}

impl DrawsMatrix {
    pub fn new(draws: Matrix, names: Vec<String>) -> Result<Self> {
        if draws.cols() != names.len() {
            return Err(Error::shape(format!(
                "{} parameter names for {} columns",
                names.len(),
                draws.cols()
            )));
        }
        if draws.rows() == 0 || draws.cols() == 0 {
            return Err(Error::EmptyInput);
        }
        if !draws.is_finite() {
            return Err(Error::InvalidData("draws contain non-finite values".into()));
        }
        Ok(DrawsMatrix { draws, names })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.draws
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.draws.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.cols()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.draws.column_means()
    }

    pub fn covariance(&self) -> Matrix {
        self.draws.sample_covariance()
    }

    pub fn sd(&self) -> Vec<f64> {
        self.covariance().diag().into_iter().map(math::sqrt).collect()
    }

    pub fn into_matrix(self) -> Matrix {
        self.draws
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Ok,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// Fraction of transitions that moved the chain.
    pub accept_rate: f64,
    pub health: Health,
}

/// R-hat above this, or ESS below [`MIN_ESS`], flags a warning.
pub const RHAT_LIMIT: f64 = 1.05;
pub const MIN_ESS: f64 = 100.0;
/// Post-warmup divergence share above which a fit is marked failed.
pub const DIVERGENCE_LIMIT: f64 = 0.05;

/// Split R-hat, multi-chain ESS and the move rate of equal-length chains.
///
/// Degenerate (zero-variance) parameters report NaN and a warning.
pub fn diagnostics(chains: &[Matrix]) -> Result<Diagnostics> {
    if chains.len() < 2 {
        return Err(Error::InsufficientChains);
    }
    let n = chains[0].rows();
    let d = chains[0].cols();
    if chains.iter().any(|c| c.rows() != n || c.cols() != d) {
        return Err(Error::shape("chains must have equal lengths and widths"));
    }
    if n < 4 {
        return Err(Error::shape("chains are too short for split R-hat"));
    }
    let mut rhat = Vec::with_capacity(d);
    let mut ess = Vec::with_capacity(d);
    for j in 0..d {
        let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
        rhat.push(split_rhat(&cols));
        ess.push(effective_sample_size(&cols));
    }
    let mut moved = 0usize;
    let mut transitions = 0usize;
    for c in chains {
        for i in 1..n {
            transitions += 1;
            if c.row(i) != c.row(i - 1) {
                moved += 1;
            }
        }
    }
    let ok = rhat.iter().all(|r| *r < RHAT_LIMIT) && ess.iter().all(|e| *e >= MIN_ESS);
    Ok(Diagnostics {
        rhat,
        ess,
        accept_rate: moved as f64 / transitions as f64,
        health: if ok { Health::Ok } else { Health::Warning },
    })
}

fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains[0].len() / 2;
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        pieces.push(&c[..half]);
        pieces.push(&c[c.len() - half..]);
    }
    rhat_of(&pieces)
}

fn rhat_of(pieces: &[&[f64]]) -> f64 {
    let m = pieces.len() as f64;
    let n = pieces[0].len() as f64;
    let means: Vec<f64> = pieces.iter().map(|p| math::mean(p)).collect();
    let grand = math::mean(&means);
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let within = pieces.iter().map(|p| math::variance(p)).sum::<f64>() / m;
    if within <= 0.0 || !within.is_finite() {
        return f64::NAN;
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    math::sqrt(var_plus / within)
}

/// Geyer initial-monotone-sequence ESS pooled across chains.
fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| math::mean(c)).collect();
    let acov = |c: &[f64], mean: f64, lag: usize| -> f64 {
        c[..n - lag]
            .iter()
            .zip(&c[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let var0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| acov(c, mu, 0)).collect();
    let within = var0.iter().map(|v| v * nf / (nf - 1.0)).sum::<f64>() / m;
    let grand = math::mean(&means);
    let between = if chains.len() > 1 {
        nf / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>()
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * within + between / nf;
    if var_plus <= 0.0 || !var_plus.is_finite() {
        return f64::NAN;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| acov(c, mu, lag))
            .sum::<f64>()
            / m;
        1.0 - (within - mean_acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / math::ln(m * nf).max(1.0));
    m * nf / tau
}

/// Overall fit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Ok,
    /// R-hat or ESS outside their limits.
    Warning,
    /// Divergent trajectories above [`DIVERGENCE_LIMIT`]; draws are still
    /// returned.
    DiagnosticsFailure,
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub draws: Matrix,
    /// Mean Metropolis acceptance probability after warmup.
    pub mean_accept_prob: f64,
    pub divergences: usize,
    /// Final adapted step size (HMC) or proposal scale (random walk).
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub draws: DrawsMatrix,
    pub diagnostics: Diagnostics,
    pub mean_accept_prob: f64,
    pub divergences: usize,
    pub status: FitStatus,
}

/// Run every chain serially and pool the draws.
pub fn sample_pseudo_posterior(
    sample: &SurveySample,
    w: &NormalizedWeights,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<PosteriorSample> {
    let chains = (0..cfg.n_chains)
        .map(|c| run_chain(sample, w, prior, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    combine_chains(chains, sample.names().to_vec())
}

/// Pool chain outputs (in chain order) into one posterior sample.
pub fn combine_chains(chains: Vec<ChainRun>, names: Vec<String>) -> Result<PosteriorSample> {
    if chains.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = chains[0].draws.cols();
    let total: usize = chains.iter().map(|c| c.draws.rows()).sum();
    let mut data = Vec::with_capacity(total * d);
    for c in &chains {
        data.extend_from_slice(c.draws.as_slice());
    }
    let draws = DrawsMatrix::new(Matrix::from_row_major(total, d, data)?, names)?;

    // diagnostics need equal lengths; trim to the shortest chain
    let shortest = chains.iter().map(|c| c.draws.rows()).min().unwrap_or(0);
    let trimmed: Vec<Matrix> = chains
        .iter()
        .map(|c| {
            Matrix::from_row_major(shortest, d, c.draws.as_slice()[..shortest * d].to_vec())
                .expect("prefix of a valid buffer")
        })
        .collect();
    let diag = diagnostics(&trimmed)?;
    let divergences: usize = chains.iter().map(|c| c.divergences).sum();
    let mean_accept_prob =
        chains.iter().map(|c| c.mean_accept_prob).sum::<f64>() / chains.len() as f64;
    let status = if divergences as f64 > DIVERGENCE_LIMIT * total as f64 {
        FitStatus::DiagnosticsFailure
    } else if diag.health == Health::Warning {
        FitStatus::Warning
    } else {
        FitStatus::Ok
    };
    Ok(PosteriorSample {
        draws,
        diagnostics: diag,
        mean_accept_prob,
        divergences,
        status,
    })
}

/// Run one chain with its own stream `(cfg.seed, chain)`.
pub fn run_chain(
    sample: &SurveySample,
    w: &NormalizedWeights,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<ChainRun> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    if w.len() != sample.len() {
        return Err(Error::shape("weights and sample sizes differ"));
    }
    if prior.dim() != sample.dim() {
        return Err(Error::shape(format!(
            "prior has {} coefficients, model has {}",
            prior.dim(),
            sample.dim()
        )));
    }
    let target = Target {
        sample,
        w: w.as_slice(),
        prior,
    };
    let mut rng = rng::stream(cfg.seed, Purpose::Chain, chain as u64);
    let d = sample.dim();
    let init: Vec<f64> = (0..d).map(|_| rng.random_range(-0.1..0.1)).collect();
    let mut grad = vec![0.0; d];
    if !target.log_density_grad(&init, &mut grad).is_finite() {
        return Err(Error::InitFailure { chain });
    }
    let keep = cfg.draws_for_chain(chain);
    match cfg.algorithm {
        Algorithm::Hamiltonian => hmc_chain(&target, cfg, init, keep, &mut rng),
        Algorithm::AdaptiveRandomWalk => rwm_chain(&target, cfg, init, keep, &mut rng),
    }
}

struct Target<'a> {
    sample: &'a SurveySample,
    w: &'a [f64],
    prior: &'a PriorSpec,
}

impl Target<'_> {
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        model::accumulate_score(theta, self.sample, self.w, grad);
        model::unchecked_log_lik(theta, self.sample, self.w) + self.prior.log_density_grad(theta, grad)
    }

    /// Diagonal of the inverse negative Hessian of the log density at
    /// `theta`; the starting metric before any draws exist.
    fn curvature_scales(&self, theta: &[f64]) -> Vec<f64> {
        let d = theta.len();
        let mut info = model::information_unchecked(theta, self.sample, self.w);
        for j in 0..d {
            let s = self.prior.sd[j];
            info[(j, j)] += 1.0 / (s * s);
        }
        match linalg::spd_inverse(&info) {
            Ok(inv) => inv
                .diag()
                .into_iter()
                .map(|v| if v.is_finite() && v > 0.0 { v } else { 1.0 })
                .collect(),
            Err(_) => vec![1.0; d],
        }
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut scratch = vec![0.0; theta.len()];
        model::unchecked_log_lik(theta, self.sample, self.w)
            + self.prior.log_density_grad(theta, &mut scratch)
    }
}

struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    delta: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, delta: f64) -> Self {
        DualAveraging {
            mu: math::ln(10.0 * eps),
            log_eps: math::ln(eps),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            t: 0.0,
            delta,
        }
    }

    fn update(&mut self, accept_prob: f64) -> f64 {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.delta - accept_prob);
        self.log_eps = self.mu - math::sqrt(self.t) / Self::GAMMA * self.h_bar;
        let weight = math::powf(self.t, -Self::KAPPA);
        self.log_eps_bar = weight * self.log_eps + (1.0 - weight) * self.log_eps_bar;
        math::exp(self.log_eps)
    }

    fn final_step(&self) -> f64 {
        math::exp(self.log_eps_bar)
    }
}

const TARGET_ACCEPT: f64 = 0.8;
const MAX_LEAPFROG: usize = 1024;
const DIVERGENCE_ENERGY: f64 = 1000.0;

struct Leapfrog<'a, 't> {
    target: &'a Target<'t>,
    inv_metric: Vec<f64>,
}

struct Point {
    theta: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

impl Leapfrog<'_, '_> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
    }

    fn draw_momentum(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.inv_metric
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                z / math::sqrt(*m)
            })
            .collect()
    }

    /// Integrate `steps` leapfrog steps; returns the end point and momentum.
    fn integrate(&self, start: &Point, p0: &[f64], eps: f64, steps: usize) -> (Point, Vec<f64>) {
        let mut theta = start.theta.clone();
        let mut grad = start.grad.clone();
        let mut p = p0.to_vec();
        let mut lp = start.lp;
        for _ in 0..steps {
            for (pi, g) in p.iter_mut().zip(&grad) {
                *pi += 0.5 * eps * g;
            }
            for ((t, pi), m) in theta.iter_mut().zip(&p).zip(&self.inv_metric) {
                *t += eps * m * pi;
            }
            lp = self.target.log_density_grad(&theta, &mut grad);
            if !lp.is_finite() {
                break;
            }
            for (pi, g) in p.iter_mut().zip(&grad) {
                *pi += 0.5 * eps * g;
            }
        }
        (Point { theta, grad, lp }, p)
    }

    /// One transition. Returns `(accept_prob, divergent)`.
    fn transition(
        &self,
        current: &mut Point,
        eps: f64,
        steps: usize,
        rng: &mut StreamRng,
    ) -> (f64, bool) {
        let p0 = self.draw_momentum(rng);
        let h0 = -current.lp + self.kinetic(&p0);
        let (proposal, p1) = self.integrate(current, &p0, eps, steps);
        let h1 = -proposal.lp + self.kinetic(&p1);
        let delta = h1 - h0;
        if !delta.is_finite() || delta > DIVERGENCE_ENERGY {
            return (0.0, true);
        }
        let accept_prob = if delta <= 0.0 { 1.0 } else { math::exp(-delta) };
        let u: f64 = rng.random();
        if u < accept_prob {
            *current = proposal;
        }
        (accept_prob, false)
    }

    /// Double or halve `eps` until a single step's acceptance crosses 1/2.
    fn reasonable_step(&self, current: &Point, mut eps: f64, rng: &mut StreamRng) -> f64 {
        let log_accept = |eps: f64, rng: &mut StreamRng| -> f64 {
            let p0 = self.draw_momentum(rng);
            let h0 = -current.lp + self.kinetic(&p0);
            let (prop, p1) = self.integrate(current, &p0, eps, 1);
            let v = h0 - (-prop.lp + self.kinetic(&p1));
            if v.is_finite() { v } else { f64::NEG_INFINITY }
        };
        let half = math::ln(0.5);
        let up = log_accept(eps, rng) > half;
        for _ in 0..50 {
            let la = log_accept(eps, rng);
            if up && la <= half {
                break;
            }
            if !up && la > half {
                break;
            }
            eps = if up { eps * 2.0 } else { eps * 0.5 };
        }
        eps.clamp(1e-8, 1e3)
    }
}

fn steps_for(path_length: f64, eps: f64) -> usize {
    (math::ceil(path_length / eps) as usize).clamp(1, MAX_LEAPFROG)
}

/// Variance regularized toward 1e-3, as Stan does for its diagonal metric.
fn regularized_variances(window: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n = window.len() as f64;
    (0..d)
        .map(|j| {
            let col: Vec<f64> = window.iter().map(|t| t[j]).collect();
            let v = math::variance(&col);
            let v = if v.is_finite() && v > 0.0 { v } else { 1.0 };
            (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))
        })
        .collect()
}

fn hmc_chain(
    target: &Target<'_>,
    cfg: &SamplerConfig,
    init: Vec<f64>,
    keep: usize,
    rng: &mut StreamRng,
) -> Result<ChainRun> {
    let d = init.len();
    let mut grad = vec![0.0; d];
    let lp = target.log_density_grad(&init, &mut grad);
    let mut current = Point {
        theta: init,
        grad,
        lp,
    };
    let mut integrator = Leapfrog {
        target,
        inv_metric: target.curvature_scales(&current.theta),
    };

    let warmup = cfg.n_warmup;
    let metric_at = warmup / 2;
    let window_from = warmup / 5;
    let mut window: Vec<Vec<f64>> = Vec::with_capacity(metric_at - window_from);

    let mut eps = integrator.reasonable_step(&current, cfg.step_size, rng);
    let mut adapter = DualAveraging::new(eps, TARGET_ACCEPT);
    for it in 0..warmup {
        if it == metric_at {
            integrator.inv_metric = regularized_variances(&window, d);
            eps = integrator.reasonable_step(&current, eps, rng);
            adapter = DualAveraging::new(eps, TARGET_ACCEPT);
        }
        let steps = steps_for(cfg.path_length, eps);
        let (a, _) = integrator.transition(&mut current, eps, steps, rng);
        eps = adapter.update(a).clamp(1e-8, 1e3);
        if it >= window_from && it < metric_at {
            window.push(current.theta.clone());
        }
    }
    let eps = adapter.final_step();

    let mut draws = Matrix::zeros(keep, d);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    for i in 0..keep {
        // jitter the step so the fixed integration time cannot resonate
        let jittered = eps * rng.random_range(0.9..1.1);
        let steps = steps_for(cfg.path_length, jittered);
        let (a, divergent) = integrator.transition(&mut current, jittered, steps, rng);
        accept_sum += a;
        divergences += usize::from(divergent);
        draws.row_mut(i).copy_from_slice(&current.theta);
    }
    Ok(ChainRun {
        draws,
        mean_accept_prob: accept_sum / keep as f64,
        divergences,
        step_size: eps,
    })
}

const RWM_TARGET: f64 = 0.234;

fn rwm_chain(
    target: &Target<'_>,
    cfg: &SamplerConfig,
    init: Vec<f64>,
    keep: usize,
    rng: &mut StreamRng,
) -> Result<ChainRun> {
    let d = init.len();
    let base_scale = 2.38 / math::sqrt(d as f64);
    let mut log_scale = math::ln(base_scale);
    // proposal factor: delta = Rᵀ z with RᵀR = proposal covariance
    let mut factor = Matrix::identity(d).scaled(cfg.step_size);
    let mut theta = init;
    let mut lp = target.log_density(&theta);

    let warmup = cfg.n_warmup;
    let cov_at = warmup / 2;
    let window_from = warmup / 5;
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut since_reset = 0.0;

    let step = |theta: &mut Vec<f64>, lp: &mut f64, scale: f64, factor: &Matrix, rng: &mut StreamRng| -> f64 {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let mut prop = theta.clone();
        for (j, pj) in prop.iter_mut().enumerate() {
            let mut delta = 0.0;
            for (k, zk) in z.iter().enumerate().take(j + 1) {
                delta += factor[(k, j)] * zk;
            }
            *pj += scale * delta;
        }
        let plp = target.log_density(&prop);
        let accept_prob = if plp.is_finite() {
            let r = plp - *lp;
            if r >= 0.0 { 1.0 } else { math::exp(r) }
        } else {
            0.0
        };
        let u: f64 = rng.random();
        if u < accept_prob {
            *theta = prop;
            *lp = plp;
        }
        accept_prob
    };

    for it in 0..warmup {
        if it == cov_at && window.len() > d + 1 {
            let rows: Vec<f64> = window.iter().flatten().copied().collect();
            let cov = Matrix::from_row_major(window.len(), d, rows)?.sample_covariance();
            let mut ridge = cov.clone();
            for j in 0..d {
                ridge[(j, j)] += 1e-8 + 1e-6 * cov[(j, j)];
            }
            if let Ok(r) = linalg::cholesky(&ridge) {
                factor = r;
                log_scale = math::ln(base_scale);
                since_reset = 0.0;
            }
        }
        let a = step(&mut theta, &mut lp, math::exp(log_scale), &factor, rng);
        since_reset += 1.0;
        log_scale += (a - RWM_TARGET) / math::powf(since_reset + 1.0, 0.6);
        if it >= window_from && it < cov_at {
            window.push(theta.clone());
        }
    }

    let scale = math::exp(log_scale);
    let mut draws = Matrix::zeros(keep, d);
    let mut accept_sum = 0.0;
    for i in 0..keep {
        accept_sum += step(&mut theta, &mut lp, scale, &factor, rng);
        draws.row_mut(i).copy_from_slice(&theta);
    }
    Ok(ChainRun {
        draws,
        mean_accept_prob: accept_sum / keep as f64,
        divergences: 0,
        step_size: scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit_mle, normalize_weights, ParamVector};
    use rand::SeedableRng;

    fn logistic_data(n: usize, seed: u64) -> SurveySample {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(2 * n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = StandardNormal.sample(&mut rng);
            x.push(1.0);
            x.push(x1);
            let p = model::sigmoid(-0.5 + x1);
            y.push(u8::from(rng.random::<f64>() < p));
        }
        SurveySample::unclustered(y, Matrix::from_row_major(n, 2, x).unwrap(), vec![1.0; n]).unwrap()
    }

    fn normal_chain(rng: &mut StreamRng, n: usize, mu: f64) -> Matrix {
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                mu + z
            })
            .collect::<Vec<f64>>();
        Matrix::from_row_major(n, 1, data).unwrap()
    }

    #[test]
    fn constant_chains_give_nan_rhat() {
        let c = Matrix::from_row_major(10, 1, vec![3.0; 10]).unwrap();
        let d = diagnostics(&[c.clone(), c]).unwrap();
        assert!(d.rhat[0].is_nan());
        assert_eq!(d.health, Health::Warning);
        assert_eq!(d.accept_rate, 0.0);
    }

    #[test]
    fn rhat_for_mixed_and_separated_chains() {
        let mut rng = rng::stream(1, Purpose::Chain, 0);
        let a = normal_chain(&mut rng, 2000, 0.0);
        let b = normal_chain(&mut rng, 2000, 0.0);
        let d = diagnostics(&[a, b]).unwrap();
        assert!(d.rhat[0] < 1.02, "{}", d.rhat[0]);
        assert!(d.ess[0] > 3000.0, "{}", d.ess[0]);

        let a = normal_chain(&mut rng, 2000, 0.0);
        let b = normal_chain(&mut rng, 2000, 10.0);
        let d = diagnostics(&[a, b]).unwrap();
        assert!(d.rhat[0] > 2.0);
    }

    #[test]
    fn single_chain_is_rejected() {
        let c = Matrix::from_row_major(10, 1, vec![0.0; 10]).unwrap();
        assert_eq!(diagnostics(&[c]), Err(Error::InsufficientChains));
    }

    #[test]
    fn ess_of_ar1_chain_is_reduced() {
        // AR(1) with φ = 0.9 has ESS ≈ n (1 − φ)/(1 + φ)
        let mut rng = rng::stream(2, Purpose::Chain, 0);
        let mut chains = Vec::new();
        for _ in 0..4 {
            let mut x = 0.0;
            let mut data = Vec::new();
            for _ in 0..5000 {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = 0.9 * x + z;
                data.push(x);
            }
            chains.push(Matrix::from_row_major(5000, 1, data).unwrap());
        }
        let d = diagnostics(&chains).unwrap();
        let expect = 20000.0 * 0.1 / 1.9;
        assert!((d.ess[0] / expect - 1.0).abs() < 0.3, "{} vs {expect}", d.ess[0]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SamplerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.n_chains = 1;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg = SamplerConfig { n_draws: 50, ..SamplerConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = SamplerConfig { n_warmup: 10, ..SamplerConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uneven_split_across_chains() {
        let cfg = SamplerConfig { n_draws: 1003, ..SamplerConfig::default() };
        let per: Vec<usize> = (0..4).map(|c| cfg.draws_for_chain(c)).collect();
        assert_eq!(per, vec![251, 251, 251, 250]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = logistic_data(200, 5);
        let w = NormalizedWeights::unit(200);
        let prior = PriorSpec::weakly_informative(2);
        let cfg = SamplerConfig { n_draws: 400, n_warmup: 200, seed: 99, ..SamplerConfig::default() };
        let a = sample_pseudo_posterior(&s, &w, &prior, &cfg).unwrap();
        let b = sample_pseudo_posterior(&s, &w, &prior, &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        let cfg2 = SamplerConfig { seed: 100, ..cfg };
        let c = sample_pseudo_posterior(&s, &w, &prior, &cfg2).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    fn check_against_mle(algorithm: Algorithm) {
        let n = 5000;
        let s = logistic_data(n, 11);
        let w = NormalizedWeights::unit(n);
        let mle = fit_mle(&s, &w).unwrap();
        let prior = PriorSpec::isotropic(2, 100.0).unwrap();
        let cfg = SamplerConfig { seed: 3, algorithm, ..SamplerConfig::default() };
        let post = sample_pseudo_posterior(&s, &w, &prior, &cfg).unwrap();
        assert_ne!(post.status, FitStatus::DiagnosticsFailure);
        let mean = post.draws.mean();
        let sd = post.draws.sd();
        for j in 0..2 {
            let mcse = sd[j] / post.diagnostics.ess[j].sqrt();
            let gap = (mean[j] - mle.as_slice()[j]).abs();
            assert!(gap < 3.0 * mcse, "{algorithm:?} param {j}: gap {gap} vs mcse {mcse}");
            assert!(post.diagnostics.rhat[j] < 1.05);
        }
    }

    #[test]
    fn hmc_posterior_mean_matches_mle() {
        check_against_mle(Algorithm::Hamiltonian);
    }

    #[test]
    fn random_walk_posterior_mean_matches_mle() {
        check_against_mle(Algorithm::AdaptiveRandomWalk);
    }

    #[test]
    fn weighted_target_with_unit_weights_is_plain_posterior() {
        let s = logistic_data(50, 8);
        let raw = vec![2.5; 50];
        let w = normalize_weights(&raw, 50).unwrap();
        let prior = PriorSpec::weakly_informative(2);
        let weighted = Target { sample: &s, w: w.as_slice(), prior: &prior };
        let unit = NormalizedWeights::unit(50);
        let plain = Target { sample: &s, w: unit.as_slice(), prior: &prior };
        for t in [[0.0, 0.0], [0.3, -1.2], [-2.0, 4.0]] {
            assert_eq!(weighted.log_density(&t), plain.log_density(&t));
        }
        let theta = ParamVector::new(vec![0.3, -1.2]).unwrap();
        assert_eq!(
            model::log_pseudo_likelihood(&theta, &s, &w).unwrap(),
            model::log_pseudo_likelihood(&theta, &s, &unit).unwrap()
        );
    }

    #[test]
    fn init_failure_on_nonfinite_density() {
        let x = Matrix::from_rows(&[[f64::MAX], [f64::MAX]]).unwrap();
        // finite covariates whose products overflow
        let s = SurveySample::unclustered(vec![1, 0], x, vec![1.0, 1.0]).unwrap();
        let prior = PriorSpec::isotropic(1, 1e-300).unwrap();
        let cfg = SamplerConfig { n_draws: 100, n_warmup: 100, ..SamplerConfig::default() };
        let r = run_chain(&s, &NormalizedWeights::unit(2), &prior, &cfg, 0);
        assert_eq!(r.err(), Some(Error::InitFailure { chain: 0 }));
    }
}
