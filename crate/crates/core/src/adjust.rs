//! Replicate-based covariance correction of pseudo-posterior draws.
//!
//! Each replicate keeps half of the PSUs in every stratum (without
//! replacement), scales the retained weights up to compensate, renormalizes
//! them to the full sample size and evaluates the weighted score and Hessian
//! at the posterior mean. The mean of the negated Hessians estimates `H`; the
//! covariance of the scores estimates `J^π`. Draws are then projected with
//! `θᵃ = (θ − θ̄) R2⁻¹ R1 + θ̄`, where `R1ᵀR1 = H⁻¹JH⁻¹` and `R2ᵀR2 = H⁻¹`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::linalg::{self, Matrix};
use crate::model::{self, NormalizedWeights, ParamVector, SurveySample};
use crate::rng::{self, Purpose};
use crate::sampler::DrawsMatrix;
use crate::{Error, Result};

pub use crate::linalg::cholesky;

/// Where `Ĥ` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianSource {
    /// Average of the replicate information matrices.
    #[default]
    ReplicateMean,
    /// Weighted information of the full sample at `θ̄`.
    PlugIn,
}

impl core::str::FromStr for HessianSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "replicate-mean" | "replicate" => Ok(HessianSource::ReplicateMean),
            "plug-in" | "plugin" => Ok(HessianSource::PlugIn),
            other => Err(Error::config(format!(
                "unknown Hessian source '{other}' (expected replicate-mean or plug-in)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateConfig {
    pub replicates: usize,
    pub seed: u64,
    pub hessian: HessianSource,
}

impl ReplicateConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        ReplicateConfig {
            replicates,
            seed,
            hessian: HessianSource::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::config("at least two replicates are required"));
        }
        Ok(())
    }
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        ReplicateConfig::new(100, 0)
    }
}

/// Units grouped by stratum and PSU, in ascending id order.
#[derive(Debug, Clone)]
pub struct PsuLayout {
    strata: Vec<(u32, Vec<Vec<usize>>)>,
}

impl PsuLayout {
    /// Group the sample's units; every stratum needs two or more PSUs.
    pub fn of(sample: &SurveySample) -> Result<Self> {
        let mut map: BTreeMap<u32, BTreeMap<u32, Vec<usize>>> = BTreeMap::new();
        for (i, (&h, &j)) in sample.stratum().iter().zip(sample.psu()).enumerate() {
            map.entry(h).or_default().entry(j).or_default().push(i);
        }
        let strata: Vec<(u32, Vec<Vec<usize>>)> = map
            .into_iter()
            .map(|(h, psus)| (h, psus.into_values().collect()))
            .collect();
        if let Some((h, _)) = strata.iter().find(|(_, p)| p.len() < 2) {
            return Err(Error::SingletonStratum { stratum: *h });
        }
        Ok(PsuLayout { strata })
    }

    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }

    /// PSU count per stratum, in stratum order.
    pub fn psu_counts(&self) -> Vec<usize> {
        self.strata.iter().map(|(_, p)| p.len()).collect()
    }

    /// PSUs kept per stratum in each replicate: `⌊J/2⌋`, at least one.
    pub fn kept(psus: usize) -> usize {
        (psus / 2).max(1)
    }

    /// Unit indices and renormalized weights of one replicate.
    fn draw<R: Rng + ?Sized>(&self, sample: &SurveySample, rng: &mut R) -> (Vec<usize>, Vec<f64>) {
        let mut units = Vec::with_capacity(sample.len() / 2 + 1);
        let mut raw = Vec::with_capacity(sample.len() / 2 + 1);
        for (_, psus) in &self.strata {
            let total = psus.len();
            let keep = Self::kept(total);
            let factor = total as f64 / keep as f64;
            let mut chosen = index::sample(rng, total, keep).into_vec();
            chosen.sort_unstable();
            for j in chosen {
                for &i in &psus[j] {
                    units.push(i);
                    raw.push(sample.weight()[i] * factor);
                }
            }
        }
        let scale = sample.len() as f64 / raw.iter().sum::<f64>();
        raw.iter_mut().for_each(|w| *w *= scale);
        (units, raw)
    }
}

/// One half-sample replicate. The returned weights are already rescaled to
/// sum to the ORIGINAL sample size.
pub fn resample_replicate<R: Rng + ?Sized>(sample: &SurveySample, rng: &mut R) -> Result<SurveySample> {
    let layout = PsuLayout::of(sample)?;
    let (units, weights) = layout.draw(sample, rng);
    Ok(sample.subset(&units, weights))
}

/// Score and information of a single replicate at `θ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateStat {
    pub information: Matrix,
    pub score: Vec<f64>,
}

/// Evaluate replicate `index` on its own stream `(cfg.seed, index)`.
pub fn replicate_statistic(
    sample: &SurveySample,
    layout: &PsuLayout,
    theta_bar: &ParamVector,
    cfg: &ReplicateConfig,
    index: usize,
) -> Result<ReplicateStat> {
    let mut rng = rng::stream(cfg.seed, Purpose::Replicate, index as u64);
    let (units, weights) = layout.draw(sample, &mut rng);
    let w = NormalizedWeights::scaled_to(&weights, sample.len() as f64)?;
    let rep = sample.subset(&units, weights);
    let information = model::information(theta_bar, &rep, &w)?;
    let score = model::score(theta_bar, &rep, &w)?;
    if !information.is_finite() || score.iter().any(|s| !s.is_finite()) {
        return Err(Error::ReplicateFailure { index });
    }
    Ok(ReplicateStat { information, score })
}

/// `Ĥ`, `Ĵ^π` and the two Cholesky factors used by the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichEstimates {
    h_hat: Matrix,
    j_hat: Matrix,
    h_inv: Matrix,
    sandwich: Matrix,
    r1: Matrix,
    r2: Matrix,
}

impl SandwichEstimates {
    /// Build from `Ĥ` (symmetric positive definite) and `Ĵ` (symmetric
    /// positive semidefinite).
    pub fn from_parts(h_hat: Matrix, j_hat: Matrix) -> Result<Self> {
        if !h_hat.is_square() || h_hat.rows() != j_hat.rows() || !j_hat.is_square() {
            return Err(Error::shape("H and J must be square and of equal size"));
        }
        if !h_hat.is_finite() || !j_hat.is_finite() {
            return Err(Error::InvalidData("H or J has non-finite entries".into()));
        }
        if h_hat.asymmetry() > 1e-10 || j_hat.asymmetry() > 1e-10 {
            return Err(Error::InvalidData("H and J must be symmetric".into()));
        }
        let h_inv = linalg::spd_inverse(&h_hat).map_err(|e| match e {
            Error::NonPdMatrix { pivot } => Error::NonPdHessian { pivot },
            other => other,
        })?;
        let mut sandwich = h_inv.matmul(&j_hat)?.matmul(&h_inv)?;
        linalg::symmetrize(&mut sandwich);
        let r1 = linalg::cholesky_semidefinite(&sandwich)?;
        let r2 = cholesky(&h_inv).map_err(|e| match e {
            Error::NonPdMatrix { pivot } => Error::NonPdHessian { pivot },
            other => other,
        })?;
        Ok(SandwichEstimates {
            h_hat,
            j_hat,
            h_inv,
            sandwich,
            r1,
            r2,
        })
    }

    pub fn dim(&self) -> usize {
        self.h_hat.rows()
    }

    pub fn h_hat(&self) -> &Matrix {
        &self.h_hat
    }

    pub fn j_hat(&self) -> &Matrix {
        &self.j_hat
    }

    /// `Ĥ⁻¹`
    pub fn h_inv(&self) -> &Matrix {
        &self.h_inv
    }

    /// `Ĥ⁻¹ Ĵ Ĥ⁻¹`
    pub fn sandwich(&self) -> &Matrix {
        &self.sandwich
    }

    pub fn r1(&self) -> &Matrix {
        &self.r1
    }

    pub fn r2(&self) -> &Matrix {
        &self.r2
    }

    /// The right-multiplier `R2⁻¹ R1` applied to centered draws.
    pub fn projection(&self) -> Result<Matrix> {
        linalg::upper_triangular_inverse(&self.r2)?.matmul(&self.r1)
    }
}

/// Combine replicate statistics (in replicate order) into sandwich estimates.
pub fn combine_replicates(
    sample: &SurveySample,
    theta_bar: &ParamVector,
    stats: &[ReplicateStat],
    source: HessianSource,
) -> Result<SandwichEstimates> {
    let r = stats.len();
    if r < 2 {
        return Err(Error::config("at least two replicates are required"));
    }
    let d = theta_bar.dim();
    let h_hat = match source {
        HessianSource::ReplicateMean => {
            let mut h = Matrix::zeros(d, d);
            for s in stats {
                h = h.add(&s.information)?;
            }
            h.scaled(1.0 / r as f64)
        }
        HessianSource::PlugIn => {
            let w = model::normalize_weights(sample.weight(), sample.len())?;
            model::information(theta_bar, sample, &w)?
        }
    };
    let mut mean = vec![0.0; d];
    for s in stats {
        for (m, v) in mean.iter_mut().zip(&s.score) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r as f64);
    let mut j_hat = Matrix::zeros(d, d);
    for s in stats {
        for a in 0..d {
            let da = s.score[a] - mean[a];
            for b in 0..=a {
                j_hat[(a, b)] += da * (s.score[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = j_hat[(a, b)] / (r as f64 - 1.0);
            j_hat[(a, b)] = v;
            j_hat[(b, a)] = v;
        }
    }
    SandwichEstimates::from_parts(h_hat, j_hat)
}

/// Run all replicates serially and combine them.
pub fn estimate_hj(
    sample: &SurveySample,
    theta_bar: &ParamVector,
    cfg: &ReplicateConfig,
) -> Result<SandwichEstimates> {
    cfg.validate()?;
    if theta_bar.dim() != sample.dim() {
        return Err(Error::shape("theta_bar and covariate dimensions differ"));
    }
    let layout = PsuLayout::of(sample)?;
    let stats = (0..cfg.replicates)
        .map(|r| replicate_statistic(sample, &layout, theta_bar, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    combine_replicates(sample, theta_bar, &stats, cfg.hessian)
}

/// Project draws onto the sandwich covariance, keeping their mean.
pub fn adjust_draws(draws: &DrawsMatrix, est: &SandwichEstimates) -> Result<DrawsMatrix> {
    if draws.dim() != est.dim() {
        return Err(Error::shape(format!(
            "draws have {} parameters, estimates have {}",
            draws.dim(),
            est.dim()
        )));
    }
    let a = est.projection()?;
    let mean = draws.mean();
    let d = draws.dim();
    let mut out = Matrix::zeros(draws.len(), d);
    let mut centered = vec![0.0; d];
    for (i, row) in draws.matrix().row_iter().enumerate() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        let dst = out.row_mut(i);
        for (j, o) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, c) in centered.iter().enumerate() {
                acc += c * a[(k, j)];
            }
            *o = acc + mean[j];
        }
    }
    DrawsMatrix::new(out, draws.names().to_vec())
}

/// `diag(Ĥ⁻¹ĴĤ⁻¹) / diag(Ĥ⁻¹)`.
pub fn deff_params(est: &SandwichEstimates) -> Vec<f64> {
    est.sandwich
        .diag()
        .iter()
        .zip(est.h_inv.diag())
        .map(|(s, h)| s / h)
        .collect()
}

/// Design effect of the weighted (Hájek) mean of `y`.
///
/// Numerator: with-replacement, between-PSU linearization variance within
/// strata. Denominator: weighted estimate of the element variance over `n`.
pub fn deff_mean(sample: &SurveySample) -> Result<f64> {
    let layout = PsuLayout::of(sample)?;
    let w = sample.weight();
    let y: Vec<f64> = sample.y().iter().map(|&v| f64::from(v)).collect();
    let n = sample.len() as f64;
    let w_sum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / w_sum;

    let mut design_var = 0.0;
    for (_, psus) in &layout.strata {
        let totals: Vec<f64> = psus
            .iter()
            .map(|units| units.iter().map(|&i| w[i] * (y[i] - ybar) / w_sum).sum())
            .collect();
        let jk = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / jk;
        let ss: f64 = totals.iter().map(|t| (t - mean) * (t - mean)).sum();
        design_var += jk / (jk - 1.0) * ss;
    }

    let element_var = y.iter().zip(w).map(|(y, w)| w * (y - ybar) * (y - ybar)).sum::<f64>() / w_sum
        * n
        / (n - 1.0);
    if element_var <= 0.0 {
        return Err(Error::Domain("outcome is constant; design effect of the mean is undefined".into()));
    }
    Ok(design_var / (element_var / n))
}
