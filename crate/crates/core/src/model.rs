//! Weighted logistic pseudo-likelihood.
//!
//! Each unit's log-likelihood contribution is multiplied by its normalized
//! sampling weight `w*_i`, with the weights scaled to sum to the sample size.
//! The score and Hessian are analytic.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, Matrix};
use crate::math;
use crate::{Error, Result};

/// Observed survey microdata.
///
/// `x` carries the intercept as an explicit leading column of ones when the
/// model has one; nothing here treats it specially.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveySample {
    y: Vec<u8>,
    x: Matrix,
    weight: Vec<f64>,
    stratum: Vec<u32>,
    psu: Vec<u32>,
    names: Vec<String>,
}

impl SurveySample {
    pub fn new(
        y: Vec<u8>,
        x: Matrix,
        weight: Vec<f64>,
        stratum: Vec<u32>,
        psu: Vec<u32>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if x.cols() == 0 {
            return Err(Error::shape("covariate matrix has no columns"));
        }
        if x.rows() != n || weight.len() != n || stratum.len() != n || psu.len() != n {
            return Err(Error::shape(format!(
                "unit count mismatch: y={n}, X rows={}, weight={}, stratum={}, psu={}",
                x.rows(),
                weight.len(),
                stratum.len(),
                psu.len()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!("outcome at unit {i} is not 0/1")));
        }
        if !x.is_finite() {
            return Err(Error::InvalidData("covariates contain non-finite entries".into()));
        }
        check_weights(&weight)?;
        let names = (0..x.cols()).map(|j| format!("theta{j}")).collect();
        Ok(SurveySample {
            y,
            x,
            weight,
            stratum,
            psu,
            names,
        })
    }

    /// Single stratum, every unit its own PSU.
    pub fn unclustered(y: Vec<u8>, x: Matrix, weight: Vec<f64>) -> Result<Self> {
        let n = y.len();
        SurveySample::new(y, x, weight, vec![0; n], (0..n as u32).collect())
    }

    /// Replace the parameter labels (one per covariate column).
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::shape("one name per covariate column is required"));
        }
        self.names = names;
        Ok(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn stratum(&self) -> &[u32] {
        &self.stratum
    }

    pub fn psu(&self) -> &[u32] {
        &self.psu
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of distinct `(stratum, psu)` pairs.
    pub fn psu_count(&self) -> usize {
        self.stratum
            .iter()
            .zip(&self.psu)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Sub-sample of the given units with replacement weights.
    pub(crate) fn subset(&self, units: &[usize], weight: Vec<f64>) -> SurveySample {
        let d = self.dim();
        let mut data = Vec::with_capacity(units.len() * d);
        for &i in units {
            data.extend_from_slice(self.x.row(i));
        }
        SurveySample {
            y: units.iter().map(|&i| self.y[i]).collect(),
            x: Matrix::from_row_major(units.len(), d, data).expect("row-major buffer sized above"),
            weight,
            stratum: units.iter().map(|&i| self.stratum[i]).collect(),
            psu: units.iter().map(|&i| self.psu[i]).collect(),
            names: self.names.clone(),
        }
    }
}

fn check_weights(raw: &[f64]) -> Result<()> {
    match raw.iter().position(|&w| !(w.is_finite() && w > 0.0)) {
        Some(index) => Err(Error::InvalidWeight {
            index,
            value: raw[index],
        }),
        None => Ok(()),
    }
}

/// Model coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::EmptyInput);
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidData("parameter vector has non-finite entries".into()));
        }
        Ok(ParamVector(theta))
    }

    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Weights rescaled to a fixed total (the sample size, for a full sample).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWeights(Vec<f64>);

impl NormalizedWeights {
    /// Rescale positive `raw` weights so they sum to `total`.
    pub fn scaled_to(raw: &[f64], total: f64) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_weights(raw)?;
        let sum: f64 = raw.iter().sum();
        let factor = total / sum;
        Ok(NormalizedWeights(raw.iter().map(|w| w * factor).collect()))
    }

    /// All-ones weights: the ordinary unweighted likelihood.
    pub fn unit(n: usize) -> Self {
        NormalizedWeights(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// `w*_i = raw_i · n / Σ raw`.
pub fn normalize_weights(raw: &[f64], n: usize) -> Result<NormalizedWeights> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    if raw.len() != n {
        return Err(Error::shape(format!(
            "{} weights supplied for {n} units",
            raw.len()
        )));
    }
    NormalizedWeights::scaled_to(raw, n as f64)
}

/// Binary-response link. Only the logistic link is wired up; the trait keeps
/// the likelihood code independent of the link's formulas.
trait BinaryLink {
    fn log_lik(y: u8, eta: f64) -> f64;
    /// d log-lik / d eta
    fn dlog_lik(y: u8, eta: f64) -> f64;
    /// −d² log-lik / d eta²
    fn neg_d2log_lik(y: u8, eta: f64) -> f64;
}

struct Logistic;

impl BinaryLink for Logistic {
    #[inline]
    fn log_lik(y: u8, eta: f64) -> f64 {
        if y == 1 {
            log_sigmoid(eta)
        } else {
            log_sigmoid(-eta)
        }
    }

    #[inline]
    fn dlog_lik(y: u8, eta: f64) -> f64 {
        f64::from(y) - sigmoid(eta)
    }

    #[inline]
    fn neg_d2log_lik(_y: u8, eta: f64) -> f64 {
        let p = sigmoid(eta);
        p * (1.0 - p)
    }
}

/// Logistic function, evaluated without overflow.
#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + math::exp(-eta))
    } else {
        let e = math::exp(eta);
        e / (1.0 + e)
    }
}

/// `log σ(eta)` via `log1p`, never evaluating `log(0)`.
#[inline]
pub fn log_sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        -math::ln_1p(math::exp(-eta))
    } else {
        eta - math::ln_1p(math::exp(eta))
    }
}

fn check_dims(theta: &ParamVector, sample: &SurveySample, w: &NormalizedWeights) -> Result<()> {
    if theta.dim() != sample.dim() {
        return Err(Error::shape(format!(
            "theta has {} entries, covariates have {} columns",
            theta.dim(),
            sample.dim()
        )));
    }
    if w.len() != sample.len() {
        return Err(Error::shape(format!(
            "{} weights for {} units",
            w.len(),
            sample.len()
        )));
    }
    Ok(())
}

#[inline]
fn linear_predictor(row: &[f64], theta: &[f64]) -> f64 {
    row.iter().zip(theta).map(|(x, t)| x * t).sum()
}

/// `Σ w*_i [y_i log p_i + (1 − y_i) log(1 − p_i)]`.
pub fn log_pseudo_likelihood(
    theta: &ParamVector,
    sample: &SurveySample,
    w: &NormalizedWeights,
) -> Result<f64> {
    check_dims(theta, sample, w)?;
    Ok(unchecked_log_lik(theta.as_slice(), sample, w.as_slice()))
}

/// `Σ w*_i (y_i − p_i) x_i`.
pub fn score(theta: &ParamVector, sample: &SurveySample, w: &NormalizedWeights) -> Result<Vec<f64>> {
    check_dims(theta, sample, w)?;
    let mut g = vec![0.0; sample.dim()];
    accumulate_score(theta.as_slice(), sample, w.as_slice(), &mut g);
    Ok(g)
}

/// `−Σ w*_i p_i (1 − p_i) x_i x_iᵀ`, exactly symmetric.
pub fn hessian(theta: &ParamVector, sample: &SurveySample, w: &NormalizedWeights) -> Result<Matrix> {
    check_dims(theta, sample, w)?;
    let mut h = neg_hessian_raw(theta.as_slice(), sample, w.as_slice());
    for v in h.iter_mut() {
        *v = -*v;
    }
    let d = sample.dim();
    let mut m = Matrix::zeros(d, d);
    fill_symmetric(&mut m, &h);
    Ok(m)
}

/// Negated Hessian, the observed information.
pub fn information(
    theta: &ParamVector,
    sample: &SurveySample,
    w: &NormalizedWeights,
) -> Result<Matrix> {
    check_dims(theta, sample, w)?;
    Ok(information_unchecked(theta.as_slice(), sample, w.as_slice()))
}

pub(crate) fn information_unchecked(theta: &[f64], sample: &SurveySample, w: &[f64]) -> Matrix {
    let h = neg_hessian_raw(theta, sample, w);
    let d = sample.dim();
    let mut m = Matrix::zeros(d, d);
    fill_symmetric(&mut m, &h);
    m
}

pub(crate) fn unchecked_log_lik(theta: &[f64], sample: &SurveySample, w: &[f64]) -> f64 {
    sample
        .x
        .row_iter()
        .zip(&sample.y)
        .zip(w)
        .map(|((row, &y), &wi)| wi * Logistic::log_lik(y, linear_predictor(row, theta)))
        .sum()
}

pub(crate) fn accumulate_score(theta: &[f64], sample: &SurveySample, w: &[f64], g: &mut [f64]) {
    for ((row, &y), &wi) in sample.x.row_iter().zip(&sample.y).zip(w) {
        let r = wi * Logistic::dlog_lik(y, linear_predictor(row, theta));
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
}

/// Lower triangle (packed row by row) of `Σ w_i p_i(1−p_i) x_i x_iᵀ`.
fn neg_hessian_raw(theta: &[f64], sample: &SurveySample, w: &[f64]) -> Vec<f64> {
    let d = sample.dim();
    let mut packed = vec![0.0; d * (d + 1) / 2];
    for ((row, &y), &wi) in sample.x.row_iter().zip(&sample.y).zip(w) {
        let c = wi * Logistic::neg_d2log_lik(y, linear_predictor(row, theta));
        let mut k = 0;
        for i in 0..d {
            let ci = c * row[i];
            for xj in &row[..=i] {
                packed[k] += ci * xj;
                k += 1;
            }
        }
    }
    packed
}

fn fill_symmetric(m: &mut Matrix, packed: &[f64]) {
    let mut k = 0;
    for i in 0..m.rows() {
        for j in 0..=i {
            m[(i, j)] = packed[k];
            m[(j, i)] = packed[k];
            k += 1;
        }
    }
}

/// Newton–Raphson maximizer of the weighted log-likelihood, with step
/// halving. Used for population "truth" fits and for starting points.
pub fn fit_mle(sample: &SurveySample, w: &NormalizedWeights) -> Result<ParamVector> {
    let d = sample.dim();
    let mut theta = ParamVector::zeros(d);
    let mut ll = log_pseudo_likelihood(&theta, sample, w)?;
    for _ in 0..100 {
        let g = score(&theta, sample, w)?;
        let info = information(&theta, sample, w)?;
        let inv = linalg::spd_inverse(&info).map_err(|_| {
            Error::InvalidData("information matrix is singular; covariates are collinear or outcome is separable".into())
        })?;
        let step = inv.mat_vec(&g)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = theta
                .as_slice()
                .iter()
                .zip(&step)
                .map(|(t, s)| t + scale * s)
                .collect();
            let cand = ParamVector(cand);
            let cll = unchecked_log_lik(cand.as_slice(), sample, w.as_slice());
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs() {
                theta = cand;
                ll = cll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let size = step.iter().map(|s| s.abs()).fold(0.0, f64::max) * scale;
        if !accepted || size < 1e-10 {
            break;
        }
    }
    if theta.as_slice().iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidData("Newton iterations diverged".into()));
    }
    Ok(theta)
}
