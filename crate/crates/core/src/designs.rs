//! Simulation populations and sampling designs.
//!
//! Three population families share one logistic outcome model with
//! different linear predictors:
//!
//! | family      | predictor                                   | structure                      |
//! |-------------|---------------------------------------------|--------------------------------|
//! | DE1, DE5    | `0 + x1`                                    | clusters of 5                  |
//! | PPS1, SPPS1 | `−1.88 + x1 + 0.5 x2`                       | none                           |
//! | PPS3, SPPS3 | `−1.88 + x1 + 0.25 x2 + 0.25 z2`            | PSUs of 10 households × 3      |
//!
//! `x1 ~ N(0, 1)`, `x2 ~ Exp(rate 1/5)` and the PSU effect `z2 ~ Exp(1/5)`.
//! The selection size is `x̃2 = x2 − min(x2) + 1`. The analysis model is
//! always `y ~ 1 + x1`; `x2` and `z2` are never seen by the analyst.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::linalg::Matrix;
use crate::model::{self, NormalizedWeights, ParamVector, SurveySample};
use crate::{Error, Result};

pub const CLUSTER_SIZE: usize = 5;
pub const STRATA: usize = 10;
pub const HOUSEHOLDS_PER_PSU: usize = 10;
pub const PERSONS_PER_HOUSEHOLD: usize = 3;
pub const UNITS_PER_PSU: usize = HOUSEHOLDS_PER_PSU * PERSONS_PER_HOUSEHOLD;
pub const HOUSEHOLDS_SAMPLED: usize = 5;

const EXP_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    De1,
    De5,
    Pps1,
    Spps1,
    Pps3,
    Spps3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    EqualProbability,
    OneStage,
    ThreeStage,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::De1,
        Scenario::De5,
        Scenario::Pps1,
        Scenario::Spps1,
        Scenario::Pps3,
        Scenario::Spps3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::De1 => "DE1",
            Scenario::De5 => "DE5",
            Scenario::Pps1 => "PPS1",
            Scenario::Spps1 => "SPPS1",
            Scenario::Pps3 => "PPS3",
            Scenario::Spps3 => "SPPS3",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Scenario::De1 | Scenario::De5 => Family::EqualProbability,
            Scenario::Pps1 | Scenario::Spps1 => Family::OneStage,
            Scenario::Pps3 | Scenario::Spps3 => Family::ThreeStage,
        }
    }

    /// Population size used in the reference simulation study.
    pub fn default_population_size(self) -> usize {
        match self.family() {
            Family::EqualProbability | Family::OneStage => 5000,
            Family::ThreeStage => 6000,
        }
    }

    pub fn valid_names() -> String {
        Scenario::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|sc| sc.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown scenario '{s}'; valid names are {}",
                    Scenario::valid_names()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub population_size: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub realizations: usize,
    pub replicates: usize,
}

impl ScenarioConfig {
    /// Reference settings: n = 200, 100 realizations, 100 replicates.
    pub fn reference(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            population_size: scenario.default_population_size(),
            sample_size: 200,
            seed: 0,
            realizations: 100,
            replicates: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let big_n = self.population_size;
        let n = self.sample_size;
        let name = self.scenario.name();
        let fail = |why: &str| Err(Error::config(format!("{name} with N={big_n}, n={n}: {why}")));
        if n == 0 || n > big_n {
            return fail("need 0 < n <= N");
        }
        if self.replicates < 2 {
            return fail("need at least two replicates");
        }
        if self.realizations == 0 {
            return fail("need at least one realization");
        }
        match self.scenario {
            Scenario::De1 | Scenario::De5 => {
                if !big_n.is_multiple_of(CLUSTER_SIZE) || !n.is_multiple_of(CLUSTER_SIZE) {
                    return fail("N and n must be multiples of the cluster size 5");
                }
            }
            Scenario::Pps1 => {}
            Scenario::Spps1 => {
                if !big_n.is_multiple_of(STRATA) || !n.is_multiple_of(STRATA) {
                    return fail("N and n must be multiples of the 10 strata");
                }
                if n / STRATA < 1 {
                    return fail("each stratum needs at least one unit");
                }
            }
            Scenario::Pps3 | Scenario::Spps3 => {
                if !big_n.is_multiple_of(UNITS_PER_PSU) {
                    return fail("N must be a multiple of 30 (10 households of 3 per PSU)");
                }
                if !n.is_multiple_of(HOUSEHOLDS_SAMPLED) {
                    return fail("n must be a multiple of 5 (5 households per sampled PSU)");
                }
                let psus = big_n / UNITS_PER_PSU;
                let sampled = n / HOUSEHOLDS_SAMPLED;
                if sampled > psus {
                    return fail("more PSUs requested than exist");
                }
                if self.scenario == Scenario::Spps3 && (!psus.is_multiple_of(STRATA) || !sampled.is_multiple_of(STRATA)) {
                    return fail("PSU count and sampled PSU count must be multiples of 10");
                }
            }
        }
        Ok(())
    }
}

/// A finite population.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub y: Vec<u8>,
    pub x1: Vec<f64>,
    /// Size driver `x2` (one-stage and three-stage families).
    pub x2: Option<Vec<f64>>,
    /// Selection size `x̃2 = x2 − min(x2) + 1`.
    pub size: Option<Vec<f64>>,
    /// PSU-level effect, one entry per PSU (three-stage family).
    pub z2: Option<Vec<f64>>,
    /// Cluster / PSU label of each unit.
    pub cluster: Vec<u32>,
    /// Global household label (three-stage family).
    pub household: Option<Vec<u32>>,
    pub mu: Vec<f64>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Census fit of the analysis model `y ~ 1 + x1`: the inferential
    /// target for every design.
    pub fn census_fit(&self) -> Result<ParamVector> {
        let units: Vec<usize> = (0..self.len()).collect();
        let sample = self.analysis_sample(&units, vec![1.0; self.len()], vec![0; self.len()], self.cluster.clone())?;
        model::fit_mle(&sample, &NormalizedWeights::unit(self.len()))
    }

    fn sizes(&self) -> Result<&[f64]> {
        self.size
            .as_deref()
            .ok_or_else(|| Error::config("population has no size measure"))
    }

    fn analysis_sample(
        &self,
        units: &[usize],
        weight: Vec<f64>,
        stratum: Vec<u32>,
        psu: Vec<u32>,
    ) -> Result<SurveySample> {
        let mut x = Vec::with_capacity(units.len() * 2);
        for &i in units {
            x.push(1.0);
            x.push(self.x1[i]);
        }
        let y = units.iter().map(|&i| self.y[i]).collect();
        SurveySample::new(y, Matrix::from_row_major(units.len(), 2, x)?, weight, stratum, psu)?
            .with_names(vec!["intercept".to_string(), "x1".to_string()])
    }
}

/// Draw the population for `cfg.scenario`.
pub fn generate_population<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Population> {
    cfg.validate()?;
    let big_n = cfg.population_size;
    let exp = Exp::new(EXP_RATE).expect("positive rate");
    let bern = |rng: &mut R, mu: f64| u8::from(rng.random::<f64>() < model::sigmoid(mu));
    match cfg.scenario {
        Scenario::De1 => {
            let x1: Vec<f64> = (0..big_n).map(|_| StandardNormal.sample(rng)).collect();
            let mu = x1.clone();
            let y = mu.iter().map(|&m| bern(rng, m)).collect();
            Ok(Population {
                y,
                x1,
                x2: None,
                size: None,
                z2: None,
                cluster: (0..big_n).map(|i| (i / CLUSTER_SIZE) as u32).collect(),
                household: None,
                mu,
            })
        }
        Scenario::De5 => {
            let clusters = big_n / CLUSTER_SIZE;
            let mut x1 = Vec::with_capacity(big_n);
            let mut y = Vec::with_capacity(big_n);
            for _ in 0..clusters {
                let xc: f64 = StandardNormal.sample(rng);
                let yc = bern(rng, xc);
                x1.extend(core::iter::repeat_n(xc, CLUSTER_SIZE));
                y.extend(core::iter::repeat_n(yc, CLUSTER_SIZE));
            }
            Ok(Population {
                y,
                mu: x1.clone(),
                x1,
                x2: None,
                size: None,
                z2: None,
                cluster: (0..big_n).map(|i| (i / CLUSTER_SIZE) as u32).collect(),
                household: None,
            })
        }
        Scenario::Pps1 | Scenario::Spps1 => {
            let mut x1 = Vec::with_capacity(big_n);
            let mut x2 = Vec::with_capacity(big_n);
            for _ in 0..big_n {
                x1.push(StandardNormal.sample(rng));
                x2.push(exp.sample(rng));
            }
            let mu: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| -1.88 + a + 0.5 * b).collect();
            let y = mu.iter().map(|&m| bern(rng, m)).collect();
            let size = size_measure(&x2);
            Ok(Population {
                y,
                x1,
                x2: Some(x2),
                size: Some(size),
                z2: None,
                cluster: (0..big_n as u32).collect(),
                household: None,
                mu,
            })
        }
        Scenario::Pps3 | Scenario::Spps3 => {
            let psus = big_n / UNITS_PER_PSU;
            let z2: Vec<f64> = (0..psus).map(|_| exp.sample(rng)).collect();
            let mut x1 = Vec::with_capacity(big_n);
            let mut x2 = Vec::with_capacity(big_n);
            for _ in 0..big_n {
                x1.push(StandardNormal.sample(rng));
                x2.push(exp.sample(rng));
            }
            let cluster: Vec<u32> = (0..big_n).map(|i| (i / UNITS_PER_PSU) as u32).collect();
            let mu: Vec<f64> = (0..big_n)
                .map(|i| -1.88 + x1[i] + 0.25 * x2[i] + 0.25 * z2[cluster[i] as usize])
                .collect();
            let y = mu.iter().map(|&m| bern(rng, m)).collect();
            let size = size_measure(&x2);
            Ok(Population {
                y,
                x1,
                x2: Some(x2),
                size: Some(size),
                z2: Some(z2),
                cluster,
                household: Some((0..big_n).map(|i| (i / PERSONS_PER_HOUSEHOLD) as u32).collect()),
                mu,
            })
        }
    }
}

fn size_measure(x2: &[f64]) -> Vec<f64> {
    let min = x2.iter().copied().fold(f64::INFINITY, f64::min);
    x2.iter().map(|v| v - min + 1.0).collect()
}

/// Inclusion probabilities `π_i = n s_i / Σ s` of a fixed-size PPS design.
pub fn pps_probabilities(sizes: &[f64], n: usize) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput);
    }
    if sizes.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidData("size measures must be positive".into()));
    }
    let total: f64 = sizes.iter().sum();
    let pi: Vec<f64> = sizes.iter().map(|s| n as f64 * s / total).collect();
    let over: Vec<usize> = pi
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 1.0 + 1e-12)
        .map(|(i, _)| i)
        .collect();
    if !over.is_empty() {
        return Err(Error::CertaintyUnit { units: over });
    }
    Ok(pi)
}

/// Systematic PPS on a randomly permuted frame. Returns the selected
/// positions (sorted) and the full vector of inclusion probabilities.
pub fn systematic_pps<R: Rng + ?Sized>(
    sizes: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let pi = pps_probabilities(sizes, n)?;
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(rng);
    let start: f64 = rng.random();
    let mut selected = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut next = 0usize;
    for &i in &order {
        let upper = cumulative + pi[i];
        if next < n && start + (next as f64) < upper {
            selected.push(i);
            next += 1;
        }
        cumulative = upper;
    }
    // rounding can leave the last point just past the final cumulative sum
    for &i in order.iter().rev() {
        if next >= n {
            break;
        }
        if !selected.contains(&i) {
            selected.push(i);
            next += 1;
        }
    }
    selected.sort_unstable();
    Ok((selected, pi))
}

/// A drawn sample plus its population bookkeeping.
#[derive(Debug, Clone)]
pub struct DrawnSample {
    pub sample: SurveySample,
    /// Population index of every sampled unit.
    pub units: Vec<usize>,
    /// Overall inclusion probability of every sampled unit.
    pub inclusion: Vec<f64>,
}

impl DrawnSample {
    fn build(
        pop: &Population,
        units: Vec<usize>,
        inclusion: Vec<f64>,
        stratum: Vec<u32>,
        psu: Vec<u32>,
    ) -> Result<Self> {
        let weight = inclusion.iter().map(|p| 1.0 / p).collect();
        let sample = pop.analysis_sample(&units, weight, stratum, psu)?;
        Ok(DrawnSample {
            sample,
            units,
            inclusion,
        })
    }
}

/// Draw a sample under `cfg.scenario`'s design.
pub fn draw_sample<R: Rng + ?Sized>(pop: &Population, cfg: &ScenarioConfig, rng: &mut R) -> Result<DrawnSample> {
    match cfg.scenario {
        Scenario::De1 | Scenario::De5 => draw_de(pop, cfg, rng),
        Scenario::Pps1 => draw_pps1(pop, cfg, rng),
        Scenario::Spps1 => draw_spps1(pop, cfg, rng),
        Scenario::Pps3 => draw_pps3(pop, cfg, rng),
        Scenario::Spps3 => draw_spps3(pop, cfg, rng),
    }
}

fn check_population(pop: &Population, cfg: &ScenarioConfig) -> Result<()> {
    cfg.validate()?;
    if pop.len() != cfg.population_size {
        return Err(Error::config(format!(
            "population has {} units, configuration says {}",
            pop.len(),
            cfg.population_size
        )));
    }
    Ok(())
}

/// One-stage SRS of whole clusters of five.
pub fn draw_de<R: Rng + ?Sized>(pop: &Population, cfg: &ScenarioConfig, rng: &mut R) -> Result<DrawnSample> {
    check_population(pop, cfg)?;
    let big_n = cfg.population_size;
    let n = cfg.sample_size;
    if !big_n.is_multiple_of(CLUSTER_SIZE) || !n.is_multiple_of(CLUSTER_SIZE) {
        return Err(Error::config("DE designs need N and n divisible by 5"));
    }
    let mut clusters = index::sample(rng, big_n / CLUSTER_SIZE, n / CLUSTER_SIZE).into_vec();
    clusters.sort_unstable();
    let units: Vec<usize> = clusters
        .iter()
        .flat_map(|&c| c * CLUSTER_SIZE..(c + 1) * CLUSTER_SIZE)
        .collect();
    let pi = n as f64 / big_n as f64;
    let psu = units.iter().map(|&i| (i / CLUSTER_SIZE) as u32).collect();
    let k = units.len();
    DrawnSample::build(pop, units, vec![pi; k], vec![0; k], psu)
}

/// One-stage PPS by `x̃2`.
pub fn draw_pps1<R: Rng + ?Sized>(pop: &Population, cfg: &ScenarioConfig, rng: &mut R) -> Result<DrawnSample> {
    check_population(pop, cfg)?;
    let sizes = pop.sizes()?;
    let (units, pi) = systematic_pps(sizes, cfg.sample_size, rng)?;
    let inclusion = units.iter().map(|&i| pi[i]).collect();
    let psu = units.iter().map(|&i| i as u32).collect();
    let k = units.len();
    DrawnSample::build(pop, units, inclusion, vec![0; k], psu)
}

/// Equal-count split of `items` sorted by `key` into `groups` strata.
fn sorted_strata(key: &[f64], groups: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    let per = key.len() / groups;
    order.chunks(per).map(|c| c.to_vec()).collect()
}

/// Ten size strata of equal count, PPS of `n/10` within each.
pub fn draw_spps1<R: Rng + ?Sized>(pop: &Population, cfg: &ScenarioConfig, rng: &mut R) -> Result<DrawnSample> {
    check_population(pop, cfg)?;
    let sizes = pop.sizes()?;
    let per_stratum = cfg.sample_size / STRATA;
    let mut units = Vec::with_capacity(cfg.sample_size);
    let mut inclusion = Vec::with_capacity(cfg.sample_size);
    let mut stratum = Vec::with_capacity(cfg.sample_size);
    for (h, members) in sorted_strata(sizes, STRATA).iter().enumerate() {
        let local: Vec<f64> = members.iter().map(|&i| sizes[i]).collect();
        let (picked, pi) = systematic_pps(&local, per_stratum, rng).map_err(|e| relabel(e, members))?;
        for p in picked {
            units.push(members[p]);
            inclusion.push(pi[p]);
            stratum.push(h as u32);
        }
    }
    let psu = units.iter().map(|&i| i as u32).collect();
    DrawnSample::build(pop, units, inclusion, stratum, psu)
}

/// Map certainty-unit positions inside a stratum back to population ids.
fn relabel(e: Error, members: &[usize]) -> Error {
    match e {
        Error::CertaintyUnit { units } => Error::CertaintyUnit {
            units: units.into_iter().map(|u| members[u]).collect(),
        },
        other => other,
    }
}

/// Aggregate `x̃2` of each PSU.
pub fn psu_sizes(pop: &Population) -> Result<Vec<f64>> {
    let sizes = pop.sizes()?;
    if !pop.len().is_multiple_of(UNITS_PER_PSU) {
        return Err(Error::config("population is not made of 30-unit PSUs"));
    }
    Ok(sizes.chunks(UNITS_PER_PSU).map(|c| c.iter().sum()).collect())
}

/// Three-stage PPS: PSUs by aggregate size, 5 of 10 households
/// systematically along the size ranking, 1 of 3 persons by size.
pub fn draw_pps3<R: Rng + ?Sized>(pop: &Population, cfg: &ScenarioConfig, rng: &mut R) -> Result<DrawnSample> {
    check_population(pop, cfg)?;
    let agg = psu_sizes(pop)?;
    let (psus, pi) = systematic_pps(&agg, cfg.sample_size / HOUSEHOLDS_SAMPLED, rng)?;
    let first: Vec<(usize, f64, u32)> = psus.into_iter().map(|j| (j, pi[j], 0)).collect();
    within_psus(pop, &first, rng)
}

/// Stratified three-stage PPS: PSUs sorted by aggregate size into ten
/// equal strata, then the three-stage design within each.
pub fn draw_spps3<R: Rng + ?Sized>(pop: &Population, cfg: &ScenarioConfig, rng: &mut R) -> Result<DrawnSample> {
    check_population(pop, cfg)?;
    let agg = psu_sizes(pop)?;
    let per_stratum = cfg.sample_size / HOUSEHOLDS_SAMPLED / STRATA;
    let mut first = Vec::new();
    for (h, members) in sorted_strata(&agg, STRATA).iter().enumerate() {
        let local: Vec<f64> = members.iter().map(|&j| agg[j]).collect();
        let (picked, pi) = systematic_pps(&local, per_stratum, rng).map_err(|e| relabel(e, members))?;
        first.extend(picked.into_iter().map(|p| (members[p], pi[p], h as u32)));
    }
    first.sort_unstable_by_key(|(j, _, _)| *j);
    within_psus(pop, &first, rng)
}

/// Stages two and three for the selected `(psu, π_psu, stratum)` list.
fn within_psus<R: Rng + ?Sized>(
    pop: &Population,
    first: &[(usize, f64, u32)],
    rng: &mut R,
) -> Result<DrawnSample> {
    let sizes = pop.sizes()?;
    let n = first.len() * HOUSEHOLDS_SAMPLED;
    let mut units = Vec::with_capacity(n);
    let mut inclusion = Vec::with_capacity(n);
    let mut stratum = Vec::with_capacity(n);
    let mut psu = Vec::with_capacity(n);
    for &(j, pi_psu, h) in first {
        let base = j * UNITS_PER_PSU;
        let hh_size = |k: usize| -> f64 {
            let start = base + k * PERSONS_PER_HOUSEHOLD;
            sizes[start..start + PERSONS_PER_HOUSEHOLD].iter().sum()
        };
        // rank households by aggregate size; fresh random keys break ties
        let mut ranked: Vec<(f64, u64, usize)> =
            (0..HOUSEHOLDS_PER_PSU).map(|k| (hh_size(k), rng.random::<u64>(), k)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let start = rng.random_range(0..2usize);
        let pi_hh = HOUSEHOLDS_SAMPLED as f64 / HOUSEHOLDS_PER_PSU as f64;
        let mut households: Vec<usize> = ranked.iter().skip(start).step_by(2).map(|r| r.2).collect();
        households.sort_unstable();
        for k in households {
            let first_person = base + k * PERSONS_PER_HOUSEHOLD;
            let members = &sizes[first_person..first_person + PERSONS_PER_HOUSEHOLD];
            let (picked, pi_person) = systematic_pps(members, 1, rng)?;
            let p = picked[0];
            units.push(first_person + p);
            inclusion.push(pi_psu * pi_hh * pi_person[p]);
            stratum.push(h);
            psu.push(j as u32);
        }
    }
    DrawnSample::build(pop, units, inclusion, stratum, psu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};

    fn cfg(scenario: Scenario, big_n: usize, n: usize) -> ScenarioConfig {
        ScenarioConfig {
            population_size: big_n,
            sample_size: n,
            ..ScenarioConfig::reference(scenario)
        }
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len().is_multiple_of(2) { 0.5 * (v[m - 1] + v[m]) } else { v[m] }
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("spps3".parse::<Scenario>().unwrap(), Scenario::Spps3);
        let err = "PPS2".parse::<Scenario>().unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("DE1") && m.contains("SPPS3")));
    }

    #[test]
    fn config_divisibility() {
        assert!(cfg(Scenario::De1, 5000, 200).validate().is_ok());
        assert!(cfg(Scenario::De1, 5001, 200).validate().is_err());
        assert!(cfg(Scenario::De5, 5000, 201).validate().is_err());
        assert!(cfg(Scenario::Spps1, 5000, 205).validate().is_err());
        assert!(cfg(Scenario::Pps3, 6010, 200).validate().is_err());
        assert!(cfg(Scenario::Spps3, 6000, 200).validate().is_ok());
        assert!(cfg(Scenario::Spps3, 6000, 175).validate().is_err());
        assert!(cfg(Scenario::Pps1, 100, 200).validate().is_err());
    }

    #[test]
    fn de_population_median_probability_is_half() {
        let c = ScenarioConfig::reference(Scenario::De1);
        let pop = generate_population(&c, &mut rng::stream(1, Purpose::Population, 0)).unwrap();
        let p = median(pop.mu.iter().map(|&m| model::sigmoid(m)).collect());
        assert!((0.47..=0.53).contains(&p), "{p}");
    }

    #[test]
    fn de5_clusters_are_constant() {
        let c = ScenarioConfig::reference(Scenario::De5);
        let pop = generate_population(&c, &mut rng::stream(2, Purpose::Population, 0)).unwrap();
        for k in 0..1000 {
            let r = k * 5..(k + 1) * 5;
            assert!(pop.y[r.clone()].iter().all(|&v| v == pop.y[k * 5]));
            assert!(pop.x1[r].iter().all(|&v| v == pop.x1[k * 5]));
        }
    }

    #[test]
    fn pps1_size_driver_has_mean_five() {
        let c = ScenarioConfig::reference(Scenario::Pps1);
        let pop = generate_population(&c, &mut rng::stream(3, Purpose::Population, 0)).unwrap();
        let x2 = pop.x2.as_ref().unwrap();
        let m = x2.iter().sum::<f64>() / x2.len() as f64;
        assert!((4.5..=5.5).contains(&m), "{m}");
        assert!(pop.size.as_ref().unwrap().iter().all(|&s| s >= 1.0));
        assert_eq!(pop.size.as_ref().unwrap().iter().copied().fold(f64::INFINITY, f64::min), 1.0);
    }

    #[test]
    fn pps_probabilities_are_proportional() {
        let pi = pps_probabilities(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        for (a, b) in pi.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
        let pi = pps_probabilities(&[3.0; 8], 2).unwrap();
        assert!(pi.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_eq!(
            pps_probabilities(&[1.0, 1.0, 10.0], 2).unwrap_err(),
            Error::CertaintyUnit { units: vec![2] }
        );
    }

    #[test]
    fn de_sample_shape() {
        let c = ScenarioConfig::reference(Scenario::De1);
        let mut r = rng::stream(4, Purpose::Design, 0);
        let pop = generate_population(&c, &mut r).unwrap();
        let d = draw_de(&pop, &c, &mut r).unwrap();
        assert_eq!(d.sample.len(), 200);
        assert_eq!(d.sample.psu_count(), 40);
        assert!(d.sample.weight().iter().all(|&w| w == 25.0));

        let census = cfg(Scenario::De1, 50, 50);
        let pop = generate_population(&census, &mut r).unwrap();
        let d = draw_de(&pop, &census, &mut r).unwrap();
        let w = model::normalize_weights(d.sample.weight(), 50).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn spps1_strata_are_sorted_and_balanced() {
        let c = ScenarioConfig::reference(Scenario::Spps1);
        let mut r = rng::stream(5, Purpose::Design, 0);
        let pop = generate_population(&c, &mut r).unwrap();
        let sizes = pop.size.as_ref().unwrap();
        let strata = sorted_strata(sizes, STRATA);
        for pair in strata.windows(2) {
            let hi = pair[0].iter().map(|&i| sizes[i]).fold(f64::MIN, f64::max);
            let lo = pair[1].iter().map(|&i| sizes[i]).fold(f64::MAX, f64::min);
            assert!(hi <= lo);
        }
        let d = draw_spps1(&pop, &c, &mut r).unwrap();
        for h in 0..STRATA as u32 {
            assert_eq!(d.sample.stratum().iter().filter(|&&s| s == h).count(), 20);
        }
    }

    #[test]
    fn pps3_stage_counts() {
        let c = ScenarioConfig::reference(Scenario::Pps3);
        let mut r = rng::stream(6, Purpose::Design, 0);
        let pop = generate_population(&c, &mut r).unwrap();
        assert_eq!(psu_sizes(&pop).unwrap().len(), 200);
        let d = draw_pps3(&pop, &c, &mut r).unwrap();
        assert_eq!(d.sample.len(), 200);
        assert_eq!(d.sample.psu_count(), 40);
        let hh = pop.household.as_ref().unwrap();
        let mut households: Vec<u32> = d.units.iter().map(|&i| hh[i]).collect();
        households.dedup();
        assert_eq!(households.len(), 200, "one person per household");
    }

    #[test]
    fn spps3_strata_partition_psus() {
        let c = ScenarioConfig::reference(Scenario::Spps3);
        let mut r = rng::stream(7, Purpose::Design, 0);
        let pop = generate_population(&c, &mut r).unwrap();
        let agg = psu_sizes(&pop).unwrap();
        let strata = sorted_strata(&agg, STRATA);
        let mut all: Vec<usize> = strata.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        let d = draw_spps3(&pop, &c, &mut r).unwrap();
        for h in 0..STRATA as u32 {
            let mut psus: Vec<u32> = d
                .sample
                .stratum()
                .iter()
                .zip(d.sample.psu())
                .filter(|(s, _)| **s == h)
                .map(|(_, p)| *p)
                .collect();
            psus.dedup();
            assert_eq!(psus.len(), 4);
        }
    }

    #[test]
    fn weights_invert_inclusion_probabilities() {
        for scenario in Scenario::ALL {
            let c = ScenarioConfig::reference(scenario);
            let mut r = rng::stream(8, Purpose::Design, scenario as u64);
            let pop = generate_population(&c, &mut r).unwrap();
            let d = draw_sample(&pop, &c, &mut r).unwrap();
            for (w, p) in d.sample.weight().iter().zip(&d.inclusion) {
                assert!((w * p - 1.0).abs() <= 2.0 * f64::EPSILON, "{scenario}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for scenario in Scenario::ALL {
            let c = ScenarioConfig::reference(scenario);
            let a = generate_population(&c, &mut rng::stream(9, Purpose::Population, 1)).unwrap();
            let b = generate_population(&c, &mut rng::stream(9, Purpose::Population, 1)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn population_size_mismatch_is_rejected() {
        let c = ScenarioConfig::reference(Scenario::Pps1);
        let pop = generate_population(&c, &mut rng::stream(1, Purpose::Population, 0)).unwrap();
        let other = cfg(Scenario::Pps1, 4000, 200);
        assert!(matches!(
            draw_pps1(&pop, &other, &mut rng::stream(1, Purpose::Design, 0)),
            Err(Error::Config(_))
        ));
    }
}
