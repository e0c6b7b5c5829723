//! Rayon fan-out over chains, replicates and realizations.
//!
//! Every task draws from its own keyed stream, so results are identical to
//! the serial versions in `pseudopost-core` regardless of thread count.

use pseudopost_core::adjust::{self, PsuLayout, ReplicateConfig, SandwichEstimates};
use pseudopost_core::eval::{self, RealizationDraws, SimulationConfig, SimulationSummary};
use pseudopost_core::model::{NormalizedWeights, ParamVector, SurveySample};
use pseudopost_core::sampler::{self, PosteriorSample, PriorSpec, SamplerConfig};
use pseudopost_core::Result;
use rayon::prelude::*;

pub fn sample_posterior(
    sample: &SurveySample,
    w: &NormalizedWeights,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<PosteriorSample> {
    cfg.validate()?;
    let chains = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| sampler::run_chain(sample, w, prior, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    sampler::combine_chains(chains, sample.names().to_vec())
}

pub fn estimate_hj(
    sample: &SurveySample,
    theta_bar: &ParamVector,
    cfg: &ReplicateConfig,
) -> Result<SandwichEstimates> {
    cfg.validate()?;
    let layout = PsuLayout::of(sample)?;
    let stats = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| adjust::replicate_statistic(sample, &layout, theta_bar, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    adjust::combine_replicates(sample, theta_bar, &stats, cfg.hessian)
}

pub fn run_scenario(cfg: &SimulationConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let results = (0..cfg.scenario.realizations)
        .into_par_iter()
        .map(|i| eval::run_realization(cfg, i))
        .collect();
    eval::summarize(cfg, results)
}

/// Realization 0 with its draws, for plotting.
pub fn example_draws(cfg: &SimulationConfig) -> Result<RealizationDraws> {
    eval::realization_draws(cfg, 0)
}
