//! TOML run configuration, flag overrides, and the resolved settings.
//!
//! ```toml
//! seed = 20240601
//!
//! [data]
//! path = "survey.csv"
//! outcome = "y"
//! covariates = ["x1"]
//! weight = "w"
//! stratum = "strat"
//! psu = "cluster"
//!
//! [sampler]
//! draws = 2000      # total across chains
//! warmup = 1000     # per chain
//! chains = 4
//!
//! [replicates]
//! count = 100
//!
//! [simulation]
//! scenarios = ["DE5", "PPS1"]
//! realizations = 100
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use pseudopost_core::adjust::HessianSource;
use pseudopost_core::designs::{Scenario, ScenarioConfig};
use pseudopost_core::eval::SimulationConfig;
use pseudopost_core::sampler::{Algorithm, SamplerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ColumnMap;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub replicates: ReplicateSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub outcome: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub weight: Option<String>,
    pub stratum: Option<String>,
    pub psu: Option<String>,
    pub intercept: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub draws: Option<usize>,
    pub warmup: Option<usize>,
    pub chains: Option<usize>,
    pub step_size: Option<f64>,
    pub path_length: Option<f64>,
    pub algorithm: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Standard deviation of the independent zero-mean normal prior.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateSection {
    pub count: Option<usize>,
    pub hessian: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub scenarios: Option<Vec<String>>,
    pub realizations: Option<usize>,
    pub sample_size: Option<usize>,
    pub population_size: Option<usize>,
    pub level: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start].bytes().filter(|&b| b == b'\n').count() as u64 + 1);
            CliError::parse(path, line, e.message().to_string())
        })
    }

    /// SHA-256 over the canonical JSON form of the merged configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Flag values; each `Some` replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub outcome: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub weight: Option<String>,
    pub stratum: Option<String>,
    pub psu: Option<String>,
    pub no_intercept: bool,
    pub draws: Option<usize>,
    pub warmup: Option<usize>,
    pub chains: Option<usize>,
    pub algorithm: Option<String>,
    pub prior_sd: Option<f64>,
    pub replicates: Option<usize>,
    pub hessian: Option<String>,
    pub scenario: Option<String>,
    pub realizations: Option<usize>,
    pub sample_size: Option<usize>,
    pub population_size: Option<usize>,
}

impl FileConfig {
    pub fn apply(mut self, o: Overrides) -> Self {
        fn set<T>(slot: &mut Option<T>, v: Option<T>) {
            if v.is_some() {
                *slot = v;
            }
        }
        set(&mut self.seed, o.seed);
        set(&mut self.data.path, o.data);
        set(&mut self.data.outcome, o.outcome);
        set(&mut self.data.covariates, o.covariates);
        set(&mut self.data.weight, o.weight);
        set(&mut self.data.stratum, o.stratum);
        set(&mut self.data.psu, o.psu);
        if o.no_intercept {
            self.data.intercept = Some(false);
        }
        set(&mut self.sampler.draws, o.draws);
        set(&mut self.sampler.warmup, o.warmup);
        set(&mut self.sampler.chains, o.chains);
        set(&mut self.sampler.algorithm, o.algorithm);
        set(&mut self.prior.sd, o.prior_sd);
        set(&mut self.replicates.count, o.replicates);
        set(&mut self.replicates.hessian, o.hessian);
        set(&mut self.simulation.scenarios, o.scenario.map(|s| vec![s]));
        set(&mut self.simulation.realizations, o.realizations);
        set(&mut self.simulation.sample_size, o.sample_size);
        set(&mut self.simulation.population_size, o.population_size);
        self
    }
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub prior_sd: f64,
    pub replicates: usize,
    pub hessian: HessianSource,
    pub config_hash: String,
    file: FileConfig,
}

impl Settings {
    pub fn resolve(file: FileConfig) -> Result<Self> {
        let seed = file
            .seed
            .ok_or_else(|| CliError::Config("a seed is required (--seed, PSEUDOPOST_SEED or `seed` in the config)".into()))?;
        let defaults = SamplerConfig::default();
        let s = &file.sampler;
        let sampler = SamplerConfig {
            n_draws: s.draws.unwrap_or(defaults.n_draws),
            n_warmup: s.warmup.unwrap_or(defaults.n_warmup),
            n_chains: s.chains.unwrap_or(defaults.n_chains),
            seed,
            step_size: s.step_size.unwrap_or(defaults.step_size),
            path_length: s.path_length.unwrap_or(defaults.path_length),
            algorithm: match &s.algorithm {
                Some(a) => a.parse::<Algorithm>()?,
                None => defaults.algorithm,
            },
        };
        sampler.validate()?;
        let hessian = match &file.replicates.hessian {
            Some(h) => h.parse()?,
            None => HessianSource::default(),
        };
        let prior_sd = file.prior.sd.unwrap_or(5.0);
        if !(prior_sd.is_finite() && prior_sd > 0.0) {
            return Err(CliError::Config(format!("prior sd must be positive, got {prior_sd}")));
        }
        Ok(Settings {
            seed,
            sampler,
            prior_sd,
            replicates: file.replicates.count.unwrap_or(100),
            hessian,
            config_hash: file.hash(),
            file,
        })
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.file
            .data
            .path
            .as_deref()
            .ok_or_else(|| CliError::Config("no microdata path (--data or [data].path)".into()))
    }

    pub fn columns(&self) -> Result<ColumnMap> {
        let d = &self.file.data;
        let need = |v: &Option<String>, what: &str| {
            v.clone()
                .ok_or_else(|| CliError::Config(format!("no {what} column (--{what} or [data].{what})")))
        };
        Ok(ColumnMap {
            outcome: need(&d.outcome, "outcome")?,
            covariates: d.covariates.clone().unwrap_or_default(),
            weight: need(&d.weight, "weight")?,
            stratum: d.stratum.clone(),
            psu: d.psu.clone(),
            intercept: d.intercept.unwrap_or(true),
        })
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let names = self
            .file
            .simulation
            .scenarios
            .clone()
            .ok_or_else(|| CliError::Config(format!("no scenario (--scenario NAME|all; valid: {})", Scenario::valid_names())))?;
        let mut out = Vec::new();
        for name in names {
            if name.eq_ignore_ascii_case("all") {
                out.extend(Scenario::ALL);
            } else {
                out.push(name.parse()?);
            }
        }
        out.dedup();
        Ok(out)
    }

    pub fn simulation(&self, scenario: Scenario) -> Result<SimulationConfig> {
        let sim = &self.file.simulation;
        let reference = ScenarioConfig::reference(scenario);
        let cfg = SimulationConfig {
            scenario: ScenarioConfig {
                scenario,
                population_size: sim.population_size.unwrap_or(reference.population_size),
                sample_size: sim.sample_size.unwrap_or(reference.sample_size),
                seed: self.seed,
                realizations: sim.realizations.unwrap_or(reference.realizations),
                replicates: self.replicates,
            },
            sampler: self.sampler.clone(),
            prior_sd: self.prior_sd,
            level: sim.level.unwrap_or(0.9),
            hessian: self.hessian,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: FileConfig = toml::from_str(
            "seed = 1\n[sampler]\nchains = 2\ndraws = 400\n[simulation]\nscenarios = [\"DE1\"]\n",
        )
        .unwrap();
        let merged = file.apply(Overrides {
            seed: Some(9),
            chains: Some(3),
            scenario: Some("all".into()),
            ..Overrides::default()
        });
        let s = Settings::resolve(merged).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!((s.sampler.n_chains, s.sampler.n_draws), (3, 400));
        assert_eq!(s.scenarios().unwrap().len(), 6);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = Settings::resolve(FileConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("seed = 1\nsed = 2\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = FileConfig { seed: Some(1), ..FileConfig::default() };
        let b = FileConfig { seed: Some(2), ..FileConfig::default() };
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn unknown_scenario_lists_names() {
        let s = Settings::resolve(FileConfig::default().apply(Overrides {
            seed: Some(1),
            scenario: Some("PPS7".into()),
            ..Overrides::default()
        }))
        .unwrap();
        let err = s.scenarios().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("SPPS1"));
    }
}
