//! `pseudopost fit | adjust | simulate | report`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pseudopost_core::adjust::{self, ReplicateConfig, SandwichEstimates};
use pseudopost_core::eval;
use pseudopost_core::model::{self, ParamVector, SurveySample};
use pseudopost_core::rng::{self, Purpose};
use pseudopost_core::sampler::{DrawsMatrix, PosteriorSample, PriorSpec};
use pseudopost_core::Matrix;
use serde::Serialize;

use crate::config::{FileConfig, Overrides, Settings};
use crate::data::{self, ColumnMap};
use crate::draws::{self, DrawsMeta};
use crate::error::{CliError, Result};
use crate::{report, run};

#[derive(Debug, Parser)]
#[command(name = "pseudopost", version, about = "Survey-weighted pseudo-posterior fitting with replicate-based credible-set adjustment")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, env = "PSEUDOPOST_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "PSEUDOPOST_SEED")]
    pub seed: Option<u64>,
    /// Output file (fit, adjust) or directory (simulate, report).
    #[arg(long, global = true, env = "PSEUDOPOST_OUT")]
    pub out: Option<PathBuf>,
    /// Total posterior draws across chains.
    #[arg(long, global = true, env = "PSEUDOPOST_DRAWS")]
    pub draws: Option<usize>,
    #[arg(long, global = true, env = "PSEUDOPOST_WARMUP")]
    pub warmup: Option<usize>,
    #[arg(long, global = true, env = "PSEUDOPOST_CHAINS")]
    pub chains: Option<usize>,
    /// hamiltonian or adaptive_random_walk.
    #[arg(long, global = true, env = "PSEUDOPOST_ALGORITHM")]
    pub algorithm: Option<String>,
    #[arg(long, global = true, env = "PSEUDOPOST_PRIOR_SD")]
    pub prior_sd: Option<f64>,
    #[arg(long, global = true, env = "PSEUDOPOST_REPLICATES")]
    pub replicates: Option<usize>,
    /// replicate-mean or plug-in.
    #[arg(long, global = true, env = "PSEUDOPOST_HESSIAN")]
    pub hessian: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the pseudo-posterior of a weighted logistic model.
    Fit(DataArgs),
    /// Adjust existing draws with PSU half-sample replicates.
    Adjust {
        /// Draws file written by `fit`.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run simulation scenarios and write a summary table.
    Simulate {
        /// Scenario name, or `all`.
        #[arg(long, env = "PSEUDOPOST_SCENARIO")]
        scenario: Option<String>,
        #[arg(long, env = "PSEUDOPOST_REALIZATIONS")]
        realizations: Option<usize>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        population_size: Option<usize>,
    },
    /// Render a summary table and ellipse point sets.
    Report {
        #[arg(long)]
        summary: PathBuf,
        /// Directory of `<name>_unadjusted.csv` / `<name>_adjusted.csv` pairs.
        #[arg(long)]
        draws_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Comma-separated microdata with a header row.
    #[arg(long, env = "PSEUDOPOST_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long)]
    pub stratum: Option<String>,
    #[arg(long)]
    pub psu: Option<String>,
    #[arg(long)]
    pub no_intercept: bool,
}

impl Cli {
    fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut o = Overrides {
            seed: self.seed,
            draws: self.draws,
            warmup: self.warmup,
            chains: self.chains,
            algorithm: self.algorithm.clone(),
            prior_sd: self.prior_sd,
            replicates: self.replicates,
            hessian: self.hessian.clone(),
            ..Overrides::default()
        };
        match &self.command {
            Command::Fit(d) | Command::Adjust { data: d, .. } => {
                o.data = d.data.clone();
                o.outcome = d.outcome.clone();
                o.covariates = d.covariates.clone();
                o.weight = d.weight.clone();
                o.stratum = d.stratum.clone();
                o.psu = d.psu.clone();
                o.no_intercept = d.no_intercept;
            }
            Command::Simulate { scenario, realizations, sample_size, population_size } => {
                o.scenario = scenario.clone();
                o.realizations = *realizations;
                o.sample_size = *sample_size;
                o.population_size = *population_size;
            }
            Command::Report { .. } => {}
        }
        Settings::resolve(file.apply(o))
    }

    fn out(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::Config("--out is required".into()))
    }
}

/// Parse-free entry point; returns the text printed to stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Fit(_) => cmd_fit(cli),
        Command::Adjust { input, .. } => cmd_adjust(cli, input),
        Command::Simulate { .. } => cmd_simulate(cli),
        Command::Report { summary, draws_dir } => cmd_report(cli, summary, draws_dir.as_deref()),
    }
}

fn load_sample(settings: &Settings) -> Result<(SurveySample, ColumnMap)> {
    // columns are validated against the header before any parsing or fitting
    let map = settings.columns()?;
    let sample = data::read_microdata(settings.data_path()?, &map)?;
    Ok((sample, map))
}

/// `<dir>/<stem><suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "draws".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_fit(cli: &Cli) -> Result<String> {
    let settings = cli.settings()?;
    let out_path = cli.out()?.to_path_buf();
    let (sample, map) = load_sample(&settings)?;
    let w = model::normalize_weights(sample.weight(), sample.len())?;
    let prior = PriorSpec::isotropic(sample.dim(), settings.prior_sd)?;
    let post = run::sample_posterior(&sample, &w, &prior, &settings.sampler)?;

    let meta = DrawsMeta::new("posterior", settings.seed, settings.config_hash.clone(), &post.draws, settings.sampler.n_chains);
    draws::write_draws(&out_path, &post.draws, &meta)?;

    let mut text = fit_report(&post);
    writeln!(text, "draws written to {}", out_path.display()).unwrap();
    if map.has_design() {
        let adjusted_path = sibling(&out_path, "_adjusted.csv");
        text.push_str(&adjust_and_write(&settings, &sample, &post.draws, &adjusted_path)?);
    }
    Ok(text)
}

fn fit_report(post: &PosteriorSample) -> String {
    let d = &post.draws;
    let mean = d.mean();
    let sd = d.sd();
    let mut t = String::new();
    writeln!(t, "{:<14} {:>10} {:>10} {:>8} {:>8}", "parameter", "mean", "sd", "rhat", "ess").unwrap();
    for (j, name) in d.names().iter().enumerate() {
        writeln!(
            t,
            "{:<14} {:>10.4} {:>10.4} {:>8.3} {:>8.0}",
            name, mean[j], sd[j], post.diagnostics.rhat[j], post.diagnostics.ess[j]
        )
        .unwrap();
    }
    writeln!(
        t,
        "status {:?}; mean acceptance {:.3}; divergences {}",
        post.status, post.mean_accept_prob, post.divergences
    )
    .unwrap();
    t
}

#[derive(Serialize)]
struct EstimatesFile<'a> {
    names: &'a [String],
    theta_bar: &'a [f64],
    replicates: usize,
    seed: u64,
    h_hat: Vec<Vec<f64>>,
    j_hat: Vec<Vec<f64>>,
    sandwich: Vec<Vec<f64>>,
    deff_theta: Vec<f64>,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn adjust_and_write(settings: &Settings, sample: &SurveySample, draws: &DrawsMatrix, out_path: &Path) -> Result<String> {
    if draws.dim() != sample.dim() {
        return Err(pseudopost_core::Error::Shape(format!(
            "draws have {} parameters but the microdata model has {}",
            draws.dim(),
            sample.dim()
        ))
        .into());
    }
    let theta_bar = ParamVector::new(draws.mean())?;
    let rep_cfg = ReplicateConfig {
        replicates: settings.replicates,
        seed: rng::child_seed(settings.seed, Purpose::Replicate, 0),
        hessian: settings.hessian,
    };
    let est: SandwichEstimates = run::estimate_hj(sample, &theta_bar, &rep_cfg)?;
    let adjusted = adjust::adjust_draws(draws, &est)?;
    let deff = adjust::deff_params(&est);

    let meta = DrawsMeta::new("adjusted", settings.seed, settings.config_hash.clone(), &adjusted, settings.sampler.n_chains);
    draws::write_draws(out_path, &adjusted, &meta)?;
    let est_path = sibling(out_path, "_estimates.json");
    let body = EstimatesFile {
        names: draws.names(),
        theta_bar: theta_bar.as_slice(),
        replicates: settings.replicates,
        seed: rep_cfg.seed,
        h_hat: rows_of(est.h_hat()),
        j_hat: rows_of(est.j_hat()),
        sandwich: rows_of(est.sandwich()),
        deff_theta: deff.clone(),
    };
    let json = serde_json::to_string_pretty(&body).expect("estimates serialize") + "\n";
    fs::write(&est_path, json).map_err(|e| CliError::io(&est_path, e))?;

    let level = 0.9;
    let before = eval::marginal_interval(draws, level)?.widths();
    let after = eval::marginal_interval(&adjusted, level)?.widths();
    let mut t = String::new();
    writeln!(t, "{:<14} {:>12} {:>12} {:>8}", "parameter", "width unadj", "width adj", "DEFF").unwrap();
    for (j, name) in draws.names().iter().enumerate() {
        writeln!(t, "{:<14} {:>12.4} {:>12.4} {:>8.3}", name, before[j], after[j], deff[j]).unwrap();
    }
    writeln!(t, "adjusted draws written to {}; estimates to {}", out_path.display(), est_path.display()).unwrap();
    Ok(t)
}

fn cmd_adjust(cli: &Cli, input: &Path) -> Result<String> {
    let settings = cli.settings()?;
    let out_path = cli.out()?.to_path_buf();
    let (draws, _) = draws::read_draws(input)?;
    let (sample, map) = load_sample(&settings)?;
    if !map.has_design() {
        return Err(CliError::Config("adjust needs a --stratum and/or --psu column".into()));
    }
    adjust_and_write(&settings, &sample, &draws, &out_path)
}

fn cmd_simulate(cli: &Cli) -> Result<String> {
    let settings = cli.settings()?;
    let scenarios = settings.scenarios()?;
    let configs = scenarios.iter().map(|&s| settings.simulation(s)).collect::<Result<Vec<_>>>()?;
    let dir = cli.out()?.to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let mut rows = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let summary = run::run_scenario(cfg)?;
        rows.push(report::SummaryRow::from_summary(&summary)?);
        let example = run::example_draws(cfg)?;
        let name = cfg.scenario.scenario.name();
        for (label, d) in [("unadjusted", &example.unadjusted), ("adjusted", &example.adjusted)] {
            let meta = DrawsMeta::new(label, settings.seed, settings.config_hash.clone(), d, settings.sampler.n_chains);
            draws::write_draws(&dir.join(format!("{name}_{label}.csv")), d, &meta)?;
        }
    }
    let summary_path = dir.join("summary.csv");
    report::write_summary_csv(&summary_path, &rows)?;
    let mut text = report::render_table(&rows);
    writeln!(text, "summary written to {}", summary_path.display()).unwrap();
    Ok(text)
}

fn cmd_report(cli: &Cli, summary: &Path, draws_dir: Option<&Path>) -> Result<String> {
    let rows = report::read_summary_csv(summary)?;
    let mut text = report::render_table(&rows);
    let Some(out_dir) = cli.out.as_deref() else {
        return Ok(text);
    };
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let table_path = out_dir.join("table.txt");
    fs::write(&table_path, &text).map_err(|e| CliError::io(&table_path, e))?;

    if let Some(dir) = draws_dir {
        let level = rows[0].level;
        let mut points = Vec::new();
        for row in &rows {
            let unadj = dir.join(format!("{}_unadjusted.csv", row.scenario));
            let adj = dir.join(format!("{}_adjusted.csv", row.scenario));
            if !unadj.exists() || !adj.exists() {
                continue;
            }
            let (u, _) = draws::read_draws(&unadj)?;
            let (a, _) = draws::read_draws(&adj)?;
            points.extend(report::ellipse(&row.scenario, "unadjusted", &u, level)?);
            points.extend(report::ellipse(&row.scenario, "adjusted", &a, level)?);
            writeln!(
                text,
                "{}: adjusted/unadjusted ellipse area ratio {:.3}",
                row.scenario,
                report::area_ratio(&u, &a, level)?
            )
            .unwrap();
        }
        let path = out_dir.join("ellipses.csv");
        report::write_ellipses(&path, &points)?;
        writeln!(text, "ellipse points written to {}", path.display()).unwrap();
    }
    Ok(text)
}
