//! End-to-end acceptance checks, one line per criterion.
//!
//! Coverage criteria are Monte Carlo estimates over M = 100 realizations at a
//! fixed seed; each line reports the estimate with its standard error
//! √(p(1−p)/M).

use std::collections::BTreeMap;
use std::process::ExitCode;

use pseudopost::run;
use pseudopost_core::adjust::{self, PsuLayout, ReplicateConfig, SandwichEstimates};
use pseudopost_core::designs::{self, Scenario, ScenarioConfig};
use pseudopost_core::eval::{self, SimulationConfig, SimulationSummary};
use pseudopost_core::linalg::{self, Matrix};
use pseudopost_core::model::{self, NormalizedWeights, ParamVector, SurveySample};
use pseudopost_core::rng::{self, Purpose};
use pseudopost_core::sampler::DrawsMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SEED: u64 = 20_241_015;

// criterion 7
const MEAN_PRESERVATION_TOL: f64 = 1e-12;
const PROJECTION_TOL: f64 = 1e-8;
const IDENTITY_TOL: f64 = 1e-10;
const CHOLESKY_TOL: f64 = 1e-12;
// criterion 8
const SCORE_TOL: f64 = 1e-6;
const HESSIAN_TOL: f64 = 1e-5;
const WEIGHT_SUM_TOL: f64 = 1e-10;
const CHI2_TOL: f64 = 1e-6;
// criterion 9
const DESIGN_DRAWS: usize = 200_000;
const FREQUENCY_TOL: f64 = 0.01;
// criterion 10
const BARTLETT_TOL: f64 = 0.15;

struct Line {
    id: usize,
    pass: bool,
    text: String,
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn cov(s: &SimulationSummary, p: f64) -> String {
    format!("{p:.2}±{:.3}", s.coverage_se(p))
}

fn scenario_criteria(sums: &BTreeMap<Scenario, SimulationSummary>) -> Vec<Line> {
    let g = |s| &sums[&s];
    let mut out = Vec::new();

    let de5 = g(Scenario::De5);
    out.push(Line {
        id: 1,
        pass: de5.joint_unadjusted <= 0.50 && within(de5.joint_adjusted, 0.80, 0.95) && within(de5.deff_y, 4.0, 6.5),
        text: format!(
            "DE5 joint unadj {} (≤0.50), adj {} ([0.80,0.95]), DEFF_y {:.2} ([4.0,6.5])",
            cov(de5, de5.joint_unadjusted),
            cov(de5, de5.joint_adjusted),
            de5.deff_y
        ),
    });

    let de1 = g(Scenario::De1);
    out.push(Line {
        id: 2,
        pass: within(de1.joint_unadjusted, 0.80, 0.97)
            && within(de1.joint_adjusted, 0.80, 0.97)
            && de1.width_ratio.iter().all(|&r| within(r, 0.90, 1.10)),
        text: format!(
            "DE1 joint unadj {}, adj {} ([0.80,0.97]); width ratio {:.3?} ([0.90,1.10])",
            cov(de1, de1.joint_unadjusted),
            cov(de1, de1.joint_adjusted),
            de1.width_ratio
        ),
    });

    let pps1 = g(Scenario::Pps1);
    out.push(Line {
        id: 3,
        pass: pps1.joint_unadjusted <= 0.85
            && within(pps1.joint_adjusted, 0.85, 0.98)
            && within(pps1.deff_theta[0], 1.4, 2.5)
            && within(pps1.deff_theta[1], 1.2, 2.2),
        text: format!(
            "PPS1 joint unadj {} (≤0.85), adj {} ([0.85,0.98]); DEFF_θ {:.2?} ([1.4,2.5], [1.2,2.2])",
            cov(pps1, pps1.joint_unadjusted),
            cov(pps1, pps1.joint_adjusted),
            pps1.deff_theta
        ),
    });

    let spps1 = g(Scenario::Spps1);
    out.push(Line {
        id: 4,
        pass: within(spps1.deff_theta[0], 0.5, 0.95)
            && spps1.joint_unadjusted >= 0.93
            && within(spps1.joint_adjusted, 0.80, 0.95),
        text: format!(
            "SPPS1 DEFF_θ0 {:.2} ([0.5,0.95]); joint unadj {} (≥0.93), adj {} ([0.80,0.95])",
            spps1.deff_theta[0],
            cov(spps1, spps1.joint_unadjusted),
            cov(spps1, spps1.joint_adjusted)
        ),
    });

    let (pps3, spps3) = (g(Scenario::Pps3), g(Scenario::Spps3));
    out.push(Line {
        id: 5,
        pass: [pps3, spps3]
            .iter()
            .all(|s| within(s.joint_adjusted, 0.78, 0.95) && within(s.deff_y, 1.5, 2.8)),
        text: format!(
            "PPS3 joint adj {}, DEFF_y {:.2}; SPPS3 joint adj {}, DEFF_y {:.2} ([0.78,0.95], [1.5,2.8])",
            cov(pps3, pps3.joint_adjusted),
            pps3.deff_y,
            cov(spps3, spps3.joint_adjusted),
            spps3.deff_y
        ),
    });

    let gaps: Vec<String> = sums
        .values()
        .map(|s| format!("{} {:.3}", s.scenario, s.intercept_deff_gap()))
        .collect();
    out.push(Line {
        id: 6,
        pass: sums.values().all(|s| s.intercept_deff_gap() <= 0.25),
        text: format!("|DEFF_θ0 − DEFF_y|/DEFF_y ≤ 0.25: {}", gaps.join(", ")),
    });
    out
}

fn random_spd(r: &mut ChaCha8Rng, d: usize) -> Matrix {
    let a: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(r)).collect();
    let a = Matrix::from_row_major(d, d, a).unwrap();
    let mut m = a.transpose().matmul(&a).unwrap();
    for i in 0..d {
        m[(i, i)] += 0.5;
    }
    m
}

fn linear_algebra() -> Line {
    let mut r = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    let mut worst_mean: f64 = 0.0;
    let mut worst_proj: f64 = 0.0;
    let mut worst_ident: f64 = 0.0;
    let mut worst_chol: f64 = 0.0;
    for trial in 0..100 {
        let d = 1 + trial % 10;
        let m = random_spd(&mut r, d);
        let u = linalg::cholesky(&m).unwrap();
        let back = u.transpose().matmul(&u).unwrap();
        worst_chol = worst_chol.max(linalg::relative_frobenius(&back, &m).unwrap());

        let h = random_spd(&mut r, d);
        let j = random_spd(&mut r, d);
        let est = SandwichEstimates::from_parts(h.clone(), j).unwrap();
        let a = est.projection().unwrap();
        let projected = a.transpose().matmul(est.h_inv()).unwrap().matmul(&a).unwrap();
        worst_proj = worst_proj.max(linalg::relative_frobenius(&projected, est.sandwich()).unwrap());

        let rows: Vec<f64> = (0..200 * d).map(|_| 3.0 + Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let names = (0..d).map(|k| format!("p{k}")).collect();
        let draws = DrawsMatrix::new(Matrix::from_row_major(200, d, rows).unwrap(), names).unwrap();
        let adjusted = adjust::adjust_draws(&draws, &est).unwrap();
        for (x, y) in draws.mean().iter().zip(adjusted.mean()) {
            worst_mean = worst_mean.max((x - y).abs() / x.abs().max(1.0));
        }

        let same = SandwichEstimates::from_parts(h.clone(), h).unwrap();
        let moved = adjust::adjust_draws(&draws, &same).unwrap();
        let diff = moved.matrix().sub(draws.matrix()).unwrap().max_abs() / draws.matrix().max_abs();
        worst_ident = worst_ident.max(diff);
    }
    Line {
        id: 7,
        pass: worst_mean <= MEAN_PRESERVATION_TOL
            && worst_proj <= PROJECTION_TOL
            && worst_ident <= IDENTITY_TOL
            && worst_chol <= CHOLESKY_TOL,
        text: format!(
            "mean shift {worst_mean:.1e} (≤{MEAN_PRESERVATION_TOL:.0e}), projection {worst_proj:.1e} (≤{PROJECTION_TOL:.0e}), \
             Ĵ=Ĥ identity {worst_ident:.1e} (≤{IDENTITY_TOL:.0e}), Cholesky round trip {worst_chol:.1e} (≤{CHOLESKY_TOL:.0e})"
        ),
    }
}

fn random_sample(r: &mut ChaCha8Rng, n: usize, d: usize) -> SurveySample {
    let mut x = Vec::with_capacity(n * d);
    for _ in 0..n {
        x.push(1.0);
        for _ in 1..d {
            x.push(StandardNormal.sample(r));
        }
    }
    let y = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
    let w = (0..n).map(|_| r.random_range(0.5..20.0)).collect();
    SurveySample::unclustered(y, Matrix::from_row_major(n, d, x).unwrap(), w).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn derivatives() -> Line {
    let mut r = ChaCha8Rng::seed_from_u64(SEED ^ 8);
    let step = 1e-5;
    let mut worst_score: f64 = 0.0;
    let mut worst_hess: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for trial in 0..100 {
        let d = 1 + trial % 4;
        let n = 20 + trial;
        let s = random_sample(&mut r, n, d);
        let w = model::normalize_weights(s.weight(), n).unwrap();
        worst_sum = worst_sum.max((w.as_slice().iter().sum::<f64>() - n as f64).abs() / n as f64);
        let theta: Vec<f64> = (0..d).map(|_| 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let at = |t: &[f64]| ParamVector::new(t.to_vec()).unwrap();
        let g = model::score(&at(&theta), &s, &w).unwrap();
        let h = model::hessian(&at(&theta), &s, &w).unwrap();

        let mut fd_g = vec![0.0; d];
        let mut fd_h = Matrix::zeros(d, d);
        for k in 0..d {
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[k] += step;
            dn[k] -= step;
            fd_g[k] = (model::log_pseudo_likelihood(&at(&up), &s, &w).unwrap()
                - model::log_pseudo_likelihood(&at(&dn), &s, &w).unwrap())
                / (2.0 * step);
            let gu = model::score(&at(&up), &s, &w).unwrap();
            let gd = model::score(&at(&dn), &s, &w).unwrap();
            for i in 0..d {
                fd_h[(i, k)] = (gu[i] - gd[i]) / (2.0 * step);
            }
        }
        let err: Vec<f64> = g.iter().zip(&fd_g).map(|(a, b)| a - b).collect();
        worst_score = worst_score.max(norm(&err) / norm(&g).max(1.0));
        worst_hess = worst_hess.max(fd_h.sub(&h).unwrap().frobenius() / h.frobenius().max(1.0));
    }
    let q = eval::chi2_quantile(2, 0.9).unwrap();
    let chi_err = (q - 4.605_170_2).abs();
    Line {
        id: 8,
        pass: worst_score <= SCORE_TOL && worst_hess <= HESSIAN_TOL && worst_sum <= WEIGHT_SUM_TOL && chi_err <= CHI2_TOL,
        text: format!(
            "score vs FD {worst_score:.1e} (≤{SCORE_TOL:.0e}), Hessian vs FD {worst_hess:.1e} (≤{HESSIAN_TOL:.0e}), \
             Σw − n {worst_sum:.1e} (≤{WEIGHT_SUM_TOL:.0e}), χ²₂(0.9) = {q:.7} (±{CHI2_TOL:.0e})"
        ),
    }
}

fn mini(scenario: Scenario, big_n: usize, n: usize) -> ScenarioConfig {
    ScenarioConfig { population_size: big_n, sample_size: n, ..ScenarioConfig::reference(scenario) }
}

/// Largest |empirical − analytic| over the population's units.
fn frequency_gap(cfg: &ScenarioConfig, stream: u64) -> f64 {
    let pop = designs::generate_population(cfg, &mut rng::stream(SEED, Purpose::Population, stream)).unwrap();
    let mut r = rng::stream(SEED, Purpose::Design, stream);
    let mut hits = vec![0usize; pop.len()];
    for _ in 0..DESIGN_DRAWS {
        let d = designs::draw_sample(&pop, cfg, &mut r).unwrap();
        for &u in &d.units {
            hits[u] += 1;
        }
    }
    let analytic = analytic_inclusion(&pop, cfg);
    hits.iter()
        .zip(&analytic)
        .map(|(&h, &a)| (h as f64 / DESIGN_DRAWS as f64 - a).abs())
        .fold(0.0, f64::max)
}

/// Closed-form unit inclusion probabilities of the one-stage designs.
fn analytic_inclusion(pop: &designs::Population, cfg: &ScenarioConfig) -> Vec<f64> {
    let n = cfg.sample_size as f64;
    let big_n = cfg.population_size;
    match cfg.scenario {
        Scenario::De1 | Scenario::De5 => vec![n / big_n as f64; big_n],
        Scenario::Pps1 => {
            let s = pop.size.as_ref().unwrap();
            let t: f64 = s.iter().sum();
            s.iter().map(|v| n * v / t).collect()
        }
        Scenario::Spps1 => {
            let s = pop.size.as_ref().unwrap();
            let mut order: Vec<usize> = (0..big_n).collect();
            order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
            let per = big_n / 10;
            let take = n / 10.0;
            let mut pi = vec![0.0; big_n];
            for stratum in order.chunks(per) {
                let t: f64 = stratum.iter().map(|&i| s[i]).sum();
                for &i in stratum {
                    pi[i] = take * s[i] / t;
                }
            }
            pi
        }
        _ => unreachable!("multistage designs are checked per stage"),
    }
}

/// Per-stage frequencies of the three-stage design: PSU, household given
/// PSU, and person given household.
fn pps3_stage_gaps(cfg: &ScenarioConfig, stream: u64) -> [f64; 3] {
    let pop = designs::generate_population(cfg, &mut rng::stream(SEED, Purpose::Population, stream)).unwrap();
    let size = pop.size.as_ref().unwrap();
    let psus = cfg.population_size / 30;
    let households = cfg.population_size / 3;
    let agg: Vec<f64> = size.chunks(30).map(|c| c.iter().sum()).collect();
    let total: f64 = agg.iter().sum();
    let take = (cfg.sample_size / 5) as f64;

    let mut r = rng::stream(SEED, Purpose::Design, stream);
    let mut psu_hits = vec![0usize; psus];
    let mut hh_hits = vec![0usize; households];
    let mut person_hits = vec![0usize; cfg.population_size];
    for _ in 0..DESIGN_DRAWS {
        let d = designs::draw_sample(&pop, cfg, &mut r).unwrap();
        let mut seen = d.units.iter().map(|&u| u / 30).collect::<Vec<_>>();
        seen.dedup();
        for j in seen {
            psu_hits[j] += 1;
        }
        for &u in &d.units {
            hh_hits[u / 3] += 1;
            person_hits[u] += 1;
        }
    }
    let psu_gap = (0..psus)
        .map(|j| (psu_hits[j] as f64 / DESIGN_DRAWS as f64 - take * agg[j] / total).abs())
        .fold(0.0, f64::max);
    let hh_gap = (0..households)
        .filter(|&h| psu_hits[h / 10] > 0)
        .map(|h| (hh_hits[h] as f64 / psu_hits[h / 10] as f64 - 0.5).abs())
        .fold(0.0, f64::max);
    let person_gap = (0..cfg.population_size)
        .filter(|&u| hh_hits[u / 3] > 0)
        .map(|u| {
            let base = u / 3 * 3;
            let hh_total: f64 = size[base..base + 3].iter().sum();
            (person_hits[u] as f64 / hh_hits[u / 3] as f64 - size[u] / hh_total).abs()
        })
        .fold(0.0, f64::max);
    [psu_gap, hh_gap, person_gap]
}

fn design_oracles() -> Line {
    let de = frequency_gap(&mini(Scenario::De1, 20, 10), 1);
    let pps1 = frequency_gap(&mini(Scenario::Pps1, 40, 4), 2);
    let spps1 = frequency_gap(&mini(Scenario::Spps1, 50, 10), 3);
    let stages = pps3_stage_gaps(&mini(Scenario::Pps3, 120, 10), 4);
    let worst = [de, pps1, spps1, stages[0], stages[1], stages[2]].into_iter().fold(0.0, f64::max);
    Line {
        id: 9,
        pass: worst <= FREQUENCY_TOL,
        text: format!(
            "max |freq − π| over {DESIGN_DRAWS} draws (≤{FREQUENCY_TOL}): DE {de:.4}, PPS1 {pps1:.4}, SPPS1 {spps1:.4}, \
             PPS3 stages {:.4}/{:.4}/{:.4}",
            stages[0], stages[1], stages[2]
        ),
    }
}

fn bartlett() -> Line {
    let mut r = rng::stream(SEED, Purpose::Population, 99);
    let n = 2000;
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = StandardNormal.sample(&mut r);
        x.extend([1.0, xi]);
        y.push(u8::from(r.random::<f64>() < model::sigmoid(-0.3 + 0.8 * xi)));
    }
    let s = SurveySample::unclustered(y, Matrix::from_row_major(n, 2, x).unwrap(), vec![1.0; n]).unwrap();
    assert_eq!(PsuLayout::of(&s).unwrap().psu_counts(), vec![n]);
    let theta = model::fit_mle(&s, &NormalizedWeights::unit(n)).unwrap();
    let est = run::estimate_hj(&s, &theta, &ReplicateConfig::new(500, rng::child_seed(SEED, Purpose::Replicate, 99))).unwrap();
    let gap = linalg::relative_frobenius(est.j_hat(), est.h_hat()).unwrap();
    let deff = adjust::deff_params(&est);
    Line {
        id: 10,
        pass: gap <= BARTLETT_TOL && deff.iter().all(|&v| within(v, 0.8, 1.2)),
        text: format!("‖Ĵ−Ĥ‖/‖Ĥ‖ {gap:.3} (≤{BARTLETT_TOL}); DEFF_θ {deff:.3?} ([0.8,1.2])"),
    }
}

fn main() -> ExitCode {
    let mut sums = BTreeMap::new();
    for scenario in Scenario::ALL {
        let mut cfg = SimulationConfig::reference(scenario);
        cfg.scenario.seed = SEED;
        let summary = run::run_scenario(&cfg).unwrap_or_else(|e| panic!("{scenario}: {e}"));
        sums.insert(scenario, summary);
    }
    let mut lines = scenario_criteria(&sums);
    lines.push(linear_algebra());
    lines.push(derivatives());
    lines.push(design_oracles());
    lines.push(bartlett());

    for l in &lines {
        println!("criterion {:>2} {}  {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.text);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
