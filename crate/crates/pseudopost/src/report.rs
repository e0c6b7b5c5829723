//! Summary tables and plot-ready ellipse data.

use std::fmt::Write as _;
use std::path::Path;

use pseudopost_core::eval::{self, SimulationSummary};
use pseudopost_core::sampler::DrawsMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Points per ellipse boundary.
pub const ELLIPSE_POINTS: usize = 100;

/// Flat, two-parameter form of a [`SimulationSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub realizations: usize,
    pub failed: usize,
    pub flagged: usize,
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub cov_unadj_theta0: f64,
    pub cov_unadj_theta1: f64,
    pub cov_adj_theta0: f64,
    pub cov_adj_theta1: f64,
    pub joint_unadj: f64,
    pub joint_unadj_se: f64,
    pub joint_adj: f64,
    pub joint_adj_se: f64,
    pub width_unadj_theta0: f64,
    pub width_unadj_theta1: f64,
    pub width_adj_theta0: f64,
    pub width_adj_theta1: f64,
    pub width_ratio_theta0: f64,
    pub width_ratio_theta1: f64,
    pub deff_theta0: f64,
    pub deff_theta1: f64,
    pub deff_y: f64,
}

impl SummaryRow {
    pub fn from_summary(s: &SimulationSummary) -> Result<Self> {
        if s.deff_theta.len() != 2 {
            return Err(CliError::Config(format!(
                "summary rows are two-parameter; got {}",
                s.deff_theta.len()
            )));
        }
        Ok(SummaryRow {
            scenario: s.scenario.name().to_string(),
            realizations: s.realizations,
            failed: s.failed,
            flagged: s.flagged,
            sample_size: s.sample_size,
            replicates: s.replicates,
            seed: s.seed,
            level: s.level,
            cov_unadj_theta0: s.coverage_unadjusted[0],
            cov_unadj_theta1: s.coverage_unadjusted[1],
            cov_adj_theta0: s.coverage_adjusted[0],
            cov_adj_theta1: s.coverage_adjusted[1],
            joint_unadj: s.joint_unadjusted,
            joint_unadj_se: s.coverage_se(s.joint_unadjusted),
            joint_adj: s.joint_adjusted,
            joint_adj_se: s.coverage_se(s.joint_adjusted),
            width_unadj_theta0: s.width_unadjusted[0],
            width_unadj_theta1: s.width_unadjusted[1],
            width_adj_theta0: s.width_adjusted[0],
            width_adj_theta1: s.width_adjusted[1],
            width_ratio_theta0: s.width_ratio[0],
            width_ratio_theta1: s.width_ratio[1],
            deff_theta0: s.deff_theta[0],
            deff_theta1: s.deff_theta[1],
            deff_y: s.deff_y,
        })
    }
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        return Err(CliError::parse(path, 2, "no summary rows"));
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

/// Aligned text table: marginal and joint coverage, mean widths and design
/// effects, unadjusted / adjusted side by side.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let header = [
        "design", "cov θ0", "cov θ1", "joint", "width θ0", "width θ1", "DEFF θ0", "DEFF θ1", "DEFF y", "M",
    ];
    let pair = |a: f64, b: f64| format!("{a:.2}/{b:.2}");
    let body: Vec<[String; 10]> = rows
        .iter()
        .map(|r| {
            [
                r.scenario.clone(),
                pair(r.cov_unadj_theta0, r.cov_adj_theta0),
                pair(r.cov_unadj_theta1, r.cov_adj_theta1),
                pair(r.joint_unadj, r.joint_adj),
                pair(r.width_unadj_theta0, r.width_adj_theta0),
                pair(r.width_unadj_theta1, r.width_adj_theta1),
                format!("{:.2}", r.deff_theta0),
                format!("{:.2}", r.deff_theta1),
                format!("{:.2}", r.deff_y),
                format!("{}", r.realizations - r.failed),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &mut header.iter().copied());
    writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")).unwrap();
    for row in &body {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out.push_str("coverage and width cells are unadjusted/adjusted\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsePoint {
    pub design: String,
    pub draws: String,
    pub index: usize,
    pub theta0: f64,
    pub theta1: f64,
}

/// Boundary of the draws' `level` covariance ellipse.
pub fn ellipse(design: &str, label: &str, draws: &DrawsMatrix, level: f64) -> Result<Vec<EllipsePoint>> {
    let pts = eval::ellipse_points(&draws.mean(), &draws.covariance(), level, ELLIPSE_POINTS)?;
    Ok(pts
        .into_iter()
        .enumerate()
        .map(|(index, p)| EllipsePoint {
            design: design.to_string(),
            draws: label.to_string(),
            index,
            theta0: p[0],
            theta1: p[1],
        })
        .collect())
}

/// Adjusted over unadjusted ellipse area.
pub fn area_ratio(unadjusted: &DrawsMatrix, adjusted: &DrawsMatrix, level: f64) -> Result<f64> {
    Ok(eval::ellipse_area(&adjusted.covariance(), level)? / eval::ellipse_area(&unadjusted.covariance(), level)?)
}

pub fn write_ellipses(path: &Path, points: &[EllipsePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for p in points {
        w.serialize(p).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pseudopost_core::Matrix;

    fn row(name: &str) -> SummaryRow {
        SummaryRow {
            scenario: name.into(),
            realizations: 100,
            failed: 0,
            flagged: 0,
            sample_size: 200,
            replicates: 100,
            seed: 3,
            level: 0.9,
            cov_unadj_theta0: 0.5,
            cov_unadj_theta1: 0.5,
            cov_adj_theta0: 0.9,
            cov_adj_theta1: 0.9,
            joint_unadj: 0.32,
            joint_unadj_se: 0.0466,
            joint_adj: 0.88,
            joint_adj_se: 0.0325,
            width_unadj_theta0: 0.55,
            width_unadj_theta1: 0.7,
            width_adj_theta0: 1.24,
            width_adj_theta1: 1.6,
            width_ratio_theta0: 2.25,
            width_ratio_theta1: 2.28,
            deff_theta0: 5.06,
            deff_theta1: 5.26,
            deff_y: 5.1,
        }
    }

    #[test]
    fn summary_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = vec![row("DE5"), row("PPS1")];
        write_summary_csv(&p, &rows).unwrap();
        assert_eq!(read_summary_csv(&p).unwrap(), rows);
    }

    #[test]
    fn table_is_aligned() {
        let t = render_table(&[row("DE5"), row("SPPS3")]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("design"));
        assert!(lines[2].contains("0.32/0.88"));
        // the joint column starts at the same character offset on every row
        let col = |l: &str| l.chars().collect::<Vec<_>>().windows(9).position(|w| w.iter().collect::<String>() == "0.32/0.88");
        assert_eq!(col(lines[2]), col(lines[3]));
    }

    #[test]
    fn identity_ellipse_is_circle() {
        // four symmetric draws repeated: mean 0, covariance I
        let base = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let rows: Vec<[f64; 2]> = base.iter().cycle().take(400).copied().collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let d = DrawsMatrix::new(m.scaled((399.0f64 / 400.0).sqrt()), vec!["a".into(), "b".into()]).unwrap();
        let pts = ellipse("X", "unadjusted", &d, 0.9).unwrap();
        assert_eq!(pts.len(), ELLIPSE_POINTS);
        for p in pts {
            let r = (p.theta0 * p.theta0 + p.theta1 * p.theta1).sqrt();
            assert!((r - 4.605_170_186f64.sqrt()).abs() < 1e-9, "{r}");
        }
        assert!((area_ratio(&d, &d, 0.9).unwrap() - 1.0).abs() < 1e-12);
    }
}
