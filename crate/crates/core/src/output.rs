//! File formats: ladder, basin-map and sweep CSVs and the JSON index reports.
//!
//! Numbers are written in Rust's shortest round-trip form and infinities as
//! the strings `"+inf"`/`"-inf"`, so equal results always give equal bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::analytic::analytic_sigma;
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::fit::{FitBasis, FitOptions, IndexEstimate, SlopeFit, Weighting};
use crate::integrator::IntegratorConfig;
use crate::measure::{LocalIndexReport, MapCell, MeasureOptions, MeasureSample};
use crate::sampling::Sampler;
use crate::system::{Family, SystemSpec};

pub const LADDER_HEADER: &str = "eps,delta,n_total,n_basin,n_local,n_timeout,sigma_hat_fraction";
pub const MAP_HEADER: &str = "x,y,label";
pub const SWEEP_HEADER: &str = "a,sigma_expected,sigma_measured";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per rung; `delta` and `n_local` are empty for global runs and
/// `sigma_hat_fraction` is the fitted (local when present) fraction.
pub fn ladder_csv(ladder: &[MeasureSample]) -> String {
    let mut out = String::from(LADDER_HEADER);
    out.push('\n');
    for s in ladder {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.eps,
            opt(s.delta),
            s.n_total,
            s.n_basin,
            opt(s.n_local),
            s.n_timeout,
            s.fitted_fraction()
        );
    }
    out
}

pub fn map_csv(cells: &[MapCell]) -> String {
    let mut out = String::from(MAP_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(out, "{},{},{}", c.x, c.y, c.label.name());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub a: f64,
    pub sigma_expected: ExtendedReal,
    pub sigma_measured: ExtendedReal,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.a, r.sigma_expected, r.sigma_measured);
    }
    out
}

/// Every numerical convention behind a reported index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conventions {
    pub neighbourhood: &'static str,
    pub sampler: Sampler,
    pub seed: u64,
    pub eps_ladder: Vec<f64>,
    pub samples_per_rung: Vec<u64>,
    /// A fraction is taken as identically 0 (or 1) when every rung has fewer
    /// than this many hits (or misses), i.e. lies below `degenerate_hits/n`.
    pub degenerate_hits: u64,
    pub slope_cutoff: f64,
    pub min_rungs: usize,
    pub min_decades: f64,
    pub weighting: Weighting,
    pub timeouts: &'static str,
    pub infinity: &'static str,
    pub cone_fast_path: bool,
    pub integrator: IntegratorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_verdict: Option<&'static str>,
}

impl Conventions {
    pub fn new(
        spec: &SystemSpec,
        ladder: &[MeasureSample],
        seed: u64,
        opts: &MeasureOptions,
        fit: &FitOptions,
    ) -> Self {
        Self {
            neighbourhood: match spec.family {
                Family::PiecewiseLinear => "square [-eps, eps]^2",
                _ => "quadrant square [0, eps]^2, mirrored to the other quadrants",
            },
            sampler: opts.sampler,
            seed,
            eps_ladder: ladder.iter().map(|s| s.eps).collect(),
            samples_per_rung: ladder.iter().map(|s| s.n_total).collect(),
            degenerate_hits: fit.degenerate_hits,
            slope_cutoff: fit.slope_cutoff,
            min_rungs: fit.min_rungs,
            min_decades: fit.min_decades,
            weighting: fit.weighting,
            timeouts: "counted outside the basin and reported per rung",
            infinity: "strings \"+inf\" and \"-inf\"",
            cone_fast_path: opts.oracle_cones,
            integrator: opts.integrator,
            local_verdict: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReport {
    pub system: SystemSpec,
    pub basis: FitBasis,
    pub sigma_minus: ExtendedReal,
    pub sigma_plus: ExtendedReal,
    pub sigma: ExtendedReal,
    pub stderr: f64,
    pub analytic_sigma: ExtendedReal,
    pub analytic_sigma_loc: ExtendedReal,
    pub fit_minus: Option<SlopeFit>,
    pub fit_plus: Option<SlopeFit>,
    pub warnings: Vec<String>,
    pub conventions: Conventions,
}

impl IndexReport {
    pub fn new(spec: &SystemSpec, est: &IndexEstimate, conventions: Conventions) -> Self {
        let (sigma, sigma_loc) = analytic_sigma(spec);
        Self {
            system: *spec,
            basis: est.basis,
            sigma_minus: est.sigma_minus,
            sigma_plus: est.sigma_plus,
            sigma: est.sigma,
            stderr: est.slope_stderr,
            analytic_sigma: sigma,
            analytic_sigma_loc: sigma_loc,
            fit_minus: est.fit_minus,
            fit_plus: est.fit_plus,
            warnings: est.warnings.clone(),
            conventions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub sigma_minus: ExtendedReal,
    pub sigma_plus: ExtendedReal,
    pub sigma: ExtendedReal,
    pub stderr: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalReport {
    pub system: SystemSpec,
    /// Fits in order of decreasing δ.
    pub per_delta: Vec<DeltaRow>,
    /// The fit at the smallest δ.
    pub verdict: DeltaRow,
    pub analytic_sigma_loc: ExtendedReal,
    pub conventions: Conventions,
}

impl LocalReport {
    pub fn new(spec: &SystemSpec, report: &LocalIndexReport, mut conventions: Conventions) -> Self {
        conventions.local_verdict = Some("fit at the smallest delta");
        let row = |d: &crate::measure::DeltaFit| DeltaRow {
            delta: d.delta,
            sigma_minus: d.estimate.sigma_minus,
            sigma_plus: d.estimate.sigma_plus,
            sigma: d.estimate.sigma,
            stderr: d.estimate.slope_stderr,
            warnings: d.estimate.warnings.clone(),
        };
        let per_delta: Vec<DeltaRow> = report.per_delta.iter().map(row).collect();
        let verdict = per_delta.last().cloned().expect("local report has at least one delta");
        Self { system: *spec, per_delta, verdict, analytic_sigma_loc: analytic_sigma(spec).1, conventions }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_indices;
    use crate::integrator::BasinLabel;
    use crate::measure::{default_ladder, MeasureOptions};

    fn quarter_ladder() -> Vec<MeasureSample> {
        default_ladder().iter().map(|&e| MeasureSample::synthetic(e, 1000, 250)).collect()
    }

    #[test]
    fn ladder_schema() {
        let mut ladder = quarter_ladder();
        ladder[1].delta = Some(0.3);
        ladder[1].n_local = Some(100);
        let csv = ladder_csv(&ladder);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], LADDER_HEADER);
        assert_eq!(lines[1], "0.1,,1000,250,,0,0.25");
        assert_eq!(lines[2].split(',').nth(1), Some("0.3"));
        assert_eq!(lines[2].split(',').nth(4), Some("100"));
        assert_eq!(lines[2].split(',').nth(6), Some("0.1"));
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn map_and_sweep_schema() {
        let cells = [MapCell { x: -0.5, y: 0.25, label: BasinLabel::OutOfBasin }];
        assert_eq!(map_csv(&cells), "x,y,label\n-0.5,0.25,out_of_basin\n");
        let rows = [SweepRow {
            a: 1.5,
            sigma_expected: ExtendedReal::Finite(0.5),
            sigma_measured: ExtendedReal::PosInf,
        }];
        assert_eq!(sweep_csv(&rows), "a,sigma_expected,sigma_measured\n1.5,0.5,+inf\n");
    }

    #[test]
    fn report_carries_conventions() {
        let spec = SystemSpec::piecewise();
        let ladder = quarter_ladder();
        let est = fit_indices(&ladder).unwrap();
        let opts = MeasureOptions::for_spec(&spec);
        let conv = Conventions::new(&spec, &ladder, 3, &opts, &FitOptions::default());
        let json = to_json(&IndexReport::new(&spec, &est, conv)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["sigma_minus", "sigma_plus", "sigma", "stderr", "conventions", "warnings"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["system"], "piecewise");
        assert_eq!(v["conventions"]["degenerate_hits"], 2);
        assert_eq!(v["conventions"]["slope_cutoff"], 50.0);
        assert_eq!(v["conventions"]["sampler"], "sobol");
        assert_eq!(v["conventions"]["seed"], 3);
        assert!(json.ends_with("}\n"));
    }

    #[test]
    fn infinite_values_are_strings() {
        let spec = SystemSpec::phi_system();
        let ladder: Vec<_> = default_ladder().iter().map(|&e| MeasureSample::synthetic(e, 1000, 1000)).collect();
        let est = fit_indices(&ladder).unwrap();
        let opts = MeasureOptions::for_spec(&spec);
        let conv = Conventions::new(&spec, &ladder, 0, &opts, &FitOptions::default());
        let v: serde_json::Value = serde_json::from_str(&to_json(&IndexReport::new(&spec, &est, conv)).unwrap()).unwrap();
        assert_eq!(v["sigma_plus"], "+inf");
        assert_eq!(v["sigma"], "+inf");
        assert_eq!(v["analytic_sigma_loc"], "-inf");
    }

    #[test]
    fn write_file_creates_directories() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/c.txt");
        write_file(&path, "x\n").unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "x\n");
    }
}
