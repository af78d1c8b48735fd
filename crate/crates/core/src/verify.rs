//! Reproduction checks: measured indices against the closed-form values, with
//! fixed tolerances, rendered as a pass/fail table.

use std::fmt::Write as _;

use crate::analytic::{analytic_sigma, sigma_eps_bounds, Cones};
use crate::error::Result;
use crate::extended::ExtendedReal;
use crate::fit::FitOptions;
use crate::measure::{
    default_ladder, default_local_ladder, estimate_index, geometric_ladder, local_index,
    uniform_rungs, MeasureOptions, MeasureSample, Rung,
};
use crate::output::{ladder_csv, to_json, Conventions, IndexReport, LocalReport};
use crate::sampling::Sampler;
use crate::system::{Family, SystemSpec};

/// Tolerance on σ for power-attract.
pub const ATTRACT_TOL: f64 = 0.10;
/// Tolerance on σ for power-repel, whose basin fraction shrinks with ε.
pub const REPEL_TOL: f64 = 0.20;
/// Tolerance on σ under the coordinate change `x = u^p`.
pub const TRANSFORM_TOL: f64 = 0.15;
pub const PIECEWISE_SIGMA_TOL: f64 = 0.05;
/// Allowed deviation of each rung's fraction from 1/4.
pub const PIECEWISE_RUNG_TOL: f64 = 0.01;
/// Width, in binomial standard errors, of the slack around the Σ_ε bounds.
pub const BOUND_SLACK_SE: f64 = 3.0;
/// δ values of the local φ-system run.
pub const PHI_DELTAS: [f64; 3] = [0.3, 0.1, 0.03];
/// Slack, in standard errors, when checking that the per-δ slopes grow.
pub const MONOTONE_SLACK_SE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    /// Fit σ on a ladder and compare with the closed form.
    Index {
        rungs: Vec<Rung>,
        tol: f64,
        /// Also check every rung against the Σ_ε bounds.
        bounds: bool,
        /// Also check every rung's fraction against `(value, tol)`.
        rung_value: Option<(f64, f64)>,
    },
    /// Global run that must report σ = +∞ with a full basin at every rung.
    FullBasin { rungs: Vec<Rung> },
    /// Local run over decreasing δ that must end in σ_loc = −∞.
    LocalCollapse { deltas: Vec<f64>, samples: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub name: String,
    pub spec: SystemSpec,
    pub plan: Plan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub case: String,
    pub check: String,
    pub expected: String,
    pub measured: String,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case: String,
    pub rows: Vec<Row>,
    /// Files produced by the run, as `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn spec(text: &str) -> SystemSpec {
    text.parse().expect("preset system")
}

fn index_case(name: &str, system: &str, rungs: Vec<Rung>, tol: f64, bounds: bool) -> Case {
    Case { name: name.into(), spec: spec(system), plan: Plan::Index { rungs, tol, bounds, rung_value: None } }
}

/// The full reproduction suite.
///
/// Power-repel ladders start below ε = 0.02 because the basin only follows
/// its asymptotic law `Σ_ε ≈ c·ε^{1/a−1}` there; at a = 1/3 the fraction
/// falls to ~10⁻⁷, so those rungs take 4·10⁶ samples.
pub fn preset_cases() -> Vec<Case> {
    let default = || uniform_rungs(&default_ladder(), 100_000);
    let decades = |hi: f64, n: u64| uniform_rungs(&geometric_ladder(hi, hi * 10f64.powf(-1.5), 8), n);
    let mut cases = vec![
        index_case("attract a=1.5", "power-attract a=1.5", default(), ATTRACT_TOL, true),
        index_case("attract a=2", "power-attract a=2", default(), ATTRACT_TOL, true),
        index_case("attract a=3", "power-attract a=3", default(), ATTRACT_TOL, true),
        index_case(
            "repel a=1/2",
            "power-repel a=0.5",
            uniform_rungs(&geometric_ladder(0.02, 5e-4, 8), 1_000_000),
            REPEL_TOL,
            true,
        ),
        index_case("repel a=1/3", &format!("power-repel a={}", 1.0 / 3.0), decades(0.01, 4_000_000), REPEL_TOL, true),
        Case {
            name: "piecewise".into(),
            spec: SystemSpec::piecewise(),
            plan: Plan::Index {
                rungs: default(),
                tol: PIECEWISE_SIGMA_TOL,
                bounds: false,
                rung_value: Some((0.25, PIECEWISE_RUNG_TOL)),
            },
        },
        index_case("transform a=2 p=1", "power-attract a=2 p=1", default(), TRANSFORM_TOL, false),
        index_case("transform a=2 p=2", "power-attract a=2 p=2", decades(0.5, 1_000_000), TRANSFORM_TOL, false),
    ];
    cases.extend(phi_cases(100_000, 20_000));
    cases
}

fn phi_cases(samples: u64, local_samples: u64) -> Vec<Case> {
    vec![
        Case {
            name: "phi".into(),
            spec: SystemSpec::phi_system(),
            plan: Plan::FullBasin { rungs: uniform_rungs(&default_ladder(), samples) },
        },
        Case {
            name: "phi local".into(),
            spec: SystemSpec::phi_system(),
            plan: Plan::LocalCollapse { deltas: PHI_DELTAS.to_vec(), samples: local_samples },
        },
    ]
}

/// Tolerance on σ used for a system outside the preset list.
pub fn family_tolerance(spec: &SystemSpec) -> f64 {
    match (spec.family, spec.p) {
        (Family::PowerAttract, None) => ATTRACT_TOL,
        (Family::PowerAttract, Some(_)) => TRANSFORM_TOL,
        (Family::PowerRepel, _) => REPEL_TOL,
        (Family::PiecewiseLinear, _) => PIECEWISE_SIGMA_TOL,
        (Family::PhiSystem, _) => 0.0,
    }
}

/// The preset cases for `spec`, or a case on the default ladder with the
/// family's tolerance.
pub fn cases_for(spec: &SystemSpec) -> Vec<Case> {
    let presets: Vec<Case> = preset_cases().into_iter().filter(|c| c.spec == *spec).collect();
    if !presets.is_empty() {
        return presets;
    }
    let rungs = uniform_rungs(&default_ladder(), 100_000);
    match spec.family {
        Family::PhiSystem => phi_cases(100_000, 20_000),
        Family::PiecewiseLinear => unreachable!("piecewise is a preset"),
        _ => vec![Case {
            name: spec.to_string(),
            spec: *spec,
            plan: Plan::Index {
                rungs,
                tol: family_tolerance(spec),
                bounds: spec.p.is_none(),
                rung_value: None,
            },
        }],
    }
}

impl Case {
    /// Replaces the ladder and/or the per-rung sample count.
    pub fn with_overrides(mut self, ladder: Option<&[f64]>, samples: Option<u64>) -> Self {
        match &mut self.plan {
            Plan::Index { rungs, .. } | Plan::FullBasin { rungs } => {
                let eps: Vec<f64> = ladder.map_or_else(|| rungs.iter().map(|r| r.eps).collect(), <[f64]>::to_vec);
                let n = samples.unwrap_or_else(|| rungs.first().map_or(100_000, |r| r.n));
                *rungs = uniform_rungs(&eps, n);
            }
            Plan::LocalCollapse { samples: s, .. } => {
                if let Some(n) = samples {
                    *s = n;
                }
            }
        }
        self
    }
}

fn fmt_x(v: ExtendedReal) -> String {
    format!("{v:.4}")
}

/// `Σ̂` lies within the bounds, or within `BOUND_SLACK_SE` binomial standard
/// errors (evaluated at the nearer bound) of them.
pub fn within_bounds(sample: &MeasureSample, lower: f64, upper: f64) -> bool {
    let f = sample.fraction();
    if (lower..=upper).contains(&f) {
        return true;
    }
    let b = if f < lower { lower } else { upper };
    let se = (b * (1.0 - b) / sample.n_total as f64).sqrt();
    (f - b).abs() <= BOUND_SLACK_SE * se
}

/// Runs one case. Errors are returned only for invalid input; numerical
/// trouble shows up as failing rows.
pub fn run_case(case: &Case, seed: u64, sampler: Sampler) -> Result<CaseResult> {
    let mut opts = MeasureOptions::for_spec(&case.spec);
    opts.sampler = sampler;
    let fit_opts = FitOptions::for_sampler(sampler);
    let (sigma, sigma_loc) = analytic_sigma(&case.spec);
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    let mut row = |check: &str, expected: String, measured: String, tolerance: String, pass: bool| {
        rows.push(Row { case: case.name.clone(), check: check.into(), expected, measured, tolerance, pass });
    };

    match &case.plan {
        Plan::Index { rungs, tol, bounds, rung_value } => {
            let est = estimate_index(&case.spec, rungs, seed, &opts, &fit_opts);
            let est = match est {
                Ok(e) => e,
                Err(e) if e.is_numerical() => {
                    row("sigma", fmt_x(sigma), format!("error: {e}"), format!("±{tol}"), false);
                    return Ok(CaseResult { case: case.name.clone(), rows, artifacts });
                }
                Err(e) => return Err(e),
            };
            row(
                "sigma",
                fmt_x(sigma),
                format!("{} (se {:.4})", fmt_x(est.sigma), est.slope_stderr),
                format!("±{tol}"),
                est.sigma.within(sigma, *tol),
            );
            if *bounds {
                let cones = Cones::default_for(&case.spec);
                let mut inside = 0;
                for s in &est.ladder {
                    let b = sigma_eps_bounds(&case.spec, s.eps, cones)?;
                    inside += within_bounds(s, b.lower, b.upper) as usize;
                }
                row(
                    "Sigma_eps within bounds",
                    format!("{} rungs", est.ladder.len()),
                    format!("{inside} rungs"),
                    format!("{BOUND_SLACK_SE} se"),
                    inside == est.ladder.len(),
                );
            }
            if let Some((value, rtol)) = rung_value {
                let worst = est.ladder.iter().map(|s| (s.fraction() - value).abs()).fold(0.0, f64::max);
                row(
                    "Sigma_eps at every rung",
                    format!("{value}"),
                    format!("max dev {worst:.5}"),
                    format!("±{rtol}"),
                    worst <= *rtol,
                );
            }
            let conv = Conventions::new(&case.spec, &est.ladder, seed, &opts, &fit_opts);
            artifacts.push(("ladder.csv".into(), ladder_csv(&est.ladder)));
            artifacts.push(("report.json".into(), to_json(&IndexReport::new(&case.spec, &est, conv))?));
        }
        Plan::FullBasin { rungs } => {
            let est = estimate_index(&case.spec, rungs, seed, &opts, &fit_opts)?;
            row("sigma", fmt_x(sigma), fmt_x(est.sigma), "exact".into(), est.sigma == sigma);
            let full = est
                .ladder
                .iter()
                .filter(|s| s.fraction() >= 1.0 - fit_opts.degenerate_hits as f64 / s.n_total as f64)
                .count();
            row(
                "Sigma_eps >= 1 - 2/n",
                format!("{} rungs", est.ladder.len()),
                format!("{full} rungs"),
                "exact".into(),
                full == est.ladder.len(),
            );
            let conv = Conventions::new(&case.spec, &est.ladder, seed, &opts, &fit_opts);
            artifacts.push(("ladder.csv".into(), ladder_csv(&est.ladder)));
            artifacts.push(("report.json".into(), to_json(&IndexReport::new(&case.spec, &est, conv))?));
        }
        Plan::LocalCollapse { deltas, samples } => {
            let report = local_index(
                &case.spec,
                deltas,
                |d| uniform_rungs(&default_local_ladder(d), *samples),
                seed,
                &opts,
                &fit_opts,
            )?;
            let mut prev: Option<(ExtendedReal, f64)> = None;
            let mut monotone = true;
            for d in &report.per_delta {
                let e = &d.estimate;
                row(
                    &format!("sigma_loc,- at delta={}", d.delta),
                    "grows".into(),
                    format!("{} (se {:.4})", fmt_x(e.sigma_minus), e.slope_stderr),
                    "-".into(),
                    true,
                );
                if let Some((p, se)) = prev {
                    monotone &= match (p, e.sigma_minus) {
                        (_, ExtendedReal::PosInf) => true,
                        (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => {
                            b >= a - MONOTONE_SLACK_SE * se.hypot(e.slope_stderr)
                        }
                        _ => false,
                    };
                }
                prev = Some((e.sigma_minus, e.slope_stderr));
            }
            let last = report.verdict();
            row(
                "sigma_loc,- non-decreasing as delta shrinks",
                "yes".into(),
                if monotone { "yes" } else { "no" }.into(),
                format!("{MONOTONE_SLACK_SE} se"),
                monotone,
            );
            let beyond = match last.sigma_minus {
                ExtendedReal::PosInf => true,
                ExtendedReal::Finite(v) => v > fit_opts.slope_cutoff,
                ExtendedReal::NegInf => false,
            };
            row(
                "sigma_loc,- beyond cutoff at smallest delta",
                format!("> {}", fit_opts.slope_cutoff),
                fmt_x(last.sigma_minus),
                "-".into(),
                beyond,
            );
            row("sigma_loc", fmt_x(sigma_loc), fmt_x(last.sigma), "exact".into(), last.sigma == sigma_loc);
            for d in &report.per_delta {
                artifacts.push((format!("ladder_delta_{}.csv", d.delta), ladder_csv(&d.estimate.ladder)));
            }
            let all: Vec<MeasureSample> =
                report.per_delta.iter().flat_map(|d| d.estimate.ladder.iter().cloned()).collect();
            let conv = Conventions::new(&case.spec, &all, seed, &opts, &fit_opts);
            artifacts.push(("local_report.json".into(), to_json(&LocalReport::new(&case.spec, &report, conv))?));
        }
    }
    Ok(CaseResult { case: case.name.clone(), rows, artifacts })
}

/// Fixed-width table with one line per check.
pub fn render_table(rows: &[Row]) -> String {
    let headers = ["case", "check", "expected", "measured", "tolerance", "result"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.case.clone(),
                r.check.clone(),
                r.expected.clone(),
                r.measured.clone(),
                r.tolerance.clone(),
                if r.pass { "PASS" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let mut width = headers.map(str::len);
    for c in &cells {
        for (w, s) in width.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, c: &[&str]| {
        let parts: Vec<String> = c.iter().zip(width).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &headers);
    for c in &cells {
        line(&mut out, &c.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
