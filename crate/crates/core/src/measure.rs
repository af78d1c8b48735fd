//! Sampling estimates of `Σ_ε(0)` and `Σ_{ε,δ}(0)`, the local index and
//! labelled basin maps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{self, FitBasis, FitOptions, IndexEstimate};
use crate::integrator::{classify_unchecked, BasinLabel, IntegratorConfig};
use crate::sampling::{stream_for_eps, PointStream, Sampler};
use crate::system::{Family, State, SystemSpec};

const BATCH: u64 = 4096;
/// Timeout fraction above which a warning is attached to the sample.
pub const TIMEOUT_WARN_FRACTION: f64 = 0.005;
/// Fraction of failed classifications that aborts a rung.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSample {
    pub eps: f64,
    pub delta: Option<f64>,
    pub n_total: u64,
    pub n_basin: u64,
    pub n_local: Option<u64>,
    pub n_timeout: u64,
    /// Points whose integration failed; counted outside the basin.
    pub n_failed: u64,
    pub seed: u64,
}

impl MeasureSample {
    /// A sample with the given global count and nothing else, for tests and
    /// for feeding externally computed fractions to the fit.
    pub fn synthetic(eps: f64, n_total: u64, n_basin: u64) -> Self {
        Self { eps, delta: None, n_total, n_basin, n_local: None, n_timeout: 0, n_failed: 0, seed: 0 }
    }

    pub fn fraction(&self) -> f64 {
        self.n_basin as f64 / self.n_total as f64
    }

    pub fn local_fraction(&self) -> Option<f64> {
        self.n_local.map(|l| l as f64 / self.n_total as f64)
    }

    /// Fraction used by the fit: local when a δ is set, global otherwise.
    pub fn fitted_fraction(&self) -> f64 {
        self.local_fraction().unwrap_or_else(|| self.fraction())
    }

    /// Binomial standard error of [`MeasureSample::fitted_fraction`].
    pub fn binomial_stderr(&self) -> f64 {
        let p = self.fitted_fraction();
        (p * (1.0 - p) / self.n_total as f64).sqrt()
    }

    pub fn timeout_warning(&self) -> Option<String> {
        let frac = self.n_timeout as f64 / self.n_total as f64;
        (frac > TIMEOUT_WARN_FRACTION).then(|| {
            format!(
                "eps = {}: {:.3}% of points timed out (counted outside the basin)",
                self.eps,
                100.0 * frac
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureOptions {
    pub sampler: Sampler,
    pub integrator: IntegratorConfig,
    pub oracle_cones: bool,
}

impl MeasureOptions {
    pub fn for_spec(spec: &SystemSpec) -> Self {
        Self {
            sampler: Sampler::default(),
            integrator: IntegratorConfig::for_spec(spec),
            oracle_cones: true,
        }
    }
}

/// Maps a unit-square point into `B_ε(0)`: the quadrant square `[0, ε]²`, or
/// `[−ε, ε]²` for the piecewise-linear field.
fn place(spec: &SystemSpec, eps: f64, u: [f64; 2]) -> State {
    match spec.family {
        Family::PiecewiseLinear => State::new((2.0 * u[0] - 1.0) * eps, (2.0 * u[1] - 1.0) * eps),
        _ => State::new(u[0] * eps, u[1] * eps),
    }
}

#[derive(Default, Clone, Copy)]
struct Counts {
    basin: u64,
    local: u64,
    timeout: u64,
    failed: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            basin: self.basin + o.basin,
            local: self.local + o.local,
            timeout: self.timeout + o.timeout,
            failed: self.failed + o.failed,
        }
    }
}

fn classify_point(spec: &SystemSpec, s: State, delta: Option<f64>, opts: &MeasureOptions) -> Counts {
    let mut c = Counts::default();
    let global_cfg = opts.integrator.with_delta(None);
    if let Some(d) = delta {
        match classify_unchecked(spec, s, &global_cfg.with_delta(Some(d)), opts.oracle_cones) {
            Ok(r) => {
                c.timeout += r.timed_out() as u64;
                if r.label == BasinLabel::InLocalBasin {
                    c.local = 1;
                    c.basin = 1;
                    return c;
                }
            }
            Err(_) => {
                c.failed = 1;
                return c;
            }
        }
    }
    match classify_unchecked(spec, s, &global_cfg, opts.oracle_cones) {
        Ok(r) => {
            c.timeout += r.timed_out() as u64;
            c.basin = (r.label == BasinLabel::InBasin) as u64;
        }
        Err(_) => c.failed = 1,
    }
    c.timeout = c.timeout.min(1);
    c
}

/// Estimates `Σ_ε` (and `Σ_{ε,δ}` when `delta` is set) from `n` points.
/// Deterministic in `(spec, eps, delta, n, seed, opts)` whatever the number of
/// worker threads.
pub fn estimate_fraction(
    spec: &SystemSpec,
    eps: f64,
    delta: Option<f64>,
    n: u64,
    seed: u64,
    opts: &MeasureOptions,
) -> Result<MeasureSample> {
    spec.validate()?;
    opts.integrator.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if n < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 samples, got {n}")));
    }
    if let Some(d) = delta {
        opts.integrator.with_delta(Some(d)).validate()?;
    }
    let stream = PointStream::new(opts.sampler, seed, stream_for_eps(eps));
    let batches = n.div_ceil(BATCH);
    let counts = (0..batches)
        .into_par_iter()
        .map(|b| {
            let start = b * BATCH;
            let len = BATCH.min(n - start) as usize;
            let mut pts = vec![[0.0; 2]; len];
            stream.fill(start, &mut pts);
            pts.iter()
                .map(|&u| classify_point(spec, place(spec, eps, u), delta, opts))
                .fold(Counts::default(), |a, b| a + b)
        })
        .reduce(Counts::default, |a, b| a + b);

    if counts.failed as f64 > MAX_FAILURE_FRACTION * n as f64 {
        return Err(Error::TooManyFailures { failed: counts.failed, total: n });
    }
    Ok(MeasureSample {
        eps,
        delta,
        n_total: n,
        n_basin: counts.basin,
        n_local: delta.map(|_| counts.local),
        n_timeout: counts.timeout,
        n_failed: counts.failed,
        seed,
    })
}

/// One rung of a ladder: radius and number of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rung {
    pub eps: f64,
    pub n: u64,
}

/// `count` radii geometric from `hi` down to `lo`.
pub fn geometric_ladder(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    (0..count)
        .map(|i| hi * (lo / hi).powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Power-repel fractions follow their power law only below this radius.
pub const REPEL_ASYMPTOTIC_EPS: f64 = 0.02;

/// Warning for a power-repel ladder that starts above [`REPEL_ASYMPTOTIC_EPS`].
pub fn preasymptotic_warning(spec: &SystemSpec, eps: &[f64]) -> Option<String> {
    let top = eps.iter().copied().fold(0.0, f64::max);
    (spec.family == Family::PowerRepel && top > REPEL_ASYMPTOTIC_EPS).then(|| {
        format!(
            "power-repel rungs above eps = {REPEL_ASYMPTOTIC_EPS} are pre-asymptotic and bias the slope; \
             a ladder from {REPEL_ASYMPTOTIC_EPS} down 1.5 decades is reliable"
        )
    })
}

/// Eight rungs from 1e-1 down to 1e-3.
pub fn default_ladder() -> Vec<f64> {
    geometric_ladder(1e-1, 1e-3, 8)
}

/// Eight rungs from `δ/10` down to `δ/1000`.
pub fn default_local_ladder(delta: f64) -> Vec<f64> {
    geometric_ladder(delta / 10.0, delta / 1000.0, 8)
}

pub fn uniform_rungs(eps: &[f64], n: u64) -> Vec<Rung> {
    eps.iter().map(|&eps| Rung { eps, n }).collect()
}

pub fn estimate_ladder(
    spec: &SystemSpec,
    rungs: &[Rung],
    delta: Option<f64>,
    seed: u64,
    opts: &MeasureOptions,
) -> Result<Vec<MeasureSample>> {
    rungs
        .iter()
        .map(|r| estimate_fraction(spec, r.eps, delta, r.n, seed, opts))
        .collect()
}

/// Samples the ladder and fits the global index.
pub fn estimate_index(
    spec: &SystemSpec,
    rungs: &[Rung],
    seed: u64,
    opts: &MeasureOptions,
    fit_opts: &FitOptions,
) -> Result<IndexEstimate> {
    fit::check_ladder(&rungs.iter().map(|r| r.eps).collect::<Vec<_>>(), fit_opts)?;
    let ladder = estimate_ladder(spec, rungs, None, seed, opts)?;
    let mut est = fit::fit_indices_with(&ladder, FitBasis::Global, fit_opts)?;
    est.warnings.extend(ladder.iter().filter_map(MeasureSample::timeout_warning));
    est.warnings.extend(preasymptotic_warning(spec, &rungs.iter().map(|r| r.eps).collect::<Vec<_>>()));
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaFit {
    pub delta: f64,
    pub estimate: IndexEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalIndexReport {
    /// One fit per δ, in decreasing δ.
    pub per_delta: Vec<DeltaFit>,
}

impl LocalIndexReport {
    /// The fit at the smallest δ, taken as the value of the outer limit.
    pub fn verdict(&self) -> &IndexEstimate {
        &self.per_delta.last().expect("at least one delta").estimate
    }

    pub fn sigma_minus_sequence(&self) -> Vec<crate::ExtendedReal> {
        self.per_delta.iter().map(|d| d.estimate.sigma_minus).collect()
    }
}

/// Local index: for each δ (largest first), samples `Σ_{ε,δ}` on the rungs
/// returned by `rungs_for` and fits the ε-slopes. Every rung must satisfy
/// `ε ≤ δ/10`.
pub fn local_index(
    spec: &SystemSpec,
    deltas: &[f64],
    rungs_for: impl Fn(f64) -> Vec<Rung>,
    seed: u64,
    opts: &MeasureOptions,
    fit_opts: &FitOptions,
) -> Result<LocalIndexReport> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("local index needs at least one delta".into()));
    }
    let mut ds = deltas.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let mut per_delta = Vec::with_capacity(ds.len());
    for delta in ds {
        let rungs = rungs_for(delta);
        if let Some(r) = rungs.iter().find(|r| r.eps > delta / 10.0 * (1.0 + 1e-12)) {
            return Err(Error::Ladder(format!(
                "eps = {} exceeds delta/10 = {}",
                r.eps,
                delta / 10.0
            )));
        }
        fit::check_ladder(&rungs.iter().map(|r| r.eps).collect::<Vec<_>>(), fit_opts)?;
        let ladder = estimate_ladder(spec, &rungs, Some(delta), seed, opts)?;
        let mut estimate = fit::fit_indices_with(&ladder, FitBasis::Local, fit_opts)?;
        estimate.warnings.extend(ladder.iter().filter_map(MeasureSample::timeout_warning));
        per_delta.push(DeltaFit { delta, estimate });
    }
    Ok(LocalIndexReport { per_delta })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn square(lo: f64, hi: f64) -> Self {
        Self { x_min: lo, x_max: hi, y_min: lo, y_max: hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCell {
    pub x: f64,
    pub y: f64,
    pub label: BasinLabel,
}

pub const MAX_MAP_RESOLUTION: usize = 4096;

/// Labels the centres of an `nx × ny` grid over `window`, row by row from
/// the bottom.
pub fn basin_map(
    spec: &SystemSpec,
    window: Window,
    nx: usize,
    ny: usize,
    delta: Option<f64>,
    opts: &MeasureOptions,
) -> Result<Vec<MapCell>> {
    spec.validate()?;
    let cfg = opts.integrator.with_delta(delta);
    cfg.validate()?;
    let finite = [window.x_min, window.x_max, window.y_min, window.y_max].iter().all(|v| v.is_finite());
    if !finite || !(window.x_max > window.x_min) || !(window.y_max > window.y_min) {
        return Err(Error::InvalidArgument(format!("degenerate window {window:?}")));
    }
    if nx == 0 || ny == 0 || nx > MAX_MAP_RESOLUTION || ny > MAX_MAP_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution must be within 1..={MAX_MAP_RESOLUTION} per axis, got {nx}x{ny}"
        )));
    }
    let dx = (window.x_max - window.x_min) / nx as f64;
    let dy = (window.y_max - window.y_min) / ny as f64;
    (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let s = State::new(window.x_min + (i as f64 + 0.5) * dx, window.y_min + (j as f64 + 0.5) * dy);
            let label = classify_unchecked(spec, s, &cfg, opts.oracle_cones)
                .map(|c| c.label)
                .unwrap_or(BasinLabel::OutOfBasin);
            Ok(MapCell { x: s.x, y: s.y, label })
        })
        .collect()
}
