//! Log–log slope fits of the basin fraction over an ε-ladder.
//!
//! `σ_-` is the slope of `ln Σ̂` against `ln ε` and `σ_+` the slope of
//! `ln(1 − Σ̂)`. Rungs are weighted by the inverse variance of the logged
//! fraction (delta method), so sparsely hit rungs count for little. The
//! variance model follows the sampler: binomial for independent points, and
//! for scrambled nets a count error that grows like the square root of the
//! smaller of the two counts, as boundary-dominated integration error does.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::measure::MeasureSample;
use crate::sampling::Sampler;

/// Variance model behind the rung weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `var(ln q̂) = (1 − q)/(n q)`.
    Binomial,
    /// `var(ln q̂) = sqrt(min(h, n − h) + 1)/h²` for `h` hits out of `n`.
    #[default]
    Net,
}

impl Weighting {
    pub fn for_sampler(sampler: Sampler) -> Self {
        match sampler {
            Sampler::Sobol => Weighting::Net,
            Sampler::Pseudo => Weighting::Binomial,
        }
    }

    fn log_variance(self, hits: u64, n: u64) -> f64 {
        let h = hits as f64;
        match self {
            Weighting::Binomial => {
                let nf = n as f64;
                // kept positive at q̂ = 1
                (1.0 - h / nf + 1.0 / nf) / h
            }
            Weighting::Net => ((hits.min(n - hits) + 1) as f64).sqrt() / (h * h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// A fraction with fewer than this many hits at every rung is treated as
    /// identically zero (the `2/n` cutoff).
    pub degenerate_hits: u64,
    /// Slopes above this are reported as `+∞`.
    pub slope_cutoff: f64,
    /// Minimum number of distinct ε values.
    pub min_rungs: usize,
    /// Minimum span of the ladder in decades.
    pub min_decades: f64,
    pub weighting: Weighting,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            degenerate_hits: 2,
            slope_cutoff: 50.0,
            min_rungs: 4,
            min_decades: 1.5,
            weighting: Weighting::default(),
        }
    }
}

impl FitOptions {
    pub fn for_sampler(sampler: Sampler) -> Self {
        Self { weighting: Weighting::for_sampler(sampler), ..Self::default() }
    }
}

/// Which fraction of a [`MeasureSample`] is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitBasis {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub rungs_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexEstimate {
    pub basis: FitBasis,
    pub sigma_minus: ExtendedReal,
    pub sigma_plus: ExtendedReal,
    pub sigma: ExtendedReal,
    /// Combined standard error `sqrt(se_-² + se_+²)` of the finite slopes.
    pub slope_stderr: f64,
    pub fit_minus: Option<SlopeFit>,
    pub fit_plus: Option<SlopeFit>,
    pub ladder: Vec<MeasureSample>,
    pub warnings: Vec<String>,
}

/// Weighted least-squares slope of `ys` on `xs` with weights `ws`.
///
/// The standard error uses the supplied variances, inflated by the reduced
/// chi-square when the scatter exceeds them.
pub fn weighted_slope(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<SlopeFit> {
    let m = xs.len();
    if m < 2 {
        return None;
    }
    let sw: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let ybar = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - xbar) * (x - xbar);
        sxy += w * (x - xbar) * (y - ybar);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let mut stderr = (1.0 / sxx).sqrt();
    if m > 2 {
        let chi2: f64 = xs
            .iter()
            .zip(ys)
            .zip(ws)
            .map(|((x, y), w)| {
                let r = y - ybar - slope * (x - xbar);
                w * r * r
            })
            .sum();
        stderr *= (chi2 / (m - 2) as f64).max(1.0).sqrt();
    }
    Some(SlopeFit { slope, stderr, rungs_used: m })
}

/// Fitted exponent of a fraction that vanishes like `ε^q`: `Ok(None)` when it
/// is identically zero within noise.
fn exponent_of(
    rungs: &[(f64, u64, u64)],
    opts: &FitOptions,
    what: &str,
    warnings: &mut Vec<String>,
) -> Result<(ExtendedReal, Option<SlopeFit>)> {
    if rungs.iter().all(|&(_, hits, _)| hits < opts.degenerate_hits) {
        return Ok((ExtendedReal::PosInf, None));
    }
    let (mut xs, mut ys, mut ws) = (vec![], vec![], vec![]);
    let mut dropped = vec![];
    for &(eps, hits, n) in rungs {
        if hits == 0 {
            dropped.push(eps);
            continue;
        }
        xs.push(eps.ln());
        ys.push((hits as f64 / n as f64).ln());
        ws.push(1.0 / opts.weighting.log_variance(hits, n));
    }
    if !dropped.is_empty() {
        warnings.push(format!("{what}: dropped {} rung(s) with zero hits at eps = {dropped:?}", dropped.len()));
    }
    let fit = weighted_slope(&xs, &ys, &ws).ok_or_else(|| {
        Error::Indeterminate(format!("{what}: fewer than two rungs with hits"))
    })?;
    if fit.slope > opts.slope_cutoff {
        warnings.push(format!(
            "{what}: slope {} exceeds cutoff {}, reported as +inf",
            fit.slope, opts.slope_cutoff
        ));
        return Ok((ExtendedReal::PosInf, Some(fit)));
    }
    Ok((ExtendedReal::Finite(fit.slope), Some(fit)))
}

pub fn check_ladder(eps: &[f64], opts: &FitOptions) -> Result<()> {
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Ladder("eps values must be positive".into()));
    }
    let mut distinct: Vec<f64> = eps.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < opts.min_rungs {
        return Err(Error::Ladder(format!(
            "need at least {} distinct eps values, got {}",
            opts.min_rungs,
            distinct.len()
        )));
    }
    let decades = (distinct[distinct.len() - 1] / distinct[0]).log10();
    if decades < opts.min_decades - 1e-9 {
        return Err(Error::Ladder(format!(
            "ladder spans {decades:.3} decades, need {}",
            opts.min_decades
        )));
    }
    Ok(())
}

/// Fits `σ_-`, `σ_+` and `σ` from the global basin fractions.
pub fn fit_indices(ladder: &[MeasureSample]) -> Result<IndexEstimate> {
    fit_indices_with(ladder, FitBasis::Global, &FitOptions::default())
}

pub fn fit_indices_with(
    ladder: &[MeasureSample],
    basis: FitBasis,
    opts: &FitOptions,
) -> Result<IndexEstimate> {
    check_ladder(&ladder.iter().map(|s| s.eps).collect::<Vec<_>>(), opts)?;
    let mut inside = Vec::with_capacity(ladder.len());
    let mut outside = Vec::with_capacity(ladder.len());
    for s in ladder {
        let hits = match basis {
            FitBasis::Global => s.n_basin,
            FitBasis::Local => s.n_local.ok_or_else(|| {
                Error::Ladder(format!("rung eps = {} has no local count", s.eps))
            })?,
        };
        inside.push((s.eps, hits, s.n_total));
        outside.push((s.eps, s.n_total - hits, s.n_total));
    }
    let mut warnings = vec![];
    let (sigma_minus, fit_minus) = exponent_of(&inside, opts, "sigma_minus", &mut warnings)?;
    let (sigma_plus, fit_plus) = exponent_of(&outside, opts, "sigma_plus", &mut warnings)?;
    let sigma = sigma_plus.checked_sub(sigma_minus).ok_or_else(|| {
        Error::Indeterminate("both sigma_plus and sigma_minus are infinite".into())
    })?;
    let se = |f: Option<SlopeFit>, v: ExtendedReal| match (f, v.is_finite()) {
        (Some(f), true) => f.stderr,
        _ => 0.0,
    };
    let slope_stderr = se(fit_minus, sigma_minus).hypot(se(fit_plus, sigma_plus));
    Ok(IndexEstimate {
        basis,
        sigma_minus,
        sigma_plus,
        sigma,
        slope_stderr,
        fit_minus,
        fit_plus,
        ladder: ladder.to_vec(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const N: u64 = 1_000_000_000;

    fn geometric(hi: f64, lo: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| hi * (lo / hi).powf(i as f64 / (n - 1) as f64)).collect()
    }

    fn synthetic(eps: &[f64], frac: impl Fn(f64) -> f64) -> Vec<MeasureSample> {
        eps.iter()
            .map(|&e| MeasureSample::synthetic(e, N, (frac(e) * N as f64).round() as u64))
            .collect()
    }

    #[test]
    fn bound_shaped_ladder() {
        // Σ(ε) = 1 − ε/3: σ_+ = 1 exactly, σ_- → 0.
        let eps = geometric(0.1, 1e-3, 8);
        let est = fit_indices(&synthetic(&eps, |e| 1.0 - e / 3.0)).unwrap();
        assert_abs_diff_eq!(est.sigma_plus.finite().unwrap(), 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(est.sigma_minus.finite().unwrap(), 0.0, epsilon = 0.01);
        assert_abs_diff_eq!(est.sigma.finite().unwrap(), 1.0, epsilon = 0.01);
    }

    #[test]
    fn constant_quarter() {
        let eps = geometric(0.1, 1e-3, 8);
        let est = fit_indices(&synthetic(&eps, |_| 0.25)).unwrap();
        assert!(est.sigma_minus.finite().unwrap().abs() < 1e-12);
        assert!(est.sigma_plus.finite().unwrap().abs() < 1e-12);
        assert!(est.sigma.finite().unwrap().abs() < 1e-12);
    }

    #[test]
    fn full_basin_is_plus_infinity() {
        let eps = geometric(0.1, 1e-3, 8);
        let est = fit_indices(&synthetic(&eps, |_| 1.0)).unwrap();
        assert_eq!(est.sigma_plus, ExtendedReal::PosInf);
        assert_eq!(est.sigma, ExtendedReal::PosInf);
        assert_eq!(est.sigma_minus, ExtendedReal::Finite(0.0));
    }

    #[test]
    fn empty_basin_is_minus_infinity() {
        let eps = geometric(0.1, 1e-3, 8);
        let ladder: Vec<_> = eps.iter().map(|&e| MeasureSample::synthetic(e, 1000, 1)).collect();
        let est = fit_indices(&ladder).unwrap();
        assert_eq!(est.sigma_minus, ExtendedReal::PosInf);
        assert_eq!(est.sigma, ExtendedReal::NegInf);
    }

    #[test]
    fn steep_slope_hits_cutoff() {
        let n = 1_000_000_000_000_000_000u64;
        let eps = geometric(0.5, 0.5 * 10f64.powf(-1.5), 5);
        let ladder: Vec<_> = eps
            .iter()
            .map(|&e| MeasureSample::synthetic(e, n, ((e / 0.5).powi(8) * n as f64).ceil() as u64))
            .collect();
        let opts = FitOptions { slope_cutoff: 5.0, ..FitOptions::default() };
        let est = fit_indices_with(&ladder, FitBasis::Global, &opts).unwrap();
        assert_eq!(est.sigma_minus, ExtendedReal::PosInf);
        assert!(est.warnings.iter().any(|w| w.contains("cutoff")));
    }

    #[test]
    fn zero_rungs_are_dropped_with_warning() {
        let eps = geometric(0.1, 1e-3, 6);
        let mut ladder = synthetic(&eps, |e| e);
        ladder[5].n_basin = 0;
        let est = fit_indices(&ladder).unwrap();
        assert_eq!(est.fit_minus.unwrap().rungs_used, 5);
        assert!(!est.warnings.is_empty());
        assert_abs_diff_eq!(est.sigma_minus.finite().unwrap(), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn weighting_models() {
        assert_abs_diff_eq!(Weighting::Binomial.log_variance(25, 100), 0.76 / 25.0);
        // The net model uses the smaller of the two counts.
        assert_abs_diff_eq!(Weighting::Net.log_variance(99, 100), 2f64.sqrt() / 9801.0);
        assert_abs_diff_eq!(Weighting::Net.log_variance(3, 100), 2.0 / 9.0);
        assert_eq!(FitOptions::for_sampler(Sampler::Pseudo).weighting, Weighting::Binomial);
        let eps = geometric(0.1, 1e-3, 8);
        for weighting in [Weighting::Binomial, Weighting::Net] {
            let opts = FitOptions { weighting, ..FitOptions::default() };
            let est = fit_indices_with(&synthetic(&eps, |e| 0.3 * e * e), FitBasis::Global, &opts).unwrap();
            assert_abs_diff_eq!(est.sigma_minus.finite().unwrap(), 2.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn short_ladders_rejected() {
        let short = synthetic(&geometric(0.1, 1e-3, 3), |_| 0.5);
        assert!(matches!(fit_indices(&short), Err(Error::Ladder(_))));
        let narrow = synthetic(&geometric(0.1, 0.01, 5), |_| 0.5);
        assert!(matches!(fit_indices(&narrow), Err(Error::Ladder(_))));
        let dup = synthetic(&[0.1, 0.1, 0.1, 0.001], |_| 0.5);
        assert!(fit_indices(&dup).is_err());
    }

    #[test]
    fn local_basis_needs_local_counts() {
        let ladder = synthetic(&geometric(0.1, 1e-3, 5), |_| 0.5);
        assert!(fit_indices_with(&ladder, FitBasis::Local, &FitOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn recovers_power_laws(q in 0.05f64..4.0, c in 0.05f64..1.0) {
            let eps = geometric(0.1, 1e-3, 8);
            let ladder = synthetic(&eps, |e| (c * e.powf(q)).min(1.0));
            prop_assume!(ladder.iter().all(|s| s.n_basin >= 100));
            let est = fit_indices(&ladder).unwrap();
            let fit = est.fit_minus.unwrap();
            prop_assert!((fit.slope - q).abs() <= 0.01 * q + 2.0 * fit.stderr);
        }

        #[test]
        fn sigma_is_difference(p in 0.0f64..1.0, q in 0.0f64..2.0) {
            let eps = geometric(0.2, 1e-3, 6);
            let ladder = synthetic(&eps, |e| 0.5 * (1.0 + p * e.powf(q)).recip());
            let est = fit_indices(&ladder).unwrap();
            prop_assert_eq!(est.sigma, est.sigma_plus - est.sigma_minus);
        }
    }
}
