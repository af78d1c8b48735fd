//! Closed-form results: exact indices, the invariant cones that bracket the
//! basin boundary, the Lyapunov function of the φ-system and two-sided bounds
//! on `Σ_ε`.

use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::system::{phi_unchecked, pow_pos, Family, State, SystemSpec};

/// Which basin a classification refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasinSense {
    /// The full basin `B(0)`.
    Global,
    /// The δ-local basin `B_δ(0)`: trajectories never leave the δ-ball.
    Local { delta_bits: u64 },
}

impl BasinSense {
    pub fn local(delta: f64) -> Self {
        BasinSense::Local { delta_bits: delta.to_bits() }
    }

    pub fn delta(self) -> Option<f64> {
        match self {
            BasinSense::Global => None,
            BasinSense::Local { delta_bits } => Some(f64::from_bits(delta_bits)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConeLabel {
    InBasin,
    OutOfBasin,
    Undetermined,
}

/// Coefficients of the two bracketing curves `y = k·x^e`.
///
/// For power-attract the region above `k_in` is attracted and the region
/// below `k_out` (at most 1) repelled. For power-repel the region above
/// `k_in` (at least 1) is attracted. Below `k_out` (in `(0, 1/2)`) `x` grows
/// while the cone stays invariant up to [`repel_invariance_limit`]; past that
/// a trajectory may turn back, so the default `k_out` puts the limit at the
/// escape radius [`REPEL_ESCAPE_X`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cones {
    pub k_in: f64,
    pub k_out: f64,
}

/// Relative margin kept above the attracting threshold.
pub const K_IN_MARGIN: f64 = 1e-3;
/// Escape radius matching the integrator's default `r_out`.
pub const REPEL_ESCAPE_X: f64 = 2.0;

/// Largest power-repel `k_out` whose invariance limit reaches `x_max`, less
/// the relative margin: the smaller root of `c·k² − (c + a)·k + a/2` with
/// `c = x_max^a`.
pub fn repel_k_out(a: f64, x_max: f64) -> f64 {
    let c = pow_pos(x_max, a);
    let b = c + a;
    // Written as a/(…) to avoid cancellation in the smaller root.
    a / (b + (b * b - 2.0 * a * c).sqrt()) * (1.0 - K_IN_MARGIN)
}

impl Cones {
    pub fn default_for(spec: &SystemSpec) -> Self {
        match spec.family {
            Family::PowerAttract => Cones {
                k_in: k_threshold_unchecked(spec.a) * (1.0 + K_IN_MARGIN),
                k_out: 1.0,
            },
            Family::PowerRepel => Cones { k_in: 1.0, k_out: repel_k_out(spec.a, REPEL_ESCAPE_X) },
            Family::PhiSystem | Family::PiecewiseLinear => Cones { k_in: f64::NAN, k_out: f64::NAN },
        }
    }

    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match spec.family {
            Family::PowerAttract => {
                let thr = k_threshold_unchecked(spec.a);
                if !(self.k_in > thr) {
                    return bad(format!("k_in must exceed the threshold {thr}, got {}", self.k_in));
                }
                if !(self.k_out > 0.0 && self.k_out <= 1.0) {
                    return bad(format!("k_out must lie in (0, 1], got {}", self.k_out));
                }
            }
            Family::PowerRepel => {
                if !(self.k_in >= 1.0) {
                    return bad(format!("k_in must be >= 1, got {}", self.k_in));
                }
                if !(self.k_out > 0.0 && self.k_out < 0.5) {
                    return bad(format!("k_out must lie in (0, 1/2), got {}", self.k_out));
                }
            }
            Family::PhiSystem | Family::PiecewiseLinear => {}
        }
        Ok(())
    }
}

/// Exact `(σ(0), σ_loc(0))` for a valid system.
pub fn analytic_sigma(spec: &SystemSpec) -> (ExtendedReal, ExtendedReal) {
    use ExtendedReal::*;
    match spec.family {
        Family::PowerAttract => {
            let s = Finite(spec.curve_exponent() - 1.0);
            (s, s)
        }
        Family::PowerRepel => {
            let s = Finite(1.0 - 1.0 / spec.a);
            (s, s)
        }
        Family::PhiSystem => (PosInf, NegInf),
        Family::PiecewiseLinear => (Finite(0.0), Finite(0.0)),
    }
}

/// Checked variant of [`analytic_sigma`].
pub fn try_analytic_sigma(spec: &SystemSpec) -> Result<(ExtendedReal, ExtendedReal)> {
    spec.validate()?;
    Ok(analytic_sigma(spec))
}

/// Stability class implied by the sign of the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    /// `σ > 0`: essentially asymptotically stable (and fragmentarily).
    Essential,
    /// `−∞ < σ ≤ 0`: fragmentarily but not essentially asymptotically stable.
    Fragmentary,
    /// `σ = −∞`.
    Neither,
}

impl StabilityClass {
    pub fn from_sigma(sigma: ExtendedReal) -> Self {
        match sigma {
            ExtendedReal::NegInf => StabilityClass::Neither,
            ExtendedReal::PosInf => StabilityClass::Essential,
            ExtendedReal::Finite(v) if v > 0.0 => StabilityClass::Essential,
            ExtendedReal::Finite(_) => StabilityClass::Fragmentary,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StabilityClass::Essential => "e.a.s.",
            StabilityClass::Fragmentary => "f.a.s., not e.a.s.",
            StabilityClass::Neither => "not f.a.s.",
        }
    }
}

/// The power system whose origin has index `s`: `a = s + 1` for `s > 0`,
/// `a = 1/(1 − s)` for `s < 0`.
pub fn a_for_target_sigma(s: f64) -> Result<SystemSpec> {
    if !s.is_finite() || s == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target index must be finite and non-zero, got {s}"
        )));
    }
    if s > 0.0 {
        SystemSpec::power_attract(s + 1.0)
    } else {
        SystemSpec::power_repel(1.0 / (1.0 - s))
    }
}

fn k_threshold_unchecked(a: f64) -> f64 {
    (a - 0.5) / (a - 1.0)
}

/// Smallest cone coefficient for which `y > k·x^a` is forward invariant in
/// the power-attract system: `(a − 1/2)/(a − 1)`.
pub fn k_threshold(a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 1.0) {
        return Err(Error::InvalidArgument(format!("k_threshold needs a > 1, got {a}")));
    }
    Ok(k_threshold_unchecked(a))
}

/// Scalar product of the field with the normal of the curve `y = k·x^a`,
/// evaluated on the curve. Positive values mean the flow enters the region
/// above the curve (power-attract) or below it (power-repel).
///
/// With a coordinate change `x = u^p` the curve becomes `v = k·u^{pa}` and the
/// product keeps its bracket, with `u^{2pa}` in front.
pub fn invariance_inner_product(spec: &SystemSpec, k: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("x must be positive, got {x}")));
    }
    let a = spec.a;
    let x2a = pow_pos(x, 2.0 * spec.curve_exponent());
    match spec.family {
        Family::PowerAttract => Ok(k * x2a * (k * (a - 1.0) - a + 0.5)),
        Family::PowerRepel => Ok(k * x2a * (a * (0.5 - k) - k * pow_pos(x, a) * (1.0 - k))),
        other => Err(Error::InvalidArgument(format!("no invariant power cone for {other}"))),
    }
}

/// Largest `x` on which the power-repel cone `y < k·x^a` is forward invariant:
/// the root of `a(1/2 − k) = k·x^a·(1 − k)`.
pub fn repel_invariance_limit(a: f64, k: f64) -> f64 {
    pow_pos(a * (0.5 - k) / (k * (1.0 - k)), 1.0 / a)
}

/// Label from the bracketing cones (with the family's own certificates for
/// the φ-system and the piecewise-linear field). The state must lie off both
/// axes; the power families and the φ-system are classified by `(|x|, |y|)`.
pub fn cone_classify(
    spec: &SystemSpec,
    s: State,
    cones: Cones,
    sense: BasinSense,
) -> Result<ConeLabel> {
    spec.validate()?;
    s.check_finite()?;
    if s.x == 0.0 || s.y == 0.0 {
        return Err(Error::InvalidArgument("cone classification needs an off-axis state".into()));
    }
    cones.validate(spec)?;
    Ok(cone_classify_unchecked(spec, s, cones, sense))
}

pub(crate) fn cone_classify_unchecked(
    spec: &SystemSpec,
    s: State,
    cones: Cones,
    sense: BasinSense,
) -> ConeLabel {
    // Attracted regions below are monotone (|x| and |y| non-increasing), so a
    // start inside the δ-ball stays inside it.
    let inside_delta = |s: State| sense.delta().is_none_or(|d| s.norm() < d);
    let q = s.abs();
    match spec.family {
        Family::PowerAttract => {
            let xe = pow_pos(q.x, spec.curve_exponent());
            if q.y > cones.k_in * xe {
                if inside_delta(s) {
                    ConeLabel::InBasin
                } else {
                    ConeLabel::Undetermined
                }
            } else if q.y < cones.k_out * xe {
                ConeLabel::OutOfBasin
            } else {
                ConeLabel::Undetermined
            }
        }
        Family::PowerRepel => {
            let xa = pow_pos(q.x, spec.a);
            let limit = repel_invariance_limit(spec.a, cones.k_out) * (1.0 - K_IN_MARGIN);
            if q.y > cones.k_in * xa {
                if inside_delta(s) {
                    ConeLabel::InBasin
                } else {
                    ConeLabel::Undetermined
                }
            } else if q.y < cones.k_out * xa && q.x < limit {
                ConeLabel::OutOfBasin
            } else {
                ConeLabel::Undetermined
            }
        }
        Family::PhiSystem => match sense {
            // Every off-axis trajectory eventually crosses below the graph of φ.
            BasinSense::Global => ConeLabel::InBasin,
            // Below y = φ(x)/2 both coordinates decrease. Above it a start may
            // still return without leaving the δ-ball (a thin wedge y < x/V
            // does), so nothing there is certified.
            BasinSense::Local { .. } => {
                if !inside_delta(s) {
                    ConeLabel::OutOfBasin
                } else if q.y < 0.5 * phi_unchecked(q.x) {
                    ConeLabel::InBasin
                } else {
                    ConeLabel::Undetermined
                }
            }
        },
        Family::PiecewiseLinear => {
            if s.x < 0.0 && s.y < 0.0 {
                if inside_delta(s) {
                    ConeLabel::InBasin
                } else {
                    ConeLabel::Undetermined
                }
            } else {
                ConeLabel::OutOfBasin
            }
        }
    }
}

/// Eventual fate certified by a forward-invariant region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    /// Inside a forward-invariant region where `|x|` and `|y|` are
    /// non-increasing and the origin is the only limit.
    Attracted,
    /// Inside a forward-invariant region that cannot reach the origin.
    Repelled,
}

/// Region certificate used by the integrator to stop early. Axis points are
/// never certified so the axis dynamics are integrated directly.
pub fn certified_fate(spec: &SystemSpec, s: State) -> Option<Fate> {
    if s.x == 0.0 || s.y == 0.0 {
        return None;
    }
    match spec.family {
        Family::PhiSystem => {
            // Below y = φ(x)/2 both coordinates decrease and the curve cannot be
            // crossed upwards (ẋ = 0, ẏ < 0 on it).
            let q = s.abs();
            (q.y < 0.5 * phi_unchecked(q.x)).then_some(Fate::Attracted)
        }
        _ => match cone_classify_unchecked(spec, s, Cones::default_for(spec), BasinSense::Global) {
            ConeLabel::InBasin => Some(Fate::Attracted),
            ConeLabel::OutOfBasin => Some(Fate::Repelled),
            ConeLabel::Undetermined => None,
        },
    }
}

/// `V(x, y) = x/y`, increasing along the φ-system off the axes.
pub fn lyapunov_v(s: State) -> Result<f64> {
    check_lyapunov_domain(s)?;
    Ok(s.x / s.y)
}

/// `dV/dt = x·φ(x)/(2y)` along the φ-system.
pub fn lyapunov_v_dot(s: State) -> Result<f64> {
    check_lyapunov_domain(s)?;
    Ok(s.x * phi_unchecked(s.x) / (2.0 * s.y))
}

fn check_lyapunov_domain(s: State) -> Result<()> {
    s.check_finite()?;
    if s.x < 0.0 || s.y <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Lyapunov function needs x >= 0, y > 0, got ({}, {})",
            s.x, s.y
        )));
    }
    Ok(())
}

/// `∫_0^X min(cap, k·x^e) dx`: area under a power curve clipped to height `cap`.
pub fn clipped_power_area(k: f64, e: f64, x_max: f64, cap: f64) -> f64 {
    if x_max <= 0.0 || k <= 0.0 {
        return 0.0;
    }
    let x_star = pow_pos(cap / k, 1.0 / e);
    if x_star >= x_max {
        k * pow_pos(x_max, e + 1.0) / (e + 1.0)
    } else {
        k * pow_pos(x_star, e + 1.0) / (e + 1.0) + cap * (x_max - x_star)
    }
}

/// Two-sided bounds on `Σ_ε(0)` with `B_ε(0)` the quadrant square `[0, ε]²`
/// (the full square `[−ε, ε]²` for the piecewise-linear field).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SigmaBounds {
    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v >= self.lower - slack && v <= self.upper + slack
    }
}

pub fn sigma_eps_bounds(spec: &SystemSpec, eps: f64, cones: Cones) -> Result<SigmaBounds> {
    spec.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    cones.validate(spec)?;
    let sq = eps * eps;
    let b = match spec.family {
        Family::PowerAttract => {
            // Complement lies between the curves y = x^e and y = k_in x^e.
            let e = spec.curve_exponent();
            SigmaBounds {
                lower: 1.0 - clipped_power_area(cones.k_in, e, eps, eps) / sq,
                upper: 1.0 - clipped_power_area(cones.k_out, e, eps, eps) / sq,
            }
        }
        Family::PowerRepel => {
            // Basin contains {y > k_in x^a}; it misses {y < k_out x^a, x < x_0}.
            // The upper bound is derived the same way as the lower one.
            let a = spec.a;
            let x0 = repel_invariance_limit(a, cones.k_out) * (1.0 - K_IN_MARGIN);
            SigmaBounds {
                lower: 1.0 - clipped_power_area(cones.k_in, a, eps, eps) / sq,
                upper: 1.0 - clipped_power_area(cones.k_out, a, eps.min(x0), eps) / sq,
            }
        }
        Family::PhiSystem => SigmaBounds { lower: 1.0, upper: 1.0 },
        Family::PiecewiseLinear => SigmaBounds { lower: 0.25, upper: 0.25 },
    };
    Ok(b)
}
