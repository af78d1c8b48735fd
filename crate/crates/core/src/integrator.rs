//! Dormand–Prince 5(4) integration with radius events.
//!
//! A trajectory stops at the first of: convergence into the `r_in` ball
//! (with the radius still decreasing), exit from the δ-ball, escape past
//! `R_out`, entry into a certified attracting or repelling region, or the
//! time budget.

use serde::{Deserialize, Serialize};

use crate::analytic::{self, BasinSense, ConeLabel, Cones, Fate};
use crate::error::{Error, Result};
use crate::system::{State, SystemSpec, Velocity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub r_in: f64,
    pub r_out: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub t_max: f64,
    pub h_init: f64,
    pub tol: f64,
    pub h_min: f64,
    /// Stop as soon as the state enters a region whose fate is certified by
    /// [`analytic::certified_fate`].
    pub certify: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            r_in: 1e-6,
            r_out: 2.0,
            delta: None,
            t_max: 1e6,
            h_init: 1e-3,
            tol: 1e-9,
            h_min: 1e-14,
            certify: true,
        }
    }
}

/// Escape radius used for the φ-system, whose off-axis trajectories make a
/// large excursion before returning to the origin.
pub const PHI_ESCAPE_RADIUS: f64 = 1e12;
/// Time budget for the φ-system. Starting at height `y₀` the excursion takes
/// about `1/y₀`, while the step count only grows like `ln(1/y₀)`.
pub const PHI_T_MAX: f64 = 1e12;

impl IntegratorConfig {
    /// Defaults, with the escape radius and time budget widened for the
    /// φ-system.
    pub fn for_spec(spec: &SystemSpec) -> Self {
        let mut cfg = Self::default();
        if spec.family == crate::system::Family::PhiSystem {
            cfg.r_out = PHI_ESCAPE_RADIUS;
            cfg.t_max = PHI_T_MAX;
        }
        cfg
    }

    pub fn with_delta(mut self, delta: Option<f64>) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.r_in > 0.0 && self.r_in < self.r_out && self.r_out.is_finite()) {
            return bad(format!("need 0 < r_in < r_out, got {} / {}", self.r_in, self.r_out));
        }
        if let Some(d) = self.delta {
            if !(d > self.r_in && d < self.r_out) {
                return bad(format!("need r_in < delta < r_out, got delta = {d}"));
            }
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_init) {
            return bad(format!("need 0 < h_min < h_init, got {} / {}", self.h_min, self.h_init));
        }
        if !(self.t_max > 0.0) {
            return bad(format!("t_max must be positive, got {}", self.t_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Converged,
    Escaped,
    LeftDelta,
    TimedOut,
    /// Entered a certified attracting region (see [`analytic::Fate::Attracted`]).
    Trapped,
    /// Entered a certified repelling region (see [`analytic::Fate::Repelled`]).
    Expelled,
}

impl OutcomeKind {
    pub fn reaches_origin(self) -> bool {
        matches!(self, OutcomeKind::Converged | OutcomeKind::Trapped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub t_exit: f64,
    pub final_state: State,
    pub steps: u64,
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded error weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension of order 4.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Copy)]
struct V2(f64, f64);

impl V2 {
    fn from(v: Velocity) -> Self {
        V2(v.dx, v.dy)
    }
}

#[inline]
fn at(s: State, h: f64, terms: &[(f64, V2)]) -> State {
    let (mut x, mut y) = (s.x, s.y);
    for &(c, k) in terms {
        x += h * c * k.0;
        y += h * c * k.1;
    }
    State::new(x, y)
}

struct Step {
    next: State,
    f_next: V2,
    err: f64,
    dense: Dense,
}

/// Dense output over one accepted step.
#[derive(Clone, Copy)]
struct Dense {
    r: [V2; 5],
}

impl Dense {
    fn at(&self, th: f64) -> State {
        let [r1, r2, r3, r4, r5] = self.r;
        let th1 = 1.0 - th;
        State::new(
            r1.0 + th * (r2.0 + th1 * (r3.0 + th * (r4.0 + th1 * r5.0))),
            r1.1 + th * (r2.1 + th1 * (r3.1 + th * (r4.1 + th1 * r5.1))),
        )
    }
}

fn dopri_step(spec: &SystemSpec, s: State, f0: V2, h: f64, tol: f64) -> Step {
    let f = |q: State| V2::from(spec.rhs(q));
    let k1 = f0;
    let k2 = f(at(s, h, &[(A21, k1)]));
    let k3 = f(at(s, h, &[(A31, k1), (A32, k2)]));
    let k4 = f(at(s, h, &[(A41, k1), (A42, k2), (A43, k3)]));
    let k5 = f(at(s, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]));
    let k6 = f(at(s, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]));
    let next = at(s, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
    let k7 = f(next);
    let ex = h * (E1 * k1.0 + E3 * k3.0 + E4 * k4.0 + E5 * k5.0 + E6 * k6.0 + E7 * k7.0);
    let ey = h * (E1 * k1.1 + E3 * k3.1 + E4 * k4.1 + E5 * k5.1 + E6 * k6.1 + E7 * k7.1);
    // Error relative to the size of the state.
    let scale = tol * s.norm().max(next.norm()) + f64::MIN_POSITIVE;
    let err = ex.abs().max(ey.abs()) / scale;
    let r2 = V2(next.x - s.x, next.y - s.y);
    let r3 = V2(h * k1.0 - r2.0, h * k1.1 - r2.1);
    let r4 = V2(r2.0 - h * k7.0 - r3.0, r2.1 - h * k7.1 - r3.1);
    let r5 = V2(
        h * (D1 * k1.0 + D3 * k3.0 + D4 * k4.0 + D5 * k5.0 + D6 * k6.0 + D7 * k7.0),
        h * (D1 * k1.1 + D3 * k3.1 + D4 * k4.1 + D5 * k5.1 + D6 * k6.1 + D7 * k7.1),
    );
    let dense = Dense { r: [V2(s.x, s.y), r2, r3, r4, r5] };
    Step { next, f_next: k7, err, dense }
}

fn radial_rate(s: State, f: V2) -> f64 {
    2.0 * (s.x * f.0 + s.y * f.1)
}

const PROBES: usize = 8;

/// First probe `θ = i/PROBES` of the dense output at which `|s|` has crossed
/// `radius`, so that a pass through a ball within one step is not missed.
fn first_probe(dense: &Dense, radius: f64, outward: bool) -> Option<f64> {
    (1..=PROBES).map(|i| i as f64 / PROBES as f64).find(|&th| {
        let q = dense.at(th);
        if outward {
            q.norm() >= radius
        } else {
            q.norm() <= radius
        }
    })
}

/// Bisects the dense output on the probe interval ending at `th_hi` for the
/// crossing of `|s| = radius`, to a radius accuracy of `10·tol`.
fn locate(
    dense: &Dense,
    t0: f64,
    h: f64,
    th_hi: f64,
    radius: f64,
    outward: bool,
    tol: f64,
) -> (f64, State) {
    let crossed = |q: State| if outward { q.norm() >= radius } else { q.norm() <= radius };
    let (mut lo, mut hi) = (th_hi - 1.0 / PROBES as f64, th_hi);
    let mut best = dense.at(hi);
    for _ in 0..200 {
        if (best.norm() - radius).abs() <= 10.0 * tol * radius || hi - lo < 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let q = dense.at(mid);
        if crossed(q) {
            hi = mid;
            best = q;
        } else {
            lo = mid;
        }
    }
    (t0 + hi * h, best)
}

/// Integrates from `s0` until the first event.
pub fn integrate(spec: &SystemSpec, s0: State, cfg: &IntegratorConfig) -> Result<Outcome> {
    spec.validate()?;
    cfg.validate()?;
    s0.check_finite()?;
    integrate_unchecked(spec, s0, cfg)
}

/// [`integrate`], calling `on_step(t, state)` after every accepted step.
pub fn integrate_observed(
    spec: &SystemSpec,
    s0: State,
    cfg: &IntegratorConfig,
    on_step: impl FnMut(f64, State),
) -> Result<Outcome> {
    spec.validate()?;
    cfg.validate()?;
    s0.check_finite()?;
    run(spec, s0, cfg, on_step)
}

pub(crate) fn integrate_unchecked(
    spec: &SystemSpec,
    s0: State,
    cfg: &IntegratorConfig,
) -> Result<Outcome> {
    run(spec, s0, cfg, |_, _| {})
}

fn run(
    spec: &SystemSpec,
    s0: State,
    cfg: &IntegratorConfig,
    mut on_step: impl FnMut(f64, State),
) -> Result<Outcome> {
    let done = |kind, t, s, steps| Ok(Outcome { kind, t_exit: t, final_state: s, steps });
    let mut s = s0;
    let mut f = V2::from(spec.rhs(s));
    let mut t = 0.0;

    if s == State::ORIGIN || (s.norm() <= cfg.r_in && radial_rate(s, f) < 0.0) {
        return done(OutcomeKind::Converged, 0.0, s, 0);
    }
    if let Some(d) = cfg.delta {
        if s.norm() >= d {
            return done(OutcomeKind::LeftDelta, 0.0, s, 0);
        }
    }
    if s.norm() >= cfg.r_out {
        return done(OutcomeKind::Escaped, 0.0, s, 0);
    }
    if cfg.certify {
        match analytic::certified_fate(spec, s) {
            Some(Fate::Attracted) => return done(OutcomeKind::Trapped, 0.0, s, 0),
            Some(Fate::Repelled) => return done(OutcomeKind::Expelled, 0.0, s, 0),
            None => {}
        }
    }

    let outer = cfg.delta.unwrap_or(cfg.r_out);
    let outer_kind = if cfg.delta.is_some() { OutcomeKind::LeftDelta } else { OutcomeKind::Escaped };
    let mut h = cfg.h_init;
    let mut steps = 0u64;

    while t < cfg.t_max {
        h = h.min(cfg.t_max - t);
        let step = dopri_step(spec, s, f, h, cfg.tol);
        if !step.err.is_finite() || !step.next.is_finite() {
            // Overshooting a blow-up; retry with a smaller step.
            h *= 0.1;
            if h < cfg.h_min {
                return Err(Error::NonFiniteDuring { t });
            }
            continue;
        }
        if step.err > 1.0 {
            h *= (0.9 * step.err.powf(-0.2)).max(0.1);
            if h < cfg.h_min {
                return Err(Error::StepUnderflow { t, state: s });
            }
            continue;
        }
        steps += 1;
        let (s1, f1) = (step.next, step.f_next);

        if let Some(th) = first_probe(&step.dense, outer, true) {
            let (te, se) = locate(&step.dense, t, h, th, outer, true, cfg.tol);
            return done(outer_kind, te, se, steps);
        }
        if let Some(th) = first_probe(&step.dense, cfg.r_in, false) {
            let (te, se) = locate(&step.dense, t, h, th, cfg.r_in, false, cfg.tol);
            // Grazing passes through the inner ball are not convergence.
            if radial_rate(se, V2::from(spec.rhs(se))) < 0.0 || se == State::ORIGIN {
                return done(OutcomeKind::Converged, te, se, steps);
            }
        }

        t += h;
        s = s1;
        f = f1;
        on_step(t, s);
        if s == State::ORIGIN {
            return done(OutcomeKind::Converged, t, s, steps);
        }
        if cfg.certify {
            match analytic::certified_fate(spec, s) {
                Some(Fate::Attracted) => return done(OutcomeKind::Trapped, t, s, steps),
                Some(Fate::Repelled) => return done(OutcomeKind::Expelled, t, s, steps),
                None => {}
            }
        }
        let grow = if step.err == 0.0 { 5.0 } else { (0.9 * step.err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= grow;
    }
    done(OutcomeKind::TimedOut, t, s, steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasinLabel {
    InBasin,
    InLocalBasin,
    OutOfBasin,
}

impl BasinLabel {
    pub fn name(self) -> &'static str {
        match self {
            BasinLabel::InBasin => "in_basin",
            BasinLabel::InLocalBasin => "in_local_basin",
            BasinLabel::OutOfBasin => "out_of_basin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: BasinLabel,
    /// `None` when the cone oracle decided without integrating.
    pub outcome: Option<Outcome>,
}

impl Classification {
    pub fn timed_out(&self) -> bool {
        matches!(self.outcome, Some(Outcome { kind: OutcomeKind::TimedOut, .. }))
    }
}

fn label_for(kind: OutcomeKind, local: bool) -> BasinLabel {
    match (kind.reaches_origin(), local) {
        (true, true) => BasinLabel::InLocalBasin,
        (true, false) => BasinLabel::InBasin,
        (false, _) => BasinLabel::OutOfBasin,
    }
}

/// Basin membership of `s0`; the δ-local basin when `cfg.delta` is set.
///
/// With `oracle_cones` the analytic cones are consulted first and only
/// undetermined states are integrated.
pub fn classify(
    spec: &SystemSpec,
    s0: State,
    cfg: &IntegratorConfig,
    oracle_cones: bool,
) -> Result<Classification> {
    spec.validate()?;
    cfg.validate()?;
    s0.check_finite()?;
    classify_unchecked(spec, s0, cfg, oracle_cones)
}

pub(crate) fn classify_unchecked(
    spec: &SystemSpec,
    s0: State,
    cfg: &IntegratorConfig,
    oracle_cones: bool,
) -> Result<Classification> {
    let local = cfg.delta.is_some();
    if oracle_cones && s0.x != 0.0 && s0.y != 0.0 {
        let sense = cfg.delta.map_or(BasinSense::Global, BasinSense::local);
        match analytic::cone_classify_unchecked(spec, s0, Cones::default_for(spec), sense) {
            ConeLabel::InBasin => {
                let label = if local { BasinLabel::InLocalBasin } else { BasinLabel::InBasin };
                return Ok(Classification { label, outcome: None });
            }
            ConeLabel::OutOfBasin => {
                return Ok(Classification { label: BasinLabel::OutOfBasin, outcome: None })
            }
            ConeLabel::Undetermined => {}
        }
    }
    let outcome = integrate_unchecked(spec, s0, cfg)?;
    Ok(Classification { label: label_for(outcome.kind, local), outcome: Some(outcome) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn axis_examples() {
        let spec = SystemSpec::power_attract(2.0).unwrap();
        let cfg = IntegratorConfig::default();
        let down = integrate(&spec, State::new(0.0, 0.5), &cfg).unwrap();
        assert_eq!(down.kind, OutcomeKind::Converged);
        assert_eq!(down.final_state.x, 0.0);
        // y(t) = y0 / (1 + y0 t) reaches r_in at t = 1/r_in - 1/y0.
        assert_relative_eq!(down.t_exit, 1e6 - 2.0, max_relative = 1e-4);

        let cfg1 = IntegratorConfig { r_out: 1.0, ..cfg };
        let right = integrate(&spec, State::new(0.5, 0.0), &cfg1).unwrap();
        assert_eq!(right.kind, OutcomeKind::Escaped);
        assert!(right.final_state.norm() >= 1.0);
        // x' = x^3 blows up from 0.5: x(t) = (x0^-2 - 2t)^-1/2, hits 1 at t = 1.5.
        assert_relative_eq!(right.t_exit, 1.5, max_relative = 1e-6);
    }

    #[test]
    fn origin_converges_immediately() {
        for spec in [SystemSpec::power_attract(2.0).unwrap(), SystemSpec::phi_system(), SystemSpec::piecewise()] {
            let o = integrate(&spec, State::ORIGIN, &IntegratorConfig::for_spec(&spec)).unwrap();
            assert_eq!(o.kind, OutcomeKind::Converged);
            assert_eq!(o.t_exit, 0.0);
        }
    }

    #[test]
    fn phi_leaves_delta_but_returns() {
        let spec = SystemSpec::phi_system();
        let cfg = IntegratorConfig::for_spec(&spec);
        let s0 = State::new(0.5, 1.0);
        let local = integrate(&spec, s0, &cfg.with_delta(Some(0.6))).unwrap();
        assert_eq!(local.kind, OutcomeKind::LeftDelta);
        // Starts at |s0| ≈ 1.118 > 0.6.
        assert_eq!(local.t_exit, 0.0);
        let local = integrate(&spec, s0, &cfg.with_delta(Some(2.0))).unwrap();
        assert_eq!(local.kind, OutcomeKind::LeftDelta);
        assert!(local.t_exit > 0.0);
        assert_relative_eq!(local.final_state.norm(), 2.0, max_relative = 1e-6);

        let global = integrate(&spec, s0, &cfg).unwrap();
        assert!(global.kind.reaches_origin(), "{global:?}");
    }

    #[test]
    fn classify_examples() {
        let cfg = IntegratorConfig::default();
        let attract = SystemSpec::power_attract(2.0).unwrap();
        for cones in [true, false] {
            let c = classify(&attract, State::new(0.1, 0.02), &cfg, cones).unwrap();
            assert_eq!(c.label, BasinLabel::InBasin);
        }
        let repel = SystemSpec::power_repel(0.5).unwrap();
        let c = classify(&repel, State::new(0.25, 0.05), &cfg, true).unwrap();
        assert_eq!(c.label, BasinLabel::OutOfBasin);
        assert!(c.outcome.is_none());
        // Between the cones: integrated, and it escapes.
        let c = classify(&repel, State::new(0.25, 0.1), &cfg, true).unwrap();
        assert_eq!(c.label, BasinLabel::OutOfBasin);
        assert!(c.outcome.is_some());
        let pw = SystemSpec::piecewise();
        let c = classify(&pw, State::new(-0.3, -0.4), &cfg, false).unwrap();
        assert_eq!(c.label, BasinLabel::InBasin);
        let c = classify(&pw, State::new(-0.3, -0.4), &cfg.with_delta(Some(0.6)), false).unwrap();
        assert_eq!(c.label, BasinLabel::InLocalBasin);
    }

    #[test]
    fn piecewise_decay_is_exponential() {
        let spec = SystemSpec::piecewise();
        let cfg = IntegratorConfig { certify: false, ..IntegratorConfig::default() };
        let s0 = State::new(-0.3, -0.4);
        let o = integrate(&spec, s0, &cfg).unwrap();
        assert_eq!(o.kind, OutcomeKind::Converged);
        // |s(t)| = |s0| e^{-t}
        let exact = s0.norm() * (-o.t_exit).exp();
        assert_relative_eq!(o.final_state.norm(), exact, max_relative = 10.0 * cfg.tol);
        assert_relative_eq!(o.final_state.norm(), cfg.r_in, max_relative = 10.0 * cfg.tol);
    }

    #[test]
    fn config_validation() {
        let cfg = IntegratorConfig { delta: Some(5.0), ..IntegratorConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = IntegratorConfig { h_min: 1.0, ..IntegratorConfig::default() };
        assert!(cfg.validate().is_err());
        let spec = SystemSpec::power_attract(2.0).unwrap();
        assert!(integrate(&spec, State::new(f64::NAN, 1.0), &IntegratorConfig::default()).is_err());
    }
}
