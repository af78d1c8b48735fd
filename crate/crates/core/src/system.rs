//! Right-hand sides of the planar families.
//!
//! Every family except the piecewise-linear one is defined on the closed first
//! quadrant and extended to the plane by odd reflection in each coordinate, so
//! both axes stay invariant and each quadrant mirrors the first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const ORIGIN: State = State { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn abs(&self) -> State {
        State::new(self.x.abs(), self.y.abs())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteState { x: self.x, y: self.y })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub dx: f64,
    pub dy: f64,
}

impl Velocity {
    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `ẋ = x(x^a − y)`, `ẏ = y(x^a/2 − y)` with `a > 1`.
    PowerAttract,
    /// `ẋ = x(x^a/2 − y)`, `ẏ = y²(x^a − y)` with `0 < a < 1`.
    PowerRepel,
    /// `ẋ = x(y − φ(x)/2)`, `ẏ = y(y − φ(x))` with `φ(x) = (2x+1)e^{−1/x}`.
    PhiSystem,
    /// `ẋ = ±x`, `ẏ = ±y` by quadrant; the basin is the closed third quadrant.
    PiecewiseLinear,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::PowerAttract,
        Family::PowerRepel,
        Family::PhiSystem,
        Family::PiecewiseLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::PowerAttract => "power-attract",
            Family::PowerRepel => "power-repel",
            Family::PhiSystem => "phi",
            Family::PiecewiseLinear => "piecewise",
        }
    }

    pub fn takes_exponent(self) -> bool {
        matches!(self, Family::PowerAttract | Family::PowerRepel)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "power-attract" | "attract" => Ok(Family::PowerAttract),
            "power-repel" | "repel" => Ok(Family::PowerRepel),
            "phi" | "phi-system" => Ok(Family::PhiSystem),
            "piecewise" | "piecewise-linear" => Ok(Family::PiecewiseLinear),
            other => Err(Error::InvalidSpec(format!("unknown family {other:?}"))),
        }
    }
}

/// A family together with its parameters. Construct through the checked
/// constructors or [`SystemSpec::new`]; fields are public for reading.
#[derive(Debug, Clone, Copy)]
pub struct SystemSpec {
    pub family: Family,
    /// Exponent `a`; meaningful for the two power families only.
    pub a: f64,
    /// Power `p` of the coordinate change `x = u^p` (power-attract only).
    pub p: Option<f64>,
}

impl SystemSpec {
    pub fn new(family: Family, a: Option<f64>, p: Option<f64>) -> Result<Self> {
        let a = match (family.takes_exponent(), a) {
            (true, Some(a)) => a,
            (true, None) => {
                return Err(Error::InvalidSpec(format!("{family} requires a=<real>")));
            }
            (false, Some(_)) => {
                return Err(Error::InvalidSpec(format!("{family} takes no exponent")));
            }
            (false, None) => f64::NAN,
        };
        let spec = SystemSpec { family, a, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn power_attract(a: f64) -> Result<Self> {
        Self::new(Family::PowerAttract, Some(a), None)
    }

    pub fn power_repel(a: f64) -> Result<Self> {
        Self::new(Family::PowerRepel, Some(a), None)
    }

    pub fn transformed(a: f64, p: f64) -> Result<Self> {
        Self::new(Family::PowerAttract, Some(a), Some(p))
    }

    pub fn phi_system() -> Self {
        SystemSpec { family: Family::PhiSystem, a: f64::NAN, p: None }
    }

    pub fn piecewise() -> Self {
        SystemSpec { family: Family::PiecewiseLinear, a: f64::NAN, p: None }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::PowerAttract => {
                if !(self.a.is_finite() && self.a > 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "power-attract needs a > 1, got {}",
                        self.a
                    )));
                }
            }
            Family::PowerRepel => {
                if !(self.a.is_finite() && self.a > 0.0 && self.a < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "power-repel needs 0 < a < 1, got {}",
                        self.a
                    )));
                }
            }
            Family::PhiSystem | Family::PiecewiseLinear => {}
        }
        if let Some(p) = self.p {
            if self.family != Family::PowerAttract {
                return Err(Error::InvalidSpec(format!(
                    "transform power p applies to power-attract only, not {}",
                    self.family
                )));
            }
            if !(p.is_finite() && p > 0.0 && p * self.a > 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "transform needs p > 0 and p*a > 1, got p={p}, a={}",
                    self.a
                )));
            }
        }
        Ok(())
    }

    /// Exponent of the boundary curves `y = k·x^e` in the coordinates the
    /// system is integrated in: `a`, or `p·a` after the coordinate change.
    pub fn curve_exponent(&self) -> f64 {
        self.a * self.p.unwrap_or(1.0)
    }

    pub fn exponent(&self) -> Option<f64> {
        self.family.takes_exponent().then_some(self.a)
    }

    /// Right-hand side used for integration: the transformed field when `p`
    /// is set, otherwise the plane field.
    pub fn rhs(&self, s: State) -> Velocity {
        match self.p {
            Some(p) => mirror(s, |q| transformed_quadrant(self.a, p, q)),
            None => plane_unchecked(self, s),
        }
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        if self.family.takes_exponent() {
            write!(f, " a={}", self.a)?;
        }
        if let Some(p) = self.p {
            write!(f, " p={p}")?;
        }
        Ok(())
    }
}

/// Parses entries like `power-attract a=2 p=2` or `piecewise`.
impl FromStr for SystemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let family: Family = tokens
            .next()
            .ok_or_else(|| Error::InvalidSpec("empty system entry".into()))?
            .parse()?;
        let (mut a, mut p) = (None, None);
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got {tok:?}")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad number in {tok:?}")))?;
            let slot = match key {
                "a" => &mut a,
                "p" => &mut p,
                other => return Err(Error::InvalidSpec(format!("unknown key {other:?}"))),
            };
            if slot.replace(v).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate key {key:?}")));
            }
        }
        SystemSpec::new(family, a, p)
    }
}

/// Equality over the parameters the family actually uses.
impl PartialEq for SystemSpec {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.exponent() == other.exponent() && self.p == other.p
    }
}

impl Serialize for SystemSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SystemSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `x^a` as `exp(a ln x)`, with `0^a = 0`.
#[inline]
pub fn pow_pos(x: f64, a: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (a * x.ln()).exp()
    }
}

#[inline]
pub(crate) fn phi_unchecked(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (2.0 * x + 1.0) * (-1.0 / x).exp()
    }
}

/// `φ(x) = (2x+1)·exp(−1/x)` for `x > 0`, `φ(0) = 0`.
pub fn phi(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("phi needs a finite x >= 0, got {x}")));
    }
    Ok(phi_unchecked(x))
}

fn quadrant_unchecked(spec: &SystemSpec, s: State) -> Velocity {
    let State { x, y } = s;
    match spec.family {
        Family::PowerAttract => {
            let xa = pow_pos(x, spec.a);
            Velocity::new(x * (xa - y), y * (0.5 * xa - y))
        }
        Family::PowerRepel => {
            let xa = pow_pos(x, spec.a);
            Velocity::new(x * (0.5 * xa - y), y * y * (xa - y))
        }
        Family::PhiSystem => {
            let f = phi_unchecked(x);
            Velocity::new(x * (y - 0.5 * f), y * (y - f))
        }
        Family::PiecewiseLinear => Velocity::new(x, y),
    }
}

/// Field of the selected family on the closed first quadrant.
pub fn eval_quadrant(spec: &SystemSpec, s: State) -> Result<Velocity> {
    spec.validate()?;
    s.check_finite()?;
    if s.x < 0.0 || s.y < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "({}, {}) is outside the closed first quadrant",
            s.x, s.y
        )));
    }
    Ok(quadrant_unchecked(spec, s))
}

#[inline]
fn mirror(s: State, quadrant: impl Fn(State) -> Velocity) -> Velocity {
    let v = quadrant(s.abs());
    Velocity::new(v.dx.copysign_zero(s.x), v.dy.copysign_zero(s.y))
}

trait CopySignZero {
    fn copysign_zero(self, sign_of: f64) -> f64;
}

impl CopySignZero for f64 {
    /// Multiplies by the sign of `sign_of`, treating both zeros as positive.
    #[inline]
    fn copysign_zero(self, sign_of: f64) -> f64 {
        if sign_of < 0.0 {
            -self
        } else {
            self
        }
    }
}

fn plane_unchecked(spec: &SystemSpec, s: State) -> Velocity {
    match spec.family {
        // Quadrant laws: x' = x on the right half-plane and −x on the left,
        // y' = y on the upper half-plane and −y on the lower. Axis points take
        // the third-quadrant law, which agrees with both neighbours there.
        Family::PiecewiseLinear => {
            let dx = if s.x > 0.0 { s.x } else { -s.x };
            let dy = if s.y > 0.0 { s.y } else { -s.y };
            Velocity::new(dx, dy)
        }
        _ => mirror(s, |q| quadrant_unchecked(spec, q)),
    }
}

/// Field on the whole plane.
pub fn eval_plane(spec: &SystemSpec, s: State) -> Result<Velocity> {
    spec.validate()?;
    s.check_finite()?;
    Ok(plane_unchecked(spec, s))
}

fn transformed_quadrant(a: f64, p: f64, s: State) -> Velocity {
    let State { x: u, y: v } = s;
    let upa = pow_pos(u, p * a);
    Velocity::new(u * (upa - v) / p, v * (0.5 * upa - v))
}

/// Power-attract field pulled back through `(x, y) = (u^p, v)`, evaluated at `(u, v)`.
pub fn eval_transformed(spec: &SystemSpec, s: State) -> Result<Velocity> {
    spec.validate()?;
    s.check_finite()?;
    let p = match (spec.family, spec.p) {
        (Family::PowerAttract, Some(p)) => p,
        _ => {
            return Err(Error::InvalidSpec(
                "the transformed field needs power-attract with p set".into(),
            ))
        }
    };
    if s.x < 0.0 {
        return Err(Error::InvalidArgument(format!("u must be >= 0, got {}", s.x)));
    }
    Ok(mirror(s, |q| transformed_quadrant(spec.a, p, q)))
}
