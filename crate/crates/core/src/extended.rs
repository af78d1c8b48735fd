//! Reals extended by ±∞, the codomain of the stability index.

use std::fmt;
use std::ops::{Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtendedReal {
    /// Maps IEEE infinities onto the tags. NaN is rejected.
    pub fn from_f64(v: f64) -> Option<Self> {
        if v.is_nan() {
            None
        } else if v == f64::INFINITY {
            Some(Self::PosInf)
        } else if v == f64::NEG_INFINITY {
            Some(Self::NegInf)
        } else {
            Some(Self::Finite(v))
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::PosInf => f64::INFINITY,
            Self::NegInf => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// `self - rhs`; `None` for `∞ - ∞`.
    pub fn checked_sub(self, rhs: Self) -> Option<Self> {
        use ExtendedReal::*;
        match (self, rhs) {
            (Finite(a), Finite(b)) => Some(Finite(a - b)),
            (PosInf, PosInf) | (NegInf, NegInf) => None,
            (PosInf, _) | (_, NegInf) => Some(PosInf),
            (NegInf, _) | (_, PosInf) => Some(NegInf),
        }
    }

    /// Whether `self` lies within `tol` of `expected`; infinite values must match exactly.
    pub fn within(self, expected: Self, tol: f64) -> bool {
        match (self, expected) {
            (Self::Finite(a), Self::Finite(b)) => (a - b).abs() <= tol,
            (a, b) => a == b,
        }
    }
}

impl Sub for ExtendedReal {
    type Output = ExtendedReal;

    /// Panics on `∞ - ∞`; use [`ExtendedReal::checked_sub`] where that can occur.
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("∞ - ∞ is undefined")
    }
}

impl Neg for ExtendedReal {
    type Output = ExtendedReal;

    fn neg(self) -> Self {
        match self {
            Self::Finite(v) => Self::Finite(-v),
            Self::PosInf => Self::NegInf,
            Self::NegInf => Self::PosInf,
        }
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        Self::from_f64(v).expect("NaN is not an extended real")
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => {
                let v = v + 0.0;
                if let Some(p) = f.precision() {
                    write!(f, "{v:.p$}")
                } else {
                    write!(f, "{v}")
                }
            }
            Self::PosInf => f.write_str("+inf"),
            Self::NegInf => f.write_str("-inf"),
        }
    }
}

// JSON has no infinities: finite values are numbers, the tags are the strings "+inf" / "-inf".
impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => s.serialize_f64(*v),
            Self::PosInf => s.serialize_str("+inf"),
            Self::NegInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Self::Finite(v)),
            Repr::Tag(t) => match t.as_str() {
                "+inf" | "inf" => Ok(Self::PosInf),
                "-inf" => Ok(Self::NegInf),
                other => Err(serde::de::Error::custom(format!("bad extended real {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtraction_rules() {
        use ExtendedReal::*;
        assert_eq!(Finite(3.0) - Finite(1.0), Finite(2.0));
        assert_eq!(PosInf - Finite(0.0), PosInf);
        assert_eq!(Finite(0.0) - PosInf, NegInf);
        assert_eq!(NegInf - PosInf, NegInf);
        assert_eq!(PosInf.checked_sub(PosInf), None);
        assert_eq!(NegInf.checked_sub(NegInf), None);
    }

    #[test]
    fn json_round_trip() {
        let vals = [ExtendedReal::Finite(-1.25), ExtendedReal::PosInf, ExtendedReal::NegInf];
        let s = serde_json::to_string(&vals).unwrap();
        assert_eq!(s, r#"[-1.25,"+inf","-inf"]"#);
        let back: Vec<ExtendedReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vals);
    }

    #[test]
    fn nan_rejected() {
        assert!(ExtendedReal::from_f64(f64::NAN).is_none());
        assert_eq!(ExtendedReal::from_f64(f64::INFINITY), Some(ExtendedReal::PosInf));
    }
}
