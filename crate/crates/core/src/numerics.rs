//! Exact rational arithmetic.
//!
//! Every quantity in the engine (reserves, amounts, rates, deltas) is a
//! [`Rat`]: an arbitrary-precision rational kept in lowest terms. All
//! arithmetic is exact, so pool invariants can be checked by equality.
//! The one place an irrational value appears — the square root used to
//! bound rate-capped execution — is handled with directed rounding via
//! [`sqrt_lower`] / [`sqrt_upper`].

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary-precision rational, always normalized: lowest terms, positive
/// denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(BigRational);

impl Rat {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Rat(BigRational::new(num, den))
    }

    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    /// 2^-k, the engine's default rounding tolerance shape.
    pub fn two_pow_neg(k: u32) -> Self {
        Rat(BigRational::new(BigInt::one(), BigInt::one() << k))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    /// Multiplicative inverse. Panics on zero; callers guard.
    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rat(self.0.recip())
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Lossy conversion for display purposes only.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rat {
    type Err = Error;

    /// Accepts `"p/q"`, integers, and decimal strings like `"1.25"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Domain(format!("cannot parse rational from {s:?}"));
        if let Some((num, den)) = s.split_once('/') {
            let n = BigInt::from_str(num.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(den.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(Error::Domain(format!("zero denominator in {s:?}")));
            }
            return Ok(Rat(BigRational::new(n, d)));
        }
        if let Some((int, frac)) = s.split_once('.') {
            let neg = int.trim_start().starts_with('-');
            let i = if int.is_empty() || int == "-" || int == "+" {
                BigInt::zero()
            } else {
                BigInt::from_str(int).map_err(|_| bad())?
            };
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let f = BigInt::from_str(frac).map_err(|_| bad())?;
            let scale = BigInt::from(10u32).pow(frac.len() as u32);
            let unsigned = i.abs() * &scale + f;
            let num = if neg { -unsigned } else { unsigned };
            return Ok(Rat(BigRational::new(num, scale)));
        }
        let n = BigInt::from_str(s).map_err(|_| bad())?;
        Ok(Rat(BigRational::from_integer(n)))
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((self.0).$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &'a Rat) -> Rat {
                Rat((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<Rat> for &'a Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((&self.0).$method(rhs.0))
            }
        }
        impl<'a, 'b> $trait<&'b Rat> for &'a Rat {
            type Output = Rat;
            fn $method(self, rhs: &'b Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Div for Rat {
    type Output = Rat;
    fn div(self, rhs: Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(self.0 / rhs.0)
    }
}

impl<'a> Div<&'a Rat> for &Rat {
    type Output = Rat;
    fn div(self, rhs: &'a Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(&self.0 / &rhs.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl Sum for Rat {
    fn sum<I: Iterator<Item = Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct RatVisitor;

        impl de::Visitor<'_> for RatVisitor {
            type Value = Rat;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational as \"p/q\", a decimal string, or an integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Rat, E> {
                v.parse().map_err(|e| E::custom(format!("{e}")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Rat, E> {
                Ok(Rat::from_int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Rat, E> {
                Ok(Rat(BigRational::from_integer(BigInt::from(v))))
            }

            fn visit_f64<E: de::Error>(self, _: f64) -> std::result::Result<Rat, E> {
                Err(E::custom(
                    "floating-point literals are not accepted; quote the value, e.g. \"1.5\" or \"3/2\"",
                ))
            }
        }

        deserializer.deserialize_any(RatVisitor)
    }
}

/// Floor of sqrt for a non-negative rational's square-free check.
fn exact_sqrt(q: &Rat) -> Option<Rat> {
    let num = q.numer().magnitude();
    let den = q.denom().magnitude();
    let sn = num.sqrt();
    if &sn * &sn != *num {
        return None;
    }
    let sd = den.sqrt();
    if &sd * &sd != *den {
        return None;
    }
    Some(Rat::from_big(BigInt::from(sn), BigInt::from(sd)))
}

/// Largest-from-below rational approximation of √q.
///
/// Returns `s` with `s ≤ √q` and `√q − s ≤ eps`; consequently
/// `(s + eps)² > q`. Exact when `q` is a square of a rational.
pub fn sqrt_lower(q: &Rat, eps: &Rat) -> Result<Rat> {
    if q.is_negative() {
        return Err(Error::Domain(format!("sqrt of negative value {q}")));
    }
    if !eps.is_positive() {
        return Err(Error::Domain(format!("sqrt tolerance must be positive, got {eps}")));
    }
    if q.is_zero() {
        return Ok(Rat::zero());
    }
    if let Some(root) = exact_sqrt(q) {
        return Ok(root);
    }
    // √(n/d) = √(n·d) / d. Scale by m so the grid 1/(d·m) is finer than eps.
    let n = q.numer().magnitude().clone();
    let d = q.denom().magnitude().clone();
    let inv_eps = eps.recip();
    // m ≥ 1/(d·eps)
    let m_num = inv_eps.numer().magnitude();
    let m_den = inv_eps.denom().magnitude() * &d;
    let m = m_num.div_ceil(&m_den).max(BigUint::one());
    let scaled = n * &d * &m * &m;
    let root = scaled.sqrt();
    Ok(Rat::from_big(BigInt::from(root), BigInt::from(d * m)))
}

/// Smallest-from-above rational bound: `s ≥ √q` and `s − √q ≤ eps`.
/// Exact when `q` is a square of a rational.
pub fn sqrt_upper(q: &Rat, eps: &Rat) -> Result<Rat> {
    if q.is_negative() {
        return Err(Error::Domain(format!("sqrt of negative value {q}")));
    }
    if let Some(root) = exact_sqrt(q) {
        return Ok(root);
    }
    Ok(sqrt_lower(q, eps)? + eps)
}
