//! Exact scalars: arbitrary-precision rationals and real quadratic irrationals.
//!
//! A [`Scalar`] is either a `BigRational` or an element `a + b*sqrt(d)` of a
//! real quadratic field with `d` a square-free positive integer. All
//! arithmetic and comparisons are exact; there is no floating point on any
//! code path that decides a sign.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Error produced when parsing an exact scalar string.
#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid scalar literal `{input}`: {reason}")]
pub struct ParseScalarError {
    pub input: String,
    pub reason: String,
}

/// An exact number: rational, or `a + b*sqrt(d)` with `d` square-free, `d >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scalar {
    Rational(BigRational),
    Quadratic {
        a: BigRational,
        b: BigRational,
        d: u64,
    },
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar::Rational(BigRational::one())
    }

    pub fn from_integer(n: i64) -> Self {
        Scalar::Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar::Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Scalar::Rational(r)
    }

    /// Builds `a + b*sqrt(d)`, extracting square factors of `d` and collapsing
    /// to a rational when the irrational part vanishes.
    pub fn quadratic(a: BigRational, b: BigRational, d: u64) -> Self {
        if b.is_zero() || d == 0 {
            return Scalar::Rational(a);
        }
        let (square, free) = extract_square(d);
        if free <= 1 {
            // sqrt(d) is an integer.
            return Scalar::Rational(a + b * BigRational::from_integer(BigInt::from(square)));
        }
        let b = b * BigRational::from_integer(BigInt::from(square));
        Scalar::Quadratic { a, b, d: free }
    }

    /// `q + r*sqrt(d)` from small integers, convenience for tests and configs.
    pub fn quad_parts(a_num: i64, a_den: i64, b_num: i64, b_den: i64, d: u64) -> Self {
        Scalar::quadratic(
            BigRational::new(BigInt::from(a_num), BigInt::from(a_den)),
            BigRational::new(BigInt::from(b_num), BigInt::from(b_den)),
            d,
        )
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Rational(r) => r.is_zero(),
            // normalized: b != 0 and d square-free => irrational => nonzero
            Scalar::Quadratic { .. } => false,
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, Scalar::Rational(_))
    }

    /// The discriminant of the field this value generates, when irrational.
    pub fn field_disc(&self) -> Option<u64> {
        match self {
            Scalar::Rational(_) => None,
            Scalar::Quadratic { d, .. } => Some(*d),
        }
    }

    pub fn rational_part(&self) -> &BigRational {
        match self {
            Scalar::Rational(r) => r,
            Scalar::Quadratic { a, .. } => a,
        }
    }

    /// Exact sign: -1, 0, or 1.
    pub fn signum(&self) -> i32 {
        match self {
            Scalar::Rational(r) => {
                if r.is_zero() {
                    0
                } else if r.is_positive() {
                    1
                } else {
                    -1
                }
            }
            Scalar::Quadratic { a, b, d } => {
                // sign of a + b*sqrt(d) with b != 0, sqrt(d) irrational.
                let sa = rational_sign(a);
                let sb = rational_sign(b);
                if sa == sb {
                    return sa;
                }
                if sa == 0 {
                    return sb;
                }
                if sb == 0 {
                    return sa;
                }
                // opposite signs: compare a^2 with b^2 d; value has the sign of
                // the dominant term.
                let a2 = a * a;
                let b2d = b * b * BigRational::from_integer(BigInt::from(*d));
                match a2.cmp(&b2d) {
                    Ordering::Greater => sa,
                    Ordering::Less => sb,
                    // a^2 = b^2 d impossible for d >= 2 square-free with a,b != 0
                    Ordering::Equal => unreachable!("square-free discriminant"),
                }
            }
        }
    }

    pub fn is_positive(&self) -> bool {
        self.signum() > 0
    }

    pub fn is_negative(&self) -> bool {
        self.signum() < 0
    }

    pub fn abs(&self) -> Scalar {
        if self.is_negative() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn parts(&self, d: u64) -> (BigRational, BigRational) {
        match self {
            Scalar::Rational(r) => (r.clone(), BigRational::zero()),
            Scalar::Quadratic { a, b, d: dd } => {
                assert_eq!(*dd, d, "mixed quadratic fields: sqrt({dd}) vs sqrt({d})");
                (a.clone(), b.clone())
            }
        }
    }

    /// Common field of two scalars; panics on genuinely mixed fields, which
    /// construction rules out.
    fn join_disc(&self, other: &Scalar) -> Option<u64> {
        match (self.field_disc(), other.field_disc()) {
            (None, None) => None,
            (Some(d), None) | (None, Some(d)) => Some(d),
            (Some(d1), Some(d2)) => {
                assert_eq!(d1, d2, "mixed quadratic fields: sqrt({d1}) vs sqrt({d2})");
                Some(d1)
            }
        }
    }

    /// Multiplicative inverse. Panics on zero.
    pub fn recip(&self) -> Scalar {
        match self {
            Scalar::Rational(r) => {
                assert!(!r.is_zero(), "division by zero");
                Scalar::Rational(r.recip())
            }
            Scalar::Quadratic { a, b, d } => {
                // 1/(a+b√d) = (a-b√d)/(a²-b²d); denominator nonzero since the
                // value is irrational.
                let den = a * a - b * b * BigRational::from_integer(BigInt::from(*d));
                Scalar::quadratic(a / &den, -(b / &den), *d)
            }
        }
    }

    /// Approximate value, for reporting and Monte Carlo bookkeeping only.
    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Rational(r) => rational_to_f64(r),
            Scalar::Quadratic { a, b, d } => {
                rational_to_f64(a) + rational_to_f64(b) * (*d as f64).sqrt()
            }
        }
    }

    /// Decimal rendering with `digits` fractional digits, rounded toward
    /// negative infinity; exact integer square-root based, deterministic.
    pub fn to_decimal(&self, digits: usize) -> String {
        let pow = BigInt::from(10u8).pow(digits as u32);
        let scaled: BigInt = match self {
            Scalar::Rational(r) => {
                let v = r * BigRational::from_integer(pow.clone());
                v.floor().to_integer()
            }
            Scalar::Quadratic { a, b, d } => {
                // floor((a + b sqrt(d)) * 10^digits) via integer sqrt with guard
                // digits; refine until the bracket is unambiguous.
                let mut guard = 8u32;
                loop {
                    let scale = BigInt::from(10u8).pow(digits as u32 + guard);
                    let scale_sq = &scale * &scale;
                    let rad = BigUint::try_from(scale_sq * BigInt::from(*d))
                        .expect("positive radicand");
                    let root = rad.sqrt(); // floor sqrt
                    let root = BigInt::from(root);
                    // root <= scale*sqrt(d) < root+1
                    let lo = a + b * BigRational::new(root.clone(), scale.clone());
                    let hi = a + b * BigRational::new(&root + 1, scale.clone());
                    let (lo, hi) = if b.is_negative() { (hi, lo) } else { (lo, hi) };
                    let flo = (&lo * BigRational::from_integer(pow.clone()))
                        .floor()
                        .to_integer();
                    let fhi = (&hi * BigRational::from_integer(pow.clone()))
                        .floor()
                        .to_integer();
                    if flo == fhi {
                        break flo;
                    }
                    guard += 8;
                }
            }
        };
        let neg = scaled.is_negative();
        let mag = scaled.magnitude().to_string();
        let mut s = if mag.len() <= digits {
            format!("0.{}{}", "0".repeat(digits - mag.len()), mag)
        } else {
            let (int, frac) = mag.split_at(mag.len() - digits);
            if digits == 0 {
                int.to_string()
            } else {
                format!("{int}.{frac}")
            }
        };
        if neg {
            s.insert(0, '-');
        }
        s
    }
}

fn rational_sign(r: &BigRational) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Writes `n = s^2 * free` with `free` square-free; returns `(s, free)`.
fn extract_square(n: u64) -> (u64, u64) {
    let mut s = 1u64;
    let mut free = n;
    let mut p = 2u64;
    while p * p <= free {
        while free % (p * p) == 0 {
            free /= p * p;
            s *= p;
        }
        p += 1;
    }
    (s, free)
}

macro_rules! binop {
    ($trait:ident, $method:ident, |$a1:ident, $a2:ident, $b1:ident, $b2:ident, $d:ident| $body:expr) => {
        impl $trait for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                match self.join_disc(rhs) {
                    None => {
                        let (l, r) = (self.rational_part(), rhs.rational_part());
                        Scalar::Rational($trait::$method(l, r))
                    }
                    Some(d) => {
                        let ($a1, $b1) = self.parts(d);
                        let ($a2, $b2) = rhs.parts(d);
                        let $d = d;
                        $body
                    }
                }
            }
        }
        impl $trait for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                $trait::$method(&self, &rhs)
            }
        }
        impl $trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                $trait::$method(&self, rhs)
            }
        }
        impl $trait<Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                $trait::$method(self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a1, a2, b1, b2, d| Scalar::quadratic(
    a1 + a2,
    b1 + b2,
    d
));
binop!(Sub, sub, |a1, a2, b1, b2, d| Scalar::quadratic(
    a1 - a2,
    b1 - b2,
    d
));
binop!(Mul, mul, |a1, a2, b1, b2, d| {
    let dd = BigRational::from_integer(BigInt::from(d));
    Scalar::quadratic(&a1 * &a2 + &b1 * &b2 * dd, &a1 * &b2 + &b1 * &a2, d)
});

impl Div for &Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        self * rhs.recip()
    }
}
impl Div for Scalar {
    type Output = Scalar;
    fn div(self, rhs: Scalar) -> Scalar {
        &self / &rhs
    }
}
impl Div<&Scalar> for Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        &self / rhs
    }
}
impl Div<Scalar> for &Scalar {
    type Output = Scalar;
    fn div(self, rhs: Scalar) -> Scalar {
        self / &rhs
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Rational(r) => Scalar::Rational(-r),
            Scalar::Quadratic { a, b, d } => Scalar::Quadratic {
                a: -a,
                b: -b,
                d: *d,
            },
        }
    }
}
impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self - other).signum() {
            x if x < 0 => Ordering::Less,
            0 => Ordering::Equal,
            _ => Ordering::Greater,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Rational(r) => write!(f, "{r}"),
            Scalar::Quadratic { a, b, d } => {
                if a.is_zero() {
                    write!(f, "{b}*sqrt({d})")
                } else if b.is_negative() {
                    write!(f, "{a}-{}*sqrt({d})", -b)
                } else {
                    write!(f, "{a}+{b}*sqrt({d})")
                }
            }
        }
    }
}

impl FromStr for Scalar {
    type Err = ParseScalarError;

    /// Accepts `p/q`, `p`, and `a+b*sqrt(D)` / `a-b*sqrt(D)` / `b*sqrt(D)` /
    /// `sqrt(D)` forms with rational `a`, `b`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParseScalarError {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t.is_empty() {
            return Err(err("empty"));
        }
        if let Some(pos) = t.find("sqrt(") {
            let close = t[pos..]
                .find(')')
                .map(|i| i + pos)
                .ok_or_else(|| err("unclosed sqrt("))?;
            if close != t.len() - 1 {
                return Err(err("trailing characters after sqrt(...)"));
            }
            let d: u64 = t[pos + 5..close]
                .parse()
                .map_err(|_| err("discriminant must be a positive integer"))?;
            if d == 0 {
                return Err(err("discriminant must be positive"));
            }
            // head is everything before the sqrt coefficient
            let head = &t[..pos];
            let (a_str, b_str) = match head.rfind(['+', '-']) {
                Some(0) if !head[1..].contains(['+', '-']) => ("", head),
                Some(i) if i > 0 => (&head[..i], &head[i..]),
                _ => ("", head),
            };
            let a = if a_str.is_empty() {
                BigRational::zero()
            } else {
                parse_rational(a_str).map_err(|r| err(&r))?
            };
            let b_str = b_str.strip_suffix('*').unwrap_or(b_str);
            let b = match b_str {
                "" | "+" => BigRational::one(),
                "-" => -BigRational::one(),
                other => parse_rational(other).map_err(|r| err(&r))?,
            };
            Ok(Scalar::quadratic(a, b, d))
        } else {
            Ok(Scalar::Rational(parse_rational(&t).map_err(|r| err(&r))?))
        }
    }
}

fn parse_rational(s: &str) -> Result<BigRational, String> {
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.parse().map_err(|_| format!("bad numerator `{n}`"))?;
            let d: BigInt = d.parse().map_err(|_| format!("bad denominator `{d}`"))?;
            if d.is_zero() {
                return Err("zero denominator".into());
            }
            Ok(BigRational::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| format!("bad integer `{s}`"))?;
            Ok(BigRational::from_integer(n))
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sums a slice of scalars.
pub fn total<'a, I: IntoIterator<Item = &'a Scalar>>(xs: I) -> Scalar {
    xs.into_iter().fold(Scalar::zero(), |acc, x| acc + x)
}
