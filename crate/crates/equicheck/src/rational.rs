//! Exact rational arithmetic.
//!
//! `Rational` is the single number type of the toolkit: every probability,
//! payoff, matrix entry, and report value is an arbitrary-precision fraction
//! kept in lowest terms. There is no floating-point fallback anywhere in the
//! verification path; floats appear only in informational statistics (e.g.
//! simulation standard errors).
//!
//! Input numerals may be written three ways and all normalize on parse:
//!   - fraction: `"n/d"` with integer `n` and positive integer `d`
//!   - terminating decimal: `"0.25"`, `"-3.5"`, `"7"`
//!   - terminating binary: `"0b0.101"`, `"-0b1.1"`, `"0b110"`

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Arbitrary-precision fraction, always in lowest terms with a positive
/// denominator.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Rational(BigRational);

/// Failure to read a numeral in any of the accepted forms.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational numeral {text:?}: {reason}")]
pub struct ParseRationalError {
    pub text: String,
    pub reason: String,
}

impl Rational {
    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn from_integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    /// `n/d` from machine integers. Panics if `d == 0`; intended for literals.
    pub fn ratio(n: i64, d: i64) -> Self {
        assert!(d != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    /// `n/d` from big integers, rejecting a zero denominator.
    pub fn from_big(n: BigInt, d: BigInt) -> Result<Self, ParseRationalError> {
        if d.is_zero() {
            return Err(ParseRationalError {
                text: format!("{n}/{d}"),
                reason: "zero denominator".into(),
            });
        }
        Ok(Rational(BigRational::new(n, d)))
    }

    /// `1 / 2^k`.
    pub fn pow2_inverse(k: u32) -> Self {
        Rational(BigRational::new(BigInt::one(), BigInt::from(2).pow(k)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// True iff the value lies in the closed unit interval.
    pub fn is_probability(&self) -> bool {
        !self.0.is_negative() && self.0 <= BigRational::one()
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    /// Bit length of the larger of |numerator| and denominator; the
    /// per-model maximum of this is the statistic `ell` in `ModelStats`.
    pub fn bit_length(&self) -> u64 {
        self.0.numer().bits().max(self.0.denom().bits())
    }

    /// Division that surfaces a zero divisor instead of panicking.
    pub fn checked_div(&self, rhs: &Rational) -> Option<Rational> {
        if rhs.is_zero() {
            None
        } else {
            Some(Rational(&self.0 / &rhs.0))
        }
    }

    /// Nearest `f64`; informational only (reports, statistics).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Decimal approximation with `sig` significant digits, round half to
    /// even, trailing zeros trimmed. Plain notation for decimal exponents in
    /// [-4, 14], scientific (`d.ddde±x`) outside.
    pub fn to_decimal_string(&self, sig: u32) -> String {
        assert!(sig >= 1);
        if self.is_zero() {
            return "0".to_string();
        }
        let neg = self.is_negative();
        let n = self.0.numer().abs();
        let d = self.0.denom().clone();

        // e = floor(log10(n/d)): first guess from digit counts, then correct.
        let mut e = n.to_string().len() as i64 - d.to_string().len() as i64;
        if pow10_cmp(&n, &d, e) == Ordering::Less {
            e -= 1;
        }
        debug_assert!(pow10_cmp(&n, &d, e) != Ordering::Less);
        debug_assert!(pow10_cmp(&n, &d, e + 1) == Ordering::Less);

        // Round n/d * 10^(sig-1-e) half-to-even to an integer of `sig` digits.
        let shift = sig as i64 - 1 - e;
        let (num, den) = if shift >= 0 {
            (n * BigInt::from(10).pow(shift as u32), d)
        } else {
            (n, d * BigInt::from(10).pow((-shift) as u32))
        };
        let (mut q, r) = num::integer::div_rem(num, den.clone());
        let twice: BigInt = &r * 2;
        match twice.cmp(&den) {
            Ordering::Greater => q += 1,
            Ordering::Equal => {
                if num::Integer::is_odd(&q) {
                    q += 1;
                }
            }
            Ordering::Less => {}
        }
        let mut digits = q.to_string();
        if digits.len() as u32 > sig {
            // all-nines rounded up to the next power of ten
            digits.truncate(sig as usize);
            e += 1;
        }
        let digits = digits.trim_end_matches('0');
        let digits = if digits.is_empty() { "0" } else { digits };

        let body = if (-4..=14).contains(&e) {
            if e >= 0 {
                let e = e as usize;
                if digits.len() > e + 1 {
                    format!("{}.{}", &digits[..e + 1], &digits[e + 1..])
                } else {
                    format!("{}{}", digits, "0".repeat(e + 1 - digits.len()))
                }
            } else {
                format!("0.{}{}", "0".repeat((-e - 1) as usize), digits)
            }
        } else if digits.len() > 1 {
            format!("{}.{}e{}", &digits[..1], &digits[1..], e)
        } else {
            format!("{digits}e{e}")
        };
        if neg {
            format!("-{body}")
        } else {
            body
        }
    }
}

/// Compares n/d against 10^e without building a fraction.
fn pow10_cmp(n: &BigInt, d: &BigInt, e: i64) -> Ordering {
    if e >= 0 {
        n.cmp(&(d * BigInt::from(10).pow(e as u32)))
    } else {
        (n * BigInt::from(10).pow((-e) as u32)).cmp(d)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rational {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParseRationalError {
            text: s.to_string(),
            reason: reason.to_string(),
        };
        let t = s.trim();
        if t.is_empty() {
            return Err(err("empty numeral"));
        }
        if let Some((num, den)) = t.split_once('/') {
            let n = BigInt::from_str(num.trim()).map_err(|_| err("bad numerator"))?;
            let dt = den.trim();
            if dt.starts_with(['+', '-']) {
                return Err(err("denominator must be an unsigned positive integer"));
            }
            let d = BigInt::from_str(dt).map_err(|_| err("bad denominator"))?;
            if d.is_zero() {
                return Err(err("zero denominator"));
            }
            return Ok(Rational(BigRational::new(n, d)));
        }
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let value = if let Some(bin) = body.strip_prefix("0b") {
            parse_radix(bin, 2).ok_or_else(|| err("bad binary numeral"))?
        } else {
            parse_radix(body, 10).ok_or_else(|| err("bad decimal numeral"))?
        };
        Ok(Rational(if neg { -value } else { value }))
    }
}

/// `int[.frac]` in the given radix; `None` on any malformed digit.
fn parse_radix(body: &str, radix: u32) -> Option<BigRational> {
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let mut num = BigInt::zero();
    for c in int_part.chars().chain(frac_part.chars()) {
        let digit = c.to_digit(radix)?;
        num = num * radix + digit;
    }
    let den = BigInt::from(radix).pow(frac_part.len() as u32);
    Some(BigRational::new(num, den))
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((self.0).$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                Rational((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((&self.0).$method(rhs.0))
            }
        }
        impl<'a, 'b> $trait<&'b Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: &'b Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        self.checked_div(&rhs).expect("division by zero")
    }
}

impl<'a> Div<&'a Rational> for Rational {
    type Output = Rational;
    fn div(self, rhs: &'a Rational) -> Rational {
        self.checked_div(rhs).expect("division by zero")
    }
}

impl<'a> Div<Rational> for &'a Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        self.checked_div(&rhs).expect("division by zero")
    }
}

impl<'a, 'b> Div<&'b Rational> for &'a Rational {
    type Output = Rational;
    fn div(self, rhs: &'b Rational) -> Rational {
        self.checked_div(rhs).expect("division by zero")
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl<'a> Neg for &'a Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}
