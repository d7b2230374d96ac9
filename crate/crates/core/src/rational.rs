//! Exact rational helpers shared by every module.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational number.
pub type Rational = BigRational;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid rational literal `{0}`")]
pub struct RationalParseError(pub String);

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `p`, `p/q`, or a plain decimal such as `-0.25` or `1e-3`.
pub fn parse_rational(text: &str) -> Result<Rational, RationalParseError> {
    let s = text.trim();
    let err = || RationalParseError(text.to_string());
    if s.is_empty() {
        return Err(err());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| err())?;
        let q: BigInt = q.trim().parse().map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(p, q));
    }
    if let Ok(p) = s.parse::<BigInt>() {
        return Ok(Rational::from_integer(p));
    }
    parse_decimal(s).ok_or_else(err)
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: BigInt = format!("{int_part}{frac_part}0").parse::<BigInt>().ok()? / BigInt::from(10);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(all);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -value } else { value })
}

/// Canonical text form: `p` for integers, `p/q` otherwise.
pub fn format_rational(r: &Rational) -> String {
    r.to_string()
}

/// Exact conversion of a finite float.
pub fn from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators: fall back to a scaled division.
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

/// Tight float enclosure `[lo, hi]` of a rational.
pub fn enclose(r: &Rational) -> (f64, f64) {
    let x = to_f64(r);
    if x.is_finite() && from_f64(x) == *r {
        (x, x)
    } else {
        (x.next_down(), x.next_up())
    }
}

/// The rational with the smallest denominator inside `[lo, hi]`.
///
/// Walks the Stern–Brocot tree via continued fractions of the endpoints.
pub fn simplest_in(lo: &Rational, hi: &Rational) -> Rational {
    assert!(lo <= hi, "empty interval");
    if lo.is_negative() && hi.is_positive() || lo.is_zero() || hi.is_zero() {
        return Rational::zero();
    }
    if hi.is_negative() {
        return -simplest_in(&-hi.clone(), &-lo.clone());
    }
    simplest_positive(lo, hi)
}

fn simplest_positive(lo: &Rational, hi: &Rational) -> Rational {
    let fl = lo.floor();
    if &fl == lo {
        return fl;
    }
    if fl < hi.floor() {
        return fl + Rational::one();
    }
    // Same integer part: recurse on reciprocals of the fractional parts.
    let lo_frac = lo - &fl;
    let hi_frac = hi - &fl;
    let inner = simplest_positive(&hi_frac.recip(), &lo_frac.recip());
    fl + inner.recip()
}

pub fn gcd(a: &BigInt, b: &BigInt) -> BigInt {
    a.gcd(b)
}

pub fn abs(r: &Rational) -> Rational {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_literal_forms() {
        assert_eq!(parse_rational("3").unwrap(), int(3));
        assert_eq!(parse_rational("-6/4").unwrap(), ratio(-3, 2));
        assert_eq!(parse_rational("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("-1.5e1").unwrap(), int(-15));
        assert_eq!(parse_rational("2e-2").unwrap(), ratio(1, 50));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format_rational(&ratio(4, -6)), "-2/3");
        assert_eq!(format_rational(&int(7)), "7");
    }

    #[test]
    fn enclosure_is_tight_and_sound() {
        let third = ratio(1, 3);
        let (lo, hi) = enclose(&third);
        assert!(from_f64(lo) < third && third < from_f64(hi));
        assert_eq!(enclose(&ratio(1, 2)), (0.5, 0.5));
    }

    #[test]
    fn simplest_rational_in_interval() {
        assert_eq!(simplest_in(&ratio(3, 10), &ratio(4, 10)), ratio(1, 3));
        assert_eq!(simplest_in(&ratio(-4, 10), &ratio(-3, 10)), ratio(-1, 3));
        assert_eq!(simplest_in(&ratio(-1, 10), &ratio(1, 10)), int(0));
        assert_eq!(simplest_in(&ratio(5, 2), &ratio(5, 2)), ratio(5, 2));
        assert_eq!(simplest_in(&ratio(11, 10), &ratio(29, 10)), int(2));
        let x = 7.0f64 / 3.0;
        let q = simplest_in(&from_f64(x.next_down()), &from_f64(x.next_up()));
        assert_eq!(q, ratio(7, 3));
    }
}
