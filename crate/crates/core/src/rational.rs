//! Exact rational helpers shared by every stage of the pipeline.
//!
//! All model weights, literals and symbolic coefficients are kept as
//! [`Rational`] values. Conversions to binary floating point only happen at
//! serialization boundaries, and [`exp`] is the single place where an
//! approximation is introduced.

use std::sync::OnceLock;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses a decimal literal (`-12.5`, `0.01`, `3e-4`, `1500`) into the exact
/// rational it denotes.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (negative, body) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i64>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numerator: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(numerator * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numerator, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

/// Exact rational value of a finite double.
pub fn from_f64(value: f64) -> Option<Rational> {
    Rational::from_float(value)
}

pub fn from_f32(value: f32) -> Option<Rational> {
    Rational::from_float(value)
}

/// Nearest double (round-half-even).
pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn is_exact_f64(value: &Rational) -> bool {
    let approx = to_f64(value);
    approx.is_finite() && from_f64(approx).as_ref() == Some(value)
}

pub fn is_exact_f32(value: &Rational) -> bool {
    let approx = to_f64(value) as f32;
    approx.is_finite() && from_f32(approx).as_ref() == Some(value)
}

/// Renders `value` as a terminating decimal when one exists (denominator of
/// the form 2^a 5^b). Integers carry no fractional part.
pub fn exact_decimal(value: &Rational) -> Option<String> {
    let denom = value.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut rest = denom.clone();
    let (mut twos, mut fives) = (0usize, 0usize);
    while rest.is_even() {
        rest /= &two;
        twos += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = value.numer() * num_traits::pow(BigInt::from(10), places) / denom;
    Some(format_scaled(&scaled, places))
}

fn format_scaled(scaled: &BigInt, places: usize) -> String {
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let body = if places == 0 {
        digits
    } else if digits.len() > places {
        let (int_part, frac) = digits.split_at(digits.len() - places);
        format!("{int_part}.{frac}")
    } else {
        format!("0.{}{}", "0".repeat(places - digits.len()), digits)
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

/// Decimal rendering rounded to `places` fractional digits (half away from zero).
pub fn rounded_decimal(value: &Rational, places: usize) -> String {
    let scale = Rational::from_integer(num_traits::pow(BigInt::from(10), places));
    let scaled = (value * scale).round().to_integer();
    format_scaled(&scaled, places)
}

/// Human-oriented exact rendering: terminating decimal if possible, `p/q` otherwise.
pub fn display(value: &Rational) -> String {
    exact_decimal(value).unwrap_or_else(|| format!("{}/{}", value.numer(), value.denom()))
}

/// Inverse of [`display`]: a decimal literal or `p/q`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    match text.split_once('/') {
        Some((p, q)) => {
            let p = parse_decimal(p)?;
            let q = parse_decimal(q)?;
            (!q.is_zero()).then(|| p / q)
        }
        None => parse_decimal(text),
    }
}

// Working precision of the fixed-point `exp` kernel, in bits.
const EXP_BITS: u64 = 256;

/// Result of the approximate exponential: the true value lies within
/// `value ± radius`.
#[derive(Clone, Debug)]
pub struct ExpApprox {
    pub value: Rational,
    pub radius: Rational,
}

fn ln2_fixed() -> &'static BigInt {
    static LN2: OnceLock<BigInt> = OnceLock::new();
    LN2.get_or_init(|| {
        // ln 2 = sum_{k>=1} 1 / (k 2^k), evaluated with 64 guard bits.
        let bits = EXP_BITS + 64;
        let one = BigInt::one() << bits;
        let mut sum = BigInt::zero();
        let mut k: u64 = 1;
        loop {
            let term = (&one >> k) / BigInt::from(k);
            if term.is_zero() {
                break;
            }
            sum += term;
            k += 1;
        }
        sum >> 64u32
    })
}

/// Approximates `e^x` for a rational `x`, with a guaranteed error bound of
/// well under 2^-128 relative.
pub fn exp(x: &Rational) -> ExpApprox {
    if x.is_zero() {
        return ExpApprox {
            value: Rational::one(),
            radius: Rational::zero(),
        };
    }
    let xf = to_f64(x);
    let n = (xf / std::f64::consts::LN_2).round() as i64;
    let scale = BigInt::one() << EXP_BITS;
    // r = x - n ln 2 in fixed point; |r| <= ~0.35 so the series converges fast.
    let x_fixed = (x * Rational::from_integer(scale.clone()))
        .floor()
        .to_integer();
    let r = x_fixed - BigInt::from(n) * ln2_fixed();
    let mut term = scale.clone();
    let mut sum = scale.clone();
    let mut terms: u64 = 0;
    for k in 1u64.. {
        term = (&term * &r) / (&scale * BigInt::from(k));
        if term.is_zero() {
            break;
        }
        sum += &term;
        terms += 1;
    }
    // Truncation: one ulp per series term, |n| + 1 ulps from the reduction,
    // amplified by at most e^0.5 < 2.
    let ulps = BigInt::from(2 * (terms + n.unsigned_abs() + 4));
    let shift = n - EXP_BITS as i64;
    let to_rational = |v: BigInt| -> Rational {
        if shift >= 0 {
            Rational::from_integer(v << (shift as u64))
        } else {
            Rational::new(v, BigInt::one() << ((-shift) as u64))
        }
    };
    ExpApprox {
        value: to_rational(sum),
        radius: to_rational(ulps),
    }
}

pub fn sign_of(value: &Rational) -> Sign {
    if value.is_zero() {
        Sign::NoSign
    } else if value.is_positive() {
        Sign::Plus
    } else {
        Sign::Minus
    }
}
