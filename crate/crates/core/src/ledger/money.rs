//! Exact integer money and rational rates.
//!
//! All ledger values are integer minor units (cents). Products with rationals
//! are computed on `i128` numerators with one terminal rounding step, so no
//! intermediate value is ever truncated.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Rounding applied at the single terminal division of a rational product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    /// Round to nearest, ties to the even neighbour.
    HalfEven,
    /// Toward negative infinity.
    Floor,
    /// Toward positive infinity.
    Ceil,
}

/// Divides `numer` by a strictly positive `denom` with the requested rounding.
pub fn div_round(numer: i128, denom: i128, mode: Rounding) -> i128 {
    assert!(denom > 0, "division by non-positive denominator {denom}");
    let q = numer.div_euclid(denom);
    let r = numer.rem_euclid(denom);
    if r == 0 {
        return q;
    }
    match mode {
        Rounding::Floor => q,
        Rounding::Ceil => q + 1,
        Rounding::HalfEven => match (2 * r).cmp(&denom) {
            std::cmp::Ordering::Less => q,
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal => {
                if q % 2 == 0 {
                    q
                } else {
                    q + 1
                }
            }
        },
    }
}

/// Signed amount in minor currency units.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_minor(minor: i64) -> Self {
        Money(minor)
    }

    /// Whole currency units, e.g. `Money::from_major(100)` is $100.00.
    pub const fn from_major(major: i64) -> Self {
        Money(major * 100)
    }

    pub const fn minor(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }

    /// `self * numer / denom` with one terminal rounding to minor units.
    pub fn mul_div(self, numer: i64, denom: i64, mode: Rounding) -> Money {
        let raw = div_round(self.0 as i128 * numer as i128, denom as i128, mode);
        Money(i64::try_from(raw).expect("money product out of i64 range"))
    }

    /// Round-half-even value of `numer_amount * of / base`.
    ///
    /// Requires `base > 0` and `0 <= numer_amount <= base`.
    pub fn mul_fraction(numer_amount: Money, base: Money, of: Money) -> Money {
        assert!(base.0 > 0, "fraction base must be positive");
        debug_assert!(numer_amount.0 >= 0 && numer_amount <= base);
        of.mul_div(numer_amount.0, base.0, Rounding::HalfEven)
    }

    /// Renders with an explicit `+` for positive values, as in ledger traces.
    pub fn signed(self) -> String {
        if self.0 > 0 {
            format!("+{self}")
        } else {
            self.to_string()
        }
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let abs = self.0.unsigned_abs();
        let sign = if self.0 < 0 { "-" } else { "" };
        let dollars = group_thousands(abs / 100);
        write!(f, "{sign}${dollars}.{:02}", abs % 100)
    }
}

fn group_thousands(mut n: u64) -> String {
    let mut parts = Vec::new();
    loop {
        if n < 1000 {
            parts.push(n.to_string());
            break;
        }
        parts.push(format!("{:03}", n % 1000));
        n /= 1000;
    }
    parts.reverse();
    parts.join(",")
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0.checked_add(rhs.0).expect("money overflow"))
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0.checked_sub(rhs.0).expect("money overflow"))
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        *self = *self + rhs;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        *self = *self - rhs;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RateError {
    #[error("malformed rate {0:?}; expected \"5%\", \"0.05\" or \"1/20\"")]
    Malformed(String),
    #[error("rate {0} is outside [0, 1]")]
    OutOfRange(String),
}

/// A non-negative rational fraction in `[0, 1]`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rate {
    num: i64,
    den: i64,
}

impl Rate {
    pub const ZERO: Rate = Rate { num: 0, den: 1 };
    pub const ONE: Rate = Rate { num: 1, den: 1 };

    pub fn new(num: i64, den: i64) -> Result<Rate, RateError> {
        if den <= 0 || num < 0 || num > den {
            return Err(RateError::OutOfRange(format!("{num}/{den}")));
        }
        let g = gcd(num, den).max(1);
        Ok(Rate {
            num: num / g,
            den: den / g,
        })
    }

    /// Whole-number percentage, e.g. `Rate::percent(5)` is 5%.
    pub fn percent(p: i64) -> Rate {
        Rate::new(p, 100).expect("percent must lie in 0..=100")
    }

    pub fn numer(self) -> i64 {
        self.num
    }

    pub fn denom(self) -> i64 {
        self.den
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    /// `rate * amount`, rounded once.
    pub fn apply(self, amount: Money, mode: Rounding) -> Money {
        amount.mul_div(self.num, self.den, mode)
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

fn parse_decimal(s: &str) -> Option<(i64, i64)> {
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits_ok = |p: &str| p.chars().all(|c| c.is_ascii_digit());
    if !digits_ok(int_part) || !digits_ok(frac_part) || frac_part.len() > 12 {
        return None;
    }
    let den = 10i64.checked_pow(frac_part.len() as u32)?;
    let int: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().ok()?
    };
    let frac: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().ok()?
    };
    Some((int.checked_mul(den)?.checked_add(frac)?, den))
}

impl FromStr for Rate {
    type Err = RateError;

    fn from_str(s: &str) -> Result<Rate, RateError> {
        let t = s.trim();
        let malformed = || RateError::Malformed(s.to_string());
        if let Some(p) = t.strip_suffix('%') {
            let (num, den) = parse_decimal(p.trim()).ok_or_else(malformed)?;
            return Rate::new(num, den.checked_mul(100).ok_or_else(malformed)?);
        }
        if let Some((n, d)) = t.split_once('/') {
            let num: i64 = n.trim().parse().map_err(|_| malformed())?;
            let den: i64 = d.trim().parse().map_err(|_| malformed())?;
            return Rate::new(num, den);
        }
        let (num, den) = parse_decimal(t).ok_or_else(malformed)?;
        Rate::new(num, den)
    }
}

impl fmt::Display for Rate {
    /// Percent when the rate is a terminating decimal percentage, else `n/d`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(scale) = (0..=12u32).find(|k| 10i64.pow(*k) % self.den == 0) else {
            return write!(f, "{}/{}", self.num, self.den);
        };
        let pow = 10i64.pow(scale);
        let scaled = self.num * (pow / self.den) * 100;
        let (int, frac) = (scaled / pow, scaled % pow);
        if frac == 0 {
            return write!(f, "{int}%");
        }
        let digits = format!("{:0width$}", frac, width = scale as usize);
        write!(f, "{int}.{}%", digits.trim_end_matches('0'))
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", self.num, self.den))
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Rate, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
