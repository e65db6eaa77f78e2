//! Fixed-point decimal arithmetic on `BigInt` mantissas.
//!
//! A [`Fixed`] holds `units / 10^scale`. All arithmetic is carried out on the
//! integer mantissa with round-half-away-from-zero rescaling, so results are
//! deterministic and carry an absolute error of at most one unit in the last
//! place per operation. The canonicalizer runs at [`WORK_SCALE`] digits,
//! comfortably above the 30-digit floor the numeric fallback guarantees.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, Zero};

use super::ExprError;

/// Fractional digits used by the canonicalizer's numeric path.
pub const WORK_SCALE: u32 = 40;

/// Decimal digits of pi available to [`Fixed::pi`].
const PI_DIGITS: &str = "1415926535897932384626433832795028841971693993751058209749445923078164062862089986280348253421170679";

/// A signed fixed-point decimal: `units / 10^scale`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixed {
    units: BigInt,
    scale: u32,
}

fn pow10(scale: u32) -> BigInt {
    BigInt::from(10u32).pow(scale)
}

/// `num / den` rounded half away from zero. `den` must be positive.
fn div_rounded(num: &BigInt, den: &BigInt) -> BigInt {
    debug_assert!(den.is_positive());
    let two = BigInt::from(2);
    let (sign, mag) = (num.sign(), num.magnitude());
    let mag = BigInt::from(mag.clone());
    let q = (&mag * &two + den) / (den * &two);
    match sign {
        Sign::Minus => -q,
        _ => q,
    }
}

impl Fixed {
    pub fn zero(scale: u32) -> Self {
        Fixed { units: BigInt::zero(), scale }
    }

    pub fn one(scale: u32) -> Self {
        Fixed { units: pow10(scale), scale }
    }

    pub fn from_bigint(n: &BigInt, scale: u32) -> Self {
        Fixed { units: n * pow10(scale), scale }
    }

    /// Exact-rational entry point: `num / den` at the given scale.
    pub fn from_ratio(num: &BigInt, den: &BigInt, scale: u32) -> Result<Self, ExprError> {
        if den.is_zero() {
            return Err(ExprError::undefined("division by zero"));
        }
        let (num, den) = if den.is_negative() { (-num, -den) } else { (num.clone(), den.clone()) };
        Ok(Fixed { units: div_rounded(&(num * pow10(scale)), &den), scale })
    }

    /// Pi at the given scale. Limited to the embedded digit table.
    pub fn pi(scale: u32) -> Self {
        assert!(
            scale as usize <= PI_DIGITS.len(),
            "pi requested at scale {scale}, only {} digits embedded",
            PI_DIGITS.len()
        );
        let digits = format!("3{}", &PI_DIGITS[..scale as usize]);
        Fixed { units: digits.parse().expect("pi digit table is numeric"), scale }
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.units.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.units.is_negative()
    }

    pub fn neg(&self) -> Self {
        Fixed { units: -&self.units, scale: self.scale }
    }

    pub fn abs(&self) -> Self {
        Fixed { units: self.units.abs(), scale: self.scale }
    }

    fn check_scale(&self, other: &Fixed) {
        assert_eq!(self.scale, other.scale, "mixed fixed-point scales");
    }

    pub fn add(&self, other: &Fixed) -> Self {
        self.check_scale(other);
        Fixed { units: &self.units + &other.units, scale: self.scale }
    }

    pub fn sub(&self, other: &Fixed) -> Self {
        self.check_scale(other);
        Fixed { units: &self.units - &other.units, scale: self.scale }
    }

    pub fn mul(&self, other: &Fixed) -> Self {
        self.check_scale(other);
        Fixed {
            units: div_rounded(&(&self.units * &other.units), &pow10(self.scale)),
            scale: self.scale,
        }
    }

    pub fn div(&self, other: &Fixed) -> Result<Self, ExprError> {
        self.check_scale(other);
        if other.units.is_zero() {
            return Err(ExprError::undefined("division by zero"));
        }
        let (num, den) = if other.units.is_negative() {
            (-&self.units, -&other.units)
        } else {
            (self.units.clone(), other.units.clone())
        };
        Ok(Fixed { units: div_rounded(&(num * pow10(self.scale)), &den), scale: self.scale })
    }

    pub fn sqrt(&self) -> Result<Self, ExprError> {
        if self.units.is_negative() {
            return Err(ExprError::undefined("square root of a negative value"));
        }
        // sqrt(u / 10^s) = sqrt(u * 10^s) / 10^s, floor sqrt on the magnitude.
        let scaled: BigUint = (self.units.magnitude() * pow10(self.scale).magnitude()).clone();
        Ok(Fixed { units: BigInt::from(scaled.sqrt()), scale: self.scale })
    }

    pub fn powi(&self, exp: i32) -> Result<Self, ExprError> {
        if exp == 0 {
            return Ok(Fixed::one(self.scale));
        }
        let mut base = if exp < 0 {
            Fixed::one(self.scale).div(self)?
        } else {
            self.clone()
        };
        let mut n = exp.unsigned_abs();
        let mut acc = Fixed::one(self.scale);
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        Ok(acc)
    }

    pub fn cmp_value(&self, other: &Fixed) -> std::cmp::Ordering {
        self.check_scale(other);
        self.units.cmp(&other.units)
    }

    /// `10^-digits` at this value's scale; zero if finer than the scale.
    pub fn epsilon(digits: u32, scale: u32) -> Self {
        if digits > scale {
            return Fixed::zero(scale);
        }
        Fixed { units: pow10(scale - digits), scale }
    }
}

impl std::fmt::Display for Fixed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ten = pow10(self.scale);
        let int = &self.units / &ten;
        let frac = (&self.units % &ten).magnitude().clone();
        let sign = if self.units.is_negative() && int.is_zero() { "-" } else { "" };
        write!(f, "{sign}{int}.{:0width$}", frac, width = self.scale as usize)
    }
}
