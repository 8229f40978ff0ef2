//! Exact decimal rendering of rationals.

use num::bigint::BigInt;
use num::rational::{BigRational, Ratio};
use num::{Integer, Signed, ToPrimitive, Zero};

/// Digits after the decimal point in serialized fractions.
pub const DECIMALS: u32 = 6;

/// Renders a rational with six decimals, rounding half away from zero.
pub fn fmt_decimal(value: &BigRational) -> String {
    let scale = BigInt::from(10u32).pow(DECIMALS);
    let numer: BigInt = value.numer().abs() * &scale * 2 + value.denom();
    let scaled = numer.div_floor(&(value.denom() * BigInt::from(2)));
    let (int, frac) = scaled.div_rem(&scale);
    let sign = if value.is_negative() && !scaled.is_zero() {
        "-"
    } else {
        ""
    };
    format!(
        "{sign}{int}.{frac:0>width$}",
        frac = frac.to_u64().expect("below scale"),
        width = DECIMALS as usize
    )
}

pub fn fmt_ratio(value: &Ratio<u64>) -> String {
    fmt_decimal(&to_big(value))
}

pub fn to_big(value: &Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*value.numer()), BigInt::from(*value.denom()))
}
