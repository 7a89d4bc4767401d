//! Decimal fixed-point numbers with 12 fractional digits.
//!
//! All scores, weights, stakes and difficulty values are carried as
//! integers scaled by 10^12 so that every node (and every replay of a
//! persisted ledger) computes bit-identical results. Multiplication and
//! division round toward zero.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Number of raw units in 1.0.
pub const SCALE: u64 = 1_000_000_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixed(u64);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(SCALE);
    /// Largest value strictly below one.
    pub const BELOW_ONE: Fixed = Fixed(SCALE - 1);

    pub const fn from_raw(raw: u64) -> Self {
        Fixed(raw)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub const fn from_int(n: u64) -> Self {
        Fixed(n * SCALE)
    }

    /// Nearest representable value; negative and NaN inputs map to zero.
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() || x <= 0.0 {
            return Fixed::ZERO;
        }
        Fixed((x * SCALE as f64).round() as u64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// `num / den`, rounded down. `den` must be non-zero.
    pub fn from_ratio(num: u64, den: u64) -> Self {
        assert!(den != 0, "fixed-point ratio with zero denominator");
        Fixed(((num as u128 * SCALE as u128) / den as u128) as u64)
    }

    pub fn mul_floor(self, rhs: Fixed) -> Fixed {
        Fixed(((self.0 as u128 * rhs.0 as u128) / SCALE as u128) as u64)
    }

    /// `self / rhs`, rounded down; `None` when `rhs` is zero or the result overflows.
    pub fn checked_div(self, rhs: Fixed) -> Option<Fixed> {
        if rhs.0 == 0 {
            return None;
        }
        let q = (self.0 as u128 * SCALE as u128) / rhs.0 as u128;
        u64::try_from(q).ok().map(Fixed)
    }

    /// `(self + rhs) / 2`, rounded down.
    pub fn midpoint(self, rhs: Fixed) -> Fixed {
        Fixed(((self.0 as u128 + rhs.0 as u128) / 2) as u64)
    }

    pub fn saturating_sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.saturating_sub(rhs.0))
    }

    pub fn min(self, rhs: Fixed) -> Fixed {
        if self <= rhs {
            self
        } else {
            rhs
        }
    }

    pub fn max(self, rhs: Fixed) -> Fixed {
        if self >= rhs {
            self
        } else {
            rhs
        }
    }

    pub fn is_unit(self) -> bool {
        self.0 <= SCALE
    }

    /// Arithmetic mean rounded down; `None` for an empty input.
    pub fn mean<I: IntoIterator<Item = Fixed>>(values: I) -> Option<Fixed> {
        let (sum, n) = values
            .into_iter()
            .fold((0u128, 0u128), |(s, n), v| (s + v.0 as u128, n + 1));
        sum.checked_div(n).map(|m| Fixed(m as u64))
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 - rhs.0)
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / SCALE;
        let frac = self.0 % SCALE;
        match f.precision() {
            Some(p) if p < 12 => {
                let digits = format!("{frac:012}");
                write!(f, "{int}.{}", &digits[..p])
            }
            _ => write!(f, "{int}.{frac:012}"),
        }
    }
}
