//! Probabilities that remember an exact rational form when they have one.
//!
//! Population probabilities in the worked examples are small rationals
//! (1/12, 1/6, ...) that do not round-trip through binary floating point.
//! [`Prob`] carries an optional `Rational64` alongside the `f64` so that
//! generator output and file input compare exactly where exact values are
//! available, while random-model paths fall back to plain floats.

use std::fmt;

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedMul, ToPrimitive, Zero};

/// Exact rational scalar used by the table-scale arithmetic paths.
pub type Rat = Rational64;

/// A probability stored as `f64` with an optional exact rational witness.
#[derive(Clone, Copy, Debug)]
pub struct Prob {
    value: f64,
    exact: Option<Rat>,
}

impl Prob {
    pub fn from_f64(value: f64) -> Self {
        Prob { value, exact: None }
    }

    pub fn from_rat(r: Rat) -> Self {
        Prob {
            value: rat_to_f64(r),
            exact: Some(r),
        }
    }

    /// Exact rational `numer/denom`.
    pub fn exact(numer: i64, denom: i64) -> Self {
        Self::from_rat(Rat::new(numer, denom))
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn rat(&self) -> Option<Rat> {
        self.exact
    }

    pub fn is_positive(&self) -> bool {
        match self.exact {
            Some(r) => r > Rat::zero(),
            None => self.value > 0.0,
        }
    }

    /// Product that keeps exactness while both operands have it and the
    /// rational arithmetic does not overflow.
    pub fn mul(&self, other: &Prob) -> Prob {
        let exact = match (self.exact, other.exact) {
            (Some(a), Some(b)) => a.checked_mul(&b),
            _ => None,
        };
        match exact {
            Some(r) => Prob::from_rat(r),
            None => Prob::from_f64(self.value * other.value),
        }
    }

    pub fn product<'a>(factors: impl IntoIterator<Item = &'a Prob>) -> Prob {
        factors
            .into_iter()
            .fold(Prob::exact(1, 1), |acc, f| acc.mul(f))
    }

    /// Sum of a slice; exact if every term is exact and no overflow occurs.
    pub fn sum(terms: &[Prob]) -> Prob {
        let mut acc_exact: Option<Rat> = Some(Rat::zero());
        let mut acc = 0.0;
        for t in terms {
            acc += t.value;
            acc_exact = match (acc_exact, t.exact) {
                (Some(a), Some(b)) => a.checked_add(&b),
                _ => None,
            };
        }
        match acc_exact {
            Some(r) => Prob::from_rat(r),
            None => Prob::from_f64(acc),
        }
    }

    /// True when the terms sum to exactly one (exact path) or to one within
    /// `tol` (float path).
    pub fn sums_to_one(terms: &[Prob], tol: f64) -> bool {
        let total = Self::sum(terms);
        match total.exact {
            Some(r) => r == Rat::new(1, 1),
            None => (total.value - 1.0).abs() <= tol,
        }
    }
}

impl PartialEq for Prob {
    fn eq(&self, other: &Self) -> bool {
        match (self.exact, other.exact) {
            (Some(a), Some(b)) => a == b,
            _ => self.value == other.value,
        }
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            None => write!(f, "{}", self.value),
        }
    }
}

fn rat_to_f64(r: Rat) -> f64 {
    r.to_f64()
        .unwrap_or_else(|| *r.numer() as f64 / *r.denom() as f64)
}

/// Exact conversion of a dyadic-representable `f64` into a rational.
///
/// Returns `None` when the value cannot be held in an `i64` ratio (huge
/// exponents), in which case callers stay on the float path.
pub fn rat_from_f64(x: f64) -> Option<Rat> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some(Rat::zero());
    }
    let bits = x.to_bits();
    let sign: i64 = if bits >> 63 == 0 { 1 } else { -1 };
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & 0x000f_ffff_ffff_ffff;
    let (mantissa, exp2) = if exponent == 0 {
        (fraction, -1074)
    } else {
        (fraction | 0x0010_0000_0000_0000, exponent - 1075)
    };
    let mantissa = mantissa as i64;
    if exp2 >= 0 {
        if exp2 > 10 {
            return None; // would overflow for any nontrivial mantissa
        }
        mantissa
            .checked_mul(1i64 << exp2)
            .map(|n| Rat::new(sign * n, 1))
    } else {
        let shift = -exp2;
        // Strip trailing zero bits of the mantissa first so small dyadics
        // like 0.5 or -1.5 fit comfortably.
        let tz = mantissa.trailing_zeros() as i64;
        let eff = shift - tz.min(shift);
        if eff > 62 {
            return None;
        }
        let m = mantissa >> tz.min(shift);
        Some(Rat::new(sign * m, 1i64 << eff))
    }
}
