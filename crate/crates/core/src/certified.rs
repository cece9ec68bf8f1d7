//! Certified real arithmetic on dyadic enclosures.
//!
//! An [`Enclosure`] is a pair of integers `lo <= hi` standing for the real
//! interval `[lo / 2^bits, hi / 2^bits]`. Every operation rounds the lower
//! endpoint down and the upper endpoint up, so the true value of any
//! expression built from exact inputs stays inside the result. Logarithms
//! come from the `atanh` series evaluated twice, once with every step
//! rounded down and once rounded up plus a bound on the truncated tail.
//!
//! Comparisons are three-valued: an enclosure that straddles the point it
//! is compared against yields `None`, and [`PrecisionPolicy::decide`]
//! re-runs the evaluation at doubled precision until a verdict appears or
//! the cap is hit.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Guard bits carried by the series evaluations beyond the target precision.
const GUARD_BITS: u32 = 32;

/// Fractional decimal digits used when an enclosure is rendered.
pub const DECIMAL_DIGITS: usize = 40;

fn pow2(k: u32) -> BigInt {
    BigInt::one() << k
}

fn floor_div(a: &BigInt, b: &BigInt) -> BigInt {
    a.div_floor(b)
}

fn ceil_div(a: &BigInt, b: &BigInt) -> BigInt {
    -((-a).div_floor(b))
}

/// `[lo, hi] / 2^bits` with `lo <= hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enclosure {
    lo: BigInt,
    hi: BigInt,
    bits: u32,
}

impl Enclosure {
    pub fn from_int(n: impl Into<BigInt>, bits: u32) -> Self {
        let v = n.into() << bits;
        Enclosure {
            lo: v.clone(),
            hi: v,
            bits,
        }
    }

    pub fn from_ratio(r: &BigRational, bits: u32) -> Self {
        let scaled = r.numer() << bits;
        Enclosure {
            lo: floor_div(&scaled, r.denom()),
            hi: ceil_div(&scaled, r.denom()),
            bits,
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn lower_scaled(&self) -> &BigInt {
        &self.lo
    }

    pub fn upper_scaled(&self) -> &BigInt {
        &self.hi
    }

    pub fn lower(&self) -> BigRational {
        BigRational::new(self.lo.clone(), pow2(self.bits))
    }

    pub fn upper(&self) -> BigRational {
        BigRational::new(self.hi.clone(), pow2(self.bits))
    }

    pub fn width(&self) -> BigRational {
        BigRational::new(&self.hi - &self.lo, pow2(self.bits))
    }

    /// Lossy midpoint, for human-readable output only.
    pub fn approx(&self) -> f64 {
        let mid = BigRational::new(&self.lo + &self.hi, pow2(self.bits + 1));
        mid.to_f64().unwrap_or(f64::NAN)
    }

    fn check_bits(&self, other: &Self) {
        assert_eq!(self.bits, other.bits, "enclosures at different precisions");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_bits(other);
        Enclosure {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
            bits: self.bits,
        }
    }

    pub fn neg(&self) -> Self {
        Enclosure {
            lo: -&self.hi,
            hi: -&self.lo,
            bits: self.bits,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check_bits(other);
        let products = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let scale = pow2(self.bits);
        let min = products.iter().min().expect("four products");
        let max = products.iter().max().expect("four products");
        Enclosure {
            lo: floor_div(min, &scale),
            hi: ceil_div(max, &scale),
            bits: self.bits,
        }
    }

    /// Division by an enclosure that excludes zero.
    pub fn div(&self, other: &Self) -> Result<Self> {
        self.check_bits(other);
        if other.lo.sign() != other.hi.sign() || other.lo.is_zero() || other.hi.is_zero() {
            return Err(Error::InvalidArgument("divisor enclosure contains zero".into()));
        }
        let mut lo: Option<BigInt> = None;
        let mut hi: Option<BigInt> = None;
        for a in [&self.lo, &self.hi] {
            for b in [&other.lo, &other.hi] {
                let num = a << self.bits;
                let down = floor_div(&num, b);
                let up = ceil_div(&num, b);
                lo = Some(lo.map_or(down.clone(), |l| l.min(down)));
                hi = Some(hi.map_or(up.clone(), |h| h.max(up)));
            }
        }
        Ok(Enclosure {
            lo: lo.expect("nonempty"),
            hi: hi.expect("nonempty"),
            bits: self.bits,
        })
    }

    /// Natural logarithm of an enclosure lying strictly above zero.
    pub fn ln(&self) -> Result<Self> {
        if !self.lo.is_positive() {
            return Err(Error::InvalidArgument("logarithm of a non-positive enclosure".into()));
        }
        let (lo, mut hi) = ln_bounds(self.lo.magnitude(), self.bits, self.bits);
        if self.hi != self.lo {
            hi = ln_bounds(self.hi.magnitude(), self.bits, self.bits).1;
        }
        Ok(Enclosure {
            lo,
            hi,
            bits: self.bits,
        })
    }

    /// Where this enclosure sits relative to `other`; `None` if they overlap.
    pub fn compare(&self, other: &Self) -> Option<Ordering> {
        self.check_bits(other);
        if self.hi < other.lo {
            Some(Ordering::Less)
        } else if self.lo > other.hi {
            Some(Ordering::Greater)
        } else if self.lo == self.hi && other.lo == other.hi && self.lo == other.lo {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    /// Where this enclosure sits relative to an exact rational.
    pub fn compare_ratio(&self, r: &BigRational) -> Option<Ordering> {
        let lower = self.lower();
        let upper = self.upper();
        if &upper < r {
            Some(Ordering::Less)
        } else if &lower > r {
            Some(Ordering::Greater)
        } else if lower == upper {
            Some(Ordering::Equal)
        } else {
            None
        }
    }

    pub fn record(&self) -> EnclosureRecord {
        EnclosureRecord {
            bounds: [
                fixed_decimal(&self.lo, self.bits, false),
                fixed_decimal(&self.hi, self.bits, true),
            ],
            width: fixed_decimal(&(&self.hi - &self.lo), self.bits, true),
            precision_bits: self.bits,
        }
    }
}

/// Serializable form: outward-rounded decimal bounds plus the precision
/// the enclosure was computed at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnclosureRecord {
    pub bounds: [String; 2],
    /// `upper - lower`, rounded up.
    pub width: String,
    pub precision_bits: u32,
}

/// `x / 2^bits` as a decimal with [`DECIMAL_DIGITS`] fractional digits,
/// rounded down or up.
fn fixed_decimal(x: &BigInt, bits: u32, round_up: bool) -> String {
    let scaled = x * BigInt::from(10u32).pow(DECIMAL_DIGITS as u32);
    let q = if round_up {
        ceil_div(&scaled, &pow2(bits))
    } else {
        floor_div(&scaled, &pow2(bits))
    };
    let negative = q.sign() == Sign::Minus;
    let digits = q.magnitude().to_string();
    let padded = format!("{digits:0>width$}", width = DECIMAL_DIGITS + 1);
    let (int_part, frac_part) = padded.split_at(padded.len() - DECIMAL_DIGITS);
    format!("{}{}.{}", if negative { "-" } else { "" }, int_part, frac_part)
}

/// Bounds on `atanh(num / den) * 2^w` for `0 <= num / den <= 1/3`.
fn atanh_bounds(num: &BigUint, den: &BigUint, w: u32) -> (BigInt, BigInt) {
    assert!(num * 3u32 <= *den, "atanh argument outside [0, 1/3]");
    let num = BigInt::from(num.clone());
    let den = BigInt::from(den.clone());
    let scale = pow2(w);
    let scaled = &num << w;

    // every quantity rounded down, terms dropped past underflow
    let t = floor_div(&scaled, &den);
    let t2 = floor_div(&(&t * &t), &scale);
    let mut power = t.clone();
    let mut lower = t;
    let mut j = 1u32;
    loop {
        power = floor_div(&(&power * &t2), &scale);
        if power.is_zero() {
            break;
        }
        lower += floor_div(&power, &BigInt::from(2 * j + 1));
        j += 1;
    }

    // every quantity rounded up, tail bounded by t^(2j+1) / ((2j+1)(1 - t^2))
    let t = ceil_div(&scaled, &den);
    let t2 = ceil_div(&(&t * &t), &scale);
    let mut power = t.clone();
    let mut upper = t;
    let mut j = 1u32;
    loop {
        power = ceil_div(&(&power * &t2), &scale);
        let odd = BigInt::from(2 * j + 1);
        if power <= BigInt::one() {
            upper += ceil_div(&(&power * 9u32), &(odd * 8u32));
            break;
        }
        upper += ceil_div(&power, &odd);
        j += 1;
    }
    (lower, upper)
}

fn ln2_bounds(w: u32) -> (BigInt, BigInt) {
    static CACHE: OnceLock<Mutex<HashMap<u32, (BigInt, BigInt)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("ln2 cache poisoned").get(&w) {
        return hit.clone();
    }
    let (lo, hi) = atanh_bounds(&BigUint::one(), &BigUint::from(3u32), w);
    let bounds = (lo << 1, hi << 1);
    cache.lock().expect("ln2 cache poisoned").insert(w, bounds.clone());
    bounds
}

/// Bounds on `ln(a / 2^scale)` at `2^-target` resolution.
fn ln_bounds(a: &BigUint, scale: u32, target: u32) -> (BigInt, BigInt) {
    assert!(!a.is_zero());
    let w = target + GUARD_BITS;
    let top = a.bits() - 1;
    let mut c = BigUint::one() << top;
    let mut k = top as i64 - scale as i64;
    // keep the mantissa in [1/sqrt2, sqrt2) so |t| <= 0.172
    if a * a >= (&c * &c) << 1u32 {
        c <<= 1u32;
        k += 1;
    }
    let den = a + &c;
    let (s_lo, s_hi) = if *a >= c {
        atanh_bounds(&(a - &c), &den, w)
    } else {
        let (lo, hi) = atanh_bounds(&(&c - a), &den, w);
        (-hi, -lo)
    };
    let (l2_lo, l2_hi) = ln2_bounds(w);
    let kk = BigInt::from(k);
    let (k_lo, k_hi) = if k >= 0 {
        (&kk * l2_lo, &kk * l2_hi)
    } else {
        (&kk * l2_hi, &kk * l2_lo)
    };
    let lo = (s_lo << 1) + k_lo;
    let hi = (s_hi << 1) + k_hi;
    let drop = pow2(GUARD_BITS);
    (floor_div(&lo, &drop), ceil_div(&hi, &drop))
}

/// `ln 2`.
pub fn ln2(bits: u32) -> Enclosure {
    let (lo, hi) = ln2_bounds(bits + GUARD_BITS);
    let drop = pow2(GUARD_BITS);
    Enclosure {
        lo: floor_div(&lo, &drop),
        hi: ceil_div(&hi, &drop),
        bits,
    }
}

/// The golden ratio `(1 + sqrt 5) / 2`.
pub fn golden_ratio(bits: u32) -> Enclosure {
    let s = (BigUint::from(5u32) << (2 * bits)).sqrt();
    let s = BigInt::from(s);
    let one = pow2(bits);
    let two = BigInt::from(2);
    Enclosure {
        lo: floor_div(&(&one + &s), &two),
        hi: ceil_div(&(&one + &s + 1u32), &two),
        bits,
    }
}

/// `ln((1 + sqrt 5) / 2)`.
pub fn ln_golden_ratio(bits: u32) -> Enclosure {
    golden_ratio(bits).ln().expect("golden ratio is positive")
}

/// `ln n` for a positive integer.
pub fn ln_int(n: u64, bits: u32) -> Result<Enclosure> {
    if n == 0 {
        return Err(Error::InvalidArgument("ln 0".into()));
    }
    Enclosure::from_int(n, bits).ln()
}

/// Starting precision and number of doublings allowed for a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct PrecisionPolicy {
    pub base_bits: u32,
    pub max_escalations: u32,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            base_bits: 128,
            max_escalations: 4,
        }
    }
}

impl PrecisionPolicy {
    /// Every precision the policy may use, smallest first.
    pub fn levels(&self) -> Vec<u32> {
        (0..=self.max_escalations).map(|i| self.base_bits << i).collect()
    }

    pub fn max_bits(&self) -> u32 {
        self.base_bits << self.max_escalations
    }

    /// Runs `eval` at increasing precision until it returns a verdict.
    /// Returns the verdict and the precision that produced it.
    pub fn decide<T>(&self, mut eval: impl FnMut(u32) -> Result<Option<T>>) -> Result<(T, u32)> {
        for bits in self.levels() {
            if let Some(v) = eval(bits)? {
                return Ok((v, bits));
            }
        }
        Err(Error::PrecisionCapExceeded {
            bits: self.max_bits(),
        })
    }
}
