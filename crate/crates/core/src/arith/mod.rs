//! Integer machinery: primality, budgeted factorization, multiplicative
//! functions and quadratic-residue symbols.

mod cache;
mod factor;
mod primality;

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub use cache::FactorCache;
pub use factor::{factorize, factorize_u64, FactorBudget, DEFAULT_SEED, DEFAULT_WORK_BUDGET};
pub use primality::{is_prime, is_prime_u64, Primality, PROBABLE_PRIME_TEST};

/// Default cap on the number of divisors [`divisors`] will enumerate.
pub const DEFAULT_DIVISOR_CAP: u64 = 1 << 20;

/// Imported lower bound on the number of distinct prime factors of any
/// Lehmer number (Renze). Used only as a premise, never recomputed.
pub const OMEGA_LOWER_BOUND: u32 = 15;

/// One `prime^exponent` term of a factorization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrimePower {
    #[serde(serialize_with = "crate::json::biguint")]
    pub prime: BigUint,
    pub exponent: u32,
    /// `Prime` when proven, `ProbablePrime` above the deterministic range.
    pub grade: Primality,
}

/// An integer together with the part of its factorization that is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactoredInteger {
    #[serde(serialize_with = "crate::json::biguint")]
    pub value: BigUint,
    pub factors: Vec<PrimePower>,
    #[serde(serialize_with = "crate::json::biguint")]
    pub cofactor: BigUint,
    pub complete: bool,
}

impl FactoredInteger {
    /// Builds a factorization from parts, checking every invariant: primes
    /// strictly increasing and prime-like, positive exponents, and
    /// `value = cofactor * prod(prime^exponent)`.
    pub fn from_parts(value: BigUint, mut factors: Vec<(BigUint, u32)>, cofactor: BigUint) -> Result<Self> {
        factors.sort();
        let mut product = cofactor.clone();
        let mut powers = Vec::with_capacity(factors.len());
        for (i, (p, e)) in factors.into_iter().enumerate() {
            if e == 0 {
                return Err(Error::InvalidArgument(format!("zero exponent on {p}")));
            }
            if i > 0 && powers.last().map(|pp: &PrimePower| pp.prime == p).unwrap_or(false) {
                return Err(Error::InvalidArgument(format!("prime {p} listed twice")));
            }
            let grade = is_prime(&p)?;
            if !grade.is_prime_like() {
                return Err(Error::InvalidArgument(format!("{p} is not prime")));
            }
            product *= p.pow(e);
            powers.push(PrimePower {
                prime: p,
                exponent: e,
                grade,
            });
        }
        if product != value || value.is_zero() {
            return Err(Error::InvalidArgument(format!(
                "factors multiply to {product}, not {value}"
            )));
        }
        let complete = cofactor.is_one();
        Ok(FactoredInteger {
            value,
            factors: powers,
            cofactor,
            complete,
        })
    }

    pub fn require_complete(&self) -> Result<()> {
        if self.complete {
            Ok(())
        } else {
            Err(Error::IncompleteFactorization {
                value: self.value.clone(),
                cofactor: self.cofactor.clone(),
            })
        }
    }

    pub fn primes(&self) -> impl Iterator<Item = &BigUint> {
        self.factors.iter().map(|f| &f.prime)
    }

    /// True when some listed prime is only a probable prime.
    pub fn has_probable_primes(&self) -> bool {
        self.factors.iter().any(|f| f.grade == Primality::ProbablePrime)
    }

    /// Renders as `p1^a1*p2^a2*...`, with `1` for the empty product.
    pub fn factor_string(&self) -> String {
        let mut terms: Vec<String> = self
            .factors
            .iter()
            .map(|f| {
                if f.exponent == 1 {
                    f.prime.to_string()
                } else {
                    format!("{}^{}", f.prime, f.exponent)
                }
            })
            .collect();
        if !self.complete {
            terms.push(self.cofactor.to_string());
        }
        if terms.is_empty() {
            "1".to_string()
        } else {
            terms.join("*")
        }
    }
}

/// Euler's totient: `prod (p - 1) p^(a - 1)`.
pub fn totient(f: &FactoredInteger) -> Result<BigUint> {
    f.require_complete()?;
    Ok(f.factors.iter().fold(BigUint::one(), |acc, pp| {
        acc * (&pp.prime - 1u32) * pp.prime.pow(pp.exponent - 1)
    }))
}

/// Number of divisors, `prod (a + 1)`.
pub fn divisor_count(f: &FactoredInteger) -> Result<BigUint> {
    f.require_complete()?;
    Ok(f.factors
        .iter()
        .fold(BigUint::one(), |acc, pp| acc * (pp.exponent + 1)))
}

/// Number of distinct prime factors.
pub fn omega(f: &FactoredInteger) -> Result<usize> {
    f.require_complete()?;
    Ok(f.factors.len())
}

/// All divisors in increasing order. Refuses to enumerate more than `cap`.
pub fn divisors(f: &FactoredInteger, cap: u64) -> Result<Vec<BigUint>> {
    let count = divisor_count(f)?;
    if count > BigUint::from(cap) {
        return Err(Error::TooManyDivisors { count, cap });
    }
    let mut out = vec![BigUint::one()];
    for pp in &f.factors {
        let mut next = Vec::with_capacity(out.len() * (pp.exponent as usize + 1));
        for d in &out {
            let mut power = d.clone();
            next.push(power.clone());
            for _ in 0..pp.exponent {
                power *= &pp.prime;
                next.push(power.clone());
            }
        }
        out = next;
    }
    out.sort();
    Ok(out)
}

/// Divisors of a machine-word integer, increasing.
pub fn divisors_u64(n: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    for (p, e) in factorize_u64(n) {
        let mut next = Vec::with_capacity(out.len() * (e as usize + 1));
        for &d in &out {
            let mut power = d;
            next.push(power);
            for _ in 0..e {
                power *= p;
                next.push(power);
            }
        }
        out = next;
    }
    out.sort_unstable();
    out
}

/// Jacobi symbol `(a | n)` for odd positive `n`.
pub fn jacobi(a: &BigInt, n: &BigUint) -> i8 {
    debug_assert!(n.is_odd());
    let mut n = BigInt::from(n.clone());
    let mut a = a.mod_floor(&n);
    let mut result = 1i8;
    while !a.is_zero() {
        let tz = a.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            a >>= tz;
            let n_mod_8 = (&n % 8u32).to_u32().unwrap_or(0);
            if tz % 2 == 1 && (n_mod_8 == 3 || n_mod_8 == 5) {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if (&a % 4u32) == BigInt::from(3) && (&n % 4u32) == BigInt::from(3) {
            result = -result;
        }
        a = a.mod_floor(&n);
    }
    if n.is_one() {
        result
    } else {
        0
    }
}

/// Legendre symbol `(a | p)` for an odd prime `p`.
pub fn legendre(a: &BigInt, p: &BigUint) -> Result<i8> {
    if p.is_even() || !is_prime(p)?.is_prime_like() {
        return Err(Error::NotOddPrime(p.to_string()));
    }
    Ok(jacobi(a, p))
}

/// `legendre` for machine-word arguments.
pub fn legendre_u64(a: i64, p: u64) -> Result<i8> {
    if p % 2 == 0 || !is_prime_u64(p) {
        return Err(Error::NotOddPrime(p.to_string()));
    }
    Ok(jacobi(&BigInt::from(a), &BigUint::from(p)))
}

/// `3 * 5 * 7 * ... * p_{k+1}`, the product of the first `k` odd primes.
pub fn product_of_first_odd_primes(k: usize) -> Result<BigUint> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    Ok((3u64..)
        .filter(|&n| is_prime_u64(n))
        .take(k)
        .fold(BigUint::one(), |acc, p| acc * p))
}

/// Primes `<= limit` by the sieve of Eratosthenes.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j <= n {
            composite[j] = true;
            j += i;
        }
    }
    out
}

/// Cached small primes for trial division.
pub(crate) fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| primes_up_to(10_000))
}

/// Smallest prime factor of `n >= 2`.
pub fn smallest_prime_factor(n: u64) -> u64 {
    factorize_u64(n).first().map(|&(p, _)| p).unwrap_or(n)
}

/// `p`-adic valuation of a positive integer; `None` for zero.
pub fn valuation(n: &BigUint, p: &BigUint) -> Option<u32> {
    if n.is_zero() {
        return None;
    }
    let mut n = n.clone();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(p);
        if !r.is_zero() {
            return Some(v);
        }
        n = q;
        v += 1;
    }
}

/// `2`-adic valuation; `None` for zero.
pub fn two_adic(n: &BigUint) -> Option<u64> {
    n.trailing_zeros()
}

/// Signed convenience for callers that produce possibly negative values.
pub fn two_adic_signed(n: &BigInt) -> Option<u64> {
    n.abs().magnitude().trailing_zeros()
}
