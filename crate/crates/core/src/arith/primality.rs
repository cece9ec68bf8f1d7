//! Primality testing.
//!
//! Below 2^64 a strong Miller-Rabin test over the first twelve prime bases
//! is deterministic. Above that the verdict is only "probable": the same
//! Miller-Rabin bases followed by a strong Lucas test with Selfridge's
//! parameter choice (a Baillie-PSW style combination).

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::jacobi;
use crate::error::{Error, Result};

/// Name of the test configuration behind every [`Primality::ProbablePrime`].
pub const PROBABLE_PRIME_TEST: &str = "strong-mr(2,3,5,7,11,13,17,19,23,29,31,37)+strong-lucas(selfridge-a)";

const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primality {
    Prime,
    Composite,
    ProbablePrime,
}

impl Primality {
    /// Prime or probable prime.
    pub fn is_prime_like(self) -> bool {
        !matches!(self, Primality::Composite)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic for every `u64`. `0` and `1` are not prime.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &MR_BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &MR_BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn strong_mr_big(n: &BigUint, base: u64) -> bool {
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let mut x = BigUint::from(base).modpow(&d, n);
    if x == one || x == n_minus_1 {
        return true;
    }
    for _ in 1..s {
        x = (&x * &x) % n;
        if x == n_minus_1 {
            return true;
        }
    }
    false
}

fn half_mod(x: BigInt, n: &BigInt) -> BigInt {
    if x.is_odd() {
        (x + n) >> 1
    } else {
        x >> 1
    }
}

/// Strong Lucas probable-prime test for odd `n` that is not a perfect square.
fn strong_lucas(n: &BigUint) -> bool {
    let n_int = BigInt::from(n.clone());
    // Selfridge: first D in 5, -7, 9, -11, ... with (D|n) = -1.
    let mut d_abs: i64 = 5;
    let mut positive = true;
    let d = loop {
        let d = if positive { d_abs } else { -d_abs };
        let j = jacobi(&BigInt::from(d), n);
        if j == -1 {
            break d;
        }
        if j == 0 && BigInt::from(d_abs) != n_int {
            return false;
        }
        d_abs += 2;
        positive = !positive;
    };
    let q = BigInt::from((1 - d) / 4);
    let norm = |x: BigInt| x.mod_floor(&n_int);
    let d_big = BigInt::from(d);

    let n_plus_1 = n + 1u32;
    let s = n_plus_1.trailing_zeros().unwrap_or(0);
    let k = &n_plus_1 >> s;

    let mut u = BigInt::one();
    let mut v = BigInt::one();
    let mut qk = norm(q.clone());
    for bit in (0..k.bits() - 1).rev() {
        u = norm(&u * &v);
        v = norm(&v * &v - (&qk << 1));
        qk = norm(&qk * &qk);
        if k.bit(bit) {
            let u_next = half_mod(&u + &v, &n_int);
            let v_next = half_mod(&d_big * &u + &v, &n_int);
            u = norm(u_next);
            v = norm(v_next);
            qk = norm(&qk * &q);
        }
    }
    if u.is_zero() || v.is_zero() {
        return true;
    }
    for _ in 1..s {
        v = norm(&v * &v - (&qk << 1));
        qk = norm(&qk * &qk);
        if v.is_zero() {
            return true;
        }
    }
    false
}

/// Primality verdict. Rejects `0`; `1` is reported as composite (a unit,
/// not a prime).
pub fn is_prime(n: &BigUint) -> Result<Primality> {
    if n.is_zero() {
        return Err(Error::InvalidArgument("primality of 0 is undefined".into()));
    }
    if let Some(small) = n.to_u64() {
        return Ok(if is_prime_u64(small) {
            Primality::Prime
        } else {
            Primality::Composite
        });
    }
    for &p in &MR_BASES {
        if (n % p).is_zero() {
            return Ok(Primality::Composite);
        }
    }
    for &a in &MR_BASES {
        if !strong_mr_big(n, a) {
            return Ok(Primality::Composite);
        }
    }
    let root = n.sqrt();
    if &root * &root == *n {
        return Ok(Primality::Composite);
    }
    Ok(if strong_lucas(n) {
        Primality::ProbablePrime
    } else {
        Primality::Composite
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
    }

    #[test]
    fn small_values_match_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime_u64(n), trial(n), "n = {n}");
        }
    }

    #[test]
    fn examples() {
        assert_eq!(is_prime(&BigUint::from(29u32)).unwrap(), Primality::Prime);
        assert_eq!(is_prime(&BigUint::from(561u32)).unwrap(), Primality::Composite);
        assert_eq!(is_prime(&BigUint::from(1u32)).unwrap(), Primality::Composite);
        assert!(is_prime(&BigUint::zero()).is_err());
    }

    #[test]
    fn strong_pseudoprimes_are_caught() {
        // smallest strong pseudoprime to all twelve Miller-Rabin bases
        let spsp: BigUint = "318665857834031151167461".parse().unwrap();
        assert!(MR_BASES.iter().all(|&a| strong_mr_big(&spsp, a)));
        assert_eq!(is_prime(&spsp).unwrap(), Primality::Composite);
        for n in [3_215_031_751u64, 2_152_302_898_747, 341_550_071_728_321] {
            assert!(!is_prime_u64(n));
        }
    }

    #[test]
    fn large_primes_are_probable() {
        let m61 = (BigUint::one() << 61u32) - 1u32;
        assert_eq!(is_prime(&m61).unwrap(), Primality::Prime);
        let m89 = (BigUint::one() << 89u32) - 1u32;
        assert_eq!(is_prime(&m89).unwrap(), Primality::ProbablePrime);
        let m127 = (BigUint::one() << 127u32) - 1u32;
        assert_eq!(is_prime(&m127).unwrap(), Primality::ProbablePrime);
        assert_eq!(is_prime(&(&m89 * &m61)).unwrap(), Primality::Composite);
        assert_eq!(is_prime(&(&m89 * &m89)).unwrap(), Primality::Composite);
    }

    #[test]
    fn lucas_test_alone_accepts_primes_above_u64() {
        let p: BigUint = "18446744073709551629".parse().unwrap();
        assert!(strong_lucas(&p));
    }
}
