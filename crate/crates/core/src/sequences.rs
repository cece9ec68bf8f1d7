//! Fibonacci and Lucas numbers: exact values by fast doubling, residues
//! modulo an integer, the classical identities tying the two sequences
//! together, and period detection.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two companion sequences a query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Fibonacci,
    Lucas,
}

impl SequenceKind {
    /// The seed pair `(x_0, x_1)`.
    pub fn seeds(self) -> (u64, u64) {
        match self {
            SequenceKind::Fibonacci => (0, 1),
            SequenceKind::Lucas => (2, 1),
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceKind::Fibonacci => "fibonacci",
            SequenceKind::Lucas => "lucas",
        })
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fib" | "fibonacci" | "f" => Ok(SequenceKind::Fibonacci),
            "lucas" | "l" => Ok(SequenceKind::Lucas),
            other => Err(Error::InvalidArgument(format!("unknown sequence kind `{other}`"))),
        }
    }
}

/// Exact `(F_n, L_n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePair {
    pub index: u64,
    pub fib: BigUint,
    pub lucas: BigUint,
}

impl SequencePair {
    pub fn get(&self, kind: SequenceKind) -> &BigUint {
        match kind {
            SequenceKind::Fibonacci => &self.fib,
            SequenceKind::Lucas => &self.lucas,
        }
    }
}

/// `(F_n mod m, L_n mod m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModularPair {
    pub index: u64,
    pub modulus: u64,
    pub fib_res: u64,
    pub lucas_res: u64,
}

impl ModularPair {
    pub fn get(&self, kind: SequenceKind) -> u64 {
        match kind {
            SequenceKind::Fibonacci => self.fib_res,
            SequenceKind::Lucas => self.lucas_res,
        }
    }
}

/// Returns `(F_n, F_{n+1})` by walking the bits of `n` from the top.
fn fib_doubling(n: u64) -> (BigUint, BigUint) {
    let mut a = BigUint::zero();
    let mut b = BigUint::one();
    for bit in (0..u64::BITS - n.leading_zeros()).rev() {
        // F_{2k} = F_k (2 F_{k+1} - F_k), F_{2k+1} = F_k^2 + F_{k+1}^2
        let c = &a * ((&b << 1u32) - &a);
        let d = &a * &a + &b * &b;
        if (n >> bit) & 1 == 1 {
            b = &c + &d;
            a = d;
        } else {
            a = c;
            b = d;
        }
    }
    (a, b)
}

pub fn pair_exact(n: u64) -> SequencePair {
    let (f, f_next) = fib_doubling(n);
    // L_n = 2 F_{n+1} - F_n
    let lucas = (f_next << 1u32) - &f;
    SequencePair {
        index: n,
        fib: f,
        lucas,
    }
}

pub fn lucas_exact(n: u64) -> BigUint {
    pair_exact(n).lucas
}

pub fn fib_exact(n: u64) -> BigUint {
    fib_doubling(n).0
}

pub fn term_exact(n: u64, kind: SequenceKind) -> BigUint {
    match kind {
        SequenceKind::Fibonacci => fib_exact(n),
        SequenceKind::Lucas => lucas_exact(n),
    }
}

fn fib_doubling_mod(n: u64, m: u64) -> (u64, u64) {
    let m128 = m as u128;
    let mut a: u128 = 0;
    let mut b: u128 = 1 % m128;
    for bit in (0..u64::BITS - n.leading_zeros()).rev() {
        let two_b_minus_a = (2 * b + m128 - a) % m128;
        let c = a * two_b_minus_a % m128;
        let d = (a * a % m128 + b * b % m128) % m128;
        if (n >> bit) & 1 == 1 {
            a = d;
            b = (c + d) % m128;
        } else {
            a = c;
            b = d;
        }
    }
    (a as u64, b as u64)
}

/// Residues of `F_n` and `L_n` modulo `m`, in `O(log n)` multiplications.
pub fn pair_mod(n: u64, m: u64) -> Result<ModularPair> {
    if m < 2 {
        return Err(Error::InvalidModulus(m));
    }
    let (f, f_next) = fib_doubling_mod(n, m);
    let m128 = m as u128;
    let lucas = ((2 * f_next as u128 + m128 - f as u128) % m128) as u64;
    Ok(ModularPair {
        index: n,
        modulus: m,
        fib_res: f,
        lucas_res: lucas,
    })
}

/// Residues of `(F_n, L_n)` for a modulus of any size.
pub fn pair_mod_big(n: u64, m: &BigUint) -> Result<(BigUint, BigUint)> {
    if *m < BigUint::from(2u32) {
        return Err(Error::InvalidModulus(m.try_into().unwrap_or(0)));
    }
    if let Ok(small) = u64::try_from(m) {
        let p = pair_mod(n, small)?;
        return Ok((p.fib_res.into(), p.lucas_res.into()));
    }
    let mut a = BigUint::zero();
    let mut b = BigUint::one();
    for bit in (0..u64::BITS - n.leading_zeros()).rev() {
        let c = (&a * ((&b << 1u32) + m - &a)) % m;
        let d = (&a * &a + &b * &b) % m;
        if (n >> bit) & 1 == 1 {
            b = (&c + &d) % m;
            a = d;
        } else {
            a = c;
            b = d;
        }
    }
    let lucas = ((&b << 1u32) + m - &a) % m;
    Ok((a, lucas))
}

fn sign(n: u64) -> BigInt {
    if n % 2 == 0 {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

/// `L_n^2 - 5 F_n^2 = 4 (-1)^n`, evaluated exactly.
pub fn check_identity_square(n: u64) -> bool {
    let pair = pair_exact(n);
    let l = BigInt::from(pair.lucas);
    let f = BigInt::from(pair.fib);
    &l * &l - BigInt::from(5) * &f * &f == BigInt::from(4) * sign(n)
}

/// `L_n = L_{n/2}^2 - 2 (-1)^{n/2}` for even `n`.
pub fn check_identity_even(n: u64) -> Result<bool> {
    if n % 2 != 0 {
        return Err(Error::WrongParity {
            index: n,
            expected: "even",
        });
    }
    let half = BigInt::from(lucas_exact(n / 2));
    let lhs = BigInt::from(lucas_exact(n));
    Ok(lhs == &half * &half - BigInt::from(2) * sign(n / 2))
}

/// `L_n - 1 = 5 F_{(n+1)/2} F_{(n-1)/2}` when `n ≡ 1 (mod 4)` and
/// `L_n - 1 = L_{(n+1)/2} L_{(n-1)/2}` when `n ≡ 3 (mod 4)`.
pub fn check_identity_odd(n: u64) -> Result<bool> {
    if n % 2 != 1 {
        return Err(Error::WrongParity {
            index: n,
            expected: "odd",
        });
    }
    let lhs = lucas_exact(n) - 1u32;
    let (up, down) = ((n + 1) / 2, (n - 1) / 2);
    let rhs = if n % 4 == 1 {
        fib_exact(up) * fib_exact(down) * 5u32
    } else {
        lucas_exact(up) * lucas_exact(down)
    };
    Ok(lhs == rhs)
}

/// The first `count` terms of the chosen sequence reduced modulo `m`.
pub fn residues_mod(kind: SequenceKind, m: u64, count: usize) -> Result<Vec<u64>> {
    if m < 2 {
        return Err(Error::InvalidModulus(m));
    }
    let (s0, s1) = kind.seeds();
    let (mut x, mut y) = (s0 % m, s1 % m);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(x);
        let next = ((x as u128 + y as u128) % m as u128) as u64;
        x = y;
        y = next;
    }
    Ok(out)
}

/// Least period of the sequence modulo `m`: the first return of the
/// consecutive-residue state to the seed state. Capped at `6 m^2` steps.
pub fn period_mod(m: u64, kind: SequenceKind) -> Result<u64> {
    if m < 2 {
        return Err(Error::InvalidModulus(m));
    }
    let cap = 6u128 * (m as u128) * (m as u128);
    let (s0, s1) = kind.seeds();
    let seed = (s0 % m, s1 % m);
    let (mut x, mut y) = seed;
    let mut steps: u128 = 0;
    loop {
        let next = ((x as u128 + y as u128) % m as u128) as u64;
        x = y;
        y = next;
        steps += 1;
        if (x, y) == seed {
            return Ok(steps as u64);
        }
        if steps >= cap {
            return Err(Error::PeriodCapExceeded { modulus: m, cap });
        }
    }
}

/// The largest power of 2 dividing any Lucas number, read off one full
/// period of `L_n mod 8`. Panics only if a Lucas number were `≡ 0 (mod 8)`,
/// which the period scan rules out.
pub fn max_two_adic_valuation_lucas() -> u32 {
    let period = period_mod(8, SequenceKind::Lucas).expect("8 is a valid modulus") as usize;
    let residues = residues_mod(SequenceKind::Lucas, 8, period).expect("8 is a valid modulus");
    residues
        .iter()
        .map(|&r| {
            assert_ne!(r, 0, "a Lucas number divisible by 8 would have unbounded valuation here");
            r.trailing_zeros()
        })
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_integer::Integer;

    fn iterate(kind: SequenceKind, n: u64) -> BigUint {
        let (s0, s1) = kind.seeds();
        let (mut a, mut b) = (BigUint::from(s0), BigUint::from(s1));
        for _ in 0..n {
            let next = &a + &b;
            a = std::mem::replace(&mut b, next);
        }
        a
    }

    #[test]
    fn seeds_and_small_values() {
        assert_eq!(lucas_exact(0), BigUint::from(2u32));
        assert_eq!(lucas_exact(1), BigUint::from(1u32));
        assert_eq!(lucas_exact(10), BigUint::from(123u32));
        assert_eq!(fib_exact(0), BigUint::zero());
        assert_eq!(fib_exact(1), BigUint::one());
        assert_eq!(fib_exact(10), BigUint::from(55u32));
    }

    #[test]
    fn doubling_matches_recurrence() {
        for n in 0..=400 {
            let p = pair_exact(n);
            assert_eq!(p.fib, iterate(SequenceKind::Fibonacci, n), "F_{n}");
            assert_eq!(p.lucas, iterate(SequenceKind::Lucas, n), "L_{n}");
        }
    }

    #[test]
    fn modular_examples() {
        assert_eq!(pair_mod(5, 8).unwrap().lucas_res, 3);
        assert_eq!(pair_mod(9, 8).unwrap().lucas_res, 4);
        let p = pair_mod(0, 7).unwrap();
        assert_eq!((p.fib_res, p.lucas_res), (0, 2));
        assert!(matches!(pair_mod(3, 1), Err(Error::InvalidModulus(1))));
        assert!(matches!(period_mod(0, SequenceKind::Lucas), Err(Error::InvalidModulus(0))));
    }

    #[test]
    fn modular_matches_exact_for_big_moduli() {
        let m = BigUint::from(u64::MAX) * 977u32 + 5u32;
        for n in [0u64, 1, 2, 57, 300, 1001] {
            let (f, l) = pair_mod_big(n, &m).unwrap();
            assert_eq!(f, fib_exact(n) % &m);
            assert_eq!(l, lucas_exact(n) % &m);
        }
        let near_max = u64::MAX - 58;
        let p = pair_mod(777, near_max).unwrap();
        assert_eq!(BigUint::from(p.fib_res), fib_exact(777) % near_max);
        assert_eq!(BigUint::from(p.lucas_res), lucas_exact(777) % near_max);
    }

    #[test]
    fn identities_small() {
        assert!(check_identity_square(0));
        assert!(check_identity_square(1));
        assert!(check_identity_square(11));
        for n in [2, 4, 10] {
            assert!(check_identity_even(n).unwrap());
        }
        for n in [1, 5, 7] {
            assert!(check_identity_odd(n).unwrap());
        }
        assert!(check_identity_even(3).is_err());
        assert!(check_identity_odd(4).is_err());
    }

    #[test]
    fn periods() {
        assert_eq!(period_mod(8, SequenceKind::Lucas).unwrap(), 12);
        assert_eq!(period_mod(2, SequenceKind::Lucas).unwrap(), 3);
        assert_eq!(period_mod(10, SequenceKind::Fibonacci).unwrap(), 60);
        assert_eq!(
            residues_mod(SequenceKind::Lucas, 8, 14).unwrap(),
            vec![2, 1, 3, 4, 7, 3, 2, 5, 7, 4, 3, 7, 2, 1]
        );
    }

    #[test]
    fn two_adic_valuation_of_lucas_numbers() {
        assert_eq!(max_two_adic_valuation_lucas(), 2);
        assert_eq!(lucas_exact(6).trailing_zeros(), Some(1));
        assert_eq!(lucas_exact(3).trailing_zeros(), Some(2));
    }

    #[test]
    fn lucas_parity_follows_index_mod_three() {
        for n in 0..=2000u64 {
            assert_eq!(lucas_exact(n).is_even(), n % 3 == 0, "n = {n}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn modular_agrees_with_exact(n in 0u64..3000, m in 2u64..1_000_000_007) {
                let p = pair_mod(n, m).unwrap();
                prop_assert_eq!(BigUint::from(p.fib_res), fib_exact(n) % m);
                prop_assert_eq!(BigUint::from(p.lucas_res), lucas_exact(n) % m);
            }

            #[test]
            fn period_reproduces_prefix(m in 2u64..200, lucas in any::<bool>()) {
                let kind = if lucas { SequenceKind::Lucas } else { SequenceKind::Fibonacci };
                let period = period_mod(m, kind).unwrap() as usize;
                let terms = residues_mod(kind, m, 10 * period).unwrap();
                for (i, t) in terms.iter().enumerate() {
                    prop_assert_eq!(*t, terms[i % period]);
                }
            }
        }
    }
}
