//! Budgeted factorization: trial division, then Brent's variant of
//! Pollard rho on whatever is left. The budget counts polynomial
//! evaluations, not seconds, so a run is replayable from
//! `(value, budget, seed)` alone.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{is_prime, is_prime_u64, small_primes, FactoredInteger, Primality};
use crate::error::{Error, Result};

/// Default number of rho iterations per `factorize` call.
pub const DEFAULT_WORK_BUDGET: u64 = 20_000_000;
pub const DEFAULT_SEED: u64 = 0x4c75_6361_735f_4c65;

/// Work limit and RNG seed for [`factorize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FactorBudget {
    pub iterations: u64,
    pub seed: u64,
}

impl Default for FactorBudget {
    fn default() -> Self {
        FactorBudget {
            iterations: DEFAULT_WORK_BUDGET,
            seed: DEFAULT_SEED,
        }
    }
}

const BATCH: u64 = 128;

fn mul_mod64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn gcd64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// One Brent rho attempt on a word-sized odd composite.
fn rho_u64(n: u64, c: u64, x0: u64, work: &mut u64) -> Option<u64> {
    let f = |x: u64| (mul_mod64(x, x, n) + c) % n;
    let (mut x, mut y, mut ys) = (x0, x0, x0);
    let mut q = 1u64;
    let mut g = 1u64;
    let mut r = 1u64;
    while g == 1 {
        x = y;
        for _ in 0..r {
            y = f(y);
        }
        *work = work.checked_sub(r)?;
        let mut k = 0;
        while k < r && g == 1 {
            ys = y;
            let steps = BATCH.min(r - k);
            for _ in 0..steps {
                y = f(y);
                q = mul_mod64(q, x.abs_diff(y), n);
            }
            *work = work.checked_sub(steps)?;
            g = gcd64(q, n);
            k += steps;
        }
        r *= 2;
    }
    if g == n {
        loop {
            ys = f(ys);
            *work = work.checked_sub(1)?;
            g = gcd64(x.abs_diff(ys), n);
            if g > 1 {
                break;
            }
        }
    }
    (g != n).then_some(g)
}

fn abs_diff(a: &BigUint, b: &BigUint) -> BigUint {
    if a > b {
        a - b
    } else {
        b - a
    }
}

/// The same algorithm over arbitrary precision.
fn rho_big(n: &BigUint, c: &BigUint, x0: &BigUint, work: &mut u64) -> Option<BigUint> {
    let f = |x: &BigUint| (x * x + c) % n;
    let (mut x, mut y, mut ys) = (x0.clone(), x0.clone(), x0.clone());
    let mut q = BigUint::one();
    let mut g = BigUint::one();
    let mut r = 1u64;
    while g.is_one() {
        x = y.clone();
        for _ in 0..r {
            y = f(&y);
        }
        *work = work.checked_sub(r)?;
        let mut k = 0;
        while k < r && g.is_one() {
            ys = y.clone();
            let steps = BATCH.min(r - k);
            for _ in 0..steps {
                y = f(&y);
                q = (q * abs_diff(&x, &y)) % n;
            }
            *work = work.checked_sub(steps)?;
            g = q.gcd(n);
            k += steps;
        }
        r *= 2;
    }
    if g == *n {
        loop {
            ys = f(&ys);
            *work = work.checked_sub(1)?;
            g = abs_diff(&x, &ys).gcd(n);
            if !g.is_one() {
                break;
            }
        }
    }
    (g != *n).then_some(g)
}

/// Finds a nontrivial factor of the composite `n`, or `None` once the
/// budget is gone.
fn split(n: &BigUint, rng: &mut ChaCha8Rng, work: &mut u64) -> Option<BigUint> {
    // Perfect powers defeat rho; peel them off first.
    for k in (2..=n.bits() as u32).rev() {
        let root = n.nth_root(k);
        if root > BigUint::one() && root.pow(k) == *n {
            return Some(root);
        }
    }
    loop {
        if *work == 0 {
            return None;
        }
        if let Some(small) = n.to_u64().filter(|&v| v < 1 << 63) {
            let c = rng.gen_range(1..small);
            let x0 = rng.gen_range(0..small);
            if let Some(d) = rho_u64(small, c, x0, work) {
                return Some(BigUint::from(d));
            }
        } else {
            let c = BigUint::from(rng.gen::<u64>()) % n;
            let c = if c.is_zero() { BigUint::one() } else { c };
            let x0 = BigUint::from(rng.gen::<u64>()) % n;
            if let Some(d) = rho_big(n, &c, &x0, work) {
                return Some(d);
            }
        }
    }
}

/// Factors `n` within `budget`. Never fails for `n >= 1`; an exhausted
/// budget yields `complete = false` with the unsplit remainder in
/// `cofactor`.
pub fn factorize(n: &BigUint, budget: &FactorBudget) -> Result<FactoredInteger> {
    if n.is_zero() {
        return Err(Error::InvalidArgument("cannot factor 0".into()));
    }
    let mut found: Vec<(BigUint, u32)> = Vec::new();
    let mut rest = n.clone();
    for &p in small_primes() {
        if rest.is_one() {
            break;
        }
        if BigUint::from(p * p) > rest {
            break;
        }
        let mut e = 0;
        loop {
            let (q, r) = rest.div_rem(&BigUint::from(p));
            if !r.is_zero() {
                break;
            }
            rest = q;
            e += 1;
        }
        if e > 0 {
            found.push((BigUint::from(p), e));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut work = budget.iterations;
    let mut pending = vec![rest];
    let mut primes: Vec<BigUint> = Vec::new();
    let mut cofactor = BigUint::one();
    while let Some(m) = pending.pop() {
        if m.is_one() {
            continue;
        }
        if is_prime(&m)? != Primality::Composite {
            primes.push(m);
            continue;
        }
        match split(&m, &mut rng, &mut work) {
            Some(d) => {
                let other = &m / &d;
                pending.push(d);
                pending.push(other);
            }
            None => cofactor *= m,
        }
    }
    primes.sort();
    for p in primes {
        match found.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => found.push((p, 1)),
        }
    }
    FactoredInteger::from_parts(n.clone(), found, cofactor)
}

/// Complete factorization of a machine word as `(prime, exponent)` pairs.
pub fn factorize_u64(n: u64) -> Vec<(u64, u32)> {
    if n <= 1 {
        return Vec::new();
    }
    if is_prime_u64(n) {
        return vec![(n, 1)];
    }
    let budget = FactorBudget {
        iterations: u64::MAX,
        seed: DEFAULT_SEED,
    };
    let f = factorize(&BigUint::from(n), &budget).expect("n > 0");
    debug_assert!(f.complete);
    f.factors
        .iter()
        .map(|pp| (pp.prime.to_u64().expect("factor of a u64"), pp.exponent))
        .collect()
}
