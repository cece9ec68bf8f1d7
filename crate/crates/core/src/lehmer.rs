//! The Lehmer property, cheap 2-adic obstructions for Lucas numbers, and a
//! direct search over Lucas indices.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::arith::{factorize, is_prime, totient, two_adic, FactorBudget, FactoredInteger, Primality};
use crate::error::{Error, Result};
use crate::sequences::lucas_exact;

/// Why a Lucas number is (or could not be shown to be) not Lehmer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Obstruction {
    /// `3 | n`, so `L_n` is even.
    ValueEven,
    /// `n` even: `L_n - 1 = L_{n/2}^2 + 1` or `L_{n/2}^2 - 3`, never a multiple of 4.
    TwoAdicEven,
    /// `n ≡ 3 (mod 4)`: `L_n - 1 = L_{(n+1)/2} L_{(n-1)/2}` with each factor
    /// carrying at most `2^2`.
    TwoAdicThreeMod4,
    PhiDoesNotDivide,
    ValueIsPrime,
    IncompleteFactorization,
    None,
}

impl Obstruction {
    /// Largest `v_2(L_n - 1)` the filter claims for this class of index.
    pub fn two_adic_cap(self) -> Option<u64> {
        match self {
            Obstruction::TwoAdicEven => Some(1),
            Obstruction::TwoAdicThreeMod4 => Some(4),
            _ => None,
        }
    }

    /// Whether the obstruction rules out the Lehmer property without any
    /// imported lower bound on `omega`. An odd Lehmer number `N` has
    /// `2^omega(N) | N - 1` and `omega(N) >= 2`, so `v_2(N - 1) <= 1` already
    /// suffices; the mod-4 cap of 4 needs the imported bound.
    pub fn unconditional(self) -> bool {
        !matches!(self, Obstruction::TwoAdicThreeMod4 | Obstruction::IncompleteFactorization | Obstruction::None)
    }
}

/// One Lucas index and what is known about `L_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LehmerVerdict {
    pub index: u64,
    #[serde(serialize_with = "crate::json::biguint")]
    pub value: BigUint,
    pub primality: Primality,
    #[serde(serialize_with = "crate::json::opt_biguint")]
    pub phi: Option<BigUint>,
    /// `None` means undecided.
    pub is_lehmer: Option<bool>,
    pub obstruction: Obstruction,
    /// False when the verdict leans on the imported `omega >= 15` premise.
    pub unconditional: bool,
}

/// `true` iff `f.value` is composite and `phi(f.value) | f.value - 1`.
pub fn is_lehmer(f: &FactoredInteger) -> Result<bool> {
    f.require_complete()?;
    if f.value <= BigUint::one() {
        return Err(Error::InvalidArgument("the Lehmer property needs n >= 2".into()));
    }
    if is_prime(&f.value)?.is_prime_like() {
        return Ok(false);
    }
    let phi = totient(f)?;
    Ok((&f.value - 1u32).is_multiple_of(&phi))
}

/// Obstruction for `L_n` read off `n` alone, without factoring.
pub fn quick_filter(n: u64) -> Obstruction {
    if n % 3 == 0 {
        Obstruction::ValueEven
    } else if n % 2 == 0 {
        Obstruction::TwoAdicEven
    } else if n % 4 == 3 {
        Obstruction::TwoAdicThreeMod4
    } else {
        Obstruction::None
    }
}

/// Checks the filter's claim for `n` against `L_n` itself.
pub fn filter_claim_holds(n: u64) -> bool {
    let value = lucas_exact(n);
    match quick_filter(n) {
        Obstruction::ValueEven => value.is_even(),
        o @ (Obstruction::TwoAdicEven | Obstruction::TwoAdicThreeMod4) => {
            let minus_one = value - 1u32;
            two_adic(&minus_one).is_some_and(|v| Some(v) <= o.two_adic_cap())
        }
        _ => true,
    }
}

/// Something that factors `L_n`: plain [`factorize`] or a cache in front of it.
pub type Factorer<'a> = dyn Fn(&BigUint) -> Result<FactoredInteger> + Sync + 'a;

/// The verdict for a single index `n >= 2`.
pub fn lehmer_verdict(n: u64, budget: &FactorBudget) -> Result<LehmerVerdict> {
    lehmer_verdict_with(n, &|v| factorize(v, budget))
}

/// [`lehmer_verdict`] with a caller-supplied factorizer.
pub fn lehmer_verdict_with(n: u64, factor: &Factorer) -> Result<LehmerVerdict> {
    if n < 2 {
        return Err(Error::InvalidArgument("Lucas indices below 2 are excluded".into()));
    }
    let value = lucas_exact(n);
    let primality = is_prime(&value)?;
    let filter = quick_filter(n);
    let or_filter = |o: Obstruction| if filter == Obstruction::None { o } else { filter };
    if primality.is_prime_like() {
        return Ok(LehmerVerdict {
            index: n,
            phi: (primality == Primality::Prime).then(|| &value - 1u32),
            value,
            primality,
            is_lehmer: Some(false),
            obstruction: or_filter(Obstruction::ValueIsPrime),
            unconditional: true,
        });
    }
    let f = factor(&value)?;
    if f.complete {
        let phi = totient(&f)?;
        let lehmer = (&value - 1u32).is_multiple_of(&phi);
        return Ok(LehmerVerdict {
            index: n,
            value,
            primality,
            phi: Some(phi),
            is_lehmer: Some(lehmer),
            obstruction: if lehmer { Obstruction::None } else { or_filter(Obstruction::PhiDoesNotDivide) },
            unconditional: true,
        });
    }
    Ok(if filter == Obstruction::None {
        LehmerVerdict {
            index: n,
            value,
            primality,
            phi: None,
            is_lehmer: None,
            obstruction: Obstruction::IncompleteFactorization,
            unconditional: false,
        }
    } else {
        LehmerVerdict {
            index: n,
            value,
            primality,
            phi: None,
            is_lehmer: Some(false),
            obstruction: filter,
            unconditional: filter.unconditional(),
        }
    })
}

/// Verdicts for `2 <= n <= max_index`, computed on `workers` threads over
/// interleaved index sets and returned in index order.
pub fn lehmer_search_lucas(max_index: u64, budget: &FactorBudget, workers: usize) -> Result<Vec<LehmerVerdict>> {
    lehmer_search_lucas_with(max_index, workers, &|v| factorize(v, budget))
}

/// [`lehmer_search_lucas`] with a caller-supplied factorizer.
pub fn lehmer_search_lucas_with(max_index: u64, workers: usize, factor: &Factorer) -> Result<Vec<LehmerVerdict>> {
    if max_index == 0 {
        return Err(Error::InvalidArgument("max_index must be positive".into()));
    }
    let indices: Vec<u64> = (2..=max_index).collect();
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let workers = workers.max(1);
    // interleave so the expensive large indices spread across workers
    let results: Vec<Result<Vec<LehmerVerdict>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let indices = &indices;
                scope.spawn(move || {
                    indices
                        .iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&n| lehmer_verdict_with(n, factor))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("search worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(indices.len());
    for r in results {
        all.extend(r?);
    }
    all.sort_by_key(|v| v.index);
    Ok(all)
}

/// Summary counts over a verdict list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct SearchSummary {
    pub verdicts: usize,
    pub lehmer_hits: usize,
    pub undecided: usize,
    pub conditional: usize,
    pub probable_primes: usize,
}

pub fn summarize(verdicts: &[LehmerVerdict]) -> SearchSummary {
    let mut s = SearchSummary {
        verdicts: verdicts.len(),
        ..Default::default()
    };
    for v in verdicts {
        match v.is_lehmer {
            Some(true) => s.lehmer_hits += 1,
            None => s.undecided += 1,
            Some(false) => {}
        }
        if !v.unconditional && v.is_lehmer.is_some() {
            s.conditional += 1;
        }
        if v.primality == Primality::ProbablePrime {
            s.probable_primes += 1;
        }
    }
    s
}

/// Whether `n` is `(value - 1) / phi` with quotient an integer above 1.
pub fn lehmer_quotient(value: &BigUint, phi: &BigUint) -> Option<BigUint> {
    if phi.is_zero() {
        return None;
    }
    let (q, r) = (value - 1u32).div_rem(phi);
    (r.is_zero() && q > BigUint::one()).then_some(q)
}
